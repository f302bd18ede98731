//! Exact algebra on exponential polynomials `sum_i P_i(x) exp(mu_i x)` over `[-1, 1]`.
//!
//! Every eigenfunction, kernel, stone polynomial and operator image in this crate is an
//! [`ExpPoly`]. Differentiation, products and integrals are carried out in closed form, so
//! identity residuals measure the eigenpairs and not a quadrature rule.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use num_traits::Zero;

use crate::error::{Error, Result};

pub type C64 = Complex64;

const I: C64 = C64::new(0.0, 1.0);

/// Two frequencies closer than `MERGE_TOL * (1 + |mu|)` are treated as one.
pub const MERGE_TOL: f64 = 1e-12;

/// Below this modulus `int x^k e^{mu x}` switches from recurrences to a power series.
pub const SERIES_THRESHOLD: f64 = 1e-3;

/// One term `P(x) e^{freq x}`; `coeffs[k]` multiplies `x^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub freq: C64,
    pub coeffs: Vec<C64>,
}

impl Term {
    pub fn new(freq: C64, coeffs: Vec<C64>) -> Self {
        Term { freq, coeffs }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    /// Upper bound of `|P(x) e^{freq x}|` on `[-1, 1]`.
    pub fn bound(&self) -> f64 {
        let growth = self.freq.re.abs().exp();
        self.coeffs.iter().map(|c| c.norm()).sum::<f64>() * growth
    }

    fn evaluate(&self, x: f64) -> C64 {
        horner(&self.coeffs, C64::new(x, 0.0)) * (self.freq * x).exp()
    }

    fn differentiate_once(&self) -> Term {
        // (P e^{mu x})' = (P' + mu P) e^{mu x}
        let mut out: Vec<C64> = self.coeffs.iter().map(|c| c * self.freq).collect();
        for (k, c) in self.coeffs.iter().enumerate().skip(1) {
            out[k - 1] += c * k as f64;
        }
        Term::new(self.freq, out)
    }

    fn integrate_unit(&self) -> C64 {
        let moments = power_exp_integrals(self.freq, self.degree());
        self.coeffs
            .iter()
            .zip(&moments)
            .map(|(c, m)| c * m)
            .sum()
    }
}

/// A function `sum_i P_i(x) e^{mu_i x}` in canonical form: distinct frequencies, no
/// all-zero polynomial, trailing zero coefficients trimmed, terms sorted by frequency.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExpPoly {
    terms: Vec<Term>,
}

impl ExpPoly {
    pub fn zero() -> Self {
        ExpPoly { terms: Vec::new() }
    }

    pub fn constant(c: impl Into<C64>) -> Self {
        Self::polynomial(vec![c.into()])
    }

    pub fn polynomial(coeffs: Vec<C64>) -> Self {
        Self::from_terms(vec![Term::new(C64::zero(), coeffs)])
    }

    pub fn real_polynomial(coeffs: &[f64]) -> Self {
        Self::polynomial(coeffs.iter().map(|&c| C64::new(c, 0.0)).collect())
    }

    /// `c x^k`.
    pub fn monomial(c: impl Into<C64>, k: usize) -> Self {
        let mut coeffs = vec![C64::zero(); k + 1];
        coeffs[k] = c.into();
        Self::polynomial(coeffs)
    }

    /// `c e^{freq x}`.
    pub fn exponential(c: impl Into<C64>, freq: C64) -> Self {
        Self::from_terms(vec![Term::new(freq, vec![c.into()])])
    }

    pub fn cos(omega: f64) -> Self {
        Self::exponential(0.5, I * omega) + Self::exponential(0.5, -I * omega)
    }

    pub fn sin(omega: f64) -> Self {
        Self::exponential(-0.5 * I, I * omega) + Self::exponential(0.5 * I, -I * omega)
    }

    pub fn cosh(omega: f64) -> Self {
        Self::exponential(0.5, C64::new(omega, 0.0)) + Self::exponential(0.5, C64::new(-omega, 0.0))
    }

    pub fn sinh(omega: f64) -> Self {
        Self::exponential(0.5, C64::new(omega, 0.0)) - Self::exponential(0.5, C64::new(-omega, 0.0))
    }

    pub fn from_terms(terms: Vec<Term>) -> Self {
        let mut merged: Vec<Term> = Vec::with_capacity(terms.len());
        for term in terms {
            match merged
                .iter_mut()
                .find(|t| (t.freq - term.freq).norm() <= MERGE_TOL * (1.0 + t.freq.norm()))
            {
                Some(existing) => {
                    if existing.coeffs.len() < term.coeffs.len() {
                        existing.coeffs.resize(term.coeffs.len(), C64::zero());
                    }
                    for (a, b) in existing.coeffs.iter_mut().zip(term.coeffs) {
                        *a += b;
                    }
                }
                None => merged.push(term),
            }
        }
        for term in &mut merged {
            while term.coeffs.last().is_some_and(|c| c.is_zero()) {
                term.coeffs.pop();
            }
        }
        merged.retain(|t| !t.coeffs.is_empty());
        merged.sort_by(|a, b| {
            a.freq
                .im
                .total_cmp(&b.freq.im)
                .then(a.freq.re.total_cmp(&b.freq.re))
        });
        ExpPoly { terms: merged }
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Polynomial coefficients of the `mu = 0` term (empty when there is none).
    pub fn polynomial_part(&self) -> Vec<C64> {
        self.coefficients_at(C64::zero()).map(<[C64]>::to_vec).unwrap_or_default()
    }

    /// Every term with nonzero frequency.
    pub fn kernel_part(&self) -> ExpPoly {
        ExpPoly {
            terms: self
                .terms
                .iter()
                .filter(|t| !is_zero_frequency(t.freq))
                .cloned()
                .collect(),
        }
    }

    pub fn coefficients_at(&self, freq: C64) -> Option<&[C64]> {
        self.terms
            .iter()
            .find(|t| (t.freq - freq).norm() <= MERGE_TOL * (1.0 + freq.norm()))
            .map(|t| t.coeffs.as_slice())
    }

    /// Upper bound of `|f|` on `[-1, 1]` from the term magnitudes.
    pub fn bound(&self) -> f64 {
        self.terms.iter().map(Term::bound).sum()
    }

    /// Drops every coefficient whose contribution is below `rel * bound()`.
    pub fn pruned(&self, rel: f64) -> ExpPoly {
        let cutoff = rel * self.bound();
        let growth = |t: &Term| t.freq.re.abs().exp();
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let g = growth(t);
                let coeffs = t
                    .coeffs
                    .iter()
                    .map(|&c| if c.norm() * g <= cutoff { C64::zero() } else { c })
                    .collect();
                Term::new(t.freq, coeffs)
            })
            .collect();
        ExpPoly::from_terms(terms)
    }

    pub fn scale(&self, s: impl Into<C64>) -> ExpPoly {
        let s = s.into();
        ExpPoly::from_terms(
            self.terms
                .iter()
                .map(|t| Term::new(t.freq, t.coeffs.iter().map(|c| c * s).collect()))
                .collect(),
        )
    }

    /// Pointwise complex conjugate for real `x`.
    pub fn conj(&self) -> ExpPoly {
        ExpPoly::from_terms(
            self.terms
                .iter()
                .map(|t| Term::new(t.freq.conj(), t.coeffs.iter().map(C64::conj).collect()))
                .collect(),
        )
    }

    pub fn differentiate(&self, k: usize) -> ExpPoly {
        let mut terms = self.terms.clone();
        for _ in 0..k {
            terms = terms.iter().map(Term::differentiate_once).collect();
        }
        ExpPoly::from_terms(terms)
    }

    pub fn multiply(&self, other: &ExpPoly) -> ExpPoly {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                terms.push(Term::new(a.freq + b.freq, convolve(&a.coeffs, &b.coeffs)));
            }
        }
        ExpPoly::from_terms(terms)
    }

    /// `int_{-1}^{1} f(x) dx` in closed form.
    pub fn integrate_unit(&self) -> C64 {
        self.terms.iter().map(Term::integrate_unit).sum()
    }

    /// Bilinear pairing `int_{-1}^{1} f g dx` (no conjugation).
    pub fn inner_product(&self, other: &ExpPoly) -> C64 {
        self.multiply(other).integrate_unit()
    }

    /// Sesquilinear pairing `int_{-1}^{1} conj(f) g dx`.
    pub fn hermitian_product(&self, other: &ExpPoly) -> C64 {
        self.conj().multiply(other).integrate_unit()
    }

    /// `int |f|^2`.
    pub fn norm_sq(&self) -> f64 {
        self.hermitian_product(self).re
    }

    pub fn evaluate(&self, x: f64) -> C64 {
        self.terms.iter().map(|t| t.evaluate(x)).sum()
    }

    pub fn derivative_at(&self, k: usize, x: f64) -> C64 {
        self.differentiate(k).evaluate(x)
    }

    /// True when the imaginary part at each sample point stays below `tol * bound()`.
    pub fn is_real_valued(&self, tol: f64) -> bool {
        let scale = self.bound().max(f64::MIN_POSITIVE);
        (0..=40).all(|i| {
            let x = -1.0 + i as f64 / 20.0;
            self.evaluate(x).im.abs() <= tol * scale
        })
    }

    /// `A(sigma) f` with `sigma = i d/dx`.
    pub fn apply_sigma(&self, op: &SigmaPolynomial) -> ExpPoly {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                // A(i(mu + d)) P = sum_j A^{(j)}(i mu)/j! (i d)^j P
                let taylor = op.taylor_at(I * t.freq, t.degree());
                let mut deriv = t.coeffs.clone();
                let mut out = vec![C64::zero(); t.coeffs.len()];
                let mut ipow = C64::new(1.0, 0.0);
                for coef in taylor.iter() {
                    if deriv.is_empty() {
                        break;
                    }
                    for (o, d) in out.iter_mut().zip(&deriv) {
                        *o += coef * ipow * d;
                    }
                    deriv = poly_derivative(&deriv);
                    ipow *= I;
                }
                Term::new(t.freq, out)
            })
            .collect();
        ExpPoly::from_terms(terms)
    }
}

impl fmt::Display for ExpPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "(")?;
            for (k, c) in t.coeffs.iter().enumerate() {
                if k > 0 {
                    write!(f, " + ")?;
                }
                write!(f, "{c}*x^{k}")?;
            }
            write!(f, ")*exp({}*x)", t.freq)?;
        }
        Ok(())
    }
}

impl Add for ExpPoly {
    type Output = ExpPoly;
    fn add(self, rhs: ExpPoly) -> ExpPoly {
        let mut terms = self.terms;
        terms.extend(rhs.terms);
        ExpPoly::from_terms(terms)
    }
}

impl<'a> Add<&'a ExpPoly> for &'a ExpPoly {
    type Output = ExpPoly;
    fn add(self, rhs: &ExpPoly) -> ExpPoly {
        self.clone() + rhs.clone()
    }
}

impl Neg for ExpPoly {
    type Output = ExpPoly;
    fn neg(self) -> ExpPoly {
        self.scale(-1.0)
    }
}

impl Sub for ExpPoly {
    type Output = ExpPoly;
    fn sub(self, rhs: ExpPoly) -> ExpPoly {
        self + (-rhs)
    }
}

impl<'a> Sub<&'a ExpPoly> for &'a ExpPoly {
    type Output = ExpPoly;
    fn sub(self, rhs: &ExpPoly) -> ExpPoly {
        self.clone() - rhs.clone()
    }
}

impl Mul for &ExpPoly {
    type Output = ExpPoly;
    fn mul(self, rhs: &ExpPoly) -> ExpPoly {
        self.multiply(rhs)
    }
}

/// A polynomial in `sigma = i d/dx`; `coeffs[k]` multiplies `sigma^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaPolynomial {
    coeffs: Vec<C64>,
}

impl SigmaPolynomial {
    pub fn new(mut coeffs: Vec<C64>) -> Result<Self> {
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            return Err(Error::ZeroOperator);
        }
        Ok(SigmaPolynomial { coeffs })
    }

    pub fn one() -> Self {
        SigmaPolynomial { coeffs: vec![C64::new(1.0, 0.0)] }
    }

    /// `sigma^k`.
    pub fn power(k: usize) -> Self {
        let mut coeffs = vec![C64::zero(); k + 1];
        coeffs[k] = C64::new(1.0, 0.0);
        SigmaPolynomial { coeffs }
    }

    /// `prod_j (sigma - root_j)`.
    pub fn from_roots(roots: &[C64]) -> Self {
        roots.iter().fold(Self::one(), |acc, &r| {
            acc.mul(&SigmaPolynomial { coeffs: vec![-r, C64::new(1.0, 0.0)] })
        })
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn mul(&self, other: &SigmaPolynomial) -> SigmaPolynomial {
        SigmaPolynomial { coeffs: convolve(&self.coeffs, &other.coeffs) }
    }

    pub fn sub(&self, other: &SigmaPolynomial) -> Result<SigmaPolynomial> {
        let len = self.coeffs.len().max(other.coeffs.len());
        let coeffs = (0..len)
            .map(|k| {
                self.coeffs.get(k).copied().unwrap_or_default()
                    - other.coeffs.get(k).copied().unwrap_or_default()
            })
            .collect();
        SigmaPolynomial::new(coeffs)
    }

    pub fn scale(&self, s: C64) -> Result<SigmaPolynomial> {
        SigmaPolynomial::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    /// Coefficient-wise conjugate `conj(A)(sigma)`.
    pub fn conj(&self) -> SigmaPolynomial {
        SigmaPolynomial { coeffs: self.coeffs.iter().map(C64::conj).collect() }
    }

    pub fn eval(&self, s: C64) -> C64 {
        horner(&self.coeffs, s)
    }

    /// `A^{(j)}(s0)/j!` for `j = 0..=max_order` (repeated synthetic division).
    fn taylor_at(&self, s0: C64, max_order: usize) -> Vec<C64> {
        let mut work = self.coeffs.clone();
        let mut out = Vec::with_capacity(max_order + 1);
        for _ in 0..=max_order.min(self.degree()) {
            // divide work by (s - s0); remainder is the next Taylor coefficient
            let mut carry = C64::zero();
            for c in work.iter_mut().rev() {
                let v = *c + carry * s0;
                *c = carry;
                carry = v;
            }
            out.push(carry);
            work.pop();
            if work.is_empty() {
                break;
            }
        }
        out
    }
}

fn horner(coeffs: &[C64], x: C64) -> C64 {
    coeffs.iter().rev().fold(C64::zero(), |acc, c| acc * x + c)
}

fn convolve(a: &[C64], b: &[C64]) -> Vec<C64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![C64::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_derivative(p: &[C64]) -> Vec<C64> {
    p.iter().enumerate().skip(1).map(|(k, c)| c * k as f64).collect()
}

fn is_zero_frequency(freq: C64) -> bool {
    freq.norm() <= MERGE_TOL
}

/// `I_k = int_{-1}^{1} x^k e^{mu x} dx` for `k = 0..=degree`.
///
/// Uses the exact monomial integrals for `mu = 0`, a power series for small `|mu|`,
/// and otherwise the integration-by-parts recurrence `mu I_k = B_k - k I_{k-1}` run
/// upward for `k <= |mu|` and downward above it, so each sweep only damps rounding errors.
pub fn power_exp_integrals(mu: C64, degree: usize) -> Vec<C64> {
    let n = degree + 1;
    if is_zero_frequency(mu) {
        return (0..n).map(|k| C64::new(monomial_integral(k), 0.0)).collect();
    }
    let r = mu.norm();
    if r < SERIES_THRESHOLD {
        return (0..n).map(|k| small_mu_series(mu, k)).collect();
    }
    let two_sinh = 2.0 * mu.sinh();
    let two_cosh = 2.0 * mu.cosh();
    // B_k = e^mu - (-1)^k e^{-mu}
    let boundary = |k: usize| if k % 2 == 0 { two_sinh } else { two_cosh };

    let mut out = vec![C64::zero(); n];
    out[0] = two_sinh / mu;
    let k0 = (r.floor() as usize).min(degree);
    for k in 1..=k0 {
        out[k] = (boundary(k) - k as f64 * out[k - 1]) / mu;
    }
    if k0 < degree {
        let mut top = degree;
        let mut damping = 1.0;
        while damping > 1e-20 {
            top += 1;
            damping *= r / top as f64;
        }
        let (ep, em) = (mu.exp(), (-mu).exp());
        let sign = if top % 2 == 0 { 1.0 } else { -1.0 };
        let mut current = ep / (top as f64 + mu) + sign * em / (top as f64 - mu);
        for k in (k0 + 2..=top).rev() {
            // I_{k-1} = (B_k - mu I_k) / k
            current = (boundary(k) - mu * current) / k as f64;
            if k - 1 <= degree {
                out[k - 1] = current;
            }
        }
    }
    out
}

fn monomial_integral(k: usize) -> f64 {
    if k % 2 == 0 {
        2.0 / (k as f64 + 1.0)
    } else {
        0.0
    }
}

fn small_mu_series(mu: C64, k: usize) -> C64 {
    // sum_j mu^j/j! * int x^{k+j}
    let mut sum = C64::zero();
    let mut power = C64::new(1.0, 0.0);
    for j in 0..200 {
        if j > 0 {
            power *= mu / j as f64;
        }
        let w = monomial_integral(k + j);
        if w == 0.0 {
            continue;
        }
        let term = power * w;
        sum += term;
        if term.norm() < 1e-18 * sum.norm() {
            break;
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: C64, b: f64, tol: f64) -> bool {
        (a - C64::new(b, 0.0)).norm() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn second_derivative_of_clamped_profile() {
        let z2 = ExpPoly::constant(1.0) + ExpPoly::cos(PI);
        let d2 = z2.differentiate(2);
        let expected = ExpPoly::cos(PI).scale(-PI * PI);
        for i in 0..=10 {
            let x = -1.0 + 0.2 * i as f64;
            assert!((d2.evaluate(x) - expected.evaluate(x)).norm() < 1e-12);
        }
        assert!(d2.polynomial_part().is_empty());
        assert_eq!(z2.differentiate(0), z2);
    }

    #[test]
    fn first_derivative_matches_finite_differences() {
        let f = ExpPoly::cos(PI / 2.0);
        let h = 1e-5;
        let fd = (f.evaluate(1.0 + h) - f.evaluate(1.0 - h)) / (2.0 * h);
        let exact = f.derivative_at(1, 1.0);
        assert!((exact - fd).norm() < 1e-8);
        assert!(close(exact, -PI / 2.0, 1e-14));
    }

    #[test]
    fn sigma_operator_on_profile() {
        let z2 = ExpPoly::constant(1.0) + ExpPoly::cos(PI);
        let op = SigmaPolynomial::new(vec![C64::new(-PI * PI, 0.0), C64::zero(), C64::new(1.0, 0.0)])
            .unwrap();
        let image = z2.apply_sigma(&op).pruned(1e-14);
        assert_eq!(image.terms().len(), 1);
        assert!(close(image.polynomial_part()[0], -PI * PI, 1e-14));
        // identity operator
        assert_eq!(z2.apply_sigma(&SigmaPolynomial::one()), z2);
    }

    #[test]
    fn sigma_squared_is_minus_second_derivative() {
        let f = ExpPoly::real_polynomial(&[0.3, -1.0, 2.0, 0.5]) .multiply(&ExpPoly::exponential(1.0, C64::new(0.7, 2.0)));
        let a = f.apply_sigma(&SigmaPolynomial::power(2));
        let b = f.differentiate(2).scale(-1.0);
        for i in 0..=8 {
            let x = -1.0 + 0.25 * i as f64;
            assert!((a.evaluate(x) - b.evaluate(x)).norm() < 1e-12 * (1.0 + b.bound()));
        }
    }

    #[test]
    fn zero_operator_rejected() {
        assert!(SigmaPolynomial::new(vec![C64::zero(); 3]).is_err());
    }

    #[test]
    fn products_and_integrals() {
        let z1 = ExpPoly::cos(PI / 2.0);
        let z2 = ExpPoly::constant(1.0) + ExpPoly::cos(PI);
        assert_eq!(z1.multiply(&ExpPoly::constant(1.0)), z1);
        let sq = z1.multiply(&z1);
        let half = ExpPoly::constant(0.5) + ExpPoly::cos(PI).scale(0.5);
        for i in 0..=10 {
            let x = -1.0 + 0.2 * i as f64;
            assert!((sq.evaluate(x) - half.evaluate(x)).norm() < 1e-14);
        }
        assert!(close(z2.integrate_unit(), 2.0, 1e-14));
        assert!(close(z1.integrate_unit(), 4.0 / PI, 1e-14));
        assert!(ExpPoly::sin(PI).integrate_unit().norm() < 1e-14);
        assert!(close(z1.inner_product(&z2), 16.0 / (3.0 * PI), 1e-13));
        assert!(close(z1.inner_product(&z1), 1.0, 1e-14));
        assert_eq!(z1.inner_product(&ExpPoly::zero()), C64::zero());
    }

    #[test]
    fn point_values() {
        let z2 = ExpPoly::constant(1.0) + ExpPoly::cos(PI);
        assert!(z2.evaluate(1.0).norm() < 1e-15);
        assert!(z2.derivative_at(1, 1.0).norm() < 1e-14);
        assert_eq!(ExpPoly::constant(1.0).evaluate(0.37), C64::new(1.0, 0.0));
        assert!(close(ExpPoly::cos(PI / 2.0).evaluate(0.0), 1.0, 1e-15));
    }

    #[test]
    fn canonical_merge_and_zero_pruning() {
        let a = ExpPoly::exponential(1.0, C64::new(0.0, 3.0));
        let b = ExpPoly::exponential(-1.0, C64::new(0.0, 3.0 + 1e-14));
        assert!((a + b).is_zero());
        let c = ExpPoly::exponential(1.0, C64::new(0.0, 3.0))
            + ExpPoly::exponential(1.0, C64::new(0.0, 3.0 + 1e-6));
        assert_eq!(c.terms().len(), 2);
    }

    #[test]
    fn integrals_across_recurrence_regimes() {
        // brute-force: composite Simpson with many panels on a smooth integrand
        for &mu in &[
            C64::new(0.0, 0.0),
            C64::new(5e-4, -2e-4),
            C64::new(0.2, 0.0),
            C64::new(0.0, 3.7),
            C64::new(-2.5, 7.0),
            C64::new(12.0, 0.0),
            C64::new(0.0, 45.0),
        ] {
            let moments = power_exp_integrals(mu, 10);
            for (k, m) in moments.iter().enumerate() {
                let panels = 20000;
                let h = 2.0 / panels as f64;
                let f = |x: f64| (mu * x).exp() * x.powi(k as i32);
                let mut s = f(-1.0) + f(1.0);
                for i in 1..panels {
                    let x = -1.0 + i as f64 * h;
                    s += f(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
                }
                let simpson = s * h / 3.0;
                let scale = 1.0 + (mu.re.abs()).exp();
                assert!(
                    (m - simpson).norm() < 1e-9 * scale,
                    "mu={mu} k={k}: {m} vs {simpson}"
                );
            }
        }
    }

    #[test]
    fn taylor_shift_matches_direct_derivatives() {
        let op = SigmaPolynomial::from_roots(&[C64::new(1.0, 2.0), C64::new(-0.5, 0.0), C64::new(3.0, -1.0)]);
        let s0 = C64::new(0.3, -0.8);
        let t = op.taylor_at(s0, 5);
        assert_eq!(t.len(), 4);
        assert!((t[0] - op.eval(s0)).norm() < 1e-12);
        // leading Taylor coefficient equals the leading coefficient
        assert!((t[3] - C64::new(1.0, 0.0)).norm() < 1e-12);
    }
}
