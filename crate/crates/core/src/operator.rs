//! The problem family: `L^{2n}(Lambda) = sigma^{2n} - Lambda sigma^{2n-2p}`, the roots of
//! `lambda^{2p} = Lambda`, and the parity-adapted solution basis on `[-1, 1]`.
//!
//! Eigenvalues are reported for the interval `[-1, 1]`. On `[0, 1]` the same problem has
//! eigenvalues larger by the factor `2^{2p}`; no conversion is done anywhere in the crate.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exppoly::{ExpPoly, SigmaPolynomial, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    #[serde(alias = "sym")]
    Symmetric,
    #[serde(alias = "anti")]
    Antisymmetric,
}

impl Parity {
    /// `+1` for even functions, `-1` for odd ones.
    pub fn sign(self) -> f64 {
        match self {
            Parity::Symmetric => 1.0,
            Parity::Antisymmetric => -1.0,
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Parity::Symmetric => "sym",
            Parity::Antisymmetric => "anti",
        }
    }
}

impl fmt::Display for Parity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl FromStr for Parity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sym" | "symmetric" | "s" => Ok(Parity::Symmetric),
            "anti" | "antisymmetric" | "a" => Ok(Parity::Antisymmetric),
            other => Err(Error::Config(format!("unknown parity {other:?}"))),
        }
    }
}

/// The triple `(n, p, parity)`: minimise `<u^(n) u^(n)> / <u^(n-p) u^(n-p)>` over clamped
/// functions of the given parity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub n: usize,
    pub p: usize,
    pub parity: Parity,
}

impl ProblemSpec {
    pub fn new(n: usize, p: usize, parity: Parity) -> Result<Self> {
        if p == 0 || p > n {
            return Err(Error::InvalidProblem(format!("need 1 <= p <= n, got n={n}, p={p}")));
        }
        Ok(ProblemSpec { n, p, parity })
    }

    pub fn symmetric(n: usize, p: usize) -> Result<Self> {
        Self::new(n, p, Parity::Symmetric)
    }

    pub fn antisymmetric(n: usize, p: usize) -> Result<Self> {
        Self::new(n, p, Parity::Antisymmetric)
    }

    /// Stones and stone polynomials exist only for `n > p`.
    pub fn has_stones(&self) -> bool {
        self.n > self.p
    }

    pub fn with_n(&self, n: usize) -> Result<Self> {
        Self::new(n, self.p, self.parity)
    }
}

impl fmt::Display for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(n={}, p={}, {})", self.n, self.p, self.parity)
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveLambda(lambda))
    }
}

/// `L^{2j}(Lambda) = sigma^{2j} - Lambda sigma^{2j-2p}` for `j >= p`.
pub fn operator_of_order(j: usize, p: usize, lambda: f64) -> Result<SigmaPolynomial> {
    check_lambda(lambda)?;
    if j < p {
        return Err(Error::InvalidProblem(format!("L^{{2j}} needs j >= p, got j={j}, p={p}")));
    }
    let mut coeffs = vec![C64::new(0.0, 0.0); 2 * j + 1];
    coeffs[2 * j] += 1.0;
    coeffs[2 * j - 2 * p] -= lambda;
    SigmaPolynomial::new(coeffs)
}

/// The Euler-Lagrange operator `L^{2n}(Lambda)` of the problem.
pub fn build_operator(spec: &ProblemSpec, lambda: f64) -> Result<SigmaPolynomial> {
    operator_of_order(spec.n, spec.p, lambda)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RootClass {
    /// `+-rho`
    RealPair,
    /// `+-i rho`, present iff `p` is even
    ImaginaryPair,
    /// `+-(a + ib), +-(a - ib)` with `a, b > 0`
    ComplexQuadruple { a: f64, b: f64 },
}

/// The `2p` roots `lambda_j = rho e^{i pi j / p}` of `lambda^{2p} = Lambda`.
#[derive(Clone, Debug)]
pub struct RootSystem {
    pub lambda: f64,
    pub rho: f64,
    pub p: usize,
    /// Ordered by angle `pi j / p`, `j = 0..2p`.
    pub roots: Vec<C64>,
    /// One entry per class, ordered by the angle of its first-quadrant representative.
    pub classes: Vec<RootClass>,
}

impl RootSystem {
    pub fn real_root(&self) -> f64 {
        self.rho
    }

    /// One root per conjugate pair of non-real roots, from the upper half plane, ordered by
    /// angle: `lambda_j` for `j = 1..p`.
    pub fn upper_representatives(&self) -> Vec<C64> {
        self.roots[1..self.p].to_vec()
    }

    pub fn has_imaginary_pair(&self) -> bool {
        self.classes.contains(&RootClass::ImaginaryPair)
    }
}

pub fn root_system(p: usize, lambda: f64) -> Result<RootSystem> {
    check_lambda(lambda)?;
    if p == 0 {
        return Err(Error::InvalidProblem("p must be >= 1".into()));
    }
    let rho = lambda.powf(1.0 / (2 * p) as f64);
    let roots = (0..2 * p)
        .map(|j| exact_unit(j, p) * rho)
        .collect();
    let mut classes = vec![RootClass::RealPair];
    for j in 1..=p / 2 {
        if 2 * j == p {
            classes.push(RootClass::ImaginaryPair);
        } else {
            let angle = PI * j as f64 / p as f64;
            classes.push(RootClass::ComplexQuadruple { a: rho * angle.cos(), b: rho * angle.sin() });
        }
    }
    Ok(RootSystem { lambda, rho, p, roots, classes })
}

/// `e^{i pi j / p}` with exact values on the axes.
fn exact_unit(j: usize, p: usize) -> C64 {
    let twice = 2 * j;
    if j == 0 {
        C64::new(1.0, 0.0)
    } else if j == p {
        C64::new(-1.0, 0.0)
    } else if twice == p {
        C64::new(0.0, 1.0)
    } else if twice == 3 * p {
        C64::new(0.0, -1.0)
    } else {
        C64::from_polar(1.0, PI * j as f64 / p as f64)
    }
}

/// Kernel functions plus monomials: a basis of the parity-restricted solutions of
/// `L^{2n}(Lambda) z = 0`.
#[derive(Clone, Debug)]
pub struct SolutionBasis {
    pub spec: ProblemSpec,
    pub lambda: f64,
    /// `p` real kernel functions, ordered by root angle.
    pub kernel_functions: Vec<ExpPoly>,
    /// Total positive factor applied to each raw kernel function.
    pub kernel_scales: Vec<f64>,
    pub monomials: Vec<ExpPoly>,
    pub monomial_degrees: Vec<usize>,
}

impl SolutionBasis {
    pub fn len(&self) -> usize {
        self.kernel_functions.len() + self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn functions(&self) -> impl Iterator<Item = &ExpPoly> {
        self.kernel_functions.iter().chain(self.monomials.iter())
    }

    /// `sum_i coeffs[i] * basis_i`.
    pub fn combine(&self, coeffs: &[f64]) -> ExpPoly {
        self.functions()
            .zip(coeffs)
            .fold(ExpPoly::zero(), |acc, (f, &c)| acc + f.scale(c))
    }
}

pub fn solution_basis(spec: &ProblemSpec, lambda: f64) -> Result<SolutionBasis> {
    let roots = root_system(spec.p, lambda)?;
    let rho = roots.rho;
    let sym = spec.parity == Parity::Symmetric;

    let mut raw: Vec<(ExpPoly, f64)> = Vec::with_capacity(spec.p);
    for class in &roots.classes {
        match *class {
            RootClass::RealPair => {
                raw.push((if sym { ExpPoly::cos(rho) } else { ExpPoly::sin(rho) }, 1.0));
            }
            RootClass::ComplexQuadruple { a, b } => {
                let damp = (-b).exp();
                let (first, second) = if sym {
                    (
                        ExpPoly::cos(a).multiply(&ExpPoly::cosh(b)),
                        ExpPoly::sin(a).multiply(&ExpPoly::sinh(b)),
                    )
                } else {
                    (
                        ExpPoly::sin(a).multiply(&ExpPoly::cosh(b)),
                        ExpPoly::cos(a).multiply(&ExpPoly::sinh(b)),
                    )
                };
                raw.push((first.scale(damp), damp));
                raw.push((second.scale(damp), damp));
            }
            RootClass::ImaginaryPair => {
                let damp = (-rho).exp();
                let f = if sym { ExpPoly::cosh(rho) } else { ExpPoly::sinh(rho) };
                raw.push((f.scale(damp), damp));
            }
        }
    }

    let orders = spec.n.max(2);
    let mut kernel_functions = Vec::with_capacity(spec.p);
    let mut kernel_scales = Vec::with_capacity(spec.p);
    for (f, damp) in raw {
        let norm = boundary_jet(&f, orders).iter().map(|v| v * v).sum::<f64>().sqrt();
        kernel_functions.push(f.scale(1.0 / norm));
        kernel_scales.push(damp / norm);
    }

    let offset = if sym { 0 } else { 1 };
    let monomial_degrees: Vec<usize> = (0..spec.n - spec.p).map(|k| 2 * k + offset).collect();
    let monomials = monomial_degrees.iter().map(|&d| ExpPoly::monomial(1.0, d)).collect();

    Ok(SolutionBasis {
        spec: *spec,
        lambda,
        kernel_functions,
        kernel_scales,
        monomials,
        monomial_degrees,
    })
}

/// Real parts of `f^{(j)}(1)` for `j = 0..orders`.
pub(crate) fn boundary_jet(f: &ExpPoly, orders: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(orders);
    let mut g = f.clone();
    for _ in 0..orders {
        out.push(g.evaluate(1.0).re);
        g = g.differentiate(1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coeff(op: &SigmaPolynomial, k: usize) -> f64 {
        op.coeffs().get(k).map(|c| c.re).unwrap_or(0.0)
    }

    #[test]
    fn operator_low_orders() {
        let l = 7.5;
        let op = build_operator(&ProblemSpec::symmetric(1, 1).unwrap(), l).unwrap();
        assert_eq!(op.degree(), 2);
        assert_eq!((coeff(&op, 0), coeff(&op, 2)), (-l, 1.0));
        let op = build_operator(&ProblemSpec::symmetric(2, 1).unwrap(), l).unwrap();
        assert_eq!((coeff(&op, 2), coeff(&op, 4), coeff(&op, 0)), (-l, 1.0, 0.0));
        assert!(build_operator(&ProblemSpec::symmetric(2, 1).unwrap(), 0.0).is_err());
        assert!(build_operator(&ProblemSpec::symmetric(2, 1).unwrap(), -1.0).is_err());
    }

    #[test]
    fn operator_annihilates_closed_form_eigenfunction() {
        let z2 = ExpPoly::constant(1.0) + ExpPoly::cos(PI);
        let op = build_operator(&ProblemSpec::symmetric(2, 1).unwrap(), PI * PI).unwrap();
        let image = z2.apply_sigma(&op);
        assert!(image.bound() < 1e-10, "{image}");
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(ProblemSpec::symmetric(2, 0).is_err());
        assert!(ProblemSpec::symmetric(2, 3).is_err());
        assert!(ProblemSpec::symmetric(2, 2).is_ok());
    }

    #[test]
    fn roots_p1_p2_p3() {
        let rs = root_system(1, PI * PI).unwrap();
        assert!((rs.roots[0].re - PI).abs() < 1e-14 && rs.roots[0].im == 0.0);
        assert!((rs.roots[1].re + PI).abs() < 1e-14 && rs.roots[1].im == 0.0);

        let rs = root_system(2, 16.0).unwrap();
        let expected = [C64::new(2.0, 0.0), C64::new(0.0, 2.0), C64::new(-2.0, 0.0), C64::new(0.0, -2.0)];
        for (r, e) in rs.roots.iter().zip(expected) {
            assert!((r - e).norm() < 1e-14);
        }
        assert!(rs.has_imaginary_pair());

        let rs = root_system(3, 1.0).unwrap();
        assert_eq!(rs.classes.len(), 2);
        assert!(matches!(rs.classes[1], RootClass::ComplexQuadruple { .. }));
        assert!(!rs.has_imaginary_pair());
        for (j, r) in rs.roots.iter().enumerate() {
            assert!((r - C64::from_polar(1.0, PI * j as f64 / 3.0)).norm() < 1e-14);
        }
        assert!(root_system(2, 0.0).is_err());
    }

    #[test]
    fn root_invariants() {
        for p in 1..=5 {
            for &l in &[0.3, 1.0, 31.0, 4.5e4] {
                let rs = root_system(p, l).unwrap();
                assert_eq!(rs.roots.len(), 2 * p);
                for r in &rs.roots {
                    assert!((r.powu(2 * p as u32) - l).norm() <= 1e-12 * l);
                    assert!(rs.roots.iter().any(|s| (s + r).norm() < 1e-12 * rs.rho));
                    assert!(rs.roots.iter().any(|s| (s - r.conj()).norm() < 1e-12 * rs.rho));
                }
                let positive_real = rs.roots.iter().filter(|r| r.im == 0.0 && r.re > 0.0).count();
                assert_eq!(positive_real, 1);
                assert_eq!(rs.has_imaginary_pair(), p % 2 == 0);
            }
        }
    }

    #[test]
    fn basis_shapes() {
        let b = solution_basis(&ProblemSpec::symmetric(2, 1).unwrap(), 9.0).unwrap();
        assert_eq!((b.kernel_functions.len(), b.monomial_degrees.clone()), (1, vec![0]));
        let b = solution_basis(&ProblemSpec::symmetric(2, 2).unwrap(), 9.0).unwrap();
        assert_eq!((b.kernel_functions.len(), b.monomials.len()), (2, 0));
        let b = solution_basis(&ProblemSpec::symmetric(3, 1).unwrap(), 9.0).unwrap();
        assert_eq!(b.monomial_degrees, vec![0, 2]);
        let b = solution_basis(&ProblemSpec::antisymmetric(3, 1).unwrap(), 9.0).unwrap();
        assert_eq!(b.monomial_degrees, vec![1, 3]);
        // first kernel function is a multiple of cos(rho x)
        let b = solution_basis(&ProblemSpec::symmetric(2, 1).unwrap(), 4.0).unwrap();
        let f = &b.kernel_functions[0];
        let ratio = f.evaluate(0.3).re / (2.0f64 * 0.3).cos();
        assert!((f.evaluate(0.7).re - ratio * (1.4f64).cos()).abs() < 1e-14);
    }

    #[test]
    fn basis_invariants_on_grid() {
        for n in 1..=6 {
            for p in 1..=n.min(4) {
                for parity in [Parity::Symmetric, Parity::Antisymmetric] {
                    let spec = ProblemSpec::new(n, p, parity).unwrap();
                    for &l in &[0.7, 13.0, 2.0e3, 7.7e5] {
                        let b = solution_basis(&spec, l).unwrap();
                        assert_eq!(b.len(), n);
                        let op = build_operator(&spec, l).unwrap();
                        let kernel_op = operator_of_order(p, p, l).unwrap();
                        for f in b.functions() {
                            let scale = f.apply_sigma(&SigmaPolynomial::power(2 * n)).bound().max(1.0);
                            assert!(f.apply_sigma(&op).bound() <= 1e-9 * scale);
                            assert!(f.is_real_valued(1e-12));
                            for i in 0..20 {
                                let x = 0.05 + 0.05 * i as f64;
                                let (a, c) = (f.evaluate(x).re, f.evaluate(-x).re);
                                assert!((a - parity.sign() * c).abs() <= 1e-12 * (1.0 + a.abs()));
                            }
                        }
                        for f in &b.kernel_functions {
                            let scale = f.apply_sigma(&SigmaPolynomial::power(2 * p)).bound().max(1.0);
                            assert!(f.apply_sigma(&kernel_op).bound() <= 1e-10 * scale);
                            if n >= 2 {
                                let jet = boundary_jet(f, n);
                                let max = jet.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                                assert!((0.1..=10.0).contains(&max), "{spec} {l}: {max}");
                            }
                        }
                    }
                }
            }
        }
    }
}
