//! Stones, stone polynomials, moments and brackets of eigenfunctions, and checks of the
//! identities and inequalities they satisfy.
//!
//! Conventions: `h^k = (-1)^k L^{2n-2k-2} z` is an even polynomial of degree `2k` with
//! coefficients `c_0 x^{2k}/(2k)! + ... + c_k`; `c_0 = L^{2n-2} z` is the stone;
//! moments are `a_k = <z x^{2k}/(2k)!>`; so `<z h^k> = (-1)^k (a, c)_k`.
//! Stone-polynomial identities are stated for symmetric eigenfunctions only; for the
//! antisymmetric parity the stone is reported as a linear form and the families are
//! not applicable.

use num_rational::Ratio;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::eigensolver::EigenPair;
use crate::error::{Error, Result};
use crate::exppoly::{ExpPoly, SigmaPolynomial, C64};
use crate::identity::{relative_residual, IdentityReport, Verdict};
use crate::operator::{operator_of_order, root_system, Parity};
use crate::report::num;

/// Default relative tolerance of identity residuals.
pub const IDENTITY_TOL: f64 = 1e-8;
/// Tolerance for two evaluations of the same quantity that must agree (bracket vs direct).
pub const CONSISTENCY_TOL: f64 = 1e-9;
/// Largest non-polynomial content allowed in a stone polynomial, relative to its scale.
pub const STONE_RESIDUAL_TOL: f64 = 1e-9;
/// `|c_n|` must exceed this fraction of the stone scale.
pub const STONE_FLOOR: f64 = 1e-6;
/// Kernel coefficients below this fraction of the largest count as missing.
pub const ROOT_COMPLETENESS_TOL: f64 = 1e-8;
/// `xi`-derivatives of the kernel at `xi = 1` must vanish to this fraction of their scale.
pub const XI_TOL: f64 = 1e-8;

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// `max(sup|z^{(2j)}|, Lambda sup|z^{(2j-2p)}|)`: the size of the two terms whose difference
/// is `L^{2j} z`.
fn operator_scale(z: &ExpPoly, j: usize, p: usize, lambda: f64) -> f64 {
    let a = z.differentiate(2 * j).bound();
    let b = lambda * z.differentiate(2 * j - 2 * p).bound();
    a.max(b)
}

fn require_stones(ep: &EigenPair) -> Result<()> {
    if !ep.spec.has_stones() {
        return Err(Error::NotApplicable(format!("{} has n = p: no stones", ep.spec)));
    }
    Ok(())
}

fn require_symmetric(ep: &EigenPair) -> Result<()> {
    if ep.spec.parity != Parity::Symmetric {
        return Err(Error::NotApplicable(format!("{}: stone polynomials need symmetric parity", ep.spec)));
    }
    Ok(())
}

/// `L^{2n-2} z`: a constant for symmetric eigenfunctions, a multiple of `x` for antisymmetric ones.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stone {
    #[serde(with = "num")]
    pub constant: f64,
    #[serde(with = "num")]
    pub linear: f64,
    /// `max(sup|z^{(2n-2)}|, Lambda sup|z^{(2n-2p-2)}|)`.
    #[serde(with = "num")]
    pub scale: f64,
    /// Non-polynomial or higher-degree content relative to `scale`.
    #[serde(with = "num")]
    pub residual: f64,
}

impl Stone {
    /// The coefficient that carries the stone for the eigenfunction's parity.
    pub fn value(&self, parity: Parity) -> f64 {
        match parity {
            Parity::Symmetric => self.constant,
            Parity::Antisymmetric => self.linear,
        }
    }
}

pub fn stone(ep: &EigenPair) -> Result<Stone> {
    require_stones(ep)?;
    let (n, p) = (ep.spec.n, ep.spec.p);
    let op = operator_of_order(n - 1, p, ep.lambda)?;
    let img = ep.z.apply_sigma(&op);
    let scale = operator_scale(&ep.z, n - 1, p, ep.lambda);
    let poly = img.polynomial_part();
    let coef = |i: usize| poly.get(i).copied().unwrap_or_default();
    let high: f64 = poly.iter().skip(2).map(|c| c.norm()).sum::<f64>()
        + coef(0).im.abs()
        + coef(1).im.abs();
    let wrong_parity = match ep.spec.parity {
        Parity::Symmetric => coef(1).re.abs(),
        Parity::Antisymmetric => coef(0).re.abs(),
    };
    let residual = (img.kernel_part().bound() + high + wrong_parity) / scale.max(f64::MIN_POSITIVE);
    if residual > STONE_RESIDUAL_TOL {
        return Err(Error::BadStone(ep.spec.to_string(), residual));
    }
    Ok(Stone { constant: coef(0).re, linear: coef(1).re, scale, residual })
}

/// Stone polynomials `h^0..h^{k_max}` of a symmetric eigenfunction and their coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct StonePolynomials {
    /// Polynomial parts of `(-1)^k L^{2n-2k-2} z`.
    pub h: Vec<ExpPoly>,
    /// `c_0..c_{k_max}`, read off `h^{k_max}`.
    pub coeffs: Vec<f64>,
    /// Worst relative disagreement of `c_j` read from different `h^k`.
    pub cross_k_residual: f64,
    /// Worst non-polynomial or odd-power content, relative to the operator scale.
    pub residual: f64,
}

impl StonePolynomials {
    /// `h^k`, with `h^k = 0` for `k < 0`.
    pub fn get(&self, k: i64) -> Result<ExpPoly> {
        if k < 0 {
            return Ok(ExpPoly::zero());
        }
        self.h.get(k as usize).cloned().ok_or(Error::IndexOverflow { index: k as usize, len: self.h.len() })
    }
}

pub fn stone_polynomials(ep: &EigenPair, k_max: usize) -> Result<StonePolynomials> {
    require_stones(ep)?;
    require_symmetric(ep)?;
    let (n, p) = (ep.spec.n, ep.spec.p);
    if k_max + p + 1 > n {
        return Err(Error::NotApplicable(format!("{}: k_max {k_max} > n - p - 1", ep.spec)));
    }
    let mut h = Vec::with_capacity(k_max + 1);
    let mut per_k: Vec<Vec<f64>> = Vec::with_capacity(k_max + 1);
    let mut residual = 0.0f64;
    for k in 0..=k_max {
        let j = n - k - 1;
        let op = operator_of_order(j, p, ep.lambda)?;
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let img = ep.z.apply_sigma(&op).scale(sign);
        let scale = operator_scale(&ep.z, j, p, ep.lambda).max(f64::MIN_POSITIVE);
        let poly = img.polynomial_part();
        let mut bad = img.kernel_part().bound();
        let mut coeffs = vec![0.0; k + 1];
        for (deg, c) in poly.iter().enumerate() {
            bad += c.im.abs();
            if deg % 2 == 1 || deg > 2 * k {
                bad += c.re.abs();
            } else {
                // coefficient of x^{2i} is c_{k-i} / (2i)!
                coeffs[k - deg / 2] = c.re * factorial(deg);
            }
        }
        residual = residual.max(bad / scale);
        let real: Vec<f64> = poly.iter().map(|c| c.re).collect();
        h.push(ExpPoly::real_polynomial(&real));
        per_k.push(coeffs);
    }
    if residual > STONE_RESIDUAL_TOL {
        return Err(Error::BadStone(ep.spec.to_string(), residual));
    }
    let coeffs = per_k[k_max].clone();
    let magnitude = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let mut cross = 0.0f64;
    for row in &per_k {
        for (j, c) in row.iter().enumerate() {
            let d = (c - coeffs[j]).abs() / coeffs[j].abs().max(c.abs()).max(1e-12 * magnitude).max(1e-300);
            cross = cross.max(d);
        }
    }
    if cross > CONSISTENCY_TOL {
        return Err(Error::StoneInconsistent(cross));
    }
    Ok(StonePolynomials { h, coeffs, cross_k_residual: cross, residual })
}

/// Worst relative mismatch between `d^2 h^k` and `h^{k-1}` over the polynomial coefficients.
pub fn second_derivative_chain(sp: &StonePolynomials) -> f64 {
    let mut worst = 0.0f64;
    for k in 1..sp.h.len() {
        let lhs = sp.h[k].differentiate(2).polynomial_part();
        let rhs = sp.h[k - 1].polynomial_part();
        let len = lhs.len().max(rhs.len());
        let mag = rhs.iter().chain(&lhs).fold(0.0f64, |m, c| m.max(c.norm())).max(f64::MIN_POSITIVE);
        for i in 0..len {
            let a = lhs.get(i).copied().unwrap_or_default();
            let b = rhs.get(i).copied().unwrap_or_default();
            worst = worst.max((a - b).norm() / mag);
        }
    }
    worst
}

/// `a_k = <z x^{2k} / (2k)!>` for `k = 0..=k_max`.
pub fn moments(z: &ExpPoly, k_max: usize) -> Vec<f64> {
    (0..=k_max)
        .map(|k| z.multiply(&ExpPoly::monomial(1.0 / factorial(2 * k), 2 * k)).integrate_unit().re)
        .collect()
}

/// `(f, g)_k = (-1)^k (f_k g_0 + ... + f_0 g_k)`, zero for `k < 0`.
pub fn bracket(f: &[f64], g: &[f64], k: i64) -> Result<f64> {
    if k < 0 {
        return Ok(0.0);
    }
    let k = k as usize;
    let short = f.len().min(g.len());
    if k >= short {
        return Err(Error::IndexOverflow { index: k, len: short });
    }
    let s: f64 = (0..=k).map(|i| f[k - i] * g[i]).sum();
    Ok(if k % 2 == 0 { s } else { -s })
}

/// Stones and moments attached to one symmetric eigenpair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoneMomentData {
    #[serde(with = "num")]
    pub lambda: f64,
    pub index: usize,
    #[serde(with = "num")]
    pub stone: f64,
    #[serde(with = "num::vec")]
    pub stone_coeffs: Vec<f64>,
    #[serde(with = "num::vec")]
    pub moments: Vec<f64>,
    /// `Lambda^{-1/p}`
    #[serde(with = "num")]
    pub eps: f64,
    /// `Lambda^{1/p}`
    #[serde(with = "num")]
    pub lambda_sq: f64,
}

/// Moments up to `k_moments`; stone coefficients up to `n - p - 1`.
pub fn stone_moment_data(ep: &EigenPair, k_moments: usize) -> Result<StoneMomentData> {
    let sp = stone_polynomials(ep, ep.spec.n - ep.spec.p - 1)?;
    let p = ep.spec.p as f64;
    Ok(StoneMomentData {
        lambda: ep.lambda,
        index: ep.index,
        stone: sp.coeffs[0],
        stone_coeffs: sp.coeffs,
        moments: moments(&ep.z, k_moments),
        eps: ep.lambda.powf(-1.0 / p),
        lambda_sq: ep.lambda.powf(1.0 / p),
    })
}

/// `A_J = sigma^{J-p-1} (sigma^2 - rho^2) prod_{i=1}^{p-1} (sigma - lambda_i)` with upper-half-plane
/// representatives `lambda_i` of the roots of `lambda^{2p} = Lambda`.
pub fn a_operator(j: usize, p: usize, lambda: f64) -> Result<SigmaPolynomial> {
    if j < p + 1 {
        return Err(Error::InvalidProblem(format!("A_J needs J >= p + 1, got J={j}, p={p}")));
    }
    let roots = root_system(p, lambda)?;
    let rho = roots.rho;
    let quad = SigmaPolynomial::new(vec![C64::new(-rho * rho, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0)])?;
    Ok(SigmaPolynomial::power(j - p - 1)
        .mul(&quad)
        .mul(&SigmaPolynomial::from_roots(&roots.upper_representatives())))
}

fn tagged(r: IdentityReport, ep: &EigenPair) -> IdentityReport {
    r.with_index("n", ep.spec.n as i64).with_index("p", ep.spec.p as i64).with_index("i", ep.index as i64)
}

fn not_applicable(id: &str, e: &Error) -> IdentityReport {
    IdentityReport::not_applicable(id, e.to_string())
}

/// `||A_n z||^2 = -lambda^2 <z L^{2n-2} z>`, i.e. `-lambda^2 c_n <z_n>` for symmetric `z`.
pub fn check_stone_identity(ep: &EigenPair) -> IdentityReport {
    let st = match stone(ep) {
        Ok(s) => s,
        Err(e) => return tagged(not_applicable("eq10", &e), ep),
    };
    let (n, p) = (ep.spec.n, ep.spec.p);
    let lambda_sq = ep.lambda.powf(1.0 / p as f64);
    let lhs = match a_operator(n, p, ep.lambda) {
        Ok(a) => {
            let img = ep.z.apply_sigma(&a);
            img.hermitian_product(&img).re
        }
        Err(e) => return tagged(not_applicable("eq10", &e), ep),
    };
    let (pairing, what) = match ep.spec.parity {
        Parity::Symmetric => (ep.mean(), "<z>"),
        Parity::Antisymmetric => (ep.z.multiply(&ExpPoly::monomial(1.0, 1)).integrate_unit().re, "<x z>"),
    };
    let rhs = -lambda_sq * st.value(ep.spec.parity) * pairing;
    let mut r = tagged(IdentityReport::equality("eq10", lhs, rhs, IDENTITY_TOL), ep)
        .with_note(format!("stone {:e}, pairing {what} = {pairing:e}", st.value(ep.spec.parity)));
    if pairing.abs() <= 1e-9 * ep.z.norm_sq().sqrt() {
        r = r.with_note("vanishing pairing: stone identity degenerates (lemma-relevant)");
    }
    r.fail_if(!(lhs > 0.0), "operator norm is not strictly positive")
}

/// Stone-lemma consequences: `|c_n|` above the floor and `c_n <z_n> < 0`.
pub fn check_stone_lemma(ep: &EigenPair) -> IdentityReport {
    let st = match stone(ep) {
        Ok(s) => s,
        Err(e) => return tagged(not_applicable("stone-lemma", &e), ep),
    };
    let c = st.value(ep.spec.parity);
    let mut r = tagged(IdentityReport::strict_greater("stone-lemma", c.abs(), STONE_FLOOR * st.scale, st.scale, 0.0), ep)
        .with_note(format!("stone {c:e}, scale {:e}, residual {:e}", st.scale, st.residual));
    if ep.spec.parity == Parity::Symmetric {
        let mean = ep.mean();
        if mean.abs() > 1e-9 * ep.z.norm_sq().sqrt() {
            r = r.fail_if(c * mean >= 0.0, format!("c_n <z_n> = {:e} is not negative", c * mean));
        } else {
            r = r.with_note("<z_n> vanishes; sign condition not applicable");
        }
    }
    r
}

/// Cross-`k` agreement of stone coefficients and `d^2 h^k = h^{k-1}`.
pub fn check_stone_polynomials(ep: &EigenPair) -> Vec<IdentityReport> {
    let k_max = match ep.spec.n.checked_sub(ep.spec.p + 1) {
        Some(k) => k,
        None => return vec![tagged(IdentityReport::not_applicable("eq12", "n = p: no stones"), ep)],
    };
    match stone_polynomials(ep, k_max) {
        Ok(sp) => {
            let cross = tagged(IdentityReport::bounded("eq12", sp.cross_k_residual, CONSISTENCY_TOL), ep)
                .with_note("worst relative disagreement of c_j across k");
            let d2 = tagged(IdentityReport::bounded("eq12-d2", second_derivative_chain(&sp), 1e-12), ep)
                .with_note("worst relative coefficient mismatch of d^2 h^k against h^{k-1}");
            vec![cross, d2]
        }
        Err(e) => vec![tagged(not_applicable("eq12", &e), ep)],
    }
}

/// `(Lambda_{n-1} - Lambda_n) <z_n^{(n-p-1)} z_{n-1}^{(n-p-1)}> = c_n <z_{n-1}>`.
pub fn check_cross_identity(z_prev: &EigenPair, z: &EigenPair) -> IdentityReport {
    let guard = (|| {
        if z_prev.spec.p != z.spec.p || z_prev.spec.n + 1 != z.spec.n {
            return Err(Error::NotApplicable("orders must be n-1 and n with the same p".into()));
        }
        require_symmetric(z)?;
        require_symmetric(z_prev)?;
        stone(z)
    })();
    let st = match guard {
        Ok(s) => s,
        Err(e) => return tagged(not_applicable("eq11", &e), z),
    };
    let i = z.spec.n - z.spec.p - 1;
    let inner = z.z.differentiate(i).inner_product(&z_prev.z.differentiate(i)).re;
    let lhs = (z_prev.lambda - z.lambda) * inner;
    let rhs = st.constant * z_prev.mean();
    let mut r = tagged(IdentityReport::equality("eq11", lhs, rhs, IDENTITY_TOL), z).with_index("i_prev", z_prev.index as i64);
    if z_prev.mean().abs() <= 1e-9 * z_prev.z.norm_sq().sqrt() {
        r = r.with_note("<z_{n-1}> vanishes: both sides must vanish");
    }
    r
}

/// Range of `k` for the bilinear family of orders `n < m`: `-1-[Delta/2] ..= n-p-1`.
pub fn bilinear_range(n: usize, m: usize, p: usize) -> std::ops::RangeInclusive<i64> {
    let q = ((m - n) / 2) as i64;
    -1 - q..=(n as i64 - p as i64 - 1)
}

/// Direct inner-product form and bracket form of the bilinear identity for orders `n < m`.
///
/// Direct: `<z_m h_n^k> - (-1)^D <z_n h_m^{k+D}> = (Lambda_m - Lambda_n) (-1)^k <z_n^{(i)} z_m^{(i)}>`,
/// `i = n-p-k-1`. Bracket: `(b,c)_k - (a,d)_{k+D} = (Lambda_m - Lambda_n) <z_n^{(i)} z_m^{(i)}>`,
/// with `a, b` the moments of `z_n, z_m` and `c, d` their stone coefficients. The variant with
/// `(-1)^k` on the bracket side is evaluated too and recorded in the notes.
pub fn check_bilinear_family(zn: &EigenPair, zm: &EigenPair, k: i64) -> Vec<IdentityReport> {
    let tag = |r: IdentityReport| {
        tagged(r, zn).with_index("m", zm.spec.n as i64).with_index("j", zm.index as i64).with_index("k", k)
    };
    let (n, m, p) = (zn.spec.n, zm.spec.n, zn.spec.p);
    if zm.spec.p != p || m <= n {
        return vec![tag(IdentityReport::not_applicable("eq13", "need the same p and m > n"))];
    }
    if zn.spec.parity != Parity::Symmetric || zm.spec.parity != Parity::Symmetric {
        return vec![tag(IdentityReport::not_applicable("eq13", "symmetric eigenpairs only"))];
    }
    if !bilinear_range(n, m, p).contains(&k) {
        return vec![tag(IdentityReport::not_applicable("eq13", format!("k = {k} outside the admissible range")))];
    }
    let delta = (m - n) as i64;
    let result = (|| -> Result<Vec<IdentityReport>> {
        let sp_n = if n > p { Some(stone_polynomials(zn, n - p - 1)?) } else { None };
        let sp_m = stone_polynomials(zm, m - p - 1)?;
        let h_n = match &sp_n {
            Some(sp) => sp.get(k)?,
            None => ExpPoly::zero(),
        };
        let h_m = sp_m.get(k + delta)?;
        let sign_delta = if delta % 2 == 0 { 1.0 } else { -1.0 };
        let sign_k = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        let i = (n as i64 - p as i64 - k - 1) as usize;
        let inner = zn.z.differentiate(i).inner_product(&zm.z.differentiate(i)).re;
        let gap = zm.lambda - zn.lambda;

        let lhs13 = zm.z.inner_product(&h_n).re - sign_delta * zn.z.inner_product(&h_m).re;
        let rhs13 = gap * sign_k * inner;

        let top = (m - p) as usize;
        let a = moments(&zn.z, top);
        let b = moments(&zm.z, top);
        let c: Vec<f64> = sp_n.as_ref().map(|s| s.coeffs.clone()).unwrap_or_default();
        let d = &sp_m.coeffs;
        let bc = if k < 0 { 0.0 } else { bracket(&b, &c, k)? };
        let ad = bracket(&a, d, k + delta)?;
        let lhs18 = bc - ad;
        let rhs18 = gap * inner;
        let alt = relative_residual(lhs18, sign_k * rhs18);

        let direct = tag(IdentityReport::equality("eq13", lhs13, rhs13, IDENTITY_TOL));
        let brack = tag(IdentityReport::equality("eq18", lhs18, rhs18, IDENTITY_TOL))
            .with_note(format!("variant with (-1)^k on the right: relative residual {alt:e}"));
        let consistency = tag(IdentityReport::equality("eq13-eq18", lhs13, sign_k * lhs18, CONSISTENCY_TOL))
            .with_note("direct left side against (-1)^k times the bracket left side");
        Ok(vec![direct, brack, consistency])
    })();
    result.unwrap_or_else(|e| vec![tag(not_applicable("eq13", &e))])
}

/// The positivity quantity for `0 <= k <= n-p-1`, evaluated three ways:
/// `||A_{n-k} z||^2`, `(-1)^{k-1}<z h^{k-1}> - (-1)^k lambda^2 <z h^k>` and
/// `(a,c)_{k-1} - lambda^2 (a,c)_k`.
pub fn check_positivity_family(ep: &EigenPair, k: i64) -> Vec<IdentityReport> {
    let tag = |r: IdentityReport| tagged(r, ep).with_index("k", k);
    let (n, p) = (ep.spec.n, ep.spec.p);
    if k < 0 || k + p as i64 + 1 > n as i64 {
        return vec![tag(IdentityReport::not_applicable("eq15", format!("k = {k} outside 0..=n-p-1")))];
    }
    let result = (|| -> Result<Vec<IdentityReport>> {
        let sp = stone_polynomials(ep, n - p - 1)?;
        let ku = k as usize;
        let lambda_sq = ep.lambda.powf(1.0 / p as f64);
        let img = ep.z.apply_sigma(&a_operator(n - ku, p, ep.lambda)?);
        let norm = img.hermitian_product(&img).re;

        let sign = |j: i64| if j.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        let zh = |j: i64| -> Result<f64> { Ok(ep.z.inner_product(&sp.get(j)?).re) };
        let via_h = sign(k - 1) * zh(k - 1)? - sign(k) * lambda_sq * zh(k)?;

        let a = moments(&ep.z, n - p);
        let via_bracket = bracket(&a, &sp.coeffs, k - 1)? - lambda_sq * bracket(&a, &sp.coeffs, k)?;
        // eps (a,c)_{k-1} > (a,c)_k is the same inequality divided by lambda^2
        let eps_form = bracket(&a, &sp.coeffs, k - 1)? / lambda_sq - bracket(&a, &sp.coeffs, k)?;

        let eq15 = tag(IdentityReport::equality("eq15", norm, via_h, IDENTITY_TOL))
            .fail_if(!(norm > 1e-9 * norm.abs().max(via_h.abs())) || !(norm > 0.0), "not strictly positive");
        let eq19 = tag(IdentityReport::equality("eq19", norm, via_bracket, IDENTITY_TOL))
            .with_note(format!("eps (a,c)_(k-1) - (a,c)_k = {eps_form:e}"))
            .fail_if(!(eps_form > 0.0), "bracket inequality not strict");
        Ok(vec![eq15, eq19])
    })();
    result.unwrap_or_else(|e| vec![tag(not_applicable("eq15", &e))])
}

/// `|<A_{n-l} z_n, A_J z_m>|^2 < ||A_{n-l} z_n||^2 ||A_J z_m||^2`, `J = mu - 2k + l`,
/// `mu = n + 2[(m-n)/2]`, with both operators built at the midpoint `Lambda`.
pub fn check_cauchy_schwarz(zn: &EigenPair, zm: &EigenPair, l: i64, k: i64) -> IdentityReport {
    let tag = |r: IdentityReport| {
        tagged(r, zn).with_index("m", zm.spec.n as i64).with_index("j", zm.index as i64).with_index("l", l).with_index("k", k)
    };
    let (n, m, p) = (zn.spec.n as i64, zm.spec.n as i64, zn.spec.p as i64);
    if zm.spec.p != zn.spec.p || m <= n || n <= p {
        return tag(IdentityReport::not_applicable("cs21", "need the same p and m > n > p"));
    }
    let delta = m - n;
    let (q, dl) = (delta / 2, delta % 2);
    let admissible = (0..=n - p - 1).contains(&l)
        && (0..=n - p - 1 + q).contains(&k)
        && (-dl..=n - p - 1 + 2 * q).contains(&(2 * k - l));
    if !admissible {
        return tag(IdentityReport::not_applicable("cs21", "indices outside the admissible ranges"));
    }
    let mu = n + 2 * q;
    let j = (mu - 2 * k + l) as usize;
    let mid = 0.5 * (zn.lambda + zm.lambda);
    let result = (|| -> Result<IdentityReport> {
        let left = zn.z.apply_sigma(&a_operator((n - l) as usize, zn.spec.p, mid)?);
        let right = zm.z.apply_sigma(&a_operator(j, zn.spec.p, mid)?);
        let cross = left.hermitian_product(&right).norm_sqr();
        let product = left.hermitian_product(&left).re * right.hermitian_product(&right).re;
        let defect = 1.0 - cross / product.max(f64::MIN_POSITIVE);
        let r = if defect.abs() <= 1e-10 {
            IdentityReport::equality("cs21", cross, product, 1e-10).with_note("proportional images")
        } else {
            IdentityReport::strict_greater("cs21", product, cross, product, 0.0)
        };
        Ok(r.with_index("J", j as i64).with_note(format!("midpoint Lambda {mid}")))
    })();
    tag(result.unwrap_or_else(|e| not_applicable("cs21", &e)))
}

/// Every root of `lambda^{2p} = Lambda` carries a nonzero kernel coefficient.
pub fn check_root_completeness(ep: &EigenPair, tol: f64) -> IdentityReport {
    let mags: Vec<f64> = ep.kernel_coeffs.iter().map(|k| k.coeff().norm()).collect();
    let max = mags.iter().fold(0.0f64, |m, v| m.max(*v));
    let min = mags.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    let r = IdentityReport::strict_greater("root-completeness", min, tol * max, max, 0.0);
    let r = r.fail_if(mags.len() != 2 * ep.spec.p, format!("{} coefficients for {} roots", mags.len(), 2 * ep.spec.p));
    tagged(r, ep).with_note(format!("smallest/largest coefficient {:e}", min / max.max(f64::MIN_POSITIVE)))
}

/// Rational coefficients `t_{k,j}` with `(d/dxi)^k = sum_j t_{k,j} x^{j-2k} d^j`, `xi = x^2`.
pub fn xi_derivative_coefficients(k: usize) -> Vec<Ratio<i64>> {
    let mut t = vec![Ratio::from_integer(1i64)];
    for level in 0..k {
        let mut next = vec![Ratio::from_integer(0i64); t.len() + 1];
        for (j, c) in t.iter().enumerate() {
            next[j] += c * Ratio::new(j as i64 - 2 * level as i64, 2);
            next[j + 1] += c * Ratio::new(1, 2);
        }
        t = next;
    }
    t
}

/// `(d/dxi)^k f` at `xi = 1` (that is, `x = 1`) and the matching magnitude scale.
fn xi_derivative_at_one(f: &ExpPoly, k: usize) -> (f64, f64) {
    let t = xi_derivative_coefficients(k);
    let (mut value, mut scale) = (0.0, 0.0);
    let mut g = f.clone();
    for c in &t {
        let c = c.to_f64().unwrap_or(f64::NAN);
        value += c * g.evaluate(1.0).re;
        scale += c.abs() * g.bound();
        g = g.differentiate(1);
    }
    (value, scale)
}

/// `(d/dxi)^k R = 0` at `xi = 1` for `k = n-p..n-1`, and `(d/dxi)^j z = 0` there for `j < n`.
pub fn check_xi_derivatives(ep: &EigenPair) -> Vec<IdentityReport> {
    if ep.spec.parity != Parity::Symmetric {
        return vec![tagged(IdentityReport::not_applicable("eq33", "symmetric eigenpairs only"), ep)];
    }
    let (n, p) = (ep.spec.n, ep.spec.p);
    let kernel = ep.kernel();
    let mut out = Vec::new();
    for k in n - p..n {
        let (v, s) = xi_derivative_at_one(&kernel, k);
        let r = IdentityReport::bounded("eq33", v.abs() / s.max(f64::MIN_POSITIVE), XI_TOL);
        out.push(tagged(r, ep).with_index("k", k as i64).with_note(format!("value {v:e}, scale {s:e}")));
    }
    for j in 0..n {
        let (v, s) = xi_derivative_at_one(&ep.z, j);
        let r = IdentityReport::bounded("eq31", v.abs() / s.max(f64::MIN_POSITIVE), XI_TOL);
        out.push(tagged(r, ep).with_index("k", j as i64).with_note(format!("value {v:e}, scale {s:e}")));
    }
    out
}

/// Coefficients `gamma_k` of the polynomial part in powers of `(x^2 - 1)`, with the worst
/// round-trip mismatch relative to the largest polynomial coefficient.
pub fn gamma_expansion(ep: &EigenPair) -> Result<(Vec<f64>, f64)> {
    require_stones(ep)?;
    require_symmetric(ep)?;
    let nu = ep.spec.n - ep.spec.p - 1;
    let even: Vec<f64> = (0..=nu).map(|i| ep.poly_coeffs.get(2 * i).copied().unwrap_or(0.0)).collect();
    let binom = |i: usize, k: usize| -> f64 { (0..k).map(|s| (i - s) as f64 / (s + 1) as f64).product() };
    let gamma: Vec<f64> = (0..=nu).map(|k| (k..=nu).map(|i| binom(i, k) * even[i]).sum()).collect();
    // back: sum_k gamma_k (xi - 1)^k = sum_i xi^i sum_{k>=i} gamma_k C(k,i) (-1)^{k-i}
    let back: Vec<f64> = (0..=nu)
        .map(|i| {
            (i..=nu)
                .map(|k| gamma[k] * binom(k, i) * if (k - i) % 2 == 0 { 1.0 } else { -1.0 })
                .sum()
        })
        .collect();
    let mag = ep.poly_coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs())).max(f64::MIN_POSITIVE);
    let mut worst = (0..ep.poly_coeffs.len())
        .filter(|d| d % 2 == 1 || d / 2 > nu)
        .map(|d| ep.poly_coeffs[d].abs())
        .fold(0.0f64, f64::max);
    for (a, b) in back.iter().zip(&even) {
        worst = worst.max((a - b).abs());
    }
    Ok((gamma, worst / mag))
}

pub fn check_gamma_expansion(ep: &EigenPair) -> IdentityReport {
    match gamma_expansion(ep) {
        Ok((gamma, rt)) => {
            tagged(IdentityReport::bounded("eq30", rt, 1e-12), ep).with_note(format!("gamma = {gamma:?}"))
        }
        Err(e) => tagged(not_applicable("eq30", &e), ep),
    }
}

/// All single-eigenpair checks.
pub fn eigenpair_reports(ep: &EigenPair) -> Vec<IdentityReport> {
    let mut out = vec![check_stone_identity(ep), check_stone_lemma(ep)];
    out.extend(check_stone_polynomials(ep));
    if ep.spec.has_stones() {
        for k in 0..(ep.spec.n - ep.spec.p) as i64 {
            out.extend(check_positivity_family(ep, k));
        }
    }
    out.push(check_root_completeness(ep, ROOT_COMPLETENESS_TOL));
    out.extend(check_xi_derivatives(ep));
    out.push(check_gamma_expansion(ep));
    out
}

/// All checks between eigenpairs of orders `n < m` (same `p`).
pub fn pair_reports(zn: &EigenPair, zm: &EigenPair) -> Vec<IdentityReport> {
    let mut out = Vec::new();
    if zm.spec.n == zn.spec.n + 1 {
        out.push(check_cross_identity(zn, zm));
    }
    for k in bilinear_range(zn.spec.n, zm.spec.n, zn.spec.p) {
        out.extend(check_bilinear_family(zn, zm, k));
    }
    if zn.spec.has_stones() {
        let (n, m, p) = (zn.spec.n as i64, zm.spec.n as i64, zn.spec.p as i64);
        let q = (m - n) / 2;
        for l in 0..=n - p - 1 {
            for k in 0..=n - p - 1 + q {
                let r = check_cauchy_schwarz(zn, zm, l, k);
                if r.verdict != Verdict::NotApplicable {
                    out.push(r);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigensolver::{eigenpairs, extract_eigenfunction};
    use crate::operator::ProblemSpec;
    use std::f64::consts::PI;

    fn z1() -> EigenPair {
        extract_eigenfunction(&ProblemSpec::symmetric(1, 1).unwrap(), PI * PI / 4.0).unwrap()
    }

    /// `1 + cos(pi x)`
    fn z2() -> EigenPair {
        extract_eigenfunction(&ProblemSpec::symmetric(2, 1).unwrap(), PI * PI).unwrap().scaled(PI)
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        relative_residual(a, b) <= tol
    }

    #[test]
    fn closed_form_stones_and_moments() {
        let z = z2();
        let st = stone(&z).unwrap();
        assert!(close(st.constant, -PI * PI, 1e-12), "{}", st.constant);
        let a = moments(&z.z, 1);
        assert!(close(a[0], 2.0, 1e-12));
        assert!(close(a[1], 1.0 / 3.0 - 2.0 / (PI * PI), 1e-12), "{}", a[1]);
        assert!(close(moments(&z1().z, 0)[0], 4.0 / PI, 1e-12));
        assert!(matches!(stone(&z1()), Err(Error::NotApplicable(_))));
        let kernel_only = EigenPair { z: z.kernel(), ..z.clone() };
        assert!(stone(&kernel_only).unwrap().constant.abs() < 1e-10);
        let sp = stone_polynomials(&z, 0).unwrap();
        assert!(close(sp.coeffs[0], -PI * PI, 1e-12));
        assert!(sp.get(-1).unwrap().is_zero());
    }

    #[test]
    fn brackets() {
        assert_eq!(bracket(&[1.0], &[1.0], -1).unwrap(), 0.0);
        assert!(close(bracket(&[4.0 / PI], &[-PI * PI], 0).unwrap(), -4.0 * PI, 1e-15));
        assert_eq!(bracket(&[1.0, 0.0], &[1.0, 0.0], 1).unwrap(), 0.0);
        assert!(bracket(&[1.0], &[1.0, 2.0], 1).is_err());
        assert_eq!(bracket(&[1.0, 2.0], &[3.0, 4.0], 1).unwrap(), -10.0);
    }

    #[test]
    fn closed_form_anchors() {
        let (z1, z2) = (z1(), z2());
        let eq10 = check_stone_identity(&z2);
        assert!(eq10.passed() && close(eq10.lhs, 2.0 * PI.powi(4), 1e-10), "{eq10:?}");
        let eq11 = check_cross_identity(&z1, &z2);
        assert!(eq11.passed() && close(eq11.lhs, -4.0 * PI, 1e-10) && close(eq11.rhs, -4.0 * PI, 1e-10), "{eq11:?}");
        let fam = check_positivity_family(&z2, 0);
        for r in &fam {
            assert!(r.passed() && close(r.lhs, 2.0 * PI.powi(4), 1e-10), "{r:?}");
        }
        let bil = check_bilinear_family(&z1, &z2, -1);
        assert!(bil.iter().all(IdentityReport::passed), "{bil:?}");
        assert!(close(bil[0].lhs, -4.0 * PI, 1e-10) && close(bil[1].lhs, 4.0 * PI, 1e-10));
        assert!(check_bilinear_family(&z1, &z2, -2)[0].verdict == Verdict::NotApplicable);
    }

    #[test]
    fn hand_computed_stone_polynomials_for_order_three() {
        let ep = eigenpairs(&ProblemSpec::symmetric(3, 1).unwrap(), 1).unwrap().remove(0);
        let c = ep.poly_coeffs[2];
        let b = ep.poly_coeffs[0];
        let sp = stone_polynomials(&ep, 1).unwrap();
        assert!(close(sp.coeffs[0], 2.0 * c * ep.lambda, 1e-10));
        assert!(close(sp.coeffs[1], 2.0 * c + ep.lambda * b, 1e-10));
        assert!(second_derivative_chain(&sp) < 1e-12);
        let (gamma, rt) = gamma_expansion(&ep).unwrap();
        assert!(close(gamma[0], b + c, 1e-14) && close(gamma[1], c, 1e-14) && rt < 1e-12);
    }

    #[test]
    fn xi_operator_expansion() {
        let t = xi_derivative_coefficients(2);
        assert_eq!(t, vec![Ratio::from_integer(0), Ratio::new(-1, 4), Ratio::new(1, 4)]);
        let r = check_xi_derivatives(&z2());
        assert!(r.iter().all(IdentityReport::passed), "{r:?}");
    }

    #[test]
    fn root_completeness_negative_control() {
        let z = z2();
        assert!(check_root_completeness(&z, ROOT_COMPLETENESS_TOL).passed());
        let mut broken = z.clone();
        broken.kernel_coeffs[0].coeff_re = 0.0;
        broken.kernel_coeffs[0].coeff_im = 0.0;
        assert!(check_root_completeness(&broken, ROOT_COMPLETENESS_TOL).failed());
    }

    #[test]
    fn cauchy_schwarz_proportional_and_strict() {
        let ep = eigenpairs(&ProblemSpec::symmetric(2, 1).unwrap(), 1).unwrap().remove(0);
        let other = eigenpairs(&ProblemSpec::symmetric(3, 1).unwrap(), 1).unwrap().remove(0);
        let r = check_cauchy_schwarz(&ep, &other, 0, 0);
        assert!(r.passed() && r.rhs >= 0.0 && r.lhs >= 0.0, "{r:?}");
        // same function, same operator: equality case
        let same = EigenPair { spec: ProblemSpec::symmetric(3, 1).unwrap(), ..ep.clone() };
        let r = check_cauchy_schwarz(&ep, &same, 0, 0);
        assert!(r.passed() && r.notes.iter().any(|n| n.contains("proportional")), "{r:?}");
    }
}
