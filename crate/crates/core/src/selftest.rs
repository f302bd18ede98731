//! Fast self-checks: closed-form spectra, closed-form identity anchors and seeded randomized
//! property checks of the exponential-polynomial algebra and of computed eigenpairs.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eigensolver::{eigenpairs, extract_eigenfunction, scan_spectrum, EigenPair};
use crate::exppoly::{ExpPoly, SigmaPolynomial, C64};
use crate::identity::relative_residual;
use crate::invariants::{check_cross_identity, check_positivity_family, check_stone_identity};
use crate::operator::{Parity, ProblemSpec};
use crate::quadrature;

pub const DEFAULT_SEED: u64 = 20240917;
pub const DEFAULT_CASES: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        CheckResult { name: name.into(), passed, detail: detail.into() }
    }
}

/// Bisection for a sign change of `f` on `[a, b]` down to adjacent floats.
fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = f(mid);
        if (fm < 0.0) == (fa < 0.0) {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// First positive root of `tan x = x`.
pub fn tan_root() -> f64 {
    bisect(|x| x.sin() - x * x.cos(), PI, 1.5 * PI)
}

/// First positive root of `tan x = -tanh x`.
pub fn tan_tanh_root() -> f64 {
    bisect(|x| x.sin() * x.cosh() + x.cos() * x.sinh(), 0.5 * PI, PI)
}

fn compare_spectrum(name: &str, spec: ProblemSpec, expected: &[f64], tol: f64) -> CheckResult {
    match scan_spectrum(&spec, expected.len(), None) {
        Ok(slice) => {
            let worst = slice
                .eigenvalues
                .iter()
                .zip(expected)
                .map(|(a, b)| relative_residual(*a, *b))
                .fold(0.0f64, f64::max);
            CheckResult::new(name, worst <= tol, format!("worst relative error {worst:.3e} (tol {tol:e})"))
        }
        Err(e) => CheckResult::new(name, false, e.to_string()),
    }
}

/// Closed-form eigenvalues of the smallest problems.
pub fn closed_form_eigenvalues() -> Vec<CheckResult> {
    let sq = |x: f64| x * x;
    let spec = |n, p, parity| ProblemSpec::new(n, p, parity).expect("valid spec");
    vec![
        compare_spectrum(
            "(1,1,sym) = ((k+1/2) pi)^2",
            spec(1, 1, Parity::Symmetric),
            &[sq(0.5 * PI), sq(1.5 * PI), sq(2.5 * PI)],
            1e-9,
        ),
        compare_spectrum("(1,1,anti) = (k pi)^2", spec(1, 1, Parity::Antisymmetric), &[sq(PI), sq(2.0 * PI)], 1e-9),
        compare_spectrum("(2,1,sym) = (k pi)^2", spec(2, 1, Parity::Symmetric), &[sq(PI), sq(2.0 * PI)], 1e-9),
        compare_spectrum("(3,1,sym): tan x = x", spec(3, 1, Parity::Symmetric), &[sq(tan_root())], 1e-7),
        compare_spectrum("(2,2,sym): tan x = -tanh x", spec(2, 2, Parity::Symmetric), &[tan_tanh_root().powi(4)], 1e-7),
    ]
}

/// `cos(pi x / 2)` and `1 + cos(pi x)` as computed eigenpairs.
pub fn anchor_pairs() -> crate::Result<(EigenPair, EigenPair)> {
    let z1 = extract_eigenfunction(&ProblemSpec::symmetric(1, 1)?, PI * PI / 4.0)?;
    let z2 = extract_eigenfunction(&ProblemSpec::symmetric(2, 1)?, PI * PI)?.scaled(PI);
    Ok((z1, z2))
}

/// Closed-form anchors of the identity suite, to 1e-10 relative.
pub fn identity_anchors() -> Vec<CheckResult> {
    let (z1, z2) = match anchor_pairs() {
        Ok(p) => p,
        Err(e) => return vec![CheckResult::new("identity anchors", false, e.to_string())],
    };
    let tol = 1e-10;
    let target = 2.0 * PI.powi(4);
    let mut out = Vec::new();
    let eq11 = check_cross_identity(&z1, &z2);
    let ok = eq11.passed() && relative_residual(eq11.lhs, -4.0 * PI) <= tol && relative_residual(eq11.rhs, -4.0 * PI) <= tol;
    out.push(CheckResult::new("eq11 anchor = -4 pi", ok, format!("lhs {:.12e}, rhs {:.12e}", eq11.lhs, eq11.rhs)));
    let eq10 = check_stone_identity(&z2);
    let ok = eq10.passed() && relative_residual(eq10.lhs, target) <= tol && relative_residual(eq10.rhs, target) <= tol;
    out.push(CheckResult::new("eq10 anchor = 2 pi^4", ok, format!("lhs {:.12e}, rhs {:.12e}", eq10.lhs, eq10.rhs)));
    let fam = check_positivity_family(&z2, 0);
    let ok = fam.len() == 2
        && fam.iter().all(|r| r.passed() && relative_residual(r.lhs, target) <= tol && relative_residual(r.rhs, target) <= tol);
    let detail = fam.iter().map(|r| format!("{} {:.12e}/{:.12e}", r.identity_id, r.lhs, r.rhs)).collect::<Vec<_>>().join(", ");
    out.push(CheckResult::new("eq15/eq19 k=0 anchor = 2 pi^4", ok, detail));
    out
}

/// A random exponential polynomial with up to `terms` terms, `|mu| <= mu_max`, degree `<= deg`.
pub fn random_exppoly(rng: &mut impl Rng, terms: usize, mu_max: f64, deg: usize) -> ExpPoly {
    let count = rng.gen_range(1..=terms);
    let mut f = ExpPoly::zero();
    for _ in 0..count {
        let r = mu_max * rng.gen::<f64>().sqrt();
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        let freq = C64::from_polar(r, theta);
        let d = rng.gen_range(0..=deg);
        let coeffs: Vec<C64> = (0..=d).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        f = f + ExpPoly::polynomial(coeffs).multiply(&ExpPoly::exponential(1.0, freq));
    }
    f
}

/// `(1 - x^2)^k`, which vanishes to order `k - 1` at both ends.
pub fn bump(k: usize) -> ExpPoly {
    let base = ExpPoly::real_polynomial(&[1.0, 0.0, -1.0]);
    (0..k).fold(ExpPoly::constant(1.0), |acc, _| acc.multiply(&base))
}

fn l2(f: &ExpPoly) -> f64 {
    f.norm_sq().max(0.0).sqrt()
}

fn summarize(name: &str, cases: usize, worst: f64, tol: f64, failures: usize) -> CheckResult {
    CheckResult::new(name, failures == 0, format!("{cases} cases, worst {worst:.3e} (tol {tol:e}), {failures} failures"))
}

/// Linearity, integration by parts, hermiticity of `sigma^k` and closed form vs quadrature.
pub fn exppoly_properties(seed: u64, cases: usize) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let (mut worst, mut bad) = (0.0f64, 0);
    for _ in 0..cases {
        let f = random_exppoly(&mut rng, 3, 20.0, 6);
        let g = random_exppoly(&mut rng, 3, 20.0, 6);
        let (a, b) = (C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)), C64::new(rng.gen_range(-2.0..2.0), 0.0));
        let lhs = (f.scale(a) + g.scale(b)).integrate_unit();
        let (fi, gi) = (f.integrate_unit(), g.integrate_unit());
        let rhs = a * fi + b * gi;
        let scale = (a * fi).norm() + (b * gi).norm();
        let r = (lhs - rhs).norm() / scale.max(1e-300);
        worst = worst.max(r);
        bad += usize::from(r > 1e-12);
    }
    out.push(summarize("linearity of integration", cases, worst, 1e-12, bad));

    let (mut worst, mut bad) = (0.0f64, 0);
    for _ in 0..cases {
        let f = random_exppoly(&mut rng, 2, 10.0, 4).multiply(&bump(1));
        let g = random_exppoly(&mut rng, 2, 10.0, 4).multiply(&bump(1));
        let lhs = f.differentiate(1).inner_product(&g);
        let rhs = -f.inner_product(&g.differentiate(1));
        // each side is bounded by its own Cauchy-Schwarz product
        let scale = l2(&f.differentiate(1)) * l2(&g) + l2(&f) * l2(&g.differentiate(1));
        let r = (lhs - rhs).norm() / scale.max(1e-300);
        worst = worst.max(r);
        bad += usize::from(r > 1e-10);
    }
    out.push(summarize("integration by parts", cases, worst, 1e-10, bad));

    let (mut worst, mut bad) = (0.0f64, 0);
    for _ in 0..cases {
        let k = rng.gen_range(1..=4);
        // |mu| <= 4: the expanded sigma^k (1-x^2)^k products cancel by ~|mu|^k beyond this
        let f = random_exppoly(&mut rng, 2, 4.0, 3).multiply(&bump(k));
        let g = random_exppoly(&mut rng, 2, 4.0, 3).multiply(&bump(k));
        let sk = SigmaPolynomial::power(k);
        let (sf, sg) = (f.apply_sigma(&sk), g.apply_sigma(&sk));
        let lhs = sf.inner_product(&g.conj());
        let rhs = f.inner_product(&sg.conj());
        let scale = l2(&sf) * l2(&g) + l2(&f) * l2(&sg);
        let r = (lhs - rhs).norm() / scale.max(1e-300);
        worst = worst.max(r);
        bad += usize::from(r > 1e-10);
    }
    out.push(summarize("hermiticity of sigma^k", cases, worst, 1e-10, bad));

    let (mut worst, mut bad) = (0.0f64, 0);
    for _ in 0..cases {
        let f = random_exppoly(&mut rng, 3, 50.0, 8);
        let exact = f.integrate_unit();
        let num = quadrature::integrate_exppoly(&f, 1e-15);
        // conditioning of the integral: relative to int |f|
        let l1 = quadrature::integrate(|x| C64::new(f.evaluate(x).norm(), 0.0), 1e-12).re;
        let r = (exact - num).norm() / l1.max(1e-300);
        worst = worst.max(r);
        bad += usize::from(r > 1e-10);
    }
    out.push(summarize("closed form vs quadrature", cases, worst, 1e-10, bad));
    out
}

/// Residual bounds of randomly chosen eigenpairs on the grid `n <= 6`, `p <= min(n, 3)`,
/// first three eigenvalues of either parity.
pub fn eigenpair_properties(seed: u64, cases: usize) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mut cache: HashMap<ProblemSpec, Vec<EigenPair>> = HashMap::new();
    let (mut worst_op, mut worst_bc, mut bad, mut errors) = (0.0f64, 0.0f64, 0, Vec::new());
    for _ in 0..cases {
        let n = rng.gen_range(1..=6);
        let p = rng.gen_range(1..=n.min(3));
        let parity = if rng.gen_bool(0.5) { Parity::Symmetric } else { Parity::Antisymmetric };
        let spec = ProblemSpec::new(n, p, parity).expect("valid spec");
        let index = rng.gen_range(0..3);
        let pairs = match cache.get(&spec) {
            Some(v) => v,
            None => match eigenpairs(&spec, 3) {
                Ok(v) => cache.entry(spec).or_insert(v),
                Err(e) => {
                    errors.push(format!("{spec}: {e}"));
                    continue;
                }
            },
        };
        let r = &pairs[index].residuals;
        worst_op = worst_op.max(r.operator_relative());
        worst_bc = worst_bc.max(r.boundary_relative());
        bad += usize::from(r.operator_relative() > 1e-8 || r.boundary_relative() > 1e-9);
    }
    let detail = format!(
        "{cases} cases, worst operator {worst_op:.3e} (tol 1e-8), worst boundary {worst_bc:.3e} (tol 1e-9), {bad} failures{}",
        if errors.is_empty() { String::new() } else { format!(", errors: {}", errors.join("; ")) }
    );
    vec![CheckResult::new("eigenpair residual bounds", bad == 0 && errors.is_empty(), detail)]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfTestReport {
    pub seed: u64,
    pub cases: usize,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

pub fn run_selftest(seed: u64, cases: usize) -> SelfTestReport {
    let mut checks = closed_form_eigenvalues();
    checks.extend(identity_anchors());
    checks.extend(exppoly_properties(seed, cases));
    checks.extend(eigenpair_properties(seed, cases));
    let passed = checks.iter().all(|c| c.passed);
    SelfTestReport { seed, cases, checks, passed }
}
