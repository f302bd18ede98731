//! Parity spectra as zeros of the clamped boundary determinant, and normalized
//! eigenfunctions extracted from its null space.
//!
//! The scan runs in `lambda = Lambda^{1/(2p)}`, where the determinant oscillates with a
//! roughly constant period. Sign changes are refined with Brent's method; sign-preserving
//! dips are re-sampled on a finer grid and reported as suspects when they do not split.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bracketing::brent;
use crate::error::{Error, Result};
use crate::exppoly::{ExpPoly, C64};
use crate::identity::{relative_residual, IdentityReport};
use crate::linalg::{null_vector, scaled_determinant};
use crate::operator::{boundary_jet, build_operator, root_system, solution_basis, Parity, ProblemSpec, SolutionBasis};
use crate::report::num;

/// Every eigenvalue satisfies `lambda = Lambda^{1/(2p)} >= pi/2`.
pub const LAMBDA_LOWER_BOUND: f64 = std::f64::consts::FRAC_PI_2;

/// Null-space quality above which an eigenvalue is considered unrefined.
pub const MAX_NULL_QUALITY: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    /// Grid step in `lambda = Lambda^{1/(2p)}`.
    pub step: f64,
    /// Largest `lambda` scanned.
    pub ceiling: f64,
    /// Relative tolerance of the bracket refinement, in `lambda`.
    pub rtol: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions { step: 0.05, ceiling: 200.0, rtol: 1e-14 }
    }
}

/// `M[j][i] = psi_i^{(j)}(1)` for `j < n`.
pub fn boundary_matrix(basis: &SolutionBasis) -> DMatrix<f64> {
    let n = basis.len();
    let mut m = DMatrix::zeros(n, n);
    for (i, f) in basis.functions().enumerate() {
        for (j, v) in boundary_jet(f, n).into_iter().enumerate() {
            m[(j, i)] = v;
        }
    }
    m
}

/// Boundary matrix with row `j` divided by `max_i sup|psi_i^{(j)}|`.
///
/// The row factor uses sup-bounds of the derivatives rather than their values at `x = 1`:
/// those values vanish at eigenvalues in rows where only kernel functions contribute, and
/// dividing by them would wipe out the null direction.
pub fn scaled_boundary_matrix(basis: &SolutionBasis, lambda: f64) -> Result<DMatrix<f64>> {
    let n = basis.len();
    let mut m = boundary_matrix(basis);
    let mut scales = vec![0.0f64; n];
    for f in basis.functions() {
        let mut g = f.clone();
        for s in scales.iter_mut() {
            *s = s.max(g.bound());
            g = g.differentiate(1);
        }
    }
    for (j, s) in scales.iter().enumerate() {
        if *s == 0.0 || !s.is_finite() {
            return Err(Error::DegenerateMatrix { lambda });
        }
        m.row_mut(j).scale_mut(1.0 / s);
    }
    Ok(m)
}

/// Signed determinant of the row-scaled boundary matrix.
///
/// Continuous in `Lambda`, changes sign at simple eigenvalues.
pub fn det_indicator(spec: &ProblemSpec, lambda: f64) -> Result<f64> {
    let basis = solution_basis(spec, lambda)?;
    let m = scaled_boundary_matrix(&basis, lambda)?;
    Ok(scaled_determinant(&m).value())
}

fn indicator_at_root(spec: &ProblemSpec, x: f64) -> Result<f64> {
    det_indicator(spec, x.powi(2 * spec.p as i32))
}

/// A sign-preserving near-zero dip that finer sampling did not resolve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuspectDip {
    #[serde(with = "num")]
    pub lambda: f64,
    #[serde(with = "num")]
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanMetadata {
    #[serde(with = "num")]
    pub grid_step: f64,
    #[serde(with = "num")]
    pub lambda_ceiling: f64,
    pub evaluations: usize,
    pub bracket_count: usize,
    pub refinement_iterations: usize,
    pub suspects: Vec<SuspectDip>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSlice {
    pub spec: ProblemSpec,
    #[serde(rename = "Lambda_max", with = "num")]
    pub lambda_max: f64,
    #[serde(with = "num::vec")]
    pub eigenvalues: Vec<f64>,
    pub metadata: ScanMetadata,
}

/// First `count` eigenvalues of one parity.
pub fn scan_spectrum(spec: &ProblemSpec, count: usize, lambda_hint: Option<f64>) -> Result<SpectrumSlice> {
    scan_spectrum_with(spec, count, lambda_hint, &ScanOptions::default())
}

pub fn scan_spectrum_with(
    spec: &ProblemSpec,
    count: usize,
    lambda_hint: Option<f64>,
    opts: &ScanOptions,
) -> Result<SpectrumSlice> {
    if count == 0 {
        return Err(Error::Config("count must be >= 1".into()));
    }
    let two_p = 2 * spec.p as i32;
    let ceiling = match lambda_hint {
        Some(h) if h > 0.0 => h.powf(1.0 / two_p as f64),
        _ => opts.ceiling,
    };
    let (mut roots, meta) = scan_roots(spec, count, ceiling, opts)?;
    if roots.len() < count {
        return Err(Error::ScanExhausted { requested: count, found: roots.len(), ceiling });
    }
    roots.truncate(count);
    let eigenvalues: Vec<f64> = roots.iter().map(|x| x.powi(two_p)).collect();
    Ok(SpectrumSlice {
        spec: *spec,
        lambda_max: ceiling.powi(two_p),
        eigenvalues,
        metadata: meta,
    })
}

/// All eigenvalues `Lambda <= lambda_max` of one parity, ascending.
pub fn eigenvalues_below(spec: &ProblemSpec, lambda_max: f64, opts: &ScanOptions) -> Result<Vec<f64>> {
    if !(lambda_max > 0.0) {
        return Err(Error::NonPositiveLambda(lambda_max));
    }
    let two_p = 2 * spec.p as i32;
    let (roots, _) = scan_roots(spec, usize::MAX, lambda_max.powf(1.0 / two_p as f64), opts)?;
    Ok(roots.iter().map(|x| x.powi(two_p)).filter(|&l| l <= lambda_max).collect())
}

/// Sign-change scan in `lambda` up to `ceiling`, stopping after `count` roots.
fn scan_roots(spec: &ProblemSpec, count: usize, ceiling: f64, opts: &ScanOptions) -> Result<(Vec<f64>, ScanMetadata)> {
    let f = |x: f64| indicator_at_root(spec, x);

    let mut roots: Vec<f64> = Vec::new();
    let mut meta = ScanMetadata {
        grid_step: opts.step,
        lambda_ceiling: ceiling,
        evaluations: 0,
        bracket_count: 0,
        refinement_iterations: 0,
        suspects: Vec::new(),
    };

    const CHUNK: usize = 64;
    let mut prev: Option<(f64, f64)> = None;
    let mut prev2: Option<(f64, f64)> = None;
    // Poincare applied p times to v = u^{(n-p)}, which is clamped to order p, gives
    // Lambda >= (pi/2)^{2p}: no eigenvalue lies below lambda = pi/2. The determinant vanishes
    // like a high power of lambda near 0 and its sign there is rounding noise, so start below.
    let mut i0 = ((LAMBDA_LOWER_BOUND * 0.9 / opts.step).floor() as usize).max(1);
    'scan: loop {
        let xs: Vec<f64> = (i0..i0 + CHUNK)
            .map(|i| i as f64 * opts.step)
            .take_while(|&x| x <= ceiling + 0.5 * opts.step)
            .collect();
        if xs.is_empty() {
            break;
        }
        i0 += CHUNK;
        let values: Vec<f64> = xs.par_iter().map(|&x| f(x)).collect::<Result<_>>()?;
        meta.evaluations += xs.len();
        for (&x, &v) in xs.iter().zip(&values) {
            if let Some((px, pv)) = prev {
                if v == 0.0 {
                    roots.push(x);
                } else if pv != 0.0 && pv.signum() != v.signum() {
                    meta.bracket_count += 1;
                    let r = brent(|t| f(t).unwrap_or(f64::NAN), px, x, pv, v, opts.rtol, 200);
                    meta.refinement_iterations += r.iterations;
                    roots.push(r.root);
                } else if let Some((ppx, ppv)) = prev2 {
                    // dip test on (ppx, px, x)
                    if ppv.signum() == pv.signum()
                        && pv.signum() == v.signum()
                        && pv.abs() < 0.1 * ppv.abs().max(v.abs())
                        && pv.abs() < ppv.abs()
                        && pv.abs() < v.abs()
                    {
                        let extra = resolve_dip(&f, ppx, x, &mut meta)?;
                        roots.extend(extra);
                    }
                }
            }
            prev2 = prev;
            prev = Some((x, v));
            if roots.len() >= count {
                break 'scan;
            }
        }
    }
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    Ok((roots, meta))
}

/// Re-samples `[a, b]` finely; returns refined roots of any sign changes found, otherwise
/// records a suspect.
fn resolve_dip<F>(f: &F, a: f64, b: f64, meta: &mut ScanMetadata) -> Result<Vec<f64>>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    const SUB: usize = 64;
    let xs: Vec<f64> = (0..=SUB).map(|i| a + (b - a) * i as f64 / SUB as f64).collect();
    let vs: Vec<f64> = xs.par_iter().map(|&x| f(x)).collect::<Result<_>>()?;
    meta.evaluations += xs.len();
    let mut found = Vec::new();
    for w in 0..SUB {
        if vs[w] != 0.0 && vs[w + 1] != 0.0 && vs[w].signum() != vs[w + 1].signum() {
            meta.bracket_count += 1;
            let r = brent(|t| f(t).unwrap_or(f64::NAN), xs[w], xs[w + 1], vs[w], vs[w + 1], 1e-14, 200);
            meta.refinement_iterations += r.iterations;
            found.push(r.root);
        }
    }
    if found.is_empty() {
        let (imin, vmin) = vs
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, v)| if v.abs() < acc.1 { (i, v.abs()) } else { acc });
        let edge = vs[0].abs().max(vs[SUB].abs());
        let ratio = vmin / edge;
        if ratio < 1e-3 {
            meta.suspects.push(SuspectDip { lambda: xs[imin], ratio });
        }
    }
    Ok(found)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    #[serde(with = "num")]
    pub determinant: f64,
    #[serde(with = "num")]
    pub null_space_quality: f64,
    #[serde(with = "num")]
    pub operator: f64,
    /// `||z^{(2n)}||_{L2}`
    #[serde(with = "num")]
    pub operator_scale: f64,
    #[serde(with = "num")]
    pub boundary: f64,
    /// Largest sum of term magnitudes among the boundary derivatives.
    #[serde(with = "num")]
    pub boundary_scale: f64,
}

impl Residuals {
    pub fn operator_relative(&self) -> f64 {
        self.operator / self.operator_scale.max(f64::MIN_POSITIVE)
    }

    pub fn boundary_relative(&self) -> f64 {
        self.boundary / self.boundary_scale.max(f64::MIN_POSITIVE)
    }
}

/// Coefficient `r_j` of `e^{i lambda_j x}` in the kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelCoefficient {
    #[serde(with = "num")]
    pub root_re: f64,
    #[serde(with = "num")]
    pub root_im: f64,
    #[serde(with = "num")]
    pub coeff_re: f64,
    #[serde(with = "num")]
    pub coeff_im: f64,
}

impl KernelCoefficient {
    pub fn root(&self) -> C64 {
        C64::new(self.root_re, self.root_im)
    }

    pub fn coeff(&self) -> C64 {
        C64::new(self.coeff_re, self.coeff_im)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EigenPair {
    pub spec: ProblemSpec,
    pub lambda: f64,
    pub index: usize,
    pub z: ExpPoly,
    /// Coefficients of the normalized eigenfunction in the solution basis.
    pub basis_coeffs: Vec<f64>,
    pub kernel_coeffs: Vec<KernelCoefficient>,
    /// Polynomial part, ascending powers.
    pub poly_coeffs: Vec<f64>,
    pub residuals: Residuals,
}

impl EigenPair {
    pub fn kernel(&self) -> ExpPoly {
        self.z.kernel_part()
    }

    /// `<z>`
    pub fn mean(&self) -> f64 {
        self.z.integrate_unit().re
    }

    /// Same eigenpair with `z` multiplied by `s`.
    pub fn scaled(&self, s: f64) -> EigenPair {
        let mut out = self.clone();
        out.z = self.z.scale(s);
        out.basis_coeffs.iter_mut().for_each(|c| *c *= s);
        out.poly_coeffs.iter_mut().for_each(|c| *c *= s);
        for k in &mut out.kernel_coeffs {
            k.coeff_re *= s;
            k.coeff_im *= s;
        }
        out
    }
}

/// Normalized eigenfunction at a refined eigenvalue.
pub fn extract_eigenfunction(spec: &ProblemSpec, lambda: f64) -> Result<EigenPair> {
    extract_indexed(spec, lambda, 0)
}

pub fn extract_indexed(spec: &ProblemSpec, lambda: f64, index: usize) -> Result<EigenPair> {
    let basis = solution_basis(spec, lambda)?;
    let eq = scaled_boundary_matrix(&basis, lambda)?;
    let determinant = scaled_determinant(&eq).value();
    let nv = null_vector(&eq);
    // rows are scaled so every entry is at most one; the last pivot is an absolute measure
    let quality = nv.pivots.last().copied().unwrap_or(0.0);
    if spec.n > 1 && nv.second_quality() < MAX_NULL_QUALITY {
        return Err(Error::NonSimple { lambda, second: nv.second_quality() });
    }
    if quality > MAX_NULL_QUALITY {
        return Err(Error::Unrefined { lambda, quality });
    }

    let mut coeffs = nv.vector.clone();
    let raw = basis.combine(&coeffs);
    let norm = raw.differentiate(spec.n - spec.p).norm_sq().sqrt();
    let sign = orientation(&raw, &basis);
    let factor = sign / norm;
    coeffs.iter_mut().for_each(|c| *c *= factor);
    let z = basis.combine(&coeffs);

    let poly_coeffs: Vec<f64> = z.polynomial_part().iter().map(|c| c.re).collect();
    let roots = root_system(spec.p, lambda)?;
    let kernel = z.kernel_part();
    let kernel_coeffs = roots
        .roots
        .iter()
        .map(|&r| {
            let c = kernel
                .coefficients_at(C64::new(0.0, 1.0) * r)
                .and_then(|cs| cs.first().copied())
                .unwrap_or_default();
            KernelCoefficient { root_re: r.re, root_im: r.im, coeff_re: c.re, coeff_im: c.im }
        })
        .collect();

    let op = build_operator(spec, lambda)?;
    let operator = z.apply_sigma(&op).norm_sq().max(0.0).sqrt();
    let operator_scale = z.differentiate(2 * spec.n).norm_sq().sqrt();

    let (mut boundary, mut boundary_scale) = (0.0f64, 0.0f64);
    let mut g = z.clone();
    // scale: sum over basis terms of |c_i| sup|psi_i^{(j)}|, which does not vanish at eigenvalues
    let mut terms: Vec<ExpPoly> = basis.functions().cloned().collect();
    for _ in 0..spec.n {
        boundary = boundary.max(g.evaluate(1.0).norm()).max(g.evaluate(-1.0).norm());
        let s: f64 = terms.iter().zip(&coeffs).map(|(t, c)| t.bound() * c.abs()).sum();
        boundary_scale = boundary_scale.max(s);
        g = g.differentiate(1);
        terms.iter_mut().for_each(|t| *t = t.differentiate(1));
    }

    Ok(EigenPair {
        spec: *spec,
        lambda,
        index,
        z,
        basis_coeffs: coeffs,
        kernel_coeffs,
        poly_coeffs,
        residuals: Residuals {
            determinant,
            null_space_quality: quality,
            operator,
            operator_scale,
            boundary,
            boundary_scale,
        },
    })
}

/// `+1` or `-1` so that the first clearly nonzero of `<z>`, the leading polynomial
/// coefficient, `z(0)`, `z'(0)` becomes positive.
fn orientation(z: &ExpPoly, basis: &SolutionBasis) -> f64 {
    const REL: f64 = 1e-9;
    let l2 = z.norm_sq().sqrt();
    let mean = z.integrate_unit().re;
    if mean.abs() > REL * l2 {
        return mean.signum();
    }
    let poly = z.polynomial_part();
    let max_poly = poly.iter().fold(0.0f64, |m, c| m.max(c.norm()));
    if let Some(&top) = basis.monomial_degrees.last() {
        if let Some(lead) = poly.get(top) {
            if lead.norm() > REL * max_poly {
                return lead.re.signum();
            }
        }
    }
    let z0 = z.evaluate(0.0).re;
    if z0.abs() > REL * z.bound() {
        return z0.signum();
    }
    let dz = z.differentiate(1);
    let d0 = dz.evaluate(0.0).re;
    if d0.abs() > REL * dz.bound() {
        return d0.signum();
    }
    1.0
}

/// Scan plus eigenfunction extraction for the first `count` eigenvalues.
pub fn eigenpairs(spec: &ProblemSpec, count: usize) -> Result<Vec<EigenPair>> {
    let slice = scan_spectrum(spec, count, None)?;
    slice
        .eigenvalues
        .par_iter()
        .enumerate()
        .map(|(i, &l)| extract_indexed(spec, l, i))
        .collect()
}

pub const OPERATOR_RESIDUAL_TOL: f64 = 1e-8;
pub const BOUNDARY_RESIDUAL_TOL: f64 = 1e-9;
pub const NORMALIZATION_TOL: f64 = 1e-10;

/// Operator, boundary and normalization defects recomputed from `ep.z` itself, against the
/// scales recorded at extraction. Catches an eigenpair edited after extraction.
pub fn residual_reports(ep: &EigenPair) -> Vec<IdentityReport> {
    let spec = &ep.spec;
    let tag = |r: IdentityReport| {
        r.with_index("n", spec.n as i64).with_index("p", spec.p as i64).with_index("i", ep.index as i64)
    };
    let operator = match build_operator(spec, ep.lambda) {
        Ok(op) => ep.z.apply_sigma(&op).norm_sq().max(0.0).sqrt(),
        Err(e) => return vec![tag(IdentityReport::not_applicable("residual-operator", e.to_string()))],
    };
    let mut boundary = 0.0f64;
    let mut g = ep.z.clone();
    for _ in 0..spec.n {
        boundary = boundary.max(g.evaluate(1.0).norm()).max(g.evaluate(-1.0).norm());
        g = g.differentiate(1);
    }
    let norm = ep.z.differentiate(spec.n - spec.p).norm_sq();
    vec![
        tag(IdentityReport::bounded(
            "residual-operator",
            operator / ep.residuals.operator_scale.max(f64::MIN_POSITIVE),
            OPERATOR_RESIDUAL_TOL,
        )),
        tag(IdentityReport::bounded(
            "residual-boundary",
            boundary / ep.residuals.boundary_scale.max(f64::MIN_POSITIVE),
            BOUNDARY_RESIDUAL_TOL,
        )),
        tag(IdentityReport::bounded("normalization", (norm - 1.0).abs(), NORMALIZATION_TOL)),
    ]
}

/// Compares the antisymmetric spectrum of order `n` with the symmetric one of order `n+1`.
pub fn antisym_equals_next_sym(n: usize, p: usize, count: usize, tol: f64) -> Result<Vec<IdentityReport>> {
    let anti = scan_spectrum(&ProblemSpec::new(n, p, Parity::Antisymmetric)?, count, None)?;
    let sym = scan_spectrum(&ProblemSpec::new(n + 1, p, Parity::Symmetric)?, count, None)?;
    Ok(anti
        .eigenvalues
        .iter()
        .zip(&sym.eigenvalues)
        .enumerate()
        .map(|(i, (&a, &s))| {
            IdentityReport::equality("antisym-next-sym", a, s, tol)
                .with_index("n", n as i64)
                .with_index("p", p as i64)
                .with_index("i", i as i64)
                .with_note(format!("relative gap {:e}", relative_residual(a, s)))
        })
        .collect())
}
