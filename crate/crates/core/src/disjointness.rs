//! Gaps between symmetric spectra of different orders, and the necessary conditions a true
//! coincidence `Lambda_n = Lambda_m` would have to satisfy.
//!
//! The conditions are evaluated at near-collisions only, at the midpoint `Lambda`; the module
//! never asserts a collision, it reports evidence.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigensolver::{extract_indexed, scan_spectrum, EigenPair};
use crate::error::{Error, Result};
use crate::invariants::{bracket, moments, stone_polynomials};
use crate::operator::ProblemSpec;
use crate::report::num;

pub const DEFAULT_COLLISION_TOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionCandidate {
    pub p: usize,
    pub n: usize,
    pub i: usize,
    #[serde(with = "num")]
    pub lambda_i: f64,
    pub m: usize,
    pub j: usize,
    #[serde(with = "num")]
    pub lambda_j: f64,
    #[serde(with = "num")]
    pub gap: f64,
    pub delta: usize,
    pub q: usize,
    pub delta_rem: usize,
}

impl CollisionCandidate {
    fn new(p: usize, n: usize, i: usize, li: f64, m: usize, j: usize, lj: f64) -> Self {
        let delta = m - n;
        CollisionCandidate {
            p,
            n,
            i,
            lambda_i: li,
            m,
            j,
            lambda_j: lj,
            gap: relative_gap(li, lj),
            delta,
            q: delta / 2,
            delta_rem: delta % 2,
        }
    }
}

pub fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapTable {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    #[serde(with = "num::vec")]
    pub spectrum_n: Vec<f64>,
    #[serde(with = "num::vec")]
    pub spectrum_m: Vec<f64>,
    /// `gaps[i][j]` compares eigenvalue `i` of order `n` with eigenvalue `j` of order `m`.
    pub gaps: Vec<Vec<f64>>,
    #[serde(with = "num")]
    pub min_gap: f64,
    pub min_at: (usize, usize),
    pub candidates: Vec<CollisionCandidate>,
}

fn validate_orders(n: usize, m: usize, p: usize) -> Result<()> {
    if p == 0 || n < p || m <= n {
        return Err(Error::Config(format!("need m > n >= p >= 1, got n={n}, m={m}, p={p}")));
    }
    Ok(())
}

/// Gap table between two already computed symmetric spectra.
pub fn gap_table(n: usize, m: usize, p: usize, sn: &[f64], sm: &[f64], collision_tol: f64) -> GapTable {
    let gaps: Vec<Vec<f64>> = sn.iter().map(|&a| sm.iter().map(|&b| relative_gap(a, b)).collect()).collect();
    let mut min_gap = f64::INFINITY;
    let mut min_at = (0, 0);
    let mut candidates = Vec::new();
    for (i, row) in gaps.iter().enumerate() {
        for (j, &g) in row.iter().enumerate() {
            if g < min_gap {
                min_gap = g;
                min_at = (i, j);
            }
            if g <= collision_tol {
                candidates.push(CollisionCandidate::new(p, n, i, sn[i], m, j, sm[j]));
            }
        }
    }
    GapTable { n, m, p, spectrum_n: sn.to_vec(), spectrum_m: sm.to_vec(), gaps, min_gap, min_at, candidates }
}

pub fn compare_spectra(n: usize, m: usize, p: usize, count: usize, collision_tol: f64) -> Result<GapTable> {
    validate_orders(n, m, p)?;
    let (sn, sm) = rayon::join(
        || scan_spectrum(&ProblemSpec::symmetric(n, p)?, count, None),
        || scan_spectrum(&ProblemSpec::symmetric(m, p)?, count, None),
    );
    Ok(gap_table(n, m, p, &sn?.eigenvalues, &sm?.eigenvalues, collision_tol))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionStatus {
    Holds,
    Violated,
    Indeterminate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionVerdict {
    Consistent,
    Violated,
    Indeterminate,
}

/// One evaluated condition: `lhs > rhs` for inequalities, `lhs = rhs` for equalities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionValue {
    pub id: String,
    pub indices: Vec<(String, i64)>,
    #[serde(with = "num")]
    pub lhs: f64,
    #[serde(with = "num")]
    pub rhs: f64,
    /// `(lhs - rhs) / (|lhs| + |rhs|)`
    #[serde(with = "num")]
    pub relative: f64,
    pub status: ConditionStatus,
}

/// Tolerance band derived from how far the pair is from an exact coincidence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    /// Residuals up to this size count as satisfied.
    #[serde(with = "num")]
    pub holds: f64,
    /// Residuals beyond this size count as violated.
    #[serde(with = "num")]
    pub violated: f64,
}

impl Band {
    pub fn for_gap(gap: f64) -> Band {
        Band { holds: (10.0 * gap).max(1e-9), violated: (1e3 * gap).max(1e-3) }
    }
}

fn relative(lhs: f64, rhs: f64) -> f64 {
    let s = lhs.abs() + rhs.abs();
    if s == 0.0 {
        0.0
    } else {
        (lhs - rhs) / s
    }
}

fn inequality(id: &str, indices: &[(&str, i64)], lhs: f64, rhs: f64, band: Band) -> ConditionValue {
    let rel = relative(lhs, rhs);
    let status = if rel > band.holds {
        ConditionStatus::Holds
    } else if rel < -band.violated || !rel.is_finite() {
        ConditionStatus::Violated
    } else {
        ConditionStatus::Indeterminate
    };
    value(id, indices, lhs, rhs, rel, status)
}

fn equality(id: &str, indices: &[(&str, i64)], lhs: f64, rhs: f64, band: Band) -> ConditionValue {
    let rel = relative(lhs, rhs);
    let status = if rel.abs() <= band.holds {
        ConditionStatus::Holds
    } else if rel.abs() > band.violated || !rel.is_finite() {
        ConditionStatus::Violated
    } else {
        ConditionStatus::Indeterminate
    };
    value(id, indices, lhs, rhs, rel, status)
}

fn value(id: &str, indices: &[(&str, i64)], lhs: f64, rhs: f64, relative: f64, status: ConditionStatus) -> ConditionValue {
    ConditionValue {
        id: id.to_string(),
        indices: indices.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        lhs,
        rhs,
        relative,
        status,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NecessaryConditionReport {
    pub candidate: CollisionCandidate,
    /// Midpoint `Lambda` at which `eps` is taken.
    #[serde(with = "num")]
    pub lambda_mid: f64,
    #[serde(with = "num")]
    pub eps: f64,
    /// `eps` at the two endpoint eigenvalues, for reference.
    #[serde(with = "num")]
    pub eps_n: f64,
    #[serde(with = "num")]
    pub eps_m: f64,
    pub band: Band,
    #[serde(with = "num::vec")]
    pub alpha: Vec<f64>,
    #[serde(with = "num::vec")]
    pub beta: Vec<f64>,
    pub eq21: Vec<ConditionValue>,
    pub eq23: Vec<ConditionValue>,
    pub eq24: Vec<ConditionValue>,
    pub eq26: Vec<ConditionValue>,
    pub eq27: Vec<ConditionValue>,
    pub verdict: ConditionVerdict,
    pub notes: Vec<String>,
}

impl NecessaryConditionReport {
    pub fn conditions(&self) -> impl Iterator<Item = &ConditionValue> {
        self.eq21.iter().chain(&self.eq23).chain(&self.eq24).chain(&self.eq26).chain(&self.eq27)
    }
}

/// `alpha_0 = a_0`, `alpha_i = a_i + eps a_{i-1}`.
pub fn shifted(a: &[f64], eps: f64) -> Vec<f64> {
    (0..a.len()).map(|i| if i == 0 { a[0] } else { a[i] + eps * a[i - 1] }).collect()
}

/// `t^j` coefficient of `f(t) g(t)` where the inputs are already coefficient sequences.
fn product_coefficient(f: &[f64], g: &[f64], j: usize) -> f64 {
    (0..=j).map(|l| f.get(l).copied().unwrap_or(0.0) * g.get(j - l).copied().unwrap_or(0.0)).sum()
}

fn brackets_upto(f: &[f64], g: &[f64], top: usize) -> Result<Vec<f64>> {
    (0..=top as i64).map(|k| bracket(f, g, k)).collect()
}

/// Conditions for a hypothetical coincidence of `zn` (order n) and `zm` (order m > n).
/// Requires the pair to be within `collision_tol`.
pub fn evaluate_necessary_conditions(zn: &EigenPair, zm: &EigenPair, collision_tol: f64) -> Result<NecessaryConditionReport> {
    let gap = relative_gap(zn.lambda, zm.lambda);
    if gap > collision_tol {
        return Err(Error::NotApplicable(format!("relative gap {gap:e} exceeds the collision tolerance {collision_tol:e}")));
    }
    necessary_conditions_at(zn, zm, 0.5 * (zn.lambda + zm.lambda), Band::for_gap(gap))
}

/// Same conditions evaluated at an explicitly chosen common `Lambda` and tolerance band,
/// without the proximity precondition. `Band::for_gap(0.0)` treats the pair as an exact
/// coincidence; values are diagnostic only when the pair is not a near-collision.
pub fn necessary_conditions_at(
    zn: &EigenPair,
    zm: &EigenPair,
    lambda_mid: f64,
    band: Band,
) -> Result<NecessaryConditionReport> {
    let (n, m, p) = (zn.spec.n, zm.spec.n, zn.spec.p);
    if zm.spec.p != p || m <= n {
        return Err(Error::NotApplicable(format!("need the same p and m > n, got n={n}, m={m}")));
    }
    if n <= p {
        return Err(Error::NotApplicable(format!("n = p = {p}: no stones for the lower order")));
    }
    let candidate = CollisionCandidate::new(p, n, zn.index, zn.lambda, m, zm.index, zm.lambda);
    let (q, dl) = (candidate.q as i64, candidate.delta_rem as i64);
    let (ni, mi, pi) = (n as i64, m as i64, p as i64);
    let pf = p as f64;
    let eps = lambda_mid.powf(-1.0 / pf);

    let c = stone_polynomials(zn, n - p - 1)?.coeffs;
    let d = stone_polynomials(zm, m - p - 1)?.coeffs;
    let km = 2 * (m - p) + 2;
    let a = moments(&zn.z, km);
    let b = moments(&zm.z, km);
    let alpha = shifted(&a, eps);
    let beta = shifted(&b, eps);

    // coefficient sequences of the products alpha(t)c(t) etc.
    let top = km - 1;
    let ac = brackets_upto(&alpha, &c.iter().copied().chain(std::iter::repeat(0.0)).take(km + 1).collect::<Vec<_>>(), top)?;
    let pad = |v: &[f64]| -> Vec<f64> { v.iter().copied().chain(std::iter::repeat(0.0)).take(km + 1).collect() };
    let (cp, dp) = (pad(&c), pad(&d));
    let bd = brackets_upto(&beta, &dp, top)?;
    let ad_alpha = brackets_upto(&alpha, &dp, top)?;
    let bc_beta = brackets_upto(&beta, &cp, top)?;
    let at = |v: &[f64], k: i64| if k < 0 { 0.0 } else { v[k as usize] };

    let mut eq21 = Vec::new();
    let mut eq23 = Vec::new();
    let mut eq26 = Vec::new();
    for k in 0..=ni - pi - 1 + q {
        for l in 0..=ni - pi - 1 {
            let s = 2 * k - l;
            if s < -dl || s > ni - pi - 1 + 2 * q {
                continue;
            }
            let lhs = at(&ac, l) * at(&bd, s + dl);
            let rhs = at(&ad_alpha, k + q + dl) * at(&bc_beta, k - q);
            eq21.push(inequality("eq21", &[("k", k), ("l", l)], lhs, rhs, band));
        }
        eq23.push(equality("eq23", &[("k", k)], at(&ad_alpha, k + q + dl), at(&bc_beta, k - q), band));
        let j = (2 * k + dl) as usize;
        let lhs = product_coefficient(&ac, &bd, j);
        let rhs = (2 * k + dl) as f64 * at(&bc_beta, k - q).powi(2);
        eq26.push(inequality("eq26", &[("k", k)], lhs, rhs, band));
    }

    let mut eq24 = Vec::new();
    for k in 0..=ni - pi - 1 {
        eq24.push(inequality("eq24", &[("k", k), ("side", 0)], 0.0, at(&ac, k), band));
    }
    for k in 0..=mi - pi - 1 {
        eq24.push(inequality("eq24", &[("k", k), ("side", 1)], 0.0, at(&bd, k), band));
    }

    let a_d = brackets_upto(&a, &dp, top)?;
    let b_c = brackets_upto(&b, &cp, top)?;
    let mut eq27 = Vec::new();
    for j in (q + dl - 1).max(0)..=mi - pi - 1 {
        let shifted = j - (m - n) as i64;
        eq27.push(equality("eq27", &[("j", j)], at(&a_d, j), at(&b_c, shifted), band));
    }

    let all = eq21.iter().chain(&eq23).chain(&eq24).chain(&eq26).chain(&eq27);
    let mut verdict = ConditionVerdict::Consistent;
    for cv in all {
        match cv.status {
            ConditionStatus::Violated => {
                verdict = ConditionVerdict::Violated;
                break;
            }
            ConditionStatus::Indeterminate => verdict = ConditionVerdict::Indeterminate,
            ConditionStatus::Holds => {}
        }
    }
    let mut notes = vec!["eq21 ranges as printed; its stated wider applicability than eq26 is not enumerated".to_string()];
    if candidate.delta <= 2 {
        notes.push(format!(
            "delta <= 2: the j = 0 relation forces a_0 d_0 = 0 while (ac)_0 (bd)_0 = {:e}",
            a[0] * c[0] * b[0] * d[0]
        ));
    }
    Ok(NecessaryConditionReport {
        candidate,
        lambda_mid,
        eps,
        eps_n: zn.lambda.powf(-1.0 / pf),
        eps_m: zm.lambda.powf(-1.0 / pf),
        band,
        alpha,
        beta,
        eq21,
        eq23,
        eq24,
        eq26,
        eq27,
        verdict,
        notes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub n: usize,
    pub m: usize,
    #[serde(with = "num::opt")]
    pub min_gap: Option<f64>,
    pub min_at: Option<(usize, usize)>,
    pub candidates: usize,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub p: usize,
    pub n_max: usize,
    pub count: usize,
    #[serde(with = "num")]
    pub collision_tol: f64,
    pub pairs: Vec<PairSummary>,
    #[serde(with = "num::opt")]
    pub global_min_gap: Option<f64>,
    pub candidates: Vec<CollisionCandidate>,
    pub reports: Vec<NecessaryConditionReport>,
    /// Some pair or candidate evaluation failed; the summary covers the rest.
    pub partial: bool,
    pub notes: Vec<String>,
}

/// Compares all symmetric spectra `p <= n < m <= n_max` and evaluates every candidate.
pub fn sweep_conjecture(p: usize, n_max: usize, count: usize, collision_tol: f64) -> Result<SweepSummary> {
    if n_max < 2 || p == 0 || count == 0 {
        return Err(Error::Config(format!("need n_max >= 2, p >= 1, count >= 1, got {n_max}, {p}, {count}")));
    }
    let orders: Vec<usize> = (p..=n_max).collect();
    let spectra: Vec<Result<Vec<f64>>> = orders
        .par_iter()
        .map(|&n| Ok(scan_spectrum(&ProblemSpec::symmetric(n, p)?, count, None)?.eigenvalues))
        .collect();
    let mut notes = Vec::new();
    if orders.len() < 2 {
        notes.push(format!("no pairs with {p} <= n < m <= {n_max}"));
    }
    let mut pairs = Vec::new();
    let mut tables = Vec::new();
    let mut partial = false;
    for (a, &n) in orders.iter().enumerate() {
        for (b, &m) in orders.iter().enumerate().skip(a + 1) {
            match (&spectra[a], &spectra[b]) {
                (Ok(sn), Ok(sm)) => {
                    let t = gap_table(n, m, p, sn, sm, collision_tol);
                    pairs.push(PairSummary {
                        n,
                        m,
                        min_gap: Some(t.min_gap),
                        min_at: Some(t.min_at),
                        candidates: t.candidates.len(),
                        failure: None,
                    });
                    tables.push(t);
                }
                (x, y) => {
                    partial = true;
                    let msg = [x.as_ref().err(), y.as_ref().err()].into_iter().flatten().map(|e| e.to_string()).collect::<Vec<_>>().join("; ");
                    pairs.push(PairSummary { n, m, min_gap: None, min_at: None, candidates: 0, failure: Some(msg) });
                }
            }
        }
    }
    let candidates: Vec<CollisionCandidate> = tables.iter().flat_map(|t| t.candidates.clone()).collect();
    let evaluated: Vec<std::result::Result<NecessaryConditionReport, String>> = candidates
        .par_iter()
        .map(|c| {
            let zn = extract_indexed(&ProblemSpec::symmetric(c.n, p).map_err(|e| e.to_string())?, c.lambda_i, c.i);
            let zm = extract_indexed(&ProblemSpec::symmetric(c.m, p).map_err(|e| e.to_string())?, c.lambda_j, c.j);
            match (zn, zm) {
                (Ok(zn), Ok(zm)) => evaluate_necessary_conditions(&zn, &zm, collision_tol).map_err(|e| e.to_string()),
                (Err(e), _) | (_, Err(e)) => Err(e.to_string()),
            }
        })
        .collect();
    let mut reports = Vec::new();
    for (c, r) in candidates.iter().zip(evaluated) {
        match r {
            Ok(r) => reports.push(r),
            Err(e) => {
                partial = true;
                notes.push(format!("candidate (n={}, i={}) vs (m={}, j={}): {e}", c.n, c.i, c.m, c.j));
            }
        }
    }
    let global_min_gap = pairs.iter().filter_map(|s| s.min_gap).reduce(f64::min);
    Ok(SweepSummary { p, n_max, count, collision_tol, pairs, global_min_gap, candidates, reports, partial, notes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigensolver::eigenpairs;
    use std::f64::consts::PI;

    #[test]
    fn closed_form_gap_tables() {
        let t = compare_spectra(1, 2, 1, 3, DEFAULT_COLLISION_TOL).unwrap();
        let sn: Vec<f64> = (0..3).map(|k| ((k as f64 + 0.5) * PI).powi(2)).collect();
        let sm: Vec<f64> = (1..=3).map(|k| (k as f64 * PI).powi(2)).collect();
        let expected = gap_table(1, 2, 1, &sn, &sm, DEFAULT_COLLISION_TOL);
        assert!((t.min_gap - expected.min_gap).abs() < 1e-10);
        assert!((t.min_gap - (1.0 - 6.25 / 9.0)).abs() < 1e-10);
        assert_eq!(t.min_at, (2, 2));
        assert!((t.gaps[1][0] - (1.0 - 1.0 / 2.25)).abs() < 1e-10);
        assert!(t.candidates.is_empty());

        let t = compare_spectra(2, 3, 1, 2, DEFAULT_COLLISION_TOL).unwrap();
        let tan_roots = [4.493409457909064f64, 7.725251836937707];
        let sm: Vec<f64> = tan_roots.iter().map(|l| l * l).collect();
        let expected = gap_table(2, 3, 1, &[PI * PI, 4.0 * PI * PI], &sm, DEFAULT_COLLISION_TOL);
        assert!((t.min_gap - expected.min_gap).abs() < 1e-9, "{} vs {}", t.min_gap, expected.min_gap);
        assert!(t.candidates.is_empty());
        assert!(compare_spectra(2, 2, 1, 2, 1e-4).is_err());
    }

    #[test]
    fn low_delta_coincidence_is_contradicted() {
        for (n, m) in [(2, 3), (2, 4)] {
            let zn = eigenpairs(&ProblemSpec::symmetric(n, 1).unwrap(), 1).unwrap().remove(0);
            let zm = eigenpairs(&ProblemSpec::symmetric(m, 1).unwrap(), 1).unwrap().remove(0);
            // the j = 0 relation a_0 d_0 = 0 does not involve Lambda and must fail
            let r = necessary_conditions_at(&zn, &zm, 0.5 * (zn.lambda + zm.lambda), Band::for_gap(0.0)).unwrap();
            assert_eq!(r.verdict, ConditionVerdict::Violated, "{n},{m}");
            let first = &r.eq27[0];
            assert_eq!(first.indices[0], ("j".to_string(), 0));
            assert_eq!(first.status, ConditionStatus::Violated);
        }
    }

    #[test]
    fn perturbed_pair_report_is_finite() {
        let zn = eigenpairs(&ProblemSpec::symmetric(3, 1).unwrap(), 1).unwrap().remove(0);
        let zm = eigenpairs(&ProblemSpec::symmetric(6, 1).unwrap(), 1).unwrap().remove(0);
        let r = necessary_conditions_at(&zn, &zm, zn.lambda * (1.0 + 1e-6), Band::for_gap(1e-6)).unwrap();
        assert!(!r.eq21.is_empty() && !r.eq27.is_empty());
        assert!(r.conditions().all(|c| c.lhs.is_finite() && c.rhs.is_finite()));
        assert!(r.alpha.iter().chain(&r.beta).all(|v| v.is_finite()));
        assert!(evaluate_necessary_conditions(&zn, &zm, 1e-4).is_err());
    }

    #[test]
    fn sweep_is_deterministic_and_clean() {
        let a = sweep_conjecture(1, 4, 5, DEFAULT_COLLISION_TOL).unwrap();
        let b = sweep_conjecture(1, 4, 5, DEFAULT_COLLISION_TOL).unwrap();
        assert_eq!(a, b);
        assert!(a.candidates.is_empty() && !a.partial);
        assert_eq!(a.pairs.len(), 6);
        let edge = sweep_conjecture(2, 2, 3, DEFAULT_COLLISION_TOL).unwrap();
        assert!(edge.pairs.is_empty() && edge.global_min_gap.is_none());
    }
}
