//! Ritz-Galerkin oracle on the polynomial trial space `(1 - x^2)^n x^{2k}` (or `x^{2k+1}`).
//!
//! Gram matrices are assembled in exact rational arithmetic. The generalized problem
//! `A v = Lambda B v` is reduced exactly through the `LDL^T` factorization of `A`
//! (`G = L^{-1} B L^{-T}`), so the only floating-point step is one symmetric eigensolve of
//! `D^{-1/2} G D^{-1/2}`, whose eigenvalues are `1 / Lambda`. Positive definiteness of `B` is
//! certified by its own exact `LDL^T`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exppoly::ExpPoly;
use crate::operator::{Parity, ProblemSpec};
use crate::report::num;

/// Largest accepted basis size. Beyond this the reduced matrix loses all precision in
/// `f64` even though the rational assembly itself would still be exact.
pub const MAX_BASIS: usize = 40;

type Poly = Vec<BigInt>;

#[derive(Clone, Debug)]
pub struct RitzSystem {
    pub spec: ProblemSpec,
    pub k: usize,
    /// `<phi_k^{(n)} phi_l^{(n)}>`
    pub a_exact: Vec<Vec<BigRational>>,
    /// `<phi_k^{(n-p)} phi_l^{(n-p)}>`
    pub b_exact: Vec<Vec<BigRational>>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

/// A Ritz value and its vector in the trial basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RitzPair {
    #[serde(with = "num")]
    pub value: f64,
    #[serde(with = "num::vec")]
    pub coeffs: Vec<f64>,
}

/// Integer coefficients (ascending powers) of the `k`-th trial function.
fn trial_polynomial(spec: &ProblemSpec, k: usize) -> Poly {
    let shift = 2 * k + usize::from(spec.parity == Parity::Antisymmetric);
    let mut out = vec![BigInt::zero(); 2 * spec.n + shift + 1];
    let mut binom = BigInt::one();
    for j in 0..=spec.n {
        let c = if j % 2 == 0 { binom.clone() } else { -binom.clone() };
        out[2 * j + shift] = c;
        binom = binom * BigInt::from(spec.n - j) / BigInt::from(j + 1);
    }
    out
}

fn derivative(p: &Poly, r: usize) -> Poly {
    if r >= p.len() {
        return Vec::new();
    }
    (r..p.len())
        .map(|m| {
            let falling: BigInt = (m - r + 1..=m).map(BigInt::from).product();
            &p[m] * falling
        })
        .collect()
}

/// `int_{-1}^{1} f g dx` for integer polynomials.
fn gram_entry(f: &Poly, g: &Poly) -> BigRational {
    let mut acc = BigRational::zero();
    for (i, fi) in f.iter().enumerate() {
        if fi.is_zero() {
            continue;
        }
        for (j, gj) in g.iter().enumerate() {
            if (i + j) % 2 == 1 || gj.is_zero() {
                continue;
            }
            acc += BigRational::new(fi * gj * 2, BigInt::from(i + j + 1));
        }
    }
    acc
}

fn gram(polys: &[Poly]) -> Vec<Vec<BigRational>> {
    let k = polys.len();
    let upper: Vec<Vec<BigRational>> = (0..k)
        .into_par_iter()
        .map(|i| (i..k).map(|j| gram_entry(&polys[i], &polys[j])).collect())
        .collect();
    let mut out = vec![vec![BigRational::zero(); k]; k];
    for i in 0..k {
        for j in i..k {
            out[i][j] = upper[i][j - i].clone();
            out[j][i] = upper[i][j - i].clone();
        }
    }
    out
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn to_dmatrix(m: &[Vec<BigRational>]) -> DMatrix<f64> {
    let k = m.len();
    DMatrix::from_fn(k, k, |i, j| to_f64(&m[i][j]))
}

pub fn assemble(spec: &ProblemSpec, k: usize) -> Result<RitzSystem> {
    if k == 0 {
        return Err(Error::Config("Ritz basis size must be >= 1".into()));
    }
    if k > MAX_BASIS {
        return Err(Error::Ritz(format!("basis size {k} exceeds the supported maximum {MAX_BASIS}")));
    }
    let basis: Vec<Poly> = (0..k).map(|i| trial_polynomial(spec, i)).collect();
    let da: Vec<Poly> = basis.iter().map(|p| derivative(p, spec.n)).collect();
    let db: Vec<Poly> = basis.iter().map(|p| derivative(p, spec.n - spec.p)).collect();
    let a_exact = gram(&da);
    let b_exact = gram(&db);
    Ok(RitzSystem { spec: *spec, k, a: to_dmatrix(&a_exact), b: to_dmatrix(&b_exact), a_exact, b_exact })
}

/// Exact `M = L D L^T`; fails at the first non-positive pivot.
fn ldlt(m: &[Vec<BigRational>]) -> std::result::Result<(Vec<Vec<BigRational>>, Vec<BigRational>), usize> {
    let k = m.len();
    let mut l = vec![vec![BigRational::zero(); k]; k];
    let mut d = vec![BigRational::zero(); k];
    for j in 0..k {
        let mut dj = m[j][j].clone();
        for s in 0..j {
            dj -= &l[j][s] * &l[j][s] * &d[s];
        }
        if !dj.is_positive() {
            return Err(j);
        }
        l[j][j] = BigRational::one();
        for i in j + 1..k {
            let mut v = m[i][j].clone();
            for s in 0..j {
                v -= &l[i][s] * &l[j][s] * &d[s];
            }
            l[i][j] = v / &dj;
        }
        d[j] = dj;
    }
    Ok((l, d))
}

/// `L^{-1} X` for unit lower-triangular `L`.
fn forward_solve(l: &[Vec<BigRational>], x: &[Vec<BigRational>]) -> Vec<Vec<BigRational>> {
    let k = l.len();
    let cols = x[0].len();
    let mut y = x.to_vec();
    for c in 0..cols {
        for i in 0..k {
            let mut v = y[i][c].clone();
            for s in 0..i {
                v -= &l[i][s] * &y[s][c];
            }
            y[i][c] = v;
        }
    }
    y
}

fn transpose(m: &[Vec<BigRational>]) -> Vec<Vec<BigRational>> {
    let k = m.len();
    (0..m[0].len()).map(|j| (0..k).map(|i| m[i][j].clone()).collect()).collect()
}

/// Smallest `count` Ritz values with their trial-basis vectors.
pub fn ritz_pairs(system: &RitzSystem, count: usize) -> Result<Vec<RitzPair>> {
    let k = system.k;
    if count == 0 || count > k {
        return Err(Error::Config(format!("need 1 <= count <= K, got count={count}, K={k}")));
    }
    ldlt(&system.b_exact)
        .map_err(|j| Error::Ritz(format!("B is not positive definite (pivot {j}); lower K")))?;
    let (l, d) = ldlt(&system.a_exact)
        .map_err(|j| Error::Ritz(format!("A is not positive definite (pivot {j}); lower K")))?;
    let x = forward_solve(&l, &system.b_exact);
    let g = forward_solve(&l, &transpose(&x));

    // H = D^{-1/2} G D^{-1/2}, each entry formed as a signed square root of an exact ratio
    let h = DMatrix::from_fn(k, k, |i, j| {
        let gij = &g[i][j];
        if gij.is_zero() {
            return 0.0;
        }
        let ratio = gij * gij / (&d[i] * &d[j]);
        to_f64(&ratio).sqrt() * if gij.is_negative() { -1.0 } else { 1.0 }
    });
    let h = (&h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let l_f: Vec<Vec<f64>> = l.iter().map(|row| row.iter().map(to_f64).collect()).collect();
    let d_f: Vec<f64> = d.iter().map(to_f64).collect();
    order
        .into_iter()
        .take(count)
        .map(|idx| {
            let mu = eig.eigenvalues[idx];
            if !(mu > 0.0) {
                return Err(Error::Ritz(format!("non-positive reduced eigenvalue {mu:e}")));
            }
            // v = L^{-T} D^{-1/2} w
            let w = eig.eigenvectors.column(idx);
            let mut v: Vec<f64> = (0..k).map(|i| w[i] / d_f[i].sqrt()).collect();
            for i in (0..k).rev() {
                let s: f64 = (i + 1..k).map(|r| l_f[r][i] * v[r]).sum();
                v[i] -= s;
            }
            Ok(RitzPair { value: 1.0 / mu, coeffs: v })
        })
        .collect()
}

/// The `count` smallest Ritz values, ascending. Each bounds the matching eigenvalue from above.
pub fn ritz_values(system: &RitzSystem, count: usize) -> Result<Vec<f64>> {
    Ok(ritz_pairs(system, count)?.into_iter().map(|p| p.value).collect())
}

/// `sum_k v_k phi_k` as an exponential polynomial.
pub fn trial_function(spec: &ProblemSpec, coeffs: &[f64]) -> ExpPoly {
    let mut acc: Vec<f64> = Vec::new();
    for (k, &c) in coeffs.iter().enumerate() {
        let p = trial_polynomial(spec, k);
        if acc.len() < p.len() {
            acc.resize(p.len(), 0.0);
        }
        for (slot, v) in acc.iter_mut().zip(&p) {
            *slot += c * v.to_f64().unwrap_or(f64::NAN);
        }
    }
    ExpPoly::real_polynomial(&acc)
}

/// `Phi(u) = <u^{(n)} u^{(n)}> / <u^{(n-p)} u^{(n-p)}>`.
pub fn rayleigh_quotient(spec: &ProblemSpec, u: &ExpPoly) -> f64 {
    u.differentiate(spec.n).norm_sq() / u.differentiate(spec.n - spec.p).norm_sq()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const TAN_TANH_LAMBDA: f64 = 31.28524385877704;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn single_function_by_hand() {
        let s = assemble(&ProblemSpec::symmetric(1, 1).unwrap(), 1).unwrap();
        assert_eq!(s.a_exact[0][0], rat(8, 3));
        assert_eq!(s.b_exact[0][0], rat(16, 15));
        let v = ritz_values(&s, 1).unwrap();
        assert!((v[0] - 2.5).abs() < 1e-15);
    }

    #[test]
    fn gram_matrices_are_exactly_symmetric() {
        for spec in [ProblemSpec::symmetric(3, 2).unwrap(), ProblemSpec::antisymmetric(2, 1).unwrap()] {
            let s = assemble(&spec, 6).unwrap();
            for i in 0..6 {
                for j in 0..6 {
                    assert_eq!(s.a_exact[i][j], s.a_exact[j][i]);
                    assert_eq!(s.b_exact[i][j], s.b_exact[j][i]);
                }
            }
        }
    }

    #[test]
    fn converges_to_closed_forms() {
        let v = ritz_values(&assemble(&ProblemSpec::symmetric(2, 1).unwrap(), 8).unwrap(), 1).unwrap();
        assert!(v[0] - PI * PI <= 1e-8 && v[0] >= PI * PI * (1.0 - 1e-12), "{}", v[0]);
        let v = ritz_values(&assemble(&ProblemSpec::symmetric(2, 2).unwrap(), 12).unwrap(), 1).unwrap();
        assert!((v[0] - TAN_TANH_LAMBDA).abs() <= 1e-6, "{}", v[0]);
    }

    #[test]
    fn monotone_in_basis_size() {
        for spec in [ProblemSpec::symmetric(1, 1).unwrap(), ProblemSpec::symmetric(2, 2).unwrap()] {
            let mut prev = vec![f64::INFINITY; 2];
            for k in 2..=20 {
                let v = ritz_values(&assemble(&spec, k).unwrap(), 2).unwrap();
                for (a, b) in v.iter().zip(&prev) {
                    assert!(*a <= b * (1.0 + 1e-12), "{spec} K={k}: {a} > {b}");
                }
                prev = v;
            }
        }
    }

    #[test]
    fn rayleigh_quotient_of_ritz_vector() {
        for spec in [ProblemSpec::symmetric(3, 1).unwrap(), ProblemSpec::antisymmetric(2, 2).unwrap()] {
            let s = assemble(&spec, 6).unwrap();
            for pair in ritz_pairs(&s, 2).unwrap() {
                let phi = rayleigh_quotient(&spec, &trial_function(&spec, &pair.coeffs));
                assert!((phi - pair.value).abs() <= 1e-10 * pair.value, "{phi} vs {}", pair.value);
            }
        }
    }

    #[test]
    fn rejects_bad_sizes() {
        let spec = ProblemSpec::symmetric(1, 1).unwrap();
        assert!(assemble(&spec, 0).is_err());
        assert!(assemble(&spec, MAX_BASIS + 1).is_err());
        assert!(ritz_values(&assemble(&spec, 2).unwrap(), 3).is_err());
    }
}
