//! Small dense kernels for the boundary matrix: a row-equilibrated LU determinant and a
//! complete-pivoting null vector.

use nalgebra::DMatrix;

/// Determinant of a row-equilibrated matrix, kept as sign and log-magnitude.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaledDeterminant {
    pub sign: f64,
    pub log_abs: f64,
    pub order: usize,
}

impl ScaledDeterminant {
    pub fn value(&self) -> f64 {
        self.sign * self.log_abs.exp()
    }

    /// Geometric mean of the pivot magnitudes, `|det|^{1/n}`.
    pub fn mean_magnitude(&self) -> f64 {
        (self.log_abs / self.order.max(1) as f64).exp()
    }
}

/// Divides each row by its max-magnitude entry. Returns the index of the first all-zero row
/// as an error.
pub fn equilibrate_rows(m: &DMatrix<f64>) -> Result<DMatrix<f64>, usize> {
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        let max = row.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if max == 0.0 || !max.is_finite() {
            return Err(i);
        }
        row /= max;
    }
    Ok(out)
}

/// LU with partial pivoting on an already equilibrated square matrix.
pub fn scaled_determinant(m: &DMatrix<f64>) -> ScaledDeterminant {
    let n = m.nrows();
    let mut a = m.clone();
    let mut sign = 1.0;
    let mut log_sum = 0.0;
    for col in 0..n {
        let (piv, max) = (col..n)
            .map(|r| (r, a[(r, col)].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if max == 0.0 {
            return ScaledDeterminant { sign: 0.0, log_abs: f64::NEG_INFINITY, order: n };
        }
        if piv != col {
            a.swap_rows(piv, col);
            sign = -sign;
        }
        let pivot = a[(col, col)];
        if pivot < 0.0 {
            sign = -sign;
        }
        log_sum += pivot.abs().ln();
        for r in col + 1..n {
            let factor = a[(r, col)] / pivot;
            if factor != 0.0 {
                for c in col + 1..n {
                    let v = a[(col, c)];
                    a[(r, c)] -= factor * v;
                }
            }
        }
    }
    ScaledDeterminant { sign, log_abs: log_sum, order: n }
}

/// Null direction of a nearly singular square matrix by complete pivoting.
#[derive(Clone, Debug)]
pub struct NullVector {
    pub vector: Vec<f64>,
    /// Pivot magnitudes in elimination order (non-increasing in practice).
    pub pivots: Vec<f64>,
}

impl NullVector {
    /// Smallest pivot over largest pivot.
    pub fn quality(&self) -> f64 {
        let first = self.pivots.first().copied().unwrap_or(0.0);
        let last = self.pivots.last().copied().unwrap_or(0.0);
        if first == 0.0 {
            0.0
        } else {
            last / first
        }
    }

    /// Second-smallest pivot over largest pivot; small values signal a second null direction.
    pub fn second_quality(&self) -> f64 {
        let n = self.pivots.len();
        if n < 2 || self.pivots[0] == 0.0 {
            return 1.0;
        }
        self.pivots[n - 2] / self.pivots[0]
    }
}

pub fn null_vector(m: &DMatrix<f64>) -> NullVector {
    let n = m.nrows();
    let mut a = m.clone();
    let mut cols: Vec<usize> = (0..n).collect();
    let mut pivots = Vec::with_capacity(n);
    for k in 0..n {
        let mut best = (k, k, -1.0);
        for r in k..n {
            for c in k..n {
                let v = a[(r, c)].abs();
                if v > best.2 {
                    best = (r, c, v);
                }
            }
        }
        let (pr, pc, pv) = best;
        pivots.push(pv);
        a.swap_rows(k, pr);
        a.swap_columns(k, pc);
        cols.swap(k, pc);
        if k + 1 == n || pv == 0.0 {
            continue;
        }
        let pivot = a[(k, k)];
        for r in k + 1..n {
            let factor = a[(r, k)] / pivot;
            for c in k..n {
                let v = a[(k, c)];
                a[(r, c)] -= factor * v;
            }
        }
    }
    // last eliminated unknown is free; back-substitute the upper triangle
    let mut y = vec![0.0; n];
    y[n - 1] = 1.0;
    for k in (0..n - 1).rev() {
        let s: f64 = (k + 1..n).map(|c| a[(k, c)] * y[c]).sum();
        y[k] = if a[(k, k)] == 0.0 { 0.0 } else { -s / a[(k, k)] };
    }
    let mut vector = vec![0.0; n];
    for (k, &c) in cols.iter().enumerate() {
        vector[c] = y[k];
    }
    NullVector { vector, pivots }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn determinant_sign_and_magnitude() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 3.0, 1.0]);
        let d = scaled_determinant(&m);
        assert_eq!(d.sign, -1.0);
        assert!((d.mean_magnitude() - 6f64.sqrt()).abs() < 1e-14);
        assert!((d.value() + 6.0).abs() < 1e-14);
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, -3.0, 0.0, 0.0, 0.0, 0.5]);
        let d = scaled_determinant(&m);
        assert!((d.value() + 3.0).abs() < 1e-14);
        assert!((d.mean_magnitude() - 3f64.cbrt()).abs() < 1e-14);
    }

    #[test]
    fn equilibration_reports_zero_rows() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 3.0, 1.0]);
        assert_eq!(equilibrate_rows(&m), Err(0));
        let m = DMatrix::from_row_slice(2, 2, &[-4.0, 2.0, 3.0, 1.0]);
        let e = equilibrate_rows(&m).unwrap();
        assert_eq!(e[(0, 0)], -1.0);
    }

    #[test]
    fn null_vector_of_rank_deficient_matrix() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let nv = null_vector(&m);
        let v = nalgebra::DVector::from_vec(nv.vector.clone());
        assert!((&m * &v).norm() < 1e-12 * v.norm());
        assert!(nv.quality() < 1e-14);
        assert!(nv.second_quality() > 1e-3);
    }
}
