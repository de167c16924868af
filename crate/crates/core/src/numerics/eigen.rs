//! Symmetric eigendecomposition by cyclic Jacobi rotations.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Entrywise asymmetry tolerated by [`sym_eigvals`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenvalues below `EIGEN_FLOOR_REL * λ₁` are treated as zero by ratio metrics.
pub const EIGEN_FLOOR_REL: f64 = 1e-12;

const MAX_SWEEPS: usize = 100;

/// Eigenvalues sorted in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    values: Vec<f64>,
}

impl Spectrum {
    pub fn from_values(mut values: Vec<f64>) -> Self {
        values.sort_by(|a, b| b.total_cmp(a));
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn largest(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn smallest(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Clamp every eigenvalue below `rel_floor * λ₁` (negative ones included) to 0.
    pub fn clamped(&self, rel_floor: f64) -> Spectrum {
        let floor = rel_floor.max(0.0) * self.largest().max(0.0);
        let values = self
            .values
            .iter()
            .map(|&v| if v < floor || v < 0.0 { 0.0 } else { v })
            .collect();
        Spectrum { values }
    }
}

/// All eigenvalues of a symmetric matrix, descending.
pub fn sym_eigvals(matrix: &Array2<f64>) -> Result<Spectrum> {
    let (values, _) = jacobi(matrix, false)?;
    Ok(Spectrum::from_values(values))
}

/// Eigenvalues (descending) and the matching unit eigenvectors as columns.
pub fn sym_eigen(matrix: &Array2<f64>) -> Result<(Spectrum, Array2<f64>)> {
    let (values, vt) = jacobi(matrix, true)?;
    let vt = vt.expect("eigenvectors requested");
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut vectors = Array2::zeros((n, n));
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[[row, col]] = vt[src * n + row];
        }
    }
    let sorted = order.iter().map(|&i| values[i]).collect();
    Ok((Spectrum { values: sorted }, vectors))
}

pub fn check_symmetric(matrix: &Array2<f64>, tol: f64) -> Result<()> {
    let (rows, cols) = matrix.dim();
    if rows != cols {
        return Err(Error::Shape(format!("expected a square matrix, got {rows}x{cols}")));
    }
    for i in 0..rows {
        for j in 0..cols {
            let v = matrix[[i, j]];
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite entry at ({i}, {j})")));
            }
            if j > i {
                let gap = (v - matrix[[j, i]]).abs();
                if gap > tol {
                    return Err(Error::SymmetryViolation { row: i, col: j, gap });
                }
            }
        }
    }
    Ok(())
}

/// Returns unsorted eigenvalues and, optionally, Vᵀ stored row-major
/// (row `k` is the eigenvector of eigenvalue `k`).
fn jacobi(matrix: &Array2<f64>, want_vectors: bool) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    check_symmetric(matrix, SYMMETRY_TOL)?;
    let n = matrix.nrows();
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = 0.5 * (matrix[[i, j]] + matrix[[j, i]]);
        }
    }
    let mut vt = want_vectors.then(|| {
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }
        v
    });

    let total: f64 = a.iter().map(|x| x * x).sum();
    if total == 0.0 {
        return Ok((vec![0.0; n], vt));
    }
    let target = (f64::EPSILON * f64::EPSILON) * total;
    let mut row_p = vec![0.0; n];
    let mut row_q = vec![0.0; n];

    for sweep in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        if off <= target {
            break;
        }
        if sweep == MAX_SWEEPS - 1 {
            log::warn!("jacobi: no convergence after {MAX_SWEEPS} sweeps (off-diagonal mass {off:e})");
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                // Negligible next to both diagonals: drop it outright.
                if sweep > 3 && (app.abs() + 100.0 * apq.abs() == app.abs()) && (aqq.abs() + 100.0 * apq.abs() == aqq.abs())
                {
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                row_p.copy_from_slice(&a[p * n..(p + 1) * n]);
                row_q.copy_from_slice(&a[q * n..(q + 1) * n]);
                for k in 0..n {
                    let (ap, aq) = (row_p[k], row_q[k]);
                    a[p * n + k] = c * ap - s * aq;
                    a[q * n + k] = s * ap + c * aq;
                }
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    if k != p && k != q {
                        a[k * n + p] = a[p * n + k];
                        a[k * n + q] = a[q * n + k];
                    }
                }
                if let Some(v) = vt.as_mut() {
                    for k in 0..n {
                        let (vp, vq) = (v[p * n + k], v[q * n + k]);
                        v[p * n + k] = c * vp - s * vq;
                        v[q * n + k] = s * vp + c * vq;
                    }
                }
            }
        }
    }
    let values = (0..n).map(|i| a[i * n + i]).collect();
    Ok((values, vt))
}
