//! Dense symmetric eigenproblems by cyclic Jacobi rotations, plus the two
//! quantities built on them: singular values and PSD square roots.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor2;

pub const MAX_SWEEPS: usize = 100;
pub const OFF_DIAGONAL_TOL: f64 = 1e-12;
pub const PSD_TOL: f64 = 1e-10;

/// Square symmetric matrix, stored densely.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Accepts a square tensor that is symmetric up to `1e-12` (relative to its
    /// largest entry) and stores the exactly symmetrized average.
    pub fn new(a: &Tensor2) -> Result<Self> {
        let (rows, cols) = a.shape();
        if rows != cols || rows == 0 {
            return Err(Error::Shape(format!("expected a non-empty square matrix, got {rows}x{cols}")));
        }
        if !a.is_finite() {
            return Err(Error::Numeric("matrix has non-finite entries".into()));
        }
        let scale = a.data().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut data = a.data().to_vec();
        for i in 0..rows {
            for j in i + 1..rows {
                let (x, y) = (a.get(i, j), a.get(j, i));
                if (x - y).abs() > 1e-12 * scale {
                    return Err(Error::Argument(format!(
                        "matrix is not symmetric at ({i}, {j}): {x} vs {y}"
                    )));
                }
                let avg = 0.5 * (x + y);
                data[i * rows + j] = avg;
                data[j * rows + i] = avg;
            }
        }
        Ok(Self { dim: rows, data })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            data: Tensor2::identity(dim).into_vec(),
        }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let dim = values.len();
        let mut data = vec![0.0; dim * dim];
        for (i, v) in values.iter().enumerate() {
            data[i * dim + i] = *v;
        }
        Self { dim, data }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn to_tensor(&self) -> Tensor2 {
        Tensor2::from_vec(self.dim, self.dim, self.data.clone()).expect("finite by construction")
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `self + alpha * I`
    pub fn add_ridge(&mut self, alpha: f64) {
        for i in 0..self.dim {
            self.data[i * self.dim + i] += alpha;
        }
    }

    /// `Qᵀ · self · Q` for a square `q`.
    pub fn congruence(&self, q: &Tensor2) -> Result<Self> {
        let m = self.to_tensor();
        let prod = q.transpose().matmul(&m)?.matmul(q)?;
        Ok(Self::symmetrized(prod))
    }

    fn symmetrized(t: Tensor2) -> Self {
        let n = t.rows();
        let data = (0..n * n)
            .map(|k| {
                let (i, j) = (k / n, k % n);
                0.5 * (t.get(i, j) + t.get(j, i))
            })
            .collect();
        Self { dim: n, data }
    }
}

/// Eigenvalues in descending order; eigenvectors are the matching columns.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Tensor2,
}

impl Eigen {
    /// `V · diag(f(λ)) · Vᵀ`
    pub fn reassemble(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let n = self.values.len();
        let mapped: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let scaled = Tensor2::from_fn(n, n, |i, k| self.vectors.get(i, k) * mapped[k]);
        let prod = scaled
            .matmul(&self.vectors.transpose())
            .expect("square");
        SymMatrix::symmetrized(prod)
    }
}

/// Cyclic Jacobi eigensolver.
pub fn sym_eig(a: &SymMatrix) -> Result<Eigen> {
    let n = a.dim;
    let norm = a.frobenius_norm();
    let tol = OFF_DIAGONAL_TOL * norm;
    let mut m = a.data.clone();
    let mut v = Tensor2::identity(n).into_vec();

    let off = |m: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[i * n + j] * m[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        if off(&m) <= tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (kp, kq) = (m[k * n + p], m[k * n + q]);
                    m[k * n + p] = c * kp - s * kq;
                    m[k * n + q] = s * kp + c * kq;
                }
                for k in 0..n {
                    let (pk, qk) = (m[p * n + k], m[q * n + k]);
                    m[p * n + k] = c * pk - s * qk;
                    m[q * n + k] = s * pk + c * qk;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for k in 0..n {
                    let (kp, kq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * kp - s * kq;
                    v[k * n + q] = s * kp + c * kq;
                }
            }
        }
    }
    if !converged {
        let residual = off(&m);
        if residual > tol {
            return Err(Error::Convergence {
                sweeps: MAX_SWEEPS,
                residual,
            });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let vectors = Tensor2::from_fn(n, n, |r, c| v[r * n + order[c]]);
    Ok(Eigen { values, vectors })
}

/// Singular values of `j` (one per column), descending, via the eigenvalues of `jᵀj`.
pub fn singular_values(j: &Tensor2) -> Result<Vec<f64>> {
    if !j.is_finite() {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    if j.cols() == 0 {
        return Ok(Vec::new());
    }
    let gram = SymMatrix::new(&j.gram())?;
    let eig = sym_eig(&gram)?;
    Ok(eig.values.iter().map(|&l| l.max(0.0).sqrt()).collect())
}

/// Principal square root of a positive semidefinite matrix.
///
/// Eigenvalues down to `-1e-10` (scaled by the largest eigenvalue when that
/// exceeds one) are treated as rounding noise and clamped to zero.
pub fn sqrtm_psd(a: &SymMatrix) -> Result<SymMatrix> {
    let eig = sym_eig(a)?;
    let top = eig.values.first().copied().unwrap_or(0.0);
    let floor = -PSD_TOL * top.abs().max(1.0);
    if let Some(&bad) = eig.values.iter().find(|&&l| l < floor) {
        return Err(Error::NotPsd { eigenvalue: bad });
    }
    Ok(eig.reassemble(|l| l.max(0.0).sqrt()))
}
