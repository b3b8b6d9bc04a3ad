use super::PeError;
use crate::tensor::Tensor;

/// Sweep budget for [`symmetric_eigendecompose`].
pub const MAX_SWEEPS: usize = 100;

/// Default convergence threshold on the largest off-diagonal magnitude.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Eigenpairs of a symmetric matrix, ascending by eigenvalue. Column `a` of
/// `eigenvectors` belongs to `eigenvalues[a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Tensor,
}

impl SpectralDecomposition {
    /// `max |M - U diag(L) U^T|`.
    pub fn reconstruction_error(&self, m: &Tensor) -> f64 {
        let n = self.eigenvalues.len();
        let u = &self.eigenvectors;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let r: f64 = (0..n).map(|a| u.get(i, a) * self.eigenvalues[a] * u.get(j, a)).sum();
                worst = worst.max((m.get(i, j) - r).abs());
            }
        }
        worst
    }

    /// `max |U^T U - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let n = self.eigenvalues.len();
        let u = &self.eigenvectors;
        let mut worst = 0.0f64;
        for a in 0..n {
            for b in 0..n {
                let dot: f64 = (0..n).map(|i| u.get(i, a) * u.get(i, b)).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}

fn max_off_diagonal(a: &[f64], n: usize) -> f64 {
    let mut worst = 0.0f64;
    for p in 0..n {
        for q in (p + 1)..n {
            worst = worst.max(a[p * n + q].abs());
        }
    }
    worst
}

/// Cyclic Jacobi eigendecomposition of a dense symmetric matrix.
///
/// Sweeps over all `(p, q)` pairs in row order, annihilating each
/// off-diagonal entry with a plane rotation, until the largest off-diagonal
/// magnitude is at most `tol`.
pub fn symmetric_eigendecompose(m: &Tensor, tol: f64) -> Result<SpectralDecomposition, PeError> {
    let (n, cols) = m.dims2().map_err(|_| PeError::NotSquare(m.shape().to_vec()))?;
    if n != cols || n == 0 {
        return Err(PeError::NotSquare(m.shape().to_vec()));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let gap = (m.get(i, j) - m.get(j, i)).abs();
            if gap > 1e-12 {
                return Err(PeError::NotSymmetric { row: i, col: j, gap });
            }
        }
    }

    let mut a = m.data().to_vec();
    // work on the exactly symmetrized copy
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = avg;
            a[j * n + i] = avg;
        }
    }
    let mut v = Tensor::eye(n).into_data();

    let mut sweeps = 0;
    while max_off_diagonal(&a, n) > tol {
        if sweeps == MAX_SWEEPS {
            return Err(PeError::NoConvergence {
                sweeps,
                residual: max_off_diagonal(&a, n),
            });
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (a[p * n + p], a[q * n + q]);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    let new_kp = c * akp - s * akq;
                    let new_kq = s * akp + c * akq;
                    a[k * n + p] = new_kp;
                    a[p * n + k] = new_kp;
                    a[k * n + q] = new_kq;
                    a[q * n + k] = new_kq;
                }
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
        sweeps += 1;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[x * n + x].total_cmp(&a[y * n + y]).then(x.cmp(&y)));
    let eigenvalues = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = Tensor::zeros(&[n, n]);
    for (col, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors.set(k, col, v[k * n + src]);
        }
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors: vectors,
    })
}
