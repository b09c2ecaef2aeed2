//! Dense symmetric eigendecomposition (cyclic Jacobi).
//!
//! Sized for ontology graphs of a few hundred nodes; no sparse machinery.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAX_SWEEPS: usize = 60;

/// Eigenvalues in nondecreasing order, eigenvectors as the matching columns
/// of an orthogonal matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub eigenvalues: Vec<f64>,
    /// n×n; column j is the eigenvector for `eigenvalues[j]`.
    pub eigenvectors: Tensor<f64>,
}

/// Jacobi rotations on a symmetric matrix (Numerical Recipes §11.1 scheme).
/// The input is not checked for symmetry beyond the strict upper triangle
/// being the part that is read.
pub fn eigen_sym(matrix: &Tensor<f64>) -> Result<SymEigen> {
    let n = matrix.rows();
    if matrix.cols() != n {
        return Err(Error::Shape(format!(
            "eigen_sym needs a square matrix, got {}×{}",
            matrix.rows(),
            matrix.cols()
        )));
    }
    if n == 0 {
        return Err(Error::Shape("eigen_sym on empty matrix".into()));
    }

    let mut a = matrix.clone();
    let mut v = Tensor::zeros(&[n, n]);
    for i in 0..n {
        v.set(i, i, 1.0);
    }
    let mut d: Vec<f64> = (0..n).map(|i| a.at(i, i)).collect();
    let mut b = d.clone();
    let mut z = vec![0.0; n];

    for sweep in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n - 1 {
            for q in p + 1..n {
                off += a.at(p, q).abs();
            }
        }
        if off == 0.0 {
            return Ok(sorted(d, v, n));
        }

        // Skip tiny elements early on; force every rotation later.
        let thresh = if sweep < 3 {
            0.2 * off / (n * n) as f64
        } else {
            0.0
        };

        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a.at(p, q);
                let g = 100.0 * apq.abs();
                if sweep > 3 && d[p].abs() + g == d[p].abs() && d[q].abs() + g == d[q].abs() {
                    a.set(p, q, 0.0);
                    continue;
                }
                if apq.abs() <= thresh {
                    continue;
                }

                let h = d[q] - d[p];
                let t = if h.abs() + g == h.abs() {
                    apq / h
                } else {
                    let theta = 0.5 * h / apq;
                    let mut t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                    if theta < 0.0 {
                        t = -t;
                    }
                    t
                };

                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);
                let h = t * apq;
                z[p] -= h;
                z[q] += h;
                d[p] -= h;
                d[q] += h;
                a.set(p, q, 0.0);

                let rotate = |m: &mut Tensor<f64>, i: usize, j: usize, k: usize, l: usize| {
                    let g = m.at(i, j);
                    let h = m.at(k, l);
                    m.set(i, j, g - s * (h + g * tau));
                    m.set(k, l, h + s * (g - h * tau));
                };

                for j in 0..p {
                    rotate(&mut a, j, p, j, q);
                }
                for j in p + 1..q {
                    rotate(&mut a, p, j, j, q);
                }
                for j in q + 1..n {
                    rotate(&mut a, p, j, q, j);
                }
                for j in 0..n {
                    rotate(&mut v, j, p, j, q);
                }
            }
        }

        for p in 0..n {
            b[p] += z[p];
            d[p] = b[p];
            z[p] = 0.0;
        }
    }

    Err(Error::Eigen(format!(
        "Jacobi did not converge within {MAX_SWEEPS} sweeps (n = {n})"
    )))
}

fn sorted(d: Vec<f64>, v: Tensor<f64>, n: usize) -> SymEigen {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].partial_cmp(&d[j]).expect("finite eigenvalues"));

    let eigenvalues: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let mut eigenvectors = Tensor::zeros(&[n, n]);
    for (new_col, &old_col) in order.iter().enumerate() {
        for row in 0..n {
            eigenvectors.set(row, new_col, v.at(row, old_col));
        }
    }
    SymEigen {
        eigenvalues,
        eigenvectors,
    }
}
