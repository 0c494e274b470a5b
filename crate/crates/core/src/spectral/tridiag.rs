//! Eigenvalues and first eigenvector components of a symmetric tridiagonal
//! matrix: the Gauss quadrature nodes and weights of one Lanczos run.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::oracle::dense_symmetric_eig;
use crate::testing::tridiagonal_matrix;

const MAX_QL_ITER: usize = 60;

/// Quadrature rule from one Lanczos run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlqRun {
    /// Ritz values, descending.
    pub ritz_values: Vec<f64>,
    /// Squared first components of the matching eigenvectors of `T`; they
    /// sum to one.
    pub weights: Vec<f64>,
}

/// Eigendecomposes `T = tridiag(beta, alpha, beta)` by implicit QL with
/// Wilkinson-type shifts, accumulating only the first row of the eigenvector
/// matrix.
pub fn tridiag_eig(alpha: &[f64], beta: &[f64]) -> Result<SlqRun> {
    let q = alpha.len();
    if q == 0 {
        return Err(Error::invalid("tridiagonal matrix needs at least one diagonal entry"));
    }
    if beta.len() != q - 1 {
        return Err(Error::invalid(format!(
            "tridiagonal matrix with {q} diagonal entries needs {} off-diagonal entries, got {}",
            q - 1,
            beta.len()
        )));
    }
    let (values, first_row) = match implicit_ql(alpha, beta) {
        Some(r) => r,
        None => jacobi_fallback(alpha, beta)?,
    };
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    Ok(SlqRun {
        ritz_values: order.iter().map(|&i| values[i]).collect(),
        weights: order.iter().map(|&i| first_row[i] * first_row[i]).collect(),
    })
}

/// Returns `(eigenvalues, first row of Z)` or `None` if an eigenvalue fails
/// to converge.
fn implicit_ql(alpha: &[f64], beta: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = alpha.len();
    let mut d = alpha.to_vec();
    // e[i] couples rows i and i + 1; e[n - 1] is scratch
    let mut e: Vec<f64> = beta.to_vec();
    e.push(0.0);
    let mut z = vec![0.0; n];
    z[0] = 1.0;

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_QL_ITER {
                return None;
            }
            // shift from the leading 2x2 block
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let zf = z[i + 1];
                z[i + 1] = s * z[i] + c * zf;
                z[i] = c * z[i] - s * zf;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Some((d, z))
}

fn jacobi_fallback(alpha: &[f64], beta: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let spec = dense_symmetric_eig(&tridiagonal_matrix(alpha, beta))?;
    let first_row = (0..alpha.len()).map(|i| spec.eigenvector(i)[0]).collect();
    Ok((spec.eigenvalues, first_row))
}
