use serde::Serialize;

use crate::error::{Error, Result};
use crate::operator::SymmetricOperator;
use crate::vector::{axpy, dot, norm, orthogonalize_against, scale};

/// Relative size of `beta_j` (against the largest `|alpha|`, `|beta|` so far)
/// at which the Krylov space is declared exhausted.
pub const BREAKDOWN_TOL: f64 = 1e-10;

/// Coefficients of the Lanczos tridiagonal matrix `T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LanczosOutput {
    /// Diagonal of `T`, one entry per completed step.
    pub alpha: Vec<f64>,
    /// Off-diagonal of `T`; `alpha.len() - 1` entries, all positive.
    pub beta: Vec<f64>,
    pub steps_completed: usize,
    /// True when the recurrence stopped before `q` steps.
    pub breakdown: bool,
    /// Orthonormal Krylov basis, when requested.
    #[serde(skip)]
    pub basis: Option<Vec<Vec<f64>>>,
}

/// Runs `q` steps of the symmetric Lanczos recurrence from `start`, with
/// full reorthogonalization against every earlier basis vector.
pub fn lanczos<O: SymmetricOperator + ?Sized>(
    op: &O,
    q: usize,
    start: &[f64],
    keep_basis: bool,
) -> Result<LanczosOutput> {
    let m = op.dim();
    if q == 0 || q > m {
        return Err(Error::invalid(format!("Lanczos steps q = {q} must lie in 1..={m}")));
    }
    if start.len() != m {
        return Err(Error::invalid(format!("start vector has length {}, expected {m}", start.len())));
    }
    let n0 = norm(start);
    if (n0 - 1.0).abs() > 1e-10 {
        return Err(Error::invalid(format!("start vector must have unit norm, got {n0}")));
    }

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(q);
    basis.push(start.to_vec());
    let mut alpha = Vec::with_capacity(q);
    let mut beta: Vec<f64> = Vec::with_capacity(q.saturating_sub(1));
    let mut scale_max = 0.0f64;
    let mut breakdown = false;

    for j in 0..q {
        let v = &basis[j];
        let mut w = op.apply(v);
        let a = dot(v, &w);
        alpha.push(a);
        scale_max = scale_max.max(a.abs());
        if j + 1 == q {
            break;
        }
        axpy(-a, v, &mut w);
        if j > 0 {
            axpy(-beta[j - 1], &basis[j - 1], &mut w);
        }
        // full reorthogonalization, two modified Gram-Schmidt passes
        orthogonalize_against(&mut w, &basis);
        orthogonalize_against(&mut w, &basis);
        let b = norm(&w);
        if b <= BREAKDOWN_TOL * scale_max {
            breakdown = true;
            break;
        }
        scale_max = scale_max.max(b);
        scale(1.0 / b, &mut w);
        beta.push(b);
        basis.push(w);
    }

    let steps_completed = alpha.len();
    basis.truncate(steps_completed);
    Ok(LanczosOutput { alpha, beta, steps_completed, breakdown, basis: keep_basis.then_some(basis) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::DenseMatrix;
    use crate::oracle::dense_symmetric_eig;
    use crate::spectral::tridiag_eig;
    use crate::testing::random_symmetric;

    #[test]
    fn diag_three_exact() {
        let op = DenseMatrix::diagonal(&[3.0, 2.0, 1.0]);
        let s = 1.0 / 3f64.sqrt();
        let out = lanczos(&op, 3, &[s, s, s], false).unwrap();
        assert!(!out.breakdown);
        let run = tridiag_eig(&out.alpha, &out.beta).unwrap();
        for (got, want) in run.ritz_values.iter().zip([3.0, 2.0, 1.0]) {
            assert!((got - want).abs() < 1e-10);
        }
    }

    #[test]
    fn scaled_identity_breaks_down() {
        let op = DenseMatrix::diagonal(&[2.0; 50]);
        let mut start = vec![0.0; 50];
        for i in [3, 17, 20, 41] {
            start[i] = if i % 2 == 0 { 0.5 } else { -0.5 };
        }
        let out = lanczos(&op, 10, &start, false).unwrap();
        assert!(out.breakdown);
        assert_eq!(out.steps_completed, 1);
        assert_eq!(out.alpha, vec![2.0]);
        assert!(out.beta.is_empty());
    }

    #[test]
    fn full_krylov_recovers_spectrum() {
        let m = 300;
        let a = random_symmetric(m, 42);
        let spec = dense_symmetric_eig(&a).unwrap();
        let radius = spec.eigenvalues[0].abs().max(spec.eigenvalues[m - 1].abs());
        let mut start: Vec<f64> = (0..m).map(|i| if i % 3 == 0 { 1.0 } else { -1.0 }).collect();
        crate::vector::normalize(&mut start);
        let out = lanczos(&a, m, &start, true).unwrap();
        assert_eq!(out.steps_completed, m);
        let run = tridiag_eig(&out.alpha, &out.beta).unwrap();
        let mut ritz = run.ritz_values.clone();
        ritz.sort_by(f64::total_cmp);
        for (r, e) in ritz.iter().zip(&spec.eigenvalues) {
            assert!((r - e).abs() / radius < 1e-8, "{r} vs {e}");
        }
        // basis stays orthonormal
        let basis = out.basis.unwrap();
        for i in (0..m).step_by(37) {
            for j in (0..m).step_by(29) {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot(&basis[i], &basis[j]) - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rejects_bad_start() {
        let op = DenseMatrix::identity(3);
        assert!(lanczos(&op, 2, &[1.0, 1.0, 0.0], false).is_err());
        assert!(lanczos(&op, 4, &[1.0, 0.0, 0.0], false).is_err());
        assert!(lanczos(&op, 0, &[1.0, 0.0, 0.0], false).is_err());
        assert!(lanczos(&op, 1, &[1.0, 0.0], false).is_err());
    }

    #[test]
    fn zero_operator_breaks_down_immediately() {
        let op = DenseMatrix::zeros(4);
        let out = lanczos(&op, 4, &[0.5, 0.5, 0.5, 0.5], false).unwrap();
        assert!(out.breakdown);
        assert_eq!(out.alpha, vec![0.0]);
    }
}
