use std::sync::Arc;

use crate::error::{Error, Result};
use crate::nn::tape::{Tape, Tensor, Var};
use crate::operator::{BlockLayout, DenseMatrix, SymmetricOperator};

/// A twice-differentiable scalar loss of a flat parameter vector.
///
/// Implementors record the loss on a [`Tape`] given the node holding
/// `theta` as a `1 x m` row; gradients and Hessian products follow from the
/// tape alone.
pub trait Objective: Send + Sync {
    fn layout(&self) -> &BlockLayout;

    /// Returns the `1 x 1` loss node.
    fn record(&self, tape: &mut Tape, theta: Var) -> Var;

    fn dim(&self) -> usize {
        self.layout().total_len()
    }

    /// Number of examples the loss averages over, if it has any.
    fn batch_size(&self) -> Option<usize> {
        None
    }
}

impl<T: Objective + ?Sized> Objective for &T {
    fn layout(&self) -> &BlockLayout {
        (**self).layout()
    }
    fn record(&self, tape: &mut Tape, theta: Var) -> Var {
        (**self).record(tape, theta)
    }
    fn batch_size(&self) -> Option<usize> {
        (**self).batch_size()
    }
}

impl<T: Objective + ?Sized> Objective for Arc<T> {
    fn layout(&self) -> &BlockLayout {
        (**self).layout()
    }
    fn record(&self, tape: &mut Tape, theta: Var) -> Var {
        (**self).record(tape, theta)
    }
    fn batch_size(&self) -> Option<usize> {
        (**self).batch_size()
    }
}

fn check_len<O: Objective + ?Sized>(obj: &O, what: &str, v: &[f64]) -> Result<()> {
    if v.len() != obj.dim() {
        return Err(Error::invalid(format!("{what} has length {}, model has {} parameters", v.len(), obj.dim())));
    }
    Ok(())
}

pub fn loss<O: Objective + ?Sized>(obj: &O, theta: &[f64]) -> Result<f64> {
    check_len(obj, "parameter vector", theta)?;
    let mut tape = Tape::new();
    let t = tape.leaf(Tensor::row(theta.to_vec()));
    let l = obj.record(&mut tape, t);
    Ok(tape.scalar_value(l))
}

/// Exact reverse-mode gradient `dL/dtheta`.
pub fn gradient<O: Objective + ?Sized>(obj: &O, theta: &[f64]) -> Result<Vec<f64>> {
    Ok(loss_and_gradient(obj, theta)?.1)
}

pub fn loss_and_gradient<O: Objective + ?Sized>(obj: &O, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_len(obj, "parameter vector", theta)?;
    let mut tape = Tape::new();
    let t = tape.leaf(Tensor::row(theta.to_vec()));
    let l = obj.record(&mut tape, t);
    let g = tape.grad(l, t);
    Ok((tape.scalar_value(l), tape.value(g).data.clone()))
}

/// Exact Hessian-vector product: differentiates `g(theta) . v` a second time.
pub fn hvp<O: Objective + ?Sized>(obj: &O, theta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    check_len(obj, "parameter vector", theta)?;
    check_len(obj, "direction", v)?;
    Ok(hvp_unchecked(obj, theta, v))
}

fn hvp_unchecked<O: Objective + ?Sized>(obj: &O, theta: &[f64], v: &[f64]) -> Vec<f64> {
    let mut tape = Tape::new();
    let t = tape.leaf(Tensor::row(theta.to_vec()));
    let l = obj.record(&mut tape, t);
    let g = tape.grad(l, t);
    let dir = tape.leaf(Tensor::row(v.to_vec()));
    let gv = tape.dot(g, dir);
    let hv = tape.grad(gv, t);
    tape.value(hv).data.clone()
}

/// The loss Hessian at a fixed `theta`, as a matrix-free operator.
pub struct HessianOperator<O> {
    objective: O,
    theta: Vec<f64>,
}

impl<O: Objective> HessianOperator<O> {
    pub fn new(objective: O, theta: Vec<f64>) -> Result<Self> {
        check_len(&objective, "parameter vector", &theta)?;
        Ok(HessianOperator { objective, theta })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn objective(&self) -> &O {
        &self.objective
    }
}

impl<O: Objective> SymmetricOperator for HessianOperator<O> {
    fn dim(&self) -> usize {
        self.theta.len()
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        hvp_unchecked(&self.objective, &self.theta, v)
    }

    fn layout(&self) -> Option<&BlockLayout> {
        Some(self.objective.layout())
    }
}

/// `1/2 theta^T A theta`: a loss with a known, constant Hessian `A`.
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    matrix: DenseMatrix,
    layout: BlockLayout,
}

impl QuadraticObjective {
    /// `matrix` must be symmetric; it is stored symmetrized.
    pub fn new(matrix: DenseMatrix) -> Result<Self> {
        let layout = BlockLayout::whole("theta", matrix.dim())?;
        Self::with_layout(matrix, layout)
    }

    pub fn with_layout(matrix: DenseMatrix, layout: BlockLayout) -> Result<Self> {
        if matrix.asymmetry() > crate::oracle::SYMMETRY_TOL {
            return Err(Error::invalid("quadratic loss needs a symmetric matrix"));
        }
        if layout.total_len() != matrix.dim() {
            return Err(Error::invalid(format!(
                "layout covers {} coordinates, matrix has dimension {}",
                layout.total_len(),
                matrix.dim()
            )));
        }
        Ok(QuadraticObjective { matrix: matrix.symmetrized(), layout })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }
}

impl Objective for QuadraticObjective {
    fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    fn record(&self, tape: &mut Tape, theta: Var) -> Var {
        let m = self.matrix.dim();
        let a = tape.leaf(Tensor::new(m, m, self.matrix.entries().to_vec()));
        let ta = tape.matmul(theta, a);
        let q = tape.dot(ta, theta);
        tape.scale(q, 0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::materialize;
    use crate::testing::random_symmetric;

    struct Quartic;

    impl Objective for Quartic {
        fn layout(&self) -> &BlockLayout {
            static L: std::sync::OnceLock<BlockLayout> = std::sync::OnceLock::new();
            L.get_or_init(|| BlockLayout::whole("x", 1).unwrap())
        }
        fn record(&self, tape: &mut Tape, theta: Var) -> Var {
            let x2 = tape.mul(theta, theta);
            let x4 = tape.mul(x2, x2);
            tape.sum_all(x4)
        }
    }

    #[test]
    fn quartic_hvp() {
        assert_eq!(hvp(&Quartic, &[1.0], &[2.0]).unwrap(), vec![24.0]);
        assert_eq!(gradient(&Quartic, &[1.0]).unwrap(), vec![4.0]);
    }

    #[test]
    fn quadratic_gradient_and_hvp() {
        let a = random_symmetric(12, 3);
        let obj = QuadraticObjective::new(a.clone()).unwrap();
        let theta: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin()).collect();
        let g = gradient(&obj, &theta).unwrap();
        let want = a.apply(&theta);
        for (x, y) in g.iter().zip(&want) {
            assert!((x - y).abs() < 1e-13);
        }
        let v: Vec<f64> = (0..12).map(|i| (i as f64).cos()).collect();
        let hv = hvp(&obj, &theta, &v).unwrap();
        for (x, y) in hv.iter().zip(a.apply(&v)) {
            assert!((x - y).abs() < 1e-13);
        }
        let op = HessianOperator::new(&obj, theta).unwrap();
        let h = materialize(&op).unwrap();
        assert!(h.asymmetry < 1e-14);
        for (x, y) in h.matrix.entries().iter().zip(a.entries()) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn length_errors() {
        let obj = QuadraticObjective::new(DenseMatrix::identity(3)).unwrap();
        assert!(loss(&obj, &[1.0]).is_err());
        assert!(hvp(&obj, &[1.0, 2.0, 3.0], &[1.0]).is_err());
        assert!(HessianOperator::new(&obj, vec![0.0; 2]).is_err());
        let asym = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(QuadraticObjective::new(asym).is_err());
    }
}
