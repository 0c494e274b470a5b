//! Two-dimensional loss slices `L(theta + e1 v1 + e2 v2)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::nn::objective::{loss, Objective};
use crate::vector::{dot, norm};

/// Batch size the slices are evaluated on unless told otherwise.
pub const DEFAULT_BATCH_LIMIT: usize = 4096;
pub const DEFAULT_EPS_RANGE: (f64, f64) = (-0.5, 0.5);
pub const DEFAULT_RESOLUTION: usize = 41;

const DIRECTION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LandscapeGrid {
    pub eps1_axis: Vec<f64>,
    pub eps2_axis: Vec<f64>,
    /// `losses[i][j]` is the loss at `(eps1_axis[i], eps2_axis[j])`.
    pub losses: Vec<Vec<f64>>,
    pub base_loss: f64,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    /// Examples the loss was averaged over, when known.
    pub batch_size: Option<usize>,
}

impl LandscapeGrid {
    pub fn center(&self) -> usize {
        self.eps1_axis.len() / 2
    }

    pub fn step(&self) -> f64 {
        self.eps1_axis[1] - self.eps1_axis[0]
    }

    /// Central second difference at the origin along `v1` (`axis = 0`) or
    /// `v2` (`axis = 1`), divided by the squared step.
    pub fn second_difference(&self, axis: usize) -> f64 {
        let c = self.center();
        let (minus, plus) = match axis {
            0 => (self.losses[c - 1][c], self.losses[c + 1][c]),
            _ => (self.losses[c][c - 1], self.losses[c][c + 1]),
        };
        let h = if axis == 0 { self.step() } else { self.eps2_axis[1] - self.eps2_axis[0] };
        (plus - 2.0 * self.losses[c][c] + minus) / (h * h)
    }

    /// Least-squares fit `a + b e + c e^2` to the slice through the origin
    /// along one axis. Returns `[a, b, c]`; `2c` is the curvature.
    pub fn axis_quadratic_fit(&self, axis: usize) -> [f64; 3] {
        let c = self.center();
        let (xs, ys): (Vec<f64>, Vec<f64>) = match axis {
            0 => self.eps1_axis.iter().enumerate().map(|(i, &e)| (e, self.losses[i][c])).unzip(),
            _ => self.eps2_axis.iter().enumerate().map(|(j, &e)| (e, self.losses[c][j])).unzip(),
        };
        quadratic_fit(&xs, &ys)
    }
}

fn quadratic_fit(xs: &[f64], ys: &[f64]) -> [f64; 3] {
    // least squares in the basis (1, x, x^2)
    let mut s = [0.0f64; 5];
    let mut r = [0.0f64; 3];
    for (&x, &y) in xs.iter().zip(ys) {
        let mut p = 1.0;
        for k in 0..5 {
            s[k] += p;
            if k < 3 {
                r[k] += p * y;
            }
            p *= x;
        }
    }
    let mut a = [[s[0], s[1], s[2], r[0]], [s[1], s[2], s[3], r[1]], [s[2], s[3], s[4], r[2]]];
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    let mut out = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|k| a[row][k] * out[k]).sum();
        out[row] = (a[row][3] - tail) / a[row][row];
    }
    out
}

/// `resolution` points symmetric about zero with exact zero in the middle.
pub fn symmetric_axis(half_width: f64, resolution: usize) -> Vec<f64> {
    let c = (resolution / 2) as f64;
    (0..resolution).map(|i| half_width * (i as f64 - c) / c).collect()
}

/// Evaluates the loss over a `resolution x resolution` grid of
/// perturbations along two orthonormal directions.
pub fn landscape<O: Objective + ?Sized>(
    obj: &O,
    theta: &[f64],
    v1: &[f64],
    v2: &[f64],
    eps_range: (f64, f64),
    resolution: usize,
) -> Result<LandscapeGrid> {
    let m = obj.dim();
    if theta.len() != m || v1.len() != m || v2.len() != m {
        return Err(Error::invalid(format!("parameter and direction vectors must all have length {m}")));
    }
    if (norm(v1) - 1.0).abs() > DIRECTION_TOL || (norm(v2) - 1.0).abs() > DIRECTION_TOL {
        return Err(Error::invalid("landscape directions must have unit norm"));
    }
    if dot(v1, v2).abs() > DIRECTION_TOL {
        return Err(Error::invalid("landscape directions must be orthogonal"));
    }
    if resolution < 3 || resolution.is_multiple_of(2) {
        return Err(Error::invalid(format!("resolution must be odd and at least 3, got {resolution}")));
    }
    let (lo, hi) = eps_range;
    if !(hi > 0.0) || lo != -hi {
        return Err(Error::invalid(format!("eps range must be symmetric about zero, got ({lo}, {hi})")));
    }
    let axis = symmetric_axis(hi, resolution);
    let base_loss = loss(obj, theta)?;
    let cells: Vec<(usize, usize)> = (0..resolution).flat_map(|i| (0..resolution).map(move |j| (i, j))).collect();
    let values: Vec<f64> = cells
        .par_iter()
        .map(|&(i, j)| {
            let (e1, e2) = (axis[i], axis[j]);
            let point: Vec<f64> = theta.iter().zip(v1.iter().zip(v2)).map(|(t, (a, b))| t + e1 * a + e2 * b).collect();
            loss(obj, &point)
        })
        .collect::<Result<_>>()?;
    let losses = values.chunks_exact(resolution).map(<[f64]>::to_vec).collect();
    Ok(LandscapeGrid {
        eps1_axis: axis.clone(),
        eps2_axis: axis,
        losses,
        base_loss,
        v1: v1.to_vec(),
        v2: v2.to_vec(),
        batch_size: obj.batch_size(),
    })
}
