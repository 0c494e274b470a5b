//! The symmetric-operator abstraction and its combinators.
//!
//! Estimators never see a matrix. They see something that can compute `H v`
//! for a vector of known length, which is all a neural-network Hessian can
//! offer at scale. Dense matrices, deflations and principal-block
//! restrictions are all just more operators.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::rng::{sample_probe, ProbeDistribution, Purpose, Stream};
use crate::vector::{dot, norm, orthogonalize_against};

/// Tolerance on `|u_i . u_j - delta_ij|` accepted for deflation bases.
pub const ORTHONORMAL_TOL: f64 = 1e-6;

/// A real symmetric linear map `R^m -> R^m` accessed only through products.
///
/// `apply` must be reentrant: operators are shared across worker threads.
/// Callers pass vectors of length [`dim`](Self::dim); use [`apply_checked`]
/// when the length is not already known to match.
pub trait SymmetricOperator: Send + Sync {
    fn dim(&self) -> usize;

    fn apply(&self, v: &[f64]) -> Vec<f64>;

    /// Named parameter blocks, when the coordinates have any.
    fn layout(&self) -> Option<&BlockLayout> {
        None
    }
}

impl<T: SymmetricOperator + ?Sized> SymmetricOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        (**self).apply(v)
    }
    fn layout(&self) -> Option<&BlockLayout> {
        (**self).layout()
    }
}

impl<T: SymmetricOperator + ?Sized> SymmetricOperator for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        (**self).apply(v)
    }
    fn layout(&self) -> Option<&BlockLayout> {
        (**self).layout()
    }
}

impl<T: SymmetricOperator + ?Sized> SymmetricOperator for Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        (**self).apply(v)
    }
    fn layout(&self) -> Option<&BlockLayout> {
        (**self).layout()
    }
}

pub fn apply_checked<O: SymmetricOperator + ?Sized>(op: &O, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != op.dim() {
        return Err(Error::invalid(format!(
            "vector length {} does not match operator dimension {}",
            v.len(),
            op.dim()
        )));
    }
    Ok(op.apply(v))
}

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("matrix dimension must be positive"));
        }
        if entries.len() != dim * dim {
            return Err(Error::invalid(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            )));
        }
        Ok(DenseMatrix { dim, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("matrix rows must all have length equal to the row count"));
        }
        Self::new(dim, rows.concat())
    }

    pub fn zeros(dim: usize) -> Self {
        DenseMatrix { dim, entries: vec![0.0; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![1.0; dim])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut m = Self::zeros(dim);
        for (i, d) in diag.iter().enumerate() {
            m.entries[i * dim + i] = *d;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.entries[i * self.dim + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.dim..(i + 1) * self.dim]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, j)).collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diag().iter().sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.entries)
    }

    pub fn max_abs(&self) -> f64 {
        crate::vector::max_abs(&self.entries)
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in i + 1..self.dim {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn symmetrized(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.dim {
            for j in i + 1..self.dim {
                let avg = 0.5 * (self.get(i, j) + self.get(j, i));
                out.set(i, j, avg);
                out.set(j, i, avg);
            }
        }
        out
    }

    /// `A v`, rejecting a length mismatch.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim {
            return Err(Error::invalid(format!(
                "vector length {} does not match matrix dimension {}",
                v.len(),
                self.dim
            )));
        }
        Ok(self.entries.chunks_exact(self.dim).map(|row| dot(row, v)).collect())
    }

    pub fn principal_submatrix(&self, indices: &[usize]) -> Self {
        let k = indices.len();
        let mut out = Self::zeros(k);
        for (a, &i) in indices.iter().enumerate() {
            for (b, &j) in indices.iter().enumerate() {
                out.set(a, b, self.get(i, j));
            }
        }
        out
    }
}

impl SymmetricOperator for DenseMatrix {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.entries.chunks_exact(self.dim).map(|row| dot(row, v)).collect()
    }
}

/// `diag(d)` without storing the zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalOperator {
    diag: Vec<f64>,
}

impl DiagonalOperator {
    pub fn new(diag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::invalid("diagonal operator needs at least one entry"));
        }
        Ok(DiagonalOperator { diag })
    }

    pub fn values(&self) -> &[f64] {
        &self.diag
    }
}

impl SymmetricOperator for DiagonalOperator {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.diag.iter().zip(v).map(|(d, x)| d * x).collect()
    }
}

/// Wraps a closure as an operator. The closure is trusted to be symmetric.
pub struct FnOperator<F> {
    dim: usize,
    f: F,
    layout: Option<BlockLayout>,
}

impl<F> FnOperator<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        FnOperator { dim, f, layout: None }
    }

    pub fn with_layout(mut self, layout: BlockLayout) -> Self {
        self.layout = Some(layout);
        self
    }
}

impl<F> SymmetricOperator for FnOperator<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        (self.f)(v)
    }

    fn layout(&self) -> Option<&BlockLayout> {
        self.layout.as_ref()
    }
}

/// `v -> P H P v` with `P = I - U U^T`.
pub struct Deflated<O> {
    inner: O,
    basis: Vec<Vec<f64>>,
}

impl<O: SymmetricOperator> Deflated<O> {
    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }

    fn project(&self, v: &mut [f64]) {
        orthogonalize_against(v, &self.basis);
    }
}

impl<O: SymmetricOperator> SymmetricOperator for Deflated<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        if self.basis.is_empty() {
            return self.inner.apply(v);
        }
        let mut pv = v.to_vec();
        self.project(&mut pv);
        let mut out = self.inner.apply(&pv);
        self.project(&mut out);
        out
    }

    fn layout(&self) -> Option<&BlockLayout> {
        self.inner.layout()
    }
}

/// Projects the directions in `basis` out of `op` on both sides.
///
/// The basis must be orthonormal to within [`ORTHONORMAL_TOL`]; it is then
/// re-orthonormalized so the projector is exact to rounding.
pub fn deflate<O: SymmetricOperator>(op: O, basis: &[Vec<f64>]) -> Result<Deflated<O>> {
    let m = op.dim();
    for (i, u) in basis.iter().enumerate() {
        if u.len() != m {
            return Err(Error::invalid(format!(
                "deflation vector {i} has length {}, operator dimension is {m}",
                u.len()
            )));
        }
    }
    for i in 0..basis.len() {
        for j in 0..=i {
            let target = if i == j { 1.0 } else { 0.0 };
            let d = dot(&basis[i], &basis[j]);
            if (d - target).abs() > ORTHONORMAL_TOL {
                return Err(Error::invalid(format!("deflation basis is not orthonormal: u{i}.u{j} = {d}")));
            }
        }
    }
    Ok(Deflated { inner: op, basis: gram_schmidt(basis) })
}

/// Modified Gram-Schmidt, run twice. Input vectors are assumed to be
/// linearly independent.
pub fn gram_schmidt(vectors: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let mut w = v.clone();
        orthogonalize_against(&mut w, &out);
        orthogonalize_against(&mut w, &out);
        crate::vector::normalize(&mut w);
        out.push(w);
    }
    out
}

/// One contiguous named range of coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

impl Segment {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Ordered partition of `[0, m)` into named segments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLayout {
    segments: Vec<Segment>,
}

impl BlockLayout {
    /// Builds a layout from `(name, length)` pairs laid out back to back.
    pub fn from_lengths<S: Into<String>>(parts: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        let mut offset = 0;
        let mut segments = Vec::new();
        for (name, len) in parts {
            segments.push(Segment { name: name.into(), offset, len });
            offset += len;
        }
        Self::new(segments)
    }

    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::invalid("layout needs at least one segment"));
        }
        let mut expected = 0;
        for s in &segments {
            if s.len == 0 {
                return Err(Error::invalid(format!("segment `{}` is empty", s.name)));
            }
            if s.offset != expected {
                return Err(Error::invalid(format!(
                    "segment `{}` starts at {} but the previous segment ends at {expected}",
                    s.name, s.offset
                )));
            }
            expected += s.len;
        }
        for (i, s) in segments.iter().enumerate() {
            if segments[..i].iter().any(|t| t.name == s.name) {
                return Err(Error::invalid(format!("duplicate segment name `{}`", s.name)));
            }
        }
        Ok(BlockLayout { segments })
    }

    /// A single segment covering everything.
    pub fn whole(name: &str, dim: usize) -> Result<Self> {
        Self::from_lengths([(name, dim)])
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_len(&self) -> usize {
        self.segments.last().map_or(0, |s| s.offset + s.len)
    }

    pub fn get(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    /// Segments selected by `names`, in layout order.
    ///
    /// A name selects the segment of that exact name, or every segment whose
    /// name continues it after a `.` (`hidden0` selects `hidden0.weight`,
    /// `hidden0.bias`, ...).
    pub fn select<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<&Segment>> {
        if names.is_empty() {
            return Err(Error::invalid("block selection is empty"));
        }
        let matches = |seg: &Segment, name: &str| {
            seg.name == name
                || (seg.name.len() > name.len()
                    && seg.name.starts_with(name)
                    && seg.name.as_bytes()[name.len()] == b'.')
        };
        for name in names {
            let name = name.as_ref();
            if !self.segments.iter().any(|s| matches(s, name)) {
                return Err(Error::invalid(format!("unknown segment `{name}`")));
            }
        }
        Ok(self.segments.iter().filter(|s| names.iter().any(|n| matches(s, n.as_ref()))).collect())
    }

    pub fn names(&self) -> Vec<&str> {
        self.segments.iter().map(|s| s.name.as_str()).collect()
    }
}

/// Principal-submatrix action of an operator on a set of segments.
pub struct Restricted<O> {
    inner: O,
    indices: Vec<usize>,
    layout: BlockLayout,
}

impl<O: SymmetricOperator> Restricted<O> {
    /// Coordinates of the parent operator kept by the restriction.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

impl<O: SymmetricOperator> SymmetricOperator for Restricted<O> {
    fn dim(&self) -> usize {
        self.indices.len()
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.inner.dim()];
        for (&i, &x) in self.indices.iter().zip(v) {
            full[i] = x;
        }
        let out = self.inner.apply(&full);
        self.indices.iter().map(|&i| out[i]).collect()
    }

    fn layout(&self) -> Option<&BlockLayout> {
        Some(&self.layout)
    }
}

/// Restricts `op` to the coordinates of the `selected` segments of `layout`.
/// The result carries a layout of just the selected segments.
pub fn restrict_to_block<O: SymmetricOperator, S: AsRef<str>>(
    op: O,
    layout: &BlockLayout,
    selected: &[S],
) -> Result<Restricted<O>> {
    if layout.total_len() != op.dim() {
        return Err(Error::invalid(format!(
            "layout covers {} coordinates, operator dimension is {}",
            layout.total_len(),
            op.dim()
        )));
    }
    let segs = layout.select(selected)?;
    let indices: Vec<usize> = segs.iter().flat_map(|s| s.range()).collect();
    let sub_layout = BlockLayout::from_lengths(segs.iter().map(|s| (s.name.clone(), s.len)))?;
    Ok(Restricted { inner: op, indices, layout: sub_layout })
}

/// Worst relative violation of `v1 . H v2 = v2 . H v1` over `pairs` random
/// Gaussian pairs. The scale is `max(|v1| |H v2|, |v2| |H v1|)`.
pub fn symmetry_defect<O: SymmetricOperator + ?Sized>(op: &O, pairs: usize, seed: u64) -> f64 {
    let m = op.dim();
    let mut worst = 0.0f64;
    for p in 0..pairs as u64 {
        let mut s = Stream::new(seed, Purpose::Other(1), p);
        let v1 = sample_probe(m, ProbeDistribution::Gaussian, &mut s);
        let v2 = sample_probe(m, ProbeDistribution::Gaussian, &mut s);
        let h1 = op.apply(&v1);
        let h2 = op.apply(&v2);
        let a = dot(&v1, &h2);
        let b = dot(&v2, &h1);
        let scale = (norm(&v1) * norm(&h2)).max(norm(&v2) * norm(&h1)).max(f64::MIN_POSITIVE);
        worst = worst.max((a - b).abs() / scale);
    }
    worst
}
