//! A matrix-valued expression tape whose reverse pass records onto itself.
//!
//! [`Tape::grad`] builds the adjoint of every node as ordinary tape nodes, so
//! a gradient can be differentiated again. The Hessian-vector product is then
//! two reverse sweeps: `g = dL/dtheta`, `s = g . v`, `Hv = ds/dtheta`.
//!
//! Every value is a dense row-major matrix; scalars are `1 x 1`. A tape is
//! single-threaded and cheap to build, so concurrent products each use their
//! own.

use std::fmt;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor({}x{}, {:?})", self.rows, self.cols, self.data)
    }
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor data length");
        Tensor { rows, cols, data }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Tensor { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { rows: 1, cols: 1, data: vec![value] }
    }

    pub fn row(data: Vec<f64>) -> Self {
        Tensor { rows: 1, cols: data.len(), data }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!(self.shape(), other.shape(), "elementwise shape mismatch");
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    AddScalar(Var, f64),
    MatMul(Var, Var),
    Transpose(Var),
    /// `1 x k -> n x k`
    BroadcastRows(Var, usize),
    /// `n x k -> 1 x k`
    SumRows(Var),
    /// `n x 1 -> n x k`
    BroadcastCols(Var, usize),
    /// `n x k -> n x 1`
    SumCols(Var),
    /// `1 x 1 -> r x c`
    BroadcastScalar(Var, usize, usize),
    /// `r x c -> 1 x 1`
    SumAll(Var),
    /// Reads `rows x cols` consecutive entries of a row vector from `offset`.
    Slice {
        src: Var,
        offset: usize,
        rows: usize,
        cols: usize,
    },
    /// Writes a matrix into a zero row vector of length `len` at `offset`.
    Embed {
        src: Var,
        offset: usize,
        len: usize,
    },
    Tanh(Var),
    Sigmoid(Var),
    Softplus(Var),
    Exp(Var),
    Pow(Var, f64),
    /// `n x k -> n x 1`, row-wise `log sum exp`.
    RowLogSumExp(Var),
}

struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        let t = self.value(v);
        assert_eq!(t.shape(), (1, 1), "not a scalar node");
        t.data[0]
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// An input or constant.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), |x, y| x + y);
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), |x, y| x - y);
        self.push(Op::Sub(a, b), v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), |x, y| x * y);
        self.push(Op::Mul(a, b), v)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| -x);
        self.push(Op::Neg(a), v)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| c * x);
        self.push(Op::Scale(a, c), v)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x + c);
        self.push(Op::AddScalar(a, c), v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.cols, tb.rows, "matmul inner dimension");
        let (n, k, p) = (ta.rows, ta.cols, tb.cols);
        let mut out = vec![0.0; n * p];
        for i in 0..n {
            let row = &mut out[i * p..(i + 1) * p];
            for l in 0..k {
                let a_il = ta.data[i * k + l];
                if a_il == 0.0 {
                    continue;
                }
                let brow = &tb.data[l * p..(l + 1) * p];
                for (o, b) in row.iter_mut().zip(brow) {
                    *o += a_il * b;
                }
            }
        }
        self.push(Op::MatMul(a, b), Tensor::new(n, p, out))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let (r, c) = t.shape();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = t.data[i * c + j];
            }
        }
        self.push(Op::Transpose(a), Tensor::new(c, r, out))
    }

    pub fn broadcast_rows(&mut self, a: Var, n: usize) -> Var {
        let t = self.value(a);
        assert_eq!(t.rows, 1, "broadcast_rows expects a row vector");
        let data = t.data.repeat(n);
        let cols = t.cols;
        self.push(Op::BroadcastRows(a, n), Tensor::new(n, cols, data))
    }

    pub fn sum_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut out = vec![0.0; t.cols];
        for row in t.data.chunks_exact(t.cols) {
            for (o, x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        self.push(Op::SumRows(a), Tensor::row(out))
    }

    pub fn broadcast_cols(&mut self, a: Var, k: usize) -> Var {
        let t = self.value(a);
        assert_eq!(t.cols, 1, "broadcast_cols expects a column vector");
        let data = t.data.iter().flat_map(|&x| std::iter::repeat_n(x, k)).collect();
        let rows = t.rows;
        self.push(Op::BroadcastCols(a, k), Tensor::new(rows, k, data))
    }

    pub fn sum_cols(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let data = t.data.chunks_exact(t.cols).map(|r| r.iter().sum()).collect();
        let rows = t.rows;
        self.push(Op::SumCols(a), Tensor::new(rows, 1, data))
    }

    pub fn broadcast_scalar(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let x = self.scalar_value(a);
        self.push(Op::BroadcastScalar(a, rows, cols), Tensor::filled(rows, cols, x))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        self.push(Op::SumAll(a), Tensor::scalar(s))
    }

    pub fn slice(&mut self, src: Var, offset: usize, rows: usize, cols: usize) -> Var {
        let t = self.value(src);
        assert_eq!(t.rows, 1, "slice source must be a row vector");
        assert!(offset + rows * cols <= t.cols, "slice out of range");
        let data = t.data[offset..offset + rows * cols].to_vec();
        self.push(Op::Slice { src, offset, rows, cols }, Tensor::new(rows, cols, data))
    }

    pub fn embed(&mut self, src: Var, offset: usize, len: usize) -> Var {
        let t = self.value(src);
        assert!(offset + t.data.len() <= len, "embed out of range");
        let mut data = vec![0.0; len];
        data[offset..offset + t.data.len()].copy_from_slice(&t.data);
        self.push(Op::Embed { src, offset, len }, Tensor::row(data))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), v)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), v)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(softplus);
        self.push(Op::Softplus(a), v)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        self.push(Op::Exp(a), v)
    }

    /// Elementwise `a^p`; the base is expected positive for non-integer `p`.
    pub fn pow(&mut self, a: Var, p: f64) -> Var {
        let v = self.value(a).map(|x| x.powf(p));
        self.push(Op::Pow(a, p), v)
    }

    pub fn row_logsumexp(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let data = t
            .data
            .chunks_exact(t.cols)
            .map(|r| {
                let mx = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                mx + r.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
            })
            .collect();
        let rows = t.rows;
        self.push(Op::RowLogSumExp(a), Tensor::new(rows, 1, data))
    }

    /// `sum(a * b)` as a scalar node.
    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let p = self.mul(a, b);
        self.sum_all(p)
    }

    /// Records `d output / d wrt` on the tape and returns it.
    ///
    /// `output` must be a `1 x 1` node. The returned node has the shape of
    /// `wrt` and is itself differentiable.
    pub fn grad(&mut self, output: Var, wrt: Var) -> Var {
        assert_eq!(self.shape(output), (1, 1), "gradient of a non-scalar node");
        let n = output.0 + 1;
        let mut needs = vec![false; n];
        for i in 0..n {
            needs[i] = i == wrt.0 || inputs(self.nodes[i].op).iter().flatten().any(|x| needs[x.0]);
        }
        if !needs[output.0] {
            let (r, c) = self.shape(wrt);
            return self.leaf(Tensor::filled(r, c, 0.0));
        }

        let mut adj: Vec<Option<Var>> = vec![None; n];
        adj[output.0] = Some(self.leaf(Tensor::scalar(1.0)));
        for i in (0..n).rev() {
            if i == wrt.0 || !needs[i] {
                continue;
            }
            let Some(g) = adj[i] else { continue };
            let y = Var(i);
            let op = self.nodes[i].op;
            let mut contrib = |tape: &mut Tape, x: Var, make: &dyn Fn(&mut Tape) -> Var| {
                if needs[x.0] {
                    let c = make(tape);
                    adj[x.0] = Some(match adj[x.0] {
                        Some(prev) => tape.add(prev, c),
                        None => c,
                    });
                }
            };
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    contrib(self, a, &|_| g);
                    contrib(self, b, &|_| g);
                }
                Op::Sub(a, b) => {
                    contrib(self, a, &|_| g);
                    contrib(self, b, &|t| t.neg(g));
                }
                Op::Mul(a, b) => {
                    contrib(self, a, &|t| t.mul(g, b));
                    contrib(self, b, &|t| t.mul(g, a));
                }
                Op::Neg(a) => contrib(self, a, &|t| t.neg(g)),
                Op::Scale(a, c) => contrib(self, a, &|t| t.scale(g, c)),
                Op::AddScalar(a, _) => contrib(self, a, &|_| g),
                Op::MatMul(a, b) => {
                    contrib(self, a, &|t| {
                        let bt = t.transpose(b);
                        t.matmul(g, bt)
                    });
                    contrib(self, b, &|t| {
                        let at = t.transpose(a);
                        t.matmul(at, g)
                    });
                }
                Op::Transpose(a) => contrib(self, a, &|t| t.transpose(g)),
                Op::BroadcastRows(a, _) => contrib(self, a, &|t| t.sum_rows(g)),
                Op::SumRows(a) => {
                    let rows = self.shape(a).0;
                    contrib(self, a, &|t| t.broadcast_rows(g, rows));
                }
                Op::BroadcastCols(a, _) => contrib(self, a, &|t| t.sum_cols(g)),
                Op::SumCols(a) => {
                    let cols = self.shape(a).1;
                    contrib(self, a, &|t| t.broadcast_cols(g, cols));
                }
                Op::BroadcastScalar(a, _, _) => contrib(self, a, &|t| t.sum_all(g)),
                Op::SumAll(a) => {
                    let (r, c) = self.shape(a);
                    contrib(self, a, &|t| t.broadcast_scalar(g, r, c));
                }
                Op::Slice { src, offset, .. } => {
                    let len = self.shape(src).1;
                    contrib(self, src, &|t| t.embed(g, offset, len));
                }
                Op::Embed { src, offset, .. } => {
                    let (r, c) = self.shape(src);
                    contrib(self, src, &|t| t.slice(g, offset, r, c));
                }
                Op::Tanh(a) => contrib(self, a, &|t| {
                    // 1 - y^2
                    let y2 = t.mul(y, y);
                    let d = t.neg(y2);
                    let d = t.add_scalar(d, 1.0);
                    t.mul(g, d)
                }),
                Op::Sigmoid(a) => contrib(self, a, &|t| {
                    // y (1 - y)
                    let ny = t.neg(y);
                    let one_minus = t.add_scalar(ny, 1.0);
                    let d = t.mul(y, one_minus);
                    t.mul(g, d)
                }),
                Op::Softplus(a) => contrib(self, a, &|t| {
                    let d = t.sigmoid(a);
                    t.mul(g, d)
                }),
                Op::Exp(a) => contrib(self, a, &|t| t.mul(g, y)),
                Op::Pow(a, p) => contrib(self, a, &|t| {
                    let d = t.pow(a, p - 1.0);
                    let d = t.scale(d, p);
                    t.mul(g, d)
                }),
                Op::RowLogSumExp(a) => {
                    let cols = self.shape(a).1;
                    contrib(self, a, &|t| {
                        let yb = t.broadcast_cols(y, cols);
                        let shifted = t.sub(a, yb);
                        let softmax = t.exp(shifted);
                        let gb = t.broadcast_cols(g, cols);
                        t.mul(gb, softmax)
                    });
                }
            }
        }
        match adj[wrt.0] {
            Some(g) => g,
            None => {
                let (r, c) = self.shape(wrt);
                self.leaf(Tensor::filled(r, c, 0.0))
            }
        }
    }
}

fn inputs(op: Op) -> [Option<Var>; 2] {
    match op {
        Op::Leaf => [None, None],
        Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::MatMul(a, b) => [Some(a), Some(b)],
        Op::Neg(a)
        | Op::Scale(a, _)
        | Op::AddScalar(a, _)
        | Op::Transpose(a)
        | Op::BroadcastRows(a, _)
        | Op::SumRows(a)
        | Op::BroadcastCols(a, _)
        | Op::SumCols(a)
        | Op::BroadcastScalar(a, _, _)
        | Op::SumAll(a)
        | Op::Tanh(a)
        | Op::Sigmoid(a)
        | Op::Softplus(a)
        | Op::Exp(a)
        | Op::Pow(a, _)
        | Op::RowLogSumExp(a) => [Some(a), None],
        Op::Slice { src, .. } | Op::Embed { src, .. } => [Some(src), None],
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    // log(1 + e^x) without overflow
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
