//! Reverse-mode tape over matrix-valued nodes.
//!
//! Values are computed eagerly as nodes are recorded. `backward` walks the
//! tape in reverse and accumulates gradients of a scalar node into the
//! `ParameterStore` entries referenced by `param` and `gather` leaves.

use super::{stable_sigmoid, Matrix, ParamId, ParameterStore, EXP_CLAMP, LOG_FLOOR};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    Gather(ParamId, Vec<usize>),
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    MulConst(Var, Vec<f64>),
    AddConst(Var),
    MaskFill(Var, Vec<bool>),
    Sigmoid(Var),
    Exp(Var),
    Ln(Var),
    Sqrt(Var),
    Square(Var),
    Relu(Var),
    SumRows(Var),
    Sum(Var),
    Mean(Var),
    Pick(Var, Vec<(usize, usize)>),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.shape(), (1, 1));
        m.get(0, 0)
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let src = self.value(x);
        let data = src.as_slice().iter().map(|&a| f(a)).collect();
        let value = Matrix::from_vec(src.rows(), src.cols(), data);
        self.push(value, op)
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "elementwise shape mismatch");
        let (x, y) = (self.value(a), self.value(b));
        let data = x
            .as_slice()
            .iter()
            .zip(y.as_slice())
            .map(|(&p, &q)| f(p, q))
            .collect();
        let value = Matrix::from_vec(x.rows(), x.cols(), data);
        self.push(value, op)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant)
    }

    /// Whole parameter matrix as a node.
    pub fn param(&mut self, store: &ParameterStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    /// Rows of a parameter matrix, in the given order (repeats allowed).
    pub fn gather(&mut self, store: &ParameterStore, id: ParamId, rows: &[usize]) -> Var {
        let src = store.value(id);
        let cols = src.cols();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            data.extend_from_slice(src.row(r));
        }
        let value = Matrix::from_vec(rows.len(), cols, data);
        self.push(value, Op::Gather(id, rows.to_vec()))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.cols(), y.rows(), "matmul inner dimension mismatch");
        let (n, k, m) = (x.rows(), x.cols(), y.cols());
        let mut out = Matrix::zeros(n, m);
        for i in 0..n {
            let xr = x.row(i);
            let or = out.row_mut(i);
            for (p, &xv) in xr.iter().enumerate().take(k) {
                if xv == 0.0 {
                    continue;
                }
                for (o, &yv) in or.iter_mut().zip(y.row(p)) {
                    *o += xv * yv;
                }
            }
        }
        self.push(out, Op::MatMul(a, b))
    }

    /// `a + b` where `b` is a single row broadcast over the rows of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(y.rows(), 1);
        assert_eq!(x.cols(), y.cols());
        let mut out = x.clone();
        for i in 0..out.rows() {
            for (o, &bv) in out.row_mut(i).iter_mut().zip(y.row(0)) {
                *o += bv;
            }
        }
        self.push(out, Op::AddRow(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |p, q| p + q, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |p, q| p - q, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |p, q| p * q, Op::Mul(a, b))
    }

    /// `a * b` where `b` is a column broadcast over the columns of `a`.
    pub fn mul_col(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(y.cols(), 1);
        assert_eq!(x.rows(), y.rows());
        let mut out = x.clone();
        for i in 0..out.rows() {
            let s = y.get(i, 0);
            out.row_mut(i).iter_mut().for_each(|o| *o *= s);
        }
        self.push(out, Op::MulCol(a, b))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.map(x, |a| a * c, Op::Scale(x, c))
    }

    pub fn shift(&mut self, x: Var, c: f64) -> Var {
        self.map(x, |a| a + c, Op::Shift(x))
    }

    pub fn mul_const(&mut self, x: Var, c: Vec<f64>) -> Var {
        assert_eq!(self.value(x).len(), c.len());
        let data = self
            .value(x)
            .as_slice()
            .iter()
            .zip(&c)
            .map(|(a, b)| a * b)
            .collect();
        let (r, cols) = self.shape(x);
        self.push(Matrix::from_vec(r, cols, data), Op::MulConst(x, c))
    }

    pub fn add_const(&mut self, x: Var, c: Vec<f64>) -> Var {
        assert_eq!(self.value(x).len(), c.len());
        let data = self
            .value(x)
            .as_slice()
            .iter()
            .zip(&c)
            .map(|(a, b)| a + b)
            .collect();
        let (r, cols) = self.shape(x);
        self.push(Matrix::from_vec(r, cols, data), Op::AddConst(x))
    }

    /// Keeps entries where `keep` is true and replaces the rest by `fill`.
    pub fn mask_fill(&mut self, x: Var, keep: Vec<bool>, fill: f64) -> Var {
        assert_eq!(self.value(x).len(), keep.len());
        let data = self
            .value(x)
            .as_slice()
            .iter()
            .zip(&keep)
            .map(|(&a, &k)| if k { a } else { fill })
            .collect();
        let (r, c) = self.shape(x);
        self.push(Matrix::from_vec(r, c, data), Op::MaskFill(x, keep))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, stable_sigmoid, Op::Sigmoid(x))
    }

    /// `exp` with its argument clamped to `[-EXP_CLAMP, EXP_CLAMP]`.
    pub fn exp(&mut self, x: Var) -> Var {
        self.map(x, |a| a.clamp(-EXP_CLAMP, EXP_CLAMP).exp(), Op::Exp(x))
    }

    /// Natural log with its argument floored at `LOG_FLOOR`.
    pub fn ln(&mut self, x: Var) -> Var {
        self.map(x, |a| a.max(LOG_FLOOR).ln(), Op::Ln(x))
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.map(x, f64::sqrt, Op::Sqrt(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.map(x, |a| a * a, Op::Square(x))
    }

    /// `max(0, x)`.
    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, |a| a.max(0.0), Op::Relu(x))
    }

    /// Row sums as an `n x 1` column.
    pub fn sum_rows(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let data = (0..src.rows()).map(|i| src.row(i).iter().sum()).collect();
        let value = Matrix::from_vec(src.rows(), 1, data);
        self.push(value, Op::SumRows(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).as_slice().iter().sum();
        self.push(Matrix::from_vec(1, 1, vec![s]), Op::Sum(x))
    }

    /// Mean over all entries; an empty node has mean 0.
    pub fn mean(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let m = if src.is_empty() {
            0.0
        } else {
            src.as_slice().iter().sum::<f64>() / src.len() as f64
        };
        self.push(Matrix::from_vec(1, 1, vec![m]), Op::Mean(x))
    }

    /// Selected `(row, col)` entries as a column.
    pub fn pick(&mut self, x: Var, at: Vec<(usize, usize)>) -> Var {
        let src = self.value(x);
        let data = at.iter().map(|&(r, c)| src.get(r, c)).collect();
        let value = Matrix::from_vec(at.len(), 1, data);
        self.push(value, Op::Pick(x, at))
    }

    /// Propagates d(root)/d(node) back through the tape and adds the
    /// resulting parameter gradients into `store`.
    pub fn backward(&self, root: Var, store: &mut ParameterStore) {
        assert_eq!(self.shape(root), (1, 1), "backward needs a scalar root");
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let mut acc = |v: Var, f: &mut dyn FnMut(&mut Matrix)| {
                let (r, c) = self.shape(v);
                let slot = grads[v.0].get_or_insert_with(|| Matrix::zeros(r, c));
                f(slot);
            };
            let gs = g.as_slice();
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    for (t, &d) in store.grad_mut(*id).as_mut_slice().iter_mut().zip(gs) {
                        *t += d;
                    }
                }
                Op::Gather(id, rows) => {
                    let target = store.grad_mut(*id);
                    for (i, &r) in rows.iter().enumerate() {
                        for (t, &d) in target.row_mut(r).iter_mut().zip(g.row(i)) {
                            *t += d;
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    // dA = G * B^T
                    acc(*a, &mut |ga| {
                        for i in 0..x.rows() {
                            let gr = g.row(i);
                            for (p, t) in ga.row_mut(i).iter_mut().enumerate() {
                                *t += gr.iter().zip(y.row(p)).map(|(u, v)| u * v).sum::<f64>();
                            }
                        }
                    });
                    // dB = A^T * G
                    acc(*b, &mut |gb| {
                        for i in 0..x.rows() {
                            let gr = g.row(i);
                            for (p, &xv) in x.row(i).iter().enumerate() {
                                if xv == 0.0 {
                                    continue;
                                }
                                for (t, &d) in gb.row_mut(p).iter_mut().zip(gr) {
                                    *t += xv * d;
                                }
                            }
                        }
                    });
                }
                Op::AddRow(a, b) => {
                    acc(*a, &mut |ga| add_into(ga, gs));
                    acc(*b, &mut |gb| {
                        for i in 0..g.rows() {
                            for (t, &d) in gb.row_mut(0).iter_mut().zip(g.row(i)) {
                                *t += d;
                            }
                        }
                    });
                }
                Op::Add(a, b) => {
                    acc(*a, &mut |ga| add_into(ga, gs));
                    acc(*b, &mut |gb| add_into(gb, gs));
                }
                Op::Sub(a, b) => {
                    acc(*a, &mut |ga| add_into(ga, gs));
                    acc(*b, &mut |gb| {
                        gb.as_mut_slice().iter_mut().zip(gs).for_each(|(t, d)| *t -= d)
                    });
                }
                Op::Mul(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    acc(*a, &mut |ga| add_product(ga, gs, y.as_slice()));
                    acc(*b, &mut |gb| add_product(gb, gs, x.as_slice()));
                }
                Op::MulCol(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    acc(*a, &mut |ga| {
                        for i in 0..x.rows() {
                            let s = y.get(i, 0);
                            for (t, &d) in ga.row_mut(i).iter_mut().zip(g.row(i)) {
                                *t += d * s;
                            }
                        }
                    });
                    acc(*b, &mut |gb| {
                        for i in 0..x.rows() {
                            let s: f64 = g.row(i).iter().zip(x.row(i)).map(|(d, v)| d * v).sum();
                            *gb.row_mut(i).first_mut().unwrap() += s;
                        }
                    });
                }
                Op::Scale(x, c) => acc(*x, &mut |gx| {
                    gx.as_mut_slice().iter_mut().zip(gs).for_each(|(t, d)| *t += d * c)
                }),
                Op::Shift(x) | Op::AddConst(x) => acc(*x, &mut |gx| add_into(gx, gs)),
                Op::MulConst(x, c) => acc(*x, &mut |gx| add_product(gx, gs, c)),
                Op::MaskFill(x, keep) => acc(*x, &mut |gx| {
                    for ((t, &d), &k) in gx.as_mut_slice().iter_mut().zip(gs).zip(keep) {
                        if k {
                            *t += d;
                        }
                    }
                }),
                Op::Sigmoid(x) => {
                    let out = node.value.as_slice();
                    acc(*x, &mut |gx| {
                        for ((t, &d), &s) in gx.as_mut_slice().iter_mut().zip(gs).zip(out) {
                            *t += d * s * (1.0 - s);
                        }
                    })
                }
                Op::Exp(x) => {
                    let (inp, out) = (self.value(*x).as_slice(), node.value.as_slice());
                    acc(*x, &mut |gx| {
                        for (i, t) in gx.as_mut_slice().iter_mut().enumerate() {
                            if inp[i].abs() <= EXP_CLAMP {
                                *t += gs[i] * out[i];
                            }
                        }
                    })
                }
                Op::Ln(x) => {
                    let inp = self.value(*x).as_slice();
                    acc(*x, &mut |gx| {
                        for (i, t) in gx.as_mut_slice().iter_mut().enumerate() {
                            if inp[i] >= LOG_FLOOR {
                                *t += gs[i] / inp[i];
                            }
                        }
                    })
                }
                Op::Sqrt(x) => {
                    let out = node.value.as_slice();
                    acc(*x, &mut |gx| {
                        for (i, t) in gx.as_mut_slice().iter_mut().enumerate() {
                            *t += gs[i] * 0.5 / out[i];
                        }
                    })
                }
                Op::Square(x) => {
                    let inp = self.value(*x).as_slice();
                    acc(*x, &mut |gx| {
                        for (i, t) in gx.as_mut_slice().iter_mut().enumerate() {
                            *t += gs[i] * 2.0 * inp[i];
                        }
                    })
                }
                Op::Relu(x) => {
                    let inp = self.value(*x).as_slice();
                    acc(*x, &mut |gx| {
                        for (i, t) in gx.as_mut_slice().iter_mut().enumerate() {
                            if inp[i] > 0.0 {
                                *t += gs[i];
                            }
                        }
                    })
                }
                Op::SumRows(x) => acc(*x, &mut |gx| {
                    for i in 0..gx.rows() {
                        let d = g.get(i, 0);
                        gx.row_mut(i).iter_mut().for_each(|t| *t += d);
                    }
                }),
                Op::Sum(x) => acc(*x, &mut |gx| {
                    let d = gs[0];
                    gx.as_mut_slice().iter_mut().for_each(|t| *t += d);
                }),
                Op::Mean(x) => acc(*x, &mut |gx| {
                    if !gx.is_empty() {
                        let d = gs[0] / gx.len() as f64;
                        gx.as_mut_slice().iter_mut().for_each(|t| *t += d);
                    }
                }),
                Op::Pick(x, at) => acc(*x, &mut |gx| {
                    for (i, &(r, c)) in at.iter().enumerate() {
                        let cur = gx.get(r, c);
                        gx.set(r, c, cur + gs[i]);
                    }
                }),
            }
        }
    }
}

fn add_into(target: &mut Matrix, g: &[f64]) {
    target
        .as_mut_slice()
        .iter_mut()
        .zip(g)
        .for_each(|(t, d)| *t += d);
}

fn add_product(target: &mut Matrix, g: &[f64], other: &[f64]) {
    for ((t, d), o) in target.as_mut_slice().iter_mut().zip(g).zip(other) {
        *t += d * o;
    }
}
