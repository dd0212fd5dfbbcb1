use std::borrow::Cow;

use super::kernels::{self, ConvGeom};
use super::{Rng, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
        geom: ConvGeom,
        batch: usize,
        c_out: usize,
        // Unfolded input, kept only when the weight needs a gradient.
        cols: Option<Vec<f64>>,
    },
    Relu(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Dropout { input: Var, mask: Vec<f64> },
    Sum(Var),
    Reshape(Var),
    Column { input: Var, index: usize },
    StackColumns(Vec<Var>),
}

struct Node<'p> {
    value: Cow<'p, Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Tape of primitive applications for one forward/backward pass.
///
/// Nodes are appended in execution order, so every input of node `i` has an
/// index below `i`. Parameters can be borrowed for the lifetime `'p` instead
/// of copied. A graph supports a single [`Graph::backward`] call.
pub struct Graph<'p> {
    nodes: Vec<Node<'p>>,
    consumed: bool,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar with respect to every leaf that requires them.
#[derive(Debug, Default)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` when `var` is not a differentiable leaf or did not influence the loss.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(|g| g.take())
    }
}

fn check_finite(op: &'static str, data: &[f64]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { op })
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

// Adds into the gradient slot of node `idx`, creating it zeroed when absent.
fn accumulate(grads: &mut [Option<Vec<f64>>], idx: usize, len: usize, f: impl FnOnce(&mut [f64])) {
    let slot = grads[idx].get_or_insert_with(|| vec![0.0; len]);
    f(slot);
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

impl<'p> Graph<'p> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'p, Tensor>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_owned(&mut self, op: &'static str, shape: Vec<usize>, data: Vec<f64>, node: Op) -> Result<Var> {
        check_finite(op, &data)?;
        let needs = self.op_needs_grad(&node);
        Ok(self.push(Cow::Owned(Tensor::from_parts(shape, data)), node, needs))
    }

    fn op_needs_grad(&self, op: &Op) -> bool {
        let ng = |v: &Var| self.nodes[v.0].needs_grad;
        match op {
            Op::Leaf => false,
            Op::Conv2d {
                input, weight, bias, ..
            } => ng(input) || ng(weight) || ng(bias),
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => ng(a) || ng(b),
            Op::Relu(x)
            | Op::Transpose(x)
            | Op::Scale(x, _)
            | Op::Sigmoid(x)
            | Op::Tanh(x)
            | Op::Sum(x)
            | Op::Reshape(x) => ng(x),
            Op::Dropout { input, .. } | Op::Column { input, .. } => ng(input),
            Op::StackColumns(vs) => vs.iter().any(ng),
        }
    }

    /// A value that is never differentiated.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Cow::Owned(t), Op::Leaf, false)
    }

    pub fn constant_ref(&mut self, t: &'p Tensor) -> Var {
        self.push(Cow::Borrowed(t), Op::Leaf, false)
    }

    /// An owned leaf whose gradient is reported by [`Graph::backward`].
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(Cow::Owned(t), Op::Leaf, true)
    }

    /// A borrowed leaf whose gradient is reported by [`Graph::backward`].
    pub fn param(&mut self, t: &'p Tensor) -> Var {
        self.push(Cow::Borrowed(t), Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    /// 2-D convolution with zero padding over `[C, H, W]` or a batch `[N, C, H, W]`.
    /// `weight` is `[C_out, C_in, k, k]` with odd `k`; `bias` is `[C_out]`.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var, stride: usize, padding: usize) -> Result<Var> {
        const OP: &str = "conv2d";
        let xs = self.shape(input).to_vec();
        let ws = self.shape(weight).to_vec();
        let bs = self.shape(bias).to_vec();
        let (batch, c_in, h, w, batched) = match xs.as_slice() {
            &[c, h, w] => (1, c, h, w, false),
            &[n, c, h, w] => (n, c, h, w, true),
            _ => return Err(Error::invalid(OP, format!("input must be rank 3 or 4, got {xs:?}"))),
        };
        let &[c_out, wc_in, kh, kw] = ws.as_slice() else {
            return Err(Error::invalid(OP, format!("weight must be rank 4, got {ws:?}")));
        };
        if wc_in != c_in {
            return Err(Error::shape(OP, &xs, &ws));
        }
        if kh != kw || kh % 2 == 0 {
            return Err(Error::invalid(OP, format!("kernel must be square and odd, got {kh}x{kw}")));
        }
        if bs != [c_out] {
            return Err(Error::shape(OP, &ws, &bs));
        }
        if stride == 0 {
            return Err(Error::invalid(OP, "stride must be at least 1"));
        }
        if h + 2 * padding < kh || w + 2 * padding < kw {
            return Err(Error::invalid(
                OP,
                format!("padded input {}x{} smaller than kernel {kh}", h + 2 * padding, w + 2 * padding),
            ));
        }
        let geom = ConvGeom::new(c_in, h, w, kh, stride, padding);
        let (p, kl) = (geom.out_pixels(), geom.patch_len());
        let ld = batch * p;
        let mut cols = vec![0.0; kl * ld];
        let x = self.data(input);
        for n in 0..batch {
            kernels::im2col(&geom, &x[n * c_in * h * w..(n + 1) * c_in * h * w], &mut cols, ld, n * p);
        }
        let mut out_mat = vec![0.0; c_out * ld];
        kernels::gemm(c_out, kl, ld, 1.0, self.data(weight), false, &cols, false, 0.0, &mut out_mat);
        let b = self.data(bias);
        let mut out = vec![0.0; batch * c_out * p];
        for n in 0..batch {
            for co in 0..c_out {
                let src = &out_mat[co * ld + n * p..co * ld + (n + 1) * p];
                let dst = &mut out[(n * c_out + co) * p..(n * c_out + co + 1) * p];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = s + b[co];
                }
            }
        }
        let shape = if batched {
            vec![batch, c_out, geom.ho, geom.wo]
        } else {
            vec![c_out, geom.ho, geom.wo]
        };
        let keep_cols = self.nodes[weight.0].needs_grad;
        let node = Op::Conv2d {
            input,
            weight,
            bias,
            geom,
            batch,
            c_out,
            cols: keep_cols.then_some(cols),
        };
        self.push_owned(OP, shape, out, node)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let data = self.data(x).iter().map(|&v| v.max(0.0)).collect();
        let shape = self.shape(x).to_vec();
        self.push_owned("relu", shape, data, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let data = self.data(x).iter().map(|&v| sigmoid(v)).collect();
        let shape = self.shape(x).to_vec();
        self.push_owned("sigmoid", shape, data, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let data = self.data(x).iter().map(|&v| v.tanh()).collect();
        let shape = self.shape(x).to_vec();
        self.push_owned("tanh", shape, data, Op::Tanh(x))
    }

    /// Matrix product. `a` is `[m, k]`; `b` is `[k, n]` (result `[m, n]`)
    /// or a vector `[k]` (result `[m]`).
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        const OP: &str = "matmul";
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let &[m, k] = sa.as_slice() else {
            return Err(Error::shape(OP, &sa, &sb));
        };
        match *sb.as_slice() {
            [kb] if kb == k => {
                let mut y = vec![0.0; m];
                kernels::matvec(m, k, self.data(a), self.data(b), &mut y);
                self.push_owned(OP, vec![m], y, Op::MatMul(a, b))
            }
            [kb, n] if kb == k => {
                let mut y = vec![0.0; m * n];
                kernels::gemm(m, k, n, 1.0, self.data(a), false, self.data(b), false, 0.0, &mut y);
                self.push_owned(OP, vec![m, n], y, Op::MatMul(a, b))
            }
            _ => Err(Error::shape(OP, &sa, &sb)),
        }
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let &[r, c] = s.as_slice() else {
            return Err(Error::invalid("transpose", format!("expected a matrix, got {s:?}")));
        };
        let src = self.data(x);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        self.push_owned("transpose", vec![c, r], out, Op::Transpose(x))
    }

    fn zip_same(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, node: Op) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        let data = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| f(x, y)).collect();
        let shape = self.shape(a).to_vec();
        self.push_owned(op, shape, data, node)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        let data = self.data(x).iter().map(|&v| v * s).collect();
        let shape = self.shape(x).to_vec();
        self.push_owned("scale", shape, data, Op::Scale(x, s))
    }

    /// Sum of all entries, shape `[1]`.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let total = self.data(x).iter().sum();
        self.push_owned("sum", vec![1], vec![total], Op::Sum(x))
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let shape = shape.into();
        if shape.iter().product::<usize>() != self.value(x).len() || shape.contains(&0) {
            return Err(Error::shape("reshape", self.shape(x), &shape));
        }
        let data = self.data(x).to_vec();
        self.push_owned("reshape", shape, data, Op::Reshape(x))
    }

    /// Column `index` of a matrix, as a vector.
    pub fn column(&mut self, x: Var, index: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let &[r, c] = s.as_slice() else {
            return Err(Error::invalid("column", format!("expected a matrix, got {s:?}")));
        };
        if index >= c {
            return Err(Error::invalid("column", format!("index {index} out of range for {s:?}")));
        }
        let src = self.data(x);
        let data = (0..r).map(|i| src[i * c + index]).collect();
        self.push_owned("column", vec![r], data, Op::Column { input: x, index })
    }

    /// Stacks equal-length vectors as the columns of a matrix.
    pub fn stack_columns(&mut self, cols: &[Var]) -> Result<Var> {
        let Some(&first) = cols.first() else {
            return Err(Error::invalid("stack_columns", "no columns given"));
        };
        let s0 = self.shape(first).to_vec();
        let &[r] = s0.as_slice() else {
            return Err(Error::invalid("stack_columns", format!("expected vectors, got {s0:?}")));
        };
        let n = cols.len();
        let mut out = vec![0.0; r * n];
        for (j, &v) in cols.iter().enumerate() {
            if self.shape(v) != s0.as_slice() {
                return Err(Error::shape("stack_columns", &s0, self.shape(v)));
            }
            for (i, &x) in self.data(v).iter().enumerate() {
                out[i * n + j] = x;
            }
        }
        self.push_owned("stack_columns", vec![r, n], out, Op::StackColumns(cols.to_vec()))
    }

    /// Inverted dropout: in training mode each entry is zeroed with
    /// probability `rate` and survivors are scaled by `1 / (1 - rate)`.
    /// Inference mode (or `rate == 0`) is the identity and draws nothing.
    pub fn dropout(&mut self, x: Var, rate: f64, training: bool, rng: &mut Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid("dropout", format!("rate must be in [0, 1), got {rate}")));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(x).len())
            .map(|_| if rng.uniform() < rate { 0.0 } else { keep })
            .collect();
        let data = self.data(x).iter().zip(&mask).map(|(v, m)| v * m).collect();
        let shape = self.shape(x).to_vec();
        self.push_owned("dropout", shape, data, Op::Dropout { input: x, mask })
    }

    /// Reverse pass from a one-element `loss`.
    ///
    /// A graph can be differentiated once; later calls fail with
    /// [`Error::GraphConsumed`].
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::GraphConsumed);
        }
        if self.value(loss).len() != 1 {
            return Err(Error::NotScalar(self.shape(loss).to_vec()));
        }
        self.consumed = true;

        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        // Rank-one contributions to leaf matrices, flushed as one product at the end.
        let mut deferred: Vec<Vec<(Vec<f64>, usize)>> = (0..n).map(|_| Vec::new()).collect();
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let out = node.value.data();
            let len_of = |v: &Var| self.nodes[v.0].value.len();
            let ng = |v: &Var| self.nodes[v.0].needs_grad;
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Conv2d {
                    input,
                    weight,
                    bias,
                    geom,
                    batch,
                    c_out,
                    cols,
                } => {
                    let (p, kl, nb, co) = (geom.out_pixels(), geom.patch_len(), *batch, *c_out);
                    let ld = nb * p;
                    let mut dy = vec![0.0; co * ld];
                    for b in 0..nb {
                        for c in 0..co {
                            dy[c * ld + b * p..c * ld + (b + 1) * p]
                                .copy_from_slice(&g[(b * co + c) * p..(b * co + c + 1) * p]);
                        }
                    }
                    if ng(bias) {
                        accumulate(&mut grads, bias.0, co, |db| {
                            for (c, d) in db.iter_mut().enumerate() {
                                *d += dy[c * ld..(c + 1) * ld].iter().sum::<f64>();
                            }
                        });
                    }
                    if ng(weight) {
                        let cols = cols.as_ref().expect("cols kept when weight needs grad");
                        accumulate(&mut grads, weight.0, co * kl, |dw| {
                            kernels::gemm(co, ld, kl, 1.0, &dy, false, cols, true, 1.0, dw);
                        });
                    }
                    if ng(input) {
                        let mut dcols = vec![0.0; kl * ld];
                        let w = self.nodes[weight.0].value.data();
                        kernels::gemm(kl, co, ld, 1.0, w, true, &dy, false, 0.0, &mut dcols);
                        let img = geom.c_in * geom.h * geom.w;
                        accumulate(&mut grads, input.0, nb * img, |dx| {
                            for b in 0..nb {
                                kernels::col2im_acc(geom, &dcols, ld, b * p, &mut dx[b * img..(b + 1) * img]);
                            }
                        });
                    }
                }
                Op::Relu(x) => accumulate(&mut grads, x.0, g.len(), |dx| {
                    for ((d, &gi), &o) in dx.iter_mut().zip(&g).zip(out) {
                        if o > 0.0 {
                            *d += gi;
                        }
                    }
                }),
                Op::Sigmoid(x) => accumulate(&mut grads, x.0, g.len(), |dx| {
                    for ((d, &gi), &y) in dx.iter_mut().zip(&g).zip(out) {
                        *d += gi * y * (1.0 - y);
                    }
                }),
                Op::Tanh(x) => accumulate(&mut grads, x.0, g.len(), |dx| {
                    for ((d, &gi), &y) in dx.iter_mut().zip(&g).zip(out) {
                        *d += gi * (1.0 - y * y);
                    }
                }),
                Op::MatMul(a, b) => {
                    let sa = self.nodes[a.0].value.shape();
                    let (m, k) = (sa[0], sa[1]);
                    let av = self.nodes[a.0].value.data();
                    let bv = self.nodes[b.0].value.data();
                    let vector_rhs = self.nodes[b.0].value.rank() == 1;
                    if vector_rhs {
                        if ng(b) {
                            accumulate(&mut grads, b.0, k, |db| kernels::matvec_t_acc(m, k, av, &g, db));
                        }
                        if ng(a) {
                            if matches!(self.nodes[a.0].op, Op::Leaf) {
                                deferred[a.0].push((g.clone(), b.0));
                            } else {
                                accumulate(&mut grads, a.0, m * k, |da| {
                                    kernels::gemm(m, 1, k, 1.0, &g, false, bv, false, 1.0, da)
                                });
                            }
                        }
                    } else {
                        let nn = self.nodes[b.0].value.shape()[1];
                        if ng(a) {
                            accumulate(&mut grads, a.0, m * k, |da| {
                                kernels::gemm(m, nn, k, 1.0, &g, false, bv, true, 1.0, da)
                            });
                        }
                        if ng(b) {
                            accumulate(&mut grads, b.0, k * nn, |db| {
                                kernels::gemm(k, m, nn, 1.0, av, true, &g, false, 1.0, db)
                            });
                        }
                    }
                }
                Op::Transpose(x) => {
                    let s = self.nodes[x.0].value.shape();
                    let (r, c) = (s[0], s[1]);
                    accumulate(&mut grads, x.0, r * c, |dx| {
                        for i in 0..r {
                            for j in 0..c {
                                dx[i * c + j] += g[j * r + i];
                            }
                        }
                    });
                }
                Op::Add(a, b) => {
                    if ng(a) {
                        accumulate(&mut grads, a.0, g.len(), |d| add_into(d, &g));
                    }
                    if ng(b) {
                        accumulate(&mut grads, b.0, g.len(), |d| add_into(d, &g));
                    }
                }
                Op::Sub(a, b) => {
                    if ng(a) {
                        accumulate(&mut grads, a.0, g.len(), |d| add_into(d, &g));
                    }
                    if ng(b) {
                        accumulate(&mut grads, b.0, g.len(), |d| {
                            for (x, gi) in d.iter_mut().zip(&g) {
                                *x -= gi;
                            }
                        });
                    }
                }
                Op::Mul(a, b) => {
                    let av = self.nodes[a.0].value.data();
                    let bv = self.nodes[b.0].value.data();
                    if ng(a) {
                        accumulate(&mut grads, a.0, g.len(), |d| {
                            for ((x, gi), bi) in d.iter_mut().zip(&g).zip(bv) {
                                *x += gi * bi;
                            }
                        });
                    }
                    if ng(b) {
                        accumulate(&mut grads, b.0, g.len(), |d| {
                            for ((x, gi), ai) in d.iter_mut().zip(&g).zip(av) {
                                *x += gi * ai;
                            }
                        });
                    }
                }
                Op::Scale(x, s) => accumulate(&mut grads, x.0, g.len(), |d| {
                    for (x, gi) in d.iter_mut().zip(&g) {
                        *x += s * gi;
                    }
                }),
                Op::Dropout { input, mask } => accumulate(&mut grads, input.0, g.len(), |d| {
                    for ((x, gi), m) in d.iter_mut().zip(&g).zip(mask) {
                        *x += gi * m;
                    }
                }),
                Op::Sum(x) => {
                    let n = len_of(x);
                    accumulate(&mut grads, x.0, n, |d| {
                        for v in d.iter_mut() {
                            *v += g[0];
                        }
                    });
                }
                Op::Reshape(x) => accumulate(&mut grads, x.0, g.len(), |d| add_into(d, &g)),
                Op::Column { input, index } => {
                    let s = self.nodes[input.0].value.shape();
                    let (r, c) = (s[0], s[1]);
                    accumulate(&mut grads, input.0, r * c, |d| {
                        for i in 0..r {
                            d[i * c + index] += g[i];
                        }
                    });
                }
                Op::StackColumns(vs) => {
                    let nc = vs.len();
                    for (j, v) in vs.iter().enumerate() {
                        if !ng(v) {
                            continue;
                        }
                        let r = len_of(v);
                        accumulate(&mut grads, v.0, r, |d| {
                            for i in 0..r {
                                d[i] += g[i * nc + j];
                            }
                        });
                    }
                }
            }
        }

        for (leaf, pending) in deferred.into_iter().enumerate() {
            if pending.is_empty() {
                continue;
            }
            let s = self.nodes[leaf].value.shape();
            let (m, k, p) = (s[0], s[1], pending.len());
            let mut gs = Vec::with_capacity(p * m);
            let mut xs = Vec::with_capacity(p * k);
            for (g, x) in &pending {
                gs.extend_from_slice(g);
                xs.extend_from_slice(self.nodes[*x].value.data());
            }
            accumulate(&mut grads, leaf, m * k, |d| {
                kernels::gemm(m, p, k, 1.0, &gs, true, &xs, false, 1.0, d)
            });
        }

        let mut out = Vec::with_capacity(n);
        for (node, g) in self.nodes.iter().zip(grads) {
            let keep = node.needs_grad && matches!(node.op, Op::Leaf);
            out.push(match (keep, g) {
                (true, Some(g)) => {
                    check_finite("backward", &g)?;
                    Some(Tensor::from_parts(node.value.shape().to_vec(), g))
                }
                _ => None,
            });
        }
        Ok(Gradients { grads: out })
    }
}
