//! Reverse-mode tape. Nodes are appended in evaluation order, so the tape is
//! topologically sorted by construction and backward is a single reverse sweep.

use super::ops::{conv2d_backward, conv2d_forward, conv_geom, ConvGeom};
use super::{Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// `k / 2` on each side; preserves H and W for odd kernels.
    Same,
    Explicit(usize),
}

impl Padding {
    fn resolve(self, kh: usize, kw: usize) -> Result<usize, TensorError> {
        match self {
            Padding::Explicit(p) => Ok(p),
            Padding::Same if kh == kw && kh % 2 == 1 => Ok(kh / 2),
            Padding::Same => Err(TensorError::InvalidShape {
                op: "conv2d",
                reason: format!("same padding needs a square odd kernel, got {kh}x{kw}"),
            }),
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
        depthwise: bool,
    },
    Relu(Var),
    Add(Var, Var),
    ScaledAdd(Var, Var, f64),
    L1(Var, Var),
    MatVec(Var, Var),
    DotConst(Var, Tensor),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node that requires them.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient, or zeros of the given shape when the variable was unreachable.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(), TensorError> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Ok(())
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn conv_impl(&mut self, x: Var, w: Var, b: Option<Var>, padding: Padding, depthwise: bool) -> Result<Var, TensorError> {
        let (xv, wv) = (self.value(x), self.value(w));
        let (_, _, kh, kw) = wv.dims4()?;
        let pad = padding.resolve(kh, kw)?;
        let bv = b.map(|b| self.value(b));
        let geom = conv_geom(xv, wv, bv, pad, depthwise)?;
        let out = conv2d_forward(xv, wv, bv, &geom, depthwise);
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(
            out,
            Op::Conv {
                x,
                w,
                b,
                geom,
                depthwise,
            },
            rg,
        ))
    }

    /// Cross-correlation `x ⋆ w + b`; `w` is `[Cout, Cin, kh, kw]`, `b` is `[Cout]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, padding: Padding) -> Result<Var, TensorError> {
        self.conv_impl(x, w, b, padding, false)
    }

    /// Per-channel correlation; `w` is `[C, 1, kh, kw]`, `b` is `[C]`.
    pub fn depthwise_conv2d(&mut self, x: Var, w: Var, b: Option<Var>, padding: Padding) -> Result<Var, TensorError> {
        self.conv_impl(x, w, b, padding, true)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        let rg = self.rg(x);
        self.push(out, Op::Relu(x), rg)
    }

    pub fn add(&mut self, x: Var, y: Var) -> Result<Var, TensorError> {
        same_shape("add", self.value(x), self.value(y))?;
        let out = self.value(x).zip_with(self.value(y), |a, b| a + b)?;
        let rg = self.rg(x) || self.rg(y);
        Ok(self.push(out, Op::Add(x, y), rg))
    }

    /// `x + c·y`.
    pub fn scaled_add(&mut self, x: Var, y: Var, c: f64) -> Result<Var, TensorError> {
        same_shape("scaled_add", self.value(x), self.value(y))?;
        let out = self.value(x).zip_with(self.value(y), |a, b| a + c * b)?;
        let rg = self.rg(x) || self.rg(y);
        Ok(self.push(out, Op::ScaledAdd(x, y, c), rg))
    }

    /// Mean absolute error over all elements.
    pub fn l1_loss(&mut self, pred: Var, target: Var) -> Result<Var, TensorError> {
        same_shape("l1_loss", self.value(pred), self.value(target))?;
        let (p, t) = (self.value(pred), self.value(target));
        let n = p.numel().max(1) as f64;
        let sum: f64 = p.data().iter().zip(t.data()).map(|(a, b)| (a - b).abs()).sum();
        let rg = self.rg(pred) || self.rg(target);
        Ok(self.push(Tensor::scalar(sum / n), Op::L1(pred, target), rg))
    }

    /// `W x` for `W: [m, n]`, `x: [n]`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var, TensorError> {
        let (wv, xv) = (self.value(w), self.value(x));
        let (m, n) = match wv.shape()[..] {
            [m, n] if xv.shape() == [n] => (m, n),
            _ => {
                return Err(TensorError::ShapeMismatch {
                    op: "matvec",
                    left: wv.shape().to_vec(),
                    right: xv.shape().to_vec(),
                })
            }
        };
        let out = Tensor::from_fn(&[m], |i| (0..n).map(|j| wv.data()[i * n + j] * xv.data()[j]).sum());
        let rg = self.rg(w) || self.rg(x);
        Ok(self.push(out, Op::MatVec(w, x), rg))
    }

    /// Scalar `Σ x_i c_i` with constant weights `c`.
    pub fn dot_const(&mut self, x: Var, weights: &Tensor) -> Result<Var, TensorError> {
        same_shape("dot_const", self.value(x), weights)?;
        let s: f64 = self.value(x).data().iter().zip(weights.data()).map(|(a, b)| a * b).sum();
        let rg = self.rg(x);
        Ok(self.push(Tensor::scalar(s), Op::DotConst(x, weights.clone()), rg))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(TensorError::NotScalar(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign_scaled(&g, 1.0),
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            match &node.op {
                Op::Leaf => {}
                Op::Conv {
                    x,
                    w,
                    b,
                    geom,
                    depthwise,
                } => {
                    let cg = conv2d_backward(self.value(*x), self.value(*w), &g, geom, *depthwise);
                    if self.rg(*x) {
                        acc(&mut grads, *x, cg.dx);
                    }
                    if self.rg(*w) {
                        acc(&mut grads, *w, cg.dw);
                    }
                    if let Some(b) = b.filter(|b| self.rg(*b)) {
                        acc(&mut grads, b, cg.db);
                    }
                }
                Op::Relu(x) => {
                    let gx = self.value(*x).zip_with(&g, |v, gv| if v > 0.0 { gv } else { 0.0 })?;
                    acc(&mut grads, *x, gx);
                }
                Op::Add(x, y) => {
                    if self.rg(*x) {
                        acc(&mut grads, *x, g.clone());
                    }
                    if self.rg(*y) {
                        acc(&mut grads, *y, g.clone());
                    }
                }
                Op::ScaledAdd(x, y, c) => {
                    if self.rg(*x) {
                        acc(&mut grads, *x, g.clone());
                    }
                    if self.rg(*y) {
                        acc(&mut grads, *y, g.map(|v| c * v));
                    }
                }
                Op::L1(p, t) => {
                    let (pv, tv) = (self.value(*p), self.value(*t));
                    let scale = g.item() / pv.numel().max(1) as f64;
                    let sign = pv.zip_with(tv, |a, b| scale * sign(a - b))?;
                    if self.rg(*t) {
                        acc(&mut grads, *t, sign.map(|v| -v));
                    }
                    if self.rg(*p) {
                        acc(&mut grads, *p, sign);
                    }
                }
                Op::MatVec(w, x) => {
                    let (wv, xv) = (self.value(*w), self.value(*x));
                    let (m, n) = (wv.shape()[0], wv.shape()[1]);
                    if self.rg(*w) {
                        let gw = Tensor::from_fn(&[m, n], |k| g.data()[k / n] * xv.data()[k % n]);
                        acc(&mut grads, *w, gw);
                    }
                    if self.rg(*x) {
                        let gx = Tensor::from_fn(&[n], |j| (0..m).map(|i| wv.data()[i * n + j] * g.data()[i]).sum());
                        acc(&mut grads, *x, gx);
                    }
                }
                Op::DotConst(x, c) => {
                    let s = g.item();
                    acc(&mut grads, *x, c.map(|v| s * v));
                }
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
