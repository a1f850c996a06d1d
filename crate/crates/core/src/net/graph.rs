//! Reverse-mode differentiation over a recorded tape.
//!
//! Every operation appends a node holding its value. [`Graph::backward`]
//! walks the tape once in reverse and returns the gradients of a scalar.

use crate::error::{Error, Result};
use crate::net::kernels::{conv2d_backward, conv2d_forward, upconv2x_backward, upconv2x_forward, ConvGeom};
use crate::net::tensor::Tensor;

/// Floor on the prediction norm inside the cosine loss.
pub const COSINE_EPS: f64 = 1e-8;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    UpConv {
        x: Var,
        w: Var,
        b: Option<Var>,
        dims: [usize; 4],
        out_channels: usize,
    },
    Add(Var, Var),
    Relu(Var),
    Concat(Var, Var),
    Sum(Var),
    SumSquares(Var),
    Scale(Var, f64),
    Cosine {
        pred: Var,
        target: Vec<f64>,
        mask: Vec<bool>,
        count: usize,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// A tape of tensor operations.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of one scalar with respect to every node that needs them.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of `var`, or `None` when nothing flowed into it.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Takes the gradient out, substituting zeros of `shape` when absent.
    pub fn take_or_zeros(&mut self, var: Var, shape: &[usize]) -> Tensor {
        self.grads[var.0].take().unwrap_or_else(|| Tensor::zeros(shape))
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        debug_assert!(value.is_finite(), "non-finite value produced by {op:?}");
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A constant input.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    fn needs(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn any_needs(&self, vars: &[Option<Var>]) -> bool {
        vars.iter().flatten().any(|v| self.needs(*v))
    }

    /// Cross-correlation; `w` is `[O, C, k, k]`, `b` is `[O]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let xd = self.value(x).dims4("conv2d input")?;
        let wd = self.value(w).dims4("conv2d weight")?;
        let [o, c, kh, kw] = wd;
        if c != xd[1] || kh != kw {
            return Err(Error::ShapeMismatch(format!(
                "conv2d weight {wd:?} does not fit input {xd:?}"
            )));
        }
        if let Some(b) = b {
            if self.value(b).shape() != [o] {
                return Err(Error::ShapeMismatch(format!(
                    "conv2d bias {:?}, expected [{o}]",
                    self.value(b).shape()
                )));
            }
        }
        let geom = ConvGeom::new(xd, o, kh, stride, padding)
            .ok_or_else(|| Error::ShapeMismatch(format!("kernel {kh} stride {stride} pad {padding} on {xd:?}")))?;
        let mut out = Tensor::zeros(&[xd[0], o, geom.out_height, geom.out_width]);
        conv2d_forward(
            &geom,
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            out.data_mut(),
        );
        let rg = self.any_needs(&[Some(x), Some(w), b]);
        Ok(self.push(out, Op::Conv2d { x, w, b, geom }, rg))
    }

    /// Transposed 2x2 stride-2 convolution; `w` is `[C, O, 2, 2]`, `b` is `[O]`.
    pub fn upconv2x(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let dims = self.value(x).dims4("upconv input")?;
        let wd = self.value(w).dims4("upconv weight")?;
        if wd[0] != dims[1] || wd[2] != 2 || wd[3] != 2 {
            return Err(Error::ShapeMismatch(format!(
                "upconv weight {wd:?} does not fit input {dims:?}"
            )));
        }
        let out_channels = wd[1];
        if let Some(b) = b {
            if self.value(b).shape() != [out_channels] {
                return Err(Error::ShapeMismatch(format!(
                    "upconv bias {:?}, expected [{out_channels}]",
                    self.value(b).shape()
                )));
            }
        }
        let mut out = Tensor::zeros(&[dims[0], out_channels, 2 * dims[2], 2 * dims[3]]);
        upconv2x_forward(
            dims,
            out_channels,
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            out.data_mut(),
        );
        let rg = self.any_needs(&[Some(x), Some(w), b]);
        Ok(self.push(
            out,
            Op::UpConv {
                x,
                w,
                b,
                dims,
                out_channels,
            },
            rg,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::ShapeMismatch(format!("add {:?} + {:?}", va.shape(), vb.shape())));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let data = va.data().iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
        let out = Tensor::new(va.shape().to_vec(), data).expect("same shape");
        let rg = self.needs(a);
        self.push(out, Op::Relu(a), rg)
    }

    /// Channel concatenation of two NCHW tensors.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let da = self.value(a).dims4("concat lhs")?;
        let db = self.value(b).dims4("concat rhs")?;
        if da[0] != db[0] || da[2] != db[2] || da[3] != db[3] {
            return Err(Error::ShapeMismatch(format!("concat {da:?} with {db:?}")));
        }
        let (sa, sb) = (da[1] * da[2] * da[3], db[1] * db[2] * db[3]);
        let mut data = Vec::with_capacity(da[0] * (sa + sb));
        for n in 0..da[0] {
            data.extend_from_slice(&self.value(a).data()[n * sa..(n + 1) * sa]);
            data.extend_from_slice(&self.value(b).data()[n * sb..(n + 1) * sb]);
        }
        let out = Tensor::new(vec![da[0], da[1] + db[1], da[2], da[3]], data)?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Concat(a, b), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.needs(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().map(|v| v * v).sum();
        let rg = self.needs(a);
        self.push(Tensor::scalar(s), Op::SumSquares(a), rg)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let va = self.value(a);
        let data = va.data().iter().map(|v| v * factor).collect();
        let out = Tensor::new(va.shape().to_vec(), data).expect("same shape");
        let rg = self.needs(a);
        self.push(out, Op::Scale(a, factor), rg)
    }

    /// Masked mean of `1 - <p, n> / max(|p|, eps)` over pixels.
    ///
    /// `pred` is `[N, 3, H, W]`; `target` has the same layout and `mask`
    /// holds `N * H * W` flags.
    pub fn cosine_loss(&mut self, pred: Var, target: &[f64], mask: &[bool]) -> Result<Var> {
        let [n, c, h, w] = self.value(pred).dims4("cosine prediction")?;
        if c != 3 || target.len() != n * 3 * h * w || mask.len() != n * h * w {
            return Err(Error::ShapeMismatch(format!(
                "cosine loss on [{n}, {c}, {h}, {w}] with {} targets and {} mask flags",
                target.len(),
                mask.len()
            )));
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(Error::EmptyMask);
        }
        let p = self.value(pred).data();
        let hw = h * w;
        let mut total = 0.0;
        for b in 0..n {
            for i in 0..hw {
                if !mask[b * hw + i] {
                    continue;
                }
                let at = |k: usize| b * 3 * hw + k * hw + i;
                let (mut s, mut pp) = (0.0, 0.0);
                for k in 0..3 {
                    s += p[at(k)] * target[at(k)];
                    pp += p[at(k)] * p[at(k)];
                }
                total += 1.0 - s / pp.sqrt().max(COSINE_EPS);
            }
        }
        let rg = self.needs(pred);
        Ok(self.push(
            Tensor::scalar(total / count as f64),
            Op::Cosine {
                pred,
                target: target.to_vec(),
                mask: mask.to_vec(),
                count,
            },
            rg,
        ))
    }

    /// Gradients of the scalar `loss` with respect to every node on the tape.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "backward needs a scalar, got {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            debug_assert!(g.is_finite(), "non-finite gradient at node {idx}");
            self.propagate(&node.op, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate<'a>(&self, grads: &'a mut [Option<Tensor>], var: Var) -> Option<&'a mut [f64]> {
        if !self.needs(var) {
            return None;
        }
        let slot = &mut grads[var.0];
        if slot.is_none() {
            *slot = Some(Tensor::zeros(self.value(var).shape()));
        }
        slot.as_mut().map(|t| t.data_mut())
    }

    fn propagate(&self, op: &Op, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        match op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, geom } => {
                let mut dx = self.accumulate(grads, *x).map(|s| s.to_vec());
                let mut dw = self.accumulate(grads, *w).map(|s| s.to_vec());
                let mut db = b.and_then(|b| self.accumulate(grads, b)).map(|s| s.to_vec());
                conv2d_backward(
                    geom,
                    self.value(*x).data(),
                    self.value(*w).data(),
                    gd,
                    dx.as_deref_mut(),
                    dw.as_deref_mut(),
                    db.as_deref_mut(),
                );
                store(grads, *x, dx);
                store(grads, *w, dw);
                if let Some(b) = b {
                    store(grads, *b, db);
                }
            }
            Op::UpConv {
                x,
                w,
                b,
                dims,
                out_channels,
            } => {
                let mut dx = self.accumulate(grads, *x).map(|s| s.to_vec());
                let mut dw = self.accumulate(grads, *w).map(|s| s.to_vec());
                let mut db = b.and_then(|b| self.accumulate(grads, b)).map(|s| s.to_vec());
                upconv2x_backward(
                    *dims,
                    *out_channels,
                    self.value(*x).data(),
                    self.value(*w).data(),
                    gd,
                    dx.as_deref_mut(),
                    dw.as_deref_mut(),
                    db.as_deref_mut(),
                );
                store(grads, *x, dx);
                store(grads, *w, dw);
                if let Some(b) = b {
                    store(grads, *b, db);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(d) = self.accumulate(grads, v) {
                        d.iter_mut().zip(gd).for_each(|(d, g)| *d += g);
                    }
                }
            }
            Op::Relu(a) => {
                let xa = self.value(*a).data();
                if let Some(d) = self.accumulate(grads, *a) {
                    for ((d, g), x) in d.iter_mut().zip(gd).zip(xa) {
                        if *x > 0.0 {
                            *d += g;
                        }
                    }
                }
            }
            Op::Concat(a, b) => {
                let da = self.value(*a).shape().to_vec();
                let db = self.value(*b).shape().to_vec();
                let (sa, sb) = (da[1] * da[2] * da[3], db[1] * db[2] * db[3]);
                if let Some(d) = self.accumulate(grads, *a) {
                    for n in 0..da[0] {
                        let src = &gd[n * (sa + sb)..n * (sa + sb) + sa];
                        d[n * sa..(n + 1) * sa].iter_mut().zip(src).for_each(|(d, g)| *d += g);
                    }
                }
                if let Some(d) = self.accumulate(grads, *b) {
                    for n in 0..db[0] {
                        let src = &gd[n * (sa + sb) + sa..(n + 1) * (sa + sb)];
                        d[n * sb..(n + 1) * sb].iter_mut().zip(src).for_each(|(d, g)| *d += g);
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(d) = self.accumulate(grads, *a) {
                    d.iter_mut().for_each(|d| *d += gd[0]);
                }
            }
            Op::SumSquares(a) => {
                let xa = self.value(*a).data();
                if let Some(d) = self.accumulate(grads, *a) {
                    d.iter_mut().zip(xa).for_each(|(d, x)| *d += 2.0 * x * gd[0]);
                }
            }
            Op::Scale(a, f) => {
                if let Some(d) = self.accumulate(grads, *a) {
                    d.iter_mut().zip(gd).for_each(|(d, g)| *d += f * g);
                }
            }
            Op::Cosine {
                pred,
                target,
                mask,
                count,
            } => {
                let p = self.value(*pred).data();
                let [n, _, h, w] = self.value(*pred).dims4("cosine prediction").expect("checked on record");
                let hw = h * w;
                let coef = -gd[0] / *count as f64;
                if let Some(d) = self.accumulate(grads, *pred) {
                    for b in 0..n {
                        for i in 0..hw {
                            if !mask[b * hw + i] {
                                continue;
                            }
                            let at = |k: usize| b * 3 * hw + k * hw + i;
                            let (mut s, mut pp) = (0.0, 0.0);
                            for k in 0..3 {
                                s += p[at(k)] * target[at(k)];
                                pp += p[at(k)] * p[at(k)];
                            }
                            let q = pp.sqrt();
                            for k in 0..3 {
                                let ds = if q > COSINE_EPS {
                                    target[at(k)] / q - s * p[at(k)] / (q * q * q)
                                } else {
                                    target[at(k)] / COSINE_EPS
                                };
                                d[at(k)] += coef * ds;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn store(grads: &mut [Option<Tensor>], var: Var, value: Option<Vec<f64>>) {
    if let (Some(v), Some(slot)) = (value, grads[var.0].as_mut()) {
        slot.data_mut().copy_from_slice(&v);
    }
}
