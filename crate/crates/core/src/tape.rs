//! Reverse-mode differentiation over recorded tensor operations.
//!
//! A [`Tape`] records every operation whose result depends on a
//! differentiable leaf. Values are computed eagerly; [`Tape::backward`] walks
//! the recorded nodes in reverse and applies each operation's hand-written
//! adjoint. Operations on constants only are not recorded at all, and an
//! [`inference`](Tape::inference) tape records nothing, so intermediate
//! tensors are freed as soon as the caller drops them.
//!
//! ```
//! use g2hf::{Tape, Tensor};
//!
//! let x = Tensor::from_fn(&[1, 2, 2], |i| i as f64);
//! let tape = Tape::new();
//! let xv = tape.leaf(x);
//! let loss = tape.sum(&tape.pixel_unshuffle(&xv, 2).unwrap());
//! let grads = tape.backward(&loss).unwrap();
//! assert_eq!(grads.get(&xv).unwrap().data(), &[1.0; 4]);
//! ```

use std::cell::RefCell;
use std::collections::HashMap;
use std::marker::PhantomData;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::objective::loss;
use crate::ops;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
enum Value<'p> {
    Owned(Arc<Tensor>),
    Borrowed(&'p Tensor),
}

/// A value produced on a [`Tape`]. Cloning is cheap.
#[derive(Clone, Debug)]
pub struct Var<'p> {
    value: Value<'p>,
    id: Option<usize>,
}

impl<'p> Var<'p> {
    pub fn value(&self) -> &Tensor {
        match &self.value {
            Value::Owned(t) => t,
            Value::Borrowed(t) => t,
        }
    }

    pub fn shape(&self) -> &[usize] {
        self.value().shape()
    }

    /// Whether gradients flow into this value.
    pub fn tracked(&self) -> bool {
        self.id.is_some()
    }

    pub fn to_tensor(&self) -> Tensor {
        self.value().clone()
    }
}

/// Deliberate adjoint corruption, used to prove that gradient checks can fail.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fault {
    /// Operation name as reported by [`Tape::op_names`].
    pub op: &'static str,
    pub scale: f64,
}

enum Op<'p> {
    Leaf,
    Conv { x: Var<'p>, w: Var<'p>, b: Var<'p>, stride: usize, pad: usize },
    Matmul { a: Var<'p>, b: Var<'p> },
    Transpose { x: Var<'p> },
    Reshape { x: Var<'p> },
    Unshuffle { x: Var<'p>, r: usize },
    Shuffle { x: Var<'p>, r: usize },
    ChannelMax { x: Var<'p>, arg: Vec<u32> },
    ChannelAvg { x: Var<'p> },
    Resize { x: Var<'p> },
    Cat { parts: Vec<Var<'p>>, axis: usize },
    Narrow { x: Var<'p>, axis: usize, start: usize },
    Add { a: Var<'p>, b: Var<'p> },
    Mul { a: Var<'p>, b: Var<'p> },
    MulChannels { x: Var<'p>, gate: Var<'p> },
    Scale { x: Var<'p>, k: f64 },
    AddScalar { x: Var<'p> },
    Relu { x: Var<'p> },
    Sigmoid { x: Var<'p>, out: Arc<Tensor> },
    Sum { x: Var<'p> },
    Bce { s: Var<'p>, g: Var<'p> },
    Iou { s: Var<'p>, g: Var<'p> },
    Fm { s: Var<'p>, g: Var<'p>, beta2: f64 },
}

impl Op<'_> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv { .. } => "conv2d",
            Op::Matmul { .. } => "matmul",
            Op::Transpose { .. } => "transpose",
            Op::Reshape { .. } => "reshape",
            Op::Unshuffle { .. } => "pixel_unshuffle",
            Op::Shuffle { .. } => "pixel_shuffle",
            Op::ChannelMax { .. } => "channel_max",
            Op::ChannelAvg { .. } => "channel_avg",
            Op::Resize { .. } => "resize_bilinear",
            Op::Cat { .. } => "cat",
            Op::Narrow { .. } => "narrow",
            Op::Add { .. } => "add",
            Op::Mul { .. } => "mul",
            Op::MulChannels { .. } => "mul_channels",
            Op::Scale { .. } => "scale",
            Op::AddScalar { .. } => "add_scalar",
            Op::Relu { .. } => "relu",
            Op::Sigmoid { .. } => "sigmoid",
            Op::Sum { .. } => "sum",
            Op::Bce { .. } => "bce_loss",
            Op::Iou { .. } => "iou_loss",
            Op::Fm { .. } => "fm_loss",
        }
    }
}

/// Records operations for reverse-mode differentiation.
///
/// The lifetime `'p` ties borrowed parameter tensors to the tape, so model
/// weights are never copied during a forward pass.
pub struct Tape<'p> {
    nodes: RefCell<Vec<Op<'p>>>,
    params: RefCell<HashMap<usize, Var<'p>>>,
    recording: bool,
    fault: Option<Fault>,
    _params: PhantomData<&'p Tensor>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            params: RefCell::new(HashMap::new()),
            recording: true,
            fault: None,
            _params: PhantomData,
        }
    }

    /// A tape that records nothing; every result is a constant.
    pub fn inference() -> Self {
        Self { recording: false, ..Self::new() }
    }

    pub fn with_fault(fault: Fault) -> Self {
        Self { fault: Some(fault), ..Self::new() }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Names of every recorded operation, in recording order.
    pub fn op_names(&self) -> Vec<&'static str> {
        self.nodes.borrow().iter().map(Op::name).collect()
    }

    fn push(&self, op: Op<'p>, value: Tensor) -> Var<'p> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(op);
        Var { value: Value::Owned(Arc::new(value)), id: Some(nodes.len() - 1) }
    }

    /// Records `op` if any input is tracked; otherwise returns a constant.
    fn record(&self, inputs: &[&Var<'p>], value: Tensor, op: impl FnOnce() -> Op<'p>) -> Var<'p> {
        if self.recording && inputs.iter().any(|v| v.tracked()) {
            self.push(op(), value)
        } else {
            Var { value: Value::Owned(Arc::new(value)), id: None }
        }
    }

    /// A differentiable leaf owning `value`.
    pub fn leaf(&self, value: Tensor) -> Var<'p> {
        if self.recording {
            self.push(Op::Leaf, value)
        } else {
            self.constant(value)
        }
    }

    /// A value that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'p> {
        Var { value: Value::Owned(Arc::new(value)), id: None }
    }

    /// A differentiable leaf borrowing a model parameter. Repeated calls with
    /// the same tensor return the same leaf.
    pub fn param(&self, value: &'p Tensor) -> Var<'p> {
        if !self.recording {
            return Var { value: Value::Borrowed(value), id: None };
        }
        let key = value as *const Tensor as usize;
        if let Some(v) = self.params.borrow().get(&key) {
            return v.clone();
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Op::Leaf);
        let v = Var { value: Value::Borrowed(value), id: Some(nodes.len() - 1) };
        self.params.borrow_mut().insert(key, v.clone());
        v
    }

    /// The leaf previously created for `value` by [`param`](Self::param).
    pub fn param_var(&self, value: &Tensor) -> Option<Var<'p>> {
        self.params.borrow().get(&(value as *const Tensor as usize)).cloned()
    }

    pub fn conv2d(&self, x: &Var<'p>, w: &Var<'p>, b: &Var<'p>, stride: usize, pad: usize) -> Result<Var<'p>> {
        let out = ops::conv2d(x.value(), w.value(), b.value(), stride, pad)?;
        Ok(self.record(&[x, w, b], out, || Op::Conv { x: x.clone(), w: w.clone(), b: b.clone(), stride, pad }))
    }

    pub fn matmul(&self, a: &Var<'p>, b: &Var<'p>) -> Result<Var<'p>> {
        let out = ops::matmul(a.value(), b.value())?;
        Ok(self.record(&[a, b], out, || Op::Matmul { a: a.clone(), b: b.clone() }))
    }

    pub fn transpose(&self, x: &Var<'p>) -> Result<Var<'p>> {
        let out = ops::transpose(x.value())?;
        Ok(self.record(&[x], out, || Op::Transpose { x: x.clone() }))
    }

    pub fn reshape(&self, x: &Var<'p>, shape: &[usize]) -> Result<Var<'p>> {
        let out = x.to_tensor().reshape(shape)?;
        Ok(self.record(&[x], out, || Op::Reshape { x: x.clone() }))
    }

    pub fn pixel_unshuffle(&self, x: &Var<'p>, r: usize) -> Result<Var<'p>> {
        let out = ops::pixel_unshuffle(x.value(), r)?;
        Ok(self.record(&[x], out, || Op::Unshuffle { x: x.clone(), r }))
    }

    pub fn pixel_shuffle(&self, x: &Var<'p>, r: usize) -> Result<Var<'p>> {
        let out = ops::pixel_shuffle(x.value(), r)?;
        Ok(self.record(&[x], out, || Op::Shuffle { x: x.clone(), r }))
    }

    pub fn channel_max(&self, x: &Var<'p>) -> Result<Var<'p>> {
        let (out, arg) = ops::channel_max(x.value())?;
        Ok(self.record(&[x], out, || Op::ChannelMax { x: x.clone(), arg }))
    }

    pub fn channel_avg(&self, x: &Var<'p>) -> Result<Var<'p>> {
        let out = ops::channel_avg(x.value())?;
        Ok(self.record(&[x], out, || Op::ChannelAvg { x: x.clone() }))
    }

    pub fn resize(&self, x: &Var<'p>, h: usize, w: usize) -> Result<Var<'p>> {
        if x.value().dims3()? == (x.shape()[0], h, w) {
            return Ok(x.clone());
        }
        let out = ops::resize_bilinear(x.value(), h, w)?;
        Ok(self.record(&[x], out, || Op::Resize { x: x.clone() }))
    }

    pub fn cat(&self, parts: &[Var<'p>], axis: usize) -> Result<Var<'p>> {
        let values: Vec<&Tensor> = parts.iter().map(Var::value).collect();
        let out = ops::cat(&values, axis)?;
        let refs: Vec<&Var<'p>> = parts.iter().collect();
        Ok(self.record(&refs, out, || Op::Cat { parts: parts.to_vec(), axis }))
    }

    pub fn narrow(&self, x: &Var<'p>, axis: usize, start: usize, len: usize) -> Result<Var<'p>> {
        let out = ops::narrow(x.value(), axis, start, len)?;
        Ok(self.record(&[x], out, || Op::Narrow { x: x.clone(), axis, start }))
    }

    pub fn add(&self, a: &Var<'p>, b: &Var<'p>) -> Result<Var<'p>> {
        let out = a.value().zip_map(b.value(), |x, y| x + y).map_err(|_| Error::shape("add", a.shape(), b.shape()))?;
        Ok(self.record(&[a, b], out, || Op::Add { a: a.clone(), b: b.clone() }))
    }

    pub fn mul(&self, a: &Var<'p>, b: &Var<'p>) -> Result<Var<'p>> {
        let out = a.value().zip_map(b.value(), |x, y| x * y).map_err(|_| Error::shape("mul", a.shape(), b.shape()))?;
        Ok(self.record(&[a, b], out, || Op::Mul { a: a.clone(), b: b.clone() }))
    }

    /// `x[c][p] * gate[0][p]` for a `[C,H,W]` input and `[1,H,W]` gate.
    pub fn mul_channels(&self, x: &Var<'p>, gate: &Var<'p>) -> Result<Var<'p>> {
        let (c, h, w) = x.value().dims3()?;
        if gate.shape() != [1, h, w] {
            return Err(Error::shape("mul_channels", x.shape(), gate.shape()));
        }
        let hw = h * w;
        let gd = gate.value().data();
        let out = Tensor::from_fn(&[c, h, w], |i| x.value().data()[i] * gd[i % hw]);
        Ok(self.record(&[x, gate], out, || Op::MulChannels { x: x.clone(), gate: gate.clone() }))
    }

    pub fn scale(&self, x: &Var<'p>, k: f64) -> Var<'p> {
        let out = x.value().map(|v| v * k);
        self.record(&[x], out, || Op::Scale { x: x.clone(), k })
    }

    pub fn add_scalar(&self, x: &Var<'p>, k: f64) -> Var<'p> {
        let out = x.value().map(|v| v + k);
        self.record(&[x], out, || Op::AddScalar { x: x.clone() })
    }

    pub fn relu(&self, x: &Var<'p>) -> Var<'p> {
        let out = x.value().map(|v| v.max(0.0));
        self.record(&[x], out, || Op::Relu { x: x.clone() })
    }

    pub fn sigmoid(&self, x: &Var<'p>) -> Var<'p> {
        let out = x.value().map(ops::sigmoid);
        if self.recording && x.tracked() {
            let saved = Arc::new(out.clone());
            self.push(Op::Sigmoid { x: x.clone(), out: saved }, out)
        } else {
            self.constant(out)
        }
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&self, x: &Var<'p>) -> Var<'p> {
        let out = Tensor::scalar(x.value().sum());
        self.record(&[x], out, || Op::Sum { x: x.clone() })
    }

    pub fn bce_loss(&self, s: &Var<'p>, g: &Var<'p>) -> Result<Var<'p>> {
        let out = Tensor::scalar(loss::bce(s.value(), g.value())?);
        Ok(self.record(&[s, g], out, || Op::Bce { s: s.clone(), g: g.clone() }))
    }

    pub fn iou_loss(&self, s: &Var<'p>, g: &Var<'p>) -> Result<Var<'p>> {
        let out = Tensor::scalar(loss::iou(s.value(), g.value())?);
        Ok(self.record(&[s, g], out, || Op::Iou { s: s.clone(), g: g.clone() }))
    }

    pub fn fm_loss(&self, s: &Var<'p>, g: &Var<'p>, beta2: f64) -> Result<Var<'p>> {
        let out = Tensor::scalar(loss::fm(s.value(), g.value(), beta2)?);
        Ok(self.record(&[s, g], out, || Op::Fm { s: s.clone(), g: g.clone(), beta2 }))
    }

    /// Propagates `d loss / d v` to every tracked value.
    pub fn backward(&self, loss: &Var<'p>) -> Result<Gradients> {
        if loss.value().len() != 1 {
            return Err(Error::NonScalarLoss(loss.shape().to_vec()));
        }
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        let Some(root) = loss.id else {
            return Ok(Gradients { grads });
        };
        grads[root] = Some(Tensor::full(loss.shape(), 1.0));

        for id in (0..=root).rev() {
            let Some(g) = grads[id].take() else { continue };
            let op = &nodes[id];
            let mut contribs: Vec<(usize, Tensor)> = Vec::new();
            adjoint(op, &g, &mut |v: &Var<'p>| v.id, &mut contribs)?;
            if let Some(f) = self.fault.filter(|f| f.op == op.name()) {
                for (_, t) in &mut contribs {
                    *t = t.map(|v| v * f.scale);
                }
            }
            for (target, t) in contribs {
                match &mut grads[target] {
                    Some(acc) => acc.add_assign(&t),
                    slot => *slot = Some(t),
                }
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

/// Pushes `(input id, gradient)` pairs for every tracked input of `op`.
fn adjoint<'p>(
    op: &Op<'p>,
    g: &Tensor,
    id_of: &mut dyn FnMut(&Var<'p>) -> Option<usize>,
    out: &mut Vec<(usize, Tensor)>,
) -> Result<()> {
    let mut emit = |v: &Var<'p>, f: &mut dyn FnMut() -> Result<Tensor>| -> Result<()> {
        if let Some(id) = id_of(v) {
            out.push((id, f()?));
        }
        Ok(())
    };
    match op {
        Op::Leaf => {}
        Op::Conv { x, w, b, stride, pad } => {
            let grads = ops::conv2d_backward(x.value(), w.value(), g, *stride, *pad, x.tracked())?;
            let mut input = grads.input;
            emit(x, &mut || Ok(input.take().expect("input gradient requested")))?;
            emit(w, &mut || Ok(grads.weight.clone()))?;
            emit(b, &mut || Ok(grads.bias.clone()))?;
        }
        Op::Matmul { a, b } => {
            let (ga, gb) = ops::matmul_backward(a.value(), b.value(), g)?;
            emit(a, &mut || Ok(ga.clone()))?;
            emit(b, &mut || Ok(gb.clone()))?;
        }
        Op::Transpose { x } => emit(x, &mut || ops::transpose(g))?,
        Op::Reshape { x } => emit(x, &mut || g.clone().reshape(x.shape()))?,
        Op::Unshuffle { x, r } => emit(x, &mut || ops::pixel_shuffle(g, *r))?,
        Op::Shuffle { x, r } => emit(x, &mut || ops::pixel_unshuffle(g, *r))?,
        Op::ChannelMax { x, arg } => emit(x, &mut || Ok(ops::channel_max_backward(g, arg, x.shape())))?,
        Op::ChannelAvg { x } => emit(x, &mut || Ok(ops::channel_avg_backward(g, x.shape())))?,
        Op::Resize { x } => {
            let (_, h, w) = x.value().dims3()?;
            emit(x, &mut || ops::resize_bilinear_backward(g, h, w))?
        }
        Op::Cat { parts, axis } => {
            let mut start = 0;
            for p in parts {
                let len = p.shape()[*axis];
                emit(p, &mut || ops::narrow(g, *axis, start, len))?;
                start += len;
            }
        }
        Op::Narrow { x, axis, start } => {
            emit(x, &mut || Ok(ops::narrow_backward(g, x.shape(), *axis, *start)))?
        }
        Op::Add { a, b } => {
            emit(a, &mut || Ok(g.clone()))?;
            emit(b, &mut || Ok(g.clone()))?;
        }
        Op::Mul { a, b } => {
            emit(a, &mut || g.zip_map(b.value(), |u, v| u * v))?;
            emit(b, &mut || g.zip_map(a.value(), |u, v| u * v))?;
        }
        Op::MulChannels { x, gate } => {
            let hw = gate.value().len();
            let (gd, xd, gt) = (g.data(), x.value().data(), gate.value().data());
            emit(x, &mut || Ok(Tensor::from_fn(x.shape(), |i| gd[i] * gt[i % hw])))?;
            emit(gate, &mut || {
                let mut acc = vec![0.0; hw];
                for (i, (a, b)) in gd.iter().zip(xd).enumerate() {
                    acc[i % hw] += a * b;
                }
                Tensor::new(gate.shape(), acc)
            })?;
        }
        Op::Scale { x, k } => emit(x, &mut || Ok(g.map(|v| v * k)))?,
        Op::AddScalar { x } => emit(x, &mut || Ok(g.clone()))?,
        Op::Relu { x } => emit(x, &mut || g.zip_map(x.value(), |u, v| if v > 0.0 { u } else { 0.0 }))?,
        Op::Sigmoid { x, out } => emit(x, &mut || g.zip_map(out, |u, s| u * s * (1.0 - s)))?,
        Op::Sum { x } => emit(x, &mut || Ok(Tensor::full(x.shape(), g.item())))?,
        // Ground-truth maps are treated as constants by the loss adjoints.
        Op::Bce { s, g: gt } => {
            emit(s, &mut || Ok(loss::bce_grad(s.value(), gt.value()).map(|v| v * g.item())))?;
        }
        Op::Iou { s, g: gt } => {
            emit(s, &mut || Ok(loss::iou_grad(s.value(), gt.value()).map(|v| v * g.item())))?;
        }
        Op::Fm { s, g: gt, beta2 } => {
            emit(s, &mut || Ok(loss::fm_grad(s.value(), gt.value(), *beta2).map(|v| v * g.item())))?;
        }
    }
    Ok(())
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: &Var<'_>) -> Option<&Tensor> {
        v.id.and_then(|id| self.grads.get(id)?.as_ref())
    }

    /// Gradient of `v`, or zeros when nothing flowed into it.
    pub fn get_or_zeros(&self, v: &Var<'_>) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(v.shape()))
    }

    /// Gradient of a parameter registered with [`Tape::param`].
    pub fn param(&self, tape: &Tape<'_>, value: &Tensor) -> Option<&Tensor> {
        let v = tape.param_var(value)?;
        self.get(&v)
    }
}
