//! Reverse-mode differentiation over an append-only tape.
//!
//! Every operation pushes one node holding its forward value. Inputs always
//! refer to earlier nodes, so a single reverse sweep over the node list visits
//! each node once after all of its consumers. Nodes that do not depend on a
//! trainable leaf are never differentiated.

use crate::tensor::{self, shape_err, Result, Tensor, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Var,
        stride: usize,
    },
    Relu(Var),
    Sigmoid(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Concat(Vec<Var>),
    NarrowChannels {
        x: Var,
        start: usize,
    },
    Resize(Var),
    ChannelMean(Var),
    Sum(Var),
    Mean(Var),
    Std(Var),
    WeightedSum(Var, Tensor),
    MinMax {
        x: Var,
        /// Per plane: (argmin, argmax, range); range 0 marks a constant plane.
        extrema: Vec<(usize, usize, f64)>,
    },
    PearsonPerMap {
        pred: Var,
        target: Tensor,
    },
    KlPerMap {
        pred: Var,
        target: Tensor,
        eps: f64,
    },
}

struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

/// Single-threaded record of one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to every trainable leaf.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of a leaf; `None` for constants and nodes the loss does not reach.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Gradient of a leaf, with zeros for leaves the loss does not depend on.
    pub fn get_or_zeros(&self, tape: &Tape, var: Var) -> Tensor {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(tape.value(var).shape()))
    }
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

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn needs_grad(&self, var: Var) -> bool {
        self.nodes[var.0].needs_grad
    }

    fn push(&mut self, op: Op, value: Tensor, name: &'static str) -> Result<Var> {
        if !value.all_finite() {
            return Err(TensorError::NonFinite(name));
        }
        let needs_grad = match &op {
            Op::Leaf => true,
            Op::Constant => false,
            other => inputs(other).iter().any(|v| self.nodes[v.0].needs_grad),
        };
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Trainable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            op: Op::Constant,
            value,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// 3x3 convolution, stride 1, zero padding 1.
    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var) -> Result<Var> {
        self.conv2d_strided(input, kernel, bias, 1)
    }

    /// 3x3 convolution with zero padding 1 and stride 1 or 2.
    pub fn conv2d_strided(&mut self, input: Var, kernel: Var, bias: Var, stride: usize) -> Result<Var> {
        let value = tensor::conv2d_forward(self.value(input), self.value(kernel), self.value(bias), stride)?;
        self.push(
            Op::Conv2d {
                input,
                kernel,
                bias,
                stride,
            },
            value,
            "conv2d",
        )
    }

    /// Rectifier; the derivative at exactly 0 is taken as 0.
    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(|v| v.max(0.0));
        self.push(Op::Relu(x), value, "relu")
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(sigmoid);
        self.push(Op::Sigmoid(x), value, "sigmoid")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        self.push(Op::Add(a, b), value, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        self.push(Op::Sub(a, b), value, "sub")
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let value = self.value(x).scale(factor);
        self.push(Op::Scale(x, factor), value, "scale")
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor> = parts.iter().map(|&v| self.value(v)).collect();
        let value = tensor::concat_channels(&values)?;
        self.push(Op::Concat(parts.to_vec()), value, "concat_channels")
    }

    pub fn narrow_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let value = self.value(x).narrow_channels(start, len)?;
        self.push(Op::NarrowChannels { x, start }, value, "narrow_channels")
    }

    /// Bilinear upsampling by an integer factor (half-pixel centers; see
    /// [`tensor::bilinear_taps`]).
    pub fn upsample_bilinear(&mut self, x: Var, factor: usize) -> Result<Var> {
        if factor < 1 {
            return Err(TensorError::Argument {
                op: "upsample_bilinear",
                detail: "factor must be at least 1".into(),
            });
        }
        let (_, _, h, w) = self.value(x).dims4()?;
        self.resize_bilinear(x, h * factor, w * factor)
    }

    /// Bilinear resampling to an arbitrary size (half-pixel centers).
    pub fn resize_bilinear(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let value = tensor::resize_forward(self.value(x), out_h, out_w)?;
        self.push(Op::Resize(x), value, "resize_bilinear")
    }

    /// Mean over the channel axis, `[N, C, H, W] -> [N, 1, H, W]`.
    pub fn channel_mean(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        let plane = h * w;
        let src = self.value(x).data();
        let mut out = vec![0.0; n * plane];
        for b in 0..n {
            let dst = &mut out[b * plane..(b + 1) * plane];
            for ch in 0..c {
                let s = &src[(b * c + ch) * plane..(b * c + ch + 1) * plane];
                dst.iter_mut().zip(s).for_each(|(d, v)| *d += v);
            }
            dst.iter_mut().for_each(|d| *d /= c as f64);
        }
        let value = Tensor::from_parts(vec![n, 1, h, w], out);
        self.push(Op::ChannelMean(x), value, "channel_mean")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(Op::Sum(x), value, "sum")
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(x).mean());
        self.push(Op::Mean(x), value, "mean")
    }

    /// Population standard deviation of all elements.
    pub fn std(&mut self, x: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(x).std());
        self.push(Op::Std(x), value, "std")
    }

    /// `sum_i weights[i] * x[i]`.
    pub fn weighted_sum(&mut self, x: Var, weights: Tensor) -> Result<Var> {
        if weights.numel() != self.value(x).numel() {
            return Err(shape_err(
                "weighted_sum",
                format!("{:?} weights for {:?}", weights.shape(), self.value(x).shape()),
            ));
        }
        let v = self
            .value(x)
            .data()
            .iter()
            .zip(weights.data())
            .map(|(a, b)| a * b)
            .sum();
        self.push(Op::WeightedSum(x, weights), Tensor::scalar(v), "weighted_sum")
    }

    /// Rescales every `H x W` plane to `[0, 1]` by its own min and max, then
    /// clamps to `[0, 1]`. A constant plane maps to zeros.
    pub fn minmax_normalize(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        let plane = h * w;
        let src = self.value(x).data();
        let mut out = vec![0.0; src.len()];
        let mut extrema = Vec::with_capacity(n * c);
        for p in 0..n * c {
            let s = &src[p * plane..(p + 1) * plane];
            let (mut imin, mut imax) = (0, 0);
            for (i, &v) in s.iter().enumerate() {
                if v < s[imin] {
                    imin = i;
                }
                if v > s[imax] {
                    imax = i;
                }
            }
            let range = s[imax] - s[imin];
            if range > 0.0 {
                for (d, &v) in out[p * plane..(p + 1) * plane].iter_mut().zip(s) {
                    *d = ((v - s[imin]) / range).clamp(0.0, 1.0);
                }
            }
            extrema.push((imin, imax, range));
        }
        let value = Tensor::from_parts(vec![n, c, h, w], out);
        self.push(Op::MinMax { x, extrema }, value, "minmax_normalize")
    }

    /// Pearson correlation between each prediction plane and the matching
    /// plane of a constant target, `[N, C, H, W] -> [N, C]`.
    ///
    /// Planes where either side is constant yield 0 with zero gradient.
    pub fn pearson_per_map(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        let (n, c, h, w) = self.value(pred).dims4()?;
        if target.shape() != self.value(pred).shape() {
            return Err(shape_err(
                "pearson_per_map",
                format!("{:?} vs {:?}", self.value(pred).shape(), target.shape()),
            ));
        }
        let plane = h * w;
        let p = self.value(pred).data();
        let out = (0..n * c)
            .map(|i| pearson_plane(&p[i * plane..(i + 1) * plane], &target.data()[i * plane..(i + 1) * plane]).0)
            .collect();
        let value = Tensor::from_parts(vec![n, c], out);
        self.push(
            Op::PearsonPerMap {
                pred,
                target: target.clone(),
            },
            value,
            "pearson_per_map",
        )
    }

    /// `KL(target || pred)` per plane with both planes rescaled to unit mass:
    /// `sum g * ln(g / (q + eps) + eps)`, `[N, C, H, W] -> [N, C]`.
    pub fn kl_per_map(&mut self, pred: Var, target: &Tensor, eps: f64) -> Result<Var> {
        let (n, c, h, w) = self.value(pred).dims4()?;
        if target.shape() != self.value(pred).shape() {
            return Err(shape_err(
                "kl_per_map",
                format!("{:?} vs {:?}", self.value(pred).shape(), target.shape()),
            ));
        }
        let plane = h * w;
        let p = self.value(pred).data();
        let mut out = Vec::with_capacity(n * c);
        for i in 0..n * c {
            let ps = &p[i * plane..(i + 1) * plane];
            let gs = &target.data()[i * plane..(i + 1) * plane];
            let (psum, gsum) = (ps.iter().sum::<f64>(), gs.iter().sum::<f64>());
            if psum <= 0.0 || gsum <= 0.0 {
                return Err(TensorError::Argument {
                    op: "kl_per_map",
                    detail: format!("plane {i} has non-positive mass"),
                });
            }
            out.push(
                ps.iter()
                    .zip(gs)
                    .map(|(&pv, &gv)| {
                        let (q, g) = (pv / psum, gv / gsum);
                        if g > 0.0 {
                            g * (g / (q + eps) + eps).ln()
                        } else {
                            0.0
                        }
                    })
                    .sum(),
            );
        }
        let value = Tensor::from_parts(vec![n, c], out);
        self.push(
            Op::KlPerMap {
                pred,
                target: target.clone(),
                eps,
            },
            value,
            "kl_per_map",
        )
    }

    /// Reverse sweep from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let loss_value = self.value(loss);
        if !loss_value.is_scalar() {
            return Err(TensorError::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        if !self.nodes[loss.0].needs_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Tensor::full(loss_value.shape(), 1.0));
        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            if matches!(node.op, Op::Leaf) {
                grads[id] = Some(g);
                continue;
            }
            for (input, contribution) in self.local_grads(node, &g) {
                if !self.nodes[input.0].needs_grad {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc
                        .data_mut()
                        .iter_mut()
                        .zip(contribution.data())
                        .for_each(|(a, b)| *a += b),
                    slot => *slot = Some(contribution),
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn local_grads(&self, node: &Node, g: &Tensor) -> Vec<(Var, Tensor)> {
        match &node.op {
            Op::Leaf | Op::Constant => vec![],
            Op::Conv2d {
                input,
                kernel,
                bias,
                stride,
            } => {
                let (gx, gk, gb) = tensor::conv2d_backward(self.value(*input), self.value(*kernel), g, *stride);
                vec![(*input, gx), (*kernel, gk), (*bias, gb)]
            }
            Op::Relu(x) => {
                let gx = self
                    .value(*x)
                    .zip_with(g, "relu", |v, gv| if v > 0.0 { gv } else { 0.0 })
                    .expect("relu shapes");
                vec![(*x, gx)]
            }
            Op::Sigmoid(x) => {
                let gx = node
                    .value
                    .zip_with(g, "sigmoid", |s, gv| gv * s * (1.0 - s))
                    .expect("sigmoid shapes");
                vec![(*x, gx)]
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.scale(-1.0))],
            Op::Scale(x, f) => vec![(*x, g.scale(*f))],
            Op::Concat(parts) => {
                let sizes: Vec<usize> = parts.iter().map(|v| self.value(*v).shape()[1]).collect();
                let pieces = g.split_channels(&sizes).expect("concat grad split");
                parts.iter().copied().zip(pieces).collect()
            }
            Op::NarrowChannels { x, start } => {
                let (n, c, h, w) = self.value(*x).dims4().expect("narrow input");
                let len = g.shape()[1];
                let plane = h * w;
                let mut gx = vec![0.0; n * c * plane];
                for b in 0..n {
                    let dst = (b * c + start) * plane;
                    gx[dst..dst + len * plane].copy_from_slice(&g.data()[b * len * plane..(b + 1) * len * plane]);
                }
                vec![(*x, Tensor::from_parts(vec![n, c, h, w], gx))]
            }
            Op::Resize(x) => vec![(*x, tensor::resize_backward(self.value(*x).shape(), g))],
            Op::ChannelMean(x) => {
                let (n, c, h, w) = self.value(*x).dims4().expect("channel mean input");
                let plane = h * w;
                let mut gx = Vec::with_capacity(n * c * plane);
                for b in 0..n {
                    let src = &g.data()[b * plane..(b + 1) * plane];
                    for _ in 0..c {
                        gx.extend(src.iter().map(|v| v / c as f64));
                    }
                }
                vec![(*x, Tensor::from_parts(vec![n, c, h, w], gx))]
            }
            Op::Sum(x) => vec![(*x, Tensor::full(self.value(*x).shape(), g.item()))],
            Op::Mean(x) => {
                let v = self.value(*x);
                vec![(*x, Tensor::full(v.shape(), g.item() / v.numel() as f64))]
            }
            Op::Std(x) => {
                let v = self.value(*x);
                let sd = node.value.item();
                if sd == 0.0 {
                    return vec![(*x, Tensor::zeros(v.shape()))];
                }
                let mu = v.mean();
                let k = g.item() / (v.numel() as f64 * sd);
                vec![(*x, v.map(|xv| (xv - mu) * k))]
            }
            Op::WeightedSum(x, weights) => {
                let shape = self.value(*x).shape().to_vec();
                vec![(*x, Tensor::from_parts(shape, weights.data().iter().map(|w| w * g.item()).collect()))]
            }
            Op::MinMax { x, extrema } => {
                let xv = self.value(*x);
                let plane = xv.shape()[2] * xv.shape()[3];
                let mut gx = vec![0.0; xv.numel()];
                for (p, &(imin, imax, range)) in extrema.iter().enumerate() {
                    if range <= 0.0 {
                        continue;
                    }
                    let ys = &node.value.data()[p * plane..(p + 1) * plane];
                    let gs = &g.data()[p * plane..(p + 1) * plane];
                    let dst = &mut gx[p * plane..(p + 1) * plane];
                    let (mut to_min, mut to_max) = (0.0, 0.0);
                    for i in 0..plane {
                        dst[i] += gs[i] / range;
                        to_min += gs[i] * (ys[i] - 1.0) / range;
                        to_max -= gs[i] * ys[i] / range;
                    }
                    dst[imin] += to_min;
                    dst[imax] += to_max;
                }
                vec![(*x, Tensor::from_parts(xv.shape().to_vec(), gx))]
            }
            Op::PearsonPerMap { pred, target } => {
                let pv = self.value(*pred);
                let plane = pv.shape()[2] * pv.shape()[3];
                let mut gx = vec![0.0; pv.numel()];
                for (i, &gi) in g.data().iter().enumerate() {
                    let range = i * plane..(i + 1) * plane;
                    let (_, grad) = pearson_plane(&pv.data()[range.clone()], &target.data()[range.clone()]);
                    if let Some(grad) = grad {
                        gx[range].iter_mut().zip(grad).for_each(|(d, v)| *d = gi * v);
                    }
                }
                vec![(*pred, Tensor::from_parts(pv.shape().to_vec(), gx))]
            }
            Op::KlPerMap { pred, target, eps } => {
                let pv = self.value(*pred);
                let plane = pv.shape()[2] * pv.shape()[3];
                let mut gx = vec![0.0; pv.numel()];
                for (i, &gi) in g.data().iter().enumerate() {
                    let ps = &pv.data()[i * plane..(i + 1) * plane];
                    let gs = &target.data()[i * plane..(i + 1) * plane];
                    let (psum, gsum) = (ps.iter().sum::<f64>(), gs.iter().sum::<f64>());
                    // d/dq_j of g_j ln(g_j / (q_j + eps) + eps)
                    let dq: Vec<f64> = ps
                        .iter()
                        .zip(gs)
                        .map(|(&pv, &gv)| {
                            let (q, g) = (pv / psum, gv / gsum);
                            if g > 0.0 {
                                let r = g / (q + eps);
                                -g * r / ((q + eps) * (r + eps))
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    let proj: f64 = dq.iter().zip(ps).map(|(d, &pv)| d * pv / psum).sum();
                    for (d, dqj) in gx[i * plane..(i + 1) * plane].iter_mut().zip(&dq) {
                        *d = gi * (dqj - proj) / psum;
                    }
                }
                vec![(*pred, Tensor::from_parts(pv.shape().to_vec(), gx))]
            }
        }
    }
}

fn inputs(op: &Op) -> Vec<Var> {
    match op {
        Op::Leaf | Op::Constant => vec![],
        Op::Conv2d {
            input, kernel, bias, ..
        } => vec![*input, *kernel, *bias],
        Op::Relu(x)
        | Op::Sigmoid(x)
        | Op::Scale(x, _)
        | Op::NarrowChannels { x, .. }
        | Op::Resize(x)
        | Op::ChannelMean(x)
        | Op::Sum(x)
        | Op::Mean(x)
        | Op::Std(x)
        | Op::WeightedSum(x, _)
        | Op::MinMax { x, .. } => vec![*x],
        Op::PearsonPerMap { pred, .. } | Op::KlPerMap { pred, .. } => vec![*pred],
        Op::Add(a, b) | Op::Sub(a, b) => vec![*a, *b],
        Op::Concat(parts) => parts.clone(),
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Pearson correlation of two planes and, when defined, its gradient w.r.t. `p`.
fn pearson_plane(p: &[f64], g: &[f64]) -> (f64, Option<Vec<f64>>) {
    let m = p.len() as f64;
    let (pm, gm) = (p.iter().sum::<f64>() / m, g.iter().sum::<f64>() / m);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&pv, &gv) in p.iter().zip(g) {
        let (a, b) = (pv - pm, gv - gm);
        sab += a * b;
        saa += a * a;
        sbb += b * b;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return (0.0, None);
    }
    let denom = (saa * sbb).sqrt();
    let cc = sab / denom;
    let grad = p
        .iter()
        .zip(g)
        .map(|(&pv, &gv)| (gv - gm) / denom - cc * (pv - pm) / saa)
        .collect();
    (cc, Some(grad))
}
