//! Dense row-major `f64` tensors and the forward/backward kernels the tape
//! dispatches to.
//!
//! Image-like tensors use the `[N, C, H, W]` layout throughout.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape {shape:?} needs {expected} values, got {actual}")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("zero extent in shape {0:?}")]
    ZeroExtent(Vec<usize>),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("invalid argument to {op}: {detail}")]
    Argument { op: &'static str, detail: String },
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
}

pub type Result<T> = std::result::Result<T, TensorError>;

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> TensorError {
    TensorError::Shape {
        op,
        detail: detail.into(),
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl Tensor {
    /// Builds a tensor, rejecting a length mismatch, zero extents and non-finite values.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(TensorError::ZeroExtent(shape));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::DataLength {
                shape,
                expected,
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite("Tensor::new"));
        }
        Ok(Self { shape, data })
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self::from_parts(shape.to_vec(), vec![value; n])
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_parts(vec![1], vec![value])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data.clone())
    }

    /// Unpacks an `[N, C, H, W]` shape.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(shape_err(
                "dims4",
                format!("expected [N, C, H, W], got {:?}", self.shape),
            )),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(shape_err(
                op,
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        Ok(Self::from_parts(
            self.shape.clone(),
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn add(&self, other: &Tensor) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.numel() as f64
    }

    /// Population standard deviation.
    pub fn std(&self) -> f64 {
        let mu = self.mean();
        (self.data.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / self.numel() as f64).sqrt()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Copies channels `[start, start + len)` of an `[N, C, H, W]` tensor.
    pub fn narrow_channels(&self, start: usize, len: usize) -> Result<Self> {
        let (n, c, h, w) = self.dims4()?;
        if len == 0 || start + len > c {
            return Err(shape_err(
                "narrow_channels",
                format!("range {start}..{} outside {c} channels", start + len),
            ));
        }
        let plane = h * w;
        let mut out = Vec::with_capacity(n * len * plane);
        for b in 0..n {
            let base = (b * c + start) * plane;
            out.extend_from_slice(&self.data[base..base + len * plane]);
        }
        Ok(Self::from_parts(vec![n, len, h, w], out))
    }

    /// Splits an `[N, C, H, W]` tensor into pieces with the given channel counts.
    pub fn split_channels(&self, sizes: &[usize]) -> Result<Vec<Self>> {
        let (_, c, _, _) = self.dims4()?;
        if sizes.iter().sum::<usize>() != c {
            return Err(shape_err(
                "split_channels",
                format!("sizes {sizes:?} do not sum to {c} channels"),
            ));
        }
        let mut start = 0;
        sizes
            .iter()
            .map(|&len| {
                let t = self.narrow_channels(start, len);
                start += len;
                t
            })
            .collect()
    }

    /// Stacks `[C, H, W]` (or `[1, C, H, W]`) tensors into a batch.
    pub fn stack(items: &[&Tensor]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| shape_err("stack", "no tensors"))?;
        let inner: Vec<usize> = match first.shape.len() {
            3 => first.shape.clone(),
            4 if first.shape[0] == 1 => first.shape[1..].to_vec(),
            _ => return Err(shape_err("stack", format!("bad item shape {:?}", first.shape))),
        };
        let mut data = Vec::with_capacity(items.len() * first.numel());
        for t in items {
            if t.numel() != first.numel() || t.shape.iter().rev().take(3).ne(inner.iter().rev()) {
                return Err(shape_err(
                    "stack",
                    format!("{:?} vs {:?}", t.shape, first.shape),
                ));
            }
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend(inner);
        Ok(Self::from_parts(shape, data))
    }
}

/// Concatenates `[N, C_i, H, W]` tensors along the channel axis.
pub fn concat_channels(inputs: &[&Tensor]) -> Result<Tensor> {
    let first = inputs
        .first()
        .ok_or_else(|| shape_err("concat_channels", "no inputs"))?;
    let (n, _, h, w) = first.dims4()?;
    let mut total = 0;
    for t in inputs {
        let (tn, tc, th, tw) = t.dims4()?;
        if (tn, th, tw) != (n, h, w) {
            return Err(shape_err(
                "concat_channels",
                format!("{:?} vs {:?}", t.shape(), first.shape()),
            ));
        }
        total += tc;
    }
    let plane = h * w;
    let mut out = Vec::with_capacity(n * total * plane);
    for b in 0..n {
        for t in inputs {
            let c = t.shape()[1];
            let base = b * c * plane;
            out.extend_from_slice(&t.data()[base..base + c * plane]);
        }
    }
    Ok(Tensor::from_parts(vec![n, total, h, w], out))
}

/// 3x3 cross-correlation with zero padding 1.
///
/// With stride 2 the output is `ceil(H/2) x ceil(W/2)`, i.e. exactly half for even sizes.
pub fn conv2d_forward(input: &Tensor, kernel: &Tensor, bias: &Tensor, stride: usize) -> Result<Tensor> {
    let (n, c, h, w) = input.dims4()?;
    let (o, kc, kh, kw) = kernel.dims4()?;
    check_conv(c, o, kc, kh, kw, bias, stride)?;
    let (oh, ow) = conv_out(h, w, stride);
    let mut out = vec![0.0; n * o * oh * ow];
    let x = input.data();
    let k = kernel.data();
    for b in 0..n {
        for oc in 0..o {
            let out_plane = &mut out[(b * o + oc) * oh * ow..(b * o + oc + 1) * oh * ow];
            out_plane.iter_mut().for_each(|v| *v = bias.data()[oc]);
            for ic in 0..c {
                let in_plane = &x[(b * c + ic) * h * w..(b * c + ic + 1) * h * w];
                let kbase = (oc * c + ic) * 9;
                for ky in 0..3 {
                    for kx in 0..3 {
                        let wv = k[kbase + ky * 3 + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        for oy in 0..oh {
                            let iy = (oy * stride + ky) as isize - 1;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let in_row = &in_plane[iy as usize * w..(iy as usize + 1) * w];
                            let out_row = &mut out_plane[oy * ow..(oy + 1) * ow];
                            let (lo, hi) = valid_cols(ow, w, kx, stride);
                            if stride == 1 {
                                let shift = kx as isize - 1;
                                let src = &in_row[(lo as isize + shift) as usize..(hi as isize + shift) as usize];
                                for (dst, &s) in out_row[lo..hi].iter_mut().zip(src) {
                                    *dst += wv * s;
                                }
                            } else {
                                for ox in lo..hi {
                                    out_row[ox] += wv * in_row[ox * stride + kx - 1];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts(vec![n, o, oh, ow], out))
}

/// Gradients of [`conv2d_forward`] w.r.t. input, kernel and bias.
pub fn conv2d_backward(
    input: &Tensor,
    kernel: &Tensor,
    grad_out: &Tensor,
    stride: usize,
) -> (Tensor, Tensor, Tensor) {
    let (n, c, h, w) = input.dims4().expect("conv input");
    let (o, _, _, _) = kernel.dims4().expect("conv kernel");
    let (oh, ow) = conv_out(h, w, stride);
    let x = input.data();
    let k = kernel.data();
    let g = grad_out.data();
    let mut gx = vec![0.0; x.len()];
    let mut gk = vec![0.0; k.len()];
    let mut gb = vec![0.0; o];
    for b in 0..n {
        for oc in 0..o {
            let g_plane = &g[(b * o + oc) * oh * ow..(b * o + oc + 1) * oh * ow];
            gb[oc] += g_plane.iter().sum::<f64>();
            for ic in 0..c {
                let off = (b * c + ic) * h * w;
                let kbase = (oc * c + ic) * 9;
                for ky in 0..3 {
                    for kx in 0..3 {
                        let wv = k[kbase + ky * 3 + kx];
                        let (lo, hi) = valid_cols(ow, w, kx, stride);
                        let mut acc = 0.0;
                        for oy in 0..oh {
                            let iy = (oy * stride + ky) as isize - 1;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let row = off + iy as usize * w;
                            let g_row = &g_plane[oy * ow..(oy + 1) * ow];
                            for ox in lo..hi {
                                let ix = ox * stride + kx - 1;
                                acc += g_row[ox] * x[row + ix];
                                gx[row + ix] += wv * g_row[ox];
                            }
                        }
                        gk[kbase + ky * 3 + kx] += acc;
                    }
                }
            }
        }
    }
    (
        Tensor::from_parts(input.shape().to_vec(), gx),
        Tensor::from_parts(kernel.shape().to_vec(), gk),
        Tensor::from_parts(vec![o], gb),
    )
}

fn check_conv(c: usize, o: usize, kc: usize, kh: usize, kw: usize, bias: &Tensor, stride: usize) -> Result<()> {
    if (kh, kw) != (3, 3) {
        return Err(shape_err("conv2d", format!("kernel must be 3x3, got {kh}x{kw}")));
    }
    if kc != c {
        return Err(shape_err(
            "conv2d",
            format!("kernel expects {kc} input channels, input has {c}"),
        ));
    }
    if bias.shape() != [o] {
        return Err(shape_err(
            "conv2d",
            format!("bias shape {:?} does not match {o} output channels", bias.shape()),
        ));
    }
    if stride != 1 && stride != 2 {
        return Err(TensorError::Argument {
            op: "conv2d",
            detail: format!("stride {stride} not supported"),
        });
    }
    Ok(())
}

fn conv_out(h: usize, w: usize, stride: usize) -> (usize, usize) {
    ((h - 1) / stride + 1, (w - 1) / stride + 1)
}

/// Output columns whose tap `kx` lands inside the input row.
fn valid_cols(ow: usize, w: usize, kx: usize, stride: usize) -> (usize, usize) {
    // ix = ox * stride + kx - 1 must lie in [0, w).
    let lo = if kx == 0 { 1 } else { 0 };
    let hi_excl = (w + 1 - kx).div_ceil(stride);
    (lo.min(ow), hi_excl.min(ow))
}

/// Per-axis bilinear taps `(i0, i1, frac)` under the half-pixel-center convention:
///
/// `src = max(0, (dst + 0.5) * in / out - 0.5)`, `i0 = floor(src)`,
/// `i1 = min(i0 + 1, in - 1)`, `frac = src - i0`, and the output is
/// `(1 - frac) * x[i0] + frac * x[i1]`.
pub fn bilinear_taps(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|d| {
            let src = ((d as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// Bilinear resize of every `H x W` plane to `out_h x out_w`.
pub fn resize_forward(x: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    if out_h == 0 || out_w == 0 {
        return Err(TensorError::Argument {
            op: "resize",
            detail: "zero output size".into(),
        });
    }
    let ty = bilinear_taps(h, out_h);
    let tx = bilinear_taps(w, out_w);
    let mut out = vec![0.0; n * c * out_h * out_w];
    for p in 0..n * c {
        let src = &x.data()[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * out_h * out_w..(p + 1) * out_h * out_w];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let top = (1.0 - fx) * src[y0 * w + x0] + fx * src[y0 * w + x1];
                let bot = (1.0 - fx) * src[y1 * w + x0] + fx * src[y1 * w + x1];
                dst[oy * out_w + ox] = (1.0 - fy) * top + fy * bot;
            }
        }
    }
    Ok(Tensor::from_parts(vec![n, c, out_h, out_w], out))
}

pub fn resize_backward(input_shape: &[usize], grad_out: &Tensor) -> Tensor {
    let (h, w) = (input_shape[2], input_shape[3]);
    let (n, c, out_h, out_w) = grad_out.dims4().expect("resize grad");
    let ty = bilinear_taps(h, out_h);
    let tx = bilinear_taps(w, out_w);
    let mut gx = vec![0.0; n * c * h * w];
    for p in 0..n * c {
        let g = &grad_out.data()[p * out_h * out_w..(p + 1) * out_h * out_w];
        let dst = &mut gx[p * h * w..(p + 1) * h * w];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let gv = g[oy * out_w + ox];
                dst[y0 * w + x0] += (1.0 - fy) * (1.0 - fx) * gv;
                dst[y0 * w + x1] += (1.0 - fy) * fx * gv;
                dst[y1 * w + x0] += fy * (1.0 - fx) * gv;
                dst[y1 * w + x1] += fy * fx * gv;
            }
        }
    }
    Tensor::from_parts(input_shape.to_vec(), gx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_bad_input() {
        assert!(matches!(
            Tensor::new(vec![2, 2], vec![1.0; 3]),
            Err(TensorError::DataLength { .. })
        ));
        assert!(matches!(
            Tensor::new(vec![1], vec![f64::NAN]),
            Err(TensorError::NonFinite(_))
        ));
        assert!(matches!(
            Tensor::new(vec![0, 2], vec![]),
            Err(TensorError::ZeroExtent(_))
        ));
    }

    #[test]
    fn stride_two_halves_even_sizes() {
        let x = Tensor::full(&[1, 1, 8, 6], 1.0);
        let k = Tensor::full(&[2, 1, 3, 3], 1.0);
        let b = Tensor::zeros(&[2]);
        let y = conv2d_forward(&x, &k, &b, 2).unwrap();
        assert_eq!(y.shape(), &[1, 2, 4, 3]);
        // Top-left output sees a 2x2 corner of ones.
        assert_eq!(y.data()[0], 4.0);
        // Interior outputs see the full 3x3 window.
        assert_eq!(y.data()[4], 9.0);
    }

    #[test]
    fn conv_rejects_wrong_kernel() {
        let x = Tensor::zeros(&[1, 2, 4, 4]);
        let k = Tensor::zeros(&[1, 3, 3, 3]);
        assert!(conv2d_forward(&x, &k, &Tensor::zeros(&[1]), 1).is_err());
        let k = Tensor::zeros(&[1, 2, 3, 3]);
        assert!(conv2d_forward(&x, &k, &Tensor::zeros(&[2]), 1).is_err());
        assert!(conv2d_forward(&x, &k, &Tensor::zeros(&[1]), 3).is_err());
    }

    #[test]
    fn taps_for_factor_two() {
        let taps = bilinear_taps(2, 4);
        assert_eq!(taps[0], (0, 1, 0.0));
        assert_eq!(taps[1], (0, 1, 0.25));
        assert_eq!(taps[2], (0, 1, 0.75));
        assert_eq!(taps[3], (1, 1, 0.25));
    }
}
