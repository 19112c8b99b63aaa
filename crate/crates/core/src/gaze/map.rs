use serde::{Deserialize, Serialize};

use super::{nearest_pixel, Fixation, GazeError};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Normalization {
    Raw,
    SumToOne,
    MaxToOne,
}

impl Normalization {
    pub fn code(self) -> u8 {
        match self {
            Normalization::Raw => 0,
            Normalization::SumToOne => 1,
            Normalization::MaxToOne => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Normalization::Raw),
            1 => Some(Normalization::SumToOne),
            2 => Some(Normalization::MaxToOne),
            _ => None,
        }
    }
}

/// Dense non-negative row-major map.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    normalization: Normalization,
}

impl SaliencyMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>, normalization: Normalization) -> Result<Self, GazeError> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(GazeError::Dimension(format!(
                "{} values for a {width}x{height} map",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(GazeError::DegenerateMap(format!("invalid value {v}")));
        }
        Ok(Self {
            width,
            height,
            values,
            normalization,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
            normalization: Normalization::Raw,
        }
    }

    /// Takes plane `(batch, channel)` of an `[N, C, H, W]` tensor; negative values are rejected.
    pub fn from_tensor_plane(t: &Tensor, batch: usize, channel: usize) -> Result<Self, GazeError> {
        let (_, c, h, w) = t.dims4().map_err(|e| GazeError::Dimension(e.to_string()))?;
        let start = (batch * c + channel) * h * w;
        Self::new(w, h, t.data()[start..start + h * w].to_vec(), Normalization::Raw)
    }

    /// `[1, 1, H, W]` tensor view.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_parts(vec![1, 1, self.height, self.width], self.values.clone())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_constant(&self) -> bool {
        self.values.iter().all(|&v| v == self.values[0])
    }

    pub fn same_size(&self, other: &SaliencyMap) -> Result<(), GazeError> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(GazeError::Dimension(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    /// Rescales to the requested normalization. An all-zero map can only be `Raw`.
    pub fn normalized(&self, mode: Normalization) -> Result<Self, GazeError> {
        let divisor = match mode {
            Normalization::Raw => 1.0,
            Normalization::SumToOne => self.sum(),
            Normalization::MaxToOne => self.max(),
        };
        if !(divisor > 0.0) {
            return Err(GazeError::DegenerateMap(format!("cannot apply {mode:?} to an all-zero map")));
        }
        Ok(Self {
            values: self.values.iter().map(|v| v / divisor).collect(),
            normalization: mode,
            ..self.clone()
        })
    }

    /// Pixel-wise mean of equally sized maps, summed in the given order.
    pub fn mean_of(maps: &[&SaliencyMap]) -> Result<Self, GazeError> {
        let first = maps
            .first()
            .ok_or_else(|| GazeError::DegenerateMap("mean of no maps".into()))?;
        let mut acc = vec![0.0; first.values.len()];
        for m in maps {
            first.same_size(m)?;
            acc.iter_mut().zip(&m.values).for_each(|(a, v)| *a += v);
        }
        let n = maps.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Self::new(first.width, first.height, acc, Normalization::Raw)
    }
}

/// Signed map, e.g. the difference of two saliency maps.
#[derive(Clone, Debug, PartialEq)]
pub struct SignedMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl SignedMap {
    pub fn difference(a: &SaliencyMap, b: &SaliencyMap) -> Result<Self, GazeError> {
        a.same_size(b)?;
        Ok(Self {
            width: a.width,
            height: a.height,
            values: a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect(),
        })
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Centroid `(x, y)` of the positive (`positive = true`) or negative part.
    pub fn centroid(&self, positive: bool) -> Option<(f64, f64)> {
        let (mut mass, mut sx, mut sy) = (0.0, 0.0, 0.0);
        for (i, &v) in self.values.iter().enumerate() {
            let m = if positive { v.max(0.0) } else { (-v).max(0.0) };
            mass += m;
            sx += m * (i % self.width) as f64;
            sy += m * (i / self.width) as f64;
        }
        (mass > 0.0).then(|| (sx / mass, sy / mass))
    }
}

/// Blur width for a `width x height` map: 19 px at 640x480, scaled with the shorter side.
pub fn default_sigma(width: usize, height: usize) -> f64 {
    19.0 * width.min(height) as f64 / 480.0
}

/// Normalized 1-D Gaussian truncated at `ceil(3 sigma)`.
pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Accumulates one unit impulse per fixation at its nearest pixel, blurs with a
/// truncated Gaussian (zero padding) and applies `normalization`.
pub fn rasterize(
    fixations: &[Fixation],
    width: usize,
    height: usize,
    sigma_px: f64,
    normalization: Normalization,
) -> Result<SaliencyMap, GazeError> {
    if !(sigma_px > 0.0) {
        return Err(GazeError::Config(format!("sigma must be positive, got {sigma_px}")));
    }
    if width == 0 || height == 0 {
        return Err(GazeError::Dimension("empty image".into()));
    }
    let mut impulses = vec![0.0; width * height];
    for f in fixations {
        if !(f.x >= 0.0 && f.x < width as f64 && f.y >= 0.0 && f.y < height as f64) {
            return Err(GazeError::OutOfBounds {
                x: f.x,
                y: f.y,
                width,
                height,
            });
        }
        let (px, py) = nearest_pixel(f.x, f.y, width, height);
        impulses[py * width + px] += 1.0;
    }
    if fixations.is_empty() && normalization != Normalization::Raw {
        return Err(GazeError::DegenerateMap("no fixations to normalize".into()));
    }
    let kernel = gaussian_kernel(sigma_px);
    let radius = (kernel.len() / 2) as isize;

    let mut rows = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let v = impulses[y * width + x];
            if v == 0.0 {
                continue;
            }
            for (j, &k) in kernel.iter().enumerate() {
                let tx = x as isize + j as isize - radius;
                if (0..width as isize).contains(&tx) {
                    rows[y * width + tx as usize] += v * k;
                }
            }
        }
    }
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        for (j, &k) in kernel.iter().enumerate() {
            let ty = y as isize + j as isize - radius;
            if !(0..height as isize).contains(&ty) {
                continue;
            }
            let src = &rows[y * width..(y + 1) * width];
            let dst = &mut out[ty as usize * width..(ty as usize + 1) * width];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += k * s;
            }
        }
    }
    SaliencyMap::new(width, height, out, Normalization::Raw)?.normalized(normalization)
}
