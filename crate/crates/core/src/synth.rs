//! Seeded synthetic scenes and observers.
//!
//! A scene is a handful of coloured Gaussian blobs on a noise background.
//! Each one-second slice has its own target fixation distribution: the object
//! mixture reweighted by a drift schedule, blended with a central Gaussian
//! whose share grows over time. Simulated observers draw fixations from these
//! distributions with inhibition of return and emit jittered gaze samples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaze::{default_sigma, rasterize, Fixation, GazeError, GazeSample, Normalization, SaliencyMap};
use crate::metrics::center_prior;
use crate::tensor::Tensor;

pub const SLICE_MS: f64 = 1000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid scene: {0}")]
    Scene(String),
    #[error("invalid observer config: {0}")]
    Observers(String),
    #[error(transparent)]
    Map(#[from] GazeError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub cx: f64,
    pub cy: f64,
    pub sigma: f64,
    pub weight: f64,
    pub color: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub objects: Vec<SceneObject>,
    /// Share of the central attractor in the last slice; it rises linearly from 0 in the first.
    pub center_bias_strength: f64,
    /// `drift[k][j]` multiplies the weight of object `j` during slice `k`.
    pub drift: Vec<Vec<f64>>,
    /// Extra mass on one shared object during the first slice, as (object index, share).
    #[serde(default)]
    pub first_slice_focus: Option<(usize, f64)>,
    #[serde(default = "default_noise")]
    pub noise: f64,
}

fn default_noise() -> f64 {
    0.15
}

impl SceneSpec {
    pub fn slices(&self) -> usize {
        self.drift.len()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Scene(m));
        if self.width == 0 || self.height == 0 {
            return bad("empty image".into());
        }
        if self.objects.is_empty() {
            return bad("at least one object is required".into());
        }
        if self.drift.is_empty() {
            return bad("drift schedule has no slices".into());
        }
        for o in &self.objects {
            if !(o.weight >= 0.0) || !(o.sigma > 0.0) || !o.cx.is_finite() || !o.cy.is_finite() {
                return bad(format!("bad object {o:?}"));
            }
        }
        if !(0.0..=1.0).contains(&self.center_bias_strength) {
            return bad(format!("center bias {} outside [0, 1]", self.center_bias_strength));
        }
        for (k, row) in self.drift.iter().enumerate() {
            if row.len() != self.objects.len() {
                return bad(format!("drift row {k} has {} entries for {} objects", row.len(), self.objects.len()));
            }
            if row.iter().any(|v| !(*v >= 0.0)) {
                return bad(format!("drift row {k} has a negative entry"));
            }
            let mass: f64 = row.iter().zip(&self.objects).map(|(d, o)| d * o.weight).sum();
            if mass <= 0.0 {
                return bad(format!("slice {k} gives every object zero weight"));
            }
        }
        if let Some((j, share)) = self.first_slice_focus {
            if j >= self.objects.len() || !(0.0..=1.0).contains(&share) {
                return bad(format!("bad first-slice focus ({j}, {share})"));
            }
        }
        Ok(())
    }

    /// Central attractor share for zero-based slice `k`.
    pub fn center_share(&self, k: usize) -> f64 {
        let n = self.slices();
        if n < 2 {
            return 0.0;
        }
        self.center_bias_strength * k as f64 / (n - 1) as f64
    }

    /// Mixture weights of the attention components for slice `k`: one per
    /// object, then the central attractor last.
    pub fn component_weights(&self, k: usize) -> Vec<f64> {
        let raw: Vec<f64> = self.objects.iter().zip(&self.drift[k]).map(|(o, d)| o.weight * d).collect();
        let total: f64 = raw.iter().sum();
        let mut w: Vec<f64> = raw.iter().map(|v| v / total).collect();
        if let (0, Some((j, share))) = (k, self.first_slice_focus) {
            w.iter_mut().for_each(|v| *v *= 1.0 - share);
            w[j] += share;
        }
        let c = self.center_share(k);
        w.iter_mut().for_each(|v| *v *= 1.0 - c);
        w.push(c);
        w
    }

    fn center_sigma(&self) -> f64 {
        0.25 * self.width.min(self.height) as f64
    }

    fn component(&self, i: usize) -> (f64, f64, f64) {
        match self.objects.get(i) {
            Some(o) => (o.cx, o.cy, o.sigma),
            None => (
                (self.width as f64 - 1.0) / 2.0,
                (self.height as f64 - 1.0) / 2.0,
                self.center_sigma(),
            ),
        }
    }
}

fn gaussian_plane(width: usize, height: usize, cx: f64, cy: f64, sigma: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..width * height)
        .map(|i| {
            let (x, y) = ((i % width) as f64, (i / width) as f64);
            (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
    v
}

/// Rendered image and the unit-mass target distribution of every slice.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    /// `[3, H, W]` in `[0, 1]`.
    pub image: Tensor,
    pub slice_targets: Vec<SaliencyMap>,
}

impl Scene {
    /// Mean of the slice targets, unit mass.
    pub fn image_target(&self) -> Result<SaliencyMap, SynthError> {
        let refs: Vec<&SaliencyMap> = self.slice_targets.iter().collect();
        Ok(SaliencyMap::mean_of(&refs)?.normalized(Normalization::SumToOne)?)
    }
}

pub fn generate_scene(spec: &SceneSpec, seed: u64) -> Result<Scene, SynthError> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let planes: Vec<Vec<f64>> = spec
        .objects
        .iter()
        .map(|o| gaussian_plane(w, h, o.cx, o.cy, o.sigma))
        .collect();
    let center = center_prior(w, h);
    let mut slice_targets = Vec::with_capacity(spec.slices());
    for k in 0..spec.slices() {
        let weights = spec.component_weights(k);
        let mut v = vec![0.0; w * h];
        for (plane, wt) in planes.iter().chain(std::iter::once(&center.values().to_vec())).zip(&weights) {
            v.iter_mut().zip(plane).for_each(|(a, b)| *a += wt * b);
        }
        slice_targets.push(SaliencyMap::new(w, h, v, Normalization::Raw)?.normalized(Normalization::SumToOne)?);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels: Vec<f64> = (0..3 * w * h).map(|_| rng.random::<f64>() * spec.noise).collect();
    for o in &spec.objects {
        for y in 0..h {
            for x in 0..w {
                let d2 = (x as f64 - o.cx).powi(2) + (y as f64 - o.cy).powi(2);
                let g = (-d2 / (2.0 * o.sigma * o.sigma)).exp();
                for (c, &col) in o.color.iter().enumerate() {
                    pixels[(c * h + y) * w + x] += col * g;
                }
            }
        }
    }
    pixels.iter_mut().for_each(|p| *p = p.clamp(0.0, 1.0));
    Ok(Scene {
        image: Tensor::new(vec![3, h, w], pixels).map_err(|e| SynthError::Scene(e.to_string()))?,
        slice_targets,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObserverConfig {
    pub observers: usize,
    pub samples_per_sec: usize,
    pub fixation_rate: usize,
    /// Weight multiplier applied to a component per previous visit.
    pub rho: f64,
    /// Standard deviation of gaze samples around their fixation, in pixels.
    pub jitter_px: f64,
}

impl Default for ObserverConfig {
    fn default() -> Self {
        Self {
            observers: 15,
            samples_per_sec: 60,
            fixation_rate: 3,
            rho: 0.5,
            jitter_px: 0.5,
        }
    }
}

impl ObserverConfig {
    fn validate(&self) -> Result<(), SynthError> {
        if self.observers == 0 || self.samples_per_sec == 0 || self.fixation_rate == 0 {
            return Err(SynthError::Observers("counts must be positive".into()));
        }
        if self.fixation_rate > self.samples_per_sec {
            return Err(SynthError::Observers("more fixations than gaze samples per second".into()));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(SynthError::Observers(format!("rho {} outside (0, 1]", self.rho)));
        }
        if !(self.jitter_px >= 0.0) {
            return Err(SynthError::Observers(format!("negative jitter {}", self.jitter_px)));
        }
        Ok(())
    }
}

/// Simulated viewing of one image.
#[derive(Clone, Debug, PartialEq)]
pub struct ObserverData {
    pub samples: Vec<GazeSample>,
    /// Without timestamps, as a tracker export would give them.
    pub fixations: Vec<Fixation>,
    /// True onset of each fixation, aligned with `fixations`.
    pub true_t_ms: Vec<f64>,
}

impl ObserverData {
    /// Fixations carrying their true onsets.
    pub fn timed_fixations(&self) -> Vec<Fixation> {
        self.fixations
            .iter()
            .zip(&self.true_t_ms)
            .map(|(f, &t)| Fixation {
                t_ms: Some(t),
                ..f.clone()
            })
            .collect()
    }

    /// Ground-truth slice maps rasterized from the true onsets; empty slices give zero maps.
    pub fn truth_slice_maps(&self, width: usize, height: usize, slices: usize) -> Result<Vec<SaliencyMap>, SynthError> {
        let timed = self.timed_fixations();
        (0..slices)
            .map(|k| {
                let in_slice: Vec<Fixation> = timed
                    .iter()
                    .filter(|f| (f.t_ms.unwrap() / SLICE_MS) as usize == k)
                    .cloned()
                    .collect();
                if in_slice.is_empty() {
                    return Ok(SaliencyMap::zeros(width, height));
                }
                Ok(rasterize(&in_slice, width, height, default_sigma(width, height), Normalization::SumToOne)?)
            })
            .collect()
    }
}

fn pick(rng: &mut impl Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

fn clamp_to(v: f64, extent: usize) -> f64 {
    v.clamp(0.0, extent as f64 - 1.0)
}

/// Observers view the scene for one second per slice. In each second every
/// observer makes `fixation_rate` fixations with random dwell times; each
/// fixation picks an attention component with probability proportional to its
/// slice weight times `rho` per earlier visit by that observer, then a location
/// from that component's Gaussian.
pub fn sample_observers(spec: &SceneSpec, image_id: &str, cfg: &ObserverConfig, seed: u64) -> Result<ObserverData, SynthError> {
    spec.validate()?;
    cfg.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slices = spec.slices();
    let components = spec.objects.len() + 1;
    let sample_dt = 1000.0 / cfg.samples_per_sec as f64;
    let mut out = ObserverData {
        samples: Vec::with_capacity(cfg.observers * slices * cfg.samples_per_sec),
        fixations: Vec::new(),
        true_t_ms: Vec::new(),
    };
    for o in 0..cfg.observers {
        let observer_id = format!("o{o:03}");
        let mut visits = vec![0i32; components];
        let mut onsets = Vec::new();
        let mut points = Vec::new();
        for k in 0..slices {
            let base = spec.component_weights(k);
            let dwell: Vec<f64> = (0..cfg.fixation_rate).map(|_| 0.5 + rng.random::<f64>()).collect();
            let dwell_total: f64 = dwell.iter().sum();
            let mut t = k as f64 * SLICE_MS;
            for d in &dwell {
                let weights: Vec<f64> = base.iter().zip(&visits).map(|(b, &v)| b * cfg.rho.powi(v)).collect();
                let c = pick(&mut rng, &weights);
                visits[c] += 1;
                let (cx, cy, sigma) = spec.component(c);
                let nx: f64 = rng.sample(StandardNormal);
                let ny: f64 = rng.sample(StandardNormal);
                points.push((clamp_to(cx + sigma * nx, w), clamp_to(cy + sigma * ny, h)));
                onsets.push(t);
                t += SLICE_MS * d / dwell_total;
            }
        }
        for (i, (&(x, y), &t)) in points.iter().zip(&onsets).enumerate() {
            out.fixations.push(Fixation {
                image_id: image_id.to_string(),
                observer_id: observer_id.clone(),
                order_index: i as u32,
                x,
                y,
                t_ms: None,
            });
            out.true_t_ms.push(t);
        }
        let mut active = 0;
        for s in 0..slices * cfg.samples_per_sec {
            let t = s as f64 * sample_dt;
            while active + 1 < onsets.len() && onsets[active + 1] <= t {
                active += 1;
            }
            let (fx, fy) = points[active];
            let jx: f64 = rng.sample(StandardNormal);
            let jy: f64 = rng.sample(StandardNormal);
            out.samples.push(GazeSample {
                image_id: image_id.to_string(),
                observer_id: observer_id.clone(),
                t_ms: t,
                x: clamp_to(fx + cfg.jitter_px * jx, w),
                y: clamp_to(fy + cfg.jitter_px * jy, h),
            });
        }
    }
    Ok(out)
}

/// Recipe for a whole dataset of random scenes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub images: usize,
    pub width: usize,
    pub height: usize,
    pub slices: usize,
    pub objects_per_image: usize,
    /// Sweep attention from the left of the image to the right over the slices.
    pub left_to_right_drift: bool,
    pub center_bias_strength: f64,
    /// Share of first-slice attention on an object placed at the same spot in every image.
    pub slice1_agreement: f64,
    pub noise: f64,
    pub observers: ObserverConfig,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            images: 20,
            width: 64,
            height: 64,
            slices: 5,
            objects_per_image: 4,
            left_to_right_drift: true,
            center_bias_strength: 0.3,
            slice1_agreement: 0.0,
            noise: 0.15,
            observers: ObserverConfig::default(),
            seed: 0,
        }
    }
}

/// One generated image with everything needed downstream.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticImage {
    pub id: String,
    pub spec: SceneSpec,
    pub scene: Scene,
    pub gaze: ObserverData,
}

const PALETTE: [[f64; 3]; 6] = [
    [0.9, 0.2, 0.2],
    [0.2, 0.8, 0.3],
    [0.2, 0.3, 0.9],
    [0.9, 0.8, 0.2],
    [0.8, 0.3, 0.8],
    [0.2, 0.8, 0.8],
];

pub fn image_id(index: usize) -> String {
    format!("img{index:04}")
}

/// Left-to-right attention sweep: objects near the moving focus get most of the weight.
fn drift_row(objects: &[SceneObject], width: usize, k: usize, slices: usize) -> Vec<f64> {
    let focus = if slices < 2 {
        0.5
    } else {
        0.1 + 0.8 * k as f64 / (slices - 1) as f64
    };
    objects
        .iter()
        .map(|o| {
            let d = o.cx / width as f64 - focus;
            0.02 + (-d * d / (2.0 * 0.1 * 0.1)).exp()
        })
        .collect()
}

/// Random scene recipe for image `index`.
pub fn random_scene_spec(spec: &DatasetSpec, index: usize) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(2 * index as u64);
    let (w, h) = (spec.width as f64, spec.height as f64);
    let short = w.min(h);
    let mut objects: Vec<SceneObject> = (0..spec.objects_per_image)
        .map(|j| SceneObject {
            cx: w * rng.random_range(0.1..0.9),
            cy: h * rng.random_range(0.15..0.85),
            sigma: short * rng.random_range(0.05..0.08),
            weight: rng.random_range(0.5..1.5),
            color: PALETTE[j % PALETTE.len()],
        })
        .collect();
    let mut first_slice_focus = None;
    if spec.slice1_agreement > 0.0 {
        objects.push(SceneObject {
            cx: 0.5 * w,
            cy: 0.2 * h,
            sigma: 0.06 * short,
            weight: 0.0,
            color: [1.0, 1.0, 1.0],
        });
        first_slice_focus = Some((objects.len() - 1, spec.slice1_agreement));
    }
    let drift = (0..spec.slices)
        .map(|k| {
            if spec.left_to_right_drift {
                drift_row(&objects, spec.width, k, spec.slices)
            } else {
                vec![1.0; objects.len()]
            }
        })
        .collect();
    SceneSpec {
        width: spec.width,
        height: spec.height,
        objects,
        center_bias_strength: spec.center_bias_strength,
        drift,
        first_slice_focus,
        noise: spec.noise,
    }
}

/// Generates image `index` of the dataset; images are independent of each other.
pub fn generate_image(spec: &DatasetSpec, index: usize) -> Result<SyntheticImage, SynthError> {
    if spec.objects_per_image == 0 {
        return Err(SynthError::Scene("objects_per_image must be positive".into()));
    }
    let scene_spec = random_scene_spec(spec, index);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(2 * index as u64 + 1);
    let scene = generate_scene(&scene_spec, rng.random())?;
    let id = image_id(index);
    let gaze = sample_observers(&scene_spec, &id, &spec.observers, rng.random())?;
    Ok(SyntheticImage {
        id,
        spec: scene_spec,
        scene,
        gaze,
    })
}

pub fn generate_dataset(spec: &DatasetSpec) -> Result<Vec<SyntheticImage>, SynthError> {
    (0..spec.images).map(|i| generate_image(spec, i)).collect()
}
