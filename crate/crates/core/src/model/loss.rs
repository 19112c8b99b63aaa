use log::warn;

use super::ModelError;
use crate::autodiff::{Tape, Var};
use crate::metrics::DEFAULT_EPS;
use crate::tensor::Tensor;

/// Loss weights: `beta * KL - lambda * CC` per stage.
#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    pub lambda1: f64,
    pub beta1: f64,
    pub lambda2: f64,
    pub beta2: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            beta1: 1.0,
            lambda2: 1.0,
            beta2: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let all = [self.lambda1, self.beta1, self.lambda2, self.beta2];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(ModelError::Config(format!("loss weights must be finite and >= 0: {self:?}")));
        }
        if self.lambda1 + self.beta1 == 0.0 || self.lambda2 + self.beta2 == 0.0 {
            return Err(ModelError::Config("each stage needs a positive loss weight".into()));
        }
        Ok(())
    }
}

/// Mean over planes of `beta * KL(gt || pred) - lambda * CC(pred, gt)`.
///
/// Ground-truth planes that are empty or flat are left out of the mean.
pub fn map_loss(tape: &mut Tape, pred: Var, gt: &Tensor, lambda: f64, beta: f64) -> Result<Var, ModelError> {
    let shape = tape.value(pred).shape().to_vec();
    if shape != gt.shape() {
        return Err(ModelError::Shape(format!("prediction {shape:?} vs target {:?}", gt.shape())));
    }
    let (n, c, h, w) = gt.dims4()?;
    let plane = h * w;
    let mut safe = gt.data().to_vec();
    let mut valid = vec![true; n * c];
    for (i, p) in safe.chunks_mut(plane).enumerate() {
        let mass: f64 = p.iter().sum();
        if mass <= 0.0 || p.iter().all(|&v| v == p[0]) {
            warn!("skipping degenerate target plane {} of channel {}", i / c, i % c);
            valid[i] = false;
            p.iter_mut().for_each(|v| *v = 1.0);
        }
    }
    let count = valid.iter().filter(|&&v| v).count();
    if count == 0 {
        return Err(ModelError::Degenerate("every target plane is empty or flat".into()));
    }
    let weights = Tensor::new(
        vec![n, c],
        valid.iter().map(|&v| if v { 1.0 / count as f64 } else { 0.0 }).collect(),
    )?;
    let safe = Tensor::new(gt.shape().to_vec(), safe)?;
    let mut total: Option<Var> = None;
    if beta > 0.0 {
        let kl = tape.kl_per_map(pred, &safe, DEFAULT_EPS)?;
        total = Some(tape.weighted_sum(kl, weights.scale(beta))?);
    }
    if lambda > 0.0 {
        let cc = tape.pearson_per_map(pred, &safe)?;
        let term = tape.weighted_sum(cc, weights.scale(-lambda))?;
        total = Some(match total {
            Some(kl) => tape.add(kl, term)?,
            None => term,
        });
    }
    total.ok_or_else(|| ModelError::Config("both loss weights are zero".into()))
}

/// Temporal-branch loss on `T` against the slice targets.
pub fn stage1_loss(tape: &mut Tape, t: Var, gt_slices: &Tensor, cfg: &LossConfig) -> Result<Var, ModelError> {
    map_loss(tape, t, gt_slices, cfg.lambda1, cfg.beta1)
}

/// Single-map loss, used on `S_R` and, during the temporal stage, on `S_I`.
pub fn stage2_loss(tape: &mut Tape, s: Var, gt: &Tensor, cfg: &LossConfig) -> Result<Var, ModelError> {
    map_loss(tape, s, gt, cfg.lambda2, cfg.beta2)
}
