use std::fmt;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{decode_image, decode_temporal, encode, smm, stage1_loss, stage2_loss, LossConfig, ModelError, TempSal};
use crate::autodiff::Tape;
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::tensor::Tensor;

const FROZEN: [&str; 3] = ["enc.", "dt.", "ds."];
const MIXING: [&str; 1] = ["smm."];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Temporal,
    Mixing,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Temporal => "temporal",
            Stage::Mixing => "mixing",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSchedule {
    pub batch_size: usize,
    pub lr0: f64,
    /// Multiplier applied every `decay_every` epochs; 1.0 disables decay.
    pub decay_factor: f64,
    pub decay_every: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            batch_size: 4,
            lr0: 1e-4,
            decay_factor: 0.1,
            decay_every: 2,
            epochs: 10,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainSchedule {
    pub fn paper_scale() -> Self {
        Self {
            batch_size: 32,
            ..Self::default()
        }
    }

    /// Learning rate for a zero-based epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let steps = epoch.checked_div(self.decay_every).unwrap_or(0);
        self.lr0 * self.decay_factor.powi(steps as i32)
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.batch_size == 0 || self.epochs == 0 || !(self.lr0 > 0.0) || !(self.decay_factor > 0.0) {
            return Err(ModelError::Config(format!("bad schedule {self:?}")));
        }
        Ok(())
    }
}

/// One training image with its targets, all at the same resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    /// `[3, H, W]`
    pub image: Tensor,
    /// `[n, H, W]`, one unit-mass plane per slice.
    pub slices: Tensor,
    /// `[1, H, W]`
    pub gt: Tensor,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub stage: Stage,
    pub loss: f64,
    pub lr: f64,
}

pub fn write_loss_csv(w: impl Write, records: &[LossRecord]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

fn check_data(model: &TempSal, data: &[Sample]) -> Result<(), ModelError> {
    let first = data.first().ok_or_else(|| ModelError::Config("empty training set".into()))?;
    let dims = first.image.shape();
    if dims.len() != 3 || dims[0] != 3 {
        return Err(ModelError::Shape(format!("image {} has shape {dims:?}", first.id)));
    }
    let (h, w) = (dims[1], dims[2]);
    let n = model.config.slices;
    for s in data {
        if s.image.shape() != [3, h, w] || s.slices.shape() != [n, h, w] || s.gt.shape() != [1, h, w] {
            return Err(ModelError::Shape(format!(
                "{}: image {:?}, slices {:?}, gt {:?}; expected [3|{n}|1, {h}, {w}]",
                s.id,
                s.image.shape(),
                s.slices.shape(),
                s.gt.shape()
            )));
        }
    }
    Ok(())
}

fn batches(len: usize, schedule: &TrainSchedule, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    order.shuffle(&mut rng);
    order.chunks(schedule.batch_size).map(<[usize]>::to_vec).collect()
}

fn stack(items: impl Iterator<Item = Tensor>) -> Result<Tensor, ModelError> {
    let items: Vec<Tensor> = items.collect();
    let refs: Vec<&Tensor> = items.iter().collect();
    Ok(Tensor::stack(&refs)?)
}

struct Optimizer {
    names: Vec<String>,
    state: AdamState,
}

impl Optimizer {
    fn new(model: &TempSal, prefixes: &[&str]) -> Self {
        let names: Vec<String> = model
            .param_names()
            .into_iter()
            .filter(|n| prefixes.iter().any(|p| n.starts_with(p)))
            .collect();
        let tensors: Vec<&Tensor> = names.iter().map(|n| model.params.get(n).expect("named param")).collect();
        Self {
            state: AdamState::new(&tensors),
            names,
        }
    }

    fn step(&mut self, model: &mut TempSal, grads: Vec<Tensor>, lr: f64, cfg: &AdamConfig) -> Result<(), ModelError> {
        let mut params: Vec<&mut Tensor> = model
            .params
            .iter_mut()
            .filter(|(n, _)| self.names.iter().any(|m| m == n))
            .map(|(_, t)| t)
            .collect();
        let grad_refs: Vec<&Tensor> = grads.iter().collect();
        adam_step(&mut params, &grad_refs, &mut self.state, lr, cfg)?;
        Ok(())
    }
}

/// Stage 1: encoder and both decoders, on the slice loss for `T` plus the
/// single-map loss for `S_I`.
pub fn train_temporal(
    model: &mut TempSal,
    data: &[Sample],
    schedule: &TrainSchedule,
    loss: &LossConfig,
    seed: u64,
) -> Result<Vec<LossRecord>, ModelError> {
    schedule.validate()?;
    loss.validate()?;
    check_data(model, data)?;
    let mut opt = Optimizer::new(model, &FROZEN);
    let mut records = Vec::with_capacity(schedule.epochs);
    for epoch in 0..schedule.epochs {
        let lr = schedule.lr_at(epoch);
        let mut total = 0.0;
        let groups = batches(data.len(), schedule, seed, epoch);
        for idx in &groups {
            let mut tape = Tape::new();
            let b = model.bind_subset(&mut tape, &FROZEN, true);
            let image = tape.constant(stack(idx.iter().map(|&i| data[i].image.clone()))?);
            let slices = stack(idx.iter().map(|&i| data[i].slices.clone()))?;
            let gt = stack(idx.iter().map(|&i| data[i].gt.clone()))?;
            let blocks = encode(&mut tape, &b, image)?;
            let t = decode_temporal(&mut tape, &b, &blocks)?;
            let s_i = decode_image(&mut tape, &b, &blocks)?;
            let l1 = stage1_loss(&mut tape, t, &slices, loss)?;
            let l2 = stage2_loss(&mut tape, s_i, &gt, loss)?;
            let l = tape.add(l1, l2)?;
            total += tape.value(l).item();
            let grads = tape.backward(l)?;
            let g: Vec<Tensor> = opt
                .names
                .iter()
                .map(|n| Ok(grads.get_or_zeros(&tape, b.get(n)?)))
                .collect::<Result<_, ModelError>>()?;
            opt.step(model, g, lr, &schedule.adam)?;
        }
        records.push(LossRecord {
            epoch,
            stage: Stage::Temporal,
            loss: total / groups.len() as f64,
            lr,
        });
    }
    model.mark_stage(1)?;
    Ok(records)
}

/// Frozen-branch outputs for one image, each with a leading batch axis of 1.
struct Features {
    blocks: Vec<Tensor>,
    t: Tensor,
    s_i: Tensor,
}

fn frozen_features(model: &TempSal, image: &Tensor) -> Result<Features, ModelError> {
    let mut tape = Tape::new();
    let b = model.bind_subset(&mut tape, &FROZEN, false);
    let x = tape.constant(stack(std::iter::once(image.clone()))?);
    let blocks = encode(&mut tape, &b, x)?;
    let t = decode_temporal(&mut tape, &b, &blocks)?;
    let s_i = decode_image(&mut tape, &b, &blocks)?;
    Ok(Features {
        blocks: blocks.iter().map(|&v| tape.value(v).clone()).collect(),
        t: tape.value(t).clone(),
        s_i: tape.value(s_i).clone(),
    })
}

/// Stage 2: only the mixing module is optimized. The encoder and decoders are
/// evaluated once per image as constants and never receive gradients.
pub fn train_mixing(
    model: &mut TempSal,
    data: &[Sample],
    schedule: &TrainSchedule,
    loss: &LossConfig,
    seed: u64,
) -> Result<Vec<LossRecord>, ModelError> {
    if model.trained_stage() < 1 {
        return Err(ModelError::Untrained);
    }
    schedule.validate()?;
    loss.validate()?;
    check_data(model, data)?;
    let features = data
        .iter()
        .map(|s| frozen_features(model, &s.image))
        .collect::<Result<Vec<_>, _>>()?;
    let mut opt = Optimizer::new(model, &MIXING);
    let mut records = Vec::with_capacity(schedule.epochs);
    for epoch in 0..schedule.epochs {
        let lr = schedule.lr_at(epoch);
        let mut total = 0.0;
        let groups = batches(data.len(), schedule, seed, epoch);
        for idx in &groups {
            let mut tape = Tape::new();
            let b = model.bind_subset(&mut tape, &MIXING, true);
            let mut blocks = [None; 5];
            for (k, slot) in blocks.iter_mut().enumerate() {
                *slot = Some(tape.constant(stack(idx.iter().map(|&i| features[i].blocks[k].clone()))?));
            }
            let blocks = blocks.map(|v| v.expect("five blocks"));
            let t = tape.constant(stack(idx.iter().map(|&i| features[i].t.clone()))?);
            let s_i = tape.constant(stack(idx.iter().map(|&i| features[i].s_i.clone()))?);
            let gt = stack(idx.iter().map(|&i| data[i].gt.clone()))?;
            let s_r = smm(&mut tape, &b, &blocks, t, s_i)?;
            let l = stage2_loss(&mut tape, s_r, &gt, loss)?;
            total += tape.value(l).item();
            let grads = tape.backward(l)?;
            for frozen in blocks.iter().chain([&t, &s_i]) {
                assert!(grads.get(*frozen).is_none(), "frozen branch received a gradient");
            }
            let g: Vec<Tensor> = opt
                .names
                .iter()
                .map(|n| Ok(grads.get_or_zeros(&tape, b.get(n)?)))
                .collect::<Result<_, ModelError>>()?;
            opt.step(model, g, lr, &schedule.adam)?;
        }
        records.push(LossRecord {
            epoch,
            stage: Stage::Mixing,
            loss: total / groups.len() as f64,
            lr,
        });
    }
    model.mark_stage(2)?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_schedule() {
        let s = TrainSchedule::default();
        assert_eq!(s.lr_at(0), 1e-4);
        assert_eq!(s.lr_at(1), 1e-4);
        assert!((s.lr_at(2) - 1e-5).abs() < 1e-18);
        assert!((s.lr_at(4) - 1e-6).abs() < 1e-18);
        assert_eq!(TrainSchedule::paper_scale().batch_size, 32);
        let flat = TrainSchedule {
            decay_factor: 1.0,
            ..TrainSchedule::default()
        };
        assert_eq!(flat.lr_at(9), 1e-4);
    }

    #[test]
    fn batches_cover_every_index() {
        let s = TrainSchedule {
            batch_size: 3,
            ..TrainSchedule::default()
        };
        let b = batches(8, &s, 5, 0);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 3, 2]);
        let mut all: Vec<usize> = b.concat();
        all.sort_unstable();
        assert_eq!(all, (0..8).collect::<Vec<_>>());
        assert_eq!(b, batches(8, &s, 5, 0));
    }

    #[test]
    fn loss_csv_header() {
        let mut out = Vec::new();
        let rec = LossRecord {
            epoch: 0,
            stage: Stage::Mixing,
            loss: 0.5,
            lr: 1e-4,
        };
        write_loss_csv(&mut out, &[rec]).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "epoch,stage,loss,lr\n0,mixing,0.5,0.0001\n");
    }
}
