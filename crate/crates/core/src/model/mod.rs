//! Desk-scale TempSAL network.
//!
//! A five-block strided encoder feeds two U-Net style decoders (temporal
//! slices and whole-image saliency) and the spatiotemporal mixing module
//! that fuses both into the refined map `S_R`.

mod loss;
mod predict;
mod train;

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::{Tape, Var};
use crate::checkpoint::{CheckpointError, ParamStore};
use crate::metrics::MetricError;
use crate::tensor::{Tensor, TensorError};

pub use loss::{map_loss, stage1_loss, stage2_loss, LossConfig};
pub use predict::{predict, predict_batch, Prediction};
pub use train::{train_mixing, train_temporal, write_loss_csv, LossRecord, Sample, Stage, TrainSchedule};

/// Name of the scalar recording the last completed training stage (0, 1 or 2).
pub const STAGE_KEY: &str = "meta.stage";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape: {0}")]
    Shape(String),
    #[error("config: {0}")]
    Config(String),
    #[error("mixing stage needs a checkpoint trained on the temporal stage")]
    Untrained,
    #[error("degenerate: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Layer widths. Decoder and mixing widths run from the coarsest stage (k = 4) to the finest (k = 1).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub encoder: [usize; 5],
    pub decoder: [usize; 4],
    pub head: usize,
    pub mixing: [usize; 4],
    pub slices: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: [8, 16, 24, 32, 40],
            decoder: [32, 24, 16, 8],
            head: 8,
            mixing: [16, 12, 8, 8],
            slices: 5,
        }
    }
}

impl ModelConfig {
    fn validate(&self) -> Result<(), ModelError> {
        let widths = self.encoder.iter().chain(&self.decoder).chain(&self.mixing);
        if widths.chain([&self.head, &self.slices]).any(|&c| c == 0) {
            return Err(ModelError::Config(format!("zero width in {self:?}")));
        }
        Ok(())
    }

    /// Every convolution as (name, input channels, output channels), in initialization order.
    pub fn layers(&self) -> Vec<(String, usize, usize)> {
        let e = self.encoder;
        let mut out = Vec::new();
        for i in 0..5 {
            let cin = if i == 0 { 3 } else { e[i - 1] };
            out.push((format!("enc.{}", i + 1), cin, e[i]));
        }
        for (prefix, cout) in [("dt", self.slices), ("ds", 1)] {
            let mut cin = e[4];
            for (s, k) in (1..=4).rev().enumerate() {
                out.push((format!("{prefix}.conv{k}"), cin, self.decoder[s]));
                cin = self.decoder[s] + e[k - 1];
            }
            out.push((format!("{prefix}.head1"), cin, self.head));
            out.push((format!("{prefix}.head2"), self.head, cout));
        }
        let m = self.mixing;
        out.push(("smm.conv4".into(), e[4] + e[3], m[0]));
        for (s, k) in (1..=3).rev().enumerate() {
            out.push((format!("smm.conv{k}"), m[s] + e[k - 1] + 1 + self.slices, m[s + 1]));
        }
        out.push(("smm.head".into(), m[3], 1));
        out
    }

    /// Recovers the widths from checkpoint shapes.
    pub fn infer(store: &ParamStore) -> Result<Self, ModelError> {
        let out = |name: &str| -> Result<usize, ModelError> { Ok(store.require(&format!("{name}.w"))?.shape()[0]) };
        let cfg = Self {
            encoder: [out("enc.1")?, out("enc.2")?, out("enc.3")?, out("enc.4")?, out("enc.5")?],
            decoder: [out("dt.conv4")?, out("dt.conv3")?, out("dt.conv2")?, out("dt.conv1")?],
            head: out("dt.head1")?,
            mixing: [out("smm.conv4")?, out("smm.conv3")?, out("smm.conv2")?, out("smm.conv1")?],
            slices: out("dt.head2")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parameters plus the widths they were built for.
#[derive(Clone, Debug, PartialEq)]
pub struct TempSal {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl TempSal {
    /// Kaiming-uniform weights, zero biases.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        for (name, cin, cout) in config.layers() {
            let bound = (6.0 / (cin * 9) as f64).sqrt();
            let w: Vec<f64> = (0..cout * cin * 9).map(|_| rng.random_range(-bound..bound)).collect();
            params.insert(format!("{name}.w"), Tensor::new(vec![cout, cin, 3, 3], w)?)?;
            params.insert(format!("{name}.b"), Tensor::zeros(&[cout]))?;
        }
        params.insert(STAGE_KEY, Tensor::scalar(0.0))?;
        Ok(Self { config, params })
    }

    /// Wraps a loaded checkpoint after checking every expected tensor.
    pub fn from_params(params: ParamStore) -> Result<Self, ModelError> {
        let config = ModelConfig::infer(&params)?;
        for (name, cin, cout) in config.layers() {
            for (suffix, shape) in [("w", vec![cout, cin, 3, 3]), ("b", vec![cout])] {
                let key = format!("{name}.{suffix}");
                let t = params.require(&key)?;
                if t.shape() != shape.as_slice() {
                    return Err(CheckpointError::ShapeMismatch {
                        name: key,
                        expected: shape,
                        actual: t.shape().to_vec(),
                    }
                    .into());
                }
            }
        }
        let mut params = params;
        if params.get(STAGE_KEY).is_none() {
            params.insert(STAGE_KEY, Tensor::scalar(0.0))?;
        }
        Ok(Self { config, params })
    }

    pub fn trained_stage(&self) -> u32 {
        self.params.get(STAGE_KEY).map_or(0, |t| t.item() as u32)
    }

    pub(crate) fn mark_stage(&mut self, stage: u32) -> Result<(), ModelError> {
        self.params.set(STAGE_KEY, Tensor::scalar(stage as f64))?;
        Ok(())
    }

    /// Names of the learnable tensors, in storage order.
    pub fn param_names(&self) -> Vec<String> {
        self.params
            .names()
            .filter(|n| !n.starts_with("meta."))
            .map(str::to_string)
            .collect()
    }

    /// Puts every parameter on `tape`; those selected by `trainable` become
    /// leaves, the rest constants.
    pub fn bind(&self, tape: &mut Tape, trainable: impl Fn(&str) -> bool) -> Bindings {
        let mut vars = HashMap::new();
        for (name, value) in self.params.iter() {
            if name.starts_with("meta.") {
                continue;
            }
            let var = if trainable(name) {
                tape.leaf(value.clone())
            } else {
                tape.constant(value.clone())
            };
            vars.insert(name.to_string(), var);
        }
        Bindings { vars }
    }

    /// Binds only the parameters whose names start with one of `prefixes`.
    pub fn bind_subset(&self, tape: &mut Tape, prefixes: &[&str], trainable: bool) -> Bindings {
        let mut vars = HashMap::new();
        for (name, value) in self.params.iter() {
            if !prefixes.iter().any(|p| name.starts_with(p)) {
                continue;
            }
            let var = if trainable {
                tape.leaf(value.clone())
            } else {
                tape.constant(value.clone())
            };
            vars.insert(name.to_string(), var);
        }
        Bindings { vars }
    }
}

/// Parameter name -> tape handle.
#[derive(Clone, Debug, Default)]
pub struct Bindings {
    vars: HashMap<String, Var>,
}

impl Bindings {
    pub fn get(&self, name: &str) -> Result<Var, ModelError> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| ModelError::Config(format!("parameter {name} is not bound")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }

    fn conv(&self, tape: &mut Tape, x: Var, layer: &str, stride: usize) -> Result<Var, ModelError> {
        let w = self.get(&format!("{layer}.w"))?;
        let b = self.get(&format!("{layer}.b"))?;
        Ok(tape.conv2d_strided(x, w, b, stride)?)
    }

    fn conv_relu(&self, tape: &mut Tape, x: Var, layer: &str, stride: usize) -> Result<Var, ModelError> {
        let y = self.conv(tape, x, layer, stride)?;
        Ok(tape.relu(y)?)
    }
}

/// `E_1 .. E_5`, finest first.
pub type EncoderBlocks = [Var; 5];

/// Five conv + ReLU blocks; the first keeps the input resolution, the rest halve it.
pub fn encode(tape: &mut Tape, b: &Bindings, image: Var) -> Result<EncoderBlocks, ModelError> {
    let shape = tape.value(image).shape().to_vec();
    if shape.len() != 4 || shape[1] != 3 {
        return Err(ModelError::Shape(format!("image must be [N, 3, H, W], got {shape:?}")));
    }
    if !shape[2].is_multiple_of(16) || !shape[3].is_multiple_of(16) || shape[2] == 0 || shape[3] == 0 {
        return Err(ModelError::Shape(format!(
            "image size {}x{} is not a positive multiple of 16",
            shape[3], shape[2]
        )));
    }
    let mut x = image;
    let mut blocks = [image; 5];
    for (i, block) in blocks.iter_mut().enumerate() {
        x = b.conv_relu(tape, x, &format!("enc.{}", i + 1), if i == 0 { 1 } else { 2 })?;
        *block = x;
    }
    Ok(blocks)
}

/// Decoder trunk: the activation after each conv + ReLU (k = 4..1) and the
/// final concatenation handed to the head.
pub fn decoder_trunk(tape: &mut Tape, b: &Bindings, prefix: &str, blocks: &EncoderBlocks) -> Result<(Vec<Var>, Var), ModelError> {
    let mut x = blocks[4];
    let mut acts = Vec::with_capacity(4);
    for k in (1..=4).rev() {
        x = b.conv_relu(tape, x, &format!("{prefix}.conv{k}"), 1)?;
        acts.push(x);
        let up = tape.upsample_bilinear(x, 2)?;
        x = tape.concat_channels(&[up, blocks[k - 1]])?;
    }
    Ok((acts, x))
}

/// Trunk then conv -> ReLU -> conv -> sigmoid at input resolution.
pub fn decode(tape: &mut Tape, b: &Bindings, prefix: &str, blocks: &EncoderBlocks) -> Result<Var, ModelError> {
    let (_, x) = decoder_trunk(tape, b, prefix, blocks)?;
    let h = b.conv_relu(tape, x, &format!("{prefix}.head1"), 1)?;
    let logits = b.conv(tape, h, &format!("{prefix}.head2"), 1)?;
    Ok(tape.sigmoid(logits)?)
}

pub fn decode_temporal(tape: &mut Tape, b: &Bindings, blocks: &EncoderBlocks) -> Result<Var, ModelError> {
    decode(tape, b, "dt", blocks)
}

pub fn decode_image(tape: &mut Tape, b: &Bindings, blocks: &EncoderBlocks) -> Result<Var, ModelError> {
    decode(tape, b, "ds", blocks)
}

/// Spatiotemporal mixing: `S_R = minmax(Y + S_I + mean_j T_j)`.
pub fn smm(tape: &mut Tape, b: &Bindings, blocks: &EncoderBlocks, t: Var, s_i: Var) -> Result<Var, ModelError> {
    let batch = tape.value(blocks[0]).shape()[0];
    for (what, v) in [("T", t), ("S_I", s_i)] {
        let n = tape.value(v).shape()[0];
        if n != batch {
            return Err(ModelError::Shape(format!("{what} has batch {n}, features have {batch}")));
        }
    }
    let up = tape.upsample_bilinear(blocks[4], 2)?;
    let fused = tape.concat_channels(&[up, blocks[3]])?;
    let mut x = b.conv_relu(tape, fused, "smm.conv4", 1)?;
    for k in (1..=3).rev() {
        let e = blocks[k - 1];
        let (h, w) = {
            let s = tape.value(e).shape();
            (s[2], s[3])
        };
        let up = tape.upsample_bilinear(x, 2)?;
        let si = tape.resize_bilinear(s_i, h, w)?;
        let tk = tape.resize_bilinear(t, h, w)?;
        let cat = tape.concat_channels(&[up, e, si, tk])?;
        x = b.conv_relu(tape, cat, &format!("smm.conv{k}"), 1)?;
    }
    let y = b.conv(tape, x, "smm.head", 1)?;
    let t_mean = tape.channel_mean(t)?;
    let sum = tape.add(y, s_i)?;
    let sum = tape.add(sum, t_mean)?;
    Ok(tape.minmax_normalize(sum)?)
}

/// Outputs of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct Forward {
    pub blocks: EncoderBlocks,
    pub t: Var,
    pub s_i: Var,
    pub s_r: Var,
}

pub fn forward(tape: &mut Tape, b: &Bindings, image: Var) -> Result<Forward, ModelError> {
    let blocks = encode(tape, b, image)?;
    let t = decode_temporal(tape, b, &blocks)?;
    let s_i = decode_image(tape, b, &blocks)?;
    let s_r = smm(tape, b, &blocks, t, s_i)?;
    Ok(Forward { blocks, t, s_i, s_r })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            encoder: [2, 3, 3, 4, 4],
            decoder: [3, 3, 2, 2],
            head: 2,
            mixing: [2, 2, 2, 2],
            slices: 3,
        }
    }

    #[test]
    fn layer_count_and_init() {
        let m = TempSal::init(tiny(), 1).unwrap();
        assert_eq!(m.config.layers().len(), 5 + 6 + 6 + 5);
        assert_eq!(m.param_names().len(), 2 * m.config.layers().len());
        assert!(m.params.iter().filter(|(n, _)| n.ends_with(".b")).all(|(_, t)| t.data().iter().all(|&v| v == 0.0)));
        let again = TempSal::from_params(m.params.clone()).unwrap();
        assert_eq!(again.config, tiny());
        assert_eq!(m, TempSal::init(tiny(), 1).unwrap());
        assert_ne!(m, TempSal::init(tiny(), 2).unwrap());
    }

    #[test]
    fn rejects_bad_sizes() {
        let m = TempSal::init(tiny(), 1).unwrap();
        let mut tape = Tape::new();
        let b = m.bind(&mut tape, |_| false);
        let img = tape.constant(Tensor::zeros(&[1, 3, 20, 16]));
        assert!(matches!(encode(&mut tape, &b, img), Err(ModelError::Shape(_))));
        let img = tape.constant(Tensor::zeros(&[1, 1, 16, 16]));
        assert!(matches!(encode(&mut tape, &b, img), Err(ModelError::Shape(_))));
    }

    #[test]
    fn mismatched_checkpoint() {
        let m = TempSal::init(tiny(), 1).unwrap();
        let mut store = ParamStore::new();
        for (n, t) in m.params.iter() {
            let t = if n == "dt.conv2.b" { Tensor::zeros(&[7]) } else { t.clone() };
            store.insert(n, t).unwrap();
        }
        assert!(TempSal::from_params(store).is_err());
    }
}
