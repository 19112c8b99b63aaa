use super::{forward, ModelError, TempSal};
use crate::autodiff::Tape;
use crate::gaze::SaliencyMap;
use crate::tensor::Tensor;

/// All maps from one forward pass: `T_1 .. T_n`, `S_I` and `S_R`.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub slices: Vec<SaliencyMap>,
    pub s_i: SaliencyMap,
    pub s_r: SaliencyMap,
}

impl Prediction {
    pub fn map_count(&self) -> usize {
        self.slices.len() + 2
    }
}

/// Runs a batch `[N, 3, H, W]` through the full network without recording gradients.
pub fn predict_batch(model: &TempSal, images: &Tensor) -> Result<Vec<Prediction>, ModelError> {
    let mut tape = Tape::new();
    let b = model.bind(&mut tape, |_| false);
    let x = tape.constant(images.clone());
    let out = forward(&mut tape, &b, x)?;
    let (t, s_i, s_r) = (tape.value(out.t), tape.value(out.s_i), tape.value(out.s_r));
    let batch = images.shape()[0];
    let plane = |t: &Tensor, n: usize, c: usize| SaliencyMap::from_tensor_plane(t, n, c).map_err(|e| ModelError::Shape(e.to_string()));
    (0..batch)
        .map(|n| {
            Ok(Prediction {
                slices: (0..model.config.slices).map(|c| plane(t, n, c)).collect::<Result<_, _>>()?,
                s_i: plane(s_i, n, 0)?,
                s_r: plane(s_r, n, 0)?,
            })
        })
        .collect()
}

/// Single `[3, H, W]` image.
pub fn predict(model: &TempSal, image: &Tensor) -> Result<Prediction, ModelError> {
    let batch = Tensor::stack(&[image])?;
    Ok(predict_batch(model, &batch)?.remove(0))
}
