use super::MetricError;
use crate::autodiff::{Tape, Var};
use crate::tensor::{Tensor, TensorError};

fn check(tape: &Tape, pred: Var, gt: &Tensor) -> Result<(), MetricError> {
    let shape = tape.value(pred).shape();
    if shape != gt.shape() {
        return Err(MetricError::Dimension(format!("{shape:?} vs {:?}", gt.shape())));
    }
    Ok(())
}

fn lift(e: TensorError) -> MetricError {
    match e {
        TensorError::Shape { detail, .. } => MetricError::Dimension(detail),
        other => MetricError::Degenerate(other.to_string()),
    }
}

fn constant_planes(t: &Tensor) -> bool {
    let plane = t.shape()[2] * t.shape()[3];
    t.data().chunks(plane).any(|p| p.iter().all(|&v| v == p[0]))
}

/// Mean Pearson correlation over the `[N, C]` planes of `pred` against a constant target.
pub fn cc_loss_node(tape: &mut Tape, pred: Var, gt: &Tensor) -> Result<Var, MetricError> {
    check(tape, pred, gt)?;
    gt.dims4().map_err(lift)?;
    if constant_planes(gt) || constant_planes(tape.value(pred)) {
        return Err(MetricError::Degenerate("constant plane has no correlation".into()));
    }
    let per_map = tape.pearson_per_map(pred, gt).map_err(lift)?;
    tape.mean(per_map).map_err(lift)
}

/// Mean `KL(gt || pred)` over the `[N, C]` planes, each rescaled to unit mass.
pub fn kl_loss_node(tape: &mut Tape, pred: Var, gt: &Tensor, eps: f64) -> Result<Var, MetricError> {
    check(tape, pred, gt)?;
    let per_map = tape.kl_per_map(pred, gt, eps).map_err(lift)?;
    tape.mean(per_map).map_err(lift)
}
