//! Gaze logs, fixations, timestamp recovery, temporal slicing and
//! rasterization into saliency maps.

mod formats;
mod map;
mod slicing;
mod timestamps;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use formats::{
    read_fixations_csv, read_gaze_jsonl, read_tsal, write_fixations_csv, write_gaze_jsonl, write_pgm16,
    write_ppm_diverging, write_tsal, FormatError,
};
pub use map::{default_sigma, rasterize, Normalization, SaliencyMap, SignedMap};
pub use slicing::{slice_equal_distribution, slice_equal_duration, SliceScheme, TemporalSliceSet};
pub use timestamps::{recover_observer, recover_timestamps, RecoveryConfig};

/// Viewing duration used throughout, in milliseconds.
pub const DEFAULT_TOTAL_MS: f64 = 5000.0;
pub const DEFAULT_SLICES: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GazeError {
    #[error("observer {image_id}/{observer_id} has no gaze samples")]
    UnrecoverableObserver { image_id: String, observer_id: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("fixation {image_id}/{observer_id}#{order_index} has no timestamp")]
    Untimestamped {
        image_id: String,
        observer_id: String,
        order_index: u32,
    },
    #[error("timestamp {t_ms} outside [0, {total_ms}]")]
    TimestampRange { t_ms: f64, total_ms: f64 },
    #[error("fixations for {image_id}/{observer_id} are not ordered by order_index")]
    Ordering { image_id: String, observer_id: String },
    #[error("point ({x}, {y}) outside {width}x{height} image")]
    OutOfBounds { x: f64, y: f64, width: usize, height: usize },
    #[error("degenerate map: {0}")]
    DegenerateMap(String),
    #[error("map size mismatch: {0}")]
    Dimension(String),
}

/// One raw tracker sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    pub image_id: String,
    pub observer_id: String,
    pub t_ms: f64,
    pub x: f64,
    pub y: f64,
}

/// A fixation; `t_ms` is absent until recovered.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fixation {
    pub image_id: String,
    pub observer_id: String,
    pub order_index: u32,
    pub x: f64,
    pub y: f64,
    pub t_ms: Option<f64>,
}

impl Fixation {
    /// Nearest pixel, clamped into the image.
    pub fn pixel(&self, width: usize, height: usize) -> (usize, usize) {
        nearest_pixel(self.x, self.y, width, height)
    }

    pub(crate) fn timestamp(&self) -> Result<f64, GazeError> {
        self.t_ms.ok_or_else(|| GazeError::Untimestamped {
            image_id: self.image_id.clone(),
            observer_id: self.observer_id.clone(),
            order_index: self.order_index,
        })
    }
}

pub fn nearest_pixel(x: f64, y: f64, width: usize, height: usize) -> (usize, usize) {
    let px = (x.round().max(0.0) as usize).min(width - 1);
    let py = (y.round().max(0.0) as usize).min(height - 1);
    (px, py)
}
