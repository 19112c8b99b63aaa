//! Dataset-level temporal analyses over per-image slice maps.
//!
//! Per-image work is independent; every cross-image reduction runs in image-id
//! order so results do not depend on input order.

mod stats;

use std::collections::HashMap;

use thiserror::Error;

use crate::gaze::{Fixation, GazeError, Normalization, SaliencyMap, SignedMap, DEFAULT_TOTAL_MS};
use crate::metrics::{self, MetricError};

pub use stats::{paired_t_test, regularized_beta, student_t_two_sided, TTest, NORMAL_APPROX_MIN_N};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("no usable images for {0}")]
    NoUsableImages(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("zero-variance differences")]
    ZeroVariance,
    #[error(transparent)]
    Map(#[from] GazeError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// The slice maps of one image, `T_i1 .. T_in`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSlices {
    pub image_id: String,
    pub maps: Vec<SaliencyMap>,
}

impl ImageSlices {
    fn usable(&self, j: usize) -> bool {
        !self.maps[j].is_constant()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AverageSliceSet {
    pub maps: Vec<SaliencyMap>,
    pub image_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SliceCorrelationMatrix {
    pub n: usize,
    pub values: Vec<Vec<f64>>,
    pub image_count: usize,
    /// Images left out of entry `(j, k)` because slice `j` or `k` was empty or flat.
    pub skipped: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeviationScores {
    pub scores: Vec<f64>,
    pub skipped: Vec<usize>,
}

fn sorted(dataset: &[ImageSlices]) -> Result<(usize, Vec<&ImageSlices>), AnalysisError> {
    let first = dataset
        .first()
        .ok_or_else(|| AnalysisError::NoUsableImages("empty dataset".into()))?;
    let n = first.maps.len();
    if n == 0 {
        return Err(AnalysisError::Input("images have no slices".into()));
    }
    if let Some(bad) = dataset.iter().find(|d| d.maps.len() != n) {
        return Err(AnalysisError::Input(format!(
            "{} has {} slices, expected {n}",
            bad.image_id,
            bad.maps.len()
        )));
    }
    let mut refs: Vec<&ImageSlices> = dataset.iter().collect();
    refs.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    Ok((n, refs))
}

/// Mean over images of `CC(T_ij, T_ik)` for every slice pair.
pub fn inter_slice_cc(dataset: &[ImageSlices]) -> Result<SliceCorrelationMatrix, AnalysisError> {
    let (n, images) = sorted(dataset)?;
    let mut values = vec![vec![1.0; n]; n];
    let mut skipped = vec![vec![0; n]; n];
    for j in 0..n {
        for k in 0..n {
            let used: Vec<&&ImageSlices> = images.iter().filter(|im| im.usable(j) && im.usable(k)).collect();
            skipped[j][k] = images.len() - used.len();
            if used.is_empty() {
                return Err(AnalysisError::NoUsableImages(format!("slices {} and {}", j + 1, k + 1)));
            }
            if j >= k {
                continue;
            }
            let mut acc = 0.0;
            for im in &used {
                acc += metrics::cc(&im.maps[j], &im.maps[k])?;
            }
            values[j][k] = acc / used.len() as f64;
            values[k][j] = values[j][k];
        }
    }
    Ok(SliceCorrelationMatrix {
        n,
        values,
        image_count: images.len(),
        skipped,
    })
}

/// `A_j`: mean of the unit-mass slice-`j` maps, renormalized to unit mass.
pub fn average_slices(dataset: &[ImageSlices]) -> Result<AverageSliceSet, AnalysisError> {
    let (n, images) = sorted(dataset)?;
    let mut maps = Vec::with_capacity(n);
    for j in 0..n {
        let normalized = images
            .iter()
            .filter(|im| im.maps[j].sum() > 0.0)
            .map(|im| im.maps[j].normalized(Normalization::SumToOne))
            .collect::<Result<Vec<_>, _>>()?;
        if normalized.is_empty() {
            return Err(AnalysisError::NoUsableImages(format!("average of slice {}", j + 1)));
        }
        let refs: Vec<&SaliencyMap> = normalized.iter().collect();
        maps.push(SaliencyMap::mean_of(&refs)?.normalized(Normalization::SumToOne)?);
    }
    Ok(AverageSliceSet {
        maps,
        image_count: images.len(),
    })
}

/// Mean over images of `CC(T_ij, A_j)`.
pub fn intra_slice_deviation(dataset: &[ImageSlices], average: &AverageSliceSet) -> Result<DeviationScores, AnalysisError> {
    let (n, images) = sorted(dataset)?;
    if average.maps.len() != n {
        return Err(AnalysisError::Input(format!(
            "{} average maps for {n} slices",
            average.maps.len()
        )));
    }
    let mut scores = Vec::with_capacity(n);
    let mut skipped = Vec::with_capacity(n);
    for (j, avg) in average.maps.iter().enumerate() {
        let used: Vec<&&ImageSlices> = images.iter().filter(|im| im.usable(j)).collect();
        if used.is_empty() || avg.is_constant() {
            return Err(AnalysisError::NoUsableImages(format!("slice {}", j + 1)));
        }
        let mut acc = 0.0;
        for im in &used {
            acc += metrics::cc(&im.maps[j], avg)?;
        }
        scores.push(acc / used.len() as f64);
        skipped.push(images.len() - used.len());
    }
    Ok(DeviationScores { scores, skipped })
}

/// `D_k = A_{k+1} - A_k`.
pub fn consecutive_differences(average: &AverageSliceSet) -> Result<Vec<SignedMap>, AnalysisError> {
    if average.maps.len() < 2 {
        return Err(AnalysisError::Input("need at least two slices".into()));
    }
    average
        .maps
        .windows(2)
        .map(|w| SignedMap::difference(&w[1], &w[0]).map_err(AnalysisError::from))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistogramConfig {
    pub bins_t: usize,
    pub bins_s: usize,
    pub total_ms: f64,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        Self {
            bins_t: 50,
            bins_s: 50,
            total_ms: DEFAULT_TOTAL_MS,
        }
    }
}

/// `counts[time_bin][saliency_bin]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyTimeHistogram {
    pub counts: Vec<Vec<u64>>,
    pub config: HistogramConfig,
}

impl SaliencyTimeHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

fn bin(value: f64, range: f64, bins: usize) -> usize {
    ((value / (range / bins as f64)).floor().max(0.0) as usize).min(bins - 1)
}

/// Counts fixations by (timestamp, ground-truth saliency at the fixation).
///
/// Ground-truth maps are rescaled to a maximum of one before lookup.
pub fn saliency_time_histogram(
    fixations: &[Fixation],
    gt: &HashMap<String, SaliencyMap>,
    cfg: &HistogramConfig,
) -> Result<SaliencyTimeHistogram, AnalysisError> {
    if cfg.bins_t == 0 || cfg.bins_s == 0 || !(cfg.total_ms > 0.0) {
        return Err(AnalysisError::Input(format!("bad histogram config {cfg:?}")));
    }
    let mut scaled: HashMap<&str, SaliencyMap> = HashMap::new();
    let mut counts = vec![vec![0u64; cfg.bins_s]; cfg.bins_t];
    for f in fixations {
        let t = f.t_ms.ok_or_else(|| AnalysisError::Input(format!("{}#{} has no timestamp", f.image_id, f.order_index)))?;
        if !(0.0..=cfg.total_ms).contains(&t) {
            return Err(GazeError::TimestampRange {
                t_ms: t,
                total_ms: cfg.total_ms,
            }
            .into());
        }
        if !scaled.contains_key(f.image_id.as_str()) {
            let map = gt
                .get(&f.image_id)
                .ok_or_else(|| AnalysisError::Input(format!("no ground truth for {}", f.image_id)))?;
            scaled.insert(f.image_id.as_str(), map.normalized(Normalization::MaxToOne)?);
        }
        let map = &scaled[f.image_id.as_str()];
        let (x, y) = f.pixel(map.width(), map.height());
        counts[bin(t, cfg.total_ms, cfg.bins_t)][bin(map.get(x, y), 1.0, cfg.bins_s)] += 1;
    }
    Ok(SaliencyTimeHistogram {
        counts,
        config: cfg.clone(),
    })
}
