//! Fixation timestamp recovery.
//!
//! Each of an observer's `M` fixations gets a uniform prior time
//! `(i + 0.5) * total / M`. The recovered time is that of the gaze sample
//! minimizing `w_s * dist(fixation, sample) + w_t * |sample.t - prior|`, ties
//! going to the earliest sample. A final pass clamps every time to be at
//! least its predecessor's.

use std::collections::BTreeMap;

use super::{Fixation, GazeError, GazeSample, DEFAULT_TOTAL_MS};

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryConfig {
    /// Weight on spatial distance, per pixel.
    pub w_spatial: f64,
    /// Weight on deviation from the uniform prior, per millisecond.
    pub w_temporal: f64,
    pub total_ms: f64,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self {
            w_spatial: 1.0,
            w_temporal: 0.01,
            total_ms: DEFAULT_TOTAL_MS,
        }
    }
}

impl RecoveryConfig {
    fn validate(&self) -> Result<(), GazeError> {
        if !(self.w_spatial >= 0.0 && self.w_temporal >= 0.0) {
            return Err(GazeError::Config(format!(
                "weights must be non-negative (w_s={}, w_t={})",
                self.w_spatial, self.w_temporal
            )));
        }
        if !(self.total_ms > 0.0) {
            return Err(GazeError::Config(format!("total_ms must be positive, got {}", self.total_ms)));
        }
        Ok(())
    }
}

/// Recovers timestamps for one observer's fixations on one image.
///
/// `fixations` must be sorted by `order_index`.
pub fn recover_observer(
    fixations: &[Fixation],
    gaze: &[GazeSample],
    cfg: &RecoveryConfig,
) -> Result<Vec<Fixation>, GazeError> {
    cfg.validate()?;
    let Some(first) = fixations.first() else {
        return Ok(vec![]);
    };
    if gaze.is_empty() {
        return Err(GazeError::UnrecoverableObserver {
            image_id: first.image_id.clone(),
            observer_id: first.observer_id.clone(),
        });
    }
    if fixations.windows(2).any(|w| w[1].order_index <= w[0].order_index) {
        return Err(GazeError::Ordering {
            image_id: first.image_id.clone(),
            observer_id: first.observer_id.clone(),
        });
    }
    let mut samples: Vec<&GazeSample> = gaze.iter().collect();
    samples.sort_by(|a, b| a.t_ms.total_cmp(&b.t_ms));

    let m = fixations.len() as f64;
    let mut out = Vec::with_capacity(fixations.len());
    let mut floor = f64::NEG_INFINITY;
    for (i, fix) in fixations.iter().enumerate() {
        let prior = (i as f64 + 0.5) * cfg.total_ms / m;
        let mut best = (f64::INFINITY, samples[0].t_ms);
        for s in &samples {
            let cost = cfg.w_spatial * (fix.x - s.x).hypot(fix.y - s.y) + cfg.w_temporal * (s.t_ms - prior).abs();
            if cost < best.0 {
                best = (cost, s.t_ms);
            }
        }
        let t = best.1.max(floor);
        floor = t;
        out.push(Fixation {
            t_ms: Some(t),
            ..fix.clone()
        });
    }
    Ok(out)
}

/// Recovers timestamps for a whole dataset, grouping by (image, observer).
///
/// The output is ordered by image id, observer id, then order index.
pub fn recover_timestamps(
    fixations: &[Fixation],
    gaze: &[GazeSample],
    cfg: &RecoveryConfig,
) -> Result<Vec<Fixation>, GazeError> {
    cfg.validate()?;
    let mut fix_groups: BTreeMap<(&str, &str), Vec<Fixation>> = BTreeMap::new();
    for f in fixations {
        fix_groups
            .entry((f.image_id.as_str(), f.observer_id.as_str()))
            .or_default()
            .push(f.clone());
    }
    let mut gaze_groups: BTreeMap<(&str, &str), Vec<GazeSample>> = BTreeMap::new();
    for g in gaze {
        gaze_groups
            .entry((g.image_id.as_str(), g.observer_id.as_str()))
            .or_default()
            .push(g.clone());
    }
    let mut out = Vec::with_capacity(fixations.len());
    for (key, mut group) in fix_groups {
        group.sort_by_key(|f| f.order_index);
        let samples = gaze_groups.get(&key).map(Vec::as_slice).unwrap_or(&[]);
        out.extend(recover_observer(&group, samples, cfg)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fix(i: u32, x: f64, y: f64) -> Fixation {
        Fixation {
            image_id: "img".into(),
            observer_id: "obs".into(),
            order_index: i,
            x,
            y,
            t_ms: None,
        }
    }

    fn gaze(t: f64, x: f64, y: f64) -> GazeSample {
        GazeSample {
            image_id: "img".into(),
            observer_id: "obs".into(),
            t_ms: t,
            x,
            y,
        }
    }

    #[test]
    fn exact_match_single_sample() {
        let out = recover_observer(&[fix(0, 10.0, 20.0)], &[gaze(1200.0, 10.0, 20.0)], &RecoveryConfig::default()).unwrap();
        assert_eq!(out[0].t_ms, Some(1200.0));
    }

    #[test]
    fn equidistant_tie_goes_to_earliest() {
        let cfg = RecoveryConfig {
            w_temporal: 0.0,
            ..Default::default()
        };
        let samples = [gaze(900.0, 10.0, 0.0), gaze(500.0, 0.0, 0.0)];
        let out = recover_observer(&[fix(0, 5.0, 0.0)], &samples, &cfg).unwrap();
        assert_eq!(out[0].t_ms, Some(500.0));
    }

    #[test]
    fn matches_exhaustive_search() {
        let fixes = [fix(0, 3.0, 4.0), fix(1, 20.0, 8.0), fix(2, 7.5, 30.0)];
        let samples = [
            gaze(100.0, 2.0, 5.0),
            gaze(900.0, 4.0, 3.0),
            gaze(1700.0, 19.0, 9.0),
            gaze(2600.0, 21.0, 7.0),
            gaze(3900.0, 8.0, 29.0),
            gaze(4700.0, 7.0, 31.0),
        ];
        let cfg = RecoveryConfig::default();
        let out = recover_observer(&fixes, &samples, &cfg).unwrap();
        for (i, f) in fixes.iter().enumerate() {
            let prior = (i as f64 + 0.5) * 5000.0 / 3.0;
            let mut costs: Vec<(f64, f64)> = samples
                .iter()
                .map(|s| {
                    let d = ((f.x - s.x).powi(2) + (f.y - s.y).powi(2)).sqrt();
                    (d + 0.01 * (s.t_ms - prior).abs(), s.t_ms)
                })
                .collect();
            costs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.partial_cmp(&b.1).unwrap()));
            assert_eq!(out[i].t_ms, Some(costs[0].1), "fixation {i}");
        }
        // Frozen from the enumeration above.
        let got: Vec<f64> = out.iter().map(|f| f.t_ms.unwrap()).collect();
        assert_eq!(got, vec![900.0, 2600.0, 3900.0]);
    }

    #[test]
    fn monotone_repair_clamps_to_predecessor() {
        let cfg = RecoveryConfig {
            w_temporal: 0.0,
            ..Default::default()
        };
        let samples = [gaze(300.0, 0.0, 0.0), gaze(2000.0, 50.0, 50.0)];
        let out = recover_observer(&[fix(0, 50.0, 50.0), fix(1, 0.0, 0.0)], &samples, &cfg).unwrap();
        assert_eq!(out[0].t_ms, Some(2000.0));
        assert_eq!(out[1].t_ms, Some(2000.0));
    }

    #[test]
    fn errors() {
        assert!(matches!(
            recover_observer(&[fix(0, 0.0, 0.0)], &[], &RecoveryConfig::default()),
            Err(GazeError::UnrecoverableObserver { .. })
        ));
        let bad = RecoveryConfig {
            w_spatial: -1.0,
            ..Default::default()
        };
        assert!(matches!(
            recover_observer(&[fix(0, 0.0, 0.0)], &[gaze(0.0, 0.0, 0.0)], &bad),
            Err(GazeError::Config(_))
        ));
        assert!(matches!(
            recover_timestamps(&[fix(0, 0.0, 0.0)], &[], &RecoveryConfig::default()),
            Err(GazeError::UnrecoverableObserver { .. })
        ));
    }
}
