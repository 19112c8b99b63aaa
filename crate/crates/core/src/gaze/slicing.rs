//! Partitioning timestamped fixations into mutually exclusive temporal slices.

use serde::{Deserialize, Serialize};

use super::{Fixation, GazeError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SliceScheme {
    /// Fixed time intervals `[k T/n, (k+1) T/n)`, the last one closed.
    EqualDuration,
    /// Equal fixation counts in time order.
    EqualDistribution,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemporalSliceSet {
    pub image_id: String,
    pub scheme: SliceScheme,
    pub slices: Vec<Vec<Fixation>>,
    /// `n + 1` cut points; only present for [`SliceScheme::EqualDuration`].
    pub boundaries_ms: Option<Vec<f64>>,
}

impl TemporalSliceSet {
    pub fn n(&self) -> usize {
        self.slices.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.slices.iter().map(Vec::len).collect()
    }
}

fn check_n(n: usize) -> Result<(), GazeError> {
    if n == 0 {
        return Err(GazeError::Config("slice count must be at least 1".into()));
    }
    Ok(())
}

fn image_id(fixations: &[Fixation]) -> String {
    fixations.first().map(|f| f.image_id.clone()).unwrap_or_default()
}

/// Slices by fixed-length intervals of `total_ms / n`.
pub fn slice_equal_duration(fixations: &[Fixation], n: usize, total_ms: f64) -> Result<TemporalSliceSet, GazeError> {
    check_n(n)?;
    if !(total_ms > 0.0) {
        return Err(GazeError::Config(format!("total_ms must be positive, got {total_ms}")));
    }
    let boundaries: Vec<f64> = (0..=n).map(|k| k as f64 * total_ms / n as f64).collect();
    let interior = &boundaries[1..n];
    let mut slices = vec![Vec::new(); n];
    for f in fixations {
        let t = f.timestamp()?;
        if !(0.0..=total_ms).contains(&t) {
            return Err(GazeError::TimestampRange { t_ms: t, total_ms });
        }
        let k = interior.partition_point(|&b| b <= t);
        slices[k].push(f.clone());
    }
    Ok(TemporalSliceSet {
        image_id: image_id(fixations),
        scheme: SliceScheme::EqualDuration,
        slices,
        boundaries_ms: Some(boundaries),
    })
}

/// Sorts by `(t_ms, order_index)` and cuts into `n` contiguous groups whose
/// sizes differ by at most one, larger groups first.
pub fn slice_equal_distribution(fixations: &[Fixation], n: usize) -> Result<TemporalSliceSet, GazeError> {
    check_n(n)?;
    let mut keyed = Vec::with_capacity(fixations.len());
    for f in fixations {
        keyed.push((f.timestamp()?, f));
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.order_index.cmp(&b.1.order_index)));
    let (q, r) = (keyed.len() / n, keyed.len() % n);
    let mut iter = keyed.into_iter().map(|(_, f)| f.clone());
    let slices = (0..n)
        .map(|k| iter.by_ref().take(if k < r { q + 1 } else { q }).collect())
        .collect();
    Ok(TemporalSliceSet {
        image_id: image_id(fixations),
        scheme: SliceScheme::EqualDistribution,
        slices,
        boundaries_ms: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn timed(i: u32, t: f64) -> Fixation {
        Fixation {
            image_id: "a".into(),
            observer_id: "o".into(),
            order_index: i,
            x: 0.0,
            y: 0.0,
            t_ms: Some(t),
        }
    }

    fn slice_of(t: f64) -> usize {
        let set = slice_equal_duration(&[timed(0, t)], 5, 5000.0).unwrap();
        set.slices.iter().position(|s| !s.is_empty()).unwrap() + 1
    }

    #[test]
    fn duration_boundaries() {
        assert_eq!(slice_of(0.0), 1);
        assert_eq!(slice_of(4999.0), 5);
        assert_eq!(slice_of(1000.0), 2);
        assert_eq!(slice_of(5000.0), 5);
        let set = slice_equal_duration(&[], 5, 5000.0).unwrap();
        assert_eq!(set.boundaries_ms.unwrap(), vec![0.0, 1000.0, 2000.0, 3000.0, 4000.0, 5000.0]);
    }

    #[test]
    fn distribution_sizes() {
        let ten: Vec<_> = (0..10).map(|i| timed(i, i as f64 * 100.0)).collect();
        assert_eq!(slice_equal_distribution(&ten, 5).unwrap().sizes(), vec![2; 5]);
        assert_eq!(slice_equal_distribution(&ten[..7], 5).unwrap().sizes(), vec![2, 2, 1, 1, 1]);
    }

    #[test]
    fn preconditions() {
        let mut f = timed(0, 10.0);
        assert!(slice_equal_duration(&[f.clone()], 0, 5000.0).is_err());
        assert!(matches!(
            slice_equal_duration(&[timed(0, 5001.0)], 5, 5000.0),
            Err(GazeError::TimestampRange { .. })
        ));
        f.t_ms = None;
        assert!(matches!(
            slice_equal_duration(&[f.clone()], 5, 5000.0),
            Err(GazeError::Untimestamped { .. })
        ));
        assert!(matches!(slice_equal_distribution(&[f], 5), Err(GazeError::Untimestamped { .. })));
    }
}
