use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_pixels, MetricError, Pixel};
use crate::gaze::SaliencyMap;

/// Negatives beyond this multiple of the positive count are subsampled.
pub const SAUC_NEGATIVE_CAP: usize = 10;

/// Area under the ROC curve through `(0,0)`, one point per threshold, `(1,1)`.
///
/// Both value lists must be sorted descending. A sample counts as detected at
/// threshold `t` when its value is `>= t`.
fn roc_area(thresholds: &[f64], pos: &[f64], neg: &[f64]) -> f64 {
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    let (mut ip, mut ineg) = (0, 0);
    let (mut prev_tp, mut prev_fp, mut area) = (0.0, 0.0, 0.0);
    for &t in thresholds {
        while ip < pos.len() && pos[ip] >= t {
            ip += 1;
        }
        while ineg < neg.len() && neg[ineg] >= t {
            ineg += 1;
        }
        let (tp, fp) = (ip as f64 / np, ineg as f64 / nn);
        area += (fp - prev_fp) * (tp + prev_tp) / 2.0;
        prev_tp = tp;
        prev_fp = fp;
    }
    area + (1.0 - prev_fp) * (1.0 + prev_tp) / 2.0
}

fn sorted_desc(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

fn distinct_desc(values: &[f64]) -> Vec<f64> {
    let mut t = values.to_vec();
    t.dedup();
    t
}

/// AUC-Judd: thresholds at the distinct map values under the fixations;
/// false positives are counted over every pixel without a fixation.
pub fn auc_judd(p: &SaliencyMap, fixations: &[Pixel]) -> Result<f64, MetricError> {
    check_pixels(p, fixations)?;
    let mut fixated = vec![false; p.values().len()];
    for &(x, y) in fixations {
        fixated[y * p.width() + x] = true;
    }
    let pos = sorted_desc(fixations.iter().map(|&(x, y)| p.get(x, y)).collect());
    let neg = sorted_desc(
        p.values()
            .iter()
            .zip(&fixated)
            .filter(|(_, &f)| !f)
            .map(|(&v, _)| v)
            .collect(),
    );
    if neg.is_empty() {
        return Err(MetricError::Degenerate("every pixel is fixated".into()));
    }
    Ok(roc_area(&distinct_desc(&pos), &pos, &neg))
}

/// Shuffled AUC: negatives are fixation pixels borrowed from other images.
///
/// The curve is swept over every distinct value among positives and negatives,
/// so the area equals the Mann-Whitney statistic `P(pos > neg) + P(pos = neg) / 2`.
/// More than `SAUC_NEGATIVE_CAP * |fixations|` negatives are subsampled without
/// replacement using `seed`.
pub fn sauc(p: &SaliencyMap, fixations: &[Pixel], negatives: &[Pixel], seed: u64) -> Result<f64, MetricError> {
    check_pixels(p, fixations)?;
    if negatives.is_empty() {
        return Err(MetricError::EmptyNegatives);
    }
    check_pixels(p, negatives)?;
    let cap = SAUC_NEGATIVE_CAP * fixations.len();
    let chosen: Vec<Pixel> = if negatives.len() > cap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = sample(&mut rng, negatives.len(), cap).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| negatives[i]).collect()
    } else {
        negatives.to_vec()
    };
    let pos = sorted_desc(fixations.iter().map(|&(x, y)| p.get(x, y)).collect());
    let neg = sorted_desc(chosen.iter().map(|&(x, y)| p.get(x, y)).collect());
    let all = sorted_desc(pos.iter().chain(&neg).copied().collect());
    Ok(roc_area(&distinct_desc(&all), &pos, &neg))
}
