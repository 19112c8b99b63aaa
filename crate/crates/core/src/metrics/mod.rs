//! Saliency evaluation metrics.
//!
//! Distribution metrics (`cc`, `kl`, `sim`) compare two maps; fixation metrics
//! (`nss`, `auc_judd`, `sauc`, `ig`) score a map at fixated pixels. Pixels are
//! `(x, y)` pairs.

mod auc;
mod loss;

use thiserror::Error;

use crate::gaze::{Fixation, GazeError, Normalization, SaliencyMap};

pub use auc::{auc_judd, sauc, SAUC_NEGATIVE_CAP};
pub use loss::{cc_loss_node, kl_loss_node};

pub const DEFAULT_EPS: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("map size mismatch: {0}")]
    Dimension(String),
    #[error("degenerate map: {0}")]
    Degenerate(String),
    #[error("no fixations")]
    EmptyFixations,
    #[error("no negative fixations")]
    EmptyNegatives,
    #[error("pixel ({x}, {y}) outside {width}x{height} map")]
    OutOfBounds { x: usize, y: usize, width: usize, height: usize },
}

impl From<GazeError> for MetricError {
    fn from(e: GazeError) -> Self {
        match e {
            GazeError::Dimension(d) => MetricError::Dimension(d),
            other => MetricError::Degenerate(other.to_string()),
        }
    }
}

pub type Pixel = (usize, usize);

/// Nearest pixels of a set of fixations.
pub fn fixation_pixels(fixations: &[Fixation], width: usize, height: usize) -> Vec<Pixel> {
    fixations.iter().map(|f| f.pixel(width, height)).collect()
}

fn check_pixels(map: &SaliencyMap, pixels: &[Pixel]) -> Result<(), MetricError> {
    if pixels.is_empty() {
        return Err(MetricError::EmptyFixations);
    }
    if let Some(&(x, y)) = pixels.iter().find(|(x, y)| *x >= map.width() || *y >= map.height()) {
        return Err(MetricError::OutOfBounds {
            x,
            y,
            width: map.width(),
            height: map.height(),
        });
    }
    Ok(())
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Pearson correlation of the flattened maps.
pub fn cc(p: &SaliencyMap, g: &SaliencyMap) -> Result<f64, MetricError> {
    p.same_size(g)?;
    if p.is_constant() || g.is_constant() {
        return Err(MetricError::Degenerate("constant map has no correlation".into()));
    }
    let (pm, _) = mean_std(p.values());
    let (gm, _) = mean_std(g.values());
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&a, &b) in p.values().iter().zip(g.values()) {
        let (a, b) = (a - pm, b - gm);
        sab += a * b;
        saa += a * a;
        sbb += b * b;
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// `KL(g || p)` after rescaling both maps to unit mass:
/// `sum g * ln(g / (p + eps) + eps)`.
pub fn kl(p: &SaliencyMap, g: &SaliencyMap, eps: f64) -> Result<f64, MetricError> {
    p.same_size(g)?;
    let p = p.normalized(Normalization::SumToOne)?;
    let g = g.normalized(Normalization::SumToOne)?;
    Ok(p.values()
        .iter()
        .zip(g.values())
        .filter(|(_, &gv)| gv > 0.0)
        .map(|(&pv, &gv)| gv * (gv / (pv + eps) + eps).ln())
        .sum())
}

/// Mean of the standardized map (population std) at the fixated pixels.
pub fn nss(p: &SaliencyMap, fixations: &[Pixel]) -> Result<f64, MetricError> {
    check_pixels(p, fixations)?;
    if p.is_constant() {
        return Err(MetricError::Degenerate("constant map cannot be standardized".into()));
    }
    let (mean, std) = mean_std(p.values());
    Ok(fixations.iter().map(|&(x, y)| (p.get(x, y) - mean) / std).sum::<f64>() / fixations.len() as f64)
}

/// Histogram intersection of the two unit-mass maps.
pub fn sim(p: &SaliencyMap, g: &SaliencyMap) -> Result<f64, MetricError> {
    p.same_size(g)?;
    let p = p.normalized(Normalization::SumToOne)?;
    let g = g.normalized(Normalization::SumToOne)?;
    Ok(p.values().iter().zip(g.values()).map(|(a, b)| a.min(*b)).sum())
}

/// Information gain in bits of `p` over `baseline` at the fixated pixels.
pub fn ig(p: &SaliencyMap, baseline: &SaliencyMap, fixations: &[Pixel], eps: f64) -> Result<f64, MetricError> {
    p.same_size(baseline)?;
    check_pixels(p, fixations)?;
    let p = p.normalized(Normalization::SumToOne)?;
    let b = baseline.normalized(Normalization::SumToOne)?;
    Ok(fixations
        .iter()
        .map(|&(x, y)| (p.get(x, y) + eps).log2() - (b.get(x, y) + eps).log2())
        .sum::<f64>()
        / fixations.len() as f64)
}

/// Isotropic central Gaussian with sigma = 0.25 * min(width, height), unit mass.
pub fn center_prior(width: usize, height: usize) -> SaliencyMap {
    let sigma = 0.25 * width.min(height) as f64;
    let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
    let values = (0..width * height)
        .map(|i| {
            let (x, y) = ((i % width) as f64, (i / width) as f64);
            (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    SaliencyMap::new(width, height, values, Normalization::Raw)
        .and_then(|m| m.normalized(Normalization::SumToOne))
        .expect("center prior is positive")
}

/// Pixel-wise mean of unit-mass versions of `maps`; the default IG baseline.
pub fn mean_baseline(maps: &[&SaliencyMap]) -> Result<SaliencyMap, MetricError> {
    let normalized = maps
        .iter()
        .map(|m| m.normalized(Normalization::SumToOne))
        .collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&SaliencyMap> = normalized.iter().collect();
    Ok(SaliencyMap::mean_of(&refs)?.normalized(Normalization::SumToOne)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(w: usize, h: usize, v: &[f64]) -> SaliencyMap {
        SaliencyMap::new(w, h, v.to_vec(), Normalization::Raw).unwrap()
    }

    #[test]
    fn cc_identities() {
        let x = map(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert!((cc(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let refl = map(2, 2, &[9.0, 8.0, 7.0, 6.0]);
        assert!((cc(&x, &refl).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(cc(&x, &map(2, 2, &[1.0; 4])), Err(MetricError::Degenerate(_))));
        assert!(matches!(cc(&x, &map(4, 1, &[1.0, 2.0, 3.0, 4.0])), Err(MetricError::Dimension(_))));
    }

    #[test]
    fn cc_two_by_two_oracle() {
        // p = [1,2,3,4], g = [1,1,2,2]: cov = 1.0 (population, /4 -> 0.5 each side cancels)
        // sum (p - 2.5)(g - 1.5) = 0.75 + 0.25 + 0.25 + 0.75 = 2
        // sum (p - 2.5)^2 = 5, sum (g - 1.5)^2 = 1
        let expected = 2.0 / 5.0f64.sqrt();
        let got = cc(&map(2, 2, &[1.0, 2.0, 3.0, 4.0]), &map(2, 2, &[1.0, 1.0, 2.0, 2.0])).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn kl_delta_vs_uniform() {
        let eps = DEFAULT_EPS;
        let g = map(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let p = map(2, 2, &[0.25; 4]);
        let expected = (1.0 / (0.25 + eps) + eps).ln();
        assert!((kl(&p, &g, eps).unwrap() - expected).abs() < 1e-12);
        let x = map(2, 2, &[0.1, 0.2, 0.3, 0.4]);
        assert!(kl(&x, &x, eps).unwrap() < 1e-6);
    }

    #[test]
    fn nss_definitional_and_sign() {
        // Values with mean 0 and population std 1.
        let vals = [1.0, -1.0, 1.0, -1.0];
        let shifted: Vec<f64> = vals.iter().map(|v| v + 5.0).collect();
        let p = map(2, 2, &shifted);
        assert!((nss(&p, &[(0, 0)]).unwrap() - 1.0).abs() < 1e-12);
        let two_level = map(2, 2, &[3.0, 1.0, 3.0, 3.0]);
        assert!(nss(&two_level, &[(1, 0)]).unwrap() < 0.0);
        assert!(matches!(nss(&p, &[]), Err(MetricError::EmptyFixations)));
        assert!(matches!(nss(&map(2, 2, &[1.0; 4]), &[(0, 0)]), Err(MetricError::Degenerate(_))));
    }

    #[test]
    fn sim_cases() {
        let x = map(3, 1, &[1.0, 2.0, 3.0]);
        assert!((sim(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(sim(&map(2, 1, &[1.0, 0.0]), &map(2, 1, &[0.0, 1.0])).unwrap(), 0.0);
        let n = 9;
        let mut delta = vec![0.0; n];
        delta[4] = 1.0;
        assert!((sim(&map(3, 3, &[1.0; 9]), &map(3, 3, &delta)).unwrap() - 1.0 / n as f64).abs() < 1e-12);
        assert!(sim(&map(2, 1, &[0.0, 0.0]), &map(2, 1, &[0.0, 1.0])).is_err());
    }

    #[test]
    fn ig_cases() {
        let base = map(2, 2, &[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(ig(&base, &base, &[(0, 0), (1, 1)], DEFAULT_EPS).unwrap(), 0.0);
        // p doubles the baseline mass at the two fixated pixels.
        let p = map(2, 2, &[0.2, 0.1, 0.15, 0.55]);
        let b = map(2, 2, &[0.1, 0.3, 0.325, 0.275]);
        let v = ig(&p, &b, &[(0, 0), (1, 1)], DEFAULT_EPS).unwrap();
        assert!((v - 1.0).abs() < 1e-5);
        assert!(matches!(ig(&p, &b, &[], DEFAULT_EPS), Err(MetricError::EmptyFixations)));
    }

    #[test]
    fn center_prior_is_centered() {
        let c = center_prior(9, 7);
        assert!((c.sum() - 1.0).abs() < 1e-12);
        let argmax = c.values().iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(argmax, 3 * 9 + 4);
    }
}
