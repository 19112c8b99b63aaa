use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempsal::gaze::{
    rasterize, read_fixations_csv, read_tsal, recover_observer, slice_equal_distribution, slice_equal_duration,
    write_fixations_csv, write_tsal, Fixation, GazeSample, Normalization, RecoveryConfig, SaliencyMap,
};

fn fixation(observer: usize, i: u32, x: f64, y: f64, t: Option<f64>) -> Fixation {
    Fixation {
        image_id: "img".into(),
        observer_id: format!("o{observer}"),
        order_index: i,
        x,
        y,
        t_ms: t,
    }
}

fn random_set(rng: &mut ChaCha8Rng, total: f64) -> Vec<Fixation> {
    let n = rng.random_range(0..40);
    (0..n)
        .map(|i| {
            let t = match rng.random_range(0..10) {
                0 => 0.0,
                1 => total,
                2 => (rng.random_range(1..5) as f64) * total / 5.0,
                _ => rng.random_range(0.0..=total),
            };
            fixation(rng.random_range(0..4), i, 0.0, 0.0, Some(t))
        })
        .collect()
}

fn key(f: &Fixation) -> (String, u32) {
    (f.observer_id.clone(), f.order_index)
}

fn keys_of(slices: &[Vec<Fixation>]) -> Vec<(String, u32)> {
    let mut k: Vec<_> = slices.iter().flatten().map(key).collect();
    k.sort();
    k
}

#[test]
fn slicing_invariants_on_random_sets() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10_000 {
        let total = [5000.0, 3000.0, 1234.5][rng.random_range(0..3)];
        let n = rng.random_range(1..9);
        let set = random_set(&mut rng, total);
        let mut want: Vec<_> = set.iter().map(key).collect();
        want.sort();

        let dur = slice_equal_duration(&set, n, total).unwrap();
        assert_eq!(dur.n(), n);
        assert_eq!(keys_of(&dur.slices), want);
        let b = dur.boundaries_ms.as_ref().unwrap();
        assert_eq!((b[0], b[n]), (0.0, total));
        for (k, slice) in dur.slices.iter().enumerate() {
            for f in slice {
                let t = f.t_ms.unwrap();
                assert!(t >= b[k]);
                assert!(t < b[k + 1] || (k == n - 1 && t == total));
            }
        }
        let again = slice_equal_duration(&dur.slices.concat(), n, total).unwrap();
        assert_eq!(again.slices, dur.slices);

        let dist = slice_equal_distribution(&set, n).unwrap();
        assert_eq!(keys_of(&dist.slices), want);
        let sizes = dist.sizes();
        assert!(sizes.windows(2).all(|w| w[0] >= w[1] && w[0] - w[1] <= 1));
        for w in dist.slices.windows(2) {
            let last = w[0].iter().map(|f| f.t_ms.unwrap()).fold(f64::NEG_INFINITY, f64::max);
            let first = w[1].iter().map(|f| f.t_ms.unwrap()).fold(f64::INFINITY, f64::min);
            assert!(last <= first);
        }
        let again = slice_equal_distribution(&dist.slices.concat(), n).unwrap();
        assert_eq!(again.slices, dist.slices);
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 5.0, "{secs} s");
}

#[test]
fn equal_duration_matches_floor_histogram() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let set: Vec<_> = (0..200)
        .map(|i| fixation(0, i, 0.0, 0.0, Some(rng.random_range(0.0..=5000.0))))
        .collect();
    let mut hist = [0usize; 5];
    for f in &set {
        hist[((f.t_ms.unwrap() / 1000.0).floor() as usize).min(4)] += 1;
    }
    assert_eq!(slice_equal_duration(&set, 5, 5000.0).unwrap().sizes(), hist);
}

#[test]
fn equal_distribution_matches_sort_and_chunk() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for len in [0, 1, 4, 5, 17, 23] {
        let set: Vec<_> = (0..len)
            .map(|i| fixation(0, i, 0.0, 0.0, Some(rng.random_range(0..50) as f64 * 100.0)))
            .collect();
        let mut sorted = set.clone();
        sorted.sort_by(|a, b| a.t_ms.partial_cmp(&b.t_ms).unwrap().then(a.order_index.cmp(&b.order_index)));
        let got = slice_equal_distribution(&set, 5).unwrap();
        let mut pos = 0;
        for (k, slice) in got.slices.iter().enumerate() {
            let size = len as usize / 5 + usize::from(k < len as usize % 5);
            assert_eq!(slice, &sorted[pos..pos + size]);
            pos += size;
        }
    }
}

fn dense_oracle(points: &[(f64, f64)], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    let z: f64 = (-r..=r).map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()).sum();
    let mut out = vec![0.0; w * h];
    for &(x, y) in points {
        let (px, py) = (x.round() as i64, y.round() as i64);
        for yy in 0..h as i64 {
            for xx in 0..w as i64 {
                let (dx, dy) = (xx - px, yy - py);
                if dx.abs() > r || dy.abs() > r {
                    continue;
                }
                out[yy as usize * w + xx as usize] += (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp() / (z * z);
            }
        }
    }
    out
}

#[test]
fn rasterize_matches_dense_convolution() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for (w, h, sigma) in [(20, 15, 1.0), (32, 32, 2.53), (9, 30, 0.7)] {
        let points: Vec<(f64, f64)> = (0..12)
            .map(|_| (rng.random_range(0.0..w as f64 - 0.5), rng.random_range(0.0..h as f64 - 0.5)))
            .collect();
        let fx: Vec<_> = points.iter().enumerate().map(|(i, &(x, y))| fixation(0, i as u32, x, y, None)).collect();
        let got = rasterize(&fx, w, h, sigma, Normalization::Raw).unwrap();
        let want = dense_oracle(&points, w, h, sigma);
        let diff = got.values().iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-12, "{diff}");
        let sum = rasterize(&fx, w, h, sigma, Normalization::SumToOne).unwrap();
        let total: f64 = want.iter().sum();
        for (a, b) in sum.values().iter().zip(&want) {
            assert!((a - b / total).abs() < 1e-12);
        }
    }
}

fn sample(t: f64, x: f64, y: f64) -> GazeSample {
    GazeSample {
        image_id: "img".into(),
        observer_id: "o0".into(),
        t_ms: t,
        x,
        y,
    }
}

fn brute_force(fx: &[Fixation], gaze: &[GazeSample], cfg: &RecoveryConfig) -> Vec<f64> {
    let m = fx.len() as f64;
    let mut prev = f64::NEG_INFINITY;
    fx.iter()
        .enumerate()
        .map(|(i, f)| {
            let prior = (i as f64 + 0.5) * cfg.total_ms / m;
            let mut cands: Vec<(f64, f64)> = gaze
                .iter()
                .map(|s| {
                    let d = ((f.x - s.x).powi(2) + (f.y - s.y).powi(2)).sqrt();
                    (cfg.w_spatial * d + cfg.w_temporal * (s.t_ms - prior).abs(), s.t_ms)
                })
                .collect();
            cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
            prev = cands[0].1.max(prev);
            prev
        })
        .collect()
}

#[test]
fn recovery_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..200 {
        let fx: Vec<_> = (0..rng.random_range(1..12))
            .map(|i| fixation(0, i, rng.random_range(0.0..64.0), rng.random_range(0.0..64.0), None))
            .collect();
        let gaze: Vec<_> = (0..rng.random_range(1..60))
            .map(|_| sample(rng.random_range(0..5000) as f64, rng.random_range(0.0..64.0), rng.random_range(0.0..64.0)))
            .collect();
        let cfg = RecoveryConfig {
            w_temporal: [0.0, 0.01, 0.1][case % 3],
            ..RecoveryConfig::default()
        };
        let got: Vec<f64> = recover_observer(&fx, &gaze, &cfg).unwrap().iter().map(|f| f.t_ms.unwrap()).collect();
        assert_eq!(got, brute_force(&fx, &gaze, &cfg), "case {case}");
        assert!(got.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn spatial_only_recovery_finds_exact_samples() {
    let cfg = RecoveryConfig {
        w_temporal: 0.0,
        ..RecoveryConfig::default()
    };
    let gaze: Vec<_> = (0..10).map(|i| sample(i as f64 * 450.0, 5.0 * i as f64, 3.0 + i as f64)).collect();
    let fx: Vec<_> = [1usize, 3, 4, 8]
        .iter()
        .enumerate()
        .map(|(k, &i)| fixation(0, k as u32, gaze[i].x, gaze[i].y, None))
        .collect();
    let got: Vec<f64> = recover_observer(&fx, &gaze, &cfg).unwrap().iter().map(|f| f.t_ms.unwrap()).collect();
    assert_eq!(got, vec![450.0, 1350.0, 1800.0, 3600.0]);
}

#[test]
fn file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let fx = vec![fixation(0, 0, 1.25, 2.5, Some(100.0)), fixation(1, 3, 7.0, 0.0, Some(4999.5))];
    let path = dir.path().join("f.csv");
    write_fixations_csv(std::fs::File::create(&path).unwrap(), &fx, None).unwrap();
    assert_eq!(read_fixations_csv(std::fs::File::open(&path).unwrap()).unwrap(), fx);

    let m = SaliencyMap::new(3, 2, vec![0.0, 0.5, 0.25, 1.0, 0.125, 0.75], Normalization::MaxToOne).unwrap();
    let p = dir.path().join("m.tsal");
    write_tsal(&p, &m).unwrap();
    assert_eq!(read_tsal(&p).unwrap(), m);
}
