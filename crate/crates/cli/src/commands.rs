use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use log::{info, warn};
use rayon::prelude::*;
use tempsal::analysis::{
    average_slices, consecutive_differences, inter_slice_cc, intra_slice_deviation, paired_t_test,
    saliency_time_histogram, AnalysisError, HistogramConfig, ImageSlices,
};
use tempsal::checkpoint::ParamStore;
use tempsal::gaze::{
    default_sigma, rasterize, read_fixations_csv, read_gaze_jsonl, read_tsal, recover_timestamps,
    slice_equal_distribution, slice_equal_duration, write_fixations_csv, write_gaze_jsonl, write_pgm16,
    write_ppm_diverging, write_tsal, Fixation, Normalization, RecoveryConfig, SaliencyMap, TemporalSliceSet,
    DEFAULT_SLICES, DEFAULT_TOTAL_MS,
};
use tempsal::io::{read_ppm, write_atomic, write_ppm};
use tempsal::metrics::{self, fixation_pixels, Pixel, DEFAULT_EPS};
use tempsal::model::{
    predict, train_mixing, train_temporal, write_loss_csv, LossConfig, ModelConfig, Sample, TempSal, TrainSchedule,
};
use tempsal::synth::{generate_image, DatasetSpec, SyntheticImage};
use tempsal::tensor::Tensor;

use crate::config::Config;
use crate::error::{CliError, Result};

macro_rules! choice {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq)]
        pub enum $name {
            $($variant),+
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($text => Ok(Self::$variant),)+
                    _ => Err(format!("expected one of: {}", [$($text),+].join(", "))),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self {
                    $(Self::$variant => $text),+
                })
            }
        }
    };
}

choice!(Scheme { EqualDuration => "equal-duration", EqualDistribution => "equal-distribution" });
choice!(Norm { Sum => "sum", Max => "max", Raw => "raw" });
choice!(StageArg { Temporal => "temporal", Mixing => "mixing" });
choice!(Baseline { Center => "center", Mean => "mean" });

impl From<Norm> for Normalization {
    fn from(n: Norm) -> Self {
        match n {
            Norm::Sum => Normalization::SumToOne,
            Norm::Max => Normalization::MaxToOne,
            Norm::Raw => Normalization::Raw,
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn read_fixations(path: &Path) -> Result<Vec<Fixation>> {
    read_fixations_csv(&read_file(path)?[..]).map_err(|e| CliError::from(e).context(path.display()))
}

fn load_map(path: &Path) -> Result<SaliencyMap> {
    read_tsal(path).map_err(|e| CliError::from(e).context(path.display()))
}

fn write_fixations(path: &Path, fixations: &[Fixation], extra: Option<(&str, &[String])>) -> Result<()> {
    let mut buf = Vec::new();
    write_fixations_csv(&mut buf, fixations, extra)?;
    write_atomic(path, &buf)?;
    Ok(())
}

fn write_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let buf = w.into_inner().map_err(|e| CliError::input(e.to_string()))?;
    write_atomic(path, &buf)?;
    Ok(())
}

/// Sorted file stems with extension `ext` in `dir`.
fn list_ids(dir: &Path, ext: &str) -> Result<Vec<String>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?;
    let mut ids = Vec::new();
    for entry in entries {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    if ids.is_empty() {
        return Err(CliError::input(format!("no .{ext} files in {}", dir.display())));
    }
    Ok(ids)
}

fn group_by_image(fixations: Vec<Fixation>) -> BTreeMap<String, Vec<Fixation>> {
    let mut groups: BTreeMap<String, Vec<Fixation>> = BTreeMap::new();
    for f in fixations {
        groups.entry(f.image_id.clone()).or_default().push(f);
    }
    groups
}

fn num(v: f64) -> String {
    v.to_string()
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Dataset recipe as JSON; missing keys take their defaults
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the recipe's image count
    #[arg(long)]
    pub images: Option<usize>,
}

pub fn synth(a: &SynthArgs, cfg: &Config) -> Result<()> {
    let mut spec: DatasetSpec = match &a.spec {
        Some(p) => serde_json::from_slice(&read_file(p)?).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?,
        None => DatasetSpec::default(),
    };
    spec.seed = cfg.pick("seed", a.seed, spec.seed)?;
    spec.images = cfg.pick("images", a.images, spec.images)?;
    if spec.images == 0 {
        return Err(CliError::input("dataset needs at least one image"));
    }
    let images: Vec<SyntheticImage> = (0..spec.images)
        .into_par_iter()
        .map(|i| generate_image(&spec, i))
        .collect::<std::result::Result<_, _>>()?;
    images
        .par_iter()
        .try_for_each(|img| write_ppm(&a.out.join("images").join(format!("{}.ppm", img.id)), &img.scene.image))?;

    let samples: Vec<_> = images.iter().flat_map(|i| i.gaze.samples.iter().cloned()).collect();
    let mut buf = Vec::new();
    write_gaze_jsonl(&mut buf, &samples)?;
    write_atomic(&a.out.join("gaze.jsonl"), &buf)?;
    let untimed: Vec<_> = images.iter().flat_map(|i| i.gaze.fixations.iter().cloned()).collect();
    write_fixations(&a.out.join("fixations.csv"), &untimed, None)?;
    let timed: Vec<_> = images.iter().flat_map(|i| i.gaze.timed_fixations()).collect();
    write_fixations(&a.out.join("fixations_true.csv"), &timed, None)?;
    write_atomic(&a.out.join("dataset.json"), &serde_json::to_vec_pretty(&spec)?)?;
    info!("wrote {} images, {} samples, {} fixations", images.len(), samples.len(), untimed.len());
    Ok(())
}

#[derive(Args, Debug)]
pub struct TimestampsArgs {
    /// Gaze samples, JSON lines
    #[arg(long)]
    pub gaze: PathBuf,
    /// Fixations without timestamps
    #[arg(long)]
    pub fixations: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub w_spatial: Option<f64>,
    #[arg(long)]
    pub w_temporal: Option<f64>,
    #[arg(long)]
    pub t_total: Option<f64>,
}

pub fn timestamps(a: &TimestampsArgs, cfg: &Config) -> Result<()> {
    let d = RecoveryConfig::default();
    let rc = RecoveryConfig {
        w_spatial: cfg.pick("w-spatial", a.w_spatial, d.w_spatial)?,
        w_temporal: cfg.pick("w-temporal", a.w_temporal, d.w_temporal)?,
        total_ms: cfg.pick("t-total", a.t_total, d.total_ms)?,
    };
    let gaze = read_gaze_jsonl(&read_file(&a.gaze)?[..]).map_err(|e| CliError::from(e).context(a.gaze.display()))?;
    let fixations = read_fixations(&a.fixations)?;
    let timed = recover_timestamps(&fixations, &gaze, &rc)?;
    write_fixations(&a.out, &timed, None)?;
    info!("recovered {} timestamps", timed.len());
    Ok(())
}

#[derive(Args, Debug)]
pub struct SliceArgs {
    /// Timestamped fixations
    #[arg(long)]
    pub fixations: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// equal-duration or equal-distribution
    #[arg(long)]
    pub scheme: Option<Scheme>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub t_total: Option<f64>,
}

pub fn slice(a: &SliceArgs, cfg: &Config) -> Result<()> {
    let scheme = cfg.pick("scheme", a.scheme, Scheme::EqualDuration)?;
    let n = cfg.pick("n", a.n, DEFAULT_SLICES)?;
    let total = cfg.pick("t-total", a.t_total, DEFAULT_TOTAL_MS)?;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (_, group) in group_by_image(read_fixations(&a.fixations)?) {
        let set: TemporalSliceSet = match scheme {
            Scheme::EqualDuration => slice_equal_duration(&group, n, total)?,
            Scheme::EqualDistribution => slice_equal_distribution(&group, n)?,
        };
        for (k, s) in set.slices.into_iter().enumerate() {
            labels.extend(std::iter::repeat_n((k + 1).to_string(), s.len()));
            rows.extend(s);
        }
    }
    write_fixations(&a.out, &rows, Some(("slice", &labels)))
}

/// The optional 1-based `slice` column of a fixation CSV.
fn read_slice_column(bytes: &[u8]) -> Result<Option<Vec<usize>>> {
    let mut rdr = csv::Reader::from_reader(bytes);
    let Some(col) = rdr.headers()?.iter().position(|h| h.trim() == "slice") else {
        return Ok(None);
    };
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let raw = rec?.get(col).unwrap_or("").trim().to_string();
        match raw.parse::<usize>() {
            Ok(k) if k >= 1 => out.push(k),
            _ => return Err(CliError::input(format!("row {}: bad slice value {raw:?}", row + 1))),
        }
    }
    Ok(Some(out))
}

#[derive(Args, Debug)]
pub struct RasterizeArgs {
    /// Fixations, optionally with a slice column
    #[arg(long)]
    pub fixations: PathBuf,
    /// Writes gt/<id>.tsal and, for sliced input, t<k>/<id>.tsal
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    /// Gaussian blur in pixels; scales with the image size by default
    #[arg(long)]
    pub sigma: Option<f64>,
    /// sum, max or raw
    #[arg(long)]
    pub normalize: Option<Norm>,
    /// Also write 16-bit PGM previews
    #[arg(long)]
    pub pgm: bool,
}

fn write_map(path: &Path, map: &SaliencyMap, pgm: bool) -> Result<()> {
    write_tsal(path, map)?;
    if pgm {
        write_pgm16(path.with_extension("pgm"), map)?;
    }
    Ok(())
}

pub fn rasterize_cmd(a: &RasterizeArgs, cfg: &Config) -> Result<()> {
    let width = cfg.pick("width", a.width, 64)?;
    let height = cfg.pick("height", a.height, 64)?;
    let sigma = cfg.pick("sigma", a.sigma, default_sigma(width, height))?;
    let norm: Normalization = cfg.pick("normalize", a.normalize, Norm::Sum)?.into();
    let bytes = read_file(&a.fixations)?;
    let fixations = read_fixations_csv(&bytes[..]).map_err(|e| CliError::from(e).context(a.fixations.display()))?;
    let labels = read_slice_column(&bytes)?;
    let n = labels.as_ref().map_or(0, |l| l.iter().copied().max().unwrap_or(0));
    let mut groups: BTreeMap<String, (Vec<Fixation>, Vec<Vec<Fixation>>)> = BTreeMap::new();
    for (i, f) in fixations.into_iter().enumerate() {
        let entry = groups
            .entry(f.image_id.clone())
            .or_insert_with(|| (Vec::new(), vec![Vec::new(); n]));
        if let Some(l) = &labels {
            entry.1[l[i] - 1].push(f.clone());
        }
        entry.0.push(f);
    }
    let raster = |fx: &[Fixation], what: &str| -> Result<SaliencyMap> {
        if fx.is_empty() && norm != Normalization::Raw {
            warn!("{what} has no fixations; writing an empty map");
            return Ok(SaliencyMap::zeros(width, height));
        }
        rasterize(fx, width, height, sigma, norm).map_err(|e| CliError::from(e).context(what))
    };
    groups.par_iter().try_for_each(|(id, (all, slices))| -> Result<()> {
        write_map(&a.out.join("gt").join(format!("{id}.tsal")), &raster(all, id)?, a.pgm)?;
        for (k, s) in slices.iter().enumerate() {
            let map = raster(s, &format!("{id} slice {}", k + 1))?;
            write_map(&a.out.join(format!("t{}", k + 1)).join(format!("{id}.tsal")), &map, a.pgm)?;
        }
        Ok(())
    })?;
    info!("rasterized {} images into {n} slices at sigma {sigma}", groups.len());
    Ok(())
}

/// Number of consecutive `t1`, `t2`, ... directories under `maps`.
fn slice_dirs(maps: &Path) -> usize {
    (1..).take_while(|k| maps.join(format!("t{k}")).is_dir()).count()
}

fn load_slices(maps: &Path) -> Result<Vec<ImageSlices>> {
    let n = slice_dirs(maps);
    if n == 0 {
        return Err(CliError::input(format!("no t1/ directory under {}", maps.display())));
    }
    let ids = list_ids(&maps.join("t1"), "tsal")?;
    ids.par_iter()
        .map(|id| {
            let maps = (1..=n)
                .map(|k| load_map(&maps.join(format!("t{k}")).join(format!("{id}.tsal"))))
                .collect::<Result<_>>()?;
            Ok(ImageSlices {
                image_id: id.clone(),
                maps,
            })
        })
        .collect()
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Directory with t<k>/ slice maps and gt/ maps
    #[arg(long)]
    pub maps: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Timestamped fixations; enables the saliency/time histogram
    #[arg(long)]
    pub fixations: Option<PathBuf>,
    #[arg(long)]
    pub bins_t: Option<usize>,
    #[arg(long)]
    pub bins_s: Option<usize>,
    #[arg(long)]
    pub t_total: Option<f64>,
}

pub fn analyze(a: &AnalyzeArgs, cfg: &Config) -> Result<()> {
    let data = load_slices(&a.maps)?;
    let n = data[0].maps.len();
    let names: Vec<String> = (1..=n).map(|k| format!("t{k}")).collect();

    let matrix = inter_slice_cc(&data)?;
    let mut header = vec!["slice"];
    header.extend(names.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = matrix
        .values
        .iter()
        .zip(&names)
        .map(|(row, name)| std::iter::once(name.clone()).chain(row.iter().map(|&v| num(v))).collect())
        .collect();
    write_rows(&a.out.join("matrix.csv"), &header, &rows)?;

    let avg = average_slices(&data)?;
    let dev = intra_slice_deviation(&data, &avg)?;
    let rows: Vec<Vec<String>> = (0..n)
        .map(|j| vec![names[j].clone(), num(dev.scores[j]), (data.len() - dev.skipped[j]).to_string()])
        .collect();
    write_rows(&a.out.join("scores.csv"), &["slice", "score", "images"], &rows)?;

    let per_image: Vec<Vec<Option<f64>>> = (0..n)
        .map(|j| {
            data.iter()
                .map(|d| (!d.maps[j].is_constant()).then(|| metrics::cc(&d.maps[j], &avg.maps[j])).transpose())
                .collect::<std::result::Result<_, _>>()
        })
        .collect::<std::result::Result<_, _>>()?;
    let mut rows = Vec::new();
    for j in 0..n {
        for k in j + 1..n {
            let (xs, ys): (Vec<f64>, Vec<f64>) = per_image[j]
                .iter()
                .zip(&per_image[k])
                .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
                .unzip();
            let cells = match paired_t_test(&xs, &ys) {
                Ok(t) => vec![num(t.t), num(t.p), t.df.to_string()],
                Err(AnalysisError::ZeroVariance | AnalysisError::Input(_)) => {
                    warn!("no t-test for {} vs {}", names[j], names[k]);
                    vec![String::new(), String::new(), String::new()]
                }
                Err(e) => return Err(e.into()),
            };
            let mut row = vec![names[j].clone(), names[k].clone()];
            row.extend(cells);
            rows.push(row);
        }
    }
    write_rows(&a.out.join("ttest.csv"), &["slice_a", "slice_b", "t", "p", "df"], &rows)?;

    for (k, m) in avg.maps.iter().enumerate() {
        write_map(&a.out.join("average").join(format!("a{}.tsal", k + 1)), m, true)?;
    }
    for (k, d) in consecutive_differences(&avg)?.iter().enumerate() {
        let dir = a.out.join("difference");
        write_ppm_diverging(dir.join(format!("d{}.ppm", k + 1)), d)?;
        for (suffix, sign) in [("pos", 1.0), ("neg", -1.0)] {
            let part: Vec<f64> = d.values.iter().map(|v| (sign * v).max(0.0)).collect();
            let map = SaliencyMap::new(d.width, d.height, part, Normalization::Raw)?;
            write_tsal(dir.join(format!("d{}_{suffix}.tsal", k + 1)), &map)?;
        }
    }

    if let Some(path) = &a.fixations {
        let d = HistogramConfig::default();
        let hc = HistogramConfig {
            bins_t: cfg.pick("bins-t", a.bins_t, d.bins_t)?,
            bins_s: cfg.pick("bins-s", a.bins_s, d.bins_s)?,
            total_ms: cfg.pick("t-total", a.t_total, d.total_ms)?,
        };
        let fixations = read_fixations(path)?;
        let mut gt = HashMap::new();
        for id in group_by_image(fixations.clone()).into_keys() {
            let map = load_map(&a.maps.join("gt").join(format!("{id}.tsal")))?;
            gt.insert(id, map);
        }
        let h = saliency_time_histogram(&fixations, &gt, &hc)?;
        let mut rows = Vec::new();
        for (bt, row) in h.counts.iter().enumerate() {
            for (bs, c) in row.iter().enumerate() {
                rows.push(vec![bt.to_string(), bs.to_string(), c.to_string()]);
            }
        }
        write_rows(&a.out.join("histogram.csv"), &["time_bin", "saliency_bin", "count"], &rows)?;
    }
    info!("analyzed {} images with {n} slices", data.len());
    Ok(())
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Directory of PPM images
    #[arg(long)]
    pub images: PathBuf,
    /// Directory with gt/ and t<k>/ target maps
    #[arg(long)]
    pub maps: PathBuf,
    /// temporal or mixing
    #[arg(long)]
    pub stage: Option<StageArg>,
    /// Checkpoint to start from; required for the mixing stage
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Output checkpoint
    #[arg(long)]
    pub out: PathBuf,
    /// Loss trace; defaults to the checkpoint path with a .loss.csv extension
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub decay_factor: Option<f64>,
    #[arg(long)]
    pub decay_every: Option<usize>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
}

fn unit_mass(map: &SaliencyMap) -> Result<SaliencyMap> {
    if map.sum() > 0.0 {
        Ok(map.normalized(Normalization::SumToOne)?)
    } else {
        Ok(map.clone())
    }
}

fn load_samples(images: &Path, maps: &Path, slices: usize) -> Result<Vec<Sample>> {
    let ids = list_ids(images, "ppm")?;
    ids.par_iter()
        .map(|id| {
            let image = read_ppm(&images.join(format!("{id}.ppm"))).map_err(|e| CliError::input(format!("{id}: {e}")))?;
            let (h, w) = (image.shape()[1], image.shape()[2]);
            let plane = |dir: String| -> Result<Vec<f64>> {
                let m = unit_mass(&load_map(&maps.join(dir).join(format!("{id}.tsal")))?)?;
                if (m.height(), m.width()) != (h, w) {
                    return Err(CliError::input(format!("{id}: {}x{} map for a {w}x{h} image", m.width(), m.height())));
                }
                Ok(m.values().to_vec())
            };
            let mut planes = Vec::with_capacity(slices * h * w);
            for k in 1..=slices {
                planes.extend(plane(format!("t{k}"))?);
            }
            Ok(Sample {
                id: id.clone(),
                slices: Tensor::new(vec![slices, h, w], planes)?,
                gt: Tensor::new(vec![1, h, w], plane("gt".into())?)?,
                image,
            })
        })
        .collect()
}

pub fn train(a: &TrainArgs, cfg: &Config) -> Result<()> {
    let stage = cfg.pick("stage", a.stage, StageArg::Temporal)?;
    let seed = cfg.pick("seed", a.seed, 0u64)?;
    let d = TrainSchedule::default();
    let schedule = TrainSchedule {
        batch_size: cfg.pick("batch-size", a.batch_size, d.batch_size)?,
        lr0: cfg.pick("lr", a.lr, d.lr0)?,
        decay_factor: cfg.pick("decay-factor", a.decay_factor, d.decay_factor)?,
        decay_every: cfg.pick("decay-every", a.decay_every, d.decay_every)?,
        epochs: cfg.pick("epochs", a.epochs, d.epochs)?,
        adam: d.adam,
    };
    let l = LossConfig::default();
    let loss = LossConfig {
        lambda1: cfg.pick("lambda1", a.lambda1, l.lambda1)?,
        beta1: cfg.pick("beta1", a.beta1, l.beta1)?,
        lambda2: cfg.pick("lambda2", a.lambda2, l.lambda2)?,
        beta2: cfg.pick("beta2", a.beta2, l.beta2)?,
    };
    let init = cfg.pick_opt::<PathBuf>("init", a.init.clone())?;
    let mut model = match (&init, stage) {
        (Some(p), _) => TempSal::from_params(ParamStore::load(p).map_err(|e| CliError::from(e).context(p.display()))?)?,
        (None, StageArg::Temporal) => TempSal::init(ModelConfig::default(), seed)?,
        (None, StageArg::Mixing) => return Err(CliError::input("the mixing stage needs --init")),
    };
    let data = load_samples(&a.images, &a.maps, model.config.slices)?;
    info!("training {stage} on {} images for {} epochs", data.len(), schedule.epochs);
    let records = match stage {
        StageArg::Temporal => train_temporal(&mut model, &data, &schedule, &loss, seed)?,
        StageArg::Mixing => train_mixing(&mut model, &data, &schedule, &loss, seed)?,
    };
    model.params.save(&a.out)?;
    let loss_path = a.loss_csv.clone().unwrap_or_else(|| a.out.with_extension("loss.csv"));
    let mut buf = Vec::new();
    write_loss_csv(&mut buf, &records)?;
    write_atomic(&loss_path, &buf)?;
    if let Some(last) = records.last() {
        info!("final loss {}", last.loss);
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory of PPM images
    #[arg(long)]
    pub images: PathBuf,
    /// Writes s_r/, s_i/ and t<k>/ map directories
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub pgm: bool,
}

pub fn predict_cmd(a: &PredictArgs, _cfg: &Config) -> Result<()> {
    let params = ParamStore::load(&a.checkpoint).map_err(|e| CliError::from(e).context(a.checkpoint.display()))?;
    let model = TempSal::from_params(params)?;
    if model.trained_stage() < 2 {
        warn!("checkpoint has only completed stage {}", model.trained_stage());
    }
    let ids = list_ids(&a.images, "ppm")?;
    ids.par_iter().try_for_each(|id| -> Result<()> {
        let image = read_ppm(&a.images.join(format!("{id}.ppm"))).map_err(|e| CliError::input(format!("{id}: {e}")))?;
        let p = predict(&model, &image).map_err(|e| CliError::from(e).context(id))?;
        let file = format!("{id}.tsal");
        write_map(&a.out.join("s_r").join(&file), &p.s_r, a.pgm)?;
        write_map(&a.out.join("s_i").join(&file), &p.s_i, a.pgm)?;
        for (k, t) in p.slices.iter().enumerate() {
            write_map(&a.out.join(format!("t{}", k + 1)).join(&file), t, a.pgm)?;
        }
        Ok(())
    })?;
    info!("predicted {} images", ids.len());
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Predicted maps, <id>.tsal
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth maps, <id>.tsal
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub fixations: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Seed for shuffled-AUC negative subsampling
    #[arg(long)]
    pub seed: Option<u64>,
    /// Information-gain baseline: mean (of the ground-truth maps) or center
    #[arg(long)]
    pub baseline: Option<Baseline>,
    #[arg(long)]
    pub eps: Option<f64>,
}

pub const EVAL_COLUMNS: [&str; 7] = ["auc_judd", "sauc", "nss", "cc", "kl", "sim", "ig"];

pub fn eval(a: &EvalArgs, cfg: &Config) -> Result<()> {
    let seed = cfg.pick("seed", a.seed, 0u64)?;
    let baseline_kind = cfg.pick("baseline", a.baseline, Baseline::Mean)?;
    let eps = cfg.pick("eps", a.eps, DEFAULT_EPS)?;
    let ids = list_ids(&a.gt, "tsal")?;
    let gts = ids
        .iter()
        .map(|id| load_map(&a.gt.join(format!("{id}.tsal"))))
        .collect::<Result<Vec<_>>>()?;
    let preds = ids
        .iter()
        .map(|id| load_map(&a.pred.join(format!("{id}.tsal"))))
        .collect::<Result<Vec<_>>>()?;
    let groups = group_by_image(read_fixations(&a.fixations)?);
    let pixels: Vec<Vec<Pixel>> = ids
        .iter()
        .zip(&gts)
        .map(|(id, g)| {
            let fx = groups.get(id).map(Vec::as_slice).unwrap_or(&[]);
            fixation_pixels(fx, g.width(), g.height())
        })
        .collect();
    let baseline = match baseline_kind {
        Baseline::Center => metrics::center_prior(gts[0].width(), gts[0].height()),
        Baseline::Mean => metrics::mean_baseline(&gts.iter().collect::<Vec<_>>())?,
    };
    let scores: Vec<[f64; 7]> = (0..ids.len())
        .into_par_iter()
        .map(|i| -> Result<[f64; 7]> {
            let (p, g, fx) = (&preds[i], &gts[i], &pixels[i]);
            let negatives: Vec<Pixel> = pixels
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .flat_map(|(_, v)| v.iter().copied())
                .collect();
            let run = || -> std::result::Result<[f64; 7], metrics::MetricError> {
                Ok([
                    metrics::auc_judd(p, fx)?,
                    metrics::sauc(p, fx, &negatives, seed.wrapping_add(i as u64))?,
                    metrics::nss(p, fx)?,
                    metrics::cc(p, g)?,
                    metrics::kl(p, g, eps)?,
                    metrics::sim(p, g)?,
                    metrics::ig(p, &baseline, fx, eps)?,
                ])
            };
            run().map_err(|e| CliError::from(e).context(&ids[i]))
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<Vec<String>> = ids
        .iter()
        .zip(&scores)
        .map(|(id, s)| std::iter::once(id.clone()).chain(s.iter().map(|&v| num(v))).collect())
        .collect();
    let mean: Vec<String> = (0..7)
        .map(|c| num(scores.iter().map(|s| s[c]).sum::<f64>() / scores.len() as f64))
        .collect();
    rows.push(std::iter::once("mean".to_string()).chain(mean).collect());
    let mut header = vec!["image_id"];
    header.extend(EVAL_COLUMNS);
    write_rows(&a.out, &header, &rows)?;
    info!("evaluated {} images", ids.len());
    Ok(())
}
