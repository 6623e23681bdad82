//! Subcommand implementations. Each returns the files it wrote.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use foveate_core::attacks::{
    attack_accuracy_from_outcomes, curve_from_outcomes, run_attack, translation_sweep, AttackOutcome, AttackParam,
    PipelineSpec,
};
use foveate_core::datasets::{bbox_mask, generate_suite, keypoint_mask, AnnotationRecord};
use foveate_core::imgops::{
    circular_mask, focus_crop, roll_translate, rotate_about_fixation, zoom_about_fixation, BoundingBox,
};
use foveate_core::localize::{
    default_thresholds, diff_map, iou_curve, likelihood_map, log_odds_map, mean_in_out, pointing_game,
    recenter_mean, saccade_and_classify, GridMap, GroundTruthMask, LikelihoodMap, DEFAULT_LOG_ODDS_EPS,
};
use foveate_core::oracle::Classifier;
use foveate_core::retina::{from_logpolar, to_logpolar};
use foveate_core::{FixationPoint, ImageBuffer};
use rayon::prelude::*;
use serde::Serialize;

use crate::cli::{AttackArgs, AttackKindArg, Cli, Commands, EvaluateArgs, LocalizeArgs, SynthArgs, TransformArgs, TransformMode};
use crate::config::{RunConfig, BRIDGE_CMD_ENV};
use crate::heatmap::{render, HeatmapFile};
use crate::manifest::{load_manifest, write_manifest, RawRecord};
use crate::oracles::build_oracle;
use crate::raster::{load_image, save_image};

/// Pixels per grid cell in rendered heat maps.
const RENDER_CELL: usize = 20;

/// Resolves the configuration and dispatches.
pub fn run(cli: &Cli) -> anyhow::Result<Vec<PathBuf>> {
    let base = match &cli.global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let cfg = cli.global.apply(base).resolve(std::env::var(BRIDGE_CMD_ENV).ok())?;
    match &cli.command {
        Commands::Transform(a) => cmd_transform(&cfg, a),
        Commands::Attack(a) => with_pool(&cfg, || cmd_attack(&cfg, a)),
        Commands::Localize(a) => cmd_localize(&cfg, a),
        Commands::Evaluate(a) => with_pool(&cfg, || cmd_evaluate(&cfg, a)),
        Commands::Synth(a) => with_pool(&cfg, || cmd_synth(&cfg, a)),
    }
}

fn with_pool<T: Send>(cfg: &RunConfig, f: impl FnOnce() -> anyhow::Result<T> + Send) -> anyhow::Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cfg.jobs {
        builder = builder.num_threads(jobs);
    }
    builder.build().context("worker pool")?.install(f)
}

fn out_dir(cfg: &RunConfig) -> anyhow::Result<&Path> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    Ok(&cfg.out)
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "image".into(), |s| s.to_string_lossy().into_owned())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn write_csv(path: &Path, header: [&str; 2], rows: &[(f64, f64)]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for &(a, b) in rows {
        w.write_record([a.to_string(), b.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn fixation(value: Option<(f64, f64)>) -> anyhow::Result<FixationPoint> {
    let (x, y) = value.unwrap_or((0.0, 0.0));
    Ok(FixationPoint::new(x, y)?)
}

pub fn cmd_transform(cfg: &RunConfig, args: &TransformArgs) -> anyhow::Result<Vec<PathBuf>> {
    let image = load_image(&args.input)?;
    let fix = fixation(args.fixation)?;
    let fill = cfg.fill;
    let output = image_output(cfg, args)?;
    let result = match args.mode {
        TransformMode::Logpolar => to_logpolar(&image, &cfg.grid.build(fix)?, fill),
        TransformMode::Inverse => {
            let (h, w) = args.size.unwrap_or(cfg.input_size());
            from_logpolar(&image, &cfg.grid.build(fix)?, h, w, fill)?
        }
        TransformMode::Mask => circular_mask(&image, fix, cfg.mask_radius, fill)?,
        TransformMode::Rotate => rotate_about_fixation(&image, fix, args.angle.to_radians(), fill),
        TransformMode::Zoom => zoom_about_fixation(&image, fix, args.factor, fill)?,
        TransformMode::Roll => roll_translate(&image, args.dx, args.dy),
        TransformMode::Focus => {
            let [a, b, c, d] = args.bbox.context("focus needs --box x_min,y_min,x_max,y_max")?;
            focus_crop(&image, &BoundingBox::new(a, b, c, d)?, fill)
        }
    };
    save_image(&output, &result)?;
    Ok(vec![output])
}

fn image_output(cfg: &RunConfig, args: &TransformArgs) -> anyhow::Result<PathBuf> {
    if let Some(p) = &args.output {
        if let Some(parent) = p.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        return Ok(p.clone());
    }
    let mode = format!("{:?}", args.mode).to_lowercase();
    Ok(out_dir(cfg)?.join(format!("{}_{mode}.png", stem(&args.input))))
}

/// Records and their decoded images, in manifest order.
fn load_dataset(records: &[AnnotationRecord], oracle: &dyn Classifier) -> anyhow::Result<Vec<(ImageBuffer, usize)>> {
    records
        .par_iter()
        .map(|r| {
            let label = oracle
                .labels()
                .index_of(&r.label)
                .with_context(|| format!("{}: label {:?} unknown to the oracle", r.image_path, r.label))?;
            Ok((load_image(Path::new(&r.image_path))?, label))
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct CurvePoint {
    pub param: f64,
    pub accuracy: f64,
}

#[derive(Debug, Serialize)]
pub struct ImageAttack {
    pub image_path: String,
    pub label: String,
    pub worst_param: f64,
    pub worst_param_label: String,
    pub worst_loss: f64,
    pub predicted: String,
    pub correct: bool,
}

#[derive(Debug, Serialize)]
pub struct AttackReport {
    pub config: RunConfig,
    pub kind: String,
    pub oracle_labels: Vec<String>,
    /// Parameters searched by the per-image attack, in sweep order.
    pub attack_sweep: Vec<f64>,
    pub attack_accuracy: f64,
    pub curve: Vec<CurvePoint>,
    pub images: Vec<ImageAttack>,
}

pub fn cmd_attack(cfg: &RunConfig, args: &AttackArgs) -> anyhow::Result<Vec<PathBuf>> {
    let records = load_manifest(&args.manifest)?;
    ensure!(!records.is_empty(), "{}: manifest has no records", args.manifest.display());
    let oracle = build_oracle(cfg)?;
    let transform = cfg.transform()?;
    let spec = PipelineSpec::new(&transform, oracle.as_ref());
    let dataset = load_dataset(&records, oracle.as_ref())?;

    let (attack_params, extra_curve_params): (Vec<AttackParam>, Vec<AttackParam>) = match args.kind {
        AttackKindArg::Rotation => (cfg.sweeps.rotation.iter().map(|&d| AttackParam::Rotation(d)).collect(), vec![]),
        AttackKindArg::Zoom => {
            let attack: Vec<_> = cfg.sweeps.zoom_attack.iter().map(|&z| AttackParam::Zoom(z)).collect();
            let extra = cfg
                .sweeps
                .zoom_curve
                .iter()
                .filter(|z| !cfg.sweeps.zoom_attack.contains(z))
                .map(|&z| AttackParam::Zoom(z))
                .collect();
            (attack, extra)
        }
        AttackKindArg::Translation => (translation_sweep(cfg.grid_n, spec.input_size())?, vec![]),
    };

    let results: Vec<(AttackOutcome, Option<AttackOutcome>)> = dataset
        .par_iter()
        .map(|(img, y)| {
            let outcome = run_attack(img, *y, &spec, &attack_params)?;
            let extra = if extra_curve_params.is_empty() {
                None
            } else {
                Some(run_attack(img, *y, &spec, &extra_curve_params)?)
            };
            Ok((outcome, extra))
        })
        .collect::<foveate_core::Result<_>>()?;
    let outcomes: Vec<AttackOutcome> = results.iter().map(|(o, _)| o.clone()).collect();

    let mut curve = curve_from_outcomes(&outcomes);
    if !extra_curve_params.is_empty() {
        let extras: Vec<AttackOutcome> = results.iter().filter_map(|(_, e)| e.clone()).collect();
        curve.extend(curve_from_outcomes(&extras));
        let order = |p: &AttackParam| cfg.sweeps.zoom_curve.iter().position(|&z| p.value(cfg.grid_n) == z);
        curve.retain(|(p, _)| order(p).is_some());
        curve.sort_by_key(|(p, _)| order(p));
    }
    let labels = oracle.labels();
    let name = |i: usize| labels.name(i).unwrap_or("?").to_string();
    let images = records
        .iter()
        .zip(&outcomes)
        .map(|(r, o)| ImageAttack {
            image_path: r.image_path.clone(),
            label: r.label.clone(),
            worst_param: o.worst_param.value(cfg.grid_n),
            worst_param_label: o.worst_param.label(),
            worst_loss: o.per_param_loss.iter().map(|&(_, l)| l).fold(f64::NEG_INFINITY, f64::max),
            predicted: name(o.predicted),
            correct: o.correct,
        })
        .collect();
    let kind = format!("{:?}", args.kind).to_lowercase();
    let curve: Vec<CurvePoint> =
        curve.iter().map(|(p, a)| CurvePoint { param: p.value(cfg.grid_n), accuracy: *a }).collect();
    let report = AttackReport {
        config: cfg.clone(),
        kind: kind.clone(),
        oracle_labels: labels.labels().to_vec(),
        attack_sweep: attack_params.iter().map(|p| p.value(cfg.grid_n)).collect(),
        attack_accuracy: attack_accuracy_from_outcomes(&outcomes),
        images,
        curve,
    };
    let dir = out_dir(cfg)?;
    let json = dir.join(format!("attack_{kind}.json"));
    let csv_path = dir.join(format!("attack_{kind}_curve.csv"));
    let rows: Vec<(f64, f64)> = report.curve.iter().map(|c| (c.param, c.accuracy)).collect();
    write_json(&json, &report)?;
    write_csv(&csv_path, ["param", "accuracy"], &rows)?;
    Ok(vec![json, csv_path])
}

fn label_subset(oracle: &dyn Classifier, names: &[String]) -> anyhow::Result<Vec<usize>> {
    if names.len() == 1 && names[0] == "all" {
        return Ok((0..oracle.labels().len()).collect());
    }
    names
        .iter()
        .map(|n| oracle.labels().index_of(n).with_context(|| format!("label {n:?} unknown to the oracle")))
        .collect()
}

pub fn cmd_localize(cfg: &RunConfig, args: &LocalizeArgs) -> anyhow::Result<Vec<PathBuf>> {
    let image = load_image(&args.image)?;
    let oracle = build_oracle(cfg)?;
    let subset = label_subset(oracle.as_ref(), &args.labels)?;
    let transform = cfg.transform()?;
    let spec = PipelineSpec::new(&transform, oracle.as_ref());
    let map = likelihood_map(&image, &subset, &spec, cfg.grid_n, cfg.min_ratio)?;
    let output = match &args.output {
        Some(p) => p.clone(),
        None => out_dir(cfg)?.join(format!("{}_heatmap.json", stem(&args.image))),
    };
    HeatmapFile::from_likelihood(&map).write(&output)?;
    let mut written = vec![output];
    if let Some(path) = &args.render {
        save_image(path, &render(&GridMap::from(&map), RENDER_CELL))?;
        written.push(path.clone());
    }
    Ok(written)
}

fn ground_truth(cfg: &RunConfig, r: &AnnotationRecord) -> anyhow::Result<GroundTruthMask> {
    let n = cfg.grid_n;
    let from_boxes = (!r.boxes.is_empty()).then(|| bbox_mask(&r.boxes, n)).transpose()?;
    let from_points = (!r.keypoints.is_empty())
        .then(|| keypoint_mask(&r.keypoints, n, cfg.keypoints.sigma_coeff, cfg.keypoints.threshold))
        .transpose()?;
    let union = match (from_boxes, from_points) {
        (Some(a), Some(b)) => a.cells().iter().zip(b.cells()).map(|(&x, &y)| x || y).collect(),
        (Some(m), None) | (None, Some(m)) => return Ok(m),
        (None, None) => bail!("{}: record has neither boxes nor keypoints", r.image_path),
    };
    Ok(GroundTruthMask::new(n, union)?)
}

#[derive(Debug, Serialize)]
pub struct ImageMetrics {
    pub image_path: String,
    pub label: String,
    /// `None` when the ground-truth mask covers no grid cell.
    pub pointing: Option<bool>,
    pub mean_in: Option<f64>,
    pub mean_out: Option<f64>,
    pub ratio: Option<f64>,
    pub peak_iou: f64,
    pub peak_threshold: f64,
    pub peak_cell: [usize; 2],
    pub pre_likelihood: f64,
    pub post_likelihood: f64,
    pub pre_correct: bool,
    pub post_correct: bool,
}

#[derive(Debug, Serialize)]
pub struct Aggregate {
    pub images: usize,
    pub pointing_scored: usize,
    pub pointing_rate: f64,
    pub in_out_scored: usize,
    pub mean_in: f64,
    pub mean_out: f64,
    pub mean_ratio: f64,
    pub ratio_above_one_rate: f64,
    pub mean_peak_iou: f64,
    pub iou_curve: Vec<CurvePoint>,
    pub pre_saccade_accuracy: f64,
    pub post_saccade_accuracy: f64,
}

#[derive(Debug, Serialize)]
pub struct EvaluateReport {
    pub config: RunConfig,
    pub aggregate: Aggregate,
    pub images: Vec<ImageMetrics>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

type PerImage = (ImageMetrics, LikelihoodMap, Vec<(f64, f64)>);

pub fn cmd_evaluate(cfg: &RunConfig, args: &EvaluateArgs) -> anyhow::Result<Vec<PathBuf>> {
    if let Some(pair) = &args.compare {
        return compare_runs(cfg, &pair[0], &pair[1]);
    }
    let manifest = args.manifest.as_ref().context("evaluate needs a manifest")?;
    let records = load_manifest(manifest)?;
    ensure!(!records.is_empty(), "{}: manifest has no records", manifest.display());
    let masks = records.iter().map(|r| ground_truth(cfg, r)).collect::<anyhow::Result<Vec<_>>>()?;
    let oracle = build_oracle(cfg)?;
    let transform = cfg.transform()?;
    let spec = PipelineSpec::new(&transform, oracle.as_ref());
    let dataset = load_dataset(&records, oracle.as_ref())?;
    let thresholds = default_thresholds();

    let per_image: Vec<PerImage> = dataset
        .par_iter()
        .zip(records.par_iter().zip(masks.par_iter()))
        .map(|((img, y), (rec, mask))| {
            let s = saccade_and_classify(img, &[*y], &spec, cfg.grid_n, cfg.min_ratio)?;
            let pointing = pointing_game(&s.map, mask).ok();
            let io = mean_in_out(&s.map, mask).ok();
            let iou = iou_curve(&s.map, mask, &thresholds)?;
            let m = ImageMetrics {
                image_path: rec.image_path.clone(),
                label: rec.label.clone(),
                pointing,
                mean_in: io.as_ref().map(|v| v.mean_in),
                mean_out: io.as_ref().map(|v| v.mean_out),
                ratio: io.as_ref().map(|v| v.ratio),
                peak_iou: iou.peak_iou,
                peak_threshold: iou.peak_threshold,
                peak_cell: [s.target.0, s.target.1],
                pre_likelihood: s.pre_likelihood,
                post_likelihood: s.post_likelihood,
                pre_correct: s.pre_correct,
                post_correct: s.post_correct,
            };
            Ok((m, s.map, iou.curve))
        })
        .collect::<foveate_core::Result<_>>()?;

    let metrics: Vec<&ImageMetrics> = per_image.iter().map(|(m, _, _)| m).collect();
    let pointing: Vec<bool> = metrics.iter().filter_map(|m| m.pointing).collect();
    let rated: Vec<&&ImageMetrics> = metrics.iter().filter(|m| m.ratio.is_some()).collect();
    let frac = |hits: usize, n: usize| if n == 0 { 0.0 } else { hits as f64 / n as f64 };
    let iou_mean: Vec<CurvePoint> = thresholds
        .iter()
        .enumerate()
        .map(|(i, &t)| CurvePoint { param: t, accuracy: mean(per_image.iter().map(|(_, _, c)| c[i].1)) })
        .collect();
    let aggregate = Aggregate {
        images: metrics.len(),
        pointing_scored: pointing.len(),
        pointing_rate: frac(pointing.iter().filter(|&&p| p).count(), pointing.len()),
        in_out_scored: rated.len(),
        mean_in: mean(rated.iter().filter_map(|m| m.mean_in)),
        mean_out: mean(rated.iter().filter_map(|m| m.mean_out)),
        mean_ratio: mean(rated.iter().filter_map(|m| m.ratio)),
        ratio_above_one_rate: frac(rated.iter().filter(|m| m.ratio.is_some_and(|r| r > 1.0)).count(), rated.len()),
        mean_peak_iou: mean(metrics.iter().map(|m| m.peak_iou)),
        iou_curve: iou_mean,
        pre_saccade_accuracy: frac(metrics.iter().filter(|m| m.pre_correct).count(), metrics.len()),
        post_saccade_accuracy: frac(metrics.iter().filter(|m| m.post_correct).count(), metrics.len()),
    };

    let maps: Vec<LikelihoodMap> = per_image.iter().map(|(_, m, _)| m.clone()).collect();
    let recentered = recenter_mean(&maps)?;
    let dir = out_dir(cfg)?;
    let report_path = dir.join("evaluate.json");
    let iou_path = dir.join("iou_curve.csv");
    let mean_path = dir.join("recentered_mean.json");
    let rows: Vec<(f64, f64)> = aggregate.iou_curve.iter().map(|c| (c.param, c.accuracy)).collect();
    let report = EvaluateReport {
        config: cfg.clone(),
        aggregate,
        images: per_image.into_iter().map(|(m, _, _)| m).collect(),
    };
    write_json(&report_path, &report)?;
    write_csv(&iou_path, ["threshold", "iou"], &rows)?;
    HeatmapFile::from_grid(&recentered.to_grid_map(), Vec::new()).write(&mean_path)?;
    Ok(vec![report_path, iou_path, mean_path])
}

fn compare_runs(cfg: &RunConfig, a: &Path, b: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let ma = HeatmapFile::read(a)?.to_grid()?;
    let mb = HeatmapFile::read(b)?.to_grid()?;
    let diff = diff_map(&ma, &mb)?;
    let odds = log_odds_map(&ma, &mb, DEFAULT_LOG_ODDS_EPS)?;
    let dir = out_dir(cfg)?;
    let diff_path = dir.join("difference_map.json");
    let odds_path = dir.join("log_odds_map.json");
    HeatmapFile::from_grid(&diff, Vec::new()).write(&diff_path)?;
    HeatmapFile::from_grid(&odds, Vec::new()).write(&odds_path)?;
    Ok(vec![diff_path, odds_path])
}

pub fn cmd_synth(cfg: &RunConfig, args: &SynthArgs) -> anyhow::Result<Vec<PathBuf>> {
    let count = args.count.unwrap_or(cfg.synth.count);
    let layout = cfg.synth.layout.layout(cfg.synth.size);
    let scenes = generate_suite(cfg.seed, count, &layout)?;
    let dir = out_dir(cfg)?;
    let names: Vec<String> = (0..scenes.len()).map(|i| format!("scene_{i:05}.png")).collect();
    scenes
        .par_iter()
        .zip(names.par_iter())
        .try_for_each(|(s, name)| save_image(&dir.join(name), &s.image))?;
    let records: Vec<RawRecord> = scenes
        .iter()
        .zip(&names)
        .map(|(s, name)| RawRecord::normalized(name.clone(), s.class.name(), &[s.bbox]))
        .collect();
    let manifest = dir.join("manifest.jsonl");
    let file = fs::File::create(&manifest).with_context(|| format!("writing {}", manifest.display()))?;
    write_manifest(std::io::BufWriter::new(file), &records)?;
    Ok(vec![manifest])
}
