//! `skel2box` command line.
//!
//! Every subcommand prints a one-line JSON summary on stdout and writes its
//! outputs atomically (temp file + rename). Exit codes: 0 success, 1 usage
//! error, 2 data error. Settings resolve flag > `--config` file > default.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::calibration::{fit_alpha, load_calibration_samples, CalibrationResult};
use crate::evaluation::{
    evaluate, EvalParams, GroundTruth, DEFAULT_IOU_THRESHOLD, DEFAULT_SCORE_FLOOR,
};
use crate::formats::{
    emit_coco, emit_coco_results, emit_mot, mot_ground_truth, parse_coco_gt, parse_detections,
    parse_jta, parse_mot_det, parse_mot_gt, CocoAnnotation, CocoCategory, CocoDataset, CocoImage,
    DatasetManifest, DetectionFormat, ImageIndex, VideoEntry, PEDESTRIAN_CATEGORY_ID,
};
use crate::geometry::{
    synthesize_annotations, AnnotatedBox, SynthesisOptions, DEFAULT_JOINTS_PER_SKELETON,
};
use crate::sanitization::{
    derive_distance_limit, distance_histogram, prune_by_distance, DistanceLimitOptions,
    DEFAULT_DISTANCE_LIMIT_M,
};
use crate::trainingplan::{
    plan_finetune, plan_mixed_batches, serialize_plan, MixConfig, MixRatio, Plan,
};

pub const THREADS_ENV: &str = "SKEL2BOX_THREADS";

/// Shared settings for the pipeline subcommands.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub image_w: u32,
    pub image_h: u32,
    pub joints_per_skeleton: usize,
    pub alpha: Option<f64>,
    pub distance_limit_m: f64,
    pub score_floor: f64,
    pub iou_thr: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            image_w: 1920,
            image_h: 1080,
            joints_per_skeleton: DEFAULT_JOINTS_PER_SKELETON,
            alpha: None,
            distance_limit_m: DEFAULT_DISTANCE_LIMIT_M,
            score_floor: DEFAULT_SCORE_FLOOR,
            iou_thr: DEFAULT_IOU_THRESHOLD,
        }
    }
}

/// Partial settings, as found in a config file or on the command line.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Args)]
#[serde(deny_unknown_fields)]
#[command(next_help_heading = "Pipeline settings")]
pub struct ConfigOverrides {
    /// Image width in pixels [default: 1920]
    #[arg(long, global = true)]
    pub image_w: Option<u32>,
    /// Image height in pixels [default: 1080]
    #[arg(long, global = true)]
    pub image_h: Option<u32>,
    /// Joints per skeleton [default: 22]
    #[arg(long, global = true)]
    pub joints_per_skeleton: Option<usize>,
    /// Padding constant alpha (pixel meters)
    #[arg(skip)]
    pub alpha: Option<f64>,
    /// Distance limit in meters [default: 40]
    #[arg(long, global = true)]
    pub distance_limit_m: Option<f64>,
    /// Detections must score strictly above this [default: 0.05]
    #[arg(long, global = true)]
    pub score_floor: Option<f64>,
    /// IoU needed for a match [default: 0.5]
    #[arg(long, global = true)]
    pub iou_thr: Option<f64>,
}

impl PipelineConfig {
    pub fn resolve(file: &ConfigOverrides, flags: &ConfigOverrides) -> Self {
        let d = Self::default();
        Self {
            image_w: flags.image_w.or(file.image_w).unwrap_or(d.image_w),
            image_h: flags.image_h.or(file.image_h).unwrap_or(d.image_h),
            joints_per_skeleton: flags
                .joints_per_skeleton
                .or(file.joints_per_skeleton)
                .unwrap_or(d.joints_per_skeleton),
            alpha: flags.alpha.or(file.alpha),
            distance_limit_m: flags
                .distance_limit_m
                .or(file.distance_limit_m)
                .unwrap_or(d.distance_limit_m),
            score_floor: flags
                .score_floor
                .or(file.score_floor)
                .unwrap_or(d.score_floor),
            iou_thr: flags.iou_thr.or(file.iou_thr).unwrap_or(d.iou_thr),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.image_w == 0 || self.image_h == 0 {
            return Err(format!(
                "image size must be positive, got {}x{}",
                self.image_w, self.image_h
            ));
        }
        if self.joints_per_skeleton == 0 {
            return Err("joints_per_skeleton must be positive".into());
        }
        if let Some(a) = self.alpha {
            if !(a.is_finite() && a >= 0.0) {
                return Err(format!("alpha must be finite and >= 0, got {a}"));
            }
        }
        if !(self.distance_limit_m.is_finite() && self.distance_limit_m > 0.0) {
            return Err(format!(
                "distance_limit_m must be positive, got {}",
                self.distance_limit_m
            ));
        }
        if !(0.0..1.0).contains(&self.score_floor) {
            return Err(format!(
                "score_floor must be in [0, 1), got {}",
                self.score_floor
            ));
        }
        if !(self.iou_thr > 0.0 && self.iou_thr <= 1.0) {
            return Err(format!("iou_thr must be in (0, 1], got {}", self.iou_thr));
        }
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "skel2box",
    version,
    about = "Pedestrian-detection ground truth from skeletal annotations"
)]
struct Cli {
    /// JSON file with default settings (flags take precedence)
    #[arg(long, global = true, help_heading = "Pipeline settings")]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: ConfigOverrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit alpha from manually measured heights
    Calibrate {
        /// CSV with header h_s_px,z_m,h_true_px
        #[arg(long)]
        samples: PathBuf,
        /// Calibration result JSON
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn JTA skeleton dumps into padded ground-truth boxes
    Synthesize {
        /// JTA joint dump; repeat for several videos
        #[arg(long, required = true)]
        jta: Vec<PathBuf>,
        /// Video id per --jta file [default: file stem]
        #[arg(long)]
        video_id: Vec<String>,
        /// Alpha value, or a calibration JSON file
        #[arg(long)]
        alpha: Option<String>,
        /// COCO dataset output
        #[arg(long)]
        out_coco: PathBuf,
        /// Also write one MOT ground-truth file per video here
        #[arg(long)]
        out_mot_dir: Option<PathBuf>,
        /// Dataset id recorded in the output manifest
        #[arg(long, default_value = "skel2box")]
        dataset_id: String,
        /// Keep boxes that extend past the image frame
        #[arg(long)]
        no_clamp: bool,
    },
    /// Distance histogram as CSV
    Histogram {
        /// COCO ground truth written by `synthesize`
        #[arg(long)]
        annotations: PathBuf,
        /// Bin width in meters
        #[arg(long, default_value_t = 1.0)]
        bin_width: f64,
        /// CSV output (bin_lower_m,count)
        #[arg(long)]
        out: PathBuf,
    },
    /// Drop annotations farther than the distance limit
    Prune {
        /// COCO ground truth written by `synthesize`
        #[arg(long)]
        annotations: PathBuf,
        /// Overrides the configured distance limit
        #[arg(long)]
        max_dist: Option<f64>,
        /// Pruned COCO dataset
        #[arg(long)]
        out: PathBuf,
    },
    /// Distance at which median box height drops below a pixel floor
    DistanceLimit {
        /// COCO ground truth written by `synthesize`
        #[arg(long)]
        annotations: PathBuf,
        /// Smallest box height in pixels worth keeping
        #[arg(long)]
        h_min: f64,
        /// Bin width in meters
        #[arg(long, default_value_t = 1.0)]
        bin_width: f64,
        /// Bins with fewer annotations are ignored
        #[arg(long, default_value_t = 10)]
        min_bin_count: usize,
        /// Also write the result as JSON
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert between COCO and MOT files
    Convert(ConvertArgs),
    /// Score detections against ground truth
    Evaluate {
        /// COCO JSON or MOT gt.txt
        #[arg(long)]
        gt: PathBuf,
        /// COCO results, COCO dataset, or MOT det.txt
        #[arg(long)]
        det: PathBuf,
        /// coco_results | mot_det | coco_gt [default: from file contents]
        #[arg(long)]
        det_format: Option<String>,
        /// Video id for MOT inputs [default: gt file stem]
        #[arg(long)]
        video_id: Option<String>,
        /// Full report JSON
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mixed synthetic/real batch schedule
    PlanBatches {
        /// Synthetic training images
        #[arg(long)]
        n_synthetic: usize,
        /// Real training images
        #[arg(long)]
        n_real: usize,
        /// Images per batch; must split evenly by the ratio
        #[arg(long)]
        batch_size: usize,
        /// Synthetic:real parts per batch
        #[arg(long, default_value = "2:1")]
        ratio: MixRatio,
        /// Shuffle seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Epochs to schedule
        #[arg(long, default_value_t = 1)]
        epochs: usize,
        /// Plan JSON
        #[arg(long)]
        out: PathBuf,
    },
    /// Two-phase synthetic-then-real fine-tuning plan
    PlanFinetune {
        /// Epochs on synthetic data
        #[arg(long)]
        phase1_epochs: usize,
        /// Epochs on real data
        #[arg(long)]
        phase2_epochs: usize,
        /// Plan JSON
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["coco", "mot_gt", "mot_det"])))]
struct ConvertArgs {
    /// COCO ground truth -> one MOT gt file per video (--out-mot-dir)
    #[arg(long)]
    coco: Option<PathBuf>,
    /// MOT ground truth -> plain COCO dataset (--out-coco)
    #[arg(long)]
    mot_gt: Option<PathBuf>,
    /// MOT detections -> COCO results (--gt and --out-coco-results)
    #[arg(long)]
    mot_det: Option<PathBuf>,
    /// Video id for MOT inputs [default: file stem]
    #[arg(long)]
    video_id: Option<String>,
    /// COCO ground truth whose images the detections refer to
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Directory for `<video>.txt` MOT files
    #[arg(long)]
    out_mot_dir: Option<PathBuf>,
    /// COCO dataset output
    #[arg(long)]
    out_coco: Option<PathBuf>,
    /// COCO results output
    #[arg(long)]
    out_coco_results: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage(m: impl Into<String>) -> CliError {
    CliError::Usage(m.into())
}

fn data_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn open(path: &Path) -> CliResult<fs::File> {
    fs::File::open(path).map_err(|e| data_err(path, e))
}

fn read_to_string(path: &Path) -> CliResult<String> {
    let mut s = String::new();
    open(path)?
        .read_to_string(&mut s)
        .map_err(|e| data_err(path, e))?;
    Ok(s)
}

/// Writes through a temp file in the destination directory, then renames.
fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| data_err(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| data_err(path, e))?;
    tmp.write_all(contents).map_err(|e| data_err(path, e))?;
    tmp.as_file().sync_all().map_err(|e| data_err(path, e))?;
    tmp.persist(path).map_err(|e| data_err(path, e.error))?;
    Ok(())
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn load_config(path: Option<&Path>) -> CliResult<ConfigOverrides> {
    match path {
        None => Ok(ConfigOverrides::default()),
        Some(p) => serde_json::from_str(&read_to_string(p)?)
            .map_err(|e| usage(format!("{}: {e}", p.display()))),
    }
}

fn parse_thread_cap() -> CliResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(usage(format!(
                "{THREADS_ENV} must be a positive integer, got `{v}`"
            ))),
        },
    }
}

/// Runs the CLI with process stdout/stderr and returns the exit code.
pub fn run<S: AsRef<str>>(argv: &[S]) -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with_io(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// Runs the CLI, writing the JSON summary to `out` and diagnostics to `err`.
pub fn run_with_io<S: AsRef<str>>(argv: &[S], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv.iter().map(AsRef::as_ref)) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    let _ = write!(err, "{e}");
                    1
                }
            };
        }
    };

    let result = parse_thread_cap().and_then(|cap| {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cap {
            builder = builder.num_threads(n);
        }
        let pool = builder
            .build()
            .map_err(|e| usage(format!("thread pool: {e}")))?;
        let mut progress = Vec::new();
        let result = pool.install(|| dispatch(&cli, &mut progress));
        let _ = err.write_all(&progress);
        result
    });
    match result {
        Ok(summary) => {
            let _ = writeln!(out, "{summary}");
            0
        }
        Err(e) => {
            let (CliError::Usage(m) | CliError::Data(m)) = &e;
            let _ = writeln!(err, "error: {m}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli, log: &mut Vec<u8>) -> CliResult<Value> {
    let file = load_config(cli.config.as_deref())?;
    let config = PipelineConfig::resolve(&file, &cli.overrides);
    config.validate().map_err(usage)?;

    match &cli.command {
        Command::Calibrate { samples, out } => calibrate(samples, out),
        Command::Synthesize {
            jta,
            video_id,
            alpha,
            out_coco,
            out_mot_dir,
            dataset_id,
            no_clamp,
        } => synthesize(
            &config,
            SynthesizeArgs {
                jta,
                video_ids: video_id,
                alpha: alpha.as_deref(),
                out_coco,
                out_mot_dir: out_mot_dir.as_deref(),
                dataset_id,
                clamp: !no_clamp,
            },
            log,
        ),
        Command::Histogram {
            annotations,
            bin_width,
            out,
        } => histogram(annotations, *bin_width, out),
        Command::Prune {
            annotations,
            max_dist,
            out,
        } => prune(
            annotations,
            max_dist.unwrap_or(config.distance_limit_m),
            out,
        ),
        Command::DistanceLimit {
            annotations,
            h_min,
            bin_width,
            min_bin_count,
            out,
        } => distance_limit(
            annotations,
            *h_min,
            DistanceLimitOptions {
                bin_width_m: *bin_width,
                min_bin_count: *min_bin_count,
            },
            out.as_deref(),
        ),
        Command::Convert(args) => convert(args),
        Command::Evaluate {
            gt,
            det,
            det_format,
            video_id,
            out,
        } => run_evaluate(
            &config,
            gt,
            det,
            det_format.as_deref(),
            video_id.as_deref(),
            out.as_deref(),
        ),
        Command::PlanBatches {
            n_synthetic,
            n_real,
            batch_size,
            ratio,
            seed,
            epochs,
            out,
        } => {
            let mix = MixConfig {
                n_synthetic: *n_synthetic,
                n_real: *n_real,
                batch_size: *batch_size,
                ratio: *ratio,
                seed: *seed,
                epochs: *epochs,
            };
            let plan = plan_mixed_batches(&mix).map_err(|e| usage(e.to_string()))?;
            let n_batches: usize = plan.epochs.iter().map(Vec::len).sum();
            write_atomic(out, serialize_plan(&Plan::from(plan)).as_bytes())?;
            Ok(
                json!({"command": "plan-batches", "epochs": mix.epochs, "batches": n_batches, "out": out}),
            )
        }
        Command::PlanFinetune {
            phase1_epochs,
            phase2_epochs,
            out,
        } => {
            let plan =
                plan_finetune(*phase1_epochs, *phase2_epochs).map_err(|e| usage(e.to_string()))?;
            write_atomic(out, serialize_plan(&Plan::from(plan)).as_bytes())?;
            Ok(
                json!({"command": "plan-finetune", "phase1_epochs": phase1_epochs, "phase2_epochs": phase2_epochs, "out": out}),
            )
        }
    }
}

fn calibrate(samples_path: &Path, out: &Path) -> CliResult<Value> {
    let samples =
        load_calibration_samples(open(samples_path)?).map_err(|e| data_err(samples_path, e))?;
    let result = fit_alpha(&samples).map_err(|e| data_err(samples_path, e))?;
    let mut text = serde_json::to_string(&result).expect("calibration result serializes");
    text.push('\n');
    write_atomic(out, text.as_bytes())?;
    Ok(json!({
        "command": "calibrate",
        "alpha": result.alpha,
        "n_samples": result.n_samples,
        "rmse_px": result.rmse_px,
        "max_abs_residual_px": result.max_abs_residual_px,
        "out": out,
    }))
}

/// `--alpha` accepts a number or a calibration result file.
fn resolve_alpha(arg: Option<&str>, config: &PipelineConfig) -> CliResult<f64> {
    let alpha = match arg {
        None => config
            .alpha
            .ok_or_else(|| usage("synthesize needs --alpha or `alpha` in the config file"))?,
        Some(s) => match s.trim().parse::<f64>() {
            Ok(v) => v,
            Err(_) => {
                let path = Path::new(s);
                let result: CalibrationResult =
                    serde_json::from_str(&read_to_string(path)?).map_err(|e| data_err(path, e))?;
                result.alpha
            }
        },
    };
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(usage(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    Ok(alpha)
}

struct SynthesizeArgs<'a> {
    jta: &'a [PathBuf],
    video_ids: &'a [String],
    alpha: Option<&'a str>,
    out_coco: &'a Path,
    out_mot_dir: Option<&'a Path>,
    dataset_id: &'a str,
    clamp: bool,
}

fn synthesize(
    config: &PipelineConfig,
    args: SynthesizeArgs<'_>,
    log: &mut Vec<u8>,
) -> CliResult<Value> {
    if !args.video_ids.is_empty() && args.video_ids.len() != args.jta.len() {
        return Err(usage(format!(
            "got {} --video-id values for {} --jta files",
            args.video_ids.len(),
            args.jta.len()
        )));
    }
    let alpha = resolve_alpha(args.alpha, config)?;

    let mut skeletons = Vec::new();
    let mut videos = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, path) in args.jta.iter().enumerate() {
        let video_id = args
            .video_ids
            .get(i)
            .cloned()
            .unwrap_or_else(|| file_stem(path));
        if !seen.insert(video_id.clone()) {
            return Err(usage(format!("video id `{video_id}` used twice")));
        }
        let parsed = parse_jta(open(path)?, &video_id, config.joints_per_skeleton)
            .map_err(|e| data_err(path, e))?;
        let _ = writeln!(log, "{}: {} skeletons", path.display(), parsed.len());
        match parsed.iter().map(|s| s.frame_id).max() {
            Some(frame_count) => videos.push(VideoEntry {
                video_id,
                frame_count,
            }),
            None => {
                let _ = writeln!(log, "{}: no records, video omitted", path.display());
            }
        }
        skeletons.extend(parsed);
    }

    let opts = SynthesisOptions {
        alpha,
        image_w: f64::from(config.image_w),
        image_h: f64::from(config.image_h),
        clamp: args.clamp,
    };
    let synthesis = synthesize_annotations(&skeletons, &opts).map_err(|e| usage(e.to_string()))?;
    let manifest = DatasetManifest {
        dataset_id: args.dataset_id.to_string(),
        image_w: config.image_w,
        image_h: config.image_h,
        videos,
        alpha_used: Some(alpha),
        distance_limit_m: None,
    };
    let coco =
        emit_coco(&synthesis.annotations, &manifest).map_err(|e| data_err(args.out_coco, e))?;

    let mot_files = match args.out_mot_dir {
        Some(dir) => mot_files_by_video(&synthesis.annotations, &manifest, dir)?,
        None => Vec::new(),
    };
    write_atomic(args.out_coco, coco.to_json().as_bytes())?;
    for (path, text) in &mot_files {
        write_atomic(path, text.as_bytes())?;
    }

    Ok(json!({
        "command": "synthesize",
        "alpha": alpha,
        "skeletons": skeletons.len(),
        "annotations": synthesis.annotations.len(),
        "skipped": synthesis.skipped.total(),
        "skipped_degenerate": synthesis.skipped.degenerate,
        "skipped_bad_distance": synthesis.skipped.bad_distance,
        "skipped_off_screen": synthesis.skipped.off_screen,
        "out_coco": args.out_coco,
    }))
}

fn mot_files_by_video(
    annotations: &[AnnotatedBox],
    manifest: &DatasetManifest,
    dir: &Path,
) -> CliResult<Vec<(PathBuf, String)>> {
    let mut by_video: BTreeMap<&str, Vec<AnnotatedBox>> = manifest
        .videos
        .iter()
        .map(|v| (v.video_id.as_str(), Vec::new()))
        .collect();
    for a in annotations {
        by_video
            .entry(a.video_id.as_str())
            .or_default()
            .push(a.clone());
    }
    by_video
        .into_iter()
        .map(|(video, anns)| {
            let path = dir.join(format!("{video}.txt"));
            let text = emit_mot(&anns).map_err(|e| data_err(&path, e))?;
            Ok((path, text))
        })
        .collect()
}

fn load_annotated(path: &Path) -> CliResult<(Vec<AnnotatedBox>, DatasetManifest)> {
    let doc = parse_coco_gt(open(path)?).map_err(|e| data_err(path, e))?;
    let manifest = doc.manifest().ok_or_else(|| {
        data_err(
            path,
            "missing dataset manifest in `info`; expected a file written by synthesize",
        )
    })?;
    let annotations = doc.annotated_boxes().map_err(|e| data_err(path, e))?;
    Ok((annotations, manifest))
}

fn histogram(path: &Path, bin_width: f64, out: &Path) -> CliResult<Value> {
    let (annotations, _) = load_annotated(path)?;
    let hist = distance_histogram(&annotations, bin_width).map_err(|e| usage(e.to_string()))?;
    write_atomic(out, hist.to_csv().as_bytes())?;
    Ok(
        json!({"command": "histogram", "annotations": annotations.len(), "bins": hist.counts.len(), "out": out}),
    )
}

fn prune(path: &Path, max_dist: f64, out: &Path) -> CliResult<Value> {
    let (annotations, mut manifest) = load_annotated(path)?;
    let (kept, pruned) =
        prune_by_distance(&annotations, max_dist).map_err(|e| usage(e.to_string()))?;
    manifest.distance_limit_m = Some(max_dist);
    let doc = emit_coco(&kept, &manifest).map_err(|e| data_err(path, e))?;
    write_atomic(out, doc.to_json().as_bytes())?;
    Ok(
        json!({"command": "prune", "max_dist_m": max_dist, "kept": kept.len(), "pruned": pruned, "out": out}),
    )
}

fn distance_limit(
    path: &Path,
    h_min: f64,
    opts: DistanceLimitOptions,
    out: Option<&Path>,
) -> CliResult<Value> {
    let (annotations, _) = load_annotated(path)?;
    let limit = derive_distance_limit(&annotations, h_min, opts).map_err(|e| data_err(path, e))?;
    let summary =
        json!({"command": "distance-limit", "h_min_px": h_min, "distance_limit_m": limit});
    if let Some(out) = out {
        write_atomic(out, format!("{summary}\n").as_bytes())?;
    }
    Ok(summary)
}

fn convert(args: &ConvertArgs) -> CliResult<Value> {
    if let Some(coco) = &args.coco {
        let dir = args
            .out_mot_dir
            .as_deref()
            .ok_or_else(|| usage("--coco needs --out-mot-dir"))?;
        let (annotations, manifest) = load_annotated(coco)?;
        let files = mot_files_by_video(&annotations, &manifest, dir)?;
        for (path, text) in &files {
            write_atomic(path, text.as_bytes())?;
        }
        return Ok(
            json!({"command": "convert", "from": "coco", "to": "mot", "files": files.len(), "annotations": annotations.len()}),
        );
    }
    if let Some(mot) = &args.mot_gt {
        let out = args
            .out_coco
            .as_deref()
            .ok_or_else(|| usage("--mot-gt needs --out-coco"))?;
        let video_id = args.video_id.clone().unwrap_or_else(|| file_stem(mot));
        let records = parse_mot_gt(open(mot)?).map_err(|e| data_err(mot, e))?;
        let gt = mot_ground_truth(&records, &video_id);
        let doc = plain_coco(&gt);
        write_atomic(out, doc.to_json().as_bytes())?;
        return Ok(
            json!({"command": "convert", "from": "mot_gt", "to": "coco", "images": doc.images.len(), "annotations": doc.annotations.len()}),
        );
    }
    if let Some(det) = &args.mot_det {
        let gt_path = args
            .gt
            .as_deref()
            .ok_or_else(|| usage("--mot-det needs --gt (COCO) to assign image ids"))?;
        let out = args
            .out_coco_results
            .as_deref()
            .ok_or_else(|| usage("--mot-det needs --out-coco-results"))?;
        let doc = parse_coco_gt(open(gt_path)?).map_err(|e| data_err(gt_path, e))?;
        let index = doc.image_index().map_err(|e| data_err(gt_path, e))?;
        let video_id = args.video_id.clone().unwrap_or_else(|| file_stem(det));
        let dets = parse_mot_det(open(det)?, &video_id).map_err(|e| data_err(det, e))?;
        let text = emit_coco_results(&dets, &index).map_err(|e| data_err(det, e))?;
        write_atomic(out, text.as_bytes())?;
        return Ok(
            json!({"command": "convert", "from": "mot_det", "to": "coco_results", "detections": dets.len()}),
        );
    }
    Err(usage("convert needs one of --coco, --mot-gt, --mot-det"))
}

/// COCO dataset without synthesis extras, one image per ground-truth frame.
fn plain_coco(gt: &GroundTruth) -> CocoDataset {
    let mut images = Vec::new();
    let mut annotations = Vec::new();
    for (key, boxes) in gt.iter() {
        let image_id = images.len() as u64 + 1;
        images.push(CocoImage {
            id: image_id,
            width: 0,
            height: 0,
            file_name: format!("{}/{:06}.jpg", key.video_id, key.frame_id),
            video_id: Some(key.video_id.clone()),
            frame_id: Some(key.frame_id),
        });
        for b in boxes {
            annotations.push(CocoAnnotation {
                id: annotations.len() as u64 + 1,
                image_id,
                category_id: PEDESTRIAN_CATEGORY_ID,
                bbox: b.as_array(),
                area: b.area(),
                iscrowd: 0,
                pedestrian_id: None,
                distance_m: None,
                skeleton_bbox: None,
                score: None,
            });
        }
    }
    CocoDataset {
        info: None,
        images,
        annotations,
        categories: vec![CocoCategory {
            id: PEDESTRIAN_CATEGORY_ID,
            name: "pedestrian".into(),
        }],
    }
}

fn is_json_path(p: &Path) -> bool {
    p.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn run_evaluate(
    config: &PipelineConfig,
    gt_path: &Path,
    det_path: &Path,
    det_format: Option<&str>,
    video_id: Option<&str>,
    out: Option<&Path>,
) -> CliResult<Value> {
    let video_id = video_id
        .map(str::to_string)
        .unwrap_or_else(|| file_stem(gt_path));

    let (gt, index) = if is_json_path(gt_path) {
        let doc = parse_coco_gt(open(gt_path)?).map_err(|e| data_err(gt_path, e))?;
        let gt = doc.ground_truth().map_err(|e| data_err(gt_path, e))?;
        let index = doc.image_index().map_err(|e| data_err(gt_path, e))?;
        (gt, index)
    } else {
        let records = parse_mot_gt(open(gt_path)?).map_err(|e| data_err(gt_path, e))?;
        (mot_ground_truth(&records, &video_id), ImageIndex::default())
    };

    let det_text = read_to_string(det_path)?;
    let format = match det_format {
        Some(f) => f.to_string(),
        None => {
            let head = det_text.trim_start();
            if head.starts_with('[') {
                "coco_results".into()
            } else if head.starts_with('{') {
                "coco_gt".into()
            } else {
                "mot_det".into()
            }
        }
    };
    let detections = if format == "coco_gt" {
        parse_coco_gt(det_text.as_bytes())
            .and_then(|d| d.as_detections())
            .map_err(|e| data_err(det_path, e))?
    } else {
        let f: DetectionFormat = format.parse().map_err(usage)?;
        parse_detections(det_text.as_bytes(), f, &video_id, &index)
            .map_err(|e| data_err(det_path, e))?
    };

    let params = EvalParams {
        iou_thr: config.iou_thr,
        score_floor: config.score_floor,
    };
    let report = evaluate(&detections, &gt, params).map_err(|e| data_err(det_path, e))?;
    if let Some(out) = out {
        write_atomic(out, report.to_json().as_bytes())?;
    }
    Ok(json!({
        "command": "evaluate",
        "ap_allpoint": report.ap_allpoint,
        "ap_101point": report.ap_101point,
        "n_gt": report.n_gt,
        "n_det": report.n_det,
        "iou_thr": params.iou_thr,
        "score_floor": params.score_floor,
    }))
}
