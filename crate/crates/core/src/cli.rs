//! The `segunc` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 when every metric the
//! command was asked for is undefined.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::calibration::{calibrate, DEFAULT_BINS};
use crate::error::{Error, Result};
use crate::io::{
    read_class_map, read_prob_stack, read_scalar_map, read_tensor, sweep_to_csv, write_bytes, write_tensor, Pgm,
    ReadOptions, Tensor,
};
use crate::par::Exec;
use crate::patch::{
    evaluate_dataset, threshold_sweep_dataset, uniform_grid, EdgePolicy, EvalImage, PatchConfig, ThresholdSpec,
};
use crate::segmetrics::SegConfusion;
use crate::synth::{generate, SynthSpec};
use crate::tensor::{argmax_prediction, ClassMap, ScalarMap};
use crate::uncertainty::{uncertainty_map, Measure};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_UNDEFINED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "segunc", version, about = "Evaluate pixel-wise uncertainty maps for semantic segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Predictive entropy and mutual information maps from a sample stack.
    Uncert(UncertArgs),
    /// Pixel accuracy, mean accuracy and mean IoU.
    Segscore(SegscoreArgs),
    /// Patch confusion counts, conditional metrics and binary patch maps.
    PatchEval(PatchEvalArgs),
    /// Conditional metrics over a grid of interpolated thresholds.
    Sweep(SweepArgs),
    /// ECE / MCE before and after temperature scaling.
    Calib(CalibArgs),
    /// Synthetic ground truth and sample stack from a TOML scene description.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MeasureArg {
    Entropy,
    Mi,
    Both,
}

impl MeasureArg {
    fn measures(self) -> Vec<Measure> {
        match self {
            MeasureArg::Entropy => vec![Measure::PredictiveEntropy],
            MeasureArg::Mi => vec![Measure::MutualInformation],
            MeasureArg::Both => vec![Measure::PredictiveEntropy, Measure::MutualInformation],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EdgeArg {
    Drop,
    Include,
}

#[derive(Debug, Args)]
struct LabelArgs {
    /// Number of classes; inferred from the data when omitted.
    #[arg(long)]
    classes: Option<u32>,
    /// Ground-truth label excluded from scoring.
    #[arg(long)]
    ignore: Option<u32>,
}

#[derive(Debug, Args)]
struct UncertArgs {
    #[arg(long)]
    stack: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    measure: MeasureArg,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Debug, Args)]
struct SegscoreArgs {
    /// Predicted label map or sample stack (repeat per image).
    #[arg(long, required = true)]
    pred: Vec<PathBuf>,
    #[arg(long, required = true)]
    gt: Vec<PathBuf>,
    #[command(flatten)]
    labels: LabelArgs,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Debug, Args)]
struct PatchInputs {
    #[arg(long, required = true)]
    gt: Vec<PathBuf>,
    /// Predicted label maps; use with --umap.
    #[arg(long, requires = "umap", conflicts_with = "stack")]
    pred: Vec<PathBuf>,
    #[arg(long, requires = "pred")]
    umap: Vec<PathBuf>,
    /// Sample stacks; prediction and uncertainty are derived from them.
    #[arg(long, required_unless_present = "pred")]
    stack: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "entropy")]
    measure: MeasureArg,
    #[command(flatten)]
    labels: LabelArgs,
    #[arg(long, default_value_t = 4)]
    window: usize,
    /// Defaults to the window size.
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    acc_th: f64,
    #[arg(long, value_enum, default_value = "drop")]
    edge: EdgeArg,
}

#[derive(Debug, Args)]
struct PatchEvalArgs {
    #[command(flatten)]
    inputs: PatchInputs,
    /// `mean`, `t=<frac>` or `abs=<value>`.
    #[arg(long, default_value = "mean", value_parser = parse_threshold)]
    u_th: ThresholdSpec,
    /// Directory for the binary accuracy / uncertainty patch maps.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    inputs: PatchInputs,
    /// Number of evenly spaced threshold fractions in [0, 1].
    #[arg(long, default_value_t = 11)]
    grid: usize,
    /// Writes `sweep.csv` here instead of printing it.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Debug, Args)]
struct CalibArgs {
    #[arg(long)]
    stack: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    ignore: Option<u32>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

fn parse_threshold(s: &str) -> std::result::Result<ThresholdSpec, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Runs one invocation; `argv[0]` is the program name.
pub fn run_command<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Uncert(a) => cmd_uncert(a),
        Command::Segscore(a) => cmd_segscore(a),
        Command::PatchEval(a) => cmd_patch_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Calib(a) => cmd_calib(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match outcome {
        Ok(Outcome { text, undefined }) => {
            let _ = out.write_all(text.as_bytes());
            if undefined {
                EXIT_UNDEFINED
            } else {
                EXIT_OK
            }
        }
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            let _ = writeln!(err, "error: {e}");
            if matches!(e, Error::Undefined(_)) {
                EXIT_UNDEFINED
            } else {
                EXIT_DATA
            }
        }
    }
}

struct Outcome {
    text: String,
    undefined: bool,
}

impl Outcome {
    fn ok(text: String) -> Self {
        Self { text, undefined: false }
    }
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CmdResult = std::result::Result<Outcome, Failure>;

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.4}"))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.display().to_string(), source })
}

fn cmd_uncert(a: UncertArgs) -> CmdResult {
    let stack = read_prob_stack(&a.stack)?;
    ensure_dir(&a.out_dir)?;
    let mut summary = Vec::new();
    for m in a.measure.measures() {
        let map = uncertainty_map(&stack, m);
        write_tensor(&Tensor::Scalar(map.clone()), a.out_dir.join(format!("{}.uet", m.name())), None)?;
        let (lo, hi) = map.values().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        summary.push(json!({ "measure": m.name(), "min": lo, "max": hi, "mean": map.mean() }));
    }
    let text = match a.format {
        Format::Json => {
            to_json(&json!({ "samples": stack.samples(), "classes": stack.class_count(), "maps": summary }))
        }
        _ => {
            let mut s = String::new();
            for m in &summary {
                let _ = writeln!(
                    s,
                    "{:<20} min {:.6}  max {:.6}  mean {:.6}",
                    m["measure"].as_str().unwrap_or_default(),
                    m["min"].as_f64().unwrap_or_default(),
                    m["max"].as_f64().unwrap_or_default(),
                    m["mean"].as_f64().unwrap_or_default()
                );
            }
            s
        }
    };
    Ok(Outcome::ok(text))
}

/// Reads label maps (or stacks, reduced to their argmax) with one shared class count.
fn load_labels(paths: &[PathBuf], labels: &LabelArgs, allow_stacks: bool) -> Result<Vec<ClassMap>> {
    let opts = ReadOptions { class_count: labels.classes, ignore_id: labels.ignore, kind: None };
    let mut maps = Vec::with_capacity(paths.len());
    for p in paths {
        match read_tensor(p, &opts)? {
            Tensor::Class(m) => maps.push(m),
            Tensor::Prob(s) if allow_stacks => maps.push(argmax_prediction(&s)),
            other => {
                return Err(Error::invalid(format!(
                    "{}: expected labels, found a {:?} tensor",
                    p.display(),
                    other.kind()
                )))
            }
        }
    }
    unify_class_count(maps)
}

fn unify_class_count(maps: Vec<ClassMap>) -> Result<Vec<ClassMap>> {
    let c = maps.iter().map(ClassMap::class_count).max().unwrap_or(2);
    maps.into_iter()
        .map(|m| {
            if m.class_count() == c {
                Ok(m)
            } else {
                let (h, w) = m.dims();
                let ignore = m.ignore_id();
                ClassMap::new(h, w, c, ignore, m.values().to_vec())
            }
        })
        .collect()
}

fn unify_pair(pred: Vec<ClassMap>, gt: Vec<ClassMap>) -> Result<(Vec<ClassMap>, Vec<ClassMap>)> {
    let n = pred.len();
    let mut all = unify_class_count(pred.into_iter().chain(gt).collect())?;
    let gt = all.split_off(n);
    Ok((all, gt))
}

fn cmd_segscore(a: SegscoreArgs) -> CmdResult {
    if a.pred.len() != a.gt.len() {
        return Err(Failure::Usage(format!("{} --pred files but {} --gt files", a.pred.len(), a.gt.len())));
    }
    let (preds, gts) = unify_pair(load_labels(&a.pred, &a.labels, true)?, load_labels(&a.gt, &a.labels, false)?)?;
    let c = gts[0].class_count() as usize;
    let mut conf = SegConfusion::new(c);
    for (p, g) in preds.iter().zip(&gts) {
        conf.accumulate(p, g)?;
    }
    let scores = conf.scores()?;
    let text = match a.format {
        Format::Json => to_json(&json!({
            "images": gts.len(),
            "pixels": conf.total(),
            "pixel_accuracy": scores.pixel_accuracy,
            "mean_accuracy": scores.mean_accuracy,
            "mean_iou": scores.mean_iou,
        })),
        _ => format!(
            "pixel accuracy  {:.2}\nmean accuracy   {:.2}\nmean IoU        {:.2}\n",
            100.0 * scores.pixel_accuracy,
            100.0 * scores.mean_accuracy,
            100.0 * scores.mean_iou
        ),
    };
    Ok(Outcome::ok(text))
}

struct PatchData {
    preds: Vec<ClassMap>,
    gts: Vec<ClassMap>,
    umaps: Vec<ScalarMap>,
    measure: Option<Measure>,
    cfg: PatchConfig,
}

impl PatchData {
    fn images(&self) -> Result<Vec<EvalImage<'_>>> {
        self.preds.iter().zip(&self.gts).zip(&self.umaps).map(|((p, g), u)| EvalImage::new(p, g, u)).collect()
    }
}

fn load_patch_inputs(a: &PatchInputs) -> std::result::Result<PatchData, Failure> {
    let cfg = PatchConfig::new(
        a.window,
        a.stride.unwrap_or(a.window),
        a.acc_th,
        match a.edge {
            EdgeArg::Drop => EdgePolicy::DropPartial,
            EdgeArg::Include => EdgePolicy::IncludePartial,
        },
    )
    .map_err(|e| Failure::Usage(e.to_string()))?;
    let gts = load_labels(&a.gt, &a.labels, false)?;
    let (preds, umaps, measure) = if a.stack.is_empty() {
        if a.pred.len() != a.gt.len() || a.umap.len() != a.gt.len() {
            return Err(Failure::Usage("--pred, --umap and --gt must be given once per image".into()));
        }
        let preds = load_labels(&a.pred, &a.labels, false)?;
        let umaps = a.umap.iter().map(read_scalar_map).collect::<Result<Vec<_>>>()?;
        (preds, umaps, None)
    } else {
        if a.stack.len() != a.gt.len() {
            return Err(Failure::Usage("--stack and --gt must be given once per image".into()));
        }
        let measure = match a.measure {
            MeasureArg::Entropy => Measure::PredictiveEntropy,
            MeasureArg::Mi => Measure::MutualInformation,
            MeasureArg::Both => return Err(Failure::Usage("choose one --measure for patch evaluation".into())),
        };
        let mut preds = Vec::new();
        let mut umaps = Vec::new();
        for p in &a.stack {
            let stack = read_prob_stack(p)?;
            preds.push(argmax_prediction(&stack));
            umaps.push(uncertainty_map(&stack, measure));
        }
        (preds, umaps, Some(measure))
    };
    let (preds, gts) = unify_pair(preds, gts)?;
    Ok(PatchData { preds, gts, umaps, measure, cfg })
}

#[derive(Serialize)]
struct PatchReport<'a> {
    measure: Option<&'static str>,
    config: &'a PatchConfig,
    threshold: ThresholdSpec,
    u_th: f64,
    tie_rule: &'static str,
    images: usize,
    skipped_patches: u64,
    n_ac: u64,
    n_au: u64,
    n_ic: u64,
    n_iu: u64,
    p_accurate_given_certain: Option<f64>,
    p_uncertain_given_inaccurate: Option<f64>,
    pavpu: Option<f64>,
}

fn cmd_patch_eval(a: PatchEvalArgs) -> CmdResult {
    let data = load_patch_inputs(&a.inputs)?;
    let images = data.images()?;
    let eval = evaluate_dataset(&images, &data.cfg, a.u_th, Exec::default())?;
    if let Some(dir) = &a.out_dir {
        ensure_dir(dir)?;
        for (i, conf) in eval.per_image.iter().enumerate() {
            write_bytes(&dir.join(format!("accuracy_map_{i}.pgm")), &Pgm::from_grid(&conf.accuracy_grid)?.encode())?;
            write_bytes(
                &dir.join(format!("uncertainty_map_{i}.pgm")),
                &Pgm::from_grid(&conf.uncertainty_grid)?.encode(),
            )?;
        }
    }
    let c = eval.counts;
    let m = eval.metrics;
    let report = PatchReport {
        measure: data.measure.map(Measure::name),
        config: &data.cfg,
        threshold: a.u_th,
        u_th: eval.u_th,
        tie_rule: "accurate iff patch accuracy >= acc_th; uncertain iff mean patch uncertainty >= u_th",
        images: images.len(),
        skipped_patches: eval.per_image.iter().map(|p| p.skipped_patches).sum(),
        n_ac: c.n_ac,
        n_au: c.n_au,
        n_ic: c.n_ic,
        n_iu: c.n_iu,
        p_accurate_given_certain: m.p_accurate_given_certain,
        p_uncertain_given_inaccurate: m.p_uncertain_given_inaccurate,
        pavpu: m.pavpu,
    };
    let text = match a.format {
        Format::Json => to_json(&report),
        _ => {
            let mut s = String::new();
            let _ = writeln!(s, "u_th                          {:.6}", eval.u_th);
            let _ = writeln!(
                s,
                "n_ac {}  n_au {}  n_ic {}  n_iu {}  skipped {}",
                c.n_ac, c.n_au, c.n_ic, c.n_iu, report.skipped_patches
            );
            let _ = writeln!(s, "p(accurate|certain)           {}", fmt_opt(m.p_accurate_given_certain));
            let _ = writeln!(s, "p(uncertain|inaccurate)       {}", fmt_opt(m.p_uncertain_given_inaccurate));
            let _ = writeln!(s, "PAvPU                         {}", fmt_opt(m.pavpu));
            s
        }
    };
    Ok(Outcome { text, undefined: m.all_undefined() })
}

fn cmd_sweep(a: SweepArgs) -> CmdResult {
    let data = load_patch_inputs(&a.inputs)?;
    let grid = uniform_grid(a.grid).map_err(|e| Failure::Usage(e.to_string()))?;
    let curve = threshold_sweep_dataset(&data.images()?, &data.cfg, &grid, Exec::default())?;
    let undefined = curve.points.iter().all(|p| p.metrics.all_undefined());
    let body = match a.format {
        Format::Csv => sweep_to_csv(&curve),
        Format::Json => to_json(&json!({
            "measure": data.measure.map(Measure::name),
            "config": data.cfg,
            "curve": curve,
        })),
        Format::Text => {
            let mut s = String::new();
            let _ = writeln!(s, "# {}", curve.tie_rule);
            let _ = writeln!(s, "{:>5} {:>10} {:>10} {:>10} {:>10}", "t", "u_th", "p(a|c)", "p(u|i)", "PAvPU");
            for p in &curve.points {
                let _ = writeln!(
                    s,
                    "{:>5.2} {:>10.6} {:>10} {:>10} {:>10}",
                    p.t,
                    p.u_th,
                    fmt_opt(p.metrics.p_accurate_given_certain),
                    fmt_opt(p.metrics.p_uncertain_given_inaccurate),
                    fmt_opt(p.metrics.pavpu)
                );
            }
            s
        }
    };
    let text = match &a.out_dir {
        Some(dir) => {
            ensure_dir(dir)?;
            let ext = match a.format {
                Format::Csv => "csv",
                Format::Json => "json",
                Format::Text => "txt",
            };
            write_bytes(&dir.join(format!("sweep.{ext}")), body.as_bytes())?;
            String::new()
        }
        None => body,
    };
    Ok(Outcome { text, undefined })
}

fn cmd_calib(a: CalibArgs) -> CmdResult {
    if a.bins == 0 {
        return Err(Failure::Usage("--bins must be at least 1".into()));
    }
    let stack = read_prob_stack(&a.stack)?;
    let gt = read_class_map(&a.gt, Some(stack.class_count() as u32), a.ignore)?;
    let report = calibrate(&stack, &gt, a.bins, Exec::default())?;
    let text = match a.format {
        Format::Json => to_json(&report),
        _ => {
            let mut s = String::new();
            let _ = writeln!(s, "{:<10} {:>10} {:>10} {:>12} {:>10}", "", "ECE", "MCE", "temperature", "NLL");
            for (name, r) in [("unscaled", report.unscaled), ("scaled", report.scaled)] {
                let _ =
                    writeln!(s, "{name:<10} {:>10.4} {:>10.4} {:>12.3} {:>10.4}", r.ece, r.mce, r.temperature, r.nll);
            }
            let _ = writeln!(s, "{} pixels, {} bins", report.samples, report.bins);
            s
        }
    };
    Ok(Outcome::ok(text))
}

fn cmd_synth(a: SynthArgs) -> CmdResult {
    let text = std::fs::read_to_string(&a.config)
        .map_err(|source| Error::Io { path: a.config.display().to_string(), source })?;
    let mut spec = SynthSpec::from_toml(&text)?;
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let (gt, stack) = generate(&spec)?;
    ensure_dir(&a.out_dir)?;
    write_tensor(&Tensor::Class(gt.clone()), a.out_dir.join("gt.uet"), None)?;
    write_tensor(&Tensor::Prob(stack), a.out_dir.join("stack.uet"), None)?;
    let summary = json!({
        "seed": spec.seed,
        "height": spec.height,
        "width": spec.width,
        "classes": spec.classes,
        "samples": spec.samples,
        "regions": spec.regions.len(),
    });
    let text = match a.format {
        Format::Json => to_json(&summary),
        _ => format!(
            "wrote gt.uet and stack.uet: {}x{}, {} classes, {} samples, seed {}\n",
            spec.height, spec.width, spec.classes, spec.samples, spec.seed
        ),
    };
    Ok(Outcome::ok(text))
}
