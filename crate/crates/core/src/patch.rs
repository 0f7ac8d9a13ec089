//! Patch-based accuracy-vs-uncertainty evaluation.
//!
//! Prediction, ground truth and uncertainty map are traversed with the same
//! `w x w` windows. Each patch is marked accurate when the fraction of
//! correctly labelled (non-ignored) pixels reaches the accuracy threshold, and
//! uncertain when its mean uncertainty reaches the uncertainty threshold. The
//! four resulting patch counts feed three ratios:
//!
//! * `p(accurate | certain) = n_ac / (n_ac + n_ic)`
//! * `p(uncertain | inaccurate) = n_iu / (n_ic + n_iu)`
//! * `PAvPU = (n_ac + n_iu) / (n_ac + n_au + n_ic + n_iu)`
//!
//! A ratio whose denominator is zero is reported as `None`.

use std::iter::Sum;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::par::{chunked_sum, map_indices, Exec};
use crate::tensor::{ClassMap, ScalarMap};

/// Describes the threshold comparison used by [`threshold_sweep`].
pub const SWEEP_TIE_RULE: &str =
    "uncertain iff mean patch uncertainty >= u_th; at t=1 uncertain iff mean > u_max (all certain)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgePolicy {
    /// Only full `w x w` windows are evaluated.
    DropPartial,
    /// Windows running past the image border are clipped to it.
    IncludePartial,
}

impl FromStr for EdgePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drop" | "drop_partial" => Ok(EdgePolicy::DropPartial),
            "include" | "include_partial" => Ok(EdgePolicy::IncludePartial),
            other => Err(Error::invalid(format!("unknown edge policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PatchConfig {
    pub window: usize,
    pub stride: usize,
    pub accuracy_threshold: f64,
    pub edge: EdgePolicy,
}

impl Default for PatchConfig {
    fn default() -> Self {
        Self { window: 4, stride: 4, accuracy_threshold: 0.5, edge: EdgePolicy::DropPartial }
    }
}

impl PatchConfig {
    pub fn new(window: usize, stride: usize, accuracy_threshold: f64, edge: EdgePolicy) -> Result<Self> {
        let cfg = Self { window, stride, accuracy_threshold, edge };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Non-overlapping `window x window` tiling with the default threshold.
    pub fn tiled(window: usize) -> Result<Self> {
        Self::new(window, window, 0.5, EdgePolicy::DropPartial)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.stride == 0 {
            return Err(Error::invalid("window and stride must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.accuracy_threshold) {
            return Err(Error::invalid(format!("accuracy threshold {} is outside [0, 1]", self.accuracy_threshold)));
        }
        Ok(())
    }
}

/// A rectangular window, possibly clipped at the image border.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Window {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl Window {
    pub fn full(height: usize, width: usize) -> Self {
        Self { top: 0, left: 0, height, width }
    }

    fn pixels(&self, image_width: usize) -> impl Iterator<Item = usize> + '_ {
        (self.top..self.top + self.height)
            .flat_map(move |r| (self.left..self.left + self.width).map(move |c| r * image_width + c))
    }

    fn fits(&self, dims: (usize, usize)) -> bool {
        self.top + self.height <= dims.0 && self.left + self.width <= dims.1
    }
}

/// Start offsets and extents along one axis.
///
/// With partial edges included, stepping stops at the first window that
/// reaches the border, so a clipped window only appears when the full ones
/// leave a strip uncovered.
fn axis_spans(len: usize, window: usize, stride: usize, edge: EdgePolicy) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = 0;
    match edge {
        EdgePolicy::DropPartial => {
            while start + window <= len {
                spans.push((start, window));
                start += stride;
            }
        }
        EdgePolicy::IncludePartial => {
            while start < len {
                spans.push((start, window.min(len - start)));
                if start + window >= len {
                    break;
                }
                start += stride;
            }
        }
    }
    spans
}

/// Patch layout: `rows x cols` windows in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchLayout {
    pub rows: usize,
    pub cols: usize,
    pub windows: Vec<Window>,
}

pub fn patch_layout(height: usize, width: usize, cfg: &PatchConfig) -> PatchLayout {
    let ys = axis_spans(height, cfg.window, cfg.stride, cfg.edge);
    let xs = axis_spans(width, cfg.window, cfg.stride, cfg.edge);
    let windows = ys
        .iter()
        .flat_map(|&(top, h)| xs.iter().map(move |&(left, w)| Window { top, left, height: h, width: w }))
        .collect();
    PatchLayout { rows: ys.len(), cols: xs.len(), windows }
}

/// Row-major list of evaluation windows.
pub fn enumerate_patches(height: usize, width: usize, cfg: &PatchConfig) -> Vec<Window> {
    patch_layout(height, width, cfg).windows
}

/// Fraction of scorable pixels in `win` where prediction equals ground
/// truth; `None` when every ground-truth pixel is the ignore id.
pub fn patch_accuracy(pred: &ClassMap, gt: &ClassMap, win: &Window) -> Option<f64> {
    let (correct, scorable) = patch_tally(pred, gt, win);
    (scorable > 0).then(|| correct as f64 / scorable as f64)
}

fn patch_tally(pred: &ClassMap, gt: &ClassMap, win: &Window) -> (usize, usize) {
    let ignore = gt.ignore_id();
    let (p, g) = (pred.values(), gt.values());
    win.pixels(gt.width()).fold((0, 0), |(correct, scorable), i| {
        if Some(g[i]) == ignore {
            (correct, scorable)
        } else {
            (correct + usize::from(p[i] == g[i]), scorable + 1)
        }
    })
}

/// Mean uncertainty over the window.
///
/// The mean is clamped to the window's own extrema so rounding can never
/// push it below the smallest or above the largest value it averages.
pub fn patch_uncertainty(umap: &ScalarMap, win: &Window) -> f64 {
    let v = umap.values();
    let mut sum = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut n = 0usize;
    for i in win.pixels(umap.width()) {
        sum += v[i];
        lo = lo.min(v[i]);
        hi = hi.max(v[i]);
        n += 1;
    }
    (sum / n as f64).clamp(lo, hi)
}

/// How the uncertainty threshold is bound to data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSpec {
    /// `u_min + t (u_max - u_min)` with pixel extrema over all maps.
    Interpolated(f64),
    /// Pixel mean pooled over all maps.
    ValidationMean,
    Absolute(f64),
}

impl FromStr for ThresholdSpec {
    type Err = Error;

    /// Accepts `mean`, `t=<frac>` and `abs=<value>`.
    fn from_str(s: &str) -> Result<Self> {
        let number =
            |v: &str| v.parse::<f64>().map_err(|_| Error::invalid(format!("bad number `{v}` in threshold `{s}`")));
        let spec = if s == "mean" {
            ThresholdSpec::ValidationMean
        } else if let Some(v) = s.strip_prefix("t=") {
            ThresholdSpec::Interpolated(number(v)?)
        } else if let Some(v) = s.strip_prefix("abs=") {
            ThresholdSpec::Absolute(number(v)?)
        } else {
            return Err(Error::invalid(format!("threshold `{s}` is not one of mean, t=<frac>, abs=<value>")));
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl ThresholdSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ThresholdSpec::Interpolated(t) if !(0.0..=1.0).contains(&t) => {
                Err(Error::invalid(format!("interpolation fraction {t} is outside [0, 1]")))
            }
            ThresholdSpec::Absolute(u) if !(u.is_finite() && u >= 0.0) => {
                Err(Error::invalid(format!("absolute threshold {u} must be finite and >= 0")))
            }
            _ => Ok(()),
        }
    }
}

/// Pixel-level summary of a set of uncertainty maps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UncertaintyRange {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub pixels: usize,
}

impl UncertaintyRange {
    pub fn of(maps: &[&ScalarMap]) -> Result<Self> {
        Self::of_with(maps, Exec::default())
    }

    pub fn of_with(maps: &[&ScalarMap], exec: Exec) -> Result<Self> {
        let pixels: usize = maps.iter().map(|m| m.values().len()).sum();
        if pixels == 0 {
            return Err(Error::invalid("threshold needs at least one uncertainty pixel"));
        }
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for m in maps {
            let v = m.values();
            for &x in v {
                min = min.min(x);
                max = max.max(x);
            }
            sum += chunked_sum(exec, v.len(), |i| v[i]);
        }
        Ok(Self { min, max, mean: sum / pixels as f64, pixels })
    }

    /// `u_min + t (u_max - u_min)`, exact at both endpoints.
    pub fn interpolate(&self, t: f64) -> f64 {
        if t <= 0.0 {
            self.min
        } else if t >= 1.0 {
            self.max
        } else {
            (self.min + t * (self.max - self.min)).clamp(self.min, self.max)
        }
    }

    pub fn resolve(&self, spec: ThresholdSpec) -> Result<f64> {
        spec.validate()?;
        Ok(match spec {
            ThresholdSpec::Interpolated(t) => self.interpolate(t),
            ThresholdSpec::ValidationMean => self.mean,
            ThresholdSpec::Absolute(u) => u,
        })
    }
}

pub fn resolve_threshold(maps: &[&ScalarMap], spec: ThresholdSpec) -> Result<f64> {
    UncertaintyRange::of(maps)?.resolve(spec)
}

/// Comparison used to mark a patch uncertain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertainRule {
    AtLeast,
    Above,
}

impl UncertainRule {
    #[inline]
    pub fn is_uncertain(self, mean: f64, u_th: f64) -> bool {
        match self {
            UncertainRule::AtLeast => mean >= u_th,
            UncertainRule::Above => mean > u_th,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PatchCounts {
    pub n_ac: u64,
    pub n_au: u64,
    pub n_ic: u64,
    pub n_iu: u64,
}

impl PatchCounts {
    pub fn evaluated(&self) -> u64 {
        self.n_ac + self.n_au + self.n_ic + self.n_iu
    }

    pub fn uncertain(&self) -> u64 {
        self.n_au + self.n_iu
    }

    pub fn accurate(&self) -> u64 {
        self.n_ac + self.n_au
    }

    pub fn record(&mut self, accurate: bool, uncertain: bool) {
        match (accurate, uncertain) {
            (true, false) => self.n_ac += 1,
            (true, true) => self.n_au += 1,
            (false, false) => self.n_ic += 1,
            (false, true) => self.n_iu += 1,
        }
    }

    pub fn metrics(&self) -> ConditionalMetrics {
        conditional_metrics(self)
    }
}

impl AddAssign for PatchCounts {
    fn add_assign(&mut self, o: Self) {
        self.n_ac += o.n_ac;
        self.n_au += o.n_au;
        self.n_ic += o.n_ic;
        self.n_iu += o.n_iu;
    }
}

impl Add for PatchCounts {
    type Output = Self;

    fn add(mut self, o: Self) -> Self {
        self += o;
        self
    }
}

impl Sum for PatchCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

/// One cell per patch; `None` marks a patch skipped because its ground truth
/// is entirely ignored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryGrid {
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<Option<bool>>,
}

impl BinaryGrid {
    pub fn count(&self, value: bool) -> usize {
        self.cells.iter().filter(|c| **c == Some(value)).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchConfusion {
    pub counts: PatchCounts,
    /// White (true) = accurate.
    pub accuracy_grid: BinaryGrid,
    /// White (true) = uncertain.
    pub uncertainty_grid: BinaryGrid,
    pub skipped_patches: u64,
}

impl PatchConfusion {
    /// Counts re-tallied from the two grids.
    pub fn recount(&self) -> PatchCounts {
        let mut counts = PatchCounts::default();
        for (a, u) in self.accuracy_grid.cells.iter().zip(&self.uncertainty_grid.cells) {
            if let (Some(a), Some(u)) = (a, u) {
                counts.record(*a, *u);
            }
        }
        counts
    }
}

/// `None` marks an undefined ratio (zero denominator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionalMetrics {
    pub p_accurate_given_certain: Option<f64>,
    pub p_uncertain_given_inaccurate: Option<f64>,
    pub pavpu: Option<f64>,
}

impl ConditionalMetrics {
    pub fn all_undefined(&self) -> bool {
        self.p_accurate_given_certain.is_none() && self.p_uncertain_given_inaccurate.is_none() && self.pavpu.is_none()
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn conditional_metrics(c: &PatchCounts) -> ConditionalMetrics {
    ConditionalMetrics {
        p_accurate_given_certain: ratio(c.n_ac, c.n_ac + c.n_ic),
        p_uncertain_given_inaccurate: ratio(c.n_iu, c.n_ic + c.n_iu),
        pavpu: ratio(c.n_ac + c.n_iu, c.evaluated()),
    }
}

/// One image's prediction, ground truth and uncertainty map.
#[derive(Debug, Clone, Copy)]
pub struct EvalImage<'a> {
    pub pred: &'a ClassMap,
    pub gt: &'a ClassMap,
    pub umap: &'a ScalarMap,
}

impl<'a> EvalImage<'a> {
    pub fn new(pred: &'a ClassMap, gt: &'a ClassMap, umap: &'a ScalarMap) -> Result<Self> {
        if pred.dims() != gt.dims() {
            return Err(Error::shape(pred.dims(), gt.dims()));
        }
        if umap.dims() != gt.dims() {
            return Err(Error::shape(umap.dims(), gt.dims()));
        }
        Ok(Self { pred, gt, umap })
    }
}

/// Accuracy flag and mean uncertainty of one evaluated patch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchStat {
    pub accurate: bool,
    pub uncertainty: f64,
}

/// Threshold-independent per-patch statistics of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePatches {
    pub rows: usize,
    pub cols: usize,
    pub stats: Vec<Option<PatchStat>>,
}

impl ImagePatches {
    pub fn compute(img: &EvalImage<'_>, cfg: &PatchConfig, exec: Exec) -> Result<Self> {
        cfg.validate()?;
        let (h, w) = img.gt.dims();
        let layout = patch_layout(h, w, cfg);
        debug_assert!(layout.windows.iter().all(|win| win.fits((h, w))));
        let a_th = cfg.accuracy_threshold;
        let stats = map_indices(exec, layout.windows.len(), |k| {
            let win = &layout.windows[k];
            patch_accuracy(img.pred, img.gt, win)
                .map(|acc| PatchStat { accurate: acc >= a_th, uncertainty: patch_uncertainty(img.umap, win) })
        });
        Ok(Self { rows: layout.rows, cols: layout.cols, stats })
    }

    pub fn counts(&self, u_th: f64, rule: UncertainRule) -> PatchCounts {
        let mut counts = PatchCounts::default();
        for s in self.stats.iter().flatten() {
            counts.record(s.accurate, rule.is_uncertain(s.uncertainty, u_th));
        }
        counts
    }

    pub fn skipped(&self) -> u64 {
        self.stats.iter().filter(|s| s.is_none()).count() as u64
    }

    pub fn confusion(&self, u_th: f64, rule: UncertainRule) -> PatchConfusion {
        let grid = |f: &dyn Fn(&PatchStat) -> bool| BinaryGrid {
            rows: self.rows,
            cols: self.cols,
            cells: self.stats.iter().map(|s| s.as_ref().map(f)).collect(),
        };
        PatchConfusion {
            counts: self.counts(u_th, rule),
            accuracy_grid: grid(&|s| s.accurate),
            uncertainty_grid: grid(&|s| rule.is_uncertain(s.uncertainty, u_th)),
            skipped_patches: self.skipped(),
        }
    }
}

/// Classifies every patch with "accurate iff accuracy >= a_th" and
/// "uncertain iff mean uncertainty >= u_th".
pub fn classify_patches(
    pred: &ClassMap,
    gt: &ClassMap,
    umap: &ScalarMap,
    cfg: &PatchConfig,
    u_th: f64,
) -> Result<PatchConfusion> {
    classify_patches_with(pred, gt, umap, cfg, u_th, UncertainRule::AtLeast, Exec::default())
}

pub fn classify_patches_with(
    pred: &ClassMap,
    gt: &ClassMap,
    umap: &ScalarMap,
    cfg: &PatchConfig,
    u_th: f64,
    rule: UncertainRule,
    exec: Exec,
) -> Result<PatchConfusion> {
    if u_th.is_nan() || u_th < 0.0 {
        return Err(Error::invalid(format!("uncertainty threshold {u_th} must be >= 0")));
    }
    let img = EvalImage::new(pred, gt, umap)?;
    Ok(ImagePatches::compute(&img, cfg, exec)?.confusion(u_th, rule))
}

/// Result of evaluating a set of images at one shared threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEvaluation {
    pub u_th: f64,
    pub range: UncertaintyRange,
    /// Counts summed over images before forming the ratios.
    pub counts: PatchCounts,
    pub metrics: ConditionalMetrics,
    pub per_image: Vec<PatchConfusion>,
}

pub fn evaluate_dataset(
    images: &[EvalImage<'_>],
    cfg: &PatchConfig,
    spec: ThresholdSpec,
    exec: Exec,
) -> Result<DatasetEvaluation> {
    let maps: Vec<&ScalarMap> = images.iter().map(|i| i.umap).collect();
    let range = UncertaintyRange::of_with(&maps, exec)?;
    let u_th = range.resolve(spec)?;
    let per_image = images
        .iter()
        .map(|img| Ok(ImagePatches::compute(img, cfg, exec)?.confusion(u_th, UncertainRule::AtLeast)))
        .collect::<Result<Vec<_>>>()?;
    let counts: PatchCounts = per_image.iter().map(|c| c.counts).sum();
    Ok(DatasetEvaluation { u_th, range, counts, metrics: conditional_metrics(&counts), per_image })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub t: f64,
    pub u_th: f64,
    pub counts: PatchCounts,
    pub metrics: ConditionalMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCurve {
    pub points: Vec<SweepPoint>,
    pub tie_rule: &'static str,
}

/// `n` evenly spaced fractions from 0 to 1 inclusive.
pub fn uniform_grid(n: usize) -> Result<Vec<f64>> {
    match n {
        0 => Err(Error::invalid("threshold grid needs at least one point")),
        1 => Ok(vec![0.0]),
        _ => Ok((0..n).map(|i| i as f64 / (n - 1) as f64).collect()),
    }
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::invalid("threshold grid is empty"));
    }
    if t_grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::invalid("threshold fractions must lie in [0, 1]"));
    }
    if t_grid.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::invalid("threshold fractions must be strictly increasing"));
    }
    Ok(())
}

pub fn threshold_sweep(
    pred: &ClassMap,
    gt: &ClassMap,
    umap: &ScalarMap,
    cfg: &PatchConfig,
    t_grid: &[f64],
) -> Result<SweepCurve> {
    let img = EvalImage::new(pred, gt, umap)?;
    threshold_sweep_dataset(&[img], cfg, t_grid, Exec::default())
}

/// Sweeps `u_th = u_min + t (u_max - u_min)` over `t_grid`, with extrema
/// pooled over all images and counts micro-averaged.
pub fn threshold_sweep_dataset(
    images: &[EvalImage<'_>],
    cfg: &PatchConfig,
    t_grid: &[f64],
    exec: Exec,
) -> Result<SweepCurve> {
    check_grid(t_grid)?;
    let maps: Vec<&ScalarMap> = images.iter().map(|i| i.umap).collect();
    let range = UncertaintyRange::of_with(&maps, exec)?;
    let patches = images.iter().map(|img| ImagePatches::compute(img, cfg, exec)).collect::<Result<Vec<_>>>()?;
    let points = map_indices(exec, t_grid.len(), |k| {
        let t = t_grid[k];
        let u_th = range.interpolate(t);
        let rule = if t >= 1.0 { UncertainRule::Above } else { UncertainRule::AtLeast };
        let counts: PatchCounts = patches.iter().map(|p| p.counts(u_th, rule)).sum();
        SweepPoint { t, u_th, counts, metrics: conditional_metrics(&counts) }
    });
    Ok(SweepCurve { points, tie_rule: SWEEP_TIE_RULE })
}
