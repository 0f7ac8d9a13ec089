//! Confidence binning, ECE/MCE, and temperature scaling.
//!
//! Confidence is the maximum of the sample-mean softmax and correctness is
//! judged against the argmax of that same mean. Bins are equal-width over
//! `(0, 1]`; bin `b` (0-based) holds confidences in `(b/B, (b+1)/B]`, with
//! a confidence of exactly 0 placed in the first bin.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::par::{chunked_sum, map_indices, Exec};
use crate::tensor::{argmax_lowest, ClassMap, ProbStack};

pub const DEFAULT_BINS: usize = 15;

/// Log-probability assigned to a zero probability.
pub const LOG_FLOOR: f64 = -745.0;

/// Temperature search bracket and tolerance.
pub const T_MIN: f64 = 0.05;
pub const T_MAX: f64 = 50.0;
pub const T_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct BinStats {
    pub count: u64,
    pub confidence_sum: f64,
    pub correct: u64,
}

impl BinStats {
    pub fn mean_confidence(&self) -> f64 {
        self.confidence_sum / self.count as f64
    }

    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.count as f64
    }

    pub fn gap(&self) -> f64 {
        (self.accuracy() - self.mean_confidence()).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationBins {
    bins: Vec<BinStats>,
}

impl CalibrationBins {
    pub fn new(bin_count: usize) -> Result<Self> {
        if bin_count == 0 {
            return Err(Error::invalid("calibration needs at least one bin"));
        }
        Ok(Self { bins: vec![BinStats::default(); bin_count] })
    }

    pub fn from_stats(bins: Vec<BinStats>) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::invalid("calibration needs at least one bin"));
        }
        Ok(Self { bins })
    }

    pub fn from_predictions(bin_count: usize, predictions: impl IntoIterator<Item = (f64, bool)>) -> Result<Self> {
        let mut bins = Self::new(bin_count)?;
        for (confidence, correct) in predictions {
            bins.add(confidence, correct);
        }
        Ok(bins)
    }

    pub fn bin_count(&self) -> usize {
        self.bins.len()
    }

    pub fn bins(&self) -> &[BinStats] {
        &self.bins
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().map(|b| b.count).sum()
    }

    pub fn bin_index(&self, confidence: f64) -> usize {
        let b = self.bins.len();
        let idx = (confidence * b as f64).ceil() as usize;
        idx.clamp(1, b) - 1
    }

    pub fn add(&mut self, confidence: f64, correct: bool) {
        let i = self.bin_index(confidence);
        let bin = &mut self.bins[i];
        bin.count += 1;
        bin.confidence_sum += confidence;
        bin.correct += u64::from(correct);
    }

    fn occupied(&self) -> impl Iterator<Item = &BinStats> {
        self.bins.iter().filter(|b| b.count > 0)
    }

    /// `sum_b (n_b / N) |acc_b - conf_b|`.
    pub fn ece(&self) -> Result<f64> {
        let n = self.total();
        if n == 0 {
            return Err(Error::Undefined("ECE over zero samples"));
        }
        Ok(self.occupied().map(|b| b.count as f64 / n as f64 * b.gap()).sum())
    }

    /// Largest gap over occupied bins.
    pub fn mce(&self) -> Result<f64> {
        if self.total() == 0 {
            return Err(Error::Undefined("MCE over zero samples"));
        }
        Ok(self.occupied().map(BinStats::gap).fold(0.0, f64::max))
    }
}

fn check_pair(dims: (usize, usize), classes: usize, gt: &ClassMap) -> Result<()> {
    if dims != gt.dims() {
        return Err(Error::shape(dims, gt.dims()));
    }
    if classes != gt.class_count() as usize {
        return Err(Error::ClassCountMismatch { left: classes as u32, right: gt.class_count() });
    }
    Ok(())
}

pub fn bin_confidences(stack: &ProbStack, gt: &ClassMap, bin_count: usize) -> Result<CalibrationBins> {
    bin_confidences_with(stack, gt, bin_count, Exec::default())
}

pub fn bin_confidences_with(stack: &ProbStack, gt: &ClassMap, bin_count: usize, exec: Exec) -> Result<CalibrationBins> {
    check_pair(stack.dims(), stack.class_count(), gt)?;
    let ignore = gt.ignore_id();
    let labels = gt.values();
    let per_pixel = map_indices(exec, stack.pixel_count(), |p| {
        if Some(labels[p]) == ignore {
            return None;
        }
        let mean = stack.mean_distribution(p);
        let pred = argmax_lowest(&mean);
        Some((mean[pred], pred as u32 == labels[p]))
    });
    CalibrationBins::from_predictions(bin_count, per_pixel.into_iter().flatten())
}

/// Per-pixel log-probabilities over `C` classes, laid out `C x H x W`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogProbMap {
    class_count: usize,
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl LogProbMap {
    pub fn new(class_count: usize, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != class_count * height * width {
            return Err(Error::invalid("log-probability buffer does not match its shape"));
        }
        if class_count < 2 || height == 0 || width == 0 {
            return Err(Error::invalid("log-probability map needs C >= 2 and non-empty dims"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("log-probability {v} is not finite")));
        }
        Ok(Self { class_count, height, width, values })
    }

    /// Log of the sample-mean distribution, zeros mapped to [`LOG_FLOOR`].
    pub fn from_probs(stack: &ProbStack) -> Self {
        let (c, hw) = (stack.class_count(), stack.pixel_count());
        let mut values = vec![0.0; c * hw];
        for p in 0..hw {
            for (k, m) in stack.mean_distribution(p).into_iter().enumerate() {
                values[k * hw + p] = if m > 0.0 { m.ln().max(LOG_FLOOR) } else { LOG_FLOOR };
            }
        }
        Self { class_count: c, height: stack.height(), width: stack.width(), values }
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn logits(&self, pixel: usize) -> Vec<f64> {
        let hw = self.pixel_count();
        (0..self.class_count).map(|c| self.values[c * hw + pixel]).collect()
    }

    /// Multiplies every log-probability by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self { values: self.values.iter().map(|v| v * k).collect(), ..self.clone() }
    }

    pub fn argmax(&self) -> ClassMap {
        let values = (0..self.pixel_count()).map(|p| argmax_lowest(&self.logits(p)) as u32).collect();
        ClassMap::from_raw(self.height, self.width, self.class_count as u32, None, values)
            .expect("shape matches by construction")
    }
}

/// `softmax(z / T)`, shifted by the maximum for stability.
pub fn tempered_softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| ((z - max) / temperature).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `-log softmax(z / T)[label]`.
fn pixel_nll(logits: &[f64], label: usize, temperature: f64) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse: f64 = logits.iter().map(|z| ((z - max) / temperature).exp()).sum::<f64>().ln();
    lse - (logits[label] - max) / temperature
}

fn scorable_pixels(logp: &LogProbMap, gt: &ClassMap) -> Result<Vec<usize>> {
    check_pair(logp.dims(), logp.class_count, gt)?;
    let ignore = gt.ignore_id();
    let pixels: Vec<usize> = (0..logp.pixel_count()).filter(|&p| Some(gt.values()[p]) != ignore).collect();
    if pixels.is_empty() {
        return Err(Error::Undefined("temperature scaling with no scorable pixels"));
    }
    Ok(pixels)
}

fn mean_nll(logp: &LogProbMap, gt: &ClassMap, pixels: &[usize], temperature: f64, exec: Exec) -> f64 {
    let labels = gt.values();
    let sum = chunked_sum(exec, pixels.len(), |i| {
        let p = pixels[i];
        pixel_nll(&logp.logits(p), labels[p] as usize, temperature)
    });
    sum / pixels.len() as f64
}

/// Mean negative log-likelihood of `softmax(logp / T)` over non-ignored pixels.
pub fn nll(logp: &LogProbMap, gt: &ClassMap, temperature: f64) -> Result<f64> {
    nll_with(logp, gt, temperature, Exec::default())
}

pub fn nll_with(logp: &LogProbMap, gt: &ClassMap, temperature: f64, exec: Exec) -> Result<f64> {
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(Error::invalid(format!("temperature {temperature} must be positive")));
    }
    let pixels = scorable_pixels(logp, gt)?;
    Ok(mean_nll(logp, gt, &pixels, temperature, exec))
}

/// Rescaled `T=1` probability stack.
pub fn rescale(logp: &LogProbMap, temperature: f64) -> ProbStack {
    let (c, hw) = (logp.class_count, logp.pixel_count());
    let mut values = vec![0.0; c * hw];
    for p in 0..hw {
        for (k, v) in tempered_softmax(&logp.logits(p), temperature).into_iter().enumerate() {
            values[k * hw + p] = v;
        }
    }
    ProbStack::from_raw(1, c, logp.height, logp.width, values).expect("shape matches by construction")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureFit {
    pub temperature: f64,
    pub nll: f64,
    pub nll_at_one: f64,
    pub probs: ProbStack,
}

pub fn temperature_scale(logp: &LogProbMap, gt: &ClassMap) -> Result<TemperatureFit> {
    temperature_scale_with(logp, gt, Exec::default())
}

/// Golden-section search on `ln T` over `[T_MIN, T_MAX]` until the bracket
/// is narrower than [`T_TOL`] in `T`. `T = 1` is kept if no searched
/// temperature beats it.
pub fn temperature_scale_with(logp: &LogProbMap, gt: &ClassMap, exec: Exec) -> Result<TemperatureFit> {
    let pixels = scorable_pixels(logp, gt)?;
    let f = |log_t: f64| mean_nll(logp, gt, &pixels, log_t.exp(), exec);

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (T_MIN.ln(), T_MAX.ln());
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b.exp() - a.exp() > T_TOL {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mut temperature = ((a + b) / 2.0).exp();
    let mut best = f(temperature.ln());
    let nll_at_one = f(0.0);
    if nll_at_one <= best {
        temperature = 1.0;
        best = nll_at_one;
    }
    Ok(TemperatureFit { temperature, nll: best, nll_at_one, probs: rescale(logp, temperature) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub ece: f64,
    pub mce: f64,
    pub temperature: f64,
    pub nll: f64,
}

/// Calibration before and after temperature scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationComparison {
    pub unscaled: CalibrationReport,
    pub scaled: CalibrationReport,
    pub samples: u64,
    pub bins: usize,
}

pub fn calibrate(stack: &ProbStack, gt: &ClassMap, bin_count: usize, exec: Exec) -> Result<CalibrationComparison> {
    let before = bin_confidences_with(stack, gt, bin_count, exec)?;
    let logp = LogProbMap::from_probs(stack);
    let fit = temperature_scale_with(&logp, gt, exec)?;
    let after = bin_confidences_with(&fit.probs, gt, bin_count, exec)?;
    Ok(CalibrationComparison {
        unscaled: CalibrationReport { ece: before.ece()?, mce: before.mce()?, temperature: 1.0, nll: fit.nll_at_one },
        scaled: CalibrationReport { ece: after.ece()?, mce: after.mce()?, temperature: fit.temperature, nll: fit.nll },
        samples: before.total(),
        bins: bin_count,
    })
}
