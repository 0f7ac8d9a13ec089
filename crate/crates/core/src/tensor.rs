//! Dense value types shared by every evaluation stage.
//!
//! All three types are row-major and immutable once built. Constructors that
//! take raw buffers check only that the buffer length matches the declared
//! shape; the semantic invariants are checked by `validate`, which never
//! panics and reports the first offending location.

use std::fmt;

use thiserror::Error;

use crate::error::{Error, Result};

/// Absolute tolerance on per-pixel probability sums.
pub const PROB_SUM_TOL: f64 = 1e-6;

/// Smallest value a [`ScalarMap`] entry may take before it is rejected.
pub const SCALAR_FLOOR: f64 = -1e-12;

/// First invariant violation found while validating a tensor.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("empty dimension: {height}x{width}")]
    EmptyDimension { height: usize, width: usize },

    #[error("class count {0} is below 2")]
    TooFewClasses(u32),

    #[error("ignore id {id} lies inside the class range [0, {class_count})")]
    IgnoreInRange { id: u32, class_count: u32 },

    #[error("class id {value} at ({row}, {col}) is outside [0, {class_count})")]
    ClassOutOfRange { row: usize, col: usize, value: u32, class_count: u32 },

    #[error("probability {value} at (t={sample}, c={class}, {row}, {col}) is outside [0, 1]")]
    ProbabilityOutOfRange { sample: usize, class: usize, row: usize, col: usize, value: f64 },

    #[error("probabilities at (t={sample}, {row}, {col}) sum to {sum}")]
    NotNormalized { sample: usize, row: usize, col: usize, sum: f64 },

    #[error("value {value} at ({row}, {col}) is not a finite non-negative real")]
    BadScalar { row: usize, col: usize, value: f64 },
}

fn check_dims(height: usize, width: usize) -> std::result::Result<(), Violation> {
    if height == 0 || width == 0 {
        Err(Violation::EmptyDimension { height, width })
    } else {
        Ok(())
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::invalid(format!("buffer holds {got} values but the shape needs {expected}")));
    }
    Ok(())
}

/// Per-pixel class labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMap {
    height: usize,
    width: usize,
    class_count: u32,
    ignore_id: Option<u32>,
    values: Vec<u32>,
}

impl ClassMap {
    /// Builds a map and validates it.
    pub fn new(
        height: usize,
        width: usize,
        class_count: u32,
        ignore_id: Option<u32>,
        values: Vec<u32>,
    ) -> Result<Self> {
        let map = Self::from_raw(height, width, class_count, ignore_id, values)?;
        map.validate()?;
        Ok(map)
    }

    /// Builds a map checking only the buffer length.
    pub fn from_raw(
        height: usize,
        width: usize,
        class_count: u32,
        ignore_id: Option<u32>,
        values: Vec<u32>,
    ) -> Result<Self> {
        check_len(height * width, values.len())?;
        Ok(Self { height, width, class_count, ignore_id, values })
    }

    pub fn filled(height: usize, width: usize, class_count: u32, value: u32) -> Result<Self> {
        Self::new(height, width, class_count, None, vec![value; height * width])
    }

    pub fn validate(&self) -> std::result::Result<(), Violation> {
        check_dims(self.height, self.width)?;
        if self.class_count < 2 {
            return Err(Violation::TooFewClasses(self.class_count));
        }
        if let Some(id) = self.ignore_id {
            if id < self.class_count {
                return Err(Violation::IgnoreInRange { id, class_count: self.class_count });
            }
        }
        for (i, &v) in self.values.iter().enumerate() {
            if v >= self.class_count && Some(v) != self.ignore_id {
                return Err(Violation::ClassOutOfRange {
                    row: i / self.width,
                    col: i % self.width,
                    value: v,
                    class_count: self.class_count,
                });
            }
        }
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn class_count(&self) -> u32 {
        self.class_count
    }

    pub fn ignore_id(&self) -> Option<u32> {
        self.ignore_id
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.values[row * self.width + col]
    }

    pub fn is_ignored(&self, row: usize, col: usize) -> bool {
        self.ignore_id == Some(self.get(row, col))
    }

    /// Same labels with a different ignore id.
    pub fn with_ignore(mut self, ignore_id: Option<u32>) -> Result<Self> {
        self.ignore_id = ignore_id;
        self.validate()?;
        Ok(self)
    }
}

/// `T` Monte-Carlo softmax samples over `C` classes, laid out `T x C x H x W`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbStack {
    samples: usize,
    class_count: usize,
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl ProbStack {
    pub fn new(samples: usize, class_count: usize, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        let stack = Self::from_raw(samples, class_count, height, width, values)?;
        stack.validate()?;
        Ok(stack)
    }

    pub fn from_raw(samples: usize, class_count: usize, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        check_len(samples * class_count * height * width, values.len())?;
        Ok(Self { samples, class_count, height, width, values })
    }

    /// Builds a stack from per-sample, per-pixel class vectors:
    /// `pixels[t][pixel][c]`.
    pub fn from_pixels(height: usize, width: usize, pixels: &[Vec<Vec<f64>>]) -> Result<Self> {
        let samples = pixels.len();
        let class_count = pixels.first().and_then(|s| s.first()).map(Vec::len).unwrap_or(0);
        let hw = height * width;
        let mut values = vec![0.0; samples * class_count * hw];
        for (t, sample) in pixels.iter().enumerate() {
            check_len(hw, sample.len())?;
            for (p, probs) in sample.iter().enumerate() {
                check_len(class_count, probs.len())?;
                for (c, &v) in probs.iter().enumerate() {
                    values[(t * class_count + c) * hw + p] = v;
                }
            }
        }
        Self::new(samples, class_count, height, width, values)
    }

    pub fn validate(&self) -> std::result::Result<(), Violation> {
        check_dims(self.height, self.width)?;
        if self.class_count < 2 {
            return Err(Violation::TooFewClasses(self.class_count as u32));
        }
        if self.samples == 0 {
            return Err(Violation::EmptyDimension { height: 0, width: self.width });
        }
        for t in 0..self.samples {
            for p in 0..self.pixel_count() {
                let (row, col) = (p / self.width, p % self.width);
                let mut sum = 0.0;
                for c in 0..self.class_count {
                    let v = self.prob(t, c, p);
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Violation::ProbabilityOutOfRange { sample: t, class: c, row, col, value: v });
                    }
                    sum += v;
                }
                if (sum - 1.0).abs() > PROB_SUM_TOL {
                    return Err(Violation::NotNormalized { sample: t, row, col, sum });
                }
            }
        }
        Ok(())
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
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

    /// `p(y = class | x, w_sample)` at flat pixel index `pixel`.
    #[inline]
    pub fn prob(&self, sample: usize, class: usize, pixel: usize) -> f64 {
        self.values[(sample * self.class_count + class) * self.pixel_count() + pixel]
    }

    /// Sum over samples of the class probabilities at one pixel.
    pub fn class_sums(&self, pixel: usize) -> Vec<f64> {
        (0..self.class_count).map(|c| (0..self.samples).map(|t| self.prob(t, c, pixel)).sum()).collect()
    }

    /// Sample-mean class distribution at one pixel.
    pub fn mean_distribution(&self, pixel: usize) -> Vec<f64> {
        let n = self.samples as f64;
        self.class_sums(pixel).into_iter().map(|s| s / n).collect()
    }
}

/// Per-pixel non-negative reals (uncertainty maps).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl ScalarMap {
    /// Builds a map, clamping tiny negatives (down to [`SCALAR_FLOOR`]) to 0.
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        let mut map = Self::from_raw(height, width, values)?;
        map.validate()?;
        for v in &mut map.values {
            // also turns -0.0 into 0.0
            if *v <= 0.0 {
                *v = 0.0;
            }
        }
        Ok(map)
    }

    pub fn from_raw(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        check_len(height * width, values.len())?;
        Ok(Self { height, width, values })
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn validate(&self) -> std::result::Result<(), Violation> {
        check_dims(self.height, self.width)?;
        for (i, &v) in self.values.iter().enumerate() {
            if !v.is_finite() || v < SCALAR_FLOOR {
                return Err(Violation::BadScalar { row: i / self.width, col: i % self.width, value: v });
            }
        }
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

impl fmt::Display for ClassMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ClassMap {}x{} (C={})", self.height, self.width, self.class_count)
    }
}

/// Per-pixel argmax of the sample-mean distribution; ties go to the lowest
/// class id. The result carries no ignore id.
pub fn argmax_prediction(stack: &ProbStack) -> ClassMap {
    let values = (0..stack.pixel_count()).map(|p| argmax_lowest(&stack.class_sums(p)) as u32).collect();
    ClassMap {
        height: stack.height,
        width: stack.width,
        class_count: stack.class_count as u32,
        ignore_id: None,
        values,
    }
}

/// Index of the maximum, lowest index on ties.
pub(crate) fn argmax_lowest(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
