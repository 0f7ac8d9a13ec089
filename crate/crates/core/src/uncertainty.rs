//! Per-pixel uncertainty maps from a stack of Monte-Carlo softmax samples.
//!
//! Both measures are in nats. Predictive entropy is the entropy of the
//! sample-mean distribution; mutual information subtracts the mean per-sample
//! entropy from it, so it only responds to disagreement between samples.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::par::{map_indices, Exec};
use crate::tensor::{ProbStack, ScalarMap};

/// Probabilities below this are treated as exactly zero.
pub const PROB_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    PredictiveEntropy,
    MutualInformation,
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "entropy" | "predictive_entropy" => Ok(Measure::PredictiveEntropy),
            "mi" | "mutual_information" => Ok(Measure::MutualInformation),
            other => Err(Error::invalid(format!("unknown measure `{other}`"))),
        }
    }
}

impl Measure {
    pub fn name(self) -> &'static str {
        match self {
            Measure::PredictiveEntropy => "predictive_entropy",
            Measure::MutualInformation => "mutual_information",
        }
    }
}

/// `-sum p ln p` with `0 ln 0 = 0`.
#[inline]
pub fn entropy(probs: impl IntoIterator<Item = f64>) -> f64 {
    0.0 - probs.into_iter().filter(|&p| p >= PROB_FLOOR).map(|p| p * p.ln()).sum::<f64>()
}

/// Entropy of the mean distribution and mean per-sample entropy at one pixel,
/// both unclamped.
pub fn pixel_entropies(stack: &ProbStack, pixel: usize) -> (f64, f64) {
    let predictive = entropy(stack.mean_distribution(pixel));
    let t_count = stack.samples();
    let expected =
        (0..t_count).map(|t| entropy((0..stack.class_count()).map(|c| stack.prob(t, c, pixel)))).sum::<f64>()
            / t_count as f64;
    (predictive, expected)
}

fn build(stack: &ProbStack, values: Vec<f64>) -> ScalarMap {
    ScalarMap::new(stack.height(), stack.width(), values).expect("clamped entropies are finite and non-negative")
}

pub fn predictive_entropy(stack: &ProbStack) -> ScalarMap {
    predictive_entropy_with(stack, Exec::default())
}

pub fn predictive_entropy_with(stack: &ProbStack, exec: Exec) -> ScalarMap {
    let max = (stack.class_count() as f64).ln();
    let values = map_indices(exec, stack.pixel_count(), |p| entropy(stack.mean_distribution(p)).clamp(0.0, max));
    build(stack, values)
}

pub fn mutual_information(stack: &ProbStack) -> ScalarMap {
    mutual_information_with(stack, Exec::default())
}

pub fn mutual_information_with(stack: &ProbStack, exec: Exec) -> ScalarMap {
    let values = map_indices(exec, stack.pixel_count(), |p| {
        let (predictive, expected) = pixel_entropies(stack, p);
        (predictive - expected).max(0.0)
    });
    build(stack, values)
}

pub fn uncertainty_map(stack: &ProbStack, measure: Measure) -> ScalarMap {
    uncertainty_map_with(stack, measure, Exec::default())
}

pub fn uncertainty_map_with(stack: &ProbStack, measure: Measure, exec: Exec) -> ScalarMap {
    match measure {
        Measure::PredictiveEntropy => predictive_entropy_with(stack, exec),
        Measure::MutualInformation => mutual_information_with(stack, exec),
    }
}
