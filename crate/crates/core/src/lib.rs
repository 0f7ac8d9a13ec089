//! Quantitative evaluation of pixel-wise uncertainty for semantic
//! segmentation.
//!
//! The crate turns stacks of Monte-Carlo softmax samples into uncertainty
//! maps ([`uncertainty`]), scores them patch by patch against prediction
//! errors ([`patch`]), and provides the usual segmentation scores
//! ([`segmetrics`]) and calibration baselines ([`calibration`]) for
//! comparison. [`synth`] builds seeded scenes with controllable aleatoric and
//! epistemic noise, and [`io`] / [`cli`] handle files and the `segunc` binary.
//!
//! Heavy loops run on rayon when the `parallel` feature is on (the default);
//! see [`par::Exec`].

pub mod calibration;
pub mod cli;
pub mod error;
pub mod io;
pub mod par;
pub mod patch;
pub mod segmetrics;
pub mod synth;
pub mod tensor;
pub mod uncertainty;

pub use error::{Error, Result};
pub use par::Exec;
pub use patch::{
    classify_patches, conditional_metrics, enumerate_patches, patch_accuracy, patch_uncertainty, resolve_threshold,
    threshold_sweep, ConditionalMetrics, EdgePolicy, PatchConfig, PatchConfusion, PatchCounts, SweepCurve,
    ThresholdSpec,
};
pub use segmetrics::SegConfusion;
pub use tensor::{argmax_prediction, ClassMap, ProbStack, ScalarMap, Violation};
pub use uncertainty::{mutual_information, predictive_entropy, uncertainty_map, Measure};
