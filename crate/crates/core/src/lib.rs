//! Hanurav-Vijayan fixed-size unequal probability sampling.
//!
//! * [`design`]: validation, the Phase 1 split and both Phase 2 variants.
//! * [`inclusion`]: joint inclusion probabilities and the exact enumeration oracle.
//! * [`estimators`]: HT / conditional HT totals and variance quantities.
//! * [`diagnostics`]: gap indicators on the largest inclusion probabilities.
//! * [`datagen`]: synthetic populations and PPS probabilities.
//! * [`mc`]: seeded Monte-Carlo campaigns.

pub mod datagen;
pub mod design;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod inclusion;
pub mod mc;
pub mod rng;

pub use design::{
    hv_sample, phase1_deltas, phase1_split, phase2_draw_by_draw, phase2_sequential, split_probabilities,
    validate_design, DesignSpec, SampleSelection, Sampler, SplitOutcome, Variant,
};
pub use error::{HvError, Result};
pub use estimators::{EstimateResult, EstimatorKind, StudyVariable};
pub use inclusion::{ExactDistribution, JointKind, JointMatrix};
pub use rng::RngStream;
