use thiserror::Error;

/// Errors raised by design validation, selection and estimation.
///
/// Unit positions carried by the variants are 0-based indices in the
/// caller's original ordering unless stated otherwise.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum HvError {
    #[error("EmptyDesign: no inclusion probabilities supplied")]
    EmptyDesign,
    #[error("NonProbability: unit {}", .index + 1)]
    NonProbability { index: usize, value: f64 },
    #[error("NonIntegerSize: probabilities sum to {sum}, which is not an integer")]
    NonIntegerSize { sum: f64 },
    #[error("DegenerateSize: sample size {n} must satisfy 0 < n < N = {population}")]
    DegenerateSize { n: usize, population: usize },
    #[error("ZeroPrefix: cumulated probability of the N - n smallest units is zero")]
    ZeroPrefix,
    #[error("OutOfRange: n' = {n_prime} is outside 1..={n}")]
    OutOfRange { n_prime: usize, n: usize },
    #[error("NumericalUnderflow: weight {value} at sorted position {position}")]
    NumericalUnderflow { position: usize, value: f64 },
    #[error("ProbabilityOverflow: probability {value} at sorted position {position}")]
    ProbabilityOverflow { position: usize, value: f64 },
    #[error("DivideByZero: n' - cumulated pi(0) vanishes at sorted position {position}")]
    DivideByZero { position: usize },
    #[error("TooLarge: N = {population} exceeds the enumeration cap {cap}")]
    TooLarge { population: usize, cap: usize },
    #[error("DimensionMismatch: expected {expected} values, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("NonFinite: study variable entry {} is not finite", .index + 1)]
    NonFinite { index: usize },
    #[error("ZeroJoint: joint probability of sampled sorted positions {k} and {l} is zero")]
    ZeroJoint { k: usize, l: usize },
    #[error("SplitMismatch: joint matrix does not match the selection's split")]
    SplitMismatch,
    #[error("InvalidSample: {0}")]
    InvalidSample(String),
    #[error("TooSmall: diagnostics need n >= 2, got n = {n}")]
    TooSmall { n: usize },
    #[error("NonPositiveSize: size measure of unit {} is {value}", .index + 1)]
    NonPositiveSize { index: usize, value: f64 },
    #[error("Saturated: units {} reach inclusion probability >= 1", display_units(.indices))]
    Saturated { indices: Vec<usize> },
    #[error("TooFewReplicates: need min pi(1-pi)B >= 25, got {value}")]
    TooFewReplicates { value: f64 },
    #[error("InfeasibleGrid: {0}")]
    InfeasibleGrid(String),
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
}

fn display_units(indices: &[usize]) -> String {
    indices
        .iter()
        .map(|i| (i + 1).to_string())
        .collect::<Vec<_>>()
        .join(",")
}

pub type Result<T> = std::result::Result<T, HvError>;
