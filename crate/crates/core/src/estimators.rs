//! HT and conditional HT totals, SYG variance estimation, and the exact
//! variance quantities tied to the Phase 1 randomisation.

use serde::{Deserialize, Serialize};

use crate::design::{phase1_deltas, split_probabilities, DesignSpec, SampleSelection, SplitOutcome};
use crate::error::{HvError, Result};
use crate::inclusion::{JointKind, JointMatrix};

/// Study variable in the caller's unit order.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyVariable(Vec<f64>);

impl StudyVariable {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(HvError::NonFinite { index });
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Values reordered into the design's sorted space.
    pub fn sorted(&self, design: &DesignSpec) -> Result<Vec<f64>> {
        check_len(design.population(), self.len())?;
        Ok(design.to_sorted(&self.0))
    }
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(HvError::DimensionMismatch { expected, actual });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "HT")]
    Ht,
    #[serde(rename = "CHT")]
    Cht,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Ht => "HT",
            EstimatorKind::Cht => "CHT",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub estimator: EstimatorKind,
    pub total: f64,
    pub mean: f64,
    pub variance_estimate: Option<f64>,
}

impl EstimateResult {
    fn new(estimator: EstimatorKind, total: f64, population: usize) -> Self {
        Self {
            estimator,
            total,
            mean: total / population as f64,
            variance_estimate: None,
        }
    }
}

/// `sum_{k in S} y_k / pi_k` on sorted-space data.
pub fn ht_total_sorted(units: &[usize], y_sorted: &[f64], pi: &[f64]) -> f64 {
    units.iter().map(|&k| y_sorted[k] / pi[k]).sum()
}

/// `sum_{k in S} y_k / pi_k(0)` on sorted-space data; certain units have
/// `pi_k(0) = 1`.
pub fn cht_total_sorted(units: &[usize], y_sorted: &[f64], pi0: &[f64]) -> f64 {
    units.iter().map(|&k| y_sorted[k] / pi0[k]).sum()
}

/// Horvitz-Thompson estimate of the total. No variance is attached; use
/// [`cht_total_with_variance`] for a variance estimate.
pub fn ht_total(selection: &SampleSelection, y: &StudyVariable, design: &DesignSpec) -> Result<EstimateResult> {
    let ys = y.sorted(design)?;
    check_len(design.population(), selection.indicators().len())?;
    let total = ht_total_sorted(selection.units_sorted(), &ys, design.pi());
    Ok(EstimateResult::new(EstimatorKind::Ht, total, design.population()))
}

/// Conditional Horvitz-Thompson estimate, weighting by the split
/// probabilities `pi(0)` of the selection's own Phase 1 outcome.
pub fn cht_total(selection: &SampleSelection, y: &StudyVariable, design: &DesignSpec) -> Result<EstimateResult> {
    let ys = y.sorted(design)?;
    check_len(design.population(), selection.split().population())?;
    let total = cht_total_sorted(selection.units_sorted(), &ys, selection.split().pi0());
    Ok(EstimateResult::new(EstimatorKind::Cht, total, design.population()))
}

/// CHT estimate with the SYG variance estimate attached.
pub fn cht_total_with_variance(
    selection: &SampleSelection,
    y: &StudyVariable,
    design: &DesignSpec,
    joint: &JointMatrix,
) -> Result<EstimateResult> {
    let mut est = cht_total(selection, y, design)?;
    est.variance_estimate = Some(syg_variance(selection, y, design, joint)?);
    Ok(est)
}

fn check_conditional(split: &SplitOutcome, joint: &JointMatrix) -> Result<()> {
    match joint.kind() {
        JointKind::Conditional { n_prime } if n_prime == split.n_prime() && joint.dim() == split.population() => Ok(()),
        _ => Err(HvError::SplitMismatch),
    }
}

/// Sen-Yates-Grundy variance estimate of the CHT total, summed over
/// sampled pairs of `U'`. Certain units contribute nothing.
pub fn syg_variance(
    selection: &SampleSelection,
    y: &StudyVariable,
    design: &DesignSpec,
    joint: &JointMatrix,
) -> Result<f64> {
    let split = selection.split();
    check_conditional(split, joint)?;
    let ys = y.sorted(design)?;
    let pi0 = split.pi0();
    let in_u: Vec<usize> = selection
        .units_sorted()
        .iter()
        .copied()
        .filter(|&k| k < split.n_big())
        .collect();
    let mut v = 0.0;
    for (a, &k) in in_u.iter().enumerate() {
        for &l in &in_u[a + 1..] {
            let pkl = joint.get(k, l);
            if pkl <= 0.0 {
                return Err(HvError::ZeroJoint { k, l });
            }
            let diff = ys[k] / pi0[k] - ys[l] / pi0[l];
            // each unordered pair counted once: the 1/2 cancels
            v += (pi0[k] * pi0[l] - pkl) / pkl * diff * diff;
        }
    }
    Ok(v.max(0.0))
}

/// Exact conditional variance of the CHT total given the split, from the
/// joint matrix: `-(1/2) sum_{k != l in U'} (pi_kl - pi_k pi_l)(y_k/pi_k - y_l/pi_l)^2`.
pub fn cht_conditional_variance(
    split: &SplitOutcome,
    y: &StudyVariable,
    design: &DesignSpec,
    joint: &JointMatrix,
) -> Result<f64> {
    check_conditional(split, joint)?;
    let ys = y.sorted(design)?;
    let pi0 = split.pi0();
    let mut v = 0.0;
    for k in 0..split.n_big() {
        for l in (k + 1)..split.n_big() {
            let diff = ys[k] / pi0[k] - ys[l] / pi0[l];
            v += (pi0[k] * pi0[l] - joint.get(k, l)) * diff * diff;
        }
    }
    Ok(v)
}

/// `xi(0) = sum_k (y_k / pi_k)(pi_k(0) - pi_k)`, the conditional bias of
/// the HT total given the split.
pub fn xi0(split: &SplitOutcome, y: &StudyVariable, design: &DesignSpec) -> Result<f64> {
    let ys = y.sorted(design)?;
    check_len(design.population(), split.population())?;
    Ok(ys
        .iter()
        .zip(design.pi())
        .zip(split.pi0())
        .map(|((yk, pk), p0)| yk / pk * (p0 - pk))
        .sum())
}

/// Variance of the HT total due to Phase 1 alone: `sum_i delta_i xi(0|i)^2`.
pub fn ht_phase1_variance(design: &DesignSpec, y: &StudyVariable) -> Result<f64> {
    let delta = phase1_deltas(design)?;
    let mut v = 0.0;
    for (i, &d) in delta.iter().enumerate() {
        if d > 0.0 {
            let x = xi0(&split_probabilities(design, i + 1)?, y, design)?;
            v += d * x * x;
        }
    }
    Ok(v)
}

/// Lower bound `delta_n * Delta^2` on the HT variance, where `Delta` is
/// the conditional bias of the HT total when `n' = n`:
///
/// `Delta = {n/D - 1} sum_{k <= N-n} y_k + sum_{k > N-n} y_k {n pi_{N-n+1} / (pi_k D) - 1}`
/// with `D = pi_{N-n}^+ + n pi_{N-n+1}`.
pub fn ht_variance_lower_bound(design: &DesignSpec, y: &StudyVariable) -> Result<f64> {
    let ys = y.sorted(design)?;
    let delta = phase1_deltas(design)?;
    let (big, n) = (design.population(), design.n());
    let pi = design.pi();
    let lower = design.cum()[big - n - 1];
    let pivot = pi[big - n];
    let nf = n as f64;
    let denom = lower + nf * pivot;
    let head: f64 = ys[..big - n].iter().sum::<f64>() * (nf / denom - 1.0);
    let tail: f64 = ys[big - n..]
        .iter()
        .zip(&pi[big - n..])
        .map(|(yk, pk)| yk * (nf * pivot / (pk * denom) - 1.0))
        .sum();
    let gap = head + tail;
    Ok(delta[n - 1] * gap * gap)
}

/// `E(1/n')` in closed form:
/// `sum_i gap_i / i + pi_{N-n+1}(1 - pi_{N-n+1}) / pi_{N-n}^+`.
pub fn expected_inverse_nprime(design: &DesignSpec) -> f64 {
    if design.top_block_is_flat() {
        return 1.0 / design.n() as f64;
    }
    let (big, n) = (design.population(), design.n());
    let lower = design.cum()[big - n - 1];
    let pivot = design.pi()[big - n];
    let harmonic: f64 = design
        .top_gaps()
        .iter()
        .enumerate()
        .map(|(idx, g)| g / (idx + 1) as f64)
        .sum();
    harmonic + pivot * (1.0 - pivot) / lower
}
