//! Design validation and the two-phase Hanurav-Vijayan selection.
//!
//! Everything in here works in *sorted space*: position 0 holds the smallest
//! inclusion probability. `DesignSpec::perm` maps sorted positions back to
//! the caller's ordering.
//!
//! Phase 1 draws the integer `n'` and replaces `pi` by the split vector
//! `pi(0)`, in which the `n - n'` largest units are certain and the next `n'`
//! share one common value. Phase 2 then selects `n'` units among the first
//! `N' = N - (n - n')` positions, either draw by draw or by a single
//! sequential scan. Both Phase 2 variants expose their branch probabilities
//! through [`draw_window`] and [`sequential_accept`] so that the exact
//! enumeration in [`crate::inclusion`] walks the very same law the samplers
//! draw from.

use serde::{Deserialize, Serialize};

use crate::error::{HvError, Result};
use crate::rng::{categorical, RngStream};

/// Slack accepted when the probabilities should sum to an integer.
pub const INTEGER_SUM_TOL: f64 = 1e-9;
/// Weights in `(-NEGATIVE_WEIGHT_TOL, 0)` are rounding noise and clamp to zero.
pub const NEGATIVE_WEIGHT_TOL: f64 = 1e-12;
/// Largest overshoot above one tolerated for an acceptance probability.
pub const OVERFLOW_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    DrawByDraw,
    Sequential,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::DrawByDraw, Variant::Sequential];

    pub fn name(self) -> &'static str {
        match self {
            Variant::DrawByDraw => "draw_by_draw",
            Variant::Sequential => "sequential",
        }
    }
}

/// Validated first-order inclusion probabilities, sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    pi: Vec<f64>,
    n: usize,
    perm: Vec<usize>,
    cum: Vec<f64>,
}

/// Validates `pi_raw` and returns the sorted design.
///
/// Sorting is stable, so tied units keep their input order.
pub fn validate_design(pi_raw: &[f64]) -> Result<DesignSpec> {
    if pi_raw.is_empty() {
        return Err(HvError::EmptyDesign);
    }
    for (index, &value) in pi_raw.iter().enumerate() {
        if !(value > 0.0 && value < 1.0) {
            return Err(HvError::NonProbability { index, value });
        }
    }
    let sum: f64 = pi_raw.iter().sum();
    let rounded = sum.round();
    if (sum - rounded).abs() > INTEGER_SUM_TOL {
        return Err(HvError::NonIntegerSize { sum });
    }
    let n = rounded as usize;
    let population = pi_raw.len();
    if n == 0 || n >= population {
        return Err(HvError::DegenerateSize { n, population });
    }

    let mut perm: Vec<usize> = (0..population).collect();
    perm.sort_by(|&a, &b| pi_raw[a].total_cmp(&pi_raw[b]));
    let pi: Vec<f64> = perm.iter().map(|&i| pi_raw[i]).collect();
    let cum = prefix_sums(&pi);

    Ok(DesignSpec { pi, n, perm, cum })
}

fn prefix_sums(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .scan(0.0, |acc, &v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

impl DesignSpec {
    /// Sorted inclusion probabilities.
    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    /// Fixed sample size.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Population size `N`.
    pub fn population(&self) -> usize {
        self.pi.len()
    }

    /// `perm[s]` is the caller's index of the unit at sorted position `s`.
    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// `cum[l]` is the sum of the `l + 1` smallest probabilities.
    pub fn cum(&self) -> &[f64] {
        &self.cum
    }

    /// Probabilities in the caller's original order.
    pub fn pi_original(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.pi.len()];
        for (s, &orig) in self.perm.iter().enumerate() {
            out[orig] = self.pi[s];
        }
        out
    }

    /// Inverse of `perm`: sorted position of each original unit.
    pub fn rank_of(&self) -> Vec<usize> {
        let mut out = vec![0; self.perm.len()];
        for (s, &orig) in self.perm.iter().enumerate() {
            out[orig] = s;
        }
        out
    }

    /// Reorders a caller-space vector into sorted space.
    pub fn to_sorted<T: Copy>(&self, values: &[T]) -> Vec<T> {
        self.perm.iter().map(|&i| values[i]).collect()
    }

    /// `pi_l` with 1-based `l` and the convention `pi_{N+1} = 1`.
    fn pi1(&self, l: usize) -> f64 {
        if l == self.pi.len() + 1 {
            1.0
        } else {
            self.pi[l - 1]
        }
    }

    /// Cumulated probability of the `N - n` smallest units.
    fn lower_mass(&self) -> f64 {
        self.cum[self.population() - self.n - 1]
    }

    /// `pi_{N-n+1}`, the smallest of the `n` largest probabilities.
    fn pivot(&self) -> f64 {
        self.pi[self.population() - self.n]
    }

    /// True when the `n` largest probabilities are all equal, in which case
    /// Phase 1 is void: `n' = n` surely and `pi(0) = pi`.
    pub fn top_block_is_flat(&self) -> bool {
        self.pivot() == self.pi[self.population() - 1]
    }

    /// Gaps `pi_{N-n+i+1} - pi_{N-n+i}` for `i = 1..=n`, last one against 1.
    pub fn top_gaps(&self) -> Vec<f64> {
        let base = self.population() - self.n;
        (1..=self.n)
            .map(|i| self.pi1(base + i + 1) - self.pi1(base + i))
            .collect()
    }
}

/// Probabilities `delta_1..delta_n` of the Phase 1 draw of `n'`.
///
/// `delta[i - 1]` is the probability of `n' = i`.
pub fn phase1_deltas(design: &DesignSpec) -> Result<Vec<f64>> {
    let n = design.n;
    if design.top_block_is_flat() {
        let mut out = vec![0.0; n];
        out[n - 1] = 1.0;
        return Ok(out);
    }
    let lower = design.lower_mass();
    if lower <= 0.0 {
        return Err(HvError::ZeroPrefix);
    }
    let pivot = design.pivot();
    Ok(design
        .top_gaps()
        .into_iter()
        .enumerate()
        .map(|(idx, gap)| {
            let i = (idx + 1) as f64;
            gap * (lower + i * pivot) / lower
        })
        .collect())
}

/// Result of Phase 1 for one value of `n'`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitOutcome {
    n_prime: usize,
    n_big: usize,
    n: usize,
    pi0: Vec<f64>,
    cum0: Vec<f64>,
    /// `suffix0[l] = sum_{m >= l, m < N'} pi0[m]`, length `N' + 1`.
    ///
    /// With 1-based `l` this is `n' - pi_l^+(0)`; summing from the top keeps
    /// the small remaining masses accurate near the end of `U'`.
    suffix0: Vec<f64>,
    delta: Vec<f64>,
}

impl SplitOutcome {
    pub fn n_prime(&self) -> usize {
        self.n_prime
    }

    /// `N' = N - (n - n')`, the size of the Phase 2 population `U'`.
    pub fn n_big(&self) -> usize {
        self.n_big
    }

    /// Full sample size `n` of the design this split came from.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn population(&self) -> usize {
        self.pi0.len()
    }

    /// Split probabilities `pi(0)` in sorted space; 1 beyond `N'`.
    pub fn pi0(&self) -> &[f64] {
        &self.pi0
    }

    pub fn cum0(&self) -> &[f64] {
        &self.cum0
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    /// Probability that Phase 1 produced this split.
    pub fn probability(&self) -> f64 {
        self.delta[self.n_prime - 1]
    }

    /// Remaining `pi(0)` mass of `U'` from sorted position `l` on.
    pub fn mass_from(&self, l: usize) -> f64 {
        self.suffix0[l]
    }
}

/// Deterministic `pi(0)` for a given `n'`.
pub fn split_probabilities(design: &DesignSpec, n_prime: usize) -> Result<SplitOutcome> {
    let delta = phase1_deltas(design)?;
    split_with_deltas(design, n_prime, delta)
}

fn split_with_deltas(design: &DesignSpec, n_prime: usize, delta: Vec<f64>) -> Result<SplitOutcome> {
    let n = design.n;
    let population = design.population();
    if n_prime == 0 || n_prime > n {
        return Err(HvError::OutOfRange { n_prime, n });
    }
    let n_big = population - (n - n_prime);
    let pi0: Vec<f64> = if n_prime == n && design.top_block_is_flat() {
        design.pi.clone()
    } else {
        let lower = design.lower_mass();
        let np = n_prime as f64;
        let denom = lower + np * design.pivot();
        if denom <= 0.0 {
            return Err(HvError::ZeroPrefix);
        }
        let block = np * design.pivot() / denom;
        // 0-based: positions < N - n scale pi, [N - n, N') share the block
        // value (position N - n gives the same expression), the rest are certain.
        let proportional_end = population - n;
        (0..population)
            .map(|k| {
                if k < proportional_end {
                    np * design.pi[k] / denom
                } else if k < n_big {
                    block
                } else {
                    1.0
                }
            })
            .collect()
    };
    let cum0 = prefix_sums(&pi0);
    let mut suffix0 = vec![0.0; n_big + 1];
    for l in (0..n_big).rev() {
        suffix0[l] = suffix0[l + 1] + pi0[l];
    }
    Ok(SplitOutcome {
        n_prime,
        n_big,
        n,
        pi0,
        cum0,
        suffix0,
        delta,
    })
}

/// Phase 1: draws `n'` from the categorical law `delta` with one uniform.
pub fn phase1_split(design: &DesignSpec, rng: &mut RngStream) -> Result<SplitOutcome> {
    let delta = phase1_deltas(design)?;
    phase1_split_with(design, delta, rng)
}

fn phase1_split_with(design: &DesignSpec, delta: Vec<f64>, rng: &mut RngStream) -> Result<SplitOutcome> {
    let n_prime = categorical(&delta, rng.uniform()) + 1;
    split_with_deltas(design, n_prime, delta)
}

/// A fixed-size sample together with the split that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSelection {
    units_sorted: Vec<usize>,
    units_original: Vec<usize>,
    split: SplitOutcome,
    indicators: Vec<u8>,
}

impl SampleSelection {
    /// Rebuilds a selection from sorted positions, checking it is a possible outcome of `split`.
    pub fn from_units(design: &DesignSpec, split: SplitOutcome, mut units_sorted: Vec<usize>) -> Result<Self> {
        units_sorted.sort_unstable();
        units_sorted.dedup();
        if split.n != design.n || split.n_big != design.population() - design.n + split.n_prime {
            return Err(HvError::SplitMismatch);
        }
        if units_sorted.len() != design.n {
            return Err(HvError::InvalidSample(format!(
                "{} distinct units, expected {}",
                units_sorted.len(),
                design.n
            )));
        }
        if let Some(&bad) = units_sorted.iter().find(|&&s| s >= design.population()) {
            return Err(HvError::InvalidSample(format!(
                "position {bad} is outside the population"
            )));
        }
        let in_block = units_sorted.iter().filter(|&&s| s < split.n_big).count();
        if in_block != split.n_prime {
            return Err(HvError::InvalidSample(format!(
                "{in_block} units below the certainty block, expected n' = {}",
                split.n_prime
            )));
        }
        Ok(Self::from_sorted(design, split, units_sorted))
    }

    fn from_sorted(design: &DesignSpec, split: SplitOutcome, units_sorted: Vec<usize>) -> Self {
        let mut indicators = vec![0u8; design.population()];
        for &s in &units_sorted {
            indicators[s] = 1;
        }
        let mut units_original: Vec<usize> = units_sorted.iter().map(|&s| design.perm[s]).collect();
        units_original.sort_unstable();
        Self {
            units_sorted,
            units_original,
            split,
            indicators,
        }
    }

    /// Selected sorted positions, ascending.
    pub fn units_sorted(&self) -> &[usize] {
        &self.units_sorted
    }

    /// Selected caller indices, ascending.
    pub fn units_original(&self) -> &[usize] {
        &self.units_original
    }

    pub fn split(&self) -> &SplitOutcome {
        &self.split
    }

    /// 0/1 membership per sorted position.
    pub fn indicators(&self) -> &[u8] {
        &self.indicators
    }

    pub fn len(&self) -> usize {
        self.units_sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units_sorted.is_empty()
    }
}

/// Candidate window and normalized selection probabilities for draw `j`
/// (1-based) of the draw-by-draw Phase 2, given that the previous draw
/// picked 1-based unit `prev` (0 before the first draw).
///
/// Returns the 0-based sorted position of the first candidate and the
/// probabilities of the candidates in order.
pub fn draw_window(split: &SplitOutcome, j: usize, prev: usize) -> Result<(usize, Vec<f64>)> {
    let np = split.n_prime;
    let hi = split.population() - split.n + j; // 1-based, inclusive
    debug_assert!(j >= 1 && j <= np && prev < hi);
    let head = (np - j + 1) as f64 / np as f64;
    let remaining_after = (np - j) as f64;

    let mut weights = Vec::with_capacity(hi - prev);
    let mut running = 1.0;
    for k in (prev + 1)..=hi {
        if k > prev + 1 {
            // factor for l = k - 1 (1-based); n' - pi_l^+(0) = suffix0[l]
            let l = k - 1;
            let mut factor = 1.0 - remaining_after * split.pi0[l - 1] / split.suffix0[l];
            if factor < 0.0 {
                if factor < -NEGATIVE_WEIGHT_TOL {
                    return Err(HvError::NumericalUnderflow {
                        position: l - 1,
                        value: factor,
                    });
                }
                factor = 0.0;
            }
            running *= factor;
        }
        weights.push(running * head * split.pi0[k - 1]);
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(HvError::NumericalUnderflow {
            position: prev,
            value: total,
        });
    }
    for w in &mut weights {
        *w /= total;
    }
    Ok((prev, weights))
}

/// Acceptance probability of sorted position `t` in the sequential Phase 2,
/// given that `taken` units of `U'` were accepted before it.
///
/// When the remaining demand is zero or equals the number of remaining
/// units the answer is exactly 0 or 1.
pub fn sequential_accept(split: &SplitOutcome, t: usize, taken: usize) -> Result<f64> {
    let needed = split.n_prime - taken;
    let remaining = split.n_big - t;
    if needed == 0 {
        return Ok(0.0);
    }
    if needed >= remaining {
        return Ok(1.0);
    }
    let p = needed as f64 * split.pi0[t] / split.suffix0[t];
    if p > 1.0 + OVERFLOW_TOL {
        return Err(HvError::ProbabilityOverflow { position: t, value: p });
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Draw-by-draw Phase 2.
pub fn phase2_draw_by_draw(design: &DesignSpec, split: SplitOutcome, rng: &mut RngStream) -> Result<SampleSelection> {
    let mut units = Vec::with_capacity(design.n);
    let mut prev = 0usize;
    for j in 1..=split.n_prime {
        let (start, weights) = draw_window(&split, j, prev)?;
        let pick = if weights.len() == 1 {
            0
        } else {
            categorical(&weights, rng.uniform())
        };
        let unit = start + pick; // 0-based
        units.push(unit);
        prev = unit + 1;
    }
    units.extend(split.n_big..design.population());
    Ok(SampleSelection::from_sorted(design, split, units))
}

/// Sequential (selection-rejection) Phase 2.
pub fn phase2_sequential(design: &DesignSpec, split: SplitOutcome, rng: &mut RngStream) -> Result<SampleSelection> {
    let mut units = Vec::with_capacity(design.n);
    for t in 0..split.n_big {
        let p = sequential_accept(&split, t, units.len())?;
        let take = if p >= 1.0 {
            true
        } else if p <= 0.0 {
            false
        } else {
            rng.uniform() < p
        };
        if take {
            units.push(t);
        }
    }
    debug_assert_eq!(units.len(), split.n_prime);
    units.extend(split.n_big..design.population());
    Ok(SampleSelection::from_sorted(design, split, units))
}

/// Reusable sampler: Phase 1 probabilities are computed once.
#[derive(Debug, Clone)]
pub struct Sampler<'a> {
    design: &'a DesignSpec,
    delta: Vec<f64>,
    variant: Variant,
}

impl<'a> Sampler<'a> {
    pub fn new(design: &'a DesignSpec, variant: Variant) -> Result<Self> {
        Ok(Self {
            design,
            delta: phase1_deltas(design)?,
            variant,
        })
    }

    pub fn design(&self) -> &DesignSpec {
        self.design
    }

    pub fn draw(&self, rng: &mut RngStream) -> Result<SampleSelection> {
        let split = phase1_split_with(self.design, self.delta.clone(), rng)?;
        match self.variant {
            Variant::DrawByDraw => phase2_draw_by_draw(self.design, split, rng),
            Variant::Sequential => phase2_sequential(self.design, split, rng),
        }
    }
}

/// Full two-phase selection.
pub fn hv_sample(design: &DesignSpec, rng: &mut RngStream, variant: Variant) -> Result<SampleSelection> {
    Sampler::new(design, variant)?.draw(rng)
}
