//! Second-order inclusion probabilities and the exact enumeration oracle.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::design::{
    draw_window, phase1_deltas, sequential_accept, split_probabilities, DesignSpec, SplitOutcome, Variant,
};
use crate::error::{HvError, Result};

/// Default cap on the population size accepted by the enumeration.
pub const MAX_ENUM_N: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum JointKind {
    /// Given the Phase 1 outcome `n'`.
    Conditional {
        n_prime: usize,
    },
    Unconditional,
}

/// Symmetric `N x N` matrix of joint inclusion probabilities in sorted
/// space; the diagonal holds first-order probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct JointMatrix {
    dim: usize,
    values: Vec<f64>,
    kind: JointKind,
}

impl JointMatrix {
    fn zeros(dim: usize, kind: JointKind) -> Self {
        Self {
            dim,
            values: vec![0.0; dim * dim],
            kind,
        }
    }

    fn set_pair(&mut self, k: usize, l: usize, v: f64) {
        self.values[k * self.dim + l] = v;
        self.values[l * self.dim + k] = v;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> JointKind {
        self.kind
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.values[k * self.dim + l]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|k| self.get(k, k)).collect()
    }

    /// Row-major values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Same matrix indexed by the caller's units.
    pub fn to_original(&self, perm: &[usize]) -> JointMatrix {
        let mut out = JointMatrix::zeros(self.dim, self.kind);
        for k in 0..self.dim {
            for l in 0..self.dim {
                out.values[perm[k] * self.dim + perm[l]] = self.get(k, l);
            }
        }
        out
    }

    /// Largest `|sum_{l != k} pi_kl - (m - 1) pi_k|` over rows.
    pub fn fixed_size_residual(&self, m: usize) -> f64 {
        (0..self.dim)
            .map(|k| {
                let off: f64 = (0..self.dim).filter(|&l| l != k).map(|l| self.get(k, l)).sum();
                (off - (m as f64 - 1.0) * self.get(k, k)).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &JointMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Closed-form joint probabilities given the split.
///
/// Inside `U'`, for `k < l`:
/// `pi_kl(0) = n'(n'-1) (1-P_1)...(1-P_{k-1}) P_k p_l` with
/// `p_l = pi_l(0)/n'` and `P_k = pi_k(0)/(n' - pi_k^+(0))`.
/// A unit of `U'` paired with a certain unit gets `pi_k(0)`; two certain
/// units get 1.
pub fn conditional_joint(split: &SplitOutcome) -> Result<JointMatrix> {
    let dim = split.population();
    let n_big = split.n_big();
    let np = split.n_prime() as f64;
    let pi0 = split.pi0();
    let mut m = JointMatrix::zeros(
        dim,
        JointKind::Conditional {
            n_prime: split.n_prime(),
        },
    );

    // survival = prod_{m < k} (1 - P_m), accumulated once
    let mut survival = 1.0;
    for k in 0..n_big.saturating_sub(1) {
        // n' - pi_{k+1}^+(0) in 1-based terms is the mass strictly after k
        let rest = split.mass_from(k + 1);
        if rest <= 0.0 {
            return Err(HvError::DivideByZero { position: k });
        }
        let big_p = pi0[k] / rest;
        let lead = np * (np - 1.0) * survival * big_p;
        for (l, &p) in pi0.iter().enumerate().take(n_big).skip(k + 1) {
            m.set_pair(k, l, lead * p / np);
        }
        survival *= 1.0 - big_p;
    }
    for (k, &p) in pi0.iter().enumerate().take(n_big) {
        for l in n_big..dim {
            m.set_pair(k, l, p);
        }
    }
    for k in n_big..dim {
        for l in (k + 1)..dim {
            m.set_pair(k, l, 1.0);
        }
    }
    for (k, &p) in pi0.iter().enumerate() {
        m.values[k * dim + k] = p;
    }
    Ok(m)
}

/// Conditional matrix for a hypothesised `n'`.
pub fn conditional_joint_for(design: &DesignSpec, n_prime: usize) -> Result<JointMatrix> {
    conditional_joint(&split_probabilities(design, n_prime)?)
}

/// Unconditional joint probabilities: the conditional matrices averaged
/// over the Phase 1 law of `n'`, accumulated in ascending `n'`.
///
/// Costs `n` conditional matrices, i.e. `O(n N^2)`.
pub fn unconditional_joint(design: &DesignSpec) -> Result<JointMatrix> {
    let dim = design.population();
    let delta = phase1_deltas(design)?;
    let mut out = JointMatrix::zeros(dim, JointKind::Unconditional);
    for (i, &d) in delta.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let cond = conditional_joint_for(design, i + 1)?;
        for (acc, v) in out.values.iter_mut().zip(&cond.values) {
            *acc += d * v;
        }
    }
    for (k, &p) in design.pi().iter().enumerate() {
        out.values[k * dim + k] = p;
    }
    Ok(out)
}

/// Exact law of the selected sample: sorted-space unit sets (ascending)
/// mapped to their probability. Zero-probability sets are omitted.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactDistribution {
    population: usize,
    n: usize,
    kind: JointKind,
    entries: BTreeMap<Vec<usize>, f64>,
}

impl ExactDistribution {
    pub fn new(population: usize, n: usize, kind: JointKind) -> Self {
        Self {
            population,
            n,
            kind,
            entries: BTreeMap::new(),
        }
    }

    /// Adds `prob` to the mass of `units` (sorted ascending, size `n`).
    pub fn add(&mut self, units: Vec<usize>, prob: f64) {
        assert_eq!(units.len(), self.n, "sample size must be n");
        if prob > 0.0 {
            *self.entries.entry(units).or_insert(0.0) += prob;
        }
    }

    pub fn population(&self) -> usize {
        self.population
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> JointKind {
        self.kind
    }

    pub fn entries(&self) -> &BTreeMap<Vec<usize>, f64> {
        &self.entries
    }

    pub fn probability(&self, units: &[usize]) -> f64 {
        self.entries.get(units).copied().unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.values().sum()
    }

    /// `E[f(S)]`.
    pub fn expectation(&self, mut f: impl FnMut(&[usize]) -> f64) -> f64 {
        self.entries.iter().map(|(s, &p)| p * f(s)).sum()
    }

    pub fn marginals(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.population];
        for (s, &p) in &self.entries {
            for &k in s {
                out[k] += p;
            }
        }
        out
    }

    /// Total-variation distance `(1/2) sum |p - q|` over the union of supports.
    pub fn total_variation(&self, other: &ExactDistribution) -> f64 {
        let mut sum = 0.0;
        for (s, &p) in &self.entries {
            sum += (p - other.probability(s)).abs();
        }
        for (s, &q) in &other.entries {
            if !self.entries.contains_key(s) {
                sum += q;
            }
        }
        0.5 * sum
    }

    /// Same distribution keyed by the caller's unit indices.
    pub fn to_original(&self, perm: &[usize]) -> BTreeMap<Vec<usize>, f64> {
        self.entries
            .iter()
            .map(|(s, &p)| {
                let mut units: Vec<usize> = s.iter().map(|&k| perm[k]).collect();
                units.sort_unstable();
                (units, p)
            })
            .collect()
    }
}

/// Exact Phase 2 law given the split, by walking every branch of the
/// chosen variant and multiplying branch probabilities.
pub fn enumerate_conditional(split: &SplitOutcome, variant: Variant) -> Result<ExactDistribution> {
    let mut dist = ExactDistribution::new(
        split.population(),
        split.n(),
        JointKind::Conditional {
            n_prime: split.n_prime(),
        },
    );
    walk(split, variant, 1.0, &mut dist)?;
    Ok(dist)
}

fn walk(split: &SplitOutcome, variant: Variant, weight: f64, dist: &mut ExactDistribution) -> Result<()> {
    let certain: Vec<usize> = (split.n_big()..split.population()).collect();
    let mut chosen = Vec::with_capacity(split.n());
    match variant {
        Variant::Sequential => walk_sequential(split, 0, weight, &mut chosen, &certain, dist),
        Variant::DrawByDraw => walk_draws(split, 1, 0, weight, &mut chosen, &certain, dist),
    }
}

fn finish(chosen: &[usize], certain: &[usize], prob: f64, dist: &mut ExactDistribution) {
    let mut units = chosen.to_vec();
    units.extend_from_slice(certain);
    dist.add(units, prob);
}

fn walk_sequential(
    split: &SplitOutcome,
    t: usize,
    prob: f64,
    chosen: &mut Vec<usize>,
    certain: &[usize],
    dist: &mut ExactDistribution,
) -> Result<()> {
    if prob == 0.0 {
        return Ok(());
    }
    if t == split.n_big() {
        finish(chosen, certain, prob, dist);
        return Ok(());
    }
    let p = sequential_accept(split, t, chosen.len())?;
    if p > 0.0 {
        chosen.push(t);
        walk_sequential(split, t + 1, prob * p, chosen, certain, dist)?;
        chosen.pop();
    }
    if p < 1.0 {
        walk_sequential(split, t + 1, prob * (1.0 - p), chosen, certain, dist)?;
    }
    Ok(())
}

fn walk_draws(
    split: &SplitOutcome,
    j: usize,
    prev: usize,
    prob: f64,
    chosen: &mut Vec<usize>,
    certain: &[usize],
    dist: &mut ExactDistribution,
) -> Result<()> {
    if prob == 0.0 {
        return Ok(());
    }
    if j > split.n_prime() {
        finish(chosen, certain, prob, dist);
        return Ok(());
    }
    let (start, weights) = draw_window(split, j, prev)?;
    for (offset, &w) in weights.iter().enumerate() {
        let unit = start + offset;
        chosen.push(unit);
        walk_draws(split, j + 1, unit + 1, prob * w, chosen, certain, dist)?;
        chosen.pop();
    }
    Ok(())
}

/// Exact unconditional law of the full two-phase procedure, with the
/// default cap of [`MAX_ENUM_N`] units.
pub fn enumerate_distribution(design: &DesignSpec, variant: Variant) -> Result<ExactDistribution> {
    enumerate_distribution_capped(design, variant, MAX_ENUM_N)
}

pub fn enumerate_distribution_capped(design: &DesignSpec, variant: Variant, cap: usize) -> Result<ExactDistribution> {
    let population = design.population();
    if population > cap {
        return Err(HvError::TooLarge { population, cap });
    }
    let delta = phase1_deltas(design)?;
    let mut dist = ExactDistribution::new(population, design.n(), JointKind::Unconditional);
    for (i, &d) in delta.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let split = split_probabilities(design, i + 1)?;
        walk(&split, variant, d, &mut dist)?;
    }
    Ok(dist)
}

/// First- and second-order inclusion probabilities by direct summation.
pub fn moments_from_distribution(dist: &ExactDistribution) -> JointMatrix {
    let dim = dist.population;
    let mut m = JointMatrix::zeros(dim, dist.kind);
    for (s, &p) in &dist.entries {
        for &k in s {
            for &l in s {
                m.values[k * dim + l] += p;
            }
        }
    }
    m
}
