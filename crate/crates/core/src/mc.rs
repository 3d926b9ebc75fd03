//! Seeded Monte-Carlo campaigns for the HT and CHT estimators of the mean.
//!
//! Replicate `b` at sample size `n` always reads the stream
//! `(master_seed, n << 32 | b)`, so adding grid points or changing the
//! thread count never perturbs existing cells. Replicates are processed in
//! fixed chunks whose accumulators are merged in chunk order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{generate_population, pps_probabilities, Population, PopulationConfig, SizeDistribution, YModel};
use crate::design::{DesignSpec, Sampler, Variant};
use crate::error::{HvError, Result};
use crate::estimators::{cht_total_sorted, ht_total_sorted, EstimatorKind};
use crate::inclusion::{enumerate_distribution, MAX_ENUM_N};
use crate::rng::RngStream;

const CHUNK: usize = 512;

/// Stream id of replicate `b` at sample size `n`.
pub fn replicate_stream(n: usize, b: usize) -> u64 {
    ((n as u64) << 32) | b as u64
}

/// Single-pass mean and centred sum of squares (Welford), mergeable with
/// Chan's update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let total = self.count + other.count;
        let d = other.mean - self.mean;
        let w = other.count as f64 / total as f64;
        self.mean += d * w;
        self.m2 += other.m2 + d * d * self.count as f64 * w;
        self.count = total;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `(1/B) sum (x_b - mean)^2`.
    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.m2 / self.count as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableSpec {
    Model(YModel),
    /// `y_k = pi_k`; the HT estimator is then constant.
    InclusionProbability,
}

impl VariableSpec {
    pub const MODELS: [VariableSpec; 4] = [
        VariableSpec::Model(YModel::Linear),
        VariableSpec::Model(YModel::Quadratic),
        VariableSpec::Model(YModel::Exponential),
        VariableSpec::Model(YModel::Bump),
    ];

    pub fn name(self) -> &'static str {
        match self {
            VariableSpec::Model(m) => m.name(),
            VariableSpec::InclusionProbability => "pi",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub size_distribution: SizeDistribution,
    pub population_seed: u64,
    /// Grid point `n` uses a population of size `round(n / f)`.
    pub sampling_fraction: f64,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub variables: Vec<VariableSpec>,
    pub estimators: Vec<EstimatorKind>,
    pub variant: Variant,
    pub master_seed: u64,
    pub track_inclusion: bool,
}

impl Scenario {
    /// Grid `400, 800, ..` up to `n_max`, `f = 0.2`, all four study
    /// variables, both estimators, sequential Phase 2.
    pub fn standard(size_distribution: SizeDistribution, n_max: usize, replicates: usize, seed: u64) -> Self {
        Self {
            size_distribution,
            population_seed: seed,
            sampling_fraction: 0.2,
            n_grid: (400..=n_max).step_by(400).collect(),
            replicates,
            variables: VariableSpec::MODELS.to_vec(),
            estimators: vec![EstimatorKind::Ht, EstimatorKind::Cht],
            variant: Variant::Sequential,
            master_seed: seed,
            track_inclusion: false,
        }
    }

    pub fn population_size(&self, n: usize) -> usize {
        (n as f64 / self.sampling_fraction).round() as usize
    }

    /// Population used at grid point `n`: the first `N` units of one sequence
    /// driven by `population_seed`, so larger grid points extend smaller ones.
    pub fn population(&self, n: usize) -> Result<Population> {
        let big = self.population_size(n);
        generate_population(&PopulationConfig::new(
            self.size_distribution,
            big,
            self.population_seed,
        ))
    }

    fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(HvError::InvalidConfig("at least two replicates are needed".into()));
        }
        if !(self.sampling_fraction > 0.0 && self.sampling_fraction < 1.0) {
            return Err(HvError::InfeasibleGrid("sampling fraction must lie in (0, 1)".into()));
        }
        if self.n_grid.is_empty() || self.variables.is_empty() || self.estimators.is_empty() {
            return Err(HvError::InvalidConfig("empty grid, variable or estimator list".into()));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HvError::InfeasibleGrid(
                "sample sizes must be strictly increasing".into(),
            ));
        }
        if self.replicates as u64 > u32::MAX as u64 {
            return Err(HvError::InvalidConfig("replicate count exceeds 2^32 - 1".into()));
        }
        for &n in &self.n_grid {
            let big = self.population_size(n);
            if n == 0 || big <= n || big < 10 {
                return Err(HvError::InfeasibleGrid(format!("n = {n} gives N = {big}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McCell {
    pub n: usize,
    pub population_size: usize,
    pub variable: String,
    pub estimator: EstimatorKind,
    pub mean: f64,
    pub v_mc: f64,
    /// `v_mc` divided by the previous grid point's; absent at the first
    /// point or when the previous variance is zero.
    pub rv_mc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionFrequencies {
    pub n: usize,
    /// Per caller unit, fraction of replicates that selected it.
    pub frequencies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub cells: Vec<McCell>,
    pub inclusion: Vec<InclusionFrequencies>,
}

impl McReport {
    pub fn cell(&self, n: usize, variable: &str, estimator: EstimatorKind) -> Option<&McCell> {
        self.cells
            .iter()
            .find(|c| c.n == n && c.variable == variable && c.estimator == estimator)
    }
}

/// Statistics of one `(variable, estimator)` pair on a single design.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    pub variable: String,
    pub estimator: EstimatorKind,
    pub stats: Welford,
}

/// Output of [`run_design`].
#[derive(Debug, Clone, PartialEq)]
pub struct DesignRun {
    pub cells: Vec<CellStats>,
    /// Per caller unit selection counts, when requested.
    pub counts: Option<Vec<u64>>,
}

struct ChunkAgg {
    stats: Vec<Welford>,
    counts: Option<Vec<u64>>,
}

/// Draws `replicates` samples from one design and accumulates the mean
/// estimators (`total / N`) of each named caller-space variable.
pub fn run_design(
    design: &DesignSpec,
    variables: &[(String, Vec<f64>)],
    estimators: &[EstimatorKind],
    replicates: usize,
    master_seed: u64,
    variant: Variant,
    track_inclusion: bool,
) -> Result<DesignRun> {
    let big = design.population();
    let sorted: Vec<Vec<f64>> = variables
        .iter()
        .map(|(_, y)| {
            if y.len() != big {
                return Err(HvError::DimensionMismatch {
                    expected: big,
                    actual: y.len(),
                });
            }
            Ok(design.to_sorted(y))
        })
        .collect::<Result<_>>()?;
    let sampler = Sampler::new(design, variant)?;
    let n = design.n();
    let inv_big = 1.0 / big as f64;
    let pairs = sorted.len() * estimators.len();
    let chunks = replicates.div_ceil(CHUNK);

    let partial: Vec<ChunkAgg> = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<ChunkAgg> {
            let mut stats = vec![Welford::default(); pairs];
            let mut counts = track_inclusion.then(|| vec![0u64; big]);
            for b in (c * CHUNK)..((c + 1) * CHUNK).min(replicates) {
                let mut rng = RngStream::new(master_seed, replicate_stream(n, b));
                let sel = sampler.draw(&mut rng)?;
                let units = sel.units_sorted();
                for (vi, ys) in sorted.iter().enumerate() {
                    for (ei, est) in estimators.iter().enumerate() {
                        let total = match est {
                            EstimatorKind::Ht => ht_total_sorted(units, ys, design.pi()),
                            EstimatorKind::Cht => cht_total_sorted(units, ys, sel.split().pi0()),
                        };
                        stats[vi * estimators.len() + ei].push(total * inv_big);
                    }
                }
                if let Some(counts) = counts.as_mut() {
                    for &u in sel.units_original() {
                        counts[u] += 1;
                    }
                }
            }
            Ok(ChunkAgg { stats, counts })
        })
        .collect::<Result<_>>()?;

    let mut stats = vec![Welford::default(); pairs];
    let mut counts = track_inclusion.then(|| vec![0u64; big]);
    for agg in &partial {
        for (acc, s) in stats.iter_mut().zip(&agg.stats) {
            acc.merge(s);
        }
        if let (Some(acc), Some(c)) = (counts.as_mut(), agg.counts.as_ref()) {
            for (a, v) in acc.iter_mut().zip(c) {
                *a += v;
            }
        }
    }
    let mut cells = Vec::with_capacity(pairs);
    for (vi, (name, _)) in variables.iter().enumerate() {
        for (ei, &est) in estimators.iter().enumerate() {
            cells.push(CellStats {
                variable: name.clone(),
                estimator: est,
                stats: stats[vi * estimators.len() + ei],
            });
        }
    }
    Ok(DesignRun { cells, counts })
}

/// Runs every grid point of the scenario and fills `V_MC` / `RV_MC`.
pub fn run_scenario(scenario: &Scenario) -> Result<McReport> {
    scenario.validate()?;
    let mut cells: Vec<McCell> = Vec::new();
    let mut inclusion = Vec::new();
    for &n in &scenario.n_grid {
        let pop = scenario.population(n)?;
        let design = pps_probabilities(&pop.x, n)?;
        let pi_orig = design.pi_original();
        let variables: Vec<(String, Vec<f64>)> = scenario
            .variables
            .iter()
            .map(|v| {
                let values = match v {
                    VariableSpec::Model(m) => pop.variable(*m).to_vec(),
                    VariableSpec::InclusionProbability => pi_orig.clone(),
                };
                (v.name().to_string(), values)
            })
            .collect();
        let run = run_design(
            &design,
            &variables,
            &scenario.estimators,
            scenario.replicates,
            scenario.master_seed,
            scenario.variant,
            scenario.track_inclusion,
        )?;
        for c in run.cells {
            let v_mc = c.stats.variance();
            let rv_mc = cells
                .iter()
                .rev()
                .find(|p| p.variable == c.variable && p.estimator == c.estimator)
                .and_then(|p| (p.v_mc > 0.0).then(|| v_mc / p.v_mc));
            cells.push(McCell {
                n,
                population_size: pop.size(),
                variable: c.variable,
                estimator: c.estimator,
                mean: c.stats.mean(),
                v_mc,
                rv_mc,
            });
        }
        if let Some(counts) = run.counts {
            let b = scenario.replicates as f64;
            inclusion.push(InclusionFrequencies {
                n,
                frequencies: counts.iter().map(|&c| c as f64 / b).collect(),
            });
        }
    }
    Ok(McReport { cells, inclusion })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InclusionMethod {
    MonteCarlo {
        replicates: usize,
        seed: u64,
    },
    /// Exact frequencies from the enumeration oracle (small designs only).
    Enumeration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionRow {
    pub unit: usize,
    pub pi: f64,
    pub freq: f64,
    pub z_score: f64,
    pub flagged: bool,
}

/// Compares selection frequencies with the target probabilities,
/// `z = (freq - pi) sqrt(B / (pi (1 - pi)))`, flagging `|z| > 4`.
/// Rows follow the caller's unit order.
pub fn empirical_inclusion_check(
    design: &DesignSpec,
    variant: Variant,
    method: InclusionMethod,
) -> Result<Vec<InclusionRow>> {
    let pi = design.pi_original();
    let (freq, replicates) = match method {
        InclusionMethod::Enumeration => {
            if design.population() > MAX_ENUM_N {
                return Err(HvError::TooLarge {
                    population: design.population(),
                    cap: MAX_ENUM_N,
                });
            }
            let marg = enumerate_distribution(design, variant)?.marginals();
            let mut out = vec![0.0; marg.len()];
            for (s, &orig) in design.perm().iter().enumerate() {
                out[orig] = marg[s];
            }
            (out, None)
        }
        InclusionMethod::MonteCarlo { replicates, seed } => {
            let worst = pi.iter().map(|p| p * (1.0 - p)).fold(f64::INFINITY, f64::min) * replicates as f64;
            if worst < 25.0 {
                return Err(HvError::TooFewReplicates { value: worst });
            }
            let run = run_design(design, &[], &[], replicates, seed, variant, true)?;
            let counts = run.counts.expect("tracking requested");
            let b = replicates as f64;
            (counts.iter().map(|&c| c as f64 / b).collect(), Some(b))
        }
    };
    Ok(pi
        .iter()
        .zip(freq)
        .enumerate()
        .map(|(unit, (&p, f))| {
            let z_score = match replicates {
                Some(b) => (f - p) * (b / (p * (1.0 - p))).sqrt(),
                None => 0.0,
            };
            InclusionRow {
                unit,
                pi: p,
                freq: f,
                z_score,
                flagged: z_score.abs() > 4.0,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::validate_design;

    fn two_pass(xs: &[f64]) -> f64 {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
    }

    #[test]
    fn welford_matches_two_pass() {
        let mut r = RngStream::new(3, 3);
        let xs: Vec<f64> = (0..10_000).map(|_| 20.0 + r.uniform()).collect();
        let mut whole = Welford::default();
        xs.iter().for_each(|&x| whole.push(x));
        let mut merged = Welford::default();
        for chunk in xs.chunks(777) {
            let mut w = Welford::default();
            chunk.iter().for_each(|&x| w.push(x));
            merged.merge(&w);
        }
        let exact = two_pass(&xs);
        assert!((whole.variance() - exact).abs() <= 1e-12 * exact);
        assert!((merged.variance() - exact).abs() <= 1e-12 * exact);
    }

    #[test]
    fn constant_values_have_zero_variance() {
        let mut w = Welford::default();
        for _ in 0..1000 {
            w.push(0.2);
        }
        assert_eq!(w.variance(), 0.0);
    }

    #[test]
    fn ht_of_pi_has_zero_variance() {
        let mut sc = Scenario::standard(SizeDistribution::GAMMA, 80, 300, 5);
        sc.n_grid = vec![20, 40, 80];
        sc.variables = vec![VariableSpec::InclusionProbability];
        sc.estimators = vec![EstimatorKind::Ht];
        let rep = run_scenario(&sc).unwrap();
        assert_eq!(rep.cells.len(), 3);
        for c in &rep.cells {
            assert_eq!(c.v_mc, 0.0);
            assert_eq!(c.rv_mc, None);
        }
    }

    #[test]
    fn identical_replicates_have_zero_variance() {
        // single replicate stream reused: every sample is the same
        let d = validate_design(&[0.2, 0.3, 0.5, 0.6, 0.4]).unwrap();
        let y = vec![1.0, 5.0, -2.0, 3.0, 8.0];
        let sampler = Sampler::new(&d, Variant::Sequential).unwrap();
        let mut w = Welford::default();
        for _ in 0..100 {
            let sel = sampler.draw(&mut RngStream::new(11, 0)).unwrap();
            w.push(ht_total_sorted(sel.units_sorted(), &d.to_sorted(&y), d.pi()));
        }
        assert_eq!(w.variance(), 0.0);
    }

    #[test]
    fn report_is_deterministic_and_ratios_consistent() {
        let mut sc = Scenario::standard(SizeDistribution::LOG_NORMAL, 60, 700, 9);
        sc.n_grid = vec![20, 40, 60];
        let a = run_scenario(&sc).unwrap();
        let b = run_scenario(&sc).unwrap();
        assert_eq!(a, b);
        for c in &a.cells {
            assert!(c.v_mc >= 0.0);
            if let Some(rv) = c.rv_mc {
                let prev = a.cell(c.n - 20, &c.variable, c.estimator).unwrap();
                assert!((rv - c.v_mc / prev.v_mc).abs() <= 1e-12 * rv);
            } else {
                assert_eq!(c.n, 20);
            }
        }
    }

    #[test]
    fn adding_grid_points_keeps_cells() {
        let mut sc = Scenario::standard(SizeDistribution::GAMMA, 60, 600, 1);
        sc.n_grid = vec![20, 60];
        let a = run_scenario(&sc).unwrap();
        sc.n_grid = vec![20, 40, 60];
        let b = run_scenario(&sc).unwrap();
        for c in a.cells.iter().filter(|c| c.n == 60) {
            let d = b.cell(60, &c.variable, c.estimator).unwrap();
            assert_eq!(c.v_mc, d.v_mc);
        }
    }

    #[test]
    fn scenario_validation() {
        let mut sc = Scenario::standard(SizeDistribution::GAMMA, 800, 1, 1);
        assert!(matches!(run_scenario(&sc), Err(HvError::InvalidConfig(_))));
        sc.replicates = 10;
        sc.n_grid = vec![800, 400];
        assert!(matches!(run_scenario(&sc), Err(HvError::InfeasibleGrid(_))));
        sc.n_grid = vec![400];
        sc.sampling_fraction = 1.0;
        assert!(matches!(run_scenario(&sc), Err(HvError::InfeasibleGrid(_))));
    }

    #[test]
    fn inclusion_check_guards_and_exact_mode() {
        let d = validate_design(&[0.5, 0.7, 0.8]).unwrap();
        assert!(matches!(
            empirical_inclusion_check(
                &d,
                Variant::Sequential,
                InclusionMethod::MonteCarlo {
                    replicates: 100,
                    seed: 1
                }
            ),
            Err(HvError::TooFewReplicates { .. })
        ));
        let rows = empirical_inclusion_check(&d, Variant::DrawByDraw, InclusionMethod::Enumeration).unwrap();
        for r in rows {
            assert!((r.freq - r.pi).abs() < 1e-12);
            assert!(!r.flagged);
        }
    }
}
