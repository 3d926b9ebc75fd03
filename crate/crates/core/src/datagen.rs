//! Synthetic populations with a size measure `x = offset + eta` and four
//! study variables, plus PPS inclusion probabilities.
//!
//! The study-variable coefficients are calibrated on each generated
//! population: the intercept fixes the mean of the noiseless signal, the
//! slope fixes its standard deviation, and the noise level tops the total
//! variance up to the target.

use rand_distr::{Distribution, Gamma, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::design::{validate_design, DesignSpec};
use crate::error::{HvError, Result};
use crate::rng::{mix_seed, RngStream};

const POPULATION_TAG: u64 = 0x706f_7075_6c61_7465;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum SizeDistribution {
    Gamma { shape: f64, scale: f64, offset: f64 },
    LogNormal { meanlog: f64, sdlog: f64, offset: f64 },
}

impl SizeDistribution {
    /// Gamma(4, 0.5) shifted by 8: mean 10, sd 1.
    pub const GAMMA: SizeDistribution = SizeDistribution::Gamma {
        shape: 4.0,
        scale: 0.5,
        offset: 8.0,
    };
    /// Log-normal(1.0, 0.35) shifted by 7: mean about 9.9, sd about 1.04.
    pub const LOG_NORMAL: SizeDistribution = SizeDistribution::LogNormal {
        meanlog: 1.0,
        sdlog: 0.35,
        offset: 7.0,
    };

    pub fn name(&self) -> &'static str {
        match self {
            SizeDistribution::Gamma { .. } => "gamma",
            SizeDistribution::LogNormal { .. } => "lognormal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YModel {
    Linear,
    Quadratic,
    Exponential,
    Bump,
}

impl YModel {
    pub const ALL: [YModel; 4] = [YModel::Linear, YModel::Quadratic, YModel::Exponential, YModel::Bump];

    pub fn name(self) -> &'static str {
        match self {
            YModel::Linear => "linear",
            YModel::Quadratic => "quadratic",
            YModel::Exponential => "exponential",
            YModel::Bump => "bump",
        }
    }

    /// Noiseless signal at centred size `z = x - mu_x`.
    pub fn signal(self, c: &ModelCoefficients, z: f64) -> f64 {
        match self {
            YModel::Linear => c.intercept + c.slope * z,
            YModel::Quadratic => c.intercept + c.slope * z * z,
            YModel::Exponential => (c.intercept + c.slope * z).exp(),
            YModel::Bump => c.intercept + c.slope * z * z - c.bump_depth * (-c.bump_width * z * z).exp(),
        }
    }

    /// `signal + sigma * eps` for every unit.
    pub fn apply(self, c: &ModelCoefficients, x: &[f64], mu_x: f64, eps: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(eps)
            .map(|(&xk, &e)| self.signal(c, xk - mu_x) + c.sigma * e)
            .collect()
    }
}

/// `alpha_{j0}`, `alpha_{j1}`, `alpha_{42}`, `alpha_{43}` and `sigma_j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelCoefficients {
    pub intercept: f64,
    pub slope: f64,
    pub bump_depth: f64,
    pub bump_width: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationConfig {
    pub size_distribution: SizeDistribution,
    pub population_size: usize,
    pub target_y_mean: f64,
    pub target_y_sd: f64,
    /// Standard deviation given to the noiseless part of each study variable.
    pub signal_sd: f64,
    pub bump_depth: f64,
    pub bump_width: f64,
    pub seed: u64,
}

impl PopulationConfig {
    pub fn new(size_distribution: SizeDistribution, population_size: usize, seed: u64) -> Self {
        Self {
            size_distribution,
            population_size,
            target_y_mean: 20.0,
            target_y_sd: 3.0,
            signal_sd: 2.6,
            bump_depth: 3.0,
            bump_width: 1.0,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.population_size < 10 {
            return Err(HvError::InvalidConfig(format!(
                "population_size must be at least 10, got {}",
                self.population_size
            )));
        }
        if !(self.signal_sd >= 0.0 && self.signal_sd <= self.target_y_sd) {
            return Err(HvError::InvalidConfig("signal_sd must lie in [0, target_y_sd]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub x: Vec<f64>,
    pub y: [Vec<f64>; 4],
    pub mu_x: f64,
    pub coefficients: [ModelCoefficients; 4],
}

impl Population {
    pub fn size(&self) -> usize {
        self.x.len()
    }

    pub fn variable(&self, model: YModel) -> &[f64] {
        &self.y[model as usize]
    }

    pub fn coefficients_of(&self, model: YModel) -> &ModelCoefficients {
        &self.coefficients[model as usize]
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let m = values.iter().sum::<f64>() / values.len() as f64;
    let v = values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / values.len() as f64;
    (m, v.sqrt())
}

/// Smallest root of an increasing function on `[lo, hi]` by bisection.
fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 * hi.abs().max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn calibrate(model: YModel, z: &[f64], config: &PopulationConfig) -> ModelCoefficients {
    let target = config.signal_sd;
    let sigma = (config.target_y_sd.powi(2) - target * target).max(0.0).sqrt();
    let mut c = ModelCoefficients {
        intercept: 0.0,
        slope: 0.0,
        bump_depth: 0.0,
        bump_width: 0.0,
        sigma,
    };
    let shape_sd = |c: &ModelCoefficients| {
        let s: Vec<f64> = z.iter().map(|&zk| model.signal(c, zk)).collect();
        mean_sd(&s)
    };
    match model {
        YModel::Linear | YModel::Quadratic => {
            c.slope = 1.0;
            let (_, sd) = shape_sd(&c);
            c.slope = if sd > 0.0 { target / sd } else { 0.0 };
        }
        YModel::Exponential => {
            // the coefficient of variation of exp(slope z) does not depend on
            // the intercept, so solve it first
            let ratio = target / config.target_y_mean;
            c.slope = bisect(0.0, 10.0, |a| {
                let (m, sd) = shape_sd(&ModelCoefficients { slope: a, ..c });
                sd / m - ratio
            });
        }
        YModel::Bump => {
            c.bump_depth = config.bump_depth;
            c.bump_width = config.bump_width;
            let base = shape_sd(&c).1;
            if base < target {
                c.slope = bisect(0.0, 100.0, |a| {
                    shape_sd(&ModelCoefficients { slope: a, ..c }).1 - target
                });
            }
        }
    }
    let (m, _) = shape_sd(&c);
    match model {
        YModel::Exponential => c.intercept = (config.target_y_mean / m).ln(),
        _ => c.intercept = config.target_y_mean - m,
    }
    c
}

/// Generates one population. Streams: 0 for `eta`, `1 + j` for the noise
/// of study variable `j`; all keyed by a seed derived from `config.seed`.
pub fn generate_population(config: &PopulationConfig) -> Result<Population> {
    config.validate()?;
    let big = config.population_size;
    let key = mix_seed(config.seed, POPULATION_TAG);
    let mut rng = RngStream::new(key, 0);
    let x: Vec<f64> = match config.size_distribution {
        SizeDistribution::Gamma { shape, scale, offset } => {
            let dist = Gamma::new(shape, scale).map_err(|e| HvError::InvalidConfig(format!("gamma: {e}")))?;
            (0..big).map(|_| offset + dist.sample(&mut rng)).collect()
        }
        SizeDistribution::LogNormal { meanlog, sdlog, offset } => {
            let dist = LogNormal::new(meanlog, sdlog).map_err(|e| HvError::InvalidConfig(format!("lognormal: {e}")))?;
            (0..big).map(|_| offset + dist.sample(&mut rng)).collect()
        }
    };
    if let Some(index) = x.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(HvError::NonPositiveSize { index, value: x[index] });
    }
    let mu_x = x.iter().sum::<f64>() / big as f64;
    let z: Vec<f64> = x.iter().map(|&v| v - mu_x).collect();

    let mut y: [Vec<f64>; 4] = Default::default();
    let mut coefficients = [ModelCoefficients {
        intercept: 0.0,
        slope: 0.0,
        bump_depth: 0.0,
        bump_width: 0.0,
        sigma: 0.0,
    }; 4];
    for model in YModel::ALL {
        let j = model as usize;
        let c = calibrate(model, &z, config);
        let mut noise = RngStream::new(key, 1 + j as u64);
        let eps: Vec<f64> = (0..big).map(|_| StandardNormal.sample(&mut noise)).collect();
        y[j] = model.apply(&c, &x, mu_x, &eps);
        coefficients[j] = c;
    }
    Ok(Population {
        x,
        y,
        mu_x,
        coefficients,
    })
}

/// `pi_k = n x_k / sum_l x_l`, validated. No capping: any unit reaching 1
/// is reported as saturated.
pub fn pps_probabilities(x: &[f64], n: usize) -> Result<DesignSpec> {
    if let Some(index) = x.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(HvError::NonPositiveSize { index, value: x[index] });
    }
    if n == 0 || n >= x.len() {
        return Err(HvError::DegenerateSize { n, population: x.len() });
    }
    let total: f64 = x.iter().sum();
    let nf = n as f64;
    let pi: Vec<f64> = x.iter().map(|&v| nf * (v / total)).collect();
    let saturated: Vec<usize> = pi
        .iter()
        .enumerate()
        .filter(|(_, &p)| p >= 1.0)
        .map(|(i, _)| i)
        .collect();
    if !saturated.is_empty() {
        return Err(HvError::Saturated { indices: saturated });
    }
    validate_design(&pi)
}
