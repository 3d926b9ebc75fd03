//! Gap indicators on the `n` largest inclusion probabilities.

use serde::{Deserialize, Serialize};

use crate::design::DesignSpec;
use crate::error::{HvError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignProfile {
    pub population: usize,
    pub n: usize,
    /// `(1/n) sum_{i=1}^{n-1} (n - i) gap_i`
    pub d1: f64,
    /// `N * max_top_gap`
    pub d2: f64,
    /// `ln(n) * max_top_gap`
    pub d3: f64,
    /// `min_k N pi_k / n`
    pub min_scaled_pi: f64,
    /// `max_k N pi_k / n`
    pub max_scaled_pi: f64,
    pub sampling_fraction: f64,
    /// `max_{i=1..n-1} pi_{N-n+i+1} - pi_{N-n+i}`
    pub max_top_gap: f64,
}

pub fn profile_design(design: &DesignSpec) -> Result<DesignProfile> {
    let n = design.n();
    if n < 2 {
        return Err(HvError::TooSmall { n });
    }
    let big = design.population();
    let pi = design.pi();
    // gaps between consecutive members of the top-n block (excluding pi_{N+1})
    let gaps: Vec<f64> = pi[big - n..].windows(2).map(|w| w[1] - w[0]).collect();
    let nf = n as f64;
    let d1 = gaps
        .iter()
        .enumerate()
        .map(|(idx, g)| (nf - (idx + 1) as f64) * g)
        .sum::<f64>()
        / nf;
    let max_top_gap = gaps.iter().copied().fold(0.0, f64::max);
    let scale = big as f64 / nf;
    Ok(DesignProfile {
        population: big,
        n,
        d1,
        d2: big as f64 * max_top_gap,
        d3: nf.ln() * max_top_gap,
        min_scaled_pi: pi[0] * scale,
        max_scaled_pi: pi[big - 1] * scale,
        sampling_fraction: nf / big as f64,
        max_top_gap,
    })
}

/// One profile row per design, in the order given.
pub fn indicator_curve(designs: &[DesignSpec]) -> Result<Vec<DesignProfile>> {
    designs.iter().map(profile_design).collect()
}
