#![allow(dead_code)]

use hv_core::{validate_design, DesignSpec};
use hv_testkit::integer_sum_design;
use proptest::prelude::*;

/// Valid designs with `N` in `lens`, optionally with tied probabilities.
pub fn design_strategy(lens: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = DesignSpec> {
    (prop::collection::vec(0.02f64..0.98, lens), any::<bool>()).prop_map(|(mut raw, tie)| {
        if tie {
            for r in raw.iter_mut() {
                *r = (*r * 5.0).round().clamp(1.0, 4.0) / 5.0;
            }
        }
        let (pi, _) = integer_sum_design(&raw, 0.01);
        validate_design(&pi).expect("generated design is valid")
    })
}

/// A design together with a study variable of matching length.
pub fn design_and_y(lens: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = (DesignSpec, Vec<f64>)> {
    design_strategy(lens).prop_flat_map(|d| {
        let big = d.population();
        (Just(d), prop::collection::vec(-5.0f64..5.0, big))
    })
}

/// Deterministic battery of `count` designs with `N` log-uniform in `[3, max_n]`.
pub fn battery(count: usize, max_n: usize, seed: u64) -> Vec<DesignSpec> {
    hv_testkit::battery(count, 3, max_n, seed)
        .into_iter()
        .map(|(pi, _)| validate_design(&pi).expect("generated design is valid"))
        .collect()
}
