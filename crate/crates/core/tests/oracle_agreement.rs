mod common;

use common::{design_and_y, design_strategy};
use hv_core::estimators::{
    cht_conditional_variance, cht_total, ht_phase1_variance, ht_total, ht_variance_lower_bound, syg_variance, xi0,
};
use hv_core::inclusion::{conditional_joint, enumerate_distribution, unconditional_joint};
use hv_core::{phase1_deltas, split_probabilities, DesignSpec, SampleSelection, SplitOutcome, StudyVariable, Variant};
use hv_testkit::{self as oracle, Algorithm, Law};
use proptest::prelude::*;

const EXACT: f64 = 1e-12;
const MOMENT: f64 = 1e-10;

fn selection(design: &DesignSpec, split: &SplitOutcome, units: &[usize]) -> SampleSelection {
    SampleSelection::from_units(design, split.clone(), units.to_vec()).expect("oracle sample is admissible")
}

fn conditional_law(design: &DesignSpec, n_prime: usize) -> Law {
    oracle::conditional_law(design.pi(), design.n(), n_prime, Algorithm::DrawByDraw)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn split_quantities_match_formulas(d in design_strategy(3..=8)) {
        let want = oracle::deltas(d.pi(), d.n());
        let got = phase1_deltas(&d).unwrap();
        for (a, b) in got.iter().zip(&want) {
            prop_assert!((a - b).abs() < EXACT);
        }
        for np in 1..=d.n() {
            let s = split_probabilities(&d, np).unwrap();
            for (a, b) in s.pi0().iter().zip(oracle::pi0(d.pi(), d.n(), np)) {
                prop_assert!((a - b).abs() < EXACT);
            }
        }
    }

    #[test]
    fn enumerations_agree_with_reference(d in design_strategy(3..=8)) {
        let reference = oracle::law(d.pi(), d.n(), Algorithm::DrawByDraw);
        let reference_seq = oracle::law(d.pi(), d.n(), Algorithm::Sequential);
        prop_assert!(oracle::total_variation(&reference, &reference_seq) < EXACT);
        for variant in Variant::ALL {
            let dist = enumerate_distribution(&d, variant).unwrap();
            prop_assert!(oracle::total_variation(dist.entries(), &reference) < EXACT);
            prop_assert!(dist.entries().keys().all(|s| s.len() == d.n()));
            for (m, p) in dist.marginals().iter().zip(d.pi()) {
                prop_assert!((m - p).abs() < EXACT);
            }
        }
    }

    #[test]
    fn joint_matrices_match_enumeration(d in design_strategy(3..=8)) {
        let big = d.population();
        for np in 1..=d.n() {
            let split = split_probabilities(&d, np).unwrap();
            let m = conditional_joint(&split).unwrap();
            let want = oracle::second_moments(&conditional_law(&d, np), big);
            let pi0 = split.pi0();
            for k in 0..big {
                for l in 0..big {
                    prop_assert!((m.get(k, l) - want[k * big + l]).abs() < EXACT, "n'={np} ({k},{l})");
                    if k != l {
                        prop_assert!(m.get(k, l) <= pi0[k] * pi0[l] + EXACT);
                        if np >= 2 {
                            prop_assert!(m.get(k, l) > 0.0);
                        }
                    }
                }
            }
        }
        let u = unconditional_joint(&d).unwrap();
        let want = oracle::second_moments(&oracle::law(d.pi(), d.n(), Algorithm::Sequential), big);
        for k in 0..big {
            for l in 0..big {
                prop_assert!((u.get(k, l) - want[k * big + l]).abs() < EXACT);
                if k != l && d.n() >= 2 {
                    prop_assert!(u.get(k, l) > 0.0);
                }
            }
        }
    }

    #[test]
    fn fixed_size_identities(d in design_strategy(3..=10)) {
        prop_assert!(unconditional_joint(&d).unwrap().fixed_size_residual(d.n()) < MOMENT);
        for np in 1..=d.n() {
            let split = split_probabilities(&d, np).unwrap();
            let m = conditional_joint(&split).unwrap();
            prop_assert!(m.fixed_size_residual(d.n()) < MOMENT);
            let mass: f64 = split.pi0()[..split.n_big()].iter().sum();
            prop_assert!((mass - np as f64).abs() < MOMENT);
        }
    }

    #[test]
    fn ht_is_unbiased((d, y) in design_and_y(3..=8)) {
        let yv = StudyVariable::new(y.clone()).unwrap();
        let ys = yv.sorted(&d).unwrap();
        let t: f64 = y.iter().sum();
        let pi = d.pi();
        let (mean, var) = oracle::mean_var(&oracle::law(pi, d.n(), Algorithm::Sequential), |s| {
            s.iter().map(|&k| ys[k] / pi[k]).sum()
        });
        prop_assert!((mean - t).abs() < MOMENT * t.abs().max(1.0));

        // V(HT) = sum_i delta_i xi(0|i)^2 + E[V(HT | pi(0))]
        let delta = phase1_deltas(&d).unwrap();
        let mut within = 0.0;
        for (i, &w) in delta.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let split = split_probabilities(&d, i + 1).unwrap();
            let scaled: Vec<f64> = (0..d.population())
                .map(|orig| {
                    let s = d.rank_of()[orig];
                    y[orig] * split.pi0()[s] / pi[s]
                })
                .collect();
            let joint = conditional_joint(&split).unwrap();
            within += w * cht_conditional_variance(&split, &StudyVariable::new(scaled).unwrap(), &d, &joint).unwrap();
        }
        let between = ht_phase1_variance(&d, &yv).unwrap();
        prop_assert!((var - (between + within)).abs() < MOMENT * var.max(1.0), "{var} vs {between} + {within}");
        prop_assert!(var >= ht_variance_lower_bound(&d, &yv).unwrap() - EXACT);

        let mean_xi: f64 = delta
            .iter()
            .enumerate()
            .map(|(i, w)| w * xi0(&split_probabilities(&d, i + 1).unwrap(), &yv, &d).unwrap())
            .sum();
        prop_assert!(mean_xi.abs() < EXACT * t.abs().max(1.0) * 10.0);
    }

    #[test]
    fn cht_and_syg_conditional_moments((d, y) in design_and_y(3..=8)) {
        let yv = StudyVariable::new(y.clone()).unwrap();
        let t: f64 = y.iter().sum();
        for np in 1..=d.n() {
            let split = split_probabilities(&d, np).unwrap();
            let joint = conditional_joint(&split).unwrap();
            let law = conditional_law(&d, np);
            let (mean, var) = oracle::mean_var(&law, |s| cht_total(&selection(&d, &split, s), &yv, &d).unwrap().total);
            prop_assert!((mean - t).abs() < MOMENT * t.abs().max(1.0));
            let exact = cht_conditional_variance(&split, &yv, &d, &joint).unwrap();
            prop_assert!((exact - var).abs() < MOMENT * var.max(1.0));
            let mut expected_v = 0.0;
            for (s, p) in &law {
                let v = syg_variance(&selection(&d, &split, s), &yv, &d, &joint).unwrap();
                prop_assert!(v >= 0.0);
                expected_v += p * v;
            }
            if np >= 2 {
                prop_assert!((expected_v - var).abs() < MOMENT * var.max(1.0), "n'={np}: {expected_v} vs {var}");
            }
        }
    }

    #[test]
    fn ht_estimates_match_direct_sums((d, y) in design_and_y(3..=8)) {
        let yv = StudyVariable::new(y.clone()).unwrap();
        let split = split_probabilities(&d, d.n()).unwrap();
        let units: Vec<usize> = (d.population() - d.n()..d.population()).collect();
        let sel = selection(&d, &split, &units);
        let est = ht_total(&sel, &yv, &d).unwrap();
        let direct: f64 = sel.units_original().iter().map(|&k| y[k] / d.pi_original()[k]).sum();
        prop_assert!((est.total - direct).abs() < EXACT * direct.abs().max(1.0));
        prop_assert!((est.mean * d.population() as f64 - est.total).abs() < 1e-9 * est.total.abs().max(1.0));
    }
}

#[test]
fn worked_three_unit_values() {
    let d = hv_core::validate_design(&[0.5, 0.7, 0.8]).unwrap();
    let c = conditional_joint(&split_probabilities(&d, 2).unwrap()).unwrap();
    let u = unconditional_joint(&d).unwrap();
    for (got, want) in [
        (c.get(0, 1), 5.0 / 19.0),
        (c.get(0, 2), 5.0 / 19.0),
        (c.get(1, 2), 9.0 / 19.0),
        (u.get(0, 1), 0.2),
        (u.get(0, 2), 0.3),
        (u.get(1, 2), 0.5),
    ] {
        assert!((got - want).abs() < EXACT, "{got} vs {want}");
    }
}
