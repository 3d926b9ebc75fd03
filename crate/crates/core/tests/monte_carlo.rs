use hv_core::datagen::{generate_population, pps_probabilities, PopulationConfig, SizeDistribution};
use hv_core::estimators::ht_total_sorted;
use hv_core::mc::{
    empirical_inclusion_check, replicate_stream, run_design, run_scenario, InclusionMethod, Scenario, VariableSpec,
};
use hv_core::rng::RngStream;
use hv_core::{phase1_split, validate_design, EstimatorKind, HvError, Sampler, Variant};

#[test]
fn phase_one_frequency() {
    let d = validate_design(&[0.5, 0.7, 0.8]).unwrap();
    let draws = 1_000_000u64;
    let mut rng = RngStream::new(3, 0);
    let ones = (0..draws)
        .filter(|_| phase1_split(&d, &mut rng).unwrap().n_prime() == 1)
        .count() as f64;
    let freq = ones / draws as f64;
    let se = (0.24f64 * 0.76 / draws as f64).sqrt();
    assert!((freq - 0.24).abs() < 4.0 * se, "freq {freq}");
}

#[test]
fn inclusion_frequencies_small_design() {
    let d = validate_design(&[0.5, 0.7, 0.8]).unwrap();
    for variant in Variant::ALL {
        let rows = empirical_inclusion_check(
            &d,
            variant,
            InclusionMethod::MonteCarlo {
                replicates: 1_000_000,
                seed: 5,
            },
        )
        .unwrap();
        assert!(rows.iter().all(|r| !r.flagged), "{rows:?}");
        let exact = empirical_inclusion_check(&d, variant, InclusionMethod::Enumeration).unwrap();
        for r in exact {
            assert!((r.freq - r.pi).abs() < 1e-12);
        }
    }
    assert!(matches!(
        empirical_inclusion_check(
            &d,
            Variant::Sequential,
            InclusionMethod::MonteCarlo {
                replicates: 50,
                seed: 1
            }
        ),
        Err(HvError::TooFewReplicates { .. })
    ));
}

fn small_scenario() -> Scenario {
    let mut sc = Scenario::standard(SizeDistribution::GAMMA, 80, 1500, 9);
    sc.n_grid = vec![20, 40, 60];
    sc
}

#[test]
fn report_is_independent_of_thread_count() {
    let sc = small_scenario();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_scenario(&sc).unwrap())
    };
    let a = run(1);
    let b = run(3);
    assert_eq!(a, b);
    for (x, y) in a.cells.iter().zip(&b.cells) {
        assert_eq!(x.v_mc.to_bits(), y.v_mc.to_bits());
    }
}

#[test]
fn variance_ratios_are_stored_quotients() {
    let report = run_scenario(&small_scenario()).unwrap();
    for c in &report.cells {
        assert!(c.v_mc >= 0.0);
        match c.rv_mc {
            None => assert_eq!(c.n, 20),
            Some(rv) => {
                let prev = report.cell(c.n - 20, &c.variable, c.estimator).unwrap();
                assert!((rv - c.v_mc / prev.v_mc).abs() <= 1e-12 * rv.abs());
            }
        }
    }
}

#[test]
fn streaming_variance_matches_two_pass() {
    let pop = generate_population(&PopulationConfig::new(SizeDistribution::LOG_NORMAL, 300, 4)).unwrap();
    let d = pps_probabilities(&pop.x, 60).unwrap();
    let y = pop.y[1].clone();
    let b = 3000;
    let run = run_design(
        &d,
        &[("q".into(), y.clone())],
        &[EstimatorKind::Ht],
        b,
        77,
        Variant::Sequential,
        false,
    )
    .unwrap();
    let ys = d.to_sorted(&y);
    let sampler = Sampler::new(&d, Variant::Sequential).unwrap();
    let values: Vec<f64> = (0..b)
        .map(|r| {
            let sel = sampler
                .draw(&mut RngStream::new(77, replicate_stream(d.n(), r)))
                .unwrap();
            ht_total_sorted(sel.units_sorted(), &ys, d.pi()) / d.population() as f64
        })
        .collect();
    let mean = values.iter().sum::<f64>() / b as f64;
    let two_pass = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / b as f64;
    let stats = &run.cells[0].stats;
    assert!((stats.variance() - two_pass).abs() <= 1e-12 * two_pass);
    assert!((stats.mean() - mean).abs() <= 1e-12 * mean.abs());
}

#[test]
fn ht_of_pi_has_no_spread() {
    let mut sc = small_scenario();
    sc.variables = vec![VariableSpec::InclusionProbability];
    sc.estimators = vec![EstimatorKind::Ht];
    let report = run_scenario(&sc).unwrap();
    for c in &report.cells {
        assert_eq!(c.v_mc, 0.0);
    }
}
