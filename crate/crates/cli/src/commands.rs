use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Result};
use clap::Parser;
use serde::Serialize;
use serde_json::json;

use hv_core::datagen::{generate_population, pps_probabilities, PopulationConfig, SizeDistribution, YModel};
use hv_core::diagnostics::{indicator_curve, profile_design, DesignProfile};
use hv_core::estimators::{cht_total, cht_total_with_variance, ht_total};
use hv_core::inclusion::{
    conditional_joint_for, enumerate_distribution_capped, moments_from_distribution, unconditional_joint, MAX_ENUM_N,
};
use hv_core::mc::{run_scenario, Scenario};
use hv_core::{hv_sample, split_probabilities, EstimatorKind, RngStream, SampleSelection, StudyVariable, Variant};

use crate::io::{align, num, read_design, read_keyed, validation, write_json, writer, LoadedDesign};
use crate::manifest::{self, ManifestBuilder};
use crate::{
    Cli, Command, DesignInput, DiagnosticsArgs, EnumerateArgs, EstimateArgs, Failure, GenerateArgs, JointArg,
    ProbsArgs, RecipeArg, ReplayArgs, SampleArgs, SimulateArgs,
};

pub fn run(args: &[String]) -> Result<()> {
    let cli = Cli::try_parse_from(std::iter::once("hvsample".to_string()).chain(args.iter().cloned()))?;
    match cli.command {
        Command::Sample(a) => sample(a, args),
        Command::Probs(a) => probs(a, args),
        Command::Estimate(a) => estimate(a, args),
        Command::Diagnostics(a) => diagnostics(a, args),
        Command::Generate(a) => generate(a, args),
        Command::Simulate(a) => simulate(a, args),
        Command::Enumerate(a) => enumerate(a, args),
        Command::Replay(a) => replay(a),
    }
}

fn manifest_path(explicit: &Option<PathBuf>, out: &Path) -> PathBuf {
    explicit.clone().unwrap_or_else(|| manifest::default_path(out))
}

fn load(input: &DesignInput) -> Result<LoadedDesign> {
    read_design(&input.pi, input.pps)
}

fn recipe(r: RecipeArg) -> SizeDistribution {
    match r {
        RecipeArg::Gamma => SizeDistribution::GAMMA,
        RecipeArg::Lognormal => SizeDistribution::LOG_NORMAL,
    }
}

fn parse_grid(spec: &str) -> Result<Vec<usize>> {
    let bad = || Failure::Usage(format!("invalid --n-grid `{spec}`; use start:end:step or a comma list"));
    let grid: Vec<usize> = if spec.contains(':') {
        let parts: Vec<usize> = spec
            .split(':')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        match parts[..] {
            [start, end, step] if step > 0 && start <= end => (start..=end).step_by(step).collect(),
            _ => bail!(bad()),
        }
    } else {
        spec.split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?
    };
    if grid.is_empty() {
        bail!(bad());
    }
    Ok(grid)
}

fn sample(a: SampleArgs, argv: &[String]) -> Result<()> {
    let loaded = load(&a.design)?;
    let mut rng = RngStream::new(a.seed, a.stream);
    let sel = hv_sample(&loaded.design, &mut rng, a.variant.into()).map_err(|e| validation(e, &loaded.ids))?;
    let pi = loaded.design.pi_original();
    let rank = loaded.design.rank_of();
    let pi0 = sel.split().pi0();
    let mut w = writer(&a.out)?;
    w.write_record(["unit_id", "pi", "pi0", "in_sample"])?;
    for &u in sel.units_original() {
        w.write_record([loaded.ids[u].clone(), num(pi[u]), num(pi0[rank[u]]), "1".into()])?;
    }
    w.flush()?;
    drop(w);

    let mut m = ManifestBuilder::new("sample", argv);
    m.inputs.push(a.design.pi.clone());
    m.seeds = vec![a.seed, a.stream];
    m.outputs.push(a.out.clone());
    m.details = json!({ "n_prime": sel.split().n_prime(), "variant": Variant::from(a.variant).name() });
    m.write(&manifest_path(&a.manifest, &a.out))?;
    Ok(())
}

fn write_matrix(path: &Path, ids: &[String], get: impl Fn(usize, usize) -> f64) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["row", "col", "value"])?;
    for (k, rid) in ids.iter().enumerate() {
        for (l, cid) in ids.iter().enumerate() {
            w.write_record([rid.as_str(), cid.as_str(), &num(get(k, l))])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn probs(a: ProbsArgs, argv: &[String]) -> Result<()> {
    let loaded = load(&a.design)?;
    let design = &loaded.design;
    let ids = &loaded.ids;
    let mut details = json!({ "joint": format!("{:?}", a.joint).to_lowercase() });
    match a.joint {
        JointArg::First => {
            let pi = design.pi_original();
            let mut w = writer(&a.out)?;
            w.write_record(["unit_id", "pi"])?;
            for (id, p) in ids.iter().zip(pi) {
                w.write_record([id.as_str(), &num(p)])?;
            }
            w.flush()?;
        }
        JointArg::Conditional => {
            let Some(np) = a.nprime else {
                bail!(Failure::Usage("--joint conditional requires --nprime".into()));
            };
            let m = conditional_joint_for(design, np).map_err(|e| validation(e, ids))?;
            let m = m.to_original(design.perm());
            write_matrix(&a.out, ids, |k, l| m.get(k, l))?;
            details["n_prime"] = json!(np);
        }
        JointArg::Unconditional => {
            let work = design.n() as u64 * (design.population() as u64).pow(2);
            if work > a.budget {
                eprintln!(
                    "warning: unconditional joint probabilities need about {work} operations (budget {}); \
                     prefer --joint conditional for estimation",
                    a.budget
                );
            }
            let m = unconditional_joint(design).map_err(|e| validation(e, ids))?;
            let m = m.to_original(design.perm());
            write_matrix(&a.out, ids, |k, l| m.get(k, l))?;
        }
    }
    let mut mb = ManifestBuilder::new("probs", argv);
    mb.inputs.push(a.design.pi.clone());
    mb.outputs.push(a.out.clone());
    mb.details = details;
    mb.write(&manifest_path(&a.manifest, &a.out))?;
    Ok(())
}

#[derive(Serialize)]
struct EstimateRecord {
    estimator: EstimatorKind,
    total: f64,
    mean: f64,
    variance_estimate: Option<f64>,
    n_prime: usize,
    seed: Option<u64>,
}

fn read_selection(path: &Path, loaded: &LoadedDesign) -> Result<SampleSelection> {
    let design = &loaded.design;
    let (ids, pi0_values) = read_keyed(path, "pi0")?;
    let n_prime = pi0_values.iter().filter(|&&p| p < 1.0).count();
    let split = split_probabilities(design, n_prime).map_err(|e| validation(e, &loaded.ids))?;
    let rank = design.rank_of();
    let mut units = Vec::with_capacity(ids.len());
    for (id, p0) in ids.iter().zip(&pi0_values) {
        let Some(orig) = loaded.ids.iter().position(|d| d == id) else {
            bail!(Failure::Validation(format!("sample: unit {id} is not in the design")));
        };
        let s = rank[orig];
        let expect = split.pi0()[s];
        if (expect - p0).abs() > 1e-12 * expect.max(1.0) {
            bail!(Failure::Validation(format!(
                "sample: unit {id} has pi0 = {p0}, but n' = {n_prime} gives {expect}"
            )));
        }
        units.push(s);
    }
    units.sort_unstable();
    SampleSelection::from_units(design, split, units).map_err(|e| validation(e, &loaded.ids))
}

fn estimate(a: EstimateArgs, argv: &[String]) -> Result<()> {
    let loaded = load(&a.design)?;
    let design = &loaded.design;
    let sel = read_selection(&a.sample, &loaded)?;
    let (y_ids, y_raw) = read_keyed(&a.y, "y")?;
    let y = align(&loaded.ids, &y_ids, y_raw, "y")?;
    let y = StudyVariable::new(y).map_err(|e| validation(e, &loaded.ids))?;
    let joint = if a.syg {
        Some(hv_core::inclusion::conditional_joint(sel.split()).map_err(|e| validation(e, &loaded.ids))?)
    } else {
        None
    };
    let mut records = Vec::new();
    for kind in a.estimator.kinds() {
        let est = match (kind, &joint) {
            (EstimatorKind::Ht, _) => ht_total(&sel, &y, design),
            (EstimatorKind::Cht, Some(j)) => cht_total_with_variance(&sel, &y, design, j),
            (EstimatorKind::Cht, None) => cht_total(&sel, &y, design),
        }
        .map_err(|e| validation(e, &loaded.ids))?;
        records.push(EstimateRecord {
            estimator: est.estimator,
            total: est.total,
            mean: est.mean,
            variance_estimate: est.variance_estimate,
            n_prime: sel.split().n_prime(),
            seed: a.seed,
        });
    }
    write_json(&a.out, &records)?;
    let mut mb = ManifestBuilder::new("estimate", argv);
    mb.inputs = vec![a.design.pi.clone(), a.sample.clone(), a.y.clone()];
    mb.seeds = a.seed.into_iter().collect();
    mb.outputs.push(a.out.clone());
    mb.write(&manifest_path(&a.manifest, &a.out))?;
    Ok(())
}

fn write_profiles(path: &Path, rows: &[DesignProfile]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["n", "d1", "d2", "d3", "min_scaled_pi", "max_scaled_pi"])?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            num(r.d1),
            num(r.d2),
            num(r.d3),
            num(r.min_scaled_pi),
            num(r.max_scaled_pi),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn diagnostics(a: DiagnosticsArgs, argv: &[String]) -> Result<()> {
    let mut mb = ManifestBuilder::new("diagnostics", argv);
    let rows = match (&a.pi, a.recipe) {
        (Some(path), _) => {
            let loaded = read_design(path, a.pps)?;
            mb.inputs.push(path.clone());
            vec![profile_design(&loaded.design).map_err(|e| validation(e, &loaded.ids))?]
        }
        (None, Some(r)) => {
            let Some(seed) = a.seed else {
                bail!(Failure::Usage("--recipe requires --seed".into()));
            };
            let mut sc = Scenario::standard(recipe(r), 400, 2, seed);
            sc.n_grid = parse_grid(&a.n_grid)?;
            sc.sampling_fraction = a.fraction;
            let mut designs = Vec::new();
            for &n in &sc.n_grid {
                let pop = sc.population(n).map_err(|e| validation(e, &[]))?;
                designs.push(pps_probabilities(&pop.x, n).map_err(|e| validation(e, &[]))?);
            }
            mb.seeds.push(seed);
            indicator_curve(&designs).map_err(|e| validation(e, &[]))?
        }
        (None, None) => bail!(Failure::Usage("give either --pi or --recipe".into())),
    };
    write_profiles(&a.out, &rows)?;
    mb.outputs.push(a.out.clone());
    mb.write(&manifest_path(&a.manifest, &a.out))?;
    Ok(())
}

fn generate(a: GenerateArgs, argv: &[String]) -> Result<()> {
    let config = PopulationConfig::new(recipe(a.recipe), a.size, a.seed);
    let pop = generate_population(&config).map_err(|e| validation(e, &[]))?;
    let mut w = writer(&a.out)?;
    w.write_record(["unit_id", "x", "y1", "y2", "y3", "y4"])?;
    for k in 0..pop.size() {
        let mut rec = vec![(k + 1).to_string(), num(pop.x[k])];
        rec.extend(YModel::ALL.iter().map(|&m| num(pop.variable(m)[k])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    drop(w);

    let pop_manifest = a.population_manifest.clone().unwrap_or_else(|| {
        let mut s = a.out.as_os_str().to_owned();
        s.push(".population.json");
        PathBuf::from(s)
    });
    let coefficients: serde_json::Map<String, serde_json::Value> = YModel::ALL
        .iter()
        .map(|&m| (m.name().to_string(), json!(pop.coefficients_of(m))))
        .collect();
    write_json(
        &pop_manifest,
        &json!({
            "config": config,
            "coefficients": coefficients,
            "mu_x": pop.mu_x,
            "seed": a.seed,
            "columns": { "y1": "linear", "y2": "quadratic", "y3": "exponential", "y4": "bump" },
        }),
    )?;
    let mut mb = ManifestBuilder::new("generate", argv);
    mb.seeds.push(a.seed);
    mb.outputs = vec![a.out.clone(), pop_manifest];
    mb.write(&manifest_path(&a.manifest, &a.out))?;
    Ok(())
}

fn simulate(a: SimulateArgs, argv: &[String]) -> Result<()> {
    let mut sc = Scenario::standard(recipe(a.recipe), 400, a.replicates, a.seed);
    sc.n_grid = parse_grid(&a.n_grid)?;
    sc.sampling_fraction = a.fraction;
    sc.population_seed = a.population_seed.unwrap_or(a.seed);
    sc.variant = a.variant.into();
    sc.estimators = a.estimator.kinds();
    let started = Instant::now();
    let report = run_scenario(&sc).map_err(|e| validation(e, &[]))?;
    let wall = started.elapsed().as_secs_f64();

    let mut w = writer(&a.out)?;
    w.write_record(["n", "variable", "estimator", "v_mc", "rv_mc"])?;
    for c in &report.cells {
        w.write_record([
            c.n.to_string(),
            c.variable.clone(),
            c.estimator.name().to_string(),
            num(c.v_mc),
            c.rv_mc.map(num).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    drop(w);

    let mut mb = ManifestBuilder::new("simulate", argv);
    mb.seeds = vec![sc.master_seed, sc.population_seed];
    mb.outputs.push(a.out.clone());
    mb.wall_time_secs = Some(wall);
    mb.details = json!({ "scenario": sc });
    mb.write(&manifest_path(&a.manifest, &a.out))?;
    Ok(())
}

fn enum_cap() -> Result<usize> {
    match std::env::var("HV_MAX_ENUM_N") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("HV_MAX_ENUM_N must be an integer, got {v:?}")).into()),
        Err(_) => Ok(MAX_ENUM_N),
    }
}

fn enumerate(a: EnumerateArgs, argv: &[String]) -> Result<()> {
    let loaded = load(&a.design)?;
    let design = &loaded.design;
    let ids = &loaded.ids;
    let cap = enum_cap()?;
    let dbd = enumerate_distribution_capped(design, Variant::DrawByDraw, cap).map_err(|e| validation(e, ids))?;
    let seq = enumerate_distribution_capped(design, Variant::Sequential, cap).map_err(|e| validation(e, ids))?;

    let perm = design.perm();
    let dbd_orig = dbd.to_original(perm);
    let seq_orig = seq.to_original(perm);
    let mut keys: Vec<&Vec<usize>> = dbd_orig.keys().chain(seq_orig.keys()).collect();
    keys.sort();
    keys.dedup();
    let mut w = writer(&a.out)?;
    w.write_record(["units", "prob_draw_by_draw", "prob_sequential"])?;
    for key in keys {
        let label = key.iter().map(|&u| ids[u].as_str()).collect::<Vec<_>>().join(";");
        let p1 = dbd_orig.get(key).copied().unwrap_or(0.0);
        let p2 = seq_orig.get(key).copied().unwrap_or(0.0);
        w.write_record([label, num(p1), num(p2)])?;
    }
    w.flush()?;
    drop(w);

    let pi = design.pi();
    let m_dbd = moments_from_distribution(&dbd).diagonal();
    let m_seq = moments_from_distribution(&seq).diagonal();
    let marginal_error = (0..pi.len())
        .map(|s| (m_dbd[s] - pi[s]).abs().max((m_seq[s] - pi[s]).abs()))
        .fold(0.0, f64::max);
    let tv = dbd.total_variation(&seq);
    let marginals: Vec<_> = perm
        .iter()
        .enumerate()
        .map(|(s, &orig)| (orig, s))
        .collect::<std::collections::BTreeMap<_, _>>()
        .into_iter()
        .map(|(orig, s)| json!({ "unit_id": ids[orig], "pi": pi[s], "draw_by_draw": m_dbd[s], "sequential": m_seq[s] }))
        .collect();
    let report_path = a.report.clone().unwrap_or_else(|| {
        let mut s = a.out.as_os_str().to_owned();
        s.push(".report.json");
        PathBuf::from(s)
    });
    write_json(
        &report_path,
        &json!({
            "population": design.population(),
            "n": design.n(),
            "samples": dbd.entries().len().max(seq.entries().len()),
            "total_variation": tv,
            "max_marginal_error": marginal_error,
            "mass_draw_by_draw": dbd.total_mass(),
            "mass_sequential": seq.total_mass(),
            "marginals": marginals,
        }),
    )?;
    let mut mb = ManifestBuilder::new("enumerate", argv);
    mb.inputs.push(a.design.pi.clone());
    mb.outputs = vec![a.out.clone(), report_path];
    mb.write(&manifest_path(&a.manifest, &a.out))?;
    Ok(())
}

fn replay(a: ReplayArgs) -> Result<()> {
    let recorded = manifest::read(&a.manifest)?;
    if recorded.subcommand == "replay" {
        bail!(Failure::Usage("cannot replay a replay".into()));
    }
    for input in &recorded.inputs {
        let now = manifest::FileDigest::of(Path::new(&input.path))?;
        if now.sha256 != input.sha256 {
            bail!(Failure::Validation(format!(
                "input {} changed since the recorded run",
                input.path
            )));
        }
    }
    run(&recorded.argv)?;
    let mut mismatched = Vec::new();
    for out in &recorded.outputs {
        let now = manifest::FileDigest::of(Path::new(&out.path))?;
        let same = now.sha256 == out.sha256;
        println!("{} {}", if same { "identical" } else { "DIFFERENT" }, out.path);
        if !same {
            mismatched.push(out.path.clone());
        }
    }
    if !mismatched.is_empty() {
        bail!(Failure::Validation(format!(
            "replay differs: {}",
            mismatched.join(", ")
        )));
    }
    Ok(())
}
