use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use commdecay::diagnostics::{predict as predict_pairs, summarize};
use commdecay::init::initial_values;
use commdecay::sampler::{read_trace, run_chains_from, write_trace};
use commdecay::simharness::{bench_scaling, generate, run_study, Geometry};
use commdecay::{
    load_dataset, ChainTrace, CredibleInterval, DistanceSource, FlowDataset, ModelCase, NewPair, PredictOptions,
    SamplerConfig, SimScenario, SimTruth, StudyConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{layered, read_json, usage, write_json, Manifest};
use crate::{BenchArgs, DiagnoseArgs, FitArgs, PredictArgs, SimulateArgs, StudyArgs, TraceInput};

const RJ_MOVE: &str = "After every Gibbs sweep one usable hinge column is chosen uniformly and toggled. \
A birth draws the coefficient from N(r/g, sigma2/g), where g is the column's standardized Gram diagonal and r its \
partial residual correlation; the prior is the marginal Laplace(lambda/sigma) density, models are equally likely a \
priori and the Jacobian is 1. A death uses the reciprocal ratio. After a birth the local variance tau2 is redrawn \
from its full conditional.";

const SEED_DERIVATION: &str = "Chain c draws from ChaCha8 seeded with sampler.seed on stream c. Chains after the first \
start from jittered values: theta + N(0, 0.1^2) (redrawn to stay in range) and coefficients scaled by U(0.8, 1.2).";

/// Truth record written by `simulate`.
#[derive(Serialize, Deserialize)]
struct TruthRecord {
    scenario: SimScenario,
    truth: SimTruth,
    noise: Vec<f64>,
    /// `(source id, destination id, exact log outcome)`.
    outcomes: Vec<(String, String, f64)>,
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn absolute(p: &Path) -> PathBuf {
    std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf())
}

fn data_files(dir: &Path) -> Result<(PathBuf, PathBuf, Option<PathBuf>)> {
    let locations = dir.join("locations.csv");
    let flows = dir.join("flows.csv");
    for f in [&locations, &flows] {
        if !f.is_file() {
            return Err(usage(format!("missing data file {}", f.display())));
        }
    }
    let dist = dir.join("distances.csv");
    Ok((locations, flows, dist.is_file().then_some(dist)))
}

fn load_dir(dir: &Path, manifest: Option<&mut Manifest>) -> Result<FlowDataset> {
    let (locations, flows, dist) = data_files(dir)?;
    let source = match &dist {
        Some(p) => DistanceSource::ExplicitMatrix(p.clone()),
        None => DistanceSource::Haversine,
    };
    let data = load_dataset(&locations, &flows, &source)?;
    if let Some(m) = manifest {
        m.input(&locations)?;
        m.input(&flows)?;
        if let Some(p) = &dist {
            m.input(p)?;
        }
    }
    Ok(data)
}

fn case_from_file(file: Option<&Value>) -> Result<Option<ModelCase>> {
    match file.and_then(|f| f.get("case")) {
        Some(v) => Ok(Some(
            serde_json::from_value(v.clone()).map_err(|e| usage(format!("invalid case in config file: {e}")))?,
        )),
        None => Ok(None),
    }
}

fn path_from_file(file: Option<&Value>, key: &str) -> Option<PathBuf> {
    file.and_then(|f| f.get(key)).and_then(Value::as_str).map(PathBuf::from)
}

pub fn simulate(args: SimulateArgs, argv: &[String]) -> Result<()> {
    let file = args.config.as_deref().map(read_json).transpose()?;
    let mut scenario: SimScenario = layered(&SimScenario::desk(0.38), file.as_ref(), "scenario")?;
    let mut manifest = Manifest::new("simulate", argv);
    if let Some(dir) = &args.geometry_from {
        let data = load_dir(dir, Some(&mut manifest))?;
        if args.s.is_some_and(|s| s != data.len()) {
            return Err(usage(format!("--S conflicts with the {} locations of {}", data.len(), dir.display())));
        }
        scenario.s = data.len();
        scenario.geometry = Geometry::from_dataset(&data);
    }
    if let Some(s) = args.s {
        scenario.s = s;
    }
    if let Some(v) = args.sigma2 {
        scenario.sigma2 = v;
    }
    if let Some(v) = args.seed {
        scenario.seed = v;
    }
    if !(scenario.sigma2 > 0.0) {
        return Err(usage(format!("sigma2 = {} must be positive", scenario.sigma2)));
    }
    scenario.validate().map_err(|e| usage(e.to_string()))?;

    let out = &args.out.out;
    create_dir(out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let (ds, truth) = generate(&scenario, &mut rng)?;
    ds.data.write(out)?;
    let ids = ds.data.locations();
    let record = TruthRecord {
        outcomes: ds
            .data
            .pairs()
            .iter()
            .map(|p| (ids[p.source].id.clone(), ids[p.destination].id.clone(), p.outcome))
            .collect(),
        scenario: scenario.clone(),
        truth,
        noise: ds.noise,
    };
    let truth_path = out.join("truth.json");
    write_json(&truth_path, &record)?;

    for name in ["locations.csv", "flows.csv", "distances.csv"] {
        let p = out.join(name);
        if p.is_file() {
            manifest.output(&p)?;
        }
    }
    manifest.output(&truth_path)?;
    manifest.set("scenario", &scenario)?;
    manifest.set("rng", "ChaCha8 seeded with scenario.seed; geometry and parameters first, then noise")?;
    manifest.write(out)?;
    println!(
        "simulated {} locations, {} pairs, sigma2 = {} into {}",
        scenario.s,
        record.outcomes.len(),
        scenario.sigma2,
        out.display()
    );
    Ok(())
}

fn dataset_from_truth(path: &Path) -> Result<FlowDataset> {
    let v = read_json(path)?;
    let record: TruthRecord =
        serde_json::from_value(v).map_err(|e| usage(format!("{} is not a truth record: {e}", path.display())))?;
    Ok(record.truth.dataset_with_noise(&record.noise)?)
}

pub fn fit(args: FitArgs, argv: &[String]) -> Result<()> {
    let file = args.config.as_deref().map(read_json).transpose()?;
    let case: ModelCase = match args.case {
        Some(c) => c.into(),
        None => case_from_file(file.as_ref())?.unwrap_or(ModelCase::I),
    };
    let mut cfg: SamplerConfig = layered(&SamplerConfig::for_case(case), file.as_ref(), "sampler")?;
    if let Some(v) = args.chains {
        cfg.chains = v;
    }
    if let Some(v) = args.iters {
        cfg.outer_iterations = v;
    }
    if let Some(v) = args.burn_in {
        cfg.burn_in = v;
    }
    if let Some(v) = args.thin {
        cfg.thin = v;
    }
    if let Some(v) = args.sigma2_theta {
        cfg.sigma2_theta = v;
    }
    if let Some(v) = args.inner_h {
        cfg.inner_h = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    cfg.validate(case).map_err(|e| usage(e.to_string()))?;

    let mut manifest = Manifest::new("fit", argv);
    let truth_path = args.truth.or_else(|| path_from_file(file.as_ref(), "truth"));
    let data_path = args.data.or_else(|| path_from_file(file.as_ref(), "data"));
    let data = match (&truth_path, &data_path) {
        (Some(t), _) => {
            manifest.input(t)?;
            dataset_from_truth(t)?
        }
        (None, Some(d)) => load_dir(d, Some(&mut manifest))?,
        (None, None) => return Err(usage("give --data DIR or --truth FILE")),
    };

    let out = &args.out.out;
    create_dir(out)?;
    let init = initial_values(&data, case, cfg.grid_size)?;
    let threads = args.threads.unwrap_or(cfg.chains).max(1);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    let traces = pool.install(|| run_chains_from(&data, &cfg, &init))?;

    let mut chains = Vec::new();
    for tr in &traces {
        let name = format!("trace_chain{}.csv", tr.chain);
        let path = out.join(&name);
        write_trace(tr, &path)?;
        let back = read_trace(&path, tr.chain)?;
        if back.states != tr.states || back.iterations != tr.iterations {
            anyhow::bail!("trace {} did not read back identically", path.display());
        }
        manifest.output(&path)?;
        chains.push(json!({
            "chain": tr.chain,
            "trace": name,
            "draws": tr.len(),
            "proposals": tr.proposals,
            "accept_counts": tr.accept_counts,
        }));
    }
    manifest.set("case", case)?;
    manifest.set("data", data_path.as_deref().map(absolute))?;
    manifest.set("truth", truth_path.as_deref().map(absolute))?;
    manifest.set("sampler", &cfg)?;
    manifest.set("threads", threads)?;
    manifest.set("seed_derivation", SEED_DERIVATION)?;
    manifest.set("initial_values", &init)?;
    if case == ModelCase::II {
        manifest.set("rj_move", RJ_MOVE)?;
    }
    manifest.set("chains", chains)?;
    manifest.write(out)?;

    let mean_acc: f64 = traces
        .iter()
        .flat_map(|t| t.acceptance_rates())
        .filter(|r| r.is_finite())
        .sum::<f64>()
        / (traces.len() * data.len()).max(1) as f64;
    println!(
        "case {:?}: {} chains x {} draws written to {} (mean break-point acceptance {:.3})",
        case,
        traces.len(),
        traces.first().map_or(0, ChainTrace::len),
        out.display(),
        mean_acc
    );
    Ok(())
}

fn load_traces(input: &TraceInput, manifest: &mut Manifest) -> Result<Vec<ChainTrace>> {
    if let Some(dir) = &input.fit {
        let mpath = dir.join("manifest.json");
        let m = read_json(&mpath)?;
        let chains = m
            .get("chains")
            .and_then(Value::as_array)
            .ok_or_else(|| usage(format!("{} lists no chains", mpath.display())))?;
        let mut traces = Vec::new();
        for c in chains {
            let chain = c["chain"].as_u64().unwrap_or(traces.len() as u64) as usize;
            let name = c["trace"].as_str().ok_or_else(|| usage("manifest chain entry has no trace"))?;
            let path = dir.join(name);
            if !path.is_file() {
                return Err(usage(format!("missing trace file {}", path.display())));
            }
            let mut tr = read_trace(&path, chain)?;
            if let Ok(counts) = serde_json::from_value::<Vec<u64>>(c["accept_counts"].clone()) {
                if counts.len() == tr.accept_counts.len() {
                    tr.accept_counts = counts;
                    tr.proposals = c["proposals"].as_u64().unwrap_or(0);
                }
            }
            manifest.input(&path)?;
            traces.push(tr);
        }
        return Ok(traces);
    }
    if input.trace.is_empty() {
        return Err(usage("give --fit DIR or --trace FILE..."));
    }
    input
        .trace
        .iter()
        .enumerate()
        .map(|(c, p)| {
            if !p.is_file() {
                return Err(usage(format!("missing trace file {}", p.display())));
            }
            manifest.input(p)?;
            Ok(read_trace(p, c)?)
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| x.to_string())
}

fn interval_line(out: &mut String, iv: &CredibleInterval) {
    let _ = writeln!(out, "{},{},{},{},{}", iv.parameter, iv.draws, opt(iv.mean), opt(iv.lower), opt(iv.upper));
}

pub fn diagnose(args: DiagnoseArgs, argv: &[String]) -> Result<()> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(usage("alpha must lie in (0, 1)"));
    }
    let mut manifest = Manifest::new("diagnose", argv);
    let traces = load_traces(&args.input, &mut manifest)?;
    let report = summarize(&traces, args.alpha)?;
    let out = &args.out.out;
    create_dir(out)?;

    let json_path = out.join("diagnostics.json");
    write_json(&json_path, &report)?;

    let mut psrf = String::from("batch,psrf1_sigma2,psrf2_sigma2,psrf1_intercept,psrf2_intercept\n");
    for b in 0..report.psrf1_series.len() {
        let _ = writeln!(
            psrf,
            "{},{},{},{},{}",
            b + 1,
            report.psrf1_series[b],
            report.psrf2_series[b],
            report.intercept_psrf1_series[b],
            report.intercept_psrf2_series[b]
        );
    }
    let psrf_path = out.join("psrf.csv");
    std::fs::write(&psrf_path, psrf).with_context(|| format!("writing {}", psrf_path.display()))?;

    let mut text = String::new();
    let last = |v: &[f64]| v.last().copied().unwrap_or(f64::NAN);
    let _ = writeln!(text, "chains: {}", traces.len());
    let _ = writeln!(text, "draws_per_chain: {}", traces.iter().map(ChainTrace::len).min().unwrap_or(0));
    let _ = writeln!(text, "models_visited: {}", report.models_visited);
    let _ = writeln!(text, "mean_acceptance: {}", report.mean_acceptance);
    let _ = writeln!(text, "final_psrf1_sigma2: {}", last(&report.psrf1_series));
    let _ = writeln!(text, "final_psrf2_sigma2: {}", last(&report.psrf2_series));
    let _ = writeln!(text, "\n[intervals alpha={}]\nparameter,draws,mean,lower,upper", report.alpha);
    for iv in report.intervals.iter().chain(&report.theta_intervals) {
        interval_line(&mut text, iv);
    }
    let _ = writeln!(text, "\n[locations]\nid,acceptance,inclusion_probability,break_present");
    for (i, id) in report.location_ids.iter().enumerate() {
        let _ = writeln!(
            text,
            "{},{},{},{}",
            id, report.acceptance[i], report.inclusion_probabilities[i], report.break_present[i]
        );
    }
    let summary_path = out.join("summary.txt");
    std::fs::write(&summary_path, &text).with_context(|| format!("writing {}", summary_path.display()))?;

    for p in [&json_path, &psrf_path, &summary_path] {
        manifest.output(p)?;
    }
    manifest.set("alpha", args.alpha)?;
    manifest.write(out)?;
    println!(
        "final PSRF on sigma2: {:.4} / {:.4}; {} models visited; report in {}",
        last(&report.psrf1_series),
        last(&report.psrf2_series),
        report.models_visited,
        out.display()
    );
    Ok(())
}

#[derive(Deserialize)]
struct PairRow {
    source_id: String,
    destination_id: String,
}

fn read_pairs(path: &Path, data: &FlowDataset) -> Result<Vec<NewPair>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let logp = data.log_population();
    let mut out = Vec::new();
    for row in reader.deserialize() {
        let row: PairRow = row.with_context(|| format!("parsing {}", path.display()))?;
        let i = data.index_of(&row.source_id)?;
        let j = data.index_of(&row.destination_id)?;
        if i == j {
            return Err(usage(format!("self pair {}", row.source_id)));
        }
        out.push(NewPair {
            source: row.source_id,
            destination: row.destination_id,
            log_distance: data.log_distance()[(i, j)],
            log_source_population: logp[i],
            log_destination_population: logp[j],
        });
    }
    Ok(out)
}

pub fn predict(args: PredictArgs, argv: &[String]) -> Result<()> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(usage("alpha must lie in (0, 1)"));
    }
    let mut manifest = Manifest::new("predict", argv);
    let traces = load_traces(&args.input, &mut manifest)?;
    let data = load_dir(&args.data, Some(&mut manifest))?;
    let pairs = match &args.pairs {
        Some(p) => {
            manifest.input(p)?;
            read_pairs(p, &data)?
        }
        None => NewPair::from_dataset(&data),
    };
    let options = PredictOptions {
        alpha: args.alpha,
        predictive: args.predictive,
        seed: args.seed,
    };
    let preds = predict_pairs(&traces, &pairs, &options)?;
    let out = &args.out.out;
    create_dir(out)?;
    let path = out.join("predictions.csv");
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["source_id", "destination_id", "mean", "lower", "upper"])?;
    for p in &preds {
        w.write_record([
            p.source.clone(),
            p.destination.clone(),
            p.mean.to_string(),
            p.lower.to_string(),
            p.upper.to_string(),
        ])?;
    }
    w.flush()?;
    manifest.output(&path)?;
    manifest.set("options", &options)?;
    manifest.write(out)?;
    println!("{} predictions written to {}", preds.len(), path.display());
    Ok(())
}

pub fn bench(args: BenchArgs, argv: &[String]) -> Result<()> {
    if args.s.is_empty() || args.s.windows(2).any(|w| w[0] >= w[1]) || args.s[0] < 2 {
        return Err(usage("--S must list ascending location counts of at least 2"));
    }
    let report = bench_scaling(&args.s, args.min_iterations, args.min_seconds, args.seed)?;
    let out = &args.out.out;
    create_dir(out)?;
    let path = out.join("bench.csv");
    let mut text = String::from("S,pairs,iterations,seconds_per_iteration\n");
    for r in &report.rows {
        let _ = writeln!(text, "{},{},{},{}", r.s, r.pairs, r.iterations, r.seconds_per_iteration);
    }
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    let mut manifest = Manifest::new("bench", argv);
    manifest.output(&path)?;
    manifest.set("seed", args.seed)?;
    manifest.set("min_iterations", args.min_iterations)?;
    manifest.set("min_seconds", args.min_seconds)?;
    manifest.set("report", &report)?;
    manifest.write(out)?;
    for r in &report.rows {
        println!("S = {:>4}: {:.3e} s per iteration ({} iterations)", r.s, r.seconds_per_iteration, r.iterations);
    }
    if report.rows.len() >= 2 {
        println!("log-log slope: {:.3}", report.slope);
    }
    Ok(())
}

pub fn study(args: StudyArgs, argv: &[String]) -> Result<()> {
    let file = args.config.as_deref().map(read_json).transpose()?;
    let case: ModelCase = match args.case {
        Some(c) => c.into(),
        None => case_from_file(file.as_ref())?.unwrap_or(ModelCase::I),
    };
    let mut base = StudyConfig::desk(0.38);
    base.case = case;
    if case == ModelCase::II {
        base.sampler.inner_h = SamplerConfig::for_case(case).inner_h;
    }
    let mut cfg = StudyConfig {
        scenario: layered(&base.scenario, file.as_ref(), "scenario")?,
        sampler: layered(&base.sampler, file.as_ref(), "sampler")?,
        case,
    };
    let sc = &mut cfg.scenario;
    if let Some(v) = args.s {
        sc.s = v;
    }
    if let Some(v) = args.sigma2 {
        sc.sigma2 = v;
    }
    if let Some(v) = args.seed {
        sc.seed = v;
    }
    if let Some(v) = args.datasets {
        sc.datasets = v;
    }
    if let Some(v) = args.replicates {
        sc.replicates = v;
    }
    if let Some(v) = args.sweep {
        sc.sweep = v;
    }
    if let Some(v) = args.chains {
        cfg.sampler.chains = v;
    }
    if let Some(v) = args.iters {
        cfg.sampler.outer_iterations = v;
    }
    if let Some(v) = args.burn_in {
        cfg.sampler.burn_in = v;
    }
    cfg.scenario.validate().map_err(|e| usage(e.to_string()))?;
    cfg.sampler.validate(case).map_err(|e| usage(e.to_string()))?;
    if cfg.scenario.datasets == 0 || cfg.scenario.replicates == 0 || cfg.scenario.sweep.is_empty() {
        return Err(usage("datasets, replicates and sweep must be nonempty"));
    }

    let report = run_study(&cfg)?;
    let out = &args.out.out;
    create_dir(out)?;
    let mut manifest = Manifest::new("study", argv);
    for (name, body) in [
        ("table1_prediction_error.csv", report.table1_csv()),
        ("table2_acceptance.csv", report.table2_csv()),
        ("table3_coverage.csv", report.table3_csv()),
    ] {
        let p = out.join(name);
        std::fs::write(&p, body).with_context(|| format!("writing {}", p.display()))?;
        manifest.output(&p)?;
    }
    let p = out.join("study.json");
    write_json(&p, &report)?;
    manifest.output(&p)?;
    manifest.set("case", case)?;
    manifest.set("scenario", &cfg.scenario)?;
    manifest.set("sampler", &cfg.sampler)?;
    manifest.set(
        "seed_derivation",
        "truth from stream 0 of the scenario seed, replicates from stream 1, training dataset k from stream 2+k; \
         fits for dataset k use sampler.seed + 1000k",
    )?;
    manifest.write(out)?;
    print!("{}", report.table1_csv());
    for st in &cfg.scenario.sweep {
        println!(
            "sigma2_theta {st}: acceptance {}, coverage {}",
            opt(report.mean_acceptance(*st)),
            opt(report.pooled_coverage(*st))
        );
    }
    let failures = report.cells.iter().filter(|c| c.error.is_some()).count();
    if failures > 0 {
        anyhow::bail!("{failures} study cells failed; see study.json");
    }
    Ok(())
}
