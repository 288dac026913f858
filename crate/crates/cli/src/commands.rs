use crate::args::PolicySpec;
use crate::{EvaluateArgs, GenArgs, ImportanceArgs, PredictArgs, SelectArgs, SimulateArgs, TrainArgs};
use anyhow::anyhow;
use execsizer::allocsim::{
    compare_policies, AllocationPolicy, ClusterModel, PolicyColumn, SimError, SimOptions,
};
use execsizer::evalharness::{ablation, cross_validate, CvPlan, EvalConfig, EvalError, FeatureSubset};
use execsizer::features::{
    load_workload, vectorize, vectorize_with_dropped, write_workload, FeatureSchema, WorkloadError,
    WorkloadRecord,
};
use execsizer::forest::{
    permutation_importance, ForestConfig, ForestError, ImportanceMetric, ParameterModel,
};
use execsizer::ppm::relative_rms_error;
use execsizer::schedsim::{augment_training_data, training_curve, QueryProfile};
use execsizer::select::{
    factorize_cores, select_elbow, select_limited_slowdown, Factorization, RuntimeModel, SelectError,
    Selection,
};
use execsizer::synth::{generate_workload, SyntheticConfig};
use execsizer::{AllocationCurve, Parallelism, PpmFamily, PricePerfModel};
use serde::Serialize;
use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FailureKind {
    Validation,
    Io,
    Infeasible,
}

impl FailureKind {
    pub fn code(self) -> u8 {
        match self {
            FailureKind::Validation => 1,
            FailureKind::Io => 2,
            FailureKind::Infeasible => 3,
        }
    }
}

pub struct Failure {
    pub kind: FailureKind,
    pub error: anyhow::Error,
}

type CmdResult = Result<(), Failure>;

fn validation(e: impl Into<anyhow::Error>) -> Failure {
    Failure {
        kind: FailureKind::Validation,
        error: e.into(),
    }
}

fn io_failure(e: impl Into<anyhow::Error>) -> Failure {
    Failure {
        kind: FailureKind::Io,
        error: e.into(),
    }
}

impl From<WorkloadError> for Failure {
    fn from(e: WorkloadError) -> Self {
        match e {
            WorkloadError::Io { .. } => io_failure(e),
            _ => validation(e),
        }
    }
}

impl From<ForestError> for Failure {
    fn from(e: ForestError) -> Self {
        match e {
            ForestError::Io { .. } => io_failure(e),
            _ => validation(e),
        }
    }
}

impl From<SelectError> for Failure {
    fn from(e: SelectError) -> Self {
        match e {
            SelectError::Infeasible { .. } => Failure {
                kind: FailureKind::Infeasible,
                error: e.into(),
            },
            _ => validation(e),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        validation(e)
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        validation(e)
    }
}

fn parallelism(sequential: bool) -> Parallelism {
    if sequential {
        Parallelism::Sequential
    } else {
        Parallelism::default()
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_failure(anyhow!("creating {}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_failure(anyhow!("creating {}: {e}", path.display())))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> CmdResult {
    let mut out = create(path)?;
    f(&mut out)
        .and_then(|()| out.flush())
        .map_err(|e| io_failure(anyhow!("writing {}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> CmdResult {
    let text = serde_json::to_string_pretty(value).map_err(validation)?;
    write_with(path, |out| writeln!(out, "{text}"))
}

/// Writes JSON to `path`, or stdout when no path is given.
fn emit_json(path: Option<&Path>, value: &impl Serialize) -> CmdResult {
    match path {
        Some(p) => write_json(p, value),
        None => {
            let text = serde_json::to_string_pretty(value).map_err(validation)?;
            match writeln!(std::io::stdout().lock(), "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(io_failure(e)),
                _ => Ok(()),
            }
        }
    }
}

fn load_records(path: &Path) -> Result<Vec<WorkloadRecord>, Failure> {
    let records = load_workload(path)?;
    if records.is_empty() {
        return Err(validation(anyhow!("workload {} is empty", path.display())));
    }
    Ok(records)
}

pub fn train(a: &TrainArgs) -> CmdResult {
    let records = load_records(&a.workload)?;
    let schema = Arc::new(FeatureSchema::from_features(records.iter().map(|r| &r.features)));
    let data = augment_training_data(&records, &schema, &a.grid, a.ec);
    let examples = data.examples(a.ppm);
    if examples.len() < 2 {
        return Err(validation(anyhow!(
            "only {} usable training examples ({} skipped)",
            examples.len(),
            data.skipped.len()
        )));
    }
    let config = ForestConfig::new(a.trees, a.seed).with_parallelism(parallelism(a.sequential));
    let started = Instant::now();
    let model = ParameterModel::train(examples, a.ppm, &config)?;
    let elapsed = started.elapsed();
    model.save(&a.model)?;

    let by_id: HashMap<&str, &WorkloadRecord> = records.iter().map(|r| (r.query_id.as_str(), r)).collect();
    let residuals: Vec<f64> = examples
        .iter()
        .filter_map(|e| {
            let curve = training_curve(by_id[e.query_id.as_str()], &a.grid, a.ec).ok()?;
            let fitted = PricePerfModel::from_params(a.ppm, &e.y).ok()?;
            Some(relative_rms_error(&fitted, &curve))
        })
        .collect();
    let degenerate = examples.iter().filter(|e| e.degenerate).count();
    println!(
        "trained {} model: {} examples, {} skipped, {} degenerate fits, {} trees",
        a.ppm,
        examples.len(),
        data.skipped.len(),
        degenerate,
        a.trees
    );
    println!(
        "fit residual (relative RMS): mean {:.4}, max {:.4}",
        execsizer::stats::mean(&residuals),
        residuals.iter().copied().fold(0.0, f64::max)
    );
    println!("model written to {}", a.model.display());
    eprintln!("training time: {:.3} s", elapsed.as_secs_f64());
    Ok(())
}

#[derive(Serialize)]
struct PredictedQuery {
    query_id: String,
    params: BTreeMap<String, f64>,
    curve: Vec<(u32, f64)>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    dropped_operators: Vec<String>,
}

#[derive(Serialize)]
struct PredictOutput {
    family: PpmFamily,
    /// Forest evaluations performed; one per query.
    scoring_calls: usize,
    queries: Vec<PredictedQuery>,
}

fn params_map(model: &PricePerfModel) -> BTreeMap<String, f64> {
    model
        .family()
        .param_names()
        .iter()
        .map(|s| s.to_string())
        .zip(model.params())
        .collect()
}

pub fn predict(a: &PredictArgs) -> CmdResult {
    let model = ParameterModel::load(&a.model)?;
    let records = load_records(&a.workload)?;
    let mut calls = 0;
    let mut queries = Vec::with_capacity(records.len());
    for r in &records {
        let (x, dropped) = vectorize_with_dropped(&r.features, model.schema());
        if !dropped.is_empty() {
            if a.strict {
                return Err(validation(anyhow!(
                    "query `{}` has operators unknown to the model: {}",
                    r.query_id,
                    dropped.join(", ")
                )));
            }
            log::warn!("query `{}`: unknown operators dropped: {}", r.query_id, dropped.join(", "));
        }
        calls += 1;
        let ppm = model.predict_ppm(&x)?;
        queries.push(PredictedQuery {
            query_id: r.query_id.clone(),
            params: params_map(&ppm),
            curve: a.grid.iter().map(|&n| (n, ppm.evaluate(n))).collect(),
            dropped_operators: dropped,
        });
    }
    emit_json(
        a.out.as_deref(),
        &PredictOutput {
            family: model.family(),
            scoring_calls: calls,
            queries,
        },
    )
}

#[derive(Serialize)]
struct SelectResult {
    #[serde(skip_serializing_if = "Option::is_none")]
    query_id: Option<String>,
    n: u32,
    degenerate: bool,
    runtime: f64,
    total_cores: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    factorization: Option<Factorization>,
}

#[derive(Serialize)]
struct SelectOutput {
    objective: String,
    grid: (u32, u32),
    results: Vec<SelectResult>,
}

fn choose(grid: &[u32], model: &impl RuntimeModel, h: Option<f64>) -> Result<Selection, SelectError> {
    let values: Vec<(u32, f64)> = grid.iter().map(|&n| (n, model.runtime(n))).collect();
    match h {
        Some(h) => select_limited_slowdown(&values, h),
        None => select_elbow(&values),
    }
}

pub fn select(a: &SelectArgs) -> CmdResult {
    let h = a.max_slowdown;
    let objective = match h {
        Some(h) => format!("max_slowdown {h}"),
        None => "elbow".to_string(),
    };
    let sources: Vec<(Option<String>, Box<dyn RuntimeModel>)> = if let Some(params) = &a.params {
        let model = PricePerfModel::from_params(a.ppm, &params.0).map_err(validation)?;
        vec![(None, Box::new(model))]
    } else if let Some(points) = &a.curve {
        let curve = AllocationCurve::executors(points.0.clone()).map_err(validation)?;
        vec![(None, Box::new(curve))]
    } else {
        let path = a.model.as_ref().expect("clap enforces one source");
        let model = ParameterModel::load(path)?;
        let records = load_records(a.workload.as_ref().expect("clap requires --workload"))?;
        records
            .iter()
            .map(|r| {
                let ppm = model.predict_ppm(&vectorize(&r.features, model.schema()))?;
                Ok((Some(r.query_id.clone()), Box::new(ppm) as Box<dyn RuntimeModel>))
            })
            .collect::<Result<_, Failure>>()?
    };
    let mut results = Vec::with_capacity(sources.len());
    for (query_id, model) in &sources {
        let s = choose(&a.grid, &&**model, h)?;
        let total_cores = s.n * a.ec;
        let factorization = match &a.node {
            Some(node) => Some(factorize_cores(total_cores, node, 1..=node.cores).map_err(|e| {
                let mut f = Failure::from(e);
                if let Some(id) = query_id {
                    f.error = f.error.context(format!("query `{id}`"));
                }
                f
            })?),
            None => None,
        };
        results.push(SelectResult {
            query_id: query_id.clone(),
            n: s.n,
            degenerate: s.degenerate,
            runtime: model.runtime(s.n),
            total_cores,
            factorization,
        });
    }
    emit_json(
        a.out.as_deref(),
        &SelectOutput {
            objective,
            grid: (a.grid[0], a.grid[a.grid.len() - 1]),
            results,
        },
    )
}

fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect()
}

pub fn simulate(a: &SimulateArgs) -> CmdResult {
    let records = load_records(&a.workload)?;
    let profiles: Vec<QueryProfile> = records
        .iter()
        .filter_map(|r| {
            if r.profile.is_none() {
                log::warn!("query `{}` has no profile; skipped", r.query_id);
            }
            r.profile.clone()
        })
        .collect();
    if profiles.is_empty() {
        return Err(validation(anyhow!("no record in the workload has a profile")));
    }
    if a.policies.len() < 2 {
        return Err(validation(anyhow!("at least two --policy flags are needed")));
    }
    if a.baseline >= a.policies.len() {
        return Err(validation(anyhow!(
            "--baseline {} is out of range for {} policies",
            a.baseline,
            a.policies.len()
        )));
    }
    let cluster = ClusterModel {
        allocation_lag: a.lag,
        grant_batch: a.batch,
        capacity: a.capacity,
    };
    cluster.validate()?;
    let options = SimOptions {
        cores_per_executor: a.ec,
        ..Default::default()
    };
    let configure = |p: AllocationPolicy| match p {
        AllocationPolicy::Static { .. } => p,
        AllocationPolicy::Dynamic { n_min, n_max, .. } => AllocationPolicy::Dynamic {
            n_min,
            n_max,
            ramp_interval: a.ramp_interval,
            idle_timeout: a.idle_timeout,
        },
        AllocationPolicy::Rule { n_predicted, .. } => AllocationPolicy::Rule {
            n_predicted,
            start_n: a.rule_start,
            idle_timeout: a.idle_timeout,
        },
    };

    let mut auto: Option<Vec<u32>> = None;
    let mut names: Vec<String> = Vec::new();
    let mut columns = Vec::with_capacity(a.policies.len());
    for (i, spec) in a.policies.iter().enumerate() {
        let mut name = spec.slug();
        if names.contains(&name) {
            name = format!("{name}_{i}");
        }
        names.push(name.clone());
        let column = match spec {
            PolicySpec::Fixed(p) => {
                let policy = configure(*p);
                policy.validate()?;
                PolicyColumn::Fixed { name, policy }
            }
            PolicySpec::RuleAuto => {
                if auto.is_none() {
                    auto = Some(auto_allocations(a, &records)?);
                }
                let policies = auto
                    .as_ref()
                    .expect("filled above")
                    .iter()
                    .map(|&n| configure(AllocationPolicy::rule(n)))
                    .collect();
                PolicyColumn::PerQuery { name, policies }
            }
        };
        columns.push(column);
    }

    let report = compare_policies(&profiles, &columns, a.baseline, &cluster, &options, Parallelism::default())?;

    let skyline_dir = a.out.join("skylines");
    for (q, profile) in profiles.iter().enumerate() {
        for (p, name) in names.iter().enumerate() {
            let path = skyline_dir.join(format!("{}__{}.csv", file_safe(&profile.query_id), name));
            write_with(&path, |out| report.runs[q][p].skyline.write_csv(out))?;
        }
    }
    write_with(&a.out.join("comparison.csv"), |out| report.write_ratio_csv(out))?;
    let mut summary = report.summary_json();
    summary["cluster"] = serde_json::to_value(cluster).map_err(validation)?;
    summary["cores_per_executor"] = a.ec.into();
    if let Some(ns) = &auto {
        let ids = records.iter().filter(|r| r.profile.is_some()).map(|r| r.query_id.clone());
        summary["rule_auto"] = serde_json::json!({
            "objective": if a.elbow { "elbow".to_string() } else { format!("max_slowdown {}", a.max_slowdown) },
            "allocations": ids.zip(ns.iter().copied()).collect::<BTreeMap<String, u32>>(),
        });
    }
    write_json(&a.out.join("summary.json"), &summary)?;

    println!("{} queries, baseline {}", profiles.len(), report.baseline);
    println!("policy,mean_n_ratio,mean_auc_ratio,mean_speedup,mean_runtime,total_auc");
    for g in &report.aggregates {
        println!(
            "{},{:.4},{:.4},{:.4},{:.2},{:.1}",
            g.policy, g.mean_n_ratio, g.mean_auc_ratio, g.mean_speedup, g.mean_runtime, g.total_auc
        );
    }
    Ok(())
}

/// Per-query allocations for `rule:auto`, in the order of records with a profile.
fn auto_allocations(a: &SimulateArgs, records: &[WorkloadRecord]) -> Result<Vec<u32>, Failure> {
    let path = a
        .model
        .as_ref()
        .ok_or_else(|| validation(anyhow!("rule:auto needs --model")))?;
    let model = ParameterModel::load(path)?;
    let h = (!a.elbow).then_some(a.max_slowdown);
    records
        .iter()
        .filter(|r| r.profile.is_some())
        .map(|r| {
            let ppm = model.predict_ppm(&vectorize(&r.features, model.schema()))?;
            Ok(choose(&a.grid, &ppm, h)?.n)
        })
        .collect()
}

pub fn evaluate(a: &EvaluateArgs) -> CmdResult {
    let families: Vec<PpmFamily> = match a.ppm.as_str() {
        "both" => PpmFamily::ALL.to_vec(),
        other => vec![crate::args::parse_family(other).map_err(|e| validation(anyhow!(e)))?],
    };
    let records = load_records(&a.workload)?;
    let plan = CvPlan {
        k: a.folds,
        repeats: a.repeats,
        rng_seed: a.seed,
    };
    let subsets: Vec<FeatureSubset> = a
        .subsets
        .iter()
        .map(|(name, features)| FeatureSubset {
            name: name.clone(),
            features: features.clone(),
        })
        .collect();
    let mut error_csv = Vec::new();
    let mut selection_csv = Vec::new();
    for family in families {
        let config = EvalConfig {
            grid: a.grid.0.clone(),
            training_grid: a.grid.0.clone(),
            cores_per_executor: a.ec,
            n_estimators: a.trees,
            slowdowns: a.slowdowns.0.clone(),
            n_min: 1,
            n_max: a.grid[a.grid.len() - 1].max(48),
            parallelism: parallelism(a.sequential),
            ..EvalConfig::new(family)
        };
        let started = Instant::now();
        let (report, ablation_report) = if subsets.is_empty() {
            (cross_validate(&records, &config, &plan)?, None)
        } else {
            let rep = ablation(&records, &subsets, &config, &plan)?;
            (rep.full.clone(), Some(rep))
        };
        let elapsed = started.elapsed();
        let tag = family.short_name();
        match &ablation_report {
            Some(rep) => {
                write_json(&a.out.join(format!("evaluate_{tag}.json")), rep)?;
                write_with(&a.out.join(format!("ablation_{tag}.csv")), |out| rep.write_csv(out))?;
            }
            None => write_json(&a.out.join(format!("evaluate_{tag}.json")), &report)?,
        }
        let mut buf = Vec::new();
        report.write_error_csv(&mut buf).map_err(io_failure)?;
        append_csv(&mut error_csv, &buf);
        buf.clear();
        report.write_selection_csv(&mut buf).map_err(io_failure)?;
        append_csv(&mut selection_csv, &buf);

        println!("{family}: {} folds", report.folds.len());
        for s in &report.series {
            let cells: Vec<String> = s
                .points
                .iter()
                .map(|p| format!("E({})={:.3}±{:.3}", p.n, p.mean, p.std))
                .collect();
            println!("  {:<17} {}", s.name, cells.join(" "));
        }
        for s in &report.selection {
            println!(
                "  {:<17} mean n {:.1}, mean slowdown {:.3}",
                s.objective, s.mean_n, s.mean_slowdown
            );
        }
        if let Some(rep) = &ablation_report {
            for e in &rep.subsets {
                let cells: Vec<String> = e.delta.iter().map(|d| format!("{}:{:+.3}", d.n, d.mean)).collect();
                println!("  subset {:<10} delta {}", e.name, cells.join(" "));
            }
        }
        eprintln!("{family} evaluation time: {:.2} s", elapsed.as_secs_f64());
    }
    write_with(&a.out.join("errors.csv"), |out| out.write_all(&error_csv))?;
    write_with(&a.out.join("selection.csv"), |out| out.write_all(&selection_csv))
}

/// Appends CSV text, dropping the header when `acc` already has one.
fn append_csv(acc: &mut Vec<u8>, csv: &[u8]) {
    if acc.is_empty() {
        acc.extend_from_slice(csv);
    } else if let Some(pos) = csv.iter().position(|&b| b == b'\n') {
        acc.extend_from_slice(&csv[pos + 1..]);
    }
}

pub fn importance(a: &ImportanceArgs) -> CmdResult {
    let model = ParameterModel::load(&a.model)?;
    let records = load_records(&a.workload)?;
    let data = augment_training_data(&records, model.schema(), &a.grid, a.ec);
    let examples = data.examples(model.family());
    if examples.is_empty() {
        return Err(validation(anyhow!("no usable examples in the workload")));
    }
    let metric = ImportanceMetric::RuntimeRms { grid: a.grid.0.clone() };
    let ranked = permutation_importance(&model, examples, &metric, a.repeats, a.seed, Parallelism::default())?;
    emit_json(a.out.as_deref(), &ranked)
}

pub fn gen_synthetic(a: &GenArgs) -> CmdResult {
    let config = SyntheticConfig {
        count: a.count,
        seed: a.seed,
        noise: a.noise,
        grid: a.grid.0.clone(),
        cores_per_executor: a.ec,
    };
    let records = generate_workload(&config).map_err(validation)?;
    write_with(&a.out, |out| write_workload(out, &records))?;
    println!("wrote {} queries to {}", records.len(), a.out.display());
    Ok(())
}
