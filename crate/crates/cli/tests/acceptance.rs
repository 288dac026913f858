//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use execsizer::allocsim::{
    compare_policies, simulate, AllocationPolicy, ClusterModel, PolicyColumn, SimOptions, Skyline,
};
use execsizer::evalharness::{cross_validate, CvPlan, EvalConfig, TEST_SERIES};
use execsizer::features::{vectorize, FeatureSchema, WorkloadRecord};
use execsizer::forest::{ForestConfig, ParameterModel};
use execsizer::ppm::{
    fit_amdahl, fit_power_law, relative_rms_error, AllocationCurve, AmdahlPPM, PowerLawPPM,
    PricePerfModel,
};
use execsizer::schedsim::{augment_training_data, estimate_curve, ProfiledAt, QueryProfile};
use execsizer::select::{
    factorize_cores, select_elbow, select_limited_slowdown, NodeShape, ObjectiveKind, SelectionObjective,
};
use execsizer::synth::{generate_workload, random_profile, ProfileShape, SyntheticConfig};
use execsizer::{Parallelism, PpmFamily, DEFAULT_GRID};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel(x: f64, truth: f64) -> f64 {
    ((x - truth) / truth).abs()
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

fn random_shape(rng: &mut impl Rng) -> ProfileShape {
    let stages = rng.random_range(1..=10);
    ProfileShape {
        driver_time: rng.random_range(0.5..60.0),
        stage_work: (0..stages).map(|_| log_uniform(rng, 10.0, 1e5)).collect(),
        mean_task: rng.random_range(0.5..20.0),
        skew: rng.random_range(0.05..1.0),
    }
}

fn random_scheduler_profile(rng: &mut impl Rng, i: usize) -> QueryProfile {
    let shape = random_shape(rng);
    random_profile(&format!("p{i}"), &shape, ProfiledAt::default(), rng)
}

fn workload() -> Vec<WorkloadRecord> {
    generate_workload(&SyntheticConfig::default()).expect("default workload")
}

fn round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let (mut worst_pl, mut worst_al) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let a = rng.random_range(-1.5..-0.2);
        let b = log_uniform(&mut rng, 10.0, 1e4);
        let n_s = rng.random_range(9.0..40.0);
        let m = b * f64::powf(n_s, a);
        let truth = PowerLawPPM::new(a, b, m).map_err(|e| e.to_string())?;
        let curve = AllocationCurve::from_model(&PricePerfModel::PowerLaw(truth), &DEFAULT_GRID)
            .map_err(|e| e.to_string())?;
        let f = fit_power_law(&curve).map_err(|e| e.to_string())?.model;
        worst_pl = worst_pl.max(rel(f.a(), a)).max(rel(f.b(), b)).max(rel(f.m(), m));

        let s = rng.random_range(1.0..1e3);
        let p = rng.random_range(1.0..1e5);
        let truth = AmdahlPPM::new(s, p).map_err(|e| e.to_string())?;
        let curve = AllocationCurve::from_model(&PricePerfModel::Amdahl(truth), &DEFAULT_GRID)
            .map_err(|e| e.to_string())?;
        let f = fit_amdahl(&curve).map_err(|e| e.to_string())?.model;
        worst_al = worst_al.max(rel(f.s(), s)).max(rel(f.p(), p));
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst_pl <= 1e-6 && worst_al <= 1e-9 && secs < 5.0,
        format!("max rel err PL {worst_pl:.2e} (<= 1e-6), AL {worst_al:.2e} (<= 1e-9), {secs:.3} s (< 5 s)"),
    )
}

fn random_ppm(rng: &mut impl Rng) -> PricePerfModel {
    loop {
        let model = if rng.random_bool(0.5) {
            let a = -rng.random_range(0.0..3.0);
            let b = log_uniform(rng, 1e-3, 1e6);
            let m = log_uniform(rng, 1e-6, 1e6);
            PowerLawPPM::new(a, b, m).map(PricePerfModel::PowerLaw)
        } else {
            let s = if rng.random_bool(0.1) { 0.0 } else { log_uniform(rng, 1e-3, 1e5) };
            let p = if rng.random_bool(0.1) { 0.0 } else { log_uniform(rng, 1e-3, 1e6) };
            AmdahlPPM::new(s, p).map(PricePerfModel::Amdahl)
        };
        if let Ok(m) = model {
            return m;
        }
    }
}

fn monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut ppm_violations = 0;
    for _ in 0..10_000 {
        let model = random_ppm(&mut rng);
        let dense = (1..2000u32).any(|n| model.evaluate(n + 1) > model.evaluate(n));
        let sparse = (0..50).any(|_| {
            let n1 = rng.random_range(1..1_000_000u32);
            let n2 = rng.random_range(n1..=1_000_000u32);
            model.evaluate(n2) > model.evaluate(n1)
        });
        if dense || sparse {
            ppm_violations += 1;
        }
    }
    let grid: Vec<u32> = (1..=256).collect();
    let mut profile_violations = 0;
    for i in 0..1000 {
        let profile = random_scheduler_profile(&mut rng, i);
        let e_c = rng.random_range(1..=8);
        let curve = estimate_curve(&profile, &grid, e_c).map_err(|e| e.to_string())?;
        if !curve.is_non_increasing() {
            profile_violations += 1;
        }
    }
    check(
        ppm_violations == 0 && profile_violations == 0,
        format!("violations: {ppm_violations}/10000 PPMs, {profile_violations}/1000 profiles"),
    )
}

fn best_of_two_fit() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut errors = Vec::with_capacity(200);
    for i in 0..200 {
        let profile = random_scheduler_profile(&mut rng, i);
        let curve = estimate_curve(&profile, &DEFAULT_GRID, 4).map_err(|e| e.to_string())?;
        let pl = PricePerfModel::PowerLaw(fit_power_law(&curve).map_err(|e| e.to_string())?.model);
        let al = PricePerfModel::Amdahl(fit_amdahl(&curve).map_err(|e| e.to_string())?.model);
        errors.push(relative_rms_error(&pl, &curve).min(relative_rms_error(&al, &curve)));
    }
    let worst = errors.iter().copied().fold(0.0, f64::max);
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    let over = errors.iter().filter(|&&e| e > 0.10).count();
    // Reported for context only; the verdict rests on the random profiles above.
    let mut workload_worst = 0.0f64;
    for r in workload() {
        let curve = estimate_curve(r.profile.as_ref().unwrap(), &DEFAULT_GRID, 4).map_err(|e| e.to_string())?;
        let pl = PricePerfModel::PowerLaw(fit_power_law(&curve).map_err(|e| e.to_string())?.model);
        let al = PricePerfModel::Amdahl(fit_amdahl(&curve).map_err(|e| e.to_string())?.model);
        workload_worst = workload_worst.max(relative_rms_error(&pl, &curve).min(relative_rms_error(&al, &curve)));
    }
    check(
        over == 0,
        format!(
            "worst min(PL, AL) rel RMS {worst:.4}, mean {mean:.4}, {over}/200 above 0.10 (synthetic workload worst {workload_worst:.4})"
        ),
    )
}

/// Rebuilds one fold by hand and scores it with an independently written
/// weighted absolute error.
fn oracle_fold_error(records: &[WorkloadRecord], family: PpmFamily, plan: &CvPlan, n: u32) -> f64 {
    let folds = plan.folds(records.len()).unwrap();
    let test = &folds[0][0];
    let train: Vec<WorkloadRecord> = (0..records.len())
        .filter(|i| !test.contains(i))
        .map(|i| records[i].clone())
        .collect();
    let schema = Arc::new(FeatureSchema::from_features(records.iter().map(|r| &r.features)));
    let data = augment_training_data(&train, &schema, &DEFAULT_GRID, 4);
    let config = ForestConfig::new(100, plan.fold_seed(0, 0)).with_parallelism(Parallelism::Rayon);
    let model = ParameterModel::train(data.examples(family), family, &config).unwrap();
    let (mut abs, mut total) = (0.0, 0.0);
    for &i in test {
        let predicted = model.predict_ppm(&vectorize(&records[i].features, &schema)).unwrap().evaluate(n);
        let actual = records[i]
            .observed_curve
            .as_ref()
            .unwrap()
            .points()
            .iter()
            .find(|p| p.0 == n)
            .unwrap()
            .1;
        abs += (predicted - actual).abs();
        total += actual;
    }
    abs / total
}

fn cross_validation() -> Outcome {
    let records = workload();
    let plan = CvPlan {
        k: 5,
        repeats: 10,
        rng_seed: 0,
    };
    let mut details = Vec::new();
    let mut ok = true;
    for family in PpmFamily::ALL {
        let start = Instant::now();
        let report = cross_validate(&records, &EvalConfig::new(family), &plan).map_err(|e| e.to_string())?;
        let secs = start.elapsed().as_secs_f64();
        let e8 = report.test_error_at(8).ok_or("no E(8)")?;
        let folds = report.series(TEST_SERIES).ok_or("no test series")?.folds;
        let g = report.grid.iter().position(|&n| n == 8).ok_or("8 not on grid")?;
        let oracle = oracle_fold_error(&records, family, &plan, 8);
        let reported = report.folds[0].test_error[g];
        let agree = (oracle - reported).abs() <= 1e-12;
        ok &= e8 <= 0.35 && folds == 50 && report.folds.len() == 50 && secs < 60.0 && agree;
        details.push(format!(
            "{}: E(8) {e8:.3} (<= 0.35), {folds} folds, {secs:.1} s, fold oracle {}",
            family.short_name(),
            if agree { "agrees" } else { "DISAGREES" }
        ));
    }
    check(ok, details.join("; "))
}

fn brute_slowdown(grid: &[(u32, f64)], h: f64) -> u32 {
    let mut t_min = f64::INFINITY;
    for p in grid {
        if p.1 < t_min {
            t_min = p.1;
        }
    }
    for p in grid {
        if p.1 / t_min <= h {
            return p.0;
        }
    }
    unreachable!()
}

fn brute_elbow(grid: &[(u32, f64)]) -> (u32, bool) {
    let ts: Vec<f64> = grid.iter().map(|p| p.1).collect();
    let lo = ts.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return (grid[0].0, true);
    }
    let n0 = f64::from(grid[0].0);
    let n_span = f64::from(grid[grid.len() - 1].0) - n0;
    let slope = |i: usize| {
        let dv = (ts[i - 1] - lo) / (hi - lo) - (ts[i] - lo) / (hi - lo);
        let du = (f64::from(grid[i].0) - n0) / n_span - (f64::from(grid[i - 1].0) - n0) / n_span;
        dv / du
    };
    for i in 1..grid.len() - 1 {
        if slope(i) >= 1.0 && slope(i + 1) <= 1.0 {
            return (grid[i].0, false);
        }
    }
    (grid[0].0, true)
}

fn random_curve(rng: &mut impl Rng) -> Vec<(u32, f64)> {
    let ns: Vec<u32> = if rng.random_bool(0.5) {
        (1..=rng.random_range(3..=64)).collect()
    } else {
        let mut ns: Vec<u32> = (1..=96).filter(|_| rng.random_bool(0.3)).collect();
        while ns.len() < 3 {
            ns.push(ns.last().copied().unwrap_or(0) + 1);
        }
        ns
    };
    match rng.random_range(0..4) {
        0 => {
            let m = random_ppm(rng);
            ns.iter().map(|&n| (n, m.evaluate(n))).collect()
        }
        1 => ns.iter().map(|&n| (n, rng.random_range(1.0..100.0))).collect(),
        // Integer runtimes force ties and plateaus.
        2 => {
            let mut t = rng.random_range(20..200) as f64;
            ns.iter()
                .map(|&n| {
                    t = (t - rng.random_range(0..6) as f64).max(1.0);
                    (n, t)
                })
                .collect()
        }
        _ => ns.iter().map(|&n| (n, 7.0)).collect(),
    }
}

fn selection_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = 0;
    let mut monotone = 0;
    for _ in 0..1000 {
        let grid = random_curve(&mut rng);
        if grid.windows(2).all(|w| w[1].1 <= w[0].1) {
            monotone += 1;
        }
        for h in [1.0, 1.05, 1.1, 1.25, rng.random_range(1.0..3.0)] {
            if select_limited_slowdown(&grid, h).map_err(|e| e.to_string())?.n != brute_slowdown(&grid, h) {
                mismatches += 1;
            }
        }
        let got = select_elbow(&grid).map_err(|e| e.to_string())?;
        if (got.n, got.degenerate) != brute_elbow(&grid) {
            mismatches += 1;
        }
    }
    check(
        mismatches == 0,
        format!("{mismatches} mismatches over 1000 curves ({monotone} monotone) x 6 objectives"),
    )
}

fn factorization() -> Outcome {
    let mut checked = 0;
    let mut infeasible = 0;
    let mut failures = Vec::new();
    for cores in 1..=16u32 {
        for memory in [8.0, 16.0, 32.0, 64.0, 128.0] {
            for em in [1.0, 2.0, 4.0, 8.0, 16.0] {
                let Ok(node) = NodeShape::new(cores, memory, em) else { continue };
                for k in 1..=64u32 {
                    // Exhaustive search over every (e_c, n) with e_c * n = k.
                    let mut best: Option<(u32, f64, i64, u32)> = None;
                    for e_c in 1..=cores {
                        for n in 1..=k {
                            if e_c * n != k {
                                continue;
                            }
                            let per_node = cores / e_c;
                            if f64::from(per_node) * em > memory {
                                continue;
                            }
                            let key = (cores - per_node * e_c, memory - f64::from(per_node) * em, -(e_c as i64), n);
                            if best.is_none_or(|b| (key.0, key.1, key.2) < (b.0, b.1, b.2)) {
                                best = Some(key);
                            }
                        }
                    }
                    checked += 1;
                    match (factorize_cores(k, &node, 1..=cores), best) {
                        (Ok(f), Some(b)) => {
                            let valid = f.e_c * f.executors == k
                                && f.e_c <= cores
                                && f64::from(cores / f.e_c) * em <= memory;
                            if !valid || f.e_c as i64 != -b.2 || f.executors != b.3 {
                                failures.push(format!("C={cores} M={memory} em={em} k={k}"));
                            }
                        }
                        (Err(_), None) => infeasible += 1,
                        _ => failures.push(format!("feasibility C={cores} M={memory} em={em} k={k}")),
                    }
                }
            }
        }
    }
    check(
        failures.is_empty(),
        format!(
            "{checked} (k, node) pairs, {infeasible} infeasible, {} disagreements{}",
            failures.len(),
            failures.first().map(|f| format!(", first {f}")).unwrap_or_default()
        ),
    )
}

fn skyline_accounting() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut auc_mismatch = 0;
    for _ in 0..1000 {
        // Half-second breakpoints and integer counts keep every product exact.
        let steps = rng.random_range(1..20);
        let mut t = 0.0;
        let mut samples = Vec::new();
        let mut prev = u32::MAX;
        for _ in 0..steps {
            let mut count = rng.random_range(0..64);
            if count == prev {
                count += 1;
            }
            samples.push((t, count));
            prev = count;
            t += f64::from(rng.random_range(1..200u32)) / 2.0;
        }
        let end = t;
        let closed: f64 = samples
            .iter()
            .enumerate()
            .map(|(i, &(s, c))| {
                let next = samples.get(i + 1).map_or(end, |n| n.0);
                f64::from(c) * (next - s)
            })
            .sum();
        let sky = Skyline::new(samples, end).map_err(|e| e.to_string())?;
        if sky.auc() != closed {
            auc_mismatch += 1;
        }
    }

    let mut conservation = 0;
    for i in 0..500 {
        let profile = random_scheduler_profile(&mut rng, i);
        let policy = match rng.random_range(0..3) {
            0 => AllocationPolicy::static_(rng.random_range(1..=64)),
            1 => {
                let lo = rng.random_range(1..=8);
                AllocationPolicy::dynamic(lo, lo + rng.random_range(0..=56))
            }
            _ => AllocationPolicy::rule(rng.random_range(1..=64)),
        };
        let cluster = ClusterModel {
            allocation_lag: rng.random_range(0.5..10.0),
            grant_batch: rng.random_range(1..=10),
            capacity: rng.random_range(1..=256),
        };
        let options = SimOptions {
            cores_per_executor: rng.random_range(1..=8),
            ..Default::default()
        };
        let run = simulate(&profile, &policy, &cluster, &options).map_err(|e| e.to_string())?;
        let total = profile.total_work();
        if (run.work_done - total).abs() > 1e-9 * total {
            conservation += 1;
        }
    }
    check(
        auc_mismatch == 0 && conservation == 0,
        format!("{auc_mismatch}/1000 AUC mismatches, {conservation}/500 work-conservation violations"),
    )
}

fn policy_direction() -> Outcome {
    let records = workload();
    let plan = CvPlan {
        k: 5,
        repeats: 1,
        rng_seed: 0,
    };
    let folds = plan.folds(records.len()).map_err(|e| e.to_string())?;
    let schema = Arc::new(FeatureSchema::from_features(records.iter().map(|r| &r.features)));
    let objective =
        SelectionObjective::new(ObjectiveKind::LimitedSlowdown { h: 1.05 }, 1, 48).map_err(|e| e.to_string())?;
    let mut rule = vec![None; records.len()];
    for (f, test) in folds[0].iter().enumerate() {
        let train: Vec<WorkloadRecord> = (0..records.len())
            .filter(|i| !test.contains(i))
            .map(|i| records[i].clone())
            .collect();
        let data = augment_training_data(&train, &schema, &DEFAULT_GRID, 4);
        let config = ForestConfig::new(100, plan.fold_seed(0, f));
        let model = ParameterModel::train(data.examples(PpmFamily::PowerLaw), PpmFamily::PowerLaw, &config)
            .map_err(|e| e.to_string())?;
        for &i in test {
            let ppm = model.predict_ppm(&vectorize(&records[i].features, &schema)).map_err(|e| e.to_string())?;
            rule[i] = Some(AllocationPolicy::rule(objective.select(&ppm).map_err(|e| e.to_string())?.n));
        }
    }
    let profiles: Vec<QueryProfile> = records.iter().map(|r| r.profile.clone().unwrap()).collect();
    let columns = vec![
        PolicyColumn::PerQuery {
            name: "Rule".into(),
            policies: rule.into_iter().map(Option::unwrap).collect(),
        },
        PolicyColumn::fixed(AllocationPolicy::dynamic(1, 48)),
    ];
    let report = compare_policies(
        &profiles,
        &columns,
        0,
        &ClusterModel::default(),
        &SimOptions::default(),
        Parallelism::Rayon,
    )
    .map_err(|e| e.to_string())?;
    let q = report.runs.len() as f64;
    let auc_ratio = report.runs.iter().map(|r| r[1].auc() / r[0].auc()).sum::<f64>() / q;
    let runtime_ratio = report.runs.iter().map(|r| r[0].runtime / r[1].runtime).sum::<f64>() / q;
    check(
        auc_ratio > 1.0 && runtime_ratio <= 1.10,
        format!(
            "mean AUC(DA)/AUC(Rule) {auc_ratio:.3} (> 1), mean runtime(Rule)/runtime(DA) {runtime_ratio:.3} (<= 1.10) over {} queries",
            report.runs.len()
        ),
    )
}

fn hash_tree(root: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, hex::encode(Sha256::digest(std::fs::read(&path).unwrap())));
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_execsizer");
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let shared = work.path().join("in");
    std::fs::create_dir_all(&shared).map_err(|e| e.to_string())?;
    let workload = shared.join("w.jsonl");
    let model = shared.join("m.json");
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let run = |args: Vec<String>| -> Result<(), String> {
        let out = Command::new(bin).args(&args).output().map_err(|e| e.to_string())?;
        if out.status.success() {
            Ok(())
        } else {
            Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
        }
    };
    run(vec!["gen-synthetic".into(), "--count".into(), "40".into(), "--out".into(), s(&workload)])?;
    run(vec!["train".into(), "--workload".into(), s(&workload), "--model".into(), s(&model)])?;

    let mut digests = Vec::new();
    for attempt in ["a", "b"] {
        let o = work.path().join(attempt);
        std::fs::create_dir_all(&o).map_err(|e| e.to_string())?;
        let v = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        let mut cmds = vec![
            [v(&["gen-synthetic", "--count", "40", "--seed", "9", "--out"]), vec![s(&o.join("gen.jsonl"))]].concat(),
            [v(&["train", "--seed", "3", "--ppm", "al", "--workload"]), vec![s(&workload), "--model".into(), s(&o.join("model.json"))]].concat(),
            [v(&["predict", "--model"]), vec![s(&model), "--workload".into(), s(&workload), "--out".into(), s(&o.join("predict.json"))]].concat(),
            [v(&["select", "--model"]), vec![s(&model), "--workload".into(), s(&workload), "--node".into(), "16,64,8".into(), "--out".into(), s(&o.join("select.json"))]].concat(),
            [v(&["select", "--params", "-0.8,900,40", "--max-slowdown", "1.1", "--out"]), vec![s(&o.join("select_params.json"))]].concat(),
            [v(&["simulate", "--policy", "rule:auto", "--policy", "da:1,48", "--policy", "sa:48", "--model"]), vec![s(&model), "--workload".into(), s(&workload), "--out".into(), s(&o.join("sim"))]].concat(),
            [v(&["evaluate", "--folds", "4", "--repeats", "2", "--trees", "30", "--subset", "depth=max_depth", "--workload"]), vec![s(&workload), "--out".into(), s(&o.join("eval"))]].concat(),
            [v(&["importance", "--repeats", "2", "--model"]), vec![s(&model), "--workload".into(), s(&workload), "--out".into(), s(&o.join("importance.json"))]].concat(),
        ];
        for cmd in cmds.drain(..) {
            run(cmd)?;
        }
        digests.push(hash_tree(&o));
    }
    let files = digests[0].len();
    let differing: Vec<&String> = digests[0]
        .iter()
        .filter(|(k, h)| digests[1].get(*k) != Some(h))
        .map(|(k, _)| k)
        .collect();
    check(
        differing.is_empty() && digests[0].len() == digests[1].len(),
        format!("{files} output files over 7 subcommands, {} differ {:?}", differing.len(), differing),
    )
}

fn overhead() -> Outcome {
    let records = workload();
    let schema = Arc::new(FeatureSchema::from_features(records.iter().map(|r| &r.features)));
    let data = augment_training_data(&records, &schema, &DEFAULT_GRID, 4);
    let examples = data.examples(PpmFamily::PowerLaw);
    let config = ForestConfig::new(100, 0).with_parallelism(Parallelism::Sequential);
    let start = Instant::now();
    let model = ParameterModel::train(examples, PpmFamily::PowerLaw, &config).map_err(|e| e.to_string())?;
    let train_secs = start.elapsed().as_secs_f64();

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("model.json");
    model.save(&path).map_err(|e| e.to_string())?;
    let bytes = std::fs::metadata(&path).map_err(|e| e.to_string())?.len();
    let loaded = ParameterModel::load(&path).map_err(|e| e.to_string())?;

    let mut worst = 0.0f64;
    for r in &records {
        let start = Instant::now();
        let ppm = loaded.predict_ppm(&vectorize(&r.features, loaded.schema())).map_err(|e| e.to_string())?;
        let curve: Vec<f64> = (1..=48).map(|n| ppm.evaluate(n)).collect();
        std::hint::black_box(curve);
        worst = worst.max(start.elapsed().as_secs_f64());
    }
    let mb = bytes as f64 / 1e6;
    check(
        worst < 5e-3 && train_secs < 10.0 && bytes <= 5_000_000,
        format!(
            "max scoring {:.3} ms (< 5), sequential training {train_secs:.2} s on {} examples (< 10), model {mb:.2} MB (<= 5)",
            worst * 1e3,
            examples.len()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("ppm round trip", round_trip),
        ("monotonicity", monotonicity),
        ("best-of-two fit", best_of_two_fit),
        ("cross-validation", cross_validation),
        ("selection oracle", selection_oracle),
        ("factorization", factorization),
        ("skyline accounting", skyline_accounting),
        ("policy direction", policy_direction),
        ("determinism", determinism),
        ("overhead bounds", overhead),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
