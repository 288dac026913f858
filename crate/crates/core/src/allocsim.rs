//! Discrete-time executor allocation simulator.
//!
//! A query (driver time followed by its stages in dependency order) runs
//! against a cluster that grants executors in batches. Three policies are
//! modelled:
//!
//! * static allocation: a fixed count requested at launch, held to the end;
//! * dynamic allocation: exponential scale-up while tasks are backlogged,
//!   idle executors released after a timeout;
//! * rule allocation: a predicted count requested once at launch, with the
//!   same idle release as dynamic allocation but no scale-up.
//!
//! Executors requested at launch are available immediately. Every later
//! request is served by the cluster in `grant_batch` increments, one batch
//! per `allocation_lag` seconds, starting one lag after the request.
//! Policy decisions and grants happen on tick boundaries; task execution
//! inside a tick is event-exact.

use crate::par::Parallelism;
use crate::schedsim::QueryProfile;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::fmt;
use std::io::Write;
use thiserror::Error;

const EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("cluster capacity must be at least 1")]
    NoCapacity,
    #[error("invalid cluster model: {0}")]
    InvalidCluster(String),
    #[error("invalid policy {policy}: {reason}")]
    InvalidPolicy { policy: String, reason: String },
    #[error("simulation of `{0}` did not finish within the tick limit")]
    TickLimit(String),
    #[error("policy comparison needs at least one query and two policies")]
    NotEnoughRuns,
    #[error("baseline index {0} is out of range")]
    BadBaseline(usize),
    #[error("policy column `{name}` has {got} entries for {expected} queries")]
    ColumnLength {
        name: String,
        expected: usize,
        got: usize,
    },
}

/// Executor count over time; piecewise constant between samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Skyline {
    samples: Vec<(f64, u32)>,
    end_time: f64,
}

impl Skyline {
    pub fn new(samples: Vec<(f64, u32)>, end_time: f64) -> Result<Self, String> {
        match samples.first() {
            Some(&(0.0, _)) => {}
            _ => return Err("skyline must start at time 0".into()),
        }
        if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err("sample times must be strictly increasing".into());
        }
        let last = samples[samples.len() - 1].0;
        if !(end_time >= last) {
            return Err(format!("end time {end_time} precedes last sample {last}"));
        }
        Ok(Self { samples, end_time })
    }

    pub fn samples(&self) -> &[(f64, u32)] {
        &self.samples
    }

    pub fn end_time(&self) -> f64 {
        self.end_time
    }

    pub fn max_executors(&self) -> u32 {
        self.samples.iter().map(|s| s.1).max().unwrap_or(0)
    }

    /// Executor-seconds over the whole run.
    pub fn auc(&self) -> f64 {
        self.auc_between(0.0, self.end_time)
    }

    /// Executor-seconds over `[from, to]`, clipped to the run.
    pub fn auc_between(&self, from: f64, to: f64) -> f64 {
        let to = to.min(self.end_time);
        let mut total = 0.0;
        for (i, &(start, n)) in self.samples.iter().enumerate() {
            let end = self
                .samples
                .get(i + 1)
                .map_or(self.end_time, |next| next.0);
            let lo = start.max(from);
            let hi = end.min(to);
            if hi > lo {
                total += f64::from(n) * (hi - lo);
            }
        }
        total
    }

    /// Executors allocated at time `t`.
    pub fn executors_at(&self, t: f64) -> u32 {
        let idx = self.samples.partition_point(|s| s.0 <= t);
        if idx == 0 {
            0
        } else {
            self.samples[idx - 1].1
        }
    }

    /// CSV with columns `time_s,executors`, closed by a zero row at the end time.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "time_s,executors")?;
        for (t, n) in &self.samples {
            writeln!(out, "{t},{n}")?;
        }
        writeln!(out, "{},0", self.end_time)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    /// Seconds between successive grant batches.
    pub allocation_lag: f64,
    /// Executors per grant batch.
    pub grant_batch: u32,
    /// Maximum executors a single query can hold.
    pub capacity: u32,
}

impl Default for ClusterModel {
    fn default() -> Self {
        Self {
            allocation_lag: 5.0,
            grant_batch: 5,
            capacity: 256,
        }
    }
}

impl ClusterModel {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.capacity < 1 {
            return Err(SimError::NoCapacity);
        }
        if !(self.allocation_lag > 0.0) || !self.allocation_lag.is_finite() {
            return Err(SimError::InvalidCluster("allocation_lag must be positive".into()));
        }
        if self.grant_batch < 1 {
            return Err(SimError::InvalidCluster("grant_batch must be positive".into()));
        }
        Ok(())
    }
}

pub const DEFAULT_RAMP_INTERVAL: f64 = 1.0;
pub const DEFAULT_IDLE_TIMEOUT: f64 = 60.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AllocationPolicy {
    Static {
        n: u32,
    },
    Dynamic {
        n_min: u32,
        n_max: u32,
        ramp_interval: f64,
        idle_timeout: f64,
    },
    Rule {
        n_predicted: u32,
        start_n: u32,
        idle_timeout: f64,
    },
}

impl AllocationPolicy {
    pub fn static_(n: u32) -> Self {
        AllocationPolicy::Static { n }
    }

    pub fn dynamic(n_min: u32, n_max: u32) -> Self {
        AllocationPolicy::Dynamic {
            n_min,
            n_max,
            ramp_interval: DEFAULT_RAMP_INTERVAL,
            idle_timeout: DEFAULT_IDLE_TIMEOUT,
        }
    }

    pub fn rule(n_predicted: u32) -> Self {
        AllocationPolicy::Rule {
            n_predicted,
            start_n: 1,
            idle_timeout: DEFAULT_IDLE_TIMEOUT,
        }
    }

    pub fn with_idle_timeout(self, timeout: f64) -> Self {
        match self {
            AllocationPolicy::Static { .. } => self,
            AllocationPolicy::Dynamic {
                n_min,
                n_max,
                ramp_interval,
                ..
            } => AllocationPolicy::Dynamic {
                n_min,
                n_max,
                ramp_interval,
                idle_timeout: timeout,
            },
            AllocationPolicy::Rule {
                n_predicted,
                start_n,
                ..
            } => AllocationPolicy::Rule {
                n_predicted,
                start_n,
                idle_timeout: timeout,
            },
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |reason: &str| SimError::InvalidPolicy {
            policy: self.to_string(),
            reason: reason.into(),
        };
        match *self {
            AllocationPolicy::Static { n } if n < 1 => Err(bad("n must be >= 1")),
            AllocationPolicy::Dynamic {
                n_min,
                n_max,
                ramp_interval,
                idle_timeout,
            } => {
                if n_max < 1 || n_min > n_max {
                    Err(bad("need 1 <= n_max and n_min <= n_max"))
                } else if !(ramp_interval > 0.0) || !(idle_timeout > 0.0) {
                    Err(bad("intervals must be positive"))
                } else {
                    Ok(())
                }
            }
            AllocationPolicy::Rule {
                n_predicted,
                idle_timeout,
                ..
            } => {
                if n_predicted < 1 {
                    Err(bad("n_predicted must be >= 1"))
                } else if !(idle_timeout > 0.0) {
                    Err(bad("idle_timeout must be positive"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Largest count the policy will ever ask for.
    pub fn peak_request(&self) -> u32 {
        match *self {
            AllocationPolicy::Static { n } => n,
            AllocationPolicy::Dynamic { n_max, .. } => n_max,
            AllocationPolicy::Rule { n_predicted, .. } => n_predicted,
        }
    }
}

impl fmt::Display for AllocationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AllocationPolicy::Static { n } => write!(f, "SA({n})"),
            AllocationPolicy::Dynamic { n_min, n_max, .. } => write!(f, "DA({n_min},{n_max})"),
            AllocationPolicy::Rule { n_predicted, .. } => write!(f, "Rule({n_predicted})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Tick length in seconds.
    pub tick: f64,
    pub cores_per_executor: u32,
    /// Safety limit on simulated ticks.
    pub max_ticks: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            tick: 1.0,
            cores_per_executor: 4,
            max_ticks: 10_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub skyline: Skyline,
    pub runtime: f64,
    /// Task-seconds executed.
    pub work_done: f64,
    /// Time at which the allocation first reached the policy's requested
    /// count, if it ever did.
    pub full_grant_time: Option<f64>,
}

impl SimResult {
    pub fn auc(&self) -> f64 {
        self.skyline.auc()
    }

    pub fn max_executors(&self) -> u32 {
        self.skyline.max_executors()
    }
}

#[derive(Clone, Copy, Debug)]
struct Executor {
    busy: u32,
    idle_since: f64,
}

struct Running {
    executor: usize,
    remaining: f64,
}

/// Task-level progress of a query.
struct WorkState<'a> {
    profile: &'a QueryProfile,
    driver_left: f64,
    stage: usize,
    pending: VecDeque<f64>,
    running: Vec<Running>,
    done: f64,
}

impl<'a> WorkState<'a> {
    fn new(profile: &'a QueryProfile) -> Self {
        let mut s = WorkState {
            profile,
            driver_left: profile.driver_time,
            stage: 0,
            pending: VecDeque::new(),
            running: Vec::new(),
            done: 0.0,
        };
        if let Some(first) = profile.stages().first() {
            s.pending.extend(first.task_durations.iter().copied());
        }
        s
    }

    fn finished(&self) -> bool {
        self.driver_left <= 0.0 && self.stage >= self.profile.stages().len()
    }

    fn advance_stage_if_drained(&mut self) {
        while self.driver_left <= 0.0
            && self.pending.is_empty()
            && self.running.is_empty()
            && self.stage < self.profile.stages().len()
        {
            self.stage += 1;
            if let Some(next) = self.profile.stages().get(self.stage) {
                self.pending.extend(next.task_durations.iter().copied());
            }
        }
    }

    /// Tasks still waiting for a slot in the current stage.
    fn backlog(&self) -> usize {
        if self.driver_left > 0.0 {
            0
        } else {
            self.pending.len()
        }
    }
}

struct Allocator {
    policy: AllocationPolicy,
    cluster: ClusterModel,
    target: u32,
    next_grant: Option<f64>,
    backlog_since: Option<f64>,
    last_ramp: f64,
    to_add: u32,
}

impl Allocator {
    fn launch_count(&self) -> u32 {
        let n = match self.policy {
            AllocationPolicy::Static { n } => n,
            AllocationPolicy::Dynamic { n_min, .. } => n_min,
            AllocationPolicy::Rule {
                n_predicted,
                start_n,
                ..
            } => start_n.min(n_predicted),
        };
        n.min(self.cluster.capacity)
    }

    fn idle_timeout(&self) -> Option<f64> {
        match self.policy {
            AllocationPolicy::Static { .. } => None,
            AllocationPolicy::Dynamic { idle_timeout, .. }
            | AllocationPolicy::Rule { idle_timeout, .. } => Some(idle_timeout),
        }
    }

    fn floor(&self) -> u32 {
        match self.policy {
            AllocationPolicy::Dynamic { n_min, .. } => n_min,
            _ => 0,
        }
    }

    /// Updates the requested total for the state at time `now`.
    fn update_target(&mut self, now: f64, allocated: u32, work: &WorkState<'_>, e_c: u32) {
        let AllocationPolicy::Dynamic {
            n_min,
            n_max,
            ramp_interval,
            ..
        } = self.policy
        else {
            if allocated == 0 && self.target == 0 && !work.finished() {
                // Everything was released while work remains; ask again.
                self.target = self.policy.peak_request().min(self.cluster.capacity);
            }
            return;
        };
        let backlog = work.backlog();
        let outstanding_tasks = backlog + work.running.len();
        let needed = (outstanding_tasks as u32).div_ceil(e_c).clamp(n_min, n_max);
        if backlog > 0 {
            let since = *self.backlog_since.get_or_insert(now);
            if now - since + EPS >= ramp_interval && now - self.last_ramp + EPS >= ramp_interval {
                self.target = self.target.saturating_add(self.to_add)
                    .min(needed)
                    .min(self.cluster.capacity);
                self.to_add = self.to_add.saturating_mul(2);
                self.last_ramp = now;
            }
        } else {
            self.backlog_since = None;
            self.to_add = 1;
        }
        if self.target > needed {
            self.target = needed.max(allocated.min(self.target));
        }
    }

    /// Executors the cluster hands over at `now`.
    fn grants(&mut self, now: f64, allocated: u32) -> u32 {
        let outstanding = self.target.saturating_sub(allocated);
        if outstanding == 0 {
            self.next_grant = None;
            return 0;
        }
        let due = *self
            .next_grant
            .get_or_insert(now + self.cluster.allocation_lag);
        if now + EPS < due {
            return 0;
        }
        self.next_grant = Some(due + self.cluster.allocation_lag);
        outstanding.min(self.cluster.grant_batch)
    }
}

/// Runs one query under one policy.
pub fn simulate(
    profile: &QueryProfile,
    policy: &AllocationPolicy,
    cluster: &ClusterModel,
    options: &SimOptions,
) -> Result<SimResult, SimError> {
    cluster.validate()?;
    policy.validate()?;
    let e_c = options.cores_per_executor.max(1);
    let dt = options.tick;
    let mut alloc = Allocator {
        policy: *policy,
        cluster: *cluster,
        target: 0,
        next_grant: None,
        backlog_since: None,
        last_ramp: f64::NEG_INFINITY,
        to_add: 1,
    };
    let peak = policy.peak_request().min(cluster.capacity);
    let mut work = WorkState::new(profile);
    work.advance_stage_if_drained();

    let launch = alloc.launch_count();
    let mut executors: Vec<Executor> = (0..launch)
        .map(|_| Executor {
            busy: 0,
            idle_since: 0.0,
        })
        .collect();
    alloc.target = match *policy {
        AllocationPolicy::Static { n } => n,
        AllocationPolicy::Dynamic { n_min, .. } => n_min,
        AllocationPolicy::Rule { n_predicted, .. } => n_predicted,
    }
    .min(cluster.capacity);

    let mut samples: Vec<(f64, u32)> = Vec::new();
    let mut full_grant_time = None;
    let mut runtime = if work.finished() { Some(0.0) } else { None };
    let mut tick: u64 = 0;

    while runtime.is_none() {
        if tick >= options.max_ticks {
            return Err(SimError::TickLimit(profile.query_id.clone()));
        }
        let now = tick as f64 * dt;

        // Idle release.
        if let Some(timeout) = alloc.idle_timeout() {
            let floor = alloc.floor() as usize;
            let mut i = executors.len();
            while i > 0 && executors.len() > floor {
                i -= 1;
                if executors[i].busy == 0 && now - executors[i].idle_since + EPS >= timeout {
                    executors.remove(i);
                    for r in work.running.iter_mut() {
                        if r.executor > i {
                            r.executor -= 1;
                        }
                    }
                    alloc.target = alloc.target.saturating_sub(1).max(alloc.floor());
                }
            }
        }

        alloc.update_target(now, executors.len() as u32, &work, e_c);
        let granted = alloc.grants(now, executors.len() as u32);
        for _ in 0..granted {
            executors.push(Executor {
                busy: 0,
                idle_since: now,
            });
        }
        let allocated = executors.len() as u32;
        if full_grant_time.is_none() && allocated >= peak {
            full_grant_time = Some(now);
        }
        if samples.last().is_none_or(|s| s.1 != allocated) {
            samples.push((now, allocated));
        }

        runtime = run_tick(&mut work, &mut executors, now, dt, e_c);
        tick += 1;
    }

    let runtime = runtime.expect("loop exits with a runtime");
    if samples.is_empty() {
        samples.push((0.0, executors.len() as u32));
    }
    let skyline = Skyline::new(samples, runtime).expect("simulator emits valid skylines");
    Ok(SimResult {
        skyline,
        runtime,
        work_done: work.done,
        full_grant_time,
    })
}

/// Advances work over `[now, now + dt)`. Returns the completion time if the
/// query finishes inside the tick.
fn run_tick(
    work: &mut WorkState<'_>,
    executors: &mut [Executor],
    now: f64,
    dt: f64,
    e_c: u32,
) -> Option<f64> {
    let end = now + dt;
    let mut clock = now;
    loop {
        if work.driver_left > 0.0 {
            let step = work.driver_left.min(end - clock);
            work.driver_left -= step;
            clock += step;
            if work.driver_left <= EPS {
                work.driver_left = 0.0;
                work.advance_stage_if_drained();
            }
            if work.finished() {
                return Some(clock);
            }
            if clock >= end - EPS {
                return None;
            }
            continue;
        }
        // Fill free slots, packing onto the earliest executors.
        for (idx, ex) in executors.iter_mut().enumerate() {
            while ex.busy < e_c {
                let Some(d) = work.pending.pop_front() else {
                    break;
                };
                ex.busy += 1;
                work.running.push(Running {
                    executor: idx,
                    remaining: d,
                });
            }
            if work.pending.is_empty() {
                break;
            }
        }
        if work.running.is_empty() {
            // No slots available; wait for the next tick.
            return None;
        }
        let next_finish = work
            .running
            .iter()
            .map(|r| r.remaining)
            .fold(f64::INFINITY, f64::min);
        let step = next_finish.min(end - clock);
        for r in work.running.iter_mut() {
            r.remaining -= step;
        }
        work.done += step * work.running.len() as f64;
        clock += step;
        let mut i = 0;
        while i < work.running.len() {
            if work.running[i].remaining <= EPS {
                // Credit the sub-epsilon remainder so totals stay exact.
                work.done += work.running[i].remaining;
                let r = work.running.swap_remove(i);
                let ex = &mut executors[r.executor];
                ex.busy -= 1;
                if ex.busy == 0 {
                    ex.idle_since = clock;
                }
            } else {
                i += 1;
            }
        }
        work.advance_stage_if_drained();
        if work.finished() {
            return Some(clock);
        }
        if clock >= end - EPS {
            return None;
        }
    }
}

/// One policy applied across a workload: the same policy for every query,
/// or one per query (for predicted allocations).
#[derive(Clone, Debug, PartialEq)]
pub enum PolicyColumn {
    Fixed {
        name: String,
        policy: AllocationPolicy,
    },
    PerQuery {
        name: String,
        policies: Vec<AllocationPolicy>,
    },
}

impl PolicyColumn {
    pub fn fixed(policy: AllocationPolicy) -> Self {
        PolicyColumn::Fixed {
            name: policy.to_string(),
            policy,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            PolicyColumn::Fixed { name, .. } | PolicyColumn::PerQuery { name, .. } => name,
        }
    }

    pub fn policy_for(&self, query: usize) -> AllocationPolicy {
        match self {
            PolicyColumn::Fixed { policy, .. } => *policy,
            PolicyColumn::PerQuery { policies, .. } => policies[query],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub query_id: String,
    pub policy: String,
    pub policy_detail: AllocationPolicy,
    pub runtime: f64,
    pub auc: f64,
    pub max_executors: u32,
    pub full_grant: bool,
}

/// Ratios of one policy to the baseline for one query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub query_id: String,
    pub policy: String,
    pub baseline: String,
    /// max executors(policy) / max executors(baseline)
    pub n_ratio: f64,
    /// AUC(policy) / AUC(baseline)
    pub auc_ratio: f64,
    /// runtime(policy) / runtime(baseline); below one means the baseline is slower.
    pub speedup: f64,
    /// Both runs lasted long enough to receive every requested executor.
    pub full_grant: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyAggregate {
    pub policy: String,
    pub queries: usize,
    pub mean_n_ratio: f64,
    pub mean_auc_ratio: f64,
    pub mean_speedup: f64,
    pub mean_runtime: f64,
    pub total_auc: f64,
    /// Mean ratios restricted to queries flagged `full_grant`.
    pub full_grant_queries: usize,
    pub mean_auc_ratio_full_grant: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    pub baseline: String,
    /// `runs[q][p]`: query `q` under policy column `p`.
    pub runs: Vec<Vec<SimResult>>,
    pub summaries: Vec<RunSummary>,
    pub rows: Vec<RatioRow>,
    pub aggregates: Vec<PolicyAggregate>,
}

impl ComparisonReport {
    /// CSV with one row per (query, non-baseline policy).
    pub fn write_ratio_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(
            out,
            "query_id,policy,baseline,n_ratio,auc_ratio,speedup,full_grant"
        )?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.query_id, r.policy, r.baseline, r.n_ratio, r.auc_ratio, r.speedup, r.full_grant
            )?;
        }
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "baseline": self.baseline,
            "aggregates": self.aggregates,
            "runs": self.summaries,
        })
    }
}

/// Simulates every (query, policy) pair and reports ratios against the
/// `baseline` column.
pub fn compare_policies(
    profiles: &[QueryProfile],
    columns: &[PolicyColumn],
    baseline: usize,
    cluster: &ClusterModel,
    options: &SimOptions,
    parallelism: Parallelism,
) -> Result<ComparisonReport, SimError> {
    if profiles.is_empty() || columns.len() < 2 {
        return Err(SimError::NotEnoughRuns);
    }
    if baseline >= columns.len() {
        return Err(SimError::BadBaseline(baseline));
    }
    for c in columns {
        if let PolicyColumn::PerQuery { name, policies } = c {
            if policies.len() != profiles.len() {
                return Err(SimError::ColumnLength {
                    name: name.clone(),
                    expected: profiles.len(),
                    got: policies.len(),
                });
            }
        }
    }
    let runs: Vec<Vec<SimResult>> = parallelism
        .map_range(profiles.len(), |q| {
            columns
                .iter()
                .map(|c| simulate(&profiles[q], &c.policy_for(q), cluster, options))
                .collect::<Result<Vec<_>, _>>()
        })
        .into_iter()
        .collect::<Result<_, _>>()?;

    let base_name = columns[baseline].name().to_string();
    let mut summaries = Vec::new();
    let mut rows = Vec::new();
    for (q, profile) in profiles.iter().enumerate() {
        for (p, col) in columns.iter().enumerate() {
            let r = &runs[q][p];
            summaries.push(RunSummary {
                query_id: profile.query_id.clone(),
                policy: col.name().to_string(),
                policy_detail: col.policy_for(q),
                runtime: r.runtime,
                auc: r.auc(),
                max_executors: r.max_executors(),
                full_grant: r.full_grant_time.is_some(),
            });
            if p == baseline {
                continue;
            }
            let b = &runs[q][baseline];
            rows.push(RatioRow {
                query_id: profile.query_id.clone(),
                policy: col.name().to_string(),
                baseline: base_name.clone(),
                n_ratio: f64::from(r.max_executors()) / f64::from(b.max_executors().max(1)),
                auc_ratio: r.auc() / b.auc(),
                speedup: r.runtime / b.runtime,
                full_grant: r.full_grant_time.is_some() && b.full_grant_time.is_some(),
            });
        }
    }
    let aggregates = columns
        .iter()
        .enumerate()
        .map(|(p, col)| {
            let mine: Vec<&RatioRow> = rows.iter().filter(|r| r.policy == col.name()).collect();
            let mean = |f: &dyn Fn(&RatioRow) -> f64| {
                if p == baseline {
                    1.0
                } else {
                    crate::stats::mean(&mine.iter().map(|r| f(r)).collect::<Vec<_>>())
                }
            };
            let full: Vec<f64> = mine.iter().filter(|r| r.full_grant).map(|r| r.auc_ratio).collect();
            PolicyAggregate {
                policy: col.name().to_string(),
                queries: profiles.len(),
                mean_n_ratio: mean(&|r| r.n_ratio),
                mean_auc_ratio: mean(&|r| r.auc_ratio),
                mean_speedup: mean(&|r| r.speedup),
                mean_runtime: crate::stats::mean(
                    &runs.iter().map(|qr| qr[p].runtime).collect::<Vec<_>>(),
                ),
                total_auc: runs.iter().map(|qr| qr[p].auc()).sum(),
                full_grant_queries: if p == baseline {
                    runs.iter().filter(|qr| qr[p].full_grant_time.is_some()).count()
                } else {
                    full.len()
                },
                mean_auc_ratio_full_grant: if p == baseline {
                    Some(1.0)
                } else if full.is_empty() {
                    None
                } else {
                    Some(crate::stats::mean(&full))
                },
            }
        })
        .collect();
    Ok(ComparisonReport {
        baseline: base_name,
        runs,
        summaries,
        rows,
        aggregates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedsim::{ProfiledAt, StageProfile};

    fn profile(driver: f64, stages: Vec<Vec<f64>>) -> QueryProfile {
        QueryProfile::new(
            "q",
            driver,
            stages
                .into_iter()
                .enumerate()
                .map(|(i, t)| StageProfile {
                    stage_id: format!("s{i}"),
                    task_durations: t,
                    depends_on: vec![],
                })
                .collect(),
            ProfiledAt::default(),
        )
        .unwrap()
    }

    fn one_core() -> SimOptions {
        SimOptions {
            cores_per_executor: 1,
            ..Default::default()
        }
    }

    #[test]
    fn auc_of_step_skylines() {
        let flat = Skyline::new(vec![(0.0, 5)], 100.0).unwrap();
        assert_eq!(flat.auc(), 500.0);
        let step = Skyline::new(vec![(0.0, 2), (10.0, 4)], 20.0).unwrap();
        assert_eq!(step.auc(), 60.0);
        assert_eq!(step.max_executors(), 4);
        assert_eq!(step.auc_between(0.0, 15.0) + step.auc_between(15.0, 20.0), 60.0);
        assert!(Skyline::new(vec![(1.0, 2)], 3.0).is_err());
        assert!(Skyline::new(vec![(0.0, 2), (0.0, 3)], 3.0).is_err());
    }

    #[test]
    fn static_allocation_flat_skyline() {
        let p = profile(0.0, vec![vec![1.0; 500]]);
        let r = simulate(&p, &AllocationPolicy::static_(5), &ClusterModel::default(), &one_core()).unwrap();
        assert!((r.runtime - 100.0).abs() < 1e-9);
        assert_eq!(r.skyline.samples(), &[(0.0, 5)]);
        assert!((r.auc() - 500.0).abs() < 1e-9);
        assert!((r.work_done - 500.0).abs() < 1e-9);
    }

    #[test]
    fn rule_ramps_to_prediction() {
        let cluster = ClusterModel {
            allocation_lag: 6.75,
            grant_batch: 5,
            capacity: 100,
        };
        let policy = AllocationPolicy::Rule {
            n_predicted: 25,
            start_n: 5,
            idle_timeout: 60.0,
        };
        let p = profile(0.0, vec![vec![4.0; 2000]]);
        let r = simulate(&p, &policy, &cluster, &one_core()).unwrap();
        assert_eq!(r.max_executors(), 25);
        assert_eq!(r.full_grant_time, Some(27.0));
        let counts: Vec<u32> = r.skyline.samples().iter().map(|s| s.1).collect();
        assert_eq!(counts, vec![5, 10, 15, 20, 25]);
    }

    #[test]
    fn dynamic_respects_bounds_and_releases_idle() {
        // A wide stage followed by a long serial tail.
        let p = profile(0.0, vec![vec![2.0; 400], vec![200.0]]);
        let policy = AllocationPolicy::dynamic(1, 48);
        let r = simulate(&p, &policy, &ClusterModel::default(), &one_core()).unwrap();
        assert!(r.max_executors() <= 48);
        assert!(r.max_executors() > 1);
        let last = r.skyline.samples().last().unwrap().1;
        assert_eq!(last, 1, "idle executors released down to n_min");
        assert!((r.work_done - p.total_work()).abs() < 1e-6);
    }

    #[test]
    fn dynamic_overshoots_rule_on_bursty_work() {
        // Burst of short tasks wants many executors, then a long narrow tail
        // keeps them idle until the timeout.
        let p = profile(0.0, vec![vec![3.0; 600], vec![30.0; 4], vec![90.0; 4]]);
        let cluster = ClusterModel::default();
        let da = simulate(&p, &AllocationPolicy::dynamic(1, 48), &cluster, &one_core()).unwrap();
        let rule = simulate(&p, &AllocationPolicy::rule(12), &cluster, &one_core()).unwrap();
        assert!(da.auc() > rule.auc(), "DA {} vs Rule {}", da.auc(), rule.auc());
        assert!(rule.max_executors() <= 12);
    }

    #[test]
    fn invalid_inputs() {
        let p = profile(1.0, vec![]);
        let bad = ClusterModel {
            capacity: 0,
            ..Default::default()
        };
        assert_eq!(
            simulate(&p, &AllocationPolicy::static_(1), &bad, &one_core()).unwrap_err(),
            SimError::NoCapacity
        );
        assert!(simulate(&p, &AllocationPolicy::static_(0), &ClusterModel::default(), &one_core()).is_err());
        assert!(simulate(&p, &AllocationPolicy::dynamic(5, 2), &ClusterModel::default(), &one_core()).is_err());
    }

    #[test]
    fn driver_only_query() {
        let p = profile(7.5, vec![]);
        let r = simulate(&p, &AllocationPolicy::static_(3), &ClusterModel::default(), &one_core()).unwrap();
        assert_eq!(r.runtime, 7.5);
        assert_eq!(r.auc(), 22.5);
    }

    #[test]
    fn identical_policies_give_unit_ratios() {
        let profiles = vec![profile(2.0, vec![vec![1.5; 100]]), profile(0.0, vec![vec![3.0; 40]])];
        let cols = vec![
            PolicyColumn::fixed(AllocationPolicy::static_(8)),
            PolicyColumn::Fixed {
                name: "again".into(),
                policy: AllocationPolicy::static_(8),
            },
        ];
        let rep = compare_policies(&profiles, &cols, 0, &ClusterModel::default(), &one_core(), Parallelism::default())
            .unwrap();
        for r in &rep.rows {
            assert_eq!((r.n_ratio, r.auc_ratio, r.speedup), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn static_48_vs_24_closed_form() {
        // 48 * 24 unit tasks: both allocations stay saturated every tick.
        let p = profile(0.0, vec![vec![1.0; 48 * 24]]);
        let cols = vec![
            PolicyColumn::fixed(AllocationPolicy::static_(24)),
            PolicyColumn::fixed(AllocationPolicy::static_(48)),
        ];
        let cluster = ClusterModel {
            capacity: 64,
            ..Default::default()
        };
        let rep = compare_policies(&[p], &cols, 0, &cluster, &one_core(), Parallelism::Sequential).unwrap();
        let row = &rep.rows[0];
        assert!((row.n_ratio - 2.0).abs() < 1e-12);
        assert!((row.speedup - 0.5).abs() < 1e-12);
        assert!((row.auc_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn comparison_needs_two_policies() {
        let p = profile(1.0, vec![]);
        let cols = vec![PolicyColumn::fixed(AllocationPolicy::static_(1))];
        assert_eq!(
            compare_policies(&[p], &cols, 0, &ClusterModel::default(), &one_core(), Parallelism::Sequential)
                .unwrap_err(),
            SimError::NotEnoughRuns
        );
    }
}
