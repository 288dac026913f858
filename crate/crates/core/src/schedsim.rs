//! Critical-path runtime estimator.
//!
//! From the per-stage task timings of one profiled run, the runtime at any
//! executor count is estimated as the driver time plus, for every stage, the
//! larger of its longest task and its total work spread over the available
//! task slots. Stages are composed serially, so independent branches still
//! add up; the estimate is therefore conservative but always monotone.

use crate::features::{vectorize, FeatureSchema, WorkloadRecord};
use crate::forest::TrainingExample;
use crate::ppm::{fit, AllocationCurve, PpmError, PpmFamily};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("duplicate stage id `{0}`")]
    DuplicateStage(String),
    #[error("stage `{0}` has no tasks")]
    EmptyStage(String),
    #[error("stage `{stage}` has a non-positive or non-finite task duration {value}")]
    InvalidTask { stage: String, value: f64 },
    #[error("stage `{stage}` depends on unknown stage `{missing}`")]
    UnknownDependency { stage: String, missing: String },
    #[error("stage dependency graph has a cycle through `{0}`")]
    Cycle(String),
    #[error("driver_time must be finite and non-negative, got {0}")]
    InvalidDriverTime(f64),
    #[error("profiled_at values must be >= 1")]
    InvalidProfiledAt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageProfile {
    pub stage_id: String,
    pub task_durations: Vec<f64>,
    pub depends_on: Vec<String>,
}

impl StageProfile {
    pub fn critical_task(&self) -> f64 {
        self.task_durations.iter().copied().fold(0.0, f64::max)
    }

    pub fn total_work(&self) -> f64 {
        self.task_durations.iter().sum()
    }

    /// `max(longest task, work / slots)`.
    pub fn time_with_slots(&self, slots: u64) -> f64 {
        self.critical_task().max(self.total_work() / slots as f64)
    }
}

/// Executor configuration a profile was recorded under.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfiledAt {
    pub n: u32,
    pub e_c: u32,
}

impl Default for ProfiledAt {
    fn default() -> Self {
        ProfiledAt { n: 16, e_c: 4 }
    }
}

/// Per-stage timings of one run of a query. Stages are kept in a
/// dependency-respecting order.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryProfile {
    pub query_id: String,
    pub driver_time: f64,
    stages: Vec<StageProfile>,
    pub profiled_at: ProfiledAt,
}

impl QueryProfile {
    pub fn new(
        query_id: impl Into<String>,
        driver_time: f64,
        stages: Vec<StageProfile>,
        profiled_at: ProfiledAt,
    ) -> Result<Self, ProfileError> {
        if !driver_time.is_finite() || driver_time < 0.0 {
            return Err(ProfileError::InvalidDriverTime(driver_time));
        }
        if profiled_at.n == 0 || profiled_at.e_c == 0 {
            return Err(ProfileError::InvalidProfiledAt);
        }
        let mut ids = HashSet::new();
        for s in &stages {
            if !ids.insert(s.stage_id.as_str()) {
                return Err(ProfileError::DuplicateStage(s.stage_id.clone()));
            }
            if s.task_durations.is_empty() {
                return Err(ProfileError::EmptyStage(s.stage_id.clone()));
            }
            if let Some(&bad) = s
                .task_durations
                .iter()
                .find(|t| !t.is_finite() || **t <= 0.0)
            {
                return Err(ProfileError::InvalidTask {
                    stage: s.stage_id.clone(),
                    value: bad,
                });
            }
        }
        for s in &stages {
            for d in &s.depends_on {
                if !ids.contains(d.as_str()) {
                    return Err(ProfileError::UnknownDependency {
                        stage: s.stage_id.clone(),
                        missing: d.clone(),
                    });
                }
            }
        }
        let stages = topological_order(stages)?;
        Ok(Self {
            query_id: query_id.into(),
            driver_time,
            stages,
            profiled_at,
        })
    }

    /// Stages in execution order.
    pub fn stages(&self) -> &[StageProfile] {
        &self.stages
    }

    pub fn total_work(&self) -> f64 {
        self.stages.iter().map(StageProfile::total_work).sum()
    }

    /// Runtime with unbounded slots: driver time plus every stage's longest task.
    pub fn lower_bound(&self) -> f64 {
        self.driver_time + self.stages.iter().map(StageProfile::critical_task).sum::<f64>()
    }
}

/// Kahn's algorithm, stable with respect to input order.
fn topological_order(stages: Vec<StageProfile>) -> Result<Vec<StageProfile>, ProfileError> {
    let index: HashMap<&str, usize> = stages
        .iter()
        .enumerate()
        .map(|(i, s)| (s.stage_id.as_str(), i))
        .collect();
    let mut indegree: Vec<usize> = stages.iter().map(|s| s.depends_on.len()).collect();
    let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); stages.len()];
    for (i, s) in stages.iter().enumerate() {
        for d in &s.depends_on {
            dependents[index[d.as_str()]].push(i);
        }
    }
    let mut ready: std::collections::BTreeSet<usize> =
        (0..stages.len()).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(stages.len());
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &j in &dependents[i] {
            indegree[j] -= 1;
            if indegree[j] == 0 {
                ready.insert(j);
            }
        }
    }
    if order.len() != stages.len() {
        let stuck = (0..stages.len()).find(|i| indegree[*i] > 0).unwrap();
        return Err(ProfileError::Cycle(stages[stuck].stage_id.clone()));
    }
    let mut slots: Vec<Option<StageProfile>> = stages.into_iter().map(Some).collect();
    Ok(order.into_iter().map(|i| slots[i].take().unwrap()).collect())
}

/// JSON layout of a profile inside a workload line.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawProfile {
    #[serde(default)]
    pub driver_time: f64,
    #[serde(default)]
    pub stages: Vec<RawStage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profiled_at: Option<ProfiledAt>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawStage {
    pub id: String,
    pub tasks: Vec<f64>,
    #[serde(default)]
    pub depends_on: Vec<String>,
}

impl RawProfile {
    pub fn to_profile(&self, query_id: &str) -> Result<QueryProfile, ProfileError> {
        QueryProfile::new(
            query_id,
            self.driver_time,
            self.stages
                .iter()
                .map(|s| StageProfile {
                    stage_id: s.id.clone(),
                    task_durations: s.tasks.clone(),
                    depends_on: s.depends_on.clone(),
                })
                .collect(),
            self.profiled_at.unwrap_or_default(),
        )
    }

    pub fn from_profile(p: &QueryProfile) -> Self {
        RawProfile {
            driver_time: p.driver_time,
            stages: p
                .stages
                .iter()
                .map(|s| RawStage {
                    id: s.stage_id.clone(),
                    tasks: s.task_durations.clone(),
                    depends_on: s.depends_on.clone(),
                })
                .collect(),
            profiled_at: Some(p.profiled_at),
        }
    }
}

/// Estimated runtime with `n` executors of `e_c` cores each.
pub fn estimate_runtime(profile: &QueryProfile, n: u32, e_c: u32) -> f64 {
    estimate_runtime_slots(profile, u64::from(n.max(1)) * u64::from(e_c.max(1)))
}

/// Estimated runtime with `slots` concurrent task slots.
pub fn estimate_runtime_slots(profile: &QueryProfile, slots: u64) -> f64 {
    let slots = slots.max(1);
    profile.driver_time
        + profile
            .stages
            .iter()
            .map(|s| s.time_with_slots(slots))
            .sum::<f64>()
}

/// Estimated runtimes at each executor count of `n_grid`.
///
/// A profile with zero driver time and no stages has no positive runtime to
/// report, which surfaces as [`PpmError::InvalidRuntime`].
pub fn estimate_curve(
    profile: &QueryProfile,
    n_grid: &[u32],
    e_c: u32,
) -> Result<AllocationCurve, PpmError> {
    AllocationCurve::executors(
        n_grid
            .iter()
            .map(|&n| (n, estimate_runtime(profile, n, e_c)))
            .collect(),
    )
}

/// Training targets for both model families, one example per query.
#[derive(Clone, Debug, Default)]
pub struct AugmentedData {
    pub power_law: Vec<TrainingExample>,
    pub amdahl: Vec<TrainingExample>,
    /// Query ids left out, with the reason.
    pub skipped: Vec<(String, String)>,
}

impl AugmentedData {
    pub fn examples(&self, family: PpmFamily) -> &[TrainingExample] {
        match family {
            PpmFamily::PowerLaw => &self.power_law,
            PpmFamily::Amdahl => &self.amdahl,
        }
    }
}

/// Training curve for a record: simulated from its profile when present,
/// otherwise its observed curve.
pub fn training_curve(
    record: &WorkloadRecord,
    n_grid: &[u32],
    e_c: u32,
) -> Result<AllocationCurve, String> {
    if let Some(p) = &record.profile {
        estimate_curve(p, n_grid, e_c).map_err(|e| e.to_string())
    } else if let Some(c) = &record.observed_curve {
        Ok(c.clone())
    } else {
        Err("record has neither profile nor curve".into())
    }
}

/// Fits both model families to each record's training curve.
pub fn augment_training_data(
    records: &[WorkloadRecord],
    schema: &Arc<FeatureSchema>,
    n_grid: &[u32],
    e_c: u32,
) -> AugmentedData {
    let mut out = AugmentedData::default();
    for record in records {
        let curve = match training_curve(record, n_grid, e_c) {
            Ok(c) => c,
            Err(reason) => {
                log::warn!("skipping `{}`: {reason}", record.query_id);
                out.skipped.push((record.query_id.clone(), reason));
                continue;
            }
        };
        let fits: Result<Vec<_>, _> = PpmFamily::ALL.iter().map(|&f| fit(f, &curve)).collect();
        let fits = match fits {
            Ok(f) => f,
            Err(e) => {
                log::warn!("skipping `{}`: {e}", record.query_id);
                out.skipped.push((record.query_id.clone(), e.to_string()));
                continue;
            }
        };
        let x = vectorize(&record.features, schema);
        for (family, f) in PpmFamily::ALL.iter().zip(fits) {
            let example = TrainingExample {
                query_id: record.query_id.clone(),
                x: x.clone(),
                y: f.model.params(),
                degenerate: f.degenerate,
            };
            match family {
                PpmFamily::PowerLaw => out.power_law.push(example),
                PpmFamily::Amdahl => out.amdahl.push(example),
            }
        }
    }
    out
}
