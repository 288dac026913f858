//! Synthetic workloads: plan features, per-stage task profiles and measured
//! curves that all follow from one hidden feature-to-work mapping.

use crate::features::{QueryFeatures, WorkloadRecord};
use crate::ppm::AllocationCurve;
use crate::schedsim::{estimate_runtime, ProfiledAt, QueryProfile, StageProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use std::collections::BTreeMap;
use thiserror::Error;

/// Operator vocabulary of generated plans.
pub const OPERATORS: [&str; 14] = [
    "Aggregate",
    "BroadcastExchange",
    "Exchange",
    "Expand",
    "Filter",
    "Generate",
    "Join",
    "Limit",
    "Project",
    "Scan",
    "Sort",
    "Subquery",
    "Union",
    "Window",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("query count must be at least 1")]
    ZeroCount,
    #[error("noise must be finite and in [0, 0.5), got {0}")]
    InvalidNoise(f64),
    #[error("allocation grid must be non-empty and strictly increasing from 1 or more")]
    InvalidGrid,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub count: usize,
    pub seed: u64,
    /// Relative standard deviation of the multiplicative noise on measured runtimes.
    pub noise: f64,
    pub grid: Vec<u32>,
    pub cores_per_executor: u32,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            count: 103,
            seed: 0,
            noise: 0.05,
            grid: crate::DEFAULT_GRID.to_vec(),
            cores_per_executor: 4,
        }
    }
}

/// Shape parameters for a random profile.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileShape {
    pub driver_time: f64,
    /// Core-seconds of task work per stage.
    pub stage_work: Vec<f64>,
    /// Mean task duration used to choose the task count of a stage.
    pub mean_task: f64,
    /// Log-space standard deviation of task durations.
    pub skew: f64,
}

/// Draws a profile whose stage totals equal `shape.stage_work` exactly, with
/// log-normal task durations.
pub fn random_profile(
    query_id: &str,
    shape: &ProfileShape,
    profiled_at: ProfiledAt,
    rng: &mut impl Rng,
) -> QueryProfile {
    let lognormal = LogNormal::new(0.0, shape.skew.max(1e-6)).expect("valid sigma");
    let stages = shape
        .stage_work
        .iter()
        .enumerate()
        .map(|(i, &work)| {
            let tasks = ((work / shape.mean_task).round() as usize).clamp(1, 4000);
            let raw: Vec<f64> = (0..tasks).map(|_| lognormal.sample(rng)).collect();
            let scale = work / raw.iter().sum::<f64>();
            StageProfile {
                stage_id: format!("s{i}"),
                task_durations: raw.into_iter().map(|d| d * scale).collect(),
                depends_on: if i == 0 { vec![] } else { vec![format!("s{}", i - 1)] },
            }
        })
        .collect();
    QueryProfile::new(query_id, shape.driver_time, stages, profiled_at)
        .expect("generated profile is valid")
}

/// Hidden work model behind a feature set: what a query's profile looks like
/// before per-task randomness.
fn hidden_shape(f: &QueryFeatures, rng: &mut impl Rng) -> ProfileShape {
    let op = |name: &str| f.operator_counts.get(name).copied().unwrap_or(0) as f64;
    let gb = f.total_input_bytes as f64 / 1e9;
    let rows_per_byte = f.total_rows_processed as f64 / f.total_input_bytes.max(1) as f64;
    let complexity = 1.0 + 0.35 * op("Join") + 0.2 * op("Aggregate") + 0.15 * op("Sort")
        + 0.1 * op("Window");
    let work = 40.0 * gb.powf(0.9) * complexity * (1.0 + 50.0 * rows_per_byte);
    let stages = (1 + op("Exchange") as usize + op("Join") as usize / 2).clamp(1, 12);
    // Stage weights decay geometrically: the scan-heavy first stages carry
    // most of the work, later stages are small and latency-bound.
    let weights: Vec<f64> = (0..stages)
        .map(|i| 0.6f64.powi(i as i32) * rng.random_range(0.7..1.3))
        .collect();
    let wsum: f64 = weights.iter().sum();
    ProfileShape {
        driver_time: 2.0 + 0.4 * f.total_operators as f64 + 0.5 * f.max_depth as f64,
        stage_work: weights.iter().map(|w| work * w / wsum).collect(),
        mean_task: 1.5 + 4.0 * (gb / (gb + 20.0)),
        skew: 0.25 + 0.08 * op("Join").min(6.0),
    }
}

fn random_features(rng: &mut impl Rng) -> QueryFeatures {
    let maxima: [u64; 14] = [4, 3, 8, 1, 6, 1, 8, 1, 10, 0, 2, 2, 2, 1];
    let sources = rng.random_range(1..=8u64);
    let mut counts = BTreeMap::new();
    for (name, &max) in OPERATORS.iter().zip(&maxima) {
        let c = if *name == "Scan" {
            sources
        } else if *name == "Project" {
            rng.random_range(1..=max)
        } else {
            rng.random_range(0..=max)
        };
        if c > 0 {
            counts.insert(name.to_string(), c);
        }
    }
    let total: u64 = counts.values().sum();
    let joins = counts.get("Join").copied().unwrap_or(0);
    let aggs = counts.get("Aggregate").copied().unwrap_or(0);
    let depth = (2 + joins + aggs + rng.random_range(0..=3)).min(total);
    let bytes = 10f64.powf(rng.random_range(8.0..11.0)) as u64;
    let row_width = rng.random_range(60.0..240.0);
    let rows = (bytes as f64 / row_width * (1.0 + 0.5 * joins as f64)) as u64;
    QueryFeatures {
        operator_counts: counts,
        total_operators: total,
        max_depth: depth,
        num_input_sources: sources,
        total_input_bytes: bytes,
        total_rows_processed: rows,
    }
}

/// Generates `config.count` records with features, a profile recorded at
/// 16 executors, and a noisy measured curve on `config.grid`.
pub fn generate_workload(config: &SyntheticConfig) -> Result<Vec<WorkloadRecord>, SynthError> {
    if config.count == 0 {
        return Err(SynthError::ZeroCount);
    }
    if !config.noise.is_finite() || !(0.0..0.5).contains(&config.noise) {
        return Err(SynthError::InvalidNoise(config.noise));
    }
    if config.grid.is_empty()
        || config.grid[0] == 0
        || config.grid.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(SynthError::InvalidGrid);
    }
    let profiled_at = ProfiledAt {
        n: 16,
        e_c: config.cores_per_executor.max(1),
    };
    let noise = Normal::new(0.0, config.noise.max(0.0)).expect("valid sd");
    Ok((0..config.count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64);
            let query_id = format!("q{:04}", i + 1);
            let features = random_features(&mut rng);
            let shape = hidden_shape(&features, &mut rng);
            let profile = random_profile(&query_id, &shape, profiled_at, &mut rng);
            let points = config
                .grid
                .iter()
                .map(|&n| {
                    let clean = estimate_runtime(&profile, n, profiled_at.e_c);
                    let factor = (1.0 + noise.sample(&mut rng)).max(0.5);
                    (n, clean * factor)
                })
                .collect();
            WorkloadRecord {
                query_id,
                features,
                observed_curve: Some(AllocationCurve::executors(points).expect("positive runtimes")),
                profile: Some(profile),
            }
        })
        .collect())
}
