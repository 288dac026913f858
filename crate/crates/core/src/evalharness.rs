//! Repeated k-fold cross-validation of the parameter model, selection
//! quality, and feature ablation.

use crate::features::{vectorize, FeatureError, FeatureSchema, FeatureVector, WorkloadRecord};
use crate::forest::{ForestConfig, ForestError, ParameterModel, TrainingExample, DEFAULT_ESTIMATORS};
use crate::par::Parallelism;
use crate::ppm::{AllocationCurve, PpmFamily, PricePerfModel};
use crate::schedsim::{augment_training_data, estimate_curve};
use crate::select::{error_metric, ObjectiveKind, SelectError, SelectionObjective};
use crate::stats::{mean, std_dev};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::sync::Arc;
use thiserror::Error;

pub const TEST_SERIES: &str = "test";
pub const TRAIN_SERIES: &str = "train";
/// Runtimes estimated directly from each query's task profile.
pub const PROFILE_SERIES: &str = "profile_estimate";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cross-validation needs k >= 2 and repeats >= 1 (k = {k}, repeats = {repeats})")]
    InvalidPlan { k: usize, repeats: usize },
    #[error("workload has {records} records, fewer than k = {k}")]
    TooFewRecords { records: usize, k: usize },
    #[error("record `{0}` has no observed curve")]
    MissingObservedCurve(String),
    #[error("evaluation grid must be non-empty and within the selection range")]
    InvalidGrid,
    #[error("fold {fold} of repeat {repeat}")]
    Training {
        repeat: usize,
        fold: usize,
        source: ForestError,
    },
    #[error("subset `{name}`")]
    Subset { name: String, source: FeatureError },
    #[error(transparent)]
    Select(#[from] SelectError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvPlan {
    pub k: usize,
    pub repeats: usize,
    pub rng_seed: u64,
}

impl Default for CvPlan {
    fn default() -> Self {
        Self {
            k: 5,
            repeats: 10,
            rng_seed: 0,
        }
    }
}

impl CvPlan {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.k < 2 || self.repeats < 1 {
            return Err(EvalError::InvalidPlan {
                k: self.k,
                repeats: self.repeats,
            });
        }
        Ok(())
    }

    /// Test-fold record indices for every repeat: `folds[repeat][fold]`.
    /// Each repeat is a shuffled partition into `k` folds whose sizes differ
    /// by at most one.
    pub fn folds(&self, records: usize) -> Result<Vec<Vec<Vec<usize>>>, EvalError> {
        self.validate()?;
        if records < self.k {
            return Err(EvalError::TooFewRecords { records, k: self.k });
        }
        Ok((0..self.repeats)
            .map(|r| {
                let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
                rng.set_stream(r as u64);
                let mut order: Vec<usize> = (0..records).collect();
                order.shuffle(&mut rng);
                let base = records / self.k;
                let extra = records % self.k;
                let mut start = 0;
                (0..self.k)
                    .map(|f| {
                        let len = base + usize::from(f < extra);
                        let mut fold = order[start..start + len].to_vec();
                        fold.sort_unstable();
                        start += len;
                        fold
                    })
                    .collect()
            })
            .collect())
    }

    /// Seed of the forest trained for one fold.
    pub fn fold_seed(&self, repeat: usize, fold: usize) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(1 << 32 | (repeat * self.k + fold) as u64);
        rng.next_u64()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub family: PpmFamily,
    /// Allocations at which the error metric is reported.
    pub grid: Vec<u32>,
    /// Grid used to build training curves from profiles.
    pub training_grid: Vec<u32>,
    pub cores_per_executor: u32,
    pub n_estimators: usize,
    /// Limited-slowdown thresholds evaluated alongside the elbow objective.
    pub slowdowns: Vec<f64>,
    pub n_min: u32,
    pub n_max: u32,
    pub parallelism: Parallelism,
}

impl EvalConfig {
    pub fn new(family: PpmFamily) -> Self {
        Self {
            family,
            grid: crate::DEFAULT_GRID.to_vec(),
            training_grid: crate::DEFAULT_GRID.to_vec(),
            cores_per_executor: 4,
            n_estimators: DEFAULT_ESTIMATORS,
            slowdowns: vec![1.05, 1.1, 1.25],
            n_min: 1,
            n_max: 48,
            parallelism: Parallelism::default(),
        }
    }

    fn objectives(&self) -> Result<Vec<(String, SelectionObjective)>, EvalError> {
        let mut out = Vec::new();
        for &h in &self.slowdowns {
            out.push((
                format!("slowdown_{h}"),
                SelectionObjective::new(ObjectiveKind::LimitedSlowdown { h }, self.n_min, self.n_max)?,
            ));
        }
        out.push((
            "elbow".to_string(),
            SelectionObjective::new(ObjectiveKind::Elbow, self.n_min, self.n_max)?,
        ));
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorPoint {
    pub n: u32,
    pub mean: f64,
    pub std: f64,
}

/// Error metric per allocation, aggregated over folds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorSeries {
    pub name: String,
    pub folds: usize,
    pub points: Vec<ErrorPoint>,
}

impl ErrorSeries {
    pub fn at(&self, n: u32) -> Option<&ErrorPoint> {
        self.points.iter().find(|p| p.n == n)
    }
}

/// Outcome of one objective applied to the predicted curves of held-out queries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionStats {
    pub objective: String,
    pub queries: usize,
    pub mean_n: f64,
    pub std_n: f64,
    /// Observed runtime at the chosen `n` over the observed minimum in range.
    pub mean_slowdown: f64,
    pub max_slowdown: f64,
    /// Mean `n` the same objective picks on the observed curves.
    pub mean_oracle_n: f64,
    /// Mean of `1 - n / n_max`.
    pub mean_savings: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub repeat: usize,
    pub fold: usize,
    pub test_ids: Vec<String>,
    /// Ids of the examples the fold's model was trained on.
    #[serde(skip)]
    pub train_ids: Vec<String>,
    /// Test error metric at each grid allocation.
    pub test_error: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub family: PpmFamily,
    pub plan: CvPlan,
    pub grid: Vec<u32>,
    pub features: Vec<String>,
    pub series: Vec<ErrorSeries>,
    pub selection: Vec<SelectionStats>,
    pub folds: Vec<FoldSummary>,
}

impl EvalReport {
    pub fn series(&self, name: &str) -> Option<&ErrorSeries> {
        self.series.iter().find(|s| s.name == name)
    }

    pub fn test_error_at(&self, n: u32) -> Option<f64> {
        self.series(TEST_SERIES)?.at(n).map(|p| p.mean)
    }

    /// One row per allocation per series.
    pub fn write_error_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "family,series,n,mean,std,folds")?;
        for s in &self.series {
            for p in &s.points {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    self.family.short_name(),
                    s.name,
                    p.n,
                    p.mean,
                    p.std,
                    s.folds
                )?;
            }
        }
        Ok(())
    }

    pub fn write_selection_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(
            out,
            "family,objective,queries,mean_n,std_n,mean_slowdown,max_slowdown,mean_oracle_n,mean_savings"
        )?;
        for s in &self.selection {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                self.family.short_name(),
                s.objective,
                s.queries,
                s.mean_n,
                s.std_n,
                s.mean_slowdown,
                s.max_slowdown,
                s.mean_oracle_n,
                s.mean_savings
            )?;
        }
        Ok(())
    }
}

struct FoldOutcome {
    summary: FoldSummary,
    series: Vec<(&'static str, Vec<f64>)>,
    /// Per objective: (chosen n, realized slowdown, oracle n) per test query.
    selections: Vec<Vec<(u32, f64, u32)>>,
}

/// Feature columns kept by an evaluation.
struct Projection {
    schema: Arc<FeatureSchema>,
    indices: Option<Vec<usize>>,
}

impl Projection {
    fn full(records: &[WorkloadRecord]) -> Self {
        Self {
            schema: Arc::new(FeatureSchema::from_features(records.iter().map(|r| &r.features))),
            indices: None,
        }
    }

    fn subset(full: &Arc<FeatureSchema>, subset: &[String]) -> Result<Self, FeatureError> {
        let indices = full.subset_indices(subset)?;
        Ok(Self {
            schema: Arc::new(full.select(&indices)),
            indices: Some(indices),
        })
    }

    fn project(&self, x: &FeatureVector) -> FeatureVector {
        match &self.indices {
            Some(idx) => x.select(idx, Arc::clone(&self.schema)),
            None => x.clone(),
        }
    }
}

/// Runs `plan` over `records` for one model family.
pub fn cross_validate(
    records: &[WorkloadRecord],
    config: &EvalConfig,
    plan: &CvPlan,
) -> Result<EvalReport, EvalError> {
    let projection = Projection::full(records);
    let base_schema = Arc::clone(&projection.schema);
    cross_validate_projected(records, config, plan, &base_schema, &projection)
}

fn cross_validate_projected(
    records: &[WorkloadRecord],
    config: &EvalConfig,
    plan: &CvPlan,
    base_schema: &Arc<FeatureSchema>,
    projection: &Projection,
) -> Result<EvalReport, EvalError> {
    let folds = plan.folds(records.len())?;
    if config.grid.is_empty()
        || config
            .grid
            .iter()
            .any(|&n| n < config.n_min || n > config.n_max)
    {
        return Err(EvalError::InvalidGrid);
    }
    let actual: Vec<&AllocationCurve> = records
        .iter()
        .map(|r| {
            r.observed_curve
                .as_ref()
                .ok_or_else(|| EvalError::MissingObservedCurve(r.query_id.clone()))
        })
        .collect::<Result<_, _>>()?;
    let objectives = config.objectives()?;
    let vectors: Vec<FeatureVector> = records
        .iter()
        .map(|r| projection.project(&vectorize(&r.features, base_schema)))
        .collect();
    let with_profile = records.iter().all(|r| r.profile.is_some());

    let jobs: Vec<(usize, usize)> = (0..plan.repeats)
        .flat_map(|r| (0..plan.k).map(move |f| (r, f)))
        .collect();
    let outcomes = config.parallelism.map(&jobs, |&(repeat, fold)| {
        let test = &folds[repeat][fold];
        let mut in_test = vec![false; records.len()];
        for &i in test {
            in_test[i] = true;
        }
        let train: Vec<usize> = (0..records.len()).filter(|&i| !in_test[i]).collect();
        let train_records: Vec<WorkloadRecord> = train.iter().map(|&i| records[i].clone()).collect();
        let augmented = augment_training_data(
            &train_records,
            base_schema,
            &config.training_grid,
            config.cores_per_executor,
        );
        let examples: Vec<TrainingExample> = augmented
            .examples(config.family)
            .iter()
            .map(|e| TrainingExample {
                x: projection.project(&e.x),
                ..e.clone()
            })
            .collect();
        let forest_config = ForestConfig::new(config.n_estimators, plan.fold_seed(repeat, fold))
            .with_parallelism(config.parallelism);
        let model = ParameterModel::train(&examples, config.family, &forest_config).map_err(|source| {
            EvalError::Training {
                repeat,
                fold,
                source,
            }
        })?;
        let predict = |i: usize| -> PricePerfModel {
            model.predict_ppm(&vectors[i]).expect("fold vectors share the model schema")
        };
        let test_pred: Vec<PricePerfModel> = test.iter().map(|&i| predict(i)).collect();
        let train_pred: Vec<PricePerfModel> = train.iter().map(|&i| predict(i)).collect();

        let errors = |idx: &[usize], rt: &dyn Fn(usize, u32) -> f64| -> Result<Vec<f64>, EvalError> {
            config
                .grid
                .iter()
                .map(|&n| {
                    let p: Vec<f64> = (0..idx.len()).map(|j| rt(j, n)).collect();
                    let a: Vec<f64> = idx.iter().map(|&i| actual[i].interpolate(f64::from(n))).collect();
                    Ok(error_metric(&p, &a)?)
                })
                .collect()
        };
        let test_error = errors(test, &|j, n| test_pred[j].evaluate(n))?;
        let train_error = errors(&train, &|j, n| train_pred[j].evaluate(n))?;
        let mut series = vec![(TEST_SERIES, test_error.clone()), (TRAIN_SERIES, train_error)];
        if with_profile {
            let estimates: Vec<AllocationCurve> = test
                .iter()
                .map(|&i| {
                    let p = records[i].profile.as_ref().expect("checked above");
                    estimate_curve(p, &config.grid, config.cores_per_executor)
                        .expect("profiles yield positive runtimes")
                })
                .collect();
            series.push((
                PROFILE_SERIES,
                errors(test, &|j, n| estimates[j].interpolate(f64::from(n)))?,
            ));
        }

        let mut selections = Vec::with_capacity(objectives.len());
        for (_, objective) in &objectives {
            let mut rows = Vec::with_capacity(test.len());
            for (j, &i) in test.iter().enumerate() {
                let chosen = objective.select(&test_pred[j])?.n;
                let oracle = objective.select(actual[i])?.n;
                let observed_min = (config.n_min..=config.n_max)
                    .map(|n| actual[i].interpolate(f64::from(n)))
                    .fold(f64::INFINITY, f64::min);
                let slowdown = actual[i].interpolate(f64::from(chosen)) / observed_min;
                rows.push((chosen, slowdown, oracle));
            }
            selections.push(rows);
        }

        Ok(FoldOutcome {
            summary: FoldSummary {
                repeat,
                fold,
                test_ids: test.iter().map(|&i| records[i].query_id.clone()).collect(),
                train_ids: examples.iter().map(|e| e.query_id.clone()).collect(),
                test_error,
            },
            series,
            selections,
        })
    });
    let outcomes: Vec<FoldOutcome> = outcomes.into_iter().collect::<Result<_, EvalError>>()?;

    let series = outcomes[0]
        .series
        .iter()
        .enumerate()
        .map(|(s, (name, _))| ErrorSeries {
            name: name.to_string(),
            folds: outcomes.len(),
            points: config
                .grid
                .iter()
                .enumerate()
                .map(|(g, &n)| {
                    let values: Vec<f64> = outcomes.iter().map(|o| o.series[s].1[g]).collect();
                    ErrorPoint {
                        n,
                        mean: mean(&values),
                        std: std_dev(&values),
                    }
                })
                .collect(),
        })
        .collect();
    let selection = objectives
        .iter()
        .enumerate()
        .map(|(k, (name, _))| {
            let rows: Vec<(u32, f64, u32)> = outcomes
                .iter()
                .flat_map(|o| o.selections[k].iter().copied())
                .collect();
            let ns: Vec<f64> = rows.iter().map(|r| f64::from(r.0)).collect();
            let slow: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let oracle: Vec<f64> = rows.iter().map(|r| f64::from(r.2)).collect();
            SelectionStats {
                objective: name.clone(),
                queries: rows.len(),
                mean_n: mean(&ns),
                std_n: std_dev(&ns),
                mean_slowdown: mean(&slow),
                max_slowdown: slow.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                mean_oracle_n: mean(&oracle),
                mean_savings: 1.0 - mean(&ns) / f64::from(config.n_max),
            }
        })
        .collect();
    Ok(EvalReport {
        family: config.family,
        plan: *plan,
        grid: config.grid.clone(),
        features: projection.schema.names().to_vec(),
        series,
        selection,
        folds: outcomes.into_iter().map(|o| o.summary).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSubset {
    pub name: String,
    pub features: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationEntry {
    pub name: String,
    pub report: EvalReport,
    /// Test error minus the full-feature test error, per grid allocation.
    pub delta: Vec<ErrorPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub full: EvalReport,
    pub subsets: Vec<AblationEntry>,
}

impl AblationReport {
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "subset,features,n,mean,std,delta")?;
        let rows = std::iter::once(("full", &self.full, None)).chain(
            self.subsets
                .iter()
                .map(|e| (e.name.as_str(), &e.report, Some(&e.delta))),
        );
        for (name, report, delta) in rows {
            let Some(series) = report.series(TEST_SERIES) else {
                continue;
            };
            for (i, p) in series.points.iter().enumerate() {
                let d = delta.map_or(0.0, |d| d[i].mean);
                writeln!(out, "{name},{},{},{},{},{d}", report.features.len(), p.n, p.mean, p.std)?;
            }
        }
        Ok(())
    }
}

/// Cross-validates the full feature set and every subset with the same plan.
pub fn ablation(
    records: &[WorkloadRecord],
    subsets: &[FeatureSubset],
    config: &EvalConfig,
    plan: &CvPlan,
) -> Result<AblationReport, EvalError> {
    let full_projection = Projection::full(records);
    let base = Arc::clone(&full_projection.schema);
    let projections: Vec<Projection> = subsets
        .iter()
        .map(|s| {
            Projection::subset(&base, &s.features).map_err(|source| EvalError::Subset {
                name: s.name.clone(),
                source,
            })
        })
        .collect::<Result<_, _>>()?;
    let full = cross_validate_projected(records, config, plan, &base, &full_projection)?;
    let full_points = &full.series(TEST_SERIES).expect("test series").points;
    let mut entries = Vec::with_capacity(subsets.len());
    for (s, projection) in subsets.iter().zip(&projections) {
        let report = cross_validate_projected(records, config, plan, &base, projection)?;
        let delta = report
            .series(TEST_SERIES)
            .expect("test series")
            .points
            .iter()
            .zip(full_points)
            .map(|(p, f)| ErrorPoint {
                n: p.n,
                mean: p.mean - f.mean,
                std: 0.0,
            })
            .collect();
        entries.push(AblationEntry {
            name: s.name.clone(),
            report,
            delta,
        });
    }
    Ok(AblationReport {
        full,
        subsets: entries,
    })
}
