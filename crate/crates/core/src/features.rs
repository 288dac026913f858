//! Compile-time query features, workload records and the JSON-lines loader.

use crate::ppm::{AllocationCurve, PpmError, ResourceKind};
use crate::schedsim::{ProfileError, QueryProfile, RawProfile};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

/// Names of the scalar (non-operator) features, in schema order.
pub const SCALAR_FEATURES: [&str; 5] = [
    "total_operators",
    "max_depth",
    "num_input_sources",
    "total_input_bytes",
    "total_rows_processed",
];

/// Prefix marking operator-count columns in a [`FeatureSchema`].
pub const OPERATOR_PREFIX: &str = "op:";

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("i/o error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line} (query `{query_id}`): invalid `{field}`: {message}")]
    Invalid {
        line: usize,
        query_id: String,
        field: String,
        message: String,
    },
    #[error("line {line}: duplicate query_id `{query_id}`")]
    DuplicateQueryId { line: usize, query_id: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FeatureError {
    #[error("total_operators = {declared} but operator_counts sum to {summed}")]
    OperatorTotalMismatch { declared: u64, summed: u64 },
    #[error("max_depth = {max_depth} exceeds total_operators = {total}")]
    DepthExceedsOperators { max_depth: u64, total: u64 },
    #[error("feature `{0}` is not part of the schema")]
    UnknownFeature(String),
    #[error("feature subset is empty")]
    EmptySubset,
}

/// Plan and input-size features of one query.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryFeatures {
    #[serde(default)]
    pub operator_counts: BTreeMap<String, u64>,
    pub total_operators: u64,
    pub max_depth: u64,
    pub num_input_sources: u64,
    pub total_input_bytes: u64,
    pub total_rows_processed: u64,
}

impl QueryFeatures {
    pub fn validate(&self) -> Result<(), FeatureError> {
        let summed: u64 = self.operator_counts.values().sum();
        if summed != self.total_operators {
            return Err(FeatureError::OperatorTotalMismatch {
                declared: self.total_operators,
                summed,
            });
        }
        if self.max_depth > self.total_operators {
            return Err(FeatureError::DepthExceedsOperators {
                max_depth: self.max_depth,
                total: self.total_operators,
            });
        }
        Ok(())
    }

    fn scalar(&self, name: &str) -> Option<u64> {
        Some(match name {
            "total_operators" => self.total_operators,
            "max_depth" => self.max_depth,
            "num_input_sources" => self.num_input_sources,
            "total_input_bytes" => self.total_input_bytes,
            "total_rows_processed" => self.total_rows_processed,
            _ => return None,
        })
    }
}

/// One query of a workload file.
#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadRecord {
    pub query_id: String,
    pub features: QueryFeatures,
    /// Measured runtimes per allocation.
    pub observed_curve: Option<AllocationCurve>,
    /// One profiled run, used by the scheduler estimator.
    pub profile: Option<QueryProfile>,
}

/// Runtime at one allocation: a single value or repeated runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawTiming {
    Single(f64),
    Runs(Vec<f64>),
}

impl RawTiming {
    /// Collapses repeated runs into their mean after IQR outlier removal.
    pub fn resolve(&self) -> Option<f64> {
        match self {
            RawTiming::Single(t) => Some(*t),
            RawTiming::Runs(runs) => {
                let kept = crate::stats::discard_iqr_outliers(runs);
                (!kept.is_empty()).then(|| crate::stats::mean(&kept))
            }
        }
    }
}

/// On-disk layout of one workload line.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRecord {
    pub query_id: String,
    pub features: QueryFeatures,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<Vec<(u32, RawTiming)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<RawProfile>,
}

impl RawRecord {
    pub fn from_record(record: &WorkloadRecord) -> Self {
        RawRecord {
            query_id: record.query_id.clone(),
            features: record.features.clone(),
            curve: record.observed_curve.as_ref().map(|c| {
                c.points()
                    .iter()
                    .map(|&(n, t)| (n, RawTiming::Single(t)))
                    .collect()
            }),
            profile: record.profile.as_ref().map(RawProfile::from_profile),
        }
    }

    fn into_record(self, line: usize) -> Result<WorkloadRecord, WorkloadError> {
        let invalid = |field: &str, message: String| WorkloadError::Invalid {
            line,
            query_id: self.query_id.clone(),
            field: field.to_string(),
            message,
        };
        if self.query_id.is_empty() {
            return Err(invalid("query_id", "must be non-empty".into()));
        }
        self.features
            .validate()
            .map_err(|e| invalid("features", e.to_string()))?;
        let observed_curve = match &self.curve {
            None => None,
            Some(points) => {
                let mut resolved = Vec::with_capacity(points.len());
                for (n, timing) in points {
                    let t = timing
                        .resolve()
                        .ok_or_else(|| invalid("curve", format!("no runs left at n = {n}")))?;
                    resolved.push((*n, t));
                }
                Some(
                    AllocationCurve::new(resolved, ResourceKind::Executors)
                        .map_err(|e: PpmError| invalid("curve", e.to_string()))?,
                )
            }
        };
        let profile = match &self.profile {
            None => None,
            Some(raw) => Some(
                raw.to_profile(&self.query_id)
                    .map_err(|e: ProfileError| invalid("profile", e.to_string()))?,
            ),
        };
        Ok(WorkloadRecord {
            query_id: self.query_id,
            features: self.features,
            observed_curve,
            profile,
        })
    }
}

/// Parses JSON-lines workload text. Blank lines are ignored.
pub fn parse_workload(text: &str) -> Result<Vec<WorkloadRecord>, WorkloadError> {
    parse_lines(text.lines().map(|l| Ok(l.to_string())))
}

/// Reads a JSON-lines workload file.
pub fn load_workload(path: impl AsRef<Path>) -> Result<Vec<WorkloadRecord>, WorkloadError> {
    let path = path.as_ref();
    let io_err = |source| WorkloadError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io_err)?;
    parse_lines(BufReader::new(file).lines().map(|l| l.map_err(io_err)))
}

fn parse_lines(
    lines: impl Iterator<Item = Result<String, WorkloadError>>,
) -> Result<Vec<WorkloadRecord>, WorkloadError> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| WorkloadError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let record = raw.into_record(line_no)?;
        if !seen.insert(record.query_id.clone()) {
            return Err(WorkloadError::DuplicateQueryId {
                line: line_no,
                query_id: record.query_id,
            });
        }
        records.push(record);
    }
    Ok(records)
}

/// Writes records as JSON lines.
pub fn write_workload(
    mut out: impl Write,
    records: &[WorkloadRecord],
) -> std::io::Result<()> {
    for r in records {
        let line = serde_json::to_string(&RawRecord::from_record(r))
            .map_err(std::io::Error::other)?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Ordered feature names: sorted operator columns, then the scalar features.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureSchema {
    names: Vec<String>,
}

impl FeatureSchema {
    /// Builds the schema from the operator vocabulary seen in `features`.
    pub fn from_features<'a>(features: impl IntoIterator<Item = &'a QueryFeatures>) -> Self {
        let mut ops: Vec<&str> = features
            .into_iter()
            .flat_map(|f| f.operator_counts.keys().map(String::as_str))
            .collect();
        ops.sort_unstable();
        ops.dedup();
        let names = ops
            .into_iter()
            .map(|op| format!("{OPERATOR_PREFIX}{op}"))
            .chain(SCALAR_FEATURES.iter().map(|s| s.to_string()))
            .collect();
        Self { names }
    }

    pub fn from_names(names: Vec<String>) -> Self {
        Self { names }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Column indices of `subset`, in schema order.
    pub fn subset_indices(&self, subset: &[String]) -> Result<Vec<usize>, FeatureError> {
        if subset.is_empty() {
            return Err(FeatureError::EmptySubset);
        }
        let mut idx = Vec::with_capacity(subset.len());
        for name in subset {
            idx.push(
                self.index_of(name)
                    .ok_or_else(|| FeatureError::UnknownFeature(name.clone()))?,
            );
        }
        idx.sort_unstable();
        idx.dedup();
        Ok(idx)
    }

    pub fn select(&self, indices: &[usize]) -> FeatureSchema {
        FeatureSchema {
            names: indices.iter().map(|&i| self.names[i].clone()).collect(),
        }
    }
}

/// Dense feature values in schema order.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub schema: Arc<FeatureSchema>,
}

impl FeatureVector {
    pub fn select(&self, indices: &[usize], schema: Arc<FeatureSchema>) -> FeatureVector {
        FeatureVector {
            values: indices.iter().map(|&i| self.values[i]).collect(),
            schema,
        }
    }
}

/// Encodes `features` against `schema`. Operators missing from the query
/// are zero; operators missing from the schema are dropped and returned.
pub fn vectorize_with_dropped(
    features: &QueryFeatures,
    schema: &Arc<FeatureSchema>,
) -> (FeatureVector, Vec<String>) {
    let values = schema
        .names()
        .iter()
        .map(|name| match name.strip_prefix(OPERATOR_PREFIX) {
            Some(op) => features.operator_counts.get(op).copied().unwrap_or(0) as f64,
            None => features.scalar(name).unwrap_or(0) as f64,
        })
        .collect();
    let dropped = features
        .operator_counts
        .keys()
        .filter(|op| schema.index_of(&format!("{OPERATOR_PREFIX}{op}")).is_none())
        .cloned()
        .collect();
    (
        FeatureVector {
            values,
            schema: Arc::clone(schema),
        },
        dropped,
    )
}

/// Like [`vectorize_with_dropped`], logging a warning for dropped operators.
pub fn vectorize(features: &QueryFeatures, schema: &Arc<FeatureSchema>) -> FeatureVector {
    let (v, dropped) = vectorize_with_dropped(features, schema);
    if !dropped.is_empty() {
        log::warn!("operators not in model schema dropped: {}", dropped.join(", "));
    }
    v
}
