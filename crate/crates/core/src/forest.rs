//! Multi-output regression forest mapping query features to model parameters.
//!
//! Each tree is grown on a bootstrap sample with variance-reduction splits,
//! drawing `ceil(num_features / 3)` candidate features per node, without a
//! depth limit and with single-sample leaves allowed. Leaves hold the mean
//! target vector, and the forest averages leaves across trees. Every tree gets
//! its own ChaCha stream derived from the forest seed, so results do not
//! depend on how training is scheduled across threads.

use crate::features::{FeatureSchema, FeatureVector};
use crate::par::Parallelism;
use crate::ppm::{PpmError, PpmFamily, PricePerfModel};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

/// Model file format tag.
pub const MODEL_FORMAT: &str = "execsizer-ppm-forest";
/// Model file version written by this build.
pub const MODEL_VERSION: u32 = 1;
pub const DEFAULT_ESTIMATORS: usize = 100;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("training needs at least 2 examples, got {0}")]
    TooFewExamples(usize),
    #[error("n_estimators must be positive")]
    NoEstimators,
    #[error("example `{query_id}` has {got} targets, expected {expected}")]
    TargetDimension {
        query_id: String,
        expected: usize,
        got: usize,
    },
    #[error("feature vector has schema {got:?}, model expects {expected:?}")]
    SchemaMismatch {
        expected: Vec<String>,
        got: Vec<String>,
    },
    #[error("i/o error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model file is truncated: {0}")]
    Truncated(String),
    #[error("model file version {found} is not supported (expected {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("model file is malformed: {0}")]
    Malformed(String),
    #[error(transparent)]
    Ppm(#[from] PpmError),
}

/// One query's features and fitted model parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingExample {
    pub query_id: String,
    pub x: FeatureVector,
    pub y: Vec<f64>,
    /// The fit behind `y` collapsed to a flat model.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: Vec<f64>,
    },
}

/// Binary tree stored as a node array; node 0 is the root and children
/// always sit at larger indices than their parent.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    /// Checks that the node array forms a proper tree over `num_features`
    /// features with `dim`-dimensional leaves.
    pub fn from_nodes(nodes: Vec<Node>, num_features: usize, dim: usize) -> Result<Self, String> {
        if nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        let mut referenced = vec![false; nodes.len()];
        for (i, node) in nodes.iter().enumerate() {
            match node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if *feature >= num_features {
                        return Err(format!("node {i} splits on feature {feature} out of range"));
                    }
                    if !threshold.is_finite() {
                        return Err(format!("node {i} has a non-finite threshold"));
                    }
                    for &child in [left, right] {
                        if child <= i || child >= nodes.len() || referenced[child] {
                            return Err(format!("node {i} has invalid child {child}"));
                        }
                        referenced[child] = true;
                    }
                }
                Node::Leaf { value } => {
                    if value.len() != dim {
                        return Err(format!(
                            "leaf {i} has {} values, expected {dim}",
                            value.len()
                        ));
                    }
                }
            }
        }
        if referenced.iter().skip(1).any(|r| !r) {
            return Err("tree has unreachable nodes".into());
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn predict(&self, x: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ForestConfig {
    pub n_estimators: usize,
    pub rng_seed: u64,
    pub parallelism: Parallelism,
}

impl ForestConfig {
    pub fn new(n_estimators: usize, rng_seed: u64) -> Self {
        Self {
            n_estimators,
            rng_seed,
            parallelism: Parallelism::default(),
        }
    }

    pub fn with_parallelism(mut self, parallelism: Parallelism) -> Self {
        self.parallelism = parallelism;
        self
    }
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self::new(DEFAULT_ESTIMATORS, 0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionForest {
    trees: Vec<RegressionTree>,
    schema: Arc<FeatureSchema>,
    target_names: Vec<String>,
    rng_seed: u64,
}

impl RegressionForest {
    /// Trains on `examples`, whose feature vectors must share one schema and
    /// whose targets must share one dimensionality.
    pub fn train(
        examples: &[TrainingExample],
        target_names: Vec<String>,
        config: &ForestConfig,
    ) -> Result<Self, ForestError> {
        if examples.len() < 2 {
            return Err(ForestError::TooFewExamples(examples.len()));
        }
        if config.n_estimators == 0 {
            return Err(ForestError::NoEstimators);
        }
        let dim = target_names.len();
        let schema = Arc::clone(&examples[0].x.schema);
        for e in examples {
            if e.y.len() != dim {
                return Err(ForestError::TargetDimension {
                    query_id: e.query_id.clone(),
                    expected: dim,
                    got: e.y.len(),
                });
            }
            check_schema(&schema, &e.x)?;
        }
        let data = Dataset {
            x: examples.iter().map(|e| e.x.values.as_slice()).collect(),
            y: examples.iter().map(|e| e.y.as_slice()).collect(),
            num_features: schema.len(),
            dim,
        };
        let trees = config.parallelism.map_range(config.n_estimators, |t| {
            let mut rng = tree_rng(config.rng_seed, t as u64);
            grow_tree(&data, &mut rng)
        });
        Ok(Self {
            trees,
            schema,
            target_names,
            rng_seed: config.rng_seed,
        })
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn schema(&self) -> &Arc<FeatureSchema> {
        &self.schema
    }

    pub fn target_names(&self) -> &[String] {
        &self.target_names
    }

    pub fn n_estimators(&self) -> usize {
        self.trees.len()
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<Vec<f64>, ForestError> {
        check_schema(&self.schema, x)?;
        Ok(self.predict_values(&x.values))
    }

    /// Prediction on raw values laid out in this forest's schema order.
    pub fn predict_values(&self, x: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.target_names.len()];
        for tree in &self.trees {
            for (a, v) in acc.iter_mut().zip(tree.predict(x)) {
                *a += v;
            }
        }
        let k = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= k);
        acc
    }
}

fn check_schema(expected: &Arc<FeatureSchema>, x: &FeatureVector) -> Result<(), ForestError> {
    if Arc::ptr_eq(expected, &x.schema) || **expected == *x.schema {
        Ok(())
    } else {
        Err(ForestError::SchemaMismatch {
            expected: expected.names().to_vec(),
            got: x.schema.names().to_vec(),
        })
    }
}

fn tree_rng(seed: u64, tree: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree);
    rng
}

struct Dataset<'a> {
    x: Vec<&'a [f64]>,
    y: Vec<&'a [f64]>,
    num_features: usize,
    dim: usize,
}

struct SplitCandidate {
    feature: usize,
    threshold: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

fn grow_tree(data: &Dataset<'_>, rng: &mut ChaCha8Rng) -> RegressionTree {
    let n = data.x.len();
    let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    let max_features = data.num_features.div_ceil(3).max(1);
    let mut nodes: Vec<Node> = Vec::new();
    // (node slot, sample indices)
    let mut stack = vec![(0usize, sample)];
    nodes.push(Node::Leaf { value: Vec::new() });
    while let Some((slot, idx)) = stack.pop() {
        match best_split(data, &idx, max_features, rng) {
            Some(split) => {
                let left = nodes.len();
                let right = left + 1;
                nodes.push(Node::Leaf { value: Vec::new() });
                nodes.push(Node::Leaf { value: Vec::new() });
                nodes[slot] = Node::Split {
                    feature: split.feature,
                    threshold: split.threshold,
                    left,
                    right,
                };
                stack.push((right, split.right));
                stack.push((left, split.left));
            }
            None => nodes[slot] = Node::Leaf {
                value: mean_target(data, &idx),
            },
        }
    }
    RegressionTree { nodes }
}

fn mean_target(data: &Dataset<'_>, idx: &[usize]) -> Vec<f64> {
    let mut acc = vec![0.0; data.dim];
    for &i in idx {
        for (a, v) in acc.iter_mut().zip(data.y[i]) {
            *a += v;
        }
    }
    acc.iter_mut().for_each(|a| *a /= idx.len() as f64);
    acc
}

/// Best variance-reduction split over a random feature subset, or `None`
/// when the node is pure or no sampled feature varies.
fn best_split(
    data: &Dataset<'_>,
    idx: &[usize],
    max_features: usize,
    rng: &mut ChaCha8Rng,
) -> Option<SplitCandidate> {
    if idx.len() < 2 {
        return None;
    }
    let first = data.y[idx[0]];
    if idx.iter().all(|&i| data.y[i] == first) {
        return None;
    }
    let mut features: Vec<usize> = (0..data.num_features).collect();
    features.shuffle(rng);

    let dim = data.dim;
    let mut total = vec![0.0; dim];
    for &i in idx {
        for (t, v) in total.iter_mut().zip(data.y[i]) {
            *t += v;
        }
    }

    let mut best: Option<(usize, f64, f64, usize)> = None; // feature, threshold, score, split position
    let mut best_order: Vec<usize> = Vec::new();
    let mut visited = 0;
    let mut order: Vec<usize> = idx.to_vec();
    let mut left = vec![0.0; dim];
    for &f in &features {
        if visited >= max_features {
            break;
        }
        order.sort_by(|&a, &b| data.x[a][f].total_cmp(&data.x[b][f]));
        let lo = data.x[order[0]][f];
        let hi = data.x[order[order.len() - 1]][f];
        if lo == hi {
            continue;
        }
        visited += 1;
        left.iter_mut().for_each(|l| *l = 0.0);
        let count = order.len();
        for pos in 0..count - 1 {
            for (l, v) in left.iter_mut().zip(data.y[order[pos]]) {
                *l += v;
            }
            let here = data.x[order[pos]][f];
            let next = data.x[order[pos + 1]][f];
            if here == next {
                continue;
            }
            let nl = (pos + 1) as f64;
            let nr = (count - pos - 1) as f64;
            // Maximizing this proxy minimizes the summed child SSE.
            let score: f64 = left
                .iter()
                .zip(&total)
                .map(|(l, t)| l * l / nl + (t - l) * (t - l) / nr)
                .sum();
            if best.is_none_or(|b| score > b.2) {
                let mut threshold = here + (next - here) / 2.0;
                if threshold >= next {
                    threshold = here;
                }
                best = Some((f, threshold, score, pos + 1));
                best_order.clone_from(&order);
            }
        }
    }
    let (feature, threshold, _, pos) = best?;
    let right = best_order.split_off(pos);
    Some(SplitCandidate {
        feature,
        threshold,
        left: best_order,
        right,
    })
}

/// How raw model parameters are mapped before the forest sees them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetTransform {
    Identity,
    /// `ln(x)`, for strictly positive scales.
    Ln,
    /// `ln(1 + x)`, for non-negative values that may be zero.
    Ln1p,
}

impl TargetTransform {
    pub fn forward(self, v: f64) -> f64 {
        match self {
            TargetTransform::Identity => v,
            TargetTransform::Ln => v.ln(),
            TargetTransform::Ln1p => v.ln_1p(),
        }
    }

    pub fn inverse(self, v: f64) -> f64 {
        match self {
            TargetTransform::Identity => v,
            TargetTransform::Ln => v.exp(),
            TargetTransform::Ln1p => v.exp_m1(),
        }
    }

    pub fn for_family(family: PpmFamily) -> Vec<TargetTransform> {
        match family {
            PpmFamily::PowerLaw => vec![
                TargetTransform::Identity,
                TargetTransform::Ln,
                TargetTransform::Ln,
            ],
            PpmFamily::Amdahl => vec![TargetTransform::Ln1p, TargetTransform::Ln1p],
        }
    }
}

/// A forest predicting the parameters of one model family.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterModel {
    family: PpmFamily,
    transforms: Vec<TargetTransform>,
    forest: RegressionForest,
}

impl ParameterModel {
    /// Trains on examples carrying raw parameters in family order.
    pub fn train(
        examples: &[TrainingExample],
        family: PpmFamily,
        config: &ForestConfig,
    ) -> Result<Self, ForestError> {
        let transforms = TargetTransform::for_family(family);
        let transformed: Vec<TrainingExample> = examples
            .iter()
            .map(|e| {
                if e.y.len() != transforms.len() {
                    return Err(ForestError::TargetDimension {
                        query_id: e.query_id.clone(),
                        expected: transforms.len(),
                        got: e.y.len(),
                    });
                }
                Ok(TrainingExample {
                    y: e.y.iter().zip(&transforms).map(|(v, t)| t.forward(*v)).collect(),
                    ..e.clone()
                })
            })
            .collect::<Result<_, _>>()?;
        let names = family.param_names().iter().map(|s| s.to_string()).collect();
        let forest = RegressionForest::train(&transformed, names, config)?;
        Ok(Self {
            family,
            transforms,
            forest,
        })
    }

    pub fn family(&self) -> PpmFamily {
        self.family
    }

    pub fn forest(&self) -> &RegressionForest {
        &self.forest
    }

    pub fn schema(&self) -> &Arc<FeatureSchema> {
        self.forest.schema()
    }

    /// Raw parameters in family order.
    pub fn predict_params(&self, x: &FeatureVector) -> Result<Vec<f64>, ForestError> {
        check_schema(self.forest.schema(), x)?;
        Ok(self.predict_params_values(&x.values))
    }

    pub fn predict_params_values(&self, x: &[f64]) -> Vec<f64> {
        self.forest
            .predict_values(x)
            .iter()
            .zip(&self.transforms)
            .map(|(v, t)| t.inverse(*v))
            .collect()
    }

    /// One scoring call, returned as a ready-to-evaluate model.
    pub fn predict_ppm(&self, x: &FeatureVector) -> Result<PricePerfModel, ForestError> {
        let params = self.predict_params(x)?;
        Ok(PricePerfModel::from_params_clamped(self.family, &params)?)
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            family: self.family,
            target_names: self.forest.target_names.clone(),
            target_transform: self.transforms.clone(),
            schema: self.forest.schema.names().to_vec(),
            n_estimators: self.forest.trees.len(),
            rng_seed: self.forest.rng_seed,
            trees: self.forest.trees.iter().map(TreeFile::from_tree).collect(),
        };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ForestError> {
        #[derive(Deserialize)]
        struct Header {
            format: String,
            version: u32,
        }
        let header: Header = serde_json::from_str(text).map_err(classify)?;
        if header.format != MODEL_FORMAT {
            return Err(ForestError::Malformed(format!(
                "unexpected format tag `{}`",
                header.format
            )));
        }
        if header.version != MODEL_VERSION {
            return Err(ForestError::VersionMismatch {
                found: header.version,
                supported: MODEL_VERSION,
            });
        }
        let file: ModelFile = serde_json::from_str(text).map_err(classify)?;
        let dim = file.family.param_names().len();
        if file.target_names.len() != dim || file.target_transform.len() != dim {
            return Err(ForestError::Malformed(
                "target metadata does not match the model family".into(),
            ));
        }
        if file.trees.is_empty() || file.trees.len() != file.n_estimators {
            return Err(ForestError::Malformed(format!(
                "expected {} trees, found {}",
                file.n_estimators,
                file.trees.len()
            )));
        }
        let num_features = file.schema.len();
        let trees = file
            .trees
            .into_iter()
            .enumerate()
            .map(|(i, t)| {
                t.into_tree(num_features, dim)
                    .map_err(|e| ForestError::Malformed(format!("tree {i}: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            family: file.family,
            transforms: file.target_transform,
            forest: RegressionForest {
                trees,
                schema: Arc::new(FeatureSchema::from_names(file.schema)),
                target_names: file.target_names,
                rng_seed: file.rng_seed,
            },
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ForestError> {
        let path = path.as_ref();
        let mut text = self.to_json();
        text.push('\n');
        std::fs::write(path, text).map_err(|source| ForestError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ForestError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ForestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}

fn classify(e: serde_json::Error) -> ForestError {
    if e.is_eof() {
        ForestError::Truncated(e.to_string())
    } else {
        ForestError::Malformed(e.to_string())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    family: PpmFamily,
    target_names: Vec<String>,
    target_transform: Vec<TargetTransform>,
    schema: Vec<String>,
    n_estimators: usize,
    rng_seed: u64,
    trees: Vec<TreeFile>,
}

/// Flattened node arrays; leaves have `feature = -1` and carry `value`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeFile {
    feature: Vec<i64>,
    threshold: Vec<f64>,
    left: Vec<u32>,
    right: Vec<u32>,
    value: Vec<Vec<f64>>,
}

impl TreeFile {
    fn from_tree(tree: &RegressionTree) -> Self {
        let n = tree.nodes.len();
        let mut f = TreeFile {
            feature: Vec::with_capacity(n),
            threshold: Vec::with_capacity(n),
            left: Vec::with_capacity(n),
            right: Vec::with_capacity(n),
            value: Vec::with_capacity(n),
        };
        for node in &tree.nodes {
            match node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    f.feature.push(*feature as i64);
                    f.threshold.push(*threshold);
                    f.left.push(*left as u32);
                    f.right.push(*right as u32);
                    f.value.push(Vec::new());
                }
                Node::Leaf { value } => {
                    f.feature.push(-1);
                    f.threshold.push(0.0);
                    f.left.push(0);
                    f.right.push(0);
                    f.value.push(value.clone());
                }
            }
        }
        f
    }

    fn into_tree(self, num_features: usize, dim: usize) -> Result<RegressionTree, String> {
        let n = self.feature.len();
        if [self.threshold.len(), self.left.len(), self.right.len(), self.value.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err("node arrays have different lengths".into());
        }
        let mut nodes = Vec::with_capacity(n);
        for i in 0..n {
            nodes.push(if self.feature[i] < 0 {
                Node::Leaf {
                    value: self.value[i].clone(),
                }
            } else {
                Node::Split {
                    feature: self.feature[i] as usize,
                    threshold: self.threshold[i],
                    left: self.left[i] as usize,
                    right: self.right[i] as usize,
                }
            });
        }
        RegressionTree::from_nodes(nodes, num_features, dim)
    }
}

/// Error measure used when ranking features by permutation.
#[derive(Clone, Debug, PartialEq)]
pub enum ImportanceMetric {
    /// RMS relative runtime error between the predicted and target models,
    /// evaluated on an allocation grid.
    RuntimeRms { grid: Vec<u32> },
    /// RMS error in the forest's (transformed) target space.
    ParameterRms,
}

impl Default for ImportanceMetric {
    fn default() -> Self {
        ImportanceMetric::RuntimeRms {
            grid: crate::DEFAULT_GRID.to_vec(),
        }
    }
}

impl ImportanceMetric {
    fn score(&self, model: &ParameterModel, rows: &[Vec<f64>], examples: &[TrainingExample]) -> f64 {
        match self {
            ImportanceMetric::RuntimeRms { grid } => {
                let mut errs = Vec::with_capacity(rows.len() * grid.len());
                for (row, e) in rows.iter().zip(examples) {
                    let predicted = PricePerfModel::from_params_clamped(
                        model.family,
                        &model.predict_params_values(row),
                    )
                    .expect("family arity");
                    let target = PricePerfModel::from_params_clamped(model.family, &e.y)
                        .expect("family arity");
                    for &n in grid {
                        let t = target.evaluate(n);
                        errs.push((predicted.evaluate(n) - t) / t);
                    }
                }
                crate::stats::rms(errs)
            }
            ImportanceMetric::ParameterRms => {
                let mut errs = Vec::new();
                for (row, e) in rows.iter().zip(examples) {
                    let p = model.forest.predict_values(row);
                    for ((pv, yv), t) in p.iter().zip(&e.y).zip(&model.transforms) {
                        errs.push(pv - t.forward(*yv));
                    }
                }
                crate::stats::rms(errs)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    /// Mean increase of the metric over the permutation repeats.
    pub mean_drop: f64,
    pub std_drop: f64,
}

/// Permutation importance of every schema feature, sorted by decreasing
/// `mean_drop` (ties keep schema order).
pub fn permutation_importance(
    model: &ParameterModel,
    examples: &[TrainingExample],
    metric: &ImportanceMetric,
    repeats: usize,
    rng_seed: u64,
    parallelism: Parallelism,
) -> Result<Vec<FeatureImportance>, ForestError> {
    for e in examples {
        check_schema(model.schema(), &e.x)?;
    }
    let rows: Vec<Vec<f64>> = examples.iter().map(|e| e.x.values.clone()).collect();
    let baseline = metric.score(model, &rows, examples);
    let names = model.schema().names().to_vec();
    let mut out = parallelism.map_range(names.len(), |f| {
        let mut rng = tree_rng(rng_seed, f as u64);
        let mut column: Vec<f64> = rows.iter().map(|r| r[f]).collect();
        let mut permuted = rows.clone();
        let drops: Vec<f64> = (0..repeats)
            .map(|_| {
                column.shuffle(&mut rng);
                for (r, v) in permuted.iter_mut().zip(&column) {
                    r[f] = *v;
                }
                metric.score(model, &permuted, examples) - baseline
            })
            .collect();
        FeatureImportance {
            feature: names[f].clone(),
            mean_drop: if drops.is_empty() { 0.0 } else { crate::stats::mean(&drops) },
            std_drop: if drops.is_empty() { 0.0 } else { crate::stats::std_dev(&drops) },
        }
    });
    out.sort_by(|a, b| b.mean_drop.total_cmp(&a.mean_drop));
    Ok(out)
}
