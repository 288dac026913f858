//! Turning a runtime curve into an allocation: the aggregate error metric,
//! limited-slowdown and elbow selection, and cores-per-executor factorization.

use crate::ppm::{AllocationCurve, PricePerfModel};
use serde::{Deserialize, Serialize};
use std::ops::RangeInclusive;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectError {
    #[error("error metric needs at least one query")]
    EmptyQuerySet,
    #[error("predicted and actual query counts differ ({predicted} vs {actual})")]
    LengthMismatch { predicted: usize, actual: usize },
    #[error("slowdown threshold must be >= 1, got {0}")]
    InvalidSlowdown(f64),
    #[error("invalid allocation range [{0}, {1}]")]
    InvalidRange(u32, u32),
    #[error("elbow selection needs at least 3 grid points, got {0}")]
    TooFewPoints(usize),
    #[error("invalid node shape: {0}")]
    InvalidNode(String),
    #[error("no feasible cores-per-executor for k = {k}: {details}")]
    Infeasible { k: u32, details: String },
}

/// Anything that yields a runtime for an allocation.
pub trait RuntimeModel {
    fn runtime(&self, n: u32) -> f64;
}

impl RuntimeModel for PricePerfModel {
    fn runtime(&self, n: u32) -> f64 {
        self.evaluate(n)
    }
}

/// Empirical curves are piecewise-linearly interpolated between grid points.
impl RuntimeModel for AllocationCurve {
    fn runtime(&self, n: u32) -> f64 {
        self.interpolate(f64::from(n))
    }
}

impl<T: RuntimeModel + ?Sized> RuntimeModel for &T {
    fn runtime(&self, n: u32) -> f64 {
        (**self).runtime(n)
    }
}

/// `sum |predicted - actual| / sum actual` over a query set at one allocation.
pub fn error_metric(predicted: &[f64], actual: &[f64]) -> Result<f64, SelectError> {
    if predicted.len() != actual.len() {
        return Err(SelectError::LengthMismatch {
            predicted: predicted.len(),
            actual: actual.len(),
        });
    }
    if actual.is_empty() {
        return Err(SelectError::EmptyQuerySet);
    }
    let abs: f64 = predicted.iter().zip(actual).map(|(p, a)| (p - a).abs()).sum();
    Ok(abs / actual.iter().sum::<f64>())
}

/// [`error_metric`] for (predicted, actual) model pairs evaluated at `n`.
pub fn error_metric_at<P: RuntimeModel, A: RuntimeModel>(
    pairs: &[(P, A)],
    n: u32,
) -> Result<f64, SelectError> {
    let (p, a): (Vec<f64>, Vec<f64>) = pairs.iter().map(|(p, a)| (p.runtime(n), a.runtime(n))).unzip();
    error_metric(&p, &a)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ObjectiveKind {
    /// Smallest allocation within factor `h` of the minimum runtime.
    LimitedSlowdown { h: f64 },
    /// Slope crossover on the range-normalized curve.
    Elbow,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionObjective {
    pub kind: ObjectiveKind,
    pub n_min: u32,
    pub n_max: u32,
}

impl SelectionObjective {
    pub fn new(kind: ObjectiveKind, n_min: u32, n_max: u32) -> Result<Self, SelectError> {
        if n_min < 1 || n_max < n_min {
            return Err(SelectError::InvalidRange(n_min, n_max));
        }
        if let ObjectiveKind::LimitedSlowdown { h } = kind {
            if !(h >= 1.0) {
                return Err(SelectError::InvalidSlowdown(h));
            }
        }
        Ok(Self { kind, n_min, n_max })
    }

    /// Applies the objective to `model` evaluated on every integer of the range.
    pub fn select(&self, model: &impl RuntimeModel) -> Result<Selection, SelectError> {
        let grid = grid_values(model, self.n_min, self.n_max);
        match self.kind {
            ObjectiveKind::LimitedSlowdown { h } => select_limited_slowdown(&grid, h),
            ObjectiveKind::Elbow => select_elbow(&grid),
        }
    }
}

/// `(n, runtime)` for every integer `n` in `[n_min, n_max]`.
pub fn grid_values(model: &impl RuntimeModel, n_min: u32, n_max: u32) -> Vec<(u32, f64)> {
    (n_min..=n_max).map(|n| (n, model.runtime(n))).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub n: u32,
    /// Set when the objective had nothing to decide (flat curve, no crossover).
    pub degenerate: bool,
}

/// Smallest grid `n` with `t(n) / t_min <= h`.
///
/// Non-increasing curves are searched by bisection; anything else is scanned.
pub fn select_limited_slowdown(grid: &[(u32, f64)], h: f64) -> Result<Selection, SelectError> {
    if !(h >= 1.0) {
        return Err(SelectError::InvalidSlowdown(h));
    }
    if grid.is_empty() {
        return Err(SelectError::TooFewPoints(0));
    }
    let t_min = grid.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let within = |t: f64| t / t_min <= h;
    let monotone = grid.windows(2).all(|w| w[1].1 <= w[0].1);
    let idx = if monotone {
        grid.partition_point(|p| !within(p.1))
    } else {
        grid.iter().position(|p| within(p.1)).expect("minimum qualifies")
    };
    let first = grid[0].1;
    Ok(Selection {
        n: grid[idx].0,
        degenerate: grid.iter().all(|p| p.1 == first),
    })
}

/// Elbow of a curve: the smallest grid `n` whose normalized slope is at least
/// one while the next point's slope is at most one.
///
/// With `u` and `v` the range-scaled allocation and runtime, the slope at a
/// point is `(v(prev) - v(here)) / (u(here) - u(prev))`. Flat curves and
/// curves without a crossover return the first grid point, flagged degenerate.
pub fn select_elbow(grid: &[(u32, f64)]) -> Result<Selection, SelectError> {
    if grid.len() < 3 {
        return Err(SelectError::TooFewPoints(grid.len()));
    }
    let fallback = Selection {
        n: grid[0].0,
        degenerate: true,
    };
    let n_lo = f64::from(grid[0].0);
    let n_span = f64::from(grid[grid.len() - 1].0) - n_lo;
    let t_lo = grid.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let t_hi = grid.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let t_span = t_hi - t_lo;
    if !(t_span > 0.0) {
        return Ok(fallback);
    }
    let u = |n: u32| (f64::from(n) - n_lo) / n_span;
    let v = |t: f64| (t - t_lo) / t_span;
    let slopes: Vec<f64> = grid
        .windows(2)
        .map(|w| (v(w[0].1) - v(w[1].1)) / (u(w[1].0) - u(w[0].0)))
        .collect();
    // slopes[i] belongs to grid[i + 1].
    Ok(slopes
        .windows(2)
        .position(|s| s[0] >= 1.0 && s[1] <= 1.0)
        .map(|i| Selection {
            n: grid[i + 1].0,
            degenerate: false,
        })
        .unwrap_or(fallback))
}

/// Per-node resources available to executors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeShape {
    pub cores: u32,
    pub memory_gb: f64,
    pub executor_memory_gb: f64,
}

impl NodeShape {
    pub fn new(cores: u32, memory_gb: f64, executor_memory_gb: f64) -> Result<Self, SelectError> {
        if cores == 0 {
            return Err(SelectError::InvalidNode("cores must be positive".into()));
        }
        if !(memory_gb > 0.0) || !(executor_memory_gb > 0.0) {
            return Err(SelectError::InvalidNode("memory values must be positive".into()));
        }
        if executor_memory_gb > memory_gb {
            return Err(SelectError::InvalidNode(format!(
                "executor memory {executor_memory_gb} GB exceeds node memory {memory_gb} GB"
            )));
        }
        Ok(Self {
            cores,
            memory_gb,
            executor_memory_gb,
        })
    }

    pub fn executors_per_node(&self, e_c: u32) -> u32 {
        self.cores / e_c
    }

    /// Memory needed when the node is packed with `e_c`-core executors fits.
    pub fn memory_feasible(&self, e_c: u32) -> bool {
        self.executor_memory_gb * f64::from(self.executors_per_node(e_c)) <= self.memory_gb
    }

    pub fn stranded_cores(&self, e_c: u32) -> u32 {
        self.cores % e_c
    }

    pub fn stranded_memory(&self, e_c: u32) -> f64 {
        self.memory_gb - self.executor_memory_gb * f64::from(self.executors_per_node(e_c))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Factorization {
    pub e_c: u32,
    pub executors: u32,
    /// Cores per node left unused by `e_c`-sized executors.
    pub waste_cores: u32,
    pub total_cores: u32,
}

/// Splits `k` total cores into `executors x e_c`.
///
/// Feasible `e_c` values divide `k`, fit on a node, and keep a fully packed
/// node within its memory. Among those the fewest stranded cores per node
/// wins, then the least stranded memory, then the larger `e_c`.
pub fn factorize_cores(
    k: u32,
    node: &NodeShape,
    e_c_candidates: RangeInclusive<u32>,
) -> Result<Factorization, SelectError> {
    let mut rejected = Vec::new();
    let mut best: Option<u32> = None;
    for e_c in e_c_candidates {
        if e_c == 0 {
            continue;
        }
        let mut why = Vec::new();
        if k == 0 || !k.is_multiple_of(e_c) {
            why.push(format!("{e_c} does not divide {k}"));
        }
        if e_c > node.cores {
            why.push(format!("{e_c} cores exceed the node's {}", node.cores));
        } else if !node.memory_feasible(e_c) {
            why.push(format!(
                "{} executors x {} GB exceed {} GB",
                node.executors_per_node(e_c),
                node.executor_memory_gb,
                node.memory_gb
            ));
        }
        if !why.is_empty() {
            rejected.push(format!("e_c={e_c}: {}", why.join(", ")));
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => {
                let key = |e: u32| (node.stranded_cores(e), node.stranded_memory(e));
                let (wc, wm) = key(e_c);
                let (bc, bm) = key(b);
                wc < bc || (wc == bc && (wm < bm || (wm == bm && e_c > b)))
            }
        };
        if better {
            best = Some(e_c);
        }
    }
    let e_c = best.ok_or_else(|| SelectError::Infeasible {
        k,
        details: if rejected.is_empty() {
            "no candidates".into()
        } else {
            rejected.join("; ")
        },
    })?;
    Ok(Factorization {
        e_c,
        executors: k / e_c,
        waste_cores: node.stranded_cores(e_c),
        total_cores: k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ppm::{AmdahlPPM, PowerLawPPM};

    fn pl(b: f64, a: f64, m: f64) -> PricePerfModel {
        PricePerfModel::PowerLaw(PowerLawPPM::new(a, b, m).unwrap())
    }

    fn al(s: f64, p: f64) -> PricePerfModel {
        PricePerfModel::Amdahl(AmdahlPPM::new(s, p).unwrap())
    }

    #[test]
    fn error_metric_examples() {
        assert_eq!(error_metric(&[100.0, 50.0], &[100.0, 50.0]).unwrap(), 0.0);
        assert!((error_metric(&[110.0], &[100.0]).unwrap() - 0.10).abs() < 1e-15);
        assert!((error_metric(&[110.0, 90.0], &[100.0, 100.0]).unwrap() - 0.10).abs() < 1e-15);
        assert_eq!(error_metric(&[], &[]), Err(SelectError::EmptyQuerySet));
    }

    #[test]
    fn error_metric_on_models_interpolates_curves() {
        let actual = AllocationCurve::executors(vec![(1, 100.0), (3, 60.0), (8, 20.0)]).unwrap();
        let pred = al(0.0, 100.0);
        let e = error_metric_at(&[(pred, actual)], 2).unwrap();
        // t_hat(2) = 50, t(2) = 80.
        assert!((e - 30.0 / 80.0).abs() < 1e-12);
    }

    #[test]
    fn limited_slowdown_examples() {
        let sel = |m: &PricePerfModel, h| {
            SelectionObjective::new(ObjectiveKind::LimitedSlowdown { h }, 1, 48)
                .unwrap()
                .select(m)
                .unwrap()
                .n
        };
        assert_eq!(sel(&al(10.0, 90.0), 1.0), 48);
        assert_eq!(sel(&pl(100.0, -1.0, 5.0), 1.0), 20);
        let brute = (1..=48).find(|&n| pl(100.0, -1.0, 5.0).evaluate(n) / 5.0 <= 1.5).unwrap();
        assert_eq!(brute, 14);
        assert_eq!(sel(&pl(100.0, -1.0, 5.0), 1.5), 14);
        assert!(SelectionObjective::new(ObjectiveKind::LimitedSlowdown { h: 0.9 }, 1, 48).is_err());
        assert!(SelectionObjective::new(ObjectiveKind::Elbow, 5, 4).is_err());
    }

    /// Direct transcription of the normalized-slope definition.
    fn brute_elbow(grid: &[(u32, f64)]) -> (u32, bool) {
        let ns: Vec<f64> = grid.iter().map(|p| p.0 as f64).collect();
        let ts: Vec<f64> = grid.iter().map(|p| p.1).collect();
        let (nmin, nmax) = (ns[0], ns[ns.len() - 1]);
        let tmin = ts.iter().cloned().fold(f64::INFINITY, f64::min);
        let tmax = ts.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if tmax == tmin {
            return (grid[0].0, true);
        }
        let slope = |i: usize| {
            let u = |j: usize| (ns[j] - nmin) / (nmax - nmin);
            let v = |j: usize| (ts[j] - tmin) / (tmax - tmin);
            (v(i - 1) - v(i)) / (u(i) - u(i - 1))
        };
        for i in 1..grid.len() - 1 {
            if slope(i) >= 1.0 && slope(i + 1) <= 1.0 {
                return (grid[i].0, false);
            }
        }
        (grid[0].0, true)
    }

    #[test]
    fn elbow_of_amdahl_matches_brute_force() {
        let grid = grid_values(&al(10.0, 90.0), 1, 48);
        let got = select_elbow(&grid).unwrap();
        assert_eq!((got.n, got.degenerate), brute_elbow(&grid));
        assert!(!got.degenerate);
    }

    #[test]
    fn elbow_flat_curve_is_degenerate() {
        let grid: Vec<(u32, f64)> = (1..=48).map(|n| (n, 40.0)).collect();
        assert_eq!(select_elbow(&grid).unwrap(), Selection { n: 1, degenerate: true });
        assert!(select_elbow(&grid[..2]).is_err());
    }

    #[test]
    fn elbow_two_segment_curve() {
        let grid: Vec<(u32, f64)> = (1..=48)
            .map(|n| {
                let t = if n <= 8 {
                    1000.0 - 10.0 * (n - 1) as f64
                } else {
                    930.0 - 0.1 * (n - 8) as f64
                };
                (n, t)
            })
            .collect();
        assert_eq!(select_elbow(&grid).unwrap().n, 8);
        assert_eq!(brute_elbow(&grid).0, 8);
    }

    fn node(c: u32, m: f64, em: f64) -> NodeShape {
        NodeShape::new(c, m, em).unwrap()
    }

    /// Exhaustive oracle with the same preference order spelled out as a sort key.
    fn brute_factorize(k: u32, n: &NodeShape) -> Option<(u32, u32, u32)> {
        let mut feasible: Vec<u32> = (1..=n.cores)
            .filter(|&e| k.is_multiple_of(e))
            .filter(|&e| (n.cores / e) as f64 * n.executor_memory_gb <= n.memory_gb)
            .collect();
        feasible.sort_by(|&a, &b| {
            let ka = (n.cores % a, n.memory_gb - (n.cores / a) as f64 * n.executor_memory_gb);
            let kb = (n.cores % b, n.memory_gb - (n.cores / b) as f64 * n.executor_memory_gb);
            ka.0.cmp(&kb.0)
                .then(ka.1.total_cmp(&kb.1))
                .then(b.cmp(&a))
        });
        feasible.first().map(|&e| (e, k / e, n.cores % e))
    }

    #[test]
    fn factorization_examples() {
        let shape = node(8, 64.0, 28.0);
        let f = factorize_cores(8, &shape, 1..=8).unwrap();
        assert_eq!((f.e_c, f.executors, f.waste_cores), (4, 2, 0));
        assert_eq!(brute_factorize(8, &shape), Some((4, 2, 0)));

        let f = factorize_cores(6, &shape, 1..=8).unwrap();
        assert_eq!(Some((f.e_c, f.executors, f.waste_cores)), brute_factorize(6, &shape));
        assert_eq!((f.e_c, f.executors, f.waste_cores), (3, 2, 2));

        let err = factorize_cores(1, &shape, 1..=8).unwrap_err();
        assert!(brute_factorize(1, &shape).is_none());
        match err {
            SelectError::Infeasible { details, .. } => assert!(details.contains("e_c=1"), "{details}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn node_shape_validation() {
        assert!(NodeShape::new(0, 1.0, 1.0).is_err());
        assert!(NodeShape::new(8, 16.0, 32.0).is_err());
    }
}
