//! Price-performance models: runtime as a function of allocated resources.
//!
//! Two families are supported:
//!
//! * power law with a runtime floor, `t(n) = max(b * n^a, m)`;
//! * Amdahl's law, `t(n) = s + p / n`.
//!
//! Both are monotonically non-increasing in `n` for every value their
//! constructors accept. Fitting works from an [`AllocationCurve`] of measured
//! or simulated `(n, seconds)` points.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Relative band above the minimum runtime treated as "at the floor".
pub const SATURATION_TOLERANCE: f64 = 0.02;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PpmError {
    #[error("allocation curve is empty")]
    EmptyCurve,
    #[error("allocation values must be >= 1 and strictly increasing (offending n = {0})")]
    NonIncreasingAllocation(u32),
    #[error("runtime at n = {n} must be finite and positive, got {t}")]
    InvalidRuntime { n: u32, t: f64 },
    #[error("fitting needs at least 3 curve points, got {0}")]
    TooFewPoints(usize),
    #[error("invalid {family} parameter {name} = {value}")]
    InvalidParameter {
        family: PpmFamily,
        name: &'static str,
        value: f64,
    },
    #[error("{family} expects {expected} parameters, got {got}")]
    ParameterCount {
        family: PpmFamily,
        expected: usize,
        got: usize,
    },
}

/// The resource axis of a curve.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceKind {
    #[default]
    Executors,
    TotalCores,
}

/// Runtimes observed (or estimated) at a strictly increasing set of allocations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocationCurve {
    points: Vec<(u32, f64)>,
    #[serde(default)]
    resource_kind: ResourceKind,
}

impl AllocationCurve {
    pub fn new(points: Vec<(u32, f64)>, resource_kind: ResourceKind) -> Result<Self, PpmError> {
        if points.is_empty() {
            return Err(PpmError::EmptyCurve);
        }
        let mut prev = 0u32;
        for &(n, t) in &points {
            if n <= prev {
                return Err(PpmError::NonIncreasingAllocation(n));
            }
            if !t.is_finite() || t <= 0.0 {
                return Err(PpmError::InvalidRuntime { n, t });
            }
            prev = n;
        }
        Ok(Self {
            points,
            resource_kind,
        })
    }

    pub fn executors(points: Vec<(u32, f64)>) -> Result<Self, PpmError> {
        Self::new(points, ResourceKind::Executors)
    }

    /// Samples `model` at every allocation in `grid`.
    pub fn from_model(model: &PricePerfModel, grid: &[u32]) -> Result<Self, PpmError> {
        Self::executors(grid.iter().map(|&n| (n, model.evaluate(n))).collect())
    }

    pub fn points(&self) -> &[(u32, f64)] {
        &self.points
    }

    pub fn resource_kind(&self) -> ResourceKind {
        self.resource_kind
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn min_time(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.1)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_non_increasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].1 <= w[0].1)
    }

    /// Piecewise-linear interpolation; held constant beyond either end.
    pub fn interpolate(&self, n: f64) -> f64 {
        let pts = &self.points;
        let first = pts[0];
        let last = pts[pts.len() - 1];
        if n <= first.0 as f64 {
            return first.1;
        }
        if n >= last.0 as f64 {
            return last.1;
        }
        let idx = pts.partition_point(|p| (p.0 as f64) <= n);
        let (n0, t0) = pts[idx - 1];
        let (n1, t1) = pts[idx];
        if n == n0 as f64 {
            return t0;
        }
        let w = (n - n0 as f64) / (n1 - n0) as f64;
        t0 + (t1 - t0) * w
    }
}

/// Which model family a parameter vector belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PpmFamily {
    #[serde(rename = "pl")]
    PowerLaw,
    #[serde(rename = "al")]
    Amdahl,
}

impl PpmFamily {
    pub const ALL: [PpmFamily; 2] = [PpmFamily::PowerLaw, PpmFamily::Amdahl];

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            PpmFamily::PowerLaw => &["a", "b", "m"],
            PpmFamily::Amdahl => &["s", "p"],
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            PpmFamily::PowerLaw => "pl",
            PpmFamily::Amdahl => "al",
        }
    }
}

impl fmt::Display for PpmFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PpmFamily::PowerLaw => "AE_PL",
            PpmFamily::Amdahl => "AE_AL",
        })
    }
}

impl std::str::FromStr for PpmFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pl" | "ae_pl" | "power-law" | "powerlaw" => Ok(PpmFamily::PowerLaw),
            "al" | "ae_al" | "amdahl" => Ok(PpmFamily::Amdahl),
            other => Err(format!("unknown model family `{other}` (expected pl or al)")),
        }
    }
}

/// `t(n) = max(b * n^a, m)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawPPM {
    a: f64,
    b: f64,
    m: f64,
}

impl PowerLawPPM {
    pub fn new(a: f64, b: f64, m: f64) -> Result<Self, PpmError> {
        let bad = |name, value| PpmError::InvalidParameter {
            family: PpmFamily::PowerLaw,
            name,
            value,
        };
        if !a.is_finite() || a > 0.0 {
            return Err(bad("a", a));
        }
        if !b.is_finite() || b <= 0.0 {
            return Err(bad("b", b));
        }
        if !m.is_finite() || m <= 0.0 {
            return Err(bad("m", m));
        }
        Ok(Self { a, b, m })
    }

    /// Builds a model from possibly out-of-range predictions: a positive
    /// exponent collapses to the flat model at the floor, and scales are kept
    /// strictly positive.
    pub fn clamped(a: f64, b: f64, m: f64) -> Self {
        let m = if m.is_finite() && m > 0.0 { m } else { f64::MIN_POSITIVE };
        if !a.is_finite() || a > 0.0 || !b.is_finite() || b <= 0.0 {
            return Self { a: 0.0, b: m, m };
        }
        Self { a, b, m }
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn evaluate(&self, n: u32) -> f64 {
        debug_assert!(n >= 1);
        (self.b * f64::from(n).powf(self.a)).max(self.m)
    }

    /// Smallest `n` at which the floor `m` is reached, capped at
    /// `u32::MAX - 1` when the floor lies beyond that.
    pub fn saturation_point(&self) -> SaturationPoint {
        if self.a >= 0.0 {
            return SaturationPoint { n_m: 1 };
        }
        let reaches_floor = |n: u32| self.b * f64::from(n).powf(self.a) <= self.m;
        let approx = (self.m / self.b).powf(1.0 / self.a).ceil();
        let mut n = if approx.is_finite() {
            approx.clamp(1.0, f64::from(u32::MAX - 1)) as u32
        } else {
            u32::MAX - 1
        };
        // Correct for rounding in the closed form.
        while n > 1 && reaches_floor(n - 1) {
            n -= 1;
        }
        while !reaches_floor(n) && n < u32::MAX - 1 {
            n += 1;
        }
        SaturationPoint { n_m: n }
    }
}

/// `t(n) = s + p / n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmdahlPPM {
    s: f64,
    p: f64,
}

impl AmdahlPPM {
    pub fn new(s: f64, p: f64) -> Result<Self, PpmError> {
        let bad = |name, value| PpmError::InvalidParameter {
            family: PpmFamily::Amdahl,
            name,
            value,
        };
        if !s.is_finite() || s < 0.0 {
            return Err(bad("s", s));
        }
        if !p.is_finite() || p < 0.0 {
            return Err(bad("p", p));
        }
        Ok(Self { s, p })
    }

    pub fn clamped(s: f64, p: f64) -> Self {
        let fix = |v: f64| if v.is_finite() { v.max(0.0) } else { 0.0 };
        Self { s: fix(s), p: fix(p) }
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn evaluate(&self, n: u32) -> f64 {
        debug_assert!(n >= 1);
        self.s + self.p / f64::from(n)
    }
}

/// First allocation at which a power-law model sits on its floor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaturationPoint {
    pub n_m: u32,
}

/// A fitted or predicted model of either family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PricePerfModel {
    #[serde(rename = "pl")]
    PowerLaw(PowerLawPPM),
    #[serde(rename = "al")]
    Amdahl(AmdahlPPM),
}

impl PricePerfModel {
    pub fn evaluate(&self, n: u32) -> f64 {
        match self {
            PricePerfModel::PowerLaw(m) => m.evaluate(n),
            PricePerfModel::Amdahl(m) => m.evaluate(n),
        }
    }

    pub fn family(&self) -> PpmFamily {
        match self {
            PricePerfModel::PowerLaw(_) => PpmFamily::PowerLaw,
            PricePerfModel::Amdahl(_) => PpmFamily::Amdahl,
        }
    }

    /// Parameters in the order of [`PpmFamily::param_names`].
    pub fn params(&self) -> Vec<f64> {
        match self {
            PricePerfModel::PowerLaw(m) => vec![m.a, m.b, m.m],
            PricePerfModel::Amdahl(m) => vec![m.s, m.p],
        }
    }

    /// Strict construction from a parameter vector.
    pub fn from_params(family: PpmFamily, params: &[f64]) -> Result<Self, PpmError> {
        check_count(family, params)?;
        Ok(match family {
            PpmFamily::PowerLaw => {
                PricePerfModel::PowerLaw(PowerLawPPM::new(params[0], params[1], params[2])?)
            }
            PpmFamily::Amdahl => PricePerfModel::Amdahl(AmdahlPPM::new(params[0], params[1])?),
        })
    }

    /// Construction from predicted parameters, clamping into the valid region.
    pub fn from_params_clamped(family: PpmFamily, params: &[f64]) -> Result<Self, PpmError> {
        check_count(family, params)?;
        Ok(match family {
            PpmFamily::PowerLaw => {
                PricePerfModel::PowerLaw(PowerLawPPM::clamped(params[0], params[1], params[2]))
            }
            PpmFamily::Amdahl => PricePerfModel::Amdahl(AmdahlPPM::clamped(params[0], params[1])),
        })
    }
}

fn check_count(family: PpmFamily, params: &[f64]) -> Result<(), PpmError> {
    let expected = family.param_names().len();
    if params.len() != expected {
        return Err(PpmError::ParameterCount {
            family,
            expected,
            got: params.len(),
        });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerLawFit {
    pub model: PowerLawPPM,
    /// RMS of log-space residuals over the fitted region.
    pub residual: f64,
    /// Set when the curve gave no usable decreasing region.
    pub degenerate: bool,
    /// Number of curve points the regression used.
    pub fit_points: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmdahlFit {
    pub model: AmdahlPPM,
    /// RMS of linear-space residuals (seconds).
    pub residual: f64,
}

/// Either family's fit, as produced by [`fit`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fit {
    pub model: PricePerfModel,
    pub residual: f64,
    pub degenerate: bool,
}

fn require_fit_points(curve: &AllocationCurve) -> Result<(), PpmError> {
    if curve.len() < 3 {
        return Err(PpmError::TooFewPoints(curve.len()));
    }
    Ok(())
}

/// Fits `max(b * n^a, m)` to a curve.
///
/// `m` is the curve minimum. The regression of `ln t` on `ln n` runs over the
/// leading points that sit more than [`SATURATION_TOLERANCE`] above `m`; when
/// that prefix has a single point, the first at-floor point is added so a
/// line can still be drawn.
pub fn fit_power_law(curve: &AllocationCurve) -> Result<PowerLawFit, PpmError> {
    require_fit_points(curve)?;
    let m = curve.min_time();
    let threshold = m * (1.0 + SATURATION_TOLERANCE);
    let pts = curve.points();
    let mut region = pts.iter().take_while(|p| p.1 > threshold).count();
    if region == 1 {
        region = 2;
    }
    let flat = PowerLawFit {
        model: PowerLawPPM { a: 0.0, b: m, m },
        residual: 0.0,
        degenerate: true,
        fit_points: region.min(pts.len()),
    };
    if region < 2 {
        return Ok(flat);
    }
    let xs: Vec<f64> = pts[..region].iter().map(|p| f64::from(p.0).ln()).collect();
    let ys: Vec<f64> = pts[..region].iter().map(|p| p.1.ln()).collect();
    let Some((ln_b, a)) = crate::stats::ols(&xs, &ys) else {
        return Ok(flat);
    };
    if a > 0.0 || !a.is_finite() || !ln_b.is_finite() {
        let ln_m = m.ln();
        return Ok(PowerLawFit {
            residual: crate::stats::rms(ys.iter().map(|y| y - ln_m)),
            fit_points: region,
            ..flat
        });
    }
    let residual = crate::stats::rms(xs.iter().zip(&ys).map(|(x, y)| y - (ln_b + a * x)));
    Ok(PowerLawFit {
        model: PowerLawPPM {
            a,
            b: ln_b.exp(),
            m,
        },
        residual,
        degenerate: false,
        fit_points: region,
    })
}

/// Fits `s + p / n` by least squares of `t` on `1 / n`.
///
/// A negative coefficient is pinned to zero and the other one refitted alone.
pub fn fit_amdahl(curve: &AllocationCurve) -> Result<AmdahlFit, PpmError> {
    require_fit_points(curve)?;
    let xs: Vec<f64> = curve.points().iter().map(|p| 1.0 / f64::from(p.0)).collect();
    let ys: Vec<f64> = curve.points().iter().map(|p| p.1).collect();
    let (mut s, mut p) = crate::stats::ols(&xs, &ys).expect("n values are distinct");
    if p < 0.0 {
        p = 0.0;
        s = crate::stats::mean(&ys);
    } else if s < 0.0 {
        s = 0.0;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        p = (sxy / sxx).max(0.0);
    }
    let residual = crate::stats::rms(xs.iter().zip(&ys).map(|(x, y)| y - (s + p * x)));
    Ok(AmdahlFit {
        model: AmdahlPPM { s, p },
        residual,
    })
}

/// Fits the requested family.
pub fn fit(family: PpmFamily, curve: &AllocationCurve) -> Result<Fit, PpmError> {
    Ok(match family {
        PpmFamily::PowerLaw => {
            let f = fit_power_law(curve)?;
            Fit {
                model: PricePerfModel::PowerLaw(f.model),
                residual: f.residual,
                degenerate: f.degenerate,
            }
        }
        PpmFamily::Amdahl => {
            let f = fit_amdahl(curve)?;
            Fit {
                model: PricePerfModel::Amdahl(f.model),
                residual: f.residual,
                degenerate: f.model.p == 0.0,
            }
        }
    })
}

/// RMS of `(model(n) - t) / t` over the curve points.
pub fn relative_rms_error(model: &PricePerfModel, curve: &AllocationCurve) -> f64 {
    crate::stats::rms(
        curve
            .points()
            .iter()
            .map(|&(n, t)| (model.evaluate(n) - t) / t),
    )
}
