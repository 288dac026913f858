//! Value parsers for command-line flags.

use execsizer::allocsim::AllocationPolicy;
use execsizer::select::NodeShape;
use execsizer::PpmFamily;
use std::fmt;
use std::ops::Deref;

/// Allocation grid flag value.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid(pub Vec<u32>);

impl Deref for Grid {
    type Target = [u32];

    fn deref(&self) -> &[u32] {
        &self.0
    }
}

/// Comma-separated numbers flag value.
#[derive(Clone, Debug, PartialEq)]
pub struct Numbers(pub Vec<f64>);

/// `n:t` pairs flag value.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvePoints(pub Vec<(u32, f64)>);

/// `a..b` (inclusive) or a comma-separated list of allocations.
pub fn parse_grid(s: &str) -> Result<Grid, String> {
    let grid: Vec<u32> = if let Some((lo, hi)) = s.split_once("..") {
        let lo: u32 = lo.trim().parse().map_err(|_| format!("bad grid start `{lo}`"))?;
        let hi: u32 = hi.trim().parse().map_err(|_| format!("bad grid end `{hi}`"))?;
        if lo > hi {
            return Err(format!("empty grid range {lo}..{hi}"));
        }
        (lo..=hi).collect()
    } else {
        s.split(',')
            .map(|v| v.trim().parse::<u32>().map_err(|_| format!("bad grid value `{v}`")))
            .collect::<Result<_, _>>()?
    };
    if grid.first() == Some(&0) || grid.is_empty() {
        return Err("grid values must be >= 1".into());
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err("grid must be strictly increasing".into());
    }
    Ok(Grid(grid))
}

pub fn parse_family(s: &str) -> Result<PpmFamily, String> {
    s.parse::<PpmFamily>().map_err(|e| e.to_string())
}

/// `C,M,em`: cores per node, node memory GB, memory GB per executor.
pub fn parse_node(s: &str) -> Result<NodeShape, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [c, m, em] = parts.as_slice() else {
        return Err(format!("expected C,M,em, got `{s}`"));
    };
    let cores = c.parse().map_err(|_| format!("bad core count `{c}`"))?;
    let memory = m.parse().map_err(|_| format!("bad node memory `{m}`"))?;
    let executor_memory = em.parse().map_err(|_| format!("bad executor memory `{em}`"))?;
    NodeShape::new(cores, memory, executor_memory).map_err(|e| e.to_string())
}

pub fn parse_f64_list(s: &str) -> Result<Numbers, String> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("bad number `{v}`")))
        .collect::<Result<_, _>>()
        .map(Numbers)
}

/// `n:t` pairs separated by commas.
pub fn parse_curve(s: &str) -> Result<CurvePoints, String> {
    s.split(',')
        .map(|pair| {
            let (n, t) = pair
                .split_once(':')
                .ok_or_else(|| format!("expected n:t, got `{pair}`"))?;
            Ok((
                n.trim().parse().map_err(|_| format!("bad allocation `{n}`"))?,
                t.trim().parse().map_err(|_| format!("bad runtime `{t}`"))?,
            ))
        })
        .collect::<Result<_, String>>()
        .map(CurvePoints)
}

/// `name=f1,f2,...`
pub fn parse_subset(s: &str) -> Result<(String, Vec<String>), String> {
    let (name, features) = s
        .split_once('=')
        .ok_or_else(|| format!("expected name=f1,f2,..., got `{s}`"))?;
    if name.is_empty() {
        return Err("subset name is empty".into());
    }
    let features = features
        .split(',')
        .map(str::trim)
        .filter(|f| !f.is_empty())
        .map(String::from)
        .collect();
    Ok((name.to_string(), features))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PolicySpec {
    Fixed(AllocationPolicy),
    /// Rule allocation driven by model predictions.
    RuleAuto,
}

impl PolicySpec {
    /// File- and CSV-safe label.
    pub fn slug(&self) -> String {
        match self {
            PolicySpec::Fixed(AllocationPolicy::Static { n }) => format!("sa_{n}"),
            PolicySpec::Fixed(AllocationPolicy::Dynamic { n_min, n_max, .. }) => {
                format!("da_{n_min}_{n_max}")
            }
            PolicySpec::Fixed(AllocationPolicy::Rule { n_predicted, .. }) => format!("rule_{n_predicted}"),
            PolicySpec::RuleAuto => "rule_auto".into(),
        }
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.slug())
    }
}

/// `sa:N`, `da:MIN,MAX`, `rule:N` or `rule:auto`.
pub fn parse_policy(s: &str) -> Result<PolicySpec, String> {
    let (kind, value) = s
        .split_once(':')
        .ok_or_else(|| format!("expected kind:value, got `{s}`"))?;
    let num = |v: &str| v.trim().parse::<u32>().map_err(|_| format!("bad count `{v}` in `{s}`"));
    let spec = match kind {
        "sa" => PolicySpec::Fixed(AllocationPolicy::static_(num(value)?)),
        "da" => {
            let (lo, hi) = value
                .split_once(',')
                .ok_or_else(|| format!("expected da:MIN,MAX, got `{s}`"))?;
            PolicySpec::Fixed(AllocationPolicy::dynamic(num(lo)?, num(hi)?))
        }
        "rule" if value == "auto" => PolicySpec::RuleAuto,
        "rule" => PolicySpec::Fixed(AllocationPolicy::rule(num(value)?)),
        other => return Err(format!("unknown policy kind `{other}`")),
    };
    if let PolicySpec::Fixed(p) = spec {
        p.validate().map_err(|e| e.to_string())?;
    }
    Ok(spec)
}
