//! Size, degree and weight statistics, log-log fits and Pearson correlation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::TxGraph;
use crate::types::{Timestamp, Wei};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("zero variance")]
    ZeroVariance,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SizeStats {
    pub node_count: u64,
    pub edge_count: u64,
    pub tx_count: u64,
    pub total_value: Wei,
}

pub fn size_stats(g: &TxGraph) -> SizeStats {
    SizeStats {
        node_count: g.node_count() as u64,
        edge_count: g.edge_count() as u64,
        tx_count: g.tx_count(),
        total_value: g.total_value(),
    }
}

/// Power law `y = coefficient * x^exponent` fitted in log-log space.
/// For degree tails the law is `1 - CDF = c * d^(-exponent)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub exponent: f64,
    pub coefficient: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

struct Line {
    slope: f64,
    intercept: f64,
    r_squared: f64,
}

fn least_squares(xs: &[f64], ys: &[f64]) -> Result<Line, StatsError> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(StatsError::DegenerateInput("all x values equal"));
    }
    let slope = sxy / sxx;
    // squared correlation of x and y, i.e. of fitted and observed values
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        ((sxy * sxy) / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(Line {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

/// Fits `e = c * n^alpha` across snapshots.
pub fn fit_densification(points: &[(f64, f64)]) -> Result<FitResult, StatsError> {
    if points.len() < 2 {
        return Err(StatsError::DegenerateInput("fewer than two points"));
    }
    if points.iter().any(|&(n, e)| !(n > 0.0 && e > 0.0)) {
        return Err(StatsError::DegenerateInput("non-positive node or edge count"));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let line = least_squares(&xs, &ys)?;
    Ok(FitResult {
        exponent: line.slope,
        coefficient: line.intercept.exp(),
        r_squared: line.r_squared,
        n_points: points.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    In,
    Out,
    All,
}

impl Direction {
    pub const ALL: [Direction; 3] = [Direction::In, Direction::Out, Direction::All];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::In => "in",
            Direction::Out => "out",
            Direction::All => "all",
        }
    }
}

/// Distinct-neighbour degree of a node; `All` counts a mutual pair twice.
pub fn node_degree(g: &TxGraph, node: u32, direction: Direction) -> u64 {
    (match direction {
        Direction::In => g.in_degree(node),
        Direction::Out => g.out_degree(node),
        Direction::All => g.in_degree(node) + g.out_degree(node),
    }) as u64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeHistogram {
    pub direction: Direction,
    /// degree -> number of nodes
    pub counts: BTreeMap<u64, u64>,
}

impl DegreeHistogram {
    pub fn from_degrees(direction: Direction, degrees: impl IntoIterator<Item = u64>) -> Self {
        let mut counts = BTreeMap::new();
        for d in degrees {
            *counts.entry(d).or_insert(0) += 1;
        }
        DegreeHistogram { direction, counts }
    }

    pub fn node_count(&self) -> u64 {
        self.counts.values().sum()
    }

    /// `(degree, P[D <= degree])` at each observed degree.
    pub fn cdf(&self) -> Vec<(u64, f64)> {
        let n = self.node_count() as f64;
        let mut acc = 0u64;
        self.counts
            .iter()
            .map(|(&d, &c)| {
                acc += c;
                (d, acc as f64 / n)
            })
            .collect()
    }

    pub fn mean(&self) -> Option<f64> {
        let n = self.node_count();
        (n > 0).then(|| self.counts.iter().map(|(&d, &c)| (d * c) as f64).sum::<f64>() / n as f64)
    }
}

pub fn degree_histogram(g: &TxGraph, direction: Direction) -> DegreeHistogram {
    DegreeHistogram::from_degrees(
        direction,
        (0..g.node_count() as u32).map(|v| node_degree(g, v, direction)),
    )
}

/// Fits `1 - CDF(d) = c * d^(-gamma)` over observed degrees `d >= 1`.
/// The last point (where `1 - CDF = 0`) cannot be logged and is dropped.
pub fn fit_degree_tail(h: &DegreeHistogram) -> Result<FitResult, StatsError> {
    fit_degree_tail_from(h, 1)
}

/// As [`fit_degree_tail`], restricted to degrees `>= min_degree`.
pub fn fit_degree_tail_from(h: &DegreeHistogram, min_degree: u64) -> Result<FitResult, StatsError> {
    let n = h.node_count();
    let mut below = 0u64;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&d, &c) in &h.counts {
        below += c;
        let above = n - below;
        if d >= min_degree.max(1) && above > 0 {
            xs.push((d as f64).ln());
            ys.push((above as f64 / n as f64).ln());
        }
    }
    if xs.len() < 2 {
        return Err(StatsError::DegenerateInput(
            "fewer than two distinct tail degrees",
        ));
    }
    let line = least_squares(&xs, &ys)?;
    Ok(FitResult {
        exponent: -line.slope,
        coefficient: line.intercept.exp(),
        r_squared: line.r_squared,
        n_points: xs.len(),
    })
}

/// Averages over a node group; `None` when the group is empty.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupAverages {
    pub nodes: u64,
    /// Mean per-node transaction count (sent + received).
    pub avg_tx: Option<f64>,
    /// Mean per-node value moved (sent + received), Wei.
    pub avg_value: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WeightStats {
    pub tx_per_node: Option<f64>,
    pub tx_per_edge: Option<f64>,
    pub value_per_node: Option<f64>,
    pub value_per_edge: Option<f64>,
    pub value_per_tx: Option<f64>,
    pub new_nodes: GroupAverages,
    pub old_nodes: GroupAverages,
}

fn ratio(num: f64, den: u64) -> Option<f64> {
    (den > 0).then(|| num / den as f64)
}

/// Window averages; new nodes are those whose global first transaction lies
/// inside the window.
pub fn weight_stats(g: &TxGraph, first_seen: &[Option<Timestamp>]) -> WeightStats {
    let nodes = g.node_count() as u64;
    let edges = g.edge_count() as u64;
    let tx = g.tx_count();
    let value = g.total_value() as f64;

    let mut sums = [(0u64, 0u64, 0f64); 2];
    for v in 0..g.node_count() as u32 {
        let is_new = first_seen[g.account(v) as usize].is_some_and(|t| g.window().contains(t));
        let (out_tx, in_tx) = g.node_tx_counts(v);
        let moved: Wei = g.out_edges(v).iter().map(|e| e.total_value).sum::<Wei>()
            + g.in_edges(v).map(|(_, e)| e.total_value).sum::<Wei>();
        let slot = &mut sums[usize::from(is_new)];
        slot.0 += 1;
        slot.1 += out_tx + in_tx;
        slot.2 += moved as f64;
    }
    let group = |(n, t, val): (u64, u64, f64)| GroupAverages {
        nodes: n,
        avg_tx: ratio(t as f64, n),
        avg_value: ratio(val, n),
    };
    WeightStats {
        tx_per_node: ratio(tx as f64, nodes),
        tx_per_edge: ratio(tx as f64, edges),
        value_per_node: ratio(value, nodes),
        value_per_edge: ratio(value, edges),
        value_per_tx: ratio(value, tx),
        new_nodes: group(sums[1]),
        old_nodes: group(sums[0]),
    }
}

/// Product-moment correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatsError::DegenerateInput("fewer than two points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Empirical distribution of transaction counts.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CountDistribution {
    /// tx_count -> number of edges (or nodes)
    pub counts: BTreeMap<u64, u64>,
}

impl CountDistribution {
    fn from_values(values: impl IntoIterator<Item = u64>) -> Self {
        let mut counts = BTreeMap::new();
        for v in values {
            *counts.entry(v).or_insert(0) += 1;
        }
        CountDistribution { counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn cdf(&self) -> Vec<(u64, f64)> {
        let n = self.total() as f64;
        let mut acc = 0;
        self.counts
            .iter()
            .map(|(&k, &c)| {
                acc += c;
                (k, acc as f64 / n)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TxCountHistograms {
    pub per_edge: CountDistribution,
    /// A node's count is the sum of its incident edges' counts.
    pub per_node: CountDistribution,
}

pub fn transaction_count_histogram(g: &TxGraph) -> TxCountHistograms {
    TxCountHistograms {
        per_edge: CountDistribution::from_values(g.edges().iter().map(|e| e.tx_count)),
        per_node: CountDistribution::from_values((0..g.node_count() as u32).map(|v| {
            let (o, i) = g.node_tx_counts(v);
            o + i
        })),
    }
}
