//! Gini coefficients, cross-snapshot persistence ("rich stays rich") and
//! ledger replay.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Credit, Record};
use crate::graph::TxGraph;
use crate::ingest::AccountRegistry;
use crate::metrics::{pearson, StatsError};
use crate::types::{AccountKind, Timestamp, Wei};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InequalityError {
    #[error("empty input")]
    EmptyInput,
    #[error("values sum to zero")]
    ZeroSum,
    #[error("negative value at position {0}")]
    NegativeValue(usize),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("fewer than two accounts in common")]
    EmptyIntersection,
}

/// Population Gini, `sum_ij |x_i - x_j| / (2 n^2 mean)`, via the sorted form
/// `(2 sum_i i x_(i)) / (n sum x) - (n + 1) / n`.
pub fn gini(values: &[f64]) -> Result<f64, InequalityError> {
    if values.is_empty() {
        return Err(InequalityError::EmptyInput);
    }
    if let Some(i) = values.iter().position(|v| v.is_nan() || *v < 0.0) {
        return Err(InequalityError::NegativeValue(i));
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let total: f64 = sorted.iter().sum();
    if total == 0.0 {
        return Err(InequalityError::ZeroSum);
    }
    let n = sorted.len() as f64;
    // sum_i (2i - n - 1) x_(i) keeps the terms small and the result >= 0
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * (i as f64 + 1.0) - n - 1.0) * x)
        .sum();
    Ok((weighted / (n * total)).clamp(0.0, 1.0))
}

/// Exact Gini over integer amounts.
pub fn gini_exact(values: &[Wei]) -> Result<BigRational, InequalityError> {
    if values.is_empty() {
        return Err(InequalityError::EmptyInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let total: BigInt = sorted.iter().map(|&v| BigInt::from(v)).sum();
    if total.is_zero() {
        return Err(InequalityError::ZeroSum);
    }
    let n = BigInt::from(sorted.len());
    let weighted: BigInt = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| (BigInt::from(2 * (i + 1)) - &n - 1) * BigInt::from(x))
        .sum();
    Ok(BigRational::new(weighted, n * total))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GiniMetric {
    Degree,
    InDegree,
    OutDegree,
    TxNum,
    InNum,
    OutNum,
    Balance,
}

impl GiniMetric {
    pub const GRAPH: [GiniMetric; 6] = [
        GiniMetric::Degree,
        GiniMetric::InDegree,
        GiniMetric::OutDegree,
        GiniMetric::TxNum,
        GiniMetric::InNum,
        GiniMetric::OutNum,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GiniMetric::Degree => "degree",
            GiniMetric::InDegree => "in_degree",
            GiniMetric::OutDegree => "out_degree",
            GiniMetric::TxNum => "tx_num",
            GiniMetric::InNum => "in_num",
            GiniMetric::OutNum => "out_num",
            GiniMetric::Balance => "balance",
        }
    }
}

impl fmt::Display for GiniMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GiniMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [GiniMetric::Balance]
            .into_iter()
            .chain(GiniMetric::GRAPH)
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| format!("unknown gini metric {s:?}"))
    }
}

/// Per-node value of a graph metric, keyed by registry index. Degrees are
/// distinct-neighbour counts; `*_num` are transaction counts.
pub fn node_metric(g: &TxGraph, metric: GiniMetric) -> BTreeMap<u32, f64> {
    (0..g.node_count() as u32)
        .map(|v| {
            let value = match metric {
                GiniMetric::Degree => (g.in_degree(v) + g.out_degree(v)) as f64,
                GiniMetric::InDegree => g.in_degree(v) as f64,
                GiniMetric::OutDegree => g.out_degree(v) as f64,
                GiniMetric::TxNum | GiniMetric::InNum | GiniMetric::OutNum => {
                    let (out, inc) = g.node_tx_counts(v);
                    match metric {
                        GiniMetric::InNum => inc as f64,
                        GiniMetric::OutNum => out as f64,
                        _ => (out + inc) as f64,
                    }
                }
                GiniMetric::Balance => panic!("balance is not a graph metric"),
            };
            (g.account(v), value)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GiniReport {
    pub metric: GiniMetric,
    /// Window index or checkpoint position.
    pub window: usize,
    pub gini: Option<f64>,
}

/// Gini of a graph metric over each window's active nodes. Windows where the
/// Gini is undefined (no nodes, all zeros) report `None`.
pub fn gini_timeseries(graphs: &[TxGraph], metric: GiniMetric) -> Vec<GiniReport> {
    graphs
        .iter()
        .map(|g| {
            let values: Vec<f64> = node_metric(g, metric).into_values().collect();
            GiniReport {
                metric,
                window: g.window().index,
                gini: gini(&values).ok(),
            }
        })
        .collect()
}

/// Replay cut-off. `Block(h)` includes block `h`; `Time(t)` includes records
/// strictly before `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Checkpoint {
    Block(u64),
    Time(Timestamp),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceSheet {
    pub as_of: Checkpoint,
    /// Balances of every account touched so far (signed for diagnostics).
    pub balances: BTreeMap<u32, i128>,
    /// Zero balance and no transaction after the checkpoint.
    pub dead: BTreeSet<u32>,
}

impl BalanceSheet {
    pub fn total(&self) -> i128 {
        self.balances.values().sum()
    }

    /// Balances of living accounts, optionally EOAs only. Negative balances
    /// (lenient replay) are floored at zero.
    pub fn living_balances(&self, registry: &AccountRegistry, eoa_only: bool) -> BTreeMap<u32, Wei> {
        self.balances
            .iter()
            .filter(|(a, _)| !self.dead.contains(a))
            .filter(|(a, _)| !eoa_only || registry.kind(**a) == AccountKind::Eoa)
            .map(|(&a, &b)| (a, b.max(0) as Wei))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReplayMode {
    /// Error on the first negative balance.
    #[default]
    Strict,
    /// Record a diagnostic and keep the negative balance.
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativeBalance {
    pub account: u32,
    pub block_id: u64,
    pub balance: i128,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("account #{} went negative ({}) at block {}", .0.account, .0.balance, .0.block_id)]
    NegativeBalance(NegativeBalance),
    #[error("records out of block order at position {0}")]
    UnsortedInput(usize),
    #[error("checkpoints must be strictly increasing")]
    UnsortedCheckpoints,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ReplayOutcome {
    pub sheets: Vec<BalanceSheet>,
    pub diagnostics: Vec<NegativeBalance>,
    pub credited: Wei,
}

/// Replays value flow: receiver += value, sender -= value, external credits
/// applied before the records of their block. Emits a sheet per checkpoint.
///
/// `records` must be ordered by block (ties in source order).
pub fn replay_balances(
    records: &[Record],
    checkpoints: &[Checkpoint],
    credits: &[Credit],
    mode: ReplayMode,
) -> Result<ReplayOutcome, ReplayError> {
    if let Some(i) = records.windows(2).position(|w| w[0].block_id > w[1].block_id) {
        return Err(ReplayError::UnsortedInput(i + 1));
    }
    if checkpoints.windows(2).any(|w| {
        !matches!((w[0], w[1]),
            (Checkpoint::Block(a), Checkpoint::Block(b)) if a < b)
            && !matches!((w[0], w[1]),
            (Checkpoint::Time(a), Checkpoint::Time(b)) if a < b)
    }) {
        return Err(ReplayError::UnsortedCheckpoints);
    }

    // last record position per account, for the dead-account test
    let mut last_pos: HashMap<u32, usize> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        last_pos.insert(r.sender, i);
        last_pos.insert(r.receiver, i);
    }

    let mut credits = credits.to_vec();
    credits.sort_by_key(|c| c.block_id);

    let mut state = Ledger {
        balances: BTreeMap::new(),
        credited: 0,
        diagnostics: Vec::new(),
        mode,
    };
    let mut next_credit = 0;
    let mut sheets = Vec::with_capacity(checkpoints.len());
    let mut pending = checkpoints.iter().copied().peekable();

    let snapshot = |state: &Ledger, as_of: Checkpoint, pos: usize| {
        let dead = state
            .balances
            .iter()
            .filter(|(a, b)| **b == 0 && last_pos.get(a).is_none_or(|&p| p < pos))
            .map(|(a, _)| *a)
            .collect();
        BalanceSheet {
            as_of,
            balances: state.balances.clone(),
            dead,
        }
    };

    for (pos, r) in records.iter().enumerate() {
        while let Some(&cp) = pending.peek() {
            let due = match cp {
                Checkpoint::Block(h) => r.block_id > h,
                Checkpoint::Time(t) => r.timestamp >= t,
            };
            if !due {
                break;
            }
            if let Checkpoint::Block(h) = cp {
                while next_credit < credits.len() && credits[next_credit].block_id <= h {
                    state.credit(&credits[next_credit]);
                    next_credit += 1;
                }
            }
            sheets.push(snapshot(&state, cp, pos));
            pending.next();
        }
        while next_credit < credits.len() && credits[next_credit].block_id <= r.block_id {
            state.credit(&credits[next_credit]);
            next_credit += 1;
        }
        state.transfer(r)?;
    }
    for cp in pending {
        let limit = match cp {
            Checkpoint::Block(h) => h,
            Checkpoint::Time(_) => u64::MAX,
        };
        while next_credit < credits.len() && credits[next_credit].block_id <= limit {
            state.credit(&credits[next_credit]);
            next_credit += 1;
        }
        sheets.push(snapshot(&state, cp, records.len()));
    }
    Ok(ReplayOutcome {
        sheets,
        diagnostics: state.diagnostics,
        credited: state.credited,
    })
}

struct Ledger {
    balances: BTreeMap<u32, i128>,
    credited: Wei,
    diagnostics: Vec<NegativeBalance>,
    mode: ReplayMode,
}

impl Ledger {
    fn credit(&mut self, c: &Credit) {
        *self.balances.entry(c.account).or_insert(0) += c.amount as i128;
        self.credited += c.amount;
    }

    fn transfer(&mut self, r: &Record) -> Result<(), ReplayError> {
        let v = r.value as i128;
        let sender = self.balances.entry(r.sender).or_insert(0);
        *sender -= v;
        if *sender < 0 {
            let diag = NegativeBalance {
                account: r.sender,
                block_id: r.block_id,
                balance: *sender,
            };
            match self.mode {
                ReplayMode::Strict => return Err(ReplayError::NegativeBalance(diag)),
                ReplayMode::Lenient => self.diagnostics.push(diag),
            }
        }
        *self.balances.entry(r.receiver).or_insert(0) += v;
        Ok(())
    }
}

/// Pearson correlation of a per-account metric between consecutive
/// snapshots, over the accounts present in both.
pub fn rich_stay_rich(snapshots: &[BTreeMap<u32, f64>]) -> Vec<Result<f64, InequalityError>> {
    snapshots
        .windows(2)
        .map(|pair| {
            let (x, y): (Vec<f64>, Vec<f64>) = pair[0]
                .iter()
                .filter_map(|(a, &v)| pair[1].get(a).map(|&w| (v, w)))
                .unzip();
            correlate_common(&x, &y)
        })
        .collect()
}

fn correlate_common(x: &[f64], y: &[f64]) -> Result<f64, InequalityError> {
    if x.len() < 2 {
        return Err(InequalityError::EmptyIntersection);
    }
    Ok(pearson(x, y)?)
}

/// Correlation between node degree (in + out) and balance over accounts
/// present in both the graph and the balance map.
pub fn degree_balance_correlation(
    g: &TxGraph,
    balances: &BTreeMap<u32, Wei>,
) -> Result<f64, InequalityError> {
    let degrees = node_metric(g, GiniMetric::Degree);
    let (x, y): (Vec<f64>, Vec<f64>) = degrees
        .iter()
        .filter_map(|(a, &d)| balances.get(a).map(|&b| (d, b as f64)))
        .unzip();
    correlate_common(&x, &y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::TxKind;
    use num_traits::ToPrimitive;

    #[test]
    fn gini_examples() {
        assert_eq!(gini(&[3.0; 7]).unwrap(), 0.0);
        assert_eq!(gini(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 0.25);
        assert!((gini(&[0.0, 0.0, 0.0, 0.0, 9.0]).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(gini(&[]), Err(InequalityError::EmptyInput));
        assert_eq!(gini(&[0.0, 0.0]), Err(InequalityError::ZeroSum));
        assert_eq!(gini(&[1.0, -1.0]), Err(InequalityError::NegativeValue(1)));
    }

    #[test]
    fn exact_gini() {
        assert_eq!(
            gini_exact(&[1, 2, 3, 4]).unwrap(),
            BigRational::new(1.into(), 4.into())
        );
        let big = gini_exact(&[0, u128::MAX]).unwrap();
        assert_eq!(big.to_f64().unwrap(), 0.5);
    }

    fn rec(s: u32, r: u32, value: Wei, block: u64) -> Record {
        Record {
            value,
            block_id: block,
            timestamp: block as i64,
            sender: s,
            receiver: r,
            seq: 0,
            kind: TxKind::Transfer,
            internal: false,
        }
    }

    #[test]
    fn replay_conserves() {
        let credits = [Credit {
            block_id: 0,
            account: 0,
            amount: 10,
        }];
        let out = replay_balances(
            &[rec(0, 1, 5, 1)],
            &[Checkpoint::Block(1)],
            &credits,
            ReplayMode::Strict,
        )
        .unwrap();
        let sheet = &out.sheets[0];
        assert_eq!(sheet.balances[&0], 5);
        assert_eq!(sheet.balances[&1], 5);
        assert_eq!(sheet.total(), 10);
        assert_eq!(out.credited, 10);
    }

    #[test]
    fn replay_strict_negative() {
        let err = replay_balances(&[rec(0, 1, 5, 1)], &[], &[], ReplayMode::Strict).unwrap_err();
        assert!(matches!(
            err,
            ReplayError::NegativeBalance(NegativeBalance { account: 0, .. })
        ));
        let out = replay_balances(
            &[rec(0, 1, 5, 1)],
            &[Checkpoint::Block(5)],
            &[],
            ReplayMode::Lenient,
        )
        .unwrap();
        assert_eq!(out.diagnostics.len(), 1);
        assert_eq!(out.sheets[0].balances[&0], -5);
    }

    #[test]
    fn replay_ordering_checks() {
        assert_eq!(
            replay_balances(&[rec(0, 1, 0, 2), rec(0, 1, 0, 1)], &[], &[], ReplayMode::Lenient),
            Err(ReplayError::UnsortedInput(1))
        );
        assert_eq!(
            replay_balances(
                &[],
                &[Checkpoint::Block(3), Checkpoint::Block(3)],
                &[],
                ReplayMode::Lenient
            ),
            Err(ReplayError::UnsortedCheckpoints)
        );
    }

    #[test]
    fn dead_accounts() {
        let credits = [Credit {
            block_id: 0,
            account: 0,
            amount: 5,
        }];
        // 0 empties itself at block 1 and never trades again; 1 empties at 2
        // but receives again at 4
        let recs = [rec(0, 1, 5, 1), rec(1, 2, 5, 2), rec(2, 1, 1, 4)];
        let out = replay_balances(
            &recs,
            &[Checkpoint::Block(1), Checkpoint::Block(3), Checkpoint::Block(9)],
            &credits,
            ReplayMode::Strict,
        )
        .unwrap();
        assert_eq!(out.sheets[0].dead, BTreeSet::from([0]));
        assert_eq!(out.sheets[1].dead, BTreeSet::from([0]));
        assert_eq!(out.sheets[2].dead, BTreeSet::from([0]));
        assert_eq!(out.sheets[2].balances[&1], 1);
    }

    #[test]
    fn time_checkpoints() {
        let credits = [Credit {
            block_id: 0,
            account: 0,
            amount: 9,
        }];
        let out = replay_balances(
            &[rec(0, 1, 2, 1), rec(0, 1, 3, 5)],
            &[Checkpoint::Time(5), Checkpoint::Time(100)],
            &credits,
            ReplayMode::Strict,
        )
        .unwrap();
        assert_eq!(out.sheets[0].balances[&1], 2);
        assert_eq!(out.sheets[1].balances[&1], 5);
    }

    #[test]
    fn persistence_pairs() {
        let a: BTreeMap<u32, f64> = (0..10).map(|i| (i, i as f64)).collect();
        let r = rich_stay_rich(&[a.clone(), a.clone()]);
        assert!((r[0].clone().unwrap() - 1.0).abs() < 1e-15);
        let disjoint: BTreeMap<u32, f64> = (100..110).map(|i| (i, i as f64)).collect();
        assert_eq!(
            rich_stay_rich(&[a, disjoint])[0],
            Err(InequalityError::EmptyIntersection)
        );
    }

    #[test]
    fn metric_names_parse() {
        for m in GiniMetric::GRAPH.into_iter().chain([GiniMetric::Balance]) {
            assert_eq!(m.as_str().parse::<GiniMetric>().unwrap(), m);
        }
    }
}
