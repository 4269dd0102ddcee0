//! Time windows and the three aggregate transaction graphs.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{in_range, Record};
use crate::ingest::AccountRegistry;
use crate::types::{AccountKind, TimeWindow, Timestamp, TxKind, Wei, WindowScheme};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("empty time range [{start}, {end})")]
    EmptyRange { start: Timestamp, end: Timestamp },
    #[error("window durations must be positive")]
    NonPositiveDuration,
    #[error("account #{0} has not been classified")]
    UnclassifiedAccount(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    /// EOA to EOA transfers.
    Uug,
    /// Contract to contract creates, calls and transfers.
    Ccg,
    /// Any interaction between an EOA and a contract.
    Ucg,
}

impl GraphKind {
    pub const ALL: [GraphKind; 3] = [GraphKind::Uug, GraphKind::Ccg, GraphKind::Ucg];

    pub fn as_str(self) -> &'static str {
        match self {
            GraphKind::Uug => "uug",
            GraphKind::Ccg => "ccg",
            GraphKind::Ucg => "ucg",
        }
    }

    /// Graph a record belongs to given its endpoint kinds, if any.
    pub fn of(kind: TxKind, sender: AccountKind, receiver: AccountKind) -> Option<GraphKind> {
        use AccountKind::*;
        match (sender, receiver) {
            (Eoa, Eoa) if kind == TxKind::Transfer => Some(GraphKind::Uug),
            (Contract, Contract) if kind != TxKind::Suicide => Some(GraphKind::Ccg),
            (Eoa, Contract) | (Contract, Eoa) => Some(GraphKind::Ucg),
            _ => None,
        }
    }
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown graph kind {0:?}")]
pub struct UnknownGraphKind(pub String);

impl FromStr for GraphKind {
    type Err = UnknownGraphKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uug" => Ok(GraphKind::Uug),
            "ccg" => Ok(GraphKind::Ccg),
            "ucg" => Ok(GraphKind::Ucg),
            _ => Err(UnknownGraphKind(s.to_string())),
        }
    }
}

/// Windows `[t0 + k*stride, t0 + k*stride + width)` that fit inside `[t0, t1]`.
/// A range shorter than `width` yields the single window starting at `t0`.
pub fn make_sliding_windows(
    t0: Timestamp,
    t1: Timestamp,
    width: i64,
    stride: i64,
) -> Result<Vec<TimeWindow>, GraphError> {
    if width <= 0 || stride <= 0 {
        return Err(GraphError::NonPositiveDuration);
    }
    if t0 >= t1 {
        return Err(GraphError::EmptyRange { start: t0, end: t1 });
    }
    let mut out = Vec::new();
    let mut start = t0;
    loop {
        if start + width > t1 && !out.is_empty() {
            break;
        }
        out.push(TimeWindow {
            index: out.len(),
            start,
            end: start + width,
            scheme: WindowScheme::Sliding,
        });
        start += stride;
    }
    Ok(out)
}

/// Windows `[t0, t0 + initial + k*step)` whose end stays within `t1`.
/// An initial span longer than the range is clipped to `t1`.
pub fn make_incremental_windows(
    t0: Timestamp,
    t1: Timestamp,
    initial: i64,
    step: i64,
) -> Result<Vec<TimeWindow>, GraphError> {
    if initial <= 0 || step <= 0 {
        return Err(GraphError::NonPositiveDuration);
    }
    if t0 >= t1 {
        return Err(GraphError::EmptyRange { start: t0, end: t1 });
    }
    let mut out = vec![TimeWindow {
        index: 0,
        start: t0,
        end: (t0 + initial).min(t1),
        scheme: WindowScheme::Incremental,
    }];
    let mut end = t0 + initial + step;
    while end <= t1 {
        out.push(TimeWindow {
            index: out.len(),
            start: t0,
            end,
            scheme: WindowScheme::Incremental,
        });
        end += step;
    }
    Ok(out)
}

/// Smallest range end so that windows produced from `t0` cover `last`.
pub fn covering_end(t0: Timestamp, last: Timestamp, first_span: i64, step: i64) -> Timestamp {
    let need = last + 1 - t0 - first_span;
    if need <= 0 {
        t0 + first_span
    } else {
        t0 + first_span + (need + step - 1) / step * step
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EdgeAggregate {
    /// Local node index of the sender.
    pub src: u32,
    /// Local node index of the receiver.
    pub dst: u32,
    pub tx_count: u64,
    pub total_value: Wei,
    pub first_ts: Timestamp,
    pub last_ts: Timestamp,
}

/// Directed weighted aggregate graph over one window.
///
/// Nodes are local indices `0..node_count()` mapped to registry indices via
/// [`TxGraph::account`]. Edges are sorted by `(src, dst)`, so the out-edges of
/// a node are a contiguous run.
#[derive(Debug, Clone)]
pub struct TxGraph {
    kind: GraphKind,
    window: TimeWindow,
    accounts: Vec<u32>,
    edges: Vec<EdgeAggregate>,
    out_offsets: Vec<usize>,
    in_offsets: Vec<usize>,
    // (src, edge index) grouped by dst
    in_edges: Vec<(u32, u32)>,
}

impl TxGraph {
    /// Builds a graph from `(sender, receiver, value, timestamp)` tuples whose
    /// endpoints are registry indices. No kind or window filtering is applied.
    pub fn from_interactions(
        kind: GraphKind,
        window: TimeWindow,
        interactions: impl IntoIterator<Item = (u32, u32, Wei, Timestamp)>,
    ) -> TxGraph {
        let mut agg: HashMap<(u32, u32), EdgeAggregate> = HashMap::new();
        for (s, r, value, ts) in interactions {
            agg.entry((s, r))
                .and_modify(|e| {
                    e.tx_count += 1;
                    e.total_value += value;
                    e.first_ts = e.first_ts.min(ts);
                    e.last_ts = e.last_ts.max(ts);
                })
                .or_insert(EdgeAggregate {
                    src: s,
                    dst: r,
                    tx_count: 1,
                    total_value: value,
                    first_ts: ts,
                    last_ts: ts,
                });
        }
        let mut accounts: Vec<u32> = agg.keys().flat_map(|&(s, r)| [s, r]).collect();
        accounts.sort_unstable();
        accounts.dedup();
        let local = |a: u32| accounts.binary_search(&a).expect("endpoint interned") as u32;
        let mut edges: Vec<EdgeAggregate> = agg
            .into_values()
            .map(|mut e| {
                e.src = local(e.src);
                e.dst = local(e.dst);
                e
            })
            .collect();
        edges.sort_unstable_by_key(|e| (e.src, e.dst));

        let n = accounts.len();
        let mut out_offsets = vec![0usize; n + 1];
        let mut in_offsets = vec![0usize; n + 1];
        for e in &edges {
            out_offsets[e.src as usize + 1] += 1;
            in_offsets[e.dst as usize + 1] += 1;
        }
        for i in 0..n {
            out_offsets[i + 1] += out_offsets[i];
            in_offsets[i + 1] += in_offsets[i];
        }
        let mut fill = in_offsets.clone();
        let mut in_edges = vec![(0u32, 0u32); edges.len()];
        for (i, e) in edges.iter().enumerate() {
            let slot = &mut fill[e.dst as usize];
            in_edges[*slot] = (e.src, i as u32);
            *slot += 1;
        }
        TxGraph {
            kind,
            window,
            accounts,
            edges,
            out_offsets,
            in_offsets,
            in_edges,
        }
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn window(&self) -> &TimeWindow {
        &self.window
    }

    pub fn node_count(&self) -> usize {
        self.accounts.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn tx_count(&self) -> u64 {
        self.edges.iter().map(|e| e.tx_count).sum()
    }

    pub fn total_value(&self) -> Wei {
        self.edges.iter().map(|e| e.total_value).sum()
    }

    /// Registry index of a local node.
    #[inline]
    pub fn account(&self, node: u32) -> u32 {
        self.accounts[node as usize]
    }

    /// Registry indices of all nodes, ascending.
    pub fn accounts(&self) -> &[u32] {
        &self.accounts
    }

    pub fn local_index(&self, account: u32) -> Option<u32> {
        self.accounts.binary_search(&account).ok().map(|i| i as u32)
    }

    pub fn edges(&self) -> &[EdgeAggregate] {
        &self.edges
    }

    pub fn out_edges(&self, node: u32) -> &[EdgeAggregate] {
        let n = node as usize;
        &self.edges[self.out_offsets[n]..self.out_offsets[n + 1]]
    }

    /// In-edges of `node` as `(src, edge)` pairs, ordered by `src`.
    pub fn in_edges(&self, node: u32) -> impl Iterator<Item = (u32, &EdgeAggregate)> {
        let n = node as usize;
        self.in_edges[self.in_offsets[n]..self.in_offsets[n + 1]]
            .iter()
            .map(move |&(s, e)| (s, &self.edges[e as usize]))
    }

    #[inline]
    pub fn out_degree(&self, node: u32) -> usize {
        let n = node as usize;
        self.out_offsets[n + 1] - self.out_offsets[n]
    }

    #[inline]
    pub fn in_degree(&self, node: u32) -> usize {
        let n = node as usize;
        self.in_offsets[n + 1] - self.in_offsets[n]
    }

    pub fn has_edge(&self, src: u32, dst: u32) -> bool {
        self.out_edges(src).binary_search_by_key(&dst, |e| e.dst).is_ok()
    }

    /// Transactions sent and received by `node`: `(out, in)`.
    pub fn node_tx_counts(&self, node: u32) -> (u64, u64) {
        let out = self.out_edges(node).iter().map(|e| e.tx_count).sum();
        let inc = self.in_edges(node).map(|(_, e)| e.tx_count).sum();
        (out, inc)
    }

    /// Undirected projection without self-loops: for each node the sorted
    /// distinct neighbours and a dyad code (1 = out only, 2 = in only,
    /// 3 = mutual).
    pub fn undirected(&self) -> UndirectedView {
        let n = self.node_count();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::with_capacity(self.edges.len() * 2);
        offsets.push(0);
        for v in 0..n as u32 {
            let mut outs = self
                .out_edges(v)
                .iter()
                .map(|e| e.dst)
                .filter(|&u| u != v)
                .peekable();
            let mut ins = self.in_edges(v).map(|(s, _)| s).filter(|&u| u != v).peekable();
            loop {
                let next = match (outs.peek(), ins.peek()) {
                    (Some(&a), Some(&b)) if a == b => {
                        outs.next();
                        ins.next();
                        (a, 3u8)
                    }
                    (Some(&a), Some(&b)) if a < b => {
                        outs.next();
                        (a, 1)
                    }
                    (Some(_), Some(&b)) => {
                        ins.next();
                        (b, 2)
                    }
                    (Some(&a), None) => {
                        outs.next();
                        (a, 1)
                    }
                    (None, Some(&b)) => {
                        ins.next();
                        (b, 2)
                    }
                    (None, None) => break,
                };
                neighbors.push(next);
            }
            offsets.push(neighbors.len());
        }
        UndirectedView { offsets, neighbors }
    }

    /// Edge list CSV `src,dst,tx_count,total_value_wei` in edge order.
    pub fn write_edge_list<W: Write>(&self, out: W, registry: &AccountRegistry) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["src", "dst", "tx_count", "total_value_wei"])?;
        for e in &self.edges {
            w.write_record([
                registry.id(self.account(e.src)).as_str(),
                registry.id(self.account(e.dst)).as_str(),
                &e.tx_count.to_string(),
                &e.total_value.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Snapshot file name, e.g. `uug_sliding_3.csv`.
    pub fn snapshot_name(&self) -> String {
        format!(
            "{}_{}_{}.csv",
            self.kind.as_str(),
            self.window.scheme.as_str(),
            self.window.index
        )
    }
}

/// CSR adjacency of an undirected projection with dyad codes.
#[derive(Debug, Clone)]
pub struct UndirectedView {
    offsets: Vec<usize>,
    neighbors: Vec<(u32, u8)>,
}

impl UndirectedView {
    /// Builds from unordered pairs; self-pairs are dropped, duplicates merged.
    /// Dyad codes are all set to 3.
    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (u32, u32)>) -> UndirectedView {
        let mut lists: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (a, b) in pairs {
            if a != b {
                lists[a as usize].push(b);
                lists[b as usize].push(a);
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for mut l in lists {
            l.sort_unstable();
            l.dedup();
            neighbors.extend(l.into_iter().map(|u| (u, 3u8)));
            offsets.push(neighbors.len());
        }
        UndirectedView { offsets, neighbors }
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    #[inline]
    pub fn neighbors(&self, v: u32) -> &[(u32, u8)] {
        let v = v as usize;
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    #[inline]
    pub fn degree(&self, v: u32) -> usize {
        let v = v as usize;
        self.offsets[v + 1] - self.offsets[v]
    }
}

/// Record filter applied while building a graph.
#[derive(Debug, Clone, Copy, Default)]
pub struct BuildOptions {
    /// Records with value below this are skipped; 0 keeps zero-value transfers.
    pub min_value: Wei,
}

/// Aggregates the records of `kind` inside `window`.
///
/// `records` must be sorted by timestamp.
pub fn build_graph(
    records: &[Record],
    window: TimeWindow,
    kind: GraphKind,
    registry: &AccountRegistry,
    options: BuildOptions,
) -> Result<TxGraph, GraphError> {
    let slice = in_range(records, window.start, window.end);
    let mut selected = Vec::new();
    for r in slice {
        if r.value < options.min_value {
            continue;
        }
        let sk = registry.kind(r.sender);
        let rk = registry.kind(r.receiver);
        if sk == AccountKind::Unknown {
            return Err(GraphError::UnclassifiedAccount(r.sender));
        }
        if rk == AccountKind::Unknown {
            return Err(GraphError::UnclassifiedAccount(r.receiver));
        }
        if GraphKind::of(r.kind, sk, rk) == Some(kind) {
            selected.push((r.sender, r.receiver, r.value, r.timestamp));
        }
    }
    Ok(TxGraph::from_interactions(kind, window, selected))
}

/// Per window, nodes whose global first transaction falls inside the window.
pub fn new_node_counts(graphs: &[TxGraph], first_seen: &[Option<Timestamp>]) -> Vec<usize> {
    graphs
        .iter()
        .map(|g| {
            g.accounts()
                .iter()
                .filter(|&&a| first_seen[a as usize].is_some_and(|t| g.window().contains(t)))
                .count()
        })
        .collect()
}
