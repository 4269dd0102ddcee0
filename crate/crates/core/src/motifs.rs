//! Directed three-node motif census, triplet closure times and the global
//! clustering coefficient.
//!
//! The census never enumerates open triads one by one. Closed triads are the
//! triangles of the undirected projection, found with degree-ordered
//! enumeration. Open triads are counted per centre node from its neighbour
//! dyad types, then corrected by subtracting neighbour pairs that turned out
//! to be adjacent (i.e. belong to a triangle).

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::{TxGraph, UndirectedView};
use crate::types::{TimeWindow, Timestamp};

/// Connected directed triad classes in the usual triad-census order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MotifClass {
    T021D,
    T021U,
    T021C,
    T111D,
    T111U,
    T030T,
    T030C,
    T201,
    T120D,
    T120U,
    T120C,
    T210,
    T300,
}

impl MotifClass {
    pub const ALL: [MotifClass; 13] = [
        MotifClass::T021D,
        MotifClass::T021U,
        MotifClass::T021C,
        MotifClass::T111D,
        MotifClass::T111U,
        MotifClass::T030T,
        MotifClass::T030C,
        MotifClass::T201,
        MotifClass::T120D,
        MotifClass::T120U,
        MotifClass::T120C,
        MotifClass::T210,
        MotifClass::T300,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            MotifClass::T021D => "021D",
            MotifClass::T021U => "021U",
            MotifClass::T021C => "021C",
            MotifClass::T111D => "111D",
            MotifClass::T111U => "111U",
            MotifClass::T030T => "030T",
            MotifClass::T030C => "030C",
            MotifClass::T201 => "201",
            MotifClass::T120D => "120D",
            MotifClass::T120U => "120U",
            MotifClass::T120C => "120C",
            MotifClass::T210 => "210",
            MotifClass::T300 => "300",
        }
    }

    /// All three node pairs connected.
    pub fn is_closed(self) -> bool {
        !matches!(
            self,
            MotifClass::T021D
                | MotifClass::T021U
                | MotifClass::T021C
                | MotifClass::T111D
                | MotifClass::T111U
                | MotifClass::T201
        )
    }
}

impl fmt::Display for MotifClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

// Triad type (0 = 003 ... 15 = 300) by 6-bit code over nodes (v, u, w):
// bit0 v->u, bit1 u->v, bit2 v->w, bit3 w->v, bit4 u->w, bit5 w->u.
const TRIAD_TYPE: [u8; 64] = [
    0, 1, 1, 2, 1, 3, 5, 7, 1, 5, 4, 6, 2, 7, 6, 10, //
    1, 5, 3, 7, 4, 8, 8, 12, 5, 9, 8, 13, 6, 13, 11, 14, //
    1, 4, 5, 6, 5, 8, 9, 13, 3, 8, 8, 11, 7, 12, 13, 14, //
    2, 6, 7, 10, 6, 11, 13, 14, 7, 13, 12, 14, 10, 14, 14, 15,
];

/// Class of the triad with the given 6-bit code, `None` if disconnected.
pub fn classify_code(code: u8) -> Option<MotifClass> {
    let t = TRIAD_TYPE[code as usize & 63];
    (t >= 3).then(|| MotifClass::ALL[t as usize - 3])
}

#[inline]
fn reverse(dyad: u8) -> u8 {
    ((dyad & 1) << 1) | ((dyad & 2) >> 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MotifCounts {
    pub counts: [u64; 13],
    pub closed_total: u64,
    pub open_total: u64,
}

impl MotifCounts {
    pub fn get(&self, class: MotifClass) -> u64 {
        self.counts[class.id()]
    }

    pub fn from_counts(counts: [u64; 13]) -> Self {
        let mut closed_total = 0;
        let mut open_total = 0;
        for c in MotifClass::ALL {
            if c.is_closed() {
                closed_total += counts[c.id()];
            } else {
                open_total += counts[c.id()];
            }
        }
        MotifCounts {
            counts,
            closed_total,
            open_total,
        }
    }

    pub fn merge(&self, other: &MotifCounts) -> MotifCounts {
        let mut counts = self.counts;
        for (a, b) in counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        MotifCounts::from_counts(counts)
    }
}

/// A triangle `(v, u, w)` with dyad codes `v-u`, `v-w` seen from `v` and
/// `u-w` seen from `u` (1 = forward only, 2 = backward only, 3 = mutual).
#[derive(Debug, Clone, Copy)]
pub struct Triangle {
    pub nodes: [u32; 3],
    pub vu: u8,
    pub vw: u8,
    pub uw: u8,
}

impl Triangle {
    pub fn code(&self) -> u8 {
        self.vu | (self.vw << 2) | (self.uw << 4)
    }
}

/// Visits every triangle of `view` exactly once, in parallel, folding into
/// per-thread accumulators merged with `merge`.
pub fn fold_triangles<A, I, V, M>(view: &UndirectedView, init: I, visit: V, merge: M) -> A
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    V: Fn(&mut A, Triangle) + Sync + Send,
    M: Fn(A, A) -> A + Sync + Send,
{
    let n = view.node_count();
    // orient each edge from lower to higher (degree, id) rank
    let rank = |v: u32| (view.degree(v), v);
    let forward: Vec<Vec<(u32, u8)>> = (0..n as u32)
        .into_par_iter()
        .map(|v| {
            view.neighbors(v)
                .iter()
                .copied()
                .filter(|&(u, _)| rank(u) > rank(v))
                .collect()
        })
        .collect();

    (0..n as u32)
        .into_par_iter()
        .with_min_len(64)
        .fold(
            || (init(), vec![0u8; n]),
            |(mut acc, mut mark), v| {
                let fv = &forward[v as usize];
                if fv.len() >= 2 {
                    for &(u, s) in fv {
                        mark[u as usize] = s;
                    }
                    for &(u, vu) in fv {
                        for &(w, uw) in &forward[u as usize] {
                            let vw = mark[w as usize];
                            if vw != 0 {
                                visit(
                                    &mut acc,
                                    Triangle {
                                        nodes: [v, u, w],
                                        vu,
                                        vw,
                                        uw,
                                    },
                                );
                            }
                        }
                    }
                    for &(u, _) in fv {
                        mark[u as usize] = 0;
                    }
                }
                (acc, mark)
            },
        )
        .map(|(acc, _)| acc)
        .reduce(&init, &merge)
}

fn census_view(view: &UndirectedView) -> MotifCounts {
    let n = view.node_count();
    // pairs[a][b] for dyad codes a <= b, counted over all centre nodes
    let mut pairs = (0..n as u32)
        .into_par_iter()
        .fold(
            || [[0i128; 4]; 4],
            |mut acc, v| {
                let mut c = [0i128; 4];
                for &(_, s) in view.neighbors(v) {
                    c[s as usize] += 1;
                }
                for a in 1..4 {
                    acc[a][a] += c[a] * (c[a] - 1) / 2;
                    for b in a + 1..4 {
                        acc[a][b] += c[a] * c[b];
                    }
                }
                acc
            },
        )
        .reduce(|| [[0i128; 4]; 4], add_pairs);

    let (closed, adjacent) = fold_triangles(
        view,
        || ([0u64; 13], [[0i128; 4]; 4]),
        |(closed, adj), t| {
            let class = classify_code(t.code()).expect("triangle is connected");
            closed[class.id()] += 1;
            for (a, b) in [
                (t.vu, t.vw),
                (reverse(t.vu), t.uw),
                (reverse(t.vw), reverse(t.uw)),
            ] {
                adj[a.min(b) as usize][a.max(b) as usize] += 1;
            }
        },
        |(mut c1, a1), (c2, a2)| {
            for (x, y) in c1.iter_mut().zip(c2) {
                *x += y;
            }
            (c1, add_pairs(a1, a2))
        },
    );

    let mut counts = closed;
    for a in 1..4u8 {
        for b in a..4u8 {
            let open = pairs[a as usize][b as usize] - adjacent[a as usize][b as usize];
            pairs[a as usize][b as usize] = open;
            debug_assert!(open >= 0);
            if open > 0 {
                let class = classify_code(a | (b << 2)).expect("wedge is connected");
                counts[class.id()] += open as u64;
            }
        }
    }
    MotifCounts::from_counts(counts)
}

fn add_pairs(mut a: [[i128; 4]; 4], b: [[i128; 4]; 4]) -> [[i128; 4]; 4] {
    for i in 0..4 {
        for j in 0..4 {
            a[i][j] += b[i][j];
        }
    }
    a
}

/// Census of connected three-node induced subgraphs. Self-loops and edge
/// multiplicities are ignored.
pub fn motif_census(g: &TxGraph) -> MotifCounts {
    census_view(&g.undirected())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("no connected triplets")]
pub struct NoTriplets;

pub fn closed_ratio(m: &MotifCounts) -> Result<f64, NoTriplets> {
    let total = m.closed_total + m.open_total;
    if total == 0 {
        return Err(NoTriplets);
    }
    Ok(m.closed_total as f64 / total as f64)
}

/// Triangle count divided by connected triples, times three, on the
/// undirected projection. Zero when there is no wedge.
pub fn global_clustering(g: &TxGraph) -> f64 {
    let view = g.undirected();
    let wedges: u128 = (0..view.node_count() as u32)
        .map(|v| {
            let d = view.degree(v) as u128;
            d * d.saturating_sub(1) / 2
        })
        .sum();
    if wedges == 0 {
        return 0.0;
    }
    let triangles = fold_triangles(&view, || 0u128, |n, _| *n += 1, |a, b| a + b);
    (3 * triangles) as f64 / wedges as f64
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClosureStats {
    /// Seconds from a triple first having two connected pairs to its third
    /// pair connecting; ascending.
    pub closure_durations: Vec<i64>,
    pub mean: Option<f64>,
    pub count: usize,
}

impl ClosureStats {
    fn from_durations(mut closure_durations: Vec<i64>) -> Self {
        closure_durations.sort_unstable();
        let count = closure_durations.len();
        let mean = (count > 0)
            .then(|| closure_durations.iter().map(|&d| d as i128).sum::<i128>() as f64 / count as f64);
        ClosureStats {
            closure_durations,
            mean,
            count,
        }
    }
}

fn closure_from_pair_times(n: usize, pair_time: &HashMap<(u32, u32), Timestamp>) -> ClosureStats {
    let view = UndirectedView::from_pairs(n, pair_time.keys().copied());
    let key = |a: u32, b: u32| (a.min(b), a.max(b));
    let durations = fold_triangles(
        &view,
        Vec::new,
        |acc: &mut Vec<i64>, t| {
            let [v, u, w] = t.nodes;
            let mut times = [
                pair_time[&key(v, u)],
                pair_time[&key(v, w)],
                pair_time[&key(u, w)],
            ];
            times.sort_unstable();
            acc.push(times[2] - times[1]);
        },
        |mut a, b| {
            a.extend(b);
            a
        },
    );
    ClosureStats::from_durations(durations)
}

/// Closure durations of triples closed inside `window`, using the first
/// contact time of each unordered pair. Interactions outside the window and
/// self-interactions are ignored; order of the input does not matter.
pub fn closure_times(
    interactions: impl IntoIterator<Item = (u32, u32, Timestamp)>,
    window: &TimeWindow,
) -> ClosureStats {
    let mut local: HashMap<u32, u32> = HashMap::new();
    let mut pair_time: HashMap<(u32, u32), Timestamp> = HashMap::new();
    for (s, r, ts) in interactions {
        if s == r || !window.contains(ts) {
            continue;
        }
        let next = local.len() as u32;
        let a = *local.entry(s).or_insert(next);
        let next = local.len() as u32;
        let b = *local.entry(r).or_insert(next);
        pair_time
            .entry((a.min(b), a.max(b)))
            .and_modify(|t| *t = (*t).min(ts))
            .or_insert(ts);
    }
    closure_from_pair_times(local.len(), &pair_time)
}

/// Same measurement from a built graph, using edge first-transaction times.
pub fn closure_times_from_graph(g: &TxGraph) -> ClosureStats {
    let mut pair_time: HashMap<(u32, u32), Timestamp> = HashMap::new();
    for e in g.edges() {
        if e.src == e.dst {
            continue;
        }
        pair_time
            .entry((e.src.min(e.dst), e.src.max(e.dst)))
            .and_modify(|t| *t = (*t).min(e.first_ts))
            .or_insert(e.first_ts);
    }
    closure_from_pair_times(g.node_count(), &pair_time)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphKind;
    use crate::types::WindowScheme;

    fn window() -> TimeWindow {
        TimeWindow {
            index: 0,
            start: 0,
            end: 1_000,
            scheme: WindowScheme::Sliding,
        }
    }

    fn graph(edges: &[(u32, u32)]) -> TxGraph {
        TxGraph::from_interactions(GraphKind::Uug, window(), edges.iter().map(|&(s, r)| (s, r, 1, 0)))
    }

    #[test]
    fn cycle_is_closed_cyclic() {
        let m = motif_census(&graph(&[(0, 1), (1, 2), (2, 0)]));
        assert_eq!(m.get(MotifClass::T030C), 1);
        assert_eq!((m.closed_total, m.open_total), (1, 0));
        assert_eq!(closed_ratio(&m), Ok(1.0));
    }

    #[test]
    fn path_is_open() {
        let m = motif_census(&graph(&[(0, 1), (1, 2)]));
        assert_eq!(m.get(MotifClass::T021C), 1);
        assert_eq!((m.closed_total, m.open_total), (0, 1));
        assert_eq!(closed_ratio(&m), Ok(0.0));
    }

    #[test]
    fn triangle_plus_three_paths() {
        let m = motif_census(&graph(&[
            (0, 1),
            (1, 2),
            (0, 2),
            (10, 11),
            (11, 12),
            (20, 21),
            (21, 22),
            (30, 31),
            (31, 32),
        ]));
        assert_eq!(m.get(MotifClass::T030T), 1);
        assert_eq!(closed_ratio(&m), Ok(0.25));
    }

    #[test]
    fn empty_graph_has_no_triplets() {
        assert_eq!(closed_ratio(&motif_census(&graph(&[]))), Err(NoTriplets));
    }

    #[test]
    fn self_loops_and_duplicates_ignored() {
        let m = motif_census(&graph(&[(0, 0), (0, 1), (0, 1), (1, 2)]));
        assert_eq!(m.open_total, 1);
    }

    #[test]
    fn centre_combinations() {
        // out-star, in-star, mutual-in, mutual-out, mutual-mutual
        assert_eq!(motif_census(&graph(&[(0, 1), (0, 2)])).get(MotifClass::T021D), 1);
        assert_eq!(motif_census(&graph(&[(1, 0), (2, 0)])).get(MotifClass::T021U), 1);
        assert_eq!(
            motif_census(&graph(&[(0, 1), (1, 0), (2, 1)])).get(MotifClass::T111D),
            1
        );
        assert_eq!(
            motif_census(&graph(&[(0, 1), (1, 0), (1, 2)])).get(MotifClass::T111U),
            1
        );
        assert_eq!(
            motif_census(&graph(&[(0, 1), (1, 0), (1, 2), (2, 1)])).get(MotifClass::T201),
            1
        );
        let all = [(0, 1), (1, 0), (1, 2), (2, 1), (0, 2), (2, 0)];
        assert_eq!(motif_census(&graph(&all)).get(MotifClass::T300), 1);
    }

    #[test]
    fn clustering_cases() {
        assert_eq!(global_clustering(&graph(&[(0, 1), (1, 2), (2, 0)])), 1.0);
        assert_eq!(global_clustering(&graph(&[(0, 1), (0, 2), (0, 3)])), 0.0);
        assert_eq!(global_clustering(&graph(&[(0, 1)])), 0.0);
    }

    #[test]
    fn closure_example() {
        let s = closure_times([(0, 1, 0), (1, 2, 10), (2, 0, 25)], &window());
        assert_eq!(s.closure_durations, vec![15]);
        assert_eq!(s.mean, Some(15.0));

        let never = closure_times([(0, 1, 0), (1, 2, 10)], &window());
        assert_eq!(never.count, 0);
        assert_eq!(never.mean, None);
    }

    #[test]
    fn closure_respects_window_and_reuses_first_contact() {
        let w = TimeWindow { end: 20, ..window() };
        let s = closure_times([(0, 1, 0), (1, 2, 10), (2, 0, 25)], &w);
        assert_eq!(s.count, 0);
        let s = closure_times(
            [(0, 1, 0), (1, 0, 1), (1, 2, 10), (1, 2, 3), (2, 0, 25)],
            &window(),
        );
        assert_eq!(s.closure_durations, vec![22]);
    }

    #[test]
    fn closure_routes_agree() {
        let inter = [
            (0u32, 1u32, 5i64),
            (1, 2, 7),
            (2, 0, 30),
            (2, 3, 8),
            (3, 1, 40),
            (0, 3, 41),
        ];
        let g = TxGraph::from_interactions(
            GraphKind::Uug,
            window(),
            inter.iter().map(|&(s, r, t)| (s, r, 1, t)),
        );
        assert_eq!(closure_times(inter, &window()), closure_times_from_graph(&g));
    }
}
