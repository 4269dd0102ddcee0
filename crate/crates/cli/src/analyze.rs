//! The `analyze` pipeline: load, window, compute metrics, write the bundle.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;
use txscope_core::burstiness::{busy_period_ratio, hourly_histogram, mb_by_class, timelines, ClassSample};
use txscope_core::contracts::{lifecycle_stats, top_contracts};
use txscope_core::dataset::{resolve_credits, Credit, Dataset, DatasetInputs};
use txscope_core::graph::{
    build_graph, covering_end, make_incremental_windows, make_sliding_windows, new_node_counts, BuildOptions,
    GraphKind, TxGraph,
};
use txscope_core::inequality::{
    degree_balance_correlation, gini, node_metric, replay_balances, rich_stay_rich, BalanceSheet, Checkpoint,
    GiniMetric, NegativeBalance, ReplayMode,
};
use txscope_core::ingest::{
    load_labels, load_price_series, parse_credits, parse_declared, IngestOptions, ParseMode,
};
use txscope_core::metrics::{
    degree_histogram, fit_degree_tail, fit_densification, size_stats, transaction_count_histogram,
    weight_stats, DegreeHistogram, Direction, FitResult, SizeStats, TxCountHistograms, WeightStats,
};
use txscope_core::motifs::{
    closed_ratio, closure_times_from_graph, global_clustering, motif_census, MotifClass, MotifCounts,
};
use txscope_core::types::{
    AccountKind, Label, PriceSeries, TimeWindow, Timestamp, WindowScheme, SECONDS_PER_DAY,
};

use crate::bundle::{sha256_file, sha256_hex, Bundle, Manifest};
use crate::config::{ConfigError, Metric, RunConfig};
use crate::correlate::price_correlation;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Data(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) | CliError::Io(_) => 2,
        }
    }
}

fn data(context: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{context}: {e}"))
}

pub const BUSY_PERIOD_P: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
const QUANTILES: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 0.9];

struct Loaded {
    ds: Dataset,
    credits: Vec<Credit>,
    prices: Option<PriceSeries>,
    digests: BTreeMap<String, String>,
}

fn load_inputs(cfg: &RunConfig, bundle: &mut Bundle) -> Result<Loaded, CliError> {
    let tx = cfg.tx.as_deref().expect("validated");
    let mut digests = BTreeMap::new();
    let inputs = [
        ("tx", Some(tx)),
        ("labels", cfg.labels.as_deref()),
        ("prices", cfg.prices.as_deref()),
        ("credits", cfg.credits.as_deref()),
        ("contracts", cfg.contracts.as_deref()),
    ];
    for (role, path) in inputs {
        if let Some(p) = path {
            digests.insert(role.to_string(), sha256_file(p)?);
        }
    }

    let credit_records = match &cfg.credits {
        Some(p) => parse_credits(File::open(p)?).map_err(|e| data("credits", e))?,
        None => Vec::new(),
    };
    let declared = match &cfg.contracts {
        Some(p) => parse_declared(File::open(p)?).map_err(|e| data("contracts", e))?,
        None => Vec::new(),
    };
    let labels = match &cfg.labels {
        Some(p) => Some(load_labels(p).map_err(|e| data("labels", e))?),
        None => None,
    };
    let prices = match &cfg.prices {
        Some(p) => Some(load_price_series(p).map_err(|e| data("prices", e))?),
        None => None,
    };

    let known: Vec<_> = credit_records.iter().map(|c| c.address.clone()).collect();
    let mut rejects = BufWriter::new(File::create(bundle.path(REJECTED))?);
    writeln!(rejects, "line,reason")?;
    let options = IngestOptions {
        mode: if cfg.strict {
            ParseMode::Strict
        } else {
            ParseMode::Lenient
        },
        time_range: None,
    };
    let mut ds = Dataset::load_with_rejects(
        tx,
        cfg.format,
        options,
        DatasetInputs {
            declared: &declared,
            known: &known,
        },
        Some(Box::new(rejects)),
    )
    .map_err(|e| data("transactions", e))?;
    bundle.register(REJECTED)?;
    if let Some(l) = &labels {
        ds.registry_mut().attach_labels(l);
    }
    let credits = resolve_credits(&credit_records, ds.registry()).map_err(|e| data("credits", e))?;
    Ok(Loaded {
        ds,
        credits,
        prices,
        digests,
    })
}

const REJECTED: &str = "rejected.csv";

fn scheme_windows(cfg: &RunConfig, t0: Timestamp, last: Timestamp) -> Result<Vec<Vec<TimeWindow>>, CliError> {
    let day = SECONDS_PER_DAY;
    let mut out = Vec::new();
    if cfg.scheme.sliding() {
        let (w, s) = (cfg.width_days as i64 * day, cfg.stride_days as i64 * day);
        let t1 = covering_end(t0, last, w, s);
        out.push(make_sliding_windows(t0, t1, w, s).map_err(|e| data("windows", e))?);
    }
    if cfg.scheme.incremental() {
        let (i, s) = (cfg.initial_days as i64 * day, cfg.step_days as i64 * day);
        let t1 = covering_end(t0, last, i, s);
        out.push(make_incremental_windows(t0, t1, i, s).map_err(|e| data("windows", e))?);
    }
    Ok(out)
}

struct MotifRow {
    counts: MotifCounts,
    closed_ratio: Option<f64>,
    mean_closure_days: Option<f64>,
    clustering: f64,
}

/// Everything kept from one window graph once the graph is dropped.
struct WindowResult {
    window: TimeWindow,
    size: SizeStats,
    new_nodes: usize,
    all_degrees: DegreeHistogram,
    degrees: Option<[DegreeHistogram; 3]>,
    weights: Option<WeightStats>,
    txcounts: Option<TxCountHistograms>,
    motifs: Option<MotifRow>,
    gini: Vec<Option<f64>>,
    node_metrics: Option<Vec<BTreeMap<u32, f64>>>,
    degree_balance: Option<Result<f64, String>>,
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    run: &'a BTreeSet<Metric>,
    ds: &'a Dataset,
    sheets: Option<(&'a [BalanceSheet], &'a BTreeMap<Timestamp, usize>)>,
}

fn analyze_window(ctx: &Ctx<'_>, window: TimeWindow, kind: GraphKind) -> Result<WindowResult, CliError> {
    let g: TxGraph = build_graph(
        ctx.ds.records(),
        window,
        kind,
        ctx.ds.registry(),
        BuildOptions {
            min_value: ctx.cfg.min_value,
        },
    )
    .map_err(|e| data("graph", e))?;
    let on = |m| ctx.run.contains(&m);
    let first_seen = ctx.ds.first_seen();
    let motifs = on(Metric::Motifs).then(|| {
        let counts = motif_census(&g);
        MotifRow {
            closed_ratio: closed_ratio(&counts).ok(),
            mean_closure_days: closure_times_from_graph(&g)
                .mean
                .map(|s| s / SECONDS_PER_DAY as f64),
            clustering: global_clustering(&g),
            counts,
        }
    });
    let gini_values = if on(Metric::Gini) {
        GiniMetric::GRAPH
            .iter()
            .map(|&m| gini(&node_metric(&g, m).into_values().collect::<Vec<_>>()).ok())
            .collect()
    } else {
        Vec::new()
    };
    let node_metrics =
        on(Metric::Ppmcc).then(|| GiniMetric::GRAPH.iter().map(|&m| node_metric(&g, m)).collect());
    let degree_balance = ctx.sheets.map(|(sheets, at)| {
        let sheet = &sheets[at[&window.end]];
        let balances = sheet.living_balances(ctx.ds.registry(), ctx.cfg.eoa_only);
        degree_balance_correlation(&g, &balances).map_err(|e| e.to_string())
    });
    Ok(WindowResult {
        window,
        size: size_stats(&g),
        new_nodes: new_node_counts(std::slice::from_ref(&g), first_seen)[0],
        all_degrees: degree_histogram(&g, Direction::All),
        degrees: on(Metric::Degrees).then(|| Direction::ALL.map(|d| degree_histogram(&g, d))),
        weights: on(Metric::Weights).then(|| weight_stats(&g, first_seen)),
        txcounts: on(Metric::TxCounts).then(|| transaction_count_histogram(&g)),
        motifs,
        gini: gini_values,
        node_metrics,
        degree_balance,
    })
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fit_json(r: Result<FitResult, impl std::fmt::Display>) -> Value {
    match r {
        Ok(f) => json!(f),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

/// Nearest-rank quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

#[derive(Default)]
struct Rows {
    sizes: Vec<Vec<String>>,
    degrees: Vec<Vec<String>>,
    weights: Vec<Vec<String>>,
    txcounts: Vec<Vec<String>>,
    degree_balance: Vec<Vec<String>>,
    prices: Vec<Vec<String>>,
}

/// Runs the full pipeline and writes the bundle. The returned manifest says
/// whether every requested metric is complete.
pub fn analyze(cfg: &RunConfig) -> Result<Manifest, CliError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| data("worker pool", e))?;
    pool.install(|| run(cfg))
}

fn run(cfg: &RunConfig) -> Result<Manifest, CliError> {
    let started = Instant::now();
    let (run, skipped) = cfg.metric_plan();
    let on = |m| run.contains(&m);
    let mut bundle = Bundle::create(cfg.out.as_deref().expect("validated"))?;
    let Loaded {
        ds,
        credits,
        prices,
        digests,
    } = load_inputs(cfg, &mut bundle)?;
    let (first, last) = ds
        .time_span()
        .ok_or_else(|| CliError::Data("no transactions accepted".into()))?;
    let t0 = cfg
        .start
        .unwrap_or(first.div_euclid(SECONDS_PER_DAY) * SECONDS_PER_DAY);
    if t0 > last {
        return Err(CliError::Data(format!(
            "window origin {t0} is after the last record ({last})"
        )));
    }
    let schemes = scheme_windows(cfg, t0, last)?;
    let mut partial: BTreeMap<String, String> = BTreeMap::new();
    let mut summary = serde_json::Map::new();

    // balances first: window tasks read the sheets
    let mut replay_state = None;
    if on(Metric::Balances) {
        let mut ends: Vec<Timestamp> = schemes.iter().flatten().map(|w| w.end).collect();
        ends.push(last + 1);
        ends.sort_unstable();
        ends.dedup();
        let checkpoints: Vec<Checkpoint> = ends.iter().map(|&t| Checkpoint::Time(t)).collect();
        let mode = if cfg.strict {
            ReplayMode::Strict
        } else {
            ReplayMode::Lenient
        };
        let outcome = replay_balances(&ds.block_ordered(), &checkpoints, &credits, mode)
            .map_err(|e| data("balance replay", e))?;
        write_balances(cfg, &ds, &outcome.sheets, &outcome.diagnostics, &mut bundle)?;
        if !outcome.diagnostics.is_empty() {
            partial.insert(
                Metric::Balances.to_string(),
                format!(
                    "{} negative balance events; see balance_diagnostics.csv",
                    outcome.diagnostics.len()
                ),
            );
        }
        let final_sheet = outcome.sheets.last().expect("final checkpoint");
        summary.insert(
            "balances".into(),
            json!({
                "checkpoints": outcome.sheets.len(),
                "credited_wei": outcome.credited.to_string(),
                "final_total_wei": final_sheet.total().to_string(),
                "negative_balance_events": outcome.diagnostics.len(),
            }),
        );
        let at: BTreeMap<Timestamp, usize> = ends.iter().enumerate().map(|(i, &t)| (t, i)).collect();
        replay_state = Some((outcome.sheets, at));
    }

    let ctx = Ctx {
        cfg,
        run: &run,
        ds: &ds,
        sheets: replay_state.as_ref().map(|(s, at)| (s.as_slice(), at)),
    };
    let mut rows = Rows::default();
    let mut fits = serde_json::Map::new();
    for windows in &schemes {
        let scheme = windows[0].scheme;
        for &kind in &cfg.kinds {
            let results: Vec<WindowResult> = windows
                .par_iter()
                .map(|w| analyze_window(&ctx, *w, kind))
                .collect::<Result<_, _>>()?;
            let suffix = format!("{}_{}", kind.as_str(), scheme.as_str());
            collect_rows(scheme, kind, &results, prices.as_ref(), &mut rows);
            if on(Metric::Motifs) {
                write_motifs(&mut bundle, &format!("motifs_{suffix}.csv"), &results)?;
            }
            if on(Metric::Gini) {
                let rows = results.iter().flat_map(|r| {
                    GiniMetric::GRAPH
                        .iter()
                        .zip(&r.gini)
                        .map(move |(m, g)| vec![m.to_string(), r.window.index.to_string(), opt(*g)])
                });
                bundle.write_csv(&format!("gini_{suffix}.csv"), &["metric", "window", "gini"], rows)?;
            }
            if on(Metric::Ppmcc) {
                let mut out = Vec::new();
                for (mi, m) in GiniMetric::GRAPH.iter().enumerate() {
                    let snaps: Vec<&BTreeMap<u32, f64>> = results
                        .iter()
                        .map(|r| &r.node_metrics.as_ref().expect("ppmcc on")[mi])
                        .collect();
                    for (k, pair) in snaps.windows(2).enumerate() {
                        let r = rich_stay_rich(&[pair[0].clone(), pair[1].clone()]).remove(0);
                        out.push(vec![m.to_string(), k.to_string(), opt(r.ok())]);
                    }
                }
                bundle.write_csv(&format!("ppmcc_{suffix}.csv"), &["metric", "k", "ppmcc"], out)?;
            }
            let points: Vec<(f64, f64)> = results
                .iter()
                .filter(|r| r.size.node_count > 0 && r.size.edge_count > 0)
                .map(|r| (r.size.node_count as f64, r.size.edge_count as f64))
                .collect();
            let last_window = results.last().expect("at least one window");
            let entry = fits
                .entry(kind.as_str().to_string())
                .or_insert_with(|| json!({}))
                .as_object_mut()
                .expect("object");
            entry.insert(
                scheme.as_str().into(),
                json!({
                    "densification": fit_json(fit_densification(&points)),
                    "degree_tail": fit_json(fit_degree_tail(&last_window.all_degrees)),
                    "degree_tail_window": last_window.window.index,
                }),
            );
        }
        if on(Metric::Lifecycle) {
            write_lifecycle(&mut bundle, scheme, windows, &ds)?;
        }
    }
    drop(replay_state);
    write_window_tables(&mut bundle, &run, rows)?;

    if on(Metric::Lifecycle) {
        let top = top_contracts(ds.records(), cfg.top_k, ds.registry());
        let rows = top.iter().enumerate().map(|(i, t)| {
            vec![
                (i + 1).to_string(),
                t.contract.to_string(),
                t.calls.to_string(),
                t.label.to_string(),
            ]
        });
        bundle.write_csv("top_contracts.csv", &["rank", "address", "calls", "label"], rows)?;
    }
    if on(Metric::Burstiness) {
        let classes = write_burstiness(cfg, &ds, &mut bundle)?;
        summary.insert("burstiness".into(), json!({ "classes": classes }));
    }

    let registry = ds.registry();
    let stats = ds.stats();
    let kinds_count = |k| registry.iter().filter(|(_, _, kind)| *kind == k).count();
    summary.insert(
        "totals".into(),
        json!({
            "records_read": stats.records_read,
            "records_accepted": stats.records_accepted,
            "records_rejected": stats.records_rejected,
            "accounts": registry.len(),
            "active_accounts": stats.distinct_accounts,
            "eoa_accounts": kinds_count(AccountKind::Eoa),
            "contract_accounts": kinds_count(AccountKind::Contract),
            "labelled_accounts": (0..registry.len() as u32).filter(|&i| registry.label(i) != Label::Ordinary).count(),
            "first_timestamp": first,
            "last_timestamp": last,
            "classification_warnings": ds.warnings().iter().map(|w| format!("{w:?}")).collect::<Vec<_>>(),
        }),
    );
    summary.insert(
        "windows".into(),
        json!({
            "origin": t0,
            "counts": schemes.iter().map(|w| (w[0].scheme.as_str().to_string(), json!(w.len()))).collect::<serde_json::Map<_, _>>(),
        }),
    );
    summary.insert("fits".into(), Value::Object(fits));
    if cfg.record_runtime {
        summary.insert("runtime_seconds".into(), json!(started.elapsed().as_secs_f64()));
    }
    bundle.write_json("summary.json", &Value::Object(summary))?;

    let config: BTreeMap<String, String> = cfg
        .canonical()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    let mut hashed = String::new();
    for (k, v) in config.iter().chain(&digests) {
        hashed.push_str(&format!("{k}={v}\n"));
    }
    let manifest = Manifest {
        tool: format!("txscope {}", env!("CARGO_PKG_VERSION")),
        config_hash: sha256_hex(hashed.as_bytes()),
        config,
        inputs: digests,
        files: BTreeMap::new(),
        metrics: run.iter().map(|m| m.to_string()).collect(),
        skipped_metrics: skipped.iter().map(|(m, r)| (m.to_string(), r.clone())).collect(),
        complete: partial.is_empty(),
        partial_metrics: partial,
    };
    Ok(bundle.finish(manifest)?)
}

fn collect_rows(
    scheme: WindowScheme,
    kind: GraphKind,
    results: &[WindowResult],
    prices: Option<&PriceSeries>,
    rows: &mut Rows,
) {
    let head = |r: &WindowResult| {
        vec![
            r.window.index.to_string(),
            scheme.as_str().to_string(),
            kind.as_str().to_string(),
        ]
    };
    for r in results {
        let s = r.size;
        let avg_degree = (s.node_count > 0).then(|| s.edge_count as f64 / s.node_count as f64);
        let mut row = head(r);
        row.extend([
            s.node_count.to_string(),
            s.edge_count.to_string(),
            s.tx_count.to_string(),
            s.total_value.to_string(),
            opt(avg_degree),
            r.new_nodes.to_string(),
            r.window.start.to_string(),
            r.window.end.to_string(),
        ]);
        rows.sizes.push(row);
        if let Some(hists) = &r.degrees {
            for h in hists {
                for (d, c) in &h.counts {
                    let mut row = head(r);
                    row.extend([h.direction.as_str().to_string(), d.to_string(), c.to_string()]);
                    rows.degrees.push(row);
                }
            }
        }
        if let Some(w) = &r.weights {
            let mut row = head(r);
            row.extend([
                opt(w.tx_per_node),
                opt(w.tx_per_edge),
                opt(w.value_per_node),
                opt(w.value_per_edge),
                opt(w.value_per_tx),
                w.new_nodes.nodes.to_string(),
                opt(w.new_nodes.avg_tx),
                opt(w.new_nodes.avg_value),
                w.old_nodes.nodes.to_string(),
                opt(w.old_nodes.avg_tx),
                opt(w.old_nodes.avg_value),
            ]);
            rows.weights.push(row);
        }
        if let Some(t) = &r.txcounts {
            for (level, dist) in [("edge", &t.per_edge), ("node", &t.per_node)] {
                for (k, c) in &dist.counts {
                    let mut row = head(r);
                    row.extend([level.to_string(), k.to_string(), c.to_string()]);
                    rows.txcounts.push(row);
                }
            }
        }
        if let Some(db) = &r.degree_balance {
            let mut row = head(r);
            row.push(opt(db.as_ref().ok()));
            row.push(db.as_ref().err().cloned().unwrap_or_default());
            rows.degree_balance.push(row);
        }
    }
    if let Some(p) = prices {
        let metrics: [(&str, WindowValue); 4] = [
            ("node_count", |r| r.size.node_count as f64),
            ("edge_count", |r| r.size.edge_count as f64),
            ("tx_count", |r| r.size.tx_count as f64),
            ("new_nodes", |r| r.new_nodes as f64),
        ];
        for (name, f) in metrics {
            let series: Vec<(TimeWindow, f64)> = results.iter().map(|r| (r.window, f(r))).collect();
            let (n, r, err) = match price_correlation(&series, p) {
                Ok(c) => (c.n_windows.to_string(), c.ppmcc.to_string(), String::new()),
                Err(e) => (String::new(), String::new(), e.to_string()),
            };
            rows.prices.push(vec![
                scheme.as_str().to_string(),
                kind.as_str().to_string(),
                name.to_string(),
                n,
                r,
                err,
            ]);
        }
    }
}

type WindowValue = fn(&WindowResult) -> f64;

const SIZE_HEADER: [&str; 11] = [
    "window_index",
    "scheme",
    "kind",
    "node_count",
    "edge_count",
    "tx_count",
    "total_value_wei",
    "avg_degree",
    "new_nodes",
    "start",
    "end",
];

const WEIGHT_HEADER: [&str; 14] = [
    "window_index",
    "scheme",
    "kind",
    "tx_per_node",
    "tx_per_edge",
    "value_per_node_wei",
    "value_per_edge_wei",
    "value_per_tx_wei",
    "new_nodes",
    "new_avg_tx",
    "new_avg_value_wei",
    "old_nodes",
    "old_avg_tx",
    "old_avg_value_wei",
];

fn write_window_tables(bundle: &mut Bundle, run: &BTreeSet<Metric>, rows: Rows) -> io::Result<()> {
    if run.contains(&Metric::Sizes) {
        bundle.write_csv("sizes.csv", &SIZE_HEADER, rows.sizes)?;
    }
    if run.contains(&Metric::Degrees) {
        bundle.write_csv(
            "degrees.csv",
            &["window_index", "scheme", "kind", "direction", "degree", "count"],
            rows.degrees,
        )?;
    }
    if run.contains(&Metric::Weights) {
        bundle.write_csv("weights.csv", &WEIGHT_HEADER, rows.weights)?;
    }
    if run.contains(&Metric::TxCounts) {
        bundle.write_csv(
            "txcounts.csv",
            &["window_index", "scheme", "kind", "level", "tx_count", "count"],
            rows.txcounts,
        )?;
    }
    if run.contains(&Metric::Balances) {
        bundle.write_csv(
            "degree_balance.csv",
            &["window_index", "scheme", "kind", "ppmcc", "error"],
            rows.degree_balance,
        )?;
    }
    if run.contains(&Metric::Prices) {
        bundle.write_csv(
            "price_correlation.csv",
            &["scheme", "kind", "metric", "n_windows", "ppmcc", "error"],
            rows.prices,
        )?;
    }
    Ok(())
}

pub fn motif_header() -> Vec<String> {
    let mut h = vec!["window_index".to_string()];
    h.extend(MotifClass::ALL.iter().map(|c| c.name().to_string()));
    h.extend(
        [
            "closed_total",
            "open_total",
            "closed_ratio",
            "mean_closure_days",
            "global_clustering",
        ]
        .map(String::from),
    );
    h
}

fn write_motifs(bundle: &mut Bundle, name: &str, results: &[WindowResult]) -> io::Result<()> {
    let header = motif_header();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = results.iter().map(|r| {
        let m = r.motifs.as_ref().expect("motifs on");
        let mut row = vec![r.window.index.to_string()];
        row.extend(m.counts.counts.iter().map(|c| c.to_string()));
        row.extend([
            m.counts.closed_total.to_string(),
            m.counts.open_total.to_string(),
            opt(m.closed_ratio),
            opt(m.mean_closure_days),
            m.clustering.to_string(),
        ]);
        row
    });
    bundle.write_csv(name, &header, rows)
}

fn write_lifecycle(
    bundle: &mut Bundle,
    scheme: WindowScheme,
    windows: &[TimeWindow],
    ds: &Dataset,
) -> Result<(), CliError> {
    let stats = lifecycle_stats(ds.records(), windows, ds.registry()).map_err(|e| data("lifecycle", e))?;
    let rows = stats.iter().map(|l| {
        vec![
            l.window.to_string(),
            l.created_by_eoa.to_string(),
            l.created_by_contract.to_string(),
            l.calls_by_eoa.to_string(),
            l.calls_by_contract.to_string(),
            l.distinct_called_contracts.to_string(),
            opt(l.avg_call_value_by_eoa()),
            opt(l.avg_call_value_by_contract()),
            l.suicides_to_eoa.to_string(),
            l.suicides_to_contract.to_string(),
        ]
    });
    bundle.write_csv(
        &format!("lifecycle_{}.csv", scheme.as_str()),
        &[
            "window_index",
            "created_by_eoa",
            "created_by_contract",
            "calls_by_eoa",
            "calls_by_contract",
            "distinct_called_contracts",
            "avg_call_value_by_eoa_wei",
            "avg_call_value_by_contract_wei",
            "suicides_to_eoa",
            "suicides_to_contract",
        ],
        rows,
    )?;
    Ok(())
}

fn write_balances(
    cfg: &RunConfig,
    ds: &Dataset,
    sheets: &[BalanceSheet],
    diagnostics: &[NegativeBalance],
    bundle: &mut Bundle,
) -> io::Result<()> {
    let registry = ds.registry();
    let living: Vec<BTreeMap<u32, f64>> = sheets
        .par_iter()
        .map(|s| {
            s.living_balances(registry, cfg.eoa_only)
                .into_iter()
                .map(|(a, b)| (a, b as f64))
                .collect()
        })
        .collect();
    let rows = sheets.iter().zip(&living).enumerate().map(|(i, (s, l))| {
        let as_of = match s.as_of {
            Checkpoint::Time(t) => t,
            Checkpoint::Block(b) => b as i64,
        };
        let values: Vec<f64> = l.values().copied().collect();
        vec![
            i.to_string(),
            as_of.to_string(),
            s.total().to_string(),
            s.balances.len().to_string(),
            l.len().to_string(),
            s.dead.len().to_string(),
            opt(gini(&values).ok()),
        ]
    });
    bundle.write_csv(
        "balances.csv",
        &[
            "checkpoint",
            "before",
            "total_wei",
            "accounts",
            "living",
            "dead",
            "gini",
        ],
        rows,
    )?;
    let rows = sheets.iter().zip(&living).enumerate().map(|(i, (_, l))| {
        let values: Vec<f64> = l.values().copied().collect();
        vec!["balance".to_string(), i.to_string(), opt(gini(&values).ok())]
    });
    bundle.write_csv("gini_balance.csv", &["metric", "window", "gini"], rows)?;
    let rows = rich_stay_rich(&living)
        .into_iter()
        .enumerate()
        .map(|(k, r)| vec!["balance".to_string(), k.to_string(), opt(r.ok())]);
    bundle.write_csv("ppmcc_balance.csv", &["metric", "k", "ppmcc"], rows)?;

    let last = sheets.last().expect("final checkpoint");
    let rows = last.balances.iter().map(|(&a, b)| {
        vec![
            registry.id(a).to_string(),
            registry.kind(a).as_str().to_string(),
            b.to_string(),
        ]
    });
    bundle.write_csv("balances_final.csv", &["address", "kind", "balance_wei"], rows)?;
    let rows = diagnostics.iter().map(|d| {
        vec![
            registry.id(d.account).to_string(),
            d.block_id.to_string(),
            d.balance.to_string(),
        ]
    });
    bundle.write_csv(
        "balance_diagnostics.csv",
        &["address", "block_id", "balance_wei"],
        rows,
    )?;
    Ok(())
}

fn write_burstiness(cfg: &RunConfig, ds: &Dataset, bundle: &mut Bundle) -> io::Result<Value> {
    let registry = ds.registry();
    let tls = timelines(ds.records(), cfg.timeline);
    let samples = mb_by_class(&tls, registry, &Label::ALL, cfg.mb_sample, cfg.seed, cfg.lag);
    let mut classes = serde_json::Map::new();
    let mut rows = Vec::new();
    for (label, sample) in &samples {
        match sample {
            ClassSample::Scores(scores) => {
                classes.insert(label.to_string(), json!({ "sampled": scores.len() }));
                let mut sorted: Vec<_> = scores.iter().collect();
                sorted.sort_by(|a, b| registry.id(a.account).cmp(registry.id(b.account)));
                for s in sorted {
                    rows.push(vec![
                        registry.id(s.account).to_string(),
                        label.to_string(),
                        s.b.to_string(),
                        opt(s.m),
                        s.n_intervals.to_string(),
                    ]);
                }
            }
            ClassSample::ClassTooSmall { eligible, requested } => {
                classes.insert(
                    label.to_string(),
                    json!({ "too_small": { "eligible": eligible, "requested": requested } }),
                );
            }
        }
    }
    bundle.write_csv(
        "mb_scatter.csv",
        &["account", "label", "B", "M", "n_intervals"],
        rows,
    )?;

    let curves: Vec<Vec<String>> = BUSY_PERIOD_P
        .par_iter()
        .map(|&p| {
            let mut ratios: Vec<f64> = tls
                .iter()
                .filter_map(|tl| busy_period_ratio(tl, p).ok())
                .collect();
            ratios.sort_by(f64::total_cmp);
            let mut row = vec![p.to_string(), ratios.len().to_string()];
            if ratios.is_empty() {
                row.extend(std::iter::repeat_n(String::new(), QUANTILES.len() + 1));
            } else {
                row.push((ratios.iter().sum::<f64>() / ratios.len() as f64).to_string());
                row.extend(QUANTILES.iter().map(|&q| quantile(&ratios, q).to_string()));
            }
            row
        })
        .collect();
    bundle.write_csv(
        "busy_period.csv",
        &["p", "n_accounts", "mean", "q10", "q25", "q50", "q75", "q90"],
        curves,
    )?;

    let hourly = hourly_histogram(ds.records().iter().map(|r| r.timestamp));
    let rows = hourly
        .iter()
        .enumerate()
        .map(|(h, v)| vec![h.to_string(), v.to_string()]);
    bundle.write_csv("hourly.csv", &["hour", "avg_tx"], rows)?;
    Ok(Value::Object(classes))
}

/// Exit status for a finished run.
pub fn exit_status(manifest: &Manifest) -> i32 {
    if manifest.complete {
        0
    } else {
        3
    }
}

/// Reads a bundle CSV into header and rows.
pub fn read_csv(path: &Path) -> io::Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).map_err(io::Error::other)?;
    let header = r
        .headers()
        .map_err(io::Error::other)?
        .iter()
        .map(String::from)
        .collect();
    let rows = r
        .records()
        .map(|row| row.map(|row| row.iter().map(String::from).collect()))
        .collect::<Result<_, _>>()
        .map_err(io::Error::other)?;
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_quantiles() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        assert_eq!(quantile(&xs, 0.1), 1.0);
        assert_eq!(quantile(&xs, 0.25), 3.0);
        assert_eq!(quantile(&xs, 0.5), 5.0);
        assert_eq!(quantile(&xs, 0.9), 9.0);
        assert_eq!(quantile(&[4.0], 0.1), 4.0);
    }

    #[test]
    fn motif_header_layout() {
        let h = motif_header();
        assert_eq!(h.len(), 19);
        assert_eq!(h[1], "021D");
        assert_eq!(h[13], "300");
        assert_eq!(h[18], "global_clustering");
    }
}
