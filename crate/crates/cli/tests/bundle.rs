//! Bundle layout and exit codes, driven through the `txscope` binary.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use txscope_cli::analyze::{motif_header, read_csv};
use txscope_cli::Manifest;
use txscope_core::synth::GroundTruth;

fn txscope(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_txscope"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Synthetic input with its default tally windows.
fn synth(dir: &Path, extra: &[&str]) -> GroundTruth {
    let mut args = vec![
        "synth",
        "--seed",
        "5",
        "--accounts",
        "2000",
        "--transactions",
        "30000",
        "--days",
        "90",
        "--tally-days",
        "15",
        "--out",
        s(dir),
    ];
    args.extend(extra);
    let (code, _, err) = txscope(&args);
    assert_eq!(code, 0, "{err}");
    GroundTruth::load(dir.join("ground_truth.json")).unwrap()
}

fn schema(name: &str) -> Option<Vec<String>> {
    let cols = |c: &[&str]| Some(c.iter().map(|s| s.to_string()).collect());
    let per_kind = |prefix: &str| {
        name.strip_prefix(prefix)
            .and_then(|rest| rest.strip_suffix(".csv"))
            .is_some_and(|rest| {
                let mut parts = rest.split('_');
                matches!(parts.next(), Some("uug" | "ccg" | "ucg"))
                    && matches!(parts.next(), Some("sliding" | "incremental"))
                    && parts.next().is_none()
            })
    };
    if per_kind("motifs_") {
        return Some(motif_header());
    }
    if per_kind("gini_") {
        return cols(&["metric", "window", "gini"]);
    }
    if per_kind("ppmcc_") {
        return cols(&["metric", "k", "ppmcc"]);
    }
    match name {
        "sizes.csv" => cols(&[
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
        ]),
        "degrees.csv" => cols(&["window_index", "scheme", "kind", "direction", "degree", "count"]),
        "weights.csv" => cols(&[
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
        ]),
        "txcounts.csv" => cols(&["window_index", "scheme", "kind", "level", "tx_count", "count"]),
        "degree_balance.csv" => cols(&["window_index", "scheme", "kind", "ppmcc", "error"]),
        "price_correlation.csv" => cols(&["scheme", "kind", "metric", "n_windows", "ppmcc", "error"]),
        "lifecycle_sliding.csv" | "lifecycle_incremental.csv" => cols(&[
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
        ]),
        "balances.csv" => cols(&[
            "checkpoint",
            "before",
            "total_wei",
            "accounts",
            "living",
            "dead",
            "gini",
        ]),
        "gini_balance.csv" => cols(&["metric", "window", "gini"]),
        "ppmcc_balance.csv" => cols(&["metric", "k", "ppmcc"]),
        "balances_final.csv" => cols(&["address", "kind", "balance_wei"]),
        "balance_diagnostics.csv" => cols(&["address", "block_id", "balance_wei"]),
        "top_contracts.csv" => cols(&["rank", "address", "calls", "label"]),
        "mb_scatter.csv" => cols(&["account", "label", "B", "M", "n_intervals"]),
        "busy_period.csv" => cols(&["p", "n_accounts", "mean", "q10", "q25", "q50", "q75", "q90"]),
        "hourly.csv" => cols(&["hour", "avg_tx"]),
        "rejected.csv" => cols(&["line", "reason"]),
        _ => None,
    }
}

#[test]
fn every_csv_matches_its_schema() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    synth(&input, &[]);
    let out = dir.path().join("bundle");
    let (code, _, err) = txscope(&[
        "analyze",
        "--tx",
        s(&input.join("transactions.csv")),
        "--credits",
        s(&input.join("credits.csv")),
        "--labels",
        s(&input.join("labels.csv")),
        "--prices",
        s(&input.join("prices.csv")),
        "--width-days",
        "20",
        "--stride-days",
        "10",
        "--initial-days",
        "20",
        "--step-days",
        "10",
        "--out",
        s(&out),
    ]);
    assert_eq!(code, 0, "{err}");

    let manifest = Manifest::load(&out).unwrap();
    assert!(manifest.complete);
    assert!(manifest.skipped_metrics.is_empty());
    assert!(manifest.verify(&out).is_empty());
    let mut csvs = 0;
    for name in manifest.files.keys().filter(|n| n.ends_with(".csv")) {
        let expected = schema(name).unwrap_or_else(|| panic!("no schema for {name}"));
        let (header, rows) = read_csv(&out.join(name)).unwrap();
        assert_eq!(header, expected, "{name}");
        assert!(rows.iter().all(|r| r.len() == header.len()), "{name}");
        csvs += 1;
    }
    // 3 kinds x 2 schemes x (motifs, gini, ppmcc) plus the shared tables
    assert!(csvs >= 18 + 16, "{csvs} csv files");
    let text = std::fs::read_to_string(out.join("summary.json")).unwrap();
    serde_json::from_str::<serde_json::Value>(&text).unwrap();

    let (code, stdout, _) = txscope(&["report", "--bundle", s(&out)]);
    assert_eq!(code, 0);
    assert!(stdout.contains(&manifest.config_hash));
    std::fs::write(out.join("sizes.csv"), "tampered\n").unwrap();
    let (code, _, err) = txscope(&["report", "--bundle", s(&out)]);
    assert_eq!(code, 2);
    assert!(err.contains("sizes.csv"));
}

#[test]
fn sizes_match_generator_tallies() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    let truth = synth(&input, &[]);
    let out = dir.path().join("bundle");
    let days = (truth.window_seconds / 86_400).to_string();
    let start = truth.config.start.to_string();
    let (code, _, err) = txscope(&[
        "analyze",
        "--tx",
        s(&input.join("transactions.csv")),
        "--scheme",
        "sliding",
        "--width-days",
        &days,
        "--stride-days",
        &days,
        "--start",
        &start,
        "--metrics",
        "sizes",
        "--out",
        s(&out),
    ]);
    assert_eq!(code, 0, "{err}");
    let (header, rows) = read_csv(&out.join("sizes.csv")).unwrap();
    let col = |n: &str| header.iter().position(|h| h == n).unwrap();
    let table: BTreeMap<(String, String), &Vec<String>> = rows
        .iter()
        .map(|r| ((r[col("window_index")].clone(), r[col("kind")].clone()), r))
        .collect();
    for w in &truth.windows {
        for (kind, t) in &w.graphs {
            let r = table[&(w.index.to_string(), kind.to_string())];
            let got: Vec<u64> = ["node_count", "edge_count", "tx_count", "new_nodes"]
                .iter()
                .map(|c| r[col(c)].parse().unwrap())
                .collect();
            assert_eq!(
                got,
                [t.nodes, t.edges, t.transactions, t.new_nodes],
                "window {} {kind}",
                w.index
            );
        }
    }
}

#[test]
fn metric_toggles_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    synth(&input, &[]);
    let out = dir.path().join("bundle");
    let (code, _, err) = txscope(&[
        "analyze",
        "--tx",
        s(&input.join("transactions.csv")),
        "--metrics",
        "motifs",
        "--kinds",
        "uug",
        "--scheme",
        "sliding",
        "--out",
        s(&out),
    ]);
    assert_eq!(code, 0, "{err}");
    let manifest = Manifest::load(&out).unwrap();
    assert_eq!(manifest.metrics, ["motifs"]);
    assert_eq!(manifest.skipped_metrics.len(), 10);
    assert_eq!(manifest.skipped_metrics["sizes"], "not requested");
    assert!(out.join("motifs_uug_sliding.csv").is_file());
    assert!(!out.join("sizes.csv").exists());
    assert!(!out.join("motifs_ccg_sliding.csv").exists());
}

#[test]
fn configuration_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = dir.path().join("bundle");
    let (code, _, err) = txscope(&["analyze", "--tx", s(&missing), "--out", s(&out)]);
    assert_eq!(code, 1, "{err}");
    assert!(!out.exists());
    assert_eq!(txscope(&["analyze", "--bogus"]).0, 1);
    assert_eq!(txscope(&["analyze", "--tx", s(&missing)]).0, 1);

    let input = dir.path().join("in");
    synth(&input, &[]);
    let (code, _, err) = txscope(&[
        "analyze",
        "--tx",
        s(&input.join("transactions.csv")),
        "--metrics",
        "balances",
        "--out",
        s(&out),
    ]);
    assert_eq!(code, 1);
    assert!(err.contains("credits"), "{err}");
}

const A: &str = "0x00000000000000000000000000000000000000aa";
const B: &str = "0x00000000000000000000000000000000000000bb";

fn overdrawn(dir: &Path) -> (String, String) {
    let tx = dir.join("tx.csv");
    let credits = dir.join("credits.csv");
    std::fs::write(
        &tx,
        format!(
            "block_id,tx_hash,sender,receiver,value_wei,timestamp,kind,internal\n\
             1,0x1,{A},{B},50,1500000000,transfer,false\n\
             2,0x2,{A},{B},80,1500086400,transfer,false\n\
             3,0x3,{B},{A},10,1500172800,transfer,false\n"
        ),
    )
    .unwrap();
    std::fs::write(&credits, format!("block_id,address,amount_wei\n0,{A},100\n")).unwrap();
    (s(&tx).to_string(), s(&credits).to_string())
}

#[test]
fn negative_balances_strict_and_lenient() {
    let dir = tempfile::tempdir().unwrap();
    let (tx, credits) = overdrawn(dir.path());
    let out = dir.path().join("strict");
    let (code, _, err) = txscope(&[
        "analyze",
        "--tx",
        &tx,
        "--credits",
        &credits,
        "--metrics",
        "balances",
        "--strict",
        "--out",
        s(&out),
    ]);
    assert_eq!(code, 2, "{err}");

    let out = dir.path().join("lenient");
    let (code, _, err) = txscope(&[
        "analyze",
        "--tx",
        &tx,
        "--credits",
        &credits,
        "--metrics",
        "balances",
        "--out",
        s(&out),
    ]);
    assert_eq!(code, 3, "{err}");
    let manifest = Manifest::load(&out).unwrap();
    assert!(!manifest.complete);
    assert!(manifest.partial_metrics.contains_key("balances"));
    let (_, rows) = read_csv(&out.join("balance_diagnostics.csv")).unwrap();
    assert_eq!(rows, [vec![A.to_string(), "2".to_string(), "-30".to_string()]]);
}

#[test]
fn rerun_replaces_own_bundle_only() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    synth(&input, &[]);
    let tx = input.join("transactions.csv");
    let out = dir.path().join("bundle");
    let args = ["analyze", "--tx", s(&tx), "--metrics", "sizes", "--out", s(&out)];
    assert_eq!(txscope(&args).0, 0);
    let first = std::fs::read(out.join("sizes.csv")).unwrap();
    assert_eq!(txscope(&args).0, 0);
    assert_eq!(std::fs::read(out.join("sizes.csv")).unwrap(), first);

    let foreign = dir.path().join("foreign");
    std::fs::create_dir(&foreign).unwrap();
    std::fs::write(foreign.join("notes.txt"), "keep").unwrap();
    let (code, _, _) = txscope(&["analyze", "--tx", s(&tx), "--out", s(&foreign)]);
    assert_eq!(code, 2);
    assert_eq!(
        std::fs::read_to_string(foreign.join("notes.txt")).unwrap(),
        "keep"
    );
}
