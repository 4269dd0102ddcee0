//! The smaller subcommands: ingest-check, synth, correlate and report.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use txscope_core::dataset::{Dataset, DatasetInputs};
use txscope_core::ingest::{
    load_price_series, parse_declared, Format, IngestOptions, IngestStats, ParseMode,
};
use txscope_core::synth::{generate, SynthConfig, SynthFiles};
use txscope_core::types::{AccountKind, TimeWindow, WindowScheme};

use crate::analyze::{read_csv, CliError};
use crate::bundle::{Manifest, MANIFEST};
use crate::config::ConfigError;
use crate::correlate::price_correlation;

fn require(key: &'static str, path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(ConfigError::PathNotFound {
            key,
            path: path.to_path_buf(),
        }
        .into())
    }
}

#[derive(Debug, Serialize)]
pub struct IngestReport {
    pub stats: IngestStats,
    pub eoa_accounts: usize,
    pub contract_accounts: usize,
    pub warnings: Vec<String>,
}

/// Parses and classifies a transaction file without analysing it.
pub fn ingest_check(
    tx: &Path,
    format: Format,
    strict: bool,
    contracts: Option<&Path>,
    rejects: Option<&Path>,
) -> Result<IngestReport, CliError> {
    require("tx", tx)?;
    let declared = match contracts {
        Some(p) => {
            require("contracts", p)?;
            parse_declared(File::open(p)?).map_err(|e| CliError::Data(format!("contracts: {e}")))?
        }
        None => Vec::new(),
    };
    let sink: Option<Box<dyn std::io::Write + Send>> = match rejects {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            std::io::Write::write_all(&mut w, b"line,reason\n")?;
            Some(Box::new(w))
        }
        None => None,
    };
    let options = IngestOptions {
        mode: if strict {
            ParseMode::Strict
        } else {
            ParseMode::Lenient
        },
        time_range: None,
    };
    let ds = Dataset::load_with_rejects(
        tx,
        format,
        options,
        DatasetInputs {
            declared: &declared,
            known: &[],
        },
        sink,
    )
    .map_err(|e| CliError::Data(format!("transactions: {e}")))?;
    let count = |k| ds.registry().iter().filter(|(_, _, kind)| *kind == k).count();
    Ok(IngestReport {
        stats: ds.stats().clone(),
        eoa_accounts: count(AccountKind::Eoa),
        contract_accounts: count(AccountKind::Contract),
        warnings: ds.warnings().iter().map(|w| format!("{w:?}")).collect(),
    })
}

/// Generates a synthetic stream and its ground truth into `out`.
pub fn synth(cfg: &SynthConfig, format: Format, out: &Path) -> Result<SynthFiles, CliError> {
    cfg.validate().map_err(|e| ConfigError::BadValue {
        key: "synth config".into(),
        value: String::new(),
        reason: e.to_string(),
    })?;
    let output = generate(cfg).map_err(|e| CliError::Data(e.to_string()))?;
    output
        .write_to_dir(out, format)
        .map_err(|e| CliError::Data(e.to_string()))
}

pub fn load_synth_config(path: &Path) -> Result<SynthConfig, CliError> {
    require("config", path)?;
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| {
        ConfigError::BadValue {
            key: "config".into(),
            value: path.display().to_string(),
            reason: e.to_string(),
        }
        .into()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationRow {
    pub scheme: String,
    pub kind: String,
    pub metric: String,
    pub n_windows: Option<usize>,
    pub ppmcc: Option<f64>,
    pub error: Option<String>,
}

/// Correlates the per-window columns of a bundle's `sizes.csv` with prices.
/// Empty filters select everything.
pub fn correlate_bundle(
    bundle: &Path,
    prices: &Path,
    metrics: &[String],
    kinds: &[String],
    schemes: &[String],
) -> Result<Vec<CorrelationRow>, CliError> {
    let sizes = bundle.join("sizes.csv");
    require("bundle sizes.csv", &sizes)?;
    require("prices", prices)?;
    let series = load_price_series(prices).map_err(|e| CliError::Data(format!("prices: {e}")))?;
    let (header, rows) = read_csv(&sizes)?;
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Data(format!("sizes.csv lacks column {name}")))
    };
    let (ci, cs, ck, cstart, cend) = (
        col("window_index")?,
        col("scheme")?,
        col("kind")?,
        col("start")?,
        col("end")?,
    );
    let wanted = |list: &[String], v: &str| list.is_empty() || list.iter().any(|x| x == v);
    let metric_names: Vec<String> = if metrics.is_empty() {
        ["node_count", "edge_count", "tx_count", "new_nodes"]
            .map(String::from)
            .to_vec()
    } else {
        metrics.to_vec()
    };
    let mut groups: BTreeMap<(String, String), Vec<&Vec<String>>> = BTreeMap::new();
    for row in &rows {
        if wanted(schemes, &row[cs]) && wanted(kinds, &row[ck]) {
            groups
                .entry((row[cs].clone(), row[ck].clone()))
                .or_default()
                .push(row);
        }
    }
    let parse = |s: &str, what: &str| -> Result<i64, CliError> {
        s.parse()
            .map_err(|_| CliError::Data(format!("sizes.csv: bad {what} {s:?}")))
    };
    let mut out = Vec::new();
    for ((scheme, kind), group) in groups {
        for metric in &metric_names {
            let cm = col(metric)?;
            let mut series_rows = Vec::new();
            for row in &group {
                let value: f64 = row[cm]
                    .parse()
                    .map_err(|_| CliError::Data(format!("sizes.csv: bad {metric} {:?}", row[cm])))?;
                let window = TimeWindow {
                    index: parse(&row[ci], "window_index")? as usize,
                    start: parse(&row[cstart], "start")?,
                    end: parse(&row[cend], "end")?,
                    scheme: if scheme == "incremental" {
                        WindowScheme::Incremental
                    } else {
                        WindowScheme::Sliding
                    },
                };
                series_rows.push((window, value));
            }
            let (n_windows, ppmcc, error) = match price_correlation(&series_rows, &series) {
                Ok(c) => (Some(c.n_windows), Some(c.ppmcc), None),
                Err(e) => (None, None, Some(e.to_string())),
            };
            out.push(CorrelationRow {
                scheme: scheme.clone(),
                kind: kind.clone(),
                metric: metric.clone(),
                n_windows,
                ppmcc,
                error,
            });
        }
    }
    Ok(out)
}

/// Verifies a bundle against its manifest and summarises it.
pub fn report(bundle: &Path) -> Result<(Manifest, Value, Vec<String>), CliError> {
    require("bundle manifest", &bundle.join(MANIFEST))?;
    let manifest = Manifest::load(bundle)?;
    let broken = manifest.verify(bundle);
    let summary_path: PathBuf = bundle.join("summary.json");
    let summary = match std::fs::read_to_string(&summary_path) {
        Ok(text) => serde_json::from_str(&text).map_err(|e| CliError::Data(format!("summary.json: {e}")))?,
        Err(_) => json!({}),
    };
    Ok((manifest, summary, broken))
}
