//! Run configuration: a flat `key = value` file overlaid by command-line
//! flags. Keys are the long flag names without the leading dashes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;
use txscope_core::burstiness::TimelineMode;
use txscope_core::graph::GraphKind;
use txscope_core::ingest::{parse_date, Format};
use txscope_core::types::{Timestamp, Wei};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}:{line}: expected `key = value`")]
    Syntax { path: PathBuf, line: usize },
    #[error("unknown configuration key {0:?}")]
    UnknownKey(String),
    #[error("bad value {value:?} for {key}: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("missing required setting {0}")]
    Missing(&'static str),
    #[error("{key} path {path} does not exist")]
    PathNotFound { key: &'static str, path: PathBuf },
    #[error("metric {metric} needs {needs}")]
    MetricNeeds { metric: Metric, needs: &'static str },
    #[error("cannot read config file {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Sizes,
    Degrees,
    Weights,
    TxCounts,
    Motifs,
    Burstiness,
    Gini,
    Ppmcc,
    Lifecycle,
    Balances,
    Prices,
}

impl Metric {
    pub const ALL: [Metric; 11] = [
        Metric::Sizes,
        Metric::Degrees,
        Metric::Weights,
        Metric::TxCounts,
        Metric::Motifs,
        Metric::Burstiness,
        Metric::Gini,
        Metric::Ppmcc,
        Metric::Lifecycle,
        Metric::Balances,
        Metric::Prices,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Sizes => "sizes",
            Metric::Degrees => "degrees",
            Metric::Weights => "weights",
            Metric::TxCounts => "txcounts",
            Metric::Motifs => "motifs",
            Metric::Burstiness => "burstiness",
            Metric::Gini => "gini",
            Metric::Ppmcc => "ppmcc",
            Metric::Lifecycle => "lifecycle",
            Metric::Balances => "balances",
            Metric::Prices => "prices",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| format!("unknown metric {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeChoice {
    Sliding,
    Incremental,
    Both,
}

impl SchemeChoice {
    pub fn sliding(self) -> bool {
        self != SchemeChoice::Incremental
    }

    pub fn incremental(self) -> bool {
        self != SchemeChoice::Sliding
    }

    fn as_str(self) -> &'static str {
        match self {
            SchemeChoice::Sliding => "sliding",
            SchemeChoice::Incremental => "incremental",
            SchemeChoice::Both => "both",
        }
    }
}

impl FromStr for SchemeChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "sliding" => Ok(SchemeChoice::Sliding),
            "incremental" => Ok(SchemeChoice::Incremental),
            "both" => Ok(SchemeChoice::Both),
            _ => Err("expected sliding, incremental or both".into()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub tx: Option<PathBuf>,
    pub format: Format,
    pub labels: Option<PathBuf>,
    pub prices: Option<PathBuf>,
    pub credits: Option<PathBuf>,
    pub contracts: Option<PathBuf>,
    pub scheme: SchemeChoice,
    pub width_days: u32,
    pub stride_days: u32,
    pub initial_days: u32,
    pub step_days: u32,
    /// Window origin; defaults to midnight UTC of the first record's day.
    pub start: Option<Timestamp>,
    pub kinds: Vec<GraphKind>,
    /// `None` means every metric whose inputs are available.
    pub metrics: Option<BTreeSet<Metric>>,
    pub min_value: Wei,
    pub strict: bool,
    pub seed: u64,
    pub workers: usize,
    pub out: Option<PathBuf>,
    pub timeline: TimelineMode,
    pub mb_sample: usize,
    pub lag: usize,
    pub top_k: usize,
    /// Balance inequality over EOAs only, or over all accounts.
    pub eoa_only: bool,
    pub record_runtime: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            tx: None,
            format: Format::Csv,
            labels: None,
            prices: None,
            credits: None,
            contracts: None,
            scheme: SchemeChoice::Both,
            width_days: 180,
            stride_days: 45,
            initial_days: 180,
            step_days: 45,
            start: None,
            kinds: GraphKind::ALL.to_vec(),
            metrics: None,
            min_value: 0,
            strict: false,
            seed: 42,
            workers: 4,
            out: None,
            timeline: TimelineMode::Both,
            mb_sample: 100,
            lag: 1,
            top_k: 20,
            eoa_only: true,
            record_runtime: false,
        }
    }
}

fn bad(key: &str, value: &str, reason: impl fmt::Display) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.to_string(),
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.trim().parse().map_err(|e| bad(key, value, e))
}

fn parse_positive(key: &str, value: &str) -> Result<u32, ConfigError> {
    match parse_num::<u32>(key, value)? {
        0 => Err(bad(key, value, "must be positive")),
        n => Ok(n),
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e| bad(key, value, e)))
        .collect()
}

impl RunConfig {
    /// Applies one setting. Keys accept `-` or `_` as separators.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = key.trim().replace('_', "-");
        let path = || Some(PathBuf::from(value.trim()));
        match key.as_str() {
            "tx" => self.tx = path(),
            "format" => self.format = value.parse().map_err(|e| bad(&key, value, e))?,
            "labels" => self.labels = path(),
            "prices" => self.prices = path(),
            "credits" => self.credits = path(),
            "contracts" => self.contracts = path(),
            "scheme" => self.scheme = value.parse().map_err(|e| bad(&key, value, e))?,
            "width-days" => self.width_days = parse_positive(&key, value)?,
            "stride-days" => self.stride_days = parse_positive(&key, value)?,
            "initial-days" => self.initial_days = parse_positive(&key, value)?,
            "step-days" => self.step_days = parse_positive(&key, value)?,
            "start" => {
                self.start = Some(
                    parse_date(value).ok_or_else(|| bad(&key, value, "expected a date or epoch seconds"))?,
                )
            }
            "kinds" => {
                let mut kinds: Vec<GraphKind> = parse_list(&key, value)?;
                kinds.sort();
                kinds.dedup();
                if kinds.is_empty() {
                    return Err(bad(&key, value, "no graph kinds"));
                }
                self.kinds = kinds;
            }
            "metrics" => {
                self.metrics = if value.trim() == "all" {
                    None
                } else {
                    let list: Vec<Metric> = parse_list(&key, value)?;
                    if list.is_empty() {
                        return Err(bad(&key, value, "no metrics"));
                    }
                    Some(list.into_iter().collect())
                }
            }
            "min-value" => self.min_value = parse_num(&key, value)?,
            "strict" => self.strict = parse_bool(&key, value)?,
            "seed" => self.seed = parse_num(&key, value)?,
            "workers" => self.workers = parse_positive(&key, value)? as usize,
            "out" => self.out = path(),
            "timeline" => {
                self.timeline = match value.trim() {
                    "both" => TimelineMode::Both,
                    "sent" => TimelineMode::SentOnly,
                    _ => return Err(bad(&key, value, "expected both or sent")),
                }
            }
            "mb-sample" => self.mb_sample = parse_positive(&key, value)? as usize,
            "lag" => self.lag = parse_positive(&key, value)? as usize,
            "top-k" => self.top_k = parse_positive(&key, value)? as usize,
            "balance-scope" => {
                self.eoa_only = match value.trim() {
                    "eoa" => true,
                    "all" => false,
                    _ => return Err(bad(&key, value, "expected eoa or all")),
                }
            }
            "record-runtime" => self.record_runtime = parse_bool(&key, value)?,
            _ => return Err(ConfigError::UnknownKey(key)),
        }
        Ok(())
    }

    /// Reads a config file on top of the defaults.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = RunConfig::default();
        for (key, value) in parse_pairs(&text, path)? {
            cfg.set(&key, &value)?;
        }
        Ok(cfg)
    }

    /// Checks that inputs exist and settings are coherent.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let tx = self.tx.as_ref().ok_or(ConfigError::Missing("tx"))?;
        if self.out.is_none() {
            return Err(ConfigError::Missing("out"));
        }
        let inputs = [
            ("tx", Some(tx)),
            ("labels", self.labels.as_ref()),
            ("prices", self.prices.as_ref()),
            ("credits", self.credits.as_ref()),
            ("contracts", self.contracts.as_ref()),
        ];
        for (key, path) in inputs {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(ConfigError::PathNotFound { key, path: p.clone() });
                }
            }
        }
        if let Some(m) = &self.metrics {
            if m.contains(&Metric::Balances) && self.credits.is_none() {
                return Err(ConfigError::MetricNeeds {
                    metric: Metric::Balances,
                    needs: "--credits",
                });
            }
            if m.contains(&Metric::Prices) && self.prices.is_none() {
                return Err(ConfigError::MetricNeeds {
                    metric: Metric::Prices,
                    needs: "--prices",
                });
            }
        }
        Ok(())
    }

    /// Metrics to compute, and the ones skipped with the reason.
    pub fn metric_plan(&self) -> (BTreeSet<Metric>, BTreeMap<Metric, String>) {
        let mut run = BTreeSet::new();
        let mut skipped = BTreeMap::new();
        for m in Metric::ALL {
            let requested = self.metrics.as_ref().is_none_or(|set| set.contains(&m));
            if !requested {
                skipped.insert(m, "not requested".to_string());
            } else if m == Metric::Balances && self.credits.is_none() {
                skipped.insert(m, "no credits file".to_string());
            } else if m == Metric::Prices && self.prices.is_none() {
                skipped.insert(m, "no price file".to_string());
            } else {
                run.insert(m);
            }
        }
        (run, skipped)
    }

    /// Settings that shape the results, one `key=value` per entry. Input
    /// paths are left out; the manifest records input digests instead.
    pub fn canonical(&self) -> BTreeMap<&'static str, String> {
        let mut m = BTreeMap::new();
        m.insert("format", self.format.to_string());
        m.insert("scheme", self.scheme.as_str().to_string());
        m.insert("width-days", self.width_days.to_string());
        m.insert("stride-days", self.stride_days.to_string());
        m.insert("initial-days", self.initial_days.to_string());
        m.insert("step-days", self.step_days.to_string());
        m.insert(
            "start",
            self.start.map(|t| t.to_string()).unwrap_or_else(|| "auto".into()),
        );
        m.insert(
            "kinds",
            self.kinds
                .iter()
                .map(|k| k.as_str())
                .collect::<Vec<_>>()
                .join(","),
        );
        m.insert(
            "metrics",
            match &self.metrics {
                None => "all".to_string(),
                Some(set) => set.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(","),
            },
        );
        m.insert("min-value", self.min_value.to_string());
        m.insert("strict", self.strict.to_string());
        m.insert("seed", self.seed.to_string());
        m.insert(
            "timeline",
            match self.timeline {
                TimelineMode::Both => "both",
                TimelineMode::SentOnly => "sent",
            }
            .to_string(),
        );
        m.insert("mb-sample", self.mb_sample.to_string());
        m.insert("lag", self.lag.to_string());
        m.insert("top-k", self.top_k.to_string());
        m.insert(
            "balance-scope",
            if self.eoa_only { "eoa" } else { "all" }.to_string(),
        );
        for (key, p) in [
            ("labels", &self.labels),
            ("prices", &self.prices),
            ("credits", &self.credits),
            ("contracts", &self.contracts),
        ] {
            m.insert(key, p.is_some().to_string());
        }
        m
    }
}

/// `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_pairs(text: &str, path: &Path) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            path: path.to_path_buf(),
            line: i + 1,
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}
