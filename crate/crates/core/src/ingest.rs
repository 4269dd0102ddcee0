//! Streaming parsers for transaction logs and the enrichment files that go
//! with them (labels, prices, contract declarations, credits).
//!
//! Parsing never buffers the record stream: [`TransactionReader`] yields one
//! record at a time and only keeps the distinct-account set for its stats.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::thread::{self, JoinHandle};

use chrono::NaiveDate;
use crossbeam_channel::{bounded, Receiver};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::types::{
    AccountId, AccountKind, Label, LabelMap, PriceError, PriceSeries, Timestamp, TransactionRecord, TxKind,
    Wei,
};

pub const TX_COLUMNS: [&str; 8] = [
    "block_id",
    "tx_hash",
    "sender",
    "receiver",
    "value_wei",
    "timestamp",
    "kind",
    "internal",
];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unknown input format {0:?} (expected csv or jsonl)")]
    UnknownFormat(String),
    #[error("line {line}: {reason}")]
    SchemaViolation { line: u64, reason: String },
    #[error("duplicate label for {address}: {first} vs {second}")]
    DuplicateLabel {
        address: AccountId,
        first: Label,
        second: Label,
    },
    #[error("line {line}: unknown label name {name:?}")]
    UnknownLabelName { line: u64, name: String },
    #[error(transparent)]
    Price(#[from] PriceError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
}

impl FromStr for Format {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "jsonl" | "ndjson" => Ok(Format::Jsonl),
            _ => Err(IngestError::UnknownFormat(s.to_string())),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Skip and count malformed rows.
    #[default]
    Lenient,
    /// Abort on the first malformed row.
    Strict,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IngestOptions {
    pub mode: ParseMode,
    /// Accepted timestamp range, inclusive on both ends.
    pub time_range: Option<(Timestamp, Timestamp)>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub records_read: u64,
    pub records_accepted: u64,
    pub records_rejected: u64,
    pub first_timestamp: Option<Timestamp>,
    pub last_timestamp: Option<Timestamp>,
    pub distinct_accounts: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub line: u64,
    pub reason: String,
}

enum Rows<R: Read> {
    Csv {
        reader: csv::Reader<R>,
        columns: [usize; 8],
        row: csv::StringRecord,
    },
    Jsonl {
        reader: BufReader<R>,
        line: u64,
        buf: String,
    },
}

/// Pull-based record stream over a CSV or JSONL source.
/// Source line and the parsed record or the rejection reason.
type RawRow = (u64, Result<TransactionRecord, String>);

pub struct TransactionReader<R: Read> {
    rows: Rows<R>,
    options: IngestOptions,
    stats: IngestStats,
    accounts: HashSet<AccountId>,
    rejects: Option<Box<dyn Write + Send>>,
    failed: bool,
}

impl<R: Read> TransactionReader<R> {
    pub fn new(source: R, format: Format, options: IngestOptions) -> Result<Self, IngestError> {
        let rows = match format {
            Format::Csv => {
                let mut reader = csv::ReaderBuilder::new()
                    .has_headers(true)
                    .flexible(true)
                    .trim(csv::Trim::All)
                    .from_reader(source);
                let headers = reader.headers()?.clone();
                let mut columns = [0usize; 8];
                // An empty file has no header row at all; treat it as an empty stream.
                if !headers.is_empty() {
                    for (slot, name) in columns.iter_mut().zip(TX_COLUMNS) {
                        *slot = headers.iter().position(|h| h == name).ok_or_else(|| {
                            IngestError::SchemaViolation {
                                line: 1,
                                reason: format!("missing column {name:?}"),
                            }
                        })?;
                    }
                }
                Rows::Csv {
                    reader,
                    columns,
                    row: csv::StringRecord::new(),
                }
            }
            Format::Jsonl => Rows::Jsonl {
                reader: BufReader::new(source),
                line: 0,
                buf: String::new(),
            },
        };
        Ok(TransactionReader {
            rows,
            options,
            stats: IngestStats::default(),
            accounts: HashSet::new(),
            rejects: None,
            failed: false,
        })
    }

    /// Writes `line,reason` for every rejected row to `sink`.
    pub fn with_rejects(mut self, sink: impl Write + Send + 'static) -> Self {
        self.rejects = Some(Box::new(sink));
        self
    }

    pub fn stats(&self) -> &IngestStats {
        &self.stats
    }

    pub fn into_stats(self) -> IngestStats {
        self.stats
    }

    fn next_raw(&mut self) -> Option<Result<RawRow, IngestError>> {
        match &mut self.rows {
            Rows::Csv { reader, columns, row } => match reader.read_record(row) {
                Ok(false) => None,
                Ok(true) => {
                    let line = row.position().map(|p| p.line()).unwrap_or(0);
                    Some(Ok((line, parse_csv_row(row, columns))))
                }
                Err(e) => {
                    let line = e.position().map(|p| p.line()).unwrap_or(0);
                    match e.kind() {
                        csv::ErrorKind::Io(_) => Some(Err(e.into())),
                        _ => Some(Ok((line, Err(e.to_string())))),
                    }
                }
            },
            Rows::Jsonl { reader, line, buf } => loop {
                buf.clear();
                match reader.read_line(buf) {
                    Ok(0) => return None,
                    Ok(_) => {
                        *line += 1;
                        if buf.trim().is_empty() {
                            continue;
                        }
                        return Some(Ok((*line, parse_json_row(buf.trim()))));
                    }
                    Err(e) => return Some(Err(e.into())),
                }
            },
        }
    }

    fn accept(&mut self, rec: &TransactionRecord) {
        self.stats.records_accepted += 1;
        let ts = rec.timestamp;
        self.stats.first_timestamp = Some(self.stats.first_timestamp.map_or(ts, |t| t.min(ts)));
        self.stats.last_timestamp = Some(self.stats.last_timestamp.map_or(ts, |t| t.max(ts)));
        for id in [&rec.sender, &rec.receiver] {
            if !self.accounts.contains(id) {
                self.accounts.insert(id.clone());
            }
        }
        self.stats.distinct_accounts = self.accounts.len() as u64;
    }
}

impl<R: Read> Iterator for TransactionReader<R> {
    type Item = Result<TransactionRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            let (line, parsed) = match self.next_raw()? {
                Ok(x) => x,
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e));
                }
            };
            self.stats.records_read += 1;
            let parsed = parsed.and_then(|rec| match self.options.time_range {
                Some((lo, hi)) if rec.timestamp < lo || rec.timestamp > hi => Err(format!(
                    "timestamp {} outside measurement range [{lo}, {hi}]",
                    rec.timestamp
                )),
                _ => Ok(rec),
            });
            match parsed {
                Ok(rec) => {
                    self.accept(&rec);
                    return Some(Ok(rec));
                }
                Err(reason) => {
                    self.stats.records_rejected += 1;
                    if let Some(sink) = self.rejects.as_mut() {
                        if let Err(e) = writeln!(sink, "{line},{}", reason.replace(',', ";")) {
                            self.failed = true;
                            return Some(Err(e.into()));
                        }
                    }
                    if self.options.mode == ParseMode::Strict {
                        self.failed = true;
                        return Some(Err(IngestError::SchemaViolation { line, reason }));
                    }
                }
            }
        }
    }
}

fn parse_value(raw: &str) -> Result<Wei, String> {
    let raw = raw.trim();
    if raw.starts_with('-') {
        return Err(format!("negative value {raw}"));
    }
    raw.parse::<Wei>()
        .map_err(|e| format!("bad value_wei {raw:?}: {e}"))
}

fn parse_flag(raw: &str) -> Result<bool, String> {
    match raw.trim() {
        "0" | "false" => Ok(false),
        "1" | "true" => Ok(true),
        other => Err(format!("bad internal flag {other:?}")),
    }
}

#[allow(clippy::too_many_arguments)]
fn parse_fields(
    block_id: &str,
    tx_hash: &str,
    sender: &str,
    receiver: &str,
    value: Result<Wei, String>,
    timestamp: &str,
    kind: &str,
    internal: Result<bool, String>,
) -> Result<TransactionRecord, String> {
    Ok(TransactionRecord {
        block_id: block_id
            .trim()
            .parse()
            .map_err(|e| format!("bad block_id {block_id:?}: {e}"))?,
        tx_hash: tx_hash.trim().to_string(),
        sender: AccountId::parse(sender.trim()).map_err(|e| format!("sender: {e}"))?,
        receiver: AccountId::parse(receiver.trim()).map_err(|e| format!("receiver: {e}"))?,
        value: value?,
        timestamp: timestamp
            .trim()
            .parse()
            .map_err(|e| format!("bad timestamp {timestamp:?}: {e}"))?,
        kind: kind.parse().map_err(|e| format!("{e}"))?,
        internal: internal?,
    })
}

fn parse_csv_row(row: &csv::StringRecord, columns: &[usize; 8]) -> Result<TransactionRecord, String> {
    let field = |i: usize| {
        row.get(columns[i])
            .ok_or_else(|| format!("missing field {}", TX_COLUMNS[i]))
    };
    parse_fields(
        field(0)?,
        field(1)?,
        field(2)?,
        field(3)?,
        parse_value(field(4)?),
        field(5)?,
        field(6)?,
        parse_flag(field(7)?),
    )
}

fn parse_json_row(line: &str) -> Result<TransactionRecord, String> {
    let obj: Value = serde_json::from_str(line).map_err(|e| format!("invalid json: {e}"))?;
    let get = |name: &str| obj.get(name).ok_or_else(|| format!("missing field {name}"));
    let text = |name: &str| -> Result<String, String> {
        match get(name)? {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            other => Err(format!("field {name} has unexpected type: {other}")),
        }
    };
    let value = match get("value_wei")? {
        Value::String(s) => parse_value(s),
        Value::Number(n) => match (n.as_u64(), n.as_i64()) {
            (Some(v), _) => Ok(v as Wei),
            (None, Some(v)) if v < 0 => Err(format!("negative value {v}")),
            _ => Err(format!(
                "value_wei {n} is not an exact integer; quote large values"
            )),
        },
        other => Err(format!("field value_wei has unexpected type: {other}")),
    };
    let internal = match get("internal")? {
        Value::Bool(b) => Ok(*b),
        Value::Number(n) => parse_flag(&n.to_string()),
        Value::String(s) => parse_flag(s),
        other => Err(format!("field internal has unexpected type: {other}")),
    };
    parse_fields(
        &text("block_id")?,
        &text("tx_hash")?,
        &text("sender")?,
        &text("receiver")?,
        value,
        &text("timestamp")?,
        &text("kind")?,
        internal,
    )
}

/// Opens a reader over `source`; iterate it to stream records.
pub fn parse_transactions<R: Read>(
    source: R,
    format: Format,
    options: IngestOptions,
) -> Result<TransactionReader<R>, IngestError> {
    TransactionReader::new(source, format, options)
}

/// Parses on a background thread and hands records over a bounded queue.
/// The parser blocks whenever `capacity` records are waiting.
pub fn spawn_parser<R: Read + Send + 'static>(
    source: R,
    format: Format,
    options: IngestOptions,
    capacity: usize,
) -> (
    Receiver<TransactionRecord>,
    JoinHandle<Result<IngestStats, IngestError>>,
) {
    let (tx, rx) = bounded(capacity.max(1));
    let handle = thread::spawn(move || {
        let mut reader = TransactionReader::new(source, format, options)?;
        for rec in reader.by_ref() {
            if tx.send(rec?).is_err() {
                break;
            }
        }
        Ok(reader.into_stats())
    });
    (rx, handle)
}

/// Serializes records in the ingest CSV schema.
pub fn write_transactions_csv<'a, W: Write>(
    out: W,
    records: impl IntoIterator<Item = &'a TransactionRecord>,
) -> Result<(), IngestError> {
    let mut w = TxCsvWriter::new(out)?;
    for rec in records {
        w.write(rec)?;
    }
    w.finish()
}

pub struct TxCsvWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> TxCsvWriter<W> {
    pub fn new(out: W) -> Result<Self, IngestError> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(TX_COLUMNS)?;
        Ok(TxCsvWriter { inner })
    }

    pub fn write(&mut self, rec: &TransactionRecord) -> Result<(), IngestError> {
        self.inner.write_record([
            rec.block_id.to_string().as_str(),
            &rec.tx_hash,
            rec.sender.as_str(),
            rec.receiver.as_str(),
            &rec.value.to_string(),
            &rec.timestamp.to_string(),
            rec.kind.as_str(),
            if rec.internal { "1" } else { "0" },
        ])?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), IngestError> {
        self.inner.flush()?;
        Ok(())
    }
}

/// One JSONL line in the ingest schema. Values are quoted to survive
/// JSON number precision limits.
pub fn record_to_json_line(rec: &TransactionRecord) -> String {
    serde_json::json!({
        "block_id": rec.block_id,
        "tx_hash": rec.tx_hash,
        "sender": rec.sender.as_str(),
        "receiver": rec.receiver.as_str(),
        "value_wei": rec.value.to_string(),
        "timestamp": rec.timestamp,
        "kind": rec.kind.as_str(),
        "internal": u8::from(rec.internal),
    })
    .to_string()
}

/// Account table with kinds and labels. Accounts are stored in address order,
/// so dense indices do not depend on the order records were seen in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccountRegistry {
    ids: Vec<AccountId>,
    kinds: Vec<AccountKind>,
    labels: Vec<Label>,
}

impl AccountRegistry {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: &AccountId) -> Option<u32> {
        self.ids.binary_search(id).ok().map(|i| i as u32)
    }

    pub fn id(&self, idx: u32) -> &AccountId {
        &self.ids[idx as usize]
    }

    pub fn ids(&self) -> &[AccountId] {
        &self.ids
    }

    #[inline]
    pub fn kind(&self, idx: u32) -> AccountKind {
        self.kinds[idx as usize]
    }

    pub fn kind_of(&self, id: &AccountId) -> Option<AccountKind> {
        self.index_of(id).map(|i| self.kind(i))
    }

    #[inline]
    pub fn label(&self, idx: u32) -> Label {
        self.labels[idx as usize]
    }

    pub fn attach_labels(&mut self, labels: &LabelMap) {
        for (i, id) in self.ids.iter().enumerate() {
            self.labels[i] = labels.get(id);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &AccountId, AccountKind)> + '_ {
        self.ids
            .iter()
            .zip(&self.kinds)
            .enumerate()
            .map(|(i, (id, k))| (i as u32, id, *k))
    }

    /// Map view used for equality checks independent of construction path.
    pub fn to_map(&self) -> BTreeMap<AccountId, AccountKind> {
        self.ids.iter().cloned().zip(self.kinds.iter().copied()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClassificationWarning {
    /// Declared as an EOA but the record stream shows contract behaviour.
    ConflictingEvidence { account: AccountId },
}

#[derive(Debug, Clone)]
pub struct Classification {
    pub registry: AccountRegistry,
    pub warnings: Vec<ClassificationWarning>,
}

/// A declared account from a contract declaration file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Declared {
    Contract,
    Eoa,
}

/// Incremental account classifier; feed it every record, then `finish`.
#[derive(Debug, Default)]
pub struct Classifier {
    // true = behavioural contract evidence
    seen: HashMap<AccountId, bool>,
    declared: HashMap<AccountId, Declared>,
}

impl Classifier {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, rec: &TransactionRecord) {
        let (sender_contract, receiver_contract) = match rec.kind {
            TxKind::Transfer => (false, false),
            TxKind::Create | TxKind::Call => (false, true),
            TxKind::Suicide => (true, false),
        };
        self.mark(&rec.sender, sender_contract);
        self.mark(&rec.receiver, receiver_contract);
    }

    fn mark(&mut self, id: &AccountId, contract: bool) {
        match self.seen.get_mut(id) {
            Some(flag) => *flag |= contract,
            None => {
                self.seen.insert(id.clone(), contract);
            }
        }
    }

    pub fn declare(&mut self, id: AccountId, kind: Declared) {
        self.declared.insert(id, kind);
    }

    /// Adds an account that may never appear in records (e.g. a credited
    /// genesis address); classified as EOA unless other evidence exists.
    pub fn add_known_account(&mut self, id: &AccountId) {
        self.mark(id, false);
    }

    pub fn finish(self) -> Classification {
        let Classifier { mut seen, declared } = self;
        let mut warnings = Vec::new();
        for (id, decl) in &declared {
            let evidence = seen.get(id).copied().unwrap_or(false);
            if *decl == Declared::Eoa && evidence {
                warnings.push(ClassificationWarning::ConflictingEvidence { account: id.clone() });
            }
            let contract = evidence || *decl == Declared::Contract;
            seen.insert(id.clone(), contract);
        }
        warnings.sort_by(|a, b| match (a, b) {
            (
                ClassificationWarning::ConflictingEvidence { account: x },
                ClassificationWarning::ConflictingEvidence { account: y },
            ) => x.cmp(y),
        });
        let mut entries: Vec<(AccountId, bool)> = seen.into_iter().collect();
        entries.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        let n = entries.len();
        let mut ids = Vec::with_capacity(n);
        let mut kinds = Vec::with_capacity(n);
        for (id, contract) in entries {
            ids.push(id);
            kinds.push(if contract {
                AccountKind::Contract
            } else {
                AccountKind::Eoa
            });
        }
        Classification {
            registry: AccountRegistry {
                ids,
                kinds,
                labels: vec![Label::Ordinary; n],
            },
            warnings,
        }
    }
}

/// Contract if the account is created, called, or self-destructs anywhere in
/// the stream, or is declared a contract; EOA otherwise. Behaviour overrides
/// an EOA declaration and produces a warning.
pub fn classify_accounts<'a>(
    records: impl IntoIterator<Item = &'a TransactionRecord>,
    declared: &[(AccountId, Declared)],
) -> Classification {
    let mut c = Classifier::new();
    for rec in records {
        c.observe(rec);
    }
    for (id, kind) in declared {
        c.declare(id.clone(), *kind);
    }
    c.finish()
}

/// Contract declaration file: one address per line, optionally followed by
/// `,contract` or `,eoa`. Blank lines and `#` comments are skipped.
pub fn parse_declared<R: Read>(source: R) -> Result<Vec<(AccountId, Declared)>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(source).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.eq_ignore_ascii_case("address") {
            continue;
        }
        let lineno = i as u64 + 1;
        let mut parts = line.split(',').map(str::trim);
        let addr = parts.next().unwrap_or_default();
        let id = AccountId::parse(addr).map_err(|e| IngestError::SchemaViolation {
            line: lineno,
            reason: e.to_string(),
        })?;
        let kind = match parts.next().map(|s| s.to_ascii_lowercase()) {
            None => Declared::Contract,
            Some(k) if k == "contract" => Declared::Contract,
            Some(k) if k == "eoa" => Declared::Eoa,
            Some(k) => {
                return Err(IngestError::SchemaViolation {
                    line: lineno,
                    reason: format!("unknown account kind {k:?}"),
                })
            }
        };
        out.push((id, kind));
    }
    Ok(out)
}

fn headerless_csv<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(source)
}

fn row_line(row: &csv::StringRecord) -> u64 {
    row.position().map(|p| p.line()).unwrap_or(0)
}

/// Two-column `address,label` CSV; an `address,label` header is optional.
pub fn parse_labels<R: Read>(source: R) -> Result<LabelMap, IngestError> {
    let mut map = LabelMap::new();
    for row in headerless_csv(source).records() {
        let row = row?;
        let line = row_line(&row);
        let (addr, name) = match (row.get(0), row.get(1)) {
            (Some(a), Some(l)) => (a, l),
            _ => {
                return Err(IngestError::SchemaViolation {
                    line,
                    reason: "expected address,label".into(),
                })
            }
        };
        if line == 1 && addr.eq_ignore_ascii_case("address") {
            continue;
        }
        let id = AccountId::parse(addr).map_err(|e| IngestError::SchemaViolation {
            line,
            reason: e.to_string(),
        })?;
        let label: Label = name.parse().map_err(|_| IngestError::UnknownLabelName {
            line,
            name: name.to_string(),
        })?;
        if let Some(prev) = map.insert(id.clone(), label) {
            if prev != label {
                return Err(IngestError::DuplicateLabel {
                    address: id,
                    first: prev,
                    second: label,
                });
            }
        }
    }
    Ok(map)
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelMap, IngestError> {
    parse_labels(File::open(path)?)
}

/// Accepts `YYYY-MM-DD`, RFC 3339 date-times, or integer epoch seconds.
pub fn parse_date(raw: &str) -> Option<Timestamp> {
    let raw = raw.trim();
    if let Ok(ts) = raw.parse::<Timestamp>() {
        return Some(ts);
    }
    if let Ok(d) = NaiveDate::parse_from_str(raw, "%Y-%m-%d") {
        return Some(d.and_hms_opt(0, 0, 0)?.and_utc().timestamp());
    }
    chrono::DateTime::parse_from_rfc3339(raw)
        .ok()
        .map(|d| d.timestamp())
}

/// Two-column `date,price` CSV with strictly increasing dates.
pub fn parse_price_series<R: Read>(source: R) -> Result<PriceSeries, IngestError> {
    let mut points = Vec::new();
    for row in headerless_csv(source).records() {
        let row = row?;
        let line = row_line(&row);
        let (date, price) = match (row.get(0), row.get(1)) {
            (Some(d), Some(p)) => (d, p),
            _ => {
                return Err(IngestError::SchemaViolation {
                    line,
                    reason: "expected date,price".into(),
                })
            }
        };
        if line == 1 && date.eq_ignore_ascii_case("date") {
            continue;
        }
        let ts = parse_date(date).ok_or_else(|| IngestError::SchemaViolation {
            line,
            reason: format!("bad date {date:?}"),
        })?;
        let price: f64 = price.parse().map_err(|_| IngestError::SchemaViolation {
            line,
            reason: format!("bad price {price:?}"),
        })?;
        points.push((ts, price));
    }
    Ok(PriceSeries::new(points)?)
}

pub fn load_price_series(path: impl AsRef<Path>) -> Result<PriceSeries, IngestError> {
    parse_price_series(File::open(path)?)
}

/// External balance credit (block reward, genesis allocation).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreditRecord {
    pub block_id: u64,
    pub address: AccountId,
    pub amount: Wei,
}

/// `block_id,address,amount_wei` CSV with header.
pub fn parse_credits<R: Read>(source: R) -> Result<Vec<CreditRecord>, IngestError> {
    let mut out = Vec::new();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    for row in reader.records() {
        let row = row?;
        let line = row_line(&row);
        let bad = |reason: String| IngestError::SchemaViolation { line, reason };
        let block_id = row
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad block_id".into()))?;
        let address = AccountId::parse(row.get(1).unwrap_or_default()).map_err(|e| bad(e.to_string()))?;
        let amount = parse_value(row.get(2).unwrap_or_default()).map_err(bad)?;
        out.push(CreditRecord {
            block_id,
            address,
            amount,
        });
    }
    Ok(out)
}

pub fn write_credits_csv<'a, W: Write>(
    out: W,
    credits: impl IntoIterator<Item = &'a CreditRecord>,
) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["block_id", "address", "amount_wei"])?;
    for c in credits {
        w.write_record([
            c.block_id.to_string().as_str(),
            c.address.as_str(),
            &c.amount.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
