//! Compact in-memory view of a classified record stream.
//!
//! Accounts are interned to dense `u32` indices into an [`AccountRegistry`];
//! records are kept sorted by time so a window is a contiguous slice.

use std::borrow::Cow;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use crate::ingest::{
    parse_transactions, AccountRegistry, ClassificationWarning, Classifier, CreditRecord, Declared, Format,
    IngestError, IngestOptions, IngestStats,
};
use crate::types::{AccountId, Timestamp, TransactionRecord, TxKind, Wei};

/// Interned transaction. `seq` is the position in the source stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Record {
    pub value: Wei,
    pub block_id: u64,
    pub timestamp: Timestamp,
    pub sender: u32,
    pub receiver: u32,
    pub seq: u32,
    pub kind: TxKind,
    pub internal: bool,
}

impl Record {
    #[inline]
    pub fn is_self_loop(&self) -> bool {
        self.sender == self.receiver
    }
}

/// Credit resolved against a registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Credit {
    pub block_id: u64,
    pub account: u32,
    pub amount: Wei,
}

#[derive(Debug, thiserror::Error)]
#[error("credit for {0} references an account missing from the registry")]
pub struct UnknownCreditAccount(pub AccountId);

pub fn resolve_credits(
    credits: &[CreditRecord],
    registry: &AccountRegistry,
) -> Result<Vec<Credit>, UnknownCreditAccount> {
    credits
        .iter()
        .map(|c| {
            registry
                .index_of(&c.address)
                .map(|account| Credit {
                    block_id: c.block_id,
                    account,
                    amount: c.amount,
                })
                .ok_or_else(|| UnknownCreditAccount(c.address.clone()))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Dataset {
    registry: AccountRegistry,
    records: Vec<Record>,
    first_seen: Vec<Option<Timestamp>>,
    stats: IngestStats,
    warnings: Vec<ClassificationWarning>,
}

/// Extra inputs that shape classification.
#[derive(Debug, Clone, Default)]
pub struct DatasetInputs<'a> {
    pub declared: &'a [(AccountId, Declared)],
    /// Accounts that must exist in the registry even without records.
    pub known: &'a [AccountId],
}

impl Dataset {
    /// Builds from records already in memory.
    pub fn from_records<'a, I>(records: I, inputs: DatasetInputs<'_>) -> Dataset
    where
        I: IntoIterator<Item = &'a TransactionRecord>,
        I::IntoIter: Clone,
    {
        let iter = records.into_iter();
        let mut classifier = Classifier::new();
        for rec in iter.clone() {
            classifier.observe(rec);
        }
        let mut stats = IngestStats::default();
        let mut builder = Builder::new(classifier, inputs);
        for rec in iter {
            stats.records_read += 1;
            stats.records_accepted += 1;
            builder.push(rec);
        }
        builder.finish(stats)
    }

    /// Two streaming passes over a file: classify, then intern.
    pub fn load(
        path: &Path,
        format: Format,
        options: IngestOptions,
        inputs: DatasetInputs<'_>,
    ) -> Result<Dataset, IngestError> {
        Self::load_with_rejects(path, format, options, inputs, None)
    }

    /// As [`Dataset::load`], writing `line,reason` for each rejected row to
    /// `rejects` during the first pass.
    pub fn load_with_rejects(
        path: &Path,
        format: Format,
        options: IngestOptions,
        inputs: DatasetInputs<'_>,
        rejects: Option<Box<dyn Write + Send>>,
    ) -> Result<Dataset, IngestError> {
        let mut classifier = Classifier::new();
        let mut first = parse_transactions(BufReader::new(File::open(path)?), format, options)?;
        if let Some(sink) = rejects {
            first = first.with_rejects(sink);
        }
        for rec in first {
            classifier.observe(&rec?);
        }
        let mut builder = Builder::new(classifier, inputs);
        let mut reader = parse_transactions(BufReader::new(File::open(path)?), format, options)?;
        for rec in reader.by_ref() {
            builder.push(&rec?);
        }
        Ok(builder.finish(reader.into_stats()))
    }

    pub fn registry(&self) -> &AccountRegistry {
        &self.registry
    }

    pub fn registry_mut(&mut self) -> &mut AccountRegistry {
        &mut self.registry
    }

    /// Records ordered by `(timestamp, seq)`.
    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn stats(&self) -> &IngestStats {
        &self.stats
    }

    pub fn warnings(&self) -> &[ClassificationWarning] {
        &self.warnings
    }

    /// Records with `start <= timestamp < end`.
    pub fn in_range(&self, start: Timestamp, end: Timestamp) -> &[Record] {
        in_range(&self.records, start, end)
    }

    /// Global first-transaction time per account index.
    pub fn first_seen(&self) -> &[Option<Timestamp>] {
        &self.first_seen
    }

    pub fn time_span(&self) -> Option<(Timestamp, Timestamp)> {
        Some((self.records.first()?.timestamp, self.records.last()?.timestamp))
    }

    /// Records ordered by `(block_id, seq)`, as ledger replay expects.
    pub fn block_ordered(&self) -> Cow<'_, [Record]> {
        let sorted = self
            .records
            .windows(2)
            .all(|w| (w[0].block_id, w[0].seq) <= (w[1].block_id, w[1].seq));
        if sorted {
            Cow::Borrowed(&self.records)
        } else {
            let mut v = self.records.clone();
            v.sort_by_key(|r| (r.block_id, r.seq));
            Cow::Owned(v)
        }
    }
}

/// Slice of time-sorted `records` inside `[start, end)`.
pub fn in_range(records: &[Record], start: Timestamp, end: Timestamp) -> &[Record] {
    let lo = records.partition_point(|r| r.timestamp < start);
    let hi = records.partition_point(|r| r.timestamp < end);
    &records[lo..hi.max(lo)]
}

struct Builder {
    registry: AccountRegistry,
    warnings: Vec<ClassificationWarning>,
    index: HashMap<AccountId, u32>,
    records: Vec<Record>,
}

impl Builder {
    fn new(mut classifier: Classifier, inputs: DatasetInputs<'_>) -> Builder {
        for (id, kind) in inputs.declared {
            classifier.declare(id.clone(), *kind);
        }
        for id in inputs.known {
            classifier.add_known_account(id);
        }
        let c = classifier.finish();
        let index = c
            .registry
            .ids()
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as u32))
            .collect();
        Builder {
            registry: c.registry,
            warnings: c.warnings,
            index,
            records: Vec::new(),
        }
    }

    fn push(&mut self, rec: &TransactionRecord) {
        let seq = self.records.len() as u32;
        self.records.push(Record {
            value: rec.value,
            block_id: rec.block_id,
            timestamp: rec.timestamp,
            sender: self.index[&rec.sender],
            receiver: self.index[&rec.receiver],
            seq,
            kind: rec.kind,
            internal: rec.internal,
        });
    }

    fn finish(self, mut stats: IngestStats) -> Dataset {
        let Builder {
            registry,
            warnings,
            mut records,
            ..
        } = self;
        if !records.windows(2).all(|w| w[0].timestamp <= w[1].timestamp) {
            records.sort_by_key(|r| (r.timestamp, r.seq));
        }
        records.shrink_to_fit();
        let mut first_seen = vec![None; registry.len()];
        for r in &records {
            for a in [r.sender, r.receiver] {
                first_seen[a as usize].get_or_insert(r.timestamp);
            }
        }
        stats.first_timestamp = records.first().map(|r| r.timestamp);
        stats.last_timestamp = records.last().map(|r| r.timestamp);
        stats.distinct_accounts = first_seen.iter().filter(|t| t.is_some()).count() as u64;
        Dataset {
            registry,
            records,
            first_seen,
            stats,
            warnings,
        }
    }
}
