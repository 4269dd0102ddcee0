//! Temporal transaction-graph analytics for account-based ledgers.

pub mod burstiness;
pub mod contracts;
pub mod dataset;
pub mod graph;
pub mod inequality;
pub mod ingest;
pub mod metrics;
pub mod motifs;
pub mod synth;
pub mod types;

pub use dataset::{Dataset, DatasetInputs, Record};
pub use graph::{GraphKind, TxGraph};
pub use ingest::AccountRegistry;
pub use types::{AccountId, AccountKind, Label, TimeWindow, Timestamp, TransactionRecord, TxKind, Wei};
