//! Contract creation, invocation and self-destruct statistics.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{in_range, Record};
use crate::graph::GraphError;
use crate::ingest::AccountRegistry;
use crate::types::{AccountId, AccountKind, Label, TimeWindow, TxKind, Wei};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LifecycleStats {
    pub window: usize,
    pub created_by_eoa: u64,
    pub created_by_contract: u64,
    pub calls_by_eoa: u64,
    pub calls_by_contract: u64,
    pub distinct_called_contracts: u64,
    pub call_value_by_eoa: Wei,
    pub call_value_by_contract: Wei,
    pub suicides_to_eoa: u64,
    pub suicides_to_contract: u64,
}

impl LifecycleStats {
    /// Mean Wei per call initiated by an EOA; `None` without calls.
    pub fn avg_call_value_by_eoa(&self) -> Option<f64> {
        (self.calls_by_eoa > 0).then(|| self.call_value_by_eoa as f64 / self.calls_by_eoa as f64)
    }

    pub fn avg_call_value_by_contract(&self) -> Option<f64> {
        (self.calls_by_contract > 0)
            .then(|| self.call_value_by_contract as f64 / self.calls_by_contract as f64)
    }

    pub fn creates(&self) -> u64 {
        self.created_by_eoa + self.created_by_contract
    }

    pub fn calls(&self) -> u64 {
        self.calls_by_eoa + self.calls_by_contract
    }

    pub fn suicides(&self) -> u64 {
        self.suicides_to_eoa + self.suicides_to_contract
    }
}

fn kind_of(registry: &AccountRegistry, idx: u32) -> Result<AccountKind, GraphError> {
    match registry.kind(idx) {
        AccountKind::Unknown => Err(GraphError::UnclassifiedAccount(idx)),
        k => Ok(k),
    }
}

/// Creates and calls are split by initiator (sender) kind, suicides by
/// beneficiary (receiver) kind. `records` must be sorted by timestamp.
pub fn lifecycle_stats(
    records: &[Record],
    windows: &[TimeWindow],
    registry: &AccountRegistry,
) -> Result<Vec<LifecycleStats>, GraphError> {
    windows
        .par_iter()
        .map(|w| {
            let mut s = LifecycleStats {
                window: w.index,
                ..Default::default()
            };
            let mut called = HashSet::new();
            for r in in_range(records, w.start, w.end) {
                let by_contract = match r.kind {
                    TxKind::Transfer => continue,
                    TxKind::Create | TxKind::Call => kind_of(registry, r.sender)? == AccountKind::Contract,
                    TxKind::Suicide => kind_of(registry, r.receiver)? == AccountKind::Contract,
                };
                match (r.kind, by_contract) {
                    (TxKind::Create, false) => s.created_by_eoa += 1,
                    (TxKind::Create, true) => s.created_by_contract += 1,
                    (TxKind::Call, false) => {
                        s.calls_by_eoa += 1;
                        s.call_value_by_eoa += r.value;
                    }
                    (TxKind::Call, true) => {
                        s.calls_by_contract += 1;
                        s.call_value_by_contract += r.value;
                    }
                    (TxKind::Suicide, false) => s.suicides_to_eoa += 1,
                    (TxKind::Suicide, true) => s.suicides_to_contract += 1,
                    (TxKind::Transfer, _) => unreachable!(),
                }
                if r.kind == TxKind::Call {
                    called.insert(r.receiver);
                }
            }
            s.distinct_called_contracts = called.len() as u64;
            Ok(s)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopContract {
    pub contract: AccountId,
    pub calls: u64,
    pub label: Label,
}

/// The `k` contracts with most inbound calls; ties go to the smaller address.
pub fn top_contracts(records: &[Record], k: usize, registry: &AccountRegistry) -> Vec<TopContract> {
    let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
    for r in records.iter().filter(|r| r.kind == TxKind::Call) {
        *counts.entry(r.receiver).or_insert(0) += 1;
    }
    let mut ranked: Vec<(u32, u64)> = counts.into_iter().collect();
    // registry indices follow address order, so index order is address order
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
        .into_iter()
        .take(k)
        .map(|(idx, calls)| TopContract {
            contract: registry.id(idx).clone(),
            calls,
            label: registry.label(idx),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Dataset, DatasetInputs};
    use crate::types::{TransactionRecord, WindowScheme, WEI_PER_ETHER};

    fn addr(n: u32) -> AccountId {
        AccountId::from_u160(0, n as u128)
    }

    fn tx(s: u32, r: u32, kind: TxKind, value: Wei, t: i64) -> TransactionRecord {
        TransactionRecord {
            block_id: t as u64,
            tx_hash: format!("h{t}"),
            sender: addr(s),
            receiver: addr(r),
            value,
            timestamp: t,
            kind,
            internal: false,
        }
    }

    fn all_time() -> Vec<TimeWindow> {
        vec![TimeWindow {
            index: 0,
            start: 0,
            end: 1000,
            scheme: WindowScheme::Sliding,
        }]
    }

    fn dataset(txs: &[TransactionRecord]) -> Dataset {
        Dataset::from_records(txs.iter(), DatasetInputs::default())
    }

    #[test]
    fn single_create() {
        let ds = dataset(&[tx(1, 2, TxKind::Create, 0, 1)]);
        let s = &lifecycle_stats(ds.records(), &all_time(), ds.registry()).unwrap()[0];
        assert_eq!(s.created_by_eoa, 1);
        assert_eq!(s.created_by_contract + s.calls() + s.suicides(), 0);
    }

    #[test]
    fn contract_calls_average() {
        let two = 2 * WEI_PER_ETHER;
        let ds = dataset(&[
            tx(1, 2, TxKind::Create, 0, 1),
            tx(1, 3, TxKind::Create, 0, 2),
            tx(2, 3, TxKind::Call, two, 3),
            tx(2, 3, TxKind::Call, two, 4),
        ]);
        let s = &lifecycle_stats(ds.records(), &all_time(), ds.registry()).unwrap()[0];
        assert_eq!(s.calls_by_contract, 2);
        assert_eq!(s.avg_call_value_by_contract(), Some(2e18));
        assert_eq!(s.avg_call_value_by_eoa(), None);
        assert_eq!(s.distinct_called_contracts, 1);
    }

    #[test]
    fn self_call_and_suicides() {
        let ds = dataset(&[
            tx(1, 2, TxKind::Create, 0, 1),
            tx(2, 2, TxKind::Call, 0, 2),
            tx(2, 1, TxKind::Suicide, 0, 3),
        ]);
        let s = &lifecycle_stats(ds.records(), &all_time(), ds.registry()).unwrap()[0];
        assert_eq!(s.calls_by_contract, 1);
        assert_eq!(s.suicides_to_eoa, 1);
    }

    #[test]
    fn top_k_with_ties() {
        let mut txs = Vec::new();
        let mut t = 0;
        for (callee, n) in [(5u32, 3), (4, 3), (6, 1), (7, 5)] {
            for _ in 0..n {
                t += 1;
                txs.push(tx(1, callee, TxKind::Call, 0, t));
            }
        }
        let ds = dataset(&txs);
        let top = top_contracts(ds.records(), 3, ds.registry());
        let got: Vec<(AccountId, u64)> = top.iter().map(|c| (c.contract.clone(), c.calls)).collect();
        assert_eq!(got, vec![(addr(7), 5), (addr(4), 3), (addr(5), 3)]);
        assert_eq!(top_contracts(ds.records(), 10, ds.registry()).len(), 4);
    }
}
