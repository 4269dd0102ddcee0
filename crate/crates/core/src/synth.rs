//! Deterministic synthetic transaction streams with planted ground truth.
//!
//! Accounts arrive over time through an introductory record (a transfer for
//! EOAs, a create for contracts). Background traffic picks endpoints by a
//! mixture of uniform and preferential attachment. Planted accounts carry
//! their own inter-event process and never appear in background traffic.
//! External credits cover every deficit so strict ledger replay succeeds.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::GraphKind;
use crate::ingest::{record_to_json_line, write_credits_csv, CreditRecord, Format, IngestError, TxCsvWriter};
use crate::types::{
    AccountId, AccountKind, Label, Timestamp, TransactionRecord, TxKind, Wei, SECONDS_PER_DAY, WEI_PER_ETHER,
};

/// 2015-07-30T00:00:00Z.
pub const DEFAULT_START: Timestamp = 1_438_214_400;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("infeasible config: {0}")]
    InfeasibleConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalModel {
    Uniform,
    /// Uniform days, hours weighted by a daily cycle peaking mid-afternoon UTC.
    Diurnal,
    /// Slow start, outbreak, then a cooler tail.
    ThreeStage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum InterEventModel {
    /// Constant gaps (B = -1).
    Regular,
    /// Poisson process (B near 0).
    Exponential,
    /// Log-normal gaps whose coefficient of variation gives `b_target`.
    HeavyTailed { b_target: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedClass {
    pub label: Label,
    pub accounts: usize,
    /// Transactions per account, the introductory one included.
    pub events: usize,
    pub model: InterEventModel,
}

/// Missing fields take their default values when deserialised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_accounts: usize,
    /// Total records emitted.
    pub n_transactions: usize,
    pub contract_fraction: f64,
    pub duration_days: u32,
    pub start: Timestamp,
    pub arrival: ArrivalModel,
    /// Probability that an endpoint is drawn preferentially (proportional to
    /// past activity) rather than uniformly among arrived accounts.
    pub attachment: f64,
    pub zero_value_fraction: f64,
    /// Non-zero values are log-normal in Ether with these parameters.
    pub value_log_mean: f64,
    pub value_log_sigma: f64,
    /// Fraction of contracts that self-destruct after their last activity.
    pub suicide_fraction: f64,
    /// Probability that a self-destruct pays a contract rather than an EOA.
    pub suicide_to_contract: f64,
    pub planted: Vec<PlantedClass>,
    pub block_seconds: i64,
    pub checkpoint_blocks: u64,
    /// Width of the disjoint windows the ground-truth tallies use.
    pub tally_window_days: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 42,
            n_accounts: 1_000,
            n_transactions: 10_000,
            contract_fraction: 0.1,
            duration_days: 360,
            start: DEFAULT_START,
            arrival: ArrivalModel::Uniform,
            attachment: 0.8,
            zero_value_fraction: 0.1,
            value_log_mean: -1.0,
            value_log_sigma: 2.0,
            suicide_fraction: 0.05,
            suicide_to_contract: 0.05,
            planted: Vec::new(),
            block_seconds: 15,
            checkpoint_blocks: 200_000,
            tally_window_days: 30,
        }
    }
}

impl SynthConfig {
    /// 5000 accounts, 100k records, and one planted class per inter-event
    /// model.
    pub fn demo() -> Self {
        SynthConfig {
            planted: vec![
                PlantedClass {
                    label: Label::Exchange,
                    accounts: 20,
                    events: 200,
                    model: InterEventModel::Regular,
                },
                PlantedClass {
                    label: Label::MiningPool,
                    accounts: 20,
                    events: 200,
                    model: InterEventModel::Exponential,
                },
                PlantedClass {
                    label: Label::Ponzi,
                    accounts: 20,
                    events: 200,
                    model: InterEventModel::HeavyTailed { b_target: 0.5 },
                },
            ],
            n_accounts: 5_000,
            n_transactions: 100_000,
            ..SynthConfig::default()
        }
    }

    fn planted_accounts(&self) -> usize {
        self.planted.iter().map(|p| p.accounts).sum()
    }

    fn duration_secs(&self) -> i64 {
        self.duration_days as i64 * SECONDS_PER_DAY
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InfeasibleConfig(m));
        for (name, v) in [
            ("contract_fraction", self.contract_fraction),
            ("attachment", self.attachment),
            ("zero_value_fraction", self.zero_value_fraction),
            ("suicide_fraction", self.suicide_fraction),
            ("suicide_to_contract", self.suicide_to_contract),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} outside [0, 1]"));
            }
        }
        if self.duration_days == 0 || self.tally_window_days == 0 {
            return bad("durations must be positive".into());
        }
        if self.block_seconds <= 0 || self.checkpoint_blocks == 0 {
            return bad("block_seconds and checkpoint_blocks must be positive".into());
        }
        if self.value_log_sigma.is_nan() || self.value_log_sigma < 0.0 || !self.value_log_mean.is_finite() {
            return bad("bad value distribution".into());
        }
        if self.n_accounts < self.planted_accounts() + 2 {
            return bad(format!(
                "{} accounts cannot hold two background accounts and {} planted ones",
                self.n_accounts,
                self.planted_accounts()
            ));
        }
        if self.n_accounts > u32::MAX as usize {
            return bad("too many accounts".into());
        }
        for p in &self.planted {
            if p.events < 2 {
                return bad(format!(
                    "planted class {} needs at least two events",
                    p.label.as_str()
                ));
            }
            if let InterEventModel::HeavyTailed { b_target } = p.model {
                if !(b_target > -1.0 && b_target < 1.0) {
                    return bad(format!("burstiness target {b_target} outside (-1, 1)"));
                }
            }
            if p.model == InterEventModel::Regular {
                let span = self.planted_span(self.start + self.duration_secs() / 20);
                if span / (p.events as i64 - 1) < 1 {
                    return bad(format!("{} regular events do not fit", p.events));
                }
            }
        }
        let fixed = self.n_accounts - 1 + self.planted_events();
        if self.n_transactions < fixed {
            return bad(format!(
                "{} transactions cannot cover {fixed} introductory and planted records",
                self.n_transactions
            ));
        }
        Ok(())
    }

    fn planted_events(&self) -> usize {
        self.planted.iter().map(|p| p.accounts * (p.events - 1)).sum()
    }

    /// Time available to a planted stream starting at `arrival`.
    fn planted_span(&self, arrival: Timestamp) -> i64 {
        (self.start + self.duration_secs() - 1 - arrival) * 9 / 10
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct GenRecord {
    t: Timestamp,
    sender: u32,
    receiver: u32,
    kind: TxKind,
    value: Wei,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountTruth {
    pub address: AccountId,
    pub arrival: Timestamp,
    pub kind: AccountKind,
    pub class: Label,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<InterEventModel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GraphTally {
    pub nodes: u64,
    pub edges: u64,
    pub transactions: u64,
    pub new_nodes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LifecycleTally {
    pub created_by_eoa: u64,
    pub created_by_contract: u64,
    pub calls_by_eoa: u64,
    pub calls_by_contract: u64,
    pub suicides_to_eoa: u64,
    pub suicides_to_contract: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowTruth {
    pub index: usize,
    pub start: Timestamp,
    pub end: Timestamp,
    pub graphs: BTreeMap<GraphKind, GraphTally>,
    pub lifecycle: LifecycleTally,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointTruth {
    pub block: u64,
    #[serde(with = "wei_string")]
    pub total_wei: Wei,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SynthConfig,
    pub n_records: usize,
    pub window_seconds: i64,
    pub accounts: Vec<AccountTruth>,
    pub windows: Vec<WindowTruth>,
    #[serde(with = "wei_map")]
    pub final_balances: BTreeMap<AccountId, Wei>,
    pub checkpoints: Vec<CheckpointTruth>,
    #[serde(with = "wei_string")]
    pub total_credited: Wei,
}

impl GroundTruth {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SynthError> {
        Ok(serde_json::from_reader(std::io::BufReader::new(File::open(
            path,
        )?))?)
    }
}

mod wei_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u128, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u128, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

mod wei_map {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::types::AccountId;

    pub fn serialize<S: Serializer>(m: &BTreeMap<AccountId, u128>, s: S) -> Result<S::Ok, S::Error> {
        m.iter()
            .map(|(k, v)| (k.as_str(), v.to_string()))
            .collect::<BTreeMap<_, _>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<AccountId, u128>, D::Error> {
        BTreeMap::<AccountId, String>::deserialize(d)?
            .into_iter()
            .map(|(k, v)| v.parse().map(|v| (k, v)).map_err(serde::de::Error::custom))
            .collect()
    }
}

/// Generated stream plus everything needed to write it out.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    addresses: Vec<AccountId>,
    kinds: Vec<AccountKind>,
    records: Vec<GenRecord>,
    pub credits: Vec<CreditRecord>,
    pub prices: Vec<(Timestamp, f64)>,
    pub truth: GroundTruth,
}

/// Paths written by [`SynthOutput::write_to_dir`].
#[derive(Debug, Clone)]
pub struct SynthFiles {
    pub transactions: PathBuf,
    pub ground_truth: PathBuf,
    pub credits: PathBuf,
    pub labels: PathBuf,
    pub prices: PathBuf,
}

impl SynthOutput {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn to_record(&self, i: usize) -> TransactionRecord {
        let r = &self.records[i];
        let cfg = &self.truth.config;
        TransactionRecord {
            block_id: ((r.t - cfg.start) / cfg.block_seconds) as u64,
            tx_hash: format!("0x{i:064x}"),
            sender: self.addresses[r.sender as usize].clone(),
            receiver: self.addresses[r.receiver as usize].clone(),
            value: r.value,
            timestamp: r.t,
            kind: r.kind,
            internal: self.kinds[r.sender as usize] == AccountKind::Contract,
        }
    }

    /// Records in emission order, materialised one at a time.
    pub fn transactions(&self) -> impl Iterator<Item = TransactionRecord> + '_ {
        (0..self.records.len()).map(|i| self.to_record(i))
    }

    pub fn write_transactions<W: Write>(&self, out: W, format: Format) -> Result<(), SynthError> {
        match format {
            Format::Csv => {
                let mut w = TxCsvWriter::new(out)?;
                for rec in self.transactions() {
                    w.write(&rec)?;
                }
                w.finish()?;
            }
            Format::Jsonl => {
                let mut out = out;
                for rec in self.transactions() {
                    writeln!(out, "{}", record_to_json_line(&rec))?;
                }
                out.flush()?;
            }
        }
        Ok(())
    }

    pub fn write_labels<W: Write>(&self, out: W) -> Result<(), SynthError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["address", "label"]).map_err(IngestError::from)?;
        let labelled: BTreeMap<&AccountId, Label> = self
            .truth
            .accounts
            .iter()
            .filter(|a| a.class != Label::Ordinary)
            .map(|a| (&a.address, a.class))
            .collect();
        for (addr, label) in labelled {
            w.write_record([addr.as_str(), label.as_str()])
                .map_err(IngestError::from)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_prices<W: Write>(&self, mut out: W) -> Result<(), SynthError> {
        writeln!(out, "date,price")?;
        for (t, p) in &self.prices {
            let date = chrono::DateTime::from_timestamp(*t, 0)
                .expect("timestamp in range")
                .format("%Y-%m-%d");
            writeln!(out, "{date},{p:.6}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_ground_truth<W: Write>(&self, out: W) -> Result<(), SynthError> {
        let mut out = out;
        serde_json::to_writer_pretty(&mut out, &self.truth)?;
        writeln!(out)?;
        out.flush()?;
        Ok(())
    }

    /// Writes `transactions.{csv,jsonl}`, `ground_truth.json`, `credits.csv`,
    /// `labels.csv` and `prices.csv`.
    pub fn write_to_dir(&self, dir: &Path, format: Format) -> Result<SynthFiles, SynthError> {
        std::fs::create_dir_all(dir)?;
        let ext = match format {
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        };
        let files = SynthFiles {
            transactions: dir.join(format!("transactions.{ext}")),
            ground_truth: dir.join("ground_truth.json"),
            credits: dir.join("credits.csv"),
            labels: dir.join("labels.csv"),
            prices: dir.join("prices.csv"),
        };
        let create = |p: &Path| File::create(p).map(BufWriter::new);
        self.write_transactions(create(&files.transactions)?, format)?;
        self.write_ground_truth(create(&files.ground_truth)?)?;
        let mut credits = create(&files.credits)?;
        write_credits_csv(&mut credits, &self.credits)?;
        credits.flush()?;
        self.write_labels(create(&files.labels)?)?;
        self.write_prices(create(&files.prices)?)?;
        Ok(files)
    }
}

struct TimeSampler {
    model: ArrivalModel,
    t0: Timestamp,
    days: i64,
    hours: WeightedIndex<f64>,
    stages: WeightedIndex<f64>,
}

// (fraction of the duration, relative intensity)
const STAGES: [(f64, f64); 3] = [(0.25, 1.0), (0.35, 6.0), (0.40, 2.0)];

impl TimeSampler {
    fn new(model: ArrivalModel, t0: Timestamp, days: u32) -> Self {
        let hours = (0..24)
            .map(|h| 1.0 + 0.6 * (2.0 * std::f64::consts::PI * (h as f64 - 15.0) / 24.0).cos())
            .collect::<Vec<_>>();
        TimeSampler {
            model,
            t0,
            days: days as i64,
            hours: WeightedIndex::new(hours).expect("positive weights"),
            stages: WeightedIndex::new(STAGES.map(|(len, w)| len * w)).expect("positive weights"),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Timestamp {
        let dur = self.days * SECONDS_PER_DAY;
        let offset = match self.model {
            ArrivalModel::Uniform => rng.random_range(0..dur),
            ArrivalModel::Diurnal => {
                let day = rng.random_range(0..self.days);
                let hour = self.hours.sample(rng) as i64;
                day * SECONDS_PER_DAY + hour * 3600 + rng.random_range(0..3600)
            }
            ArrivalModel::ThreeStage => {
                let stage = self.stages.sample(rng);
                let lo: f64 = STAGES[..stage].iter().map(|s| s.0).sum();
                let hi = lo + STAGES[stage].0;
                let a = (lo * dur as f64) as i64;
                let b = ((hi * dur as f64) as i64).clamp(a + 1, dur);
                rng.random_range(a..b)
            }
        };
        self.t0 + offset
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct ValueSampler {
    zero: f64,
    dist: LogNormal<f64>,
}

impl ValueSampler {
    fn sample(&self, rng: &mut ChaCha8Rng) -> Wei {
        if rng.random::<f64>() < self.zero {
            return 0;
        }
        let ether = self.dist.sample(rng).min(1e9);
        (ether * WEI_PER_ETHER as f64).round() as Wei
    }
}

/// Endpoint picker over the arrived prefix of background accounts.
struct Picker {
    attachment: f64,
    urn: Vec<u32>,
}

impl Picker {
    fn pick(&self, rng: &mut ChaCha8Rng, arrived: usize) -> u32 {
        if !self.urn.is_empty() && rng.random::<f64>() < self.attachment {
            self.urn[rng.random_range(0..self.urn.len())]
        } else {
            rng.random_range(0..arrived) as u32
        }
    }
}

fn interaction_kind(sender: AccountKind, receiver: AccountKind) -> TxKind {
    match (sender, receiver) {
        (_, AccountKind::Contract) => TxKind::Call,
        _ => TxKind::Transfer,
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput, SynthError> {
    cfg.validate()?;
    let t0 = cfg.start;
    let end = t0 + cfg.duration_secs();
    let n = cfg.n_accounts;
    let nb = n - cfg.planted_accounts();

    let mut acct_rng = rng_for(cfg.seed, 0);
    let mut rec_rng = rng_for(cfg.seed, 1);
    let mut plant_rng = rng_for(cfg.seed, 2);
    let mut price_rng = rng_for(cfg.seed, 3);
    let times = TimeSampler::new(cfg.arrival, t0, cfg.duration_days);
    let values = ValueSampler {
        zero: cfg.zero_value_fraction,
        dist: LogNormal::new(cfg.value_log_mean, cfg.value_log_sigma)
            .map_err(|e| SynthError::InfeasibleConfig(e.to_string()))?,
    };

    // accounts: background sorted by arrival, then planted
    let mut addresses = Vec::with_capacity(n);
    let mut seen = HashSet::with_capacity(n);
    while addresses.len() < n {
        let id = AccountId::from_u160(acct_rng.random(), acct_rng.random());
        if seen.insert(id.clone()) {
            addresses.push(id);
        }
    }
    drop(seen);
    let mut arrival: Vec<Timestamp> = vec![t0, t0];
    arrival.extend((2..nb).map(|_| times.sample(&mut acct_rng)));
    arrival[2..].sort_unstable();
    let mut kinds = vec![AccountKind::Eoa; n];
    for k in kinds.iter_mut().take(nb).skip(2) {
        if acct_rng.random::<f64>() < cfg.contract_fraction {
            *k = AccountKind::Contract;
        }
    }
    let mut class = vec![Label::Ordinary; n];
    let mut model = vec![None; n];
    {
        let mut i = nb;
        for p in &cfg.planted {
            for _ in 0..p.accounts {
                class[i] = p.label;
                model[i] = Some(p.model);
                arrival.push(t0 + acct_rng.random_range(0..(cfg.duration_secs() / 20).max(1)));
                i += 1;
            }
        }
    }
    let suicides: Vec<u32> = (2..nb as u32)
        .filter(|&c| kinds[c as usize] == AccountKind::Contract)
        .filter(|_| acct_rng.random::<f64>() < cfg.suicide_fraction)
        .collect();
    let suiciding: HashSet<u32> = suicides.iter().copied().collect();

    let n_background = cfg.n_transactions as i64
        - (nb as i64 - 1)
        - (cfg.planted_accounts() + cfg.planted_events()) as i64
        - suicides.len() as i64;
    if n_background < 0 {
        return Err(SynthError::InfeasibleConfig(format!(
            "{} transactions cannot cover the fixed records",
            cfg.n_transactions
        )));
    }
    let mut bg_times: Vec<Timestamp> = (0..n_background).map(|_| times.sample(&mut rec_rng)).collect();
    bg_times.sort_unstable();

    let mut records: Vec<GenRecord> = Vec::with_capacity(cfg.n_transactions);
    let mut picker = Picker {
        attachment: cfg.attachment,
        urn: Vec::with_capacity(2 * cfg.n_transactions),
    };
    records.push(GenRecord {
        t: t0,
        sender: 0,
        receiver: 1,
        kind: TxKind::Transfer,
        value: values.sample(&mut rec_rng),
    });
    picker.urn.extend([0, 1]);
    let mut arrived = 2usize;
    for &t in &bg_times {
        while arrived < nb && arrival[arrived] <= t {
            let new = arrived as u32;
            let sender = picker.pick(&mut rec_rng, arrived);
            let kind = if kinds[arrived] == AccountKind::Contract {
                TxKind::Create
            } else {
                TxKind::Transfer
            };
            records.push(GenRecord {
                t: arrival[arrived],
                sender,
                receiver: new,
                kind,
                value: values.sample(&mut rec_rng),
            });
            picker.urn.extend([sender, new]);
            arrived += 1;
        }
        let sender = picker.pick(&mut rec_rng, arrived);
        let mut receiver = picker.pick(&mut rec_rng, arrived);
        while receiver == sender {
            receiver = picker.pick(&mut rec_rng, arrived);
        }
        records.push(GenRecord {
            t,
            sender,
            receiver,
            kind: interaction_kind(kinds[sender as usize], kinds[receiver as usize]),
            value: values.sample(&mut rec_rng),
        });
        picker.urn.extend([sender, receiver]);
    }
    while arrived < nb {
        let sender = picker.pick(&mut rec_rng, arrived);
        let kind = if kinds[arrived] == AccountKind::Contract {
            TxKind::Create
        } else {
            TxKind::Transfer
        };
        records.push(GenRecord {
            t: arrival[arrived],
            sender,
            receiver: arrived as u32,
            kind,
            value: values.sample(&mut rec_rng),
        });
        picker.urn.extend([sender, arrived as u32]);
        arrived += 1;
    }
    drop(picker);

    // planted streams
    let background_arrival = &arrival[..nb];
    let arrived_by = |t: Timestamp| background_arrival.partition_point(|&a| a <= t);
    for p in nb..n {
        let ap = arrival[p];
        let m = model[p].expect("planted account has a model");
        let events = cfg
            .planted
            .iter()
            .scan(nb, |start, c| {
                let r = (*start..*start + c.accounts, c.events);
                *start += c.accounts;
                Some(r)
            })
            .find(|(range, _)| range.contains(&p))
            .map(|(_, e)| e)
            .expect("planted account belongs to a class");
        let schedule = planted_schedule(&mut plant_rng, m, ap, cfg.planted_span(ap), events);
        for (k, &t) in schedule.iter().enumerate() {
            let other = plant_rng.random_range(0..arrived_by(t)) as u32;
            let outgoing = k > 0 && plant_rng.random_bool(0.5);
            let (sender, receiver) = if outgoing {
                (p as u32, other)
            } else {
                (other, p as u32)
            };
            records.push(GenRecord {
                t,
                sender,
                receiver,
                kind: interaction_kind(kinds[sender as usize], kinds[receiver as usize]),
                value: values.sample(&mut plant_rng),
            });
        }
    }

    // self-destructs after each chosen contract's last activity
    let mut last_active = vec![t0; n];
    for r in &records {
        for a in [r.sender, r.receiver] {
            last_active[a as usize] = last_active[a as usize].max(r.t);
        }
    }
    for &c in &suicides {
        let t = rec_rng.random_range(last_active[c as usize]..end);
        let want = if rec_rng.random::<f64>() < cfg.suicide_to_contract {
            AccountKind::Contract
        } else {
            AccountKind::Eoa
        };
        let pool = arrived_by(t);
        let beneficiary = (0..64)
            .map(|_| rec_rng.random_range(0..pool) as u32)
            .find(|&b| b != c && kinds[b as usize] == want && !suiciding.contains(&b))
            .unwrap_or(0);
        records.push(GenRecord {
            t,
            sender: c,
            receiver: beneficiary,
            kind: TxKind::Suicide,
            value: 0,
        });
    }

    // stable: ties keep generation order, which respects causality
    records.sort_by_key(|r| r.t);

    // ledger pass: suicides drain the contract, credits cover deficits
    let block_of = |t: Timestamp| ((t - t0) / cfg.block_seconds) as u64;
    let mut balances = vec![0u128; n];
    let mut credit_map: BTreeMap<(u64, u32), Wei> = BTreeMap::new();
    for r in records.iter_mut() {
        let s = r.sender as usize;
        if r.kind == TxKind::Suicide {
            r.value = balances[s];
        }
        if balances[s] < r.value {
            let deficit = r.value - balances[s];
            *credit_map.entry((block_of(r.t), r.sender)).or_insert(0) += deficit;
            balances[s] += deficit;
        }
        balances[s] -= r.value;
        balances[r.receiver as usize] += r.value;
    }
    let mut credits: Vec<CreditRecord> = credit_map
        .into_iter()
        .map(|((block_id, a), amount)| CreditRecord {
            block_id,
            address: addresses[a as usize].clone(),
            amount,
        })
        .collect();
    credits.sort_by(|a, b| (a.block_id, &a.address).cmp(&(b.block_id, &b.address)));
    let total_credited: Wei = credits.iter().map(|c| c.amount).sum();

    let last_block = records.last().map_or(0, |r| block_of(r.t));
    let mut checkpoint_blocks: Vec<u64> = (1..)
        .map(|k| k * cfg.checkpoint_blocks)
        .take_while(|&h| h <= last_block)
        .collect();
    if checkpoint_blocks.last() != Some(&last_block) {
        checkpoint_blocks.push(last_block);
    }
    let checkpoints = checkpoint_blocks
        .into_iter()
        .map(|block| CheckpointTruth {
            block,
            total_wei: credits
                .iter()
                .filter(|c| c.block_id <= block)
                .map(|c| c.amount)
                .sum(),
        })
        .collect();

    let windows = tally_windows(cfg, &records, &kinds, &arrival);

    let mut prices = Vec::with_capacity(cfg.duration_days as usize);
    let step = Normal::<f64>::new(0.0, 0.05).expect("valid normal");
    let mut price = 1.0f64;
    for d in 0..cfg.duration_days as i64 {
        prices.push((t0 + d * SECONDS_PER_DAY, price));
        price *= step.sample(&mut price_rng).exp();
    }

    let accounts = (0..n)
        .map(|i| AccountTruth {
            address: addresses[i].clone(),
            arrival: arrival[i],
            kind: kinds[i],
            class: class[i],
            model: model[i],
        })
        .collect();
    let final_balances = (0..n).map(|i| (addresses[i].clone(), balances[i])).collect();

    Ok(SynthOutput {
        truth: GroundTruth {
            config: cfg.clone(),
            n_records: records.len(),
            window_seconds: cfg.tally_window_days as i64 * SECONDS_PER_DAY,
            accounts,
            windows,
            final_balances,
            checkpoints,
            total_credited,
        },
        addresses,
        kinds,
        records,
        credits,
        prices,
    })
}

/// Event times for one planted account; the first is its arrival.
fn planted_schedule(
    rng: &mut ChaCha8Rng,
    model: InterEventModel,
    arrival: Timestamp,
    span: i64,
    events: usize,
) -> Vec<Timestamp> {
    let gaps = events - 1;
    let draws: Vec<f64> = match model {
        InterEventModel::Regular => {
            let step = span / gaps as i64;
            return (0..events as i64).map(|k| arrival + k * step).collect();
        }
        InterEventModel::Exponential => (0..gaps).map(|_| rng.sample::<f64, _>(Exp1)).collect(),
        InterEventModel::HeavyTailed { b_target } => {
            let cv = (1.0 + b_target) / (1.0 - b_target);
            let sigma = (1.0 + cv * cv).ln().sqrt();
            let d = LogNormal::new(0.0, sigma).expect("finite sigma");
            (0..gaps).map(|_| d.sample(rng)).collect()
        }
    };
    let scale = span as f64 / draws.iter().sum::<f64>();
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(events);
    out.push(arrival);
    for g in draws {
        acc += g;
        out.push(arrival + ((acc * scale).floor() as i64).min(span));
    }
    out
}

fn graph_of(kind: TxKind, s: AccountKind, r: AccountKind) -> Option<GraphKind> {
    match (s == AccountKind::Contract, r == AccountKind::Contract) {
        (false, false) => (kind == TxKind::Transfer).then_some(GraphKind::Uug),
        (true, true) => (kind != TxKind::Suicide).then_some(GraphKind::Ccg),
        _ => Some(GraphKind::Ucg),
    }
}

fn tally_windows(
    cfg: &SynthConfig,
    records: &[GenRecord],
    kinds: &[AccountKind],
    arrival: &[Timestamp],
) -> Vec<WindowTruth> {
    let width = cfg.tally_window_days as i64 * SECONDS_PER_DAY;
    let total = cfg.duration_secs();
    let n_windows = ((total + width - 1) / width) as usize;
    let mut nodes: Vec<BTreeMap<GraphKind, HashSet<u32>>> = vec![BTreeMap::new(); n_windows];
    let mut edges: Vec<BTreeMap<GraphKind, HashSet<(u32, u32)>>> = vec![BTreeMap::new(); n_windows];
    let mut out: Vec<WindowTruth> = (0..n_windows)
        .map(|k| WindowTruth {
            index: k,
            start: cfg.start + k as i64 * width,
            end: cfg.start + (k as i64 + 1) * width,
            graphs: GraphKind::ALL
                .iter()
                .map(|&g| (g, GraphTally::default()))
                .collect(),
            lifecycle: LifecycleTally::default(),
        })
        .collect();
    for r in records {
        let w = ((r.t - cfg.start) / width) as usize;
        let (sk, rk) = (kinds[r.sender as usize], kinds[r.receiver as usize]);
        if let Some(g) = graph_of(r.kind, sk, rk) {
            out[w].graphs.get_mut(&g).expect("all kinds present").transactions += 1;
            let ns = nodes[w].entry(g).or_default();
            ns.insert(r.sender);
            ns.insert(r.receiver);
            edges[w].entry(g).or_default().insert((r.sender, r.receiver));
        }
        let lc = &mut out[w].lifecycle;
        let by_contract = sk == AccountKind::Contract;
        match r.kind {
            TxKind::Create if by_contract => lc.created_by_contract += 1,
            TxKind::Create => lc.created_by_eoa += 1,
            TxKind::Call if by_contract => lc.calls_by_contract += 1,
            TxKind::Call => lc.calls_by_eoa += 1,
            TxKind::Suicide if rk == AccountKind::Contract => lc.suicides_to_contract += 1,
            TxKind::Suicide => lc.suicides_to_eoa += 1,
            TxKind::Transfer => {}
        }
    }
    for (w, win) in out.iter_mut().enumerate() {
        for (g, tally) in win.graphs.iter_mut() {
            if let Some(ns) = nodes[w].get(g) {
                tally.nodes = ns.len() as u64;
                tally.new_nodes = ns
                    .iter()
                    .filter(|&&a| (win.start..win.end).contains(&arrival[a as usize]))
                    .count() as u64;
            }
            if let Some(es) = edges[w].get(g) {
                tally.edges = es.len() as u64;
            }
        }
    }
    out
}
