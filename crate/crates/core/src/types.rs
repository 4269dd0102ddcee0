//! Domain types shared by every analysis module.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Amounts are carried in Wei. Ethereum-wide totals overflow 64 bits.
pub type Wei = u128;

/// Seconds since the Unix epoch, UTC.
pub type Timestamp = i64;

pub const WEI_PER_ETHER: Wei = 1_000_000_000_000_000_000;
pub const SECONDS_PER_DAY: i64 = 86_400;
pub const SECONDS_PER_HOUR: i64 = 3_600;

const ADDRESS_HEX_LEN: usize = 40;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AddressError {
    #[error("malformed address {raw:?} at position {position}: {reason}")]
    MalformedAddress {
        raw: String,
        position: usize,
        reason: &'static str,
    },
}

/// Canonical lowercase `0x`-prefixed 20-byte hex address.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AccountId(String);

impl AccountId {
    pub fn parse(raw: &str) -> Result<Self, AddressError> {
        normalize_address(raw)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Builds the id of a synthetic account from a 160-bit value.
    pub fn from_u160(hi: u32, lo: u128) -> Self {
        AccountId(format!("0x{hi:08x}{lo:032x}"))
    }
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for AccountId {
    type Err = AddressError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        normalize_address(s)
    }
}

impl TryFrom<String> for AccountId {
    type Error = AddressError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        normalize_address(&s)
    }
}

impl From<AccountId> for String {
    fn from(id: AccountId) -> String {
        id.0
    }
}

/// Folds a hex address (with or without `0x`) into its canonical form.
pub fn normalize_address(raw: &str) -> Result<AccountId, AddressError> {
    let malformed = |position, reason| AddressError::MalformedAddress {
        raw: raw.to_string(),
        position,
        reason,
    };
    let (offset, body) = match raw.get(..2) {
        Some("0x") | Some("0X") => (2, &raw[2..]),
        _ => (0, raw),
    };
    if let Some((i, _)) = body.char_indices().find(|(_, c)| !c.is_ascii_hexdigit()) {
        return Err(malformed(offset + i, "non-hex character"));
    }
    if body.len() != ADDRESS_HEX_LEN {
        return Err(malformed(
            offset + body.len().min(ADDRESS_HEX_LEN),
            "expected 40 hex digits",
        ));
    }
    let mut out = String::with_capacity(2 + ADDRESS_HEX_LEN);
    out.push_str("0x");
    out.extend(body.chars().map(|c| c.to_ascii_lowercase()));
    Ok(AccountId(out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccountKind {
    Eoa,
    Contract,
    Unknown,
}

impl AccountKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AccountKind::Eoa => "eoa",
            AccountKind::Contract => "contract",
            AccountKind::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TxKind {
    Transfer,
    Create,
    Call,
    Suicide,
}

impl TxKind {
    pub const ALL: [TxKind; 4] = [TxKind::Transfer, TxKind::Create, TxKind::Call, TxKind::Suicide];

    pub fn as_str(self) -> &'static str {
        match self {
            TxKind::Transfer => "transfer",
            TxKind::Create => "create",
            TxKind::Call => "call",
            TxKind::Suicide => "suicide",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown transaction kind {0:?}")]
pub struct UnknownTxKind(pub String);

impl FromStr for TxKind {
    type Err = UnknownTxKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "transfer" => Ok(TxKind::Transfer),
            "create" => Ok(TxKind::Create),
            "call" => Ok(TxKind::Call),
            "suicide" | "selfdestruct" => Ok(TxKind::Suicide),
            _ => Err(UnknownTxKind(s.to_string())),
        }
    }
}

/// One value movement on chain.
///
/// For `Create` the receiver is the new contract; for `Suicide` the sender is
/// the destroyed contract and the receiver is the beneficiary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionRecord {
    pub block_id: u64,
    pub tx_hash: String,
    pub sender: AccountId,
    pub receiver: AccountId,
    pub value: Wei,
    pub timestamp: Timestamp,
    pub kind: TxKind,
    pub internal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowScheme {
    Sliding,
    Incremental,
}

impl WindowScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            WindowScheme::Sliding => "sliding",
            WindowScheme::Incremental => "incremental",
        }
    }
}

/// Half-open interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeWindow {
    pub index: usize,
    pub start: Timestamp,
    pub end: Timestamp,
    pub scheme: WindowScheme,
}

impl TimeWindow {
    #[inline]
    pub fn contains(&self, ts: Timestamp) -> bool {
        self.start <= ts && ts < self.end
    }

    pub fn width(&self) -> i64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PriceError {
    #[error("price timestamps not strictly increasing at point {index}")]
    NonMonotoneTimestamps { index: usize },
    #[error("negative price {price} at point {index}")]
    NegativePrice { index: usize, price: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    points: Vec<(Timestamp, f64)>,
}

impl PriceSeries {
    pub fn new(points: Vec<(Timestamp, f64)>) -> Result<Self, PriceError> {
        for (index, &(ts, price)) in points.iter().enumerate() {
            if price.is_nan() || price < 0.0 {
                return Err(PriceError::NegativePrice { index, price });
            }
            if index > 0 && points[index - 1].0 >= ts {
                return Err(PriceError::NonMonotoneTimestamps { index });
            }
        }
        Ok(PriceSeries { points })
    }

    pub fn points(&self) -> &[(Timestamp, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Mean of the prices with timestamps in `[start, end)`.
    pub fn mean_in(&self, start: Timestamp, end: Timestamp) -> Option<f64> {
        let lo = self.points.partition_point(|p| p.0 < start);
        let hi = self.points.partition_point(|p| p.0 < end);
        if hi <= lo {
            return None;
        }
        let slice = &self.points[lo..hi];
        Some(slice.iter().map(|p| p.1).sum::<f64>() / slice.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Exchange,
    MiningPool,
    Donation,
    IcoWallet,
    Phishing,
    Ponzi,
    Ordinary,
}

impl Label {
    pub const ALL: [Label; 7] = [
        Label::Exchange,
        Label::MiningPool,
        Label::Donation,
        Label::IcoWallet,
        Label::Phishing,
        Label::Ponzi,
        Label::Ordinary,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Exchange => "exchange",
            Label::MiningPool => "mining_pool",
            Label::Donation => "donation",
            Label::IcoWallet => "ico_wallet",
            Label::Phishing => "phishing",
            Label::Ponzi => "ponzi",
            Label::Ordinary => "ordinary",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown label name {0:?}")]
pub struct UnknownLabelName(pub String);

impl FromStr for Label {
    type Err = UnknownLabelName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let folded: String = s
            .trim()
            .chars()
            .filter(|c| !matches!(c, '_' | '-' | ' '))
            .collect::<String>()
            .to_ascii_lowercase();
        match folded.as_str() {
            "exchange" => Ok(Label::Exchange),
            "miningpool" | "pool" => Ok(Label::MiningPool),
            "donation" => Ok(Label::Donation),
            "icowallet" | "ico" => Ok(Label::IcoWallet),
            "phishing" | "phish" => Ok(Label::Phishing),
            "ponzi" => Ok(Label::Ponzi),
            "ordinary" | "normal" => Ok(Label::Ordinary),
            _ => Err(UnknownLabelName(s.to_string())),
        }
    }
}

/// Address labels; anything not listed is `Ordinary`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    entries: BTreeMap<AccountId, Label>,
}

impl LabelMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the previous label if the address was already present.
    pub fn insert(&mut self, id: AccountId, label: Label) -> Option<Label> {
        self.entries.insert(id, label)
    }

    pub fn get(&self, id: &AccountId) -> Label {
        self.entries.get(id).copied().unwrap_or(Label::Ordinary)
    }

    pub fn contains(&self, id: &AccountId) -> bool {
        self.entries.contains_key(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&AccountId, Label)> {
        self.entries.iter().map(|(k, v)| (k, *v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Exact Ether amount, displayed in decimal without binary-float loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Ether(Wei);

impl Ether {
    pub fn wei(self) -> Wei {
        self.0
    }

    pub fn whole(self) -> Wei {
        self.0 / WEI_PER_ETHER
    }

    pub fn fraction_wei(self) -> Wei {
        self.0 % WEI_PER_ETHER
    }

    /// Lossy; for plotting and averaging only.
    pub fn as_f64(self) -> f64 {
        self.whole() as f64 + self.fraction_wei() as f64 / WEI_PER_ETHER as f64
    }
}

impl fmt::Display for Ether {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let frac = format!("{:018}", self.fraction_wei());
        let frac = frac.trim_end_matches('0');
        let frac = if frac.is_empty() { "0" } else { frac };
        write!(f, "{}.{}", self.whole(), frac)
    }
}

pub fn wei_to_ether(v: Wei) -> Ether {
    Ether(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    const UPPER: &str = "0xABCDEF0123456789ABCDEF0123456789ABCDEF00";
    const LOWER: &str = "0xabcdef0123456789abcdef0123456789abcdef00";

    #[test]
    fn address_case_folding() {
        assert_eq!(normalize_address(UPPER).unwrap().as_str(), LOWER);
        assert_eq!(normalize_address(LOWER).unwrap().as_str(), LOWER);
        assert_eq!(normalize_address(&LOWER[2..]).unwrap().as_str(), LOWER);
    }

    #[test]
    fn address_rejections_carry_position() {
        match normalize_address("xyz") {
            Err(AddressError::MalformedAddress { position, .. }) => assert_eq!(position, 0),
            other => panic!("unexpected {other:?}"),
        }
        match normalize_address("0xabcg") {
            Err(AddressError::MalformedAddress { position, .. }) => assert_eq!(position, 5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(normalize_address("0xabcd").is_err());
        assert!(normalize_address("").is_err());
        assert!(normalize_address(&format!("{LOWER}00")).is_err());
    }

    #[test]
    fn ether_display_is_exact() {
        assert_eq!(wei_to_ether(WEI_PER_ETHER).to_string(), "1.0");
        assert_eq!(wei_to_ether(0).to_string(), "0.0");
        assert_eq!(wei_to_ether(5 * 10u128.pow(17)).to_string(), "0.5");
        assert_eq!(wei_to_ether(1).to_string(), "0.000000000000000001");
        assert_eq!(wei_to_ether(u128::MAX).whole(), u128::MAX / WEI_PER_ETHER);
        assert_eq!(wei_to_ether(5 * 10u128.pow(17)).as_f64(), 0.5);
    }

    #[test]
    fn price_series_validation() {
        assert!(PriceSeries::new(vec![(0, 0.0), (86_400, 1.2)]).is_ok());
        assert_eq!(
            PriceSeries::new(vec![(10, 1.0), (5, 1.0)]),
            Err(PriceError::NonMonotoneTimestamps { index: 1 })
        );
        assert!(matches!(
            PriceSeries::new(vec![(10, -3.0)]),
            Err(PriceError::NegativePrice { .. })
        ));
        let s = PriceSeries::new(vec![(0, 1.0), (10, 3.0), (20, 5.0)]).unwrap();
        assert_eq!(s.mean_in(0, 11), Some(2.0));
        assert_eq!(s.mean_in(30, 40), None);
    }

    #[test]
    fn labels_default_to_ordinary() {
        let mut m = LabelMap::new();
        let a = AccountId::parse(LOWER).unwrap();
        assert_eq!(m.get(&a), Label::Ordinary);
        m.insert(a.clone(), Label::Exchange);
        assert_eq!(m.get(&a), Label::Exchange);
        assert_eq!("mining_pool".parse::<Label>().unwrap(), Label::MiningPool);
        assert!("bridge".parse::<Label>().is_err());
    }

    #[test]
    fn tx_kind_round_trip() {
        for k in TxKind::ALL {
            assert_eq!(k.as_str().parse::<TxKind>().unwrap(), k);
        }
    }
}
