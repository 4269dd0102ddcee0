//! Activity concentration per account (busy-period ratio), the hourly
//! activity profile, and the inter-event burstiness and memory coefficients.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Record;
use crate::ingest::AccountRegistry;
use crate::types::{Label, Timestamp, SECONDS_PER_DAY, SECONDS_PER_HOUR};

/// Accounts with fewer transactions are not scored.
pub const MIN_TRANSACTIONS: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BurstError {
    #[error("{found} transactions, at least {required} required")]
    TooFewTransactions { found: usize, required: usize },
    #[error("zero lifetime")]
    ZeroLifetime,
    #[error("fraction {0} outside (0, 1]")]
    BadFraction(f64),
    #[error("{found} intervals, at least {required} required")]
    TooFewIntervals { found: usize, required: usize },
    #[error("all intervals are zero")]
    AllZeroIntervals,
    #[error("zero variance in a lagged interval sequence")]
    ZeroVariance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountTimeline {
    pub account: u32,
    /// Ascending.
    pub timestamps: Vec<Timestamp>,
}

impl AccountTimeline {
    pub fn new(account: u32, mut timestamps: Vec<Timestamp>) -> Self {
        timestamps.sort_unstable();
        AccountTimeline { account, timestamps }
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn lifetime(&self) -> i64 {
        match (self.timestamps.first(), self.timestamps.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0,
        }
    }

    /// Gaps between consecutive transactions, in seconds.
    pub fn intervals(&self) -> Vec<f64> {
        self.timestamps.windows(2).map(|w| (w[1] - w[0]) as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimelineMode {
    /// Sent and received transactions.
    #[default]
    Both,
    SentOnly,
}

/// One timeline per account touched by `records`, ordered by account index.
/// A self-transfer counts once.
pub fn timelines<'a>(
    records: impl IntoIterator<Item = &'a Record>,
    mode: TimelineMode,
) -> Vec<AccountTimeline> {
    let mut by_account: BTreeMap<u32, Vec<Timestamp>> = BTreeMap::new();
    for r in records {
        by_account.entry(r.sender).or_default().push(r.timestamp);
        if mode == TimelineMode::Both && r.receiver != r.sender {
            by_account.entry(r.receiver).or_default().push(r.timestamp);
        }
    }
    by_account
        .into_iter()
        .map(|(account, ts)| AccountTimeline::new(account, ts))
        .collect()
}

/// Shortest span holding `ceil(p * N)` consecutive transactions, as a
/// fraction of the account lifetime.
pub fn busy_period_ratio(tl: &AccountTimeline, p: f64) -> Result<f64, BurstError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(BurstError::BadFraction(p));
    }
    let n = tl.len();
    if n < MIN_TRANSACTIONS {
        return Err(BurstError::TooFewTransactions {
            found: n,
            required: MIN_TRANSACTIONS,
        });
    }
    let lifetime = tl.lifetime();
    if lifetime <= 0 {
        return Err(BurstError::ZeroLifetime);
    }
    let k = ((p * n as f64).ceil() as usize).clamp(1, n);
    let ts = &tl.timestamps;
    let span = (0..=n - k).map(|i| ts[i + k - 1] - ts[i]).min().unwrap_or(0);
    Ok(span as f64 / lifetime as f64)
}

/// Average transactions per UTC hour of day over the days spanned by the
/// input (first to last calendar day, inclusive).
pub fn hourly_histogram(timestamps: impl IntoIterator<Item = Timestamp>) -> [f64; 24] {
    let mut bins = [0u64; 24];
    let mut span: Option<(i64, i64)> = None;
    for ts in timestamps {
        let day = ts.div_euclid(SECONDS_PER_DAY);
        let hour = ts.rem_euclid(SECONDS_PER_DAY) / SECONDS_PER_HOUR;
        bins[hour as usize] += 1;
        span = Some(span.map_or((day, day), |(a, b)| (a.min(day), b.max(day))));
    }
    let days = span.map_or(1, |(a, b)| b - a + 1) as f64;
    bins.map(|c| c as f64 / days)
}

fn mean_and_std(xs: &[f64]) -> (f64, f64) {
    // a constant series has exactly zero deviation, whatever the rounding
    if xs.iter().all(|&x| x == xs[0]) {
        return (xs[0], 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `(sigma - mean) / (sigma + mean)` with the population standard deviation.
pub fn burstiness_b(intervals: &[f64]) -> Result<f64, BurstError> {
    if intervals.len() < 2 {
        return Err(BurstError::TooFewIntervals {
            found: intervals.len(),
            required: 2,
        });
    }
    let (mean, sigma) = mean_and_std(intervals);
    if mean <= 0.0 {
        return Err(BurstError::AllZeroIntervals);
    }
    Ok((sigma - mean) / (sigma + mean))
}

/// Lag-1 memory coefficient.
pub fn memory_m(intervals: &[f64]) -> Result<f64, BurstError> {
    memory_m_lag(intervals, 1)
}

/// Correlation between `intervals[..n-lag]` and `intervals[lag..]`, each
/// with its own mean and population deviation.
pub fn memory_m_lag(intervals: &[f64], lag: usize) -> Result<f64, BurstError> {
    let lag = lag.max(1);
    let required = lag + 2;
    if intervals.len() < required {
        return Err(BurstError::TooFewIntervals {
            found: intervals.len(),
            required,
        });
    }
    let head = &intervals[..intervals.len() - lag];
    let tail = &intervals[lag..];
    let (m1, s1) = mean_and_std(head);
    let (m2, s2) = mean_and_std(tail);
    if s1 == 0.0 || s2 == 0.0 {
        return Err(BurstError::ZeroVariance);
    }
    let sum: f64 = head.iter().zip(tail).map(|(a, b)| (a - m1) * (b - m2)).sum();
    Ok((sum / head.len() as f64 / (s1 * s2)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurstinessScore {
    pub account: u32,
    pub b: f64,
    /// Absent when the memory coefficient is undefined for the series.
    pub m: Option<f64>,
    pub n_intervals: usize,
}

pub fn score_timeline(tl: &AccountTimeline, lag: usize) -> Result<BurstinessScore, BurstError> {
    let intervals = tl.intervals();
    Ok(BurstinessScore {
        account: tl.account,
        b: burstiness_b(&intervals)?,
        m: memory_m_lag(&intervals, lag).ok(),
        n_intervals: intervals.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClassSample {
    Scores(Vec<BurstinessScore>),
    ClassTooSmall { eligible: usize, requested: usize },
}

/// Samples `sample_size` eligible accounts (at least [`MIN_TRANSACTIONS`]
/// transactions) per label class with a seeded generator and scores them.
/// Labels come from the registry.
pub fn mb_by_class(
    timelines: &[AccountTimeline],
    registry: &AccountRegistry,
    classes: &[Label],
    sample_size: usize,
    seed: u64,
    lag: usize,
) -> BTreeMap<Label, ClassSample> {
    let mut out = BTreeMap::new();
    for &class in classes {
        let eligible: Vec<&AccountTimeline> = timelines
            .iter()
            .filter(|tl| registry.label(tl.account) == class && tl.len() >= MIN_TRANSACTIONS)
            .collect();
        if eligible.len() < sample_size {
            out.insert(
                class,
                ClassSample::ClassTooSmall {
                    eligible: eligible.len(),
                    requested: sample_size,
                },
            );
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (class as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut picked = sample(&mut rng, eligible.len(), sample_size).into_vec();
        picked.sort_unstable();
        let scores = picked
            .into_iter()
            .filter_map(|i| score_timeline(eligible[i], lag).ok())
            .collect();
        out.insert(class, ClassSample::Scores(scores));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn even(n: i64) -> AccountTimeline {
        AccountTimeline::new(0, (0..n).collect())
    }

    #[test]
    fn busy_period_examples() {
        assert_eq!(busy_period_ratio(&even(10), 0.4).unwrap(), 3.0 / 9.0);
        assert_eq!(busy_period_ratio(&even(10), 1.0).unwrap(), 1.0);
        assert_eq!(
            busy_period_ratio(&even(9), 0.5),
            Err(BurstError::TooFewTransactions {
                found: 9,
                required: 10
            })
        );
        let flat = AccountTimeline::new(0, vec![5; 12]);
        assert_eq!(busy_period_ratio(&flat, 0.5), Err(BurstError::ZeroLifetime));
        assert!(busy_period_ratio(&even(10), 0.0).is_err());
    }

    #[test]
    fn busy_period_finds_burst() {
        let mut ts: Vec<i64> = (0..8).map(|i| 1000 + i).collect();
        ts.extend([0, 5000]);
        let tl = AccountTimeline::new(1, ts);
        // 8 of 10 within 7 seconds
        assert_eq!(busy_period_ratio(&tl, 0.8).unwrap(), 7.0 / 5000.0);
    }

    #[test]
    fn hourly_single_bin() {
        let h = hourly_histogram([7 * 3600 + 1800, 86_400 + 7 * 3600 + 1800]);
        for (hour, v) in h.iter().enumerate() {
            if hour == 7 {
                assert_eq!(*v, 1.0);
            } else {
                assert_eq!(*v, 0.0);
            }
        }
        assert_eq!(hourly_histogram([]), [0.0; 24]);
    }

    #[test]
    fn b_examples() {
        assert_eq!(burstiness_b(&[5.0, 5.0, 5.0]).unwrap(), -1.0);
        assert!((burstiness_b(&[1.0, 3.0]).unwrap() + 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(burstiness_b(&[0.0, 0.0]), Err(BurstError::AllZeroIntervals));
        assert!(matches!(
            burstiness_b(&[1.0]),
            Err(BurstError::TooFewIntervals { .. })
        ));
    }

    #[test]
    fn m_examples() {
        assert!((memory_m(&[1.0, 2.0, 3.0, 4.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((memory_m(&[1.0, 3.0, 1.0, 3.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(memory_m(&[2.0, 2.0, 2.0]), Err(BurstError::ZeroVariance));
        assert!(matches!(
            memory_m(&[1.0, 2.0]),
            Err(BurstError::TooFewIntervals { .. })
        ));
        // lag 2 over a period-2 sequence is perfectly correlated
        assert!((memory_m_lag(&[1.0, 3.0, 1.0, 3.0, 1.0, 3.0], 2).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn timeline_modes() {
        let rec = |s, r, t| Record {
            value: 0,
            block_id: 0,
            timestamp: t,
            sender: s,
            receiver: r,
            seq: 0,
            kind: crate::types::TxKind::Transfer,
            internal: false,
        };
        let recs = [rec(0, 1, 5), rec(1, 0, 3), rec(2, 2, 9)];
        let both = timelines(&recs, TimelineMode::Both);
        assert_eq!(both[0].timestamps, vec![3, 5]);
        assert_eq!(both[2].timestamps, vec![9]);
        let sent = timelines(&recs, TimelineMode::SentOnly);
        assert_eq!(sent[0].timestamps, vec![5]);
    }
}
