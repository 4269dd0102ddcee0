//! Correlation between a per-window metric and the Ether price.

use serde::Serialize;
use thiserror::Error;
use txscope_core::metrics::{pearson, StatsError};
use txscope_core::types::{PriceSeries, TimeWindow};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorrelateError {
    #[error("no window overlaps the price series")]
    NoOverlap,
    #[error("only one window overlaps the price series")]
    SingleWindow,
    #[error("zero variance")]
    ZeroVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PriceCorrelation {
    pub ppmcc: f64,
    pub n_windows: usize,
}

/// Pearson correlation between window values and the mean daily price inside
/// each window. Windows without any price point are left out.
pub fn price_correlation(
    series: &[(TimeWindow, f64)],
    prices: &PriceSeries,
) -> Result<PriceCorrelation, CorrelateError> {
    let (x, y): (Vec<f64>, Vec<f64>) = series
        .iter()
        .filter_map(|(w, v)| prices.mean_in(w.start, w.end).map(|p| (*v, p)))
        .unzip();
    match x.len() {
        0 => return Err(CorrelateError::NoOverlap),
        1 => return Err(CorrelateError::SingleWindow),
        _ => {}
    }
    match pearson(&x, &y) {
        Ok(ppmcc) => Ok(PriceCorrelation {
            ppmcc,
            n_windows: x.len(),
        }),
        Err(StatsError::ZeroVariance) => Err(CorrelateError::ZeroVariance),
        Err(e) => unreachable!("equal-length inputs with two or more points: {e}"),
    }
}
