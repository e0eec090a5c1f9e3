//! The eleven technical indicators.
//!
//! Per row t (after warm-up):
//!   d_open  = open_t / open_{t-1} - 1        (same for high, low)
//!   d_close = close_t / close_{t-1} - 1      (same for adj_close)
//!   sma_m   = (1/m) * sum_{i=0}^{m-1} adj_close_{t-i} / adj_close_t - 1
//! The first `max(sma windows)` rows are dropped so every emitted row is
//! fully defined.

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::features::ohlcv::OhlcvFrame;

/// Interday deltas (open/high/low) plus intraday deltas (close/adj_close).
pub const N_BASE_FEATURES: usize = 5;

/// Simple-moving-average horizons in trading days.
pub const DEFAULT_SMA_WINDOWS: [usize; 6] = [5, 10, 15, 20, 25, 30];

/// Indicator matrix for one ticker, aligned to the source frame minus
/// warm-up rows.
#[derive(Debug, Clone)]
pub struct FeatureFrame {
    pub ticker: String,
    pub dates: Vec<NaiveDate>,
    /// Row-major `[rows x n_features]`.
    pub values: Vec<f64>,
    pub n_features: usize,
    pub feature_names: Vec<String>,
}

impl FeatureFrame {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_features..(i + 1) * self.n_features]
    }
}

pub fn feature_names(sma_windows: &[usize]) -> Vec<String> {
    let mut names = vec![
        "d_open".to_string(),
        "d_high".to_string(),
        "d_low".to_string(),
        "d_close".to_string(),
        "d_adj_close".to_string(),
    ];
    for m in sma_windows {
        names.push(format!("sma_{m}"));
    }
    names
}

/// Compute indicators for every row past the warm-up region.
pub fn compute_indicators(frame: &OhlcvFrame, sma_windows: &[usize]) -> Result<FeatureFrame> {
    if sma_windows.is_empty() || sma_windows.iter().any(|&m| m == 0) {
        return Err(Error::Config("sma windows must be non-empty positive horizons".into()));
    }
    let warmup = *sma_windows.iter().max().expect("non-empty");
    let n = frame.len();
    if n <= warmup {
        return Err(Error::Data(format!(
            "{}: insufficient history: {n} rows, need more than {warmup}",
            frame.ticker
        )));
    }
    let n_features = N_BASE_FEATURES + sma_windows.len();
    let rows = n - warmup;
    let mut values = Vec::with_capacity(rows * n_features);
    for t in warmup..n {
        values.push(frame.open[t] / frame.open[t - 1] - 1.0);
        values.push(frame.high[t] / frame.high[t - 1] - 1.0);
        values.push(frame.low[t] / frame.low[t - 1] - 1.0);
        values.push(frame.close[t] / frame.close[t - 1] - 1.0);
        values.push(frame.adj_close[t] / frame.adj_close[t - 1] - 1.0);
        for &m in sma_windows {
            let mut acc = 0.0f64;
            for i in 0..m {
                acc += frame.adj_close[t - i] / frame.adj_close[t];
            }
            values.push(acc / m as f64 - 1.0);
        }
    }
    Ok(FeatureFrame {
        ticker: frame.ticker.clone(),
        dates: frame.dates[warmup..].to_vec(),
        values,
        n_features,
        feature_names: feature_names(sma_windows),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Frame with the given adj_close path; other columns mirror it.
    fn frame_from_closes(closes: &[f64]) -> OhlcvFrame {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        OhlcvFrame {
            ticker: "T".into(),
            dates: (0..closes.len() as i64).map(|i| start + chrono::Duration::days(i)).collect(),
            open: closes.to_vec(),
            high: closes.to_vec(),
            low: closes.to_vec(),
            close: closes.to_vec(),
            adj_close: closes.to_vec(),
            volume: vec![1.0; closes.len()],
        }
    }

    #[test]
    fn interday_delta_matches_hand_arithmetic() {
        // open 100 -> 102 gives 0.02
        let mut f = frame_from_closes(&vec![100.0; 32]);
        f.open[31] = 102.0;
        f.open[30] = 100.0;
        let ff = compute_indicators(&f, &DEFAULT_SMA_WINDOWS).unwrap();
        let last = ff.row(ff.len() - 1);
        assert!((last[0] - 0.02).abs() < 1e-12, "d_open = {}", last[0]);
    }

    #[test]
    fn intraday_delta_matches_hand_arithmetic() {
        // close 100 -> 99 gives -0.01
        let mut f = frame_from_closes(&vec![100.0; 32]);
        f.close[31] = 99.0;
        let ff = compute_indicators(&f, &DEFAULT_SMA_WINDOWS).unwrap();
        let last = ff.row(ff.len() - 1);
        assert!((last[3] + 0.01).abs() < 1e-12, "d_close = {}", last[3]);
    }

    #[test]
    fn constant_series_has_zero_smas() {
        let f = frame_from_closes(&vec![50.0; 40]);
        let ff = compute_indicators(&f, &DEFAULT_SMA_WINDOWS).unwrap();
        for r in 0..ff.len() {
            for j in N_BASE_FEATURES..ff.n_features {
                assert_eq!(ff.row(r)[j], 0.0);
            }
        }
    }

    #[test]
    fn too_short_frame_is_insufficient_history() {
        let f = frame_from_closes(&vec![50.0; 30]);
        let err = compute_indicators(&f, &DEFAULT_SMA_WINDOWS).unwrap_err();
        assert!(err.to_string().contains("insufficient history"));
    }

    #[test]
    fn warmup_alignment_drops_exactly_max_sma_rows() {
        let f = frame_from_closes(&vec![50.0; 45]);
        let ff = compute_indicators(&f, &DEFAULT_SMA_WINDOWS).unwrap();
        assert_eq!(ff.len(), 15);
        assert_eq!(ff.dates[0], f.dates[30]);
    }

    #[test]
    fn indicators_only_look_back_bounded_history() {
        // NaN-poison the first rows; every emitted row whose look-back
        // window clears the poison must stay finite, and must equal the
        // same rows computed from a clean frame.
        let poison_rows = 6;
        let closes: Vec<f64> = (0..80).map(|i| 100.0 + (i as f64 * 0.7).sin() * 5.0).collect();
        let clean = frame_from_closes(&closes);
        let mut poisoned = clean.clone();
        for i in 0..poison_rows {
            poisoned.open[i] = f64::NAN;
            poisoned.high[i] = f64::NAN;
            poisoned.low[i] = f64::NAN;
            poisoned.close[i] = f64::NAN;
            poisoned.adj_close[i] = f64::NAN;
        }
        let ff_clean = compute_indicators(&clean, &DEFAULT_SMA_WINDOWS).unwrap();
        let ff_poison = compute_indicators(&poisoned, &DEFAULT_SMA_WINDOWS).unwrap();
        // warm-up is 30; source row t maps to feature row t-30. Feature rows
        // for t >= poison_rows + 30 never touch rows < poison_rows.
        for r in poison_rows..ff_clean.len() {
            for j in 0..ff_clean.n_features {
                let a = ff_clean.row(r)[j];
                let b = ff_poison.row(r)[j];
                assert!(b.is_finite(), "poison leaked into feature row {r} col {j}");
                assert_eq!(a, b, "row {r} col {j} differs");
            }
        }
        // And rows that legitimately overlap the poison do carry NaN,
        // confirming the probe actually reaches the indicator arithmetic.
        assert!(ff_poison.row(0).iter().any(|v| v.is_nan()));
    }
}
