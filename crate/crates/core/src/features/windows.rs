//! Sliding windows, date splits, and normalization.

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::features::indicators::FeatureFrame;

/// One training sample: a `window x n_features` feature matrix ending at
/// `anchor_date`, the stock's registry index, and the binary trend label.
#[derive(Debug, Clone)]
pub struct WindowSample {
    /// Row-major `[window x n_features]`, float32.
    pub features: Vec<f32>,
    pub window: usize,
    pub n_features: usize,
    pub stock_id: usize,
    /// 0 = down, 1 = up.
    pub label: u8,
    pub anchor_date: NaiveDate,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WindowSkips {
    /// Anchor dates with a label but fewer than `window` prior feature rows.
    pub insufficient_history: usize,
    /// Feature rows without a label (dead zone or final day).
    pub unlabeled: usize,
}

/// Build one sample per labeled anchor date that has `window` feature rows
/// ending at the anchor (inclusive). Insufficient history is skipped
/// silently and counted.
pub fn make_windows(
    features: &FeatureFrame,
    labels: &[(NaiveDate, Option<u8>)],
    stock_id: usize,
    window: usize,
) -> Result<(Vec<WindowSample>, WindowSkips)> {
    if window == 0 {
        return Err(Error::Config("window must be positive".into()));
    }
    let mut by_date: std::collections::HashMap<NaiveDate, u8> = std::collections::HashMap::new();
    for (d, l) in labels {
        if let Some(l) = l {
            by_date.insert(*d, *l);
        }
    }
    let nf = features.n_features;
    let mut out = Vec::new();
    let mut skips = WindowSkips::default();
    for (idx, date) in features.dates.iter().enumerate() {
        let Some(&label) = by_date.get(date) else {
            skips.unlabeled += 1;
            continue;
        };
        if idx + 1 < window {
            skips.insufficient_history += 1;
            continue;
        }
        let start = idx + 1 - window;
        let mut mat = Vec::with_capacity(window * nf);
        for r in start..=idx {
            mat.extend(features.row(r).iter().map(|&v| v as f32));
        }
        out.push(WindowSample {
            features: mat,
            window,
            n_features: nf,
            stock_id,
            label,
            anchor_date: *date,
        });
    }
    Ok((out, skips))
}

/// Inclusive date range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::Config(format!("date range {start}..{end} is reversed")));
        }
        Ok(DateRange { start, end })
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }

    pub fn overlaps(&self, other: &DateRange) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

/// Assign samples to train/test by anchor date; samples outside both ranges
/// are discarded. Overlapping ranges are a config error.
pub fn split_by_date(
    samples: Vec<WindowSample>,
    train_range: DateRange,
    test_range: DateRange,
) -> Result<(Vec<WindowSample>, Vec<WindowSample>)> {
    if train_range.overlaps(&test_range) {
        return Err(Error::Config(format!(
            "train range {}..{} overlaps test range {}..{}",
            train_range.start, train_range.end, test_range.start, test_range.end
        )));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for s in samples {
        if train_range.contains(s.anchor_date) {
            train.push(s);
        } else if test_range.contains(s.anchor_date) {
            test.push(s);
        }
    }
    Ok((train, test))
}

/// Per-feature normalization statistics, computed on the training split only.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    /// Population standard deviation.
    pub std: Vec<f64>,
    /// Features with zero variance are flagged and passed through unscaled.
    pub constant: Vec<bool>,
}

impl NormStats {
    /// Compute train-split statistics without mutating anything.
    pub fn fit(train: &[WindowSample]) -> Result<NormStats> {
        let first = train.first().ok_or_else(|| Error::Data("normalize: empty training split".into()))?;
        let nf = first.n_features;
        let mut sum = vec![0.0f64; nf];
        let mut count = 0u64;
        for s in train {
            for row in 0..s.window {
                for f in 0..nf {
                    sum[f] += s.features[row * nf + f] as f64;
                }
            }
            count += s.window as u64;
        }
        let mean: Vec<f64> = sum.iter().map(|v| v / count as f64).collect();
        let mut sq = vec![0.0f64; nf];
        for s in train {
            for row in 0..s.window {
                for f in 0..nf {
                    let d = s.features[row * nf + f] as f64 - mean[f];
                    sq[f] += d * d;
                }
            }
        }
        let std: Vec<f64> = sq.iter().map(|v| (v / count as f64).sqrt()).collect();
        let constant: Vec<bool> = std.iter().map(|&s| s <= 0.0).collect();
        Ok(NormStats { mean, std, constant })
    }

    pub fn apply(&self, samples: &mut [WindowSample]) {
        for s in samples {
            let nf = s.n_features;
            for row in 0..s.window {
                for f in 0..nf {
                    if self.constant[f] {
                        continue;
                    }
                    let v = s.features[row * nf + f] as f64;
                    s.features[row * nf + f] = ((v - self.mean[f]) / self.std[f]) as f32;
                }
            }
        }
    }
}

/// Z-score both splits per feature using training statistics only.
pub fn normalize(train: &mut [WindowSample], test: &mut [WindowSample]) -> Result<NormStats> {
    let stats = NormStats::fit(train)?;
    stats.apply(train);
    stats.apply(test);
    Ok(stats)
}
