//! Featurized dataset assembly, persistence, and the ingestion report.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{read_container, write_container, Container};
use crate::error::{Error, Result};
use crate::features::indicators::compute_indicators;
use crate::features::labels::label_movement;
use crate::features::ohlcv::OhlcvFrame;
use crate::features::windows::{
    make_windows, normalize, split_by_date, DateRange, NormStats, WindowSample,
};

#[derive(Debug, Clone)]
pub struct FeaturizeOptions {
    pub up_thresh: f64,
    pub down_thresh: f64,
    pub sma_windows: Vec<usize>,
    pub window: usize,
    pub train_range: DateRange,
    pub test_range: DateRange,
}

/// Normalized train/test windows plus the ticker registry and stats.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub window: usize,
    pub n_features: usize,
    pub feature_names: Vec<String>,
    /// Sorted tickers; `WindowSample::stock_id` indexes into this.
    pub tickers: Vec<String>,
    pub train: Vec<WindowSample>,
    pub test: Vec<WindowSample>,
    pub stats: NormStats,
}

impl Dataset {
    pub fn n_stocks(&self) -> usize {
        self.tickers.len()
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TickerReport {
    pub ticker: String,
    pub rows: usize,
    pub feature_rows: usize,
    pub unlabeled: usize,
    pub insufficient_history: usize,
    pub windows: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub tickers: Vec<TickerReport>,
    pub train_samples: usize,
    pub test_samples: usize,
    pub discarded_out_of_range: usize,
    pub constant_features: Vec<String>,
}

impl std::fmt::Display for IngestReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{:<8} {:>7} {:>9} {:>10} {:>8} {:>8}", "ticker", "rows", "feat_rows", "unlabeled", "no_hist", "windows")?;
        for t in &self.tickers {
            writeln!(
                f,
                "{:<8} {:>7} {:>9} {:>10} {:>8} {:>8}",
                t.ticker, t.rows, t.feature_rows, t.unlabeled, t.insufficient_history, t.windows
            )?;
        }
        writeln!(f, "train_samples        {}", self.train_samples)?;
        writeln!(f, "test_samples         {}", self.test_samples)?;
        writeln!(f, "discarded_range      {}", self.discarded_out_of_range)?;
        writeln!(f, "constant_features    {}", if self.constant_features.is_empty() { "none".to_string() } else { self.constant_features.join(",") })?;
        Ok(())
    }
}

/// Run the full pipeline: indicators, labels, windows, date split, and
/// normalization. Frames are processed in sorted-ticker order so stock ids
/// and outputs are deterministic.
pub fn build_dataset(frames: &[OhlcvFrame], opts: &FeaturizeOptions) -> Result<(Dataset, IngestReport)> {
    if frames.is_empty() {
        return Err(Error::Data("no input frames".into()));
    }
    let mut order: Vec<usize> = (0..frames.len()).collect();
    order.sort_by(|&a, &b| frames[a].ticker.cmp(&frames[b].ticker));
    let tickers: Vec<String> = order.iter().map(|&i| frames[i].ticker.clone()).collect();
    for w in tickers.windows(2) {
        if w[0] == w[1] {
            return Err(Error::Data(format!("duplicate ticker '{}'", w[0])));
        }
    }

    let mut all = Vec::new();
    let mut report = IngestReport::default();
    let mut feature_names = Vec::new();
    for (stock_id, &fi) in order.iter().enumerate() {
        let frame = &frames[fi];
        let ff = compute_indicators(frame, &opts.sma_windows)?;
        let labels = label_movement(frame, opts.up_thresh, opts.down_thresh)?;
        let (windows, skips) = make_windows(&ff, &labels, stock_id, opts.window)?;
        report.tickers.push(TickerReport {
            ticker: frame.ticker.clone(),
            rows: frame.len(),
            feature_rows: ff.len(),
            unlabeled: skips.unlabeled,
            insufficient_history: skips.insufficient_history,
            windows: windows.len(),
        });
        feature_names = ff.feature_names.clone();
        all.extend(windows);
    }

    let total = all.len();
    let (mut train, mut test) = split_by_date(all, opts.train_range, opts.test_range)?;
    report.discarded_out_of_range = total - train.len() - test.len();
    let stats = normalize(&mut train, &mut test)?;
    report.train_samples = train.len();
    report.test_samples = test.len();
    report.constant_features = stats
        .constant
        .iter()
        .zip(&feature_names)
        .filter(|(c, _)| **c)
        .map(|(_, n)| n.clone())
        .collect();

    let n_features = train.first().map(|s| s.n_features).unwrap_or(feature_names.len());
    Ok((
        Dataset {
            window: opts.window,
            n_features,
            feature_names,
            tickers,
            train,
            test,
            stats,
        },
        report,
    ))
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetMeta {
    kind: String,
    window: usize,
    n_features: usize,
    feature_names: Vec<String>,
    tickers: Vec<String>,
    train_count: usize,
    test_count: usize,
    train_anchor_dates: Vec<NaiveDate>,
    test_anchor_dates: Vec<NaiveDate>,
}

fn push_split(c: &mut Container, prefix: &str, samples: &[WindowSample], window: usize, nf: usize) {
    let n = samples.len();
    if n == 0 {
        return;
    }
    let mut x = Vec::with_capacity(n * window * nf);
    let mut y = Vec::with_capacity(n);
    let mut sid = Vec::with_capacity(n);
    for s in samples {
        x.extend_from_slice(&s.features);
        y.push(s.label as f32);
        sid.push(s.stock_id as f32);
    }
    c.push_tensor(&format!("{prefix}.x"), vec![n, window, nf], x);
    c.push_tensor(&format!("{prefix}.y"), vec![n], y);
    c.push_tensor(&format!("{prefix}.stock_id"), vec![n], sid);
}

/// Persist a dataset in the shared binary container.
pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    let meta = DatasetMeta {
        kind: "dataset".into(),
        window: ds.window,
        n_features: ds.n_features,
        feature_names: ds.feature_names.clone(),
        tickers: ds.tickers.clone(),
        train_count: ds.train.len(),
        test_count: ds.test.len(),
        train_anchor_dates: ds.train.iter().map(|s| s.anchor_date).collect(),
        test_anchor_dates: ds.test.iter().map(|s| s.anchor_date).collect(),
    };
    let mut c = Container {
        meta_json: serde_json::to_string(&meta).map_err(|e| Error::Data(e.to_string()))?,
        tensors: vec![],
    };
    push_split(&mut c, "train", &ds.train, ds.window, ds.n_features);
    push_split(&mut c, "test", &ds.test, ds.window, ds.n_features);
    c.push_tensor("norm.mean", vec![ds.n_features], ds.stats.mean.iter().map(|&v| v as f32).collect());
    c.push_tensor("norm.std", vec![ds.n_features], ds.stats.std.iter().map(|&v| v as f32).collect());
    c.push_tensor(
        "norm.constant",
        vec![ds.n_features],
        ds.stats.constant.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
    );
    write_container(path, &c)
}

fn read_split(
    c: &Container,
    prefix: &str,
    count: usize,
    window: usize,
    nf: usize,
    dates: &[NaiveDate],
) -> Result<Vec<WindowSample>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let (xs, xd) = c.tensor(&format!("{prefix}.x"))?;
    if xs != [count, window, nf] {
        return Err(Error::Data(format!("{prefix}.x has shape {xs:?}")));
    }
    let (_, yd) = c.tensor(&format!("{prefix}.y"))?;
    let (_, sd) = c.tensor(&format!("{prefix}.stock_id"))?;
    if yd.len() != count || sd.len() != count || dates.len() != count {
        return Err(Error::Data(format!("{prefix}: inconsistent sample counts")));
    }
    let stride = window * nf;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        out.push(WindowSample {
            features: xd[i * stride..(i + 1) * stride].to_vec(),
            window,
            n_features: nf,
            stock_id: sd[i] as usize,
            label: yd[i] as u8,
            anchor_date: dates[i],
        });
    }
    Ok(out)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let c = read_container(path)?;
    let meta: DatasetMeta = serde_json::from_str(&c.meta_json)
        .map_err(|e| Error::Data(format!("bad dataset metadata: {e}")))?;
    if meta.kind != "dataset" {
        return Err(Error::Data(format!("container kind '{}' is not a dataset", meta.kind)));
    }
    let train = read_split(&c, "train", meta.train_count, meta.window, meta.n_features, &meta.train_anchor_dates)?;
    let test = read_split(&c, "test", meta.test_count, meta.window, meta.n_features, &meta.test_anchor_dates)?;
    let (_, mean) = c.tensor("norm.mean")?;
    let (_, std) = c.tensor("norm.std")?;
    let (_, constant) = c.tensor("norm.constant")?;
    Ok(Dataset {
        window: meta.window,
        n_features: meta.n_features,
        feature_names: meta.feature_names,
        tickers: meta.tickers,
        train,
        test,
        stats: NormStats {
            mean: mean.iter().map(|&v| v as f64).collect(),
            std: std.iter().map(|&v| v as f64).collect(),
            constant: constant.iter().map(|&v| v != 0.0).collect(),
        },
    })
}
