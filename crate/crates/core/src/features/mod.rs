//! Feature pipeline: OHLCV ingestion, technical indicators, trend labels,
//! sliding windows, normalization, and synthetic data generation.

mod dataset;
mod indicators;
mod labels;
mod ohlcv;
mod synth;
mod windows;

pub use dataset::{build_dataset, load_dataset, save_dataset, Dataset, FeaturizeOptions, IngestReport, TickerReport};
pub use indicators::{compute_indicators, FeatureFrame, DEFAULT_SMA_WINDOWS, N_BASE_FEATURES};
pub use labels::label_movement;
pub use ohlcv::{load_ohlcv, OhlcvFrame};
pub use synth::{synth_generate, RegimeParams};
pub use windows::{make_windows, normalize, split_by_date, DateRange, NormStats, WindowSample, WindowSkips};
