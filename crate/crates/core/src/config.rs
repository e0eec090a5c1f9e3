//! Run configuration: TOML sections mirroring the pipeline stages.
//! Unknown keys are rejected so typos fail loudly.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::encoder::{Activation, ContextMode, EncoderConfig};
use crate::error::{Error, Result};
use crate::features::{DateRange, FeaturizeOptions, RegimeParams};
use crate::train::TrainMode;

fn d(y: i32, m: u32, day: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, day).expect("valid default date")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub blocks: usize,
    pub filter_size: usize,
    pub channels: usize,
    pub latent_dim: usize,
    pub window: usize,
    pub use_identity: bool,
    pub context_mode: ContextMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            blocks: 6,
            filter_size: 2,
            channels: 77,
            latent_dim: 96,
            window: 64,
            use_identity: true,
            context_mode: ContextMode::Attention,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Logistic-head fitting (two-step evaluation).
    pub head_epochs: usize,
    pub head_lr: f64,
    pub head_l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::Cmi,
            lr: 1e-4,
            batch: 256,
            epochs: 50,
            seed: 7,
            head_epochs: 400,
            head_lr: 0.1,
            head_l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Directory of `<TICKER>.csv` inputs for `featurize`.
    pub data_dir: PathBuf,
    /// Featurized dataset container consumed by `train`/`evaluate`.
    pub dataset: PathBuf,
    pub up_thresh: f64,
    pub down_thresh: f64,
    pub sma_windows: Vec<usize>,
    pub train_start: NaiveDate,
    pub train_end: NaiveDate,
    pub test_start: NaiveDate,
    pub test_end: NaiveDate,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            data_dir: PathBuf::from("data"),
            dataset: PathBuf::from("dataset.cmi"),
            up_thresh: 0.0055,
            down_thresh: -0.005,
            sma_windows: vec![5, 10, 15, 20, 25, 30],
            train_start: d(2014, 1, 1),
            train_end: d(2015, 8, 1),
            test_start: d(2015, 10, 1),
            test_end: d(2016, 1, 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_stocks: usize,
    pub n_days: usize,
    pub base_price: f64,
    pub drift_up: f64,
    pub drift_down: f64,
    pub coupling_up: f64,
    pub coupling_down: f64,
    pub coupling_lag: usize,
    pub noise: f64,
    pub regime_min: usize,
    pub regime_max: usize,
    pub intraday_noise: f64,
    pub volume_base: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let p = RegimeParams::default();
        SynthConfig {
            n_stocks: 8,
            n_days: 600,
            base_price: p.base_price,
            drift_up: p.drift_up,
            drift_down: p.drift_down,
            coupling_up: p.coupling_up,
            coupling_down: p.coupling_down,
            coupling_lag: p.coupling_lag,
            noise: p.noise,
            regime_min: p.regime_min,
            regime_max: p.regime_max,
            intraday_noise: p.intraday_noise,
            volume_base: p.volume_base,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    /// Context-head variants to compare (one row each).
    pub context_modes: Vec<ContextMode>,
    /// Identity-conditioning settings to compare.
    pub identity: Vec<bool>,
    /// Training modes to compare.
    pub modes: Vec<TrainMode>,
    /// Seeds per variant; empty means the train seed only.
    pub seeds: Vec<u64>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            context_modes: ContextMode::ALL.to_vec(),
            identity: vec![true, false],
            modes: vec![TrainMode::Cmi, TrainMode::Direct],
            seeds: vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub synth: SynthConfig,
    pub ablation: AblationConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        // encoder geometry (a placeholder stock count; coverage only
        // depends on blocks/filter/window)
        self.encoder_config(1, crate::features::N_BASE_FEATURES + self.data.sma_windows.len())
            .validate()?;
        if self.train.lr <= 0.0 || self.train.head_lr <= 0.0 {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.train.batch == 0 || self.train.epochs == 0 || self.train.head_epochs == 0 {
            return Err(Error::Config("batch and epoch counts must be positive".into()));
        }
        if self.train.mode == TrainMode::Cmi && self.train.batch < 3 {
            return Err(Error::Config("contrastive training needs batch >= 3".into()));
        }
        if self.data.up_thresh <= self.data.down_thresh {
            return Err(Error::Config("up_thresh must exceed down_thresh".into()));
        }
        if self.data.sma_windows.is_empty() || self.data.sma_windows.iter().any(|&m| m == 0) {
            return Err(Error::Config("sma_windows must be non-empty and positive".into()));
        }
        let train_range = DateRange::new(self.data.train_start, self.data.train_end)?;
        let test_range = DateRange::new(self.data.test_start, self.data.test_end)?;
        if train_range.overlaps(&test_range) {
            return Err(Error::Config("train and test date ranges overlap".into()));
        }
        Ok(())
    }

    pub fn encoder_config(&self, n_stocks: usize, input_dim: usize) -> EncoderConfig {
        EncoderConfig {
            blocks: self.model.blocks,
            filter_size: self.model.filter_size,
            channels: self.model.channels,
            latent_dim: self.model.latent_dim,
            window: self.model.window,
            input_dim,
            use_identity: self.model.use_identity,
            n_stocks,
            context_mode: self.model.context_mode,
            activation: Activation::Relu,
        }
    }

    pub fn featurize_options(&self) -> Result<FeaturizeOptions> {
        Ok(FeaturizeOptions {
            up_thresh: self.data.up_thresh,
            down_thresh: self.data.down_thresh,
            sma_windows: self.data.sma_windows.clone(),
            window: self.model.window,
            train_range: DateRange::new(self.data.train_start, self.data.train_end)?,
            test_range: DateRange::new(self.data.test_start, self.data.test_end)?,
        })
    }

    pub fn regime_params(&self) -> RegimeParams {
        RegimeParams {
            drift_up: self.synth.drift_up,
            drift_down: self.synth.drift_down,
            coupling_up: self.synth.coupling_up,
            coupling_down: self.synth.coupling_down,
            coupling_lag: self.synth.coupling_lag,
            noise: self.synth.noise,
            regime_min: self.synth.regime_min,
            regime_max: self.synth.regime_max,
            base_price: self.synth.base_price,
            intraday_noise: self.synth.intraday_noise,
            volume_base: self.synth.volume_base,
        }
    }

    pub fn train_options(&self) -> crate::train::TrainOptions {
        crate::train::TrainOptions {
            mode: self.train.mode,
            lr: self.train.lr,
            batch: self.train.batch,
            epochs: self.train.epochs,
            seed: self.train.seed,
        }
    }
}
