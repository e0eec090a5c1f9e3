//! The autoregressive encoder: stacked dilated-causal residual blocks with
//! optional stock-identity conditioning and a context-vector head.

mod model;
mod params;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use model::{
    attention_context, encode_contexts, encode_window, pooled_context, residual_block,
    BlockVars, ContextVector, EncodeOutput, EncoderVars,
};
pub use params::{bind_params, init_params, BoundEncoder};

/// How per-timestep latents are pooled into the context vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextMode {
    Attention,
    Max,
    Avg,
    ConcatDense,
    Last,
}

impl ContextMode {
    pub const ALL: [ContextMode; 5] = [
        ContextMode::Attention,
        ContextMode::Max,
        ContextMode::Avg,
        ContextMode::ConcatDense,
        ContextMode::Last,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ContextMode::Attention => "attention",
            ContextMode::Max => "max",
            ContextMode::Avg => "avg",
            ContextMode::ConcatDense => "concat_dense",
            ContextMode::Last => "last",
        }
    }
}

impl std::str::FromStr for ContextMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attention" => Ok(ContextMode::Attention),
            "max" => Ok(ContextMode::Max),
            "avg" => Ok(ContextMode::Avg),
            "concat_dense" => Ok(ContextMode::ConcatDense),
            "last" => Ok(ContextMode::Last),
            other => Err(Error::Config(format!("unknown context mode '{other}'"))),
        }
    }
}

/// Activation applied inside residual blocks and the skip head. `Identity`
/// exists for linear-response diagnostics (receptive-field tests); training
/// uses `Relu`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Number of residual blocks; block i uses dilation 2^i.
    pub blocks: usize,
    pub filter_size: usize,
    pub channels: usize,
    pub latent_dim: usize,
    /// Input window length in timesteps.
    pub window: usize,
    pub input_dim: usize,
    pub use_identity: bool,
    pub n_stocks: usize,
    pub context_mode: ContextMode,
    #[serde(default)]
    pub activation: Activation,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 || self.filter_size == 0 {
            return Err(Error::Config("encoder needs blocks >= 1 and filter_size >= 1".into()));
        }
        if self.channels == 0 || self.latent_dim == 0 || self.input_dim == 0 {
            return Err(Error::Config("encoder dimensions must be positive".into()));
        }
        if self.window == 0 {
            return Err(Error::Config("window must be positive".into()));
        }
        if self.n_stocks == 0 {
            return Err(Error::Config("n_stocks must be positive".into()));
        }
        let rf = receptive_field(self.blocks, self.filter_size);
        if rf < self.window {
            return Err(Error::Config(format!(
                "receptive field {rf} (blocks={}, filter={}) does not cover window {}",
                self.blocks, self.filter_size, self.window
            )));
        }
        Ok(())
    }

    pub fn dilations(&self) -> impl Iterator<Item = usize> {
        (0..self.blocks).map(|i| 1usize << i)
    }
}

/// Receptive field of `l` stacked blocks with filter size `k` and dilation
/// doubling per block: r = 2^(l-1) * k.
pub fn receptive_field(l: usize, k: usize) -> usize {
    debug_assert!(l >= 1 && k >= 1);
    (1usize << (l - 1)) * k
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn receptive_field_formula() {
        assert_eq!(receptive_field(6, 2), 64);
        assert_eq!(receptive_field(1, 2), 2);
        assert_eq!(receptive_field(5, 2), 32);
    }

    fn config() -> EncoderConfig {
        EncoderConfig {
            blocks: 6,
            filter_size: 2,
            channels: 77,
            latent_dim: 96,
            window: 64,
            input_dim: 11,
            use_identity: true,
            n_stocks: 8,
            context_mode: ContextMode::Attention,
            activation: Activation::Relu,
        }
    }

    #[test]
    fn default_config_covers_window() {
        config().validate().unwrap();
    }

    #[test]
    fn undersized_receptive_field_rejected() {
        let mut c = config();
        c.blocks = 5; // rf = 32 < 64
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn dilations_double_per_block() {
        let ds: Vec<usize> = config().dilations().collect();
        assert_eq!(ds, vec![1, 2, 4, 8, 16, 32]);
    }
}
