//! Parameter initialization and tape binding for the encoder.

use crate::autograd::{ParamStore, Tape};
use crate::encoder::model::{BlockVars, EncoderVars, HeadVars};
use crate::encoder::{ContextMode, EncoderConfig};
use crate::error::{Error, Result};
use crate::rng::{stream, streams};

/// Build a freshly initialized parameter store for `cfg`. Weights use
/// seeded He-style uniform fan-in scaling; biases start at zero. When
/// `with_direct_head` is set, a linear classification head is appended for
/// end-to-end training.
pub fn init_params(cfg: &EncoderConfig, seed: u64, with_direct_head: bool) -> Result<ParamStore> {
    // Structural checks only; receptive-field coverage is enforced by
    // EncoderConfig::validate at run-config level so diagnostics may probe
    // windows longer than the receptive field.
    if cfg.blocks == 0 || cfg.filter_size == 0 || cfg.channels == 0 || cfg.latent_dim == 0
        || cfg.input_dim == 0 || cfg.window == 0 || cfg.n_stocks == 0
    {
        return Err(Error::Config("encoder dimensions must be positive".into()));
    }
    let mut rng = stream(seed, &[streams::INIT]);
    let mut p = ParamStore::new();
    let ch = cfg.channels;
    let k = cfg.filter_size;
    p.insert_he_uniform("input.w", vec![cfg.input_dim, ch], cfg.input_dim, &mut rng)?;
    p.insert_zeros("input.b", vec![ch])?;
    for i in 0..cfg.blocks {
        p.insert_he_uniform(&format!("block{i}.conv.w"), vec![k, ch, ch], k * ch, &mut rng)?;
        p.insert_zeros(&format!("block{i}.conv.b"), vec![ch])?;
        if cfg.use_identity {
            p.insert_he_uniform(&format!("block{i}.id.u"), vec![cfg.n_stocks, ch], cfg.n_stocks, &mut rng)?;
        }
    }
    p.insert_he_uniform("out.w", vec![ch, cfg.latent_dim], ch, &mut rng)?;
    p.insert_zeros("out.b", vec![cfg.latent_dim])?;
    match cfg.context_mode {
        ContextMode::Attention => {
            // zero start = uniform attention; He-scale logits saturate the
            // softmax at init and starve early gradients
            p.insert_zeros("ctx.attn.a", vec![cfg.window, cfg.latent_dim])?;
        }
        ContextMode::ConcatDense => {
            let flat = cfg.window * cfg.latent_dim;
            p.insert_he_uniform("ctx.cd.w", vec![flat, cfg.latent_dim], flat, &mut rng)?;
            p.insert_zeros("ctx.cd.b", vec![cfg.latent_dim])?;
        }
        ContextMode::Max | ContextMode::Avg | ContextMode::Last => {}
    }
    if with_direct_head {
        p.insert_he_uniform("head.w", vec![cfg.latent_dim], cfg.latent_dim, &mut rng)?;
        p.insert_zeros("head.b", vec![1])?;
    }
    Ok(p)
}

/// Encoder parameters bound as leaves on one tape, plus the flat leaf list
/// (in store order) for gradient transfer.
pub struct BoundEncoder {
    pub vars: EncoderVars,
    pub leaves: Vec<crate::autograd::Var>,
}

/// Bind every parameter of `store` on `tape` and slot the vars into the
/// encoder structure. `trainable = false` freezes the graph for inference.
pub fn bind_params(
    tape: &mut Tape,
    store: &ParamStore,
    cfg: &EncoderConfig,
    trainable: bool,
) -> Result<BoundEncoder> {
    let leaves = store.bind(tape, trainable);
    let by_name: std::collections::HashMap<&str, crate::autograd::Var> =
        store.names().zip(leaves.iter().copied()).collect();
    let var = |name: &str| {
        by_name
            .get(name)
            .copied()
            .ok_or_else(|| Error::Data(format!("parameter store is missing '{name}'")))
    };

    let mut blocks = Vec::with_capacity(cfg.blocks);
    for i in 0..cfg.blocks {
        blocks.push(BlockVars {
            conv_w: var(&format!("block{i}.conv.w"))?,
            conv_b: var(&format!("block{i}.conv.b"))?,
            id_u: if cfg.use_identity { Some(var(&format!("block{i}.id.u"))?) } else { None },
        });
    }
    let head = match cfg.context_mode {
        ContextMode::Attention => HeadVars::Attention { a: var("ctx.attn.a")? },
        ContextMode::ConcatDense => HeadVars::ConcatDense { w: var("ctx.cd.w")?, b: var("ctx.cd.b")? },
        ContextMode::Max | ContextMode::Avg | ContextMode::Last => HeadVars::Pool,
    };
    let direct = match (by_name.get("head.w"), by_name.get("head.b")) {
        (Some(&w), Some(&b)) => Some((w, b)),
        _ => None,
    };
    Ok(BoundEncoder {
        vars: EncoderVars {
            input_w: var("input.w")?,
            input_b: var("input.b")?,
            blocks,
            out_w: var("out.w")?,
            out_b: var("out.b")?,
            head,
            direct,
        },
        leaves,
    })
}
