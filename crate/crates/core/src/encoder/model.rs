//! Graph builders: residual blocks, sequence encoding, and context heads.

use crate::autograd::{ParamStore, Tape, Var};
use crate::encoder::params::bind_params;
use crate::encoder::{Activation, ContextMode, EncoderConfig};
use crate::error::{Error, Result};
use crate::features::WindowSample;

#[derive(Debug, Clone, Copy)]
pub struct BlockVars {
    pub conv_w: Var,
    pub conv_b: Var,
    /// Identity-conditioning table `[n_stocks x channels]`, present when the
    /// encoder conditions on stock identity.
    pub id_u: Option<Var>,
}

#[derive(Debug, Clone, Copy)]
pub enum HeadVars {
    Attention { a: Var },
    ConcatDense { w: Var, b: Var },
    Pool,
}

#[derive(Debug, Clone)]
pub struct EncoderVars {
    pub input_w: Var,
    pub input_b: Var,
    pub blocks: Vec<BlockVars>,
    pub out_w: Var,
    pub out_b: Var,
    pub head: HeadVars,
    /// Linear classification head for end-to-end training.
    pub direct: Option<(Var, Var)>,
}

/// The encoder's pooled representation of one window.
#[derive(Debug, Clone)]
pub struct ContextVector {
    pub values: Vec<f32>,
    pub stock_id: usize,
    pub label: u8,
}

pub struct EncodeOutput {
    /// Per-timestep latents `[T x latent_dim]`.
    pub latents: Var,
    /// Pooled context `[latent_dim]`.
    pub context: Var,
    /// Attention weights `[T]` when the head is attention.
    pub attention: Option<Var>,
}

fn activate(tape: &mut Tape, activation: Activation, x: Var) -> Result<Var> {
    match activation {
        Activation::Relu => tape.relu(x),
        Activation::Identity => Ok(x),
    }
}

/// One residual block: core = act(conv(h) + b + u^T v), returning
/// (h + core, core) as (residual, skip). The identity term u^T v selects the
/// stock's row of `u`; `stock_row = None` stands for the all-zero one-hot.
pub fn residual_block(
    tape: &mut Tape,
    activation: Activation,
    block: &BlockVars,
    h: Var,
    dilation: usize,
    stock_row: Option<usize>,
) -> Result<(Var, Var)> {
    let conv = tape.conv1d_causal(h, block.conv_w, dilation)?;
    let mut pre = tape.add_row_vec(conv, block.conv_b)?;
    if let Some(u) = block.id_u {
        let id = tape.embed_row(u, stock_row)?;
        pre = tape.add_row_vec(pre, id)?;
    }
    let core = activate(tape, activation, pre)?;
    let residual = tape.add(h, core)?;
    Ok((residual, core))
}

/// Attention pooling: alpha_t = softmax_t(a_t . e_t), c = sum_t alpha_t e_t.
/// Returns the context and the attention weights for inspection.
pub fn attention_context(tape: &mut Tape, e: Var, a: Var) -> Result<(Var, Var)> {
    let logits = tape.row_dot(a, e)?;
    let alpha = tape.softmax_1d(logits)?;
    let ctx = tape.weighted_row_sum(e, alpha)?;
    Ok((ctx, alpha))
}

/// Non-attention context heads: elementwise max over timesteps, mean over
/// timesteps, the last timestep's latent, or flatten + dense.
pub fn pooled_context(
    tape: &mut Tape,
    e: Var,
    mode: ContextMode,
    concat_dense: Option<(Var, Var)>,
) -> Result<Var> {
    match mode {
        ContextMode::Max => tape.max_rows(e),
        ContextMode::Avg => tape.mean_rows(e),
        ContextMode::Last => {
            let rows = tape.shape(e)[0];
            tape.take_row(e, rows - 1)
        }
        ContextMode::ConcatDense => {
            let (w, b) = concat_dense
                .ok_or_else(|| Error::Config("concat_dense head needs its dense parameters".into()))?;
            let numel = tape.numel(e);
            let flat = tape.reshape(e, vec![numel])?;
            tape.dense(flat, w, Some(b))
        }
        ContextMode::Attention => Err(Error::Config("attention is handled by attention_context".into())),
    }
}

/// Record the full encoder for one window: input projection, dilated
/// residual blocks, skip-sum head, and the configured context head.
pub fn encode_window(
    tape: &mut Tape,
    cfg: &EncoderConfig,
    vars: &EncoderVars,
    features: &[f32],
    stock_id: usize,
) -> Result<EncodeOutput> {
    if features.len() != cfg.window * cfg.input_dim {
        return Err(Error::Shape(format!(
            "window has {} values, expected {} x {}",
            features.len(),
            cfg.window,
            cfg.input_dim
        )));
    }
    let x = tape.leaf_data(vec![cfg.window, cfg.input_dim], features.to_vec(), false)?;
    let proj = tape.dense(x, vars.input_w, Some(vars.input_b))?;
    // Unseen stock ids fall back to the all-zero one-hot.
    let stock_row = if stock_id < cfg.n_stocks { Some(stock_id) } else { None };

    let mut h = proj;
    let mut skip_sum: Option<Var> = None;
    for (block, dilation) in vars.blocks.iter().zip(cfg.dilations()) {
        let (residual, skip) = residual_block(tape, cfg.activation, block, h, dilation, stock_row)?;
        h = residual;
        skip_sum = Some(match skip_sum {
            Some(acc) => tape.add(acc, skip)?,
            None => skip,
        });
    }
    let summed = skip_sum.expect("at least one block");
    let pre_out = activate(tape, cfg.activation, summed)?;
    let latents = tape.dense(pre_out, vars.out_w, Some(vars.out_b))?;

    let (context, attention) = match (&vars.head, cfg.context_mode) {
        (HeadVars::Attention { a }, ContextMode::Attention) => {
            let (ctx, alpha) = attention_context(tape, latents, *a)?;
            (ctx, Some(alpha))
        }
        (HeadVars::ConcatDense { w, b }, ContextMode::ConcatDense) => {
            (pooled_context(tape, latents, ContextMode::ConcatDense, Some((*w, *b)))?, None)
        }
        (HeadVars::Pool, mode @ (ContextMode::Max | ContextMode::Avg | ContextMode::Last)) => {
            (pooled_context(tape, latents, mode, None)?, None)
        }
        _ => return Err(Error::Config("head parameters do not match the context mode".into())),
    };
    Ok(EncodeOutput { latents, context, attention })
}

/// Encode samples with frozen parameters, one throwaway tape per window.
pub fn encode_contexts(
    cfg: &EncoderConfig,
    params: &ParamStore,
    samples: &[WindowSample],
) -> Result<Vec<ContextVector>> {
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        let mut tape = Tape::new();
        let bound = bind_params(&mut tape, params, cfg, false)?;
        let enc = encode_window(&mut tape, cfg, &bound.vars, &s.features, s.stock_id)?;
        let values = tape.value(enc.context).to_vec();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged("non-finite activations while encoding".into()));
        }
        out.push(ContextVector { values, stock_id: s.stock_id, label: s.label });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::params::init_params;
    use chrono::NaiveDate;

    fn cfg(mode: ContextMode) -> EncoderConfig {
        EncoderConfig {
            blocks: 6,
            filter_size: 2,
            channels: 12,
            latent_dim: 7,
            window: 64,
            input_dim: 11,
            use_identity: true,
            n_stocks: 4,
            context_mode: mode,
            activation: Activation::Relu,
        }
    }

    fn window_features(seed: u64, cfg: &EncoderConfig) -> Vec<f32> {
        use rand::Rng;
        let mut rng = crate::rng::stream(seed, &[99]);
        (0..cfg.window * cfg.input_dim).map(|_| rng.gen_range(-1.0..1.0f32)).collect()
    }

    fn encode_values(cfg: &EncoderConfig, params: &ParamStore, feats: &[f32], sid: usize) -> (Vec<f32>, Vec<f32>) {
        let mut tape = Tape::new();
        let bound = bind_params(&mut tape, params, cfg, false).unwrap();
        let out = encode_window(&mut tape, cfg, &bound.vars, feats, sid).unwrap();
        (tape.value(out.latents).to_vec(), tape.value(out.context).to_vec())
    }

    #[test]
    fn output_shapes_match_config() {
        let c = cfg(ContextMode::Attention);
        let p = init_params(&c, 1, false).unwrap();
        let feats = window_features(1, &c);
        let mut tape = Tape::new();
        let bound = bind_params(&mut tape, &p, &c, false).unwrap();
        let out = encode_window(&mut tape, &c, &bound.vars, &feats, 0).unwrap();
        assert_eq!(tape.shape(out.latents), &[64, 7]);
        assert_eq!(tape.shape(out.context), &[7]);
        assert_eq!(tape.shape(out.attention.unwrap()), &[64]);
    }

    #[test]
    fn perturbing_last_timestep_leaves_prefix_latents_identical() {
        let c = cfg(ContextMode::Attention);
        let p = init_params(&c, 2, false).unwrap();
        let feats = window_features(2, &c);
        let (base, _) = encode_values(&c, &p, &feats, 1);
        let mut perturbed = feats.clone();
        for f in 0..c.input_dim {
            perturbed[(c.window - 1) * c.input_dim + f] += 10.0;
        }
        let (moved, _) = encode_values(&c, &p, &perturbed, 1);
        for t in 0..c.window - 1 {
            for d in 0..c.latent_dim {
                assert_eq!(
                    base[t * c.latent_dim + d].to_bits(),
                    moved[t * c.latent_dim + d].to_bits(),
                    "latent changed at t={t}"
                );
            }
        }
        let last: Vec<f32> = base[(c.window - 1) * c.latent_dim..].to_vec();
        let last2: Vec<f32> = moved[(c.window - 1) * c.latent_dim..].to_vec();
        assert_ne!(last, last2);
    }

    #[test]
    fn zero_input_zero_identity_block_is_pass_through() {
        // zero input, zero-initialized u and bias: core = relu(0) = 0,
        // residual_out = h
        let c = cfg(ContextMode::Avg);
        let mut tape = Tape::new();
        let h = tape
            .leaf_data(vec![8, 3], vec![0.0; 24], false)
            .unwrap();
        let w = tape.leaf_data(vec![2, 3, 3], vec![0.3; 18], true).unwrap();
        let b = tape.leaf_data(vec![3], vec![0.0; 3], true).unwrap();
        let u = tape.leaf_data(vec![4, 3], vec![0.0; 12], true).unwrap();
        let block = BlockVars { conv_w: w, conv_b: b, id_u: Some(u) };
        let (residual, skip) = residual_block(&mut tape, c.activation, &block, h, 1, Some(2)).unwrap();
        assert!(tape.value(skip).iter().all(|&v| v == 0.0));
        assert_eq!(tape.value(residual), tape.value(h));
    }

    #[test]
    fn identity_conditioning_distinguishes_stocks() {
        let c = cfg(ContextMode::Avg);
        let p = init_params(&c, 3, false).unwrap();
        let feats = window_features(3, &c);
        let (_, ctx_a) = encode_values(&c, &p, &feats, 0);
        let (_, ctx_b) = encode_values(&c, &p, &feats, 1);
        assert_ne!(ctx_a, ctx_b);
    }

    #[test]
    fn identity_off_ignores_stock_id() {
        let mut c = cfg(ContextMode::Avg);
        c.use_identity = false;
        let p = init_params(&c, 3, false).unwrap();
        let feats = window_features(3, &c);
        let (_, ctx_a) = encode_values(&c, &p, &feats, 0);
        let (_, ctx_b) = encode_values(&c, &p, &feats, 3);
        assert!(ctx_a.iter().zip(&ctx_b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn unseen_stock_id_uses_zero_onehot() {
        let c = cfg(ContextMode::Avg);
        let p = init_params(&c, 3, false).unwrap();
        let feats = window_features(3, &c);
        // ids >= n_stocks all collapse to the zero one-hot
        let (_, ctx_a) = encode_values(&c, &p, &feats, c.n_stocks);
        let (_, ctx_b) = encode_values(&c, &p, &feats, c.n_stocks + 7);
        assert!(ctx_a.iter().zip(&ctx_b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn attention_uniform_when_weights_zero() {
        let mut tape = Tape::new();
        let e = tape
            .leaf_data(vec![4, 2], vec![0.0, 2.0, 2.0, 0.0, 1.0, 1.0, 3.0, -1.0], false)
            .unwrap();
        let a = tape.leaf_data(vec![4, 2], vec![0.0; 8], true).unwrap();
        let (ctx, alpha) = attention_context(&mut tape, e, a).unwrap();
        for &w in tape.value(alpha) {
            assert!((w - 0.25).abs() < 1e-7);
        }
        let mean = tape.mean_rows(e).unwrap();
        for (c, m) in tape.value(ctx).iter().zip(tape.value(mean)) {
            assert!((c - m).abs() < 1e-6);
        }
    }

    #[test]
    fn attention_singleton_returns_the_latent() {
        let mut tape = Tape::new();
        let e = tape.leaf_data(vec![1, 3], vec![0.5, -1.0, 2.0], false).unwrap();
        let a = tape.leaf_data(vec![1, 3], vec![0.2, 0.1, -0.3], true).unwrap();
        let (ctx, alpha) = attention_context(&mut tape, e, a).unwrap();
        assert_eq!(tape.value(alpha), &[1.0]);
        assert_eq!(tape.value(ctx), &[0.5, -1.0, 2.0]);
    }

    #[test]
    fn attention_dominating_logit_takes_over() {
        // one logit +20 above the rest: its weight > 0.999
        let mut tape = Tape::new();
        let e = tape
            .leaf_data(vec![3, 1], vec![1.0, 1.0, 1.0], false)
            .unwrap();
        let a = tape.leaf_data(vec![3, 1], vec![0.0, 20.0, 0.0], true).unwrap();
        let (ctx, alpha) = attention_context(&mut tape, e, a).unwrap();
        assert!(tape.value(alpha)[1] > 0.999);
        assert!((tape.value(ctx)[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn attention_weights_are_simplex_and_context_in_hull() {
        let c = cfg(ContextMode::Attention);
        let p = init_params(&c, 5, false).unwrap();
        let feats = window_features(5, &c);
        let mut tape = Tape::new();
        let bound = bind_params(&mut tape, &p, &c, false).unwrap();
        let out = encode_window(&mut tape, &c, &bound.vars, &feats, 0).unwrap();
        let alpha = tape.value(out.attention.unwrap());
        let sum: f64 = alpha.iter().map(|&v| v as f64).sum();
        assert!(alpha.iter().all(|&v| v >= 0.0));
        assert!((sum - 1.0).abs() < 1e-6, "sum {sum}");
        // convex-hull check, coordinatewise
        let e = tape.value(out.latents);
        let ctx = tape.value(out.context);
        for d in 0..c.latent_dim {
            let col: Vec<f32> = (0..c.window).map(|t| e[t * c.latent_dim + d]).collect();
            let lo = col.iter().cloned().fold(f32::INFINITY, f32::min);
            let hi = col.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            assert!(ctx[d] >= lo - 1e-5 && ctx[d] <= hi + 1e-5, "dim {d}: {} not in [{lo}, {hi}]", ctx[d]);
        }
    }

    #[test]
    fn pooling_on_constant_sequence_returns_the_constant() {
        let u = vec![0.7f32, -0.2, 1.5];
        let mut tape = Tape::new();
        let e_data: Vec<f32> = (0..5).flat_map(|_| u.clone()).collect();
        let e = tape.leaf_data(vec![5, 3], e_data, false).unwrap();
        for mode in [ContextMode::Max, ContextMode::Avg, ContextMode::Last] {
            let c = pooled_context(&mut tape, e, mode, None).unwrap();
            for (got, want) in tape.value(c).iter().zip(&u) {
                assert!((got - want).abs() < 1e-6, "{mode:?}");
            }
        }
    }

    #[test]
    fn avg_pooling_arithmetic() {
        let mut tape = Tape::new();
        let e = tape.leaf_data(vec![2, 2], vec![0.0, 2.0, 2.0, 0.0], false).unwrap();
        let c = pooled_context(&mut tape, e, ContextMode::Avg, None).unwrap();
        assert_eq!(tape.value(c), &[1.0, 1.0]);
    }

    #[test]
    fn concat_dense_output_dim_is_latent_dim() {
        let c = cfg(ContextMode::ConcatDense);
        let p = init_params(&c, 6, false).unwrap();
        let feats = window_features(6, &c);
        let (_, ctx) = encode_values(&c, &p, &feats, 0);
        assert_eq!(ctx.len(), c.latent_dim);
    }

    #[test]
    fn unknown_head_pairing_is_config_error() {
        let mut tape = Tape::new();
        let e = tape.leaf_data(vec![2, 2], vec![0.0; 4], false).unwrap();
        assert!(matches!(
            pooled_context(&mut tape, e, ContextMode::Attention, None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn encode_contexts_carries_identity_and_label() {
        let c = cfg(ContextMode::Attention);
        let p = init_params(&c, 7, false).unwrap();
        let sample = WindowSample {
            features: window_features(8, &c),
            window: c.window,
            n_features: c.input_dim,
            stock_id: 2,
            label: 1,
            anchor_date: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
        };
        let ctxs = encode_contexts(&c, &p, &[sample]).unwrap();
        assert_eq!(ctxs.len(), 1);
        assert_eq!(ctxs[0].stock_id, 2);
        assert_eq!(ctxs[0].label, 1);
        assert_eq!(ctxs[0].values.len(), c.latent_dim);
    }

    #[test]
    fn linearized_encoder_sensitivity_respects_receptive_field() {
        // With identity activations the encoder is linear; the final
        // timestep must respond to inputs 64 steps back and be exactly
        // insensitive beyond the receptive field.
        let mut c = cfg(ContextMode::Last);
        c.activation = Activation::Identity;
        c.window = 96; // longer than the 64-step receptive field
        c.use_identity = false;
        let p = init_params(&c, 11, false).unwrap();
        let feats = window_features(11, &c);
        let (base, _) = encode_values(&c, &p, &feats, 0);
        let t_last = c.window - 1;
        let base_last: Vec<f32> = base[t_last * c.latent_dim..].to_vec();

        let probe = |t: usize| -> Vec<f32> {
            let mut f = feats.clone();
            for j in 0..c.input_dim {
                f[t * c.input_dim + j] += 1.0;
            }
            let (lat, _) = encode_values(&c, &p, &f, 0);
            lat[t_last * c.latent_dim..].to_vec()
        };

        // inside the receptive field: oldest covered timestep is t_last-63
        let inside = probe(t_last - 63);
        assert_ne!(inside, base_last, "no sensitivity at the receptive-field edge");
        // outside: one step earlier must leave the last latent bit-identical
        let outside = probe(t_last - 64);
        assert!(
            outside.iter().zip(&base_last).all(|(a, b)| a.to_bits() == b.to_bits()),
            "sensitivity beyond the receptive field"
        );
    }
}
