//! Training loops for the contrastive objective and the direct
//! classification baseline.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autograd::{AdamState, ParamStore, Tape, Var};
use crate::contrastive::{build_pair_loss, sample_pairs};
use crate::encoder::{bind_params, encode_window, init_params, EncoderConfig};
use crate::error::{Error, Result};
use crate::rng::{stream, streams};

/// Which loss drives the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Pairwise contrastive loss; the classifier is fit afterwards on
    /// frozen context vectors.
    Cmi,
    /// End-to-end cross-entropy through a linear head.
    Direct,
}

impl TrainMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrainMode::Cmi => "cmi",
            TrainMode::Direct => "direct",
        }
    }
}

impl std::str::FromStr for TrainMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cmi" => Ok(TrainMode::Cmi),
            "direct" => Ok(TrainMode::Direct),
            other => Err(Error::Config(format!("unknown train mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub mode: TrainMode,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub epoch: usize,
    pub batch: usize,
    pub loss: f32,
}

pub struct TrainOutcome {
    pub params: ParamStore,
    pub log: Vec<TrainLogEntry>,
    /// Mean batch loss per epoch.
    pub epoch_loss: Vec<f64>,
    pub steps: u64,
    /// Set when training aborted on non-finite values; `params` then hold
    /// the last state before the failed step.
    pub diverged: Option<String>,
}

/// Seeded permutation of `0..n` for one epoch; every sample appears exactly
/// once per epoch.
pub fn shuffled_indices(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(seed, &[streams::SHUFFLE, epoch as u64]));
    idx
}

/// Train an encoder from scratch on `samples` under `opts`, returning the
/// final parameters and the per-batch loss log.
pub fn train(
    cfg: &EncoderConfig,
    opts: &TrainOptions,
    samples: &[crate::features::WindowSample],
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if opts.batch == 0 || opts.epochs == 0 {
        return Err(Error::Config("batch and epochs must be positive".into()));
    }
    let min_batch = match opts.mode {
        TrainMode::Cmi => 3,
        TrainMode::Direct => 1,
    };
    if samples.len() < min_batch {
        return Err(Error::InsufficientBatch(samples.len()));
    }
    let mut params = init_params(cfg, opts.seed, opts.mode == TrainMode::Direct)?;
    let mut adam = AdamState::new(opts.lr, &params);
    let mut log = Vec::new();
    let mut epoch_loss = Vec::with_capacity(opts.epochs);

    for epoch in 0..opts.epochs {
        let order = shuffled_indices(opts.seed, epoch, samples.len());
        let mut epoch_acc = 0.0f64;
        let mut batches_run = 0usize;
        for (batch_idx, chunk) in order.chunks(opts.batch).enumerate() {
            if chunk.len() < min_batch {
                continue; // tail too small to pair up; resampled next epoch
            }
            match train_step(cfg, opts, &mut params, &mut adam, samples, chunk, epoch, batch_idx) {
                Ok(loss) => {
                    log.push(TrainLogEntry { epoch, batch: batch_idx, loss });
                    epoch_acc += loss as f64;
                    batches_run += 1;
                }
                Err(Error::Diverged(msg)) => {
                    // the failed step never touched `params`: they are the
                    // last good state and the caller can checkpoint them
                    return Ok(TrainOutcome {
                        params,
                        log,
                        epoch_loss,
                        steps: adam.step,
                        diverged: Some(msg),
                    });
                }
                Err(e) => return Err(e),
            }
        }
        if batches_run == 0 {
            return Err(Error::InsufficientBatch(samples.len() % opts.batch));
        }
        epoch_loss.push(epoch_acc / batches_run as f64);
    }
    Ok(TrainOutcome { params, log, epoch_loss, steps: adam.step, diverged: None })
}

#[allow(clippy::too_many_arguments)]
fn train_step(
    cfg: &EncoderConfig,
    opts: &TrainOptions,
    params: &mut ParamStore,
    adam: &mut AdamState,
    samples: &[crate::features::WindowSample],
    chunk: &[usize],
    epoch: usize,
    batch_idx: usize,
) -> Result<f32> {
    let mut tape = Tape::new();
    let bound = bind_params(&mut tape, params, cfg, true)?;
    let mut contexts: Vec<Var> = Vec::with_capacity(chunk.len());
    let mut labels: Vec<u8> = Vec::with_capacity(chunk.len());
    for &i in chunk {
        let s = &samples[i];
        let enc = encode_window(&mut tape, cfg, &bound.vars, &s.features, s.stock_id)?;
        contexts.push(enc.context);
        labels.push(s.label);
    }

    let loss = match opts.mode {
        TrainMode::Cmi => {
            let mut rng = stream(opts.seed, &[streams::PAIRS, epoch as u64, batch_idx as u64]);
            let pairs = sample_pairs(&labels, &mut rng)?;
            build_pair_loss(&mut tape, &contexts, &pairs)?
        }
        TrainMode::Direct => {
            let (head_w, head_b) = bound
                .vars
                .direct
                .ok_or_else(|| Error::Contract("direct mode requires head parameters".into()))?;
            let mut terms = Vec::with_capacity(contexts.len());
            for (&ctx, &y) in contexts.iter().zip(&labels) {
                let z = tape.dot(ctx, head_w)?;
                let logit = tape.add(z, head_b)?;
                terms.push(tape.bce_with_logits(logit, y as f64)?);
            }
            let total = tape.sum_many(&terms)?;
            tape.affine(total, 1.0 / terms.len() as f64, 0.0)?
        }
    };

    let loss_value = tape.value(loss)[0];
    if !loss_value.is_finite() {
        return Err(Error::Diverged(format!(
            "loss became non-finite at epoch {epoch} batch {batch_idx}"
        )));
    }
    tape.backward(loss)?;
    params.set_grads_from_tape(&tape, &bound.leaves)?;
    adam.step(params)?;
    Ok(loss_value)
}
