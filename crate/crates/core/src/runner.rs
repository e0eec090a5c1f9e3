//! End-to-end commands behind the CLI: synth, featurize, train, evaluate,
//! and the ablation harness.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autograd::ParamStore;
use crate::checkpoint::{read_container, write_container, Container};
use crate::config::RunConfig;
use crate::contrastive::pair_capacity;
use crate::downstream::{
    evaluate, generalization_gap, predict_label, train_logistic, EvalReport, LogisticModel,
};
use crate::encoder::{encode_contexts, init_params, ContextVector, EncoderConfig};
use crate::error::{Error, Result};
use crate::features::{
    build_dataset, load_dataset, load_ohlcv, save_dataset, synth_generate, Dataset, IngestReport,
    OhlcvFrame,
};
use crate::report::{write_ablation, write_report, AblationRow};
use crate::train::{train, TrainMode, TrainOutcome};

// ── synth ────────────────────────────────────────────────────────────

/// Generate synthetic OHLCV CSVs into `out_dir`, one file per ticker.
pub fn run_synth(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let frames = synth_generate(cfg.train.seed, cfg.synth.n_stocks, cfg.synth.n_days, &cfg.regime_params())?;
    std::fs::create_dir_all(out_dir)?;
    let mut paths = Vec::with_capacity(frames.len());
    for f in &frames {
        let path = out_dir.join(format!("{}.csv", f.ticker));
        std::fs::write(&path, frame_to_csv(f))?;
        paths.push(path);
    }
    Ok(paths)
}

fn frame_to_csv(f: &OhlcvFrame) -> String {
    let mut s = String::with_capacity(f.len() * 64);
    s.push_str("date,open,high,low,close,adj_close,volume\n");
    for i in 0..f.len() {
        writeln!(
            s,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.2}",
            f.dates[i], f.open[i], f.high[i], f.low[i], f.close[i], f.adj_close[i], f.volume[i]
        )
        .expect("string write");
    }
    s
}

// ── featurize ────────────────────────────────────────────────────────

/// Ingest every `*.csv` under `data_dir`, run the feature pipeline, and
/// write the dataset container plus a text ingestion report.
pub fn run_featurize(cfg: &RunConfig, out: &Path) -> Result<IngestReport> {
    let mut csvs: Vec<PathBuf> = std::fs::read_dir(&cfg.data.data_dir)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", cfg.data.data_dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("csv"))
        .collect();
    csvs.sort();
    if csvs.is_empty() {
        return Err(Error::Data(format!("no CSV files in {}", cfg.data.data_dir.display())));
    }
    let frames: Vec<OhlcvFrame> = csvs.iter().map(|p| load_ohlcv(p)).collect::<Result<_>>()?;
    let (dataset, report) = build_dataset(&frames, &cfg.featurize_options()?)?;
    save_dataset(out, &dataset)?;
    std::fs::write(report_path(out), format!("{report}"))?;
    Ok(report)
}

fn report_path(dataset_out: &Path) -> PathBuf {
    let mut os = dataset_out.as_os_str().to_owned();
    os.push(".report.txt");
    PathBuf::from(os)
}

// ── train ────────────────────────────────────────────────────────────

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    kind: String,
    encoder: EncoderConfig,
    mode: TrainMode,
    step: u64,
    seed: u64,
    config: RunConfig,
}

/// A trained model: parameters plus everything needed to rebuild them.
pub struct Checkpoint {
    pub encoder: EncoderConfig,
    pub mode: TrainMode,
    pub step: u64,
    pub seed: u64,
    pub config: RunConfig,
    pub params: ParamStore,
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let meta = CheckpointMeta {
        kind: "checkpoint".into(),
        encoder: ckpt.encoder.clone(),
        mode: ckpt.mode,
        step: ckpt.step,
        seed: ckpt.seed,
        config: ckpt.config.clone(),
    };
    let mut c = Container {
        meta_json: serde_json::to_string(&meta).map_err(|e| Error::Data(e.to_string()))?,
        tensors: vec![],
    };
    c.push_params(&ckpt.params);
    write_container(path, &c)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let c = read_container(path)?;
    let meta: CheckpointMeta = serde_json::from_str(&c.meta_json)
        .map_err(|e| Error::Data(format!("bad checkpoint metadata: {e}")))?;
    if meta.kind != "checkpoint" {
        return Err(Error::Data(format!("container kind '{}' is not a checkpoint", meta.kind)));
    }
    let skeleton = init_params(&meta.encoder, 0, meta.mode == TrainMode::Direct)?;
    let params = c.params_matching(&skeleton)?;
    Ok(Checkpoint {
        encoder: meta.encoder,
        mode: meta.mode,
        step: meta.step,
        seed: meta.seed,
        config: meta.config,
        params,
    })
}

pub struct TrainSummary {
    pub checkpoint_path: PathBuf,
    pub log_path: PathBuf,
    pub epochs_run: usize,
    pub steps: u64,
    pub first_epoch_loss: f64,
    pub final_epoch_loss: f64,
    pub train_samples: usize,
}

fn encoder_config_for(cfg: &RunConfig, ds: &Dataset) -> Result<EncoderConfig> {
    if ds.window != cfg.model.window {
        return Err(Error::Config(format!(
            "dataset window {} does not match configured window {}",
            ds.window, cfg.model.window
        )));
    }
    let enc = cfg.encoder_config(ds.n_stocks(), ds.n_features);
    enc.validate()?;
    Ok(enc)
}

fn render_train_log(outcome: &TrainOutcome) -> String {
    let mut s = String::new();
    for e in &outcome.log {
        writeln!(s, "epoch {:>4} batch {:>4} loss {:.6}", e.epoch, e.batch, e.loss).expect("string write");
    }
    for (epoch, loss) in outcome.epoch_loss.iter().enumerate() {
        writeln!(s, "epoch {epoch:>4} mean_loss {loss:.6}").expect("string write");
    }
    if let Some(msg) = &outcome.diverged {
        writeln!(s, "diverged: {msg}").expect("string write");
    }
    s
}

/// Train per the config and write `<out>` (checkpoint) and `<out>.log`.
/// On divergence the last good parameters are still checkpointed and the
/// divergence is reported as an error.
pub fn run_train(cfg: &RunConfig, out: &Path) -> Result<TrainSummary> {
    cfg.validate()?;
    let ds = load_dataset(&cfg.data.dataset)?;
    let enc = encoder_config_for(cfg, &ds)?;
    let outcome = train(&enc, &cfg.train_options(), &ds.train)?;
    let log_path = log_path_for(out);
    std::fs::write(&log_path, render_train_log(&outcome))?;
    let ckpt = Checkpoint {
        encoder: enc,
        mode: cfg.train.mode,
        step: outcome.steps,
        seed: cfg.train.seed,
        config: cfg.clone(),
        params: outcome.params,
    };
    save_checkpoint(out, &ckpt)?;
    if let Some(msg) = outcome.diverged {
        return Err(Error::Diverged(format!(
            "{msg}; last good checkpoint written to {}",
            out.display()
        )));
    }
    Ok(TrainSummary {
        checkpoint_path: out.to_path_buf(),
        log_path,
        epochs_run: outcome.epoch_loss.len(),
        steps: ckpt.step,
        first_epoch_loss: outcome.epoch_loss.first().copied().unwrap_or(f64::NAN),
        final_epoch_loss: outcome.epoch_loss.last().copied().unwrap_or(f64::NAN),
        train_samples: ds.train.len(),
    })
}

fn log_path_for(out: &Path) -> PathBuf {
    let mut os = out.as_os_str().to_owned();
    os.push(".log");
    PathBuf::from(os)
}

// ── evaluate ─────────────────────────────────────────────────────────

pub struct EvalBundle {
    pub train_report: EvalReport,
    /// None when the test split is empty; metrics are then undefined.
    pub test_report: Option<EvalReport>,
    pub head: LogisticModel,
    /// Distinct training pairs the contrastive sampler can draw from.
    pub train_pair_capacity: u64,
}

fn contexts_to_xs(ctxs: &[ContextVector]) -> (Vec<Vec<f32>>, Vec<u8>) {
    (
        ctxs.iter().map(|c| c.values.clone()).collect(),
        ctxs.iter().map(|c| c.label).collect(),
    )
}

/// Per-dimension standardization of context vectors, fitted on the training
/// contexts only. Keeps the logistic head's conditioning independent of the
/// (head-dependent) context scale; constant dimensions pass through.
struct ContextScaler {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl ContextScaler {
    fn fit(xs: &[Vec<f32>]) -> ContextScaler {
        let dim = xs.first().map(|x| x.len()).unwrap_or(0);
        let n = xs.len().max(1) as f64;
        let mut mean = vec![0.0f64; dim];
        for x in xs {
            for (m, &v) in mean.iter_mut().zip(x) {
                *m += v as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut std = vec![0.0f64; dim];
        for x in xs {
            for d in 0..dim {
                let diff = x[d] as f64 - mean[d];
                std[d] += diff * diff;
            }
        }
        for s in std.iter_mut() {
            *s = (*s / n).sqrt();
            if *s <= 0.0 {
                *s = 1.0;
            }
        }
        ContextScaler { mean, std }
    }

    fn apply(&self, xs: &mut [Vec<f32>]) {
        for x in xs {
            for d in 0..x.len() {
                x[d] = ((x[d] as f64 - self.mean[d]) / self.std[d]) as f32;
            }
        }
    }
}

/// Score a checkpoint on both splits. Contrastively trained encoders get
/// the two-step protocol: fit a logistic head on frozen training contexts.
/// Direct checkpoints are scored through their own end-to-end head.
pub fn evaluate_checkpoint(cfg: &RunConfig, ckpt: &Checkpoint, ds: &Dataset) -> Result<EvalBundle> {
    let enc = &ckpt.encoder;
    if enc.window != ds.window || enc.input_dim != ds.n_features {
        return Err(Error::Config(format!(
            "checkpoint geometry (window {}, features {}) incompatible with dataset (window {}, features {})",
            enc.window, enc.input_dim, ds.window, ds.n_features
        )));
    }
    if enc.n_stocks != ds.n_stocks() {
        return Err(Error::Config(format!(
            "checkpoint was trained with {} stocks, dataset has {}",
            enc.n_stocks,
            ds.n_stocks()
        )));
    }
    let train_ctx = encode_contexts(enc, &ckpt.params, &ds.train)?;
    let (mut train_xs, train_ys) = contexts_to_xs(&train_ctx);
    let scaler = match ckpt.mode {
        TrainMode::Cmi => {
            let s = ContextScaler::fit(&train_xs);
            s.apply(&mut train_xs);
            Some(s)
        }
        TrainMode::Direct => None,
    };
    let head = match ckpt.mode {
        TrainMode::Cmi => train_logistic(
            &train_xs,
            &train_ys,
            cfg.train.head_epochs,
            cfg.train.head_lr,
            cfg.train.head_l2,
            cfg.train.seed,
        )?,
        TrainMode::Direct => {
            let w = ckpt
                .params
                .get("head.w")
                .ok_or_else(|| Error::Data("direct checkpoint is missing its head".into()))?;
            let b = ckpt
                .params
                .get("head.b")
                .ok_or_else(|| Error::Data("direct checkpoint is missing its head bias".into()))?;
            LogisticModel {
                weights: w.data().iter().map(|&v| v as f64).collect(),
                bias: b.data()[0] as f64,
                l2: 0.0,
            }
        }
    };
    let train_preds: Vec<u8> =
        train_xs.iter().map(|x| predict_label(&head, x)).collect::<Result<_>>()?;
    let mut train_report = evaluate(&train_preds, &train_ys)?;
    train_report.train_accuracy = Some(train_report.accuracy);

    let test_report = if ds.test.is_empty() {
        None
    } else {
        let test_ctx = encode_contexts(enc, &ckpt.params, &ds.test)?;
        let (mut test_xs, test_ys) = contexts_to_xs(&test_ctx);
        if let Some(s) = &scaler {
            s.apply(&mut test_xs);
        }
        let test_preds: Vec<u8> =
            test_xs.iter().map(|x| predict_label(&head, x)).collect::<Result<_>>()?;
        let mut r = evaluate(&test_preds, &test_ys)?;
        r.train_accuracy = Some(train_report.accuracy);
        r.generalization_gap = Some(generalization_gap(&train_report, &r));
        Some(r)
    };
    Ok(EvalBundle {
        train_report,
        test_report,
        head,
        train_pair_capacity: pair_capacity(ds.train.len() as u64),
    })
}

/// Load checkpoint + dataset, evaluate, and write `<out>.txt` / `<out>.json`.
pub fn run_evaluate(cfg: &RunConfig, checkpoint: &Path, out: &Path) -> Result<EvalBundle> {
    let ckpt = load_checkpoint(checkpoint)?;
    let ds = load_dataset(&cfg.data.dataset)?;
    let bundle = evaluate_checkpoint(cfg, &ckpt, &ds)?;
    let mut reports = vec![("train".to_string(), bundle.train_report.clone())];
    if let Some(t) = &bundle.test_report {
        reports.push(("test".to_string(), t.clone()));
    }
    write_report(&reports, out)?;
    Ok(bundle)
}

// ── ablation ─────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct VariantSpec {
    pub name: String,
    pub context_mode: crate::encoder::ContextMode,
    pub use_identity: bool,
    pub mode: TrainMode,
}

/// One row per configured variant, axes varied one at a time around the
/// base config, mirroring the comparison tables the method is judged by.
pub fn default_variants(cfg: &RunConfig) -> Vec<VariantSpec> {
    let base = (cfg.model.context_mode, cfg.model.use_identity, cfg.train.mode);
    let mut out = Vec::new();
    for &cm in &cfg.ablation.context_modes {
        out.push(VariantSpec {
            name: format!("context={}", cm.as_str()),
            context_mode: cm,
            use_identity: base.1,
            mode: base.2,
        });
    }
    for &id in &cfg.ablation.identity {
        out.push(VariantSpec {
            name: format!("identity={}", if id { "on" } else { "off" }),
            context_mode: base.0,
            use_identity: id,
            mode: base.2,
        });
    }
    for &m in &cfg.ablation.modes {
        out.push(VariantSpec {
            name: format!("mode={}", m.as_str()),
            context_mode: base.0,
            use_identity: base.1,
            mode: m,
        });
    }
    out
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Train and evaluate one variant for one seed, in memory.
pub fn run_variant(cfg: &RunConfig, ds: &Dataset, spec: &VariantSpec, seed: u64) -> Result<EvalReport> {
    let mut vcfg = cfg.clone();
    vcfg.model.context_mode = spec.context_mode;
    vcfg.model.use_identity = spec.use_identity;
    vcfg.train.mode = spec.mode;
    vcfg.train.seed = seed;
    let enc = encoder_config_for(&vcfg, ds)?;
    let outcome = train(&enc, &vcfg.train_options(), &ds.train)?;
    if let Some(msg) = outcome.diverged {
        return Err(Error::Diverged(format!("variant '{}': {msg}", spec.name)));
    }
    let ckpt = Checkpoint {
        encoder: enc,
        mode: spec.mode,
        step: outcome.steps,
        seed,
        config: vcfg.clone(),
        params: outcome.params,
    };
    let bundle = evaluate_checkpoint(&vcfg, &ckpt, ds)?;
    bundle
        .test_report
        .ok_or_else(|| Error::Data("ablation needs a non-empty test split".into()))
}

/// Run every variant over the configured seeds and aggregate.
pub fn run_ablation(cfg: &RunConfig, out: &Path) -> Result<Vec<AblationRow>> {
    cfg.validate()?;
    let ds = load_dataset(&cfg.data.dataset)?;
    let variants = default_variants(cfg);
    let seeds = if cfg.ablation.seeds.is_empty() {
        vec![cfg.train.seed]
    } else {
        cfg.ablation.seeds.clone()
    };
    let mut rows = Vec::with_capacity(variants.len());
    for spec in &variants {
        let mut accs = Vec::new();
        let mut mccs = Vec::new();
        let mut gaps = Vec::new();
        for &seed in &seeds {
            let r = run_variant(cfg, &ds, spec, seed)?;
            accs.push(r.accuracy);
            mccs.push(r.mcc);
            gaps.push(r.generalization_gap.unwrap_or(f64::NAN));
        }
        let (am, asd) = mean_std(&accs);
        let (mm, msd) = mean_std(&mccs);
        let (gm, _) = mean_std(&gaps);
        rows.push(AblationRow {
            variant: spec.name.clone(),
            mode: spec.mode.as_str().to_string(),
            context_mode: spec.context_mode.as_str().to_string(),
            use_identity: spec.use_identity,
            seeds: seeds.clone(),
            accuracy_mean: crate::report::round2(am),
            accuracy_std: crate::report::round2(asd),
            mcc_mean: crate::report::round4(mm),
            mcc_std: crate::report::round4(msd),
            gap_mean: crate::report::round2(gm),
        });
    }
    write_ablation(&rows, out)?;
    Ok(rows)
}
