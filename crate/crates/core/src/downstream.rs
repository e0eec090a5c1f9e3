//! Frozen-representation classification and evaluation metrics.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, streams};

/// Binary logistic regression over context vectors.
#[derive(Debug, Clone)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l2: f64,
}

/// Mean cross-entropy plus the L2 penalty (bias unregularized).
pub fn logistic_loss(model: &LogisticModel, xs: &[Vec<f32>], ys: &[u8]) -> f64 {
    let n = xs.len() as f64;
    let mut acc = 0.0f64;
    for (x, &y) in xs.iter().zip(ys) {
        let z = logit(model, x);
        // stable BCE on the logit
        acc += z.max(0.0) - z * y as f64 + (-z.abs()).exp().ln_1p();
    }
    let w2: f64 = model.weights.iter().map(|w| w * w).sum();
    acc / n + 0.5 * model.l2 * w2
}

fn logit(model: &LogisticModel, x: &[f32]) -> f64 {
    let mut z = model.bias;
    for (w, &v) in model.weights.iter().zip(x) {
        z += w * v as f64;
    }
    z
}

/// Fit by full-batch gradient descent on L2-regularized cross-entropy,
/// recording the loss after every step. Deterministic per seed.
pub fn train_logistic_with_history(
    xs: &[Vec<f32>],
    ys: &[u8],
    epochs: usize,
    lr: f64,
    l2: f64,
    seed: u64,
) -> Result<(LogisticModel, Vec<f64>)> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::Contract(format!(
            "logistic training needs matching non-empty inputs, got {} contexts / {} labels",
            xs.len(),
            ys.len()
        )));
    }
    let ups = ys.iter().filter(|&&y| y == 1).count();
    if ups == 0 || ups == ys.len() {
        return Err(Error::Data("logistic training set contains a single class".into()));
    }
    let dim = xs[0].len();
    if xs.iter().any(|x| x.len() != dim) {
        return Err(Error::Shape("context vectors have inconsistent dimensions".into()));
    }

    let mut rng = stream(seed, &[streams::HEAD]);
    let mut model = LogisticModel {
        weights: (0..dim).map(|_| rng.gen_range(-0.01..0.01)).collect(),
        bias: 0.0,
        l2,
    };
    let n = xs.len() as f64;
    let mut history = Vec::with_capacity(epochs);
    let mut grad_w = vec![0.0f64; dim];
    for _ in 0..epochs {
        grad_w.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_b = 0.0f64;
        for (x, &y) in xs.iter().zip(ys) {
            let z = logit(&model, x);
            let p = 1.0 / (1.0 + (-z).exp());
            let err = p - y as f64;
            for (g, &v) in grad_w.iter_mut().zip(x) {
                *g += err * v as f64;
            }
            grad_b += err;
        }
        for (w, g) in model.weights.iter_mut().zip(&grad_w) {
            *w -= lr * (g / n + l2 * *w);
        }
        model.bias -= lr * grad_b / n;
        history.push(logistic_loss(&model, xs, ys));
    }
    Ok((model, history))
}

/// See [`train_logistic_with_history`].
pub fn train_logistic(
    xs: &[Vec<f32>],
    ys: &[u8],
    epochs: usize,
    lr: f64,
    l2: f64,
    seed: u64,
) -> Result<LogisticModel> {
    train_logistic_with_history(xs, ys, epochs, lr, l2, seed).map(|(m, _)| m)
}

/// sigmoid(w . c + b)
pub fn predict_proba(model: &LogisticModel, context: &[f32]) -> Result<f64> {
    if context.len() != model.weights.len() {
        return Err(Error::Shape(format!(
            "context dimension {} != model dimension {}",
            context.len(),
            model.weights.len()
        )));
    }
    Ok(1.0 / (1.0 + (-logit(model, context)).exp()))
}

/// Label 1 iff p >= 0.5.
pub fn predict_label(model: &LogisticModel, context: &[f32]) -> Result<u8> {
    Ok(if predict_proba(model, context)? >= 0.5 { 1 } else { 0 })
}

/// Confusion-matrix metrics for one evaluated split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    /// Percentage in [0, 100].
    pub accuracy: f64,
    /// Matthews correlation in [-1, 1]; 0 when a denominator factor is 0.
    pub mcc: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    /// Training-split accuracy, filled by the evaluation pipeline.
    pub train_accuracy: Option<f64>,
    /// train accuracy - test accuracy, percentage points.
    pub generalization_gap: Option<f64>,
}

/// Matthews correlation coefficient with the 0-denominator convention.
pub fn mcc(tp: usize, fp: usize, tn: usize, fn_: usize) -> f64 {
    let (tp, fp, tn, fn_) = (tp as f64, fp as f64, tn as f64, fn_ as f64);
    let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if denom == 0.0 {
        return 0.0;
    }
    (tp * tn - fp * fn_) / denom.sqrt()
}

/// Accuracy, MCC, and confusion counts of predicted vs true labels.
pub fn evaluate(preds: &[u8], labels: &[u8]) -> Result<EvalReport> {
    if preds.is_empty() || preds.len() != labels.len() {
        return Err(Error::Contract(format!(
            "evaluate: {} predictions vs {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &y) in preds.iter().zip(labels) {
        match (p, y) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 0) => tn += 1,
            (0, 1) => fn_ += 1,
            _ => return Err(Error::Contract("labels must be 0 or 1".into())),
        }
    }
    let n = preds.len();
    Ok(EvalReport {
        n,
        accuracy: 100.0 * (tp + tn) as f64 / n as f64,
        mcc: mcc(tp, fp, tn, fn_),
        tp,
        fp,
        tn,
        fn_,
        train_accuracy: None,
        generalization_gap: None,
    })
}

/// Difference of accuracies in percentage points (equivalently, of errors).
pub fn generalization_gap(train: &EvalReport, test: &EvalReport) -> f64 {
    train.accuracy - test.accuracy
}

/// Train the same encoder architecture end-to-end with a linear-sigmoid
/// head on the original labels: the baseline the contrastive two-step
/// method is compared against.
pub fn direct_head_train(
    cfg: &crate::encoder::EncoderConfig,
    windows: &[crate::features::WindowSample],
    opts: &crate::train::TrainOptions,
) -> Result<crate::train::TrainOutcome> {
    let opts = crate::train::TrainOptions { mode: crate::train::TrainMode::Direct, ..opts.clone() };
    crate::train::train(cfg, &opts, windows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn separable_toy_set_fits_perfectly() {
        // two clusters on a line
        let xs: Vec<Vec<f32>> = vec![
            vec![-2.0, 1.0],
            vec![-1.5, 0.5],
            vec![-1.0, 1.5],
            vec![1.0, -0.5],
            vec![1.5, 0.0],
            vec![2.0, 1.0],
        ];
        let ys = vec![0u8, 0, 0, 1, 1, 1];
        let model = train_logistic(&xs, &ys, 2000, 0.5, 1e-6, 7).unwrap();
        let preds: Vec<u8> = xs.iter().map(|x| predict_label(&model, x).unwrap()).collect();
        assert_eq!(preds, ys);
    }

    #[test]
    fn zero_contexts_learn_the_class_prior() {
        // with zero features the data gradient on w vanishes; the L2 term
        // alone shrinks the seeded init toward 0 while the bias settles at
        // the prior's logit
        let xs: Vec<Vec<f32>> = vec![vec![0.0, 0.0]; 10];
        let ys = vec![1u8, 1, 1, 1, 1, 1, 1, 0, 0, 0];
        let model = train_logistic(&xs, &ys, 5000, 0.5, 1e-2, 7).unwrap();
        assert!(model.weights.iter().all(|w| w.abs() < 1e-3));
        let prior = 0.7f64;
        let want = (prior / (1.0 - prior)).ln();
        assert!((model.bias - want).abs() < 1e-2, "bias {} vs {}", model.bias, want);
    }

    #[test]
    fn huge_l2_shrinks_weights_to_zero() {
        let xs: Vec<Vec<f32>> = vec![vec![-1.0], vec![-0.5], vec![0.5], vec![1.0]];
        let ys = vec![0u8, 0, 1, 1];
        let model = train_logistic(&xs, &ys, 3000, 1e-3, 1e3, 7).unwrap();
        assert!(model.weights[0].abs() < 1e-3, "w = {}", model.weights[0]);
    }

    #[test]
    fn single_class_set_rejected() {
        let xs: Vec<Vec<f32>> = vec![vec![1.0], vec![2.0]];
        assert!(matches!(train_logistic(&xs, &[1, 1], 10, 0.1, 0.0, 7), Err(Error::Data(_))));
    }

    #[test]
    fn loss_monotonically_non_increasing_at_small_lr() {
        let xs: Vec<Vec<f32>> = vec![vec![-2.0], vec![-1.0], vec![1.0], vec![2.0], vec![0.5], vec![-0.5]];
        let ys = vec![0u8, 0, 1, 1, 1, 0];
        let (_, history) = train_logistic_with_history(&xs, &ys, 200, 1e-3, 1e-4, 7).unwrap();
        for w in history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "loss increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn predict_proba_basics() {
        let m = LogisticModel { weights: vec![0.0, 0.0], bias: 0.0, l2: 0.0 };
        assert_eq!(predict_proba(&m, &[3.0, -1.0]).unwrap(), 0.5);
        let m2 = LogisticModel { weights: vec![1e3], bias: 0.0, l2: 0.0 };
        assert!(predict_proba(&m2, &[1.0]).unwrap() > 0.999);
        // sign symmetry with zero bias
        let m3 = LogisticModel { weights: vec![0.7, -0.3], bias: 0.0, l2: 0.0 };
        let p1 = predict_proba(&m3, &[1.0, 2.0]).unwrap();
        let p2 = predict_proba(&m3, &[-1.0, -2.0]).unwrap();
        assert!((p1 + p2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn predict_dimension_mismatch() {
        let m = LogisticModel { weights: vec![0.0, 0.0], bias: 0.0, l2: 0.0 };
        assert!(matches!(predict_proba(&m, &[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn evaluate_known_confusion_matrix() {
        // TP=3, TN=4, FP=1, FN=2 -> accuracy 70%, MCC = 10/sqrt(600)
        let preds = [1u8, 1, 1, 1, 0, 0, 0, 0, 0, 0];
        let labels = [1u8, 1, 1, 0, 1, 1, 0, 0, 0, 0];
        let r = evaluate(&preds, &labels).unwrap();
        assert_eq!((r.tp, r.fp, r.tn, r.fn_), (3, 1, 4, 2));
        assert!((r.accuracy - 70.0).abs() < 1e-12);
        assert!((r.mcc - 0.4082).abs() < 1e-4, "mcc {}", r.mcc);
    }

    #[test]
    fn perfect_and_inverted_predictions() {
        let labels = [1u8, 0, 1, 0, 1];
        let r = evaluate(&labels, &labels).unwrap();
        assert_eq!(r.accuracy, 100.0);
        assert_eq!(r.mcc, 1.0);
        let inverted: Vec<u8> = labels.iter().map(|&y| 1 - y).collect();
        let r2 = evaluate(&inverted, &labels).unwrap();
        assert_eq!(r2.accuracy, 0.0);
        assert_eq!(r2.mcc, -1.0);
    }

    #[test]
    fn mcc_zero_denominator_convention() {
        // all predictions positive: TN+FN = 0
        assert_eq!(mcc(5, 5, 0, 0), 0.0);
    }

    #[test]
    fn evaluate_length_mismatch_rejected() {
        assert!(matches!(evaluate(&[1], &[1, 0]), Err(Error::Contract(_))));
        assert!(matches!(evaluate(&[], &[]), Err(Error::Contract(_))));
    }

    #[test]
    fn gap_is_accuracy_difference() {
        let mut train = evaluate(&[1, 1, 0, 0, 1], &[1, 1, 0, 0, 1]).unwrap();
        train.accuracy = 80.0;
        let mut test = train.clone();
        test.accuracy = 77.0;
        assert!((generalization_gap(&train, &test) - 3.0).abs() < 1e-12);
        assert_eq!(generalization_gap(&train, &train), 0.0);
    }

    #[test]
    fn balanced_random_predictions_have_small_mcc() {
        use rand::Rng;
        let mut rng = crate::rng::stream(12, &[55]);
        let n = 1000;
        let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2u8)).collect();
        let preds: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2u8)).collect();
        let r = evaluate(&preds, &labels).unwrap();
        assert!(r.mcc.abs() < 0.2, "mcc {}", r.mcc);
    }

    proptest! {
        #[test]
        fn evaluate_matches_brute_force_oracle(
            pairs in proptest::collection::vec((0u8..2, 0u8..2), 1..200)
        ) {
            let preds: Vec<u8> = pairs.iter().map(|(p, _)| *p).collect();
            let labels: Vec<u8> = pairs.iter().map(|(_, y)| *y).collect();
            let r = evaluate(&preds, &labels).unwrap();

            // brute-force re-count
            let mut counts = [0usize; 4]; // tp fp tn fn
            for (p, y) in &pairs {
                match (p, y) {
                    (1, 1) => counts[0] += 1,
                    (1, 0) => counts[1] += 1,
                    (0, 0) => counts[2] += 1,
                    _ => counts[3] += 1,
                }
            }
            prop_assert_eq!((r.tp, r.fp, r.tn, r.fn_), (counts[0], counts[1], counts[2], counts[3]));
            let acc = 100.0 * (counts[0] + counts[2]) as f64 / pairs.len() as f64;
            prop_assert!((r.accuracy - acc).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&r.mcc));
        }
    }
}
