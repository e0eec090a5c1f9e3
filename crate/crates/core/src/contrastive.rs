//! Pairwise contrastive machinery: critic, pair prediction, XOR-labelled
//! pair sampling, the contrastive loss, and the CMI lower-bound diagnostic.
//!
//! Notation: for an anchor context c and two sampled contexts (z, z_bar),
//! d(c,z) is cosine similarity, the critic is f = e^d, the pair prediction
//! is -log2 sigmoid(|d(c,z) - d(c,z_bar)|), and the XOR label is 0 when the
//! two sampled contexts come from the same trend class.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};

/// One contrastive comparison: indices into the batch for the anchor and
/// the two sampled contexts, plus the XOR label (0 same class, 1 different).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairSample {
    pub anchor: usize,
    pub first: usize,
    pub second: usize,
    pub xor_label: u8,
}

/// One pair per anchor of the originating batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairBatch {
    pub pairs: Vec<PairSample>,
}

const LN2: f64 = std::f64::consts::LN_2;

/// Normalized inner product in [-1, 1]; 0 if either norm is ~0.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "cosine_similarity: lengths {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for i in 0..a.len() {
        let x = a[i] as f64;
        let y = b[i] as f64;
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    let (na, nb) = (na.sqrt(), nb.sqrt());
    if na < 1e-12 || nb < 1e-12 {
        return Ok(0.0);
    }
    Ok(dot / (na * nb))
}

/// The exponential critic f(c,z) = e^{d(c,z)}, in [e^-1, e].
pub fn critic(c: &[f32], z: &[f32]) -> Result<f64> {
    Ok(cosine_similarity(c, z)?.exp())
}

/// Pair prediction from precomputed similarities:
/// -log2 sigmoid(|d1 - d2|), in (0, 1]; equals 1 iff d1 = d2.
pub fn pair_prediction_from_sims(d1: f64, d2: f64) -> f64 {
    let s = (d1 - d2).abs();
    let sig = 1.0 / (1.0 + (-s).exp());
    -(sig.ln() / LN2)
}

/// Predicted probability that (z, z_bar) come from different classes given
/// the anchor c.
pub fn pair_prediction(c: &[f32], z: &[f32], z_bar: &[f32]) -> Result<f64> {
    Ok(pair_prediction_from_sims(
        cosine_similarity(c, z)?,
        cosine_similarity(c, z_bar)?,
    ))
}

/// Draw one (first, second) pair per anchor, uniformly over ordered pairs of
/// distinct indices that also differ from the anchor, and XOR the sources'
/// labels. Deterministic for a given generator state.
pub fn sample_pairs(labels: &[u8], rng: &mut ChaCha8Rng) -> Result<PairBatch> {
    let b = labels.len();
    if b < 3 {
        return Err(Error::InsufficientBatch(b));
    }
    let mut pairs = Vec::with_capacity(b);
    for anchor in 0..b {
        // j uniform over {0..b} \ {anchor}
        let mut first = rng.gen_range(0..b - 1);
        if first >= anchor {
            first += 1;
        }
        // k uniform over {0..b} \ {anchor, first}
        let mut second = rng.gen_range(0..b - 2);
        for excluded in [anchor.min(first), anchor.max(first)] {
            if second >= excluded {
                second += 1;
            }
        }
        pairs.push(PairSample {
            anchor,
            first,
            second,
            xor_label: labels[first] ^ labels[second],
        });
    }
    Ok(PairBatch { pairs })
}

/// Contrastive loss: mean of y*p + (1-y)*(1-p). Minimizing drives the
/// prediction toward 1 for same-class pairs and 0 for different-class pairs.
pub fn contrastive_loss(xor_labels: &[u8], predictions: &[f64]) -> Result<f64> {
    if xor_labels.is_empty() || xor_labels.len() != predictions.len() {
        return Err(Error::Contract(format!(
            "contrastive_loss: {} labels vs {} predictions",
            xor_labels.len(),
            predictions.len()
        )));
    }
    let mut acc = 0.0f64;
    for (&y, &p) in xor_labels.iter().zip(predictions) {
        acc += if y == 1 { p } else { 1.0 - p };
    }
    Ok(acc / xor_labels.len() as f64)
}

/// Batch estimate of the CMI lower bound in bits:
/// mean log2( f(c,z) / (f(c,z) + f(c,z_bar)) ), always <= 0. The implied
/// estimate of the conditioned information is `bound + 1` bit (the -log K
/// term with K = 2 classes).
pub fn cmi_lower_bound(triples: &[(&[f32], &[f32], &[f32])]) -> Result<f64> {
    if triples.is_empty() {
        return Err(Error::Contract("cmi_lower_bound: empty batch".into()));
    }
    let mut acc = 0.0f64;
    for (c, z, z_bar) in triples {
        let d1 = cosine_similarity(c, z)?;
        let d2 = cosine_similarity(c, z_bar)?;
        acc += cmi_bound_term(d1, d2);
    }
    Ok(acc / triples.len() as f64)
}

/// Per-sample bound term log2(e^d1 / (e^d1 + e^d2)) = log2 sigmoid(d1 - d2).
pub fn cmi_bound_term(d1: f64, d2: f64) -> f64 {
    let sig = 1.0 / (1.0 + (d2 - d1).exp());
    sig.ln() / LN2
}

/// Number of distinct sample pairs binom(N, 2) = N(N-1)/2: how many
/// pair-labels a dataset of N windows can supply.
pub fn pair_capacity(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Record the contrastive loss on a tape over encoded contexts.
/// `contexts[i]` must be a `[latent_dim]` var; predictions follow
/// -log2 sigmoid(|d(c,z) - d(c,z_bar)|) and the loss is their XOR-weighted
/// mean, matching [`contrastive_loss`].
pub fn build_pair_loss(tape: &mut Tape, contexts: &[Var], pairs: &PairBatch) -> Result<Var> {
    if pairs.pairs.is_empty() {
        return Err(Error::Contract("build_pair_loss: empty pair batch".into()));
    }
    let mut terms = Vec::with_capacity(pairs.pairs.len());
    for p in &pairs.pairs {
        let c = contexts[p.anchor];
        let z = contexts[p.first];
        let z_bar = contexts[p.second];
        let d1 = tape.cosine(c, z)?;
        let d2 = tape.cosine(c, z_bar)?;
        let diff = tape.sub(d1, d2)?;
        let s = tape.abs(diff)?;
        let sig = tape.sigmoid(s)?;
        let log_sig = tape.ln(sig)?;
        // prediction = -log2 sigmoid(s)
        let pred = tape.affine(log_sig, -1.0 / LN2, 0.0)?;
        let term = if p.xor_label == 1 {
            pred
        } else {
            tape.affine(pred, -1.0, 1.0)?
        };
        terms.push(term);
    }
    let total = tape.sum_many(&terms)?;
    tape.affine(total, 1.0 / terms.len() as f64, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, streams};
    use proptest::prelude::*;

    #[test]
    fn cosine_basics() {
        let u = [1.0f32, 2.0, -0.5];
        assert!((cosine_similarity(&u, &u).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine_similarity(&[1.0, 1.0], &[-1.0, -1.0]).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_zero_norm_guard() {
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn cosine_dimension_mismatch() {
        assert!(matches!(cosine_similarity(&[1.0], &[1.0, 2.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn critic_range_endpoints() {
        let e = std::f64::consts::E;
        assert!((critic(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((critic(&[1.0, 1.0], &[2.0, 2.0]).unwrap() - e).abs() < 1e-9);
        assert!((critic(&[1.0, 1.0], &[-1.0, -1.0]).unwrap() - 1.0 / e).abs() < 1e-9);
    }

    #[test]
    fn pair_prediction_known_values() {
        // equal similarities: -log2(1/2) = 1
        assert!((pair_prediction_from_sims(0.3, 0.3) - 1.0).abs() < 1e-12);
        // s = 2: -log2 sigmoid(2) ~ 0.18312
        let p = pair_prediction_from_sims(1.0, -1.0);
        assert!((p - 0.18312).abs() < 1e-4, "{p}");
        // large s drives the prediction to 0
        assert!(pair_prediction_from_sims(10.0, 0.0) < 0.01);
    }

    #[test]
    fn xor_labels_follow_sources() {
        let mut rng = stream(3, &[streams::PAIRS, 0, 0]);
        let labels = [1u8, 1, 0, 1, 0, 0, 1, 0];
        let batch = sample_pairs(&labels, &mut rng).unwrap();
        for p in &batch.pairs {
            assert_eq!(p.xor_label, labels[p.first] ^ labels[p.second]);
            assert_ne!(p.first, p.second);
            assert_ne!(p.first, p.anchor);
            assert_ne!(p.second, p.anchor);
        }
        assert_eq!(batch.pairs.len(), labels.len());
    }

    #[test]
    fn pair_sampling_is_seed_deterministic() {
        let labels = [1u8, 0, 1, 0, 1, 1, 0, 0];
        let a = sample_pairs(&labels, &mut stream(9, &[streams::PAIRS, 2, 5])).unwrap();
        let b = sample_pairs(&labels, &mut stream(9, &[streams::PAIRS, 2, 5])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tiny_batch_is_insufficient() {
        let mut rng = stream(1, &[streams::PAIRS, 0, 0]);
        assert!(matches!(
            sample_pairs(&[1, 0], &mut rng),
            Err(Error::InsufficientBatch(2))
        ));
    }

    #[test]
    fn sampling_covers_all_eligible_pairs() {
        // over many draws with b=4, every ordered (first, second) pair of
        // distinct non-anchor indices for anchor 0 appears
        let labels = [1u8, 0, 1, 0];
        let mut seen = std::collections::HashSet::new();
        for trial in 0..200u64 {
            let mut rng = stream(trial, &[streams::PAIRS, 0, 0]);
            let batch = sample_pairs(&labels, &mut rng).unwrap();
            let p = batch.pairs[0];
            seen.insert((p.first, p.second));
        }
        let expected: std::collections::HashSet<(usize, usize)> =
            [(1, 2), (1, 3), (2, 1), (2, 3), (3, 1), (3, 2)].into_iter().collect();
        assert_eq!(seen, expected);
    }

    #[test]
    fn contrastive_loss_examples() {
        // perfect different-class separation
        assert_eq!(contrastive_loss(&[1, 1], &[0.0, 0.0]).unwrap(), 0.0);
        // perfect same-class match
        assert_eq!(contrastive_loss(&[0, 0], &[1.0, 1.0]).unwrap(), 0.0);
        // mixed: (y=1, p=0.2) and (y=0, p=0.8) -> 0.2
        let l = contrastive_loss(&[1, 0], &[0.2, 0.8]).unwrap();
        assert!((l - 0.2).abs() < 1e-12);
    }

    #[test]
    fn contrastive_loss_empty_batch_rejected() {
        assert!(matches!(contrastive_loss(&[], &[]), Err(Error::Contract(_))));
    }

    #[test]
    fn cmi_bound_examples() {
        // equal similarities everywhere: log2(1/2) = -1
        let c = [1.0f32, 0.0];
        let z = [1.0f32, 0.0];
        let same = cmi_lower_bound(&[(&c, &z, &z)]).unwrap();
        assert!((same + 1.0).abs() < 1e-12);
        // d1=1, d2=-1: log2(e / (e + e^-1)) ~ -0.18312
        let zb = [-1.0f32, 0.0];
        let v = cmi_lower_bound(&[(&c, &z, &zb)]).unwrap();
        assert!((v + 0.18312).abs() < 1e-4, "{v}");
    }

    #[test]
    fn pair_capacity_values() {
        assert_eq!(pair_capacity(4), 6);
        assert_eq!(pair_capacity(1), 0);
        assert_eq!(pair_capacity(0), 0);
        // a decade of daily windows: (252*10*0.8 - 30) + 1 = 1987 anchors
        assert_eq!(pair_capacity(1987), 1_973_091);
    }

    #[test]
    fn tape_loss_matches_scalar_recomputation() {
        use rand::Rng;
        let mut rng = stream(21, &[7]);
        let b = 6;
        let dim = 5;
        let ctx_values: Vec<Vec<f32>> =
            (0..b).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0f32)).collect()).collect();
        let labels: Vec<u8> = (0..b).map(|_| rng.gen_range(0..2u8)).collect();
        let pairs = sample_pairs(&labels, &mut stream(21, &[streams::PAIRS, 0, 0])).unwrap();

        let mut tape = Tape::new();
        let vars: Vec<Var> = ctx_values
            .iter()
            .map(|v| tape.leaf_data(vec![dim], v.clone(), true).unwrap())
            .collect();
        let loss = build_pair_loss(&mut tape, &vars, &pairs).unwrap();

        // independent scalar route
        let mut preds = Vec::new();
        let mut ys = Vec::new();
        for p in &pairs.pairs {
            preds.push(
                pair_prediction(&ctx_values[p.anchor], &ctx_values[p.first], &ctx_values[p.second])
                    .unwrap(),
            );
            ys.push(p.xor_label);
        }
        let expected = contrastive_loss(&ys, &preds).unwrap();
        let got = tape.value(loss)[0] as f64;
        assert!((got - expected).abs() < 1e-6, "tape {got} vs scalar {expected}");
    }

    proptest! {
        #[test]
        fn prediction_strictly_decreasing_in_gap(d1 in -1.0f64..1.0, d2 in -1.0f64..1.0) {
            let p = pair_prediction_from_sims(d1, d2);
            prop_assert!(p > 0.0 && p <= 1.0);
            if (d1 - d2).abs() > 1e-9 {
                prop_assert!(p < 1.0);
                // widening the gap lowers the prediction
                let wider = pair_prediction_from_sims(d1 + (d1 - d2).signum() * 0.1, d2);
                prop_assert!(wider < p);
            } else if d1 == d2 {
                prop_assert!((p - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn loss_stays_in_unit_interval(
            ys in proptest::collection::vec(0u8..2, 1..40),
            seed in 0u64..1000
        ) {
            let mut rng = stream(seed, &[77]);
            use rand::Rng;
            let ps: Vec<f64> = (0..ys.len()).map(|_| {
                let d1 = rng.gen_range(-1.0..1.0);
                let d2 = rng.gen_range(-1.0..1.0);
                pair_prediction_from_sims(d1, d2)
            }).collect();
            let l = contrastive_loss(&ys, &ps).unwrap();
            prop_assert!((0.0..=1.0).contains(&l));
        }

        #[test]
        fn bound_never_positive(d1 in -1.0f64..1.0, d2 in -1.0f64..1.0) {
            prop_assert!(cmi_bound_term(d1, d2) <= 0.0);
        }
    }
}
