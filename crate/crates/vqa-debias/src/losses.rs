//! Loss functions: weighted cross-entropy, KL divergence, distillation, and
//! the total training objective.
//!
//! Each loss exists twice: as a pure `f64` function (the contract the tests
//! pin down) and as a tape builder the trainer differentiates through. The
//! tape builders mirror the pure arithmetic term for term.

use tapegrad::{NodeId, Tape};

use crate::data_synth::Dataset;
use crate::error::{Error, Result};

/// Lower clamp on distribution entries entering a logarithm.
pub const KL_EPS: f64 = 1e-9;

/// Loss weighting: Eq.-level hyperparameters plus per-answer class weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LossWeights {
    pub alpha1: f64,
    pub alpha2: f64,
    pub distill_weight_v: f64,
    pub distill_weight_q: f64,
    pub class_weights: Vec<f64>,
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("distill_weight_v", self.distill_weight_v),
            ("distill_weight_q", self.distill_weight_q),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Validation(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if self.class_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Validation(
                "class weights must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Named scalar components of one training step. `total` always satisfies
/// `total = gan + alpha1 * wce + alpha2 * distill` bit-exactly because it is
/// computed by [`total_loss`] from the stored fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBundle {
    pub wce: f64,
    pub distill: f64,
    pub gan: f64,
    pub total: f64,
    pub l_d: f64,
    pub l_g: f64,
    pub l_qv: f64,
    pub l_vq: f64,
}

impl LossBundle {
    pub fn zero() -> Self {
        LossBundle {
            wce: 0.0,
            distill: 0.0,
            gan: 0.0,
            total: 0.0,
            l_d: 0.0,
            l_g: 0.0,
            l_qv: 0.0,
            l_vq: 0.0,
        }
    }
}

/// CSV schema for per-step loss logging.
pub const LOSS_CSV_HEADER: &str = "step,wce,distill,l_d,l_g,l_qv,l_vq,total";

pub fn loss_csv_row(step: u64, b: &LossBundle) -> String {
    format!(
        "{step},{},{},{},{},{},{},{}",
        b.wce, b.distill, b.l_d, b.l_g, b.l_qv, b.l_vq, b.total
    )
}

/// Weighted binary cross-entropy summed over (sample, class) entries:
/// −Σ_i w_i [y_i ln ŷ_i + (1−y_i) ln(1−ŷ_i)].
pub fn weighted_cross_entropy(y_true: &[f64], y_pred: &[f64], w: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() || y_true.len() != w.len() {
        return Err(Error::Shape(format!(
            "weighted_cross_entropy: lengths {} / {} / {}",
            y_true.len(),
            y_pred.len(),
            w.len()
        )));
    }
    if let Some(bad) = w.iter().find(|wi| **wi < 0.0 || !wi.is_finite()) {
        return Err(Error::Validation(format!("negative class weight {bad}")));
    }
    if y_pred.iter().any(|p| *p <= 0.0 || *p >= 1.0) {
        return Err(Error::Validation(
            "predictions must lie strictly inside (0, 1)".into(),
        ));
    }
    if y_true.iter().any(|y| *y < 0.0 || *y > 1.0) {
        return Err(Error::Validation("labels must lie in [0, 1]".into()));
    }
    let mut sum = 0.0;
    for ((y, p), wi) in y_true.iter().zip(y_pred.iter()).zip(w.iter()) {
        sum += wi * (y * p.ln() + (1.0 - y) * (1.0 - p).ln());
    }
    Ok(-sum)
}

/// KL(p ‖ q) = Σ p_i ln(p_i / q_i) with 0·ln 0 := 0 and q clamped at
/// [`KL_EPS`]. Inputs must be normalized to 1 ± 1e-6.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!(
            "kl_divergence: lengths {} vs {}",
            p.len(),
            q.len()
        )));
    }
    for (name, dist) in [("p", p), ("q", q)] {
        let sum: f64 = dist.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Validation(format!(
                "{name} is not normalized: sums to {sum}"
            )));
        }
        if dist.iter().any(|x| *x < 0.0) {
            return Err(Error::Validation(format!("{name} has negative entries")));
        }
    }
    let mut sum = 0.0;
    for (pi, qi) in p.iter().zip(q.iter()) {
        if *pi > 0.0 {
            sum += pi * (pi.ln() - qi.max(KL_EPS).ln());
        }
    }
    Ok(sum)
}

/// Dual-teacher distillation: weighted KL of each teacher against the
/// student distribution.
pub fn distill_loss(
    p_teacher_v: &[f64],
    p_teacher_q: &[f64],
    p_student: &[f64],
    weights: &LossWeights,
) -> Result<f64> {
    let kl_v = kl_divergence(p_teacher_v, p_student)?;
    let kl_q = kl_divergence(p_teacher_q, p_student)?;
    Ok(weights.distill_weight_v * kl_v + weights.distill_weight_q * kl_q)
}

/// Total objective: gan + α₁·wce + α₂·distill. The exact expression order is
/// part of the contract (tests compare bitwise).
pub fn total_loss(l_gan: f64, l_wce: f64, l_distill: f64, alpha1: f64, alpha2: f64) -> f64 {
    l_gan + alpha1 * l_wce + alpha2 * l_distill
}

/// Inverse answer-frequency class weights from the train split: normalized to
/// mean 1 and clipped to [0.1, 10]. Unseen answers count once so the inverse
/// stays finite.
pub fn class_weights_from_train(train: &Dataset) -> Vec<f64> {
    let vocab = train.answer_vocab.len();
    let mut counts = vec![0usize; vocab];
    for inst in &train.instances {
        counts[inst.target_answer()] += 1;
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![1.0; vocab];
    }
    let raw: Vec<f64> = counts
        .iter()
        .map(|c| total as f64 / (*c).max(1) as f64)
        .collect();
    let mean = raw.iter().sum::<f64>() / vocab as f64;
    raw.into_iter()
        .map(|w| (w / mean).clamp(0.1, 10.0))
        .collect()
}

// ---------------------------------------------------------------------------
// Tape builders
// ---------------------------------------------------------------------------

/// Weighted cross-entropy node for one instance: `probs` is a 1×A node of
/// probabilities strictly inside (0, 1); labels and weights are constants.
pub fn wce_node(
    tape: &mut Tape,
    y_true: &[f64],
    probs: NodeId,
    w: &[f64],
) -> Result<NodeId> {
    let a = y_true.len();
    if tape.value(probs).dim() != (1, a) || w.len() != a {
        return Err(Error::Shape(format!(
            "wce_node: probs {:?}, labels {a}, weights {}",
            tape.value(probs).dim(),
            w.len()
        )));
    }
    let y = tape.constant(row(y_true));
    let one = tape.constant(row(&vec![1.0; a]));
    let wv = tape.constant(row(w));
    let ln_p = tape.ln(probs);
    let pos = tape.mul_elem(y, ln_p)?;
    let one_minus_y = tape.sub(one, y)?;
    let one_minus_p = tape.sub(one, probs)?;
    let ln_q = tape.ln(one_minus_p);
    let neg = tape.mul_elem(one_minus_y, ln_q)?;
    let both = tape.add(pos, neg)?;
    let weighted = tape.mul_elem(wv, both)?;
    let sum = tape.sum_all(weighted);
    Ok(tape.scale(sum, -1.0))
}

/// KL(p_const ‖ q) node; `q` is a 1×A distribution node.
pub fn kl_node(tape: &mut Tape, p_const: &[f64], q: NodeId) -> Result<NodeId> {
    let a = p_const.len();
    if tape.value(q).dim() != (1, a) {
        return Err(Error::Shape(format!(
            "kl_node: q {:?} vs p length {a}",
            tape.value(q).dim()
        )));
    }
    let p_log_p: f64 = p_const
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| p * p.ln())
        .sum();
    let p = tape.constant(row(p_const));
    let q_clamped = tape.clamp(q, KL_EPS, f64::INFINITY);
    let ln_q = tape.ln(q_clamped);
    let cross = tape.mul_elem(p, ln_q)?;
    let cross_sum = tape.sum_all(cross);
    let lhs = tape.scalar_const(p_log_p);
    tape.sub(lhs, cross_sum).map_err(Error::from)
}

fn row(values: &[f64]) -> tapegrad::Mat {
    tapegrad::Mat::from_shape_vec((1, values.len()), values.to_vec()).expect("row shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use tapegrad::ParamSet;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn wce_matches_hand_arithmetic() {
        // y=(1,0), p=(0.5,0.5), w=(2,1) → 2 ln2 + ln2 = 3 ln2
        let v = weighted_cross_entropy(&[1.0, 0.0], &[0.5, 0.5], &[2.0, 1.0]).unwrap();
        assert!((v - 3.0 * LN2).abs() < 1e-12);
    }

    #[test]
    fn wce_perfect_prediction_is_near_zero() {
        let v = weighted_cross_entropy(&[1.0], &[1.0 - 1e-12], &[1.0]).unwrap();
        assert!(v >= 0.0 && v < 1e-10);
    }

    #[test]
    fn wce_identity_weights_reduce_to_plain_bce() {
        // independent implementation of the unweighted sum
        let y: [f64; 4] = [1.0, 0.0, 0.3, 0.9];
        let p: [f64; 4] = [0.8, 0.2, 0.5, 0.6];
        let mut expected = 0.0;
        for (yi, pi) in y.iter().zip(p.iter()) {
            expected -= yi * pi.ln() + (1.0 - yi) * (1.0 - pi).ln();
        }
        let v = weighted_cross_entropy(&y, &p, &[1.0; 4]).unwrap();
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn wce_rejects_bad_inputs() {
        assert!(matches!(
            weighted_cross_entropy(&[1.0], &[0.5], &[-1.0]),
            Err(Error::Validation(_))
        ));
        assert!(weighted_cross_entropy(&[1.0], &[1.0], &[1.0]).is_err());
        assert!(weighted_cross_entropy(&[1.0, 0.0], &[0.5], &[1.0]).is_err());
    }

    #[test]
    fn wce_monotone_in_class_weight() {
        // raising w_k strictly increases the loss when entry k has error
        let y = [1.0, 0.0];
        let p = [0.6, 0.4];
        let lo = weighted_cross_entropy(&y, &p, &[1.0, 1.0]).unwrap();
        let hi = weighted_cross_entropy(&y, &p, &[2.0, 1.0]).unwrap();
        assert!(hi > lo);
    }

    #[test]
    fn kl_closed_forms() {
        assert!((kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap() - LN2).abs() < 1e-12);
        let p = [0.7, 0.3];
        let q = [0.4, 0.6];
        let expected = 0.7 * (0.7f64 / 0.4).ln() + 0.3 * (0.3f64 / 0.6).ln();
        assert!((kl_divergence(&p, &q).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.1838).abs() < 1e-4);
    }

    #[test]
    fn kl_self_is_zero_and_asymmetric() {
        let p = [0.2, 0.5, 0.3];
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        let q = [0.6, 0.2, 0.2];
        let forward = kl_divergence(&p, &q).unwrap();
        let backward = kl_divergence(&q, &p).unwrap();
        assert!((forward - backward).abs() > 1e-3, "generic pair must witness asymmetry");
    }

    #[test]
    fn kl_rejects_unnormalized() {
        assert!(matches!(
            kl_divergence(&[0.5, 0.6], &[0.5, 0.5]),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn distill_composes_weighted_kls() {
        let w = LossWeights {
            alpha1: 0.5,
            alpha2: 0.3,
            distill_weight_v: 0.5,
            distill_weight_q: 0.5,
            class_weights: vec![],
        };
        let s = [0.25, 0.75];
        assert_eq!(distill_loss(&s, &s, &s, &w).unwrap(), 0.0);

        // components 0.2 and 0.4 with weights 0.5/0.5 → 0.3
        let half = LossWeights {
            distill_weight_q: 0.0,
            ..w.clone()
        };
        let t_v = [0.9, 0.1];
        let kl_v = kl_divergence(&t_v, &s).unwrap();
        let got = distill_loss(&t_v, &[0.5, 0.5], &s, &half).unwrap();
        assert!((got - 0.5 * kl_v).abs() < 1e-12);
        assert!((0.5 * 0.2 + 0.5 * 0.4 - 0.3f64).abs() < 1e-12);
    }

    #[test]
    fn total_loss_is_exact_linear_combination() {
        assert_eq!(total_loss(1.0, 2.0, 1.0, 0.5, 0.3), 2.3);
        assert_eq!(total_loss(1.0, 2.0, 3.0, 0.0, 0.0), 1.0);
        assert_eq!(total_loss(0.0, 0.0, 0.0, 0.5, 0.3), 0.0);
    }

    #[test]
    fn tape_wce_matches_pure() {
        let y = [1.0, 0.0, 0.4];
        let p = [0.7, 0.2, 0.5];
        let w = [2.0, 1.0, 0.5];
        let store = ParamSet::new();
        let mut tape = Tape::new(&store);
        let probs = tape.constant(row(&p));
        let node = wce_node(&mut tape, &y, probs, &w).unwrap();
        let pure = weighted_cross_entropy(&y, &p, &w).unwrap();
        assert!((tape.scalar(node) - pure).abs() < 1e-12);
    }

    #[test]
    fn tape_kl_matches_pure() {
        let p = [0.6, 0.1, 0.3];
        let q = [0.3, 0.3, 0.4];
        let store = ParamSet::new();
        let mut tape = Tape::new(&store);
        let qn = tape.constant(row(&q));
        let node = kl_node(&mut tape, &p, qn).unwrap();
        let pure = kl_divergence(&p, &q).unwrap();
        assert!((tape.scalar(node) - pure).abs() < 1e-12);
    }

    #[test]
    fn csv_row_format() {
        let mut b = LossBundle::zero();
        b.wce = 1.5;
        b.total = 2.25;
        assert_eq!(loss_csv_row(3, &b), "3,1.5,0,0,0,0,0,2.25");
    }
}
