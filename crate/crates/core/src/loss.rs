//! Classification losses: temperature softmax, KL divergence against a fixed
//! teacher distribution, cross-entropy, and their combination.
//!
//! Teacher distributions are treated as constants: gradients flow only to the
//! logits that produced the student distribution. Each loss comes with a
//! closed-form gradient with respect to those logits, which the network's
//! layer-sequence backward pass then propagates to the parameters.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Row sums of a probability matrix may deviate from 1 by at most this much.
pub const PROB_ROW_SUM_TOL: f64 = 1e-9;

/// Batch of per-sample probability distributions, one row per sample.
///
/// Rows sum to 1 within [`PROB_ROW_SUM_TOL`] and entries are non-negative.
/// Softmax-produced rows are strictly positive; hand-built rows may contain
/// exact zeros (the KL convention `0·log 0 = 0` covers them).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbDist {
    probs: Tensor,
}

impl ProbDist {
    pub fn new(probs: Tensor) -> Result<Self> {
        let (rows, cols) = probs.dims2("ProbDist::new")?;
        if cols == 0 {
            return Err(Error::invalid("ProbDist requires at least one class"));
        }
        for r in 0..rows {
            let row = probs.row(r);
            let mut sum = 0.0;
            for &p in row {
                if !p.is_finite() || p < 0.0 {
                    return Err(Error::invalid(format!(
                        "ProbDist row {r} contains invalid probability {p}"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > PROB_ROW_SUM_TOL {
                return Err(Error::invalid(format!(
                    "ProbDist row {r} sums to {sum}, expected 1 within {PROB_ROW_SUM_TOL}"
                )));
            }
        }
        Ok(Self { probs })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.first().map_or(0, |r| r.len());
        let mut values = Vec::with_capacity(rows.len() * n);
        for r in rows {
            values.extend_from_slice(r);
        }
        Self::new(Tensor::new(vec![rows.len(), n], values)?)
    }

    pub fn probs(&self) -> &Tensor {
        &self.probs
    }

    pub fn batch(&self) -> usize {
        self.probs.shape()[0]
    }

    pub fn classes(&self) -> usize {
        self.probs.shape()[1]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        self.probs.row(r)
    }
}

/// Softened distribution `exp(z_j/τ) / Σ_k exp(z_k/τ)` per row.
///
/// Computed with max-subtraction for stability. Entries underflowing to zero
/// are clamped to the smallest positive normal so rows stay strictly
/// positive and safe to take logarithms of.
pub fn softmax_with_temperature(logits: &Tensor, tau: f64) -> Result<ProbDist> {
    if !tau.is_finite() || tau <= 0.0 {
        return Err(Error::invalid(format!(
            "temperature must be a positive finite number, got {tau}"
        )));
    }
    let (rows, cols) = logits.dims2("softmax_with_temperature")?;
    logits.assert_finite("softmax_with_temperature input")?;
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let dst = &mut out[r * cols..(r + 1) * cols];
        let mut sum = 0.0;
        for (d, &z) in dst.iter_mut().zip(row) {
            let e = ((z - max) / tau).exp();
            *d = e;
            sum += e;
        }
        for d in dst.iter_mut() {
            *d = (*d / sum).max(f64::MIN_POSITIVE);
        }
    }
    ProbDist::new(Tensor::new(vec![rows, cols], out)?)
}

/// Mean over the batch of `Σ_j p_j · log(p_j / q_j)`, with `0·log 0 = 0`.
///
/// The teacher distribution `p` is a constant; use
/// [`kl_divergence_logit_grad`] for the gradient towards the student logits.
/// Every `q` entry must be strictly positive.
pub fn kl_divergence(p: &ProbDist, q: &ProbDist) -> Result<f64> {
    if p.probs().shape() != q.probs().shape() {
        return Err(Error::ShapeMismatch {
            context: "kl_divergence".into(),
            expected: p.probs().shape().to_vec(),
            actual: q.probs().shape().to_vec(),
        });
    }
    let batch = p.batch();
    let mut total = 0.0;
    for r in 0..batch {
        let (pr, qr) = (p.row(r), q.row(r));
        for (&pj, &qj) in pr.iter().zip(qr) {
            if qj <= 0.0 {
                return Err(Error::invalid(format!(
                    "kl_divergence requires q > 0, got {qj} in row {r}"
                )));
            }
            if pj > 0.0 {
                total += pj * (pj / qj).ln();
            }
        }
    }
    Ok(total / batch as f64)
}

/// Gradient of the batch-mean KL above with respect to the student logits
/// that produced `q` through a temperature-`tau` softmax: `(q − p) / (τ·B)`.
pub fn kl_divergence_logit_grad(p: &ProbDist, q: &ProbDist, tau: f64) -> Result<Tensor> {
    if p.probs().shape() != q.probs().shape() {
        return Err(Error::ShapeMismatch {
            context: "kl_divergence_logit_grad".into(),
            expected: p.probs().shape().to_vec(),
            actual: q.probs().shape().to_vec(),
        });
    }
    let batch = p.batch() as f64;
    let scale = 1.0 / (tau * batch);
    let values = q
        .probs()
        .values()
        .iter()
        .zip(p.probs().values())
        .map(|(&qv, &pv)| (qv - pv) * scale)
        .collect();
    Tensor::new(p.probs().shape().to_vec(), values)
}

/// Mean over the batch of `−log softmax(z)[label]` at temperature 1.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    let (rows, cols) = logits.dims2("cross_entropy")?;
    if rows != labels.len() {
        return Err(Error::ShapeMismatch {
            context: "cross_entropy labels".into(),
            expected: vec![rows],
            actual: vec![labels.len()],
        });
    }
    let mut total = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        if label >= cols {
            return Err(Error::invalid(format!(
                "label {label} out of range for {cols} classes (sample {r})"
            )));
        }
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_sum: f64 = row.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
        total += -(row[label] - max - log_sum);
    }
    Ok(total / rows as f64)
}

/// Gradient of batch-mean cross-entropy w.r.t. the logits:
/// `(softmax(z) − onehot(label)) / B`.
pub fn cross_entropy_logit_grad(logits: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let (rows, cols) = logits.dims2("cross_entropy_logit_grad")?;
    if rows != labels.len() {
        return Err(Error::ShapeMismatch {
            context: "cross_entropy_logit_grad labels".into(),
            expected: vec![rows],
            actual: vec![labels.len()],
        });
    }
    let softmax = softmax_with_temperature(logits, 1.0)?;
    let mut values = softmax.probs().values().to_vec();
    let batch = rows as f64;
    for (r, &label) in labels.iter().enumerate() {
        if label >= cols {
            return Err(Error::invalid(format!(
                "label {label} out of range for {cols} classes (sample {r})"
            )));
        }
        values[r * cols + label] -= 1.0;
    }
    values.iter_mut().for_each(|v| *v /= batch);
    Tensor::new(vec![rows, cols], values)
}

/// Combined objective `ce + α·kl`. With `α = 0` this is exactly the
/// cross-entropy value, bit for bit.
pub fn total_loss(ce: f64, kl: f64, alpha: f64) -> f64 {
    if alpha == 0.0 {
        ce
    } else {
        ce + alpha * kl
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logits(rows: &[&[f64]]) -> Tensor {
        let n = rows[0].len();
        let values: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Tensor::new(vec![rows.len(), n], values).unwrap()
    }

    #[test]
    fn softmax_symmetric_logits() {
        let p = softmax_with_temperature(&logits(&[&[0.0, 0.0]]), 1.0).unwrap();
        assert_eq!(p.row(0), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_high_temperature_is_uniform() {
        let p = softmax_with_temperature(&logits(&[&[1.0, 2.0, 3.0]]), 1e6).unwrap();
        for &v in p.row(0) {
            assert!((v - 1.0 / 3.0).abs() < 1e-5, "{v}");
        }
    }

    #[test]
    fn softmax_hand_computed_case() {
        // logits [2,0], tau=2 -> [e/(e+1), 1/(e+1)]
        let p = softmax_with_temperature(&logits(&[&[2.0, 0.0]]), 2.0).unwrap();
        let e = std::f64::consts::E;
        assert!((p.row(0)[0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((p.row(0)[1] - 1.0 / (e + 1.0)).abs() < 1e-12);
        assert!((p.row(0)[0] - 0.73106).abs() < 1e-5);
        assert!((p.row(0)[1] - 0.26894).abs() < 1e-5);
    }

    #[test]
    fn softmax_rejects_bad_temperature() {
        let z = logits(&[&[1.0, 2.0]]);
        assert!(softmax_with_temperature(&z, 0.0).is_err());
        assert!(softmax_with_temperature(&z, -1.0).is_err());
    }

    #[test]
    fn kl_of_identical_distributions_is_zero() {
        let p = ProbDist::from_rows(&[&[0.2, 0.3, 0.5]]).unwrap();
        let kl = kl_divergence(&p, &p).unwrap();
        assert!(kl.abs() < 1e-12, "{kl}");
    }

    #[test]
    fn kl_hand_computed_case() {
        // KL([1,0] || [0.5,0.5]) = log 2, with 0·log 0 = 0.
        let p = ProbDist::from_rows(&[&[1.0, 0.0]]).unwrap();
        let q = ProbDist::from_rows(&[&[0.5, 0.5]]).unwrap();
        let kl = kl_divergence(&p, &q).unwrap();
        assert!((kl - std::f64::consts::LN_2).abs() < 1e-12, "{kl}");
    }

    #[test]
    fn kl_rejects_shape_mismatch() {
        let p = ProbDist::from_rows(&[&[1.0, 0.0]]).unwrap();
        let q = ProbDist::from_rows(&[&[0.5, 0.25, 0.25]]).unwrap();
        assert!(kl_divergence(&p, &q).is_err());
    }

    #[test]
    fn cross_entropy_uniform_logits() {
        let z = logits(&[&[0.0; 10]]);
        let ce = cross_entropy(&z, &[3]).unwrap();
        assert!((ce - 10f64.ln()).abs() < 1e-12);
        assert!((ce - 2.302585).abs() < 1e-6);
    }

    #[test]
    fn cross_entropy_saturated_correct_class() {
        let mut row = vec![0.0; 10];
        row[4] = 1e3;
        let ce = cross_entropy(&logits(&[&row]), &[4]).unwrap();
        assert!(ce < 1e-6, "{ce}");
    }

    #[test]
    fn cross_entropy_hand_computed_case() {
        // logits [1,0], label 1 -> -log(1/(1+e)) = log(1+e)
        let ce = cross_entropy(&logits(&[&[1.0, 0.0]]), &[1]).unwrap();
        assert!((ce - (1.0 + std::f64::consts::E).ln()).abs() < 1e-12);
        assert!((ce - 1.313262).abs() < 1e-6);
    }

    #[test]
    fn cross_entropy_rejects_out_of_range_label() {
        let z = logits(&[&[0.0, 0.0]]);
        assert!(cross_entropy(&z, &[2]).is_err());
    }

    #[test]
    fn cross_entropy_grad_at_uniform_logits() {
        // softmax([0,0]) - onehot(0) = [-0.5, 0.5]
        let g = cross_entropy_logit_grad(&logits(&[&[0.0, 0.0]]), &[0]).unwrap();
        assert_eq!(g.values(), &[-0.5, 0.5]);
    }

    #[test]
    fn total_loss_linearity() {
        assert_eq!(total_loss(1.0, 0.5, 0.0), 1.0);
        assert_eq!(total_loss(1.0, 0.5, 1.0), 1.5);
        assert_eq!(total_loss(0.0, 0.7, 2.0), 1.4);
    }

    #[test]
    fn total_loss_alpha_zero_is_bitwise_ce() {
        let ce = 0.123456789f64;
        let kl = 0.987654321f64;
        assert_eq!(total_loss(ce, kl, 0.0).to_bits(), ce.to_bits());
    }

    #[test]
    fn ce_equals_kl_from_onehot_identity() {
        // CE(z, y) == KL(onehot(y) || softmax(z, 1)) since onehot entropy is 0.
        let z = logits(&[&[0.3, -1.2, 2.0], &[0.0, 0.1, -0.5]]);
        let labels = [2usize, 0];
        let ce = cross_entropy(&z, &labels).unwrap();

        let q = softmax_with_temperature(&z, 1.0).unwrap();
        let mut onehot = vec![0.0; 2 * 3];
        for (r, &y) in labels.iter().enumerate() {
            onehot[r * 3 + y] = 1.0;
        }
        let p = ProbDist::new(Tensor::new(vec![2, 3], onehot).unwrap()).unwrap();
        let kl = kl_divergence(&p, &q).unwrap();
        assert!((ce - kl).abs() < 1e-9, "ce={ce} kl={kl}");
    }
}
