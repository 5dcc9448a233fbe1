//! Finite-difference gradient verification for the layer-sequence backward
//! pass. This is the independent oracle the loss gradients are held against.

use crate::error::{Error, Result};
use crate::loss::{
    cross_entropy, cross_entropy_logit_grad, kl_divergence, kl_divergence_logit_grad,
    softmax_with_temperature, total_loss, ProbDist,
};
use crate::net::Network;
use crate::tensor::Tensor;

/// Central-difference step. With f64 arithmetic this balances truncation
/// against cancellation for losses of order 1.
pub const FD_STEP: f64 = 1e-5;

/// Largest network the checker accepts; finite differences cost two forward
/// passes per scalar parameter.
pub const MAX_CHECKED_PARAMS: usize = 5_000;

/// Which scalar objective to differentiate.
#[derive(Debug, Clone)]
pub enum LossSelector<'a> {
    CrossEntropy {
        labels: &'a [usize],
    },
    /// KL from a fixed teacher distribution to the student's softened output.
    KlFromTeacher {
        teacher: &'a ProbDist,
        tau: f64,
    },
    /// `ce + alpha·kl` against a fixed teacher.
    Combined {
        labels: &'a [usize],
        teacher: &'a ProbDist,
        tau: f64,
        alpha: f64,
    },
}

impl LossSelector<'_> {
    fn loss(&self, logits: &Tensor) -> Result<f64> {
        match self {
            LossSelector::CrossEntropy { labels } => cross_entropy(logits, labels),
            LossSelector::KlFromTeacher { teacher, tau } => {
                let q = softmax_with_temperature(logits, *tau)?;
                kl_divergence(teacher, &q)
            }
            LossSelector::Combined {
                labels,
                teacher,
                tau,
                alpha,
            } => {
                let ce = cross_entropy(logits, labels)?;
                let q = softmax_with_temperature(logits, *tau)?;
                let kl = kl_divergence(teacher, &q)?;
                Ok(total_loss(ce, kl, *alpha))
            }
        }
    }

    fn logit_grad(&self, logits: &Tensor) -> Result<Tensor> {
        match self {
            LossSelector::CrossEntropy { labels } => cross_entropy_logit_grad(logits, labels),
            LossSelector::KlFromTeacher { teacher, tau } => {
                let q = softmax_with_temperature(logits, *tau)?;
                kl_divergence_logit_grad(teacher, &q, *tau)
            }
            LossSelector::Combined {
                labels,
                teacher,
                tau,
                alpha,
            } => {
                let mut grad = cross_entropy_logit_grad(logits, labels)?;
                if *alpha != 0.0 {
                    let q = softmax_with_temperature(logits, *tau)?;
                    let kl_grad = kl_divergence_logit_grad(teacher, &q, *tau)?;
                    for (g, &k) in grad.values_mut().iter_mut().zip(kl_grad.values()) {
                        *g += alpha * k;
                    }
                }
                Ok(grad)
            }
        }
    }
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compare analytic parameter gradients against central finite differences.
///
/// Returns the maximum relative error over all parameters, using
/// `|a − b| / max(|a|, |b|, 1e-8)`.
pub fn grad_check(net: &mut Network, batch: &Tensor, loss: &LossSelector) -> Result<f64> {
    if !net.is_initialized() {
        return Err(Error::Uninitialized);
    }
    if net.num_params() > MAX_CHECKED_PARAMS {
        return Err(Error::invalid(format!(
            "grad_check is for tiny networks (<= {MAX_CHECKED_PARAMS} params), got {}",
            net.num_params()
        )));
    }

    // Analytic pass.
    net.zero_grads();
    let logits = net.forward_train(batch)?;
    let logit_grad = loss.logit_grad(&logits)?;
    net.backward(&logit_grad)?;

    let analytic: Vec<Vec<f64>> = (0..net.num_param_slots())
        .map(|slot| {
            net.param_slot(slot)
                .and_then(|t| t.grad().map(<[f64]>::to_vec))
                .ok_or_else(|| Error::MissingGrad(net.param_slot_name(slot)))
        })
        .collect::<Result<_>>()?;

    // Numeric pass.
    let mut max_err = 0.0f64;
    for slot in 0..net.num_param_slots() {
        for i in 0..analytic[slot].len() {
            let original = net.param_slot(slot).unwrap().values()[i];

            net.param_slot_mut(slot).unwrap().values_mut()[i] = original + FD_STEP;
            let plus = loss.loss(&net.forward_eval(batch)?)?;

            net.param_slot_mut(slot).unwrap().values_mut()[i] = original - FD_STEP;
            let minus = loss.loss(&net.forward_eval(batch)?)?;

            net.param_slot_mut(slot).unwrap().values_mut()[i] = original;

            let numeric = (plus - minus) / (2.0 * FD_STEP);
            max_err = max_err.max(relative_error(analytic[slot][i], numeric));
        }
    }
    net.zero_grads();
    Ok(max_err)
}
