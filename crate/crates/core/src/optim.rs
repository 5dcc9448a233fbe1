//! SGD with momentum, the only optimizer the training loops use.

use crate::error::{Error, Result};
use crate::net::Network;

/// Per-parameter velocity state for momentum SGD.
///
/// Update rule per step: `v <- momentum·v + g; p <- p − lr·v`, after which
/// gradients are zeroed.
#[derive(Debug, Clone)]
pub struct SgdMomentum {
    learning_rate: f64,
    momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl SgdMomentum {
    pub fn new(net: &Network, learning_rate: f64, momentum: f64) -> Result<Self> {
        if !learning_rate.is_finite() || learning_rate <= 0.0 {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::invalid(format!(
                "momentum must be in [0, 1), got {momentum}"
            )));
        }
        if !net.is_initialized() {
            return Err(Error::Uninitialized);
        }
        let velocity = (0..net.num_param_slots())
            .map(|slot| vec![0.0; net.param_slot(slot).unwrap().numel()])
            .collect();
        Ok(Self {
            learning_rate,
            momentum,
            velocity,
        })
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    /// Apply one update to every parameter of `net` and zero the gradients.
    /// Errors if any parameter has no gradient buffer.
    pub fn step(&mut self, net: &mut Network) -> Result<()> {
        if net.num_param_slots() != self.velocity.len() {
            return Err(Error::invalid(
                "optimizer state does not match network parameter layout",
            ));
        }
        for slot in 0..self.velocity.len() {
            let name = net.param_slot_name(slot);
            let param = net
                .param_slot_mut(slot)
                .ok_or_else(|| Error::MissingGrad(name.clone()))?;
            let vel = &mut self.velocity[slot];
            if param.numel() != vel.len() {
                return Err(Error::ShapeMismatch {
                    context: format!("velocity buffer for {name}"),
                    expected: vec![vel.len()],
                    actual: vec![param.numel()],
                });
            }
            {
                let grad = param.grad().ok_or_else(|| Error::MissingGrad(name.clone()))?;
                for (v, &g) in vel.iter_mut().zip(grad) {
                    *v = self.momentum * *v + g;
                }
            }
            let lr = self.learning_rate;
            for (p, &v) in param.values_mut().iter_mut().zip(vel.iter()) {
                *p -= lr * v;
            }
            param.zero_grad();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{LayerSpec, Network};
    use crate::seed::RngSeed;

    fn tiny_net() -> Network {
        let layers = vec![
            LayerSpec::Flatten,
            LayerSpec::Linear {
                in_features: 1,
                out_features: 2,
            },
        ];
        let mut net = Network::from_layers(layers, (1, 1, 1), 2).unwrap();
        net.init_random(RngSeed(0));
        net
    }

    fn set_all(net: &mut Network, value: f64) {
        for slot in 0..net.num_param_slots() {
            net.param_slot_mut(slot)
                .unwrap()
                .values_mut()
                .iter_mut()
                .for_each(|v| *v = value);
        }
    }

    fn set_grads(net: &mut Network, value: f64) {
        for slot in 0..net.num_param_slots() {
            let t = net.param_slot_mut(slot).unwrap();
            let n = t.numel();
            t.ensure_grad().iter_mut().for_each(|g| *g = value);
            assert_eq!(t.grad().unwrap().len(), n);
        }
    }

    #[test]
    fn plain_sgd_step() {
        let mut net = tiny_net();
        set_all(&mut net, 1.0);
        set_grads(&mut net, 2.0);
        let mut opt = SgdMomentum::new(&net, 0.1, 0.0).unwrap();
        opt.step(&mut net).unwrap();
        for slot in 0..net.num_param_slots() {
            for &v in net.param_slot(slot).unwrap().values() {
                assert!((v - 0.8).abs() < 1e-15, "{v}");
            }
        }
    }

    #[test]
    fn momentum_accumulates_velocity() {
        // Two identical steps with g=1, momentum 0.9: second update is lr*1.9.
        let mut net = tiny_net();
        set_all(&mut net, 0.0);
        let mut opt = SgdMomentum::new(&net, 0.1, 0.9).unwrap();

        set_grads(&mut net, 1.0);
        opt.step(&mut net).unwrap();
        let after_first = net.param_slot(0).unwrap().values()[0];
        assert!((after_first - (-0.1)).abs() < 1e-15);

        set_grads(&mut net, 1.0);
        opt.step(&mut net).unwrap();
        let after_second = net.param_slot(0).unwrap().values()[0];
        assert!(((after_first - after_second) - 0.1 * 1.9).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut net = tiny_net();
        set_all(&mut net, 0.75);
        set_grads(&mut net, 0.0);
        let mut opt = SgdMomentum::new(&net, 0.5, 0.9).unwrap();
        opt.step(&mut net).unwrap();
        for slot in 0..net.num_param_slots() {
            assert!(net.param_slot(slot).unwrap().values().iter().all(|&v| v == 0.75));
        }
    }

    #[test]
    fn step_without_grads_errors() {
        let mut net = tiny_net();
        let mut opt = SgdMomentum::new(&net, 0.1, 0.9).unwrap();
        assert!(matches!(opt.step(&mut net), Err(Error::MissingGrad(_))));
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let net = tiny_net();
        assert!(SgdMomentum::new(&net, 0.0, 0.9).is_err());
        assert!(SgdMomentum::new(&net, 0.1, 1.0).is_err());
        assert!(SgdMomentum::new(&net, 0.1, -0.1).is_err());
    }
}
