//! Adam with bias-corrected moments.

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// L2 penalty folded into the gradient before the moment update.
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        // A zero learning rate is accepted so a run can be frozen in place.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("optimizer.learning_rate", "must be finite and >= 0"));
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0) {
            return Err(Error::config("optimizer.beta1", "must lie in (0, 1)"));
        }
        if !(self.beta2 > 0.0 && self.beta2 < 1.0) {
            return Err(Error::config("optimizer.beta2", "must lie in (0, 1)"));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::config("optimizer.epsilon", "must be > 0"));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::config("optimizer.weight_decay", "must be >= 0"));
        }
        Ok(())
    }
}

/// Apply one Adam update to every unfrozen tensor and zero all gradients.
///
/// `step_index` is 1-based. Gradients are validated before anything is
/// modified, so a non-finite gradient leaves the store untouched.
pub fn adam_step(params: &mut ParamStore, cfg: &OptimizerConfig, step_index: u64) -> Result<()> {
    assert!(step_index >= 1, "adam step index is 1-based");
    for t in params.tensors() {
        if !t.frozen && t.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient(t.name.clone()));
        }
    }
    let bias1 = 1.0 - cfg.beta1.powf(step_index as f64);
    let bias2 = 1.0 - cfg.beta2.powf(step_index as f64);
    for t in params.tensors_mut() {
        if !t.frozen {
            for i in 0..t.value.len() {
                let g = t.grad[i] + cfg.weight_decay * t.value[i];
                t.m[i] = cfg.beta1 * t.m[i] + (1.0 - cfg.beta1) * g;
                t.v[i] = cfg.beta2 * t.v[i] + (1.0 - cfg.beta2) * g * g;
                let m_hat = t.m[i] / bias1;
                let v_hat = t.v[i] / bias2;
                t.value[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        }
        t.zero_grad();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::params::Init;

    fn scalar_store(x: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("x", &[1], Init::Constant(x)).unwrap();
        s
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut s = ParamStore::new();
        s.add("w", &[3, 3], Init::Uniform { seed: 4, scale: 0.1 }).unwrap();
        let before = s.clone();
        adam_step(&mut s, &OptimizerConfig::default(), 1).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = g, v̂ = g², so the step is lr * g / (|g| + eps).
        let mut s = scalar_store(1.0);
        s.tensors_mut()[0].grad[0] = 0.5;
        adam_step(&mut s, &OptimizerConfig::default(), 1).unwrap();
        let expected = 1.0 - 0.01 * 0.5 / (0.5 + 1e-8);
        assert!((s.tensors()[0].value[0] - expected).abs() < 1e-15);
        assert!((1.0 - s.tensors()[0].value[0] - 0.01).abs() < 1e-9);
        assert_eq!(s.tensors()[0].grad[0], 0.0);
    }

    #[test]
    fn repeated_gradient_does_not_grow_the_step() {
        let cfg = OptimizerConfig::default();
        let mut s = scalar_store(0.0);
        let mut positions = vec![0.0];
        for step in 1..=2 {
            s.tensors_mut()[0].grad[0] = 0.5;
            adam_step(&mut s, &cfg, step).unwrap();
            positions.push(s.tensors()[0].value[0]);
        }
        let first = (positions[1] - positions[0]).abs();
        let second = (positions[2] - positions[1]).abs();
        // Hand computation: both steps equal lr * g / (|g| + eps) up to eps effects.
        assert!(second <= first + 1e-12, "{first} {second}");
        assert!((first - 0.01).abs() < 1e-9 && (second - 0.01).abs() < 1e-9);
    }

    #[test]
    fn non_finite_gradient_names_tensor_and_leaves_values() {
        let mut s = scalar_store(2.0);
        s.add("bad", &[2], Init::Constant(0.0)).unwrap();
        s.tensors_mut()[0].grad[0] = 1.0;
        s.tensors_mut()[1].grad[1] = f64::NAN;
        match adam_step(&mut s, &OptimizerConfig::default(), 1) {
            Err(Error::NonFiniteGradient(name)) => assert_eq!(name, "bad"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(s.tensors()[0].value[0], 2.0);
    }

    #[test]
    fn frozen_tensor_is_not_updated() {
        let mut s = scalar_store(2.0);
        let id = s.find("x").unwrap();
        s.set_frozen(id, true);
        s.tensors_mut()[0].grad[0] = 1.0;
        adam_step(&mut s, &OptimizerConfig::default(), 1).unwrap();
        assert_eq!(s.tensors()[0].value[0], 2.0);
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::default().validate().is_ok());
        let bad = OptimizerConfig {
            beta1: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
