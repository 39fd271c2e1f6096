//! SGD with momentum, weight decay, and per-epoch learning-rate decay.

use super::params::ParamVector;
use super::KernelError;

/// Optimizer hyperparameters.
///
/// `lr_decay_per_iteration` multiplies the effective learning rate by
/// `1 - decay` once per local epoch (see [`SgdState::decay_epoch`]); `0`
/// leaves the rate constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_decay_per_iteration: f64,
}

impl SgdConfig {
    pub fn new(learning_rate: f64) -> Self {
        Self { learning_rate, momentum: 0.0, weight_decay: 0.0, lr_decay_per_iteration: 0.0 }
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        let ok = self.learning_rate.is_finite()
            && self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.momentum)
            && self.weight_decay.is_finite()
            && self.weight_decay >= 0.0
            && (0.0..=1.0).contains(&self.lr_decay_per_iteration);
        if ok {
            Ok(())
        } else {
            Err(KernelError::BadSgdConfig(format!("{self:?}")))
        }
    }
}

/// Mutable optimizer state: the momentum buffer and the decayed rate.
#[derive(Debug, Clone)]
pub struct SgdState {
    velocity: ParamVector,
    effective_lr: f64,
}

impl SgdState {
    pub fn new(cfg: &SgdConfig, param_len: usize) -> Self {
        Self { velocity: ParamVector::zeros(param_len), effective_lr: cfg.learning_rate }
    }

    pub fn effective_lr(&self) -> f64 {
        self.effective_lr
    }

    /// Applies the multiplicative rate decay; call once per local epoch.
    pub fn decay_epoch(&mut self, cfg: &SgdConfig) {
        self.effective_lr *= 1.0 - cfg.lr_decay_per_iteration;
    }
}

/// One update:
/// `v <- momentum*v + grad + weight_decay*params; params <- params - lr*v`.
pub fn sgd_step(
    params: &mut ParamVector,
    grad: &ParamVector,
    state: &mut SgdState,
    cfg: &SgdConfig,
) -> Result<(), KernelError> {
    params.check_len(grad)?;
    params.check_len(&state.velocity)?;
    let v = state.velocity.as_mut_slice();
    let p = params.as_mut_slice();
    let g = grad.as_slice();
    let lr = state.effective_lr;
    for i in 0..p.len() {
        v[i] = cfg.momentum * v[i] + g[i] + cfg.weight_decay * p[i];
        p[i] -= lr * v[i];
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_step_is_negative_gradient() {
        let cfg = SgdConfig::new(1.0);
        let mut params = ParamVector::zeros(3);
        let grad = ParamVector::from_vec(vec![1.0, -2.0, 0.5]);
        let mut state = SgdState::new(&cfg, 3);
        sgd_step(&mut params, &grad, &mut state, &cfg).unwrap();
        assert_eq!(params.as_slice(), &[-1.0, 2.0, -0.5]);
    }

    #[test]
    fn momentum_accumulates_over_two_steps() {
        // v1 = g, v2 = 0.9 g + g; params = -lr (g + 1.9 g) = -2.9 lr g
        let cfg = SgdConfig { momentum: 0.9, ..SgdConfig::new(0.1) };
        let mut params = ParamVector::zeros(1);
        let grad = ParamVector::from_vec(vec![2.0]);
        let mut state = SgdState::new(&cfg, 1);
        sgd_step(&mut params, &grad, &mut state, &cfg).unwrap();
        sgd_step(&mut params, &grad, &mut state, &cfg).unwrap();
        assert!((params.as_slice()[0] - (-2.9 * 0.1 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn weight_decay_shrinks_params() {
        let cfg = SgdConfig { weight_decay: 0.5, ..SgdConfig::new(0.1) };
        let mut params = ParamVector::from_vec(vec![2.0]);
        let grad = ParamVector::zeros(1);
        let mut state = SgdState::new(&cfg, 1);
        sgd_step(&mut params, &grad, &mut state, &cfg).unwrap();
        // params * (1 - lr*wd) = 2.0 * 0.95
        assert!((params.as_slice()[0] - 1.9).abs() < 1e-15);
    }

    #[test]
    fn epoch_decay_multiplies_rate() {
        let cfg = SgdConfig { lr_decay_per_iteration: 0.1, ..SgdConfig::new(0.05) };
        let mut state = SgdState::new(&cfg, 1);
        state.decay_epoch(&cfg);
        state.decay_epoch(&cfg);
        assert!((state.effective_lr() - 0.05 * 0.81).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let cfg = SgdConfig::new(1.0);
        let mut params = ParamVector::zeros(2);
        let grad = ParamVector::zeros(3);
        let mut state = SgdState::new(&cfg, 2);
        assert!(sgd_step(&mut params, &grad, &mut state, &cfg).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SgdConfig::new(0.01).validate().is_ok());
        assert!(SgdConfig::new(0.0).validate().is_err());
        assert!(SgdConfig { momentum: 1.0, ..SgdConfig::new(0.1) }.validate().is_err());
        assert!(SgdConfig { weight_decay: -1.0, ..SgdConfig::new(0.1) }.validate().is_err());
    }
}
