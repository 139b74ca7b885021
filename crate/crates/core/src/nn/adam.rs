use crate::scalar::Scalar;

use super::{Gradients, Network, NnError};

/// ADAM hyperparameters. Defaults: lr 2e-4, betas (0.9, 0.999), eps 1e-8.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Result<Self, NnError> {
        let valid = lr > 0.0 && eps > 0.0 && (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2);
        if !valid {
            return Err(NnError::BadHyperparameter);
        }
        Ok(Self { lr, beta1, beta2, eps })
    }

    pub fn with_lr(lr: f64) -> Result<Self, NnError> {
        let d = Self::default();
        Self::new(lr, d.beta1, d.beta2, d.eps)
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }
}

/// First/second moment buffers for a flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
        }
    }
}

/// One bias-corrected ADAM update of `params` in place. `state.t` must already
/// hold the step number of this update (1 for the first).
pub(crate) fn update_slice<T: Scalar>(
    cfg: &AdamConfig,
    t: u64,
    params: &mut [T],
    grads: &[T],
    m: &mut [T],
    v: &mut [T],
) {
    let b1 = T::from_f64_lossy(cfg.beta1);
    let b2 = T::from_f64_lossy(cfg.beta2);
    let one = T::one();
    let c1 = T::from_f64_lossy(1.0 - cfg.beta1.powi(t as i32));
    let c2 = T::from_f64_lossy(1.0 - cfg.beta2.powi(t as i32));
    let lr = T::from_f64_lossy(cfg.lr);
    let eps = T::from_f64_lossy(cfg.eps);
    for (((p, &g), mi), vi) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
        *mi = b1 * *mi + (one - b1) * g;
        *vi = b2 * *vi + (one - b2) * g * g;
        let m_hat = *mi / c1;
        let v_hat = *vi / c2;
        *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Standalone update of a flat parameter vector.
pub fn adam_step<T: Scalar>(params: &mut [T], grads: &[T], state: &mut AdamState<T>, cfg: &AdamConfig) {
    state.t += 1;
    update_slice(cfg, state.t, params, grads, &mut state.m, &mut state.v);
}

/// ADAM optimizer bound to one network's parameter layout.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    cfg: AdamConfig,
    moments: Vec<(AdamState<T>, AdamState<T>)>,
    t: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(cfg: AdamConfig, net: &Network<T>) -> Self {
        let moments = net
            .params()
            .iter()
            .map(|p| (AdamState::new(p.weight.len()), AdamState::new(p.bias.len())))
            .collect();
        Self { cfg, moments, t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, net: &mut Network<T>, grads: &Gradients<T>) {
        self.t += 1;
        let t = self.t;
        for ((p, g), (mw, mb)) in net
            .params_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(self.moments.iter_mut())
        {
            update_slice(&self.cfg, t, &mut p.weight, &g.weight, &mut mw.m, &mut mw.v);
            update_slice(&self.cfg, t, &mut p.bias, &g.bias, &mut mb.m, &mut mb.v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_leave_parameters_alone() {
        let mut p = vec![0.5f64, -1.25, 3.0];
        let mut st = AdamState::new(3);
        let cfg = AdamConfig::default();
        for _ in 0..5 {
            adam_step(&mut p, &[0.0; 3], &mut st, &cfg);
        }
        assert_eq!(p, vec![0.5, -1.25, 3.0]);
        assert!(st.m.iter().chain(&st.v).all(|&x| x == 0.0));
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // t=1: m_hat = g, v_hat = g^2, so |dp| = lr*|g|/(|g|+eps)
        let cfg = AdamConfig::default();
        for g in [0.3f64, -2.0, 1e-3] {
            let mut p = vec![1.0f64];
            let mut st = AdamState::new(1);
            adam_step(&mut p, &[g], &mut st, &cfg);
            let expected = 2e-4 * g.abs() / (g.abs() + 1e-8);
            assert!(((1.0 - p[0]).abs() - expected).abs() < 1e-15);
            assert_eq!((1.0 - p[0]).signum(), g.signum());
        }
    }

    #[test]
    fn defaults_match_published_hyperparameters() {
        let cfg = AdamConfig::default();
        assert_eq!(cfg.lr, 0.0002);
        assert_eq!((cfg.beta1, cfg.beta2), (0.9, 0.999));
    }

    #[test]
    fn non_positive_eps_rejected() {
        assert!(AdamConfig::new(1e-3, 0.9, 0.999, 0.0).is_err());
    }

    #[test]
    fn identical_inputs_give_identical_updates() {
        let run = || {
            let mut p = vec![0.1f32, 0.2, -0.3];
            let mut st = AdamState::new(3);
            let cfg = AdamConfig::default();
            for i in 0..10 {
                let g: Vec<f32> = p.iter().map(|x| x * (i as f32 + 1.0)).collect();
                adam_step(&mut p, &g, &mut st, &cfg);
            }
            p
        };
        assert_eq!(run(), run());
    }
}
