use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators, one pair per parameter in store order.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl OptimizerState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros = || {
            store
                .iter()
                .map(|(_, p)| Tensor::zeros(p.value.shape()))
                .collect::<Vec<_>>()
        };
        OptimizerState {
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update of every trainable parameter from its
/// accumulated gradient. Frozen parameters are skipped entirely.
pub fn adam_step(store: &mut ParamStore, state: &mut OptimizerState, cfg: &AdamConfig) -> Result<()> {
    if cfg.lr < 0.0 || !cfg.lr.is_finite() {
        return Err(Error::contract(format!("learning rate must be non-negative, got {}", cfg.lr)));
    }
    if state.first.len() != store.len() {
        return Err(Error::shape(format!(
            "optimizer tracks {} parameters but the store holds {}",
            state.first.len(),
            store.len()
        )));
    }
    for ((p, m), v) in store.iter_mut().zip(&state.first).zip(&state.second) {
        if p.value.shape() != m.shape() || p.value.shape() != v.shape() {
            return Err(Error::shape(format!(
                "optimizer moment shape {:?} does not match parameter {:?} {:?}",
                m.shape(),
                p.name,
                p.value.shape()
            )));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for ((p, m), v) in store
        .iter_mut()
        .zip(state.first.iter_mut())
        .zip(state.second.iter_mut())
    {
        if !p.trainable {
            continue;
        }
        let lr = cfg.lr * p.lr_scale;
        let (value, grad) = (p.value.data_mut(), p.grad.data());
        for (((w, &g), m), v) in value
            .iter_mut()
            .zip(grad)
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(values: &[f64]) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::new(vec![values.len()], values.to_vec()).unwrap())
            .unwrap();
        s
    }

    #[test]
    fn zero_gradient_leaves_parameter_unchanged() {
        let mut s = store_with(&[1.0, -2.0, 3.0]);
        let mut st = OptimizerState::new(&s);
        for _ in 0..5 {
            adam_step(&mut s, &mut st, &AdamConfig::default()).unwrap();
        }
        assert_eq!(s.get(s.id("w").unwrap()).value.data(), &[1.0, -2.0, 3.0]);
        assert_eq!(st.step(), 5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = AdamConfig::default();
        for g in [0.5, -3.0, 1e-3] {
            let mut s = store_with(&[0.25]);
            let id = s.id("w").unwrap();
            s.get_mut(id).grad = Tensor::new(vec![1], vec![g]).unwrap();
            let mut st = OptimizerState::new(&s);
            adam_step(&mut s, &mut st, &cfg).unwrap();
            // m̂ = g, v̂ = g², so Δ = lr·g / (|g| + eps).
            let expected = 0.25 - cfg.lr * g / (g.abs() + cfg.eps);
            assert!((s.get(id).value.data()[0] - expected).abs() < 1e-9);
            assert!(((0.25 - s.get(id).value.data()[0]).abs() - cfg.lr).abs() < 1e-9 * 1e3);
        }
    }

    #[test]
    fn frozen_parameters_are_skipped() {
        let mut s = store_with(&[1.0]);
        let id = s.id("w").unwrap();
        s.get_mut(id).grad = Tensor::scalar(1.0);
        s.set_trainable(id, false);
        let mut st = OptimizerState::new(&s);
        adam_step(&mut s, &mut st, &AdamConfig::default()).unwrap();
        assert_eq!(s.get(id).value.data(), &[1.0]);
    }

    #[test]
    fn mismatched_state_is_rejected() {
        let s1 = store_with(&[1.0]);
        let mut s2 = store_with(&[1.0, 2.0]);
        let mut st = OptimizerState::new(&s1);
        assert!(matches!(
            adam_step(&mut s2, &mut st, &AdamConfig::default()),
            Err(Error::Shape(_))
        ));
    }
}
