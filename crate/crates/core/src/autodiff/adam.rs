use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moment estimates for an ordered list of parameters.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl AdamState {
    pub fn new<'a>(config: AdamConfig, shapes: impl IntoIterator<Item = &'a [usize]>) -> Self {
        let first: Vec<Tensor> = shapes.into_iter().map(Tensor::zeros).collect();
        AdamState {
            config,
            step: 0,
            second: first.clone(),
            first,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update. Nothing is modified if any gradient is
    /// non-finite or any shape disagrees.
    pub fn step<'a>(
        &mut self,
        params: impl IntoIterator<Item = (&'a str, &'a mut Tensor)>,
        grads: &[Tensor],
    ) -> Result<()> {
        let mut params: Vec<(&str, &mut Tensor)> = params.into_iter().collect();
        if params.len() != grads.len() || params.len() != self.first.len() {
            return Err(Error::InvalidArgument(format!(
                "adam: {} parameters, {} gradients, {} moment slots",
                params.len(),
                grads.len(),
                self.first.len()
            )));
        }
        for (((name, p), g), m) in params.iter().zip(grads).zip(&self.first) {
            if p.shape() != g.shape() {
                return Err(Error::shape("adam_step", p.shape(), g.shape()));
            }
            if p.shape() != m.shape() {
                return Err(Error::shape("adam_state", p.shape(), m.shape()));
            }
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient(name.to_string()));
            }
        }

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (i, (_, p)) in params.iter_mut().enumerate() {
            let g = grads[i].data();
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                *w -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(value: f64) -> (Tensor, AdamState) {
        let p = Tensor::scalar(value);
        let s = AdamState::new(AdamConfig::default(), [p.shape()]);
        (p, s)
    }

    #[test]
    fn zero_gradient_is_identity() {
        let (mut p, mut s) = one_param(0.25);
        for _ in 0..50 {
            s.step([("w", &mut p)], &[Tensor::scalar(0.0)]).unwrap();
        }
        assert_eq!(p.item(), 0.25);
        assert_eq!(s.step_count(), 50);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [3.0, -0.02] {
            let (mut p, mut s) = one_param(1.0);
            s.step([("w", &mut p)], &[Tensor::scalar(g)]).unwrap();
            // m_hat = g, v_hat = g^2 after bias correction
            let expected = 1.0 - 1e-4 * g / (g.abs() + 1e-8);
            assert!((p.item() - expected).abs() < 1e-15);
            assert!((p.item() - (1.0 - 1e-4 * g.signum())).abs() < 1e-9);
        }
    }

    #[test]
    fn non_finite_gradient_aborts_update() {
        let mut a = Tensor::scalar(1.0);
        let mut b = Tensor::scalar(2.0);
        let mut s = AdamState::new(AdamConfig::default(), [a.shape(), b.shape()]);
        let err = s
            .step(
                [("first", &mut a), ("second", &mut b)],
                &[Tensor::scalar(1.0), Tensor::scalar(f64::NAN)],
            )
            .unwrap_err();
        assert!(err.to_string().contains("second"));
        assert_eq!((a.item(), b.item()), (1.0, 2.0));
        assert_eq!(s.step_count(), 0);
    }

    #[test]
    fn deterministic_runs_agree_bitwise() {
        let run = || {
            let (mut p, mut s) = one_param(0.5);
            for k in 0..20 {
                let g = ((k as f64) * 0.37).sin();
                s.step([("w", &mut p)], &[Tensor::scalar(g)]).unwrap();
            }
            p.item().to_bits()
        };
        assert_eq!(run(), run());
    }
}
