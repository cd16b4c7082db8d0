use serde::{Deserialize, Serialize};

use super::{Matrix, Scalar};
use crate::error::{Error, Result};

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam with per-parameter moment buffers.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    step: u64,
    first_moment: Vec<Matrix<T>>,
    second_moment: Vec<Matrix<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, shapes: &[(usize, usize)]) -> Result<Self> {
        if !(config.beta1 > 0.0 && config.beta1 < 1.0 && config.beta2 > 0.0 && config.beta2 < 1.0) {
            return Err(Error::Config(format!(
                "Adam betas must lie in (0,1), got {} and {}",
                config.beta1, config.beta2
            )));
        }
        Ok(AdamState {
            config,
            step: 0,
            first_moment: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            second_moment: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
        })
    }

    pub fn for_params(config: AdamConfig, params: &[&Matrix<T>]) -> Result<Self> {
        let shapes: Vec<_> = params.iter().map(|p| p.shape()).collect();
        Self::new(config, &shapes)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[Matrix<T>] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Matrix<T>] {
        &self.second_moment
    }

    /// Applies one update to `params` in place and advances the step count.
    pub fn step(&mut self, params: &mut [&mut Matrix<T>], grads: &[&Matrix<T>]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::Shape(format!(
                "Adam tracks {} tensors, got {} params and {} grads",
                self.first_moment.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.first_moment[i].shape() {
                return Err(Error::Shape(format!(
                    "tensor {i}: param {:?}, grad {:?}, state {:?}",
                    p.shape(),
                    g.shape(),
                    self.first_moment[i].shape()
                )));
            }
        }
        self.step += 1;
        let c = &self.config;
        let b1 = T::lit(c.beta1);
        let b2 = T::lit(c.beta2);
        let one = T::one();
        let t = self.step as i32;
        let bias1 = one - T::lit(c.beta1.powi(t));
        let bias2 = one - T::lit(c.beta2.powi(t));
        let lr = T::lit(c.learning_rate);
        let eps = T::lit(c.epsilon);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.first_moment[i].data_mut();
            let v = self.second_moment[i].data_mut();
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mi = b1 * *mi + (one - b1) * gi;
                *vi = b2 * *vi + (one - b2) * gi * gi;
                let m_hat = *mi / bias1;
                let v_hat = *vi / bias2;
                *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Rescales `grads` so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<T: Scalar>(grads: &mut [&mut Matrix<T>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .map(|g| g.sum_sq().as_f64())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = T::lit(max_norm / norm);
        for g in grads.iter_mut() {
            g.scale(s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Plain scalar Adam, written independently of the matrix version.
    struct ScalarAdam {
        m: f64,
        v: f64,
        t: i32,
    }

    impl ScalarAdam {
        fn update(&mut self, w: f64, g: f64, lr: f64) -> f64 {
            self.t += 1;
            self.m = 0.9 * self.m + 0.1 * g;
            self.v = 0.999 * self.v + 0.001 * g * g;
            let mh = self.m / (1.0 - 0.9f64.powi(self.t));
            let vh = self.v / (1.0 - 0.999f64.powi(self.t));
            w - lr * mh / (vh.sqrt() + 1e-8)
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Matrix::from_vec(1, 1, vec![0.0f64]).unwrap();
        let g = Matrix::from_vec(1, 1, vec![1.0f64]).unwrap();
        let mut st = AdamState::for_params(AdamConfig::default(), &[&p]).unwrap();
        st.step(&mut [&mut p], &[&g]).unwrap();
        assert_abs_diff_eq!(p[(0, 0)], -0.01, epsilon = 1e-9);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn zero_gradient_is_identity_from_fresh_state() {
        let mut p = Matrix::from_vec(2, 2, vec![0.3f64, -1.0, 2.0, 0.0]).unwrap();
        let before = p.clone();
        let g = Matrix::zeros(2, 2);
        let mut st = AdamState::for_params(AdamConfig::default(), &[&p]).unwrap();
        for _ in 0..5 {
            st.step(&mut [&mut p], &[&g]).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(st.first_moment()[0].max_abs(), 0.0);
        assert_eq!(st.second_moment()[0].max_abs(), 0.0);
    }

    #[test]
    fn matches_scalar_reference_over_several_steps() {
        let grads = [0.5, 0.5, -1.25, 3.0, 0.0, 0.1];
        let mut p = Matrix::from_vec(1, 1, vec![1.0f64]).unwrap();
        let mut st = AdamState::for_params(AdamConfig::with_lr(0.01), &[&p]).unwrap();
        let mut reference = ScalarAdam {
            m: 0.0,
            v: 0.0,
            t: 0,
        };
        let mut w = 1.0;
        for &g in &grads {
            let gm = Matrix::from_vec(1, 1, vec![g]).unwrap();
            st.step(&mut [&mut p], &[&gm]).unwrap();
            w = reference.update(w, g, 0.01);
            assert_abs_diff_eq!(p[(0, 0)], w, epsilon = 1e-15);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = Matrix::<f64>::zeros(2, 2);
        let g = Matrix::<f64>::zeros(2, 3);
        let mut st = AdamState::for_params(AdamConfig::default(), &[&p]).unwrap();
        assert!(matches!(
            st.step(&mut [&mut p], &[&g]),
            Err(Error::Shape(_))
        ));
        assert_eq!(st.step_count(), 0);
    }

    #[test]
    fn invalid_betas_rejected() {
        let cfg = AdamConfig {
            beta1: 1.0,
            ..AdamConfig::default()
        };
        assert!(AdamState::<f64>::new(cfg, &[(1, 1)]).is_err());
    }

    #[test]
    fn clipping_bounds_global_norm() {
        let mut a = Matrix::from_vec(1, 2, vec![3.0f64, 0.0]).unwrap();
        let mut b = Matrix::from_vec(1, 1, vec![4.0f64]).unwrap();
        let n = clip_global_norm(&mut [&mut a, &mut b], 1.0);
        assert_abs_diff_eq!(n, 5.0);
        assert_abs_diff_eq!(a[(0, 0)], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(b[(0, 0)], 0.8, epsilon = 1e-12);
    }
}
