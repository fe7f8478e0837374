//! Adam with bias correction over the flat parameter slices.

use super::{Gradients, ModelParams};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
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
            eps: 1e-7,
        }
    }
}

/// First and second moment estimates, flattened in the canonical parameter
/// order of [`ModelParams::param_slices`].
pub struct AdamState {
    config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ModelParams) -> AdamState {
        let shapes: Vec<usize> = params.param_slices().iter().map(|s| s.len()).collect();
        AdamState {
            config,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update step. Gradients must come from the same parameter layout.
    pub fn step(&mut self, params: &mut ModelParams, grads: &Gradients) {
        self.t += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        let slices = params.param_slices_mut();
        let gslices = grads.slices();
        assert_eq!(slices.len(), gslices.len());
        for ((slice, gslice), (m, v)) in slices
            .into_iter()
            .zip(gslices)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            assert_eq!(slice.len(), gslice.len());
            for k in 0..slice.len() {
                let g = gslice[k];
                m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g;
                v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g * g;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                slice[k] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{init, tiny_config, Gradients};
    use super::*;

    #[test]
    fn first_step_moves_by_lr_in_the_gradient_direction() {
        // With bias correction, step one is lr * g / (|g| + eps) regardless
        // of gradient magnitude.
        let mut params = init(&tiny_config(7), 1).unwrap();
        let before = params.point[0].w[(0, 0)];
        let mut grads = Gradients::zeros_like(&params);
        grads.point[0].w[(0, 0)] = 0.5;
        let mut adam = AdamState::new(AdamConfig::default(), &params);
        adam.step(&mut params, &grads);
        let moved = before - params.point[0].w[(0, 0)];
        let expect = 1e-3 * 0.5 / (0.5 + 1e-7);
        assert!((moved - expect).abs() < 1e-12, "moved {moved}");
        assert_eq!(adam.step_count(), 1);
        // Untouched parameters stay put.
        assert_eq!(
            params.point[0].w[(0, 1)],
            init(&tiny_config(7), 1).unwrap().point[0].w[(0, 1)]
        );
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut params = init(&tiny_config(7), 2).unwrap();
        let reference = params.clone();
        let grads = Gradients::zeros_like(&params);
        let mut adam = AdamState::new(AdamConfig::default(), &params);
        adam.step(&mut params, &grads);
        assert_eq!(params, reference);
    }

    #[test]
    fn repeated_constant_gradient_converges_towards_lr_steps() {
        // After warmup with a constant gradient, each step approaches lr.
        let mut params = init(&tiny_config(7), 3).unwrap();
        let mut grads = Gradients::zeros_like(&params);
        grads.out_b[0] = 2.0;
        let mut adam = AdamState::new(AdamConfig::default(), &params);
        for _ in 0..200 {
            adam.step(&mut params, &grads);
        }
        let before = params.out_b[0];
        adam.step(&mut params, &grads);
        let step = before - params.out_b[0];
        assert!((step - 1e-3).abs() < 1e-5, "step {step}");
    }
}
