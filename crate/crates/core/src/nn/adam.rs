use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// Adam moments for an ordered list of tensors.
///
/// Bias correction uses a per-tensor step count, so a tensor whose moments
/// were reset restarts its correction from step 1. `step()` counts every
/// update call regardless of which tensors it touched.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    config: AdamConfig,
    step: u64,
    tensor_steps: Vec<u64>,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    /// Zero moments for tensors of the given lengths.
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Self {
        Self {
            config,
            step: 0,
            tensor_steps: vec![0; sizes.len()],
            first_moment: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn num_tensors(&self) -> usize {
        self.first_moment.len()
    }

    pub fn tensor_step(&self, i: usize) -> u64 {
        self.tensor_steps[i]
    }

    /// Zeroes the moments of tensor `i`.
    pub fn reset_tensor(&mut self, i: usize) {
        self.first_moment[i].fill(0.0);
        self.second_moment[i].fill(0.0);
        self.tensor_steps[i] = 0;
    }

    fn check_shapes(&self, params: &[&mut [f64]], grads: &[&[f64]]) -> Result<(), NnError> {
        if params.len() != self.num_tensors() || grads.len() != self.num_tensors() {
            return Err(NnError::ShapeMismatch(format!(
                "optimizer tracks {} tensors, got {} params and {} grads",
                self.num_tensors(),
                params.len(),
                grads.len()
            )));
        }
        for (i, ((p, g), m)) in params.iter().zip(grads).zip(&self.first_moment).enumerate() {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(NnError::ShapeMismatch(format!(
                    "tensor {i}: optimizer length {}, param {}, grad {}",
                    m.len(),
                    p.len(),
                    g.len()
                )));
            }
        }
        Ok(())
    }

    /// One update of every tensor.
    pub fn update(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<(), NnError> {
        let mask = vec![true; self.num_tensors()];
        self.update_masked(params, grads, &mask)
    }

    /// One update of the tensors where `mask` is true; the others keep both
    /// their values and their moments.
    pub fn update_masked(
        &mut self,
        params: &mut [&mut [f64]],
        grads: &[&[f64]],
        mask: &[bool],
    ) -> Result<(), NnError> {
        self.check_shapes(params, grads)?;
        if mask.len() != self.num_tensors() {
            return Err(NnError::ShapeMismatch(format!(
                "mask has {} entries for {} tensors",
                mask.len(),
                self.num_tensors()
            )));
        }
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        self.step += 1;
        for i in 0..self.num_tensors() {
            if !mask[i] {
                continue;
            }
            self.tensor_steps[i] += 1;
            let t = self.tensor_steps[i] as i32;
            let c1 = 1.0 - beta1.powi(t);
            let c2 = 1.0 - beta2.powi(t);
            let (m, v) = (&mut self.first_moment[i], &mut self.second_moment[i]);
            for (((p, &g), m), v) in params[i].iter_mut().zip(grads[i]).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        let mut state = AdamState::new(AdamConfig::default(), &[3, 2]);
        let mut a = vec![0.5, -1.0, 2.0];
        let mut b = vec![7.0, 0.0];
        let before = (a.clone(), b.clone());
        for _ in 0..50 {
            state
                .update(&mut [&mut a, &mut b], &[&[0.0; 3], &[0.0; 2]])
                .unwrap();
        }
        assert_eq!((a, b), before);
        assert_eq!(state.step(), 50);
    }

    #[test]
    fn first_step_magnitude_is_learning_rate() {
        for g in [1e-3, 0.5, -2.0, 1e4] {
            let mut state = AdamState::new(AdamConfig::default(), &[1]);
            let mut p = vec![1.0];
            state.update(&mut [&mut p], &[&[g]]).unwrap();
            let delta = (p[0] - 1.0).abs();
            assert!((0.0099..=0.01).contains(&delta), "g={g}: {delta}");
            assert_eq!((p[0] - 1.0).signum(), -g.signum());
        }
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut state = AdamState::new(AdamConfig::with_lr(0.05), &[2]);
            let mut p = vec![1.0, 2.0];
            for k in 0..10 {
                let g = [p[0] * k as f64, -p[1]];
                state.update(&mut [&mut p], &[&g]).unwrap();
            }
            (p, state)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch() {
        let mut state = AdamState::new(AdamConfig::default(), &[2]);
        let mut p = vec![1.0, 2.0, 3.0];
        assert!(matches!(
            state.update(&mut [&mut p], &[&[0.0; 3]]),
            Err(NnError::ShapeMismatch(_))
        ));
        let mut q = vec![1.0, 2.0];
        assert!(matches!(
            state.update(&mut [&mut q], &[&[0.0; 2], &[0.0; 2]]),
            Err(NnError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn masked_update_freezes_tensors() {
        let mut state = AdamState::new(AdamConfig::default(), &[1, 1]);
        let mut a = vec![1.0];
        let mut b = vec![1.0];
        state
            .update_masked(&mut [&mut a, &mut b], &[&[1.0], &[1.0]], &[false, true])
            .unwrap();
        assert_eq!(a, vec![1.0]);
        assert!(b[0] < 1.0);
        assert_eq!(state.step(), 1);
        assert_eq!(state.tensor_step(0), 0);
        assert_eq!(state.tensor_step(1), 1);
    }

    #[test]
    fn reset_restarts_bias_correction() {
        let mut state = AdamState::new(AdamConfig::default(), &[1]);
        let mut p = vec![0.0];
        for _ in 0..5 {
            state.update(&mut [&mut p], &[&[3.0]]).unwrap();
        }
        state.reset_tensor(0);
        let before = p[0];
        state.update(&mut [&mut p], &[&[-1.0]]).unwrap();
        let delta = p[0] - before;
        assert!((0.0099..=0.01).contains(&delta));
        assert_eq!(state.step(), 6);
    }
}
