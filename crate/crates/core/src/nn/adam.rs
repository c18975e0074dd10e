use crate::error::{Error, Result};

/// Adaptive-moment optimizer state for one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

impl Adam {
    pub fn new(num_params: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
        }
    }

    pub fn len(&self) -> usize {
        self.first_moment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_moment.is_empty()
    }

    /// One bias-corrected update. Parameters are left untouched when the
    /// gradient contains a non-finite value.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.len() || grads.len() != self.len() {
            return Err(Error::contract(format!(
                "optimizer tracks {} parameters, got {} params / {} grads",
                self.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Divergence(format!(
                "non-finite gradient at index {i} (optimizer step {})",
                self.step + 1
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut())
            .zip(self.second_moment.iter_mut())
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut opt = Adam::new(2, 5e-4);
        opt.first_moment = vec![1.0, -1.0];
        opt.second_moment = vec![4.0, 4.0];
        opt.step = 10;
        let mut p = vec![0.0, 0.0];
        opt.step(&mut p, &[0.0, 0.0]).unwrap();
        assert_eq!(opt.first_moment, vec![0.9, -0.9]);
        assert!((opt.second_moment[0] - 4.0 * 0.999).abs() < 1e-15);
        // decayed moments still move parameters; with fresh state they do not
        let mut fresh = Adam::new(2, 5e-4);
        let mut q = vec![0.3, -0.2];
        fresh.step(&mut q, &[0.0, 0.0]).unwrap();
        assert_eq!(q, vec![0.3, -0.2]);
    }

    #[test]
    fn first_step_moves_by_learning_rate_times_sign() {
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
        let lr = 5e-4;
        let mut opt = Adam::new(3, lr);
        let mut p = vec![0.0; 3];
        let g = [2.0, -0.5, 1e-3];
        opt.step(&mut p, &g).unwrap();
        for (pi, gi) in p.iter().zip(g) {
            let expected = -lr * gi / (gi.abs() + 1e-8);
            assert!((pi - expected).abs() < 1e-15);
            assert!((pi.abs() - lr).abs() < 1e-7);
        }
    }

    #[test]
    fn constant_gradient_descends() {
        let mut opt = Adam::new(1, 1e-2);
        let mut p = vec![1.0];
        for _ in 0..100 {
            opt.step(&mut p, &[3.0]).unwrap();
        }
        assert!(p[0] < 1.0);
        let mut p = vec![1.0];
        let mut opt = Adam::new(1, 1e-2);
        for _ in 0..100 {
            opt.step(&mut p, &[-3.0]).unwrap();
        }
        assert!(p[0] > 1.0);
    }

    #[test]
    fn non_finite_gradient_is_divergence() {
        let mut opt = Adam::new(1, 1e-2);
        let mut p = vec![1.0];
        assert!(matches!(opt.step(&mut p, &[f64::NAN]), Err(Error::Divergence(_))));
        assert_eq!(p, vec![1.0]);
        assert_eq!(opt.step, 0);
    }

    #[test]
    fn identical_inputs_give_identical_trajectories() {
        let run = || {
            let mut opt = Adam::new(3, 5e-4);
            let mut p = vec![0.1, 0.2, 0.3];
            for k in 0..50 {
                let g: Vec<f64> = p.iter().map(|x| (x * k as f64).sin()).collect();
                opt.step(&mut p, &g).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }
}
