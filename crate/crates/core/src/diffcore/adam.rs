use super::{Tensor, TensorError};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers are allocated lazily to match
/// the parameter list on the first step.
#[derive(Clone, Debug)]
pub struct Adam<S> {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<S>>,
    second: Vec<Vec<S>>,
    pub checked: bool,
}

impl<S: Scalar> Adam<S> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
            checked: true,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update. `grads[i] == None` is treated as a zero gradient.
    pub fn step(
        &mut self,
        params: &mut [Tensor<S>],
        grads: &[Option<Tensor<S>>],
    ) -> Result<(), TensorError> {
        if params.len() != grads.len() {
            return Err(TensorError::Shape(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![S::zero(); p.numel()]).collect();
            self.second = self.first.clone();
        }
        if self.first.len() != params.len() {
            return Err(TensorError::Shape(
                "optimizer state does not match parameters".into(),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if let Some(g) = g {
                if g.shape() != p.shape() || self.first[i].len() != p.numel() {
                    return Err(TensorError::Shape(format!(
                        "gradient {i} has shape {:?}, parameter {:?}",
                        g.shape(),
                        p.shape()
                    )));
                }
                if self.checked && !g.all_finite() {
                    return Err(TensorError::NonFinite("adam gradient"));
                }
            }
        }
        self.step += 1;
        let c = &self.config;
        let t = self.step as i32;
        let b1 = S::from_f64_lossy(c.beta1);
        let b2 = S::from_f64_lossy(c.beta2);
        let lr = S::from_f64_lossy(c.lr);
        let eps = S::from_f64_lossy(c.eps);
        let bc1 = S::one() - b1.powi(t);
        let bc2 = S::one() - b2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            let data = p.data_mut();
            for j in 0..data.len() {
                let gj = g.as_ref().map_or(S::zero(), |g| g.data()[j]);
                m[j] = b1 * m[j] + (S::one() - b1) * gj;
                v[j] = b2 * v[j] + (S::one() - b2) * gj * gj;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                data[j] = data[j] - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_and_counts_step() {
        let mut params = vec![Tensor::<f64>::from_f64(&[2], &[1.0, -2.0]).unwrap()];
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut params, &[Some(Tensor::zeros(&[2]))])
            .unwrap();
        assert_eq!(params[0].data(), &[1.0, -2.0]);
        assert_eq!(adam.steps_taken(), 1);
    }

    #[test]
    fn first_step_with_unit_gradient_moves_by_lr() {
        let lr = 5e-5;
        let mut params = vec![Tensor::<f64>::scalar(0.3)];
        let mut adam = Adam::new(AdamConfig {
            lr,
            ..AdamConfig::default()
        });
        adam.step(&mut params, &[Some(Tensor::scalar(1.0))])
            .unwrap();
        // m̂ = 1, v̂ = 1 at t = 1, so the update is lr / (1 + eps)
        let expected = 0.3 - lr / (1.0 + 1e-8);
        assert!((params[0].item() - expected).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_rejected_in_checked_mode() {
        let mut params = vec![Tensor::<f64>::scalar(0.0)];
        let mut adam = Adam::new(AdamConfig::default());
        assert!(adam
            .step(&mut params, &[Some(Tensor::scalar(f64::NAN))])
            .is_err());
        assert_eq!(adam.steps_taken(), 0);
    }
}
