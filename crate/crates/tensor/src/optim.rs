use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Adam with bias correction. Moment buffers are kept per parameter in the
/// order of the first `step` call; later calls must pass the same list.
pub struct Adam<T: Scalar> {
    beta1: T,
    beta2: T,
    eps: T,
    step_count: u64,
    first_moment: Vec<Vec<T>>,
    second_moment: Vec<Vec<T>>,
}

impl<T: Scalar> Default for Adam<T> {
    fn default() -> Self {
        Self::new(0.9, 0.999, 1e-8)
    }
}

impl<T: Scalar> Adam<T> {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            beta1: T::cast(beta1),
            beta2: T::cast(beta2),
            eps: T::cast(eps),
            step_count: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Apply one update from the gradients currently held by `params`.
    pub fn step(&mut self, params: &[Tensor<T>], lr: f64) -> Result<()> {
        if self.first_moment.is_empty() {
            self.first_moment = params.iter().map(|p| vec![T::zero(); p.numel()]).collect();
            self.second_moment = self.first_moment.clone();
        }
        if self.first_moment.len() != params.len() {
            return Err(TensorError::OptimizerStateMismatch {
                state: self.first_moment.len(),
                given: params.len(),
            });
        }
        for (i, p) in params.iter().enumerate() {
            if self.first_moment[i].len() != p.numel() {
                return Err(TensorError::ShapeMismatch {
                    op: "adam_step",
                    left: vec![self.first_moment[i].len()],
                    right: p.shape().to_vec(),
                });
            }
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let lr = T::cast(lr);
        let bc1 = T::one() - self.beta1.powi(t);
        let bc2 = T::one() - self.beta2.powi(t);
        for (i, p) in params.iter().enumerate() {
            let grad = p.grad();
            let m = &mut self.first_moment[i];
            let v = &mut self.second_moment[i];
            let mut data = p.data_mut();
            for j in 0..grad.len() {
                let g = grad[j];
                m[j] = self.beta1 * m[j] + (T::one() - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (T::one() - self.beta2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                data[j] = data[j] - lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Linear warmup to `base_lr`, then exponential decay:
/// `base_lr * decay_rate^((step - warmup) / decay_steps)`.
pub fn lr_schedule(
    step: u64,
    base_lr: f64,
    warmup_steps: u64,
    decay_rate: f64,
    decay_steps: u64,
) -> f64 {
    let warmup = warmup_steps.max(1);
    if step <= warmup {
        base_lr * step as f64 / warmup as f64
    } else {
        let progress = (step - warmup) as f64 / decay_steps.max(1) as f64;
        base_lr * decay_rate.powf(progress)
    }
}
