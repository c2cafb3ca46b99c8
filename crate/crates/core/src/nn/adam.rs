//! Adam with bias correction.

use super::{NnError, Param, Scalar};

#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub first_moment: Vec<Vec<T>>,
    pub second_moment: Vec<Vec<T>>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            learning_rate,
        }
    }

    /// Applies one update to `params` using their accumulated gradients.
    ///
    /// Moments are allocated on the first call; later calls must pass the
    /// same parameters in the same order.
    pub fn step(&mut self, params: &mut [&mut Param<T>]) -> Result<(), NnError> {
        if !(self.learning_rate > 0.0) {
            return Err(NnError::Config(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.first_moment.is_empty() && self.step_count == 0 {
            self.first_moment = params.iter().map(|p| vec![T::zero(); p.value.len()]).collect();
            self.second_moment = self.first_moment.clone();
        }
        if self.first_moment.len() != params.len()
            || self
                .first_moment
                .iter()
                .zip(params.iter())
                .any(|(m, p)| m.len() != p.value.len() || p.grad.len() != p.value.len())
        {
            return Err(NnError::Shape("optimizer state does not match parameters".into()));
        }
        if params.iter().any(|p| p.grad.iter().any(|g| !g.is_finite())) {
            return Err(NnError::NonFinite("gradient".into()));
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let b1 = T::from_f64_lossy(self.beta1);
        let b2 = T::from_f64_lossy(self.beta2);
        let one = T::one();
        let c1 = T::from_f64_lossy(1.0 - self.beta1.powi(t));
        let c2 = T::from_f64_lossy(1.0 - self.beta2.powi(t));
        let lr = T::from_f64_lossy(self.learning_rate);
        let eps = T::from_f64_lossy(self.epsilon);
        for ((p, m), v) in params
            .iter_mut()
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            for i in 0..p.value.len() {
                let g = p.grad[i];
                m[i] = b1 * m[i] + (one - b1) * g;
                v[i] = b2 * v[i] + (one - b2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p.value[i] = p.value[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
