//! Per-channel batch normalization over `[batch, length, channels]`.

use super::{Mode, NnError, Param, Scalar, Tensor};

#[derive(Debug, Clone)]
struct BnCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
    shape: Vec<usize>,
}

/// Batch normalization; statistics are taken over every (batch, position)
/// row of a channel.
///
/// Running statistics follow `running = (1 - momentum)·running + momentum·batch`,
/// with the unbiased batch variance.
#[derive(Debug, Clone)]
pub struct BatchNorm1d<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: f64,
    pub epsilon: f64,
    cache: Option<BnCache<T>>,
}

impl<T: Scalar> BatchNorm1d<T> {
    pub fn new(channels: usize, momentum: f64, epsilon: f64) -> Result<Self, NnError> {
        if !(momentum > 0.0 && momentum < 1.0) {
            return Err(NnError::Config(format!("batch-norm momentum {momentum} outside (0, 1)")));
        }
        if !(epsilon > 0.0) {
            return Err(NnError::Config("batch-norm epsilon must be positive".into()));
        }
        Ok(Self {
            gamma: Param::new(vec![channels], vec![T::one(); channels]),
            beta: Param::new(vec![channels], vec![T::zero(); channels]),
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            momentum,
            epsilon,
            cache: None,
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.len()
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<usize, NnError> {
        let ch = self.channels();
        if input.shape().len() < 2 || *input.shape().last().unwrap() != ch {
            return Err(NnError::Shape(format!(
                "batch-norm expects trailing {ch} channels, got {:?}",
                input.shape()
            )));
        }
        Ok(input.len() / ch)
    }

    pub fn forward(&mut self, input: &Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnError> {
        if mode == Mode::Infer {
            return self.infer(input);
        }
        let rows = self.check_input(input)?;
        let ch = self.channels();
        let x = input.data();
        let count = T::from_usize(rows).unwrap();

        let mut mean = vec![T::zero(); ch];
        for r in 0..rows {
            for (m, &v) in mean.iter_mut().zip(&x[r * ch..(r + 1) * ch]) {
                *m = *m + v;
            }
        }
        mean.iter_mut().for_each(|m| *m = *m / count);
        let mut var = vec![T::zero(); ch];
        for r in 0..rows {
            for c in 0..ch {
                let d = x[r * ch + c] - mean[c];
                var[c] = var[c] + d * d;
            }
        }
        var.iter_mut().for_each(|v| *v = *v / count);

        let eps = T::from_f64_lossy(self.epsilon);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut xhat = vec![T::zero(); x.len()];
        let mut out = vec![T::zero(); x.len()];
        for r in 0..rows {
            for c in 0..ch {
                let i = r * ch + c;
                xhat[i] = (x[i] - mean[c]) * inv_std[c];
                out[i] = self.gamma.value[c] * xhat[i] + self.beta.value[c];
            }
        }
        if !out.iter().all(|v| v.is_finite()) {
            return Err(NnError::NonFinite("batch-norm forward".into()));
        }

        let m = T::from_f64_lossy(self.momentum);
        let unbias = if rows > 1 {
            count / (count - T::one())
        } else {
            T::one()
        };
        for c in 0..ch {
            self.running_mean[c] = (T::one() - m) * self.running_mean[c] + m * mean[c];
            self.running_var[c] = (T::one() - m) * self.running_var[c] + m * var[c] * unbias;
        }
        self.cache = Some(BnCache {
            xhat,
            inv_std,
            shape: input.shape().to_vec(),
        });
        Tensor::new(input.shape().to_vec(), out)
    }

    /// Normalizes with the running statistics only.
    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let rows = self.check_input(input)?;
        let ch = self.channels();
        let eps = T::from_f64_lossy(self.epsilon);
        let scale: Vec<T> = (0..ch)
            .map(|c| self.gamma.value[c] / (self.running_var[c] + eps).sqrt())
            .collect();
        let shift: Vec<T> = (0..ch)
            .map(|c| self.beta.value[c] - self.running_mean[c] * scale[c])
            .collect();
        let x = input.data();
        let mut out = Vec::with_capacity(x.len());
        for r in 0..rows {
            for c in 0..ch {
                out.push(x[r * ch + c] * scale[c] + shift[c]);
            }
        }
        if !out.iter().all(|v| v.is_finite()) {
            return Err(NnError::NonFinite("batch-norm forward".into()));
        }
        Tensor::new(input.shape().to_vec(), out)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let cache = self.cache.take().ok_or(NnError::NoForwardContext)?;
        if grad_out.shape() != cache.shape.as_slice() {
            return Err(NnError::Shape("batch-norm backward: gradient shape".into()));
        }
        let ch = self.channels();
        let rows = grad_out.len() / ch;
        let count = T::from_usize(rows).unwrap();
        let dy = grad_out.data();

        let mut sum_dy = vec![T::zero(); ch];
        let mut sum_dy_xhat = vec![T::zero(); ch];
        for r in 0..rows {
            for c in 0..ch {
                let i = r * ch + c;
                sum_dy[c] = sum_dy[c] + dy[i];
                sum_dy_xhat[c] = sum_dy_xhat[c] + dy[i] * cache.xhat[i];
            }
        }
        for c in 0..ch {
            self.gamma.grad[c] = self.gamma.grad[c] + sum_dy_xhat[c];
            self.beta.grad[c] = self.beta.grad[c] + sum_dy[c];
        }
        let mut dx = vec![T::zero(); dy.len()];
        for r in 0..rows {
            for c in 0..ch {
                let i = r * ch + c;
                let k = self.gamma.value[c] * cache.inv_std[c] / count;
                dx[i] = k * (count * dy[i] - sum_dy[c] - cache.xhat[i] * sum_dy_xhat[c]);
            }
        }
        if !dx.iter().all(|v| v.is_finite()) {
            return Err(NnError::NonFinite("batch-norm backward".into()));
        }
        Tensor::new(cache.shape, dx)
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.gamma, &mut self.beta]
    }

    pub fn params(&self) -> [&Param<T>; 2] {
        [&self.gamma, &self.beta]
    }

    pub(crate) fn clear_cache(&mut self) {
        self.cache = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Tensor<f64> {
        Tensor::from_fn(vec![8, 5, 3], |i| ((i * 37 % 101) as f64).sin() * 3.0 + (i % 3) as f64)
    }

    #[test]
    fn train_mode_output_is_standardized_per_channel() {
        let mut bn = BatchNorm1d::<f64>::new(3, 0.1, 1e-12).unwrap();
        let y = bn.forward(&sample(), Mode::Train).unwrap();
        let rows = y.len() / 3;
        for c in 0..3 {
            let vals: Vec<f64> = (0..rows).map(|r| y.data()[r * 3 + c]).collect();
            let mean = vals.iter().sum::<f64>() / rows as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rows as f64;
            assert!(mean.abs() < 1e-5);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn running_stats_move_only_in_train_mode() {
        let mut bn = BatchNorm1d::<f64>::new(3, 0.5, 1e-5).unwrap();
        bn.forward(&sample(), Mode::Infer).unwrap();
        assert_eq!(bn.running_mean, vec![0.0; 3]);
        assert_eq!(bn.running_var, vec![1.0; 3]);
        bn.forward(&sample(), Mode::Train).unwrap();
        assert!(bn.running_mean.iter().any(|&m| m != 0.0));
    }

    #[test]
    fn infer_reads_running_stats() {
        let mut bn = BatchNorm1d::<f64>::new(1, 0.1, 1e-5).unwrap();
        bn.running_mean = vec![2.0];
        bn.running_var = vec![4.0 - 1e-5];
        let y = bn.infer(&Tensor::new(vec![1, 1, 1], vec![6.0]).unwrap()).unwrap();
        assert!((y.data()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_hyperparameters_are_rejected() {
        assert!(BatchNorm1d::<f32>::new(4, 0.0, 1e-5).is_err());
        assert!(BatchNorm1d::<f32>::new(4, 1.0, 1e-5).is_err());
        assert!(BatchNorm1d::<f32>::new(4, 0.1, 0.0).is_err());
    }
}
