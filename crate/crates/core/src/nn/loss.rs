//! Weighted binary cross-entropy over decoder levels.

use super::{NnError, Scalar, Tensor};

/// Clamp applied to predictions before taking logarithms.
pub const BCE_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct BceOutput<T> {
    pub loss: f64,
    /// Per-level loss before weighting.
    pub level_losses: Vec<f64>,
    /// One gradient tensor per level, shaped like the predictions.
    pub grads: Vec<Tensor<T>>,
}

fn check<T: Scalar>(
    predictions: &[Tensor<T>],
    targets: &[Tensor<T>],
    weights: &[f64],
) -> Result<f64, NnError> {
    if predictions.len() != targets.len() {
        return Err(NnError::Shape(format!(
            "{} prediction levels but {} target levels",
            predictions.len(),
            targets.len()
        )));
    }
    if weights.len() != predictions.len() {
        return Err(NnError::Config(format!(
            "{} loss weights for {} levels",
            weights.len(),
            predictions.len()
        )));
    }
    for (p, t) in predictions.iter().zip(targets) {
        p.check_same_shape(t)?;
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(NnError::Config("loss weights must be finite and non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(NnError::Config("loss weights are all zero".into()));
    }
    Ok(total)
}

fn level_loss<T: Scalar>(p: &Tensor<T>, t: &Tensor<T>) -> f64 {
    let sum: f64 = p
        .data()
        .iter()
        .zip(t.data())
        .map(|(&p, &t)| {
            let p = p.to_f64_lossy().clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
            let t = t.to_f64_lossy();
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    sum / p.len() as f64
}

/// `Σ_l w_l · mean(BCE_l) / Σ_l w_l`, with the gradient w.r.t. the
/// predictions.
pub fn bce_loss<T: Scalar>(
    predictions: &[Tensor<T>],
    targets: &[Tensor<T>],
    weights: &[f64],
) -> Result<BceOutput<T>, NnError> {
    let total = check(predictions, targets, weights)?;
    let mut out = BceOutput {
        loss: 0.0,
        level_losses: Vec::with_capacity(predictions.len()),
        grads: Vec::with_capacity(predictions.len()),
    };
    for ((p, t), &w) in predictions.iter().zip(targets).zip(weights) {
        let l = level_loss(p, t);
        out.loss += w * l / total;
        out.level_losses.push(l);
        let k = w / total / p.len() as f64;
        let g = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(&p, &t)| {
                let p = p.to_f64_lossy().clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
                let t = t.to_f64_lossy();
                T::from_f64_lossy(k * (p - t) / (p * (1.0 - p)))
            })
            .collect();
        out.grads.push(Tensor::new(p.shape().to_vec(), g)?);
    }
    Ok(out)
}

/// Same loss as [`bce_loss`] for sigmoid outputs, but the gradient is taken
/// w.r.t. the logits: `w_l/Σw · (p - t) / count_l`.
///
/// Skipping the sigmoid derivative keeps saturated outputs trainable.
pub fn bce_loss_logit_grad<T: Scalar>(
    predictions: &[Tensor<T>],
    targets: &[Tensor<T>],
    weights: &[f64],
) -> Result<BceOutput<T>, NnError> {
    let total = check(predictions, targets, weights)?;
    let mut out = BceOutput {
        loss: 0.0,
        level_losses: Vec::with_capacity(predictions.len()),
        grads: Vec::with_capacity(predictions.len()),
    };
    for ((p, t), &w) in predictions.iter().zip(targets).zip(weights) {
        let l = level_loss(p, t);
        out.loss += w * l / total;
        out.level_losses.push(l);
        let k = T::from_f64_lossy(w / total / p.len() as f64);
        let g = p.data().iter().zip(t.data()).map(|(&p, &t)| k * (p - t)).collect();
        out.grads.push(Tensor::new(p.shape().to_vec(), g)?);
    }
    if !out.loss.is_finite() {
        return Err(NnError::NonFinite("loss".into()));
    }
    Ok(out)
}
