use crate::error::{Error, Result};

use super::tensor::{Real, Tensor};

/// Numerically stable softmax (max-subtracted).
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn check_logits<T: Real>(logits: &[T], class: usize) -> Result<()> {
    if logits.len() < 2 {
        return Err(Error::shape(format!(
            "cross-entropy needs at least 2 logits, got {}",
            logits.len()
        )));
    }
    if class >= logits.len() {
        return Err(Error::ClassOutOfRange {
            index: class,
            classes: logits.len(),
        });
    }
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }
    Ok(())
}

/// `-log softmax(logits)[class]`, via log-sum-exp.
pub fn cross_entropy<T: Real>(logits: &[T], class: usize) -> Result<T> {
    check_logits(logits, class)?;
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<T>().ln();
    Ok(lse - logits[class])
}

/// Loss together with its gradient w.r.t. the logits (`softmax - onehot`).
pub fn cross_entropy_with_grad<T: Real>(logits: &[T], class: usize) -> Result<(T, Vec<T>)> {
    let loss = cross_entropy(logits, class)?;
    let mut grad = softmax(logits);
    grad[class] = grad[class] - T::one();
    Ok((loss, grad))
}

pub fn l2_norm<T: Real>(eps: &Tensor<T>) -> T {
    eps.data().iter().map(|&v| v * v).sum::<T>().sqrt()
}

/// `eps / ‖eps‖`, or zeros at (numerically) the origin where the norm has
/// no derivative; zero is a valid subgradient there.
pub fn l2_norm_grad<T: Real>(eps: &Tensor<T>) -> Tensor<T> {
    let norm = l2_norm(eps);
    if norm > T::from_f64(1e-12) {
        eps.map(|v| v / norm)
    } else {
        Tensor::zeros(eps.shape())
    }
}
