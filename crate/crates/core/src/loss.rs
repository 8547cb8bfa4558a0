//! Binary cross-entropy.

use crate::{Error, Result};

/// Predictions are clamped into `[BCE_EPS, 1 − BCE_EPS]` before the log.
pub const BCE_EPS: f64 = 1e-7;

#[inline]
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(BCE_EPS, 1.0 - BCE_EPS)
}

/// Loss of a single prediction.
#[inline]
pub fn bce_term(p: f64, y: f64) -> f64 {
    let p = clamp_prob(p);
    -(y * libm::log(p) + (1.0 - y) * libm::log(1.0 - p))
}

/// Gradient of [`bce_term`] with respect to the pre-sigmoid logit, given
/// the sigmoid output `p`. Zero inside the clamped region.
#[inline]
pub fn bce_logit_grad(p: f64, y: f64) -> f64 {
    if !(BCE_EPS..=1.0 - BCE_EPS).contains(&p) {
        0.0
    } else {
        p - y
    }
}

/// Mean binary cross-entropy over paired predictions and labels.
pub fn bce_loss(preds: &[f64], labels: &[u8]) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(Error::invalid(alloc::format!(
            "{} predictions but {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::invalid("bce over an empty batch"));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::invalid(alloc::format!("label {bad} is not binary")));
    }
    let total: f64 = preds
        .iter()
        .zip(labels)
        .map(|(&p, &y)| bce_term(p, f64::from(y)))
        .sum();
    Ok(total / preds.len() as f64)
}
