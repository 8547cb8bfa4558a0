//! Elementwise activations and the softmax family.

use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationKind {
    Sigmoid,
    Softmax,
}

/// Squashing function applied to the cell candidate and to the cell state
/// before the output gate.
///
/// `Sigmoid` is the literal form of the gate equations; `Tanh` is the
/// conventional LSTM choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Squash {
    #[default]
    Sigmoid,
    Tanh,
}

impl Squash {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Squash::Sigmoid => sigmoid(x),
            Squash::Tanh => libm::tanh(x),
        }
    }

    /// Derivative expressed through the activation's own output `y`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Squash::Sigmoid => y * (1.0 - y),
            Squash::Tanh => 1.0 - y * y,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Squash::Sigmoid => "sigmoid",
            Squash::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sigmoid" => Some(Squash::Sigmoid),
            "tanh" => Some(Squash::Tanh),
            _ => None,
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Applies `kind` to `x`, rejecting non-finite input.
pub fn activation(kind: ActivationKind, x: &[f64]) -> Result<Vec<f64>> {
    if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(alloc::format!(
            "non-finite activation input at position {pos}"
        )));
    }
    Ok(match kind {
        ActivationKind::Sigmoid => x.iter().map(|&v| sigmoid(v)).collect(),
        ActivationKind::Softmax => softmax(x),
    })
}

/// Max-shifted softmax.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|&v| libm::exp(v - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `log(Σ exp(x_i))` over the entries where `mask` is true.
pub(crate) fn masked_logsumexp(x: &[f64], mask: impl Fn(usize) -> bool) -> f64 {
    let max = x
        .iter()
        .enumerate()
        .filter(|(i, _)| mask(*i))
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = x
        .iter()
        .enumerate()
        .filter(|(i, _)| mask(*i))
        .map(|(_, &v)| libm::exp(v - max))
        .sum();
    max + libm::log(sum)
}
