//! Adam with bias correction, plus global-norm gradient clipping.

use alloc::vec::Vec;

use crate::params::Parameters;
use crate::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new<P: Parameters>(params: &P) -> Self {
        let zeros: Vec<Vec<f64>> = params
            .tensors()
            .iter()
            .map(|(_, t)| alloc::vec![0.0; t.len()])
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
        }
    }
}

/// One Adam update of `params` along `grads`.
pub fn adam_step<P: Parameters>(params: &mut P, grads: &P, state: &mut AdamState, lr: f64) -> Result<()> {
    let g = grads.tensors();
    let mut p = params.tensors_mut();
    if g.len() != p.len() || g.len() != state.m.len() {
        return Err(Error::config("adam: parameter, gradient and state layouts differ"));
    }
    for (k, (gt, pt)) in g.iter().zip(p.iter()).enumerate() {
        if gt.1.len() != pt.len() || state.m[k].len() != pt.len() {
            return Err(Error::config(alloc::format!("adam: size mismatch on {}", gt.0)));
        }
    }
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let bc1 = 1.0 - libm::pow(b1, state.t as f64);
    let bc2 = 1.0 - libm::pow(b2, state.t as f64);
    for (k, pt) in p.iter_mut().enumerate() {
        let gd = g[k].1.data();
        let m = &mut state.m[k];
        let v = &mut state.v[k];
        for (j, w) in pt.data_mut().iter_mut().enumerate() {
            let gj = gd[j];
            m[j] = b1 * m[j] + (1.0 - b1) * gj;
            v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
            let mhat = m[j] / bc1;
            let vhat = v[j] / bc2;
            *w -= lr * mhat / (libm::sqrt(vhat) + state.eps);
        }
    }
    Ok(())
}

/// Rescales `grads` so its global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<P: Parameters>(grads: &mut P, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}
