//! Peephole LSTM cell, its backward pass, and the bidirectional wrapper.
//!
//! Gate equations, with `s` the configured squash (sigmoid by default):
//!
//! ```text
//! i = σ(x·W_xi + h_prev·W_hi + w_ci ⊙ c_prev + b_i)
//! f = σ(x·W_xf + h_prev·W_hf + w_cf ⊙ c_prev + b_f)
//! c = f ⊙ c_prev + i ⊙ s(x·W_xc + h_prev·W_hc + b_c)
//! o = σ(x·W_xo + h_prev·W_ho + w_co ⊙ c + b_o)
//! h = o ⊙ s(c)
//! ```
//!
//! The output gate peeks at the *new* cell state.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::activation::{sigmoid, Squash};
use crate::params::{prefixed, Parameters};
use crate::tensor::{mat_vec_acc, outer_acc, vec_mat_acc};
use crate::{Error, Result, Tensor};

/// Weight-matrix initialization; peepholes and biases always start at zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum WeightInit {
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    #[default]
    GlorotUniform,
    /// Uniform in `±limit`.
    Uniform(f64),
}

impl WeightInit {
    pub fn limit(self, fan_in: usize, fan_out: usize) -> f64 {
        match self {
            WeightInit::GlorotUniform => libm::sqrt(6.0 / (fan_in + fan_out) as f64),
            WeightInit::Uniform(l) => l,
        }
    }

    pub fn fill<R: Rng + ?Sized>(self, t: &mut Tensor, rng: &mut R) {
        let (fan_in, fan_out) = (t.rows(), t.cols());
        let l = self.limit(fan_in, fan_out);
        for v in t.data_mut() {
            *v = rng.random_range(-l..l);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellParams {
    pub w_xi: Tensor,
    pub w_hi: Tensor,
    pub w_xf: Tensor,
    pub w_hf: Tensor,
    pub w_xo: Tensor,
    pub w_ho: Tensor,
    pub w_xc: Tensor,
    pub w_hc: Tensor,
    pub w_ci: Tensor,
    pub w_cf: Tensor,
    pub w_co: Tensor,
    pub b_i: Tensor,
    pub b_f: Tensor,
    pub b_o: Tensor,
    pub b_c: Tensor,
    pub squash: Squash,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

impl LstmCellParams {
    pub fn zeros(input_dim: usize, hidden: usize, squash: Squash) -> Self {
        let x = || Tensor::matrix(input_dim, hidden);
        let h = || Tensor::matrix(hidden, hidden);
        let v = || Tensor::vector(hidden);
        LstmCellParams {
            w_xi: x(),
            w_hi: h(),
            w_xf: x(),
            w_hf: h(),
            w_xo: x(),
            w_ho: h(),
            w_xc: x(),
            w_hc: h(),
            w_ci: v(),
            w_cf: v(),
            w_co: v(),
            b_i: v(),
            b_f: v(),
            b_o: v(),
            b_c: v(),
            squash,
        }
    }

    /// Random weight matrices, zero peepholes and biases.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden: usize, squash: Squash, init: WeightInit, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_dim, hidden, squash);
        for w in p.weight_matrices_mut() {
            init.fill(w, rng);
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w_xi.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hi.rows()
    }

    fn weight_matrices_mut(&mut self) -> [&mut Tensor; 8] {
        [
            &mut self.w_xi,
            &mut self.w_hi,
            &mut self.w_xf,
            &mut self.w_hf,
            &mut self.w_xo,
            &mut self.w_ho,
            &mut self.w_xc,
            &mut self.w_hc,
        ]
    }

    pub(crate) fn named(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("w_xi", &self.w_xi),
            ("w_hi", &self.w_hi),
            ("w_xf", &self.w_xf),
            ("w_hf", &self.w_hf),
            ("w_xo", &self.w_xo),
            ("w_ho", &self.w_ho),
            ("w_xc", &self.w_xc),
            ("w_hc", &self.w_hc),
            ("w_ci", &self.w_ci),
            ("w_cf", &self.w_cf),
            ("w_co", &self.w_co),
            ("b_i", &self.b_i),
            ("b_f", &self.b_f),
            ("b_o", &self.b_o),
            ("b_c", &self.b_c),
        ]
    }

    pub(crate) fn all_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.w_xi,
            &mut self.w_hi,
            &mut self.w_xf,
            &mut self.w_hf,
            &mut self.w_xo,
            &mut self.w_ho,
            &mut self.w_xc,
            &mut self.w_hc,
            &mut self.w_ci,
            &mut self.w_cf,
            &mut self.w_co,
            &mut self.b_i,
            &mut self.b_f,
            &mut self.b_o,
            &mut self.b_c,
        ]
    }

    pub(crate) fn named_with_prefix(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        prefixed(prefix, self.named()).collect()
    }

    /// Checks that every tensor has the shape implied by `(input_dim, hidden_dim)`
    /// and holds only finite values.
    pub fn validate(&self) -> Result<()> {
        let (n, h) = (self.input_dim(), self.hidden_dim());
        for (name, t) in self.named() {
            let expected: &[usize] = match name {
                "w_xi" | "w_xf" | "w_xo" | "w_xc" => &[n, h],
                "w_hi" | "w_hf" | "w_ho" | "w_hc" => &[h, h],
                _ => &[h],
            };
            if t.shape() != expected {
                return Err(Error::config(alloc::format!(
                    "lstm tensor {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    expected
                )));
            }
            if !t.is_finite() {
                return Err(Error::NumericOverflow {
                    tensor: String::from(name),
                });
            }
        }
        Ok(())
    }
}

impl Parameters for LstmCellParams {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        self.named_with_prefix("")
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.all_mut()
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), self.hidden_dim(), self.squash)
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub c: Vec<f64>,
    /// `s(c)`
    pub sc: Vec<f64>,
    pub h: Vec<f64>,
}

impl StepCache {
    pub fn state(&self) -> LstmState {
        LstmState {
            h: self.h.clone(),
            c: self.c.clone(),
        }
    }
}

/// One cell step with full shape checking.
pub fn lstm_cell_step(x: &[f64], prev: &LstmState, p: &LstmCellParams) -> Result<LstmState> {
    let h = p.hidden_dim();
    if x.len() != p.input_dim() || prev.h.len() != h || prev.c.len() != h {
        return Err(Error::config(alloc::format!(
            "lstm step shape mismatch: x {} (expected {}), h {}, c {} (expected {})",
            x.len(),
            p.input_dim(),
            prev.h.len(),
            prev.c.len(),
            h
        )));
    }
    Ok(step_cached(x, &prev.h, &prev.c, p).state())
}

pub(crate) fn step_cached(x: &[f64], h_prev: &[f64], c_prev: &[f64], p: &LstmCellParams) -> StepCache {
    let n = p.hidden_dim();
    let mut ai = p.b_i.data().to_vec();
    let mut af = p.b_f.data().to_vec();
    let mut ao = p.b_o.data().to_vec();
    let mut ac = p.b_c.data().to_vec();
    vec_mat_acc(x, &p.w_xi, &mut ai);
    vec_mat_acc(h_prev, &p.w_hi, &mut ai);
    vec_mat_acc(x, &p.w_xf, &mut af);
    vec_mat_acc(h_prev, &p.w_hf, &mut af);
    vec_mat_acc(x, &p.w_xo, &mut ao);
    vec_mat_acc(h_prev, &p.w_ho, &mut ao);
    vec_mat_acc(x, &p.w_xc, &mut ac);
    vec_mat_acc(h_prev, &p.w_hc, &mut ac);

    let (wci, wcf, wco) = (p.w_ci.data(), p.w_cf.data(), p.w_co.data());
    let mut i = vec![0.0; n];
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut o = vec![0.0; n];
    let mut c = vec![0.0; n];
    let mut sc = vec![0.0; n];
    let mut h = vec![0.0; n];
    for k in 0..n {
        i[k] = sigmoid(ai[k] + wci[k] * c_prev[k]);
        f[k] = sigmoid(af[k] + wcf[k] * c_prev[k]);
        g[k] = p.squash.apply(ac[k]);
        c[k] = f[k] * c_prev[k] + i[k] * g[k];
        o[k] = sigmoid(ao[k] + wco[k] * c[k]);
        sc[k] = p.squash.apply(c[k]);
        h[k] = o[k] * sc[k];
    }
    StepCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        i,
        f,
        g,
        o,
        c,
        sc,
        h,
    }
}

/// Backward through one step.
///
/// `dh` and `dc_next` are the loss gradients flowing into this step's `h` and
/// `c`. Parameter gradients accumulate into `grad`; the input gradient
/// accumulates into `dx` when given. Returns `(dh_prev, dc_prev)`.
pub(crate) fn step_backward(
    p: &LstmCellParams,
    cache: &StepCache,
    dh: &[f64],
    dc_next: &[f64],
    grad: &mut LstmCellParams,
    dx: Option<&mut [f64]>,
) -> (Vec<f64>, Vec<f64>) {
    let n = p.hidden_dim();
    let sq = p.squash;
    let (wci, wcf, wco) = (p.w_ci.data(), p.w_cf.data(), p.w_co.data());
    let mut dai = vec![0.0; n];
    let mut daf = vec![0.0; n];
    let mut dao = vec![0.0; n];
    let mut dac = vec![0.0; n];
    let mut dc_prev = vec![0.0; n];
    for k in 0..n {
        let o = cache.o[k];
        dao[k] = dh[k] * cache.sc[k] * o * (1.0 - o);
        let dc = dc_next[k] + dh[k] * o * sq.derivative_from_output(cache.sc[k]) + dao[k] * wco[k];
        let (i, f) = (cache.i[k], cache.f[k]);
        daf[k] = dc * cache.c_prev[k] * f * (1.0 - f);
        dai[k] = dc * cache.g[k] * i * (1.0 - i);
        dac[k] = dc * i * sq.derivative_from_output(cache.g[k]);
        dc_prev[k] = dc * f + dai[k] * wci[k] + daf[k] * wcf[k];
    }
    {
        let gci = grad.w_ci.data_mut();
        for k in 0..n {
            gci[k] += dai[k] * cache.c_prev[k];
        }
        let gcf = grad.w_cf.data_mut();
        for k in 0..n {
            gcf[k] += daf[k] * cache.c_prev[k];
        }
        let gco = grad.w_co.data_mut();
        for k in 0..n {
            gco[k] += dao[k] * cache.c[k];
        }
    }
    crate::tensor::add_assign(grad.b_i.data_mut(), &dai);
    crate::tensor::add_assign(grad.b_f.data_mut(), &daf);
    crate::tensor::add_assign(grad.b_o.data_mut(), &dao);
    crate::tensor::add_assign(grad.b_c.data_mut(), &dac);
    outer_acc(&mut grad.w_xi, &cache.x, &dai);
    outer_acc(&mut grad.w_xf, &cache.x, &daf);
    outer_acc(&mut grad.w_xo, &cache.x, &dao);
    outer_acc(&mut grad.w_xc, &cache.x, &dac);
    outer_acc(&mut grad.w_hi, &cache.h_prev, &dai);
    outer_acc(&mut grad.w_hf, &cache.h_prev, &daf);
    outer_acc(&mut grad.w_ho, &cache.h_prev, &dao);
    outer_acc(&mut grad.w_hc, &cache.h_prev, &dac);

    let mut dh_prev = vec![0.0; n];
    mat_vec_acc(&p.w_hi, &dai, &mut dh_prev);
    mat_vec_acc(&p.w_hf, &daf, &mut dh_prev);
    mat_vec_acc(&p.w_ho, &dao, &mut dh_prev);
    mat_vec_acc(&p.w_hc, &dac, &mut dh_prev);
    if let Some(dx) = dx {
        mat_vec_acc(&p.w_xi, &dai, dx);
        mat_vec_acc(&p.w_xf, &daf, dx);
        mat_vec_acc(&p.w_xo, &dao, dx);
        mat_vec_acc(&p.w_xc, &dac, dx);
    }
    (dh_prev, dc_prev)
}

/// Runs the cell over `xs` from `init`, keeping every step's cache.
pub(crate) fn run_cached<'a, I>(p: &LstmCellParams, xs: I, init: &LstmState) -> Vec<StepCache>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut caches: Vec<StepCache> = Vec::new();
    for x in xs {
        let cache = match caches.last() {
            Some(prev) => step_cached(x, &prev.h, &prev.c, p),
            None => step_cached(x, &init.h, &init.c, p),
        };
        caches.push(cache);
    }
    caches
}

/// Backpropagates through a cached run.
///
/// `dh[t]` is the external gradient on the hidden output of step `t`
/// (may be all zeros); `dfinal` adds gradients on the final `(h, c)`.
/// Returns per-step input gradients (when `want_dx`) and the gradient on the
/// initial state.
pub(crate) fn backward_sequence(
    p: &LstmCellParams,
    caches: &[StepCache],
    dh: &[Vec<f64>],
    dfinal: Option<(&[f64], &[f64])>,
    grad: &mut LstmCellParams,
    want_dx: bool,
) -> (Vec<Vec<f64>>, LstmState) {
    let n = p.hidden_dim();
    let mut dh_next = vec![0.0; n];
    let mut dc_next = vec![0.0; n];
    if let Some((dhf, dcf)) = dfinal {
        dh_next.copy_from_slice(dhf);
        dc_next.copy_from_slice(dcf);
    }
    let mut dxs = if want_dx {
        caches.iter().map(|c| vec![0.0; c.x.len()]).collect()
    } else {
        Vec::new()
    };
    for t in (0..caches.len()).rev() {
        let mut dht = dh_next.clone();
        crate::tensor::add_assign(&mut dht, &dh[t]);
        let dx = if want_dx { Some(dxs[t].as_mut_slice()) } else { None };
        let (dhp, dcp) = step_backward(p, &caches[t], &dht, &dc_next, grad, dx);
        dh_next = dhp;
        dc_next = dcp;
    }
    (dxs, LstmState { h: dh_next, c: dc_next })
}

/// Bidirectional pass: `output[t] = [h_fwd(t) ; h_bwd(t)]`, where the backward
/// cell reads the reversed sequence and its states are re-aligned to the
/// original positions.
pub fn bilstm_forward(seq: &[Vec<f64>], fwd: &LstmCellParams, bwd: &LstmCellParams) -> Result<Vec<Vec<f64>>> {
    if seq.is_empty() {
        return Err(Error::invalid("bidirectional pass over an empty sequence"));
    }
    fwd.validate()?;
    bwd.validate()?;
    if let Some(bad) = seq.iter().find(|x| x.len() != fwd.input_dim() || x.len() != bwd.input_dim()) {
        return Err(Error::config(alloc::format!(
            "input width {} does not match cell input dims {}/{}",
            bad.len(),
            fwd.input_dim(),
            bwd.input_dim()
        )));
    }
    let (f, b) = bilstm_cached(seq.iter().map(|v| v.as_slice()).collect::<Vec<_>>().as_slice(), fwd, bwd);
    Ok(concat_directions(&f, &b))
}

pub(crate) fn bilstm_cached(
    seq: &[&[f64]],
    fwd: &LstmCellParams,
    bwd: &LstmCellParams,
) -> (Vec<StepCache>, Vec<StepCache>) {
    let f = run_cached(fwd, seq.iter().copied(), &LstmState::zeros(fwd.hidden_dim()));
    let b = run_cached(bwd, seq.iter().rev().copied(), &LstmState::zeros(bwd.hidden_dim()));
    (f, b)
}

pub(crate) fn concat_directions(f: &[StepCache], b: &[StepCache]) -> Vec<Vec<f64>> {
    let n = f.len();
    (0..n)
        .map(|t| {
            let mut v = f[t].h.clone();
            v.extend_from_slice(&b[n - 1 - t].h);
            v
        })
        .collect()
}
