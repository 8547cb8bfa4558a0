//! In-memory checkpoint document shared by every model kind.
//!
//! The JSON encoding lives in the `solace` crate; this module only fixes the
//! logical layout: a format version, the architecture dims, the squash flag,
//! named tensors in a stable order, and free-form string metadata.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::activation::Squash;
use crate::lstm::LstmCellParams;
use crate::{Error, Result, Tensor};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub format_version: u32,
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub activation_flag: Squash,
    pub tensors: Vec<(String, Tensor)>,
    pub meta: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, activation_flag: Squash) -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION,
            input_dim,
            hidden_dims,
            activation_flag,
            tensors: Vec::new(),
            meta: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, t: &Tensor) {
        self.tensors.push((name.into(), t.clone()));
    }

    pub fn push_lstm(&mut self, prefix: &str, p: &LstmCellParams) {
        for (name, t) in p.named() {
            self.push(alloc::format!("{prefix}.{name}"), t);
        }
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.insert(key.to_string(), value.to_string());
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::invalid(alloc::format!("checkpoint lacks `{key}`")))
    }

    pub fn meta_parse<T: core::str::FromStr>(&self, key: &str) -> Result<T> {
        self.meta(key)?
            .parse()
            .map_err(|_| Error::invalid(alloc::format!("checkpoint field `{key}` is malformed")))
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::invalid(alloc::format!("checkpoint lacks tensor `{name}`")))
    }

    pub fn tensor_or_empty(&self, name: &str) -> Tensor {
        self.tensor(name).cloned().unwrap_or_else(|_| Tensor::empty())
    }

    pub fn lstm(&self, prefix: &str) -> Result<LstmCellParams> {
        let get = |n: &str| self.tensor(&alloc::format!("{prefix}.{n}")).cloned();
        let p = LstmCellParams {
            w_xi: get("w_xi")?,
            w_hi: get("w_hi")?,
            w_xf: get("w_xf")?,
            w_hf: get("w_hf")?,
            w_xo: get("w_xo")?,
            w_ho: get("w_ho")?,
            w_xc: get("w_xc")?,
            w_hc: get("w_hc")?,
            w_ci: get("w_ci")?,
            w_cf: get("w_cf")?,
            w_co: get("w_co")?,
            b_i: get("b_i")?,
            b_f: get("b_f")?,
            b_o: get("b_o")?,
            b_c: get("b_c")?,
            squash: self.activation_flag,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn check_version(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::invalid(alloc::format!(
                "unsupported checkpoint format_version {}",
                self.format_version
            )));
        }
        Ok(())
    }
}
