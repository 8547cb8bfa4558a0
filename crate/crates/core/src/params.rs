//! Named collections of trainable tensors.

use alloc::string::String;
use alloc::vec::Vec;

use crate::{Error, Result, Tensor};

/// A model whose trainable tensors can be enumerated in a fixed order.
///
/// The same type doubles as its own gradient container: `zeros_like`
/// produces a structurally identical value with every trainable tensor
/// zeroed. Frozen tensors are left out of both listings.
pub trait Parameters {
    fn tensors(&self) -> Vec<(String, &Tensor)>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;
    fn zeros_like(&self) -> Self
    where
        Self: Sized;

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn global_norm(&self) -> f64 {
        libm::sqrt(self.tensors().iter().map(|(_, t)| t.sum_squares()).sum())
    }

    fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// Every trainable value in listing order.
    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (_, t) in self.tensors() {
            out.extend_from_slice(t.data());
        }
        out
    }

    /// Name of the first tensor holding a non-finite value.
    fn first_non_finite(&self) -> Option<String> {
        self.tensors()
            .into_iter()
            .find(|(_, t)| !t.is_finite())
            .map(|(name, _)| name)
    }

    fn ensure_finite(&self) -> Result<()> {
        match self.first_non_finite() {
            Some(tensor) => Err(Error::NumericOverflow { tensor }),
            None => Ok(()),
        }
    }
}

/// Adds `other` into `acc` tensor by tensor; both must share a structure.
pub fn accumulate<P: Parameters>(acc: &mut P, other: &P) {
    let src = other.tensors();
    for (dst, (_, s)) in acc.tensors_mut().into_iter().zip(src) {
        crate::tensor::add_assign(dst.data_mut(), s.data());
    }
}

pub(crate) fn prefixed<'a>(
    prefix: &str,
    items: Vec<(&'static str, &'a Tensor)>,
) -> impl Iterator<Item = (String, &'a Tensor)> + 'a {
    let prefix = String::from(prefix);
    items.into_iter().filter(|(_, t)| !t.is_empty()).map(move |(n, t)| {
        if prefix.is_empty() {
            (String::from(n), t)
        } else {
            (alloc::format!("{prefix}.{n}"), t)
        }
    })
}
