//! Named parameter traversal shared by every weight-bearing struct.
//!
//! Gradients are stored in a value of the same type as the weights, so a
//! model and its gradient line up name-for-name and index-for-index.

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::video::TensorMap;

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_owned()
    } else {
        format!("{prefix}.{name}")
    }
}

pub trait Parameters: Clone {
    fn collect_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>);

    fn collect_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>);

    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        self.collect_params("", &mut out);
        out
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        self.collect_params_mut("", &mut out);
        out
    }

    /// Same structure, every value zero.
    fn zeroed(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.named_params_mut() {
            t.data_mut().fill(0.0);
        }
        z
    }

    /// `self += other`, tensor by tensor.
    fn accumulate(&mut self, other: &Self) {
        let src = other.named_params();
        for ((_, dst), (_, s)) in self.named_params_mut().into_iter().zip(src) {
            for (a, b) in dst.data_mut().iter_mut().zip(s.data()) {
                *a += b;
            }
        }
    }

    fn scale_all(&mut self, s: f64) {
        for (_, t) in self.named_params_mut() {
            for v in t.data_mut() {
                *v *= s;
            }
        }
    }

    fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.len()).sum()
    }

    fn to_tensor_map(&self) -> TensorMap {
        self.named_params()
            .into_iter()
            .map(|(k, t)| (k, t.clone()))
            .collect()
    }

    /// Overwrite every parameter from `map`; names and shapes must match.
    fn load_tensor_map(&mut self, map: &TensorMap) -> Result<()> {
        for (name, t) in self.named_params_mut() {
            let src = map
                .get(&name)
                .ok_or_else(|| Error::Config(format!("checkpoint is missing '{name}'")))?;
            if src.shape() != t.shape() {
                return Err(Error::Config(format!(
                    "'{name}' has shape {:?} in checkpoint, model expects {:?}",
                    src.shape(),
                    t.shape()
                )));
            }
            *t = src.clone();
        }
        Ok(())
    }
}
