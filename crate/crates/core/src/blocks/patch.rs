//! Non-overlapping time patches of feature tensors.

use crate::error::{FbmError, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchLayout {
    /// Timesteps of the features being patched.
    pub t: usize,
    /// Frequency columns.
    pub cols: usize,
    pub patches: usize,
}

impl PatchLayout {
    pub fn new(t: usize, cols: usize, patches: usize) -> Result<Self> {
        if patches == 0 || !t.is_multiple_of(patches) {
            return Err(FbmError::dim(format!("{t} timesteps cannot be split into {patches} patches")));
        }
        Ok(PatchLayout { t, cols, patches })
    }

    pub fn patch_time(&self) -> usize {
        self.t / self.patches
    }

    /// Flattened patch width.
    pub fn n(&self) -> usize {
        self.patch_time() * self.cols
    }
}

/// `[.., T, cols]` features to `[.., P, N]` patches, time-major inside a patch.
pub fn patch(g: &Tensor, layout: PatchLayout) -> Result<Tensor> {
    let sh = g.shape();
    if sh.len() < 2 || sh[sh.len() - 2] != layout.t || sh[sh.len() - 1] != layout.cols {
        return Err(FbmError::dim(format!(
            "features {sh:?} do not match layout [{} × {}]",
            layout.t, layout.cols
        )));
    }
    let mut shape = sh[..sh.len() - 2].to_vec();
    shape.extend([layout.patches, layout.n()]);
    g.reshape(&shape)
}

pub fn unpatch(x: &Tensor, layout: PatchLayout) -> Result<Tensor> {
    let sh = x.shape();
    if sh.len() < 2 || sh[sh.len() - 2] != layout.patches || sh[sh.len() - 1] != layout.n() {
        return Err(FbmError::dim(format!(
            "patches {sh:?} do not match layout [{} × {}]",
            layout.patches,
            layout.n()
        )));
    }
    let mut shape = sh[..sh.len() - 2].to_vec();
    shape.extend([layout.t, layout.cols]);
    x.reshape(&shape)
}
