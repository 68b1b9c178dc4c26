//! Cross-channel interaction over the most recent time-frequency features.

use std::sync::Arc;

use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use super::centralize::{centralize, decentralize, Affine};
use crate::error::{FbmError, Result};
use crate::graph::{Graph, Var};
use crate::nn::{linear, AttentionBlock};
use crate::optim::{ParamId, ParamStore};
use crate::spectral::{expand_rows, ScaleBasis};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionConfig {
    /// Input mask: how many trailing timesteps are seen.
    pub c1: usize,
    /// Output mask: horizon steps that may be nonzero.
    pub c2: usize,
    pub h3: usize,
    pub stacks: usize,
}

impl InteractionConfig {
    pub fn validate(&self, t: usize, horizon: usize) -> Result<()> {
        if self.c1 == 0 || self.c1 > t {
            return Err(FbmError::config(format!(
                "interaction input mask C1={} must lie in 1..={t}",
                self.c1
            )));
        }
        if self.c2 > horizon {
            return Err(FbmError::config(format!(
                "interaction output mask C2={} exceeds horizon L={horizon}",
                self.c2
            )));
        }
        if self.h3 == 0 {
            return Err(FbmError::config("interaction width h3 must be positive"));
        }
        if self.c1 * (t / 2) < 2 {
            return Err(FbmError::config("interaction input is too small to centralize"));
        }
        Ok(())
    }
}

/// Features of the last `C1` steps → centralize → `h3` variate tokens →
/// attention across channels → horizon, masked beyond `C2`.
#[derive(Clone, Debug)]
pub struct InteractionBlock {
    cfg: InteractionConfig,
    t: usize,
    channels: usize,
    horizon: usize,
    basis: Arc<ScaleBasis>,
    w_in: ParamId,
    affine: Affine,
    stacks: Vec<AttentionBlock>,
    w_out: ParamId,
    mask: Tensor,
}

impl InteractionBlock {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut Pcg64,
        prefix: &str,
        t: usize,
        horizon: usize,
        channels: usize,
        cfg: &InteractionConfig,
    ) -> Result<Self> {
        cfg.validate(t, horizon)?;
        let k = t / 2;
        let basis = Arc::new(ScaleBasis::new(t, 1)?);
        let w_in = linear(store, rng, &format!("{prefix}.w_in"), cfg.c1 * k, cfg.h3);
        let affine = Affine::new(store, prefix, channels);
        let stacks = (0..cfg.stacks)
            .map(|i| AttentionBlock::new(store, rng, &format!("{prefix}.att{i}"), cfg.h3, cfg.h3, 1))
            .collect::<Result<Vec<_>>>()?;
        let w_out = linear(store, rng, &format!("{prefix}.w_out"), cfg.h3, horizon);
        let mask = Tensor::from_fn(&[horizon], |v| if v < cfg.c2 { 1.0 } else { 0.0 });
        Ok(InteractionBlock {
            cfg: cfg.clone(),
            t,
            channels,
            horizon,
            basis,
            w_in,
            affine,
            stacks,
            w_out,
            mask,
        })
    }

    pub fn config(&self) -> &InteractionConfig {
        &self.cfg
    }

    pub fn num_weights(t: usize, horizon: usize, cfg: &InteractionConfig) -> usize {
        cfg.c1 * (t / 2) * cfg.h3 + cfg.stacks * AttentionBlock::num_weights(cfg.h3, cfg.h3) + cfg.h3 * horizon
    }

    /// Spectrum rows `[R × 2K]` to `[R × L]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, h: Var) -> Result<Var> {
        let x = expand_rows(g, h, &self.basis, self.t - self.cfg.c1, self.cfg.c1)?;
        self.forward_recent(g, store, x)
    }

    /// Same mapping from materialized features `[R × T × K]`.
    pub fn forward_features(&self, g: &mut Graph, store: &ParamStore, feats: Var) -> Result<Var> {
        let sh = g.shape(feats).to_vec();
        let k = self.t / 2;
        if sh.len() != 3 || sh[1] != self.t || sh[2] != k {
            return Err(FbmError::dim(format!(
                "interaction features must be [R × {} × {k}], got {sh:?}",
                self.t
            )));
        }
        let tail = g.narrow(feats, 1, self.t - self.cfg.c1, self.cfg.c1)?;
        let x = g.reshape(tail, &[sh[0], self.cfg.c1 * k])?;
        self.forward_recent(g, store, x)
    }

    fn forward_recent(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let (r, n) = (g.shape(x)[0], g.shape(x)[1]);
        let d = self.channels;
        if r % d != 0 {
            return Err(FbmError::dim(format!("{r} rows are not a multiple of {d} channels")));
        }
        let b = r / d;
        let x = g.reshape(x, &[b, d, 1, n])?;
        let aff = self.affine.vars(g, store)?;
        let (xc, stats) = centralize(g, x, Some(aff))?;
        let w_in = g.param(store, self.w_in);
        let y = g.matmul(xc, w_in)?;
        let y = decentralize(g, y, &stats, Some(aff))?;
        let mut z = g.reshape(y, &[b, d, self.cfg.h3])?;
        for s in &self.stacks {
            z = s.forward(g, store, z)?;
        }
        let w_out = g.param(store, self.w_out);
        let out = g.matmul(z, w_out)?;
        let mask = g.constant(self.mask.clone());
        let out = g.mul(out, mask)?;
        g.reshape(out, &[r, self.horizon])
    }
}
