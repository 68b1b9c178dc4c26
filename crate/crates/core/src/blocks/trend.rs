//! Patched trend block with optional centralization and multi-scale inputs.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use super::centralize::{check_gamma, Affine, CENTRAL_EPS};
use crate::error::{FbmError, Result};
use crate::graph::{Graph, Var};
use crate::nn::{linear, AttentionBlock};
use crate::optim::{ParamId, ParamStore};
use crate::spectral::{patch_projection, patch_variance, ScaleBasis};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backbone {
    Linear,
    Mlp,
    Transformer,
}

impl fmt::Display for Backbone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backbone::Linear => "linear",
            Backbone::Mlp => "mlp",
            Backbone::Transformer => "transformer",
        })
    }
}

impl FromStr for Backbone {
    type Err = FbmError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(Backbone::Linear),
            "mlp" => Ok(Backbone::Mlp),
            "transformer" => Ok(Backbone::Transformer),
            _ => Err(FbmError::config(format!("unknown trend backbone '{s}'"))),
        }
    }
}

/// Down-sampling level: `d0` full resolution, `d1` kernel 2, `d2` kernel 4.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    D0,
    D1,
    D2,
}

impl Scale {
    pub fn kernel(self) -> usize {
        match self {
            Scale::D0 => 1,
            Scale::D1 => 2,
            Scale::D2 => 4,
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d{}", *self as u8)
    }
}

impl FromStr for Scale {
    type Err = FbmError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "d0" => Ok(Scale::D0),
            "d1" => Ok(Scale::D1),
            "d2" => Ok(Scale::D2),
            _ => Err(FbmError::config(format!("unknown scale '{s}' (expected d0, d1 or d2)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendConfig {
    pub backbone: Backbone,
    pub centralize: bool,
    pub patches: usize,
    pub h1: usize,
    pub h2: usize,
    /// Attention stacks (transformer only).
    pub stacks: usize,
    pub scales: Vec<Scale>,
}

impl TrendConfig {
    pub fn validate(&self, t: usize) -> Result<()> {
        if self.scales.is_empty() {
            return Err(FbmError::config("trend block needs at least one scale"));
        }
        let mut seen = self.scales.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.scales.len() {
            return Err(FbmError::config("trend scales must be distinct"));
        }
        if self.patches == 0 {
            return Err(FbmError::config("patch count must be positive"));
        }
        if self.backbone != Backbone::Linear && (self.h1 == 0 || self.h2 == 0) {
            return Err(FbmError::config("trend widths h1 and h2 must be positive"));
        }
        if self.backbone == Backbone::Transformer && self.stacks == 0 {
            return Err(FbmError::config("transformer backbone needs at least one stack"));
        }
        for s in &self.scales {
            let b = ScaleBasis::new(t, s.kernel())?;
            let w = b.patch_width(self.patches)?;
            if self.centralize && w < 2 {
                return Err(FbmError::config("centralized patches need at least 2 values"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum Mid {
    Linear,
    Mlp { w2: ParamId, w3: ParamId },
    Transformer { stacks: Vec<AttentionBlock>, w_out: ParamId },
}

#[derive(Clone, Debug)]
struct ScaleBranch {
    basis: Arc<ScaleBasis>,
    w_in: ParamId,
    affine: Option<Affine>,
    mid: Mid,
}

#[derive(Clone, Debug)]
pub struct TrendBlock {
    cfg: TrendConfig,
    channels: usize,
    horizon: usize,
    branches: Vec<ScaleBranch>,
}

impl TrendBlock {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut Pcg64,
        prefix: &str,
        t: usize,
        horizon: usize,
        channels: usize,
        cfg: &TrendConfig,
    ) -> Result<Self> {
        cfg.validate(t)?;
        let p = cfg.patches;
        let mut branches = Vec::new();
        for &s in &cfg.scales {
            let basis = Arc::new(ScaleBasis::new(t, s.kernel())?);
            let n = basis.patch_width(p)?;
            let pre = format!("{prefix}.{s}");
            let w_in = match cfg.backbone {
                Backbone::Linear => linear(store, rng, &format!("{pre}.w_in"), p * n, horizon),
                _ => linear(store, rng, &format!("{pre}.w_in"), n, cfg.h1),
            };
            let affine = cfg.centralize.then(|| Affine::new(store, &pre, channels));
            let mid = match cfg.backbone {
                Backbone::Linear => Mid::Linear,
                Backbone::Mlp => Mid::Mlp {
                    w2: linear(store, rng, &format!("{pre}.w_mid"), p * cfg.h1, cfg.h2),
                    w3: linear(store, rng, &format!("{pre}.w_out"), cfg.h2, horizon),
                },
                Backbone::Transformer => {
                    let stacks = (0..cfg.stacks)
                        .map(|i| AttentionBlock::new(store, rng, &format!("{pre}.att{i}"), cfg.h1, cfg.h2, 1))
                        .collect::<Result<Vec<_>>>()?;
                    Mid::Transformer {
                        stacks,
                        w_out: linear(store, rng, &format!("{pre}.w_out"), p * cfg.h1, horizon),
                    }
                }
            };
            branches.push(ScaleBranch { basis, w_in, affine, mid });
        }
        Ok(TrendBlock {
            cfg: cfg.clone(),
            channels,
            horizon,
            branches,
        })
    }

    pub fn config(&self) -> &TrendConfig {
        &self.cfg
    }

    /// Weight count of one scale, excluding the affine vectors.
    pub fn scale_weights(t: usize, horizon: usize, cfg: &TrendConfig, s: Scale) -> Result<usize> {
        let n = ScaleBasis::new(t, s.kernel())?.patch_width(cfg.patches)?;
        let p = cfg.patches;
        Ok(match cfg.backbone {
            Backbone::Linear => p * n * horizon,
            Backbone::Mlp => n * cfg.h1 + p * cfg.h1 * cfg.h2 + cfg.h2 * horizon,
            Backbone::Transformer => {
                n * cfg.h1 + cfg.stacks * AttentionBlock::num_weights(cfg.h1, cfg.h2) + p * cfg.h1 * horizon
            }
        })
    }

    /// Spectrum rows `[R × 2K]` (`R = B·D`) to `[R × L]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, h: Var) -> Result<Var> {
        let r = g.shape(h)[0];
        if !r.is_multiple_of(self.channels) {
            return Err(FbmError::dim(format!(
                "{r} spectrum rows are not a multiple of {} channels",
                self.channels
            )));
        }
        let mut total: Option<Var> = None;
        for br in &self.branches {
            let y = self.branch(g, store, h, br)?;
            total = Some(match total {
                Some(t) => g.add(t, y)?,
                None => y,
            });
        }
        total.ok_or_else(|| FbmError::config("trend block has no scales"))
    }

    fn branch(&self, g: &mut Graph, store: &ParamStore, h: Var, br: &ScaleBranch) -> Result<Var> {
        let r = g.shape(h)[0];
        let (b, d) = (r / self.channels, self.channels);
        let p = self.cfg.patches;
        let linear_bb = self.cfg.backbone == Backbone::Linear;
        let w = g.param(store, br.w_in);
        let o = g.shape(w)[1];
        let mut y = patch_projection(g, h, w, &br.basis, p, linear_bb)?;
        if let Some(aff) = br.affine {
            y = self.centralized(g, store, h, w, y, br, aff, b, d)?;
        } else if !linear_bb {
            y = g.relu(y)?;
        }
        let y = g.reshape(y, &[r, p, o])?;
        match &br.mid {
            Mid::Linear => g.sum_axis(y, 1),
            Mid::Mlp { w2, w3 } => {
                let flat = g.reshape(y, &[r, p * o])?;
                let w2 = g.param(store, *w2);
                let z = g.matmul(flat, w2)?;
                let z = g.relu(z)?;
                let w3 = g.param(store, *w3);
                g.matmul(z, w3)
            }
            Mid::Transformer { stacks, w_out } => {
                let mut z = y;
                for s in stacks {
                    z = s.forward(g, store, z)?;
                }
                let flat = g.reshape(z, &[r, p * o])?;
                let w = g.param(store, *w_out);
                g.matmul(flat, w)
            }
        }
    }

    /// Centralize → project → (ReLU) → decentralize on projected values.
    ///
    /// `Wᵀ(γ(x − E)/σ + β) = (γ/σ)(Wᵀx − E·w̄) + β·w̄` with `w̄` the column sums of
    /// the patch's weights, so the projection of raw patches can be reused.
    #[allow(clippy::too_many_arguments)]
    fn centralized(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        h: Var,
        w: Var,
        wx: Var,
        br: &ScaleBranch,
        aff: Affine,
        b: usize,
        d: usize,
    ) -> Result<Var> {
        let p = self.cfg.patches;
        let o = g.shape(w)[1];
        let linear_bb = self.cfg.backbone == Backbone::Linear;
        let m = g.constant(br.basis.patch_mean_matrix(p)?);
        let mean = g.matmul(h, m)?;
        let mean = g.reshape(mean, &[b, d, p, 1])?;
        let var = patch_variance(g, h, &br.basis, p)?;
        let ve = g.add_scalar(var, CENTRAL_EPS)?;
        let sigma = g.sqrt(ve)?;
        let sigma = g.reshape(sigma, &[b, d, p, 1])?;
        let wbar = if linear_bb {
            let n = g.shape(w)[0] / p;
            let w3 = g.reshape(w, &[p, n, o])?;
            g.sum_axis(w3, 1)?
        } else {
            g.sum_axis(w, 0)?
        };
        let wx = g.reshape(wx, &[b, d, p, o])?;
        let ew = g.mul(mean, wbar)?;
        let centered = g.sub(wx, ew)?;
        let (gamma, beta) = aff.vars(g, store)?;
        check_gamma(g, gamma)?;
        let scale = g.div(gamma, sigma)?;
        let y = g.mul(centered, scale)?;
        let bw = g.mul(beta, wbar)?;
        let mut y = g.add(y, bw)?;
        if !linear_bb {
            y = g.relu(y)?;
        }
        let y = g.sub(y, beta)?;
        let y = g.div(y, gamma)?;
        let y = g.mul(y, sigma)?;
        g.add(y, mean)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::centralize::{centralize, decentralize};
    use crate::blocks::patch::{patch, PatchLayout};
    use crate::fourier::analysis_matrix;
    use crate::gradcheck::check_params;
    use crate::tensor::Tensor;
    use rand::{Rng, SeedableRng};

    fn cfg(backbone: Backbone, centralize: bool, patches: usize, scales: Vec<Scale>) -> TrendConfig {
        TrendConfig {
            backbone,
            centralize,
            patches,
            h1: 5,
            h2: 6,
            stacks: 2,
            scales,
        }
    }

    fn spectrum(rng: &mut Pcg64, r: usize, t: usize) -> Tensor {
        let x = Tensor::from_fn(&[r, t], |_| rng.random_range(-1.0..1.0));
        x.matmul(&analysis_matrix(t).unwrap()).unwrap()
    }

    /// Same block evaluated on explicitly materialized, patched features.
    fn reference(block: &TrendBlock, store: &ParamStore, h: &Tensor, d: usize) -> Tensor {
        let r = h.shape()[0];
        let b = r / d;
        let p = block.cfg.patches;
        let mut g = Graph::new();
        let mut total: Option<Var> = None;
        for br in &block.branches {
            let feats = br.basis.features(h).unwrap();
            let layout = PatchLayout::new(br.basis.ts(), br.basis.ks(), p).unwrap();
            let n = layout.n();
            let x = patch(&feats, layout).unwrap().reshape(&[b, d, p, n]).unwrap();
            let xv = g.constant(x);
            let aff = br.affine.map(|a| a.vars(&mut g, store).unwrap());
            let (xin, stats) = if block.cfg.centralize {
                let (y, s) = centralize(&mut g, xv, aff).unwrap();
                (y, Some(s))
            } else {
                (xv, None)
            };
            let w = g.param(store, br.w_in);
            let y = if block.cfg.backbone == Backbone::Linear {
                // per-patch weights: [B,D,P,1,N] × [P,N,L] done patch by patch
                let wt = store.value(br.w_in).clone();
                let l = wt.shape()[1];
                let xt = g.value(xin).clone();
                let mut out = Tensor::zeros(&[b, d, p, l]);
                for bi in 0..b {
                    for di in 0..d {
                        for pi in 0..p {
                            for o in 0..l {
                                let s: f64 = (0..n).map(|i| xt.get(&[bi, di, pi, i]) * wt.get(&[pi * n + i, o])).sum();
                                out.set(&[bi, di, pi, o], s);
                            }
                        }
                    }
                }
                g.constant(out)
            } else {
                let y = g.matmul(xin, w).unwrap();
                g.relu(y).unwrap()
            };
            let y = match stats {
                Some(s) => decentralize(&mut g, y, &s, aff).unwrap(),
                None => y,
            };
            let o = g.shape(y)[3];
            let y = g.reshape(y, &[r, p, o]).unwrap();
            let out = match &br.mid {
                Mid::Linear => g.sum_axis(y, 1).unwrap(),
                Mid::Mlp { w2, w3 } => {
                    let f = g.reshape(y, &[r, p * o]).unwrap();
                    let w2 = g.param(store, *w2);
                    let z = g.matmul(f, w2).unwrap();
                    let z = g.relu(z).unwrap();
                    let w3 = g.param(store, *w3);
                    g.matmul(z, w3).unwrap()
                }
                Mid::Transformer { stacks, w_out } => {
                    let mut z = y;
                    for s in stacks {
                        z = s.forward(&mut g, store, z).unwrap();
                    }
                    let f = g.reshape(z, &[r, p * o]).unwrap();
                    let w = g.param(store, *w_out);
                    g.matmul(f, w).unwrap()
                }
            };
            total = Some(match total {
                Some(t) => g.add(t, out).unwrap(),
                None => out,
            });
        }
        g.value(total.unwrap()).clone()
    }

    fn perturb_affine(block: &TrendBlock, store: &mut ParamStore, rng: &mut Pcg64) {
        for br in &block.branches {
            if let Some(a) = br.affine {
                let d = a.channels;
                store.set_value(a.gamma, Tensor::from_fn(&[d], |_| rng.random_range(0.5..1.5))).unwrap();
                store.set_value(a.beta, Tensor::from_fn(&[d], |_| rng.random_range(-0.5..0.5))).unwrap();
            }
        }
    }

    #[test]
    fn fused_forward_matches_materialized_reference() {
        let (t, l, d) = (16, 4, 2);
        let mut rng = Pcg64::seed_from_u64(1);
        let h = spectrum(&mut rng, 2 * d, t);
        let cases = [
            cfg(Backbone::Mlp, true, 2, vec![Scale::D0, Scale::D1, Scale::D2]),
            cfg(Backbone::Mlp, false, 4, vec![Scale::D1]),
            cfg(Backbone::Transformer, true, 4, vec![Scale::D0]),
            cfg(Backbone::Linear, true, 2, vec![Scale::D0, Scale::D2]),
            cfg(Backbone::Linear, false, 1, vec![Scale::D0]),
        ];
        for c in cases {
            let mut store = ParamStore::new();
            let blk = TrendBlock::new(&mut store, &mut rng, "trend", t, l, d, &c).unwrap();
            perturb_affine(&blk, &mut store, &mut rng);
            let mut g = Graph::new();
            let hv = g.constant(h.clone());
            let y = blk.forward(&mut g, &store, hv).unwrap();
            let want = reference(&blk, &store, &h, d);
            let err = g.value(y).max_abs_diff(&want);
            assert!(err < 1e-10, "{c:?}: {err}");
        }
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let (t, l, d) = (16, 3, 2);
        let mut rng = Pcg64::seed_from_u64(2);
        let h = spectrum(&mut rng, 4, t);
        for c in [
            cfg(Backbone::Mlp, true, 2, vec![Scale::D0, Scale::D1]),
            cfg(Backbone::Transformer, true, 2, vec![Scale::D0]),
            cfg(Backbone::Linear, false, 2, vec![Scale::D0]),
        ] {
            let mut store = ParamStore::new();
            let blk = TrendBlock::new(&mut store, &mut rng, "trend", t, l, d, &c).unwrap();
            let ids: Vec<ParamId> = store.ids().filter(|&i| !store.name(i).ends_with("gamma")).collect();
            for id in ids {
                let z = Tensor::zeros(store.value(id).shape());
                store.set_value(id, z).unwrap();
            }
            let mut g = Graph::new();
            let hv = g.constant(h.clone());
            let y = blk.forward(&mut g, &store, hv).unwrap();
            assert!(g.value(y).data().iter().all(|&v| v == 0.0), "{c:?}");
        }
    }

    #[test]
    fn linear_single_patch_is_a_flat_linear_map() {
        let (t, l, d) = (8, 3, 1);
        let mut rng = Pcg64::seed_from_u64(3);
        let x = Tensor::from_fn(&[2, t], |_| rng.random_range(-1.0..1.0));
        let h = x.matmul(&analysis_matrix(t).unwrap()).unwrap();
        let c = cfg(Backbone::Linear, false, 1, vec![Scale::D0]);
        let mut store = ParamStore::new();
        let blk = TrendBlock::new(&mut store, &mut rng, "trend", t, l, d, &c).unwrap();
        let mut g = Graph::new();
        let hv = g.constant(h);
        let y = blk.forward(&mut g, &store, hv).unwrap();
        // oracle: flatten the explicit features and multiply by W
        let w = store.value(blk.branches[0].w_in);
        for r in 0..2 {
            let feats = crate::fourier::expand_channels(&x.reshape(&[2, t]).unwrap(), true).unwrap();
            let flat: Vec<f64> = feats.data()[r * t * t / 2..(r + 1) * t * t / 2].to_vec();
            for o in 0..l {
                let want: f64 = flat.iter().enumerate().map(|(i, v)| v * w.get(&[i, o])).sum();
                assert!((g.value(y).get(&[r, o]) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut store = ParamStore::new();
        let mut rng = Pcg64::seed_from_u64(0);
        let bad = [
            cfg(Backbone::Mlp, true, 3, vec![Scale::D0]),
            cfg(Backbone::Mlp, true, 2, vec![]),
            TrendConfig { h1: 0, ..cfg(Backbone::Mlp, true, 2, vec![Scale::D0]) },
            TrendConfig { stacks: 0, ..cfg(Backbone::Transformer, true, 2, vec![Scale::D0]) },
        ];
        for c in bad {
            assert!(TrendBlock::new(&mut store, &mut rng, "t", 16, 4, 1, &c).is_err(), "{c:?}");
        }
    }

    #[test]
    fn gradients_for_each_backbone() {
        let (t, l, d) = (16, 3, 2);
        let mut rng = Pcg64::seed_from_u64(4);
        let h = spectrum(&mut rng, 2 * d, t);
        for c in [
            cfg(Backbone::Mlp, true, 2, vec![Scale::D0, Scale::D1]),
            cfg(Backbone::Transformer, true, 2, vec![Scale::D0]),
            cfg(Backbone::Linear, true, 2, vec![Scale::D2]),
        ] {
            let mut store = ParamStore::new();
            let blk = TrendBlock::new(&mut store, &mut rng, "trend", t, l, d, &c).unwrap();
            perturb_affine(&blk, &mut store, &mut rng);
            let ids: Vec<ParamId> = store.ids().collect();
            let wt = Tensor::from_fn(&[2 * d, l], |_| rng.random_range(-1.0..1.0));
            let err = check_params(&mut store, &ids, Some(12), |g, s| {
                let hv = g.constant(h.clone());
                let y = blk.forward(g, s, hv)?;
                let w = g.constant(wt.clone());
                let p = g.mul(y, w)?;
                g.sum_all(p)
            })
            .unwrap();
            assert!(err < 1e-4, "{c:?}: {err}");
        }
    }
}
