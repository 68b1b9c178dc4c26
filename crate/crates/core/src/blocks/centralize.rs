//! Per-patch centralization and its inverse.
//!
//! Statistics are taken over the last axis of `[.., D, P, N]` inputs. The
//! optional affine map uses per-channel `γ, β` broadcast as `[D, 1, 1]`.

use crate::error::{FbmError, Result};
use crate::graph::{Graph, Var};
use crate::optim::{ParamId, ParamStore};
use crate::tensor::Tensor;

pub const CENTRAL_EPS: f64 = 1e-5;

/// Learnable per-channel scale and shift.
#[derive(Clone, Copy, Debug)]
pub struct Affine {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub channels: usize,
}

impl Affine {
    pub fn new(store: &mut ParamStore, prefix: &str, channels: usize) -> Self {
        Affine {
            gamma: store.add(format!("{prefix}.gamma"), Tensor::ones(&[channels])),
            beta: store.add(format!("{prefix}.beta"), Tensor::zeros(&[channels])),
            channels,
        }
    }

    /// `γ` and `β` as `[D, 1, 1]` graph nodes.
    pub fn vars(&self, g: &mut Graph, store: &ParamStore) -> Result<(Var, Var)> {
        let d = self.channels;
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        Ok((g.reshape(gamma, &[d, 1, 1])?, g.reshape(beta, &[d, 1, 1])?))
    }
}

/// Mean and `√(Var + ε)` of each patch, shaped `[.., D, P, 1]`.
#[derive(Clone, Copy, Debug)]
pub struct CentralStats {
    pub mean: Var,
    pub sigma: Var,
}

pub(crate) fn check_gamma(g: &Graph, gamma: Var) -> Result<()> {
    if let Some(v) = g.value(gamma).data().iter().find(|v| v.abs() < 1e-12) {
        return Err(FbmError::Numeric(format!(
            "affine scale γ = {v:e} is too close to zero to invert"
        )));
    }
    Ok(())
}

/// `x̂ = (x − E)/√(Var + ε)`, then `γ·x̂ + β` when `affine` is given.
pub fn centralize(g: &mut Graph, x: Var, affine: Option<(Var, Var)>) -> Result<(Var, CentralStats)> {
    if g.shape(x).last().copied().unwrap_or(0) < 2 {
        return Err(FbmError::dim(format!(
            "centralization needs at least 2 values per patch, got {:?}",
            g.shape(x)
        )));
    }
    let mean = g.mean_lastdim(x)?;
    let xc = g.sub(x, mean)?;
    let sq = g.square(xc)?;
    let var = g.mean_lastdim(sq)?;
    let ve = g.add_scalar(var, CENTRAL_EPS)?;
    let sigma = g.sqrt(ve)?;
    let mut y = g.div(xc, sigma)?;
    if let Some((gamma, beta)) = affine {
        y = g.mul(y, gamma)?;
        y = g.add(y, beta)?;
    }
    Ok((y, CentralStats { mean, sigma }))
}

/// `√(Var + ε)·(y − β)/γ + E` with the statistics of the paired `centralize`.
pub fn decentralize(g: &mut Graph, y: Var, stats: &CentralStats, affine: Option<(Var, Var)>) -> Result<Var> {
    let mut z = y;
    if let Some((gamma, beta)) = affine {
        check_gamma(g, gamma)?;
        z = g.sub(z, beta)?;
        z = g.div(z, gamma)?;
    }
    z = g.mul(z, stats.sigma)?;
    g.add(z, stats.mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_pcg::Pcg64;

    fn roundtrip(x: &Tensor, affine: Option<(Tensor, Tensor)>) -> (Tensor, Tensor) {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let aff = affine.map(|(a, b)| (g.constant(a), g.constant(b)));
        let (y, st) = centralize(&mut g, xv, aff).unwrap();
        let z = decentralize(&mut g, y, &st, aff).unwrap();
        (g.value(y).clone(), g.value(z).clone())
    }

    #[test]
    fn constant_patch() {
        let x = Tensor::full(&[2, 1, 5], 3.0);
        let (y, _) = roundtrip(&x, None);
        assert!(y.data().iter().all(|&v| v == 0.0));
        let beta = Tensor::new(&[2, 1, 1], vec![0.5, -2.0]).unwrap();
        let (y, z) = roundtrip(&x, Some((Tensor::full(&[2, 1, 1], 1.7), beta)));
        assert!(y.data()[..5].iter().all(|&v| v == 0.5));
        assert!(y.data()[5..].iter().all(|&v| v == -2.0));
        assert!(z.max_abs_diff(&x) < 1e-12);
    }

    #[test]
    fn standardized_patch_nearly_unchanged() {
        let x = Tensor::new(&[1, 1, 4], vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        let (y, _) = roundtrip(&x, None);
        assert!(y.max_abs_diff(&x) < 1e-5);
    }

    #[test]
    fn output_moments() {
        let mut rng = Pcg64::seed_from_u64(1);
        let x = Tensor::from_fn(&[3, 2, 50], |_| rng.random_range(-10.0..10.0));
        let (y, _) = roundtrip(&x, None);
        for row in y.data().chunks(50) {
            let m = row.iter().sum::<f64>() / 50.0;
            let v = row.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / 50.0;
            assert!(m.abs() < 1e-12);
            assert!((1.0 - 1e-6..=1.0).contains(&v), "var {v}");
        }
    }

    #[test]
    fn roundtrip_with_random_affine() {
        let mut rng = Pcg64::seed_from_u64(2);
        let x = Tensor::from_fn(&[2, 3, 4, 7], |_| rng.random_range(-1.0..1.0));
        let gamma = Tensor::from_fn(&[3, 1, 1], |_| rng.random_range(0.5..2.0));
        let beta = Tensor::from_fn(&[3, 1, 1], |_| rng.random_range(-1.0..1.0));
        let (_, z) = roundtrip(&x, Some((gamma, beta)));
        assert!(z.max_abs_diff(&x) < 1e-10);
        let (_, z) = roundtrip(&x, None);
        assert!(z.max_abs_diff(&x) < 1e-10);
    }

    #[test]
    fn vanishing_gamma_is_numeric_error() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_fn(&[1, 1, 3], |i| i as f64));
        let aff = (g.constant(Tensor::zeros(&[1, 1, 1])), g.constant(Tensor::zeros(&[1, 1, 1])));
        let (y, st) = centralize(&mut g, x, Some(aff)).unwrap();
        assert!(matches!(decentralize(&mut g, y, &st, Some(aff)), Err(FbmError::Numeric(_))));
    }
}
