//! Rolling-window filter over Fourier-padded time-frequency features.

use std::sync::Arc;

use crate::error::Result;
use crate::fourier::BasisMatrices;
use crate::graph::{Graph, Var};
use crate::optim::{ParamId, ParamStore};
use crate::spectral::seasonal_kernel;
use crate::tensor::Tensor;

/// Weights `W[T × T/2]` slid over the padded features:
/// `Ŷ[v] = Σ_n Σ_k W[n, k]·G_pad[n + v, k]`.
#[derive(Clone, Debug)]
pub struct SeasonalBlock {
    pub w: ParamId,
    padded: Arc<BasisMatrices>,
    horizon: usize,
}

impl SeasonalBlock {
    /// Zero-initialized filter.
    pub fn new(store: &mut ParamStore, prefix: &str, t: usize, horizon: usize) -> Result<Self> {
        let padded = Arc::new(BasisMatrices::build(t, horizon.saturating_sub(1))?);
        let w = store.add(format!("{prefix}.w"), Tensor::zeros(&[t, t / 2]));
        Ok(SeasonalBlock { w, padded, horizon })
    }

    pub fn num_weights(t: usize) -> usize {
        t * (t / 2)
    }

    /// Spectrum rows `[R × T]` to `[R × L]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, h: Var) -> Result<Var> {
        let w = g.param(store, self.w);
        let f = seasonal_kernel(g, w, &self.padded, self.horizon)?;
        g.matmul(h, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::{analysis_matrix, basis_expand, rdft};
    use rand::{Rng, SeedableRng};
    use rand_pcg::Pcg64;

    #[test]
    fn zero_filter_gives_zero() {
        let mut store = ParamStore::new();
        let b = SeasonalBlock::new(&mut store, "s", 16, 4).unwrap();
        let mut g = Graph::new();
        let h = g.constant(Tensor::from_fn(&[3, 16], |i| i as f64));
        let y = b.forward(&mut g, &store, h).unwrap();
        assert_eq!(g.value(y), &Tensor::zeros(&[3, 4]));
    }

    #[test]
    fn first_row_filter_continues_the_signal() {
        let (t, l) = (16, 6);
        let mut rng = Pcg64::seed_from_u64(3);
        let mut x: Vec<f64> = (0..t).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = x.iter().sum::<f64>() / t as f64;
        x.iter_mut().for_each(|v| *v -= m);
        let mut store = ParamStore::new();
        let b = SeasonalBlock::new(&mut store, "s", t, l).unwrap();
        let mut w = Tensor::zeros(&[t, t / 2]);
        for k in 0..t / 2 {
            w.set(&[0, k], 1.0);
        }
        store.set_value(b.w, w).unwrap();
        let mut g = Graph::new();
        let h = Tensor::new(&[1, t], x.clone()).unwrap().matmul(&analysis_matrix(t).unwrap()).unwrap();
        let hv = g.constant(h);
        let y = b.forward(&mut g, &store, hv).unwrap();
        let padded = BasisMatrices::build(t, l - 1).unwrap();
        let gp = basis_expand(&rdft(&x).unwrap(), &padded, true).unwrap();
        for v in 0..l {
            let want: f64 = (0..t / 2).map(|k| gp.get(&[v, k])).sum();
            assert!((g.value(y).data()[v] - want).abs() < 1e-12);
            // the continuation is the periodic extension of the window
            assert!((want - x[v]).abs() < 1e-12);
        }
    }
}
