//! Weight initialization and the pre-norm attention block.

use rand::Rng;
use rand_pcg::Pcg64;

use crate::error::{FbmError, Result};
use crate::graph::{Graph, Var};
use crate::optim::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Epsilon of the per-token standardization inside attention blocks.
pub const NORM_EPS: f64 = 1e-5;

/// Uniform in `[−1/√fan_in, 1/√fan_in]`.
pub fn uniform(rng: &mut Pcg64, shape: &[usize], fan_in: usize) -> Tensor {
    let b = 1.0 / (fan_in.max(1) as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.random_range(-b..=b))
}

/// Registers a bias-free `[fan_in × fan_out]` weight.
pub fn linear(store: &mut ParamStore, rng: &mut Pcg64, name: &str, fan_in: usize, fan_out: usize) -> ParamId {
    store.add(name, uniform(rng, &[fan_in, fan_out], fan_in))
}

/// `softmax(q·kᵀ/√h)·v` over `[N × M × h]` token batches.
pub fn scaled_dot_attention(g: &mut Graph, q: Var, k: Var, v: Var) -> Result<Var> {
    let h = *g.shape(q).last().unwrap_or(&1);
    let s = g.bmm(q, k, true)?;
    let s = g.scale(s, 1.0 / (h as f64).sqrt())?;
    let p = g.softmax_lastdim(s)?;
    g.bmm(p, v, false)
}

/// Single-head pre-norm transformer block:
/// `z₁ = z + Attn(norm z)`, `out = z₁ + FFN(norm z₁)` with a ReLU FFN `h → h_ff → h`.
#[derive(Clone, Debug)]
pub struct AttentionBlock {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub w1: ParamId,
    pub w2: ParamId,
    pub h: usize,
    pub h_ff: usize,
}

impl AttentionBlock {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut Pcg64,
        prefix: &str,
        h: usize,
        h_ff: usize,
        heads: usize,
    ) -> Result<Self> {
        if heads == 0 || !h.is_multiple_of(heads) {
            return Err(FbmError::config(format!(
                "attention width {h} is not divisible by {heads} heads"
            )));
        }
        if heads != 1 {
            return Err(FbmError::config("only single-head attention is supported"));
        }
        if h == 0 || h_ff == 0 {
            return Err(FbmError::config("attention widths must be positive"));
        }
        Ok(AttentionBlock {
            wq: linear(store, rng, &format!("{prefix}.wq"), h, h),
            wk: linear(store, rng, &format!("{prefix}.wk"), h, h),
            wv: linear(store, rng, &format!("{prefix}.wv"), h, h),
            wo: linear(store, rng, &format!("{prefix}.wo"), h, h),
            w1: linear(store, rng, &format!("{prefix}.ff1"), h, h_ff),
            w2: linear(store, rng, &format!("{prefix}.ff2"), h_ff, h),
            h,
            h_ff,
        })
    }

    pub fn num_weights(h: usize, h_ff: usize) -> usize {
        4 * h * h + 2 * h * h_ff
    }

    pub fn param_ids(&self) -> [ParamId; 6] {
        [self.wq, self.wk, self.wv, self.wo, self.w1, self.w2]
    }

    /// Tokens `[N × M × h]` to tokens of the same shape.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, z: Var) -> Result<Var> {
        let sh = g.shape(z).to_vec();
        if sh.len() != 3 || sh[2] != self.h {
            return Err(FbmError::dim(format!(
                "attention expects [N × M × {}], got {sh:?}",
                self.h
            )));
        }
        let n1 = g.standardize_lastdim(z, NORM_EPS)?;
        let wq = g.param(store, self.wq);
        let wk = g.param(store, self.wk);
        let wv = g.param(store, self.wv);
        let wo = g.param(store, self.wo);
        let q = g.matmul(n1, wq)?;
        let k = g.matmul(n1, wk)?;
        let v = g.matmul(n1, wv)?;
        let a = scaled_dot_attention(g, q, k, v)?;
        let o = g.matmul(a, wo)?;
        let z1 = g.add(z, o)?;
        let n2 = g.standardize_lastdim(z1, NORM_EPS)?;
        let w1 = g.param(store, self.w1);
        let w2 = g.param(store, self.w2);
        let f = g.matmul(n2, w1)?;
        let f = g.relu(f)?;
        let f = g.matmul(f, w2)?;
        g.add(z1, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_params;
    use rand::SeedableRng;

    fn block(h: usize, h_ff: usize, seed: u64) -> (ParamStore, AttentionBlock) {
        let mut store = ParamStore::new();
        let mut rng = Pcg64::seed_from_u64(seed);
        let b = AttentionBlock::new(&mut store, &mut rng, "att", h, h_ff, 1).unwrap();
        (store, b)
    }

    #[test]
    fn head_count_must_divide_width() {
        let mut store = ParamStore::new();
        let mut rng = Pcg64::seed_from_u64(0);
        let e = AttentionBlock::new(&mut store, &mut rng, "a", 6, 4, 4).unwrap_err();
        assert!(matches!(e, FbmError::Config(_)));
    }

    #[test]
    fn weight_count() {
        let (store, _) = block(5, 7, 1);
        assert_eq!(store.num_scalars(), AttentionBlock::num_weights(5, 7));
    }

    #[test]
    fn zero_weights_are_identity() {
        let (mut store, b) = block(4, 6, 2);
        for id in b.param_ids() {
            let z = Tensor::zeros(store.value(id).shape());
            store.set_value(id, z).unwrap();
        }
        let mut rng = Pcg64::seed_from_u64(3);
        let x = uniform(&mut rng, &[2, 3, 4], 1);
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let y = b.forward(&mut g, &store, xv).unwrap();
        assert_eq!(g.value(y), &x);
    }

    #[test]
    fn single_token_attends_to_itself() {
        let (mut store, b) = block(3, 4, 4);
        for id in [b.w1, b.w2] {
            let z = Tensor::zeros(store.value(id).shape());
            store.set_value(id, z).unwrap();
        }
        let x = Tensor::new(&[1, 1, 3], vec![0.3, -1.2, 0.5]).unwrap();
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let y = b.forward(&mut g, &store, xv).unwrap();
        // oracle: x + norm(x)·Wv·Wo
        let mu = (0.3 - 1.2 + 0.5) / 3.0;
        let var = [0.3f64, -1.2, 0.5].iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / 3.0;
        let n: Vec<f64> = x.data().iter().map(|v| (v - mu) / (var + NORM_EPS).sqrt()).collect();
        let nv = Tensor::new(&[1, 3], n).unwrap();
        let want = nv.matmul(store.value(b.wv)).unwrap().matmul(store.value(b.wo)).unwrap();
        for i in 0..3 {
            assert!((g.value(y).data()[i] - x.data()[i] - want.data()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn two_token_identity_attention_by_hand() {
        let q = Tensor::new(&[1, 2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let mut g = Graph::new();
        let qv = g.constant(q);
        let y = scaled_dot_attention(&mut g, qv, qv, qv).unwrap();
        // scores diag 1/√2, off-diag 0
        let e = (1.0 / 2f64.sqrt()).exp();
        let (a, b) = (e / (e + 1.0), 1.0 / (e + 1.0));
        let want = [a, b, b, a];
        for (got, w) in g.value(y).data().iter().zip(want) {
            assert!((got - w).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_gradients() {
        let (mut store, b) = block(4, 5, 6);
        let mut rng = Pcg64::seed_from_u64(7);
        let x = uniform(&mut rng, &[2, 3, 4], 1);
        let wt = uniform(&mut rng, &[2, 3, 4], 1);
        let ids = b.param_ids();
        let err = check_params(&mut store, &ids, None, |g, s| {
            let xv = g.constant(x.clone());
            let y = b.forward(g, s, xv)?;
            let w = g.constant(wt.clone());
            let p = g.mul(y, w)?;
            g.sum_all(p)
        })
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }
}
