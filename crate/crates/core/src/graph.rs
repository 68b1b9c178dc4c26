//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Graph`] is rebuilt for every forward pass. Nodes are appended in
//! evaluation order, so reverse creation order is a valid reverse
//! topological order for the backward sweep.

use std::sync::Arc;

use crate::error::{FbmError, Result};
use crate::optim::{ParamId, ParamStore};
use crate::tensor::{broadcast_zip, gemm, reduce_to_shape, Tensor};

/// Local gradient rule of a node: receives the output gradient and a mask of
/// which inputs need a gradient, returns one entry per input.
pub type BackwardFn = Box<dyn Fn(&Tensor, &[bool]) -> Result<Vec<Option<Tensor>>>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

struct Node {
    value: Arc<Tensor>,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
    param: Option<ParamId>,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of leaf nodes after a backward sweep.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, usize)>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Adds every parameter gradient into the store.
    pub fn accumulate_into(self, store: &mut ParamStore) -> Result<()> {
        let Gradients { mut grads, params } = self;
        for (id, node) in params {
            if let Some(g) = grads[node].take() {
                store.accumulate_grad(id, g)?;
            }
        }
        Ok(())
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn value_arc(&self, v: Var) -> Arc<Tensor> {
        self.nodes[v.0].value.clone()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn leaf(&mut self, value: Arc<Tensor>, requires_grad: bool, param: Option<ParamId>) -> Var {
        self.nodes.push(Node {
            value,
            parents: vec![],
            backward: None,
            requires_grad,
            param,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(Arc::new(t), false, None)
    }

    pub fn constant_arc(&mut self, t: Arc<Tensor>) -> Var {
        self.leaf(t, false, None)
    }

    /// A leaf whose gradient is kept (used for input sensitivities and checks).
    pub fn input(&mut self, t: Tensor) -> Var {
        self.leaf(Arc::new(t), true, None)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.leaf(store.value_arc(id), true, Some(id))
    }

    /// Appends an operation with a caller-supplied gradient rule.
    ///
    /// The rule is dropped when no input requires a gradient.
    pub fn custom(
        &mut self,
        name: &str,
        inputs: &[Var],
        value: Tensor,
        backward: BackwardFn,
    ) -> Result<Var> {
        value.ensure_finite(name)?;
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value: Arc::new(value),
            parents: inputs.iter().map(|v| v.0).collect(),
            backward: if requires_grad { Some(backward) } else { None },
            requires_grad,
            param: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Reverse sweep from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(FbmError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            let Some(bw) = &node.backward else { continue };
            let Some(g) = grads[i].take() else { continue };
            let needs: Vec<bool> = node
                .parents
                .iter()
                .map(|&p| self.nodes[p].requires_grad)
                .collect();
            let local = bw(&g, &needs)?;
            if local.len() != node.parents.len() {
                return Err(FbmError::Contract(format!(
                    "gradient rule returned {} entries for {} inputs",
                    local.len(),
                    node.parents.len()
                )));
            }
            for ((&p, lg), need) in node.parents.iter().zip(local).zip(needs) {
                let Some(lg) = lg else { continue };
                if !need {
                    continue;
                }
                if lg.shape() != self.nodes[p].value.shape() {
                    return Err(FbmError::Contract(format!(
                        "gradient shape {:?} does not match value shape {:?}",
                        lg.shape(),
                        self.nodes[p].value.shape()
                    )));
                }
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&lg),
                    slot => *slot = Some(lg),
                }
            }
        }
        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.param.map(|id| (id, i)))
            .collect();
        Ok(Gradients { grads, params })
    }

    // ---- elementwise -------------------------------------------------

    fn binary(
        &mut self,
        name: &str,
        a: Var,
        b: Var,
        f: fn(f64, f64) -> f64,
        da: fn(f64, f64, f64) -> f64,
        db: fn(f64, f64, f64) -> f64,
    ) -> Result<Var> {
        let (av, bv) = (self.value_arc(a), self.value_arc(b));
        let out = broadcast_zip(&av, &bv, f)?;
        let bw: BackwardFn = Box::new(move |g, needs| {
            let ga = if needs[0] {
                let full = broadcast_zip(&av, &bv, |x, y| da(x, y, 0.0))?;
                Some(reduce_to_shape(&full.zip_map(g, |d, g| d * g)?, av.shape())?)
            } else {
                None
            };
            let gb = if needs[1] {
                let full = broadcast_zip(&av, &bv, |x, y| db(x, y, 0.0))?;
                Some(reduce_to_shape(&full.zip_map(g, |d, g| d * g)?, bv.shape())?)
            } else {
                None
            };
            Ok(vec![ga, gb])
        });
        self.custom(name, &[a, b], out, bw)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, |_, _, _| 1.0, |_, _, _| 1.0)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, |_, _, _| 1.0, |_, _, _| -1.0)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, |_, y, _| y, |x, _, _| x)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, |x, y| x / y, |_, y, _| 1.0 / y, |x, y, _| -x / (y * y))
    }

    fn unary(&mut self, name: &str, a: Var, f: impl Fn(f64) -> f64, df: impl Fn(f64, f64) -> f64 + 'static) -> Result<Var> {
        let av = self.value_arc(a);
        let out = av.map(f);
        let ov = out.clone();
        let bw: BackwardFn = Box::new(move |g, _| {
            let mut d = g.clone();
            for ((d, &x), &y) in d.data_mut().iter_mut().zip(av.data()).zip(ov.data()) {
                *d *= df(x, y);
            }
            Ok(vec![Some(d)])
        });
        self.custom(name, &[a], out, bw)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary("scale", a, move |x| c * x, move |_, _| c)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary("add_scalar", a, move |x| x + c, |_, _| 1.0)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary("relu", a, |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        if let Some(x) = self.value(a).data().iter().find(|&&x| x < 0.0) {
            return Err(FbmError::Numeric(format!("sqrt of negative value {x}")));
        }
        self.unary("sqrt", a, f64::sqrt, |_, y| 0.5 / y)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary("square", a, |x| x * x, |x, _| 2.0 * x)
    }

    // ---- linear algebra ----------------------------------------------

    /// `[.., m, k] × [k, n] → [.., m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value_arc(a), self.value_arc(b));
        let out = av.matmul(&bv)?;
        let k = bv.shape()[0];
        let n = bv.shape()[1];
        let m = av.numel() / k;
        let bw: BackwardFn = Box::new(move |g, needs| {
            let ga = if needs[0] {
                let mut d = vec![0.0; m * k];
                gemm(m, n, k, 1.0, g.data(), n, 1, bv.data(), 1, n, 0.0, &mut d, k);
                Some(Tensor::new(av.shape(), d)?)
            } else {
                None
            };
            let gb = if needs[1] {
                let mut d = vec![0.0; k * n];
                gemm(k, m, n, 1.0, av.data(), 1, k, g.data(), n, 1, 0.0, &mut d, n);
                Some(Tensor::new(bv.shape(), d)?)
            } else {
                None
            };
            Ok(vec![ga, gb])
        });
        self.custom("matmul", &[a, b], out, bw)
    }

    /// Batched product of `[N, m, k]` with `[N, k, n]`, or with `[N, n, k]`
    /// read transposed when `transpose_b` is set.
    pub fn bmm(&mut self, a: Var, b: Var, transpose_b: bool) -> Result<Var> {
        let (av, bv) = (self.value_arc(a), self.value_arc(b));
        let (sa, sb) = (av.shape(), bv.shape());
        let bad = || {
            FbmError::dim(format!(
                "bmm shapes {:?} and {:?} (transpose_b={transpose_b}) do not chain",
                av.shape(),
                bv.shape()
            ))
        };
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(bad());
        }
        let (nb, m, k) = (sa[0], sa[1], sa[2]);
        let n = if transpose_b { sb[1] } else { sb[2] };
        let kb = if transpose_b { sb[2] } else { sb[1] };
        if kb != k {
            return Err(bad());
        }
        // stored-b strides as the k×n operand
        let (rsb, csb) = if transpose_b { (1, k) } else { (n, 1) };
        let mut out = vec![0.0; nb * m * n];
        for i in 0..nb {
            gemm(
                m,
                k,
                n,
                1.0,
                &av.data()[i * m * k..],
                k,
                1,
                &bv.data()[i * k * n..],
                rsb,
                csb,
                0.0,
                &mut out[i * m * n..],
                n,
            );
        }
        let out = Tensor::new(&[nb, m, n], out)?;
        let bw: BackwardFn = Box::new(move |g, needs| {
            let gd = g.data();
            let ga = if needs[0] {
                // dA = dC · op(B)ᵀ, op(B)ᵀ is n×k
                let (r, c) = if transpose_b { (k, 1) } else { (1, n) };
                let mut d = vec![0.0; nb * m * k];
                for i in 0..nb {
                    gemm(m, n, k, 1.0, &gd[i * m * n..], n, 1, &bv.data()[i * k * n..], r, c, 0.0, &mut d[i * m * k..], k);
                }
                Some(Tensor::new(av.shape(), d)?)
            } else {
                None
            };
            let gb = if needs[1] {
                let mut d = vec![0.0; nb * k * n];
                for i in 0..nb {
                    let a_i = &av.data()[i * m * k..];
                    let g_i = &gd[i * m * n..];
                    if transpose_b {
                        // stored n×k: dCᵀ · A
                        gemm(n, m, k, 1.0, g_i, 1, n, a_i, k, 1, 0.0, &mut d[i * k * n..], k);
                    } else {
                        gemm(k, m, n, 1.0, a_i, 1, k, g_i, n, 1, 0.0, &mut d[i * k * n..], n);
                    }
                }
                Some(Tensor::new(bv.shape(), d)?)
            } else {
                None
            };
            Ok(vec![ga, gb])
        });
        self.custom("bmm", &[a, b], out, bw)
    }

    // ---- shape and reductions ------------------------------------------

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let av = self.value_arc(a);
        let out = av.reshape(shape)?;
        let orig = av.shape().to_vec();
        let bw: BackwardFn = Box::new(move |g, _| Ok(vec![Some(g.reshape(&orig)?)]));
        self.custom("reshape", &[a], out, bw)
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let av = self.value_arc(a);
        let shape = av.shape().to_vec();
        let out = Tensor::scalar(av.sum());
        let bw: BackwardFn = Box::new(move |g, _| Ok(vec![Some(Tensor::full(&shape, g.item()))]));
        self.custom("sum_all", &[a], out, bw)
    }

    pub fn mean_all(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).numel().max(1) as f64;
        let s = self.sum_all(a)?;
        self.scale(s, 1.0 / n)
    }

    /// Sums over `axis`, removing it.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let av = self.value_arc(a);
        let shape = av.shape().to_vec();
        if axis >= shape.len() {
            return Err(FbmError::dim(format!("axis {axis} out of range for {shape:?}")));
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..len {
                let src = &av.data()[(o * len + j) * inner..(o * len + j + 1) * inner];
                for (d, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let mut oshape = shape.clone();
        oshape.remove(axis);
        let out = Tensor::new(&oshape, out)?;
        let bw: BackwardFn = Box::new(move |g, _| {
            let mut d = vec![0.0; outer * len * inner];
            for o in 0..outer {
                for j in 0..len {
                    d[(o * len + j) * inner..(o * len + j + 1) * inner]
                        .copy_from_slice(&g.data()[o * inner..(o + 1) * inner]);
                }
            }
            Ok(vec![Some(Tensor::new(&shape, d)?)])
        });
        self.custom("sum_axis", &[a], out, bw)
    }

    /// Mean over the last axis, keeping it with size 1.
    pub fn mean_lastdim(&mut self, a: Var) -> Result<Var> {
        let av = self.value_arc(a);
        let n = av.last_dim();
        let rows = av.numel() / n.max(1);
        let out: Vec<f64> = av
            .data()
            .chunks(n)
            .map(|c| c.iter().sum::<f64>() / n as f64)
            .collect();
        let mut oshape = av.shape().to_vec();
        *oshape.last_mut().unwrap() = 1;
        let out = Tensor::new(&oshape, out)?;
        let bw: BackwardFn = Box::new(move |g, _| {
            let mut d = Vec::with_capacity(rows * n);
            for r in 0..rows {
                d.extend(std::iter::repeat_n(g.data()[r] / n as f64, n));
            }
            Ok(vec![Some(Tensor::new(av.shape(), d)?)])
        });
        self.custom("mean_lastdim", &[a], out, bw)
    }

    /// Slice `[start, start+len)` along `axis`.
    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let av = self.value_arc(a);
        let shape = av.shape().to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(FbmError::dim(format!(
                "narrow [{start}, {}) on axis {axis} of {shape:?}",
                start + len
            )));
        }
        let outer: usize = shape[..axis].iter().product();
        let full = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            out.extend_from_slice(&av.data()[base..base + len * inner]);
        }
        let mut oshape = shape.clone();
        oshape[axis] = len;
        let out = Tensor::new(&oshape, out)?;
        let bw: BackwardFn = Box::new(move |g, _| {
            let mut d = vec![0.0; outer * full * inner];
            for o in 0..outer {
                let base = (o * full + start) * inner;
                d[base..base + len * inner]
                    .copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
            }
            Ok(vec![Some(Tensor::new(&shape, d)?)])
        });
        self.custom("narrow", &[a], out, bw)
    }

    // ---- normalization -----------------------------------------------

    /// Row softmax over the last axis, max-subtracted.
    pub fn softmax_lastdim(&mut self, a: Var) -> Result<Var> {
        let av = self.value_arc(a);
        let n = av.last_dim();
        if n == 0 {
            return Err(FbmError::dim("softmax over an empty axis"));
        }
        let mut out = av.as_ref().clone();
        for row in out.data_mut().chunks_mut(n) {
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for x in row.iter_mut() {
                *x = (*x - mx).exp();
                s += *x;
            }
            for x in row.iter_mut() {
                *x /= s;
            }
        }
        let y = Arc::new(out.clone());
        let bw: BackwardFn = Box::new(move |g, _| {
            let mut d = g.clone();
            for (drow, yrow) in d.data_mut().chunks_mut(n).zip(y.data().chunks(n)) {
                let dot: f64 = drow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                for (dv, yv) in drow.iter_mut().zip(yrow) {
                    *dv = yv * (*dv - dot);
                }
            }
            Ok(vec![Some(d)])
        });
        self.custom("softmax", &[a], out, bw)
    }

    /// Per-row standardization over the last axis: `(x − μ)/√(var + eps)`.
    pub fn standardize_lastdim(&mut self, a: Var, eps: f64) -> Result<Var> {
        let av = self.value_arc(a);
        let n = av.last_dim();
        let mut out = av.as_ref().clone();
        let mut inv_s = Vec::with_capacity(av.numel() / n.max(1));
        for row in out.data_mut().chunks_mut(n) {
            let mu = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + eps).sqrt();
            for x in row.iter_mut() {
                *x = (*x - mu) * is;
            }
            inv_s.push(is);
        }
        let y = Arc::new(out.clone());
        let bw: BackwardFn = Box::new(move |g, _| {
            let mut d = g.clone();
            for ((drow, yrow), is) in d.data_mut().chunks_mut(n).zip(y.data().chunks(n)).zip(&inv_s) {
                let md = drow.iter().sum::<f64>() / n as f64;
                let mdy = drow.iter().zip(yrow).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                for (dv, yv) in drow.iter_mut().zip(yrow) {
                    *dv = is * (*dv - md - yv * mdy);
                }
            }
            Ok(vec![Some(d)])
        });
        self.custom("standardize", &[a], out, bw)
    }
}
