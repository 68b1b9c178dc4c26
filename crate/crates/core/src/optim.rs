//! Trainable parameters and first-order optimizers.

use std::sync::Arc;

use crate::error::{FbmError, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    value: Arc<Tensor>,
    grad: Option<Tensor>,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Parameter {
    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }
}

/// Registration-ordered parameter collection.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

/// Cheap copy of all parameter values (shares buffers until they change).
#[derive(Clone, Debug)]
pub struct Snapshot(Vec<Arc<Tensor>>);

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let n = value.numel();
        self.params.push(Parameter {
            name: name.into(),
            value: Arc::new(value),
            grad: None,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_arc(&self, id: ParamId) -> Arc<Tensor> {
        self.params[id.0].value.clone()
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        Arc::make_mut(&mut self.params[id.0].value)
    }

    pub fn set_value(&mut self, id: ParamId, t: Tensor) -> Result<()> {
        let p = &mut self.params[id.0];
        if p.value.shape() != t.shape() {
            return Err(FbmError::dim(format!(
                "parameter '{}' has shape {:?}, got {:?}",
                p.name,
                p.value.shape(),
                t.shape()
            )));
        }
        p.value = Arc::new(t);
        Ok(())
    }

    /// Gradient of a parameter; zeros when nothing reached it.
    pub fn grad(&self, id: ParamId) -> Tensor {
        let p = &self.params[id.0];
        p.grad
            .clone()
            .unwrap_or_else(|| Tensor::zeros(p.value.shape()))
    }

    pub fn accumulate_grad(&mut self, id: ParamId, g: Tensor) -> Result<()> {
        let p = &mut self.params[id.0];
        if g.shape() != p.value.shape() {
            return Err(FbmError::Contract(format!(
                "gradient for '{}' has shape {:?}, value is {:?}",
                p.name,
                g.shape(),
                p.value.shape()
            )));
        }
        match &mut p.grad {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    /// Total number of scalar weights.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot(self.params.iter().map(|p| p.value.clone()).collect())
    }

    pub fn restore(&mut self, s: &Snapshot) -> Result<()> {
        if s.0.len() != self.params.len() {
            return Err(FbmError::Contract(format!(
                "snapshot holds {} parameters, store has {}",
                s.0.len(),
                self.params.len()
            )));
        }
        for (p, v) in self.params.iter_mut().zip(&s.0) {
            p.value = v.clone();
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }
}

/// Bias-corrected Adam.
#[derive(Clone, Copy, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One update of every parameter; missing gradients count as zero.
    /// Gradients are cleared afterwards.
    pub fn step(&self, store: &mut ParamStore) {
        for p in &mut store.params {
            p.step += 1;
            let t = p.step as i32;
            let bc1 = 1.0 - self.beta1.powi(t);
            let bc2 = 1.0 - self.beta2.powi(t);
            let grad = p.grad.take();
            let value = Arc::make_mut(&mut p.value);
            let n = value.numel();
            let gd = grad.as_ref().map(|g| g.data());
            for i in 0..n {
                let g = gd.map_or(0.0, |g| g[i]);
                p.m[i] = self.beta1 * p.m[i] + (1.0 - self.beta1) * g;
                p.v[i] = self.beta2 * p.v[i] + (1.0 - self.beta2) * g * g;
                let mh = p.m[i] / bc1;
                let vh = p.v[i] / bc2;
                value.data_mut()[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

/// Plain gradient descent.
#[derive(Clone, Copy, Debug)]
pub struct Sgd {
    pub lr: f64,
}

impl Sgd {
    pub fn step(&self, store: &mut ParamStore) {
        for p in &mut store.params {
            p.step += 1;
            if let Some(g) = p.grad.take() {
                let value = Arc::make_mut(&mut p.value);
                for (v, g) in value.data_mut().iter_mut().zip(g.data()) {
                    *v -= self.lr * g;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    fn quad_step(store: &mut ParamStore, id: ParamId, target: f64) {
        let mut g = Graph::new();
        let x = g.param(store, id);
        let d = g.add_scalar(x, -target).unwrap();
        let l = g.square(d).unwrap();
        let l = g.sum_all(l).unwrap();
        g.backward(l).unwrap().accumulate_into(store).unwrap();
    }

    #[test]
    fn moments_start_at_zero() {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::ones(&[3]));
        let (m, v) = s.get(id).moments();
        assert!(m.iter().chain(v).all(|&x| x == 0.0));
        assert_eq!(s.grad(id), Tensor::zeros(&[3]));
    }

    #[test]
    fn first_step_moves_by_lr() {
        for g in [1e-3, 0.5, 40.0, -7.0] {
            let mut s = ParamStore::new();
            let id = s.add("w", Tensor::scalar(1.0));
            s.accumulate_grad(id, Tensor::scalar(g)).unwrap();
            Adam::new(0.01).step(&mut s);
            let delta = 1.0 - s.value(id).item();
            assert!((delta - 0.01 * g.signum()).abs() < 1e-6, "g={g} delta={delta}");
            assert!(s.get(id).grad.is_none());
        }
    }

    #[test]
    fn zero_gradient_leaves_value() {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::scalar(2.5));
        s.accumulate_grad(id, Tensor::scalar(0.0)).unwrap();
        Adam::new(0.1).step(&mut s);
        assert_eq!(s.value(id).item(), 2.5);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut s = ParamStore::new();
        let id = s.add("x", Tensor::scalar(0.0));
        let opt = Adam::new(0.1);
        for _ in 0..100 {
            quad_step(&mut s, id, 5.0);
            opt.step(&mut s);
        }
        // reference update rule run by hand
        let (mut x, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=100 {
            let g = 2.0 * (x - 5.0);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            x -= 0.1 * (m / (1.0 - 0.9f64.powi(t))) / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
        }
        assert!((s.value(id).item() - x).abs() < 1e-12);
        assert!((x - 5.0).abs() < 0.5, "x = {x}");
    }

    #[test]
    fn snapshot_restore_is_copy_on_write() {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::scalar(1.0));
        let snap = s.snapshot();
        s.accumulate_grad(id, Tensor::scalar(1.0)).unwrap();
        Sgd { lr: 0.5 }.step(&mut s);
        assert_eq!(s.value(id).item(), 0.5);
        s.restore(&snap).unwrap();
        assert_eq!(s.value(id).item(), 1.0);
    }

    #[test]
    fn gradient_shape_checked() {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::zeros(&[2]));
        assert!(s.accumulate_grad(id, Tensor::zeros(&[3])).is_err());
    }
}
