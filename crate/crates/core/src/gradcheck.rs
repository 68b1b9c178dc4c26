//! Central finite-difference checks of reverse-mode gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_pcg::Pcg64;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::optim::{ParamId, ParamStore};
use crate::tensor::Tensor;

pub const FD_EPS: f64 = 1e-5;

/// `‖a − n‖₂ / max(‖a‖₂, ‖n‖₂)`, zero when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>()
        .sqrt();
    let na = analytic.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
    let d = na.max(nn);
    if d == 0.0 {
        0.0
    } else {
        diff / d
    }
}

fn coords(n: usize, max: Option<usize>, seed: u64) -> Vec<usize> {
    match max {
        Some(m) if m < n => {
            let mut rng = Pcg64::seed_from_u64(seed);
            let mut v = sample(&mut rng, n, m).into_vec();
            v.sort_unstable();
            v
        }
        _ => (0..n).collect(),
    }
}

/// Checks gradients of a scalar function with respect to each input tensor.
/// Returns the worst relative error over the inputs.
pub fn check_inputs(
    inputs: &[Tensor],
    f: impl Fn(&mut Graph, &[Var]) -> Result<Var>,
) -> Result<f64> {
    check_inputs_sampled(inputs, None, f)
}

pub fn check_inputs_sampled(
    inputs: &[Tensor],
    max_coords: Option<usize>,
    f: impl Fn(&mut Graph, &[Var]) -> Result<Var>,
) -> Result<f64> {
    let eval = |ts: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ts.iter().map(|t| g.input(t.clone())).collect();
        let y = f(&mut g, &vars)?;
        Ok(g.value(y).item())
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let y = f(&mut g, &vars)?;
    let grads = g.backward(y)?;
    let mut worst = 0.0f64;
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads
            .wrt(*v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(inputs[i].shape()));
        let idx = coords(inputs[i].numel(), max_coords, i as u64);
        let mut a = Vec::with_capacity(idx.len());
        let mut num = Vec::with_capacity(idx.len());
        let mut ts = inputs.to_vec();
        for &j in &idx {
            let orig = ts[i].data()[j];
            ts[i].data_mut()[j] = orig + FD_EPS;
            let fp = eval(&ts)?;
            ts[i].data_mut()[j] = orig - FD_EPS;
            let fm = eval(&ts)?;
            ts[i].data_mut()[j] = orig;
            num.push((fp - fm) / (2.0 * FD_EPS));
            a.push(analytic.data()[j]);
        }
        worst = worst.max(relative_error(&a, &num));
    }
    Ok(worst)
}

/// Checks parameter gradients of a scalar function built from `store`.
/// At most `max_coords` coordinates per parameter are probed when given.
pub fn check_params(
    store: &mut ParamStore,
    ids: &[ParamId],
    max_coords: Option<usize>,
    f: impl Fn(&mut Graph, &ParamStore) -> Result<Var>,
) -> Result<f64> {
    store.zero_grads();
    let mut g = Graph::new();
    let y = f(&mut g, store)?;
    g.backward(y)?.accumulate_into(store)?;
    let mut worst = 0.0f64;
    for (pi, &id) in ids.iter().enumerate() {
        let analytic = store.grad(id);
        let n = analytic.numel();
        let idx = coords(n, max_coords, 1000 + pi as u64);
        let mut a = Vec::with_capacity(idx.len());
        let mut num = Vec::with_capacity(idx.len());
        for &j in &idx {
            let orig = store.value(id).data()[j];
            store.value_mut(id).data_mut()[j] = orig + FD_EPS;
            let mut g = Graph::new();
            let y = f(&mut g, store)?;
            let fp = g.value(y).item();
            store.value_mut(id).data_mut()[j] = orig - FD_EPS;
            let mut g = Graph::new();
            let y = f(&mut g, store)?;
            let fm = g.value(y).item();
            store.value_mut(id).data_mut()[j] = orig;
            num.push((fp - fm) / (2.0 * FD_EPS));
            a.push(analytic.data()[j]);
        }
        worst = worst.max(relative_error(&a, &num));
    }
    store.zero_grads();
    Ok(worst)
}
