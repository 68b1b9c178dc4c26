//! Reference forecasters used as controls.

use std::f64::consts::PI;

use crate::data::WindowSource;
use crate::error::{FbmError, Result};
use crate::fourier::{check_len, rdft, standardize_window};
use crate::tensor::Tensor;

/// Frequency-space map that scales the real and imaginary parts of each bin
/// independently: `Y_R[k] = α_k·X_R[k]`, `Y_I[k] = β_k·X_I[k]`. Works on
/// standardized windows and shares coefficients across channels.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalSpectralBaseline {
    pub t: usize,
    pub horizon: usize,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl DiagonalSpectralBaseline {
    /// Closed-form per-bin least squares over every window and channel.
    pub fn fit(src: &dyn WindowSource) -> Result<Self> {
        let (t, l) = (src.lookback(), src.horizon());
        check_len(t)?;
        check_len(l)?;
        let bins = t.min(l) / 2;
        let (mut xr2, mut xi2, mut xryr, mut xiyi) = (vec![0.0; bins], vec![0.0; bins], vec![0.0; bins], vec![0.0; bins]);
        for i in 0..src.len() {
            let b = src.batch(&[i]);
            for (x, y) in b.x.data().chunks(t).zip(b.y.data().chunks(l)) {
                let (z, mu, sd) = standardize_window(x);
                let ys: Vec<f64> = y.iter().map(|v| (v - mu) / sd).collect();
                let (sx, sy) = (rdft(&z)?, rdft(&ys)?);
                for k in 1..=bins {
                    xr2[k - 1] += sx.re[k] * sx.re[k];
                    xi2[k - 1] += sx.im[k] * sx.im[k];
                    xryr[k - 1] += sx.re[k] * sy.re[k];
                    xiyi[k - 1] += sx.im[k] * sy.im[k];
                }
            }
        }
        let ratio = |num: f64, den: f64| if den > 1e-12 { num / den } else { 0.0 };
        Ok(DiagonalSpectralBaseline {
            t,
            horizon: l,
            alpha: (0..bins).map(|k| ratio(xryr[k], xr2[k])).collect(),
            beta: (0..bins).map(|k| ratio(xiyi[k], xi2[k])).collect(),
        })
    }

    /// Predicts `[B × D × L]` from `[B × D × T]`.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        if x.rank() != 3 || x.shape()[2] != self.t {
            return Err(FbmError::dim(format!(
                "baseline expects [B × D × {}], got {:?}",
                self.t,
                x.shape()
            )));
        }
        let l = self.horizon;
        let mut out = Vec::with_capacity(x.numel() / self.t * l);
        for row in x.data().chunks(self.t) {
            let (z, mu, sd) = standardize_window(row);
            let s = rdft(&z)?;
            for v in 0..l {
                let mut acc = 0.0;
                for k in 1..=self.alpha.len() {
                    let w = if 2 * k == l { 1.0 } else { 2.0 };
                    let a = 2.0 * PI * (k * v % l) as f64 / l as f64;
                    acc += w * (self.alpha[k - 1] * s.re[k] * a.cos() - self.beta[k - 1] * s.im[k] * a.sin());
                }
                out.push(acc / l as f64 * sd + mu);
            }
        }
        Tensor::new(&[x.shape()[0], x.shape()[1], l], out)
    }
}

/// Repeats the last observed value over the horizon.
pub fn last_value(x: &Tensor, horizon: usize) -> Result<Tensor> {
    if x.rank() != 3 {
        return Err(FbmError::dim(format!("expected [B × D × T], got {:?}", x.shape())));
    }
    let t = x.shape()[2];
    let data = x
        .data()
        .chunks(t)
        .flat_map(|row| std::iter::repeat_n(row[t - 1], horizon))
        .collect();
    Tensor::new(&[x.shape()[0], x.shape()[1], horizon], data)
}
