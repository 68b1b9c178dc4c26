//! Real DFT, cosine/sine basis tables and time-frequency features.
//!
//! For an even window length `T` there are `T/2 + 1` frequency bins. The
//! feature matrix `G[n, k] = H_R[k]·C[n, k] + H_I[k]·S[n, k]` splits every
//! timestep into per-frequency contributions that sum back to the input.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{FbmError, Result};
use crate::tensor::Tensor;

/// Variance floor used by instance standardization.
pub const STD_EPS: f64 = 1e-5;

/// Real and imaginary DFT coefficients for bins `0..=T/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub t: usize,
}

impl Spectrum {
    pub fn bins(&self) -> usize {
        self.re.len()
    }
}

pub fn check_len(t: usize) -> Result<()> {
    if !t.is_multiple_of(2) {
        return Err(FbmError::UnsupportedLength {
            len: t,
            reason: "window length must be even".into(),
        });
    }
    if t < 4 {
        return Err(FbmError::UnsupportedLength {
            len: t,
            reason: "window length must be at least 4".into(),
        });
    }
    Ok(())
}

/// `cos` and `sin` of `2π·j/t`, with the phase index reduced mod `t` first
/// and exact values on quarter turns.
pub(crate) fn unit_angle(j: usize, t: usize) -> (f64, f64) {
    let j = j % t;
    if (4 * j).is_multiple_of(t) {
        return match 4 * j / t {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        };
    }
    let a = 2.0 * PI * j as f64 / t as f64;
    (a.cos(), a.sin())
}

/// Weight of bin `k` in the real inverse transform: 1 at DC and Nyquist, else 2.
pub fn bin_weight(k: usize, t: usize) -> f64 {
    if k == 0 || 2 * k == t {
        1.0
    } else {
        2.0
    }
}

pub fn rdft(x: &[f64]) -> Result<Spectrum> {
    let t = x.len();
    check_len(t)?;
    let kmax = t / 2;
    let mut re = vec![0.0; kmax + 1];
    let mut im = vec![0.0; kmax + 1];
    for k in 0..=kmax {
        let (mut r, mut i) = (0.0, 0.0);
        for (n, &xv) in x.iter().enumerate() {
            let (c, s) = unit_angle(k * n, t);
            r += xv * c;
            i -= xv * s;
        }
        re[k] = r;
        im[k] = i;
    }
    // exact zeros where the sine terms vanish
    im[0] = 0.0;
    im[kmax] = 0.0;
    Ok(Spectrum { re, im, t })
}

/// Full `T`-point complex DFT by direct summation.
pub fn dft_complex(x: &[f64]) -> Vec<Complex64> {
    let t = x.len();
    (0..t)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(n, &v)| {
                    let (c, s) = unit_angle(k * n, t);
                    Complex64::new(v * c, -v * s)
                })
                .sum()
        })
        .collect()
}

/// Inverse of [`dft_complex`].
pub fn idft_complex(h: &[Complex64]) -> Vec<Complex64> {
    let t = h.len();
    (0..t)
        .map(|n| {
            h.iter()
                .enumerate()
                .map(|(k, &v)| {
                    let (c, s) = unit_angle(k * n, t);
                    v * Complex64::new(c, s)
                })
                .sum::<Complex64>()
                / t as f64
        })
        .collect()
}

/// Cosine and sine basis tables over `T + pad` rows and `T/2 + 1` columns.
#[derive(Clone, Debug)]
pub struct BasisMatrices {
    t: usize,
    pad: usize,
    c: Vec<f64>,
    s: Vec<f64>,
}

impl BasisMatrices {
    pub fn build(t: usize, pad: usize) -> Result<Self> {
        check_len(t)?;
        let cols = t / 2 + 1;
        let rows = t + pad;
        let mut c = vec![0.0; rows * cols];
        let mut s = vec![0.0; rows * cols];
        for n in 0..rows {
            for k in 0..cols {
                let w = bin_weight(k, t) / t as f64;
                let (cv, sv) = unit_angle(k * n, t);
                c[n * cols + k] = w * cv;
                s[n * cols + k] = -w * sv;
            }
        }
        Ok(BasisMatrices { t, pad, c, s })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn pad(&self) -> usize {
        self.pad
    }

    pub fn rows(&self) -> usize {
        self.t + self.pad
    }

    pub fn cols(&self) -> usize {
        self.t / 2 + 1
    }

    pub fn c(&self, n: usize, k: usize) -> f64 {
        self.c[n * self.cols() + k]
    }

    pub fn s(&self, n: usize, k: usize) -> f64 {
        self.s[n * self.cols() + k]
    }

    pub fn c_tensor(&self) -> Tensor {
        Tensor::new(&[self.rows(), self.cols()], self.c.clone()).expect("basis shape")
    }

    pub fn s_tensor(&self) -> Tensor {
        Tensor::new(&[self.rows(), self.cols()], self.s.clone()).expect("basis shape")
    }
}

/// Time-frequency features `[rows × bins]` of one channel.
///
/// With `drop_dc` the zero-frequency column is omitted, leaving `T/2` columns
/// that correspond to bins `1..=T/2`.
pub fn basis_expand(spec: &Spectrum, bases: &BasisMatrices, drop_dc: bool) -> Result<Tensor> {
    if spec.t != bases.t || spec.bins() != bases.cols() {
        return Err(FbmError::dim(format!(
            "spectrum of length {} against bases for T={}",
            spec.t, bases.t
        )));
    }
    let k0 = usize::from(drop_dc);
    let cols = bases.cols() - k0;
    let rows = bases.rows();
    let mut g = vec![0.0; rows * cols];
    for n in 0..rows {
        for k in k0..bases.cols() {
            g[n * cols + k - k0] = spec.re[k] * bases.c(n, k) + spec.im[k] * bases.s(n, k);
        }
    }
    Tensor::new(&[rows, cols], g)
}

/// Frequency-sum of features with shape `[.., rows, bins]`.
pub fn reconstruct(g: &Tensor) -> Vec<f64> {
    g.data()
        .chunks(g.last_dim())
        .map(|row| row.iter().sum())
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AmplitudePhase {
    pub r: Vec<f64>,
    pub phi: Vec<f64>,
}

/// Fused amplitude and phase of each cosine/sine pair.
///
/// `A = a_k` and `B = −b_k` where `a_k, b_k` are the bin-weighted real and
/// imaginary parts, so that the bin contributes `(R/T)·cos(2πkn/T − φ)`.
pub fn amplitude_phase(spec: &Spectrum) -> AmplitudePhase {
    let mut r = Vec::with_capacity(spec.bins());
    let mut phi = Vec::with_capacity(spec.bins());
    for k in 0..spec.bins() {
        let w = bin_weight(k, spec.t);
        let a = w * spec.re[k];
        let b = -w * spec.im[k];
        let (rk, pk) = fuse(a, b);
        r.push(rk);
        phi.push(pk);
    }
    AmplitudePhase { r, phi }
}

/// `(√(A²+B²), atan2(B, A))` with the phase in `(−π, π]` and 0 at zero amplitude.
pub fn fuse(a: f64, b: f64) -> (f64, f64) {
    let r = a.hypot(b);
    if r == 0.0 {
        return (0.0, 0.0);
    }
    let mut p = b.atan2(a);
    if p <= -PI {
        p += 2.0 * PI;
    }
    (r, p)
}

/// Coarser view of `[.., rows, cols]` features: average `kernel` adjacent rows
/// and sum `kernel` adjacent columns.
pub fn downsample(g: &Tensor, kernel: usize) -> Result<Tensor> {
    if kernel != 2 && kernel != 4 {
        return Err(FbmError::config(format!("down-sampling kernel must be 2 or 4, got {kernel}")));
    }
    let sh = g.shape();
    if sh.len() < 2 {
        return Err(FbmError::dim(format!("features need rank ≥ 2, got {sh:?}")));
    }
    let (rows, cols) = (sh[sh.len() - 2], sh[sh.len() - 1]);
    if rows % kernel != 0 || cols % kernel != 0 {
        return Err(FbmError::dim(format!(
            "features [{rows} × {cols}] not divisible by kernel {kernel}"
        )));
    }
    let (r2, c2) = (rows / kernel, cols / kernel);
    let lead: usize = sh[..sh.len() - 2].iter().product();
    let mut out = vec![0.0; lead * r2 * c2];
    let inv = 1.0 / kernel as f64;
    for b in 0..lead {
        let src = &g.data()[b * rows * cols..(b + 1) * rows * cols];
        let dst = &mut out[b * r2 * c2..(b + 1) * r2 * c2];
        for n in 0..rows {
            for k in 0..cols {
                dst[(n / kernel) * c2 + k / kernel] += src[n * cols + k] * inv;
            }
        }
    }
    let mut shape = sh.to_vec();
    let l = shape.len();
    shape[l - 2] = r2;
    shape[l - 1] = c2;
    Tensor::new(&shape, out)
}

/// Per-window standardization: returns `(x − μ)/σ`, `μ` and `σ`, where
/// `σ = √max(var, ε)` so that zero-variance windows stay finite.
pub fn standardize_window(x: &[f64]) -> (Vec<f64>, f64, f64) {
    let n = x.len() as f64;
    let mu = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
    let sd = var.max(STD_EPS).sqrt();
    (x.iter().map(|v| (v - mu) / sd).collect(), mu, sd)
}

/// Analysis matrix `[T × T]` mapping a window to `[H_R[1..=K] | H_I[1..=K]]`, `K = T/2`.
pub fn analysis_matrix(t: usize) -> Result<Tensor> {
    check_len(t)?;
    let k = t / 2;
    let mut m = vec![0.0; t * 2 * k];
    for n in 0..t {
        for c in 0..k {
            let (cv, sv) = unit_angle((c + 1) * n, t);
            m[n * 2 * k + c] = cv;
            m[n * 2 * k + k + c] = -sv;
        }
    }
    Tensor::new(&[t, 2 * k], m)
}

/// Features of every channel of a `[D × T]` window, shape `[D × T × bins]`.
pub fn expand_channels(x: &Tensor, drop_dc: bool) -> Result<Tensor> {
    if x.rank() != 2 {
        return Err(FbmError::dim(format!("expected [D × T], got {:?}", x.shape())));
    }
    let (d, t) = (x.shape()[0], x.shape()[1]);
    let bases = BasisMatrices::build(t, 0)?;
    let mut out = Vec::new();
    for row in x.data().chunks(t) {
        let g = basis_expand(&rdft(row)?, &bases, drop_dc)?;
        out.extend_from_slice(g.data());
    }
    let cols = bases.cols() - usize::from(drop_dc);
    Tensor::new(&[d, t, cols], out)
}
