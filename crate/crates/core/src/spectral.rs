//! Graph operations that act on time-frequency features through the spectrum.
//!
//! Every feature `G[r, n, k]` is linear in the row spectrum
//! `h[r] = [H_R[1..=K] | H_I[1..=K]]` (`K = T/2`, DC bin dropped), so any
//! linear map of `G` can be pushed onto the basis tables first. The operations
//! here never build the full `rows × T × K` feature tensor.

use std::sync::Arc;

use crate::error::{FbmError, Result};
use crate::fourier::{check_len, BasisMatrices};
use crate::graph::{BackwardFn, Graph, Var};
use crate::tensor::{gemm, Tensor};

/// Basis tables for one down-sampling scale.
///
/// `cd[n', c] = (1/κ)·Σ_j C[n'κ + j, c + 1]`, likewise `sd`; column `c` feeds
/// the down-sampled frequency column `c / κ`.
#[derive(Clone, Debug)]
pub struct ScaleBasis {
    t: usize,
    kappa: usize,
    cd: Vec<f64>,
    sd: Vec<f64>,
}

impl ScaleBasis {
    pub fn new(t: usize, kappa: usize) -> Result<Self> {
        check_len(t)?;
        let k = t / 2;
        if kappa == 0 || !t.is_multiple_of(kappa) || !k.is_multiple_of(kappa) {
            return Err(FbmError::dim(format!(
                "T={t} features are not divisible by down-sampling kernel {kappa}"
            )));
        }
        let b = BasisMatrices::build(t, 0)?;
        let ts = t / kappa;
        let mut cd = vec![0.0; ts * k];
        let mut sd = vec![0.0; ts * k];
        let inv = 1.0 / kappa as f64;
        for n in 0..t {
            for c in 0..k {
                cd[(n / kappa) * k + c] += inv * b.c(n, c + 1);
                sd[(n / kappa) * k + c] += inv * b.s(n, c + 1);
            }
        }
        Ok(ScaleBasis { t, kappa, cd, sd })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    /// Spectrum half-width `K = T/2`.
    pub fn k(&self) -> usize {
        self.t / 2
    }

    /// Timesteps at this scale.
    pub fn ts(&self) -> usize {
        self.t / self.kappa
    }

    /// Frequency columns at this scale.
    pub fn ks(&self) -> usize {
        self.k() / self.kappa
    }

    fn check_patches(&self, patches: usize) -> Result<usize> {
        if patches == 0 || !self.ts().is_multiple_of(patches) {
            return Err(FbmError::dim(format!(
                "{} timesteps cannot be split into {patches} patches",
                self.ts()
            )));
        }
        Ok(self.ts() / patches)
    }

    /// Flattened patch width `N = (T_s / P)·K_s`.
    pub fn patch_width(&self, patches: usize) -> Result<usize> {
        Ok(self.check_patches(patches)? * self.ks())
    }

    fn check_h(&self, h: &Tensor) -> Result<usize> {
        if h.rank() != 2 || h.shape()[1] != 2 * self.k() {
            return Err(FbmError::dim(format!(
                "spectrum rows must be [R × {}], got {:?}",
                2 * self.k(),
                h.shape()
            )));
        }
        Ok(h.shape()[0])
    }

    /// Features of one spectrum row at this scale, `[T_s × K_s]` row-major.
    fn row_features(&self, h: &[f64], out: &mut [f64]) {
        let (k, ks) = (self.k(), self.ks());
        out.iter_mut().for_each(|v| *v = 0.0);
        for n in 0..self.ts() {
            let cd = &self.cd[n * k..(n + 1) * k];
            let sd = &self.sd[n * k..(n + 1) * k];
            let dst = &mut out[n * ks..(n + 1) * ks];
            for c in 0..k {
                dst[c / self.kappa] += h[c] * cd[c] + h[k + c] * sd[c];
            }
        }
    }

    /// Materialized features `[R × T_s × K_s]` of spectrum rows `[R × 2K]`.
    pub fn features(&self, h: &Tensor) -> Result<Tensor> {
        let r = self.check_h(h)?;
        let w = self.ts() * self.ks();
        let mut out = vec![0.0; r * w];
        for (row, dst) in h.data().chunks(2 * self.k()).zip(out.chunks_mut(w)) {
            self.row_features(row, dst);
        }
        Tensor::new(&[r, self.ts(), self.ks()], out)
    }

    /// `M[2K × P]` such that `h·M` is the per-patch mean of the features.
    pub fn patch_mean_matrix(&self, patches: usize) -> Result<Tensor> {
        let m = self.check_patches(patches)?;
        let k = self.k();
        let nw = (m * self.ks()) as f64;
        let mut out = Tensor::zeros(&[2 * k, patches]);
        let d = out.data_mut();
        for n in 0..self.ts() {
            let p = n / m;
            for c in 0..k {
                d[c * patches + p] += self.cd[n * k + c] / nw;
                d[(k + c) * patches + p] += self.sd[n * k + c] / nw;
            }
        }
        Ok(out)
    }

    /// Folds patch `p` of projection weights into spectrum space.
    fn fold(&self, w: &[f64], o: usize, wbase: usize, p: usize, m: usize, a: &mut [f64]) {
        let (k, ks) = (self.k(), self.ks());
        a.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..m {
            let n = p * m + j;
            for c in 0..k {
                let row = wbase + j * ks + c / self.kappa;
                let wr = &w[row * o..(row + 1) * o];
                let (cv, sv) = (self.cd[n * k + c], self.sd[n * k + c]);
                let (ac, asn) = a.split_at_mut(k * o);
                for ((x, y), wv) in ac[c * o..(c + 1) * o]
                    .iter_mut()
                    .zip(&mut asn[c * o..(c + 1) * o])
                    .zip(wr)
                {
                    *x += cv * wv;
                    *y += sv * wv;
                }
            }
        }
    }
}

/// Projects every patch of the features through `w`, giving `[R × P × o]`.
///
/// `w` is `[N × o]` shared by all patches, or `[P·N × o]` with one block of
/// rows per patch when `per_patch` is set.
pub fn patch_projection(
    g: &mut Graph,
    h: Var,
    w: Var,
    basis: &Arc<ScaleBasis>,
    patches: usize,
    per_patch: bool,
) -> Result<Var> {
    let hv = g.value_arc(h);
    let wv = g.value_arc(w);
    let r = basis.check_h(&hv)?;
    let m = basis.check_patches(patches)?;
    let nw = m * basis.ks();
    let k2 = 2 * basis.k();
    let rows = if per_patch { patches * nw } else { nw };
    if wv.rank() != 2 || wv.shape()[0] != rows {
        return Err(FbmError::dim(format!(
            "projection weights must have {rows} rows, got {:?}",
            wv.shape()
        )));
    }
    let o = wv.shape()[1];
    let mut folded = vec![0.0; patches * k2 * o];
    let mut out = vec![0.0; r * patches * o];
    for p in 0..patches {
        let a = &mut folded[p * k2 * o..(p + 1) * k2 * o];
        let wbase = if per_patch { p * nw } else { 0 };
        basis.fold(wv.data(), o, wbase, p, m, a);
        gemm(r, k2, o, 1.0, hv.data(), k2, 1, a, o, 1, 0.0, &mut out[p * o..], patches * o);
    }
    let out = Tensor::new(&[r, patches, o], out)?;
    let basis = basis.clone();
    let bw: BackwardFn = Box::new(move |gr, needs| {
        let gd = gr.data();
        let dh = if needs[0] {
            let mut d = vec![0.0; r * k2];
            for p in 0..patches {
                let a = &folded[p * k2 * o..(p + 1) * k2 * o];
                gemm(r, o, k2, 1.0, &gd[p * o..], patches * o, 1, a, 1, o, 1.0, &mut d, k2);
            }
            Some(Tensor::new(&[r, k2], d)?)
        } else {
            None
        };
        let dw = if needs[1] {
            let k = basis.k();
            let ks = basis.ks();
            let mut d = vec![0.0; rows * o];
            let mut da = vec![0.0; k2 * o];
            for p in 0..patches {
                gemm(k2, r, o, 1.0, hv.data(), 1, k2, &gd[p * o..], patches * o, 1, 0.0, &mut da, o);
                let wbase = if per_patch { p * nw } else { 0 };
                for j in 0..m {
                    let n = p * m + j;
                    for c in 0..k {
                        let row = wbase + j * ks + c / basis.kappa;
                        let (cv, sv) = (basis.cd[n * k + c], basis.sd[n * k + c]);
                        let dst = &mut d[row * o..(row + 1) * o];
                        let (dc, dsn) = (&da[c * o..(c + 1) * o], &da[(k + c) * o..(k + c + 1) * o]);
                        for ((x, y), z) in dst.iter_mut().zip(dc).zip(dsn) {
                            *x += cv * y + sv * z;
                        }
                    }
                }
            }
            Some(Tensor::new(&[rows, o], d)?)
        } else {
            None
        };
        Ok(vec![dh, dw])
    });
    g.custom("patch_projection", &[h, w], out, bw)
}

/// Population variance of each feature patch, `[R × P]`.
pub fn patch_variance(g: &mut Graph, h: Var, basis: &Arc<ScaleBasis>, patches: usize) -> Result<Var> {
    let hv = g.value_arc(h);
    let r = basis.check_h(&hv)?;
    let m = basis.check_patches(patches)?;
    let nw = m * basis.ks();
    let k2 = 2 * basis.k();
    let fw = basis.ts() * basis.ks();
    let mut buf = vec![0.0; fw];
    let mut out = vec![0.0; r * patches];
    let mut means = vec![0.0; r * patches];
    for i in 0..r {
        basis.row_features(&hv.data()[i * k2..(i + 1) * k2], &mut buf);
        for (p, chunk) in buf.chunks(nw).enumerate() {
            let mu = chunk.iter().sum::<f64>() / nw as f64;
            out[i * patches + p] = chunk.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / nw as f64;
            means[i * patches + p] = mu;
        }
    }
    let out = Tensor::new(&[r, patches], out)?;
    let basis = basis.clone();
    let bw: BackwardFn = Box::new(move |gr, _| {
        let (k, ks) = (basis.k(), basis.ks());
        let mut d = vec![0.0; r * k2];
        let mut f = vec![0.0; fw];
        for i in 0..r {
            basis.row_features(&hv.data()[i * k2..(i + 1) * k2], &mut f);
            // dVar/dG = 2(G − E)/N; the mean term cancels
            for (p, chunk) in f.chunks_mut(nw).enumerate() {
                let s = 2.0 * gr.data()[i * patches + p] / nw as f64;
                let mu = means[i * patches + p];
                for x in chunk.iter_mut() {
                    *x = s * (*x - mu);
                }
            }
            let dh = &mut d[i * k2..(i + 1) * k2];
            for n in 0..basis.ts() {
                for c in 0..k {
                    let df = f[n * ks + c / basis.kappa];
                    dh[c] += df * basis.cd[n * k + c];
                    dh[k + c] += df * basis.sd[n * k + c];
                }
            }
        }
        Ok(vec![Some(Tensor::new(&[r, k2], d)?)])
    });
    g.custom("patch_variance", &[h], out, bw)
}

/// Features of timesteps `[n0, n0 + len)` flattened per row, `[R × len·K]`.
pub fn expand_rows(g: &mut Graph, h: Var, basis: &Arc<ScaleBasis>, n0: usize, len: usize) -> Result<Var> {
    if basis.kappa != 1 {
        return Err(FbmError::config("row expansion works on the full-resolution basis"));
    }
    let hv = g.value_arc(h);
    let r = basis.check_h(&hv)?;
    let k = basis.k();
    if n0 + len > basis.t {
        return Err(FbmError::dim(format!(
            "timesteps [{n0}, {}) exceed window length {}",
            n0 + len,
            basis.t
        )));
    }
    let mut out = vec![0.0; r * len * k];
    for i in 0..r {
        let hr = &hv.data()[i * 2 * k..(i + 1) * 2 * k];
        for j in 0..len {
            let n = n0 + j;
            let dst = &mut out[(i * len + j) * k..(i * len + j + 1) * k];
            for c in 0..k {
                dst[c] = hr[c] * basis.cd[n * k + c] + hr[k + c] * basis.sd[n * k + c];
            }
        }
    }
    let out = Tensor::new(&[r, len * k], out)?;
    let basis = basis.clone();
    let bw: BackwardFn = Box::new(move |gr, _| {
        let mut d = vec![0.0; r * 2 * k];
        for i in 0..r {
            let dh = &mut d[i * 2 * k..(i + 1) * 2 * k];
            for j in 0..len {
                let n = n0 + j;
                let src = &gr.data()[(i * len + j) * k..(i * len + j + 1) * k];
                for c in 0..k {
                    dh[c] += src[c] * basis.cd[n * k + c];
                    dh[k + c] += src[c] * basis.sd[n * k + c];
                }
            }
        }
        Ok(vec![Some(Tensor::new(&[r, 2 * k], d)?)])
    });
    g.custom("expand_rows", &[h], out, bw)
}

/// Seasonal kernel `F[2K × L]` from rolling-window weights `w[T × K]`:
/// `F[c, v] = Σ_n w[n, c]·C[n + v, c + 1]` and `F[K + c, v]` likewise with `S`.
///
/// Then `h·F` equals sliding `w` over the padded features.
pub fn seasonal_kernel(g: &mut Graph, w: Var, padded: &Arc<BasisMatrices>, horizon: usize) -> Result<Var> {
    let t = padded.t();
    let k = t / 2;
    if horizon == 0 || padded.pad() + 1 < horizon {
        return Err(FbmError::config(format!(
            "seasonal horizon {horizon} needs basis padding of at least {}, have {}",
            horizon.saturating_sub(1),
            padded.pad()
        )));
    }
    let wv = g.value_arc(w);
    if wv.shape() != [t, k] {
        return Err(FbmError::dim(format!(
            "seasonal weights must be [{t} × {k}], got {:?}",
            wv.shape()
        )));
    }
    let l = horizon;
    let mut f = vec![0.0; 2 * k * l];
    for n in 0..t {
        for c in 0..k {
            let wnc = wv.data()[n * k + c];
            if wnc == 0.0 {
                continue;
            }
            for v in 0..l {
                f[c * l + v] += wnc * padded.c(n + v, c + 1);
                f[(k + c) * l + v] += wnc * padded.s(n + v, c + 1);
            }
        }
    }
    let out = Tensor::new(&[2 * k, l], f)?;
    let padded = padded.clone();
    let bw: BackwardFn = Box::new(move |gr, _| {
        let gd = gr.data();
        let mut d = vec![0.0; t * k];
        for n in 0..t {
            for c in 0..k {
                let mut acc = 0.0;
                for v in 0..l {
                    acc += gd[c * l + v] * padded.c(n + v, c + 1) + gd[(k + c) * l + v] * padded.s(n + v, c + 1);
                }
                d[n * k + c] = acc;
            }
        }
        Ok(vec![Some(Tensor::new(&[t, k], d)?)])
    });
    g.custom("seasonal_kernel", &[w], out, bw)
}
