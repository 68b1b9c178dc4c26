//! CSV dumps of features, amplitude spectra and seasonal filters.

use std::io::Write;
use std::path::Path;

use crate::data::WindowSource;
use crate::error::{FbmError, Result};
use crate::fourier::{amplitude_phase, basis_expand, rdft, standardize_window, BasisMatrices};
use crate::tensor::Tensor;

/// Time-frequency features of one standardized window, `[T × T/2]`.
pub fn window_features(x: &[f64]) -> Result<Tensor> {
    let (z, _, _) = standardize_window(x);
    let bases = BasisMatrices::build(x.len(), 0)?;
    basis_expand(&rdft(&z)?, &bases, true)
}

/// Writes `n,k1,…,kK` rows.
pub fn write_features(g: &Tensor, path: &Path) -> Result<()> {
    if g.rank() != 2 {
        return Err(FbmError::dim(format!("features must be [T × K], got {:?}", g.shape())));
    }
    let k = g.shape()[1];
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    let head: Vec<String> = (1..=k).map(|c| format!("k{c}")).collect();
    writeln!(w, "n,{}", head.join(","))?;
    for (n, row) in g.data().chunks(k).enumerate() {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(w, "{n},{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumRow {
    pub channel: usize,
    pub k: usize,
    pub mean_amp: f64,
    pub lo95: f64,
    pub hi95: f64,
}

/// Amplitude distribution of bins `1..=T/2` over every `stride`-th input
/// window of `src`, per channel, on standardized windows.
pub fn spectrum_distribution(src: &dyn WindowSource, stride: usize) -> Result<Vec<SpectrumRow>> {
    let (d, t) = (src.channels(), src.lookback());
    let k = t / 2;
    if src.is_empty() {
        return Err(FbmError::Data("no windows to summarize".into()));
    }
    let mut amps = vec![vec![Vec::new(); k]; d];
    for i in (0..src.len()).step_by(stride.max(1)) {
        let b = src.batch(&[i]);
        for (c, x) in b.x.data().chunks(t).enumerate() {
            let (z, _, _) = standardize_window(x);
            let r = amplitude_phase(&rdft(&z)?).r;
            for bin in 1..=k {
                amps[c][bin - 1].push(r[bin]);
            }
        }
    }
    let mut rows = Vec::with_capacity(d * k);
    for (c, per_bin) in amps.iter_mut().enumerate() {
        for (bi, a) in per_bin.iter_mut().enumerate() {
            a.sort_by(f64::total_cmp);
            rows.push(SpectrumRow {
                channel: c,
                k: bi + 1,
                mean_amp: a.iter().sum::<f64>() / a.len() as f64,
                lo95: percentile(a, 0.025),
                hi95: percentile(a, 0.975),
            });
        }
    }
    Ok(rows)
}

pub fn write_spectrum(rows: &[SpectrumRow], path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "channel,k,mean_amp,lo95,hi95")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.channel, r.k, r.mean_amp, r.lo95, r.hi95)?;
    }
    w.flush()?;
    Ok(())
}

/// Seasonal filter `[T × K]` as rows `n` and columns `k1..kK`.
pub fn write_seasonal_weights(w: &Tensor, path: &Path) -> Result<()> {
    write_features(w, path)
}
