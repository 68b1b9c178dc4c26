//! Synthetic cosine tasks that separate time-domain from frequency-domain
//! mappings.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

use crate::data::PairedWindows;
use crate::error::{FbmError, Result};
use crate::tensor::Tensor;

/// Start-of-cycle shift task: inputs `cos(2πk(n+δ)/T)` and targets the same
/// wave continued from step `T + shift`, so the target starts at a different
/// point of the cycle than the input does.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Case1 {
    pub t: usize,
    pub horizon: usize,
    pub bin: usize,
    pub shift: usize,
}

impl Default for Case1 {
    fn default() -> Self {
        Case1 {
            t: 336,
            horizon: 336,
            bin: 4,
            shift: 104,
        }
    }
}

impl Case1 {
    pub fn window(&self, delta: f64) -> (Vec<f64>, Vec<f64>) {
        let w = 2.0 * PI * self.bin as f64 / self.t as f64;
        let x = (0..self.t).map(|n| (w * (n as f64 + delta)).cos()).collect();
        let y = (0..self.horizon)
            .map(|v| (w * ((self.t + self.shift + v) as f64 + delta)).cos())
            .collect();
        (x, y)
    }

    /// `n` windows with phase offsets drawn uniformly from `[0, T)`.
    pub fn generate(&self, n: usize, seed: u64) -> PairedWindows {
        let mut rng = Pcg64::seed_from_u64(seed);
        let deltas: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..self.t as f64)).collect();
        paired(n, self.t, self.horizon, |i| self.window(deltas[i]))
    }
}

/// Length-change task: one cosine of period `period` read at length `t` as
/// input and continued for `horizon` steps. With period 24 the wave sits in
/// bin 14 of a 336-step window and in bin 8 of a 192-step target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Case2 {
    pub t: usize,
    pub horizon: usize,
    pub period: usize,
}

impl Default for Case2 {
    fn default() -> Self {
        Case2 {
            t: 336,
            horizon: 192,
            period: 24,
        }
    }
}

impl Case2 {
    pub fn window(&self, delta: f64) -> (Vec<f64>, Vec<f64>) {
        let w = 2.0 * PI / self.period as f64;
        let x = (0..self.t).map(|n| (w * (n as f64 + delta)).cos()).collect();
        let y = (0..self.horizon)
            .map(|v| (w * ((self.t + v) as f64 + delta)).cos())
            .collect();
        (x, y)
    }

    pub fn generate(&self, n: usize, seed: u64) -> PairedWindows {
        let mut rng = Pcg64::seed_from_u64(seed);
        let deltas: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..self.period as f64)).collect();
        paired(n, self.t, self.horizon, |i| self.window(deltas[i]))
    }
}

fn paired(n: usize, t: usize, l: usize, f: impl Fn(usize) -> (Vec<f64>, Vec<f64>)) -> PairedWindows {
    let mut xs = Vec::with_capacity(n * t);
    let mut ys = Vec::with_capacity(n * l);
    for i in 0..n {
        let (x, y) = f(i);
        xs.extend(x);
        ys.extend(y);
    }
    PairedWindows::new(
        Tensor::new(&[n, 1, t], xs).expect("sizes match"),
        Tensor::new(&[n, 1, l], ys).expect("sizes match"),
    )
    .expect("shapes match")
}

/// Writes single-channel pairs as `window_id,part,step,value` with part `x` or `y`.
pub fn write_pairs(p: &PairedWindows, path: &Path) -> Result<()> {
    if p.x.shape()[1] != 1 {
        return Err(FbmError::dim("only single-channel pairs can be written"));
    }
    let (t, l) = (p.x.shape()[2], p.y.shape()[2]);
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "window_id,part,step,value")?;
    for i in 0..p.x.shape()[0] {
        for s in 0..t {
            writeln!(w, "{i},x,{s},{}", p.x.data()[i * t + s])?;
        }
        for s in 0..l {
            writeln!(w, "{i},y,{s},{}", p.y.data()[i * l + s])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads the format of [`write_pairs`].
pub fn read_pairs(path: &Path) -> Result<PairedWindows> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut xs: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let field = |j: usize, name: &str| {
            rec.get(j).ok_or_else(|| FbmError::Parse {
                row: line,
                column: name.into(),
                message: "missing cell".into(),
            })
        };
        let id: usize = field(0, "window_id")?.trim().parse().map_err(|_| FbmError::Parse {
            row: line,
            column: "window_id".into(),
            message: "not an index".into(),
        })?;
        let v: f64 = field(3, "value")?.trim().parse().map_err(|_| FbmError::Parse {
            row: line,
            column: "value".into(),
            message: "not a number".into(),
        })?;
        let dst = match field(1, "part")?.trim() {
            "x" => &mut xs,
            "y" => &mut ys,
            other => {
                return Err(FbmError::Parse {
                    row: line,
                    column: "part".into(),
                    message: format!("expected x or y, got '{other}'"),
                })
            }
        };
        if dst.len() <= id {
            dst.resize(id + 1, Vec::new());
        }
        dst[id].push(v);
    }
    let n = xs.len();
    if n == 0 || ys.len() != n {
        return Err(FbmError::Data(format!("{} holds no complete pairs", path.display())));
    }
    let (t, l) = (xs[0].len(), ys[0].len());
    if xs.iter().any(|x| x.len() != t) || ys.iter().any(|y| y.len() != l) {
        return Err(FbmError::Data("windows have inconsistent lengths".into()));
    }
    PairedWindows::new(Tensor::new(&[n, 1, t], xs.concat())?, Tensor::new(&[n, 1, l], ys.concat())?)
}
