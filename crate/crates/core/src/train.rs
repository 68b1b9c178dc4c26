//! Metrics, the training loop with early stopping, and evaluation.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{batch_order, WindowSource};
use crate::error::{FbmError, Result};
use crate::graph::Graph;
use crate::models::ForecastModel;
use crate::optim::Adam;
use crate::tensor::Tensor;

/// Evaluation batch size; fixed so that metrics never depend on the
/// training batch size.
pub const EVAL_BATCH: usize = 256;

fn check_pair(pred: &Tensor, target: &Tensor) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(FbmError::dim(format!(
            "prediction {:?} and target {:?} differ in shape",
            pred.shape(),
            target.shape()
        )));
    }
    if pred.numel() == 0 {
        return Err(FbmError::dim("metrics of an empty tensor"));
    }
    Ok(())
}

pub fn mse(pred: &Tensor, target: &Tensor) -> Result<f64> {
    check_pair(pred, target)?;
    let s: f64 = pred.data().iter().zip(target.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(s / pred.numel() as f64)
}

pub fn mae(pred: &Tensor, target: &Tensor) -> Result<f64> {
    check_pair(pred, target)?;
    let s: f64 = pred.data().iter().zip(target.data()).map(|(a, b)| (a - b).abs()).sum();
    Ok(s / pred.numel() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Worker threads for evaluation.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            patience: 5,
            lr: 1e-4,
            batch_size: 32,
            seed: 1,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.patience == 0 || self.batch_size == 0 || self.threads == 0 {
            return Err(FbmError::config("epochs, patience, batch size and threads must be positive"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(FbmError::config(format!("learning rate {} must be finite and ≥ 0", self.lr)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub val_mae: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: serde_json::Value,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub test: Metrics,
    pub seconds: f64,
}

/// Mean error sums accumulated window by window in source order.
fn metric_sums(model: &ForecastModel, src: &dyn WindowSource, ids: &[usize]) -> Result<(f64, f64, usize)> {
    let mut se = 0.0;
    let mut ae = 0.0;
    let mut n = 0;
    for chunk in ids.chunks(EVAL_BATCH) {
        let b = src.batch(chunk);
        let y = model.forward(&b.x)?;
        for (p, t) in y.data().iter().zip(b.y.data()) {
            let d = p - t;
            se += d * d;
            ae += d.abs();
        }
        n += y.numel();
    }
    Ok((se, ae, n))
}

/// MSE and MAE over every window of `src`.
///
/// With several threads the windows are cut into contiguous shards whose
/// partial sums are added in shard order, so results depend only on the
/// thread count.
pub fn evaluate(model: &ForecastModel, src: &(dyn WindowSource + Sync), threads: usize) -> Result<Metrics> {
    if src.is_empty() {
        return Err(FbmError::Data("cannot evaluate on zero windows".into()));
    }
    let ids: Vec<usize> = (0..src.len()).collect();
    let (se, ae, n) = if threads <= 1 {
        metric_sums(model, src, &ids)?
    } else {
        let shard = ids.len().div_ceil(threads);
        let parts: Vec<Result<(f64, f64, usize)>> = std::thread::scope(|s| {
            let handles: Vec<_> = ids
                .chunks(shard)
                .map(|c| s.spawn(move || metric_sums(model, src, c)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("evaluation thread panicked")).collect()
        });
        let mut acc = (0.0, 0.0, 0);
        for p in parts {
            let (a, b, c) = p?;
            acc = (acc.0 + a, acc.1 + b, acc.2 + c);
        }
        acc
    };
    let m = Metrics {
        mse: se / n as f64,
        mae: ae / n as f64,
    };
    if !m.mse.is_finite() {
        return Err(FbmError::Numeric("evaluation produced a non-finite error".into()));
    }
    Ok(m)
}

/// Trains with Adam on MSE, keeps the best-validation parameters, stops once
/// `patience` epochs pass without improvement and reports test metrics of
/// the restored best model.
pub fn train(
    model: &mut ForecastModel,
    train_set: &(dyn WindowSource + Sync),
    val_set: &(dyn WindowSource + Sync),
    test_set: &(dyn WindowSource + Sync),
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<RunReport> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(FbmError::Data("training split has no windows".into()));
    }
    let started = Instant::now();
    let opt = Adam::new(cfg.lr);
    let mut best = (f64::INFINITY, 0usize, model.store().snapshot());
    let mut bad = 0;
    let mut epochs = Vec::new();
    for epoch in 1..=cfg.epochs {
        let order = batch_order(train_set.len(), cfg.batch_size, Some(cfg.seed.wrapping_add(epoch as u64)));
        let mut sum = 0.0;
        let mut count = 0usize;
        for (bi, ids) in order.iter().enumerate() {
            let b = train_set.batch(ids);
            let at = |e: FbmError| match e {
                FbmError::Numeric(m) => FbmError::Numeric(format!("epoch {epoch}, batch {bi}: {m}")),
                other => other,
            };
            let mut g = Graph::new();
            let (y, loss) = (|| {
                let y = model.forward_graph(&mut g, &b.x)?;
                let t = g.constant(b.y);
                let d = g.sub(y, t)?;
                let sq = g.square(d)?;
                Ok((y, g.mean_all(sq)?))
            })()
            .map_err(at)?;
            let lv = g.value(loss).item();
            if !lv.is_finite() {
                return Err(FbmError::Numeric(format!(
                    "loss is {lv} at epoch {epoch}, batch {bi}"
                )));
            }
            let n = g.value(y).numel();
            sum += lv * n as f64;
            count += n;
            g.backward(loss).map_err(at)?.accumulate_into(model.store_mut())?;
            opt.step(model.store_mut());
        }
        let val = evaluate(model, val_set, cfg.threads)?;
        let rec = EpochRecord {
            epoch,
            train_mse: sum / count as f64,
            val_mse: val.mse,
            val_mae: val.mae,
        };
        on_epoch(&rec);
        epochs.push(rec);
        if val.mse < best.0 {
            best = (val.mse, epoch, model.store().snapshot());
            bad = 0;
        } else {
            bad += 1;
            if bad >= cfg.patience {
                break;
            }
        }
    }
    model.store_mut().restore(&best.2)?;
    let test = evaluate(model, test_set, cfg.threads)?;
    Ok(RunReport {
        config: serde_json::json!({ "train": cfg, "model": model.spec() }),
        epochs,
        best_epoch: best.1,
        test,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// Writes `window_id,channel,step,y_true,y_pred` for every window of `src`.
pub fn write_predictions(model: &ForecastModel, src: &dyn WindowSource, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "window_id,channel,step,y_true,y_pred")?;
    let (d, l) = (src.channels(), src.horizon());
    let ids: Vec<usize> = (0..src.len()).collect();
    for chunk in ids.chunks(EVAL_BATCH) {
        let b = src.batch(chunk);
        let y = model.forward(&b.x)?;
        for (bi, &wid) in chunk.iter().enumerate() {
            for c in 0..d {
                for s in 0..l {
                    let i = (bi * d + c) * l + s;
                    writeln!(w, "{wid},{c},{s},{},{}", b.y.data()[i], y.data()[i])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}
