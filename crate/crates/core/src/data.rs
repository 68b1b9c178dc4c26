//! CSV ingestion, chronological splits, z-scoring and sliding windows.

use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{parse_header, read_container, write_container};
use crate::error::{FbmError, Result};
use crate::tensor::Tensor;

/// A multivariate series stored channel-major: `values[d * n_steps + i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub columns: Vec<String>,
    pub timestamps: Option<Vec<String>>,
    values: Vec<f64>,
    steps: usize,
}

impl Dataset {
    pub fn from_channels(name: impl Into<String>, columns: Vec<String>, channels: Vec<Vec<f64>>) -> Result<Self> {
        if columns.len() != channels.len() || channels.is_empty() {
            return Err(FbmError::Data(format!(
                "{} column names for {} channels",
                columns.len(),
                channels.len()
            )));
        }
        let steps = channels[0].len();
        if channels.iter().any(|c| c.len() != steps) {
            return Err(FbmError::Data("channels have different lengths".into()));
        }
        if let Some((d, _)) = channels
            .iter()
            .enumerate()
            .find(|(_, c)| c.iter().any(|v| !v.is_finite()))
        {
            return Err(FbmError::Data(format!("channel '{}' contains non-finite values", columns[d])));
        }
        Ok(Dataset {
            name: name.into(),
            columns,
            timestamps: None,
            values: channels.concat(),
            steps,
        })
    }

    pub fn channels(&self) -> usize {
        self.columns.len()
    }

    pub fn len(&self) -> usize {
        self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.steps == 0
    }

    pub fn channel(&self, d: usize) -> &[f64] {
        &self.values[d * self.steps..(d + 1) * self.steps]
    }

    fn channel_mut(&mut self, d: usize) -> &mut [f64] {
        &mut self.values[d * self.steps..(d + 1) * self.steps]
    }

    pub fn get(&self, d: usize, i: usize) -> f64 {
        self.values[d * self.steps + i]
    }

    /// The first `n` steps.
    pub fn truncate(&mut self, n: usize) {
        if n >= self.steps {
            return;
        }
        let d = self.channels();
        let mut v = Vec::with_capacity(d * n);
        for c in 0..d {
            v.extend_from_slice(&self.channel(c)[..n]);
        }
        self.values = v;
        self.steps = n;
        if let Some(ts) = &mut self.timestamps {
            ts.truncate(n);
        }
    }
}

fn is_number(s: &str) -> bool {
    s.trim().parse::<f64>().is_ok()
}

/// Reads a CSV with a header row. The first column is taken as a timestamp
/// when its first value is not numeric. `value_columns` selects channels by
/// header name; `None` keeps every non-timestamp column.
///
/// Row numbers in errors are file line numbers (the header is line 1).
pub fn load_csv(path: &Path, value_columns: Option<&[String]>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let records: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;
    if records.is_empty() {
        return Err(FbmError::Data(format!("{} has no data rows", path.display())));
    }
    let has_time = records[0].get(0).is_some_and(|s| !is_number(s));
    let first = usize::from(has_time);
    let selected: Vec<usize> = match value_columns {
        Some(names) => {
            let missing: Vec<&str> = names
                .iter()
                .filter(|n| !header.iter().any(|h| h == *n))
                .map(String::as_str)
                .collect();
            if !missing.is_empty() {
                return Err(FbmError::Data(format!(
                    "{} is missing column(s): {}",
                    path.display(),
                    missing.join(", ")
                )));
            }
            names.iter().map(|n| header.iter().position(|h| h == n).unwrap()).collect()
        }
        None => (first..header.len()).collect(),
    };
    if selected.is_empty() {
        return Err(FbmError::Data(format!("{} has no value columns", path.display())));
    }
    let mut channels = vec![Vec::with_capacity(records.len()); selected.len()];
    let mut stamps = Vec::new();
    for (i, rec) in records.iter().enumerate() {
        let line = i + 2;
        if has_time {
            stamps.push(rec.get(0).unwrap_or("").to_string());
        }
        for (c, &j) in selected.iter().enumerate() {
            let cell = rec.get(j).ok_or_else(|| FbmError::Parse {
                row: line,
                column: header[j].clone(),
                message: "missing cell".into(),
            })?;
            let v: f64 = cell.parse().map_err(|_| FbmError::Parse {
                row: line,
                column: header[j].clone(),
                message: format!("cannot parse '{cell}' as a number"),
            })?;
            if !v.is_finite() {
                return Err(FbmError::Parse {
                    row: line,
                    column: header[j].clone(),
                    message: format!("non-finite value '{cell}'"),
                });
            }
            channels[c].push(v);
        }
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let columns = selected.iter().map(|&j| header[j].clone()).collect();
    let mut ds = Dataset::from_channels(name, columns, channels)?;
    if has_time {
        ds.timestamps = Some(stamps);
    }
    Ok(ds)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSpec {
    Ratio { train: f64, val: f64, test: f64 },
    /// 12/4/4 months of 30 days.
    EttMonths { per_hour: usize },
}

/// Index ranges of each split. Validation and test ranges start `T` steps
/// before their boundary so that their first target is the first step
/// after the boundary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Splits {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
    /// First step of the validation and test periods.
    pub boundaries: (usize, usize),
}

impl SplitSpec {
    /// Split boundaries `(train end, val end, test end)`.
    pub fn boundaries(&self, n: usize) -> Result<(usize, usize, usize)> {
        match *self {
            SplitSpec::Ratio { train, val, test } => {
                let parts = [train, val, test];
                if parts.iter().any(|p| !(0.0..=1.0).contains(p) || !p.is_finite())
                    || ((train + val + test) - 1.0).abs() > 1e-9
                {
                    return Err(FbmError::config(format!(
                        "split ratios {train}/{val}/{test} must be non-negative and sum to 1"
                    )));
                }
                let b1 = (n as f64 * train + 1e-9).floor() as usize;
                let b2 = (n as f64 * (train + val) + 1e-9).floor() as usize;
                Ok((b1.min(n), b2.min(n), n))
            }
            SplitSpec::EttMonths { per_hour } => {
                if per_hour == 0 {
                    return Err(FbmError::config("samples per hour must be positive"));
                }
                let month = 30 * 24 * per_hour;
                let (b1, b2, b3) = (12 * month, 16 * month, 20 * month);
                if b3 > n {
                    return Err(FbmError::Data(format!(
                        "month split needs {b3} steps, series has {n}"
                    )));
                }
                Ok((b1, b2, b3))
            }
        }
    }

    pub fn split(&self, n: usize, t: usize, horizon: usize) -> Result<Splits> {
        let (b1, b2, b3) = self.boundaries(n)?;
        let need = t + horizon;
        let make = |name: &str, start: usize, end: usize| -> Result<Range<usize>> {
            if end < start || end - start < need {
                return Err(FbmError::Data(format!(
                    "{name} split has {} steps, needs at least T+L={need}",
                    end.saturating_sub(start)
                )));
            }
            Ok(start..end)
        };
        Ok(Splits {
            train: make("train", 0, b1)?,
            val: make("validation", b1.saturating_sub(t), b2)?,
            test: make("test", b2.saturating_sub(t), b3)?,
            boundaries: (b1, b2),
        })
    }
}

/// Per-channel z-score statistics fitted on the training range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Population mean and standard deviation over `range`.
    pub fn fit(ds: &Dataset, range: Range<usize>) -> Result<Self> {
        if range.is_empty() || range.end > ds.len() {
            return Err(FbmError::Data(format!(
                "cannot fit statistics on range {range:?} of a {}-step series",
                ds.len()
            )));
        }
        let n = range.len() as f64;
        let mut mean = Vec::with_capacity(ds.channels());
        let mut std = Vec::with_capacity(ds.channels());
        for d in 0..ds.channels() {
            let x = &ds.channel(d)[range.clone()];
            let m = x.iter().sum::<f64>() / n;
            let var = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let s = var.sqrt();
            if s == 0.0 || x.iter().all(|&v| v == x[0]) {
                return Err(FbmError::Data(format!(
                    "channel {d} ('{}') is constant on the training split",
                    ds.columns[d]
                )));
            }
            mean.push(m);
            std.push(s);
        }
        Ok(NormStats { mean, std })
    }

    fn check(&self, ds: &Dataset) -> Result<()> {
        if self.mean.len() != ds.channels() || self.std.len() != ds.channels() {
            return Err(FbmError::dim(format!(
                "statistics for {} channels applied to {} channels",
                self.mean.len(),
                ds.channels()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        self.check(ds)?;
        let mut out = ds.clone();
        for d in 0..ds.channels() {
            let (m, s) = (self.mean[d], self.std[d]);
            out.channel_mut(d).iter_mut().for_each(|v| *v = (*v - m) / s);
        }
        Ok(out)
    }

    pub fn invert(&self, ds: &Dataset) -> Result<Dataset> {
        self.check(ds)?;
        let mut out = ds.clone();
        for d in 0..ds.channels() {
            let (m, s) = (self.mean[d], self.std[d]);
            out.channel_mut(d).iter_mut().for_each(|v| *v = *v * s + m);
        }
        Ok(out)
    }
}

/// Input/target pairs `X[B × D × T]`, `Y[B × D × L]` with their source indices.
#[derive(Clone, Debug)]
pub struct WindowBatch {
    pub x: Tensor,
    pub y: Tensor,
    pub indices: Vec<usize>,
}

/// Anything that can hand out numbered input/target windows.
pub trait WindowSource {
    fn channels(&self) -> usize;
    fn lookback(&self) -> usize;
    fn horizon(&self) -> usize;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Writes window `i` into `x` (`D·T`) and `y` (`D·L`), channel-major.
    fn fill(&self, i: usize, x: &mut [f64], y: &mut [f64]);

    fn batch(&self, ids: &[usize]) -> WindowBatch {
        let (d, t, l) = (self.channels(), self.lookback(), self.horizon());
        let mut x = vec![0.0; ids.len() * d * t];
        let mut y = vec![0.0; ids.len() * d * l];
        for (b, &i) in ids.iter().enumerate() {
            self.fill(i, &mut x[b * d * t..(b + 1) * d * t], &mut y[b * d * l..(b + 1) * d * l]);
        }
        WindowBatch {
            x: Tensor::new(&[ids.len(), d, t], x).expect("sizes match"),
            y: Tensor::new(&[ids.len(), d, l], y).expect("sizes match"),
            indices: ids.to_vec(),
        }
    }
}

/// Window indices grouped into batches; shuffled when a seed is given.
/// The last batch may be short.
pub fn batch_order(n: usize, batch_size: usize, shuffle: Option<u64>) -> Vec<Vec<usize>> {
    let mut ids: Vec<usize> = (0..n).collect();
    if let Some(seed) = shuffle {
        ids.shuffle(&mut Pcg64::seed_from_u64(seed));
    }
    ids.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Sliding windows over a range of a series. Window `i` reads inputs
/// `start+i .. start+i+T` and targets the following `L` steps.
#[derive(Clone, Debug)]
pub struct SeriesWindows<'a> {
    ds: &'a Dataset,
    range: Range<usize>,
    t: usize,
    l: usize,
}

impl<'a> SeriesWindows<'a> {
    pub fn new(ds: &'a Dataset, range: Range<usize>, t: usize, l: usize) -> Result<Self> {
        if range.end > ds.len() {
            return Err(FbmError::Data(format!(
                "range {range:?} exceeds the {}-step series",
                ds.len()
            )));
        }
        if range.len() < t + l {
            return Err(FbmError::Data(format!(
                "range of {} steps is shorter than T+L={}",
                range.len(),
                t + l
            )));
        }
        Ok(SeriesWindows { ds, range, t, l })
    }

    /// First input step of window `i` in series coordinates.
    pub fn start(&self, i: usize) -> usize {
        self.range.start + i
    }
}

impl WindowSource for SeriesWindows<'_> {
    fn channels(&self) -> usize {
        self.ds.channels()
    }
    fn lookback(&self) -> usize {
        self.t
    }
    fn horizon(&self) -> usize {
        self.l
    }
    fn len(&self) -> usize {
        self.range.len() - self.t - self.l + 1
    }
    fn fill(&self, i: usize, x: &mut [f64], y: &mut [f64]) {
        let s = self.start(i);
        for d in 0..self.ds.channels() {
            let c = self.ds.channel(d);
            x[d * self.t..(d + 1) * self.t].copy_from_slice(&c[s..s + self.t]);
            y[d * self.l..(d + 1) * self.l].copy_from_slice(&c[s + self.t..s + self.t + self.l]);
        }
    }
}

/// Independent pre-cut windows, as produced by the synthetic generators.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedWindows {
    pub x: Tensor,
    pub y: Tensor,
}

impl PairedWindows {
    pub fn new(x: Tensor, y: Tensor) -> Result<Self> {
        if x.rank() != 3 || y.rank() != 3 || x.shape()[..2] != y.shape()[..2] {
            return Err(FbmError::dim(format!(
                "paired windows need [W × D × T] and [W × D × L], got {:?} and {:?}",
                x.shape(),
                y.shape()
            )));
        }
        Ok(PairedWindows { x, y })
    }

    /// Windows `range` as a new set.
    pub fn slice(&self, range: Range<usize>) -> PairedWindows {
        let (d, t, l) = (self.channels(), self.lookback(), self.horizon());
        let n = range.len();
        PairedWindows {
            x: Tensor::new(&[n, d, t], self.x.data()[range.start * d * t..range.end * d * t].to_vec()).unwrap(),
            y: Tensor::new(&[n, d, l], self.y.data()[range.start * d * l..range.end * d * l].to_vec()).unwrap(),
        }
    }
}

impl WindowSource for PairedWindows {
    fn channels(&self) -> usize {
        self.x.shape()[1]
    }
    fn lookback(&self) -> usize {
        self.x.shape()[2]
    }
    fn horizon(&self) -> usize {
        self.y.shape()[2]
    }
    fn len(&self) -> usize {
        self.x.shape()[0]
    }
    fn fill(&self, i: usize, x: &mut [f64], y: &mut [f64]) {
        let (nx, ny) = (x.len(), y.len());
        x.copy_from_slice(&self.x.data()[i * nx..(i + 1) * nx]);
        y.copy_from_slice(&self.y.data()[i * ny..(i + 1) * ny]);
    }
}

/// A dataset after splitting and train-fitted z-scoring.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub data: Dataset,
    pub stats: NormStats,
    pub splits: Splits,
}

impl Prepared {
    pub fn new(raw: &Dataset, split: &SplitSpec, t: usize, horizon: usize) -> Result<Self> {
        let splits = split.split(raw.len(), t, horizon)?;
        let stats = NormStats::fit(raw, splits.train.clone())?;
        Ok(Prepared {
            data: stats.apply(raw)?,
            stats,
            splits,
        })
    }

    pub fn windows(&self, which: SplitName, t: usize, horizon: usize) -> Result<SeriesWindows<'_>> {
        let r = match which {
            SplitName::Train => self.splits.train.clone(),
            SplitName::Val => self.splits.val.clone(),
            SplitName::Test => self.splits.test.clone(),
        };
        SeriesWindows::new(&self.data, r, t, horizon)
    }

    /// Writes the normalized series with its statistics in the header.
    pub fn save_cache(&self, path: &Path) -> Result<()> {
        let j = |v: &[f64]| serde_json::to_string(v).expect("floats serialize");
        let header = format!(
            "name={}\ncolumns={}\nmean={}\nstd={}\n",
            self.data.name,
            serde_json::to_string(&self.data.columns)?,
            j(&self.stats.mean),
            j(&self.stats.std)
        );
        let t = Tensor::new(&[self.data.channels(), self.data.len()], self.data.values.clone())?;
        write_container(path, &header, [("values", &t)])
    }

    /// Reads a cache written by [`save_cache`](Self::save_cache) and
    /// re-derives the splits.
    pub fn load_cache(path: &Path, split: &SplitSpec, t: usize, horizon: usize) -> Result<Self> {
        let (header, tensors) = read_container(path)?;
        let kv = parse_header(&header)?;
        let get = |k: &str| {
            kv.iter()
                .find(|(a, _)| a == k)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| FbmError::Format(format!("cache header is missing '{k}'")))
        };
        let columns: Vec<String> = serde_json::from_str(&get("columns")?)?;
        let stats = NormStats {
            mean: serde_json::from_str(&get("mean")?)?,
            std: serde_json::from_str(&get("std")?)?,
        };
        let (_, values) = tensors
            .into_iter()
            .find(|(n, _)| n == "values")
            .ok_or_else(|| FbmError::Format("cache has no 'values' tensor".into()))?;
        if values.rank() != 2 || values.shape()[0] != columns.len() {
            return Err(FbmError::Format(format!("cache values have shape {:?}", values.shape())));
        }
        let steps = values.shape()[1];
        let data = Dataset {
            name: get("name")?,
            columns,
            timestamps: None,
            values: values.into_data(),
            steps,
        };
        let splits = split.split(steps, t, horizon)?;
        Ok(Prepared { data, stats, splits })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for SplitName {
    type Err = FbmError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(SplitName::Train),
            "val" | "validation" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            _ => Err(FbmError::config(format!("unknown split '{s}' (expected train, val or test)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChannelSummary {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

pub fn summarize(ds: &Dataset) -> Vec<ChannelSummary> {
    (0..ds.channels())
        .map(|d| {
            let x = ds.channel(d);
            let n = x.len().max(1) as f64;
            let mean = x.iter().sum::<f64>() / n;
            let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            ChannelSummary {
                name: ds.columns[d].clone(),
                mean,
                std: var.sqrt(),
                min: x.iter().copied().fold(f64::INFINITY, f64::min),
                max: x.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &tempfile::TempDir, body: &str) -> std::path::PathBuf {
        let p = dir.path().join("toy.csv");
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    fn toy(n: usize, d: usize) -> Dataset {
        let ch = (0..d).map(|c| (0..n).map(|i| (i * (c + 1)) as f64 + (i as f64).sin()).collect()).collect();
        Dataset::from_channels("toy", (0..d).map(|c| format!("c{c}")).collect(), ch).unwrap()
    }

    #[test]
    fn toy_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "date,a,b\n2020-01-01,1,2\n2020-01-02,3,4\n2020-01-03,5,6.5\n");
        let ds = load_csv(&p, None).unwrap();
        assert_eq!((ds.channels(), ds.len()), (2, 3));
        assert_eq!(ds.channel(1), &[2.0, 4.0, 6.5]);
        assert_eq!(ds.timestamps.as_ref().unwrap()[2], "2020-01-03");
        let only_b = load_csv(&p, Some(&["b".to_string()])).unwrap();
        assert_eq!(only_b.columns, vec!["b"]);
    }

    #[test]
    fn numeric_first_column_is_data() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a,b\n1,2\n3,4\n");
        assert_eq!(load_csv(&p, None).unwrap().channels(), 2);
    }

    #[test]
    fn bad_cell_names_the_row() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = String::from("date,a\n");
        for i in 0..10 {
            let v = if i == 5 { "abc".to_string() } else { i.to_string() };
            body += &format!("t{i},{v}\n");
        }
        let p = write(&dir, &body);
        match load_csv(&p, None) {
            Err(e @ FbmError::Parse { row: 7, .. }) => assert!(e.to_string().contains("row 7")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a,b\n1,2\n");
        let e = load_csv(&p, Some(&["zz".to_string()])).unwrap_err();
        assert!(e.to_string().contains("zz"));
    }

    #[test]
    fn ratio_boundaries() {
        let s = SplitSpec::Ratio { train: 0.65, val: 0.15, test: 0.2 };
        assert_eq!(s.boundaries(1000).unwrap(), (650, 800, 1000));
        let sp = s.split(1000, 24, 8).unwrap();
        assert_eq!(sp.val, 626..800);
        assert_eq!(sp.test, 776..1000);
    }

    #[test]
    fn month_boundaries() {
        let s = SplitSpec::EttMonths { per_hour: 4 };
        let (b1, b2, b3) = s.boundaries(69680).unwrap();
        assert_eq!(b1, 12 * 30 * 24 * 4);
        assert_eq!((b2, b3), (16 * 30 * 24 * 4, 20 * 30 * 24 * 4));
        assert!(SplitSpec::EttMonths { per_hour: 1 }.boundaries(100).is_err());
    }

    #[test]
    fn too_short_split() {
        let s = SplitSpec::Ratio { train: 0.65, val: 0.15, test: 0.2 };
        assert!(s.split(10, 4, 3).is_err());
        let ds = toy(6, 1);
        assert!(SeriesWindows::new(&ds, 0..6, 4, 3).is_err());
    }

    #[test]
    fn zscore_toy_and_roundtrip() {
        let ds = Dataset::from_channels("t", vec!["a".into()], vec![vec![1.0, 2.0, 3.0]]).unwrap();
        let st = NormStats::fit(&ds, 0..3).unwrap();
        assert_eq!(st.mean, vec![2.0]);
        assert!((st.std[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let big = toy(200, 3);
        let st = NormStats::fit(&big, 0..130).unwrap();
        let z = st.apply(&big).unwrap();
        for d in 0..3 {
            let m: f64 = z.channel(d)[..130].iter().sum::<f64>() / 130.0;
            assert!(m.abs() < 1e-10);
        }
        let back = st.invert(&z).unwrap();
        for d in 0..3 {
            for (a, b) in back.channel(d).iter().zip(big.channel(d)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_channel_rejected() {
        let ds = Dataset::from_channels("t", vec!["a".into(), "flat".into()], vec![vec![1.0, 2.0], vec![5.0, 5.0]])
            .unwrap();
        let e = NormStats::fit(&ds, 0..2).unwrap_err();
        assert!(e.to_string().contains("channel 1") && e.to_string().contains("flat"));
    }

    #[test]
    fn window_counts_and_content() {
        let ds = toy(50, 2);
        let w = SeriesWindows::new(&ds, 3..3 + 12, 8, 4).unwrap();
        assert_eq!(w.len(), 1);
        let w = SeriesWindows::new(&ds, 0..21, 8, 4).unwrap();
        assert_eq!(w.len(), 10);
        let b = w.batch(&[2]);
        assert_eq!(b.x.get(&[0, 1, 0]), ds.get(1, 2));
        assert_eq!(b.y.get(&[0, 1, 0]), ds.get(1, 10));
        assert_eq!(b.y.get(&[0, 0, 3]), ds.get(0, 13));
    }

    #[test]
    fn batch_order_is_seeded() {
        let a = batch_order(10, 3, Some(4));
        assert_eq!(a, batch_order(10, 3, Some(4)));
        assert_ne!(a, batch_order(10, 3, Some(5)));
        assert_eq!(a.len(), 4);
        assert_eq!(a[3].len(), 1);
        let mut all: Vec<usize> = a.concat();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(batch_order(5, 2, None), vec![vec![0, 1], vec![2, 3], vec![4]]);
    }

    #[test]
    fn cache_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = toy(400, 3);
        let split = SplitSpec::Ratio { train: 0.65, val: 0.15, test: 0.2 };
        let p = Prepared::new(&ds, &split, 16, 4).unwrap();
        let path = dir.path().join("c.bin");
        p.save_cache(&path).unwrap();
        let q = Prepared::load_cache(&path, &split, 16, 4).unwrap();
        assert_eq!(q.data.values, p.data.values);
        assert_eq!(q.stats, p.stats);
        assert_eq!(q.splits, p.splits);
    }

    #[test]
    fn no_leakage_into_validation() {
        let ds = toy(1000, 1);
        let split = SplitSpec::Ratio { train: 0.65, val: 0.15, test: 0.2 };
        let p = Prepared::new(&ds, &split, 24, 8).unwrap();
        let tr = p.windows(SplitName::Train, 24, 8).unwrap();
        let last = tr.start(tr.len() - 1) + 24 + 8;
        assert!(last <= p.splits.boundaries.0);
        let va = p.windows(SplitName::Val, 24, 8).unwrap();
        assert_eq!(va.start(0) + 24, p.splits.boundaries.0);
    }
}
