//! `fbm`: train, evaluate and inspect Fourier basis mapping forecasters.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand};
use serde::Serialize;

use fbm_core::blocks::{Backbone, InteractionConfig, Scale, TrendConfig};
use fbm_core::data::{load_csv, Dataset, PairedWindows, Prepared, SeriesWindows, SplitName, SplitSpec, WindowSource};
use fbm_core::error::ErrorClass;
use fbm_core::export::{spectrum_distribution, window_features, write_features, write_seasonal_weights, write_spectrum};
use fbm_core::fourier::check_len;
use fbm_core::models::{default_np_trend, Activation, ForecastModel, ModelSpec, NlConfig, Variant};
use fbm_core::presets::{preset, Preset};
use fbm_core::synth::{read_pairs, write_pairs, Case1, Case2};
use fbm_core::train::{evaluate, train, write_predictions, TrainConfig};
use fbm_core::FbmError;

#[derive(Parser, Debug)]
#[command(name = "fbm", version, args_override_self = true, about = "Fourier basis mapping forecasters")]
struct Cli {
    /// Worker threads for evaluation.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Train a model and write checkpoint, report and manifest.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split; prints {mse, mae}.
    Eval(EvalArgs),
    /// Dump the time-frequency features of one window, one CSV per channel.
    Features(FeatureArgs),
    /// Amplitude spectrum distribution per channel and bin.
    Spectrum(SpectrumArgs),
    /// Dump the seasonal filter of a checkpoint.
    Weights(WeightArgs),
    /// Print channel statistics, optionally writing a normalized cache.
    DataInspect(InspectArgs),
    /// Parameter counts per block.
    ModelDescribe(DescribeArgs),
    /// Generate a synthetic cosine task as paired windows.
    Synth(SynthArgs),
}

/// Options shared by everything that reads a dataset and builds a model.
/// Every long name doubles as a manifest key.
#[derive(Args, Debug, Clone, Default, Serialize)]
struct RunOpts {
    /// key=value file with the same keys as these flags; flags win.
    #[arg(long)]
    #[serde(skip)]
    manifest: Option<PathBuf>,
    /// CSV series, or paired windows written by `synth`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated value columns (default: all).
    #[arg(long)]
    columns: Option<String>,
    /// Keep only the first N rows of the series.
    #[arg(long)]
    rows: Option<usize>,
    /// Dataset preset supplying block sizes, lr, batch and split.
    #[arg(long)]
    preset: Option<String>,
    /// fbm-l, fbm-nl, fbm-np or fbm-s.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long = "T")]
    #[serde(rename = "T")]
    t: Option<usize>,
    #[arg(long = "L")]
    #[serde(rename = "L")]
    l: Option<usize>,
    /// `ratio` or `months`.
    #[arg(long)]
    split: Option<String>,
    /// Train/val/test fractions for the ratio split, e.g. 0.65,0.15,0.2.
    #[arg(long)]
    ratios: Option<String>,
    /// Samples per hour for the month split.
    #[arg(long)]
    per_hour: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Trend backbone: linear, mlp or transformer.
    #[arg(long)]
    trend: Option<String>,
    #[arg(long)]
    patches: Option<usize>,
    #[arg(long)]
    h1: Option<usize>,
    #[arg(long)]
    h2: Option<usize>,
    #[arg(long)]
    h3: Option<usize>,
    /// Attention stacks.
    #[arg(long)]
    stacks: Option<usize>,
    #[arg(long)]
    c1: Option<usize>,
    #[arg(long)]
    c2: Option<usize>,
    /// Comma-separated scales, e.g. d0,d1.
    #[arg(long)]
    scales: Option<String>,
    /// relu or identity (fbm-nl).
    #[arg(long)]
    activation: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    no_centralize: bool,
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    no_interaction: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    run: RunOpts,
    /// Output directory.
    #[arg(long, default_value = "run")]
    out: PathBuf,
    /// Also write test-split predictions.
    #[arg(long)]
    predictions: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    run: RunOpts,
    #[arg(long)]
    checkpoint: PathBuf,
    /// train, val or test.
    #[arg(long = "on", default_value = "test")]
    on: String,
    /// Write predictions CSV here.
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FeatureArgs {
    #[command(flatten)]
    run: RunOpts,
    /// First step (or window index for paired data).
    #[arg(long, default_value_t = 0)]
    start: usize,
    #[arg(long, default_value = "features")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    #[command(flatten)]
    run: RunOpts,
    /// Step between summarized windows (default T).
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long, default_value = "spectrum.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct WeightArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "seasonal_weights.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct InspectArgs {
    #[command(flatten)]
    run: RunOpts,
    /// Write the train-normalized series to this container file.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DescribeArgs {
    #[command(flatten)]
    run: RunOpts,
    /// Describe a saved model instead.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Channel count when no preset or data gives it.
    #[arg(long = "D")]
    d: Option<usize>,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// 1: shifted start of cycle; 2: changed series length.
    #[arg(long = "case", default_value_t = 1)]
    case: u8,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "synth.csv")]
    out: PathBuf,
}

/// Usage problem detected after option merging.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(f) = cause.downcast_ref::<FbmError>() {
            return match f.class() {
                ErrorClass::Config => 1,
                ErrorClass::Data => 2,
                ErrorClass::Numeric => 3,
            };
        }
        if cause.is::<UsageError>() || cause.is::<clap::Error>() {
            return 1;
        }
        if cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return 2;
        }
    }
    1
}

/// Reads `key=value` lines and turns them into `--key value` arguments.
fn manifest_args(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("manifest line {} is not key=value: '{line}'", i + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k == "manifest" {
            return Err(usage("manifests cannot include other manifests"));
        }
        match v {
            "true" => out.push(format!("--{k}")),
            "false" => {}
            _ => {
                out.push(format!("--{k}"));
                out.push(v.to_string());
            }
        }
    }
    Ok(out)
}

/// Parses the command line, splicing manifest entries in before the
/// explicit flags so that flags take precedence.
fn parse_cli() -> std::result::Result<Cli, clap::Error> {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::try_parse_from(&argv)?;
    let manifest = match &cli.cmd {
        Cmd::Train(a) => a.run.manifest.clone(),
        Cmd::Eval(a) => a.run.manifest.clone(),
        Cmd::Features(a) => a.run.manifest.clone(),
        Cmd::Spectrum(a) => a.run.manifest.clone(),
        Cmd::DataInspect(a) => a.run.manifest.clone(),
        Cmd::ModelDescribe(a) => a.run.manifest.clone(),
        _ => None,
    };
    let Some(path) = manifest else { return Ok(cli) };
    let extra = manifest_args(&path).map_err(|e| Cli::command().error(clap::error::ErrorKind::InvalidValue, e))?;
    let sub = argv
        .iter()
        .position(|a| {
            ["train", "eval", "features", "spectrum", "data-inspect", "model-describe"].contains(&a.as_str())
        })
        .expect("subcommand present");
    let mut merged: Vec<String> = argv[..=sub].to_vec();
    merged.extend(extra);
    merged.extend(argv[sub + 1..].iter().cloned());
    Cli::try_parse_from(merged)
}

fn main() -> ExitCode {
    let cli = match parse_cli() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let sub = cli.cmd.name();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<UsageError>()) {
                let mut cmd = Cli::command();
                let text = match cmd.find_subcommand_mut(sub) {
                    Some(c) => c.clone().bin_name(format!("fbm {sub}")).render_usage(),
                    None => cmd.render_usage(),
                };
                eprintln!("\n{text}\n\nFor more information, try 'fbm {sub} --help'.");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::Train(_) => "train",
            Cmd::Eval(_) => "eval",
            Cmd::Features(_) => "features",
            Cmd::Spectrum(_) => "spectrum",
            Cmd::Weights(_) => "weights",
            Cmd::DataInspect(_) => "data-inspect",
            Cmd::ModelDescribe(_) => "model-describe",
            Cmd::Synth(_) => "synth",
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let threads = cli.threads.max(1);
    match cli.cmd {
        Cmd::Train(a) => cmd_train(a, threads),
        Cmd::Eval(a) => cmd_eval(a, threads),
        Cmd::Features(a) => cmd_features(a),
        Cmd::Spectrum(a) => cmd_spectrum(a),
        Cmd::Weights(a) => cmd_weights(a),
        Cmd::DataInspect(a) => cmd_inspect(a),
        Cmd::ModelDescribe(a) => cmd_describe(a),
        Cmd::Synth(a) => cmd_synth(a),
    }
}

const DEFAULT_T: usize = 336;
const DEFAULT_L: usize = 96;

impl RunOpts {
    fn preset(&self) -> Result<Option<&'static Preset>> {
        Ok(match &self.preset {
            Some(p) => Some(preset(p)?),
            None => None,
        })
    }

    fn t(&self) -> Result<usize> {
        let t = self.t.unwrap_or(DEFAULT_T);
        check_len(t)?;
        Ok(t)
    }

    fn horizon(&self) -> Result<usize> {
        let l = self.l.unwrap_or(DEFAULT_L);
        if l == 0 {
            return Err(usage("--L must be positive"));
        }
        Ok(l)
    }

    fn data_path(&self) -> Result<&Path> {
        self.data.as_deref().ok_or_else(|| usage("missing required option --data"))
    }

    fn split_spec(&self) -> Result<SplitSpec> {
        let base = self.preset()?.map(|p| p.split);
        let mode = self.split.as_deref();
        let ratios = || -> Result<SplitSpec> {
            let r = self.ratios.as_deref().unwrap_or("0.65,0.15,0.2");
            let v: Vec<f64> = r
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| usage(format!("--ratios '{r}': {e}")))?;
            if v.len() != 3 {
                return Err(usage(format!("--ratios needs three values, got '{r}'")));
            }
            Ok(SplitSpec::Ratio { train: v[0], val: v[1], test: v[2] })
        };
        Ok(match mode {
            Some("ratio") => ratios()?,
            Some("months") => SplitSpec::EttMonths {
                per_hour: self.per_hour.or(match base {
                    Some(SplitSpec::EttMonths { per_hour }) => Some(per_hour),
                    _ => None,
                }).unwrap_or(1),
            },
            Some(other) => return Err(usage(format!("unknown --split '{other}' (ratio or months)"))),
            None => match base {
                Some(SplitSpec::EttMonths { per_hour }) => SplitSpec::EttMonths {
                    per_hour: self.per_hour.unwrap_or(per_hour),
                },
                Some(s) if self.ratios.is_none() => s,
                _ => ratios()?,
            },
        })
    }

    fn columns(&self) -> Option<Vec<String>> {
        self.columns
            .as_ref()
            .map(|c| c.split(',').map(|s| s.trim().to_string()).collect())
    }

    fn trend_config(&self, base: TrendConfig) -> Result<TrendConfig> {
        let mut t = base;
        if let Some(b) = &self.trend {
            t.backbone = b.parse()?;
        }
        if let Some(p) = self.patches {
            t.patches = p;
        }
        if let Some(h) = self.h1 {
            t.h1 = h;
        }
        if let Some(h) = self.h2 {
            t.h2 = h;
        }
        if let Some(k) = self.stacks {
            t.stacks = k;
        }
        if let Some(s) = &self.scales {
            t.scales = s.split(',').map(str::parse).collect::<fbm_core::Result<Vec<Scale>>>()?;
        }
        if self.no_centralize {
            t.centralize = false;
        }
        if t.backbone == Backbone::Transformer && t.stacks == 0 {
            t.stacks = 3;
        }
        Ok(t)
    }

    fn model_spec(&self, d: usize) -> Result<ModelSpec> {
        let (t, l) = (self.t()?, self.horizon()?);
        let p = self.preset()?;
        let variant: Variant = self.variant.as_deref().unwrap_or("fbm-l").parse()?;
        let spec = match variant {
            Variant::L => ModelSpec::linear(t, l, d),
            Variant::NL => {
                let activation = match self.activation.as_deref().unwrap_or("relu") {
                    "relu" => Activation::Relu,
                    "identity" => Activation::Identity,
                    o => return Err(usage(format!("unknown --activation '{o}' (relu or identity)"))),
                };
                let def = NlConfig::default();
                ModelSpec::nonlinear(t, l, d, NlConfig {
                    h1: self.h1.unwrap_or(def.h1),
                    h2: self.h2.unwrap_or(def.h2),
                    activation,
                })
            }
            Variant::NP => ModelSpec::patched(t, l, d, self.trend_config(default_np_trend())?),
            Variant::S => {
                let base_trend = match p {
                    Some(p) => p.trend(),
                    None => TrendConfig {
                        backbone: Backbone::Mlp,
                        centralize: true,
                        patches: 14,
                        h1: 256,
                        h2: 1440,
                        stacks: 0,
                        scales: vec![Scale::D0],
                    },
                };
                let trend = self.trend_config(base_trend)?;
                let base_int = match p {
                    Some(p) => p.interaction_config(t, l),
                    None => Some(InteractionConfig { c1: 24.min(t), c2: l, h3: 512, stacks: 3 }),
                };
                let interaction = if self.no_interaction {
                    None
                } else {
                    base_int.map(|mut ic| {
                        ic.c1 = self.c1.unwrap_or(ic.c1);
                        ic.c2 = self.c2.unwrap_or(ic.c2);
                        ic.h3 = self.h3.unwrap_or(ic.h3);
                        ic.stacks = self.stacks.unwrap_or(ic.stacks);
                        ic
                    })
                };
                ModelSpec::full(t, l, d, trend, interaction)
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    fn train_config(&self, threads: usize) -> Result<TrainConfig> {
        let p = self.preset()?;
        let def = TrainConfig::default();
        let cfg = TrainConfig {
            epochs: self.epochs.unwrap_or(def.epochs),
            patience: self.patience.unwrap_or(def.patience),
            lr: self.lr.or(p.map(|p| p.lr)).unwrap_or(def.lr),
            batch_size: self.batch.or(p.map(|p| p.batch)).unwrap_or(def.batch_size),
            seed: self.seed.unwrap_or(def.seed),
            threads,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Resolved options as `key=value` lines; feeding them back through
    /// `--manifest` reproduces the run.
    fn to_manifest(&self) -> Result<String> {
        let v = serde_json::to_value(self)?;
        let mut out = String::new();
        if let serde_json::Value::Object(m) = v {
            for (k, v) in m {
                let s = match v {
                    serde_json::Value::Null => continue,
                    serde_json::Value::String(s) => s,
                    other => other.to_string(),
                };
                out += &format!("{}={s}\n", k.replace('_', "-"));
            }
        }
        Ok(out)
    }

    /// Fills every defaulted field so the manifest is complete.
    fn resolved(&self, threads: usize) -> Result<RunOpts> {
        let mut r = self.clone();
        let cfg = self.train_config(threads)?;
        r.t = Some(self.t()?);
        r.l = Some(self.horizon()?);
        r.variant = Some(self.variant.clone().unwrap_or_else(|| "fbm-l".into()));
        r.lr = Some(cfg.lr);
        r.batch = Some(cfg.batch_size);
        r.epochs = Some(cfg.epochs);
        r.patience = Some(cfg.patience);
        r.seed = Some(cfg.seed);
        r.data = r.data.map(|p| std::fs::canonicalize(&p).unwrap_or(p));
        Ok(r)
    }
}

/// Loaded data split into train/val/test window sources.
enum Loaded {
    Series { prepared: Prepared, t: usize, l: usize },
    Paired { train: PairedWindows, val: PairedWindows, test: PairedWindows },
}

impl Loaded {
    fn channels(&self) -> usize {
        match self {
            Loaded::Series { prepared, .. } => prepared.data.channels(),
            Loaded::Paired { train, .. } => train.channels(),
        }
    }

    fn with_split<R>(&self, which: SplitName, f: impl FnOnce(&(dyn WindowSource + Sync)) -> Result<R>) -> Result<R> {
        match self {
            Loaded::Series { prepared, t, l } => f(&prepared.windows(which, *t, *l)?),
            Loaded::Paired { train, val, test } => f(match which {
                SplitName::Train => train,
                SplitName::Val => val,
                SplitName::Test => test,
            }),
        }
    }
}

fn is_pairs_file(path: &Path) -> Result<bool> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().next().is_some_and(|h| h.trim() == "window_id,part,step,value"))
}

fn load_series(opts: &RunOpts) -> Result<Dataset> {
    let path = opts.data_path()?;
    let cols = opts.columns();
    let mut ds = load_csv(path, cols.as_deref()).with_context(|| format!("loading {}", path.display()))?;
    if let Some(n) = opts.rows {
        ds.truncate(n);
    }
    Ok(ds)
}

fn load(opts: &RunOpts, t: usize, l: usize) -> Result<Loaded> {
    let path = opts.data_path()?;
    if is_pairs_file(path)? {
        let p = read_pairs(path)?;
        if p.lookback() != t || p.horizon() != l {
            return Err(FbmError::Dimension(format!(
                "paired windows have T={} L={}, model wants T={t} L={l}",
                p.lookback(),
                p.horizon()
            ))
            .into());
        }
        let n = p.len();
        let (b1, b2, _) = opts.split_spec().and_then(|s| match s {
            SplitSpec::Ratio { .. } => Ok(s.boundaries(n)?),
            SplitSpec::EttMonths { .. } => Err(usage("paired windows only support the ratio split")),
        })?;
        if b1 == 0 || b2 == b1 || b2 == n {
            return Err(FbmError::Data(format!("{n} paired windows are too few to split")).into());
        }
        return Ok(Loaded::Paired {
            train: p.slice(0..b1),
            val: p.slice(b1..b2),
            test: p.slice(b2..n),
        });
    }
    let ds = load_series(opts)?;
    let prepared = Prepared::new(&ds, &opts.split_spec()?, t, l)?;
    Ok(Loaded::Series { prepared, t, l })
}

fn cmd_train(a: TrainArgs, threads: usize) -> Result<()> {
    let opts = &a.run;
    let (t, l) = (opts.t()?, opts.horizon()?);
    opts.data_path()?;
    let cfg = opts.train_config(threads)?;
    let data = load(opts, t, l)?;
    let spec = opts.model_spec(data.channels())?;
    let mut model = ForecastModel::init(&spec, cfg.seed)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let resolved = opts.resolved(threads)?;
    let manifest = resolved.to_manifest()?;
    std::fs::write(a.out.join("manifest.txt"), &manifest)?;

    let mut report = data.with_split(SplitName::Train, |tr| {
        data.with_split(SplitName::Val, |va| {
            data.with_split(SplitName::Test, |te| {
                Ok(train(&mut model, tr, va, te, &cfg, |e| {
                    println!(
                        "epoch {:>3}  train_mse {:.6}  val_mse {:.6}  val_mae {:.6}",
                        e.epoch, e.train_mse, e.val_mse, e.val_mae
                    );
                })?)
            })
        })
    })?;
    let manifest_map: BTreeMap<String, String> = manifest
        .lines()
        .filter_map(|l| l.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect();
    report.config = serde_json::json!({
        "manifest": manifest_map,
        "train": cfg,
        "model": spec,
    });
    model.save(&a.out.join("model.ckpt"))?;
    let json = serde_json::to_string_pretty(&report)?;
    std::fs::write(a.out.join("report.json"), &json)?;
    if a.predictions {
        data.with_split(SplitName::Test, |te| Ok(write_predictions(&model, te, &a.out.join("predictions.csv"))?))?;
    }
    println!("{json}");
    Ok(())
}

fn cmd_eval(a: EvalArgs, threads: usize) -> Result<()> {
    let model = ForecastModel::load(&a.checkpoint, None)?;
    let spec = model.spec().clone();
    for (flag, want, have) in [("T", a.run.t, spec.t), ("L", a.run.l, spec.l)] {
        if let Some(w) = want {
            if w != have {
                return Err(FbmError::SpecMismatch {
                    expected: format!("{flag}={w}"),
                    found: format!("{flag}={have}"),
                }
                .into());
            }
        }
    }
    let which: SplitName = a.on.parse()?;
    let data = load(&a.run, spec.t, spec.l)?;
    if data.channels() != spec.d {
        return Err(FbmError::SpecMismatch {
            expected: format!("data with D={}", data.channels()),
            found: format!("model with D={}", spec.d),
        }
        .into());
    }
    let m = data.with_split(which, |src| Ok(evaluate(&model, src, threads)?))?;
    if let Some(p) = &a.predictions {
        data.with_split(which, |src| Ok(write_predictions(&model, src, p)?))?;
    }
    println!("{}", serde_json::to_string(&m)?);
    Ok(())
}

fn cmd_features(a: FeatureArgs) -> Result<()> {
    let t = a.run.t()?;
    let path = a.run.data_path()?;
    let windows: Vec<Vec<f64>> = if is_pairs_file(path)? {
        let p = read_pairs(path)?;
        if a.start >= p.len() {
            bail!(FbmError::Data(format!("window {} of {}", a.start, p.len())));
        }
        let b = p.batch(&[a.start]);
        b.x.data().chunks(p.lookback()).map(<[f64]>::to_vec).collect()
    } else {
        let ds = load_series(&a.run)?;
        if a.start + t > ds.len() {
            bail!(FbmError::Data(format!(
                "window {}..{} exceeds the {}-step series",
                a.start,
                a.start + t,
                ds.len()
            )));
        }
        (0..ds.channels()).map(|d| ds.channel(d)[a.start..a.start + t].to_vec()).collect()
    };
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for (d, x) in windows.iter().enumerate() {
        let g = window_features(x)?;
        let p = a.out.join(format!("features_c{d}.csv"));
        write_features(&g, &p)?;
        println!("{}", p.display());
    }
    Ok(())
}

fn cmd_spectrum(a: SpectrumArgs) -> Result<()> {
    let t = a.run.t()?;
    let path = a.run.data_path()?;
    let rows = if is_pairs_file(path)? {
        spectrum_distribution(&read_pairs(path)?, a.stride.unwrap_or(1))?
    } else {
        let ds = load_series(&a.run)?;
        let w = SeriesWindows::new(&ds, 0..ds.len(), t, 0)?;
        spectrum_distribution(&w, a.stride.unwrap_or(t))?
    };
    write_spectrum(&rows, &a.out)?;
    println!("{}", a.out.display());
    Ok(())
}

fn cmd_weights(a: WeightArgs) -> Result<()> {
    let model = ForecastModel::load(&a.checkpoint, None)?;
    let w = model
        .seasonal_weights()
        .ok_or_else(|| FbmError::Config(format!("{} has no seasonal block", model.spec().variant)))?;
    write_seasonal_weights(w, &a.out)?;
    println!("{}", a.out.display());
    Ok(())
}

fn cmd_inspect(a: InspectArgs) -> Result<()> {
    let ds = load_series(&a.run)?;
    let summary = fbm_core::data::summarize(&ds);
    let out = serde_json::json!({
        "name": ds.name,
        "D": ds.channels(),
        "N": ds.len(),
        "channels": summary,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    if let Some(p) = &a.cache {
        let prepared = Prepared::new(&ds, &a.run.split_spec()?, a.run.t()?, a.run.horizon()?)?;
        prepared.save_cache(p)?;
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn cmd_describe(a: DescribeArgs) -> Result<()> {
    let model = match &a.checkpoint {
        Some(p) => ForecastModel::load(p, None)?,
        None => {
            let d = match (a.d, a.run.preset()?, &a.run.data) {
                (Some(d), _, _) => d,
                (None, Some(p), _) => p.channels,
                (None, None, Some(_)) => load_series(&a.run)?.channels(),
                _ => return Err(usage("model-describe needs --D, --preset, --data or --checkpoint")),
            };
            ForecastModel::init(&a.run.model_spec(d)?, a.run.seed.unwrap_or(1))?
        }
    };
    let blocks = model.describe();
    let total = model.num_params();
    if a.json {
        let out = serde_json::json!({ "spec": model.spec(), "blocks": blocks, "total": total });
        println!("{}", serde_json::to_string_pretty(&out)?);
    } else {
        println!("{}", model.spec());
        for b in &blocks {
            println!("{:<12} {:>12}  ({:.2}M)", b.block, b.params, b.params as f64 / 1e6);
        }
        println!("{:<12} {:>12}  ({:.2}M)", "total", total, total as f64 / 1e6);
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let p = match a.case {
        1 => Case1::default().generate(a.n, a.seed),
        2 => Case2::default().generate(a.n, a.seed),
        c => return Err(usage(format!("unknown --case {c} (1 or 2)"))),
    };
    write_pairs(&p, &a.out)?;
    println!("{}", a.out.display());
    Ok(())
}
