//! The FBM-L, FBM-NL, FBM-NP and FBM-S forecasters.
//!
//! Every variant standardizes each input window per channel, expands it
//! into time-frequency features (DC bin dropped), maps the features to the
//! horizon in standardized units and undoes the standardization.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::blocks::{Backbone, InteractionBlock, InteractionConfig, Scale, SeasonalBlock, TrendBlock, TrendConfig};
use crate::checkpoint::{parse_header, read_container, sha256_hex, write_container};
use crate::error::{FbmError, Result};
use crate::fourier::{analysis_matrix, check_len, standardize_window};
use crate::graph::{Graph, Var};
use crate::nn::linear;
use crate::optim::{ParamId, ParamStore};
use crate::spectral::{patch_projection, ScaleBasis};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "fbm-l")]
    L,
    #[serde(rename = "fbm-nl")]
    NL,
    #[serde(rename = "fbm-np")]
    NP,
    #[serde(rename = "fbm-s")]
    S,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::L => "fbm-l",
            Variant::NL => "fbm-nl",
            Variant::NP => "fbm-np",
            Variant::S => "fbm-s",
        })
    }
}

impl FromStr for Variant {
    type Err = FbmError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().trim_start_matches("fbm-") {
            "l" => Ok(Variant::L),
            "nl" => Ok(Variant::NL),
            "np" => Ok(Variant::NP),
            "s" => Ok(Variant::S),
            _ => Err(FbmError::config(format!(
                "unknown variant '{s}' (expected fbm-l, fbm-nl, fbm-np or fbm-s)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NlConfig {
    pub h1: usize,
    pub h2: usize,
    pub activation: Activation,
}

impl Default for NlConfig {
    fn default() -> Self {
        NlConfig {
            h1: 1440,
            h2: 1440,
            activation: Activation::Relu,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: Variant,
    pub t: usize,
    pub l: usize,
    pub d: usize,
    pub nl: Option<NlConfig>,
    pub trend: Option<TrendConfig>,
    pub seasonal: bool,
    pub interaction: Option<InteractionConfig>,
}

/// Patched transformer trend used by FBM-NP unless configured otherwise.
pub fn default_np_trend() -> TrendConfig {
    TrendConfig {
        backbone: Backbone::Transformer,
        centralize: true,
        patches: 14,
        h1: 256,
        h2: 256,
        stacks: 3,
        scales: vec![Scale::D0],
    }
}

impl ModelSpec {
    pub fn linear(t: usize, l: usize, d: usize) -> Self {
        ModelSpec {
            variant: Variant::L,
            t,
            l,
            d,
            nl: None,
            trend: None,
            seasonal: false,
            interaction: None,
        }
    }

    pub fn nonlinear(t: usize, l: usize, d: usize, nl: NlConfig) -> Self {
        ModelSpec {
            variant: Variant::NL,
            nl: Some(nl),
            ..Self::linear(t, l, d)
        }
    }

    pub fn patched(t: usize, l: usize, d: usize, trend: TrendConfig) -> Self {
        ModelSpec {
            variant: Variant::NP,
            trend: Some(trend),
            ..Self::linear(t, l, d)
        }
    }

    pub fn full(t: usize, l: usize, d: usize, trend: TrendConfig, interaction: Option<InteractionConfig>) -> Self {
        ModelSpec {
            variant: Variant::S,
            trend: Some(trend),
            seasonal: true,
            interaction,
            ..Self::linear(t, l, d)
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_len(self.t)?;
        if self.l == 0 || self.d == 0 {
            return Err(FbmError::config("horizon L and channel count D must be positive"));
        }
        let flags = (self.nl.is_some(), self.trend.is_some(), self.seasonal, self.interaction.is_some());
        let ok = match self.variant {
            Variant::L => flags == (false, false, false, false),
            Variant::NL => flags == (true, false, false, false),
            Variant::NP => flags == (false, true, false, false),
            Variant::S => !flags.0 && flags.1 && flags.2,
        };
        if !ok {
            return Err(FbmError::config(format!(
                "block settings are inconsistent with variant {}",
                self.variant
            )));
        }
        if let Some(nl) = &self.nl {
            if nl.h1 == 0 || nl.h2 == 0 {
                return Err(FbmError::config("hidden widths must be positive"));
            }
        }
        if let Some(tr) = &self.trend {
            tr.validate(self.t)?;
        }
        if let Some(ic) = &self.interaction {
            ic.validate(self.t, self.l)?;
        }
        Ok(())
    }

    /// Canonical `key=value` serialization.
    pub fn header(&self) -> String {
        let mut s = format!("variant={}\nT={}\nL={}\nD={}\n", self.variant, self.t, self.l, self.d);
        if let Some(nl) = &self.nl {
            let act = match nl.activation {
                Activation::Relu => "relu",
                Activation::Identity => "identity",
            };
            s += &format!("nl.h1={}\nnl.h2={}\nnl.activation={act}\n", nl.h1, nl.h2);
        }
        if let Some(tr) = &self.trend {
            let scales: Vec<String> = tr.scales.iter().map(|x| x.to_string()).collect();
            s += &format!(
                "trend.backbone={}\ntrend.centralize={}\ntrend.patches={}\ntrend.h1={}\ntrend.h2={}\ntrend.stacks={}\ntrend.scales={}\n",
                tr.backbone,
                tr.centralize,
                tr.patches,
                tr.h1,
                tr.h2,
                tr.stacks,
                scales.join(",")
            );
        }
        s += &format!("seasonal={}\n", self.seasonal);
        if let Some(ic) = &self.interaction {
            s += &format!(
                "interaction.c1={}\ninteraction.c2={}\ninteraction.h3={}\ninteraction.stacks={}\n",
                ic.c1, ic.c2, ic.h3, ic.stacks
            );
        }
        s
    }

    pub fn hash(&self) -> String {
        sha256_hex(&self.header())
    }

    pub fn from_header(header: &str) -> Result<Self> {
        let kv = parse_header(header)?;
        let get = |k: &str| kv.iter().find(|(a, _)| a == k).map(|(_, v)| v.as_str());
        let req = |k: &str| get(k).ok_or_else(|| FbmError::Format(format!("header is missing '{k}'")));
        let num = |k: &str| -> Result<usize> {
            req(k)?
                .parse()
                .map_err(|e| FbmError::Format(format!("header '{k}': {e}")))
        };
        let flag = |k: &str| -> Result<bool> {
            req(k)?
                .parse()
                .map_err(|e| FbmError::Format(format!("header '{k}': {e}")))
        };
        let nl = if get("nl.h1").is_some() {
            Some(NlConfig {
                h1: num("nl.h1")?,
                h2: num("nl.h2")?,
                activation: match req("nl.activation")? {
                    "relu" => Activation::Relu,
                    "identity" => Activation::Identity,
                    o => return Err(FbmError::Format(format!("unknown activation '{o}'"))),
                },
            })
        } else {
            None
        };
        let trend = if get("trend.backbone").is_some() {
            Some(TrendConfig {
                backbone: req("trend.backbone")?.parse()?,
                centralize: flag("trend.centralize")?,
                patches: num("trend.patches")?,
                h1: num("trend.h1")?,
                h2: num("trend.h2")?,
                stacks: num("trend.stacks")?,
                scales: req("trend.scales")?
                    .split(',')
                    .map(str::parse)
                    .collect::<Result<Vec<_>>>()?,
            })
        } else {
            None
        };
        let interaction = if get("interaction.c1").is_some() {
            Some(InteractionConfig {
                c1: num("interaction.c1")?,
                c2: num("interaction.c2")?,
                h3: num("interaction.h3")?,
                stacks: num("interaction.stacks")?,
            })
        } else {
            None
        };
        Ok(ModelSpec {
            variant: req("variant")?.parse()?,
            t: num("T")?,
            l: num("L")?,
            d: num("D")?,
            nl,
            trend,
            seasonal: flag("seasonal")?,
            interaction,
        })
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} T={} L={} D={}", self.variant, self.t, self.l, self.d)?;
        if let Some(nl) = &self.nl {
            write!(f, " h1={} h2={} act={:?}", nl.h1, nl.h2, nl.activation)?;
        }
        if let Some(tr) = &self.trend {
            let scales: Vec<String> = tr.scales.iter().map(|x| x.to_string()).collect();
            write!(
                f,
                " trend={}(P={} h1={} h2={} K={} centralize={} scales={})",
                tr.backbone,
                tr.patches,
                tr.h1,
                tr.h2,
                tr.stacks,
                tr.centralize,
                scales.join("+")
            )?;
        }
        if let Some(ic) = &self.interaction {
            write!(f, " interaction(C1={} C2={} h3={} K={})", ic.c1, ic.c2, ic.h3, ic.stacks)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum Core {
    Linear { w: ParamId },
    Nonlinear { w1: ParamId, w2: ParamId, w3: ParamId, act: Activation },
    Patched { trend: TrendBlock },
    Full { seasonal: SeasonalBlock, trend: TrendBlock, interaction: Option<InteractionBlock> },
}

/// Per-window, per-channel mean and standard deviation, `[B·D]` each.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Block outputs of FBM-S in standardized units, each `[B × D × L]`.
#[derive(Clone, Debug)]
pub struct Components {
    pub seasonal: Tensor,
    pub trend: Tensor,
    pub interaction: Option<Tensor>,
    /// Sum of the blocks as assembled by the forward pass.
    pub core: Tensor,
    pub stats: InstanceStats,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockCount {
    pub block: String,
    pub params: usize,
}

#[derive(Clone, Debug)]
pub struct ForecastModel {
    spec: ModelSpec,
    store: ParamStore,
    phi: Arc<Tensor>,
    full_basis: Arc<ScaleBasis>,
    core: Core,
}

impl ForecastModel {
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let (t, l, d) = (spec.t, spec.l, spec.d);
        let k = t / 2;
        let mut rng = Pcg64::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let core = match spec.variant {
            Variant::L => Core::Linear {
                w: linear(&mut store, &mut rng, "linear.w", t * k, l),
            },
            Variant::NL => {
                let nl = spec.nl.as_ref().expect("validated");
                Core::Nonlinear {
                    w1: linear(&mut store, &mut rng, "mlp.w1", t * k, nl.h1),
                    w2: linear(&mut store, &mut rng, "mlp.w2", nl.h1, nl.h2),
                    w3: linear(&mut store, &mut rng, "mlp.w3", nl.h2, l),
                    act: nl.activation,
                }
            }
            Variant::NP => Core::Patched {
                trend: TrendBlock::new(&mut store, &mut rng, "trend", t, l, d, spec.trend.as_ref().expect("validated"))?,
            },
            Variant::S => {
                let seasonal = SeasonalBlock::new(&mut store, "seasonal", t, l)?;
                let trend = TrendBlock::new(&mut store, &mut rng, "trend", t, l, d, spec.trend.as_ref().expect("validated"))?;
                let interaction = match &spec.interaction {
                    Some(ic) => Some(InteractionBlock::new(&mut store, &mut rng, "interaction", t, l, d, ic)?),
                    None => None,
                };
                Core::Full { seasonal, trend, interaction }
            }
        };
        Ok(ForecastModel {
            spec: spec.clone(),
            store,
            phi: Arc::new(analysis_matrix(t)?),
            full_basis: Arc::new(ScaleBasis::new(t, 1)?),
            core,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn num_params(&self) -> usize {
        self.store.num_scalars()
    }

    /// Parameter counts grouped by block (prefix before the first dot).
    pub fn describe(&self) -> Vec<BlockCount> {
        let mut out: Vec<BlockCount> = Vec::new();
        for (_, p) in self.store.iter() {
            let block = p.name.split('.').next().unwrap_or("").to_string();
            let n = p.value().numel();
            match out.iter_mut().find(|b| b.block == block) {
                Some(b) => b.params += n,
                None => out.push(BlockCount { block, params: n }),
            }
        }
        out
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize)> {
        let s = &self.spec;
        if x.rank() != 3 || x.shape()[1] != s.d || x.shape()[2] != s.t {
            return Err(FbmError::dim(format!(
                "input must be [B × {} × {}], got {:?}",
                s.d,
                s.t,
                x.shape()
            )));
        }
        Ok((x.shape()[0], x.shape()[0] * s.d))
    }

    /// Standardized spectrum rows `[B·D × T]` and the instance statistics.
    pub fn spectrum_rows(&self, x: &Tensor) -> Result<(Tensor, InstanceStats)> {
        let (_, r) = self.check_input(x)?;
        let t = self.spec.t;
        let mut xs = Vec::with_capacity(r * t);
        let mut mean = Vec::with_capacity(r);
        let mut std = Vec::with_capacity(r);
        for row in x.data().chunks(t) {
            let (z, m, s) = standardize_window(row);
            xs.extend(z);
            mean.push(m);
            std.push(s);
        }
        let h = Tensor::new(&[r, t], xs)?.matmul(&self.phi)?;
        Ok((h, InstanceStats { mean, std }))
    }

    fn core_forward(&self, g: &mut Graph, st: &ParamStore, h: Var) -> Result<Var> {
        let r = g.shape(h)[0];
        let l = self.spec.l;
        match &self.core {
            Core::Linear { w } => {
                let wv = g.param(st, *w);
                let y = patch_projection(g, h, wv, &self.full_basis, 1, false)?;
                g.reshape(y, &[r, l])
            }
            Core::Nonlinear { w1, w2, w3, act } => {
                let act = |g: &mut Graph, v: Var| match act {
                    Activation::Relu => g.relu(v),
                    Activation::Identity => Ok(v),
                };
                let w1v = g.param(st, *w1);
                let y = patch_projection(g, h, w1v, &self.full_basis, 1, false)?;
                let h1 = g.shape(y)[2];
                let y = g.reshape(y, &[r, h1])?;
                let y = act(g, y)?;
                let w2v = g.param(st, *w2);
                let y = g.matmul(y, w2v)?;
                let y = act(g, y)?;
                let w3v = g.param(st, *w3);
                g.matmul(y, w3v)
            }
            Core::Patched { trend } => trend.forward(g, st, h),
            Core::Full { seasonal, trend, interaction } => {
                let s = seasonal.forward(g, st, h)?;
                let tr = trend.forward(g, st, h)?;
                let mut y = g.add(s, tr)?;
                if let Some(ib) = interaction {
                    let i = ib.forward(g, st, h)?;
                    y = g.add(y, i)?;
                }
                Ok(y)
            }
        }
    }

    /// Builds the forward pass on `g`; returns predictions `[B × D × L]`.
    pub fn forward_graph(&self, g: &mut Graph, x: &Tensor) -> Result<Var> {
        self.forward_graph_with(g, &self.store, x)
    }

    /// Like [`forward_graph`](Self::forward_graph) with parameters taken from `store`.
    pub fn forward_graph_with(&self, g: &mut Graph, store: &ParamStore, x: &Tensor) -> Result<Var> {
        let (b, r) = self.check_input(x)?;
        let (h, stats) = self.spectrum_rows(x)?;
        let hv = g.constant(h);
        let z = self.core_forward(g, store, hv)?;
        let sd = g.constant(Tensor::new(&[r, 1], stats.std)?);
        let mu = g.constant(Tensor::new(&[r, 1], stats.mean)?);
        let y = g.mul(z, sd)?;
        let y = g.add(y, mu)?;
        g.reshape(y, &[b, self.spec.d, self.spec.l])
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let y = self.forward_graph(&mut g, x)?;
        Ok(g.value(y).clone())
    }

    /// Individual block outputs of an FBM-S model.
    pub fn forward_components(&self, x: &Tensor) -> Result<Components> {
        let Core::Full { seasonal, trend, interaction } = &self.core else {
            return Err(FbmError::config("block components exist only for fbm-s"));
        };
        let (b, _) = self.check_input(x)?;
        let (h, stats) = self.spectrum_rows(x)?;
        let shape = [b, self.spec.d, self.spec.l];
        let mut g = Graph::new();
        let hv = g.constant(h);
        let st = &self.store;
        let s = seasonal.forward(&mut g, st, hv)?;
        let tr = trend.forward(&mut g, st, hv)?;
        let i = match interaction {
            Some(ib) => Some(ib.forward(&mut g, st, hv)?),
            None => None,
        };
        let core = self.core_forward(&mut g, st, hv)?;
        Ok(Components {
            seasonal: g.value(s).reshape(&shape)?,
            trend: g.value(tr).reshape(&shape)?,
            interaction: i.map(|v| g.value(v).reshape(&shape)).transpose()?,
            core: g.value(core).reshape(&shape)?,
            stats,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = format!("{}spec_hash={}\n", self.spec.header(), self.spec.hash());
        let names: Vec<(String, Arc<Tensor>)> = self
            .store
            .iter()
            .map(|(id, p)| (p.name.clone(), self.store.value_arc(id)))
            .collect();
        write_container(path, &header, names.iter().map(|(n, t)| (n.as_str(), t.as_ref())))
    }

    /// Loads a checkpoint, optionally requiring a specific spec.
    pub fn load(path: &Path, expected: Option<&ModelSpec>) -> Result<Self> {
        let (header, tensors) = read_container(path)?;
        let spec = ModelSpec::from_header(&header)?;
        let stored_hash = parse_header(&header)?
            .into_iter()
            .find(|(k, _)| k == "spec_hash")
            .map(|(_, v)| v)
            .ok_or_else(|| FbmError::Format("header is missing 'spec_hash'".into()))?;
        if stored_hash != spec.hash() {
            return Err(FbmError::Format("spec hash does not match the stored spec".into()));
        }
        if let Some(want) = expected {
            if want.hash() != spec.hash() {
                return Err(FbmError::SpecMismatch {
                    expected: want.to_string(),
                    found: spec.to_string(),
                });
            }
        }
        let mut model = ForecastModel::init(&spec, 0)?;
        if tensors.len() != model.store.len() {
            return Err(FbmError::Format(format!(
                "checkpoint holds {} tensors, model has {} parameters",
                tensors.len(),
                model.store.len()
            )));
        }
        let ids: Vec<ParamId> = model.store.ids().collect();
        for (id, (name, t)) in ids.into_iter().zip(tensors) {
            if model.store.name(id) != name {
                return Err(FbmError::Format(format!(
                    "expected parameter '{}', found '{name}'",
                    model.store.name(id)
                )));
            }
            model.store.set_value(id, t).map_err(|e| FbmError::Format(e.to_string()))?;
        }
        Ok(model)
    }

    /// Seasonal filter weights `[T × T/2]`, if the model has one.
    pub fn seasonal_weights(&self) -> Option<&Tensor> {
        match &self.core {
            Core::Full { seasonal, .. } => Some(self.store.value(seasonal.w)),
            _ => None,
        }
    }

    pub fn param_ids_with_prefix(&self, prefix: &str) -> Vec<ParamId> {
        self.store
            .iter()
            .filter(|(_, p)| p.name.starts_with(prefix))
            .map(|(id, _)| id)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_params;
    use rand::Rng;

    fn tiny_trend() -> TrendConfig {
        TrendConfig {
            backbone: Backbone::Mlp,
            centralize: true,
            patches: 2,
            h1: 4,
            h2: 5,
            stacks: 1,
            scales: vec![Scale::D0, Scale::D1],
        }
    }

    fn tiny_specs() -> Vec<ModelSpec> {
        let (t, l, d) = (16, 4, 3);
        vec![
            ModelSpec::linear(t, l, d),
            ModelSpec::nonlinear(t, l, d, NlConfig { h1: 6, h2: 5, activation: Activation::Relu }),
            ModelSpec::patched(
                t,
                l,
                d,
                TrendConfig { backbone: Backbone::Transformer, patches: 4, h1: 4, h2: 6, stacks: 2, ..tiny_trend() },
            ),
            ModelSpec::full(t, l, d, tiny_trend(), Some(InteractionConfig { c1: 3, c2: 2, h3: 4, stacks: 1 })),
        ]
    }

    fn rand_x(rng: &mut Pcg64, b: usize, d: usize, t: usize) -> Tensor {
        Tensor::from_fn(&[b, d, t], |_| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn header_roundtrip() {
        for s in tiny_specs() {
            assert_eq!(ModelSpec::from_header(&s.header()).unwrap(), s);
        }
    }

    #[test]
    fn inconsistent_spec_rejected() {
        let mut s = ModelSpec::linear(16, 4, 1);
        s.seasonal = true;
        assert!(matches!(s.validate(), Err(FbmError::Config(_))));
        assert!(ModelSpec::linear(15, 4, 1).validate().is_err());
    }

    #[test]
    fn constant_window_predicts_the_constant() {
        for s in tiny_specs() {
            let m = ForecastModel::init(&s, 3).unwrap();
            let x = Tensor::full(&[2, 3, 16], 4.25);
            let y = m.forward(&x).unwrap();
            assert!(y.data().iter().all(|&v| v == 4.25), "{}", s.variant);
        }
    }

    #[test]
    fn same_seed_same_parameters() {
        for s in tiny_specs() {
            let a = ForecastModel::init(&s, 9).unwrap();
            let b = ForecastModel::init(&s, 9).unwrap();
            for ((_, p), (_, q)) in a.store.iter().zip(b.store.iter()) {
                assert_eq!(p.value(), q.value());
            }
        }
    }

    #[test]
    fn linear_parameter_count() {
        let m = ForecastModel::init(&ModelSpec::linear(336, 96, 1), 0).unwrap();
        assert_eq!(m.num_params(), 56448 * 96);
    }

    #[test]
    fn save_load_roundtrip_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = Pcg64::seed_from_u64(2);
        let x = rand_x(&mut rng, 2, 3, 16);
        for s in tiny_specs() {
            let p = dir.path().join("m.ckpt");
            let m = ForecastModel::init(&s, 4).unwrap();
            m.save(&p).unwrap();
            let back = ForecastModel::load(&p, Some(&s)).unwrap();
            assert_eq!(m.forward(&x).unwrap(), back.forward(&x).unwrap());
            let other = ModelSpec::linear(16, 4, 5);
            match ForecastModel::load(&p, Some(&other)) {
                Err(FbmError::SpecMismatch { expected, found }) => {
                    assert!(expected.contains("D=5") && found.contains("D=3"), "{expected} / {found}");
                }
                other => panic!("expected spec mismatch, got {other:?}"),
            }
        }
    }

    #[test]
    fn zero_weight_full_model_predicts_window_mean() {
        let s = &tiny_specs()[3];
        let mut m = ForecastModel::init(s, 5).unwrap();
        let ids: Vec<ParamId> = m.store.ids().collect();
        for id in ids {
            let name = m.store.name(id).to_string();
            if !name.ends_with("gamma") && !name.ends_with("beta") {
                let z = Tensor::zeros(m.store.value(id).shape());
                m.store.set_value(id, z).unwrap();
            }
        }
        let mut rng = Pcg64::seed_from_u64(6);
        let x = rand_x(&mut rng, 2, 3, 16);
        let y = m.forward(&x).unwrap();
        for (row, out) in x.data().chunks(16).zip(y.data().chunks(4)) {
            let mu = row.iter().sum::<f64>() / 16.0;
            assert!(out.iter().all(|&v| v == mu));
        }
    }

    #[test]
    fn full_model_is_the_sum_of_its_blocks() {
        let s = &tiny_specs()[3];
        let mut m = ForecastModel::init(s, 5).unwrap();
        let mut rng = Pcg64::seed_from_u64(7);
        let sw = m.seasonal_weights().unwrap().shape().to_vec();
        let id = m.store.find("seasonal.w").unwrap();
        m.store.set_value(id, Tensor::from_fn(&sw, |_| rng.random_range(-0.1..0.1))).unwrap();
        let x = rand_x(&mut rng, 2, 3, 16);
        let c = m.forward_components(&x).unwrap();
        let sum = c.seasonal.zip_map(&c.trend, |a, b| a + b).unwrap();
        let sum = sum.zip_map(c.interaction.as_ref().unwrap(), |a, b| a + b).unwrap();
        assert_eq!(sum, c.core);
        let y = m.forward(&x).unwrap();
        for (i, v) in y.data().iter().enumerate() {
            let r = i / 4;
            let want = c.core.data()[i] * c.stats.std[r] + c.stats.mean[r];
            assert_eq!(*v, want);
        }
    }

    #[test]
    fn identity_nonlinear_reduces_to_linear() {
        let (t, l, d) = (8, 3, 2);
        let lin = ForecastModel::init(&ModelSpec::linear(t, l, d), 1).unwrap();
        let nl_spec = ModelSpec::nonlinear(t, l, d, NlConfig { h1: 32, h2: 32, activation: Activation::Identity });
        let mut nl = ForecastModel::init(&nl_spec, 2).unwrap();
        let w = lin.store.value(lin.store.find("linear.w").unwrap()).clone();
        for (name, v) in [("mlp.w1", Tensor::eye(32)), ("mlp.w2", Tensor::eye(32)), ("mlp.w3", w)] {
            let id = nl.store.find(name).unwrap();
            nl.store.set_value(id, v).unwrap();
        }
        let mut rng = Pcg64::seed_from_u64(3);
        let x = rand_x(&mut rng, 4, d, t);
        let a = lin.forward(&x).unwrap();
        let b = nl.forward(&x).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn shift_and_scale_equivariance() {
        let mut rng = Pcg64::seed_from_u64(11);
        for s in tiny_specs() {
            let m = ForecastModel::init(&s, 2).unwrap();
            let x = rand_x(&mut rng, 2, 3, 16);
            let y = m.forward(&x).unwrap();
            let shifted = m.forward(&x.map(|v| v + 7.5)).unwrap();
            assert!(shifted.max_abs_diff(&y.map(|v| v + 7.5)) < 1e-9, "{}", s.variant);
            let scaled = m.forward(&x.map(|v| v * 3.0)).unwrap();
            for (row, (a, b)) in x.data().chunks(16).zip(y.data().chunks(4).zip(scaled.data().chunks(4))) {
                let mu = row.iter().sum::<f64>() / 16.0;
                for (p, q) in a.iter().zip(b) {
                    assert!((3.0 * (p - mu) - (q - 3.0 * mu)).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn model_gradients() {
        let mut rng = Pcg64::seed_from_u64(8);
        let x = rand_x(&mut rng, 2, 3, 16);
        let yt = rand_x(&mut rng, 2, 3, 4);
        for s in tiny_specs() {
            let mut m = ForecastModel::init(&s, 1).unwrap();
            // at β = 0 the output does not depend on γ, so move off that point
            let ids: Vec<ParamId> = m.store.ids().collect();
            for &id in &ids {
                let name = m.store.name(id).to_string();
                let sh = m.store.value(id).shape().to_vec();
                let t = if name == "seasonal.w" || name.ends_with("beta") {
                    Tensor::from_fn(&sh, |_| rng.random_range(-0.3..0.3))
                } else if name.ends_with("gamma") {
                    Tensor::from_fn(&sh, |_| rng.random_range(0.5..1.5))
                } else {
                    continue;
                };
                m.store.set_value(id, t).unwrap();
            }
            let mut store = m.store.clone();
            let err = check_params(&mut store, &ids, Some(8), |g, st| {
                let y = m.forward_graph_with(g, st, &x)?;
                let t = g.constant(yt.clone());
                let d = g.sub(y, t)?;
                let sq = g.square(d)?;
                g.mean_all(sq)
            })
            .unwrap();
            assert!(err < 1e-4, "{}: {err}", s.variant);
        }
    }
}
