//! Per-dataset hyperparameters for the full model.

use crate::blocks::{Backbone, InteractionConfig, Scale, TrendConfig};
use crate::data::SplitSpec;
use crate::error::{FbmError, Result};
use crate::models::ModelSpec;

#[derive(Clone, Debug, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    /// Usual file name of the public CSV.
    pub file: &'static str,
    pub channels: usize,
    pub split: SplitSpec,
    pub backbone: Backbone,
    pub interaction: bool,
    pub patched: bool,
    pub scales: &'static [Scale],
    pub h1: usize,
    pub h2: usize,
    pub h3: usize,
    pub stacks: usize,
    /// `None` means the whole look-back window.
    pub c1: Option<usize>,
    /// `None` means the whole horizon.
    pub c2: Option<usize>,
    pub lr: f64,
    pub batch: usize,
}

const RATIO: SplitSpec = SplitSpec::Ratio {
    train: 0.65,
    val: 0.15,
    test: 0.2,
};

const fn pems(name: &'static str, file: &'static str, channels: usize) -> Preset {
    Preset {
        name,
        file,
        channels,
        split: RATIO,
        backbone: Backbone::Mlp,
        interaction: true,
        patched: true,
        scales: &[Scale::D1],
        h1: 256,
        h2: 1440,
        h3: 512,
        stacks: 3,
        c1: Some(24),
        c2: None,
        lr: 5e-4,
        batch: 64,
    }
}

const fn linear(name: &'static str, file: &'static str, channels: usize, split: SplitSpec, lr: f64) -> Preset {
    Preset {
        name,
        file,
        channels,
        split,
        backbone: Backbone::Linear,
        interaction: false,
        patched: false,
        scales: &[Scale::D0],
        h1: 0,
        h2: 0,
        h3: 0,
        stacks: 0,
        c1: None,
        c2: None,
        lr,
        batch: 128,
    }
}

pub const PRESETS: [Preset; 12] = [
    pems("pems03", "PEMS03.csv", 358),
    pems("pems04", "PEMS04.csv", 307),
    pems("pems07", "PEMS07.csv", 883),
    pems("pems08", "PEMS08.csv", 170),
    Preset {
        name: "ecl",
        file: "electricity.csv",
        channels: 321,
        c2: Some(24),
        scales: &[Scale::D0],
        batch: 16,
        ..pems("", "", 0)
    },
    Preset {
        name: "traffic",
        file: "traffic.csv",
        channels: 862,
        backbone: Backbone::Transformer,
        scales: &[Scale::D0],
        h1: 128,
        h2: 128,
        stacks: 4,
        c1: None,
        lr: 1e-4,
        batch: 16,
        ..pems("", "", 0)
    },
    Preset {
        name: "wth",
        file: "weather.csv",
        channels: 21,
        scales: &[Scale::D0, Scale::D1],
        h3: 256,
        c1: Some(96),
        c2: Some(12),
        lr: 5e-5,
        batch: 128,
        ..pems("", "", 0)
    },
    Preset {
        name: "ettm1",
        file: "ETTm1.csv",
        channels: 7,
        split: SplitSpec::EttMonths { per_hour: 4 },
        scales: &[Scale::D0, Scale::D1, Scale::D2],
        h1: 128,
        h3: 128,
        c1: Some(48),
        c2: Some(48),
        lr: 4e-5,
        batch: 128,
        ..pems("", "", 0)
    },
    Preset {
        name: "ettm2",
        file: "ETTm2.csv",
        channels: 7,
        split: SplitSpec::EttMonths { per_hour: 4 },
        scales: &[Scale::D0],
        h1: 128,
        h3: 128,
        c1: Some(48),
        c2: Some(48),
        lr: 4e-5,
        batch: 128,
        ..pems("", "", 0)
    },
    linear("etth1", "ETTh1.csv", 7, SplitSpec::EttMonths { per_hour: 1 }, 2e-5),
    linear("etth2", "ETTh2.csv", 7, SplitSpec::EttMonths { per_hour: 1 }, 1e-5),
    linear("exchange", "exchange_rate.csv", 8, RATIO, 2e-5),
];

pub fn preset(name: &str) -> Result<&'static Preset> {
    let key = name.to_ascii_lowercase();
    PRESETS
        .iter()
        .find(|p| p.name == key || p.file.trim_end_matches(".csv").eq_ignore_ascii_case(name))
        .ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
            FbmError::config(format!("unknown preset '{name}' (known: {})", names.join(", ")))
        })
}

impl Preset {
    pub fn trend(&self) -> TrendConfig {
        TrendConfig {
            backbone: self.backbone,
            centralize: self.patched,
            patches: if self.patched { 14 } else { 1 },
            h1: self.h1,
            h2: self.h2,
            stacks: if self.backbone == Backbone::Transformer { self.stacks } else { 0 },
            scales: self.scales.to_vec(),
        }
    }

    pub fn interaction_config(&self, t: usize, horizon: usize) -> Option<InteractionConfig> {
        self.interaction.then(|| InteractionConfig {
            c1: self.c1.unwrap_or(t),
            c2: self.c2.unwrap_or(horizon).min(horizon),
            h3: self.h3,
            stacks: self.stacks,
        })
    }

    /// Full model for this dataset.
    pub fn model_spec(&self, t: usize, horizon: usize) -> ModelSpec {
        ModelSpec::full(t, horizon, self.channels, self.trend(), self.interaction_config(t, horizon))
    }
}
