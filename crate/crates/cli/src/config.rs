//! Run configuration: a JSON file, overridden by flags, validated up front.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use diskrul::dataset::{SplitSpec, WindowSpec, DEFAULT_TIMESTEPS};
use diskrul::featsel::GbtConfig;
use diskrul::preprocess::{FeatureSet, Labeling};
use diskrul::seqnet::{EncoderDecoderConfig, TrainConfig, DEFAULT_DENSE_WIDTHS, SWEEP_CONFIGS};

use crate::UsageError;

/// Where the feature list comes from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSource {
    /// The fifteen default attributes.
    #[default]
    Default,
    /// Every attribute observed in the extracted records.
    Observed,
    /// A `features.json` written by `select-features`.
    File(PathBuf),
}

impl FeatureSource {
    pub fn parse(s: &str) -> Self {
        match s {
            "default" => FeatureSource::Default,
            "observed" => FeatureSource::Observed,
            path => FeatureSource::File(PathBuf::from(path)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct YearRange {
    pub first: i32,
    pub last: i32,
}

impl Default for YearRange {
    fn default() -> Self {
        YearRange {
            first: 2013,
            last: 2022,
        }
    }
}

/// Encoder-decoder shape; input width and window size come from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    pub units_per_layer: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub dense_widths: Vec<usize>,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        let (u, e, d) = SWEEP_CONFIGS[0];
        NetworkSpec {
            units_per_layer: u,
            encoder_layers: e,
            decoder_layers: d,
            dense_widths: DEFAULT_DENSE_WIDTHS.to_vec(),
        }
    }
}

impl NetworkSpec {
    pub fn model_config(&self, input_features: usize, timesteps: usize) -> EncoderDecoderConfig {
        let mut cfg = EncoderDecoderConfig::new(
            self.units_per_layer,
            self.encoder_layers,
            self.decoder_layers,
            input_features,
            timesteps,
        );
        cfg.dense_widths = self.dense_widths.clone();
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    /// Rows of the configuration table to train.
    pub configs: Vec<usize>,
    pub window_sizes: Vec<usize>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            configs: (1..=SWEEP_CONFIGS.len()).collect(),
            window_sizes: vec![5, 10, 15, 20, 25, 30],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub root: Option<PathBuf>,
    pub model: Option<String>,
    pub years: YearRange,
    pub features: FeatureSource,
    pub timesteps: usize,
    pub stride: usize,
    pub horizon: usize,
    /// Admit healthy drives with RUL fixed at this many days.
    pub cap_rul: Option<f64>,
    pub split: SplitSpec,
    pub gbt: GbtConfig,
    pub network: NetworkSpec,
    pub train: TrainConfig,
    pub sweep: SweepSettings,
    /// Feeds the split, boosting, fold and training seeds.
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            root: None,
            model: None,
            years: YearRange::default(),
            features: FeatureSource::Default,
            timesteps: DEFAULT_TIMESTEPS,
            stride: 1,
            horizon: 0,
            cap_rul: None,
            split: SplitSpec::default(),
            gbt: GbtConfig::default(),
            network: NetworkSpec::default(),
            train: TrainConfig::default(),
            sweep: SweepSettings::default(),
            seed: 0,
            out: None,
        }
    }
}

impl RunConfig {
    /// Reads a config file. A `run.json` from an earlier run is accepted too;
    /// its `config` entry is used.
    pub fn load(path: &Path) -> Result<Self, UsageError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;
        let value = match value {
            serde_json::Value::Object(mut m) if m.contains_key("command") && m.contains_key("config") => {
                m.remove("config").unwrap()
            }
            v => v,
        };
        serde_json::from_value(value).map_err(|e| UsageError(format!("config {}: {e}", path.display())))
    }

    /// Pushes the top-level seed into every seeded component.
    pub fn resolve_seeds(&mut self) {
        self.split.seed = self.seed;
        self.train.seed = self.seed;
    }

    pub fn validate(&self) -> Result<(), UsageError> {
        let usage = |e: diskrul::Error| UsageError(e.to_string());
        if self.years.first > self.years.last {
            return Err(UsageError(format!(
                "years: first {} is after last {}",
                self.years.first, self.years.last
            )));
        }
        self.window().validate().map_err(usage)?;
        self.split.validate().map_err(usage)?;
        self.gbt.validate().map_err(usage)?;
        self.train.validate().map_err(usage)?;
        if let Some(cap) = self.cap_rul {
            if !(cap.is_finite() && cap > 0.0) {
                return Err(UsageError(format!("cap_rul must be positive, got {cap}")));
            }
        }
        self.network.model_config(1, self.timesteps).validate().map_err(usage)?;
        if self.sweep.configs.is_empty() || self.sweep.configs.iter().any(|&c| c == 0 || c > SWEEP_CONFIGS.len()) {
            return Err(UsageError(format!(
                "sweep.configs must name rows 1..={}",
                SWEEP_CONFIGS.len()
            )));
        }
        if self.sweep.window_sizes.is_empty() || self.sweep.window_sizes.contains(&0) {
            return Err(UsageError("sweep.window_sizes must be positive".into()));
        }
        if self.folds() < 2 {
            return Err(UsageError("split.k_folds must be at least 2".into()));
        }
        Ok(())
    }

    pub fn window(&self) -> WindowSpec {
        WindowSpec {
            timesteps: self.timesteps,
            stride: self.stride,
            horizon: self.horizon,
        }
    }

    /// Fold count for the window sweep.
    pub fn folds(&self) -> usize {
        self.split.k_folds.unwrap_or(5)
    }

    pub fn labeling(&self) -> Labeling {
        self.cap_rul.map_or(Labeling::FailedOnly, Labeling::Capped)
    }

    pub fn years(&self) -> std::ops::RangeInclusive<i32> {
        self.years.first..=self.years.last
    }

    pub fn require_root(&self) -> Result<&Path, UsageError> {
        self.root
            .as_deref()
            .ok_or_else(|| UsageError("missing --root (or `root` in the config file)".into()))
    }

    pub fn require_model(&self) -> Result<&str, UsageError> {
        self.model
            .as_deref()
            .ok_or_else(|| UsageError("missing --model (or `model` in the config file)".into()))
    }

    pub fn require_out(&self) -> Result<&Path, UsageError> {
        self.out
            .as_deref()
            .ok_or_else(|| UsageError("missing --out (or `out` in the config file)".into()))
    }

    /// Feature list for sources that do not need the data.
    pub fn fixed_features(&self) -> diskrul::Result<Option<FeatureSet>> {
        match &self.features {
            FeatureSource::Default => Ok(Some(FeatureSet::default())),
            FeatureSource::Observed => Ok(None),
            FeatureSource::File(p) => FeatureSet::load(p).map(Some),
        }
    }
}
