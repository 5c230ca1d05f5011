//! Synthetic fleets with known failure days.
//!
//! Each drive runs for a lognormal number of days and fails on its last
//! record. Informative attributes ramp monotonically toward failure as a
//! function of the days remaining; the rest are stationary noise. Lifetimes
//! and ramp shapes are chosen for testability, not to model real drives.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use chrono::{Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{write_csv, DriveDayRecord, RawDriveSeries};
use crate::preprocess::DEFAULT_ATTRIBUTES;

/// Attribute numbers used after the default set is exhausted.
const EXTRA_ATTRIBUTES: [u16; 24] = [
    2, 3, 8, 10, 11, 12, 183, 184, 187, 189, 191, 195, 196, 200, 220, 222, 223, 224, 225, 226,
    240, 250, 251, 252,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_drives: usize,
    pub mean_lifetime_days: f64,
    pub n_features: usize,
    pub n_informative: usize,
    /// Noise standard deviation as a fraction of each attribute's scale.
    pub noise_sigma: f64,
    /// Probability that any single reading is absent.
    pub missing_rate: f64,
    pub seed: u64,
    /// Seed for which attributes are informative and their magnitudes.
    /// Fleets sharing it share a degradation law. Defaults to `seed`.
    pub layout_seed: Option<u64>,
    pub model: String,
    /// Earliest possible first day; drives start up to 180 days later.
    pub start_date: NaiveDate,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_drives: 100,
            mean_lifetime_days: 120.0,
            n_features: 15,
            n_informative: 3,
            noise_sigma: 0.05,
            missing_rate: 0.0,
            seed: 0,
            layout_seed: None,
            model: "SYNTH-0001".into(),
            start_date: NaiveDate::from_ymd_opt(2019, 1, 1).expect("valid date"),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let max_features = DEFAULT_ATTRIBUTES.len() + EXTRA_ATTRIBUTES.len();
        if self.n_features == 0 || self.n_features > max_features {
            return Err(Error::domain(format!("synth: n_features must be in 1..={max_features}")));
        }
        if self.n_informative > self.n_features {
            return Err(Error::domain("synth: n_informative exceeds n_features"));
        }
        if !(self.mean_lifetime_days.is_finite() && self.mean_lifetime_days > 0.0) {
            return Err(Error::domain("synth: mean_lifetime_days must be positive"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::domain("synth: noise_sigma must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::domain("synth: missing_rate must be in [0, 1)"));
        }
        if self.model.trim().is_empty() || self.model.contains(',') {
            return Err(Error::domain("synth: model must be non-empty and comma-free"));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: SynthSpec =
            serde_json::from_str(&text).map_err(|e| Error::schema(format!("{}: {e}", path.display())))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// How one attribute evolves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AttributeLaw {
    /// `scale · u` with `u = max(0, 1 − rul / horizon)`.
    Linear { scale: f64 },
    /// `scale · u²`.
    Convex { scale: f64 },
    /// Per-drive level plus daily noise, independent of RUL.
    Noise { scale: f64 },
}

impl AttributeLaw {
    pub fn scale(&self) -> f64 {
        match *self {
            AttributeLaw::Linear { scale } | AttributeLaw::Convex { scale } | AttributeLaw::Noise { scale } => scale,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthFleet {
    pub drives: Vec<RawDriveSeries>,
    /// Informative attribute numbers, ascending.
    pub informative: Vec<u16>,
    /// Every generated attribute, ascending, with its law.
    pub laws: Vec<(u16, AttributeLaw)>,
    /// Days from each drive's first record to its failure record.
    pub lifetimes: Vec<u32>,
    /// RUL beyond which informative attributes stay at zero.
    pub horizon_days: f64,
}

impl SynthFleet {
    pub fn attributes(&self) -> Vec<u16> {
        self.laws.iter().map(|(a, _)| *a).collect()
    }

    /// Records ordered by date, then serial, like the daily source files.
    pub fn records(&self) -> Vec<&DriveDayRecord> {
        let mut all: Vec<&DriveDayRecord> = self.drives.iter().flat_map(|d| &d.records).collect();
        all.sort_by(|a, b| (a.date, &a.serial).cmp(&(b.date, &b.serial)));
        all
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        write_csv(BufWriter::new(file), self.records())
    }
}

fn layout(spec: &SynthSpec) -> Vec<(u16, AttributeLaw)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.layout_seed.unwrap_or(spec.seed));
    let pool: Vec<u16> = DEFAULT_ATTRIBUTES.iter().chain(&EXTRA_ATTRIBUTES).copied().collect();
    let mut attrs = pool[..spec.n_features].to_vec();
    attrs.shuffle(&mut rng);
    let mut laws: Vec<(u16, AttributeLaw)> = attrs
        .into_iter()
        .enumerate()
        .map(|(k, a)| {
            let scale = 10f64.powf(rng.random_range(1.0..14.0)).round();
            let law = if k >= spec.n_informative {
                AttributeLaw::Noise { scale }
            } else if rng.random_bool(0.5) {
                AttributeLaw::Linear { scale }
            } else {
                AttributeLaw::Convex { scale }
            };
            (a, law)
        })
        .collect();
    laws.sort_by_key(|(a, _)| *a);
    laws
}

fn lifetime_distribution(mean: f64) -> LogNormal<f64> {
    // Moment-matched: mean `mean`, standard deviation 0.3·mean.
    let s2 = (1.0 + 0.09f64).ln();
    LogNormal::new(mean.ln() - s2 / 2.0, s2.sqrt()).expect("valid lognormal")
}

fn drive(
    spec: &SynthSpec,
    laws: &[(u16, AttributeLaw)],
    horizon: f64,
    index: usize,
) -> (RawDriveSeries, u32) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64 + 1);
    let lifetime = (lifetime_distribution(spec.mean_lifetime_days).sample(&mut rng).round() as u32).max(1);
    let start = spec.start_date + Days::new(rng.random_range(0..=180));
    let serial = format!("SY{:08X}{index:06}", spec.seed as u32);
    let capacity = 4_000_787_030_016u64;
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let levels: Vec<f64> = laws.iter().map(|_| rng.random_range(0.2..1.0)).collect();

    let records = (0..=lifetime)
        .map(|day| {
            let rul = f64::from(lifetime - day);
            let u = (1.0 - rul / horizon).max(0.0);
            let mut smart = std::collections::BTreeMap::new();
            for ((attr, law), level) in laws.iter().zip(&levels) {
                let noise = spec.noise_sigma * law.scale() * unit.sample(&mut rng);
                let value = match *law {
                    AttributeLaw::Linear { scale } => scale * u + noise,
                    AttributeLaw::Convex { scale } => scale * u * u + noise,
                    AttributeLaw::Noise { scale } => scale * level + noise,
                };
                let deleted = spec.missing_rate > 0.0 && rng.random_bool(spec.missing_rate);
                if !deleted {
                    smart.insert(*attr, value);
                }
            }
            DriveDayRecord {
                date: start + Days::new(u64::from(day)),
                serial: serial.clone(),
                model: spec.model.clone(),
                capacity_bytes: Some(capacity),
                failure: day == lifetime,
                smart,
                smart_normalized: Default::default(),
            }
        })
        .collect();
    (
        RawDriveSeries {
            serial,
            model: spec.model.clone(),
            records,
        },
        lifetime,
    )
}

/// Generates a fleet; identical specs give identical fleets.
pub fn generate(spec: &SynthSpec) -> Result<SynthFleet> {
    spec.validate()?;
    let laws = layout(spec);
    // Wide enough that almost every drive starts below the saturation point.
    let horizon = 2.2 * spec.mean_lifetime_days;
    let (drives, lifetimes): (Vec<_>, Vec<_>) = (0..spec.n_drives)
        .into_par_iter()
        .map(|i| drive(spec, &laws, horizon, i))
        .unzip();
    let informative = laws
        .iter()
        .filter(|(_, l)| !matches!(l, AttributeLaw::Noise { .. }))
        .map(|(a, _)| *a)
        .collect();
    Ok(SynthFleet {
        drives,
        informative,
        laws,
        lifetimes,
        horizon_days: horizon,
    })
}
