//! JSON run configuration.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "state": {"werner": 1.0},
//!   "scatter_probability": 0.5,
//!   "trials": 100000,
//!   "seed": 7,
//!   "bins": 40,
//!   "sign_pattern": [1, 1, -1, 1],
//!   "trial_log": false,
//!   "dcs": {
//!     "channel_1": {"plus": [{"weight": 0.7, "mean_rad": 0.35, "sigma_rad": 0.12}], "minus": [...]},
//!     "channel_2": {"plus": [...], "minus": [...]}
//!   }
//! }
//! ```
//!
//! Every field except `schema_version` is optional. `state` may instead be
//! `{"explicit": {"label": "...", "matrix": [[[re, im], ...], ...]}}` and
//! `scatter_probability` may be a two-element array `[q_I, q_II]`.
//! Range checks run during parsing so errors carry a line and column.

use serde::{Deserialize, Serialize};

use crate::dcs::DcsPair;
use crate::error::{Error, Result};
use crate::experiment::{ExperimentConfig, DEFAULT_BINS, DEFAULT_SCATTER_PROBABILITY, DEFAULT_TRIALS};
use crate::quantum::{BipartiteState, SignPattern};

pub const SCHEMA_VERSION: u32 = 1;

/// A real number in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct UnitInterval(f64);

impl UnitInterval {
    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for UnitInterval {
    type Error = String;
    fn try_from(v: f64) -> std::result::Result<Self, String> {
        if (0.0..=1.0).contains(&v) {
            Ok(Self(v))
        } else {
            Err(format!("value {v} outside [0, 1]"))
        }
    }
}

impl From<UnitInterval> for f64 {
    fn from(v: UnitInterval) -> f64 {
        v.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSpec {
    Werner(UnitInterval),
    Explicit(Box<BipartiteState>),
}

impl StateSpec {
    pub fn build(&self) -> Result<BipartiteState> {
        match self {
            StateSpec::Werner(p) => BipartiteState::werner(p.get()),
            StateSpec::Explicit(s) => Ok((**s).clone()),
        }
    }
}

impl Default for StateSpec {
    fn default() -> Self {
        StateSpec::Werner(UnitInterval(1.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScatterSpec {
    Both(UnitInterval),
    PerChannel([UnitInterval; 2]),
}

impl ScatterSpec {
    pub fn probabilities(&self) -> [f64; 2] {
        match self {
            ScatterSpec::Both(q) => [q.get(); 2],
            ScatterSpec::PerChannel([a, b]) => [a.get(), b.get()],
        }
    }
}

impl Default for ScatterSpec {
    fn default() -> Self {
        ScatterSpec::Both(UnitInterval(DEFAULT_SCATTER_PROBABILITY))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcsConfig {
    pub channel_1: DcsPair,
    pub channel_2: DcsPair,
}

impl Default for DcsConfig {
    fn default() -> Self {
        Self {
            channel_1: DcsPair::default_channel_one(),
            channel_2: DcsPair::default_channel_two(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct TrialCount(u64);

impl TryFrom<u64> for TrialCount {
    type Error = String;
    fn try_from(v: u64) -> std::result::Result<Self, String> {
        if v >= 1 {
            Ok(Self(v))
        } else {
            Err("trial count must be at least 1".into())
        }
    }
}

impl From<TrialCount> for u64 {
    fn from(v: TrialCount) -> u64 {
        v.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct BinCount(usize);

impl TryFrom<usize> for BinCount {
    type Error = String;
    fn try_from(v: usize) -> std::result::Result<Self, String> {
        if v >= 1 {
            Ok(Self(v))
        } else {
            Err("bin count must be at least 1".into())
        }
    }
}

impl From<BinCount> for usize {
    fn from(v: BinCount) -> usize {
        v.0
    }
}

fn default_trials() -> TrialCount {
    TrialCount(DEFAULT_TRIALS)
}

fn default_bins() -> BinCount {
    BinCount(DEFAULT_BINS)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub state: StateSpec,
    #[serde(default)]
    pub scatter_probability: ScatterSpec,
    #[serde(default = "default_trials")]
    pub trials: TrialCount,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_bins")]
    pub bins: BinCount,
    #[serde(default)]
    pub sign_pattern: SignPattern,
    #[serde(default)]
    pub trial_log: bool,
    #[serde(default)]
    pub dcs: DcsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            state: StateSpec::default(),
            scatter_probability: ScatterSpec::default(),
            trials: default_trials(),
            seed: None,
            bins: default_bins(),
            sign_pattern: SignPattern::default(),
            trial_log: false,
            dcs: DcsConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses a config document. A run manifest is accepted too: its
    /// `resolved_config` member is used.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let config: RunConfig = if value.get("resolved_config").is_some() {
            #[derive(Deserialize)]
            struct Manifest {
                resolved_config: RunConfig,
            }
            // Re-parse from text so that errors keep their positions.
            serde_json::from_str::<Manifest>(text)
                .map_err(|e| Error::Config(e.to_string()))?
                .resolved_config
        } else {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        };
        if config.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                config.schema_version
            )));
        }
        Ok(config)
    }

    pub fn set_trials(&mut self, trials: u64) -> Result<()> {
        self.trials = TrialCount::try_from(trials).map_err(Error::Config)?;
        Ok(())
    }

    pub fn trials(&self) -> u64 {
        self.trials.0
    }

    pub fn bins(&self) -> usize {
        self.bins.0
    }

    /// Materialises the simulation config; the seed must already be resolved.
    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let config = ExperimentConfig {
            state: self.state.build()?,
            scatter_probability: self.scatter_probability.probabilities(),
            trials: self.trials.0,
            seed: self.seed.unwrap_or(0),
            channel_one: self.dcs.channel_1.clone(),
            channel_two: self.dcs.channel_2.clone(),
            bins: self.bins.0,
        };
        config.validate()?;
        Ok(config)
    }
}
