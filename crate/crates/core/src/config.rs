//! Run configuration: TOML schema, validation and the shipped presets.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::baselines::{AbParams, GqlParams};
use crate::env::{AccessMode, RadioConfig, TauModel};
use crate::forecaster::ForecasterOptions;
use crate::profile::checked_pow;
use crate::strategy::{trials_through_period, ScheduleParams};

/// Outcome-space size above which `validate` warns.
pub const OUTCOME_WARN_CAP: usize = 1024;
/// Joint-profile count above which `validate` warns; also the SC search cap.
pub const PROFILE_WARN_CAP: usize = 4096;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("unknown preset `{0}` (known: k2m2, k4m4-ortho, k4m4-nonortho, forecaster-only)")]
    UnknownPreset(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl ConfigError {
    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid { field: field.into(), reason: reason.into() }
    }
}

/// Strategy of one player.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StrategySpec {
    /// Forecast-driven bandit strategy.
    Cb,
    /// The same with rewards forfeited on collision.
    Ncb,
    Gql(GqlParams),
    Ab(AbParams),
    Ur,
    /// Static oracle-optimal joint assignment.
    Sc,
}

impl StrategySpec {
    pub fn label(&self) -> &'static str {
        match self {
            StrategySpec::Cb => "CB",
            StrategySpec::Ncb => "NCB",
            StrategySpec::Gql(_) => "GQL",
            StrategySpec::Ab(_) => "AB",
            StrategySpec::Ur => "UR",
            StrategySpec::Sc => "SC",
        }
    }

    /// Parses a label (any case) with default hyperparameters.
    pub fn from_label(s: &str) -> Option<Self> {
        Some(match s.to_ascii_lowercase().as_str() {
            "cb" => StrategySpec::Cb,
            "ncb" => StrategySpec::Ncb,
            "gql" => StrategySpec::Gql(GqlParams::default()),
            "ab" => StrategySpec::Ab(AbParams::default()),
            "ur" => StrategySpec::Ur,
            "sc" => StrategySpec::Sc,
            _ => return None,
        })
    }
}

/// Run length, in trials or in whole schedule periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum Horizon {
    Trials(u64),
    /// `R` periods, i.e. `2^{R+1} − 2` trials.
    Periods(u32),
}

impl Horizon {
    pub fn trials(&self) -> u64 {
        match *self {
            Horizon::Trials(n) => n,
            Horizon::Periods(r) => trials_through_period(r),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    /// Monte Carlo draws per oracle cell.
    #[serde(default = "default_oracle_samples")]
    pub samples: usize,
    /// Oracle seed, independent of the run seed so that runs with different
    /// seeds are scored against the same table.
    #[serde(default = "default_oracle_seed")]
    pub seed: u64,
}

fn default_oracle_samples() -> usize {
    100_000
}

fn default_oracle_seed() -> u64 {
    0x0c0ffee
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { samples: default_oracle_samples(), seed: default_oracle_seed() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: String,
    /// Horizons at which metrics are evaluated; the final trial is always added.
    #[serde(default = "default_checkpoints")]
    pub checkpoints: Vec<u64>,
}

fn default_out_dir() -> String {
    "out".into()
}

fn default_checkpoints() -> Vec<u64> {
    vec![256, 1024, 4096, 16384, 65536, 100_000]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_out_dir(), checkpoints: default_checkpoints() }
    }
}

/// Synthetic outcome source for forecaster-only runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SyntheticSource {
    /// i.i.d. outcomes with the given law.
    Iid { law: Vec<f64> },
    /// Outcomes repeating the given cycle.
    Periodic { pattern: Vec<usize>, outcomes: usize },
}

impl SyntheticSource {
    pub fn outcomes(&self) -> usize {
        match self {
            SyntheticSource::Iid { law } => law.len(),
            SyntheticSource::Periodic { outcomes, .. } => *outcomes,
        }
    }
}

/// Everything that determines a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub seed: u64,
    pub horizon: Horizon,
    /// Channel model; required unless `synthetic` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radio: Option<RadioConfig>,
    /// One entry per player.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub players: Vec<StrategySpec>,
    #[serde(default)]
    pub schedule: ScheduleParams,
    #[serde(default)]
    pub forecaster: ForecasterOptions,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// When set, the run drives a single forecaster with this source instead
    /// of playing the game.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSource>,
}

impl SystemConfig {
    /// Parses TOML; errors name the offending field path.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::new(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.inner().message().to_string();
            // Name the missing field itself rather than its parent table.
            let field = match inner.strip_prefix("missing field `").and_then(|s| s.split('`').next()) {
                Some(f) if path == "." => f.to_string(),
                Some(f) => format!("{path}.{f}"),
                None => path,
            };
            ConfigError::invalid(field, inner)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn trials(&self) -> u64 {
        self.horizon.trials()
    }

    /// Checkpoints within the horizon, ascending and deduplicated, ending
    /// with the horizon itself.
    pub fn effective_checkpoints(&self) -> Vec<u64> {
        let n = self.trials();
        let mut c: Vec<u64> = self.output.checkpoints.iter().copied().filter(|&c| c >= 1 && c <= n).collect();
        c.push(n);
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.trials() == 0 {
            return Err(ConfigError::invalid("horizon", "must be at least one trial"));
        }
        if let Horizon::Periods(r) = self.horizon {
            if r == 0 || r > 40 {
                return Err(ConfigError::invalid("horizon.periods", format!("{r} is outside 1..=40")));
            }
        }
        if !(self.schedule.gamma > 0.0 && self.schedule.gamma < 1.0) {
            return Err(ConfigError::invalid("schedule.gamma", format!("{} is outside (0, 1)", self.schedule.gamma)));
        }
        if !(self.forecaster.carry >= 0.0 && self.forecaster.carry <= 1.0) {
            return Err(ConfigError::invalid("forecaster.carry", format!("{} is outside [0, 1]", self.forecaster.carry)));
        }
        if self.oracle.samples == 0 {
            return Err(ConfigError::invalid("oracle.samples", "must be positive"));
        }
        if let Some(src) = &self.synthetic {
            return validate_synthetic(src);
        }
        let radio = self.radio.as_ref().ok_or_else(|| ConfigError::invalid("radio", "required unless [synthetic] is set"))?;
        radio.validate().map_err(|e| match e {
            crate::env::EnvError::InvalidConfig { field, reason } => ConfigError::invalid(format!("radio.{field}"), reason),
            other => ConfigError::invalid("radio", other.to_string()),
        })?;
        if self.players.len() != radio.players {
            return Err(ConfigError::invalid("players", format!("{} strategies for {} players", self.players.len(), radio.players)));
        }
        if checked_pow(radio.channels, radio.players).is_none() {
            return Err(ConfigError::invalid("radio.players", "joint profile count overflows"));
        }
        for (i, s) in self.players.iter().enumerate() {
            let r = match s {
                StrategySpec::Gql(params) => params.validate(),
                StrategySpec::Ab(params) => params.validate(),
                _ => Ok(()),
            };
            r.map_err(|reason| ConfigError::invalid(format!("players[{i}]"), reason))?;
        }
        Ok(())
    }

    /// Copy with every player using `strategy`.
    pub fn with_strategy(&self, strategy: StrategySpec) -> Self {
        let mut c = self.clone();
        c.players = vec![strategy; c.players.len()];
        c
    }
}

fn validate_synthetic(src: &SyntheticSource) -> Result<(), ConfigError> {
    match src {
        SyntheticSource::Iid { law } => {
            if law.is_empty() || law.iter().any(|p| p.is_nan() || *p < 0.0) || (law.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(ConfigError::invalid("synthetic.law", "must be a probability vector"));
            }
        }
        SyntheticSource::Periodic { pattern, outcomes } => {
            if pattern.is_empty() || pattern.iter().any(|&d| d >= *outcomes) {
                return Err(ConfigError::invalid("synthetic.pattern", format!("must be a nonempty list of outcomes below {outcomes}")));
            }
        }
    }
    Ok(())
}

/// Names of the shipped presets.
pub const PRESETS: [&str; 4] = ["k2m2", "k4m4-ortho", "k4m4-nonortho", "forecaster-only"];

/// A shipped preset.
pub fn preset(name: &str) -> Result<SystemConfig, ConfigError> {
    let base = |radio: RadioConfig, trials: u64, checkpoints: Vec<u64>| SystemConfig {
        seed: 1,
        horizon: Horizon::Trials(trials),
        players: vec![StrategySpec::Cb; radio.players],
        radio: Some(radio),
        schedule: ScheduleParams::default(),
        forecaster: ForecasterOptions::default(),
        oracle: OracleConfig::default(),
        output: OutputConfig { dir: format!("out/{name}"), checkpoints },
        synthetic: None,
    };
    let cfg = match name {
        "k2m2" => {
            let radio = RadioConfig::symmetric(2, vec![0.9, 0.6], 1.0, 1.0, AccessMode::Orthogonal);
            base(radio, 1 << 14, vec![256, 1024, 4096, 16384])
        }
        "k4m4-ortho" => base(k4m4_radio(AccessMode::Orthogonal), 1 << 14, vec![256, 1024, 2048, 4096, 8192, 16384]),
        "k4m4-nonortho" => base(k4m4_radio(AccessMode::NonOrthogonal), 1 << 14, vec![256, 1024, 2048, 4096, 8192, 16384]),
        "forecaster-only" => SystemConfig {
            seed: 1,
            horizon: Horizon::Trials(1 << 16),
            radio: None,
            players: Vec::new(),
            schedule: ScheduleParams::default(),
            forecaster: ForecasterOptions::default(),
            oracle: OracleConfig::default(),
            output: OutputConfig { dir: "out/forecaster-only".into(), checkpoints: Vec::new() },
            synthetic: Some(SyntheticSource::Iid { law: vec![0.4, 0.3, 0.2, 0.1] }),
        },
        other => return Err(ConfigError::UnknownPreset(other.into())),
    };
    Ok(cfg)
}

/// Four links and four channels with distinct availabilities. Each link's
/// direct gain varies across channels so that players rank the channels
/// differently; cross gains are weak.
fn k4m4_radio(access: AccessMode) -> RadioConfig {
    let theta = vec![0.9, 0.8, 0.7, 0.6];
    let direct = [[4.0, 1.0, 1.0, 1.0], [1.0, 4.0, 1.0, 1.0], [1.0, 1.0, 4.0, 1.0], [1.0, 1.0, 1.0, 4.0]];
    let cross = 0.3;
    let mean_gain = (0..4)
        .map(|u| (0..4).map(|v| (0..4).map(|m| if u == v { direct[u][m] } else { cross }).collect()).collect())
        .collect();
    RadioConfig { players: 4, channels: 4, theta, tx_power_w: 1.0, noise_w: 1.0, mean_gain, access, tau_model: TauModel::EqualShare }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in PRESETS {
            preset(name).unwrap().validate().unwrap();
        }
        assert!(matches!(preset("nope"), Err(ConfigError::UnknownPreset(_))));
    }

    #[test]
    fn round_trip() {
        for name in PRESETS {
            let cfg = preset(name).unwrap();
            assert_eq!(SystemConfig::from_toml(&cfg.to_toml()).unwrap(), cfg, "{name}");
        }
    }

    #[test]
    fn missing_theta_names_field() {
        let mut text = preset("k2m2").unwrap().to_toml();
        let start = text.find("theta").unwrap();
        let end = start + text[start..].find('\n').unwrap() + 1;
        text.replace_range(start..end, "");
        match SystemConfig::from_toml(&text) {
            Err(ConfigError::Invalid { field, .. }) => assert_eq!(field, "radio.theta"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_probability_names_field() {
        let text = preset("k2m2").unwrap().to_toml().replace("theta = [0.9, 0.6]", "theta = [1.5, 0.6]");
        match SystemConfig::from_toml(&text) {
            Err(ConfigError::Invalid { field, .. }) => assert_eq!(field, "radio.theta"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn periods_horizon() {
        assert_eq!(Horizon::Periods(3).trials(), 14);
    }
}
