//! Stochastic D2D channel environment.
//!
//! Each trial draws channel availabilities `I_m ~ Bernoulli(θ_m)` and
//! Rayleigh block-fading power gains (exponential with configured means),
//! then pays every player the throughput of its chosen channel under either
//! time-shared (orthogonal) or interfering (non-orthogonal) access.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{substream, Stream};

/// Tail probability used for the reward bound: the largest mean gain is
/// exceeded with this probability per draw.
pub const CLIP_TAIL_PROBABILITY: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("invalid radio config: field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccessMode {
    Orthogonal,
    NonOrthogonal,
}

/// Time-share model for users colliding on a channel in orthogonal mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TauModel {
    /// Each of `n` co-channel users gets `1/n` of the trial.
    EqualShare,
    /// `fractions[n − 1][j]` is the share of the `j`-th lowest-indexed of `n`
    /// co-channel users. Each row has length `n` and sums to at most 1.
    FixedFractions { fractions: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioConfig {
    pub players: usize,
    pub channels: usize,
    /// Availability probability of each channel.
    pub theta: Vec<f64>,
    pub tx_power_w: f64,
    pub noise_w: f64,
    /// `mean_gain[u][v][m]`: mean power gain from the transmitter of pair `u`
    /// to the receiver of pair `v` on channel `m`; `u == v` is the direct link.
    pub mean_gain: Vec<Vec<Vec<f64>>>,
    pub access: AccessMode,
    #[serde(default = "default_tau")]
    pub tau_model: TauModel,
}

fn default_tau() -> TauModel {
    TauModel::EqualShare
}

impl RadioConfig {
    /// Config with the same direct gain on every link and the same cross gain
    /// between every pair of links, on every channel.
    pub fn symmetric(players: usize, theta: Vec<f64>, direct: f64, cross: f64, access: AccessMode) -> Self {
        let channels = theta.len();
        let mean_gain = (0..players)
            .map(|u| (0..players).map(|v| vec![if u == v { direct } else { cross }; channels]).collect())
            .collect();
        Self { players, channels, theta, tx_power_w: 1.0, noise_w: 1.0, mean_gain, access, tau_model: TauModel::EqualShare }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |field: &str, reason: String| Err(EnvError::InvalidConfig { field: field.into(), reason });
        if self.players < 1 {
            return bad("players", "need at least one player".into());
        }
        if self.channels < 1 {
            return bad("channels", "need at least one channel".into());
        }
        if self.theta.len() != self.channels {
            return bad("theta", format!("{} entries for {} channels", self.theta.len(), self.channels));
        }
        if let Some(t) = self.theta.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return bad("theta", format!("{t} is not a probability"));
        }
        if !(self.tx_power_w > 0.0 && self.tx_power_w.is_finite()) {
            return bad("tx_power_w", "must be positive".into());
        }
        if !(self.noise_w > 0.0 && self.noise_w.is_finite()) {
            return bad("noise_w", "must be positive".into());
        }
        let shape_ok = self.mean_gain.len() == self.players
            && self.mean_gain.iter().all(|row| {
                row.len() == self.players && row.iter().all(|g| g.len() == self.channels)
            });
        if !shape_ok {
            return bad("mean_gain", format!("expected shape {}x{}x{}", self.players, self.players, self.channels));
        }
        if self.mean_gain.iter().flatten().flatten().any(|g| !(*g > 0.0 && g.is_finite())) {
            return bad("mean_gain", "gains must be positive and finite".into());
        }
        if let TauModel::FixedFractions { fractions } = &self.tau_model {
            if fractions.len() < self.players {
                return bad("tau_model.fractions", format!("need a row for each occupancy up to {}", self.players));
            }
            for (i, row) in fractions.iter().enumerate() {
                if row.len() != i + 1 || row.iter().any(|f| !(0.0..=1.0).contains(f)) || row.iter().sum::<f64>() > 1.0 + 1e-12 {
                    return bad("tau_model.fractions", format!("row {i} must hold {} fractions in [0,1] summing to at most 1", i + 1));
                }
            }
        }
        Ok(())
    }

    fn gain(&self, from: usize, to: usize, channel: usize) -> f64 {
        self.mean_gain[from][to][channel]
    }

    /// Reward bound `A = log₂(1 + P·ḡ·q/N0)` where `ḡ·q` is the
    /// `1 − CLIP_TAIL_PROBABILITY` quantile of the largest-mean gain.
    pub fn reward_bound(&self) -> f64 {
        let g_max = self.mean_gain.iter().flatten().flatten().fold(0.0_f64, |a, &b| a.max(b));
        let q = -CLIP_TAIL_PROBABILITY.ln();
        (1.0 + self.tx_power_w * g_max * q / self.noise_w).log2()
    }
}

/// One trial's realized channel conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    pub availability: Vec<bool>,
    /// Realized power gains, flattened as `[from][to][channel]`.
    pub gains: Vec<f64>,
    players: usize,
    channels: usize,
}

impl ChannelState {
    pub fn new(availability: Vec<bool>, gains: Vec<f64>, players: usize) -> Self {
        let channels = availability.len();
        assert_eq!(gains.len(), players * players * channels);
        Self { availability, gains, players, channels }
    }

    pub fn gain(&self, from: usize, to: usize, channel: usize) -> f64 {
        self.gains[(from * self.players + to) * self.channels + channel]
    }
}

/// Rewards paid in one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardOutcome {
    pub throughput: Vec<f64>,
    /// Time share of each player on its channel; always 1 in non-orthogonal mode.
    pub time_share: Vec<f64>,
    /// Number of players on each channel.
    pub occupancy: Vec<usize>,
    /// Players whose throughput hit the reward bound.
    pub clipped: usize,
}

/// The environment: a validated config plus its reward bound.
#[derive(Debug, Clone)]
pub struct Environment {
    cfg: RadioConfig,
    bound: f64,
}

impl Environment {
    pub fn new(cfg: RadioConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        let bound = cfg.reward_bound();
        Ok(Self { cfg, bound })
    }

    pub fn config(&self) -> &RadioConfig {
        &self.cfg
    }

    pub fn reward_bound(&self) -> f64 {
        self.bound
    }

    pub fn sample_state(&self, rng: &mut Stream) -> ChannelState {
        sample_state(&self.cfg, rng)
    }

    /// Pays `profile` under the configured access mode.
    pub fn reward(&self, state: &ChannelState, profile: &[usize]) -> Result<RewardOutcome, EnvError> {
        let mut out = match self.cfg.access {
            AccessMode::Orthogonal => reward_orthogonal(state, profile, &self.cfg)?,
            AccessMode::NonOrthogonal => reward_nonorthogonal(state, profile, &self.cfg)?,
        };
        for r in out.throughput.iter_mut() {
            if *r > self.bound {
                *r = self.bound;
                out.clipped += 1;
            }
        }
        Ok(out)
    }
}

/// Draws availabilities and all `K·K·M` power gains for one trial.
pub fn sample_state(cfg: &RadioConfig, rng: &mut Stream) -> ChannelState {
    let availability = cfg.theta.iter().map(|&t| rng.gen::<f64>() < t).collect();
    let mut gains = Vec::with_capacity(cfg.players * cfg.players * cfg.channels);
    for from in 0..cfg.players {
        for to in 0..cfg.players {
            for m in 0..cfg.channels {
                let e: f64 = Exp1.sample(rng);
                gains.push(e * cfg.gain(from, to, m));
            }
        }
    }
    ChannelState::new(availability, gains, cfg.players)
}

fn check_profile(profile: &[usize], cfg: &RadioConfig) -> Result<Vec<usize>, EnvError> {
    if profile.len() != cfg.players {
        return Err(EnvError::InvalidProfile(format!("{} actions for {} players", profile.len(), cfg.players)));
    }
    let mut occupancy = vec![0; cfg.channels];
    for (k, &m) in profile.iter().enumerate() {
        if m >= cfg.channels {
            return Err(EnvError::InvalidProfile(format!("player {k} chose channel {m} of {}", cfg.channels)));
        }
        occupancy[m] += 1;
    }
    Ok(occupancy)
}

fn snr_capacity(cfg: &RadioConfig, signal: f64, interference: f64) -> f64 {
    (1.0 + cfg.tx_power_w * signal / (cfg.tx_power_w * interference + cfg.noise_w)).log2()
}

/// Time-shared access: a player's throughput is its share of the trial times
/// the interference-free capacity of its direct link.
pub fn reward_orthogonal(state: &ChannelState, profile: &[usize], cfg: &RadioConfig) -> Result<RewardOutcome, EnvError> {
    let occupancy = check_profile(profile, cfg)?;
    let mut throughput = vec![0.0; profile.len()];
    let mut time_share = vec![0.0; profile.len()];
    for (k, &m) in profile.iter().enumerate() {
        let n = occupancy[m];
        let share = match &cfg.tau_model {
            TauModel::EqualShare => 1.0 / n as f64,
            TauModel::FixedFractions { fractions } => {
                let rank = profile[..k].iter().filter(|&&a| a == m).count();
                fractions[n - 1][rank]
            }
        };
        time_share[k] = share;
        if state.availability[m] {
            throughput[k] = share * snr_capacity(cfg, state.gain(k, k, m), 0.0);
        }
    }
    Ok(RewardOutcome { throughput, time_share, occupancy, clipped: 0 })
}

/// Simultaneous access: co-channel users interfere at each other's receivers.
pub fn reward_nonorthogonal(state: &ChannelState, profile: &[usize], cfg: &RadioConfig) -> Result<RewardOutcome, EnvError> {
    let occupancy = check_profile(profile, cfg)?;
    let mut throughput = vec![0.0; profile.len()];
    for (k, &m) in profile.iter().enumerate() {
        if !state.availability[m] {
            continue;
        }
        let interference: f64 = profile
            .iter()
            .enumerate()
            .filter(|&(l, &a)| l != k && a == m)
            .map(|(l, _)| state.gain(l, k, m))
            .sum();
        throughput[k] = snr_capacity(cfg, state.gain(k, k, m), interference);
    }
    Ok(RewardOutcome { throughput, time_share: vec![1.0; profile.len()], occupancy, clipped: 0 })
}

/// Monte Carlo estimate of an expected reward with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleEstimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Expected reward of `player` on `arm` when the set of other players sharing
/// that channel is `co_channel` (player indices, ascending).
///
/// Availability factors out of the expectation, so the estimate is
/// `θ_m · mean(reward | available)`; it is exactly 0 when `θ_m = 0` and scales
/// exactly with `θ_m` for a fixed seed.
pub fn expected_reward_for_cell(
    cfg: &RadioConfig,
    player: usize,
    arm: usize,
    co_channel: &[usize],
    n_samples: usize,
    rng: &mut Stream,
) -> OracleEstimate {
    assert!(n_samples >= 1);
    let theta = cfg.theta[arm];
    if theta == 0.0 {
        return OracleEstimate { mean: 0.0, std_error: 0.0 };
    }
    let bound = cfg.reward_bound();
    let n = co_channel.len() + 1;
    let share = match (&cfg.access, &cfg.tau_model) {
        (AccessMode::NonOrthogonal, _) => 1.0,
        (AccessMode::Orthogonal, TauModel::EqualShare) => 1.0 / n as f64,
        (AccessMode::Orthogonal, TauModel::FixedFractions { fractions }) => {
            let rank = co_channel.iter().filter(|&&l| l < player).count();
            fractions[n - 1][rank]
        }
    };
    let direct_mean = cfg.gain(player, player, arm);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_samples {
        let e: f64 = Exp1.sample(rng);
        let signal = direct_mean * e;
        let interference: f64 = match cfg.access {
            AccessMode::Orthogonal => 0.0,
            AccessMode::NonOrthogonal => co_channel
                .iter()
                .map(|&l| {
                    let e: f64 = Exp1.sample(rng);
                    cfg.gain(l, player, arm) * e
                })
                .sum(),
        };
        let r = (share * snr_capacity(cfg, signal, interference)).min(bound);
        sum += r;
        sum_sq += r * r;
    }
    let nf = n_samples as f64;
    let mean = sum / nf;
    let var = if n_samples > 1 { ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
    OracleEstimate { mean: theta * mean, std_error: theta * (var / nf).sqrt() }
}

/// Expected reward of `player` on `arm` against the opponents' channels
/// `opponents` (length `K − 1`, player order with `player` removed).
pub fn expected_reward_oracle(
    cfg: &RadioConfig,
    player: usize,
    arm: usize,
    opponents: &[usize],
    n_samples: usize,
    rng_seed: u64,
) -> OracleEstimate {
    let co_channel: Vec<usize> = opponents
        .iter()
        .enumerate()
        .filter(|&(_, &a)| a == arm)
        .map(|(i, _)| if i < player { i } else { i + 1 })
        .collect();
    let mut rng = substream(rng_seed, "oracle-cell", 0);
    expected_reward_for_cell(cfg, player, arm, &co_channel, n_samples, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg2(access: AccessMode) -> RadioConfig {
        RadioConfig::symmetric(2, vec![1.0, 1.0], 1.0, 1.0, access)
    }

    fn state(avail: Vec<bool>, players: usize, f: impl Fn(usize, usize, usize) -> f64) -> ChannelState {
        let m = avail.len();
        let mut g = Vec::new();
        for a in 0..players {
            for b in 0..players {
                for c in 0..m {
                    g.push(f(a, b, c));
                }
            }
        }
        ChannelState::new(avail, g, players)
    }

    #[test]
    fn degenerate_availability() {
        let mut rng = substream(1, "t", 0);
        let mut cfg = cfg2(AccessMode::Orthogonal);
        for _ in 0..100 {
            assert!(sample_state(&cfg, &mut rng).availability.iter().all(|&a| a));
        }
        cfg.theta = vec![0.0, 0.0];
        for _ in 0..100 {
            assert!(sample_state(&cfg, &mut rng).availability.iter().all(|&a| !a));
        }
    }

    #[test]
    fn availability_frequency() {
        let mut cfg = cfg2(AccessMode::Orthogonal);
        cfg.theta = vec![0.3, 0.3];
        let mut rng = substream(2, "t", 0);
        let n = 100_000;
        let hits = (0..n).filter(|_| sample_state(&cfg, &mut rng).availability[0]).count();
        assert!((hits as f64 / n as f64 - 0.3).abs() < 0.01);
    }

    #[test]
    fn orthogonal_examples() {
        let cfg = cfg2(AccessMode::Orthogonal);
        let s = state(vec![true, false], 2, |_, _, _| 1.0);
        let r = reward_orthogonal(&s, &[0, 1], &cfg).unwrap();
        assert_eq!(r.throughput, vec![1.0, 0.0]);
        let r = reward_orthogonal(&s, &[0, 0], &cfg).unwrap();
        assert_eq!(r.throughput, vec![0.5, 0.5]);
        assert_eq!(r.occupancy, vec![2, 0]);
        assert!(matches!(reward_orthogonal(&s, &[0, 2], &cfg), Err(EnvError::InvalidProfile(_))));
    }

    #[test]
    fn nonorthogonal_examples() {
        let cfg = cfg2(AccessMode::NonOrthogonal);
        let s = state(vec![true, true], 2, |a, b, _| if a == b { 3.0 } else { 1.0 });
        let r = reward_nonorthogonal(&s, &[0, 0], &cfg).unwrap();
        assert!((r.throughput[0] - (2.5f64).log2()).abs() < 1e-12);
        let s = state(vec![true, false], 2, |_, _, _| 1.0);
        let r = reward_nonorthogonal(&s, &[0, 1], &cfg).unwrap();
        assert_eq!(r.throughput, vec![1.0, 0.0]);
    }

    #[test]
    fn fixed_fractions_by_rank() {
        let mut cfg = RadioConfig::symmetric(3, vec![1.0], 1.0, 1.0, AccessMode::Orthogonal);
        cfg.tau_model = TauModel::FixedFractions { fractions: vec![vec![1.0], vec![0.7, 0.3], vec![0.5, 0.3, 0.2]] };
        cfg.validate().unwrap();
        let s = state(vec![true], 3, |_, _, _| 1.0);
        let r = reward_orthogonal(&s, &[0, 0, 0], &cfg).unwrap();
        assert_eq!(r.time_share, vec![0.5, 0.3, 0.2]);
    }

    #[test]
    fn clipping_counts_events() {
        let env = Environment::new(cfg2(AccessMode::Orthogonal)).unwrap();
        let a = env.reward_bound();
        assert!((a - (1.0 + -CLIP_TAIL_PROBABILITY.ln()).log2()).abs() < 1e-12);
        let s = state(vec![true, true], 2, |_, _, _| 1e6);
        let r = env.reward(&s, &[0, 1]).unwrap();
        assert_eq!(r.clipped, 2);
        assert_eq!(r.throughput, vec![a, a]);
    }

    #[test]
    fn validation_names_fields() {
        let mut cfg = cfg2(AccessMode::Orthogonal);
        cfg.theta = vec![0.5];
        match cfg.validate() {
            Err(EnvError::InvalidConfig { field, .. }) => assert_eq!(field, "theta"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn oracle_availability_factors_out() {
        let mut cfg = RadioConfig::symmetric(2, vec![0.8, 0.0], 1.0, 0.5, AccessMode::NonOrthogonal);
        let full = expected_reward_oracle(&cfg, 0, 0, &[0], 5000, 9);
        cfg.theta[0] = 0.4;
        let half = expected_reward_oracle(&cfg, 0, 0, &[0], 5000, 9);
        assert!((full.mean - 2.0 * half.mean).abs() < 1e-12);
        assert_eq!(expected_reward_oracle(&cfg, 0, 1, &[0], 5000, 9).mean, 0.0);
    }

    #[test]
    fn oracle_reruns_agree() {
        let cfg = RadioConfig::symmetric(3, vec![0.7, 0.9], 1.5, 0.4, AccessMode::NonOrthogonal);
        let a = expected_reward_oracle(&cfg, 1, 0, &[0, 1], 20_000, 1);
        let b = expected_reward_oracle(&cfg, 1, 0, &[0, 1], 20_000, 2);
        assert!((a.mean - b.mean).abs() < 3.0 * (a.std_error.powi(2) + b.std_error.powi(2)).sqrt());
    }
}
