//! The repeated channel-selection game: agents, observations and the trial
//! loop that produces a [`RunTrace`].

use std::fmt;

use thiserror::Error;

use crate::env::{EnvError, Environment};
use crate::forecaster::{Forecast, ForecastError, Forecaster, PeriodRecord};
use crate::profile::{encode_joint, encode_opponents};
use crate::rng::Stream;
use crate::strategy::period_of_trial;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("agent observed a trial it did not play")]
    OutOfOrder,
}

/// How an arm was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    ExploreRandom,
    ExploreBestResponse,
    Exploit,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::ExploreRandom => "explore-random",
            Phase::ExploreBestResponse => "explore-br",
            Phase::Exploit => "exploit",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "explore-random" => Some(Phase::ExploreRandom),
            "explore-br" => Some(Phase::ExploreBestResponse),
            "exploit" => Some(Phase::Exploit),
            _ => None,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An agent's move for one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub arm: usize,
    pub phase: Phase,
    pub forecast: Option<Forecast>,
    /// `(period sequence number, r)` of the forecaster when it forecast.
    pub forecast_period: Option<(u64, u32)>,
}

impl Decision {
    pub fn plain(arm: usize, phase: Phase) -> Self {
        Self { arm, phase, forecast: None, forecast_period: None }
    }
}

/// What every agent learns after a trial: the broadcast joint profile, its
/// own reward and whether its own channel was free.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub profile: &'a [usize],
    pub reward: f64,
    pub channel_available: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    /// Normalized approachability slack; NaN when not applicable.
    pub lp_slack: f64,
}

impl StepDiagnostics {
    pub fn none() -> Self {
        Self { lp_slack: f64::NAN }
    }
}

/// A player in the game.
pub trait Agent: Send {
    /// Short strategy label (CB, NCB, GQL, AB, UR, SC).
    fn label(&self) -> &'static str;
    fn decide(&mut self) -> Decision;
    fn observe(&mut self, obs: &Observation<'_>) -> Result<StepDiagnostics, GameError>;
    /// Whether this agent's reward is forfeited whenever its channel is shared.
    fn forfeits_collisions(&self) -> bool {
        false
    }
    fn forecaster(&self) -> Option<&Forecaster> {
        None
    }
}

/// One player's part of a trial record.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerRecord {
    pub arm: usize,
    pub phase: Phase,
    /// Encoded opponent profile.
    pub opponents: usize,
    pub reward: f64,
    pub forecast: Option<ForecastRecord>,
    pub lp_slack: f64,
}

/// Forecast issued by a player in a trial.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRecord {
    pub seq: u64,
    pub r: u32,
    pub slot: usize,
    /// Lattice point in [`Forecast::sparse_label`] form.
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub t: u64,
    pub profile: Vec<usize>,
    pub availability: Vec<bool>,
    pub players: Vec<PlayerRecord>,
}

impl TrialRecord {
    /// Period of the exploration schedule containing this trial.
    pub fn period(&self) -> u32 {
        period_of_trial(self.t)
    }
}

/// Everything a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub players: usize,
    pub channels: usize,
    pub labels: Vec<String>,
    pub trials: Vec<TrialRecord>,
    pub clip_events: u64,
    /// Per player, the forecaster's period records (empty for baselines).
    pub periods: Vec<Vec<PeriodRecord>>,
    pub resets: Vec<u64>,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Encoded joint profile of each trial.
    pub fn joint_codes(&self) -> impl Iterator<Item = usize> + '_ {
        self.trials.iter().map(move |t| encode_joint(&t.profile, self.channels))
    }
}

/// Zeroes the reward of every player whose channel is shared and restores a
/// full time share for sole occupants.
pub fn ncb_reward_filter(throughput: &[f64], time_share: &[f64], occupancy: &[usize], profile: &[usize]) -> Vec<f64> {
    profile
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            if occupancy[m] > 1 {
                0.0
            } else if time_share[k] > 0.0 {
                throughput[k] / time_share[k]
            } else {
                throughput[k]
            }
        })
        .collect()
}

/// Plays `horizon` trials of `agents` in `env`, drawing channel states from
/// `env_rng`.
pub fn play(env: &Environment, agents: &mut [Box<dyn Agent>], horizon: u64, env_rng: &mut Stream) -> Result<RunTrace, GameError> {
    let cfg = env.config();
    let k = cfg.players;
    if agents.len() != k {
        return Err(GameError::ConfigInvalid(format!("{} agents for {k} players", agents.len())));
    }
    let bound = env.reward_bound();
    let mut trials = Vec::with_capacity(horizon as usize);
    let mut clip_events = 0u64;
    for t in 0..horizon {
        let decisions: Vec<Decision> = agents.iter_mut().map(|a| a.decide()).collect();
        let profile: Vec<usize> = decisions.iter().map(|d| d.arm).collect();
        let state = env.sample_state(env_rng);
        let outcome = env.reward(&state, &profile)?;
        clip_events += outcome.clipped as u64;

        let filtered = if agents.iter().any(|a| a.forfeits_collisions()) {
            Some(ncb_reward_filter(&outcome.throughput, &outcome.time_share, &outcome.occupancy, &profile))
        } else {
            None
        };

        let mut players = Vec::with_capacity(k);
        for (p, (agent, decision)) in agents.iter_mut().zip(decisions).enumerate() {
            let reward = match &filtered {
                Some(f) if agent.forfeits_collisions() => f[p].min(bound),
                _ => outcome.throughput[p],
            };
            let obs = Observation { profile: &profile, reward, channel_available: state.availability[decision.arm] };
            let diag = agent.observe(&obs)?;
            let forecast = match (decision.forecast, decision.forecast_period) {
                (Some(fc), Some((seq, r))) => Some(ForecastRecord { seq, r, slot: fc.grid_index, label: fc.sparse_label() }),
                _ => None,
            };
            players.push(PlayerRecord {
                arm: decision.arm,
                phase: decision.phase,
                opponents: encode_opponents(&profile, p, cfg.channels),
                reward,
                forecast,
                lp_slack: diag.lp_slack,
            });
        }
        trials.push(TrialRecord { t, profile, availability: state.availability, players });
    }

    let periods = agents.iter().map(|a| a.forecaster().map(|f| f.history().to_vec()).unwrap_or_default()).collect();
    let resets = agents.iter().map(|a| a.forecaster().map(|f| f.resets()).unwrap_or(0)).collect();
    Ok(RunTrace {
        players: k,
        channels: cfg.channels,
        labels: agents.iter().map(|a| a.label().to_string()).collect(),
        trials,
        clip_events,
        periods,
        resets,
    })
}
