//! The forecast-driven bandit strategy: period schedule, exploration split,
//! best response to forecasts and the tabular reward estimator.

use std::collections::BTreeSet;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::forecaster::{Forecast, Forecaster, ForecasterOptions};
use crate::game::{Agent, Decision, GameError, Observation, Phase, StepDiagnostics};
use crate::profile::encode_opponents;
use crate::rng::Stream;

/// Exploration schedule. Period `r ≥ 1` lasts `T'_r = 2^r` trials, of which
/// `ceil(T'_r·Z_r)` with `Z_r = r/2^r` are exploration trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleParams {
    /// Probability of best-responding inside an exploration trial.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_gamma() -> f64 {
    0.05
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self { gamma: default_gamma() }
    }
}

/// `T'_r = 2^r`.
pub fn period_length(r: u32) -> u64 {
    1u64 << r
}

/// `Z_r = r/2^r`.
pub fn exploration_rate(r: u32) -> f64 {
    r as f64 / period_length(r) as f64
}

/// `ceil(T'_r·Z_r)`.
pub fn exploration_count(r: u32) -> u64 {
    (period_length(r) as f64 * exploration_rate(r)).ceil() as u64
}

/// Trials in periods `1..=r`: `2^{r+1} − 2`.
pub fn trials_through_period(r: u32) -> u64 {
    (1u64 << (r + 1)) - 2
}

/// Period containing zero-based trial `t`.
pub fn period_of_trial(t: u64) -> u32 {
    // Period r covers trials [2^r − 2, 2^{r+1} − 2).
    63 - (t + 2).leading_zeros()
}

/// Picks the exploration trials of period `r`: `exploration_count(r)` distinct
/// offsets in `0..T'_r`, uniformly without replacement, ascending.
pub fn build_period_schedule(r: u32, rng: &mut Stream) -> BTreeSet<u64> {
    let len = period_length(r);
    let k = exploration_count(r).min(len);
    sample_indices(rng, len as usize, k as usize).into_iter().map(|i| i as u64).collect()
}

/// Running mean reward per (arm, opponent profile).
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorTable {
    arms: usize,
    contexts: usize,
    means: Vec<f64>,
    counts: Vec<u64>,
}

impl EstimatorTable {
    pub fn new(arms: usize, contexts: usize) -> Self {
        Self { arms, contexts, means: vec![0.0; arms * contexts], counts: vec![0; arms * contexts] }
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn contexts(&self) -> usize {
        self.contexts
    }

    pub fn mean(&self, arm: usize, context: usize) -> f64 {
        self.means[arm * self.contexts + context]
    }

    pub fn count(&self, arm: usize, context: usize) -> u64 {
        self.counts[arm * self.contexts + context]
    }

    pub fn is_visited(&self, arm: usize, context: usize) -> bool {
        self.count(arm, context) > 0
    }

    pub fn update(&mut self, arm: usize, context: usize, reward: f64) {
        debug_assert!(reward.is_finite() && reward >= 0.0);
        let i = arm * self.contexts + context;
        self.counts[i] += 1;
        self.means[i] += (reward - self.means[i]) / self.counts[i] as f64;
    }

    /// Sets a cell directly; used to build fixtures.
    pub fn set(&mut self, arm: usize, context: usize, mean: f64, count: u64) {
        let i = arm * self.contexts + context;
        self.means[i] = mean;
        self.counts[i] = count;
    }
}

/// `argmax_m Σ_d p_d·f̂(m, d)`, ties to the lowest arm. Unvisited cells
/// count as 0.
pub fn best_response(estimator: &EstimatorTable, forecast: &[f64]) -> usize {
    assert_eq!(forecast.len(), estimator.contexts, "forecast dimension mismatch");
    let mut best = (0, f64::NEG_INFINITY);
    for m in 0..estimator.arms {
        let row = &estimator.means[m * estimator.contexts..(m + 1) * estimator.contexts];
        let score: f64 = forecast.iter().zip(row).filter(|(p, _)| **p != 0.0).map(|(p, f)| p * f).sum();
        if score > best.1 {
            best = (m, score);
        }
    }
    best.0
}

/// Trial kind from the period schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialKind {
    Explore,
    Exploit,
}

/// Arm choice for one trial: exploitation always best-responds; exploration
/// picks a uniform arm with probability `1 − γ` and best-responds otherwise.
pub fn select_action(estimator: &EstimatorTable, kind: TrialKind, forecast: &[f64], gamma: f64, rng: &mut Stream) -> (usize, Phase) {
    match kind {
        TrialKind::Exploit => (best_response(estimator, forecast), Phase::Exploit),
        TrialKind::Explore => {
            if rng.gen::<f64>() < gamma {
                (best_response(estimator, forecast), Phase::ExploreBestResponse)
            } else {
                (rng.gen_range(0..estimator.arms), Phase::ExploreRandom)
            }
        }
    }
}

/// The strategy as a game agent. With `forfeit_collisions` set it learns
/// from rewards in which any shared channel pays nothing.
pub struct BanditAgent {
    player: usize,
    players: usize,
    channels: usize,
    params: ScheduleParams,
    forfeit_collisions: bool,
    forecaster: Forecaster,
    estimator: EstimatorTable,
    rng: Stream,
    r: u32,
    t_in_period: u64,
    explore: BTreeSet<u64>,
    pending: Option<(usize, Forecast)>,
}

impl BanditAgent {
    pub fn new(
        player: usize,
        players: usize,
        channels: usize,
        params: ScheduleParams,
        forecaster_options: ForecasterOptions,
        forecaster_rng: Stream,
        mut rng: Stream,
    ) -> Self {
        let outcomes = channels.pow(players as u32 - 1);
        let explore = build_period_schedule(1, &mut rng);
        Self {
            player,
            players,
            channels,
            params,
            forfeit_collisions: false,
            forecaster: Forecaster::new(outcomes, forecaster_options, forecaster_rng),
            estimator: EstimatorTable::new(channels, outcomes),
            rng,
            r: 1,
            t_in_period: 0,
            explore,
            pending: None,
        }
    }

    pub fn forfeiting_collisions(mut self) -> Self {
        self.forfeit_collisions = true;
        self
    }

    pub fn estimator(&self) -> &EstimatorTable {
        &self.estimator
    }

    pub fn forecaster(&self) -> &Forecaster {
        &self.forecaster
    }

    pub fn schedule_period(&self) -> u32 {
        self.r
    }
}

impl Agent for BanditAgent {
    fn label(&self) -> &'static str {
        if self.forfeit_collisions {
            "NCB"
        } else {
            "CB"
        }
    }

    fn forfeits_collisions(&self) -> bool {
        self.forfeit_collisions
    }

    fn decide(&mut self) -> Decision {
        if self.t_in_period == period_length(self.r) {
            self.r += 1;
            self.t_in_period = 0;
            self.explore = build_period_schedule(self.r, &mut self.rng);
        }
        let forecast = self.forecaster.emit_forecast();
        let kind = if self.explore.contains(&self.t_in_period) { TrialKind::Explore } else { TrialKind::Exploit };
        let (arm, phase) = select_action(&self.estimator, kind, &forecast.distribution, self.params.gamma, &mut self.rng);
        let decision = Decision { arm, phase, forecast: Some(forecast.clone()), forecast_period: Some((self.forecaster.history().len() as u64, self.forecaster.period())) };
        self.pending = Some((arm, forecast));
        decision
    }

    fn observe(&mut self, obs: &Observation<'_>) -> Result<StepDiagnostics, GameError> {
        let (arm, _) = self.pending.take().ok_or(GameError::OutOfOrder)?;
        debug_assert_eq!(obs.profile[self.player], arm);
        debug_assert_eq!(obs.profile.len(), self.players);
        let d = encode_opponents(obs.profile, self.player, self.channels);
        self.estimator.update(arm, d, obs.reward);
        let step = self.forecaster.observe(d)?;
        self.t_in_period += 1;
        Ok(StepDiagnostics { lp_slack: step.slack })
    }

    fn forecaster(&self) -> Option<&Forecaster> {
        Some(&self.forecaster)
    }
}
