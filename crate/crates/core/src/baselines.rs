//! Comparison strategies: uniform random (UR), epsilon-greedy Q-learning
//! (GQL), availability-based (AB) and the static centralized assignment (SC).
//! The collision-forfeiting variant of the bandit strategy (NCB) lives in
//! [`crate::strategy`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::game::{Agent, Decision, GameError, Observation, Phase, StepDiagnostics};
use crate::lp::GridError;
use crate::oracle::OracleTable;
use crate::profile::{checked_pow, decode_joint, encode_opponents};
use crate::rng::Stream;

/// Uniform arm.
pub fn ur_select(arms: usize, rng: &mut Stream) -> usize {
    rng.gen_range(0..arms)
}

/// Picks a channel uniformly at random every trial.
pub struct UniformAgent {
    arms: usize,
    rng: Stream,
}

impl UniformAgent {
    pub fn new(arms: usize, rng: Stream) -> Self {
        Self { arms, rng }
    }
}

impl Agent for UniformAgent {
    fn label(&self) -> &'static str {
        "UR"
    }

    fn decide(&mut self) -> Decision {
        Decision::plain(ur_select(self.arms, &mut self.rng), Phase::ExploreRandom)
    }

    fn observe(&mut self, _obs: &Observation<'_>) -> Result<StepDiagnostics, GameError> {
        Ok(StepDiagnostics::none())
    }
}

/// GQL hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GqlParams {
    /// Probability of a uniform random action.
    #[serde(default = "default_gql_epsilon")]
    pub epsilon: f64,
    /// Learning rate.
    #[serde(default = "default_gql_alpha")]
    pub alpha: f64,
}

fn default_gql_epsilon() -> f64 {
    0.1
}

fn default_gql_alpha() -> f64 {
    0.1
}

impl Default for GqlParams {
    fn default() -> Self {
        Self { epsilon: default_gql_epsilon(), alpha: default_gql_alpha() }
    }
}

impl GqlParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(format!("epsilon {} must lie in (0, 1]", self.epsilon));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(format!("alpha {} must lie in (0, 1]", self.alpha));
        }
        Ok(())
    }
}

/// Q-values over (arm, state), states being encoded opponent profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    arms: usize,
    states: usize,
    q: Vec<f64>,
}

impl QTable {
    pub fn new(arms: usize, states: usize) -> Self {
        Self { arms, states, q: vec![0.0; arms * states] }
    }

    pub fn get(&self, arm: usize, state: usize) -> f64 {
        self.q[arm * self.states + state]
    }

    /// `Q ← (1 − α)Q + α·reward`.
    pub fn update(&mut self, arm: usize, state: usize, reward: f64, alpha: f64) {
        let q = &mut self.q[arm * self.states + state];
        *q = (1.0 - alpha) * *q + alpha * reward;
    }

    /// Greedy arm in `state`, ties to the lowest arm.
    pub fn greedy(&self, state: usize) -> usize {
        let mut best = 0;
        for a in 1..self.arms {
            if self.get(a, state) > self.get(best, state) {
                best = a;
            }
        }
        best
    }
}

/// Epsilon-greedy action in `state`.
pub fn gql_select(q: &QTable, state: usize, epsilon: f64, rng: &mut Stream) -> (usize, Phase) {
    if rng.gen::<f64>() < epsilon {
        (rng.gen_range(0..q.arms), Phase::ExploreRandom)
    } else {
        (q.greedy(state), Phase::Exploit)
    }
}

/// Epsilon-greedy Q-learning. The action is chosen in the state given by
/// the opponents' previous profile; the Q-value updated is that of the played
/// arm in the opponent profile actually observed.
pub struct GqlAgent {
    player: usize,
    channels: usize,
    params: GqlParams,
    q: QTable,
    state: usize,
    pending: Option<usize>,
    rng: Stream,
}

impl GqlAgent {
    pub fn new(player: usize, players: usize, channels: usize, params: GqlParams, rng: Stream) -> Self {
        let states = checked_pow(channels, players - 1).expect("state count overflows usize");
        Self { player, channels, params, q: QTable::new(channels, states), state: 0, pending: None, rng }
    }

    pub fn q_table(&self) -> &QTable {
        &self.q
    }
}

impl Agent for GqlAgent {
    fn label(&self) -> &'static str {
        "GQL"
    }

    fn decide(&mut self) -> Decision {
        let (arm, phase) = gql_select(&self.q, self.state, self.params.epsilon, &mut self.rng);
        self.pending = Some(arm);
        Decision::plain(arm, phase)
    }

    fn observe(&mut self, obs: &Observation<'_>) -> Result<StepDiagnostics, GameError> {
        let arm = self.pending.take().ok_or(GameError::OutOfOrder)?;
        let d = encode_opponents(obs.profile, self.player, self.channels);
        self.q.update(arm, d, obs.reward, self.params.alpha);
        self.state = d;
        Ok(StepDiagnostics::none())
    }
}

/// AB hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbParams {
    /// Probability of a uniform random channel, so that every channel's
    /// availability keeps being sensed.
    #[serde(default = "default_ab_explore")]
    pub explore: f64,
    /// Probability of repeating the previous channel instead of moving to the
    /// best-scoring one; breaks the lockstep of identical agents.
    #[serde(default = "default_ab_inertia")]
    pub inertia: f64,
}

fn default_ab_explore() -> f64 {
    0.05
}

fn default_ab_inertia() -> f64 {
    0.5
}

impl Default for AbParams {
    fn default() -> Self {
        Self { explore: default_ab_explore(), inertia: default_ab_inertia() }
    }
}

impl AbParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.explore) {
            return Err(format!("explore {} must lie in [0, 1]", self.explore));
        }
        if !(0.0..1.0).contains(&self.inertia) {
            return Err(format!("inertia {} must lie in [0, 1)", self.inertia));
        }
        Ok(())
    }
}

/// `availability_m / (1 + occupancy_m)` per channel.
pub fn ab_scores(availability: &[f64], others_occupancy: &[usize]) -> Vec<f64> {
    availability.iter().zip(others_occupancy).map(|(a, &o)| a / (1.0 + o as f64)).collect()
}

/// Highest-scoring channel, ties to the lowest index.
pub fn ab_best(availability: &[f64], others_occupancy: &[usize]) -> usize {
    let scores = ab_scores(availability, others_occupancy);
    let mut best = 0;
    for (m, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = m;
        }
    }
    best
}

/// Channel choice from sensed availability and the number of other users on
/// each channel in the previous trial.
pub struct AvailabilityAgent {
    player: usize,
    params: AbParams,
    sensed: Vec<u64>,
    available: Vec<u64>,
    others_occupancy: Vec<usize>,
    last: Option<usize>,
    pending: Option<usize>,
    rng: Stream,
}

impl AvailabilityAgent {
    pub fn new(player: usize, channels: usize, params: AbParams, rng: Stream) -> Self {
        Self {
            player,
            params,
            sensed: vec![0; channels],
            available: vec![0; channels],
            others_occupancy: vec![0; channels],
            last: None,
            pending: None,
            rng,
        }
    }

    /// Availability estimates `(available + 1)/(sensed + 2)`.
    pub fn availability(&self) -> Vec<f64> {
        self.sensed.iter().zip(&self.available).map(|(&s, &a)| (a as f64 + 1.0) / (s as f64 + 2.0)).collect()
    }
}

impl Agent for AvailabilityAgent {
    fn label(&self) -> &'static str {
        "AB"
    }

    fn decide(&mut self) -> Decision {
        let channels = self.sensed.len();
        let (arm, phase) = if self.rng.gen::<f64>() < self.params.explore {
            (self.rng.gen_range(0..channels), Phase::ExploreRandom)
        } else {
            match self.last {
                Some(prev) if self.rng.gen::<f64>() < self.params.inertia => (prev, Phase::Exploit),
                _ => (ab_best(&self.availability(), &self.others_occupancy), Phase::Exploit),
            }
        };
        self.pending = Some(arm);
        Decision::plain(arm, phase)
    }

    fn observe(&mut self, obs: &Observation<'_>) -> Result<StepDiagnostics, GameError> {
        let arm = self.pending.take().ok_or(GameError::OutOfOrder)?;
        self.sensed[arm] += 1;
        self.available[arm] += obs.channel_available as u64;
        self.others_occupancy.iter_mut().for_each(|o| *o = 0);
        for (p, &a) in obs.profile.iter().enumerate() {
            if p != self.player {
                self.others_occupancy[a] += 1;
            }
        }
        self.last = Some(arm);
        Ok(StepDiagnostics::none())
    }
}

/// Joint profile maximizing the summed expected reward, found by exhaustive
/// search; ties go to the lowest profile code. Fails when `M^K` exceeds `cap`.
pub fn sc_assign(oracle: &OracleTable, cap: u128) -> Result<Vec<usize>, GridError> {
    let k = oracle.players();
    let m = oracle.channels();
    let total = (m as u128).checked_pow(k as u32);
    let total = match total {
        Some(t) if t <= cap => t as usize,
        _ => {
            return Err(GridError::GridTooLarge {
                points: total.map_or_else(|| format!("{m}^{k}"), |t| t.to_string()),
                cap,
            })
        }
    };
    let mut best = (0usize, f64::NEG_INFINITY);
    for code in 0..total {
        let w = oracle.welfare(&decode_joint(code, k, m));
        if w > best.1 {
            best = (code, w);
        }
    }
    Ok(decode_joint(best.0, k, m))
}

/// Plays a fixed channel for the whole run.
pub struct StaticAgent {
    arm: usize,
}

impl StaticAgent {
    pub fn new(arm: usize) -> Self {
        Self { arm }
    }
}

impl Agent for StaticAgent {
    fn label(&self) -> &'static str {
        "SC"
    }

    fn decide(&mut self) -> Decision {
        Decision::plain(self.arm, Phase::Exploit)
    }

    fn observe(&mut self, _obs: &Observation<'_>) -> Result<StepDiagnostics, GameError> {
        Ok(StepDiagnostics::none())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{AccessMode, RadioConfig};
    use crate::rng::substream;

    #[test]
    fn q_update_formula() {
        let mut q = QTable::new(2, 1);
        q.update(0, 0, 2.0, 0.5);
        assert_eq!(q.get(0, 0), 1.0);
        q.update(1, 0, 0.7, 1.0);
        q.update(1, 0, 0.3, 1.0);
        assert_eq!(q.get(1, 0), 0.3);
    }

    #[test]
    fn gql_greedy_and_uniform() {
        let mut q = QTable::new(3, 2);
        q.update(2, 1, 1.0, 1.0);
        let mut rng = substream(1, "t", 0);
        for _ in 0..100 {
            assert_eq!(gql_select(&q, 1, 0.0, &mut rng).0, 2);
            assert_eq!(gql_select(&q, 0, 0.0, &mut rng).0, 0);
        }
        let n = 30_000;
        let mut hist = [0usize; 3];
        for _ in 0..n {
            hist[gql_select(&q, 1, 1.0, &mut rng).0] += 1;
        }
        let sigma = (n as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        assert!(hist.iter().all(|&h| (h as f64 - n as f64 / 3.0).abs() < 3.0 * sigma));
    }

    #[test]
    fn ur_single_arm() {
        let mut rng = substream(2, "t", 0);
        assert!((0..100).all(|_| ur_select(1, &mut rng) == 0));
    }

    #[test]
    fn ab_score_examples() {
        assert_eq!(ab_best(&[0.9, 0.1], &[1, 1]), 0);
        assert_eq!(ab_best(&[0.5, 0.5, 0.5], &[2, 0, 1]), 1);
        let s = ab_scores(&[0.3, 0.8], &[0, 2]);
        let scaled: Vec<f64> = [0.3, 0.8].iter().map(|a| a * 7.0).collect();
        assert_eq!(ab_best(&scaled, &[0, 2]), ab_best(&[0.3, 0.8], &[0, 2]));
        assert!((s[1] - 0.8 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ab_learns_availability_of_played_channel_only() {
        let mut agent = AvailabilityAgent::new(0, 2, AbParams { explore: 0.0, inertia: 0.0 }, substream(3, "t", 0));
        let d = agent.decide();
        assert_eq!(d.arm, 0);
        agent.observe(&Observation { profile: &[0, 0], reward: 0.0, channel_available: false }).unwrap();
        assert_eq!(agent.availability(), vec![1.0 / 3.0, 0.5]);
        assert_eq!(agent.decide().arm, 1);
    }

    #[test]
    fn sc_brute_force_two_by_two() {
        let cfg = RadioConfig::symmetric(2, vec![0.0, 1.0], 1.0, 0.5, AccessMode::NonOrthogonal);
        let oracle = OracleTable::estimate(&cfg, 20_000, 5);
        assert_eq!(sc_assign(&oracle, 4096).unwrap(), vec![1, 1]);

        let cfg = RadioConfig::symmetric(2, vec![0.9, 0.6], 1.0, 1.0, AccessMode::Orthogonal);
        let oracle = OracleTable::estimate(&cfg, 20_000, 5);
        let mut best = (vec![], f64::NEG_INFINITY);
        for a in 0..2 {
            for b in 0..2 {
                let w = oracle.payoff(0, &[a, b]) + oracle.payoff(1, &[a, b]);
                if w > best.1 {
                    best = (vec![a, b], w);
                }
            }
        }
        assert_eq!(sc_assign(&oracle, 4096).unwrap(), best.0);
    }

    #[test]
    fn sc_zero_availability_picks_first_profile() {
        let cfg = RadioConfig::symmetric(3, vec![0.0, 0.0], 1.0, 1.0, AccessMode::Orthogonal);
        let oracle = OracleTable::estimate(&cfg, 10, 5);
        assert_eq!(sc_assign(&oracle, 4096).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn sc_symmetric_welfare_invariant_under_relabeling() {
        let cfg = RadioConfig::symmetric(3, vec![0.8, 0.5], 1.0, 0.4, AccessMode::Orthogonal);
        let oracle = OracleTable::estimate(&cfg, 50_000, 9);
        let w = |p: &[usize]| oracle.welfare(p);
        for code in 0..8 {
            let p = decode_joint(code, 3, 2);
            let rotated = vec![p[1], p[2], p[0]];
            assert!((w(&p) - w(&rotated)).abs() < 0.02);
        }
    }

    #[test]
    fn sc_cap() {
        let oracle = OracleTable::from_fn(4, 4, |_, _, _| 1.0);
        assert!(matches!(sc_assign(&oracle, 100), Err(GridError::GridTooLarge { .. })));
    }
}
