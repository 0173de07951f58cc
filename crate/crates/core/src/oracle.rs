//! Precomputed expected rewards `f_k(m, d)` for every player, arm and
//! opponent profile. Used by metrics and the SC baseline only.

use rayon::prelude::*;

use crate::env::{expected_reward_for_cell, RadioConfig};
use crate::profile::{checked_pow, encode_opponents, insert_player};
use crate::rng::substream;

/// Expected-reward table indexed by `(player, arm, opponent code)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleTable {
    players: usize,
    channels: usize,
    outcomes: usize,
    means: Vec<f64>,
    std_errors: Vec<f64>,
}

impl OracleTable {
    /// Monte Carlo table with `n_samples` draws per cell.
    ///
    /// The expected reward depends on the opponents only through which of
    /// them share the arm, so one estimate is computed per
    /// `(player, arm, co-channel set)` and shared by all profiles that induce
    /// it. Each such cell draws from its own substream of `seed`, which makes
    /// the table independent of thread scheduling.
    pub fn estimate(cfg: &RadioConfig, n_samples: usize, seed: u64) -> Self {
        let k = cfg.players;
        let m = cfg.channels;
        let masks = 1usize << k;
        let cells: Vec<(usize, usize, usize)> = (0..k)
            .flat_map(|p| (0..m).flat_map(move |a| (0..masks).filter(move |s| s & (1 << p) == 0).map(move |s| (p, a, s))))
            .collect();
        let estimates: Vec<(f64, f64)> = cells
            .par_iter()
            .map(|&(p, a, s)| {
                let co: Vec<usize> = (0..k).filter(|l| s & (1 << l) != 0).collect();
                let index = ((p * m + a) * masks + s) as u64;
                let mut rng = substream(seed, "oracle-cell", index);
                let e = expected_reward_for_cell(cfg, p, a, &co, n_samples, &mut rng);
                (e.mean, e.std_error)
            })
            .collect();
        let mut by_cell = vec![(0.0, 0.0); k * m * masks];
        for (&(p, a, s), e) in cells.iter().zip(estimates) {
            by_cell[(p * m + a) * masks + s] = e;
        }
        let outcomes = opponent_count(k, m);
        let mut means = vec![0.0; k * m * outcomes];
        let mut std_errors = vec![0.0; k * m * outcomes];
        for p in 0..k {
            for d in 0..outcomes {
                let profile = insert_player(d, p, 0, k, m);
                for a in 0..m {
                    let s = profile.iter().enumerate().filter(|&(l, &b)| l != p && b == a).fold(0, |acc, (l, _)| acc | (1 << l));
                    let (mean, se) = by_cell[(p * m + a) * masks + s];
                    let i = (p * m + a) * outcomes + d;
                    means[i] = mean;
                    std_errors[i] = se;
                }
            }
        }
        Self { players: k, channels: m, outcomes, means, std_errors }
    }

    /// Table with means given by `f(player, arm, opponent code)` and zero
    /// standard errors.
    pub fn from_fn(players: usize, channels: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let outcomes = opponent_count(players, channels);
        let mut means = Vec::with_capacity(players * channels * outcomes);
        for p in 0..players {
            for a in 0..channels {
                for d in 0..outcomes {
                    means.push(f(p, a, d));
                }
            }
        }
        let std_errors = vec![0.0; means.len()];
        Self { players, channels, outcomes, means, std_errors }
    }

    /// Table from per-player payoffs over joint profiles:
    /// `payoff(player, profile)`.
    pub fn from_joint_payoffs(players: usize, channels: usize, payoff: impl Fn(usize, &[usize]) -> f64) -> Self {
        Self::from_fn(players, channels, |p, a, d| {
            let profile = insert_player(d, p, a, players, channels);
            payoff(p, &profile)
        })
    }

    pub fn players(&self) -> usize {
        self.players
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Opponent profiles per player, `M^(K−1)`.
    pub fn outcomes(&self) -> usize {
        self.outcomes
    }

    pub fn mean(&self, player: usize, arm: usize, opponents: usize) -> f64 {
        self.means[(player * self.channels + arm) * self.outcomes + opponents]
    }

    pub fn std_error(&self, player: usize, arm: usize, opponents: usize) -> f64 {
        self.std_errors[(player * self.channels + arm) * self.outcomes + opponents]
    }

    /// `f*_k(d) = max_m f_k(m, d)`.
    pub fn best(&self, player: usize, opponents: usize) -> f64 {
        (0..self.channels).map(|a| self.mean(player, a, opponents)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Expected reward of `player` in the joint `profile`.
    pub fn payoff(&self, player: usize, profile: &[usize]) -> f64 {
        self.mean(player, profile[player], encode_opponents(profile, player, self.channels))
    }

    /// Sum of expected rewards over players in `profile`.
    pub fn welfare(&self, profile: &[usize]) -> f64 {
        (0..self.players).map(|p| self.payoff(p, profile)).sum()
    }
}

fn opponent_count(players: usize, channels: usize) -> usize {
    checked_pow(channels, players - 1).expect("opponent profile count overflows usize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{expected_reward_oracle, AccessMode};
    use crate::profile::decode_joint;

    #[test]
    fn shared_cells_match_direct_oracle() {
        let cfg = RadioConfig::symmetric(3, vec![0.8, 0.5], 1.0, 0.3, AccessMode::NonOrthogonal);
        let table = OracleTable::estimate(&cfg, 20_000, 11);
        for p in 0..3 {
            for d in 0..4 {
                let opp = decode_joint(d, 2, 2);
                for a in 0..2 {
                    let direct = expected_reward_oracle(&cfg, p, a, &opp, 20_000, 99);
                    let se = table.std_error(p, a, d).hypot(direct.std_error);
                    assert!((table.mean(p, a, d) - direct.mean).abs() <= 4.0 * se + 1e-12, "p{p} a{a} d{d}");
                }
            }
        }
    }

    #[test]
    fn unavailable_channel_is_zero_everywhere() {
        let cfg = RadioConfig::symmetric(2, vec![0.0, 1.0], 1.0, 1.0, AccessMode::Orthogonal);
        let table = OracleTable::estimate(&cfg, 1000, 1);
        for p in 0..2 {
            for d in 0..2 {
                assert_eq!(table.mean(p, 0, d), 0.0);
                assert!(table.mean(p, 1, d) > 0.0);
            }
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let cfg = RadioConfig::symmetric(2, vec![0.7, 0.4], 1.0, 0.5, AccessMode::Orthogonal);
        assert_eq!(OracleTable::estimate(&cfg, 500, 3), OracleTable::estimate(&cfg, 500, 3));
    }

    #[test]
    fn joint_payoff_layout() {
        let t = OracleTable::from_joint_payoffs(2, 2, |p, prof| (10 * p + 2 * prof[0] + prof[1]) as f64);
        assert_eq!(t.payoff(0, &[1, 0]), 2.0);
        assert_eq!(t.payoff(1, &[1, 1]), 13.0);
        assert_eq!(t.mean(1, 0, 1), 12.0);
        assert_eq!(t.best(1, 1), 13.0);
    }
}
