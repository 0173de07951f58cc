//! Evaluation of finished runs: consistency ratio and per-round regret,
//! empirical joint frequencies and their distance to the correlated
//! equilibria, calibration scores, throughput and reference rate curves.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::forecaster::parse_sparse_label;
use crate::game::RunTrace;
use crate::lp::{solve_lp, LinearProgram, LpError, LpStatus};
use crate::oracle::OracleTable;
use crate::profile::{checked_pow, decode_joint, encode_joint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("player {player}: optimal expected reward sums to zero over the first {t} trials")]
    DegenerateDenominator { player: usize, t: u64 },
    #[error("empty window")]
    EmptyWindow,
    #[error("correlated-equilibrium LP: {0}")]
    Lp(#[from] LpError),
    #[error("correlated-equilibrium LP is {0:?}; the polytope is never empty")]
    CeInfeasible(LpStatus),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("trace has no forecast for player {0}")]
    NoForecasts(usize),
}

/// Consistency ratio and per-round regret of one player at horizon `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyPoint {
    pub t: u64,
    /// `Σ f(played) / Σ f*`.
    pub s: f64,
    /// `(1/T) Σ (f(played) − f*)`.
    pub regret: f64,
    pub played_sum: f64,
    pub optimal_sum: f64,
}

impl ConsistencyPoint {
    /// `|S − (1 + regret·T/Σf*)|`.
    pub fn identity_error(&self) -> f64 {
        (self.s - (1.0 + self.regret * self.t as f64 / self.optimal_sum)).abs()
    }
}

/// Consistency of `player` at each horizon in `checkpoints` (ascending,
/// horizons beyond the trace are skipped), scoring the played arms with the
/// oracle means against the realized opponent profiles.
pub fn consistency_series(trace: &RunTrace, oracle: &OracleTable, player: usize, checkpoints: &[u64]) -> Result<Vec<ConsistencyPoint>, MetricsError> {
    let mut out = Vec::new();
    let mut played = 0.0;
    let mut optimal = 0.0;
    let mut next = checkpoints.iter().copied().filter(|&c| c >= 1 && c <= trace.len() as u64).peekable();
    for (i, trial) in trace.trials.iter().enumerate() {
        let rec = &trial.players[player];
        played += oracle.mean(player, rec.arm, rec.opponents);
        optimal += oracle.best(player, rec.opponents);
        let t = i as u64 + 1;
        while next.peek() == Some(&t) {
            next.next();
            if optimal <= 0.0 {
                return Err(MetricsError::DegenerateDenominator { player, t });
            }
            let s = played / optimal;
            assert!(s <= 1.0 + 1e-12, "consistency ratio {s} above 1");
            out.push(ConsistencyPoint { t, s: s.min(1.0), regret: (played - optimal) / t as f64, played_sum: played, optimal_sum: optimal });
        }
    }
    Ok(out)
}

/// Normalized visit counts of the `M^K` joint profiles among `codes`.
pub fn empirical_frequencies(codes: &[usize], profiles: usize) -> Result<Vec<f64>, MetricsError> {
    if codes.is_empty() {
        return Err(MetricsError::EmptyWindow);
    }
    let mut counts = vec![0u64; profiles];
    for &c in codes {
        if c >= profiles {
            return Err(MetricsError::Dimension(format!("profile code {c} out of range {profiles}")));
        }
        counts[c] += 1;
    }
    let n = codes.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// Rows `Σ_{m: m_k = i} π(m)(f_k(i, m₋k) − f_k(j, m₋k)) ≥ 0` for every player `k`
/// and ordered arm pair `i ≠ j`, as coefficient vectors over joint profiles.
pub fn ce_constraints(oracle: &OracleTable) -> Vec<Vec<f64>> {
    let k = oracle.players();
    let m = oracle.channels();
    let profiles = checked_pow(m, k).expect("joint profile count overflows usize");
    let decoded: Vec<Vec<usize>> = (0..profiles).map(|c| decode_joint(c, k, m)).collect();
    let mut rows = Vec::new();
    for p in 0..k {
        for i in 0..m {
            for j in 0..m {
                if i == j {
                    continue;
                }
                let row = decoded
                    .iter()
                    .map(|prof| {
                        if prof[p] != i {
                            return 0.0;
                        }
                        let mut dev = prof.clone();
                        dev[p] = j;
                        oracle.payoff(p, prof) - oracle.payoff(p, &dev)
                    })
                    .collect();
                rows.push(row);
            }
        }
    }
    rows
}

/// Whether `pi` meets every correlated-equilibrium inequality to within `tol`.
pub fn is_correlated_equilibrium(pi: &[f64], oracle: &OracleTable, tol: f64) -> bool {
    ce_constraints(oracle).iter().all(|row| row.iter().zip(pi).map(|(a, p)| a * p).sum::<f64>() >= -tol)
}

/// `min_{π ∈ CE} ‖π̂ − π‖₁`.
pub fn ce_distance(pi_hat: &[f64], oracle: &OracleTable) -> Result<f64, MetricsError> {
    let rows = ce_constraints(oracle);
    let p = pi_hat.len();
    if rows.first().is_some_and(|r| r.len() != p) {
        return Err(MetricsError::Dimension(format!("{p} frequencies for {} profiles", rows[0].len())));
    }
    // Variables: π (p), then t (p) with t ≥ |π̂ − π|.
    let mut objective = vec![0.0; 2 * p];
    objective[p..].iter_mut().for_each(|c| *c = 1.0);
    let mut lp = LinearProgram::new(objective);
    for q in 0..p {
        let mut up = vec![0.0; 2 * p];
        up[q] = 1.0;
        up[p + q] = -1.0;
        lp.add_le(up, pi_hat[q]);
        let mut down = vec![0.0; 2 * p];
        down[q] = -1.0;
        down[p + q] = -1.0;
        lp.add_le(down, -pi_hat[q]);
    }
    let mut sum = vec![0.0; 2 * p];
    sum[..p].iter_mut().for_each(|c| *c = 1.0);
    lp.add_eq(sum, 1.0);
    for row in rows {
        let mut full = vec![0.0; 2 * p];
        full[..p].copy_from_slice(&row);
        lp.add_ge(full, 0.0);
    }
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(sol.objective_value.max(0.0)),
        other => Err(MetricsError::CeInfeasible(other)),
    }
}

/// Calibration score of one completed forecaster period recomputed from the
/// trace.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodCalibration {
    pub seq: u64,
    pub r: u32,
    pub eps: f64,
    pub length: u64,
    /// `Σ_q ‖(1/T) Σ 𝟙{Q=q}(p_q − δ_d)‖₁`.
    pub score: f64,
}

/// `Σ_q ‖(1/T) Σ_t 𝟙{Q_t=q}(p_q − δ_{d_t})‖₁` over `(point, outcome)` pairs,
/// grouping by identical points.
pub fn calibration_score(forecasts: &[(Vec<f64>, usize)]) -> f64 {
    if forecasts.is_empty() {
        return 0.0;
    }
    let mut blocks: BTreeMap<Vec<u64>, Vec<f64>> = BTreeMap::new();
    for (p, d) in forecasts {
        let key: Vec<u64> = p.iter().map(|x| x.to_bits()).collect();
        let block = blocks.entry(key).or_insert_with(|| vec![0.0; p.len()]);
        for (b, x) in block.iter_mut().zip(p) {
            *b += x;
        }
        block[*d] -= 1.0;
    }
    let t = forecasts.len() as f64;
    blocks.values().map(|b| b.iter().map(|v| v.abs()).sum::<f64>() / t).sum()
}

/// Scores of every completed forecaster period of `player`, rebuilt from the
/// forecast labels and realized opponent profiles in the trace.
pub fn calibration_scores(trace: &RunTrace, player: usize) -> Result<Vec<PeriodCalibration>, MetricsError> {
    let outcomes = checked_pow(trace.channels, trace.players - 1).expect("opponent profile count overflows usize");
    let mut periods: Vec<(u64, u32, Forecasts)> = Vec::new();
    let mut any = false;
    for trial in &trace.trials {
        let rec = &trial.players[player];
        let Some(fc) = &rec.forecast else { continue };
        any = true;
        let point = parse_sparse_label(&fc.label, outcomes).ok_or_else(|| MetricsError::Dimension(format!("bad forecast label {}", fc.label)))?;
        match periods.last_mut() {
            Some((seq, _, items)) if *seq == fc.seq => items.push((point, rec.opponents)),
            _ => periods.push((fc.seq, fc.r, vec![(point, rec.opponents)])),
        }
    }
    if !any {
        return Err(MetricsError::NoForecasts(player));
    }
    Ok(periods
        .into_iter()
        .filter(|(_, r, items)| items.len() as u64 == 1u64 << r)
        .map(|(seq, r, items)| PeriodCalibration {
            seq,
            r,
            eps: crate::forecaster::period_eps(r, outcomes),
            length: items.len() as u64,
            score: calibration_score(&items),
        })
        .collect())
}

/// Forecast points paired with the outcome that followed.
type Forecasts = Vec<(Vec<f64>, usize)>;

/// Average reward per player and their sum at each checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputPoint {
    pub t: u64,
    pub per_player: Vec<f64>,
    pub aggregate: f64,
}

/// Cumulative average throughput of every player at each checkpoint.
pub fn throughput_series(trace: &RunTrace, checkpoints: &[u64]) -> Vec<ThroughputPoint> {
    let mut sums = vec![0.0; trace.players];
    let mut out = Vec::new();
    let mut next = checkpoints.iter().copied().filter(|&c| c >= 1 && c <= trace.len() as u64).peekable();
    for (i, trial) in trace.trials.iter().enumerate() {
        for (s, rec) in sums.iter_mut().zip(&trial.players) {
            *s += rec.reward;
        }
        let t = i as u64 + 1;
        while next.peek() == Some(&t) {
            next.next();
            let per_player: Vec<f64> = sums.iter().map(|s| s / t as f64).collect();
            let aggregate = per_player.iter().sum();
            out.push(ThroughputPoint { t, per_player, aggregate });
        }
    }
    out
}

/// Empirical joint frequencies of the first `t` trials.
pub fn pi_hat_at(trace: &RunTrace, t: u64) -> Result<Vec<f64>, MetricsError> {
    let profiles = checked_pow(trace.channels, trace.players).expect("joint profile count overflows usize");
    let codes: Vec<usize> = trace.trials.iter().take(t as usize).map(|tr| encode_joint(&tr.profile, trace.channels)).collect();
    empirical_frequencies(&codes, profiles)
}

/// `Γ_D·√(ln T)/T^{1/(D+1)}` with the convention `Γ_D = D`.
pub fn forecaster_rate(outcomes: usize, t: f64) -> f64 {
    outcomes as f64 * t.ln().sqrt() / t.powf(1.0 / (outcomes as f64 + 1.0))
}

/// `η = p/(2p + d)`.
pub fn regression_exponent(smoothness: f64, dimension: f64) -> f64 {
    smoothness / (2.0 * smoothness + dimension)
}

/// `(log n / n)^η`.
pub fn regression_rate(n: f64, eta: f64) -> f64 {
    (n.ln() / n).powf(eta)
}

/// `B = (1 − γ)/M^K`, the per-trial probability that exploration produces a
/// given joint profile when every player explores.
pub fn profile_exploration_probability(gamma: f64, channels: usize, players: usize) -> f64 {
    (1.0 - gamma) / (channels as f64).powi(players as i32)
}

/// Expected number of exploration plays of one joint profile after `R`
/// periods: `B·R(R+1)/2`.
pub fn expected_profile_samples(b: f64, periods: u32) -> f64 {
    let r = periods as f64;
    b * r * (r + 1.0) / 2.0
}

/// One row of the reference-curve table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRow {
    pub t: u64,
    pub forecaster_bound: f64,
    pub regression_rate: f64,
    /// Periods completed by trial `t` and the expected per-profile exploration
    /// count after them.
    pub periods: u32,
    pub expected_profile_samples: f64,
}

/// Reference curves at the horizons `t_grid`.
pub fn rate_reference_curves(outcomes: usize, b: f64, eta: f64, t_grid: &[u64]) -> Vec<RateRow> {
    t_grid
        .iter()
        .map(|&t| {
            let tf = t as f64;
            let periods = if t >= 2 { crate::strategy::period_of_trial(t) - 1 } else { 0 };
            RateRow {
                t,
                forecaster_bound: forecaster_rate(outcomes, tf),
                regression_rate: regression_rate(tf, eta),
                periods,
                expected_profile_samples: expected_profile_samples(b, periods),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Prisoner's-dilemma-like game where action 1 strictly dominates.
    fn dominant_game() -> OracleTable {
        // payoff(p, profile) for (own, other): (0,0)=3 (0,1)=0 (1,0)=4 (1,1)=1
        let table = [[3.0, 0.0], [4.0, 1.0]];
        OracleTable::from_joint_payoffs(2, 2, |p, prof| table[prof[p]][prof[1 - p]])
    }

    #[test]
    fn dominant_profile_is_equilibrium() {
        let oracle = dominant_game();
        let pi = [0.0, 0.0, 0.0, 1.0];
        assert!(is_correlated_equilibrium(&pi, &oracle, 1e-12));
        assert!(ce_distance(&pi, &oracle).unwrap() < 1e-9);
    }

    #[test]
    fn dominated_profile_distance_matches_grid_search() {
        let oracle = dominant_game();
        let pi_hat = [1.0, 0.0, 0.0, 0.0];
        let lp = ce_distance(&pi_hat, &oracle).unwrap();
        let rows = ce_constraints(&oracle);
        let step = 0.01;
        let n = (1.0 / step) as usize;
        let mut best = f64::INFINITY;
        for a in 0..=n {
            for b in 0..=n - a {
                for c in 0..=n - a - b {
                    let pi = [a as f64 * step, b as f64 * step, c as f64 * step, (n - a - b - c) as f64 * step];
                    if rows.iter().all(|r| r.iter().zip(&pi).map(|(x, p)| x * p).sum::<f64>() >= -1e-12) {
                        let d: f64 = pi.iter().zip(&pi_hat).map(|(x, y)| (x - y).abs()).sum();
                        best = best.min(d);
                    }
                }
            }
        }
        assert!((lp - best).abs() < 2e-2 + 1e-9, "lp {lp} grid {best}");
        assert!(lp <= best + 1e-9);
    }

    #[test]
    fn ce_distance_is_lipschitz() {
        let oracle = OracleTable::from_joint_payoffs(2, 2, |p, prof| if prof[0] == prof[1] { 0.5 } else { 1.0 + p as f64 * 0.1 });
        let a = [0.4, 0.1, 0.2, 0.3];
        let b = [0.3, 0.2, 0.2, 0.3];
        let da = ce_distance(&a, &oracle).unwrap();
        let db = ce_distance(&b, &oracle).unwrap();
        let l1: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
        assert!((da - db).abs() <= l1 + 1e-9);
    }

    #[test]
    fn frequencies() {
        assert_eq!(empirical_frequencies(&[2, 2, 2], 4).unwrap(), vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(empirical_frequencies(&[0, 3, 0, 3], 4).unwrap(), vec![0.5, 0.0, 0.0, 0.5]);
        assert_eq!(empirical_frequencies(&[], 4), Err(MetricsError::EmptyWindow));
    }

    #[test]
    fn calibration_of_correct_diracs_is_zero() {
        let items: Vec<(Vec<f64>, usize)> = (0..10).map(|i| if i % 3 == 0 { (vec![1.0, 0.0], 0) } else { (vec![0.0, 1.0], 1) }).collect();
        assert_eq!(calibration_score(&items), 0.0);
    }

    #[test]
    fn calibration_single_block() {
        let items = vec![(vec![0.5, 0.5], 0), (vec![0.5, 0.5], 0)];
        // Block sum (1 − 2, 1) / 2 = (−0.5, 0.5).
        assert_eq!(calibration_score(&items), 1.0);
    }

    #[test]
    fn rate_curves() {
        for t in [3.0, 10.0, 1e4] {
            assert!(forecaster_rate(4, t) > forecaster_rate(2, t));
        }
        assert_eq!(regression_exponent(2.0, 2.0), 1.0 / 3.0);
        assert!(profile_exploration_probability(0.05, 2, 2) < 1.0);
        assert_eq!(expected_profile_samples(0.5, 3), 3.0);
    }
}
