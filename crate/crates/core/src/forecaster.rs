//! Calibrated forecaster over opponent profiles.
//!
//! Forecasts are points of the lattice `{i/n : Σ i = n}` on the outcome
//! simplex, with `n = ceil(D/ε_r)` and `ε_r = 2^{−r/(D+1)}` in period `r` of
//! length `2^r`. Within a period the forecaster keeps, for every lattice point
//! `q` it has used, the running block `u_q = (1/t)Σ 𝟙{Q=q}(p_q − δ_d)` and
//! picks its next mixed strategy by an approachability LP that steers the
//! stacked vector `u` toward the l1 ball of radius `ε_r`.
//!
//! The lattice is never enumerated. Every unused point has a zero block, so
//! all of them contribute identical zero columns to the LP; one representative
//! ("fresh") column stands in for the lot, which keeps the LP exact while its
//! size tracks the points actually used.

use std::collections::HashMap;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use thiserror::Error;

use crate::lp::{lattice_cardinality, lattice_resolution, project_l2_onto_l1_ball_with_threshold, solve_lp, LinearProgram, LpError, LpStatus};
use crate::rng::Stream;

/// Largest LP slack accepted before the step is declared broken.
pub const APPROACHABILITY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForecastError {
    #[error("outcome {outcome} out of range for {outcomes} outcomes")]
    OutcomeOutOfRange { outcome: usize, outcomes: usize },
    #[error("approachability LP slack {slack:e} exceeds tolerance")]
    ApproachabilityViolated { slack: f64 },
    #[error("observe called without a pending forecast")]
    NoPendingForecast,
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// What to play when the regret vector already lies in the target ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InsidePolicy {
    /// Keep the current mixed strategy.
    #[default]
    Keep,
    /// Switch to the uniform distribution over the whole lattice.
    Uniform,
}

/// How the next mixed strategy is chosen from the approachability half-space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    /// Among admissible strategies, the one with the least growth of the
    /// calibration score if outcomes arrived at their smoothed frequencies.
    #[default]
    Calibrated,
    /// The strategy with the most negative worst-case violation; inside the
    /// ball, `inside_policy` applies.
    MinSlack,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecasterOptions {
    #[serde(default)]
    pub selection: Selection,
    /// Used by [`Selection::MinSlack`] only.
    #[serde(default)]
    pub inside_policy: InsidePolicy,
    /// Weight of the carried-over strategy when a period succeeds; the rest
    /// goes to the uniform distribution.
    #[serde(default = "default_carry")]
    pub carry: f64,
}

fn default_carry() -> f64 {
    0.9
}

impl Default for ForecasterOptions {
    fn default() -> Self {
        Self { selection: Selection::Calibrated, inside_policy: InsidePolicy::Keep, carry: default_carry() }
    }
}

/// Precision of period `r` for `D` outcomes.
pub fn period_eps(r: u32, outcomes: usize) -> f64 {
    2f64.powf(-(r as f64) / (outcomes as f64 + 1.0))
}

/// A lattice point issued as a forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub distribution: Vec<f64>,
    /// Index of the point among those materialized in the current period.
    pub grid_index: usize,
    /// Lattice counts `i` with `distribution = i/n`.
    pub counts: Vec<u32>,
    pub resolution: u32,
}

impl Forecast {
    /// Compact text form `n|j:i_j;...` listing the nonzero counts.
    pub fn sparse_label(&self) -> String {
        let parts: Vec<String> = self.counts.iter().enumerate().filter(|(_, &c)| c > 0).map(|(j, c)| format!("{j}:{c}")).collect();
        format!("{}|{}", self.resolution, parts.join(";"))
    }
}

/// Parses [`Forecast::sparse_label`] back into a probability vector.
pub fn parse_sparse_label(label: &str, outcomes: usize) -> Option<Vec<f64>> {
    let (n, rest) = label.split_once('|')?;
    let n: u32 = n.parse().ok()?;
    let mut counts = vec![0u32; outcomes];
    if !rest.is_empty() {
        for part in rest.split(';') {
            let (j, c) = part.split_once(':')?;
            let j: usize = j.parse().ok()?;
            *counts.get_mut(j)? = c.parse().ok()?;
        }
    }
    if counts.iter().sum::<u32>() != n {
        return None;
    }
    Some(crate::lp::lattice_point(&counts, n))
}

/// End-of-period record.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodRecord {
    /// Running count of periods ended by this forecaster, starting at 0.
    pub seq: u64,
    pub r: u32,
    pub eps: f64,
    pub length: u64,
    /// `Σ_q ‖u_q‖₁` at the end of the period.
    pub score: f64,
    pub reset: bool,
    pub max_slack: f64,
    /// Lattice points forecast at least once in the period.
    pub points_used: usize,
}

/// Per-trial diagnostics returned by [`Forecaster::observe`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// Normalized LP slack of the step that produced the next strategy; NaN
    /// when no LP was needed.
    pub slack: f64,
    pub period_ended: bool,
}

#[derive(Debug, Clone)]
struct Slot {
    counts: Vec<u32>,
    point: Vec<f64>,
    /// `Σ 𝟙{Q=q}(p_q − δ_d)` over the period.
    sum: Vec<f64>,
    hits: u64,
}

/// Result of one approachability step on explicit blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlackwellStep {
    /// Weights on the supplied blocks, followed by the fresh column's weight
    /// when one was offered.
    pub psi: Vec<f64>,
    /// `max_d Σ_q ψ_q g_q(d) − c`, divided by `‖L‖∞`. Zero when `inside`.
    pub slack: f64,
    /// The regret vector already lay in the target ball.
    pub inside: bool,
}

/// Half-space data of one approachability step: normalized outcome rows
/// `g_q(d)/λ` (duplicates of the all-zero-residual row dropped) and the
/// normalized bound `c/λ`, with `λ = ‖L‖∞`.
struct HalfSpace {
    rows: Vec<Vec<f64>>,
    bound: f64,
}

impl HalfSpace {
    /// `None` when `u` already lies in the ball of radius `eps`.
    fn new(blocks: &[(&[f64], &[f64])], eps: f64, fresh_available: bool) -> Option<Self> {
        let outcomes = blocks.first().map(|b| b.0.len()).unwrap_or(0);
        let flat: Vec<f64> = blocks.iter().flat_map(|b| b.1.iter().copied()).collect();
        let (_, theta) = project_l2_onto_l1_ball_with_threshold(&flat, eps);
        if theta == 0.0 {
            return None;
        }
        // Residual L = clamp(u, ±θ); c = L·(u − L), which equals θ·ε.
        let residual: Vec<Vec<f64>> = blocks.iter().map(|b| b.1.iter().map(|&v| v.clamp(-theta, theta)).collect()).collect();
        let c: f64 = residual.iter().zip(blocks).flat_map(|(l, b)| l.iter().zip(b.1).map(|(&li, &ui)| li * (ui - li))).sum();
        let lambda = theta;
        let l_dot_p: Vec<f64> = residual.iter().zip(blocks).map(|(l, b)| l.iter().zip(b.0).map(|(a, p)| a * p).sum()).collect();

        let mut rows = Vec::new();
        let mut zero_row_added = false;
        for d in 0..outcomes {
            if residual.iter().all(|l| l[d] == 0.0) {
                if zero_row_added {
                    continue;
                }
                zero_row_added = true;
            }
            let mut row: Vec<f64> = (0..blocks.len()).map(|q| (l_dot_p[q] - residual[q][d]) / lambda).collect();
            if fresh_available {
                row.push(0.0);
            }
            rows.push(row);
        }
        Some(Self { rows, bound: c / lambda })
    }

    /// Worst normalized violation of `psi`.
    fn slack(&self, psi: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|row| row.iter().zip(psi).map(|(g, w)| g * w).sum::<f64>() - self.bound)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Strategy minimizing the worst violation.
    fn min_slack(&self, ncols: usize) -> Result<(Vec<f64>, f64), ForecastError> {
        let mut objective = vec![0.0; ncols + 1];
        objective[ncols] = 1.0;
        let mut lp = LinearProgram::new(objective);
        lp.bounds[ncols] = (f64::NEG_INFINITY, f64::INFINITY);
        for row in &self.rows {
            let mut r = row.clone();
            r.push(-1.0);
            lp.add_le(r, self.bound);
        }
        let mut simplex_row = vec![1.0; ncols + 1];
        simplex_row[ncols] = 0.0;
        lp.add_eq(simplex_row, 1.0);
        let sol = solve_lp(&lp)?;
        if sol.status != LpStatus::Optimal {
            return Err(LpError::NumericalBreakdown(format!("approachability LP returned {:?}", sol.status)).into());
        }
        let slack = sol.x[ncols];
        if slack > APPROACHABILITY_TOLERANCE {
            return Err(ForecastError::ApproachabilityViolated { slack });
        }
        Ok((normalized(&sol.x[..ncols]), slack))
    }

    /// Strategy minimizing `cost·ψ` among those meeting every half-space
    /// row; `None` if no strategy does.
    fn cheapest_admissible(&self, cost: &[f64]) -> Result<Option<Vec<f64>>, ForecastError> {
        let ncols = cost.len();
        let mut lp = LinearProgram::new(cost.to_vec());
        for row in &self.rows {
            lp.add_le(row.clone(), self.bound);
        }
        lp.add_eq(vec![1.0; ncols], 1.0);
        let sol = solve_lp(&lp)?;
        match sol.status {
            LpStatus::Optimal => Ok(Some(normalized(&sol.x))),
            _ => Ok(None),
        }
    }
}

fn normalized(x: &[f64]) -> Vec<f64> {
    let mut psi: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = psi.iter().sum();
    psi.iter_mut().for_each(|v| *v /= total);
    psi
}

/// One approachability step.
///
/// `blocks[q] = (p_q, u_q)` are the lattice points with their regret blocks;
/// every other lattice point has a zero block and is represented by a single
/// extra column when `fresh_available`. Returns the mixed strategy minimizing
/// the worst-case violation of
/// `Σ_q ψ_q (L_q·p_q − L_{q,d}) ≤ c` over outcomes `d`, where
/// `L = u − Π(u)`, `c = L·Π(u)` and `Π` projects onto the l1 ball of radius
/// `eps`.
pub fn blackwell_step(blocks: &[(&[f64], &[f64])], eps: f64, fresh_available: bool) -> Result<BlackwellStep, ForecastError> {
    let ncols = blocks.len() + usize::from(fresh_available);
    assert!(ncols > 0, "no columns for the approachability step");
    match HalfSpace::new(blocks, eps, fresh_available) {
        None => Ok(BlackwellStep { psi: Vec::new(), slack: 0.0, inside: true }),
        Some(h) => {
            let (psi, slack) = h.min_slack(ncols)?;
            Ok(BlackwellStep { psi, slack, inside: false })
        }
    }
}

/// Approachability step with a secondary objective: among strategies meeting
/// every half-space row, the one minimizing `cost·ψ`. Inside the ball every
/// strategy qualifies and the cheapest column is played outright. Falls back
/// to the minimum-violation strategy if no strategy meets the rows.
pub fn admissible_step(blocks: &[(&[f64], &[f64])], eps: f64, fresh_available: bool, cost: &[f64]) -> Result<BlackwellStep, ForecastError> {
    let ncols = blocks.len() + usize::from(fresh_available);
    assert_eq!(cost.len(), ncols, "one cost per column");
    let Some(h) = HalfSpace::new(blocks, eps, fresh_available) else {
        let best = cost.iter().enumerate().fold(0, |b, (i, &c)| if c < cost[b] { i } else { b });
        let mut psi = vec![0.0; ncols];
        psi[best] = 1.0;
        return Ok(BlackwellStep { psi, slack: 0.0, inside: true });
    };
    match h.cheapest_admissible(cost)? {
        Some(psi) => {
            let slack = h.slack(&psi);
            if slack > APPROACHABILITY_TOLERANCE {
                return Err(ForecastError::ApproachabilityViolated { slack });
            }
            Ok(BlackwellStep { psi, slack, inside: false })
        }
        None => {
            let (psi, slack) = h.min_slack(ncols)?;
            Ok(BlackwellStep { psi, slack, inside: false })
        }
    }
}

/// Change of `‖S_q‖₁` when point `p` is forecast once more and the outcome
/// arrives as its expectation `law`; `sum` is the block's running sum
/// `Σ (p − δ_d)`. For an unused point this is `‖p − law‖₁`.
pub fn drift_increment(point: &[f64], sum: &[f64], law: &[f64]) -> f64 {
    point.iter().zip(sum).zip(law).map(|((&p, &s), &w)| (s + p - w).abs() - s.abs()).sum()
}

/// Largest-remainder rounding of a probability vector to resolution `n`,
/// which gives an l1-nearest lattice point. Ties go to the lower index.
pub fn round_to_lattice(x: &[f64], n: u32) -> Vec<u32> {
    let scaled: Vec<f64> = x.iter().map(|v| v.max(0.0) * n as f64).collect();
    let mut counts: Vec<u32> = scaled.iter().map(|v| v.floor() as u32).collect();
    let assigned: u32 = counts.iter().sum();
    let mut remaining = n.saturating_sub(assigned);
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = scaled[a] - scaled[a].floor();
        let fb = scaled[b] - scaled[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        counts[i] += 1;
        remaining -= 1;
    }
    // Inputs summing above 1 can overshoot after flooring; trim from the end.
    let mut excess = counts.iter().sum::<u32>().saturating_sub(n);
    for c in counts.iter_mut().rev() {
        let take = excess.min(*c);
        *c -= take;
        excess -= take;
    }
    counts
}

/// The forecaster of one player.
#[derive(Debug, Clone)]
pub struct Forecaster {
    outcomes: usize,
    options: ForecasterOptions,
    rng: Stream,
    r: u32,
    eps: f64,
    n: u32,
    /// Lattice cardinality at the current resolution; `None` if it exceeds `u128`.
    cardinality: Option<u128>,
    t: u64,
    seq: u64,
    slots: Vec<Slot>,
    index: HashMap<Vec<u32>, usize>,
    /// Mixed strategy: weight per slot plus a share spread uniformly over the
    /// whole lattice.
    psi: Vec<f64>,
    psi_uniform: f64,
    outcome_counts: Vec<u64>,
    lifetime_counts: Vec<u64>,
    pending: Option<usize>,
    resets: u64,
    period_max_slack: f64,
    history: Vec<PeriodRecord>,
}

impl Forecaster {
    /// A forecaster over `outcomes` outcomes in period 1 with a uniform
    /// strategy and zero regret. With a single outcome every forecast is the
    /// point mass and no learning happens.
    pub fn new(outcomes: usize, options: ForecasterOptions, rng: Stream) -> Self {
        assert!(outcomes >= 1, "need at least one outcome");
        let mut f = Self {
            outcomes,
            options,
            rng,
            r: 1,
            eps: 1.0,
            n: 1,
            cardinality: Some(1),
            t: 0,
            seq: 0,
            slots: Vec::new(),
            index: HashMap::new(),
            psi: Vec::new(),
            psi_uniform: 1.0,
            outcome_counts: vec![0; outcomes],
            lifetime_counts: vec![0; outcomes],
            pending: None,
            resets: 0,
            period_max_slack: f64::NEG_INFINITY,
            history: Vec::new(),
        };
        f.enter_period(1);
        f
    }

    fn enter_period(&mut self, r: u32) {
        self.r = r;
        if self.outcomes == 1 {
            self.eps = period_eps(r, 1);
            self.n = 1;
            self.cardinality = Some(1);
        } else {
            self.eps = period_eps(r, self.outcomes);
            self.n = lattice_resolution(self.outcomes, self.eps);
            self.cardinality = lattice_cardinality(self.outcomes, self.n);
        }
        self.t = 0;
        self.outcome_counts.iter_mut().for_each(|c| *c = 0);
        self.period_max_slack = f64::NEG_INFINITY;
    }

    pub fn outcomes(&self) -> usize {
        self.outcomes
    }

    /// Current period index `r ≥ 1`.
    pub fn period(&self) -> u32 {
        self.r
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn resolution(&self) -> u32 {
        self.n
    }

    pub fn period_length(&self) -> u64 {
        1u64 << self.r.min(62)
    }

    pub fn trials_in_period(&self) -> u64 {
        self.t
    }

    /// Number of lattice points `N_ε` in the current period.
    pub fn grid_cardinality(&self) -> Option<u128> {
        self.cardinality
    }

    /// Number of reset-to-period-1 events so far.
    pub fn resets(&self) -> u64 {
        self.resets
    }

    /// Records of all ended periods.
    pub fn history(&self) -> &[PeriodRecord] {
        &self.history
    }

    /// Current regret block of the lattice point with counts `counts`, if it
    /// has been used this period.
    pub fn regret_block(&self, counts: &[u32]) -> Option<Vec<f64>> {
        let &q = self.index.get(counts)?;
        let t = self.t.max(1) as f64;
        Some(self.slots[q].sum.iter().map(|s| s / t).collect())
    }

    /// `Σ_q ‖u_q‖₁` for the current period so far.
    pub fn current_score(&self) -> f64 {
        if self.t == 0 {
            return 0.0;
        }
        let t = self.t as f64;
        self.slots.iter().map(|s| s.sum.iter().map(|v| v.abs()).sum::<f64>() / t).sum()
    }

    /// Weight of every materialized point in the current strategy and the
    /// uniform share.
    pub fn mixed_strategy(&self) -> (Vec<(Vec<u32>, f64)>, f64) {
        let pts = self.slots.iter().zip(&self.psi).filter(|(_, &w)| w > 0.0).map(|(s, &w)| (s.counts.clone(), w)).collect();
        (pts, self.psi_uniform)
    }

    /// Replaces the current strategy by the given weights on lattice points of
    /// the current resolution. Weights are normalized.
    pub fn set_mixed_strategy(&mut self, points: &[(Vec<u32>, f64)]) {
        self.psi.iter_mut().for_each(|w| *w = 0.0);
        self.psi_uniform = 0.0;
        let total: f64 = points.iter().map(|p| p.1).sum();
        for (counts, w) in points {
            assert_eq!(counts.iter().sum::<u32>(), self.n, "point is not on the current lattice");
            let q = self.materialize(counts.clone());
            self.psi[q] += w / total;
        }
    }

    fn materialize(&mut self, counts: Vec<u32>) -> usize {
        if let Some(&q) = self.index.get(&counts) {
            return q;
        }
        let point = crate::lp::lattice_point(&counts, self.n);
        let q = self.slots.len();
        self.slots.push(Slot { point, sum: vec![0.0; self.outcomes], counts: counts.clone(), hits: 0 });
        self.psi.push(0.0);
        self.index.insert(counts, q);
        q
    }

    /// Uniform lattice point by stars and bars.
    fn uniform_point(&mut self) -> Vec<u32> {
        let d = self.outcomes;
        let n = self.n as usize;
        if d == 1 {
            return vec![self.n];
        }
        let mut bars: Vec<usize> = sample_indices(&mut self.rng, n + d - 1, d - 1).into_vec();
        bars.sort_unstable();
        let mut counts = Vec::with_capacity(d);
        let mut prev = 0usize;
        for (i, &b) in bars.iter().enumerate() {
            let start = if i == 0 { 0 } else { prev + 1 };
            counts.push((b - start) as u32);
            prev = b;
        }
        let start = if bars.is_empty() { 0 } else { prev + 1 };
        counts.push((n + d - 1 - start) as u32);
        counts
    }

    /// Draws `Q_t` from the current strategy.
    pub fn emit_forecast(&mut self) -> Forecast {
        let u: f64 = self.rng.gen();
        let q = if u < self.psi_uniform || self.slots.is_empty() {
            let counts = self.uniform_point();
            self.materialize(counts)
        } else {
            let mut acc = self.psi_uniform;
            let mut chosen = None;
            for (q, &w) in self.psi.iter().enumerate() {
                acc += w;
                if u < acc {
                    chosen = Some(q);
                    break;
                }
            }
            // Rounding can leave the cumulative sum a hair below 1.
            chosen.unwrap_or_else(|| self.psi.iter().rposition(|&w| w > 0.0).unwrap_or(0))
        };
        self.pending = Some(q);
        let slot = &self.slots[q];
        Forecast { distribution: slot.point.clone(), grid_index: q, counts: slot.counts.clone(), resolution: self.n }
    }

    /// Records outcome `d` for the pending forecast and prepares the next
    /// strategy, ending the period when it is full.
    pub fn observe(&mut self, d: usize) -> Result<StepInfo, ForecastError> {
        if d >= self.outcomes {
            return Err(ForecastError::OutcomeOutOfRange { outcome: d, outcomes: self.outcomes });
        }
        let q = self.pending.take().ok_or(ForecastError::NoPendingForecast)?;
        {
            let slot = &mut self.slots[q];
            for (s, p) in slot.sum.iter_mut().zip(&slot.point) {
                *s += p;
            }
            slot.sum[d] -= 1.0;
            slot.hits += 1;
        }
        self.t += 1;
        self.outcome_counts[d] += 1;
        self.lifetime_counts[d] += 1;

        if self.t >= self.period_length() {
            self.end_period();
            return Ok(StepInfo { slack: f64::NAN, period_ended: true });
        }
        if self.outcomes == 1 {
            return Ok(StepInfo { slack: f64::NAN, period_ended: false });
        }
        let slack = self.update_strategy()?;
        Ok(StepInfo { slack, period_ended: false })
    }

    fn update_strategy(&mut self) -> Result<f64, ForecastError> {
        let t = self.t as f64;
        let active: Vec<usize> = (0..self.slots.len()).filter(|&q| self.slots[q].sum.iter().any(|&v| v != 0.0)).collect();
        let blocks_u: Vec<Vec<f64>> = active.iter().map(|&q| self.slots[q].sum.iter().map(|s| s / t).collect()).collect();
        let fresh = self.fresh_point(&active);
        let blocks: Vec<(&[f64], &[f64])> = active.iter().zip(&blocks_u).map(|(&q, u)| (self.slots[q].point.as_slice(), u.as_slice())).collect();

        let step = match self.options.selection {
            Selection::MinSlack => {
                if blocks.is_empty() {
                    // Every used block is zero: the regret is at the origin.
                    return Ok(self.inside_update());
                }
                let step = blackwell_step(&blocks, self.eps, fresh.is_some())?;
                if step.inside {
                    return Ok(self.inside_update());
                }
                step
            }
            Selection::Calibrated => {
                let law = self.smoothed_law();
                let mut cost: Vec<f64> = active.iter().map(|&q| drift_increment(&self.slots[q].point, &self.slots[q].sum, &law)).collect();
                if let Some(counts) = &fresh {
                    let p = crate::lp::lattice_point(counts, self.n);
                    cost.push(drift_increment(&p, &vec![0.0; self.outcomes], &law));
                }
                if blocks.is_empty() {
                    BlackwellStep { psi: vec![1.0], slack: 0.0, inside: true }
                } else {
                    admissible_step(&blocks, self.eps, fresh.is_some(), &cost)?
                }
            }
        };

        self.psi.iter_mut().for_each(|w| *w = 0.0);
        self.psi_uniform = 0.0;
        for (&q, &w) in active.iter().zip(&step.psi) {
            self.psi[q] = w;
        }
        if let Some(counts) = fresh {
            let w = step.psi[active.len()];
            if w > 0.0 {
                let q = self.materialize(counts);
                self.psi[q] += w;
            }
        }
        if step.inside {
            return Ok(f64::NAN);
        }
        self.period_max_slack = self.period_max_slack.max(step.slack);
        Ok(step.slack)
    }

    /// Outcome frequencies over the forecaster's lifetime with a
    /// half-count prior on every outcome.
    fn smoothed_law(&self) -> Vec<f64> {
        let total: u64 = self.lifetime_counts.iter().sum();
        let denom = total as f64 + 0.5 * self.outcomes as f64;
        self.lifetime_counts.iter().map(|&c| (c as f64 + 0.5) / denom).collect()
    }

    fn inside_update(&mut self) -> f64 {
        if self.options.inside_policy == InsidePolicy::Uniform {
            self.psi.iter_mut().for_each(|w| *w = 0.0);
            self.psi_uniform = 1.0;
        }
        f64::NAN
    }

    /// The zero-block lattice point closest to the smoothed outcome law, if
    /// any exists: its rounding when unused, else the best of the unused
    /// materialized points and the unit-move neighbors of the rounding, else
    /// a random unused point.
    fn fresh_point(&mut self, active: &[usize]) -> Option<Vec<u32>> {
        let is_zero = |s: &Self, c: &[u32]| s.index.get(c).is_none_or(|&q| s.slots[q].sum.iter().all(|&v| v == 0.0));
        if let Some(card) = self.cardinality {
            if card <= active.len() as u128 {
                return None;
            }
        }
        let law = self.smoothed_law();
        let rounded = round_to_lattice(&law, self.n);
        if is_zero(self, &rounded) {
            return Some(rounded);
        }
        let n = self.n as f64;
        let distance = |c: &[u32]| c.iter().zip(&law).map(|(&ci, &w)| (ci as f64 / n - w).abs()).sum::<f64>();
        let mut best: Option<(f64, Vec<u32>)> = None;
        let consider = |c: Vec<u32>, best: &mut Option<(f64, Vec<u32>)>| {
            let dist = distance(&c);
            if best.as_ref().is_none_or(|(b, _)| dist < *b) {
                *best = Some((dist, c));
            }
        };
        for slot in &self.slots {
            if slot.sum.iter().all(|&v| v == 0.0) {
                consider(slot.counts.clone(), &mut best);
            }
        }
        for i in 0..self.outcomes {
            if rounded[i] == 0 {
                continue;
            }
            for j in 0..self.outcomes {
                if i == j {
                    continue;
                }
                let mut c = rounded.clone();
                c[i] -= 1;
                c[j] += 1;
                if is_zero(self, &c) {
                    consider(c, &mut best);
                }
            }
        }
        if let Some((_, c)) = best {
            return Some(c);
        }
        // A zero block exists (checked above); random search finds one
        // quickly unless nearly the whole lattice is in use.
        for _ in 0..10_000 {
            let c = self.uniform_point();
            if is_zero(self, &c) {
                return Some(c);
            }
        }
        let mut found = None;
        let mut counts = vec![0u32; self.outcomes];
        visit_compositions(&mut counts, 0, self.n, &mut |c| {
            if found.is_none() && is_zero(self, c) {
                found = Some(c.to_vec());
            }
        });
        found
    }

    fn end_period(&mut self) {
        let len = self.t as f64;
        let score: f64 = self.slots.iter().map(|s| s.sum.iter().map(|v| v.abs()).sum::<f64>() / len).sum();
        let success = score <= self.eps;
        let record = PeriodRecord {
            seq: self.seq,
            r: self.r,
            eps: self.eps,
            length: self.t,
            score,
            reset: !success,
            max_slack: self.period_max_slack,
            points_used: self.slots.iter().filter(|s| s.hits > 0).count(),
        };
        log::debug!("period {} (r={}) ended: score {:.4} vs eps {:.4}", record.seq, record.r, score, self.eps);
        self.history.push(record);
        self.seq += 1;

        let carried: Vec<(Vec<f64>, f64)> = if success {
            self.slots.iter().zip(&self.psi).filter(|(_, &w)| w > 0.0).map(|(s, &w)| (s.point.clone(), w)).collect()
        } else {
            Vec::new()
        };
        let carried_uniform = self.psi_uniform;

        self.slots.clear();
        self.index.clear();
        self.psi.clear();

        if success {
            self.enter_period(self.r + 1);
            let carry = self.options.carry;
            for (point, w) in carried {
                let counts = round_to_lattice(&point, self.n);
                let q = self.materialize(counts);
                self.psi[q] += carry * w;
            }
            self.psi_uniform = carry * carried_uniform + (1.0 - carry);
        } else {
            self.resets += 1;
            self.enter_period(1);
            self.psi_uniform = 1.0;
        }
    }
}

fn visit_compositions(counts: &mut [u32], pos: usize, remaining: u32, visit: &mut dyn FnMut(&[u32])) {
    let last = counts.len() - 1;
    if pos == last {
        counts[pos] = remaining;
        visit(counts);
        return;
    }
    for c in 0..=remaining {
        counts[pos] = c;
        visit_compositions(counts, pos + 1, remaining - c, visit);
    }
    counts[pos] = 0;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn forecaster(d: usize, seed: u64) -> Forecaster {
        Forecaster::new(d, ForecasterOptions::default(), substream(seed, "fc", 0))
    }

    #[test]
    fn init_two_outcomes() {
        let f = forecaster(2, 1);
        assert_eq!(f.period(), 1);
        assert!((f.eps() - 2f64.powf(-1.0 / 3.0)).abs() < 1e-15);
        assert_eq!(f.resolution(), 3);
        assert_eq!(f.grid_cardinality(), Some(4));
        assert_eq!(f.mixed_strategy(), (vec![], 1.0));
        assert_eq!(f.current_score(), 0.0);
    }

    #[test]
    fn uniform_draws_cover_the_grid_evenly() {
        let mut f = forecaster(2, 3);
        let n = 100_000;
        let mut hist = [0usize; 4];
        for _ in 0..n {
            let fc = f.emit_forecast();
            hist[fc.counts[0] as usize] += 1;
            f.pending = None;
        }
        let p = 0.25;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for h in hist {
            assert!((h as f64 - n as f64 * p).abs() < 3.0 * sigma, "{hist:?}");
        }
    }

    #[test]
    fn dirac_strategy_is_deterministic() {
        let mut f = forecaster(3, 4);
        let n = f.resolution();
        f.set_mixed_strategy(&[(vec![1, n - 1, 0], 1.0)]);
        for _ in 0..100 {
            let fc = f.emit_forecast();
            assert_eq!(fc.counts, vec![1, n - 1, 0]);
            let expected: Vec<f64> = fc.counts.iter().map(|&c| c as f64 / n as f64).collect();
            for (a, b) in fc.distribution.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-15);
            }
            f.pending = None;
        }
    }

    #[test]
    fn single_observation_block() {
        let mut f = forecaster(2, 5);
        let fc = f.emit_forecast();
        f.observe(1).unwrap();
        let u = f.regret_block(&fc.counts).unwrap();
        assert_eq!(u, vec![fc.distribution[0], fc.distribution[1] - 1.0]);
    }

    #[test]
    fn correct_dirac_forecasts_keep_zero_regret() {
        let mut f = forecaster(2, 6);
        let n = f.resolution();
        f.set_mixed_strategy(&[(vec![n, 0], 1.0)]);
        let fc = f.emit_forecast();
        f.observe(0).unwrap();
        assert_eq!(f.regret_block(&fc.counts).unwrap(), vec![0.0, 0.0]);
        assert_eq!(f.current_score(), 0.0);
    }

    #[test]
    fn outcome_out_of_range() {
        let mut f = forecaster(2, 7);
        f.emit_forecast();
        assert!(matches!(f.observe(2), Err(ForecastError::OutcomeOutOfRange { .. })));
    }

    #[test]
    fn rounding_is_l1_nearest_on_small_lattices() {
        let mut rng = substream(8, "t", 0);
        for _ in 0..500 {
            let d = rng.gen_range(2..5);
            let n = rng.gen_range(1..7u32);
            let e: Vec<f64> = (0..d).map(|_| -rng.gen::<f64>().ln()).collect();
            let s: f64 = e.iter().sum();
            let x: Vec<f64> = e.iter().map(|v| v / s).collect();
            let r = round_to_lattice(&x, n);
            assert_eq!(r.iter().sum::<u32>(), n);
            let dist = |c: &[u32]| c.iter().zip(&x).map(|(&ci, xi)| (ci as f64 / n as f64 - xi).abs()).sum::<f64>();
            let mut best = f64::INFINITY;
            let mut counts = vec![0u32; d];
            visit_compositions(&mut counts, 0, n, &mut |c| best = best.min(dist(c)));
            assert!(dist(&r) <= best + 1e-12);
        }
    }

    #[test]
    fn sparse_label_round_trip() {
        let fc = Forecast { distribution: vec![0.25, 0.0, 0.75], grid_index: 0, counts: vec![1, 0, 3], resolution: 4 };
        assert_eq!(fc.sparse_label(), "4|0:1;2:3");
        assert_eq!(parse_sparse_label("4|0:1;2:3", 3).unwrap(), vec![0.25, 0.0, 0.75]);
        assert_eq!(parse_sparse_label("4|0:1", 3), None);
    }

    #[test]
    fn inside_ball_step_reports_inside() {
        let p = [0.5, 0.5];
        let u = [0.1, -0.1];
        let step = blackwell_step(&[(&p, &u)], 0.5, true).unwrap();
        assert!(step.inside);
    }

    #[test]
    fn hand_built_step_matches_feasibility_scan() {
        // D = 2, three lattice points at n = 2, all with nonzero blocks.
        let points = [[0.0, 1.0], [0.5, 0.5], [1.0, 0.0]];
        let blocks_u = [[0.3, -0.3], [-0.2, 0.2], [0.05, -0.05]];
        let eps = 0.3;
        let blocks: Vec<(&[f64], &[f64])> = points.iter().zip(&blocks_u).map(|(p, u)| (&p[..], &u[..])).collect();
        let step = blackwell_step(&blocks, eps, false).unwrap();
        assert!(!step.inside);
        assert!(step.slack <= 0.0);

        // Independent recomputation of L and c.
        let flat: Vec<f64> = blocks_u.iter().flatten().copied().collect();
        let (proj, _) = crate::lp::project_l2_onto_l1_ball_with_threshold(&flat, eps);
        let l: Vec<f64> = flat.iter().zip(&proj).map(|(a, b)| a - b).collect();
        let c: f64 = l.iter().zip(&proj).map(|(a, b)| a * b).sum();
        let g = |q: usize, d: usize| l[2 * q] * points[q][0] + l[2 * q + 1] * points[q][1] - l[2 * q + d];
        let violation = |psi: [f64; 3]| (0..2).map(|d| (0..3).map(|q| psi[q] * g(q, d)).sum::<f64>() - c).fold(f64::NEG_INFINITY, f64::max);

        let psi = [step.psi[0], step.psi[1], step.psi[2]];
        assert!(violation(psi) <= 1e-9);

        // Brute-force scan of the strategy simplex at step 1e-3: the feasible
        // region is nonempty and no scanned point beats the LP's worst case.
        let steps = 1000;
        let mut best = f64::INFINITY;
        let mut feasible = 0usize;
        for i in 0..=steps {
            for j in 0..=(steps - i) {
                let a = i as f64 / steps as f64;
                let b = j as f64 / steps as f64;
                let v = violation([a, b, 1.0 - a - b]);
                best = best.min(v);
                if v <= 1e-9 {
                    feasible += 1;
                }
            }
        }
        assert!(feasible > 0);
        assert!(violation(psi) <= best + 1e-9);
    }

    #[test]
    fn fresh_column_always_feasible() {
        let p = [0.0, 1.0];
        let u = [0.4, -0.4];
        let step = blackwell_step(&[(&p, &u)], 0.1, true).unwrap();
        assert!(step.slack <= 1e-12);
    }
}
