use thiserror::Error;

use super::TOLERANCES;

/// `minimize c·x  s.t.  A x ≤ b,  E x = f,  lo ≤ x ≤ hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub ineq_matrix: Vec<Vec<f64>>,
    pub ineq_rhs: Vec<f64>,
    pub eq_matrix: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
    /// Per-variable `(lo, hi)`; either end may be infinite.
    pub bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    /// A program over `n` nonnegative variables with no rows yet.
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            ineq_matrix: Vec::new(),
            ineq_rhs: Vec::new(),
            eq_matrix: Vec::new(),
            eq_rhs: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) {
        self.ineq_matrix.push(row);
        self.ineq_rhs.push(rhs);
    }

    pub fn add_ge(&mut self, row: Vec<f64>, rhs: f64) {
        self.add_le(row.into_iter().map(|a| -a).collect(), -rhs);
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) {
        self.eq_matrix.push(row);
        self.eq_rhs.push(rhs);
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        let mismatch = |what: String| Err(LpError::DimensionMismatch(what));
        if n == 0 {
            return mismatch("program has no variables".into());
        }
        if self.bounds.len() != n {
            return mismatch(format!("{} bounds for {n} variables", self.bounds.len()));
        }
        if self.ineq_matrix.len() != self.ineq_rhs.len() {
            return mismatch(format!("{} inequality rows, {} right-hand sides", self.ineq_matrix.len(), self.ineq_rhs.len()));
        }
        if self.eq_matrix.len() != self.eq_rhs.len() {
            return mismatch(format!("{} equality rows, {} right-hand sides", self.eq_matrix.len(), self.eq_rhs.len()));
        }
        for (i, row) in self.ineq_matrix.iter().chain(&self.eq_matrix).enumerate() {
            if row.len() != n {
                return mismatch(format!("row {i} has {} entries, expected {n}", row.len()));
            }
        }
        if self.ineq_rhs.iter().chain(&self.eq_rhs).any(|v| !v.is_finite()) {
            return mismatch("right-hand sides must be finite".into());
        }
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return mismatch(format!("variable {j} has invalid bounds [{lo}, {hi}]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Optimal point; empty unless `status` is `Optimal`.
    pub x: Vec<f64>,
    pub objective_value: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
}

/// How an original variable maps onto the nonnegative standard-form columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// `x = lo + y`
    Shift { col: usize, lo: f64 },
    /// `x = hi − y`
    Mirror { col: usize, hi: f64 },
    /// `x = y⁺ − y⁻`
    Split { pos: usize, neg: usize },
}

/// Solves `lp` with a dense two-phase tableau simplex.
///
/// Entering columns follow Dantzig's most-negative reduced cost with a
/// two-pass (Harris) ratio test that favors large pivots. After a long run of
/// degenerate pivots Bland's rule, which cannot cycle, takes over until the
/// objective moves again. A pivot budget bounds the total work.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let n = lp.num_vars();

    // Standard-form columns for the original variables.
    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0;
    let mut upper_rows: Vec<(usize, f64)> = Vec::new();
    for &(lo, hi) in &lp.bounds {
        if lo.is_finite() {
            maps.push(VarMap::Shift { col: ncols, lo });
            if hi.is_finite() {
                upper_rows.push((ncols, hi - lo));
            }
            ncols += 1;
        } else if hi.is_finite() {
            maps.push(VarMap::Mirror { col: ncols, hi });
            ncols += 1;
        } else {
            maps.push(VarMap::Split { pos: ncols, neg: ncols + 1 });
            ncols += 2;
        }
    }
    let nstruct = ncols;

    // Translate a row over x into a row over the structural columns plus a
    // constant moved to the right-hand side.
    let translate = |row: &[f64]| -> (Vec<f64>, f64) {
        let mut out = vec![0.0; nstruct];
        let mut constant = 0.0;
        for (j, &a) in row.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            match maps[j] {
                VarMap::Shift { col, lo } => {
                    out[col] += a;
                    constant += a * lo;
                }
                VarMap::Mirror { col, hi } => {
                    out[col] -= a;
                    constant += a * hi;
                }
                VarMap::Split { pos, neg } => {
                    out[pos] += a;
                    out[neg] -= a;
                }
            }
        }
        (out, constant)
    };

    // Collect rows: (coefficients, rhs, is_inequality).
    let mut rows: Vec<(Vec<f64>, f64, bool)> = Vec::new();
    for (row, &b) in lp.ineq_matrix.iter().zip(&lp.ineq_rhs) {
        let (coef, k) = translate(row);
        rows.push((coef, b - k, true));
    }
    for &(col, width) in &upper_rows {
        let mut coef = vec![0.0; nstruct];
        coef[col] = 1.0;
        rows.push((coef, width, true));
    }
    for (row, &f) in lp.eq_matrix.iter().zip(&lp.eq_rhs) {
        let (coef, k) = translate(row);
        rows.push((coef, f - k, false));
    }

    let (cost, _) = translate(&lp.objective);

    let m = rows.len();
    if m == 0 {
        return solve_unconstrained(lp, &maps, &cost);
    }

    // Column layout: structural | slacks (one per inequality) | artificials.
    let nslack = rows.iter().filter(|r| r.2).count();
    let mut needs_artificial = Vec::with_capacity(m);
    for (_, rhs, is_ineq) in &rows {
        needs_artificial.push(!is_ineq || *rhs < 0.0);
    }
    let nart = needs_artificial.iter().filter(|&&a| a).count();
    let total = nstruct + nslack + nart;

    let mut tab = Tableau::new(m, total);
    let mut slack_col = nstruct;
    let mut art_col = nstruct + nslack;
    for (i, (coef, rhs, is_ineq)) in rows.iter().enumerate() {
        let sign = if *rhs < 0.0 { -1.0 } else { 1.0 };
        for (j, &a) in coef.iter().enumerate() {
            tab.set(i, j, sign * a);
        }
        tab.set_rhs(i, sign * rhs);
        if *is_ineq {
            tab.set(i, slack_col, sign);
            if !needs_artificial[i] {
                tab.basis[i] = slack_col;
            }
            slack_col += 1;
        }
        if needs_artificial[i] {
            tab.set(i, art_col, 1.0);
            tab.basis[i] = art_col;
            art_col += 1;
        }
    }

    let rhs_scale = rows.iter().fold(1.0_f64, |s, r| s.max(r.1.abs()));
    let budget = 50 * (m + total) + 1000;
    let mut pivots = 0usize;

    // Phase one: minimize the sum of artificials.
    if nart > 0 {
        let mut phase_one = vec![0.0; total];
        for c in phase_one.iter_mut().skip(nstruct + nslack) {
            *c = 1.0;
        }
        tab.load_objective(&phase_one);
        let allowed = vec![true; total];
        match tab.run(&allowed, budget, &mut pivots)? {
            Phase::Optimal => {}
            Phase::Unbounded => {
                return Err(LpError::NumericalBreakdown("phase-one objective unbounded".into()));
            }
        }
        if tab.objective_value() > TOLERANCES.feasibility * rhs_scale {
            return Ok(LpSolution { status: LpStatus::Infeasible, x: Vec::new(), objective_value: f64::NAN });
        }
        tab.evict_artificials(nstruct + nslack);
    }

    // Phase two on the real cost with artificial columns frozen out.
    let mut phase_two = vec![0.0; total];
    phase_two[..nstruct].copy_from_slice(&cost);
    tab.load_objective(&phase_two);
    let mut allowed = vec![true; total];
    for a in allowed.iter_mut().skip(nstruct + nslack) {
        *a = false;
    }
    if let Phase::Unbounded = tab.run(&allowed, budget, &mut pivots)? {
        return Ok(LpSolution { status: LpStatus::Unbounded, x: Vec::new(), objective_value: f64::NEG_INFINITY });
    }

    let y = tab.primal(nstruct);
    let x = recover(&maps, &y);
    check_feasible(lp, &x)?;
    let objective_value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution { status: LpStatus::Optimal, x, objective_value })
}

fn recover(maps: &[VarMap], y: &[f64]) -> Vec<f64> {
    maps.iter()
        .map(|m| match *m {
            VarMap::Shift { col, lo } => lo + y[col],
            VarMap::Mirror { col, hi } => hi - y[col],
            VarMap::Split { pos, neg } => y[pos] - y[neg],
        })
        .collect()
}

/// No rows at all: each variable sits at whichever bound its cost prefers.
fn solve_unconstrained(lp: &LinearProgram, maps: &[VarMap], cost: &[f64]) -> Result<LpSolution, LpError> {
    if cost.iter().any(|&c| c < 0.0) {
        return Ok(LpSolution { status: LpStatus::Unbounded, x: Vec::new(), objective_value: f64::NEG_INFINITY });
    }
    let x = recover(maps, &vec![0.0; cost.len()]);
    let objective_value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution { status: LpStatus::Optimal, x, objective_value })
}

/// Rejects a claimed optimum that violates a row by more than the
/// feasibility tolerance, scaled by the row's norm.
fn check_feasible(lp: &LinearProgram, x: &[f64]) -> Result<(), LpError> {
    let tol = |row: &[f64], rhs: f64| {
        let norm = row.iter().fold(rhs.abs(), |s, a| s.max(a.abs())).max(1.0);
        // Accumulated elimination error grows with the row length.
        TOLERANCES.feasibility * norm * (row.len() as f64).sqrt().max(1.0)
    };
    let dot = |row: &[f64]| row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
    for (i, (row, &b)) in lp.ineq_matrix.iter().zip(&lp.ineq_rhs).enumerate() {
        let lhs = dot(row);
        if lhs > b + tol(row, b) {
            return Err(LpError::NumericalBreakdown(format!("inequality row {i} violated by {:e}", lhs - b)));
        }
    }
    for (i, (row, &f)) in lp.eq_matrix.iter().zip(&lp.eq_rhs).enumerate() {
        let lhs = dot(row);
        if (lhs - f).abs() > tol(row, f) {
            return Err(LpError::NumericalBreakdown(format!("equality row {i} violated by {:e}", lhs - f)));
        }
    }
    for (j, (&v, &(lo, hi))) in x.iter().zip(&lp.bounds).enumerate() {
        let slack = TOLERANCES.feasibility * v.abs().max(1.0);
        if v < lo - slack || v > hi + slack {
            return Err(LpError::NumericalBreakdown(format!("variable {j} = {v} outside [{lo}, {hi}]")));
        }
    }
    Ok(())
}

enum Phase {
    Optimal,
    Unbounded,
}

/// Row-major dense tableau with the objective row kept separately.
struct Tableau {
    rows: usize,
    cols: usize,
    /// `rows × (cols + 1)`; the last entry of each row is the right-hand side.
    a: Vec<f64>,
    /// Reduced costs followed by the negated objective value.
    obj: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols, a: vec![0.0; rows * (cols + 1)], obj: vec![0.0; cols + 1], basis: vec![usize::MAX; rows] }
    }

    fn width(&self) -> usize {
        self.cols + 1
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.width() + j]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        let w = self.width();
        self.a[i * w + j] = v;
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.cols)
    }

    fn set_rhs(&mut self, i: usize, v: f64) {
        let c = self.cols;
        self.set(i, c, v);
    }

    fn objective_value(&self) -> f64 {
        -self.obj[self.cols]
    }

    /// Installs cost vector `c` and prices out the current basis.
    fn load_objective(&mut self, c: &[f64]) {
        self.obj[..self.cols].copy_from_slice(c);
        self.obj[self.cols] = 0.0;
        let w = self.width();
        for i in 0..self.rows {
            let cb = c[self.basis[i]];
            if cb != 0.0 {
                let row = &self.a[i * w..(i + 1) * w];
                for (o, &v) in self.obj.iter_mut().zip(row) {
                    *o -= cb * v;
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width();
        let p = self.at(r, c);
        {
            let row = &mut self.a[r * w..(r + 1) * w];
            for v in row.iter_mut() {
                *v /= p;
            }
            row[c] = 1.0;
        }
        let pivot_row: Vec<f64> = self.a[r * w..(r + 1) * w].to_vec();
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.a[i * w + c];
            if f != 0.0 {
                let row = &mut self.a[i * w..(i + 1) * w];
                for (v, &pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for (v, &pv) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.obj[c] = 0.0;
        }
        self.basis[r] = c;
    }

    fn run(&mut self, allowed: &[bool], budget: usize, pivots: &mut usize) -> Result<Phase, LpError> {
        let mut bland = false;
        let mut degenerate_streak = 0usize;
        // Bland's rule only after a long stall.
        let stall_limit = self.rows.max(50);
        loop {
            let entering = if bland {
                (0..self.cols).find(|&j| allowed[j] && self.obj[j] < -TOLERANCES.optimality)
            } else {
                let mut best: Option<(usize, f64)> = None;
                for j in 0..self.cols {
                    let d = self.obj[j];
                    if allowed[j] && d < -TOLERANCES.optimality && best.is_none_or(|(_, b)| d < b) {
                        best = Some((j, d));
                    }
                }
                best.map(|(j, _)| j)
            };
            let Some(c) = entering else {
                return Ok(Phase::Optimal);
            };

            let leave = if bland { self.ratio_test_bland(c) } else { self.ratio_test_harris(c) };
            let Some((r, ratio)) = leave else {
                return Ok(Phase::Unbounded);
            };

            *pivots += 1;
            if *pivots > budget {
                return Err(LpError::NumericalBreakdown(format!("pivot budget of {budget} exhausted")));
            }
            if ratio <= 1e-12 {
                degenerate_streak += 1;
                if degenerate_streak > stall_limit {
                    bland = true;
                }
            } else {
                // Progress was made, so no earlier basis can recur.
                degenerate_streak = 0;
                bland = false;
            }
            self.pivot(r, c);
        }
    }

    /// Minimum-ratio row for entering column `c`, ties to the lowest basic
    /// index (Bland's leaving rule).
    fn ratio_test_bland(&self, c: usize) -> Option<(usize, f64)> {
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..self.rows {
            let a = self.at(i, c);
            if a > TOLERANCES.pivot {
                let ratio = self.rhs(i).max(0.0) / a;
                let better = match leave {
                    None => true,
                    Some((li, lr)) => {
                        ratio < lr - 1e-12 * lr.abs().max(1.0) || (ratio <= lr + 1e-12 * lr.abs().max(1.0) && self.basis[i] < self.basis[li])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        leave
    }

    /// Two-pass ratio test: finds the largest step that keeps every basic
    /// variable above `−δ`, then among rows whose exact ratio is within that
    /// step takes the one with the largest pivot element.
    fn ratio_test_harris(&self, c: usize) -> Option<(usize, f64)> {
        let delta = TOLERANCES.feasibility;
        let mut bound = f64::INFINITY;
        for i in 0..self.rows {
            let a = self.at(i, c);
            if a > TOLERANCES.pivot {
                bound = bound.min((self.rhs(i).max(0.0) + delta) / a);
            }
        }
        if bound == f64::INFINITY {
            return None;
        }
        let mut leave: Option<(usize, f64, f64)> = None;
        for i in 0..self.rows {
            let a = self.at(i, c);
            if a > TOLERANCES.pivot {
                let ratio = self.rhs(i).max(0.0) / a;
                if ratio <= bound && leave.is_none_or(|(_, _, la)| a > la) {
                    leave = Some((i, ratio, a));
                }
            }
        }
        leave.map(|(i, r, _)| (i, r))
    }

    /// After phase one, pivots every artificial still in the basis (at zero
    /// level) out in favor of a real column; rows with no such column are
    /// redundant and are neutralized.
    fn evict_artificials(&mut self, first_artificial: usize) {
        for i in 0..self.rows {
            if self.basis[i] < first_artificial {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for j in 0..first_artificial {
                let a = self.at(i, j).abs();
                if a > TOLERANCES.pivot && best.is_none_or(|(_, b)| a > b) {
                    best = Some((j, a));
                }
            }
            match best {
                Some((j, _)) => self.pivot(i, j),
                None => {
                    // Redundant row: zero it so it never limits a ratio test.
                    let w = self.width();
                    for v in &mut self.a[i * w..(i + 1) * w] {
                        *v = 0.0;
                    }
                }
            }
        }
    }

    fn primal(&self, nstruct: usize) -> Vec<f64> {
        let mut y = vec![0.0; nstruct];
        for i in 0..self.rows {
            let b = self.basis[i];
            if b < nstruct {
                y[b] = self.rhs(i).max(0.0);
            }
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_variable_vertex() {
        let mut lp = LinearProgram::new(vec![-1.0]);
        lp.add_le(vec![1.0], 1.0);
        let s = solve_lp(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-12);
        assert!((s.objective_value + 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_objective_on_feasible_set() {
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.add_eq(vec![1.0, 1.0], 1.0);
        let s = solve_lp(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasible() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add_le(vec![1.0], -1.0);
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn detects_unbounded() {
        let mut lp = LinearProgram::new(vec![-1.0, 0.0]);
        lp.add_le(vec![-1.0, 1.0], 1.0);
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn free_and_bounded_variables() {
        // min x - y with x free, -2 <= y <= 3, x >= y - 1.
        let mut lp = LinearProgram::new(vec![1.0, -1.0]);
        lp.bounds = vec![(f64::NEG_INFINITY, f64::INFINITY), (-2.0, 3.0)];
        lp.add_ge(vec![1.0, -1.0], -1.0);
        let s = solve_lp(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective_value + 1.0).abs() < 1e-12);
    }

    #[test]
    fn upper_bound_only_variable() {
        // max x with x <= 4 via bounds only.
        let mut lp = LinearProgram::new(vec![-1.0]);
        lp.bounds = vec![(f64::NEG_INFINITY, 4.0)];
        let s = solve_lp(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_eq!(s.x, vec![4.0]);
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::new(vec![1.0, 2.0]);
        lp.add_eq(vec![1.0, 1.0], 1.0);
        lp.add_eq(vec![2.0, 2.0], 2.0);
        let s = solve_lp(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.add_le(vec![1.0], 1.0);
        assert!(matches!(solve_lp(&lp), Err(LpError::DimensionMismatch(_))));
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's classic cycling instance under the textbook rule.
        let mut lp = LinearProgram::new(vec![-0.75, 150.0, -0.02, 6.0]);
        lp.add_le(vec![0.25, -60.0, -0.04, 9.0], 0.0);
        lp.add_le(vec![0.5, -90.0, -0.02, 3.0], 0.0);
        lp.add_le(vec![0.0, 0.0, 1.0, 0.0], 1.0);
        let s = solve_lp(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective_value + 0.05).abs() < 1e-10);
    }
}
