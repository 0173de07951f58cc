//! Independent reference implementations used by the integration tests.

#![allow(dead_code)]

use d2d_bandit::lp::{solve_lp, LinearProgram, LpStatus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Oracle verdict for a bounded LP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    Optimal(f64),
    Infeasible,
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting; `None`
/// when the system is (numerically) singular.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Minimizes `c·x` over a bounded polytope by enumerating every vertex.
///
/// The polytope is `{x : le_rows x ≤ le_rhs, eq_rows x = eq_rhs}` and must
/// include the sign and bound constraints as explicit rows.
pub fn vertex_enumeration(c: &[f64], le: &[(Vec<f64>, f64)], eq: &[(Vec<f64>, f64)]) -> Verdict {
    let n = c.len();
    let free = n.checked_sub(eq.len()).expect("more equalities than variables");
    let feasible = |x: &[f64]| {
        let dot = |r: &[f64]| r.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        le.iter().all(|(r, b)| dot(r) <= b + 1e-9) && eq.iter().all(|(r, b)| (dot(r) - b).abs() <= 1e-9)
    };
    let mut best: Option<f64> = None;
    let mut visit = |active: &[usize]| {
        let mut a: Vec<Vec<f64>> = eq.iter().map(|(r, _)| r.clone()).collect();
        let mut b: Vec<f64> = eq.iter().map(|(_, v)| *v).collect();
        for &i in active {
            a.push(le[i].0.clone());
            b.push(le[i].1);
        }
        if let Some(x) = gauss_solve(a, b) {
            if feasible(&x) {
                let v: f64 = c.iter().zip(&x).map(|(a, b)| a * b).sum();
                best = Some(best.map_or(v, |w: f64| w.min(v)));
            }
        }
    };
    if free == 0 {
        visit(&[]);
    } else if free <= le.len() {
        let mut idx: Vec<usize> = (0..free).collect();
        loop {
            visit(&idx);
            if !next_combination(&mut idx, le.len()) {
                break;
            }
        }
    }
    best.map_or(Verdict::Infeasible, Verdict::Optimal)
}

/// A random bounded LP in both the kernel's form and the oracle's row form.
pub struct RandomLp {
    pub lp: LinearProgram,
    pub le: Vec<(Vec<f64>, f64)>,
    pub eq: Vec<(Vec<f64>, f64)>,
}

/// `n` variables and `m` constraints. One constraint caps `Σx`, so every
/// instance is bounded; some instances carry an equality row or a finite
/// upper bound, and some are infeasible.
pub fn random_lp(n: usize, m: usize, rng: &mut ChaCha8Rng) -> RandomLp {
    let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut lp = LinearProgram::new(c);
    let mut le = Vec::new();
    let mut eq = Vec::new();
    let cap = rng.gen_range(1.0..5.0);
    lp.add_le(vec![1.0; n], cap);
    le.push((vec![1.0; n], cap));
    let n_eq = usize::from(rng.gen_bool(0.3));
    for i in 1..m {
        let row: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if i <= n_eq {
            let rhs: f64 = rng.gen_range(0.0..0.5);
            lp.add_eq(row.clone(), rhs);
            eq.push((row, rhs));
        } else if rng.gen_bool(0.5) {
            let rhs = rng.gen_range(-0.2..1.0);
            lp.add_le(row.clone(), rhs);
            le.push((row, rhs));
        } else {
            let rhs = rng.gen_range(-1.0..0.2);
            lp.add_ge(row.clone(), rhs);
            le.push((row.iter().map(|a| -a).collect(), -rhs));
        }
    }
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = -1.0;
        le.push((e, 0.0));
    }
    if rng.gen_bool(0.3) {
        let j = rng.gen_range(0..n);
        let hi = rng.gen_range(0.2..2.0);
        lp.bounds[j] = (0.0, hi);
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        le.push((e, hi));
    }
    RandomLp { lp, le, eq }
}

/// Solves `count` random LPs with the kernel and the oracle; returns the
/// largest objective gap, the number of status disagreements and the number
/// of infeasible instances.
pub fn lp_oracle_sweep(count: usize, seed: u64) -> (f64, usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    let mut mismatches = 0;
    let mut infeasible = 0;
    for _ in 0..count {
        let inst = random_lp(4, 6, &mut rng);
        let sol = solve_lp(&inst.lp).expect("kernel error");
        match (vertex_enumeration(&inst.lp.objective, &inst.le, &inst.eq), sol.status) {
            (Verdict::Optimal(v), LpStatus::Optimal) => {
                let cx: f64 = inst.lp.objective.iter().zip(&sol.x).map(|(a, b)| a * b).sum();
                worst = worst.max((v - sol.objective_value).abs()).max((cx - sol.objective_value).abs());
                let dot = |r: &[f64]| r.iter().zip(&sol.x).map(|(a, b)| a * b).sum::<f64>();
                let violation = inst
                    .le
                    .iter()
                    .map(|(r, b)| (dot(r) - b).max(0.0))
                    .chain(inst.eq.iter().map(|(r, b)| (dot(r) - b).abs()))
                    .fold(0.0, f64::max);
                worst = worst.max(violation);
            }
            (Verdict::Infeasible, LpStatus::Infeasible) => infeasible += 1,
            _ => mismatches += 1,
        }
    }
    (worst, mismatches, infeasible)
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest point of the l1 ball to `v`, by nested grid refinement around the
/// incumbent (valid because the problem is convex).
pub fn project_by_grid(v: &[f64], radius: f64) -> Vec<f64> {
    const STEPS: i64 = 20;
    let d = v.len();
    let mut best = vec![0.0; d];
    let mut half = radius;
    while half > 1e-8 {
        let center = best.clone();
        let mut idx = vec![-STEPS; d];
        loop {
            let w: Vec<f64> = center.iter().zip(&idx).map(|(c, &i)| c + half * i as f64 / STEPS as f64).collect();
            if l1(&w) <= radius && dist2(&w, v) < dist2(&best, v) {
                best = w;
            }
            let mut k = 0;
            while k < d && idx[k] == STEPS {
                idx[k] = -STEPS;
                k += 1;
            }
            if k == d {
                break;
            }
            idx[k] += 1;
        }
        half /= 4.0;
    }
    best
}

/// `E[log₂(1 + s·X)]` for `X ~ Exp(1)`, by composite Simpson quadrature of
/// `log₂(1 + s·x)·e^{−x}` on `[0, 60]`.
pub fn rayleigh_capacity_quadrature(snr: f64) -> f64 {
    let n = 600_000;
    let h = 60.0 / n as f64;
    let f = |x: f64| (1.0 + snr * x).log2() * (-x).exp();
    let mut s = f(0.0) + f(60.0);
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}
