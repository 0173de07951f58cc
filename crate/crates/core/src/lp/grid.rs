use thiserror::Error;

/// Largest grid [`simplex_grid`] will materialize by default.
pub const DEFAULT_GRID_CAP: u128 = 2_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid would hold {points} points, above the cap of {cap}")]
    GridTooLarge { points: String, cap: u128 },
    #[error("invalid grid request: {0}")]
    Invalid(String),
}

/// Lattice resolution `n = ceil(dimension / eps)`.
///
/// Ratios that land within 1e-9 of an integer are snapped to it so that, for
/// example, `eps = 0.5` with `dimension = 2` gives exactly 4.
pub fn lattice_resolution(dimension: usize, eps: f64) -> u32 {
    let ratio = dimension as f64 / eps;
    let snapped = ratio.round();
    let n = if (ratio - snapped).abs() < 1e-9 { snapped } else { ratio.ceil() };
    n.max(1.0) as u32
}

/// Number of points `C(n + D − 1, D − 1)` of the resolution-`n` lattice on the
/// `D`-simplex, or `None` if it does not fit in a `u128`.
pub fn lattice_cardinality(dimension: usize, resolution: u32) -> Option<u128> {
    if dimension == 0 {
        return Some(0);
    }
    let n = resolution as u128;
    let k = (dimension - 1) as u128;
    // C(n + k, k) built up one factor at a time; every prefix is itself a
    // binomial coefficient, so the division is exact.
    let mut acc: u128 = 1;
    for i in 1..=k {
        acc = acc.checked_mul(n + i)? / i;
    }
    Some(acc)
}

/// Every probability vector whose coordinates are multiples of `1/n`, with
/// `n = ceil(dimension / eps)`, sorted lexicographically by coordinates.
///
/// Largest-remainder rounding of any point of the simplex moves each
/// coordinate by less than `1/n`, so the grid is an `eps`-covering in l1.
pub fn simplex_grid(dimension: usize, eps: f64, cap: u128) -> Result<Vec<Vec<f64>>, GridError> {
    if dimension < 2 {
        return Err(GridError::Invalid(format!("dimension must be at least 2, got {dimension}")));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(GridError::Invalid(format!("eps must lie in (0, 1], got {eps}")));
    }
    let n = lattice_resolution(dimension, eps);
    match lattice_cardinality(dimension, n) {
        Some(points) if points <= cap => {}
        Some(points) => return Err(GridError::GridTooLarge { points: points.to_string(), cap }),
        None => return Err(GridError::GridTooLarge { points: "> 2^128".into(), cap }),
    }

    let mut out = Vec::new();
    let mut counts = vec![0u32; dimension];
    compositions(&mut counts, 0, n, &mut |c| out.push(lattice_point(c, n)));
    Ok(out)
}

/// Converts lattice counts to a probability vector. The last coordinate
/// absorbs rounding so that a left-to-right sum is exactly 1.
pub fn lattice_point(counts: &[u32], n: u32) -> Vec<f64> {
    let mut p: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
    let last = p.len() - 1;
    let head: f64 = p[..last].iter().sum();
    p[last] = (1.0 - head).max(0.0);
    p
}

/// Visits every composition of `remaining` into the slots `pos..`, in
/// lexicographic order of the full count vector.
fn compositions(counts: &mut [u32], pos: usize, remaining: u32, visit: &mut dyn FnMut(&[u32])) {
    let last = counts.len() - 1;
    if pos == last {
        counts[pos] = remaining;
        visit(counts);
        return;
    }
    for c in 0..=remaining {
        counts[pos] = c;
        compositions(counts, pos + 1, remaining - c, visit);
    }
    counts[pos] = 0;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_outcomes_half_eps() {
        let g = simplex_grid(2, 0.5, DEFAULT_GRID_CAP).unwrap();
        let expected = vec![
            vec![0.0, 1.0],
            vec![0.25, 0.75],
            vec![0.5, 0.5],
            vec![0.75, 0.25],
            vec![1.0, 0.0],
        ];
        assert_eq!(g, expected);
    }

    #[test]
    fn two_outcomes_unit_eps() {
        let g = simplex_grid(2, 1.0, DEFAULT_GRID_CAP).unwrap();
        assert_eq!(g, vec![vec![0.0, 1.0], vec![0.5, 0.5], vec![1.0, 0.0]]);
    }

    #[test]
    fn cardinality_matches_enumeration() {
        for d in 2..6 {
            for eps in [1.0, 0.7, 0.45, 0.3] {
                let n = lattice_resolution(d, eps);
                let g = simplex_grid(d, eps, DEFAULT_GRID_CAP).unwrap();
                assert_eq!(g.len() as u128, lattice_cardinality(d, n).unwrap());
                for p in &g {
                    assert_eq!(p.iter().sum::<f64>(), 1.0);
                }
            }
        }
    }

    #[test]
    fn cap_is_enforced() {
        let err = simplex_grid(64, 0.9, DEFAULT_GRID_CAP).unwrap_err();
        assert!(matches!(err, GridError::GridTooLarge { .. }));
        assert_eq!(lattice_cardinality(64, 200), None);
    }

    #[test]
    fn grid_covers_the_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (d, eps) in [(2, 0.5), (3, 0.4), (4, 0.6), (5, 0.9)] {
            let g = simplex_grid(d, eps, DEFAULT_GRID_CAP).unwrap();
            for _ in 0..1000 {
                // Uniform point on the simplex via normalized exponentials.
                let e: Vec<f64> = (0..d).map(|_| -rng.gen::<f64>().ln()).collect();
                let s: f64 = e.iter().sum();
                let x: Vec<f64> = e.iter().map(|v| v / s).collect();
                let best = g
                    .iter()
                    .map(|p| p.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum::<f64>())
                    .fold(f64::INFINITY, f64::min);
                assert!(best <= eps, "D={d} eps={eps}: {best}");
            }
        }
    }
}
