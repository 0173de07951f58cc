/// Euclidean projection of `v` onto the closed l1 ball `{w : ‖w‖₁ ≤ radius}`.
///
/// Sort-based soft thresholding: the projection is `sign(v_i)·max(|v_i| − θ, 0)`
/// with θ the smallest threshold bringing the l1 norm down to `radius`.
pub fn project_l2_onto_l1_ball(v: &[f64], radius: f64) -> Vec<f64> {
    project_l2_onto_l1_ball_with_threshold(v, radius).0
}

/// As [`project_l2_onto_l1_ball`], also returning the soft threshold θ
/// (zero when `v` is already inside the ball).
///
/// The residual `v − Π(v)` has sup-norm exactly θ, which the approachability
/// step uses to normalize its constraint rows.
pub fn project_l2_onto_l1_ball_with_threshold(v: &[f64], radius: f64) -> (Vec<f64>, f64) {
    assert!(radius >= 0.0, "l1 ball radius must be nonnegative");
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if l1 <= radius {
        return (v.to_vec(), 0.0);
    }
    if radius == 0.0 {
        let theta = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        return (vec![0.0; v.len()], theta);
    }

    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).filter(|x| *x > 0.0).collect();
    mags.sort_unstable_by(|a, b| b.partial_cmp(a).expect("NaN in projection input"));

    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &m) in mags.iter().enumerate() {
        cumulative += m;
        let candidate = (cumulative - radius) / (i + 1) as f64;
        if m > candidate {
            theta = candidate;
        } else {
            break;
        }
    }
    let theta = theta.max(0.0);

    let projected = v
        .iter()
        .map(|&x| x.signum() * (x.abs() - theta).max(0.0))
        .collect();
    (projected, theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn l1(v: &[f64]) -> f64 {
        v.iter().map(|x| x.abs()).sum()
    }

    fn dist2(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    }

    #[test]
    fn inside_point_is_unchanged() {
        let v = [0.2, -0.3, 0.1];
        assert_eq!(project_l2_onto_l1_ball(&v, 1.0), v.to_vec());
    }

    #[test]
    fn zero_radius_gives_origin() {
        assert_eq!(project_l2_onto_l1_ball(&[1.0, 0.0], 0.0), vec![0.0, 0.0]);
    }

    #[test]
    fn soft_threshold_matches_grid_search() {
        // Grid-search oracle over the l1 ball at spacing 2e-3 in the first two
        // coordinates; the third is solved in closed form for each pair.
        let v = [0.8, -0.6, 0.1];
        let w = project_l2_onto_l1_ball(&v, 1.0);

        let step = 2e-3;
        let n = (1.0 / step) as i64;
        let mut best = (f64::INFINITY, [0.0; 3]);
        for i in -n..=n {
            let a = i as f64 * step;
            for j in -n..=n {
                let b = j as f64 * step;
                let rest = 1.0 - a.abs() - b.abs();
                if rest < 0.0 {
                    continue;
                }
                let c = v[2].clamp(-rest, rest);
                let cand = [a, b, c];
                let d = dist2(&cand, &v);
                if d < best.0 {
                    best = (d, cand);
                }
            }
        }
        for k in 0..3 {
            assert!((w[k] - best.1[k]).abs() < 1e-4 + step, "coord {k}: {} vs {}", w[k], best.1[k]);
        }
        // Closed form: theta = (0.8 + 0.6 - 1) / 2 = 0.2.
        assert!((w[0] - 0.6).abs() < 1e-12);
        assert!((w[1] + 0.4).abs() < 1e-12);
        assert_eq!(w[2], 0.0);
    }

    #[test]
    fn no_sampled_ball_point_is_closer() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let dim = rng.gen_range(1..6);
            let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let radius = rng.gen_range(0.0..2.0);
            let w = project_l2_onto_l1_ball(&v, radius);
            assert!(l1(&w) <= radius + 1e-12);
            let dw = dist2(&w, &v);
            for _ in 0..50 {
                // Random point inside the ball: random direction scaled by a
                // random fraction of the radius.
                let raw: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let norm = l1(&raw).max(1e-300);
                let scale = radius * rng.gen::<f64>() / norm;
                let p: Vec<f64> = raw.iter().map(|x| x * scale).collect();
                assert!(dist2(&p, &v) >= dw - 1e-10);
            }
        }
    }

    proptest! {
        #[test]
        fn projection_is_in_ball_and_idempotent(
            v in prop::collection::vec(-5.0f64..5.0, 1..12),
            radius in 0.0f64..4.0,
        ) {
            let (w, theta) = project_l2_onto_l1_ball_with_threshold(&v, radius);
            prop_assert!(l1(&w) <= radius + 1e-12 * (1.0 + radius));
            let again = project_l2_onto_l1_ball(&w, radius);
            for (a, b) in again.iter().zip(&w) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            // The residual's sup norm is the threshold.
            let sup = v.iter().zip(&w).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            prop_assert!((sup - theta).abs() < 1e-9);
        }
    }
}
