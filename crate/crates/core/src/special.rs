//! Exponential integral and the Rayleigh-fading capacity closed form.

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Exponential integral `E₁(x) = ∫ₓ^∞ e^{−t}/t dt` for `x > 0`.
pub fn exp_integral_e1(x: f64) -> f64 {
    assert!(x > 0.0, "E1 is defined here for x > 0");
    if x <= 1.0 {
        e1_series(x)
    } else {
        (-x).exp() * scaled_e1_fraction(x)
    }
}

/// Power series `−γ − ln x − Σ_{k≥1} (−x)^k / (k·k!)`, accurate for small x.
fn e1_series(x: f64) -> f64 {
    let mut sum = 0.0;
    let mut term = 1.0;
    for k in 1..200 {
        term *= -x / k as f64;
        let contrib = term / k as f64;
        sum += contrib;
        if contrib.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    -EULER_GAMMA - x.ln() - sum
}

/// `eˣ·E₁(x)` by the modified Lentz continued fraction, for `x ≥ 1`.
fn scaled_e1_fraction(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let a = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (a * d + b);
        c = b + a / c;
        let delta = c * d;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// `E[log₂(1 + X)]` for `X` exponential with mean `mean_snr`, i.e.
/// `e^{1/s}·E₁(1/s)/ln 2`.
pub fn rayleigh_mean_log2_capacity(mean_snr: f64) -> f64 {
    assert!(mean_snr > 0.0);
    let x = 1.0 / mean_snr;
    let scaled = if x <= 1.0 { x.exp() * e1_series(x) } else { scaled_e1_fraction(x) };
    scaled / std::f64::consts::LN_2
}
