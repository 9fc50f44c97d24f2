//! Special functions shared by the pricing and density code.
//!
//! Bessel functions are evaluated from their integral representations with the
//! trapezoidal rule, which converges geometrically for these analytic,
//! rapidly decaying integrands. Everything is returned in log form so the
//! CEV and NIG densities stay finite for the huge arguments that show up at a
//! one-day horizon.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use statrs::function::erf::erfc;
pub use statrs::function::gamma::ln_gamma;
use statrs::function::gamma::{gamma_lr, gamma_ur};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

pub fn norm_log_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - LN_SQRT_2PI - sd.ln()
}

/// Inverse of the standard normal CDF (Acklam's rational approximation with
/// one Halley refinement step, ~1e-15 relative).
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let p_low = 0.02425;
    let x = if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let e = norm_cdf(x) - p;
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

/// Sums `exp(g(t))` over the nodes `t = n*step`, `n = 0, 1, ...` with the first
/// node half-weighted, stopping once the log-integrand has fallen 45 nats
/// below its running maximum and is decreasing. Returns `ln(step * sum)`.
fn log_trapezoid_half_line(step: f64, max_nodes: usize, g: impl Fn(f64) -> f64) -> f64 {
    let mut values = Vec::with_capacity(256);
    let mut peak = f64::NEG_INFINITY;
    let mut prev = f64::NEG_INFINITY;
    for n in 0..max_nodes {
        let v = g(n as f64 * step);
        values.push(v);
        if v > peak {
            peak = v;
        }
        if n > 2 && v < prev && v < peak - 45.0 {
            break;
        }
        prev = v;
    }
    let mut sum = 0.0;
    for (n, v) in values.iter().enumerate() {
        let w = if n == 0 { 0.5 } else { 1.0 };
        sum += w * (v - peak).exp();
    }
    peak + (step * sum).ln()
}

/// `ln K_nu(z)` for real order and `z > 0`, from
/// `K_nu(z) = ∫_0^∞ exp(-z cosh t) cosh(nu t) dt`.
pub fn ln_bessel_k(order: f64, z: f64) -> f64 {
    if z <= 0.0 {
        return f64::INFINITY;
    }
    let nu = order.abs();
    let step = (0.25 / z.sqrt()).min(0.05);
    // ln cosh(nu t) without overflow
    let ln_cosh = |x: f64| x.abs() + (0.5 * (1.0 + (-2.0 * x.abs()).exp())).ln();
    let scaled = log_trapezoid_half_line(step, 2_000_000, |t| {
        -z * (2.0 * (0.5 * t).sinh().powi(2)) + ln_cosh(nu * t)
    });
    scaled - z
}

/// `ln I_nu(z)` for `nu >= 0`, `z > 0`.
///
/// Power series (all terms positive) for moderate `z`; for large `z` the
/// Schläfli integral `(1/π)∫_0^π exp(z cos t) cos(nu t) dt`, whose second
/// term is `O(e^{-2z})` relative and dropped.
pub fn ln_bessel_i(order: f64, z: f64) -> f64 {
    assert!(order >= 0.0, "ln_bessel_i needs a non-negative order");
    if z <= 0.0 {
        return if order == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let nu = order;
    if z <= 500.0 {
        let lz = (0.5 * z).ln();
        let term = |m: f64| (2.0 * m + nu) * lz - ln_gamma(m + 1.0) - ln_gamma(m + nu + 1.0);
        let m_peak = (0.5 * z).floor();
        let peak = term(m_peak);
        let mut sum = 1.0;
        let mut m = m_peak + 1.0;
        loop {
            let r = (term(m) - peak).exp();
            sum += r;
            if r < 1e-18 {
                break;
            }
            m += 1.0;
        }
        let mut m = m_peak - 1.0;
        while m >= 0.0 {
            let r = (term(m) - peak).exp();
            sum += r;
            if r < 1e-18 {
                break;
            }
            m -= 1.0;
        }
        return peak + sum.ln();
    }
    let step = (0.25 / z.sqrt()).min(PI / 400.0);
    let mut sum = 0.5;
    let mut n = 1usize;
    loop {
        let t = n as f64 * step;
        if t >= PI {
            break;
        }
        let decay = -z * 2.0 * (0.5 * t).sin().powi(2);
        if decay < -45.0 {
            break;
        }
        sum += decay.exp() * (nu * t).cos();
        n += 1;
    }
    z + (step * sum / PI).ln()
}

/// State for stepping the regularised incomplete gamma functions in unit
/// steps of the shape parameter.
struct GammaLadder {
    x: f64,
    ln_x: f64,
}

impl GammaLadder {
    /// ln of `x^a e^{-x} / Γ(a+1)`, the increment `P(a,x) - P(a+1,x)`.
    fn ln_term(&self, a: f64) -> f64 {
        a * self.ln_x - self.x - ln_gamma(a + 1.0)
    }
}

/// Which tail of the non-central chi-square distribution to accumulate.
#[derive(Clone, Copy)]
enum Tail {
    Lower,
    Upper,
}

fn ncx2_tail(x: f64, dof: f64, noncentrality: f64, tail: Tail) -> f64 {
    if x <= 0.0 {
        return match tail {
            Tail::Lower => 0.0,
            Tail::Upper => 1.0,
        };
    }
    let half_nc = 0.5 * noncentrality;
    let xs = 0.5 * x;
    let ladder = GammaLadder {
        x: xs,
        ln_x: xs.ln(),
    };
    let j0 = half_nc.floor();
    let ln_weight = |j: f64| {
        if half_nc == 0.0 {
            if j == 0.0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        } else {
            -half_nc + j * half_nc.ln() - ln_gamma(j + 1.0)
        }
    };
    let a0 = 0.5 * dof + j0;
    let anchor = match tail {
        Tail::Lower => gamma_lr(a0, xs),
        Tail::Upper => gamma_ur(a0, xs),
    };
    let w0 = ln_weight(j0).exp();
    let mut sum = w0 * anchor;

    // upward: P(a+1) = P(a) - t(a), Q(a+1) = Q(a) + t(a)
    let mut value = anchor;
    let mut ln_t = ladder.ln_term(a0);
    let mut ln_w = ln_weight(j0);
    let mut j = j0;
    loop {
        let t = ln_t.exp();
        value = match tail {
            Tail::Lower => (value - t).max(0.0),
            Tail::Upper => (value + t).min(1.0),
        };
        j += 1.0;
        ln_w += half_nc.ln() - j.ln();
        let a = 0.5 * dof + j;
        ln_t += ladder.ln_x - a.ln();
        let w = ln_w.exp();
        sum += w * value;
        if w < 1e-18 && j > j0 + 1.0 {
            break;
        }
        if !ln_w.is_finite() {
            break;
        }
    }

    // downward: P(a-1) = P(a) + t(a-1), Q(a-1) = Q(a) - t(a-1)
    let mut value = anchor;
    let mut ln_w = ln_weight(j0);
    let mut j = j0;
    while j >= 1.0 {
        let a_prev = 0.5 * dof + j - 1.0;
        let t = ladder.ln_term(a_prev).exp();
        value = match tail {
            Tail::Lower => (value + t).min(1.0),
            Tail::Upper => (value - t).max(0.0),
        };
        ln_w += j.ln() - half_nc.ln();
        j -= 1.0;
        let w = ln_w.exp();
        sum += w * value;
        if w < 1e-18 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// CDF of the non-central chi-square distribution.
pub fn ncx2_cdf(x: f64, dof: f64, noncentrality: f64) -> f64 {
    ncx2_tail(x, dof, noncentrality, Tail::Lower)
}

/// Survival function of the non-central chi-square distribution.
pub fn ncx2_sf(x: f64, dof: f64, noncentrality: f64) -> f64 {
    ncx2_tail(x, dof, noncentrality, Tail::Upper)
}
