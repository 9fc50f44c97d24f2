//! Hagan's lognormal implied-volatility expansion for SABR.

/// Black volatility for forward `f`, strike `k`, expiry `tau`.
pub fn hagan_vol(f: f64, k: f64, tau: f64, alpha: f64, beta: f64, rho: f64, nu: f64) -> f64 {
    let omb = 1.0 - beta;
    let fk = f * k;
    let fk_pow = fk.powf(0.5 * omb);
    let lfk = (f / k).ln();
    let lfk2 = lfk * lfk;
    let denom = fk_pow * (1.0 + omb * omb / 24.0 * lfk2 + omb.powi(4) / 1920.0 * lfk2 * lfk2);
    let z = nu / alpha * fk_pow * lfk;
    let z_over_x = if z.abs() < 1e-7 {
        // x(z) = z + rho z^2 / 2 + ...
        1.0 - 0.5 * rho * z
    } else {
        let x = (((1.0 - 2.0 * rho * z + z * z).sqrt() + z - rho) / (1.0 - rho)).ln();
        z / x
    };
    let correction = 1.0
        + (omb * omb / 24.0 * alpha * alpha / fk.powf(omb)
            + 0.25 * rho * beta * nu * alpha / fk_pow
            + (2.0 - 3.0 * rho * rho) / 24.0 * nu * nu)
            * tau;
    alpha / denom * z_over_x * correction
}
