//! Tabulated densities and their recovery from characteristic functions by FFT.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::cf::{ln_cf_mart, truncation_range};
use super::ModelInstance;
use crate::error::{Error, Result};

const MIN_POINTS: usize = 1 << 12;
const MAX_POINTS: usize = 1 << 16;

/// Density samples on the uniform grid `x0 + j dx`, linearly interpolated
/// and zero outside the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityTable {
    x0: f64,
    dx: f64,
    values: Vec<f64>,
    /// Trapezoidal running integral at each node.
    cumulative: Vec<f64>,
}

impl DensityTable {
    pub fn new(x0: f64, dx: f64, values: Vec<f64>) -> Self {
        assert!(values.len() >= 2 && dx > 0.0);
        let mut cumulative = Vec::with_capacity(values.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in values.windows(2) {
            acc += 0.5 * (w[0] + w[1]) * dx;
            cumulative.push(acc);
        }
        DensityTable {
            x0,
            dx,
            values,
            cumulative,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x0 + j as f64 * self.dx
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support(&self) -> (f64, f64) {
        (self.x0, self.x(self.values.len() - 1))
    }

    pub fn pdf(&self, y: f64) -> f64 {
        let t = (y - self.x0) / self.dx;
        if !(t >= 0.0) || t > (self.values.len() - 1) as f64 {
            return 0.0;
        }
        let j = (t.floor() as usize).min(self.values.len() - 2);
        let frac = t - j as f64;
        self.values[j] * (1.0 - frac) + self.values[j + 1] * frac
    }

    /// Trapezoidal integral over the whole grid.
    pub fn total_mass(&self) -> f64 {
        *self.cumulative.last().expect("non-empty")
    }

    /// Distribution function of the normalised table (exact for the
    /// piecewise-linear interpolant).
    pub fn cdf(&self, y: f64) -> f64 {
        let n = self.values.len();
        let t = (y - self.x0) / self.dx;
        if !(t > 0.0) {
            return 0.0;
        }
        if t >= (n - 1) as f64 {
            return 1.0;
        }
        let j = t.floor() as usize;
        let s = (t - j as f64) * self.dx;
        let (f0, f1) = (self.values[j], self.values[j + 1]);
        let partial = f0 * s + (f1 - f0) * s * s / (2.0 * self.dx);
        ((self.cumulative[j] + partial) / self.total_mass()).clamp(0.0, 1.0)
    }

    /// Left-continuous inverse of [`DensityTable::cdf`].
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.values.len();
        let target = p.clamp(0.0, 1.0) * self.total_mass();
        let j = match self.cumulative.binary_search_by(|c| c.total_cmp(&target)) {
            Ok(j) => return self.x(j.min(n - 1)),
            Err(j) => j.clamp(1, n - 1) - 1,
        };
        let rem = target - self.cumulative[j];
        let (f0, f1) = (self.values[j], self.values[j + 1]);
        // solve f0 s + (f1 - f0) s^2 / (2 dx) = rem for s in [0, dx]
        let a = (f1 - f0) / (2.0 * self.dx);
        let s = if a.abs() < 1e-300 * f0.abs().max(1.0) || (a * rem).abs() < 1e-12 * f0 * f0 {
            if f0 > 0.0 {
                rem / f0
            } else {
                0.5 * self.dx
            }
        } else {
            let disc = (f0 * f0 + 4.0 * a * rem).max(0.0);
            2.0 * rem / (f0 + disc.sqrt())
        };
        self.x(j) + s.clamp(0.0, self.dx)
    }

    pub fn mean(&self) -> f64 {
        let m: f64 = self
            .values
            .iter()
            .enumerate()
            .map(|(j, v)| v * self.x(j))
            .sum::<f64>()
            * self.dx;
        m / self.total_mass()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        let m2: f64 = self
            .values
            .iter()
            .enumerate()
            .map(|(j, v)| v * (self.x(j) - mu).powi(2))
            .sum::<f64>()
            * self.dx;
        m2 / self.total_mass()
    }
}

/// Density of the martingale-frame log-return over `h`, by FFT inversion of
/// the characteristic function.
///
/// Starts at 4096 points on the cumulant-based truncation range and doubles
/// the point count until the characteristic function has decayed below
/// 1e-12 at the Nyquist frequency and the density has decayed at the edges.
pub fn density_from_cf(m: &ModelInstance, h: f64) -> Result<DensityTable> {
    let (a0, b0) = truncation_range(m, h)?;
    let mut lo = a0;
    let mut hi = b0;
    let mut n = MIN_POINTS;
    let quadrature = |message: String| Error::Quadrature {
        family: m.family,
        params: m.to_string(),
        message,
    };
    let mut planner = FftPlanner::<f64>::new();
    loop {
        let dx = (hi - lo) / n as f64;
        let du = 2.0 * PI / (n as f64 * dx);
        let nyquist = ln_cf_mart(m, Complex64::new(PI / dx, 0.0), h)?.re.exp();
        if nyquist > 1e-12 {
            if n >= MAX_POINTS {
                return Err(quadrature(format!(
                    "characteristic function still {nyquist:.2e} at the Nyquist frequency with {n} points"
                )));
            }
            n *= 2;
            continue;
        }
        let mut buf: Vec<Complex64> = (0..n)
            .map(|k| {
                let u = (k as f64 - (n / 2) as f64) * du;
                let ln_phi = ln_cf_mart(m, Complex64::new(u, 0.0), h)?;
                Ok((ln_phi - Complex64::new(0.0, u * lo)).exp())
            })
            .collect::<Result<_>>()?;
        planner.plan_fft_forward(n).process(&mut buf);
        let scale = du / (2.0 * PI);
        let mut values: Vec<f64> = buf
            .iter()
            .enumerate()
            .map(|(j, c)| if j % 2 == 0 { c.re } else { -c.re } * scale)
            .collect();
        let peak = values.iter().cloned().fold(0.0, f64::max);
        let edge = values[0].abs().max(values[n - 1].abs());
        if edge > 1e-9 * peak {
            if n >= MAX_POINTS {
                return Err(quadrature(format!(
                    "density not decayed at the range edges ({edge:.2e})"
                )));
            }
            let width = hi - lo;
            lo -= 0.5 * width;
            hi += 0.5 * width;
            n *= 2;
            continue;
        }
        let most_negative = values.iter().cloned().fold(0.0, f64::min);
        if most_negative < -1e-10 {
            return Err(quadrature(format!(
                "inverted density reaches {most_negative:.2e}"
            )));
        }
        for v in &mut values {
            *v = v.max(0.0);
        }
        return Ok(DensityTable::new(lo, dx, values));
    }
}
