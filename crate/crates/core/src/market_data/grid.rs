use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Expiries (years) by forward moneyness, both strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionGrid {
    expiries: Vec<f64>,
    moneyness: Vec<f64>,
}

impl OptionGrid {
    pub fn new(expiries: Vec<f64>, moneyness: Vec<f64>) -> Result<Self> {
        check_axis("expiries", &expiries)?;
        check_axis("moneyness", &moneyness)?;
        Ok(OptionGrid {
            expiries,
            moneyness,
        })
    }

    pub fn expiries(&self) -> &[f64] {
        &self.expiries
    }

    pub fn moneyness(&self) -> &[f64] {
        &self.moneyness
    }

    /// The largest expiry, `T`.
    pub fn max_expiry(&self) -> f64 {
        *self.expiries.last().expect("grid axes are non-empty")
    }

    /// Number of instruments, `|expiries| * |moneyness|`.
    pub fn len(&self) -> usize {
        self.expiries.len() * self.moneyness.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Position of `(expiry, moneyness)` on the grid, matched to 1e-9 relative.
    pub fn locate(&self, expiry: f64, moneyness: f64) -> Option<(usize, usize)> {
        let m = self.expiries.iter().position(|&e| same(e, expiry))?;
        let j = self.moneyness.iter().position(|&k| same(k, moneyness))?;
        Some((m, j))
    }
}

impl Default for OptionGrid {
    /// 1m, 2m, 3m, 6m, 1y, 1.5y, 2y by 80% to 120%: 49 instruments.
    fn default() -> Self {
        OptionGrid {
            expiries: vec![1.0 / 12.0, 2.0 / 12.0, 3.0 / 12.0, 0.5, 1.0, 1.5, 2.0],
            moneyness: vec![0.80, 0.90, 0.95, 1.00, 1.05, 1.10, 1.20],
        }
    }
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

fn check_axis(name: &str, axis: &[f64]) -> Result<()> {
    if axis.is_empty() {
        return Err(Error::invalid(format!("{name} axis is empty")));
    }
    if axis.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::invalid(format!(
            "{name} must be finite and positive"
        )));
    }
    if axis.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(format!(
            "{name} must be strictly increasing"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_49_instruments() {
        let g = OptionGrid::default();
        assert_eq!(g.len(), 49);
        assert_eq!(g.max_expiry(), 2.0);
    }

    #[test]
    fn rejects_unsorted_and_non_positive_axes() {
        assert!(OptionGrid::new(vec![1.0, 0.5], vec![1.0]).is_err());
        assert!(OptionGrid::new(vec![1.0], vec![0.0, 1.0]).is_err());
        assert!(OptionGrid::new(vec![], vec![1.0]).is_err());
    }

    #[test]
    fn locate_tolerates_decimal_round_trips() {
        let g = OptionGrid::default();
        assert_eq!(g.locate(0.0833333333333, 0.95), Some((0, 2)));
        assert_eq!(g.locate(0.75, 1.0), None);
    }
}
