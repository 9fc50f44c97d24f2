//! Parameter grids spanning the range of snapshot fits.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::fit::CalibrationSnapshot;
use crate::error::{Error, Result};
use crate::models::{Geometry, ModelFamily, ModelInstance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniverseSpec {
    /// Points per axis unless overridden.
    pub points: usize,
    pub points_by_family: BTreeMap<ModelFamily, usize>,
    /// Ceiling on the grid size of one family; the axis count is lowered
    /// until the product fits.
    pub max_candidates: usize,
    /// Pruning target per family.
    pub max_per_family: usize,
}

impl Default for UniverseSpec {
    fn default() -> Self {
        UniverseSpec {
            points: 5,
            points_by_family: BTreeMap::new(),
            max_candidates: 20_000,
            max_per_family: 100,
        }
    }
}

impl UniverseSpec {
    pub fn validate(&self) -> Result<()> {
        let all = std::iter::once(self.points).chain(self.points_by_family.values().copied());
        for n in all {
            if n < 2 {
                return Err(Error::invalid(format!(
                    "{n} points per axis; need at least 2"
                )));
            }
        }
        if self.max_per_family == 0 || self.max_candidates == 0 {
            return Err(Error::invalid("family limits must be positive"));
        }
        Ok(())
    }

    fn points_for(&self, f: ModelFamily) -> usize {
        self.points_by_family
            .get(&f)
            .copied()
            .unwrap_or(self.points)
    }
}

/// `n` points from `lo` to `hi`, log-uniform when `log` holds. Equal ends
/// give a single point.
pub fn axis(lo: f64, hi: f64, n: usize, log: bool) -> Vec<f64> {
    if lo == hi || n < 2 {
        return vec![lo];
    }
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                let t = i as f64 / (n - 1) as f64;
                if log {
                    (lo.ln() + t * (hi.ln() - lo.ln())).exp()
                } else {
                    lo + t * (hi - lo)
                }
            }
        })
        .collect()
}

/// Parameter ranges of each family over the snapshots.
pub fn ranges(snapshots: &[CalibrationSnapshot]) -> BTreeMap<ModelFamily, Vec<(f64, f64)>> {
    let mut out: BTreeMap<ModelFamily, Vec<(f64, f64)>> = BTreeMap::new();
    for fit in snapshots.iter().flat_map(|s| &s.fits) {
        let r = out
            .entry(fit.instance.family)
            .or_insert_with(|| vec![(f64::INFINITY, f64::NEG_INFINITY); fit.instance.params.len()]);
        for (slot, &v) in r.iter_mut().zip(&fit.instance.params) {
            slot.0 = slot.0.min(v);
            slot.1 = slot.1.max(v);
        }
    }
    out
}

/// Candidate instances: per family, the Cartesian product of axes spanning
/// each parameter's snapshot range, with inadmissible points dropped.
/// Families come out in their canonical order, each grid in lexicographic
/// order of its axes.
pub fn span_grid(
    snapshots: &[CalibrationSnapshot],
    spec: &UniverseSpec,
) -> Result<Vec<ModelInstance>> {
    spec.validate()?;
    if snapshots.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least two snapshots, got {}",
            snapshots.len()
        )));
    }
    let mut out = Vec::new();
    for (family, r) in ranges(snapshots) {
        let slots = family.slots();
        let mut n = spec.points_for(family);
        let live = r.iter().filter(|(lo, hi)| lo < hi).count() as u32;
        while n > 2 && (n as f64).powi(live as i32) > spec.max_candidates as f64 {
            n -= 1;
        }
        let axes: Vec<Vec<f64>> = r
            .iter()
            .zip(slots)
            .map(|(&(lo, hi), s)| axis(lo, hi, n, s.geometry == Geometry::Scale && lo > 0.0))
            .collect();
        let before = out.len();
        let mut index = vec![0usize; axes.len()];
        loop {
            let params: Vec<f64> = index.iter().zip(&axes).map(|(&i, a)| a[i]).collect();
            let m = ModelInstance { family, params };
            if m.is_admissible() {
                out.push(m);
            }
            // odometer with the last axis fastest
            let mut d = axes.len();
            loop {
                if d == 0 {
                    break;
                }
                d -= 1;
                index[d] += 1;
                if index[d] < axes[d].len() {
                    break;
                }
                index[d] = 0;
            }
            if index.iter().all(|&i| i == 0) {
                break;
            }
        }
        log::info!(
            "{family}: {} candidates on {n} points per axis",
            out.len() - before
        );
    }
    if out.is_empty() {
        return Err(Error::invalid("every grid combination is inadmissible"));
    }
    Ok(out)
}
