//! Likelihood-based pruning of a candidate grid.
//!
//! The engine runs once over the data. At every date each family's best
//! accumulated log-likelihood is recorded, and each instance keeps its
//! smallest gap to that best over all dates. Instances with gap zero won
//! some date and are always kept; the rest enter in order of gap up to the
//! largest distance that keeps the family within its target.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::Serialize;

use crate::engine::{EngineConfig, LikelihoodState, MarketDay, PreparedUniverse};
use crate::error::{Error, Result};
use crate::models::{ModelFamily, ModelInstance};

/// Best instance of one family at one date.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PruneLogRow {
    pub date: NaiveDate,
    pub family: ModelFamily,
    /// Index into the prepared candidate list.
    pub best_instance_id: usize,
    pub ell_best: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilySelection {
    pub candidates: usize,
    pub kept: usize,
    /// Selection distance in log-likelihood; zero when only date winners
    /// were kept.
    pub distance: f64,
}

#[derive(Debug, Clone)]
pub struct PruneReport {
    /// Kept instances in candidate order.
    pub kept: Vec<ModelInstance>,
    /// Candidate indices of the kept instances.
    pub kept_ids: Vec<usize>,
    /// Smallest gap to the family best over dates, per candidate.
    pub gaps: Vec<f64>,
    pub log: Vec<PruneLogRow>,
    pub families: BTreeMap<ModelFamily, FamilySelection>,
}

impl PruneReport {
    pub fn write_log(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["date", "family", "best_instance_id", "ell_best"])?;
        for r in &self.log {
            w.write_record([
                r.date.to_string(),
                r.family.name().to_string(),
                r.best_instance_id.to_string(),
                format!("{:?}", r.ell_best),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Members of `indices` to keep given their gaps and win counts.
fn select(indices: &[usize], gaps: &[f64], wins: &[usize], target: usize) -> (Vec<usize>, f64) {
    if indices.len() <= target {
        let d = indices.iter().map(|&i| gaps[i]).fold(0.0, f64::max);
        return (indices.to_vec(), d);
    }
    let mut winners: Vec<usize> = indices
        .iter()
        .copied()
        .filter(|&i| gaps[i] == 0.0)
        .collect();
    if winners.len() >= target {
        // more date winners than room: most dates won first
        winners.sort_by(|&a, &b| wins[b].cmp(&wins[a]).then(a.cmp(&b)));
        winners.truncate(target);
        winners.sort_unstable();
        return (winners, 0.0);
    }
    let mut rest: Vec<usize> = indices.iter().copied().filter(|&i| gaps[i] > 0.0).collect();
    rest.sort_by(|&a, &b| gaps[a].total_cmp(&gaps[b]).then(a.cmp(&b)));
    // largest d with |{gap <= d}| <= target: cut before any tie straddling
    // the boundary
    let room = target - winners.len();
    let mut take = room.min(rest.len());
    while take > 0 && take < rest.len() && gaps[rest[take]] == gaps[rest[take - 1]] {
        take -= 1;
    }
    let distance = if take == 0 { 0.0 } else { gaps[rest[take - 1]] };
    winners.extend_from_slice(&rest[..take]);
    winners.sort_unstable();
    (winners, distance)
}

/// Prunes the prepared candidates to at most `target` per family.
pub fn prune(
    candidates: &PreparedUniverse,
    days: &[MarketDay],
    config: &EngineConfig,
    target: usize,
) -> Result<PruneReport> {
    if candidates.is_empty() {
        return Err(Error::invalid("no candidates to prune"));
    }
    if target == 0 {
        return Err(Error::invalid("pruning target must be positive"));
    }
    let families = candidates.families();
    let mut by_family: BTreeMap<ModelFamily, Vec<usize>> = BTreeMap::new();
    for (i, f) in families.iter().enumerate() {
        by_family.entry(*f).or_default().push(i);
    }
    let n = candidates.len();
    let mut gaps = vec![f64::INFINITY; n];
    let mut wins = vec![0usize; n];
    let mut log = Vec::new();
    let mut state = LikelihoodState::new(n, config.clone())?;
    for t in 1..days.len() {
        state.step_day(&days[t - 1], &days[t], candidates)?;
        for (f, members) in &by_family {
            let (best_id, best) = members.iter().map(|&i| (i, state.ell[i])).fold(
                (members[0], f64::NEG_INFINITY),
                |acc, (i, l)| if l > acc.1 { (i, l) } else { acc },
            );
            for &i in members {
                let gap = best - state.ell[i];
                if gap == 0.0 {
                    wins[i] += 1;
                }
                gaps[i] = gaps[i].min(gap);
            }
            log.push(PruneLogRow {
                date: days[t].date,
                family: *f,
                best_instance_id: best_id,
                ell_best: best,
            });
        }
    }
    if days.len() < 2 {
        // no evidence: every candidate is tied
        gaps.iter_mut().for_each(|g| *g = 0.0);
    }
    let mut kept_ids = Vec::new();
    let mut summary = BTreeMap::new();
    for (f, members) in &by_family {
        let (keep, distance) = select(members, &gaps, &wins, target);
        summary.insert(
            *f,
            FamilySelection {
                candidates: members.len(),
                kept: keep.len(),
                distance,
            },
        );
        kept_ids.extend(keep);
    }
    kept_ids.sort_unstable();
    Ok(PruneReport {
        kept: kept_ids
            .iter()
            .map(|&i| candidates.instance(i).clone())
            .collect(),
        kept_ids,
        gaps,
        log,
        families: summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_respects_ties_and_target() {
        let gaps = [0.0, 1.0, 1.0, 2.0, 0.5];
        let wins = [3, 0, 0, 0, 0];
        let (k, d) = select(&[0, 1, 2, 3, 4], &gaps, &wins, 3);
        // 1 and 2 tie at the boundary, so both stay out
        assert_eq!(k, vec![0, 4]);
        assert_eq!(d, 0.5);
        let (k, d) = select(&[0, 1, 2, 3, 4], &gaps, &wins, 4);
        assert_eq!(k, vec![0, 1, 2, 4]);
        assert_eq!(d, 1.0);
    }

    #[test]
    fn surplus_winners_are_ranked_by_dates_won() {
        let gaps = [0.0, 0.0, 0.0];
        let wins = [1, 5, 2];
        assert_eq!(select(&[0, 1, 2], &gaps, &wins, 2).0, vec![1, 2]);
    }
}
