// SPDX-License-Identifier: MIT OR Apache-2.0

//! Hyperparameter sweep over probe point, β and edit rank.
//!
//! β only affects faithfulness and rank only affects causality, so the two
//! grids are swept independently at each probe point. The probe point is
//! chosen by causality.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{fit_lre, JacobianMethod, Lre, RelationExample};
use super::linalg::low_rank_pinv;
use super::metrics::{causal_pairs, causality_with_pinv, faithfulness};
use super::model::{ProbePoint, RelationModel};
use crate::error::{Error, Result};

/// 21 evenly spaced values covering `[0, 5]`.
pub fn default_beta_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 * 0.25).collect()
}

/// Edit ranks at the published intervals: every 2 up to 100, every 5 up to
/// 200, every 25 up to 500, every 50 up to 1000, then every 250. Rank 0 is
/// dropped (no edit) and `full_rank` is always the last entry.
pub fn rank_schedule(full_rank: usize) -> Vec<usize> {
    const BANDS: [(usize, usize, usize); 4] = [(0, 100, 2), (100, 200, 5), (200, 500, 25), (500, 1000, 50)];
    let mut ranks = Vec::new();
    for (lo, hi, step) in BANDS {
        ranks.extend((lo..hi).step_by(step));
    }
    ranks.extend((1000..full_rank.max(1000)).step_by(250));
    let mut ranks: Vec<usize> = ranks.into_iter().filter(|&r| r >= 1 && r < full_rank).collect();
    if full_rank >= 1 {
        ranks.push(full_rank);
    }
    ranks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub probe_point: ProbePoint,
    pub value: f64,
    /// β for faithfulness points, rank for causality points.
    pub setting: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepBest {
    pub probe_point: ProbePoint,
    pub beta: f64,
    pub rank: usize,
    pub faithfulness: f64,
    pub hard_causality: f64,
    pub soft_causality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub best: SweepBest,
    pub faithfulness_surface: Vec<SweepPoint>,
    /// Hard causality per (probe point, rank).
    pub causality_surface: Vec<SweepPoint>,
    pub soft_causality_surface: Vec<SweepPoint>,
}

impl SweepResult {
    /// The LRE at the chosen configuration, refitted on `fit_examples`.
    pub fn best_lre(
        &self,
        model: &dyn RelationModel,
        fit_examples: &[RelationExample],
        method: JacobianMethod,
    ) -> Result<Lre> {
        Ok(fit_lre(model, fit_examples, self.best.beta, self.best.probe_point, method)?
            .with_rank(self.best.rank))
    }
}

struct ProbeSweep {
    probe: ProbePoint,
    faith: Vec<f64>,
    hard: Vec<f64>,
    soft: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn sweep_probe(
    model: &dyn RelationModel,
    fit_examples: &[RelationExample],
    eval: &[RelationExample],
    pairs: &[(usize, usize)],
    beta_grid: &[f64],
    ranks: &[usize],
    probe: ProbePoint,
    method: JacobianMethod,
) -> Result<ProbeSweep> {
    let lre = fit_lre(model, fit_examples, 1.0, probe, method)?;
    let faith = beta_grid
        .par_iter()
        .map(|&beta| faithfulness(&lre.clone().with_beta(beta), model, eval))
        .collect();
    let caus: Vec<(f64, f64)> = ranks
        .par_iter()
        .map(|&rank| {
            let pinv = low_rank_pinv(&lre.w, rank)?;
            let c = causality_with_pinv(&pinv, probe, model, eval, pairs);
            Ok((c.hard, c.soft))
        })
        .collect::<Result<_>>()?;
    Ok(ProbeSweep {
        probe,
        faith,
        hard: caus.iter().map(|c| c.0).collect(),
        soft: caus.iter().map(|c| c.1).collect(),
    })
}

/// First index of the maximum; earlier (smaller) settings win ties.
fn best_index(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Sweeps β (faithfulness) and rank (hard causality) at every probe point and
/// selects the probe point with the best causality. Ties go to the smaller
/// rank, then the smaller β, then the earlier probe point.
pub fn sweep_hyperparams(
    model: &dyn RelationModel,
    fit_examples: &[RelationExample],
    eval: &[RelationExample],
    beta_grid: &[f64],
    ranks: &[usize],
    probe_points: &[ProbePoint],
    method: JacobianMethod,
) -> Result<SweepResult> {
    if beta_grid.is_empty() || ranks.is_empty() || probe_points.is_empty() {
        return Err(Error::InvalidArgument("sweep grids must be nonempty".into()));
    }
    if eval.is_empty() {
        return Err(Error::InvalidArgument("sweep needs evaluation examples".into()));
    }
    let pairs = causal_pairs(eval);
    let sweeps: Vec<ProbeSweep> = probe_points
        .iter()
        .map(|&p| sweep_probe(model, fit_examples, eval, &pairs, beta_grid, ranks, p, method))
        .collect::<Result<_>>()?;

    let mut chosen: Option<(&ProbeSweep, usize, usize)> = None;
    for sweep in &sweeps {
        let r = best_index(&sweep.hard);
        let b = best_index(&sweep.faith);
        let better = match chosen {
            None => true,
            Some((cur, cr, cb)) => {
                let (h, ch) = (sweep.hard[r], cur.hard[cr]);
                h > ch || (h == ch && (ranks[r] < ranks[cr] || (ranks[r] == ranks[cr] && beta_grid[b] < beta_grid[cb])))
            }
        };
        if better {
            chosen = Some((sweep, r, b));
        }
    }
    let (sweep, r, b) = chosen.expect("at least one probe point");

    let surface = |pick: &dyn Fn(&ProbeSweep) -> &Vec<f64>, settings: &dyn Fn(usize) -> f64| {
        sweeps
            .iter()
            .flat_map(|s| {
                pick(s).iter().enumerate().map(move |(i, &value)| SweepPoint {
                    probe_point: s.probe,
                    value,
                    setting: settings(i),
                })
            })
            .collect::<Vec<_>>()
    };
    Ok(SweepResult {
        best: SweepBest {
            probe_point: sweep.probe,
            beta: beta_grid[b],
            rank: ranks[r],
            faithfulness: sweep.faith[b],
            hard_causality: sweep.hard[r],
            soft_causality: sweep.soft[r],
        },
        faithfulness_surface: surface(&|s| &s.faith, &|i| beta_grid[i]),
        causality_surface: surface(&|s| &s.hard, &|i| ranks[i] as f64),
        soft_causality_surface: surface(&|s| &s.soft, &|i| ranks[i] as f64),
    })
}
