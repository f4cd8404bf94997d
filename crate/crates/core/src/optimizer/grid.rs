//! Pairwise feasibility grid.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::FeatureId;
use crate::optimizer::{optimize, ParamSpace, RunConfig, Targets};
use crate::rng::derive_seed;

/// Target values of the reference grid.
pub const DEFAULT_TARGETS: [f64; 5] = [0.0, 0.1, 0.5, 0.7, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub feature_a: FeatureId,
    pub feature_b: FeatureId,
    pub target_a: f64,
    pub target_b: f64,
    pub best_distance: f64,
    pub trials_used: usize,
}

/// Every unordered pair of distinct features, in input order.
pub fn feature_pairs(features: &[FeatureId]) -> Vec<(FeatureId, FeatureId)> {
    let mut pairs = Vec::new();
    for (i, a) in features.iter().enumerate() {
        for b in &features[i + 1..] {
            pairs.push((*a, *b));
        }
    }
    pairs
}

/// Runs one independent optimization per feature pair and target
/// combination; cell `i` uses a master seed derived from the run's seed
/// and `i`.
pub fn build_grid(
    features: &[FeatureId],
    targets: &[f64],
    space: &ParamSpace,
    cfg: &RunConfig,
) -> Result<Vec<GridCell>> {
    let mut unique = features.to_vec();
    unique.sort();
    unique.dedup();
    if unique.len() != features.len() {
        return Err(Error::param("grid features must be distinct"));
    }
    let pairs = feature_pairs(features);
    if pairs.is_empty() {
        return Err(Error::param("grid needs at least two features"));
    }
    if targets.is_empty() {
        return Err(Error::param("grid needs at least one target value"));
    }
    let mut jobs = Vec::new();
    for &(a, b) in &pairs {
        for &ta in targets {
            for &tb in targets {
                jobs.push((a, b, ta, tb));
            }
        }
    }
    jobs.into_par_iter()
        .enumerate()
        .map(|(i, (a, b, ta, tb))| {
            let t = Targets::from_pairs([(a, ta), (b, tb)])?;
            let cell_cfg = RunConfig {
                master_seed: derive_seed(cfg.master_seed, i as u64),
                ..cfg.clone()
            };
            let run = optimize(&t, space, &cell_cfg)?;
            Ok(GridCell {
                feature_a: a,
                feature_b: b,
                target_a: ta,
                target_b: tb,
                best_distance: run.best_distance(),
                trials_used: run.history.len(),
            })
        })
        .collect()
}

pub fn grid_csv(cells: &[GridCell]) -> String {
    let mut out = String::from("feature_a,feature_b,target_a,target_b,best_distance,trials_used\n");
    for c in cells {
        writeln!(
            out,
            "{},{},{},{},{:.6},{}",
            c.feature_a, c.feature_b, c.target_a, c.target_b, c.best_distance, c.trials_used
        )
        .expect("writing to a string");
    }
    out
}
