//! Bayesian optimization of generator parameters toward feature targets.
//!
//! A run draws `n_init` scrambled Halton points, then proposes one point per
//! iteration by maximizing expected improvement under a Gaussian-process
//! surrogate, until `max_iter` evaluations or a distance below `epsilon`.

pub mod gp;
pub mod grid;
pub mod qmc;
pub mod space;

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{extract_stream, feature_distance, FeatureId, FeatureVector, WindowConfig};
use crate::markov::{tree_to_chain, DEFAULT_N_TRACES};
use crate::rng::{derive_seed, seeded};
use crate::sim::{simulate, SimulationParams, StreamDefinition};
use crate::tree::generate_tree;

pub use grid::{build_grid, GridCell, DEFAULT_TARGETS};
pub use space::{Candidate, Dim, ParamSpace};

/// Objective value of a failed evaluation; above any distance over at most
/// five unit-range features.
pub const PENALTY: f64 = 2.0;

const N_RANDOM_CANDIDATES: usize = 1024;
const N_LOCAL_CANDIDATES: usize = 64;
const LOCAL_STEP: f64 = 0.05;

const SEED_TREE: u64 = 1;
const SEED_CHAIN: u64 = 2;
const SEED_QMC: u64 = 3;
const SEED_ACQ: u64 = 4;
const SEED_SIM: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budget {
    #[serde(default = "default_n_init")]
    pub n_init: usize,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_n_init() -> usize {
    8
}

fn default_max_iter() -> usize {
    50
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            n_init: default_n_init(),
            max_iter: default_max_iter(),
        }
    }
}

impl Budget {
    /// Budget of `max_iter` total evaluations with the default initial
    /// design, shrunk if necessary.
    pub fn total(max_iter: usize) -> Self {
        Budget {
            n_init: default_n_init().min(max_iter).max(2),
            max_iter: max_iter.max(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub budget: Budget,
    pub epsilon: f64,
    pub n_eval_windows: usize,
    pub window: WindowConfig,
    pub n_seeds: usize,
    pub master_seed: u64,
    /// Simulation fields outside the parameter space.
    pub base: SimulationParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            budget: Budget::default(),
            epsilon: 0.02,
            n_eval_windows: 4,
            window: WindowConfig::default(),
            n_seeds: 3,
            master_seed: 0,
            base: SimulationParams::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget.n_init < 2 {
            return Err(Error::param("n_init must be at least 2"));
        }
        if self.budget.max_iter < self.budget.n_init {
            return Err(Error::param("max_iter must be at least n_init"));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::param("epsilon must be non-negative"));
        }
        if self.n_eval_windows == 0 || self.n_seeds == 0 {
            return Err(Error::param("n_eval_windows and n_seeds must be positive"));
        }
        self.window.validate()?;
        self.base.validate()
    }

    pub fn n_events(&self) -> usize {
        self.n_eval_windows * self.window.window_size
    }

    /// Simulation seed of replicate `r`.
    pub fn sim_seed(&self, r: usize) -> u64 {
        derive_seed(self.master_seed, SEED_SIM + r as u64)
    }
}

/// Target values for a subset of features.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets(FeatureVector);

impl Targets {
    pub fn new(targets: FeatureVector) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::param("no targets given"));
        }
        if let Some((id, v)) = targets.iter().find(|(_, v)| !(0.0..=1.0).contains(v)) {
            return Err(Error::param(format!("target {id} = {v} outside [0, 1]")));
        }
        Ok(Targets(targets))
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (FeatureId, f64)>) -> Result<Self> {
        Self::new(FeatureVector::from_pairs(pairs))
    }

    pub fn vector(&self) -> &FeatureVector {
        &self.0
    }

    pub fn ids(&self) -> Vec<FeatureId> {
        self.0.ids().collect()
    }
}

/// Targets file: `{"targets": {...}, "budget": {...}, "master_seed": N,
/// "fixed": {dimension: value}}`; all but `targets` optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetsFile {
    pub targets: BTreeMap<FeatureId, f64>,
    #[serde(default)]
    pub budget: Budget,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fixed: BTreeMap<String, f64>,
}

impl TargetsFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse(e.line(), e.to_string()))
    }

    pub fn targets(&self) -> Result<Targets> {
        Targets::new(FeatureVector::from_pairs(
            self.targets.iter().map(|(k, v)| (*k, *v)),
        ))
    }

    pub fn space(&self) -> Result<ParamSpace> {
        let mut space = ParamSpace::default();
        for (name, v) in &self.fixed {
            space.fix(name, *v)?;
        }
        Ok(space)
    }
}

/// Outcome of one objective evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub distance: f64,
    /// Features averaged over windows and seeds; `None` on failure.
    pub features: Option<FeatureVector>,
}

/// Single-segment definition of a candidate, simulated with `sim_seed`.
pub fn build_definition(
    candidate: &Candidate,
    cfg: &RunConfig,
    sim_seed: u64,
) -> Result<StreamDefinition> {
    let mut tree_params = candidate.tree.clone();
    tree_params.seed = derive_seed(cfg.master_seed, SEED_TREE);
    let tree = generate_tree(&tree_params)?;
    let chain = tree_to_chain(
        &tree,
        DEFAULT_N_TRACES,
        candidate.markov_order,
        derive_seed(cfg.master_seed, SEED_CHAIN),
    )?;
    let params = SimulationParams {
        seed: sim_seed,
        ..candidate.sim.clone()
    };
    Ok(StreamDefinition::new(
        Some(tree),
        chain,
        params,
        cfg.n_events(),
    ))
}

/// Mean window features of one simulated replicate.
pub fn measure(def: &StreamDefinition, cfg: &RunConfig) -> Result<FeatureVector> {
    let stream = simulate(def, cfg.n_events())?;
    let windows = extract_stream(&stream, &cfg.window);
    FeatureVector::mean(&windows)
        .ok_or_else(|| Error::Simulation("stream shorter than one window".into()))
}

/// Mean distance to the targets over `n_seeds` simulation replicates.
pub fn objective(candidate: &Candidate, targets: &Targets, cfg: &RunConfig) -> Evaluation {
    let ids = targets.ids();
    let replicates: Result<Vec<(f64, FeatureVector)>> = (0..cfg.n_seeds)
        .into_par_iter()
        .map(|r| {
            let def = build_definition(candidate, cfg, cfg.sim_seed(r))?;
            let v = measure(&def, cfg)?;
            Ok((feature_distance(&v, targets.vector(), &ids)?, v))
        })
        .collect();
    match replicates {
        Ok(reps) => {
            let n = reps.len() as f64;
            let distance = reps.iter().map(|r| r.0).sum::<f64>() / n;
            let vectors: Vec<FeatureVector> = reps.into_iter().map(|r| r.1).collect();
            Evaluation {
                distance,
                features: FeatureVector::mean(&vectors),
            }
        }
        Err(_) => Evaluation {
            distance: PENALTY,
            features: None,
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    /// Free-dimension unit coordinates.
    pub point: Vec<f64>,
    pub values: BTreeMap<String, f64>,
    pub distance: f64,
    pub features: Option<FeatureVector>,
    /// Whether the surrogate proposed this point.
    pub from_surrogate: bool,
}

#[derive(Debug, Clone)]
pub struct OptimizationRun {
    pub targets: Targets,
    pub config: RunConfig,
    pub history: Vec<Trial>,
    pub best_index: usize,
    pub best_definition: Option<StreamDefinition>,
}

impl OptimizationRun {
    pub fn best(&self) -> &Trial {
        &self.history[self.best_index]
    }

    pub fn best_distance(&self) -> f64 {
        self.best().distance
    }

    pub fn reached_epsilon(&self) -> bool {
        self.best_distance() < self.config.epsilon
    }

    /// Best distance after each trial.
    pub fn best_so_far(&self) -> Vec<f64> {
        self.history
            .iter()
            .scan(f64::INFINITY, |b, t| {
                *b = b.min(t.distance);
                Some(*b)
            })
            .collect()
    }

    /// Trial history as CSV: trial index, phase, distance, dimension values
    /// and measured features.
    pub fn history_csv(&self) -> String {
        let dims: Vec<&String> = self
            .history
            .first()
            .map(|t| t.values.keys().collect())
            .unwrap_or_default();
        let mut out = String::from("trial,phase,distance");
        for d in &dims {
            out.push(',');
            out.push_str(d);
        }
        for f in FeatureId::ALL {
            out.push(',');
            out.push_str(f.name());
        }
        out.push('\n');
        for (i, t) in self.history.iter().enumerate() {
            let phase = if t.from_surrogate {
                "surrogate"
            } else {
                "initial"
            };
            out.push_str(&format!("{i},{phase},{:.6}", t.distance));
            for d in &dims {
                out.push_str(&format!(",{:.6}", t.values[*d]));
            }
            for f in FeatureId::ALL {
                match t.features.as_ref().and_then(|v| v.get(f)) {
                    Some(v) => out.push_str(&format!(",{v:.6}")),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

fn evaluate(
    point: Vec<f64>,
    from_surrogate: bool,
    space: &ParamSpace,
    targets: &Targets,
    cfg: &RunConfig,
) -> Result<Trial> {
    let candidate = space.decode(&point, &cfg.base)?;
    let eval = objective(&candidate, targets, cfg);
    Ok(Trial {
        point,
        values: candidate.values,
        distance: eval.distance,
        features: eval.features,
        from_surrogate,
    })
}

/// Point maximizing expected improvement among random and local candidates.
fn propose<R: Rng + ?Sized>(history: &[Trial], dims: usize, rng: &mut R) -> Result<Vec<f64>> {
    let x: Vec<Vec<f64>> = history.iter().map(|t| t.point.clone()).collect();
    let y: Vec<f64> = history.iter().map(|t| t.distance).collect();
    let gp = gp::Gp::fit(x, &y)?;
    let (best_i, best_y) = y
        .iter()
        .cloned()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty history");
    let incumbent = &history[best_i].point;
    let step = Normal::new(0.0, LOCAL_STEP).expect("valid sd");

    let mut candidates: Vec<Vec<f64>> = (0..N_RANDOM_CANDIDATES)
        .map(|_| (0..dims).map(|_| rng.random::<f64>()).collect())
        .collect();
    candidates.extend((0..N_LOCAL_CANDIDATES).map(|_| {
        incumbent
            .iter()
            .map(|x| (x + step.sample(rng)).clamp(0.0, 1.0))
            .collect()
    }));
    let scored: Vec<f64> = candidates
        .iter()
        .map(|c| {
            let (m, v) = gp.predict(c);
            gp::expected_improvement(m, v, best_y)
        })
        .collect();
    let best = scored
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("candidates exist");
    Ok(candidates.swap_remove(best))
}

/// Runs the optimization loop. The result carries the full trial history and
/// the best candidate as a definition simulated with replicate 0's seed.
pub fn optimize(targets: &Targets, space: &ParamSpace, cfg: &RunConfig) -> Result<OptimizationRun> {
    cfg.validate()?;
    let dims = space.n_free();
    let best_of = |h: &[Trial]| {
        h.iter()
            .enumerate()
            .min_by(|a, b| a.1.distance.total_cmp(&b.1.distance))
            .map(|(i, t)| (i, t.distance))
    };

    let mut history: Vec<Trial> = if dims == 0 {
        vec![evaluate(Vec::new(), false, space, targets, cfg)?]
    } else {
        let mut halton =
            qmc::Halton::new(dims, &mut seeded(derive_seed(cfg.master_seed, SEED_QMC)));
        halton
            .take_points(cfg.budget.n_init)
            .into_par_iter()
            .map(|p| evaluate(p, false, space, targets, cfg))
            .collect::<Result<_>>()?
    };

    let mut acq_rng = seeded(derive_seed(cfg.master_seed, SEED_ACQ));
    while dims > 0 && history.len() < cfg.budget.max_iter {
        if best_of(&history).is_some_and(|(_, d)| d < cfg.epsilon) {
            break;
        }
        let point = propose(&history, dims, &mut acq_rng)?;
        history.push(evaluate(point, true, space, targets, cfg)?);
    }

    let (best_index, _) = best_of(&history).expect("at least one trial");
    let best = &history[best_index];
    let best_definition = if best.features.is_some() {
        let candidate = space.decode(&best.point, &cfg.base)?;
        Some(build_definition(&candidate, cfg, cfg.sim_seed(0))?)
    } else {
        None
    };
    Ok(OptimizationRun {
        targets: targets.clone(),
        config: cfg.clone(),
        history,
        best_index,
        best_definition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(seed: u64, max_iter: usize) -> RunConfig {
        RunConfig {
            budget: Budget {
                n_init: 4,
                max_iter,
            },
            n_eval_windows: 2,
            window: WindowConfig::with_size(200),
            n_seeds: 2,
            master_seed: seed,
            ..RunConfig::default()
        }
    }

    #[test]
    fn config_rules() {
        let mut cfg = RunConfig::default();
        cfg.validate().unwrap();
        cfg.budget = Budget {
            n_init: 1,
            max_iter: 5,
        };
        assert!(cfg.validate().is_err());
        cfg.budget = Budget {
            n_init: 5,
            max_iter: 4,
        };
        assert!(cfg.validate().is_err());
        cfg.budget = Budget::default();
        cfg.epsilon = -1.0;
        assert!(cfg.validate().is_err());
        assert!(Targets::from_pairs([(FeatureId::Fractal, 1.5)]).is_err());
        assert!(Targets::new(FeatureVector::new()).is_err());
    }

    #[test]
    fn targets_file_parsing() {
        let text = r#"{ "targets": {"out_of_order": 0.5, "fractal": 0.1}, "budget": {"max_iter": 20}, "master_seed": 42 }"#;
        let f = TargetsFile::from_json(text).unwrap();
        assert_eq!(
            f.budget,
            Budget {
                n_init: 8,
                max_iter: 20
            }
        );
        assert_eq!(f.master_seed, 42);
        assert_eq!(
            f.targets().unwrap().ids(),
            vec![FeatureId::OutOfOrder, FeatureId::Fractal]
        );
        assert!(TargetsFile::from_json(r#"{"targets": {}, "extra": 1}"#).is_err());
        assert!(TargetsFile::from_json(r#"{"targets": {"speed": 1}}"#).is_err());
        let fixed =
            TargetsFile::from_json(r#"{"targets": {"fractal": 0}, "fixed": {"markov_order": 1}}"#)
                .unwrap();
        assert_eq!(
            fixed.space().unwrap().dim("markov_order").unwrap().fixed,
            Some(1.0)
        );
    }

    #[test]
    fn objective_is_deterministic_and_penalizes_nothing_valid() {
        let space = ParamSpace::default();
        let cfg = small_cfg(5, 4);
        let targets = Targets::from_pairs([(FeatureId::OutOfOrder, 0.3)]).unwrap();
        let c = space.decode(&vec![0.4; space.n_free()], &cfg.base).unwrap();
        let a = objective(&c, &targets, &cfg);
        assert_eq!(a, objective(&c, &targets, &cfg));
        assert!(a.distance < PENALTY && a.features.is_some());
    }

    #[test]
    fn quasi_random_only_when_budget_equals_init() {
        let targets = Targets::from_pairs([(FeatureId::Fractal, 0.4)]).unwrap();
        let run = optimize(&targets, &ParamSpace::default(), &small_cfg(1, 4)).unwrap();
        assert_eq!(run.history.len(), 4);
        assert!(run.history.iter().all(|t| !t.from_surrogate));
    }

    #[test]
    fn history_is_reproducible_and_best_so_far_monotone() {
        let targets = Targets::from_pairs([(FeatureId::Fractal, 0.4)]).unwrap();
        let space = ParamSpace::default();
        let a = optimize(&targets, &space, &small_cfg(2, 7)).unwrap();
        let b = optimize(&targets, &space, &small_cfg(2, 7)).unwrap();
        assert_eq!(a.history, b.history);
        assert!(a.best_so_far().windows(2).all(|w| w[1] <= w[0]));
        assert!(a.history.len() == 7 || a.reached_epsilon());
        assert_eq!(a.best_definition, b.best_definition);
        let csv = a.history_csv();
        assert_eq!(csv.lines().count(), a.history.len() + 1);
    }

    #[test]
    fn fully_fixed_space_evaluates_once() {
        let mut space = ParamSpace::default();
        for d in ParamSpace::default().dims() {
            let v = if d.integer { d.lo } else { (d.lo + d.hi) / 2.0 };
            space.fix(d.name, v).unwrap();
        }
        let targets = Targets::from_pairs([(FeatureId::Fractal, 0.0)]).unwrap();
        let run = optimize(&targets, &space, &small_cfg(3, 6)).unwrap();
        assert_eq!(run.history.len(), 1);
    }
}
