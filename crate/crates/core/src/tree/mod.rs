//! Block-structured process trees.
//!
//! Trees are generated top-down from operator weights, and traces are
//! sampled by recursive descent. Sampled logs feed the Markov chain
//! conversion in [`crate::markov`].

mod ptml;

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, SimRng};

pub use ptml::parse_tree;

/// Hard cap on loop iterations in a single trace.
pub const MAX_LOOP_ITERATIONS: usize = 1000;

const SIMPLEX_TOLERANCE: f64 = 1e-9;

pub type Trace = Vec<String>;

#[derive(Debug, Clone, PartialEq)]
pub enum ProcessTree {
    Leaf(String),
    /// Silent step (tau); emits nothing.
    Silent,
    Sequence(Vec<ProcessTree>),
    /// Exclusive choice; `weights[i]` is the probability of `children[i]`.
    Choice {
        children: Vec<ProcessTree>,
        weights: Vec<f64>,
    },
    Parallel(Vec<ProcessTree>),
    /// `body (redo body)*`, leaving after each body with `exit_prob`.
    Loop {
        body: Box<ProcessTree>,
        redo: Box<ProcessTree>,
        exit_prob: f64,
    },
}

impl ProcessTree {
    pub fn leaf(activity: impl Into<String>) -> Self {
        ProcessTree::Leaf(activity.into())
    }

    pub fn sequence(children: Vec<ProcessTree>) -> Result<Self> {
        check_arity("sequence", &children)?;
        Ok(ProcessTree::Sequence(children))
    }

    pub fn parallel(children: Vec<ProcessTree>) -> Result<Self> {
        check_arity("parallel", &children)?;
        Ok(ProcessTree::Parallel(children))
    }

    pub fn choice(children: Vec<ProcessTree>, weights: Vec<f64>) -> Result<Self> {
        let tree = ProcessTree::Choice { children, weights };
        tree.validate_node()?;
        Ok(tree)
    }

    pub fn looped(body: ProcessTree, redo: ProcessTree, exit_prob: f64) -> Result<Self> {
        let tree = ProcessTree::Loop {
            body: Box::new(body),
            redo: Box::new(redo),
            exit_prob,
        };
        tree.validate_node()?;
        Ok(tree)
    }

    fn validate_node(&self) -> Result<()> {
        match self {
            ProcessTree::Leaf(_) | ProcessTree::Silent => Ok(()),
            ProcessTree::Sequence(c) => check_arity("sequence", c),
            ProcessTree::Parallel(c) => check_arity("parallel", c),
            ProcessTree::Choice { children, weights } => {
                check_arity("choice", children)?;
                if weights.len() != children.len() {
                    return Err(Error::param("choice needs one weight per child"));
                }
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(Error::param("choice weights must be non-negative"));
                }
                let sum: f64 = weights.iter().sum();
                if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
                    return Err(Error::param(format!("choice weights sum to {sum}, not 1")));
                }
                Ok(())
            }
            ProcessTree::Loop { exit_prob, .. } => {
                if !(*exit_prob > 0.0 && *exit_prob <= 1.0) {
                    return Err(Error::param(format!(
                        "loop exit probability {exit_prob} outside (0, 1]"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Checks the structural invariants of the whole tree, including
    /// uniqueness of leaf labels.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        self.validate_rec(&mut seen)
    }

    fn validate_rec<'a>(&'a self, seen: &mut BTreeSet<&'a str>) -> Result<()> {
        self.validate_node()?;
        if let ProcessTree::Leaf(a) = self {
            if !seen.insert(a.as_str()) {
                return Err(Error::param(format!("duplicate leaf label {a:?}")));
            }
        }
        for child in self.children() {
            child.validate_rec(seen)?;
        }
        Ok(())
    }

    pub fn children(&self) -> Vec<&ProcessTree> {
        match self {
            ProcessTree::Leaf(_) | ProcessTree::Silent => Vec::new(),
            ProcessTree::Sequence(c) | ProcessTree::Parallel(c) => c.iter().collect(),
            ProcessTree::Choice { children, .. } => children.iter().collect(),
            ProcessTree::Loop { body, redo, .. } => vec![body.as_ref(), redo.as_ref()],
        }
    }

    /// Depth counting the root as 1.
    pub fn depth(&self) -> usize {
        1 + self.children().iter().map(|c| c.depth()).max().unwrap_or(0)
    }

    /// Leaf labels in left-to-right order.
    pub fn activities(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_activities(&mut out);
        out
    }

    fn collect_activities<'a>(&'a self, out: &mut Vec<&'a str>) {
        if let ProcessTree::Leaf(a) = self {
            out.push(a);
        }
        for c in self.children() {
            c.collect_activities(out);
        }
    }
}

fn check_arity(kind: &str, children: &[ProcessTree]) -> Result<()> {
    if children.len() < 2 {
        return Err(Error::param(format!("{kind} needs at least two children")));
    }
    Ok(())
}

impl fmt::Display for ProcessTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        ptml::write_tree(self, f)
    }
}

/// Parameters of the random tree generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeGenParams {
    pub n_activities: usize,
    pub w_seq: f64,
    pub w_choice: f64,
    pub w_parallel: f64,
    pub w_loop: f64,
    pub p_silent: f64,
    pub max_depth: usize,
    pub seed: u64,
}

impl Default for TreeGenParams {
    fn default() -> Self {
        TreeGenParams {
            n_activities: 8,
            w_seq: 0.4,
            w_choice: 0.3,
            w_parallel: 0.2,
            w_loop: 0.1,
            p_silent: 0.1,
            max_depth: 3,
            seed: 0,
        }
    }
}

impl TreeGenParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_activities < 1 {
            return Err(Error::param("n_activities must be at least 1"));
        }
        if self.max_depth < 1 {
            return Err(Error::param("max_depth must be at least 1"));
        }
        let w = self.weights();
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::param("operator weights must be non-negative"));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::param(format!(
                "operator weights sum to {sum}, not 1"
            )));
        }
        if !(0.0..=1.0).contains(&self.p_silent) {
            return Err(Error::param("p_silent outside [0, 1]"));
        }
        Ok(())
    }

    fn weights(&self) -> [f64; 4] {
        [self.w_seq, self.w_choice, self.w_parallel, self.w_loop]
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Operator {
    Sequence,
    Choice,
    Parallel,
    Loop,
}

const OPERATORS: [Operator; 4] = [
    Operator::Sequence,
    Operator::Choice,
    Operator::Parallel,
    Operator::Loop,
];

/// Widest fan-out drawn for operators above the leaf level.
const MAX_INNER_FANOUT: usize = 4;

struct TreeBuilder<'p> {
    params: &'p TreeGenParams,
    rng: SimRng,
    next_label: usize,
}

impl TreeBuilder<'_> {
    fn label(&mut self) -> ProcessTree {
        let l = ProcessTree::Leaf(format!("a{}", self.next_label));
        self.next_label += 1;
        l
    }

    fn build(&mut self, depth: usize, labels: usize) -> ProcessTree {
        if labels == 0 {
            return ProcessTree::Silent;
        }
        if depth >= self.params.max_depth || labels == 1 {
            return self.label();
        }
        let leaf_level = depth + 1 == self.params.max_depth;
        let op = self.draw_operator(leaf_level, labels);
        match op {
            Operator::Loop => {
                let body_labels = if leaf_level {
                    1
                } else {
                    self.rng.random_range(1..=labels)
                };
                let body = self.build(depth + 1, body_labels);
                let redo = self.build(depth + 1, labels - body_labels);
                let exit_prob = self.rng.random_range(0.3..0.8);
                ProcessTree::Loop {
                    body: Box::new(body),
                    redo: Box::new(redo),
                    exit_prob,
                }
            }
            _ => {
                let fanout = if leaf_level {
                    labels
                } else {
                    self.rng.random_range(2..=labels.min(MAX_INNER_FANOUT))
                };
                let parts = self.split(labels, fanout);
                let mut children: Vec<ProcessTree> = parts
                    .into_iter()
                    .map(|n| self.build(depth + 1, n))
                    .collect();
                if self.rng.random_bool(self.params.p_silent) {
                    let at = self.rng.random_range(0..=children.len());
                    children.insert(at, ProcessTree::Silent);
                }
                match op {
                    Operator::Sequence => ProcessTree::Sequence(children),
                    Operator::Parallel => ProcessTree::Parallel(children),
                    _ => {
                        let raw: Vec<f64> = (0..children.len())
                            .map(|_| self.rng.random_range(0.1..1.0))
                            .collect();
                        let total: f64 = raw.iter().sum();
                        let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
                        // Absorb rounding so the simplex check stays exact.
                        let rest: f64 = weights[1..].iter().sum();
                        weights[0] = 1.0 - rest;
                        ProcessTree::Choice { children, weights }
                    }
                }
            }
        }
    }

    fn draw_operator(&mut self, leaf_level: bool, labels: usize) -> Operator {
        let mut w = self.params.weights();
        if leaf_level && labels > 2 {
            w[3] = 0.0;
        }
        let total: f64 = w.iter().sum();
        if total <= 0.0 {
            return Operator::Sequence;
        }
        let mut u = self.rng.random_range(0.0..total);
        for (op, wi) in OPERATORS.iter().zip(w) {
            if u < wi {
                return *op;
            }
            u -= wi;
        }
        // Floating-point slack: fall back to the last operator with weight.
        OPERATORS
            .iter()
            .zip(w)
            .rev()
            .find(|(_, wi)| *wi > 0.0)
            .map(|(op, _)| *op)
            .unwrap_or(Operator::Sequence)
    }

    /// Random composition of `total` into `parts` positive integers.
    fn split(&mut self, total: usize, parts: usize) -> Vec<usize> {
        let mut cuts: Vec<usize> = rand::seq::index::sample(&mut self.rng, total - 1, parts - 1)
            .into_iter()
            .map(|c| c + 1)
            .collect();
        cuts.sort_unstable();
        let mut out = Vec::with_capacity(parts);
        let mut prev = 0;
        for c in cuts {
            out.push(c - prev);
            prev = c;
        }
        out.push(total - prev);
        out
    }
}

/// Generates a random process tree over labels `a0..a{n-1}`, each used once.
pub fn generate_tree(params: &TreeGenParams) -> Result<ProcessTree> {
    params.validate()?;
    let mut builder = TreeBuilder {
        params,
        rng: rng::seeded(params.seed),
        next_label: 0,
    };
    Ok(builder.build(1, params.n_activities))
}

/// Samples one trace from the tree.
pub fn sample_trace<R: Rng + ?Sized>(tree: &ProcessTree, rng: &mut R) -> Trace {
    let mut out = Vec::new();
    emit(tree, rng, &mut out);
    out
}

/// Samples one trace with a dedicated seed.
pub fn sample_trace_seeded(tree: &ProcessTree, seed: u64) -> Trace {
    sample_trace(tree, &mut rng::seeded(seed))
}

fn emit<R: Rng + ?Sized>(tree: &ProcessTree, rng: &mut R, out: &mut Trace) {
    match tree {
        ProcessTree::Leaf(a) => out.push(a.clone()),
        ProcessTree::Silent => {}
        ProcessTree::Sequence(children) => {
            for c in children {
                emit(c, rng, out);
            }
        }
        ProcessTree::Choice { children, weights } => {
            let i = pick_weighted(weights, rng);
            emit(&children[i], rng, out);
        }
        ProcessTree::Parallel(children) => {
            let parts: Vec<Trace> = children.iter().map(|c| sample_trace(c, rng)).collect();
            interleave(parts, rng, out);
        }
        ProcessTree::Loop {
            body,
            redo,
            exit_prob,
        } => {
            emit(body, rng, out);
            for _ in 1..MAX_LOOP_ITERATIONS {
                if rng.random_bool(*exit_prob) {
                    break;
                }
                emit(redo, rng, out);
                emit(body, rng, out);
            }
        }
    }
}

fn pick_weighted<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let mut u: f64 = rng.random();
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Uniformly random interleaving: drawing the next element from a part with
/// probability proportional to its remaining length makes every merge order
/// equally likely.
fn interleave<R: Rng + ?Sized>(parts: Vec<Trace>, rng: &mut R, out: &mut Trace) {
    let mut iters: Vec<std::vec::IntoIter<String>> =
        parts.into_iter().map(|p| p.into_iter()).collect();
    let mut remaining: usize = iters.iter().map(|i| i.len()).sum();
    while remaining > 0 {
        let mut k = rng.random_range(0..remaining);
        for it in iters.iter_mut() {
            if k < it.len() {
                out.push(it.next().expect("non-empty part"));
                break;
            }
            k -= it.len();
        }
        remaining -= 1;
    }
}

/// Samples `n_traces` independent traces.
pub fn sample_log(tree: &ProcessTree, n_traces: usize, seed: u64) -> Result<Vec<Trace>> {
    if n_traces == 0 {
        return Err(Error::param("n_traces must be at least 1"));
    }
    let mut rng = rng::seeded(seed);
    Ok((0..n_traces)
        .map(|_| sample_trace(tree, &mut rng))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn leaf(a: &str) -> ProcessTree {
        ProcessTree::leaf(a)
    }

    #[test]
    fn single_activity_tree_is_a_leaf() {
        let p = TreeGenParams {
            n_activities: 1,
            max_depth: 1,
            ..TreeGenParams::default()
        };
        assert_eq!(generate_tree(&p).unwrap(), leaf("a0"));
    }

    #[test]
    fn generation_is_deterministic() {
        let p = TreeGenParams {
            n_activities: 12,
            max_depth: 4,
            seed: 99,
            ..TreeGenParams::default()
        };
        assert_eq!(generate_tree(&p).unwrap(), generate_tree(&p).unwrap());
    }

    #[test]
    fn parallel_only_weights_give_parallel_root() {
        let p = TreeGenParams {
            n_activities: 4,
            w_seq: 0.0,
            w_choice: 0.0,
            w_parallel: 1.0,
            w_loop: 0.0,
            p_silent: 0.0,
            max_depth: 2,
            seed: 7,
        };
        let t = generate_tree(&p).unwrap();
        match &t {
            ProcessTree::Parallel(c) => {
                assert_eq!(c.len(), 4);
                assert!(c.iter().all(|x| matches!(x, ProcessTree::Leaf(_))));
            }
            other => panic!("expected parallel root, got {other}"),
        }
    }

    #[test]
    fn generated_trees_respect_bounds() {
        for seed in 0..200 {
            let p = TreeGenParams {
                n_activities: 3 + (seed as usize % 18),
                max_depth: 2 + (seed as usize % 4),
                seed,
                ..TreeGenParams::default()
            };
            let t = generate_tree(&p).unwrap();
            t.validate().unwrap();
            assert!(t.depth() <= p.max_depth);
            assert!(t.activities().len() <= p.n_activities);
        }
    }

    #[test]
    fn invalid_simplex_is_rejected() {
        let p = TreeGenParams {
            w_seq: 0.9,
            ..TreeGenParams::default()
        };
        assert!(matches!(generate_tree(&p), Err(Error::Param(_))));
    }

    #[test]
    fn sequence_and_degenerate_choice() {
        let seq = ProcessTree::sequence(vec![leaf("A"), leaf("B")]).unwrap();
        let ch = ProcessTree::choice(vec![leaf("A"), leaf("B")], vec![1.0, 0.0]).unwrap();
        let mut rng = rng::seeded(1);
        for _ in 0..100 {
            assert_eq!(sample_trace(&seq, &mut rng), vec!["A", "B"]);
            assert_eq!(sample_trace(&ch, &mut rng), vec!["A"]);
        }
    }

    #[test]
    fn parallel_interleavings_are_uniform() {
        // Parallel(A, ->(B, C)) has exactly three interleavings.
        let t = ProcessTree::parallel(vec![
            leaf("A"),
            ProcessTree::sequence(vec![leaf("B"), leaf("C")]).unwrap(),
        ])
        .unwrap();
        let n = 60_000;
        let mut counts: HashMap<String, usize> = HashMap::new();
        for tr in sample_log(&t, n, 3).unwrap() {
            *counts.entry(tr.concat()).or_default() += 1;
        }
        let mut keys: Vec<_> = counts.keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, vec!["ABC", "BAC", "BCA"]);
        let p = 1.0 / 3.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts.values() {
            assert!((*c as f64 - n as f64 * p).abs() < 4.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn sample_log_requires_traces() {
        assert!(sample_log(&leaf("A"), 0, 0).is_err());
        let seq = ProcessTree::sequence(vec![leaf("A"), leaf("B")]).unwrap();
        assert_eq!(sample_log(&seq, 3, 0).unwrap(), vec![vec!["A", "B"]; 3]);
    }

    #[test]
    fn loop_repetitions_are_geometric() {
        let t = ProcessTree::looped(leaf("A"), ProcessTree::Silent, 0.5).unwrap();
        let log = sample_log(&t, 10_000, 11).unwrap();
        let mean = log.iter().map(|t| t.len() as f64).sum::<f64>() / log.len() as f64;
        assert!((mean - 2.0).abs() < 0.1, "mean {mean}");
    }

    #[test]
    fn invalid_nodes_are_rejected() {
        assert!(ProcessTree::sequence(vec![leaf("A")]).is_err());
        assert!(ProcessTree::choice(vec![leaf("A"), leaf("B")], vec![0.5, 0.6]).is_err());
        assert!(ProcessTree::looped(leaf("A"), ProcessTree::Silent, 0.0).is_err());
        let dup = ProcessTree::Sequence(vec![leaf("A"), leaf("A")]);
        assert!(dup.validate().is_err());
    }
}
