//! Order-k Markov chains fitted to sampled traces.
//!
//! A state is the window of the last `k` activities of a case. The empty
//! window is the implicit start state; the end of a case is the [`Symbol::End`]
//! transition, which leads to no state.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::tree::{sample_log, ProcessTree, Trace};

pub const DEFAULT_N_TRACES: usize = 1000;

const ROW_TOLERANCE: f64 = 1e-9;

/// Hard cap on the length of a single chain walk.
pub const MAX_WALK_LEN: usize = 10_000;

pub type History = Vec<String>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Symbol {
    Activity(String),
    End,
}

impl Symbol {
    pub fn activity(&self) -> Option<&str> {
        match self {
            Symbol::Activity(a) => Some(a),
            Symbol::End => None,
        }
    }
}

/// Transition counts keyed by history window (empty = start state).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CountTable {
    pub order: usize,
    pub counts: BTreeMap<History, BTreeMap<Symbol, u64>>,
}

impl CountTable {
    pub fn get(&self, from: &[&str], to: &Symbol) -> u64 {
        let key: History = from.iter().map(|s| s.to_string()).collect();
        self.counts
            .get(&key)
            .and_then(|row| row.get(to))
            .copied()
            .unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().flat_map(|r| r.values()).sum()
    }
}

fn advance(history: &[String], next: &str, order: usize) -> History {
    let mut h: History = history.to_vec();
    h.push(next.to_string());
    if h.len() > order {
        h.drain(..h.len() - order);
    }
    h
}

/// Counts start, inner and end transitions of every trace.
pub fn count_transitions(log: &[Trace], order: usize) -> Result<CountTable> {
    if order == 0 {
        return Err(Error::param("markov order must be at least 1"));
    }
    if log.is_empty() {
        return Err(Error::param("cannot count transitions of an empty log"));
    }
    let mut counts: BTreeMap<History, BTreeMap<Symbol, u64>> = BTreeMap::new();
    for trace in log {
        let mut history: History = Vec::new();
        for a in trace {
            *counts
                .entry(history.clone())
                .or_default()
                .entry(Symbol::Activity(a.clone()))
                .or_default() += 1;
            history = advance(&history, a, order);
        }
        *counts
            .entry(history)
            .or_default()
            .entry(Symbol::End)
            .or_default() += 1;
    }
    Ok(CountTable { order, counts })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub symbol: Symbol,
    pub prob: f64,
    /// Index of the successor state; `None` for [`Symbol::End`].
    pub target: Option<usize>,
}

/// Row-stochastic order-k chain. State 0 is the start state.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    order: usize,
    states: Vec<History>,
    rows: Vec<Vec<Transition>>,
}

impl MarkovChain {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn states(&self) -> &[History] {
        &self.states
    }

    pub fn rows(&self) -> &[Vec<Transition>] {
        &self.rows
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn state_index(&self, history: &[&str]) -> Option<usize> {
        self.states
            .iter()
            .position(|s| s.len() == history.len() && s.iter().zip(history).all(|(a, b)| a == b))
    }

    /// Transition probability from `history` to `symbol`, zero if absent.
    pub fn prob(&self, history: &[&str], symbol: &Symbol) -> f64 {
        self.state_index(history)
            .and_then(|i| self.rows[i].iter().find(|t| &t.symbol == symbol))
            .map(|t| t.prob)
            .unwrap_or(0.0)
    }

    /// Distinct activity labels appearing on transitions.
    pub fn alphabet(&self) -> BTreeSet<&str> {
        self.rows
            .iter()
            .flatten()
            .filter_map(|t| t.symbol.activity())
            .collect()
    }

    /// Builds a chain from explicit rows of `(symbol, prob)` per state,
    /// resolving successor states and checking every invariant.
    pub fn from_rows(
        order: usize,
        states: Vec<History>,
        rows: Vec<Vec<(Symbol, f64)>>,
    ) -> Result<Self> {
        if order == 0 {
            return Err(Error::Definition("markov order must be at least 1".into()));
        }
        if states.is_empty() || !states[0].is_empty() {
            return Err(Error::Definition(
                "first chain state must be the empty start history".into(),
            ));
        }
        if rows.len() != states.len() {
            return Err(Error::Definition(
                "one transition row per state required".into(),
            ));
        }
        let index: BTreeMap<&History, usize> =
            states.iter().enumerate().map(|(i, s)| (s, i)).collect();
        if index.len() != states.len() {
            return Err(Error::Definition("duplicate chain state".into()));
        }
        let mut resolved = Vec::with_capacity(rows.len());
        for (i, row) in rows.into_iter().enumerate() {
            if states[i].len() > order || (i > 0 && states[i].is_empty()) {
                return Err(Error::Definition(format!(
                    "state {i} has an invalid history length"
                )));
            }
            let mut out = Vec::with_capacity(row.len());
            for (symbol, prob) in row {
                if !prob.is_finite() || prob <= 0.0 || prob > 1.0 + ROW_TOLERANCE {
                    return Err(Error::Definition(format!(
                        "transition probability {prob} out of range in state {i}"
                    )));
                }
                let target = match &symbol {
                    Symbol::End => None,
                    Symbol::Activity(a) => {
                        let next = advance(&states[i], a, order);
                        Some(*index.get(&next).ok_or_else(|| {
                            Error::Definition(format!("successor {next:?} of state {i} missing"))
                        })?)
                    }
                };
                out.push(Transition {
                    symbol,
                    prob,
                    target,
                });
            }
            let sum: f64 = out.iter().map(|t| t.prob).sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::Definition(format!("row {i} sums to {sum}")));
            }
            resolved.push(out);
        }
        let chain = MarkovChain {
            order,
            states,
            rows: resolved,
        };
        let (reach, coreach) = chain.reachability();
        if reach.iter().zip(&coreach).any(|(r, c)| !r || !c) {
            return Err(Error::Definition(
                "every state must be reachable from start and reach end".into(),
            ));
        }
        Ok(chain)
    }

    /// (reachable from start, can reach end) flags per state.
    fn reachability(&self) -> (Vec<bool>, Vec<bool>) {
        let n = self.states.len();
        let mut reach = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        reach[0] = true;
        while let Some(s) = queue.pop_front() {
            for t in &self.rows[s] {
                if let Some(j) = t.target {
                    if !reach[j] {
                        reach[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        let mut coreach = vec![false; n];
        let mut changed = true;
        while changed {
            changed = false;
            for s in 0..n {
                if coreach[s] {
                    continue;
                }
                if self.rows[s]
                    .iter()
                    .any(|t| t.target.is_none_or(|j| coreach[j]))
                {
                    coreach[s] = true;
                    changed = true;
                }
            }
        }
        (reach, coreach)
    }

    /// Drops states that are unreachable or cannot terminate and
    /// renormalizes the remaining rows.
    fn pruned(self) -> Result<Self> {
        let (reach, coreach) = self.reachability();
        if !coreach[0] {
            return Err(Error::Simulation("start state cannot reach end".into()));
        }
        let keep: Vec<bool> = reach.iter().zip(&coreach).map(|(r, c)| *r && *c).collect();
        let mut remap = vec![usize::MAX; keep.len()];
        let mut states = Vec::new();
        for (i, k) in keep.iter().enumerate() {
            if *k {
                remap[i] = states.len();
                states.push(self.states[i].clone());
            }
        }
        let mut rows = Vec::with_capacity(states.len());
        for (i, row) in self.rows.into_iter().enumerate() {
            if !keep[i] {
                continue;
            }
            let mut kept: Vec<Transition> = row
                .into_iter()
                .filter(|t| t.target.is_none_or(|j| keep[j]))
                .map(|mut t| {
                    t.target = t.target.map(|j| remap[j]);
                    t
                })
                .collect();
            let sum: f64 = kept.iter().map(|t| t.prob).sum();
            for t in &mut kept {
                t.prob /= sum;
            }
            rows.push(kept);
        }
        Ok(MarkovChain {
            order: self.order,
            states,
            rows,
        })
    }

    /// Draws the next transition out of `state`.
    pub fn step<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> &Transition {
        let row = &self.rows[state];
        let mut u: f64 = rng.random();
        for t in row {
            if u < t.prob {
                return t;
            }
            u -= t.prob;
        }
        row.last().expect("rows are never empty")
    }

    /// Samples one start-to-end walk, returning the emitted activities.
    pub fn walk<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<&str> {
        let mut out = Vec::new();
        let mut state = 0;
        while out.len() < MAX_WALK_LEN {
            let t = self.step(state, rng);
            match (&t.symbol, t.target) {
                (Symbol::Activity(a), Some(next)) => {
                    out.push(a.as_str());
                    state = next;
                }
                _ => break,
            }
        }
        out
    }

    /// Probability that a walk emits exactly `trace`.
    pub fn trace_probability(&self, trace: &[&str]) -> f64 {
        let mut p = 1.0;
        let mut state = 0;
        for a in trace {
            let sym = Symbol::Activity(a.to_string());
            match self.rows[state].iter().find(|t| t.symbol == sym) {
                Some(t) => {
                    p *= t.prob;
                    state = t.target.expect("activity transitions have targets");
                }
                None => return 0.0,
            }
        }
        p * self.rows[state]
            .iter()
            .find(|t| t.symbol == Symbol::End)
            .map_or(0.0, |t| t.prob)
    }

    /// Structural simplification: in every branching row each transition
    /// other than the most probable one is removed with `prune_prob`, then
    /// rows are renormalized. Rows whose pruning would trap a walk are
    /// restored, and states that become unreachable are dropped.
    pub fn simplified<R: Rng + ?Sized>(&self, prune_prob: f64, rng: &mut R) -> Result<Self> {
        if !(0.0..=1.0).contains(&prune_prob) {
            return Err(Error::param("simplification probability outside [0, 1]"));
        }
        let mut rows = self.rows.clone();
        for row in rows.iter_mut() {
            if row.len() < 2 {
                continue;
            }
            let keep =
                row.iter().enumerate().fold(
                    0,
                    |best, (i, t)| if t.prob > row[best].prob { i } else { best },
                );
            let mut i = 0;
            row.retain(|_| {
                let k = i == keep || !rng.random_bool(prune_prob);
                i += 1;
                k
            });
        }
        let mut chain = MarkovChain {
            order: self.order,
            states: self.states.clone(),
            rows,
        };
        loop {
            let (reach, coreach) = chain.reachability();
            let stuck: Vec<usize> = (0..chain.n_states())
                .filter(|&s| reach[s] && !coreach[s])
                .collect();
            if stuck.is_empty() {
                break;
            }
            for s in stuck {
                chain.rows[s] = self.rows[s].clone();
            }
        }
        chain.pruned()
    }

    pub fn to_repr(&self) -> ChainRepr {
        let transitions = self
            .rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| {
                row.iter()
                    .map(move |t| (i, t.symbol.activity().map(str::to_string), t.prob))
            })
            .collect();
        ChainRepr {
            order: self.order,
            states: self.states.clone(),
            transitions,
        }
    }

    pub fn from_repr(repr: &ChainRepr) -> Result<Self> {
        let mut rows: Vec<Vec<(Symbol, f64)>> = vec![Vec::new(); repr.states.len()];
        for (from, to, p) in &repr.transitions {
            let row = rows.get_mut(*from).ok_or_else(|| {
                Error::Definition(format!("transition from unknown state {from}"))
            })?;
            let symbol = match to {
                Some(a) => Symbol::Activity(a.clone()),
                None => Symbol::End,
            };
            row.push((symbol, *p));
        }
        MarkovChain::from_rows(repr.order, repr.states.clone(), rows)
    }
}

/// Serialized chain: state histories plus sparse `(from, to, p)` triples,
/// where `to = null` is the end state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainRepr {
    pub order: usize,
    pub states: Vec<History>,
    pub transitions: Vec<(usize, Option<String>, f64)>,
}

/// Normalizes counts into a row-stochastic chain.
pub fn normalize(table: &CountTable) -> Result<MarkovChain> {
    let states: Vec<History> = table.counts.keys().cloned().collect();
    if states.first().is_none_or(|s| !s.is_empty()) {
        return Err(Error::param("count table has no start state"));
    }
    let index: BTreeMap<&History, usize> = states.iter().enumerate().map(|(i, s)| (s, i)).collect();
    let mut rows = Vec::with_capacity(states.len());
    for (history, row) in &table.counts {
        let total: u64 = row.values().sum();
        if total == 0 {
            return Err(Error::param(format!("state {history:?} has no counts")));
        }
        let mut out = Vec::with_capacity(row.len());
        for (symbol, c) in row {
            let target = match symbol {
                Symbol::End => None,
                Symbol::Activity(a) => {
                    let next = advance(history, a, table.order);
                    Some(*index.get(&next).ok_or_else(|| {
                        Error::param(format!("count table lacks successor state {next:?}"))
                    })?)
                }
            };
            out.push(Transition {
                symbol: symbol.clone(),
                prob: *c as f64 / total as f64,
                target,
            });
        }
        rows.push(out);
    }
    MarkovChain {
        order: table.order,
        states,
        rows,
    }
    .pruned()
}

/// Samples `n_traces` traces from the tree and fits an order-`k` chain.
pub fn tree_to_chain(
    tree: &ProcessTree,
    n_traces: usize,
    order: usize,
    seed: u64,
) -> Result<MarkovChain> {
    normalize(&count_transitions(
        &conversion_log(tree, n_traces, seed)?,
        order,
    )?)
}

/// The trace log [`tree_to_chain`] fits for the same arguments.
pub fn conversion_log(tree: &ProcessTree, n_traces: usize, seed: u64) -> Result<Vec<Trace>> {
    sample_log(tree, n_traces, rng::derive_seed(seed, 0x7472_6565))
}
