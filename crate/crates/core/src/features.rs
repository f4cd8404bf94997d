//! Tumbling windows and per-window stream features.
//!
//! All features are bounded in `[0, 1]`. The dependency features are
//! plug-in information measures (base 2) over the per-case activity
//! sequences inside a window:
//!
//! | feature          | definition                                          |
//! |------------------|-----------------------------------------------------|
//! | `temporal_dep`   | `1 - H(next | prev) / H(next)`                       |
//! | `non_linear_dep` | `(H(next | prev) - H(next | prev2, prev)) / H(next | prev)` |
//! | `long_term_dep`  | `I(first; last) / H(last)` over completed cases     |
//! | `out_of_order`   | share of events older than an earlier arrival        |
//! | `fractal`        | share of events belonging to nested sub-cases        |
//!
//! Degenerate windows map to fixed values instead of NaN; each rule is
//! documented on its function.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::{by_case, pair_intervals, ConcurrencyProfile, Event, Stream, Tick};

pub const DEFAULT_WINDOW_SIZE: usize = 500;
pub const MIN_WINDOW_SIZE: usize = 10;
/// Minimum number of activities for a case to count toward `long_term_dep`.
pub const DEFAULT_L_MIN: usize = 4;
/// Minimum number of qualifying cases for `long_term_dep`.
pub const LTD_MIN_CASES: usize = 5;
/// Concurrency level that maps to `avg_concurrency = 1`.
pub const DEFAULT_KAPPA: f64 = 10.0;

const ENTROPY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureId {
    TemporalDep,
    LongTermDep,
    NonLinearDep,
    OutOfOrder,
    Fractal,
    AvgConcurrency,
    MeanDisplacement,
}

impl FeatureId {
    /// Every feature, in CSV column order.
    pub const ALL: [FeatureId; 7] = [
        FeatureId::TemporalDep,
        FeatureId::LongTermDep,
        FeatureId::NonLinearDep,
        FeatureId::OutOfOrder,
        FeatureId::Fractal,
        FeatureId::AvgConcurrency,
        FeatureId::MeanDisplacement,
    ];

    /// The five optimizable stream characteristics.
    pub const PRIMARY: [FeatureId; 5] = [
        FeatureId::TemporalDep,
        FeatureId::LongTermDep,
        FeatureId::NonLinearDep,
        FeatureId::OutOfOrder,
        FeatureId::Fractal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureId::TemporalDep => "temporal_dep",
            FeatureId::LongTermDep => "long_term_dep",
            FeatureId::NonLinearDep => "non_linear_dep",
            FeatureId::OutOfOrder => "out_of_order",
            FeatureId::Fractal => "fractal",
            FeatureId::AvgConcurrency => "avg_concurrency",
            FeatureId::MeanDisplacement => "mean_displacement",
        }
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureId::ALL
            .into_iter()
            .find(|f| f.name() == s.trim())
            .ok_or_else(|| Error::param(format!("unknown feature {s:?}")))
    }
}

/// Named feature values; extracted vectors carry every [`FeatureId`],
/// target vectors only the features being optimized.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(BTreeMap<FeatureId, f64>);

impl FeatureVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (FeatureId, f64)>) -> Self {
        FeatureVector(pairs.into_iter().collect())
    }

    pub fn get(&self, id: FeatureId) -> Option<f64> {
        self.0.get(&id).copied()
    }

    pub fn set(&mut self, id: FeatureId, value: f64) {
        self.0.insert(id, value);
    }

    pub fn ids(&self) -> impl Iterator<Item = FeatureId> + '_ {
        self.0.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (FeatureId, f64)> + '_ {
        self.0.iter().map(|(k, v)| (*k, *v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Element-wise mean of vectors sharing the same ids.
    pub fn mean(vectors: &[FeatureVector]) -> Option<FeatureVector> {
        let first = vectors.first()?;
        let n = vectors.len() as f64;
        Some(FeatureVector(
            first
                .0
                .keys()
                .map(|k| {
                    let sum: f64 = vectors.iter().filter_map(|v| v.get(*k)).sum();
                    (*k, sum / n)
                })
                .collect(),
        ))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// Every event is compared with every earlier arrival.
    #[default]
    Global,
    /// Events are only compared within their own case.
    PerCase,
}

impl FromStr for Grouping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(Grouping::Global),
            "per-case" | "per_case" => Ok(Grouping::PerCase),
            other => Err(Error::param(format!("unknown grouping {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub window_size: usize,
    #[serde(default)]
    pub grouping: Grouping,
    #[serde(default = "default_l_min")]
    pub l_min: usize,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
}

fn default_l_min() -> usize {
    DEFAULT_L_MIN
}

fn default_kappa() -> f64 {
    DEFAULT_KAPPA
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            window_size: DEFAULT_WINDOW_SIZE,
            grouping: Grouping::Global,
            l_min: DEFAULT_L_MIN,
            kappa: DEFAULT_KAPPA,
        }
    }
}

impl WindowConfig {
    pub fn with_size(window_size: usize) -> Self {
        WindowConfig {
            window_size,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_size < MIN_WINDOW_SIZE {
            return Err(Error::param(format!(
                "window size {} below minimum {MIN_WINDOW_SIZE}",
                self.window_size
            )));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::param("kappa must be positive"));
        }
        Ok(())
    }
}

/// Consecutive disjoint windows of `window_size` events; a trailing partial
/// window is dropped.
pub fn tumble<'s>(stream: &'s Stream, cfg: &WindowConfig) -> Vec<&'s [Event]> {
    stream
        .events()
        .chunks_exact(cfg.window_size.max(1))
        .collect()
}

/// Out-of-order ratio and mean normalized displacement of a window.
///
/// An event is out of order when its timestamp is below the running maximum
/// of the earlier arrivals in its group. The displacement is that gap; its
/// mean over out-of-order events is divided by the window's timestamp span
/// (0 when the span or the out-of-order set is empty).
pub fn out_of_order(window: &[Event], grouping: Grouping) -> (f64, f64) {
    if window.is_empty() {
        return (0.0, 0.0);
    }
    let mut global_max: Option<Tick> = None;
    let mut per_case: HashMap<&str, Tick> = HashMap::new();
    let mut late = 0usize;
    let mut displacement = 0u64;
    for e in window {
        let running = match grouping {
            Grouping::Global => &mut global_max,
            Grouping::PerCase => {
                // Borrow juggling: lift the per-case max into an Option.
                let slot = per_case.get(e.case.as_str()).copied();
                let next = slot.map_or(e.ts, |m| m.max(e.ts));
                if let Some(m) = slot {
                    if e.ts < m {
                        late += 1;
                        displacement += m - e.ts;
                    }
                }
                per_case.insert(e.case.as_str(), next);
                continue;
            }
        };
        if let Some(m) = *running {
            if e.ts < m {
                late += 1;
                displacement += m - e.ts;
            }
        }
        *running = Some(running.map_or(e.ts, |m| m.max(e.ts)));
    }
    let ratio = late as f64 / window.len() as f64;
    let lo = window.iter().map(|e| e.ts).min().unwrap_or(0);
    let hi = window.iter().map(|e| e.ts).max().unwrap_or(0);
    let span = hi - lo;
    let mean_disp = if late == 0 || span == 0 {
        0.0
    } else {
        (displacement as f64 / late as f64 / span as f64).min(1.0)
    };
    (ratio, mean_disp)
}

/// Per-case activity sequences of start events, ordered by
/// `(ts, arrival, activity)`.
pub fn case_sequences(window: &[Event]) -> Vec<Vec<&str>> {
    by_case(window)
        .into_values()
        .map(|mut events| {
            events.retain(|e| e.is_start());
            events.sort_by(|a, b| {
                (a.ts, a.arrival, &a.activity).cmp(&(b.ts, b.arrival, &b.activity))
            });
            events.into_iter().map(|e| e.activity.as_str()).collect()
        })
        .collect()
}

fn entropy<K: Ord>(counts: &BTreeMap<K, usize>) -> f64 {
    let total: usize = counts.values().sum();
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    counts
        .values()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0)
}

fn tally<K: Ord>(items: impl IntoIterator<Item = K>) -> BTreeMap<K, usize> {
    let mut m = BTreeMap::new();
    for k in items {
        *m.entry(k).or_insert(0) += 1;
    }
    m
}

/// `H(Y | X)` from `(x, y)` samples as `H(X, Y) - H(X)`.
fn conditional_entropy<X, Y>(samples: &[(X, Y)]) -> f64
where
    X: Ord + Clone,
    Y: Ord + Clone,
{
    let joint = entropy(&tally(samples.iter().cloned()));
    let context = entropy(&tally(samples.iter().map(|(x, _)| x.clone())));
    (joint - context).max(0.0)
}

fn temporal_dep_of(seqs: &[Vec<&str>]) -> f64 {
    let pairs: Vec<(&str, &str)> = seqs
        .iter()
        .flat_map(|s| s.windows(2).map(|w| (w[0], w[1])))
        .collect();
    let h_next = entropy(&tally(pairs.iter().map(|p| p.1)));
    if h_next <= ENTROPY_EPS {
        return 1.0;
    }
    (1.0 - conditional_entropy(&pairs) / h_next).clamp(0.0, 1.0)
}

/// Predictability of the next activity from the previous one within cases.
/// `1` when the next activity has zero entropy (including no pairs at all).
pub fn temporal_dep(window: &[Event]) -> f64 {
    temporal_dep_of(&case_sequences(window))
}

fn non_linear_dep_of(seqs: &[Vec<&str>]) -> f64 {
    let triples: Vec<((&str, &str), &str)> = seqs
        .iter()
        .flat_map(|s| s.windows(3).map(|w| ((w[0], w[1]), w[2])))
        .collect();
    let order1: Vec<(&str, &str)> = triples.iter().map(|((_, p), n)| (*p, *n)).collect();
    let h1 = conditional_entropy(&order1);
    if h1 <= ENTROPY_EPS {
        return 0.0;
    }
    let h2 = conditional_entropy(&triples);
    ((h1 - h2) / h1).clamp(0.0, 1.0)
}

/// Share of next-activity uncertainty (given the previous activity) that is
/// removed by also knowing the activity before it. `0` when the previous
/// activity already determines the next one.
pub fn non_linear_dep(window: &[Event]) -> f64 {
    non_linear_dep_of(&case_sequences(window))
}

fn long_term_dep_of(endpoints: &[(&str, &str)]) -> f64 {
    if endpoints.len() < LTD_MIN_CASES {
        return 0.0;
    }
    let h_last = entropy(&tally(endpoints.iter().map(|p| p.1)));
    if h_last <= ENTROPY_EPS {
        return 0.0;
    }
    let h_first = entropy(&tally(endpoints.iter().map(|p| p.0)));
    let h_joint = entropy(&tally(endpoints.iter().cloned()));
    ((h_first + h_last - h_joint) / h_last).clamp(0.0, 1.0)
}

/// `(first, last)` activities of cases that are complete inside the window:
/// at least `l_min` activities and every start matched by an end.
fn completed_case_endpoints(window: &[Event], l_min: usize) -> Vec<(&str, &str)> {
    by_case(window)
        .into_values()
        .filter_map(|events| {
            let owned: Vec<Event> = events.iter().map(|e| (*e).clone()).collect();
            let pairing = pair_intervals(&owned);
            if !pairing.unmatched.is_empty() {
                return None;
            }
            let mut starts: Vec<&Event> = events.into_iter().filter(|e| e.is_start()).collect();
            if starts.len() < l_min.max(1) {
                return None;
            }
            starts.sort_by(|a, b| {
                (a.ts, a.arrival, &a.activity).cmp(&(b.ts, b.arrival, &b.activity))
            });
            Some((
                starts[0].activity.as_str(),
                starts[starts.len() - 1].activity.as_str(),
            ))
        })
        .collect()
}

/// How much the first activity of a completed case tells about its last.
/// `0` with fewer than [`LTD_MIN_CASES`] qualifying cases or a constant last
/// activity.
pub fn long_term_dep(window: &[Event], l_min: usize) -> f64 {
    long_term_dep_of(&completed_case_endpoints(window, l_min))
}

/// Share of events that belong to a nested sub-case.
pub fn fractal(window: &[Event]) -> f64 {
    if window.is_empty() {
        return 0.0;
    }
    window.iter().filter(|e| e.is_nested()).count() as f64 / window.len() as f64
}

/// Mean concurrency at the window's event timestamps, divided by `kappa`
/// and capped at 1.
pub fn avg_concurrency(window: &[Event], kappa: f64) -> f64 {
    if window.is_empty() {
        return 0.0;
    }
    let profile = ConcurrencyProfile::from_events(window);
    let mean = window.iter().map(|e| profile.at(e.ts) as f64).sum::<f64>() / window.len() as f64;
    (mean / kappa).clamp(0.0, 1.0)
}

/// All features of one window.
pub fn extract(window: &[Event], cfg: &WindowConfig) -> FeatureVector {
    let seqs = case_sequences(window);
    let (ooo, disp) = out_of_order(window, cfg.grouping);
    FeatureVector::from_pairs([
        (FeatureId::TemporalDep, temporal_dep_of(&seqs)),
        (
            FeatureId::LongTermDep,
            long_term_dep_of(&completed_case_endpoints(window, cfg.l_min)),
        ),
        (FeatureId::NonLinearDep, non_linear_dep_of(&seqs)),
        (FeatureId::OutOfOrder, ooo),
        (FeatureId::Fractal, fractal(window)),
        (
            FeatureId::AvgConcurrency,
            avg_concurrency(window, cfg.kappa),
        ),
        (FeatureId::MeanDisplacement, disp),
    ])
}

/// Feature vectors of every tumbling window of the stream.
pub fn extract_stream(stream: &Stream, cfg: &WindowConfig) -> Vec<FeatureVector> {
    tumble(stream, cfg)
        .into_par_iter()
        .map(|w| extract(w, cfg))
        .collect()
}

/// Euclidean distance over `subset`.
pub fn feature_distance(
    v: &FeatureVector,
    target: &FeatureVector,
    subset: &[FeatureId],
) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::param("feature subset is empty"));
    }
    let mut sum = 0.0;
    for id in subset {
        let (a, b) = v
            .get(*id)
            .zip(target.get(*id))
            .ok_or_else(|| Error::param(format!("feature {id} missing from a vector")))?;
        sum += (a - b) * (a - b);
    }
    Ok(sum.sqrt())
}
