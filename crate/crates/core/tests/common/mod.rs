//! Brute-force oracles shared by the integration suites. Each one is written
//! independently of the library code it checks.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use rand::seq::IndexedRandom;
use rand::Rng;
use streamgen::stream::Tick;
use streamgen::{Event, Lifecycle, ProcessTree, Stream};

/// `(case, activity, start_ts, end_ts)` of every pairing under the FIFO
/// rule, plus the stream indices of unmatched events.
pub struct OraclePairing {
    pub instances: Vec<(String, String, Tick, Tick)>,
    pub unmatched: Vec<usize>,
}

/// Quadratic FIFO pairing: repeatedly take the earliest unvisited event by
/// `(ts, start-first, index)`; an end closes the earliest-visited open start
/// of its case and activity.
pub fn pair_oracle(events: &[Event]) -> OraclePairing {
    let n = events.len();
    let mut visited = vec![false; n];
    let mut open: Vec<usize> = Vec::new();
    let mut instances = Vec::new();
    let mut unmatched = Vec::new();
    for _ in 0..n {
        let mut next: Option<usize> = None;
        for i in 0..n {
            if visited[i] {
                continue;
            }
            let key = |j: usize| (events[j].ts, !events[j].is_start(), j);
            if next.is_none_or(|k| key(i) < key(k)) {
                next = Some(i);
            }
        }
        let i = next.unwrap();
        visited[i] = true;
        let e = &events[i];
        if e.is_start() {
            open.push(i);
            continue;
        }
        let pos = open
            .iter()
            .position(|&s| events[s].case == e.case && events[s].activity == e.activity);
        match pos {
            Some(p) => {
                let s = open.remove(p);
                instances.push((e.case.clone(), e.activity.clone(), events[s].ts, e.ts));
            }
            None => unmatched.push(i),
        }
    }
    unmatched.extend(open);
    unmatched.sort_unstable();
    instances.sort();
    OraclePairing {
        instances,
        unmatched,
    }
}

/// Instances covering `t` (bounds inclusive) plus open starts at or before `t`.
pub fn concurrency_oracle(events: &[Event], t: Tick) -> usize {
    concurrency_from(&pair_oracle(events), events, t)
}

pub fn concurrency_from(p: &OraclePairing, events: &[Event], t: Tick) -> usize {
    let closed = p
        .instances
        .iter()
        .filter(|(_, _, s, e)| *s <= t && t <= *e)
        .count();
    let open = p
        .unmatched
        .iter()
        .filter(|&&i| events[i].is_start() && events[i].ts <= t)
        .count();
    closed + open
}

/// Out-of-order ratio and mean displacement over the window span, comparing
/// each event with every earlier arrival.
pub fn ooo_oracle(window: &[Event], per_case: bool) -> (f64, f64) {
    if window.is_empty() {
        return (0.0, 0.0);
    }
    let mut late = 0usize;
    let mut total = 0u64;
    for (i, e) in window.iter().enumerate() {
        let worst = window[..i]
            .iter()
            .filter(|o| !per_case || o.case == e.case)
            .map(|o| o.ts)
            .filter(|&t| t > e.ts)
            .max();
        if let Some(m) = worst {
            late += 1;
            total += m - e.ts;
        }
    }
    let lo = window.iter().map(|e| e.ts).min().unwrap();
    let hi = window.iter().map(|e| e.ts).max().unwrap();
    let disp = if late == 0 || hi == lo {
        0.0
    } else {
        (total as f64 / late as f64 / (hi - lo) as f64).min(1.0)
    };
    (late as f64 / window.len() as f64, disp)
}

/// Random arrival-ordered stream of at most `max_len` events over a few
/// cases and activities, with timestamps that need not be ordered.
pub fn random_events<R: Rng>(rng: &mut R, max_len: usize) -> Vec<Event> {
    let n = rng.random_range(0..=max_len);
    let cases = ["c0", "c1", "c2", "c3"];
    let activities = ["A", "B", "C"];
    let horizon = rng.random_range(1..=60u64);
    (0..n)
        .map(|i| {
            let lifecycle = if rng.random_bool(0.5) {
                Lifecycle::Start
            } else {
                Lifecycle::End
            };
            Event::new(
                *cases.choose(rng).unwrap(),
                *activities.choose(rng).unwrap(),
                rng.random_range(0..=horizon),
                lifecycle,
            )
            .with_arrival(i as Tick)
        })
        .collect()
}

pub fn random_stream<R: Rng>(rng: &mut R, max_len: usize) -> Stream {
    Stream::new(random_events(rng, max_len)).expect("arrival-ordered by construction")
}

/// Language membership of a process tree, ignoring probabilities.
///
/// Sequences and loops are decided by dynamic programming over split points;
/// a parallel node accepts when every child accepts the projection of the
/// trace onto that child's alphabet (leaf labels are unique).
pub struct Acceptor<'t> {
    tree: &'t ProcessTree,
    memo: HashMap<(usize, Vec<String>), bool>,
}

impl<'t> Acceptor<'t> {
    pub fn new(tree: &'t ProcessTree) -> Self {
        Acceptor {
            tree,
            memo: HashMap::new(),
        }
    }

    pub fn accepts(&mut self, trace: &[String]) -> bool {
        self.node(self.tree, trace)
    }

    fn node(&mut self, t: &ProcessTree, trace: &[String]) -> bool {
        let key = (t as *const ProcessTree as usize, trace.to_vec());
        if let Some(&hit) = self.memo.get(&key) {
            return hit;
        }
        let verdict = match t {
            ProcessTree::Leaf(a) => trace.len() == 1 && &trace[0] == a,
            ProcessTree::Silent => trace.is_empty(),
            ProcessTree::Choice { children, .. } => children.iter().any(|c| self.node(c, trace)),
            ProcessTree::Sequence(children) => {
                let mut reach: BTreeSet<usize> = [0].into();
                for c in children {
                    reach = self.advance(c, trace, &reach);
                }
                reach.contains(&trace.len())
            }
            ProcessTree::Parallel(children) => {
                let alphabets: Vec<BTreeSet<String>> = children.iter().map(labels).collect();
                let covered = trace
                    .iter()
                    .all(|a| alphabets.iter().any(|s| s.contains(a)));
                covered
                    && children.iter().zip(&alphabets).all(|(c, alpha)| {
                        let proj: Vec<String> = trace
                            .iter()
                            .filter(|a| alpha.contains(*a))
                            .cloned()
                            .collect();
                        self.node(c, &proj)
                    })
            }
            ProcessTree::Loop { body, redo, .. } => {
                let mut after_body = self.advance(body, trace, &[0].into());
                let mut frontier = after_body.clone();
                while !frontier.is_empty() {
                    let after_redo = self.advance(redo, trace, &frontier);
                    let next = self.advance(body, trace, &after_redo);
                    frontier = next.difference(&after_body).cloned().collect();
                    after_body.extend(frontier.iter().cloned());
                }
                after_body.contains(&trace.len())
            }
        };
        self.memo.insert(key, verdict);
        verdict
    }

    /// Positions reachable by consuming one word of `t` from any of `from`.
    fn advance(
        &mut self,
        t: &ProcessTree,
        trace: &[String],
        from: &BTreeSet<usize>,
    ) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for &i in from {
            for j in i..=trace.len() {
                if self.node(t, &trace[i..j]) {
                    out.insert(j);
                }
            }
        }
        out
    }
}

fn labels(t: &ProcessTree) -> BTreeSet<String> {
    match t {
        ProcessTree::Leaf(a) => [a.clone()].into(),
        _ => t.children().into_iter().flat_map(labels).collect(),
    }
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let rx = ranks(x);
    let ry = ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            out[idx[k]] = r;
        }
        i = j + 1;
    }
    out
}

/// Total-variation distance between two count histograms.
pub fn total_variation(a: &HashMap<String, usize>, b: &HashMap<String, usize>) -> f64 {
    let na: usize = a.values().sum();
    let nb: usize = b.values().sum();
    let keys: BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    keys.into_iter()
        .map(|k| {
            let pa = *a.get(k).unwrap_or(&0) as f64 / na.max(1) as f64;
            let pb = *b.get(k).unwrap_or(&0) as f64 / nb.max(1) as f64;
            (pa - pb).abs()
        })
        .sum::<f64>()
        / 2.0
}

pub fn activity_histogram(events: &[Event]) -> HashMap<String, usize> {
    let mut h = HashMap::new();
    for e in events.iter().filter(|e| e.is_start()) {
        *h.entry(e.activity.clone()).or_insert(0) += 1;
    }
    h
}
