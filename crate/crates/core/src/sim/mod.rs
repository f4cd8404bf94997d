//! Discrete-event stream simulation.
//!
//! Top-level cases arrive as a Poisson process. Each case walks its Markov
//! chain once; activities run back to back with log-normal durations. Every
//! end event may trigger a nested sub-case whose chain is a simplified copy
//! of the parent's and whose durations are scaled by `t_scale`. Events are
//! emitted in event-time order and then pass through the disorder model.

mod definition;
mod disorder;

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::Rng;
use rand_distr::{Distribution, Exp, LogNormal};

use crate::error::{Error, Result};
use crate::io::sink::{EventSink, SinkReport};
use crate::markov::{MarkovChain, Symbol, MAX_WALK_LEN};
use crate::rng::{self, SimRng};
use crate::stream::{Event, Stream, Tick};

pub use definition::{
    DriftSegment, DriftTransition, Fragment, SimulationParams, StreamDefinition, DEFINITION_VERSION,
};
pub use disorder::inject_disorder;

const SEED_TRANSFORM: u64 = 0x5452_414e;
const SEED_DISORDER: u64 = 0x4f4f_4f00;

/// Source label of events at nesting `depth`.
pub fn source_label(depth: u32) -> String {
    format!("src-{depth}")
}

/// Draws a duration in ticks from a log-normal with the given mean and
/// coefficient of variation.
pub fn sample_duration<R: Rng + ?Sized>(mean: f64, cv: f64, rng: &mut R) -> Tick {
    if cv <= 0.0 {
        return mean.round().max(0.0) as Tick;
    }
    let sigma2 = (1.0 + cv * cv).ln();
    let mu = mean.ln() - sigma2 / 2.0;
    let d: f64 = LogNormal::new(mu, sigma2.sqrt())
        .expect("finite log-normal parameters")
        .sample(rng);
    d.round() as Tick
}

/// Events of one case walk starting at `start`, in event-time order.
fn walk_case<R: Rng + ?Sized>(
    case: &str,
    parent: Option<&str>,
    depth: u32,
    start: Tick,
    chain: &MarkovChain,
    params: &SimulationParams,
    rng: &mut R,
) -> Vec<Event> {
    let scale = params.t_scale.powi(depth as i32);
    let source = source_label(depth);
    let mut now = start;
    let mut out = Vec::new();
    for activity in chain.walk(rng) {
        let d = sample_duration(
            params.mean_duration(activity) * scale,
            params.duration_cv,
            rng,
        );
        let mut s = Event::start(case, activity, now).with_source(source.clone());
        let mut e = Event::end(case, activity, now + d).with_source(source.clone());
        if let Some(p) = parent {
            s = s.with_parent(p);
            e = e.with_parent(p);
        }
        out.push(s);
        out.push(e);
        now += d;
    }
    out
}

/// Possibly spawns a nested sub-case triggered by an end event.
///
/// `depth` is the nesting depth of the triggering case and `chain` the
/// (already transformed) chain of the child level. With `trigger_prob` the
/// child case `"{parent}.{child_index}"` starts at the trigger's timestamp.
pub fn spawn_subcase<R: Rng + ?Sized>(
    trigger: &Event,
    depth: u32,
    child_index: usize,
    params: &SimulationParams,
    chain: &MarkovChain,
    rng: &mut R,
) -> Option<Vec<Event>> {
    if !triggers(depth, params, rng) {
        return None;
    }
    let case = format!("{}.{}", trigger.case, child_index);
    Some(walk_case(
        &case,
        Some(&trigger.case),
        depth + 1,
        trigger.ts,
        chain,
        params,
        rng,
    ))
}

fn triggers<R: Rng + ?Sized>(depth: u32, params: &SimulationParams, rng: &mut R) -> bool {
    depth < params.max_depth && params.trigger_prob > 0.0 && rng.random_bool(params.trigger_prob)
}

/// Per-fragment runtime: parameters plus the chain of every nesting level.
struct Process<'d> {
    params: &'d SimulationParams,
    chains: Vec<MarkovChain>,
    arrival_gap: Exp<f64>,
}

impl<'d> Process<'d> {
    fn new(fragment: &'d Fragment) -> Result<Self> {
        let params = &fragment.params;
        params.validate()?;
        if fragment.chain.alphabet().is_empty() {
            return Err(Error::Simulation("chain never emits an activity".into()));
        }
        let mut rng = rng::seeded(rng::derive_seed(params.seed, SEED_TRANSFORM));
        let mut chains = vec![fragment.chain.clone()];
        for _ in 0..params.max_depth {
            let next = chains
                .last()
                .expect("non-empty")
                .simplified(params.t_simplify, &mut rng)?;
            chains.push(next);
        }
        let arrival_gap = Exp::new(1.0 / params.case_arrival)
            .map_err(|e| Error::param(format!("case_arrival: {e}")))?;
        Ok(Process {
            params,
            chains,
            arrival_gap,
        })
    }
}

#[derive(Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Pending {
    ts: Tick,
    seq: u64,
    slot: usize,
}

/// Remaining chain walk of a case.
struct Walk {
    case: String,
    parent: Option<String>,
    depth: u32,
    process: usize,
    state: usize,
    steps: usize,
}

struct Scheduled {
    event: Event,
    depth: u32,
    process: usize,
    /// Carried by end events: the walk continues when they are emitted.
    next: Option<Walk>,
}

/// Segment schedule used to pick the process of each new top-level case.
struct Schedule {
    /// (first emitted index, transition into the segment)
    starts: Vec<(usize, DriftTransition)>,
}

impl Schedule {
    fn single() -> Self {
        Schedule {
            starts: vec![(0, DriftTransition::Sudden)],
        }
    }

    fn pick<R: Rng + ?Sized>(&self, emitted: usize, rng: &mut R) -> usize {
        let seg = self
            .starts
            .iter()
            .rposition(|(b, _)| *b <= emitted)
            .unwrap_or(0);
        match self.starts[seg].1 {
            DriftTransition::Gradual { window_events } if seg > 0 => {
                let into = emitted - self.starts[seg].0;
                if into >= window_events {
                    return seg;
                }
                let p_new = into as f64 / window_events as f64;
                if rng.random_bool(p_new) {
                    seg
                } else {
                    seg - 1
                }
            }
            _ => seg,
        }
    }
}

struct Engine<'d> {
    processes: Vec<Process<'d>>,
    schedule: Schedule,
    rng: SimRng,
    heap: BinaryHeap<Reverse<Pending>>,
    slots: Vec<Option<Scheduled>>,
    free: Vec<usize>,
    seq: u64,
    next_case: u64,
    next_arrival: f64,
    /// Child counter per live case, keyed by case id.
    children: std::collections::HashMap<String, usize>,
}

impl<'d> Engine<'d> {
    fn new(processes: Vec<Process<'d>>, schedule: Schedule, seed: u64) -> Self {
        Engine {
            processes,
            schedule,
            rng: rng::seeded(seed),
            heap: BinaryHeap::new(),
            slots: Vec::new(),
            free: Vec::new(),
            seq: 0,
            next_case: 0,
            next_arrival: 0.0,
            children: Default::default(),
        }
    }

    fn push(&mut self, item: Scheduled) {
        let ts = item.event.ts;
        let slot = match self.free.pop() {
            Some(s) => {
                self.slots[s] = Some(item);
                s
            }
            None => {
                self.slots.push(Some(item));
                self.slots.len() - 1
            }
        };
        self.heap.push(Reverse(Pending {
            ts,
            seq: self.seq,
            slot,
        }));
        self.seq += 1;
    }

    /// Draws the walk's next activity at `now` and schedules its start and
    /// end events; a finished walk schedules nothing.
    fn advance(&mut self, mut walk: Walk, now: Tick) {
        if walk.steps >= MAX_WALK_LEN {
            return;
        }
        let p = &self.processes[walk.process];
        let chain = &p.chains[walk.depth as usize];
        let t = chain.step(walk.state, &mut self.rng);
        let (Symbol::Activity(activity), Some(target)) = (&t.symbol, t.target) else {
            return;
        };
        let scale = p.params.t_scale.powi(walk.depth as i32);
        let d = sample_duration(
            p.params.mean_duration(activity) * scale,
            p.params.duration_cv,
            &mut self.rng,
        );
        let source = source_label(walk.depth);
        let mut start =
            Event::start(walk.case.as_str(), activity.as_str(), now).with_source(source.clone());
        let mut end =
            Event::end(walk.case.as_str(), activity.as_str(), now + d).with_source(source);
        if let Some(parent) = &walk.parent {
            start = start.with_parent(parent.as_str());
            end = end.with_parent(parent.as_str());
        }
        let (depth, process) = (walk.depth, walk.process);
        walk.state = target;
        walk.steps += 1;
        self.push(Scheduled {
            event: start,
            depth,
            process,
            next: None,
        });
        self.push(Scheduled {
            event: end,
            depth,
            process,
            next: Some(walk),
        });
    }

    fn start_case(&mut self, emitted: usize) {
        let process = self.schedule.pick(emitted, &mut self.rng);
        let start = self.next_arrival.floor() as Tick;
        let case = format!("c{}", self.next_case);
        self.next_case += 1;
        let gap = self.processes[process].arrival_gap.sample(&mut self.rng);
        self.next_arrival += gap;
        let walk = Walk {
            case,
            parent: None,
            depth: 0,
            process,
            state: 0,
            steps: 0,
        };
        self.advance(walk, start);
    }

    fn pop(&mut self) -> Scheduled {
        let Reverse(p) = self.heap.pop().expect("caller checked non-empty");
        self.free.push(p.slot);
        self.slots[p.slot].take().expect("slot occupied")
    }

    /// Emits the first `n` events in event-time order, tagged with the
    /// process that produced them.
    fn run(mut self, n: usize) -> Vec<(Event, usize)> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let next_ts = self.heap.peek().map(|Reverse(p)| p.ts);
            let arrival = self.next_arrival.floor() as Tick;
            if next_ts.is_none_or(|t| arrival <= t) {
                self.start_case(out.len());
                continue;
            }
            let mut item = self.pop();
            if !item.event.is_start() {
                self.maybe_spawn(&item);
            }
            if let Some(walk) = item.next.take() {
                self.advance(walk, item.event.ts);
            }
            out.push((item.event, item.process));
        }
        out
    }

    fn maybe_spawn(&mut self, item: &Scheduled) {
        let p = &self.processes[item.process];
        if p.chains.get(item.depth as usize + 1).is_none()
            || !triggers(item.depth, p.params, &mut self.rng)
        {
            return;
        }
        let idx = self.children.entry(item.event.case.clone()).or_insert(0);
        let case = format!("{}.{}", item.event.case, idx);
        *idx += 1;
        let walk = Walk {
            case,
            parent: Some(item.event.case.clone()),
            depth: item.depth + 1,
            process: item.process,
            state: 0,
            steps: 0,
        };
        self.advance(walk, item.event.ts);
    }
}

fn finish(emitted: Vec<(Event, usize)>, params: &[&SimulationParams], seed: u64) -> Result<Stream> {
    let tags: Vec<usize> = emitted.iter().map(|(_, p)| *p).collect();
    let events: Vec<Event> = emitted.into_iter().map(|(e, _)| e).collect();
    let mut rng = rng::seeded(rng::derive_seed(seed, SEED_DISORDER));
    let arranged = disorder::inject_disorder_with(
        events,
        |i| {
            let p = params[tags[i]];
            (p.ooo_prob, p.ooo_max_delay)
        },
        &mut rng,
    );
    Stream::new(arranged)
}

/// Simulates exactly `n_events` events of the definition's base process.
pub fn simulate(def: &StreamDefinition, n_events: usize) -> Result<Stream> {
    def.validate()?;
    let seed = def.base.params.seed;
    let processes = vec![Process::new(&def.base)?];
    let emitted = Engine::new(processes, Schedule::single(), seed).run(n_events);
    finish(emitted, &[&def.base.params], seed)
}

/// Simulates `total_events` events moving through the drift segments.
///
/// Segment `i` becomes active after the events of all earlier segments have
/// been emitted; the last segment stays active to the end. A sudden
/// transition switches new cases to the next process at once, a gradual one
/// hands each new case to it with a probability ramping from 0 to 1 over the
/// window. Cases already running finish under the process they started with.
pub fn simulate_with_drift(def: &StreamDefinition, total_events: usize) -> Result<Stream> {
    def.validate()?;
    let seed = def.base.params.seed;
    let processes = (0..def.segments.len())
        .map(|i| Process::new(def.fragment(i)))
        .collect::<Result<Vec<_>>>()?;
    let mut starts = Vec::with_capacity(def.segments.len());
    let mut boundary = 0usize;
    for seg in &def.segments {
        starts.push((boundary, seg.transition));
        boundary += seg.n_events;
    }
    let emitted = Engine::new(processes, Schedule { starts }, seed).run(total_events);
    let params: Vec<&SimulationParams> = (0..def.segments.len())
        .map(|i| &def.fragment(i).params)
        .collect();
    finish(emitted, &params, seed)
}

/// Simulates and delivers events to `sink` in arrival order.
pub fn simulate_into(
    def: &StreamDefinition,
    n_events: usize,
    sink: &mut dyn EventSink,
) -> Result<SinkReport> {
    let stream = simulate_with_drift(def, n_events)?;
    for e in stream.events() {
        sink.send(e)?;
    }
    sink.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::{count_transitions, normalize};
    use crate::stream::{concurrency_at, is_temporally_ordered, pair_intervals};

    fn chain_of(traces: &[&[&str]]) -> MarkovChain {
        let log: Vec<Vec<String>> = traces
            .iter()
            .map(|t| t.iter().map(|s| s.to_string()).collect())
            .collect();
        normalize(&count_transitions(&log, 1).unwrap()).unwrap()
    }

    fn def(chain: MarkovChain, params: SimulationParams) -> StreamDefinition {
        StreamDefinition::new(None, chain, params, 1000)
    }

    #[test]
    fn single_activity_walk() {
        let params = SimulationParams {
            case_arrival: 1e6,
            ..SimulationParams::default()
        };
        let d = def(chain_of(&[&["A"]]), params);
        let s = simulate(&d, 2).unwrap();
        let ev = s.events();
        assert_eq!(ev.len(), 2);
        assert_eq!((ev[0].case.as_str(), ev[0].activity.as_str()), ("c0", "A"));
        assert!(ev[0].is_start() && !ev[1].is_start());
        assert_eq!(ev[1].case, "c0");
        assert!(ev[0].ts <= ev[1].ts);
    }

    #[test]
    fn same_seed_same_stream() {
        let params = SimulationParams {
            ooo_prob: 0.3,
            ooo_max_delay: 20,
            trigger_prob: 0.4,
            t_simplify: 0.5,
            seed: 17,
            ..SimulationParams::default()
        };
        let d = def(chain_of(&[&["A", "B", "C"], &["A", "C"], &["B"]]), params);
        assert_eq!(simulate(&d, 3000).unwrap(), simulate(&d, 3000).unwrap());
    }

    #[test]
    fn exact_event_count_and_pairing() {
        let params = SimulationParams {
            ooo_prob: 0.5,
            ooo_max_delay: 30,
            trigger_prob: 0.3,
            seed: 3,
            ..SimulationParams::default()
        };
        let d = def(chain_of(&[&["A", "B", "C"], &["A", "D"]]), params);
        for n in [1, 2, 7, 500, 2001] {
            let s = simulate(&d, n).unwrap();
            assert_eq!(s.len(), n);
            let p = pair_intervals(s.events());
            assert!(p.unmatched.iter().all(|e| e.is_start()), "no orphan ends");
            assert!(p.instances.iter().all(|i| i.start_ts <= i.end_ts));
        }
    }

    #[test]
    fn single_case_without_disorder_is_ordered() {
        let params = SimulationParams {
            case_arrival: 1e9,
            seed: 5,
            ..SimulationParams::default()
        };
        let d = def(chain_of(&[&["A", "B", "C", "D", "E", "F"]]), params);
        let s = simulate(&d, 12).unwrap();
        assert!(s.iter().all(|e| e.case == "c0"));
        assert!(is_temporally_ordered(s.events()));
    }

    #[test]
    fn no_trigger_means_no_nesting() {
        let d = def(chain_of(&[&["A", "B"]]), SimulationParams::default());
        let s = simulate(&d, 1000).unwrap();
        assert!(s.iter().all(|e| e.parent_case.is_none()));
    }

    #[test]
    fn depth_one_has_no_grandchildren() {
        let params = SimulationParams {
            trigger_prob: 1.0,
            max_depth: 1,
            seed: 9,
            ..SimulationParams::default()
        };
        let d = def(chain_of(&[&["A", "B", "C"]]), params);
        let s = simulate(&d, 5000).unwrap();
        assert!(s.iter().any(|e| e.is_nested()));
        for e in s.iter() {
            assert!(e.case.matches('.').count() <= 1, "{}", e.case);
        }
    }

    #[test]
    fn subcases_start_after_trigger() {
        let params = SimulationParams {
            trigger_prob: 1.0,
            max_depth: 2,
            seed: 21,
            ..SimulationParams::default()
        };
        let d = def(chain_of(&[&["A", "B"], &["A", "C", "B"]]), params);
        let s = simulate(&d, 4000).unwrap();
        let events = s.events();
        for e in events.iter().filter(|e| e.is_nested()) {
            let parent = e.parent_case.as_ref().unwrap();
            // The trigger is some end event of the parent with ts <= first child ts.
            let first_child_ts = events
                .iter()
                .filter(|x| x.case == e.case)
                .map(|x| x.ts)
                .min()
                .unwrap();
            assert!(events
                .iter()
                .any(|x| &x.case == parent && !x.is_start() && x.ts <= first_child_ts));
        }
    }

    #[test]
    fn durations_match_mean() {
        let mut r = rng::seeded(1);
        let n = 10_000;
        let mean = (0..n)
            .map(|_| sample_duration(100.0, 0.5, &mut r) as f64)
            .sum::<f64>()
            / n as f64;
        assert!((mean - 100.0).abs() < 5.0, "{mean}");
    }

    #[test]
    fn overlapping_cases_show_concurrency() {
        let params = SimulationParams {
            case_arrival: 5.0,
            duration_mean: 10.0,
            seed: 2,
            ..SimulationParams::default()
        };
        let d = def(chain_of(&[&["A", "B", "C", "D"]]), params);
        let s = simulate(&d, 2000).unwrap();
        let hits = s
            .iter()
            .filter(|e| concurrency_at(s.events(), e.ts) >= 2)
            .count();
        assert!(hits > 0);
    }

    #[test]
    fn empty_alphabet_fails() {
        let d = def(chain_of(&[&[]]), SimulationParams::default());
        assert!(matches!(simulate(&d, 10), Err(Error::Simulation(_))));
    }
}
