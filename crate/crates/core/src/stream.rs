//! Interval-based event streams.
//!
//! Every activity execution is represented by a `Start` and an `End` event.
//! A [`Stream`] is the arrival-ordered sequence of such events; the event
//! timestamp (`ts`) and the arrival timestamp (`arrival`) share one integer
//! tick clock.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer tick on the shared event/arrival clock.
pub type Tick = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lifecycle {
    Start,
    End,
}

impl fmt::Display for Lifecycle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Lifecycle::Start => f.write_str("start"),
            Lifecycle::End => f.write_str("end"),
        }
    }
}

/// One lifecycle record of an activity instance.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Event {
    pub case: String,
    pub activity: String,
    pub ts: Tick,
    pub lifecycle: Lifecycle,
    pub arrival: Tick,
    /// Enclosing case when this event belongs to a nested sub-process.
    pub parent_case: Option<String>,
    pub source: Option<String>,
}

impl Event {
    pub fn new(
        case: impl Into<String>,
        activity: impl Into<String>,
        ts: Tick,
        lifecycle: Lifecycle,
    ) -> Self {
        Event {
            case: case.into(),
            activity: activity.into(),
            ts,
            lifecycle,
            arrival: ts,
            parent_case: None,
            source: None,
        }
    }

    pub fn start(case: impl Into<String>, activity: impl Into<String>, ts: Tick) -> Self {
        Self::new(case, activity, ts, Lifecycle::Start)
    }

    pub fn end(case: impl Into<String>, activity: impl Into<String>, ts: Tick) -> Self {
        Self::new(case, activity, ts, Lifecycle::End)
    }

    pub fn with_arrival(mut self, arrival: Tick) -> Self {
        self.arrival = arrival;
        self
    }

    pub fn with_parent(mut self, parent: impl Into<String>) -> Self {
        self.parent_case = Some(parent.into());
        self
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }

    pub fn is_start(&self) -> bool {
        self.lifecycle == Lifecycle::Start
    }

    pub fn is_nested(&self) -> bool {
        self.parent_case.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(parent) = &self.parent_case {
            if parent == &self.case {
                return Err(Error::param(format!(
                    "event of case {:?} names itself as parent",
                    self.case
                )));
            }
        }
        Ok(())
    }
}

/// Arrival-ordered event sequence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stream {
    events: Vec<Event>,
}

impl Stream {
    /// Wraps events that are already in arrival order.
    pub fn new(events: Vec<Event>) -> Result<Self> {
        if let Some(i) = events.windows(2).position(|w| w[0].arrival > w[1].arrival) {
            return Err(Error::param(format!(
                "events not in arrival order at position {}",
                i + 1
            )));
        }
        for e in &events {
            e.validate()?;
        }
        Ok(Stream { events })
    }

    /// Sorts by arrival (stable) and wraps.
    pub fn from_unsorted(mut events: Vec<Event>) -> Result<Self> {
        events.sort_by_key(|e| e.arrival);
        Self::new(events)
    }

    pub fn empty() -> Self {
        Stream::default()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Event> {
        self.events.iter()
    }

    pub fn is_temporally_ordered(&self) -> bool {
        is_temporally_ordered(&self.events)
    }
}

impl<'a> IntoIterator for &'a Stream {
    type Item = &'a Event;
    type IntoIter = std::slice::Iter<'a, Event>;

    fn into_iter(self) -> Self::IntoIter {
        self.events.iter()
    }
}

/// True iff `ts` never decreases along the slice.
pub fn is_temporally_ordered(events: &[Event]) -> bool {
    events.windows(2).all(|w| w[0].ts <= w[1].ts)
}

/// A closed activity interval recovered by [`pair_intervals`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivityInstance {
    pub case: String,
    pub activity: String,
    pub start_ts: Tick,
    pub end_ts: Tick,
    pub parent_case: Option<String>,
}

/// Result of pairing start events with end events.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Pairing {
    pub instances: Vec<ActivityInstance>,
    /// Starts without an end (open intervals) and ends without a start.
    pub unmatched: Vec<Event>,
}

impl Pairing {
    pub fn open_starts(&self) -> impl Iterator<Item = &Event> {
        self.unmatched.iter().filter(|e| e.is_start())
    }
}

/// Pairs every start with an end of the same case and activity.
///
/// Events of one (case, activity) are visited in `(ts, Start-before-End,
/// arrival)` order and each end closes the oldest open start (FIFO). An end
/// therefore never closes a start with a later timestamp. Instances are
/// returned ordered by `(start_ts, end_ts, case, activity)`; unmatched events
/// keep their stream order.
pub fn pair_intervals(events: &[Event]) -> Pairing {
    let mut groups: HashMap<(&str, &str), Vec<usize>> = HashMap::new();
    for (i, e) in events.iter().enumerate() {
        groups
            .entry((e.case.as_str(), e.activity.as_str()))
            .or_default()
            .push(i);
    }

    let mut instances = Vec::new();
    let mut unmatched_idx = Vec::new();
    for (_, mut idx) in groups {
        idx.sort_by_key(|&i| (events[i].ts, events[i].lifecycle, i));
        let mut open: VecDeque<usize> = VecDeque::new();
        for i in idx {
            let e = &events[i];
            match e.lifecycle {
                Lifecycle::Start => open.push_back(i),
                Lifecycle::End => match open.pop_front() {
                    Some(s) => {
                        let start = &events[s];
                        instances.push(ActivityInstance {
                            case: start.case.clone(),
                            activity: start.activity.clone(),
                            start_ts: start.ts,
                            end_ts: e.ts,
                            parent_case: start.parent_case.clone(),
                        });
                    }
                    None => unmatched_idx.push(i),
                },
            }
        }
        unmatched_idx.extend(open);
    }

    instances.sort_by(|a, b| {
        (a.start_ts, a.end_ts, &a.case, &a.activity).cmp(&(
            b.start_ts,
            b.end_ts,
            &b.case,
            &b.activity,
        ))
    });
    unmatched_idx.sort_unstable();
    Pairing {
        instances,
        unmatched: unmatched_idx
            .into_iter()
            .map(|i| events[i].clone())
            .collect(),
    }
}

/// Precomputed interval profile answering concurrency queries in `O(log n)`.
///
/// Closed instances count on `[start_ts, end_ts]`; open intervals count from
/// their start onward.
#[derive(Debug, Clone, Default)]
pub struct ConcurrencyProfile {
    starts: Vec<Tick>,
    ends: Vec<Tick>,
    open_starts: Vec<Tick>,
}

impl ConcurrencyProfile {
    pub fn new(pairing: &Pairing) -> Self {
        let mut starts: Vec<Tick> = pairing.instances.iter().map(|i| i.start_ts).collect();
        let mut ends: Vec<Tick> = pairing.instances.iter().map(|i| i.end_ts).collect();
        let mut open_starts: Vec<Tick> = pairing.open_starts().map(|e| e.ts).collect();
        starts.sort_unstable();
        ends.sort_unstable();
        open_starts.sort_unstable();
        ConcurrencyProfile {
            starts,
            ends,
            open_starts,
        }
    }

    pub fn from_events(events: &[Event]) -> Self {
        Self::new(&pair_intervals(events))
    }

    pub fn at(&self, t: Tick) -> usize {
        // Closed instances with start <= t, minus those already over (end < t).
        let started = self.starts.partition_point(|&s| s <= t);
        let finished = self.ends.partition_point(|&e| e < t);
        let open = self.open_starts.partition_point(|&s| s <= t);
        started - finished + open
    }
}

/// Number of activity instances running at `t_star` (bounds inclusive).
pub fn concurrency_at(events: &[Event], t_star: Tick) -> usize {
    ConcurrencyProfile::from_events(events).at(t_star)
}

/// Events of one case up to a point in time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseHistory {
    pub case: String,
    pub events: Vec<Event>,
}

impl CaseHistory {
    pub fn activities(&self) -> impl Iterator<Item = &str> {
        self.events.iter().map(|e| e.activity.as_str())
    }
}

/// Events of `case` with `ts <= t`, ordered by `(ts, arrival, activity)`.
pub fn case_history(events: &[Event], case: &str, t: Tick) -> CaseHistory {
    let mut picked: Vec<&Event> = events
        .iter()
        .filter(|e| e.case == case && e.ts <= t)
        .collect();
    picked.sort_by(|a, b| (a.ts, a.arrival, &a.activity).cmp(&(b.ts, b.arrival, &b.activity)));
    CaseHistory {
        case: case.to_string(),
        events: picked.into_iter().cloned().collect(),
    }
}

/// Groups events by case, preserving the slice order inside each group.
pub(crate) fn by_case(events: &[Event]) -> BTreeMap<&str, Vec<&Event>> {
    let mut map: BTreeMap<&str, Vec<&Event>> = BTreeMap::new();
    for e in events {
        map.entry(e.case.as_str()).or_default().push(e);
    }
    map
}
