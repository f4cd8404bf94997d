//! Arrival-time disorder.
//!
//! Events leave the simulation in event-time order. Each one is then
//! independently held back by a uniform number of ticks, and the stream is
//! re-sorted by the resulting arrival stamp. Delayed events sharing an
//! arrival tick are ordered randomly.

use std::collections::{HashMap, VecDeque};

use rand::Rng;

use crate::stream::{Event, Lifecycle, Tick};

/// Sort key of an event on the arrival axis: arrival tick, whether the
/// event was delayed (undelayed events win ties), a random tiebreak for
/// delayed events (0 otherwise), emission position.
type ArrivalKey = (Tick, bool, u64, usize);

/// Delays and re-sorts events that are given in emission (event-time) order.
///
/// With probability `ooo_prob` an event arrives `U{1..=ooo_max_delay}` ticks
/// after its timestamp, otherwise at its timestamp. An end event is never
/// moved ahead of its own start event.
pub fn inject_disorder<R: Rng + ?Sized>(
    events: Vec<Event>,
    ooo_prob: f64,
    ooo_max_delay: Tick,
    rng: &mut R,
) -> Vec<Event> {
    inject_disorder_with(events, |_| (ooo_prob, ooo_max_delay), rng)
}

/// Same as [`inject_disorder`] with per-event disorder parameters.
pub(crate) fn inject_disorder_with<R, F>(events: Vec<Event>, params: F, rng: &mut R) -> Vec<Event>
where
    R: Rng + ?Sized,
    F: Fn(usize) -> (f64, Tick),
{
    let mut keys: Vec<ArrivalKey> = Vec::with_capacity(events.len());
    let mut open: HashMap<(&str, &str), VecDeque<usize>> = HashMap::new();
    for (i, e) in events.iter().enumerate() {
        let (prob, max_delay) = params(i);
        let delay = if max_delay > 0 && prob > 0.0 && rng.random_bool(prob) {
            rng.random_range(1..=max_delay)
        } else {
            0
        };
        let tiebreak = if delay > 0 { rng.random() } else { 0 };
        let mut key = (e.ts + delay, delay > 0, tiebreak, i);
        let group = (e.case.as_str(), e.activity.as_str());
        match e.lifecycle {
            Lifecycle::Start => open.entry(group).or_default().push_back(i),
            Lifecycle::End => {
                if let Some(s) = open.get_mut(&group).and_then(|q| q.pop_front()) {
                    let (s_arrival, s_delayed, s_tiebreak, _) = keys[s];
                    if (key.0, key.1, key.2) < (s_arrival, s_delayed, s_tiebreak) {
                        key = (s_arrival, s_delayed, s_tiebreak, i);
                    }
                }
            }
        }
        keys.push(key);
    }

    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by_key(|&i| keys[i]);
    let mut slots: Vec<Option<Event>> = events.into_iter().map(Some).collect();
    order
        .into_iter()
        .map(|i| {
            let mut e = slots[i].take().expect("each event placed once");
            e.arrival = keys[i].0;
            e
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn emitted(ts: &[Tick]) -> Vec<Event> {
        ts.iter()
            .enumerate()
            .map(|(i, &t)| Event::start(format!("c{i}"), "A", t))
            .collect()
    }

    #[test]
    fn no_disorder_keeps_emission_order() {
        let ev = emitted(&[0, 1, 1, 4, 9]);
        let out = inject_disorder(ev.clone(), 0.0, 10, &mut rng::seeded(1));
        assert_eq!(out, ev);
        let out = inject_disorder(ev.clone(), 1.0, 0, &mut rng::seeded(1));
        assert_eq!(out, ev);
    }

    #[test]
    fn two_event_swap_probability() {
        // Outcomes for ts (0, 1), delay 1 with prob p each:
        //   (none, none) arrivals (0, 1)   -> kept
        //   (d, none)    arrivals (1d, 1)  -> undelayed wins tie: swap
        //   (none, d)    arrivals (0, 2)   -> kept
        //   (d, d)       arrivals (1, 2)   -> kept
        // so P(swap) = p(1-p).
        let mut r = rng::seeded(4);
        for &(p, expected) in &[(1.0, 0.0), (0.5, 0.25), (0.2, 0.16)] {
            let n = 20_000;
            let swaps = (0..n)
                .filter(|_| {
                    let out = inject_disorder(emitted(&[0, 1]), p, 1, &mut r);
                    out[0].case == "c1"
                })
                .count();
            let f = swaps as f64 / n as f64;
            let sigma = (expected * (1.0 - expected) / n as f64).sqrt().max(1e-9);
            assert!(
                (f - expected).abs() <= 4.0 * sigma,
                "p={p}: {f} vs {expected}"
            );
        }
    }

    #[test]
    fn end_never_precedes_its_start() {
        let mut r = rng::seeded(2);
        for _ in 0..200 {
            let ev = vec![
                Event::start("c", "A", 0),
                Event::end("c", "A", 1),
                Event::start("c", "B", 1),
                Event::end("c", "B", 1),
            ];
            let out = inject_disorder(ev, 0.7, 5, &mut r);
            for act in ["A", "B"] {
                let s = out
                    .iter()
                    .position(|e| e.activity == act && e.is_start())
                    .unwrap();
                let e = out
                    .iter()
                    .position(|e| e.activity == act && !e.is_start())
                    .unwrap();
                assert!(s < e);
            }
            assert!(out.windows(2).all(|w| w[0].arrival <= w[1].arrival));
        }
    }
}
