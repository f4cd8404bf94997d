//! Static CSV event logs and their replay as pseudo-streams.

use std::io::{Read, Write};

use chrono::{DateTime, NaiveDateTime};

use crate::error::{Error, Result};
use crate::stream::{Event, Lifecycle, Stream, Tick};
use crate::tree::Trace;

/// One row of a static log. `lifecycle == None` marks an atomic event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StaticLogRow {
    pub case: String,
    pub activity: String,
    pub ts: Tick,
    pub lifecycle: Option<Lifecycle>,
}

fn parse_timestamp(raw: &str, tick_ms: u64) -> std::result::Result<Tick, String> {
    let raw = raw.trim();
    if let Ok(t) = raw.parse::<Tick>() {
        return Ok(t);
    }
    let millis = if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        dt.timestamp_millis()
    } else {
        ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"]
            .iter()
            .find_map(|f| NaiveDateTime::parse_from_str(raw, f).ok())
            .map(|dt| dt.and_utc().timestamp_millis())
            .ok_or_else(|| format!("unparseable timestamp {raw:?}"))?
    };
    if millis < 0 {
        return Err(format!("timestamp {raw:?} before 1970"));
    }
    Ok(millis as u64 / tick_ms.max(1))
}

fn parse_lifecycle(raw: &str) -> std::result::Result<Option<Lifecycle>, String> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "" => Ok(None),
        "start" => Ok(Some(Lifecycle::Start)),
        "end" | "complete" => Ok(Some(Lifecycle::End)),
        other => Err(format!("unknown lifecycle {other:?}")),
    }
}

/// Reads a CSV log with header columns `case_id, activity, timestamp` and an
/// optional `lifecycle`. ISO-8601 timestamps become `millis / tick_ms` ticks;
/// integer timestamps are taken as ticks.
pub fn read_static_log<R: Read>(r: R, tick_ms: u64) -> Result<Vec<StaticLogRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r);
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(1, e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (case, activity, ts) = match (col("case_id"), col("activity"), col("timestamp")) {
        (Some(c), Some(a), Some(t)) => (c, a, t),
        _ => {
            return Err(Error::parse(
                1,
                "header must contain case_id, activity and timestamp",
            ))
        }
    };
    let lifecycle = col("lifecycle");
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::parse(line, e.to_string()))?;
        let field = |idx: usize| rec.get(idx).unwrap_or("");
        rows.push(StaticLogRow {
            case: field(case).to_string(),
            activity: field(activity).to_string(),
            ts: parse_timestamp(field(ts), tick_ms).map_err(|m| Error::parse(line, m))?,
            lifecycle: match lifecycle {
                Some(idx) => parse_lifecycle(field(idx)).map_err(|m| Error::parse(line, m))?,
                None => None,
            },
        });
    }
    Ok(rows)
}

pub fn write_static_log<W: Write>(w: W, rows: &[StaticLogRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let io_err = |e: csv::Error| Error::Io(e.into());
    out.write_record(["case_id", "activity", "timestamp", "lifecycle"])
        .map_err(io_err)?;
    for r in rows {
        let lc = r.lifecycle.map(|l| l.to_string()).unwrap_or_default();
        out.write_record([r.case.as_str(), r.activity.as_str(), &r.ts.to_string(), &lc])
            .map_err(io_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Lays traces out as an atomic-event log: case `i` starts at
/// `i * case_gap` and its activities follow each other `step` ticks apart.
pub fn traces_to_rows(traces: &[Trace], case_gap: Tick, step: Tick) -> Vec<StaticLogRow> {
    let mut rows: Vec<StaticLogRow> = traces
        .iter()
        .enumerate()
        .flat_map(|(i, t)| {
            t.iter().enumerate().map(move |(j, a)| StaticLogRow {
                case: format!("case-{i}"),
                activity: a.clone(),
                ts: i as Tick * case_gap + j as Tick * step,
                lifecycle: None,
            })
        })
        .collect();
    rows.sort_by_key(|r| r.ts);
    rows
}

/// Replays a static log in timestamp order. Rows are stably sorted by
/// timestamp, atomic rows expand to a start/end pair with equal timestamps,
/// and each event's arrival is its position in the result.
pub fn streamify(rows: &[StaticLogRow]) -> Stream {
    let mut order: Vec<&StaticLogRow> = rows.iter().collect();
    order.sort_by_key(|r| r.ts);
    let mut events = Vec::with_capacity(rows.len() * 2);
    for r in order {
        let lifecycles: &[Lifecycle] = match r.lifecycle {
            Some(Lifecycle::Start) => &[Lifecycle::Start],
            Some(Lifecycle::End) => &[Lifecycle::End],
            None => &[Lifecycle::Start, Lifecycle::End],
        };
        for &lc in lifecycles {
            let arrival = events.len() as Tick;
            events.push(
                Event::new(r.case.clone(), r.activity.clone(), r.ts, lc).with_arrival(arrival),
            );
        }
    }
    Stream::new(events).expect("arrival is the position")
}
