//! Line-delimited JSON form of stream events.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::{Event, Lifecycle, Stream, Tick};

/// Wire form of an [`Event`]; fields serialize in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamRecord {
    pub case: String,
    pub activity: String,
    pub ts: Tick,
    pub lifecycle: Lifecycle,
    pub arrival: Tick,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_case: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl From<&Event> for StreamRecord {
    fn from(e: &Event) -> Self {
        StreamRecord {
            case: e.case.clone(),
            activity: e.activity.clone(),
            ts: e.ts,
            lifecycle: e.lifecycle,
            arrival: e.arrival,
            parent_case: e.parent_case.clone(),
            source: e.source.clone(),
        }
    }
}

impl From<StreamRecord> for Event {
    fn from(r: StreamRecord) -> Self {
        Event {
            case: r.case,
            activity: r.activity,
            ts: r.ts,
            lifecycle: r.lifecycle,
            arrival: r.arrival,
            parent_case: r.parent_case,
            source: r.source,
        }
    }
}

/// One record without the trailing newline.
pub fn record_line(e: &Event) -> String {
    serde_json::to_string(&StreamRecord::from(e)).expect("records always serialize")
}

/// Parses one record; `line` is only used for the error position.
pub fn parse_record(text: &str, line: usize) -> Result<Event> {
    let rec: StreamRecord =
        serde_json::from_str(text).map_err(|e| Error::parse(line, e.to_string()))?;
    let event = Event::from(rec);
    event
        .validate()
        .map_err(|e| Error::parse(line, e.to_string()))?;
    Ok(event)
}

pub fn write_stream<W: Write>(mut w: W, events: &[Event]) -> Result<()> {
    for e in events {
        w.write_all(record_line(e).as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a stream file; blank lines are skipped and arrival order enforced.
pub fn read_stream<R: BufRead>(r: R) -> Result<Stream> {
    let mut events = Vec::new();
    let mut last: Option<Tick> = None;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e = parse_record(&line, i + 1)?;
        if last.is_some_and(|a| e.arrival < a) {
            return Err(Error::parse(i + 1, "arrival goes backwards"));
        }
        last = Some(e.arrival);
        events.push(e);
    }
    Stream::new(events)
}
