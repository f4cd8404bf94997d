//! Per-window feature CSV files.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::features::{FeatureId, FeatureVector};

pub fn header() -> String {
    let mut h = String::from("window_idx");
    for f in FeatureId::ALL {
        h.push(',');
        h.push_str(f.name());
    }
    h
}

/// One row per window, values with 6 decimal places. Missing features are
/// written as `0.000000`.
pub fn write_features<W: Write>(mut w: W, vectors: &[FeatureVector]) -> Result<()> {
    writeln!(w, "{}", header())?;
    for (i, v) in vectors.iter().enumerate() {
        let mut row = i.to_string();
        for f in FeatureId::ALL {
            row.push_str(&format!(",{:.6}", v.get(f).unwrap_or(0.0)));
        }
        writeln!(w, "{row}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features<R: Read>(r: R) -> Result<Vec<FeatureVector>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r);
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(1, e.to_string()))?
        .clone();
    let mut columns = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        if h != "window_idx" {
            columns.push((
                i,
                h.parse::<FeatureId>()
                    .map_err(|e| Error::parse(1, e.to_string()))?,
            ));
        }
    }
    let mut out = Vec::new();
    for (n, rec) in reader.records().enumerate() {
        let line = n + 2;
        let rec = rec.map_err(|e| Error::parse(line, e.to_string()))?;
        let mut v = FeatureVector::new();
        for &(i, id) in &columns {
            let raw = rec.get(i).unwrap_or("");
            let value: f64 = raw
                .parse()
                .map_err(|_| Error::parse(line, format!("bad value {raw:?} for {id}")))?;
            v.set(id, value);
        }
        out.push(v);
    }
    Ok(out)
}
