use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::GroupedData;
use crate::simulator::{simulate_grouped, SimConfig};

#[derive(Deserialize)]
struct JsonInput {
    g: Vec<i64>,
}

/// Parses grouped data from either a JSON document `{"g": [g1, g2, g3, g4]}`
/// or a CSV table with header `z,d,count` and one row per `(z, d)` cell.
pub fn parse_input(bytes: &[u8]) -> Result<GroupedData> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse(format!("input is not UTF-8: {e}")))?;
    let g = if text.trim_start().starts_with('{') { parse_json(text)? } else { parse_csv(text)? };
    g.require_nonempty()?;
    Ok(g)
}

pub fn read_input(path: &Path) -> Result<GroupedData> {
    let bytes = std::fs::read(path)?;
    parse_input(&bytes).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn parse_json(text: &str) -> Result<GroupedData> {
    let doc: JsonInput = serde_json::from_str(text).map_err(|e| Error::Parse(format!("bad JSON input: {e}")))?;
    let counts: [i64; 4] = doc
        .g
        .as_slice()
        .try_into()
        .map_err(|_| Error::Parse(format!("\"g\" must have 4 entries, found {}", doc.g.len())))?;
    GroupedData::try_from_signed(counts)
}

/// Cell index for `(z, d)`: (1,1)→g1, (1,0)→g2, (0,1)→g3, (0,0)→g4.
fn cell_index(z: i64, d: i64) -> Option<usize> {
    match (z, d) {
        (1, 1) => Some(0),
        (1, 0) => Some(1),
        (0, 1) => Some(2),
        (0, 0) => Some(3),
        _ => None,
    }
}

fn parse_csv(text: &str) -> Result<GroupedData> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::Parse(format!("bad CSV header: {e}")))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["z", "d", "count"] {
        return Err(Error::Parse(format!("CSV header must be z,d,count, found {}", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut cells: [Option<i64>; 4] = [None; 4];
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(format!("bad CSV row {}: {e}", line + 1)))?;
        let field = |k: usize, name: &str| -> Result<i64> {
            record[k]
                .parse::<i64>()
                .map_err(|_| Error::Parse(format!("row {}: {name} = {:?} is not an integer", line + 1, &record[k])))
        };
        let (z, d, count) = (field(0, "z")?, field(1, "d")?, field(2, "count")?);
        let j = cell_index(z, d).ok_or_else(|| Error::Parse(format!("row {}: (z,d) = ({z},{d}) is not binary", line + 1)))?;
        if cells[j].replace(count).is_some() {
            return Err(Error::Parse(format!("duplicate row for (z,d) = ({z},{d})")));
        }
    }
    let mut counts = [0i64; 4];
    for (j, c) in cells.iter().enumerate() {
        counts[j] = c.ok_or_else(|| {
            let (z, d) = [(1, 1), (1, 0), (0, 1), (0, 0)][j];
            Error::Parse(format!("missing row for (z,d) = ({z},{d})"))
        })?;
    }
    GroupedData::try_from_signed(counts)
}

/// One-line JSON document accepted by [`parse_input`].
pub fn emit_grouped(g: &GroupedData) -> String {
    let [g1, g2, g3, g4] = g.counts();
    format!("{{\"g\":[{g1},{g2},{g3},{g4}]}}")
}

/// Simulated datasets, one JSON document per line.
pub fn simulate_lines(cfg: &SimConfig) -> Result<String> {
    let mut out = String::new();
    for g in simulate_grouped(cfg)? {
        out.push_str(&emit_grouped(&g));
        out.push('\n');
    }
    Ok(out)
}
