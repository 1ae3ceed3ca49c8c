use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde_json::Value;

use super::{sequence_events, IngestError, SaleEvent};
use crate::wei::Wei;

const COLUMNS: [&str; 4] = ["collection_id", "token_id", "timestamp", "price_eth"];
const KIND_COLUMN: &str = "event_type";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    Csv,
    Jsonl,
}

impl FromStr for EventFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(EventFormat::Csv),
            "jsonl" | "ndjson" => Ok(EventFormat::Jsonl),
            other => Err(format!("unknown event format `{other}` (expected csv or jsonl)")),
        }
    }
}

/// Loads sale events from a CSV or JSONL file.
pub fn load_events(path: &Path, format: EventFormat) -> Result<Vec<SaleEvent>, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_events(BufReader::new(file), format).map_err(|e| match e {
        // io errors surfacing mid-read still name the file
        IngestError::Io { source, .. } => IngestError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

pub fn parse_events<R: Read>(reader: R, format: EventFormat) -> Result<Vec<SaleEvent>, IngestError> {
    let raw = match format {
        EventFormat::Csv => parse_csv(reader)?,
        EventFormat::Jsonl => parse_jsonl(BufReader::new(reader))?,
    };
    Ok(sequence_events(raw))
}

struct Row<'a> {
    line: u64,
    collection_id: &'a str,
    token_id: &'a str,
    timestamp: &'a str,
    price_eth: &'a str,
    kind: Option<&'a str>,
}

fn build_event(row: Row<'_>) -> Result<SaleEvent, IngestError> {
    let line = row.line;
    let parse_err = |reason: String| IngestError::Parse { line, reason };
    if let Some(kind) = row.kind {
        let kind = kind.trim();
        if !kind.is_empty() && !kind.eq_ignore_ascii_case("sale") {
            return Err(IngestError::NotASale {
                line,
                kind: kind.to_string(),
            });
        }
    }
    let collection_id = row.collection_id.trim();
    if collection_id.is_empty() {
        return Err(parse_err("empty collection_id".into()));
    }
    let token_id = row
        .token_id
        .trim()
        .parse::<u64>()
        .map_err(|_| parse_err(format!("invalid token_id `{}`", row.token_id)))?;
    let timestamp = row
        .timestamp
        .trim()
        .parse::<u64>()
        .map_err(|_| parse_err(format!("invalid timestamp `{}`", row.timestamp)))?;
    if timestamp == 0 {
        return Err(parse_err("timestamp must be positive".into()));
    }
    let price_wei = Wei::from_eth_str(row.price_eth)
        .map_err(|e| parse_err(format!("invalid price_eth: {e}")))?;
    Ok(SaleEvent {
        collection_id: collection_id.to_string(),
        token_id,
        timestamp,
        price_wei,
        seq: 0,
    })
}

fn parse_csv<R: Read>(reader: R) -> Result<Vec<SaleEvent>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Ok(Vec::new()),
        Some(h) => h.map_err(csv_err)?,
    };
    let find = |name: &str| header.iter().position(|h| h.trim() == name);
    let mut idx = [0usize; 4];
    for (slot, name) in idx.iter_mut().zip(COLUMNS) {
        *slot = find(name).ok_or_else(|| IngestError::Parse {
            line: 1,
            reason: format!("missing column `{name}` in header"),
        })?;
    }
    let kind_idx = find(KIND_COLUMN);

    let mut out = Vec::new();
    for rec in records {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        let field = |i: usize| {
            rec.get(i).ok_or_else(|| IngestError::Parse {
                line,
                reason: format!("expected {} fields, found {}", header.len(), rec.len()),
            })
        };
        out.push(build_event(Row {
            line,
            collection_id: field(idx[0])?,
            token_id: field(idx[1])?,
            timestamp: field(idx[2])?,
            price_eth: field(idx[3])?,
            kind: kind_idx.and_then(|i| rec.get(i)),
        })?);
    }
    Ok(out)
}

fn csv_err(e: csv::Error) -> IngestError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => IngestError::Io {
            path: Default::default(),
            source,
        },
        kind => IngestError::Parse {
            line,
            reason: format!("{kind:?}"),
        },
    }
}

fn json_scalar(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn parse_jsonl<R: BufRead>(reader: R) -> Result<Vec<SaleEvent>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i as u64 + 1;
        let text = line.map_err(|source| IngestError::Io {
            path: Default::default(),
            source,
        })?;
        if text.trim().is_empty() {
            continue;
        }
        let obj: Value = serde_json::from_str(&text).map_err(|e| IngestError::Parse {
            line: line_no,
            reason: format!("invalid json: {e}"),
        })?;
        let mut fields: [String; 4] = Default::default();
        for (slot, name) in fields.iter_mut().zip(COLUMNS) {
            *slot = obj.get(name).and_then(json_scalar).ok_or_else(|| IngestError::Parse {
                line: line_no,
                reason: format!("missing or non-scalar key `{name}`"),
            })?;
        }
        let kind = obj.get(KIND_COLUMN).and_then(json_scalar);
        out.push(build_event(Row {
            line: line_no,
            collection_id: &fields[0],
            token_id: &fields[1],
            timestamp: &fields[2],
            price_eth: &fields[3],
            kind: kind.as_deref(),
        })?);
    }
    Ok(out)
}

/// Writes events in the CSV interchange format, in the given order.
pub fn write_events_csv<W: Write>(writer: W, events: &[SaleEvent]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COLUMNS)?;
    for e in events {
        w.write_record([
            e.collection_id.as_str(),
            &e.token_id.to_string(),
            &e.timestamp.to_string(),
            &e.price_wei.to_eth_string(),
        ])?;
    }
    w.flush()
}
