//! Sale-event acquisition from local files or an Etherscan-compatible API.
//!
//! Every loader returns events sorted by `(timestamp, seq)`, where `seq`
//! numbers events sharing a timestamp in input order. This makes "last sale of
//! the day" selection deterministic even though on-chain data carries no
//! sub-second ordering.

mod file;
mod http;

use std::path::PathBuf;

use thiserror::Error;

use crate::wei::Wei;

pub use file::{load_events, parse_events, write_events_csv, EventFormat};
pub use http::{fetch_events, IngestConfig, API_KEY_ENV};

/// One on-chain sale of one token.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SaleEvent {
    pub collection_id: String,
    pub token_id: u64,
    /// Unix seconds, UTC. Always positive.
    pub timestamp: u64,
    pub price_wei: Wei,
    /// Tie-break among events sharing `timestamp`, assigned at load.
    pub seq: u32,
}

impl SaleEvent {
    pub fn price_eth(&self) -> f64 {
        self.price_wei.to_eth_f64()
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Parse { line: u64, reason: String },
    /// A listing, bid, transfer or other non-sale record was present.
    #[error("line {line}: `{kind}` events are not sales and cannot be ingested")]
    NotASale { line: u64, kind: String },
    #[error("http request failed after {attempts} attempt(s): {message}")]
    Http { attempts: u32, message: String },
    #[error("unexpected response shape: {0}")]
    Schema(String),
    #[error("invalid ingest configuration: {0}")]
    Config(String),
}

/// Stable-sorts by timestamp and numbers same-timestamp events in their
/// original order.
pub fn sequence_events(mut events: Vec<SaleEvent>) -> Vec<SaleEvent> {
    events.sort_by_key(|e| e.timestamp);
    let mut prev: Option<u64> = None;
    let mut seq = 0u32;
    for e in &mut events {
        if prev == Some(e.timestamp) {
            seq += 1;
        } else {
            seq = 0;
            prev = Some(e.timestamp);
        }
        e.seq = seq;
    }
    events
}

/// Sort key used everywhere a chronological order of sales is needed.
pub fn chronological_key(e: &SaleEvent) -> (u64, u32) {
    (e.timestamp, e.seq)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(token: u64, ts: u64) -> SaleEvent {
        SaleEvent {
            collection_id: "c".into(),
            token_id: token,
            timestamp: ts,
            price_wei: Wei::ZERO,
            seq: 99,
        }
    }

    #[test]
    fn sequencing_breaks_ties_by_input_order() {
        let out = sequence_events(vec![ev(1, 20), ev(2, 10), ev(3, 20), ev(4, 10)]);
        let got: Vec<_> = out.iter().map(|e| (e.token_id, e.timestamp, e.seq)).collect();
        assert_eq!(got, vec![(2, 10, 0), (4, 10, 1), (1, 20, 0), (3, 20, 1)]);
    }
}
