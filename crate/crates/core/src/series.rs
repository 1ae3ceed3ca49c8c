//! Daily per-token transaction series and quarter slicing.
//!
//! A token's series holds, for each day since collection inception, the price
//! of its most recent sale (carried forward, 0 before the first sale) and the
//! cumulative number of sales so far. Such series are piecewise constant: the
//! value may only change on a day where the count increases.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::ops::Range;

use thiserror::Error;

use crate::ingest::{chronological_key, SaleEvent};

/// Days in the modeled year.
pub const YEAR_DAYS: usize = 365;
pub const SECONDS_PER_DAY: u64 = 86_400;

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("event references token {0} which is not part of the collection")]
    UnknownToken(u64),
    #[error("event for token {token_id} at {timestamp} precedes inception {inception}")]
    BeforeInception {
        token_id: u64,
        timestamp: u64,
        inception: u64,
    },
    #[error("event belongs to collection `{found}`, expected `{expected}`")]
    MixedCollection { expected: String, found: String },
    #[error("token {token_id}, day {day}: {reason}")]
    Invariant {
        token_id: u64,
        day: usize,
        reason: &'static str,
    },
    #[error("horizon {0} outside 1..=365")]
    InvalidHorizon(usize),
    #[error("series csv line {line}: {reason}")]
    Csv { line: u64, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One token-day: last transacted price (ETH) and cumulative sale count.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DailyPoint {
    pub value: f64,
    pub count: u32,
}

impl DailyPoint {
    pub const ZERO: DailyPoint = DailyPoint { value: 0.0, count: 0 };

    pub fn new(value: f64, count: u32) -> Self {
        DailyPoint { value, count }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenSeries {
    pub token_id: u64,
    pub points: Vec<DailyPoint>,
}

impl TokenSeries {
    pub fn zeros(token_id: u64, len: usize) -> Self {
        TokenSeries {
            token_id,
            points: vec![DailyPoint::ZERO; len],
        }
    }

    pub fn last(&self) -> DailyPoint {
        self.points.last().copied().unwrap_or(DailyPoint::ZERO)
    }

    /// Checks the piecewise-constant invariants, treating `prev` as the point
    /// immediately preceding this series (use `DailyPoint::ZERO` for a series
    /// starting at inception).
    pub fn check_invariants_from(&self, prev: DailyPoint) -> Result<(), SeriesError> {
        let fail = |day: usize, reason| SeriesError::Invariant {
            token_id: self.token_id,
            day,
            reason,
        };
        let mut prev = prev;
        for (day, p) in self.points.iter().enumerate() {
            if !p.value.is_finite() || p.value < 0.0 {
                return Err(fail(day, "value must be finite and non-negative"));
            }
            if p.count == 0 && p.value != 0.0 {
                return Err(fail(day, "untransacted token carries a non-zero value"));
            }
            if p.count < prev.count {
                return Err(fail(day, "count decreased"));
            }
            if p.count == prev.count && p.value != prev.value {
                return Err(fail(day, "value changed without a sale"));
            }
            prev = *p;
        }
        Ok(())
    }

    pub fn check_invariants(&self) -> Result<(), SeriesError> {
        self.check_invariants_from(DailyPoint::ZERO)
    }
}

/// Per-token series of one collection sharing a common day frame.
///
/// `start_day` is the absolute day index (days since inception) of
/// `points[0]` of every token, so quarter slices keep their position.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectionSeries {
    pub collection_id: String,
    /// Inception as a unix day number (UTC).
    pub inception_day: i64,
    pub start_day: usize,
    pub tokens: Vec<TokenSeries>,
}

impl CollectionSeries {
    pub fn len_days(&self) -> usize {
        self.tokens.first().map_or(0, |t| t.points.len())
    }

    /// Absolute day range covered by this series.
    pub fn day_range(&self) -> Range<usize> {
        self.start_day..self.start_day + self.len_days()
    }

    pub fn token_ids(&self) -> Vec<u64> {
        self.tokens.iter().map(|t| t.token_id).collect()
    }

    /// Restricts every token to the absolute days in `days` that this series covers.
    pub fn slice_days(&self, days: Range<usize>) -> CollectionSeries {
        let covered = self.day_range();
        let lo = days.start.clamp(covered.start, covered.end);
        let hi = days.end.clamp(lo, covered.end);
        let (a, b) = (lo - self.start_day, hi - self.start_day);
        CollectionSeries {
            collection_id: self.collection_id.clone(),
            inception_day: self.inception_day,
            start_day: lo,
            tokens: self
                .tokens
                .iter()
                .map(|t| TokenSeries {
                    token_id: t.token_id,
                    points: t.points[a..b].to_vec(),
                })
                .collect(),
        }
    }

    /// Concatenates day-contiguous slices of the same collection.
    pub fn concat(parts: &[CollectionSeries]) -> Option<CollectionSeries> {
        let first = parts.first()?;
        let mut out = first.clone();
        for part in &parts[1..] {
            if part.start_day != out.start_day + out.len_days() || part.token_ids() != out.token_ids() {
                return None;
            }
            for (t, p) in out.tokens.iter_mut().zip(&part.tokens) {
                t.points.extend_from_slice(&p.points);
            }
        }
        Some(out)
    }

    pub fn check_invariants(&self) -> Result<(), SeriesError> {
        self.tokens.iter().try_for_each(TokenSeries::check_invariants)
    }
}

/// Quarters of the first year. Q1–Q3 are 91 days, Q4 is 92.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Quarter {
    Q1,
    Q2,
    Q3,
    Q4,
}

impl Quarter {
    pub const ALL: [Quarter; 4] = [Quarter::Q1, Quarter::Q2, Quarter::Q3, Quarter::Q4];
    pub const GROWTH: [Quarter; 3] = [Quarter::Q2, Quarter::Q3, Quarter::Q4];

    pub fn days(self) -> Range<usize> {
        match self {
            Quarter::Q1 => 0..91,
            Quarter::Q2 => 91..182,
            Quarter::Q3 => 182..273,
            Quarter::Q4 => 273..365,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn of_day(day: usize) -> Quarter {
        match day {
            0..=90 => Quarter::Q1,
            91..=181 => Quarter::Q2,
            182..=272 => Quarter::Q3,
            _ => Quarter::Q4,
        }
    }

    pub fn previous(self) -> Option<Quarter> {
        self.index().checked_sub(1).map(|i| Quarter::ALL[i])
    }
}

impl std::fmt::Display for Quarter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Q{}", self.index() + 1)
    }
}

/// Length of the observed early stage.
pub const Q1_DAYS: usize = 91;
/// Length of the generated growth stage (Q2–Q4).
pub const GROWTH_DAYS: usize = YEAR_DAYS - Q1_DAYS;

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltSeries {
    pub series: CollectionSeries,
    /// Events after the 365-day window that were ignored.
    pub dropped_late: usize,
}

/// Builds the 365-day series of `token_ids` from sale events.
///
/// Day `d` covers `[inception + d·86400, inception + (d+1)·86400)`.
pub fn build_series(
    collection_id: &str,
    events: &[SaleEvent],
    inception_timestamp: u64,
    token_ids: &[u64],
) -> Result<BuiltSeries, SeriesError> {
    let index: BTreeMap<u64, usize> = token_ids.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let mut sales: Vec<Vec<(usize, (u64, u32), f64)>> = vec![Vec::new(); token_ids.len()];
    let mut dropped_late = 0;
    for e in events {
        if e.collection_id != collection_id {
            return Err(SeriesError::MixedCollection {
                expected: collection_id.to_string(),
                found: e.collection_id.clone(),
            });
        }
        let slot = *index.get(&e.token_id).ok_or(SeriesError::UnknownToken(e.token_id))?;
        if e.timestamp < inception_timestamp {
            return Err(SeriesError::BeforeInception {
                token_id: e.token_id,
                timestamp: e.timestamp,
                inception: inception_timestamp,
            });
        }
        let day = ((e.timestamp - inception_timestamp) / SECONDS_PER_DAY) as usize;
        if day >= YEAR_DAYS {
            dropped_late += 1;
            continue;
        }
        sales[slot].push((day, chronological_key(e), e.price_eth()));
    }

    let tokens = token_ids
        .iter()
        .zip(sales)
        .map(|(&token_id, mut token_sales)| {
            token_sales.sort_by_key(|s| s.1);
            let mut points = Vec::with_capacity(YEAR_DAYS);
            let mut cur = DailyPoint::ZERO;
            let mut it = token_sales.into_iter().peekable();
            for day in 0..YEAR_DAYS {
                while let Some((_, _, price)) = it.next_if(|s| s.0 == day) {
                    cur.value = price;
                    cur.count += 1;
                }
                points.push(cur);
            }
            TokenSeries { token_id, points }
        })
        .collect();

    Ok(BuiltSeries {
        series: CollectionSeries {
            collection_id: collection_id.to_string(),
            inception_day: (inception_timestamp / SECONDS_PER_DAY) as i64,
            start_day: 0,
            tokens,
        },
        dropped_late,
    })
}

/// Restricts a series to one quarter, keeping absolute day positions.
pub fn slice_quarter(cs: &CollectionSeries, q: Quarter) -> CollectionSeries {
    cs.slice_days(q.days())
}

/// Distribution of cumulative sale counts at day `horizon_days - 1`.
pub fn tx_count_histogram(cs: &CollectionSeries, horizon_days: usize) -> Result<BTreeMap<u32, usize>, SeriesError> {
    if !(1..=YEAR_DAYS).contains(&horizon_days) || !cs.day_range().contains(&(horizon_days - 1)) {
        return Err(SeriesError::InvalidHorizon(horizon_days));
    }
    let at = horizon_days - 1 - cs.start_day;
    let mut hist = BTreeMap::new();
    for t in &cs.tokens {
        *hist.entry(t.points[at].count).or_insert(0) += 1;
    }
    Ok(hist)
}

/// Writes the `token_id,day,value_eth,count` interchange CSV.
pub fn write_series_csv<W: Write>(writer: W, cs: &CollectionSeries) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["token_id", "day", "value_eth", "count"])?;
    for t in &cs.tokens {
        for (i, p) in t.points.iter().enumerate() {
            w.write_record([
                t.token_id.to_string(),
                (cs.start_day + i).to_string(),
                p.value.to_string(),
                p.count.to_string(),
            ])?;
        }
    }
    w.flush()
}

/// Reads a series CSV. Each token must cover the same contiguous day range.
pub fn read_series_csv<R: Read>(reader: R, collection_id: &str, inception_day: i64) -> Result<CollectionSeries, SeriesError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows: BTreeMap<u64, Vec<(usize, DailyPoint)>> = BTreeMap::new();
    let mut order = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| SeriesError::Csv {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |reason: &str| SeriesError::Csv {
            line,
            reason: reason.to_string(),
        };
        if rec.len() != 4 {
            return Err(bad("expected 4 fields"));
        }
        let token: u64 = rec[0].trim().parse().map_err(|_| bad("invalid token_id"))?;
        let day: usize = rec[1].trim().parse().map_err(|_| bad("invalid day"))?;
        let value: f64 = rec[2].trim().parse().map_err(|_| bad("invalid value_eth"))?;
        let count: u32 = rec[3].trim().parse().map_err(|_| bad("invalid count"))?;
        rows.entry(token)
            .or_insert_with(|| {
                order.push(token);
                Vec::new()
            })
            .push((day, DailyPoint { value, count }));
    }
    let mut frame: Option<Range<usize>> = None;
    let mut tokens = Vec::with_capacity(order.len());
    let mut seen = BTreeSet::new();
    for token_id in order {
        if !seen.insert(token_id) {
            continue;
        }
        let mut pts = rows.remove(&token_id).unwrap_or_default();
        pts.sort_by_key(|p| p.0);
        let start = pts.first().map_or(0, |p| p.0);
        let contiguous = pts.iter().enumerate().all(|(i, p)| p.0 == start + i);
        let range = start..start + pts.len();
        if !contiguous || frame.as_ref().is_some_and(|f| *f != range) {
            return Err(SeriesError::Csv {
                line: 0,
                reason: format!("token {token_id} does not share the collection's day frame"),
            });
        }
        frame = Some(range);
        tokens.push(TokenSeries {
            token_id,
            points: pts.into_iter().map(|p| p.1).collect(),
        });
    }
    Ok(CollectionSeries {
        collection_id: collection_id.to_string(),
        inception_day,
        start_day: frame.map_or(0, |f| f.start),
        tokens,
    })
}
