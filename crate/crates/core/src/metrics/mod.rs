//! Market statistics, tiers, regression statistics and the evaluation harness.

mod eval;
mod report;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

pub use eval::{
    evaluate_models, run_evaluation, train_models, CollectionDiagnostics, EvalConfig, EvalReport, EvalRow, ModelLabel,
    TrainedModels,
};
pub use report::{daily_mean_variance, write_daily_stats_csv, DailyStats};

use crate::ingest::{chronological_key, SaleEvent};
use crate::series::{CollectionSeries, Quarter};
use crate::wei::Wei;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("actual value is zero; relative difference undefined")]
    ZeroActual,
    #[error("actual values have zero variance; r² undefined")]
    DegenerateVariance,
    #[error("actual and projected series differ in {0}")]
    FrameMismatch(&'static str),
    #[error("no {0} collections given")]
    NoCollections(&'static str),
    #[error(transparent)]
    Context(#[from] crate::context::ContextError),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
    #[error(transparent)]
    Transform(#[from] crate::transform::TransformError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Market statistics of one quarter, in ETH.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuarterStats {
    pub market_cap: f64,
    pub high: f64,
    pub low: f64,
    pub mean: f64,
    /// Sales (or plateau starts, for generated series) inside the quarter.
    pub sales: usize,
    pub change_pct: Option<f64>,
}

/// Percentage change of `cap` relative to `prev`; `None` when `prev` is 0.
pub fn change_pct(cap: f64, prev: f64) -> Option<f64> {
    (prev != 0.0).then(|| (cap - prev) / prev * 100.0)
}

fn price_summary(prices: &[f64]) -> (f64, f64, f64) {
    if prices.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let high = prices.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let low = prices.iter().copied().fold(f64::INFINITY, f64::min);
    (high, low, prices.iter().sum::<f64>() / prices.len() as f64)
}

/// Index into a token's points of the absolute `day`, if covered.
fn local(cs: &CollectionSeries, day: usize) -> Option<usize> {
    cs.day_range().contains(&day).then(|| day - cs.start_day)
}

/// Statistics of quarter `q`.
///
/// With `events` (the sales the series was built from), market cap and
/// prices are summed in integer wei. Each token's `k`-th sale in
/// chronological order is placed on the day its cumulative count first
/// exceeds `k`. Without events, prices are the values at plateau starts.
/// The market cap is the sum of every token's carried value on the
/// quarter's final day; quarters the series does not reach yield zeros.
pub fn quarter_stats(cs: &CollectionSeries, events: &[SaleEvent], q: Quarter, prev_cap: Option<f64>) -> QuarterStats {
    let days = q.days();
    let Some(end) = local(cs, days.end - 1) else {
        return QuarterStats {
            market_cap: 0.0,
            high: 0.0,
            low: 0.0,
            mean: 0.0,
            sales: 0,
            change_pct: None,
        };
    };
    let (market_cap, prices) = if events.is_empty() {
        let cap = cs.tokens.iter().map(|t| t.points[end].value).sum::<f64>();
        let mut prices = Vec::new();
        for t in &cs.tokens {
            for day in days.clone() {
                let Some(i) = local(cs, day) else { continue };
                let before = if i == 0 { 0 } else { t.points[i - 1].count };
                if t.points[i].count > before {
                    prices.push(t.points[i].value);
                }
            }
        }
        (cap, prices)
    } else {
        let mut by_token: BTreeMap<u64, Vec<&SaleEvent>> = BTreeMap::new();
        for e in events {
            by_token.entry(e.token_id).or_default().push(e);
        }
        let mut cap = Wei::ZERO;
        let mut wei_prices = Vec::new();
        for t in &cs.tokens {
            let Some(sales) = by_token.get_mut(&t.token_id) else { continue };
            sales.sort_by_key(|e| chronological_key(e));
            let held = t.points[end].count as usize;
            if held > 0 {
                cap = cap.checked_add(sales[held - 1].price_wei).expect("market cap fits u128");
            }
            let first = local(cs, days.start).unwrap_or(0);
            let before = if first == 0 { 0 } else { t.points[first - 1].count as usize };
            wei_prices.extend(sales[before..held].iter().map(|e| e.price_wei));
        }
        let prices: Vec<f64> = wei_prices.iter().map(|w| w.to_eth_f64()).collect();
        let (high, low, mean) = if wei_prices.is_empty() {
            (0.0, 0.0, 0.0)
        } else {
            let total: Wei = wei_prices.iter().copied().sum();
            let mean = Wei(total.0 / wei_prices.len() as u128).to_eth_f64();
            let (h, l, _) = price_summary(&prices);
            (h, l, mean)
        };
        return QuarterStats {
            market_cap: cap.to_eth_f64(),
            high,
            low,
            mean,
            sales: wei_prices.len(),
            change_pct: prev_cap.and_then(|p| change_pct(cap.to_eth_f64(), p)),
        };
    };
    let (high, low, mean) = price_summary(&prices);
    QuarterStats {
        market_cap,
        high,
        low,
        mean,
        sales: prices.len(),
        change_pct: prev_cap.and_then(|p| change_pct(market_cap, p)),
    }
}

/// Statistics of all four quarters, each change relative to the one before.
pub fn year_stats(cs: &CollectionSeries, events: &[SaleEvent]) -> [QuarterStats; 4] {
    let mut prev = None;
    Quarter::ALL.map(|q| {
        let s = quarter_stats(cs, events, q, prev);
        prev = Some(s.market_cap);
        s
    })
}

/// Sum of carried values on the last day of each quarter.
pub fn quarter_caps(cs: &CollectionSeries) -> [f64; 4] {
    Quarter::ALL.map(|q| match local(cs, q.days().end - 1) {
        Some(i) => cs.tokens.iter().map(|t| t.points[i].value).sum(),
        None => 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Tier {
    Tier1,
    Tier2,
    Tier3,
}

impl Tier {
    pub fn number(self) -> u8 {
        match self {
            Tier::Tier1 => 1,
            Tier::Tier2 => 2,
            Tier::Tier3 => 3,
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

pub const TIER1_FLOOR: f64 = 15_000.0;
pub const TIER2_FLOOR: f64 = 2_000.0;

/// Tier 1 above 15 000 ETH, Tier 2 above 2 000 ETH, Tier 3 otherwise. Caps
/// exactly on a threshold fall into the lower tier.
pub fn tier(market_cap: f64) -> Tier {
    if market_cap > TIER1_FLOOR {
        Tier::Tier1
    } else if market_cap > TIER2_FLOOR {
        Tier::Tier2
    } else {
        Tier::Tier3
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionStats {
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    /// `None` flags zero variance in the actual values.
    pub r2: Option<f64>,
}

impl RegressionStats {
    pub fn r2_checked(&self) -> Result<f64, MetricsError> {
        self.r2.ok_or(MetricsError::DegenerateVariance)
    }
}

pub fn regression_from_pairs(pairs: impl Iterator<Item = (f64, f64)> + Clone) -> RegressionStats {
    let mut n = 0usize;
    let (mut abs, mut sq, mut sum_y) = (0.0, 0.0, 0.0);
    for (y, p) in pairs.clone() {
        n += 1;
        abs += (y - p).abs();
        sq += (y - p) * (y - p);
        sum_y += y;
    }
    if n == 0 {
        return RegressionStats {
            mae: 0.0,
            mse: 0.0,
            rmse: 0.0,
            r2: None,
        };
    }
    let mean_y = sum_y / n as f64;
    let ss_tot: f64 = pairs.map(|(y, _)| (y - mean_y) * (y - mean_y)).sum();
    let mse = sq / n as f64;
    RegressionStats {
        mae: abs / n as f64,
        mse,
        rmse: mse.sqrt(),
        r2: (ss_tot > 0.0).then(|| 1.0 - sq / ss_tot),
    }
}

/// Error statistics of daily values over every token and every day of
/// `quarters`.
pub fn regression_stats(actual: &CollectionSeries, projected: &CollectionSeries, quarters: &[Quarter]) -> Result<RegressionStats, MetricsError> {
    if actual.token_ids() != projected.token_ids() {
        return Err(MetricsError::FrameMismatch("tokens"));
    }
    if actual.day_range() != projected.day_range() {
        return Err(MetricsError::FrameMismatch("days"));
    }
    let days: Vec<usize> = quarters
        .iter()
        .flat_map(|q| q.days())
        .filter_map(|d| local(actual, d))
        .collect();
    let pairs = actual.tokens.iter().zip(&projected.tokens).flat_map(|(a, p)| {
        days.iter().map(move |&i| (a.points[i].value, p.points[i].value))
    });
    Ok(regression_from_pairs(pairs))
}

/// `|y − ŷ| / y`, a ratio.
pub fn abs_diff_pct(y: f64, y_hat: f64) -> Result<f64, MetricsError> {
    if y == 0.0 {
        return Err(MetricsError::ZeroActual);
    }
    Ok((y - y_hat).abs() / y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{build_series, DailyPoint, TokenSeries, YEAR_DAYS};

    fn series(tokens: Vec<Vec<DailyPoint>>) -> CollectionSeries {
        CollectionSeries {
            collection_id: "c".into(),
            inception_day: 0,
            start_day: 0,
            tokens: tokens
                .into_iter()
                .enumerate()
                .map(|(i, points)| TokenSeries {
                    token_id: i as u64,
                    points,
                })
                .collect(),
        }
    }

    #[test]
    fn published_cap_changes() {
        let caps = [24_252.51, 117_718.68, 196_391.34, 307_509.66];
        let expected = [385.39, 66.83, 56.58];
        for (w, e) in caps.windows(2).zip(expected) {
            let got = change_pct(w[1], w[0]).unwrap();
            assert!((got - e).abs() <= 0.01, "{got} vs {e}");
        }
        assert_eq!(change_pct(5.0, 0.0), None);
    }

    #[test]
    fn published_tiers() {
        assert_eq!(tier(24_252.51), Tier::Tier1);
        assert_eq!(tier(3_123.25), Tier::Tier2);
        assert_eq!(tier(1_251.49), Tier::Tier3);
        assert_eq!(tier(0.0), Tier::Tier3);
        assert_eq!(tier(15_000.0), Tier::Tier2);
        assert_eq!(tier(2_000.0), Tier::Tier3);
        assert_eq!(tier(15_000.01), Tier::Tier1);
    }

    #[test]
    fn all_zero_collection() {
        let cs = series(vec![vec![DailyPoint::ZERO; YEAR_DAYS]; 3]);
        for q in Quarter::ALL {
            let s = quarter_stats(&cs, &[], q, None);
            assert_eq!((s.market_cap, s.high, s.low, s.mean, s.sales), (0.0, 0.0, 0.0, 0.0, 0));
        }
    }

    #[test]
    fn two_token_cap() {
        let a = (0..YEAR_DAYS).map(|d| if d < 10 { DailyPoint::ZERO } else { DailyPoint::new(3.0, 1) }).collect();
        let b = (0..YEAR_DAYS).map(|d| if d < 50 { DailyPoint::new(1.0, 1) } else { DailyPoint::new(5.0, 2) }).collect();
        let s = quarter_stats(&series(vec![a, b]), &[], Quarter::Q1, None);
        assert_eq!(s.market_cap, 8.0);
        // plateau starts: a@10 (3), b@0 (1), b@50 (5)
        assert_eq!((s.high, s.low, s.mean, s.sales), (5.0, 1.0, 3.0, 3));
    }

    fn sale(token: u64, day: u64, secs: u64, eth: &str) -> SaleEvent {
        SaleEvent {
            collection_id: "c".into(),
            token_id: token,
            timestamp: 1_000_000 + day * 86_400 + secs,
            price_wei: Wei::from_eth_str(eth).unwrap(),
            seq: 0,
        }
    }

    #[test]
    fn event_path_is_exact_and_matches_series_path() {
        let events = crate::ingest::sequence_events(vec![
            sale(0, 5, 10, "0.1"),
            sale(0, 5, 20, "0.2"),
            sale(1, 100, 0, "1.7"),
            sale(1, 200, 0, "0.0000001"),
            sale(0, 300, 0, "2.5"),
        ]);
        let cs = build_series("c", &events, 1_000_000, &[0, 1]).unwrap().series;
        let q1 = quarter_stats(&cs, &events, Quarter::Q1, None);
        // same-day sales both count as prices; the later one is carried
        assert_eq!(q1.sales, 2);
        assert_eq!(q1.market_cap, 0.2);
        assert_eq!((q1.high, q1.low), (0.2, 0.1));
        assert!((q1.mean - 0.15).abs() < 1e-15);
        let stats = year_stats(&cs, &events);
        assert_eq!(stats[1].market_cap, 1.9);
        assert_eq!(stats[2].market_cap, 0.2000001);
        assert_eq!(stats[2].low, 0.0000001);
        assert_eq!(stats[3].market_cap, 2.5000001);
        assert!((stats[1].change_pct.unwrap() - 850.0).abs() < 1e-9);
        assert_eq!(quarter_caps(&cs)[3], 2.5 + 1e-7);
    }

    #[test]
    fn cap_additive_and_scale_equivariant() {
        let events = crate::ingest::sequence_events(vec![sale(0, 1, 0, "1.5"), sale(1, 2, 0, "2.25"), sale(2, 95, 0, "4")]);
        let cs = build_series("c", &events, 1_000_000, &[0, 1, 2]).unwrap().series;
        let whole = quarter_stats(&cs, &events, Quarter::Q2, None).market_cap;
        let left = CollectionSeries {
            tokens: cs.tokens[..1].to_vec(),
            ..cs.clone()
        };
        let right = CollectionSeries {
            tokens: cs.tokens[1..].to_vec(),
            ..cs.clone()
        };
        let parts = quarter_stats(&left, &events, Quarter::Q2, None).market_cap + quarter_stats(&right, &events, Quarter::Q2, None).market_cap;
        assert_eq!(whole, parts);

        let scaled: Vec<SaleEvent> = events
            .iter()
            .map(|e| SaleEvent {
                price_wei: Wei(e.price_wei.0 * 4),
                ..e.clone()
            })
            .collect();
        let cs4 = build_series("c", &scaled, 1_000_000, &[0, 1, 2]).unwrap().series;
        let (a, b) = (year_stats(&cs, &events), year_stats(&cs4, &scaled));
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(y.market_cap, 4.0 * x.market_cap);
            assert_eq!((y.high, y.low, y.mean), (4.0 * x.high, 4.0 * x.low, 4.0 * x.mean));
            assert_eq!(x.change_pct, y.change_pct);
        }
    }

    #[test]
    fn regression_hand_values() {
        let s = regression_from_pairs([(1.0, 1.0), (2.0, 1.0), (3.0, 1.0)].into_iter());
        assert_eq!(s.mae, 1.0);
        assert!((s.mse - 5.0 / 3.0).abs() < 1e-15);
        assert!((s.rmse - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((s.r2.unwrap() + 1.5).abs() < 1e-15);
    }

    #[test]
    fn regression_identity_and_mean() {
        let a = series(vec![
            (0..YEAR_DAYS).map(|d| DailyPoint::new((d / 30) as f64, 1)).collect(),
            (0..YEAR_DAYS).map(|d| DailyPoint::new((d % 7) as f64, 1)).collect(),
        ]);
        let s = regression_stats(&a, &a, &Quarter::GROWTH).unwrap();
        assert_eq!((s.mae, s.mse, s.rmse, s.r2), (0.0, 0.0, 0.0, Some(1.0)));

        let vals: Vec<f64> = a.tokens.iter().flat_map(|t| t.points[91..].iter().map(|p| p.value)).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let mut m = a.clone();
        m.tokens.iter_mut().for_each(|t| t.points.iter_mut().for_each(|p| p.value = mean));
        let s = regression_stats(&a, &m, &Quarter::GROWTH).unwrap();
        assert!(s.r2.unwrap().abs() < 1e-12);
        assert!((s.rmse * s.rmse - s.mse).abs() < 1e-9);
    }

    #[test]
    fn degenerate_variance_flagged() {
        let a = series(vec![vec![DailyPoint::new(2.0, 1); YEAR_DAYS]]);
        let s = regression_stats(&a, &a, &Quarter::GROWTH).unwrap();
        assert_eq!(s.r2, None);
        assert!(matches!(s.r2_checked(), Err(MetricsError::DegenerateVariance)));
    }

    #[test]
    fn frame_mismatch() {
        let a = series(vec![vec![DailyPoint::ZERO; YEAR_DAYS]]);
        let b = series(vec![vec![DailyPoint::ZERO; YEAR_DAYS]; 2]);
        assert!(regression_stats(&a, &b, &Quarter::ALL).is_err());
    }

    #[test]
    fn abs_diff_values() {
        assert!((abs_diff_pct(100.0, 72.0).unwrap() - 0.28).abs() < 1e-15);
        assert_eq!(abs_diff_pct(5.0, 5.0).unwrap(), 0.0);
        assert!(matches!(abs_diff_pct(0.0, 1.0), Err(MetricsError::ZeroActual)));
    }
}
