//! Turns smooth generated `(value, count)` rows into piecewise-constant
//! transaction series.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::nn::Step;
use crate::series::{CollectionSeries, DailyPoint, SeriesError, TokenSeries, YEAR_DAYS};

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("generated row {day} is not finite")]
    NonFinite { day: usize },
    #[error("token {token_id}: generated {got} days, expected {expected}")]
    LengthMismatch { token_id: u64, expected: usize, got: usize },
    #[error("generated tokens differ from observed tokens (missing {missing:?}, unexpected {unexpected:?})")]
    TokenSetMismatch { missing: Vec<u64>, unexpected: Vec<u64> },
    #[error(transparent)]
    Series(#[from] SeriesError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub points: Vec<DailyPoint>,
    /// Plateau starts whose generated value was negative and clamped to 0.
    pub clamped_negatives: usize,
}

/// Rounds half away from zero into the `u32` range.
fn round_count(x: f64) -> u32 {
    let r = x.round();
    if r <= 0.0 {
        0
    } else if r >= f64::from(u32::MAX) {
        u32::MAX
    } else {
        r as u32
    }
}

/// Makes counts a running maximum of the rounded generated counts (never
/// below `last_observed.count`) and starts a new value plateau, at that day's
/// generated value, wherever the count strictly increases.
pub fn step_transform(raw: &[Step], last_observed: DailyPoint) -> Result<StepOutput, TransformError> {
    if let Some(day) = raw.iter().position(|r| !(r[0].is_finite() && r[1].is_finite())) {
        return Err(TransformError::NonFinite { day });
    }
    let mut prev = last_observed;
    let mut clamped_negatives = 0;
    let points = raw
        .iter()
        .map(|&[value, count]| {
            let count = round_count(count).max(prev.count);
            if count > prev.count {
                if value < 0.0 {
                    clamped_negatives += 1;
                }
                prev = DailyPoint::new(value.max(0.0), count);
            }
            prev
        })
        .collect();
    Ok(StepOutput {
        points,
        clamped_negatives,
    })
}

fn check_tokens<T>(q1: &CollectionSeries, generated: &BTreeMap<u64, T>) -> Result<(), TransformError> {
    let observed: BTreeSet<u64> = q1.tokens.iter().map(|t| t.token_id).collect();
    let produced: BTreeSet<u64> = generated.keys().copied().collect();
    if observed != produced {
        return Err(TransformError::TokenSetMismatch {
            missing: observed.difference(&produced).copied().collect(),
            unexpected: produced.difference(&observed).copied().collect(),
        });
    }
    Ok(())
}

fn expected_len(q1: &CollectionSeries) -> usize {
    YEAR_DAYS.saturating_sub(q1.start_day + q1.len_days())
}

/// Appends each token's generated days to its observed series, yielding the
/// full first year. The result is checked against the series invariants.
pub fn assemble_projection(q1: &CollectionSeries, generated: &BTreeMap<u64, Vec<DailyPoint>>) -> Result<CollectionSeries, TransformError> {
    check_tokens(q1, generated)?;
    let expected = expected_len(q1);
    let mut out = q1.clone();
    for t in &mut out.tokens {
        let g = &generated[&t.token_id];
        if g.len() != expected {
            return Err(TransformError::LengthMismatch {
                token_id: t.token_id,
                expected,
                got: g.len(),
            });
        }
        t.points.extend_from_slice(g);
    }
    out.check_invariants()?;
    Ok(out)
}

/// Like [`assemble_projection`] but keeps the generated rows as they are
/// (counts rounded and floored at 0 only so they fit the point type). The
/// result is generally not a valid transaction series.
pub fn assemble_raw(q1: &CollectionSeries, generated: &BTreeMap<u64, Vec<Step>>) -> Result<CollectionSeries, TransformError> {
    check_tokens(q1, generated)?;
    let expected = expected_len(q1);
    let mut out = q1.clone();
    for t in &mut out.tokens {
        let g = &generated[&t.token_id];
        if g.len() != expected {
            return Err(TransformError::LengthMismatch {
                token_id: t.token_id,
                expected,
                got: g.len(),
            });
        }
        t.points.extend(g.iter().map(|&[v, c]| DailyPoint::new(v, round_count(c))));
    }
    Ok(out)
}

/// Step-transforms every token of a raw projection from its last Q1 point.
pub fn step_transform_tokens(q1: &CollectionSeries, generated: &BTreeMap<u64, Vec<Step>>) -> Result<(BTreeMap<u64, Vec<DailyPoint>>, usize), TransformError> {
    let mut clamped = 0;
    let mut out = BTreeMap::new();
    for t in &q1.tokens {
        let raw = generated.get(&t.token_id).map(Vec::as_slice).unwrap_or(&[]);
        let s = step_transform(raw, t.last())?;
        clamped += s.clamped_negatives;
        out.insert(t.token_id, s.points);
    }
    Ok((out, clamped))
}

pub fn token_points(t: &TokenSeries) -> Vec<Step> {
    t.points.iter().map(|p| [p.value, f64::from(p.count)]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{slice_quarter, Quarter, GROWTH_DAYS, Q1_DAYS};
    use proptest::prelude::*;

    fn rows(values: &[f64], counts: &[f64]) -> Vec<Step> {
        values.iter().zip(counts).map(|(&v, &c)| [v, c]).collect()
    }

    #[test]
    fn hand_example() {
        let out = step_transform(&rows(&[5.0, 6.0, 7.0, 8.0], &[1.1, 0.9, 2.2, 1.8]), DailyPoint::ZERO).unwrap();
        let counts: Vec<u32> = out.points.iter().map(|p| p.count).collect();
        let values: Vec<f64> = out.points.iter().map(|p| p.value).collect();
        assert_eq!(counts, [1, 1, 2, 2]);
        assert_eq!(values, [5.0, 5.0, 7.0, 7.0]);
    }

    #[test]
    fn flat_counts_carry_value() {
        let last = DailyPoint::new(3.25, 4);
        let out = step_transform(&rows(&[9.0, -1.0, 0.0], &[4.0, 3.6, 4.4]), last).unwrap();
        assert!(out.points.iter().all(|p| *p == last));
        assert_eq!(out.clamped_negatives, 0);
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        let out = step_transform(&rows(&[1.0, 2.0, 3.0], &[0.49, 0.5, 2.5]), DailyPoint::ZERO).unwrap();
        let counts: Vec<u32> = out.points.iter().map(|p| p.count).collect();
        assert_eq!(counts, [0, 1, 3]);
        // jump of 2 in one day: single plateau at that day's value
        assert_eq!(out.points[2].value, 3.0);
    }

    #[test]
    fn negative_plateau_value_clamped_and_counted() {
        let out = step_transform(&rows(&[-2.0, 1.0], &[1.0, 1.0]), DailyPoint::ZERO).unwrap();
        assert_eq!(out.points, vec![DailyPoint::new(0.0, 1); 2]);
        assert_eq!(out.clamped_negatives, 1);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(
            step_transform(&rows(&[1.0, f64::NAN], &[1.0, 1.0]), DailyPoint::ZERO),
            Err(TransformError::NonFinite { day: 1 })
        ));
        assert!(step_transform(&rows(&[1.0], &[f64::INFINITY]), DailyPoint::ZERO).is_err());
    }

    fn q1_collection() -> CollectionSeries {
        CollectionSeries {
            collection_id: "c".into(),
            inception_day: 0,
            start_day: 0,
            tokens: vec![
                TokenSeries {
                    token_id: 1,
                    points: (0..Q1_DAYS).map(|d| if d < 40 { DailyPoint::ZERO } else { DailyPoint::new(2.0, 1) }).collect(),
                },
                TokenSeries::zeros(5, Q1_DAYS),
            ],
        }
    }

    #[test]
    fn flat_generation_gives_flat_projection() {
        let q1 = q1_collection();
        let gen: BTreeMap<u64, Vec<DailyPoint>> = q1.tokens.iter().map(|t| (t.token_id, vec![t.last(); GROWTH_DAYS])).collect();
        let full = assemble_projection(&q1, &gen).unwrap();
        assert_eq!(full.len_days(), YEAR_DAYS);
        for t in &full.tokens {
            assert!(t.points[Q1_DAYS..].iter().all(|p| *p == t.points[Q1_DAYS - 1]));
        }
        assert_eq!(slice_quarter(&full, Quarter::Q1), q1);
    }

    #[test]
    fn token_set_and_length_checked() {
        let q1 = q1_collection();
        let mut gen: BTreeMap<u64, Vec<DailyPoint>> = BTreeMap::new();
        gen.insert(1, vec![DailyPoint::new(2.0, 1); GROWTH_DAYS]);
        gen.insert(9, vec![DailyPoint::ZERO; GROWTH_DAYS]);
        match assemble_projection(&q1, &gen) {
            Err(TransformError::TokenSetMismatch { missing, unexpected }) => {
                assert_eq!(missing, vec![5]);
                assert_eq!(unexpected, vec![9]);
            }
            other => panic!("{other:?}"),
        }
        gen.remove(&9);
        gen.insert(5, vec![DailyPoint::ZERO; 3]);
        assert!(matches!(assemble_projection(&q1, &gen), Err(TransformError::LengthMismatch { token_id: 5, .. })));
    }

    #[test]
    fn invalid_generated_points_rejected() {
        let q1 = q1_collection();
        let mut gen: BTreeMap<u64, Vec<DailyPoint>> = q1.tokens.iter().map(|t| (t.token_id, vec![t.last(); GROWTH_DAYS])).collect();
        gen.get_mut(&1).unwrap()[10] = DailyPoint::ZERO;
        assert!(matches!(assemble_projection(&q1, &gen), Err(TransformError::Series(_))));
    }

    #[test]
    fn transformed_tokens_assemble() {
        let q1 = q1_collection();
        let gen: BTreeMap<u64, Vec<Step>> = q1
            .tokens
            .iter()
            .map(|t| (t.token_id, (0..GROWTH_DAYS).map(|d| [1.0 + d as f64 * 0.01, d as f64 / 50.0]).collect()))
            .collect();
        let (steps, _) = step_transform_tokens(&q1, &gen).unwrap();
        assemble_projection(&q1, &steps).unwrap();
        let raw = assemble_raw(&q1, &gen).unwrap();
        assert_eq!(raw.tokens[0].points[Q1_DAYS + 10].value, 1.1);
    }

    fn finite_row() -> impl Strategy<Value = Step> {
        (prop_oneof![-1e6f64..1e6, -5.0f64..5.0], prop_oneof![-1e3f64..1e3, -3.0f64..10.0]).prop_map(|(v, c)| [v, c])
    }

    proptest! {
        #[test]
        fn output_is_valid_series_and_idempotent(
            raw in prop::collection::vec(finite_row(), 0..60),
            last_count in 0u32..5,
            last_value in 0.0f64..10.0,
        ) {
            let last = if last_count == 0 { DailyPoint::ZERO } else { DailyPoint::new(last_value, last_count) };
            let out = step_transform(&raw, last).unwrap();
            prop_assert_eq!(out.points.len(), raw.len());
            let t = TokenSeries { token_id: 0, points: out.points.clone() };
            prop_assert!(t.check_invariants_from(last).is_ok());
            let again = step_transform(&token_points(&t), last).unwrap();
            prop_assert_eq!(again.points, out.points);
        }
    }
}
