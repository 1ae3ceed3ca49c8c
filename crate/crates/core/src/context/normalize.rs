use std::collections::BTreeMap;

use super::{ContextError, ContextTable, ContextVector, RawContext, CONTEXT_DIM};

pub const CONTEXT_LOW: f64 = 1.0;
pub const CONTEXT_HIGH: f64 = 3.0;

/// Frozen min–max transform fitted on the training contexts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationParams {
    /// `|min|` over every raw component, added before scaling.
    pub abs_min_offset: f64,
    pub global_min: f64,
    pub global_max: f64,
    pub low: f64,
    pub high: f64,
}

impl NormalizationParams {
    pub fn scale(&self, raw: f64) -> f64 {
        let shifted = raw + self.abs_min_offset;
        (shifted - self.global_min) / (self.global_max - self.global_min) * (self.high - self.low) + self.low
    }

    /// Scales each component and clamps into `[low, high]`.
    pub fn apply(&self, raw: &RawContext) -> ContextVector {
        let mut out = [0.0; CONTEXT_DIM];
        for (o, r) in out.iter_mut().zip(raw) {
            let v = self.scale(*r);
            // NaN from a non-finite projection saturates low
            *o = if v.is_nan() { self.low } else { v.clamp(self.low, self.high) };
        }
        ContextVector(out)
    }
}

/// Rescales raw contexts into `[1, 3]` with one global min and max taken over
/// every component of every collection.
pub fn normalize_contexts(raw: &BTreeMap<String, RawContext>) -> Result<(ContextTable, NormalizationParams), ContextError> {
    let all = || raw.values().flat_map(|v| v.iter().copied());
    let raw_min = all().fold(f64::INFINITY, f64::min);
    if !raw_min.is_finite() {
        return Err(ContextError::DegenerateRange);
    }
    let abs_min_offset = raw_min.abs();
    let shifted = || all().map(|x| x + abs_min_offset);
    let global_min = shifted().fold(f64::INFINITY, f64::min);
    let global_max = shifted().fold(f64::NEG_INFINITY, f64::max);
    if !(global_max > global_min) || !global_max.is_finite() {
        return Err(ContextError::DegenerateRange);
    }
    let params = NormalizationParams {
        abs_min_offset,
        global_min,
        global_max,
        low: CONTEXT_LOW,
        high: CONTEXT_HIGH,
    };
    let table = raw.iter().map(|(id, v)| (id.clone(), params.apply(v))).collect();
    Ok((ContextTable(table), params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(rows: &[(&str, RawContext)]) -> BTreeMap<String, RawContext> {
        rows.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn endpoints_map_to_one_and_three() {
        let raw = table(&[("a", [-1.0, 0.0, 1.0, 0.0, 0.0, 0.0])]);
        let (t, p) = normalize_contexts(&raw).unwrap();
        assert_eq!(t.get("a").unwrap().values(), &[1.0, 2.0, 3.0, 2.0, 2.0, 2.0]);
        assert_eq!(p.abs_min_offset, 1.0);
        assert_eq!((p.global_min, p.global_max), (0.0, 2.0));
    }

    #[test]
    fn hand_computed_table() {
        // offset |−4| = 4; shifted array spans [0, 10]
        let raw = table(&[
            ("a", [-4.0, 6.0, 1.0, 0.0, 2.5, -1.5]),
            ("b", [0.5, 3.0, -2.0, 4.0, -4.0, 1.0]),
        ]);
        let (t, p) = normalize_contexts(&raw).unwrap();
        assert_eq!((p.global_min, p.global_max), (0.0, 10.0));
        let expect = |x: f64| (x + 4.0) / 10.0 * 2.0 + 1.0;
        for (id, row) in &raw {
            let got = t.get(id).unwrap().values();
            for (g, r) in got.iter().zip(row) {
                assert!((g - expect(*r)).abs() < 1e-15);
            }
        }
        assert_eq!(t.get("a").unwrap().values()[0], 1.0);
        assert_eq!(t.get("a").unwrap().values()[1], 3.0);
    }

    #[test]
    fn constant_table_is_degenerate() {
        let raw = table(&[("a", [2.0; 6]), ("b", [2.0; 6])]);
        assert!(matches!(normalize_contexts(&raw), Err(ContextError::DegenerateRange)));
        assert!(matches!(normalize_contexts(&BTreeMap::new()), Err(ContextError::DegenerateRange)));
    }

    #[test]
    fn out_of_range_new_values_clamp() {
        let raw = table(&[("a", [-1.0, 0.0, 1.0, 0.0, 0.0, 0.0])]);
        let (_, p) = normalize_contexts(&raw).unwrap();
        let v = p.apply(&[50.0, -50.0, 0.5, f64::NAN, 1.0, -1.0]);
        assert_eq!(v.values(), &[3.0, 1.0, 2.5, 1.0, 3.0, 1.0]);
    }

    proptest! {
        #[test]
        fn outputs_bounded_and_monotone(rows in prop::collection::vec(prop::array::uniform6(-1e3f64..1e3), 2..8)) {
            let raw: BTreeMap<String, RawContext> =
                rows.iter().enumerate().map(|(i, r)| (format!("c{i}"), *r)).collect();
            let Ok((t, _)) = normalize_contexts(&raw) else { return Ok(()); };
            let pairs: Vec<(f64, f64)> = raw
                .iter()
                .flat_map(|(id, r)| r.iter().copied().zip(t.get(id).unwrap().values().iter().copied()))
                .collect();
            for &(_, y) in &pairs {
                prop_assert!((1.0..=3.0).contains(&y));
            }
            for &(xa, ya) in &pairs {
                for &(xb, yb) in &pairs {
                    if xa < xb {
                        prop_assert!(ya <= yb);
                    }
                }
            }
        }
    }
}
