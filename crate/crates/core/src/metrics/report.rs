use std::io::Write;

use crate::series::CollectionSeries;

/// Cross-token mean and population variance of value and count on one day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DailyStats {
    pub day: usize,
    pub value_mean: f64,
    pub value_var: f64,
    pub count_mean: f64,
    pub count_var: f64,
}

pub fn daily_mean_variance(cs: &CollectionSeries) -> Vec<DailyStats> {
    let n = cs.tokens.len() as f64;
    (0..cs.len_days())
        .map(|i| {
            let (mut sv, mut sv2, mut sc, mut sc2) = (0.0, 0.0, 0.0, 0.0);
            for t in &cs.tokens {
                let p = t.points[i];
                let c = f64::from(p.count);
                sv += p.value;
                sv2 += p.value * p.value;
                sc += c;
                sc2 += c * c;
            }
            let (vm, cm) = if n > 0.0 { (sv / n, sc / n) } else { (0.0, 0.0) };
            let var = |s2: f64, m: f64| if n > 0.0 { (s2 / n - m * m).max(0.0) } else { 0.0 };
            DailyStats {
                day: cs.start_day + i,
                value_mean: vm,
                value_var: var(sv2, vm),
                count_mean: cm,
                count_var: var(sc2, cm),
            }
        })
        .collect()
}

/// `series,day,value_mean,value_var,count_mean,count_var` for each labelled series.
pub fn write_daily_stats_csv<W: Write>(writer: W, series: &[(&str, &CollectionSeries)]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["series", "day", "value_mean", "value_var", "count_mean", "count_var"])?;
    for (label, cs) in series {
        for d in daily_mean_variance(cs) {
            w.write_record([
                label.to_string(),
                d.day.to_string(),
                d.value_mean.to_string(),
                d.value_var.to_string(),
                d.count_mean.to_string(),
                d.count_var.to_string(),
            ])?;
        }
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{DailyPoint, TokenSeries};

    #[test]
    fn mean_and_variance_by_day() {
        let cs = CollectionSeries {
            collection_id: "c".into(),
            inception_day: 0,
            start_day: 91,
            tokens: vec![
                TokenSeries {
                    token_id: 0,
                    points: vec![DailyPoint::new(1.0, 1), DailyPoint::new(3.0, 2)],
                },
                TokenSeries {
                    token_id: 1,
                    points: vec![DailyPoint::new(3.0, 1), DailyPoint::new(3.0, 4)],
                },
            ],
        };
        let s = daily_mean_variance(&cs);
        assert_eq!(s[0], DailyStats { day: 91, value_mean: 2.0, value_var: 1.0, count_mean: 1.0, count_var: 0.0 });
        assert_eq!(s[1], DailyStats { day: 92, value_mean: 3.0, value_var: 0.0, count_mean: 3.0, count_var: 1.0 });
        let mut buf = Vec::new();
        write_daily_stats_csv(&mut buf, &[("actual", &cs)]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }
}
