//! Cross-sectional forecast quality: daily Pearson and rank correlations
//! between predicted and realized next-day returns, their means over the
//! test range, and the mean/std information ratios.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// Days with fewer valid stocks than this yield no defined correlation.
pub const MIN_STOCKS_PER_DAY: usize = 3;

#[derive(Debug, PartialEq)]
pub enum MetricsError {
    /// Not enough defined daily values to aggregate.
    TooFewDays { got: usize, want: usize },
    /// A daily series with zero variance has no information ratio.
    ZeroStd,
    EmptySeries,
}

impl core::fmt::Display for MetricsError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            MetricsError::TooFewDays { got, want } => {
                write!(f, "need at least {want} defined days, got {got}")
            }
            MetricsError::ZeroStd => write!(f, "zero standard deviation"),
            MetricsError::EmptySeries => write!(f, "empty series"),
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Pearson correlation; None when either side has no variance or fewer than
/// the per-day minimum of paired values.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len());
    if xs.len() < MIN_STOCKS_PER_DAY {
        return None;
    }
    let (mx, my) = (mean(xs), mean(ys));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / libm::sqrt(sxx * syy))
}

/// 1-based ranks with ties averaged (midranks).
pub fn midranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) share the average of ranks i+1..=j+1.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Daily cross-sectional Pearson correlation of predictions vs labels.
pub fn daily_ic(pred: &[f64], actual: &[f64]) -> Option<f64> {
    pearson(pred, actual)
}

/// Daily Spearman correlation: Pearson over midranks.
pub fn daily_rank_ic(pred: &[f64], actual: &[f64]) -> Option<f64> {
    assert_eq!(pred.len(), actual.len());
    if pred.len() < MIN_STOCKS_PER_DAY {
        return None;
    }
    pearson(&midranks(pred), &midranks(actual))
}

/// Mean over sample standard deviation (n-1 denominator).
pub fn icir(series: &[f64]) -> Result<f64, MetricsError> {
    if series.len() < 2 {
        return Err(MetricsError::TooFewDays {
            got: series.len(),
            want: 2,
        });
    }
    let m = mean(series);
    let ss: f64 = series.iter().map(|x| (x - m) * (x - m)).sum();
    let std = libm::sqrt(ss / (series.len() - 1) as f64);
    if std == 0.0 {
        return Err(MetricsError::ZeroStd);
    }
    Ok(m / std)
}

/// One test day's cross-section, already aligned: only stocks with both a
/// prediction and a label.
#[derive(Clone, Debug)]
pub struct DayVectors {
    pub date: String,
    pub pred: Vec<f64>,
    pub actual: Vec<f64>,
}

/// Per-day correlation series with exclusions recorded.
#[derive(Clone, Debug, Default, serde::Serialize, serde::Deserialize)]
pub struct DailySeries {
    pub dates: Vec<String>,
    pub ic: Vec<f64>,
    pub rank_ic: Vec<f64>,
    pub stocks_used: Vec<usize>,
    /// Days dropped for too few stocks or zero variance, with the reason.
    pub excluded: Vec<(String, String)>,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EvalReport {
    pub ic: f64,
    pub rank_ic: f64,
    /// None when the daily series has zero variance (ratio undefined).
    pub icir: Option<f64>,
    pub rank_icir: Option<f64>,
    pub days_used: usize,
    pub days_excluded: usize,
}

/// Builds the daily series, skipping undefined days.
pub fn daily_series(days: &[DayVectors]) -> DailySeries {
    let mut out = DailySeries::default();
    for day in days {
        let ic = daily_ic(&day.pred, &day.actual);
        let rank = daily_rank_ic(&day.pred, &day.actual);
        match (ic, rank) {
            (Some(ic), Some(rank)) => {
                out.dates.push(day.date.clone());
                out.ic.push(ic);
                out.rank_ic.push(rank);
                out.stocks_used.push(day.pred.len());
            }
            _ => {
                let reason = if day.pred.len() < MIN_STOCKS_PER_DAY {
                    "fewer than 3 stocks"
                } else {
                    "zero variance"
                };
                out.excluded.push((day.date.clone(), String::from(reason)));
            }
        }
    }
    out
}

/// Aggregates a daily series into the four headline numbers.
pub fn evaluate(days: &[DayVectors]) -> Result<(EvalReport, DailySeries), MetricsError> {
    if days.is_empty() {
        return Err(MetricsError::EmptySeries);
    }
    let series = daily_series(days);
    if series.ic.len() < 2 {
        return Err(MetricsError::TooFewDays {
            got: series.ic.len(),
            want: 2,
        });
    }
    // A constant daily series has no information ratio; report the means and
    // flag the ratio as undefined rather than failing the evaluation.
    let report = EvalReport {
        ic: mean(&series.ic),
        rank_ic: mean(&series.rank_ic),
        icir: icir(&series.ic).ok(),
        rank_icir: icir(&series.rank_ic).ok(),
        days_used: series.ic.len(),
        days_excluded: series.excluded.len(),
    };
    Ok((report, series))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use alloc::string::ToString;

    fn day(date: &str, pred: &[f64], actual: &[f64]) -> DayVectors {
        DayVectors {
            date: date.to_string(),
            pred: pred.to_vec(),
            actual: actual.to_vec(),
        }
    }

    #[test]
    fn daily_ic_matches_hand_values() {
        assert!((daily_ic(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((daily_ic(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!((daily_ic(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn undefined_days_are_none() {
        assert_eq!(daily_ic(&[1.0, 2.0], &[1.0, 2.0]), None, "below minimum");
        assert_eq!(daily_ic(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), None);
        assert_eq!(daily_ic(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]), None);
        assert_eq!(daily_rank_ic(&[1.0, 2.0, 3.0], &[7.0, 7.0, 7.0]), None);
    }

    #[test]
    fn rank_ic_matches_hand_values_and_ignores_monotone_transforms() {
        assert!(
            (daily_rank_ic(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-9
        );
        let actual = [0.4, -1.0, 0.2, 2.5];
        let monotone: Vec<f64> = actual.iter().map(|x| libm::exp(3.0 * x) + 7.0).collect();
        assert!((daily_rank_ic(&monotone, &actual).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn midranks_average_ties() {
        assert_eq!(midranks(&[10.0, 20.0, 30.0]), vec![1.0, 2.0, 3.0]);
        assert_eq!(midranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
        assert_eq!(midranks(&[2.0, 2.0, 2.0, 1.0]), vec![3.0, 3.0, 3.0, 1.0]);
        // Against the independent implementation on random draws with ties.
        let mut rng = Rng::new(8);
        for _ in 0..50 {
            let xs: Vec<f64> = (0..12).map(|_| (rng.below(5) as f64) * 0.5).collect();
            assert_eq!(midranks(&xs), gamestock_oracle::midranks(&xs));
        }
    }

    #[test]
    fn icir_matches_hand_values() {
        assert!((icir(&[0.1, 0.2, 0.3]).unwrap() - 2.0).abs() < 1e-12);
        assert!(icir(&[0.3, -0.3]).unwrap().abs() < 1e-12);
        assert_eq!(icir(&[0.5, 0.5, 0.5]).unwrap_err(), MetricsError::ZeroStd);
        assert!(matches!(
            icir(&[0.1]).unwrap_err(),
            MetricsError::TooFewDays { got: 1, want: 2 }
        ));
    }

    #[test]
    fn ic_affine_invariance_and_bounds() {
        let mut rng = Rng::new(14);
        for _ in 0..100 {
            let n = 3 + rng.below(8) as usize;
            let pred: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let actual: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            if let Some(ic) = daily_ic(&pred, &actual) {
                assert!(ic.abs() <= 1.0 + 1e-12);
                let scaled: Vec<f64> = pred.iter().map(|x| 3.7 * x + 11.0).collect();
                let ic2 = daily_ic(&scaled, &actual).unwrap();
                assert!((ic - ic2).abs() < 1e-12);
                let oracle = gamestock_oracle::pearson(&pred, &actual).unwrap();
                assert!((ic - oracle).abs() < 1e-12);
            }
            if let Some(ric) = daily_rank_ic(&pred, &actual) {
                assert!(ric.abs() <= 1.0 + 1e-12);
                let oracle = gamestock_oracle::spearman(&pred, &actual).unwrap();
                assert!((ric - oracle).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn evaluate_aggregates_and_excludes() {
        let days = vec![
            day("d1", &[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]),
            day("d2", &[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]),
            day("d3", &[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            day("d4", &[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]),
        ];
        let (report, series) = evaluate(&days).unwrap();
        assert_eq!(report.days_used, 3);
        assert_eq!(report.days_excluded, 1);
        assert_eq!(series.excluded[0].0, "d3");
        assert!((report.ic - (0.5 + 1.0 - 1.0) / 3.0).abs() < 1e-9);
        assert_eq!(series.dates, vec!["d1", "d2", "d4"]);

        // Mean/ICIR pinned values.
        let days = vec![
            day("a", &[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]),
            day("b", &[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]),
        ];
        let (report, _) = evaluate(&days).unwrap();
        assert!((report.ic - 1.0).abs() < 1e-12);
        assert!((report.rank_ic - 1.0).abs() < 1e-12);
        // Constant daily series: ratios undefined, means still reported.
        assert_eq!(report.icir, None);
        assert_eq!(report.rank_icir, None);

        assert!(matches!(evaluate(&[]), Err(MetricsError::EmptySeries)));
        let one = vec![day("only", &[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0])];
        assert!(matches!(
            evaluate(&one),
            Err(MetricsError::TooFewDays { .. })
        ));
    }

    #[test]
    fn evaluate_is_order_independent() {
        let base = vec![
            day("d1", &[0.3, -0.2, 0.9, 0.1], &[0.01, -0.02, 0.04, 0.0]),
            day("d2", &[-0.5, 0.2, 0.4, 0.8], &[-0.01, 0.01, 0.03, 0.02]),
        ];
        let permuted = vec![
            day("d1", &[0.9, 0.3, 0.1, -0.2], &[0.04, 0.01, 0.0, -0.02]),
            day("d2", &[0.8, -0.5, 0.2, 0.4], &[0.02, -0.01, 0.01, 0.03]),
        ];
        let (a, _) = evaluate(&base).unwrap();
        let (b, _) = evaluate(&permuted).unwrap();
        assert!((a.ic - b.ic).abs() < 1e-12);
        assert!((a.rank_ic - b.rank_ic).abs() < 1e-12);
        assert!((a.icir.unwrap() - b.icir.unwrap()).abs() < 1e-12);
        assert!((a.rank_icir.unwrap() - b.rank_icir.unwrap()).abs() < 1e-12);
    }
}
