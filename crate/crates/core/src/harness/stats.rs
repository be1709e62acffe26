use std::collections::BTreeMap;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// One line of a results file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResultRow {
    pub t: u64,
    pub mean_cum_regret: f64,
    pub ci_halfwidth: f64,
    pub n_reps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResult {
    pub rows: Vec<ResultRow>,
    pub tail_len: usize,
    /// `None` when the tail of the mean path is not strictly positive.
    pub tail_slope: Option<f64>,
    /// Mean regret per tree level, summed over the level's nodes.
    pub level_regret: BTreeMap<u32, f64>,
}

/// Sample mean and the half-width of the two-sided 95% t-interval.
pub fn mean_ci(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("degrees of freedom are positive")
        .inverse_cdf(0.975);
    (mean, t * (var / n as f64).sqrt())
}

/// Mean path with confidence half-widths; `paths[r][i]` is repetition `r`
/// at round `schedule[i]`.
pub fn aggregate(schedule: &[u64], paths: &[&[f64]], tail_len: usize) -> Result<AggregateResult> {
    if paths.is_empty() {
        return Err(Error::NoRuns);
    }
    if let Some(p) = paths.iter().find(|p| p.len() != schedule.len()) {
        return Err(Error::InvalidConfig(format!(
            "path has {} checkpoints, schedule has {}",
            p.len(),
            schedule.len()
        )));
    }
    let mut column = vec![0.0; paths.len()];
    let rows: Vec<ResultRow> = schedule
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            for (c, p) in column.iter_mut().zip(paths) {
                *c = p[i];
            }
            let (mean, hw) = mean_ci(&column);
            ResultRow {
                t,
                mean_cum_regret: mean,
                ci_halfwidth: hw,
                n_reps: paths.len(),
            }
        })
        .collect();
    let series: Vec<(u64, f64)> = rows.iter().map(|r| (r.t, r.mean_cum_regret)).collect();
    Ok(AggregateResult {
        tail_slope: fit_tail_slope(&series, tail_len).ok(),
        rows,
        tail_len,
        level_regret: BTreeMap::new(),
    })
}

/// Least-squares slope of `log R_t` on `log t` over the points with
/// `t > t_last - tail_len`.
pub fn fit_tail_slope(series: &[(u64, f64)], tail_len: usize) -> Result<f64> {
    let last = series.last().ok_or(Error::SlopeUndefined)?.0;
    let start = last.saturating_sub(tail_len as u64);
    let window: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, _)| *t > start)
        .map(|&(t, r)| ((t as f64).ln(), r))
        .collect();
    if window.len() < 2 || window.iter().any(|&(_, r)| !(r > 0.0 && r.is_finite())) {
        return Err(Error::SlopeUndefined);
    }
    let n = window.len() as f64;
    let pts: Vec<(f64, f64)> = window.iter().map(|&(x, r)| (x, r.ln())).collect();
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::SlopeUndefined);
    }
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power_law(c: f64, a: f64, n: u64) -> Vec<(u64, f64)> {
        (1..=n).map(|t| (t, c * (t as f64).powf(a))).collect()
    }

    #[test]
    fn exact_power_laws() {
        let s = fit_tail_slope(&power_law(3.0, 1.0, 100_000), 10_000).unwrap();
        assert!((s - 1.0).abs() < 1e-9);
        let s = fit_tail_slope(&power_law(0.7, 0.5, 100_000), 10_000).unwrap();
        assert!((s - 0.5).abs() < 1e-9);
    }

    #[test]
    fn slope_needs_positive_tail() {
        let mut series = power_law(1.0, 0.5, 100);
        series[95].1 = 0.0;
        assert!(matches!(
            fit_tail_slope(&series, 10),
            Err(Error::SlopeUndefined)
        ));
        assert!(fit_tail_slope(&series, 4).is_ok());
    }

    #[test]
    fn single_repetition_has_zero_width() {
        let agg = aggregate(&[1, 2, 3], &[&[0.1, 0.2, 0.4]], 2).unwrap();
        assert!(agg
            .rows
            .iter()
            .all(|r| r.ci_halfwidth == 0.0 && r.n_reps == 1));
    }

    #[test]
    fn no_runs_is_an_error() {
        let err = aggregate(&[1, 2], &[], 2).unwrap_err();
        assert_eq!(err.to_string(), "no runs");
    }

    #[test]
    fn t_interval_matches_reference() {
        // n = 30: t_{0.975, 29} = 2.045229642132703
        let values: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let (mean, hw) = mean_ci(&values);
        let sd = (values.iter().map(|v| (v - 14.5f64).powi(2)).sum::<f64>() / 29.0).sqrt();
        assert_eq!(mean, 14.5);
        assert!((hw - 2.045229642132703 * sd / 30f64.sqrt()).abs() < 1e-9);
        // n = 2: t_{0.975, 1} = 12.706204736432095
        let (_, hw) = mean_ci(&[1.0, 3.0]);
        assert!((hw - 12.706204736432095 * 2f64.sqrt() / 2f64.sqrt()).abs() < 1e-6);
    }
}
