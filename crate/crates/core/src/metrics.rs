//! Return and risk metrics computed from a portfolio value series.
//!
//! All statistics use simple daily returns `r_i = (V_i - V_{i-1}) / V_{i-1}` and
//! the sample (n-1) standard deviation. Metrics that cannot be computed for a
//! series carry an explicit [`Undefined`] reason instead of NaN or infinity.

use std::fmt;

use serde::{Deserialize, Serialize};

pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("a value series needs at least 2 points, got {0}")]
    TooShort(usize),
    #[error("value at index {index} must be positive and finite, got {value}")]
    NonPositive { index: usize, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Undefined {
    /// Fewer than two returns, so no sample standard deviation exists.
    DegenerateSeries,
    ZeroVolatility,
    ZeroDrawdown,
    /// Fewer than two negative returns.
    InsufficientDownside,
    ZeroDownsideDeviation,
}

impl Undefined {
    pub fn describe(self) -> &'static str {
        match self {
            Undefined::DegenerateSeries => "undefined: fewer than two returns",
            Undefined::ZeroVolatility => "undefined: zero volatility",
            Undefined::ZeroDrawdown => "undefined: zero drawdown",
            Undefined::InsufficientDownside => "undefined: fewer than two negative returns",
            Undefined::ZeroDownsideDeviation => "undefined: zero downside deviation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Defined(f64),
    Undefined(Undefined),
}

impl Metric {
    pub fn value(self) -> Option<f64> {
        match self {
            Metric::Defined(v) => Some(v),
            Metric::Undefined(_) => None,
        }
    }

    fn scaled(self, k: f64) -> Metric {
        match self {
            Metric::Defined(v) => Metric::Defined(v * k),
            u => u,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Defined(v) => write!(f, "{v:.4}"),
            Metric::Undefined(_) => f.write_str("n/a"),
        }
    }
}

/// Portfolio values `V_0..V_T`, all positive.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSeries {
    values: Vec<f64>,
    periods_per_year: f64,
}

impl ValueSeries {
    pub fn new(values: Vec<f64>) -> Result<Self, MetricsError> {
        if values.len() < 2 {
            return Err(MetricsError::TooShort(values.len()));
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(MetricsError::NonPositive { index, value });
        }
        Ok(Self {
            values,
            periods_per_year: TRADING_DAYS_PER_YEAR,
        })
    }

    pub fn with_periods_per_year(mut self, periods: f64) -> Self {
        self.periods_per_year = periods;
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of return periods `T`.
    pub fn periods(&self) -> usize {
        self.values.len() - 1
    }

    pub fn returns(&self) -> Vec<f64> {
        self.values
            .windows(2)
            .map(|w| (w[1] - w[0]) / w[0])
            .collect()
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_std(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    Some((ss / (xs.len() - 1) as f64).sqrt())
}

/// Annualized rate of return: total return scaled by `periods_per_year / T`.
pub fn arr(series: &ValueSeries) -> f64 {
    let v = series.values();
    let total = (v[v.len() - 1] - v[0]) / v[0];
    total * series.periods_per_year / series.periods() as f64
}

/// Maximum drawdown of the cumulative return curve `V_i / V_0`, as a fraction.
pub fn mdd(series: &ValueSeries) -> f64 {
    let v0 = series.values()[0];
    let mut peak = 1.0_f64;
    let mut worst = 0.0_f64;
    for &v in series.values() {
        let r = v / v0;
        peak = peak.max(r);
        worst = worst.max((peak - r) / peak);
    }
    worst
}

pub fn volatility(series: &ValueSeries) -> Metric {
    match sample_std(&series.returns()) {
        Some(s) => Metric::Defined(s),
        None => Metric::Undefined(Undefined::DegenerateSeries),
    }
}

pub fn sharpe(series: &ValueSeries) -> Metric {
    let r = series.returns();
    match sample_std(&r) {
        None => Metric::Undefined(Undefined::DegenerateSeries),
        Some(0.0) => Metric::Undefined(Undefined::ZeroVolatility),
        Some(s) => Metric::Defined(mean(&r) / s),
    }
}

pub fn calmar(series: &ValueSeries) -> Metric {
    let dd = mdd(series);
    if dd == 0.0 {
        return Metric::Undefined(Undefined::ZeroDrawdown);
    }
    Metric::Defined(mean(&series.returns()) / dd)
}

pub fn sortino(series: &ValueSeries) -> Metric {
    let r = series.returns();
    let downside: Vec<f64> = r.iter().copied().filter(|&x| x < 0.0).collect();
    match sample_std(&downside) {
        None => Metric::Undefined(Undefined::InsufficientDownside),
        Some(0.0) => Metric::Undefined(Undefined::ZeroDownsideDeviation),
        Some(s) => Metric::Defined(mean(&r) / s),
    }
}

/// The six headline metrics in raw units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub arr: f64,
    pub sr: Metric,
    pub mdd: f64,
    pub sor: Metric,
    pub cr: Metric,
    pub vol: Metric,
}

/// One row of the metrics table: raw value, display value and a note.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub name: &'static str,
    pub raw: Metric,
    pub display: Metric,
    pub note: &'static str,
}

impl MetricsReport {
    pub fn compute(series: &ValueSeries) -> Self {
        Self {
            arr: arr(series),
            sr: sharpe(series),
            mdd: mdd(series),
            sor: sortino(series),
            cr: calmar(series),
            vol: volatility(series),
        }
    }

    /// Table order is ARR%, SR, MDD%, SOR, CR, VOL. ARR, MDD, SOR and CR are
    /// displayed multiplied by 100.
    pub fn rows(&self) -> Vec<MetricRow> {
        let row = |name, raw: Metric, k: f64, unit: &'static str| MetricRow {
            name,
            raw,
            display: raw.scaled(k),
            note: match raw {
                Metric::Undefined(u) => u.describe(),
                Metric::Defined(_) => unit,
            },
        };
        vec![
            row("ARR%", Metric::Defined(self.arr), 100.0, "percent"),
            row("SR", self.sr, 1.0, "ratio"),
            row("MDD%", Metric::Defined(self.mdd), 100.0, "percent"),
            row("SOR", self.sor, 100.0, "ratio x100"),
            row("CR", self.cr, 100.0, "ratio x100"),
            row("VOL", self.vol, 1.0, "daily std"),
        ]
    }

    /// CSV with header `metric,raw,display,note`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,raw,display,note\n");
        for r in self.rows() {
            let cell = |m: Metric| m.value().map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.name,
                cell(r.raw),
                cell(r.display),
                r.note
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vs(v: &[f64]) -> ValueSeries {
        ValueSeries::new(v.to_vec()).unwrap()
    }

    #[test]
    fn flat_series() {
        let s = vs(&[100.0; 10]);
        assert_eq!(arr(&s), 0.0);
        assert_eq!(mdd(&s), 0.0);
        assert_eq!(volatility(&s), Metric::Defined(0.0));
        assert_eq!(sharpe(&s), Metric::Undefined(Undefined::ZeroVolatility));
        assert_eq!(calmar(&s), Metric::Undefined(Undefined::ZeroDrawdown));
        assert_eq!(
            sortino(&s),
            Metric::Undefined(Undefined::InsufficientDownside)
        );
    }

    #[test]
    fn drawdown_of_peak_then_trough() {
        let s = vs(&[100.0, 120.0, 90.0, 110.0]);
        assert!((mdd(&s) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn monotone_increase_has_zero_drawdown_and_undefined_calmar() {
        let s = vs(&[1.0, 1.1, 1.2, 1.5]);
        assert_eq!(mdd(&s), 0.0);
        assert!(matches!(calmar(&s), Metric::Undefined(_)));
        assert!(arr(&s) > 0.0);
    }

    #[test]
    fn two_point_series_is_degenerate_for_std_metrics() {
        let s = vs(&[1.0, 1.1]);
        assert_eq!(sharpe(&s), Metric::Undefined(Undefined::DegenerateSeries));
        assert_eq!(
            volatility(&s),
            Metric::Undefined(Undefined::DegenerateSeries)
        );
    }

    #[test]
    fn invalid_series_rejected() {
        assert_eq!(ValueSeries::new(vec![1.0]), Err(MetricsError::TooShort(1)));
        assert!(matches!(
            ValueSeries::new(vec![1.0, 0.0]),
            Err(MetricsError::NonPositive { index: 1, .. })
        ));
    }

    #[test]
    fn csv_layout() {
        let csv = MetricsReport::compute(&vs(&[100.0; 3])).to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "metric,raw,display,note");
        assert_eq!(lines[1], "ARR%,0,0,percent");
        assert!(lines[2].starts_with("SR,,,undefined"));
        assert_eq!(lines.len(), 7);
    }
}
