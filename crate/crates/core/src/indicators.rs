//! Technical indicators over daily price series.
//!
//! Every indicator returns an [`IndicatorSeries`] aligned with its input:
//! entries before the warm-up length are `None`.

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IndicatorError {
    #[error("{name} must be at least {min}, got {value}")]
    Window {
        name: &'static str,
        min: usize,
        value: usize,
    },
    #[error("MACD fast period {fast} must be shorter than slow period {slow}")]
    MacdPeriods { fast: usize, slow: usize },
    #[error("input series have different lengths")]
    LengthMismatch,
    #[error("Bollinger width must be non-negative, got {0}")]
    NegativeWidth(f64),
}

fn check_window(name: &'static str, value: usize, min: usize) -> Result<(), IndicatorError> {
    if value < min {
        return Err(IndicatorError::Window { name, min, value });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorSeries {
    pub values: Vec<Option<f64>>,
    /// Number of leading undefined entries.
    pub warmup: usize,
}

impl IndicatorSeries {
    fn from_values(values: Vec<Option<f64>>) -> Self {
        let warmup = values.iter().take_while(|v| v.is_none()).count();
        Self { values, warmup }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        self.values.get(i).copied().flatten()
    }

    pub fn last(&self) -> Option<f64> {
        self.values.last().copied().flatten()
    }
}

fn window_mean(w: &[f64]) -> f64 {
    w.iter().sum::<f64>() / w.len() as f64
}

/// Sample standard deviation of a window; exactly zero when all values are equal.
fn window_std(w: &[f64]) -> f64 {
    let first = w[0];
    if w.iter().all(|&x| x == first) {
        return 0.0;
    }
    let m = window_mean(w);
    let ss: f64 = w.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (w.len() - 1) as f64).sqrt()
}

fn rolling(prices: &[f64], n: usize, f: impl Fn(&[f64]) -> Option<f64>) -> IndicatorSeries {
    let mut values = vec![None; prices.len()];
    if n <= prices.len() {
        for end in n..=prices.len() {
            values[end - 1] = f(&prices[end - n..end]);
        }
    }
    IndicatorSeries::from_values(values)
}

pub fn sma(prices: &[f64], n: usize) -> Result<IndicatorSeries, IndicatorError> {
    check_window("SMA window", n, 1)?;
    Ok(rolling(prices, n, |w| Some(window_mean(w))))
}

/// Exponential moving average seeded with the SMA of the first `n` defined
/// values, smoothing factor `2 / (n + 1)`.
pub fn ema(prices: &[f64], n: usize) -> Result<IndicatorSeries, IndicatorError> {
    check_window("EMA window", n, 1)?;
    let opt: Vec<Option<f64>> = prices.iter().copied().map(Some).collect();
    Ok(ema_of(&opt, n))
}

/// EMA over a series whose defined values form a suffix.
fn ema_of(values: &[Option<f64>], n: usize) -> IndicatorSeries {
    let mut out = vec![None; values.len()];
    let start = values.iter().take_while(|v| v.is_none()).count();
    let defined: Vec<f64> = values[start..]
        .iter()
        .map(|v| v.unwrap_or(f64::NAN))
        .collect();
    if defined.len() >= n {
        let alpha = 2.0 / (n as f64 + 1.0);
        let mut e = window_mean(&defined[..n]);
        out[start + n - 1] = Some(e);
        for (i, &p) in defined.iter().enumerate().skip(n) {
            e += alpha * (p - e);
            out[start + i] = Some(e);
        }
    }
    IndicatorSeries::from_values(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Macd {
    pub line: IndicatorSeries,
    pub signal: IndicatorSeries,
    pub histogram: IndicatorSeries,
}

pub fn macd(
    prices: &[f64],
    fast: usize,
    slow: usize,
    signal: usize,
) -> Result<Macd, IndicatorError> {
    check_window("MACD fast period", fast, 1)?;
    check_window("MACD signal period", signal, 1)?;
    if fast >= slow {
        return Err(IndicatorError::MacdPeriods { fast, slow });
    }
    let f = ema(prices, fast)?;
    let s = ema(prices, slow)?;
    let line: Vec<Option<f64>> = f
        .values
        .iter()
        .zip(&s.values)
        .map(|(a, b)| Some((*a)? - (*b)?))
        .collect();
    let sig = ema_of(&line, signal);
    let hist: Vec<Option<f64>> = line
        .iter()
        .zip(&sig.values)
        .map(|(a, b)| Some((*a)? - (*b)?))
        .collect();
    Ok(Macd {
        line: IndicatorSeries::from_values(line),
        signal: sig,
        histogram: IndicatorSeries::from_values(hist),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bollinger {
    pub lower: IndicatorSeries,
    pub middle: IndicatorSeries,
    pub upper: IndicatorSeries,
}

/// Bollinger bands: SMA(n) plus and minus `k` sample standard deviations.
pub fn bollinger(prices: &[f64], n: usize, k: f64) -> Result<Bollinger, IndicatorError> {
    check_window("Bollinger window", n, 2)?;
    if k.is_nan() || k < 0.0 {
        return Err(IndicatorError::NegativeWidth(k));
    }
    let middle = sma(prices, n)?;
    let sd = rolling(prices, n, |w| Some(window_std(w)));
    let band = |sign: f64| {
        IndicatorSeries::from_values(
            middle
                .values
                .iter()
                .zip(&sd.values)
                .map(|(m, s)| Some((*m)? + sign * k * (*s)?))
                .collect(),
        )
    };
    Ok(Bollinger {
        lower: band(-1.0),
        upper: band(1.0),
        middle,
    })
}

/// Relative strength index with Wilder smoothing. The first average gain and
/// loss are the means of the first `n` price changes, so the warm-up is `n`.
/// A window with neither gains nor losses reads 50.
pub fn rsi(prices: &[f64], n: usize) -> Result<IndicatorSeries, IndicatorError> {
    check_window("RSI window", n, 1)?;
    let mut out = vec![None; prices.len()];
    if prices.len() > n {
        let diffs: Vec<f64> = prices.windows(2).map(|w| w[1] - w[0]).collect();
        let gain = |d: f64| d.max(0.0);
        let loss = |d: f64| (-d).max(0.0);
        let nf = n as f64;
        let mut ag = diffs[..n].iter().map(|&d| gain(d)).sum::<f64>() / nf;
        let mut al = diffs[..n].iter().map(|&d| loss(d)).sum::<f64>() / nf;
        out[n] = Some(rsi_value(ag, al));
        for (i, &d) in diffs.iter().enumerate().skip(n) {
            ag = (ag * (nf - 1.0) + gain(d)) / nf;
            al = (al * (nf - 1.0) + loss(d)) / nf;
            out[i + 1] = Some(rsi_value(ag, al));
        }
    }
    Ok(IndicatorSeries::from_values(out))
}

fn rsi_value(avg_gain: f64, avg_loss: f64) -> f64 {
    if avg_loss == 0.0 {
        if avg_gain == 0.0 {
            50.0
        } else {
            100.0
        }
    } else {
        100.0 - 100.0 / (1.0 + avg_gain / avg_loss)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kdj {
    pub rsv: IndicatorSeries,
    pub k: IndicatorSeries,
    pub d: IndicatorSeries,
    pub j: IndicatorSeries,
}

/// Stochastic KDJ. RSV uses the `n`-bar high/low window (50 for a flat
/// window); K and D are `1/smooth` exponential smoothings started from 50;
/// `J = 3K - 2D`.
pub fn kdj(
    high: &[f64],
    low: &[f64],
    close: &[f64],
    n: usize,
    smooth: usize,
) -> Result<Kdj, IndicatorError> {
    check_window("KDJ window", n, 1)?;
    check_window("KDJ smoothing", smooth, 1)?;
    if high.len() != low.len() || low.len() != close.len() {
        return Err(IndicatorError::LengthMismatch);
    }
    let len = close.len();
    let mut rsv = vec![None; len];
    let mut k = vec![None; len];
    let mut d = vec![None; len];
    let mut j = vec![None; len];
    let a = 1.0 / smooth as f64;
    let (mut kp, mut dp) = (50.0_f64, 50.0_f64);
    for i in (n.max(1) - 1)..len {
        let hh = high[i + 1 - n..=i]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let ll = low[i + 1 - n..=i]
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let r = if hh > ll {
            100.0 * (close[i] - ll) / (hh - ll)
        } else {
            50.0
        };
        kp += a * (r - kp);
        dp += a * (kp - dp);
        rsv[i] = Some(r);
        k[i] = Some(kp);
        d[i] = Some(dp);
        j[i] = Some(3.0 * kp - 2.0 * dp);
    }
    Ok(Kdj {
        rsv: IndicatorSeries::from_values(rsv),
        k: IndicatorSeries::from_values(k),
        d: IndicatorSeries::from_values(d),
        j: IndicatorSeries::from_values(j),
    })
}

/// Rolling z-score of the latest price against its `n`-bar window (sample
/// std). Windows with zero spread are undefined.
pub fn zscore(prices: &[f64], n: usize) -> Result<IndicatorSeries, IndicatorError> {
    check_window("z-score window", n, 2)?;
    Ok(rolling(prices, n, |w| {
        let s = window_std(w);
        (s > 0.0).then(|| (w[w.len() - 1] - window_mean(w)) / s)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sma_example() {
        let s = sma(&[1.0, 2.0, 3.0, 4.0, 5.0], 3).unwrap();
        assert_eq!(s.values, vec![None, None, Some(2.0), Some(3.0), Some(4.0)]);
        assert_eq!(s.warmup, 2);
    }

    #[test]
    fn window_longer_than_input_is_all_undefined() {
        let s = sma(&[1.0, 2.0], 5).unwrap();
        assert!(s.values.iter().all(Option::is_none));
        assert!(sma(&[1.0], 0).is_err());
    }

    #[test]
    fn constant_series_is_fixed_point() {
        let p = vec![5.0; 40];
        assert!(sma(&p, 5).unwrap().values[4..]
            .iter()
            .all(|v| *v == Some(5.0)));
        assert!(ema(&p, 7).unwrap().values[6..]
            .iter()
            .all(|v| *v == Some(5.0)));
        let m = macd(&p, 12, 26, 9).unwrap();
        for s in [&m.line, &m.signal, &m.histogram] {
            assert!(s.values.iter().flatten().all(|&v| v == 0.0));
        }
        let b = bollinger(&p, 20, 2.0).unwrap();
        assert_eq!(b.lower.get(30), Some(5.0));
        assert_eq!(b.upper.get(30), Some(5.0));
        assert!(zscore(&p, 10).unwrap().values.iter().all(Option::is_none));
        assert_eq!(rsi(&p, 14).unwrap().get(20), Some(50.0));
    }

    #[test]
    fn macd_warmups() {
        let p: Vec<f64> = (0..60).map(|i| 10.0 + (i as f64 * 0.3).sin()).collect();
        let m = macd(&p, 12, 26, 9).unwrap();
        assert_eq!(m.line.warmup, 25);
        assert_eq!(m.signal.warmup, 33);
        assert_eq!(m.histogram.warmup, 33);
        assert!(macd(&p, 26, 12, 9).is_err());
    }

    #[test]
    fn rsi_extremes() {
        let up: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let down: Vec<f64> = up.iter().rev().copied().collect();
        let r_up = rsi(&up, 14).unwrap();
        assert_eq!(r_up.warmup, 14);
        assert_eq!(r_up.last(), Some(100.0));
        assert_eq!(rsi(&down, 14).unwrap().last(), Some(0.0));
    }

    #[test]
    fn kdj_close_at_high_gives_rsv_100() {
        let high = [10.0, 11.0, 12.0];
        let low = [9.0, 9.5, 10.0];
        let close = [9.5, 10.0, 12.0];
        let k = kdj(&high, &low, &close, 3, 3).unwrap();
        assert_eq!(k.rsv.get(2), Some(100.0));
        assert_eq!(k.rsv.warmup, 2);
        assert!(kdj(&high, &low[..2], &close, 3, 3).is_err());
    }
}
