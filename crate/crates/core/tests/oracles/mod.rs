//! Brute-force reference implementations. Each one is written from the
//! definition and deliberately avoids the structure of the library code
//! (closed forms instead of recursions, pairwise variances, all-pairs scans).
#![allow(dead_code)]

use finagent_core::data::Action;

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

fn mean(xs: &[f64]) -> f64 {
    let mut s = 0.0;
    for x in xs {
        s += x;
    }
    s / xs.len() as f64
}

/// Sample variance from pairwise squared differences:
/// `sum_{i<j} (x_i - x_j)^2 / (n (n - 1))`.
pub fn pairwise_sample_std(xs: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let mut acc = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            acc += (xs[i] - xs[j]).powi(2);
        }
    }
    Some((acc / (n * (n - 1)) as f64).sqrt())
}

// Metrics

pub fn returns(v: &[f64]) -> Vec<f64> {
    (1..v.len()).map(|i| v[i] / v[i - 1] - 1.0).collect()
}

pub fn arr(v: &[f64]) -> f64 {
    let t = (v.len() - 1) as f64;
    (v[v.len() - 1] / v[0] - 1.0) * (252.0 / t)
}

pub fn vol(v: &[f64]) -> Option<f64> {
    pairwise_sample_std(&returns(v))
}

pub fn sharpe(v: &[f64]) -> Option<f64> {
    let r = returns(v);
    let s = pairwise_sample_std(&r)?;
    (s != 0.0).then(|| mean(&r) / s)
}

pub fn sortino(v: &[f64]) -> Option<f64> {
    let r = returns(v);
    let down: Vec<f64> = r.iter().copied().filter(|x| *x < 0.0).collect();
    let s = pairwise_sample_std(&down)?;
    (s != 0.0).then(|| mean(&r) / s)
}

/// All pairs `i <= j` over cumulative wealth `V_k / V_0`, with the peak taken
/// as the cumulative wealth at `i`.
pub fn mdd_all_pairs(v: &[f64]) -> f64 {
    let w: Vec<f64> = v.iter().map(|x| x / v[0]).collect();
    let mut worst = 0.0_f64;
    for i in 0..w.len() {
        for j in i..w.len() {
            worst = worst.max((w[i] - w[j]) / w[i]);
        }
    }
    worst
}

pub fn calmar(v: &[f64]) -> Option<f64> {
    let d = mdd_all_pairs(v);
    (d != 0.0).then(|| mean(&returns(v)) / d)
}

// Indicators

pub fn sma(p: &[f64], n: usize) -> Vec<Option<f64>> {
    (0..p.len())
        .map(|t| (t + 1 >= n).then(|| mean(&p[t + 1 - n..=t])))
        .collect()
}

/// Closed form of an exponential smoothing with factor `a`, seeded by
/// `seed` at index `s`: `(1-a)^(t-s) seed + sum_{j=s+1..t} a (1-a)^(t-j) x_j`.
fn smoothed_closed_form(x: &[f64], s: usize, seed: f64, a: f64, t: usize) -> f64 {
    let mut v = (1.0 - a).powi((t - s) as i32) * seed;
    for (j, xj) in x.iter().enumerate().take(t + 1).skip(s + 1) {
        v += a * (1.0 - a).powi((t - j) as i32) * xj;
    }
    v
}

/// EMA over the defined suffix of `x`, seeded with the SMA of its first `n`
/// defined values.
pub fn ema_opt(x: &[Option<f64>], n: usize) -> Vec<Option<f64>> {
    let start = x.iter().position(Option::is_some).unwrap_or(x.len());
    let vals: Vec<f64> = x[start..].iter().map(|v| v.unwrap()).collect();
    let mut out = vec![None; x.len()];
    if vals.len() < n {
        return out;
    }
    let seed = mean(&vals[..n]);
    let a = 2.0 / (n as f64 + 1.0);
    for t in (n - 1)..vals.len() {
        out[start + t] = Some(smoothed_closed_form(&vals, n - 1, seed, a, t));
    }
    out
}

pub fn ema(p: &[f64], n: usize) -> Vec<Option<f64>> {
    ema_opt(&p.iter().map(|v| Some(*v)).collect::<Vec<_>>(), n)
}

fn sub(a: &[Option<f64>], b: &[Option<f64>]) -> Vec<Option<f64>> {
    a.iter().zip(b).map(|(x, y)| Some((*x)? - (*y)?)).collect()
}

/// (line, signal, histogram)
pub fn macd(p: &[f64], fast: usize, slow: usize, signal: usize) -> [Vec<Option<f64>>; 3] {
    let line = sub(&ema(p, fast), &ema(p, slow));
    let sig = ema_opt(&line, signal);
    let hist = sub(&line, &sig);
    [line, sig, hist]
}

/// (lower, middle, upper); a window of identical values has zero spread.
pub fn bollinger(p: &[f64], n: usize, k: f64) -> [Vec<Option<f64>>; 3] {
    let mid = sma(p, n);
    let sd: Vec<Option<f64>> = (0..p.len())
        .map(|t| {
            (t + 1 >= n).then(|| {
                let w = &p[t + 1 - n..=t];
                if w.iter().all(|x| *x == w[0]) {
                    0.0
                } else {
                    pairwise_sample_std(w).unwrap()
                }
            })
        })
        .collect();
    let band = |sign: f64| -> Vec<Option<f64>> {
        mid.iter()
            .zip(&sd)
            .map(|(m, s)| Some((*m)? + sign * k * (*s)?))
            .collect()
    };
    [band(-1.0), mid.clone(), band(1.0)]
}

/// Wilder RSI in closed form: the averages are smoothings with factor `1/n`
/// seeded by the mean of the first `n` changes.
pub fn rsi(p: &[f64], n: usize) -> Vec<Option<f64>> {
    let mut out = vec![None; p.len()];
    if p.len() <= n {
        return out;
    }
    let d: Vec<f64> = (1..p.len()).map(|i| p[i] - p[i - 1]).collect();
    let gains: Vec<f64> = d.iter().map(|x| if *x > 0.0 { *x } else { 0.0 }).collect();
    let losses: Vec<f64> = d.iter().map(|x| if *x < 0.0 { -*x } else { 0.0 }).collect();
    let a = 1.0 / n as f64;
    let g0 = mean(&gains[..n]);
    let l0 = mean(&losses[..n]);
    for t in (n - 1)..d.len() {
        let g = smoothed_closed_form(&gains, n - 1, g0, a, t);
        let l = smoothed_closed_form(&losses, n - 1, l0, a, t);
        out[t + 1] = Some(if l == 0.0 {
            if g == 0.0 {
                50.0
            } else {
                100.0
            }
        } else {
            100.0 * g / (g + l)
        });
    }
    out
}

/// (rsv, k, d, j), with K and D smoothed from 50 by factor `1/smooth`.
pub fn kdj(h: &[f64], l: &[f64], c: &[f64], n: usize, smooth: usize) -> [Vec<Option<f64>>; 4] {
    let len = c.len();
    let mut rsv = vec![None; len];
    let mut raw = Vec::new();
    for t in (n - 1)..len {
        let hh = h[t + 1 - n..=t].iter().cloned().reduce(f64::max).unwrap();
        let ll = l[t + 1 - n..=t].iter().cloned().reduce(f64::min).unwrap();
        let r = if hh > ll {
            (c[t] - ll) / (hh - ll) * 100.0
        } else {
            50.0
        };
        rsv[t] = Some(r);
        raw.push(r);
    }
    let a = 1.0 / smooth as f64;
    // Prepend the seed so index 0 of the smoothed input is the initial 50.
    let with_seed =
        |xs: &[f64]| -> Vec<f64> { std::iter::once(50.0).chain(xs.iter().copied()).collect() };
    let kx = with_seed(&raw);
    let ks: Vec<f64> = (1..kx.len())
        .map(|t| smoothed_closed_form(&kx, 0, 50.0, a, t))
        .collect();
    let dx = with_seed(&ks);
    let ds: Vec<f64> = (1..dx.len())
        .map(|t| smoothed_closed_form(&dx, 0, 50.0, a, t))
        .collect();
    let mut k = vec![None; len];
    let mut d = vec![None; len];
    let mut j = vec![None; len];
    for (i, t) in ((n - 1)..len).enumerate() {
        k[t] = Some(ks[i]);
        d[t] = Some(ds[i]);
        j[t] = Some(3.0 * ks[i] - 2.0 * ds[i]);
    }
    [rsv, k, d, j]
}

pub fn zscore(p: &[f64], n: usize) -> Vec<Option<f64>> {
    (0..p.len())
        .map(|t| {
            if t + 1 < n {
                return None;
            }
            let w = &p[t + 1 - n..=t];
            if w.iter().all(|x| *x == w[0]) {
                return None;
            }
            let s = pairwise_sample_std(w)?;
            Some((p[t] - mean(w)) / s)
        })
        .collect()
}

/// First mismatch between two aligned series, as `(index, expected, got)`.
pub fn series_mismatch(
    expected: &[Option<f64>],
    got: &[Option<f64>],
    tol: f64,
) -> Option<(usize, Option<f64>, Option<f64>)> {
    if expected.len() != got.len() {
        return Some((usize::MAX, None, None));
    }
    expected
        .iter()
        .zip(got)
        .enumerate()
        .find(|(_, (e, g))| match (e, g) {
            (Some(a), Some(b)) => !rel_close(*a, *b, tol),
            (None, None) => false,
            _ => true,
        })
        .map(|(i, (e, g))| (i, *e, *g))
}

// Environment

/// Replays all-in/all-out orders by share count at each day's close. Orders
/// that are not feasible are treated as HOLD. Returns the final post-trade
/// value and the number of executed trades.
pub fn replay(prices: &[f64], actions: &[Action], cash0: f64, fee: f64) -> (f64, usize) {
    let mut cash = cash0;
    let mut shares = 0.0;
    let mut trades = 0;
    let mut value = cash0;
    for (p, a) in prices.iter().zip(actions) {
        match a {
            Action::Buy if cash >= *p => {
                shares += cash * (1.0 - fee) / p;
                cash = 0.0;
                trades += 1;
            }
            Action::Sell if shares > 0.0 => {
                cash += shares * p * (1.0 - fee);
                shares = 0.0;
                trades += 1;
            }
            _ => {}
        }
        value = cash + shares * p;
    }
    (value, trades)
}

/// Fee-free value as initial cash times the product of price ratios over the
/// intervals during which the position was held.
pub fn held_interval_product(prices: &[f64], actions: &[Action], cash0: f64) -> f64 {
    let mut invested_since: Option<usize> = None;
    let mut wealth = cash0;
    for (t, a) in actions.iter().enumerate() {
        match (a, invested_since) {
            (Action::Buy, None) if wealth >= prices[t] => invested_since = Some(t),
            (Action::Sell, Some(s)) => {
                wealth *= prices[t] / prices[s];
                invested_since = None;
            }
            _ => {}
        }
    }
    if let Some(s) = invested_since {
        wealth *= prices[prices.len() - 1] / prices[s];
    }
    wealth
}

// Memory

/// Indices of `records` (embedding, date, id) sorted by cosine to `q`,
/// descending, restricted to dates before `before`; ties by later date then
/// smaller id.
pub fn cosine_rank<D: Ord + Copy>(
    records: &[(Vec<f64>, D, String)],
    q: &[f64],
    before: D,
) -> Vec<(usize, f64)> {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let qn = norm(q);
    let mut scored: Vec<(usize, f64)> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.1 < before)
        .map(|(i, r)| {
            let dot: f64 = r.0.iter().zip(q).map(|(a, b)| a * b).sum();
            (i, dot / (norm(&r.0) * qn))
        })
        .collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then(records[b.0].1.cmp(&records[a.0].1))
            .then(records[a.0].2.cmp(&records[b.0].2))
    });
    scored
}
