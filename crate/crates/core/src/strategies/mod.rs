//! Rule-based trading strategies. They serve both as baselines and as tools
//! whose signals and explanations are fed to the agent's decision prompt.

mod tune;

pub use tune::{
    candidates, range_hash, tune, Evaluated, Objective, SearchSpace, TuneConfig, TuneResult,
    TunedParams,
};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{valid_actions, Action, Bar, EnvConfig, EnvState, StepResult, TradingEnv};
use crate::indicators::{self, IndicatorError};

pub type Params = BTreeMap<String, f64>;

#[derive(Debug, thiserror::Error)]
pub enum StrategyError {
    #[error("unknown strategy `{0}` (expected bh, macd, kdjrsi or zmr)")]
    UnknownStrategy(String),
    #[error("{strategy}: unknown parameter `{name}`")]
    UnknownParam {
        strategy: &'static str,
        name: String,
    },
    #[error("{strategy}: parameter `{name}` = {value} is invalid: {reason}")]
    InvalidParam {
        strategy: &'static str,
        name: String,
        value: f64,
        reason: &'static str,
    },
    #[error(transparent)]
    Indicator(#[from] IndicatorError),
    #[error("search space is empty")]
    EmptySearchSpace,
    #[error("search space parameter `{0}` has no values")]
    EmptyAxis(String),
    #[error("no candidate in the search space is feasible")]
    NoFeasibleCandidate,
    #[error("need at least 2 bars to evaluate a strategy")]
    TooFewBars,
    #[error(transparent)]
    Env(#[from] crate::data::EnvError),
    #[error("tuned parameters file: {0}")]
    ParamsFile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StrategyKind {
    #[serde(rename = "bh")]
    BuyAndHold,
    #[serde(rename = "macd")]
    Macd,
    #[serde(rename = "kdjrsi")]
    KdjRsi,
    #[serde(rename = "zmr")]
    ZScore,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::BuyAndHold,
        StrategyKind::Macd,
        StrategyKind::KdjRsi,
        StrategyKind::ZScore,
    ];

    pub fn id(self) -> &'static str {
        match self {
            StrategyKind::BuyAndHold => "bh",
            StrategyKind::Macd => "macd",
            StrategyKind::KdjRsi => "kdjrsi",
            StrategyKind::ZScore => "zmr",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            StrategyKind::BuyAndHold => "Buy and Hold",
            StrategyKind::Macd => "MACD Crossover",
            StrategyKind::KdjRsi => "KDJ with RSI Filter",
            StrategyKind::ZScore => "Z-score Mean Reversion",
        }
    }

    pub fn default_params(self) -> Params {
        let pairs: &[(&str, f64)] = match self {
            StrategyKind::BuyAndHold => &[],
            StrategyKind::Macd => &[("fast", 12.0), ("slow", 26.0), ("signal", 9.0)],
            StrategyKind::KdjRsi => &[
                ("kdj_n", 9.0),
                ("kdj_smooth", 3.0),
                ("rsi_n", 14.0),
                ("j_low", 20.0),
                ("j_high", 80.0),
                ("rsi_low", 30.0),
                ("rsi_high", 70.0),
            ],
            StrategyKind::ZScore => &[("n", 20.0), ("tau", 2.0)],
        };
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    /// Grid used when no search space is supplied.
    pub fn default_search_space(self) -> SearchSpace {
        let axes: &[(&str, &[f64])] = match self {
            StrategyKind::BuyAndHold => &[],
            StrategyKind::Macd => &[
                ("fast", &[8.0, 12.0]),
                ("slow", &[21.0, 26.0]),
                ("signal", &[5.0, 9.0]),
            ],
            StrategyKind::KdjRsi => &[
                ("kdj_n", &[9.0, 14.0]),
                ("rsi_n", &[7.0, 14.0]),
                ("rsi_low", &[30.0, 40.0]),
                ("rsi_high", &[60.0, 70.0]),
            ],
            StrategyKind::ZScore => &[("n", &[10.0, 20.0, 30.0]), ("tau", &[1.0, 1.5, 2.0])],
        };
        SearchSpace(
            axes.iter()
                .map(|(k, v)| (k.to_string(), v.to_vec()))
                .collect(),
        )
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for StrategyKind {
    type Err = StrategyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.id().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| StrategyError::UnknownStrategy(s.to_string()))
    }
}

/// What a strategy needs to know about the portfolio to respect position state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeContext {
    pub cash: f64,
    pub position: f64,
    pub price: f64,
}

impl From<&EnvState> for TradeContext {
    fn from(s: &EnvState) -> Self {
        Self {
            cash: s.cash,
            position: s.position,
            price: s.price,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    pub action: Action,
    pub explanation: String,
}

impl Signal {
    fn new(action: Action, explanation: String) -> Self {
        Self {
            action,
            explanation,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacdParams {
    pub fast: usize,
    pub slow: usize,
    pub signal: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdjRsiParams {
    pub kdj_n: usize,
    pub kdj_smooth: usize,
    pub rsi_n: usize,
    pub j_low: f64,
    pub j_high: f64,
    pub rsi_low: f64,
    pub rsi_high: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZScoreParams {
    pub n: usize,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    BuyAndHold,
    Macd(MacdParams),
    KdjRsi(KdjRsiParams),
    ZScore(ZScoreParams),
}

struct ParamReader<'a> {
    strategy: &'static str,
    merged: &'a Params,
}

impl ParamReader<'_> {
    fn float(&self, name: &str) -> f64 {
        self.merged[name]
    }

    fn window(&self, name: &str, min: usize) -> Result<usize, StrategyError> {
        let v = self.float(name);
        if v.fract() != 0.0 || v < min as f64 || !v.is_finite() {
            return Err(StrategyError::InvalidParam {
                strategy: self.strategy,
                name: name.to_string(),
                value: v,
                reason: if v.fract() != 0.0 {
                    "must be an integer"
                } else {
                    "too small"
                },
            });
        }
        Ok(v as usize)
    }

    fn positive(&self, name: &str) -> Result<f64, StrategyError> {
        let v = self.float(name);
        if !(v > 0.0 && v.is_finite()) {
            return Err(StrategyError::InvalidParam {
                strategy: self.strategy,
                name: name.to_string(),
                value: v,
                reason: "must be positive",
            });
        }
        Ok(v)
    }
}

impl Strategy {
    pub fn default_for(kind: StrategyKind) -> Self {
        Self::from_params(kind, &Params::new()).expect("default parameters are valid")
    }

    /// Builds a strategy from (possibly partial) parameters; missing ones take
    /// their defaults and unknown names are rejected.
    pub fn from_params(kind: StrategyKind, params: &Params) -> Result<Self, StrategyError> {
        let mut merged = kind.default_params();
        for (k, v) in params {
            if !merged.contains_key(k) {
                return Err(StrategyError::UnknownParam {
                    strategy: kind.id(),
                    name: k.clone(),
                });
            }
            merged.insert(k.clone(), *v);
        }
        let r = ParamReader {
            strategy: kind.id(),
            merged: &merged,
        };
        Ok(match kind {
            StrategyKind::BuyAndHold => Strategy::BuyAndHold,
            StrategyKind::Macd => {
                let p = MacdParams {
                    fast: r.window("fast", 1)?,
                    slow: r.window("slow", 2)?,
                    signal: r.window("signal", 1)?,
                };
                if p.fast >= p.slow {
                    return Err(StrategyError::InvalidParam {
                        strategy: kind.id(),
                        name: "fast".into(),
                        value: p.fast as f64,
                        reason: "must be below slow",
                    });
                }
                Strategy::Macd(p)
            }
            StrategyKind::KdjRsi => Strategy::KdjRsi(KdjRsiParams {
                kdj_n: r.window("kdj_n", 1)?,
                kdj_smooth: r.window("kdj_smooth", 1)?,
                rsi_n: r.window("rsi_n", 1)?,
                j_low: r.float("j_low"),
                j_high: r.float("j_high"),
                rsi_low: r.float("rsi_low"),
                rsi_high: r.float("rsi_high"),
            }),
            StrategyKind::ZScore => Strategy::ZScore(ZScoreParams {
                n: r.window("n", 2)?,
                tau: r.positive("tau")?,
            }),
        })
    }

    pub fn kind(&self) -> StrategyKind {
        match self {
            Strategy::BuyAndHold => StrategyKind::BuyAndHold,
            Strategy::Macd(_) => StrategyKind::Macd,
            Strategy::KdjRsi(_) => StrategyKind::KdjRsi,
            Strategy::ZScore(_) => StrategyKind::ZScore,
        }
    }

    pub fn params(&self) -> Params {
        let pairs: Vec<(&str, f64)> = match self {
            Strategy::BuyAndHold => vec![],
            Strategy::Macd(p) => vec![
                ("fast", p.fast as f64),
                ("slow", p.slow as f64),
                ("signal", p.signal as f64),
            ],
            Strategy::KdjRsi(p) => vec![
                ("kdj_n", p.kdj_n as f64),
                ("kdj_smooth", p.kdj_smooth as f64),
                ("rsi_n", p.rsi_n as f64),
                ("j_low", p.j_low),
                ("j_high", p.j_high),
                ("rsi_low", p.rsi_low),
                ("rsi_high", p.rsi_high),
            ],
            Strategy::ZScore(p) => vec![("n", p.n as f64), ("tau", p.tau)],
        };
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// Raw signals for every bar, before position constraints. Entry `t`
    /// depends only on `bars[..=t]`.
    pub fn raw_signals(&self, bars: &[Bar]) -> Vec<Signal> {
        let closes: Vec<f64> = bars.iter().map(|b| b.adj_close).collect();
        match self {
            Strategy::BuyAndHold => (0..bars.len())
                .map(|_| Signal::new(Action::Buy, "Buy and hold: stay fully invested.".into()))
                .collect(),
            Strategy::Macd(p) => macd_signals(&closes, p),
            Strategy::KdjRsi(p) => kdj_rsi_signals(bars, &closes, p),
            Strategy::ZScore(p) => zscore_signals(&closes, p),
        }
    }

    /// Signal for the last bar of `history`, respecting what the portfolio can do.
    pub fn signal(&self, history: &[Bar], ctx: &TradeContext) -> Signal {
        match self.raw_signals(history).pop() {
            Some(raw) => self.constrain(raw, ctx),
            None => Signal::new(Action::Hold, "No price history yet.".into()),
        }
    }

    fn constrain(&self, raw: Signal, ctx: &TradeContext) -> Signal {
        if let Strategy::BuyAndHold = self {
            return if ctx.position > 0.0 {
                Signal::new(
                    Action::Hold,
                    "Buy and hold: already invested, keep holding.".into(),
                )
            } else if valid_actions(ctx.cash, ctx.position, ctx.price).buy {
                Signal::new(
                    Action::Buy,
                    "Buy and hold: no position yet, buy now.".into(),
                )
            } else {
                Signal::new(
                    Action::Hold,
                    "Buy and hold: cash is below the share price, wait.".into(),
                )
            };
        }
        let allowed = valid_actions(ctx.cash, ctx.position, ctx.price);
        if allowed.contains(raw.action) {
            return raw;
        }
        let why = match raw.action {
            Action::Sell => "there is no position to sell",
            _ => "cash is insufficient to buy",
        };
        Signal::new(
            Action::Hold,
            format!(
                "{} The signal is {} but {why}, so HOLD.",
                raw.explanation, raw.action
            ),
        )
    }
}

fn crossed_above(prev_a: f64, prev_b: f64, a: f64, b: f64) -> bool {
    prev_a <= prev_b && a > b
}

fn crossed_below(prev_a: f64, prev_b: f64, a: f64, b: f64) -> bool {
    prev_a >= prev_b && a < b
}

fn macd_signals(closes: &[f64], p: &MacdParams) -> Vec<Signal> {
    let m = indicators::macd(closes, p.fast, p.slow, p.signal).expect("validated periods");
    (0..closes.len())
        .map(|t| {
            let cur = (m.line.get(t), m.signal.get(t));
            let prev = if t > 0 {
                (m.line.get(t - 1), m.signal.get(t - 1))
            } else {
                (None, None)
            };
            match (prev, cur) {
                ((Some(pl), Some(ps)), (Some(l), Some(s))) => {
                    if crossed_above(pl, ps, l, s) {
                        Signal::new(Action::Buy, format!(
                            "MACD line ({l:.4}) crossed above the signal line ({s:.4}), a bullish momentum signal."
                        ))
                    } else if crossed_below(pl, ps, l, s) {
                        Signal::new(Action::Sell, format!(
                            "MACD line ({l:.4}) crossed below the signal line ({s:.4}), a bearish momentum signal."
                        ))
                    } else {
                        let side = if l > s { "above" } else { "below" };
                        Signal::new(Action::Hold, format!(
                            "MACD line ({l:.4}) stays {side} the signal line ({s:.4}) with no crossover."
                        ))
                    }
                }
                _ => Signal::new(
                    Action::Hold,
                    format!(
                        "MACD({},{},{}) is warming up; not enough history for a crossover.",
                        p.fast, p.slow, p.signal
                    ),
                ),
            }
        })
        .collect()
}

fn kdj_rsi_signals(bars: &[Bar], closes: &[f64], p: &KdjRsiParams) -> Vec<Signal> {
    let high: Vec<f64> = bars.iter().map(|b| b.high).collect();
    let low: Vec<f64> = bars.iter().map(|b| b.low).collect();
    let close: Vec<f64> = bars.iter().map(|b| b.close).collect();
    let kdj = indicators::kdj(&high, &low, &close, p.kdj_n, p.kdj_smooth).expect("validated");
    let rsi = indicators::rsi(closes, p.rsi_n).expect("validated");
    (0..bars.len())
        .map(|t| {
            let (Some(k), Some(j), Some(r)) = (kdj.k.get(t), kdj.j.get(t), rsi.get(t)) else {
                return Signal::new(
                    Action::Hold,
                    "KDJ and RSI are warming up; not enough history.".into(),
                );
            };
            let prev = t
                .checked_sub(1)
                .and_then(|u| Some((kdj.k.get(u)?, kdj.j.get(u)?)));
            let up = prev.is_some_and(|(pk, pj)| crossed_above(pj, pk, j, k));
            let down = prev.is_some_and(|(pk, pj)| crossed_below(pj, pk, j, k));
            if (up || j < p.j_low) && r < p.rsi_low {
                let why = if up {
                    format!("J ({j:.2}) crossed above K ({k:.2})")
                } else {
                    format!("J ({j:.2}) is below {:.0}", p.j_low)
                };
                Signal::new(
                    Action::Buy,
                    format!(
                        "{why} and RSI ({r:.2}) is below {:.0}, an oversold reversal signal.",
                        p.rsi_low
                    ),
                )
            } else if (down || j > p.j_high) && r > p.rsi_high {
                let why = if down {
                    format!("J ({j:.2}) crossed below K ({k:.2})")
                } else {
                    format!("J ({j:.2}) is above {:.0}", p.j_high)
                };
                Signal::new(
                    Action::Sell,
                    format!(
                        "{why} and RSI ({r:.2}) is above {:.0}, an overbought reversal signal.",
                        p.rsi_high
                    ),
                )
            } else {
                Signal::new(
                    Action::Hold,
                    format!("K ({k:.2}), J ({j:.2}) and RSI ({r:.2}) give no confirmed reversal."),
                )
            }
        })
        .collect()
}

fn zscore_signals(closes: &[f64], p: &ZScoreParams) -> Vec<Signal> {
    let z = indicators::zscore(closes, p.n).expect("validated");
    (0..closes.len())
        .map(|t| match (z.get(t), t + 1 >= p.n) {
            (Some(z), _) if z < -p.tau => Signal::new(Action::Buy, format!(
                "Price is {:.2} standard deviations below its {}-day mean, oversold; expect reversion upward.",
                -z, p.n
            )),
            (Some(z), _) if z > p.tau => Signal::new(Action::Sell, format!(
                "Price is {z:.2} standard deviations above its {}-day mean, overbought; expect reversion downward.",
                p.n
            )),
            (Some(z), _) => Signal::new(Action::Hold, format!(
                "Z-score {z:.2} is within +/-{:.2} of the {}-day mean.",
                p.tau, p.n
            )),
            (None, true) => Signal::new(Action::Hold, format!(
                "The last {} prices are flat; z-score is undefined.",
                p.n
            )),
            (None, false) => Signal::new(Action::Hold, format!(
                "Z-score over {} days is warming up.",
                p.n
            )),
        })
        .collect()
}

/// Result of running a strategy through the environment.
#[derive(Debug, Clone)]
pub struct Backtest {
    /// Initial cash followed by the post-trade value of every day.
    pub values: Vec<f64>,
    pub steps: Vec<StepResult>,
    pub signals: Vec<Signal>,
}

pub fn backtest(
    strategy: &Strategy,
    bars: &[Bar],
    config: EnvConfig,
) -> Result<Backtest, StrategyError> {
    backtest_from(strategy, bars, 0, config)
}

/// Trades `bars[start..]` with indicators computed over all of `bars`, so
/// the earlier bars serve as warm-up history.
pub fn backtest_from(
    strategy: &Strategy,
    bars: &[Bar],
    start: usize,
    config: EnvConfig,
) -> Result<Backtest, StrategyError> {
    if start >= bars.len() {
        return Err(StrategyError::TooFewBars);
    }
    let mut env = TradingEnv::new(config, &bars[start..])?;
    let raw = strategy.raw_signals(bars).split_off(start);
    let mut state = env.reset();
    let mut values = vec![state.portfolio_value()];
    let mut steps = Vec::with_capacity(bars.len());
    let mut signals = Vec::with_capacity(bars.len());
    for sig in raw {
        let s = strategy.constrain(sig, &TradeContext::from(&state));
        let r = env.step(s.action).expect("steps never exceed bars");
        values.push(r.post_trade_value);
        state = r.next_state;
        steps.push(r);
        signals.push(s);
    }
    Ok(Backtest {
        values,
        steps,
        signals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn bars(prices: &[f64]) -> Vec<Bar> {
        let start = NaiveDate::from_ymd_opt(2023, 1, 2).unwrap();
        prices
            .iter()
            .enumerate()
            .map(|(i, &p)| Bar {
                date: start + chrono::Days::new(i as u64),
                open: p,
                high: p * 1.01,
                low: p * 0.99,
                close: p,
                adj_close: p,
                volume: 0.0,
            })
            .collect()
    }

    const FLAT: TradeContext = TradeContext {
        cash: 1000.0,
        position: 0.0,
        price: 10.0,
    };

    #[test]
    fn buy_and_hold_buys_once() {
        let s = Strategy::BuyAndHold;
        let b = bars(&[10.0; 6]);
        assert_eq!(s.signal(&b[..1], &FLAT).action, Action::Buy);
        let held = TradeContext {
            cash: 0.0,
            position: 99.0,
            price: 10.0,
        };
        assert_eq!(s.signal(&b, &held).action, Action::Hold);
    }

    #[test]
    fn macd_holds_while_warming_up() {
        let s = Strategy::default_for(StrategyKind::Macd);
        let sig = s.signal(&bars(&[10.0; 10]), &FLAT);
        assert_eq!(sig.action, Action::Hold);
        assert!(sig.explanation.contains("warming up"));
    }

    #[test]
    fn never_sells_without_position() {
        let prices: Vec<f64> = (0..80)
            .map(|i| 10.0 + (i as f64 / 5.0).sin() * 3.0)
            .collect();
        let b = bars(&prices);
        for kind in StrategyKind::ALL {
            let s = Strategy::default_for(kind);
            for t in 1..b.len() {
                assert_ne!(
                    s.signal(&b[..t], &FLAT).action,
                    Action::Sell,
                    "{kind} at {t}"
                );
            }
        }
    }

    #[test]
    fn zscore_example() {
        let mut prices = vec![10.0; 19];
        prices.push(5.0);
        let s = Strategy::ZScore(ZScoreParams { n: 20, tau: 2.0 });
        let sig = s.signal(&bars(&prices), &FLAT);
        assert_eq!(sig.action, Action::Buy);
        assert!(sig.explanation.contains("oversold"));
    }

    #[test]
    fn kdj_rsi_rising_market_never_buys() {
        let prices: Vec<f64> = (0..60).map(|i| 10.0 + i as f64).collect();
        let s = Strategy::default_for(StrategyKind::KdjRsi);
        let b = bars(&prices);
        for t in 1..b.len() {
            assert_ne!(s.signal(&b[..t], &FLAT).action, Action::Buy);
        }
    }

    #[test]
    fn params_validation() {
        let mut p = Params::new();
        p.insert("fast".into(), 30.0);
        assert!(Strategy::from_params(StrategyKind::Macd, &p).is_err());
        p.clear();
        p.insert("bogus".into(), 1.0);
        assert!(matches!(
            Strategy::from_params(StrategyKind::ZScore, &p),
            Err(StrategyError::UnknownParam { .. })
        ));
        p.clear();
        p.insert("n".into(), 2.5);
        assert!(Strategy::from_params(StrategyKind::ZScore, &p).is_err());
        let z = Strategy::default_for(StrategyKind::ZScore);
        assert_eq!(
            Strategy::from_params(StrategyKind::ZScore, &z.params()).unwrap(),
            z
        );
    }

    #[test]
    fn backtest_value_path_has_n_plus_one_points() {
        let b = bars(&[10.0, 11.0, 12.0]);
        let bt = backtest(&Strategy::BuyAndHold, &b, EnvConfig::default()).unwrap();
        assert_eq!(bt.values.len(), 4);
        let expected = 100_000.0 * 0.999 * 12.0 / 10.0;
        assert!((bt.values[3] - expected).abs() < 1e-6);
    }
}
