mod common;
mod oracles;

use common::{bars_from_closes, d, two_regime_closes};
use finagent_core::data::{Action, EnvConfig};
use finagent_core::metrics::{self, ValueSeries};
use finagent_core::strategies::{
    backtest, backtest_from, candidates, tune, Params, SearchSpace, Strategy, StrategyKind,
    TradeContext, TuneConfig,
};
use proptest::prelude::*;

/// Indices where the oracle MACD line crosses above its signal line.
fn oracle_up_crosses(closes: &[f64]) -> Vec<usize> {
    let [line, sig, _] = oracles::macd(closes, 12, 26, 9);
    (1..closes.len())
        .filter(|&t| match (line[t - 1], sig[t - 1], line[t], sig[t]) {
            (Some(pl), Some(ps), Some(l), Some(s)) => pl <= ps && l > s,
            _ => false,
        })
        .collect()
}

#[test]
fn macd_fires_once_on_two_regimes() {
    let closes = two_regime_closes();
    let bars = bars_from_closes(d("2023-01-02"), &closes);
    let expected = oracle_up_crosses(&closes);
    assert_eq!(expected.len(), 1, "{expected:?}");
    let signals = Strategy::default_for(StrategyKind::Macd).raw_signals(&bars);
    let buys: Vec<usize> = signals
        .iter()
        .enumerate()
        .filter(|(_, s)| s.action == Action::Buy)
        .map(|(i, _)| i)
        .collect();
    assert_eq!(buys, expected);
    assert!(expected[0] > 40);
}

fn zmr_space() -> SearchSpace {
    SearchSpace(
        [
            ("n".to_string(), vec![5.0, 10.0, 15.0]),
            ("tau".to_string(), vec![0.5, 1.0, 1.5]),
        ]
        .into_iter()
        .collect(),
    )
}

#[test]
fn tuner_equals_exhaustive_argmax() {
    let closes: Vec<f64> = (0..120)
        .map(|i| 100.0 + 8.0 * (i as f64 / 4.0).sin() + 0.1 * i as f64)
        .collect();
    let bars = bars_from_closes(d("2023-01-02"), &closes);
    let env = EnvConfig::default();
    let mut best: Option<(Params, f64)> = None;
    for n in [5.0, 10.0, 15.0] {
        for tau in [0.5, 1.0, 1.5] {
            let p: Params = [("n".to_string(), n), ("tau".to_string(), tau)]
                .into_iter()
                .collect();
            let bt = backtest(
                &Strategy::from_params(StrategyKind::ZScore, &p).unwrap(),
                &bars,
                env,
            )
            .unwrap();
            let score = metrics::arr(&ValueSeries::new(bt.values).unwrap());
            if best.as_ref().is_none_or(|(_, b)| score > *b) {
                best = Some((p, score));
            }
        }
    }
    let (bp, bs) = best.unwrap();
    let r = tune(
        StrategyKind::ZScore,
        &bars,
        env,
        &zmr_space(),
        TuneConfig::default(),
    )
    .unwrap();
    assert_eq!(r.best, bp);
    assert_eq!(r.score, bs);
    assert_eq!(r.evaluated.len(), 9);
}

#[test]
fn candidate_order_is_lexicographic_last_key_fastest() {
    let c = candidates(&zmr_space()).unwrap();
    assert_eq!(c.len(), 9);
    assert_eq!((c[0]["n"], c[0]["tau"]), (5.0, 0.5));
    assert_eq!((c[1]["n"], c[1]["tau"]), (5.0, 1.0));
    assert_eq!((c[8]["n"], c[8]["tau"]), (15.0, 1.5));
}

#[test]
fn unknown_params_are_rejected() {
    let p: Params = [("window".to_string(), 3.0)].into_iter().collect();
    assert!(Strategy::from_params(StrategyKind::ZScore, &p).is_err());
    let p: Params = [("n".to_string(), 2.5)].into_iter().collect();
    assert!(Strategy::from_params(StrategyKind::ZScore, &p).is_err());
    assert!("nope".parse::<StrategyKind>().is_err());
}

#[test]
fn buy_and_hold_buys_once() {
    let bars = bars_from_closes(d("2023-01-02"), &two_regime_closes());
    let bt = backtest(&Strategy::BuyAndHold, &bars, EnvConfig::default()).unwrap();
    let buys = bt
        .steps
        .iter()
        .filter(|s| s.executed == Action::Buy)
        .count();
    assert_eq!(buys, 1);
    assert!(bt.steps.iter().all(|s| !s.coerced));
    assert_eq!(bt.values.len(), bars.len() + 1);
}

#[test]
fn history_warms_up_indicators_before_the_first_trade() {
    let bars = bars_from_closes(d("2023-01-02"), &two_regime_closes());
    let macd = Strategy::default_for(StrategyKind::Macd);
    // Only the rising regime is traded, so the crossing must come from history.
    let start = 41;
    let with = backtest_from(&macd, &bars, start, EnvConfig::default()).unwrap();
    let without = backtest(&macd, &bars[start..], EnvConfig::default()).unwrap();
    assert_eq!(with.steps.len(), bars.len() - start);
    assert_eq!(
        with.steps.iter().position(|s| s.executed == Action::Buy),
        Some(42 - start)
    );
    assert!(without.steps.iter().all(|s| s.executed == Action::Hold));
    let same = backtest_from(&macd, &bars, 0, EnvConfig::default()).unwrap();
    assert_eq!(
        same.values,
        backtest(&macd, &bars, EnvConfig::default()).unwrap().values
    );
    assert!(backtest_from(&macd, &bars, bars.len(), EnvConfig::default()).is_err());
}

proptest! {
    #[test]
    fn signals_respect_position_and_are_deterministic(
        closes in prop::collection::vec(20.0f64..200.0, 30..80),
        cash in 0.0f64..500.0,
        position in prop_oneof![Just(0.0), 0.1f64..10.0],
    ) {
        let bars = bars_from_closes(d("2023-01-02"), &closes);
        let ctx = TradeContext { cash, position, price: closes[closes.len() - 1] };
        for kind in StrategyKind::ALL {
            let s = Strategy::default_for(kind);
            let sig = s.signal(&bars, &ctx);
            prop_assert!(!sig.explanation.is_empty());
            if position == 0.0 {
                prop_assert_ne!(sig.action, Action::Sell);
            }
            if cash < ctx.price {
                prop_assert_ne!(sig.action, Action::Buy);
            }
            prop_assert_eq!(s.signal(&bars, &ctx), sig);
            prop_assert_eq!(s.raw_signals(&bars).len(), bars.len());
        }
    }

    #[test]
    fn tuned_params_stay_in_space(closes in prop::collection::vec(50.0f64..150.0, 40..70)) {
        let bars = bars_from_closes(d("2023-01-02"), &closes);
        let space = zmr_space();
        let r = tune(StrategyKind::ZScore, &bars, EnvConfig::default(), &space, TuneConfig::default()).unwrap();
        for (k, v) in &r.best {
            prop_assert!(space.0[k].contains(v));
        }
    }
}
