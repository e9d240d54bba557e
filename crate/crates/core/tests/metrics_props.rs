mod oracles;

use finagent_core::metrics::{self, Metric, MetricsReport, Undefined, ValueSeries};
use oracles::rel_close;
use proptest::prelude::*;

fn series() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1.0f64..1000.0, 2..60)
}

fn close_metric(m: Metric, oracle: Option<f64>) -> bool {
    match (m.value(), oracle) {
        (Some(a), Some(b)) => rel_close(a, b, 1e-9),
        (None, None) => true,
        _ => false,
    }
}

proptest! {
    #[test]
    fn matches_brute_force(v in series()) {
        let s = ValueSeries::new(v.clone()).unwrap();
        prop_assert!(rel_close(metrics::arr(&s), oracles::arr(&v), 1e-9));
        prop_assert_eq!(metrics::mdd(&s), oracles::mdd_all_pairs(&v));
        prop_assert!(close_metric(metrics::volatility(&s), oracles::vol(&v)));
        prop_assert!(close_metric(metrics::sharpe(&s), oracles::sharpe(&v)));
        prop_assert!(close_metric(metrics::sortino(&s), oracles::sortino(&v)));
        prop_assert!(close_metric(metrics::calmar(&s), oracles::calmar(&v)));
    }

    #[test]
    fn scale_invariant(v in series(), k in 0.01f64..100.0) {
        let a = MetricsReport::compute(&ValueSeries::new(v.clone()).unwrap());
        let b = MetricsReport::compute(&ValueSeries::new(v.iter().map(|x| x * k).collect()).unwrap());
        prop_assert!(rel_close(a.arr, b.arr, 1e-9));
        prop_assert!((a.mdd - b.mdd).abs() <= 1e-12);
        for (x, y) in [(a.sr, b.sr), (a.sor, b.sor), (a.cr, b.cr), (a.vol, b.vol)] {
            match (x.value(), y.value()) {
                (Some(p), Some(q)) => prop_assert!(rel_close(p, q, 1e-6), "{p} vs {q}"),
                (None, None) => {}
                // Rescaling can turn an exactly-zero spread into rounding noise.
                _ => {}
            }
        }
    }

    #[test]
    fn bounds_and_signs(v in series()) {
        let s = ValueSeries::new(v.clone()).unwrap();
        let r = MetricsReport::compute(&s);
        prop_assert!((0.0..1.0).contains(&r.mdd));
        prop_assert!(r.vol.value().is_none_or(|x| x >= 0.0));
        let delta = v[v.len() - 1] - v[0];
        prop_assert_eq!(r.arr.signum() * (r.arr != 0.0) as i32 as f64, delta.signum() * (delta != 0.0) as i32 as f64);
        prop_assert_eq!(MetricsReport::compute(&s), r);
    }
}

#[test]
fn undefined_cases_carry_reasons() {
    let flat = ValueSeries::new(vec![100.0; 5]).unwrap();
    let r = MetricsReport::compute(&flat);
    assert_eq!(r.sr, Metric::Undefined(Undefined::ZeroVolatility));
    assert_eq!(r.cr, Metric::Undefined(Undefined::ZeroDrawdown));
    assert_eq!(r.sor, Metric::Undefined(Undefined::InsufficientDownside));
    let two = ValueSeries::new(vec![100.0, 110.0]).unwrap();
    assert_eq!(
        metrics::volatility(&two),
        Metric::Undefined(Undefined::DegenerateSeries)
    );
    assert!(ValueSeries::new(vec![1.0]).is_err());
    assert!(ValueSeries::new(vec![1.0, 0.0]).is_err());
}

#[test]
fn csv_golden() {
    let s = ValueSeries::new(vec![100.0, 110.0, 99.0, 120.0]).unwrap();
    let expected = "\
metric,raw,display,note
ARR%,16.8,1680,percent
SR,0.4472044689712691,0.4472044689712691,ratio
MDD%,0.10000000000000007,10.000000000000007,percent
SOR,,,undefined: fewer than two negative returns
CR,0.7070707070707065,70.70707070707066,ratio x100
VOL,0.15810904320728808,0.15810904320728808,daily std
";
    assert_eq!(MetricsReport::compute(&s).to_csv(), expected);
}
