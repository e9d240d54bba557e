mod oracles;

use finagent_core::indicators as ind;
use oracles::series_mismatch;
use proptest::prelude::*;

const TOL: f64 = 1e-9;

fn prices() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(10.0f64..200.0, 30..60)
}

proptest! {
    #[test]
    fn sma_ema_zscore_match_oracles(p in prices(), n in 2usize..20) {
        prop_assert_eq!(series_mismatch(&oracles::sma(&p, n), &ind::sma(&p, n).unwrap().values, TOL), None);
        prop_assert_eq!(series_mismatch(&oracles::ema(&p, n), &ind::ema(&p, n).unwrap().values, TOL), None);
        prop_assert_eq!(series_mismatch(&oracles::zscore(&p, n), &ind::zscore(&p, n).unwrap().values, TOL), None);
    }

    #[test]
    fn rsi_in_range(p in prices(), n in 2usize..20) {
        let r = ind::rsi(&p, n).unwrap();
        prop_assert_eq!(r.warmup, n);
        prop_assert!(r.values.iter().flatten().all(|v| (0.0..=100.0).contains(v)));
    }

    #[test]
    fn bollinger_ordering(p in prices(), n in 2usize..20, k in 0.0f64..4.0) {
        let b = ind::bollinger(&p, n, k).unwrap();
        for t in 0..p.len() {
            if let (Some(l), Some(m), Some(u)) = (b.lower.get(t), b.middle.get(t), b.upper.get(t)) {
                prop_assert!(l <= m && m <= u);
            }
        }
    }

    #[test]
    fn kdj_k_and_d_bounded(p in prices(), n in 1usize..15, s in 1usize..5) {
        let h: Vec<f64> = p.iter().map(|x| x * 1.02).collect();
        let l: Vec<f64> = p.iter().map(|x| x * 0.98).collect();
        let r = ind::kdj(&h, &l, &p, n, s).unwrap();
        for v in r.k.values.iter().chain(&r.d.values).flatten() {
            prop_assert!((0.0..=100.0).contains(v));
        }
        prop_assert_eq!(r.k.warmup, n - 1);
    }

    #[test]
    fn shift_equivariance(p in prices(), c in -5.0f64..50.0, n in 2usize..15) {
        let q: Vec<f64> = p.iter().map(|x| x + c).collect();
        let shifted = |a: &[Option<f64>], b: &[Option<f64>], by: f64| {
            a.iter().zip(b).all(|(x, y)| match (x, y) {
                (Some(x), Some(y)) => (x + by - y).abs() <= 1e-8 * (1.0 + y.abs()),
                (None, None) => true,
                _ => false,
            })
        };
        prop_assert!(shifted(&ind::sma(&p, n).unwrap().values, &ind::sma(&q, n).unwrap().values, c));
        prop_assert!(shifted(&ind::ema(&p, n).unwrap().values, &ind::ema(&q, n).unwrap().values, c));
        prop_assert!(shifted(&ind::bollinger(&p, n, 2.0).unwrap().middle.values, &ind::bollinger(&q, n, 2.0).unwrap().middle.values, c));
        prop_assert!(shifted(&ind::rsi(&p, n).unwrap().values, &ind::rsi(&q, n).unwrap().values, 0.0));
        let zp = ind::zscore(&p, n).unwrap();
        let zq = ind::zscore(&q, n).unwrap();
        for (a, b) in zp.values.iter().zip(&zq.values) {
            if let (Some(a), Some(b)) = (a, b) {
                prop_assert!((a - b).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn alignment_and_warmup(p in prices(), n in 1usize..25) {
        for s in [ind::sma(&p, n).unwrap(), ind::ema(&p, n).unwrap()] {
            prop_assert_eq!(s.len(), p.len());
            prop_assert_eq!(s.warmup, n - 1);
            prop_assert!(s.values[s.warmup..].iter().all(Option::is_some));
        }
    }
}

#[test]
fn macd_warmup_is_slow_plus_signal() {
    let p: Vec<f64> = (0..60)
        .map(|i| 100.0 + (i as f64 * 0.7).sin() * 5.0)
        .collect();
    let m = ind::macd(&p, 12, 26, 9).unwrap();
    assert_eq!(m.line.warmup, 25);
    assert_eq!(m.signal.warmup, 33);
    assert_eq!(m.histogram.warmup, 33);
    assert!(ind::macd(&p, 26, 12, 9).is_err());
}

#[test]
fn flat_windows() {
    let p = vec![50.0; 20];
    assert!(ind::zscore(&p, 5)
        .unwrap()
        .values
        .iter()
        .all(Option::is_none));
    assert_eq!(ind::rsi(&p, 5).unwrap().last(), Some(50.0));
    let k = ind::kdj(&p, &p, &p, 5, 3).unwrap();
    assert_eq!(k.rsv.last(), Some(50.0));
    assert_eq!(k.j.last(), Some(50.0));
    let b = ind::bollinger(&p, 5, 2.0).unwrap();
    assert_eq!(b.lower.last(), b.upper.last());
}
