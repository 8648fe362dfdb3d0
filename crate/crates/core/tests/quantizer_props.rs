use oasis::quantizer::{symbol_limit, QuantizerState};
use proptest::prelude::*;

fn bits() -> impl Strategy<Value = u32> {
    prop::sample::select(vec![2u32, 3, 4, 5, 6, 7, 8])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn roundtrip_error_within_half_step(n in bits(), max in 0.01f64..100.0, t in -1.0f64..=1.0) {
        let q = QuantizerState::with_default_momentum(n, max).unwrap();
        let z = t * max;
        let s = q.quantize(&[z]).unwrap();
        let back = q.dequantize(&s).unwrap()[0];
        let step = q.q_scale().unwrap();
        prop_assert!((back - z).abs() <= step / 2.0 + 1e-12 * max);
    }

    #[test]
    fn antisymmetric(n in bits(), max in 0.01f64..100.0, z in -200.0f64..200.0) {
        let q = QuantizerState::with_default_momentum(n, max).unwrap();
        let a = q.quantize(&[z, -z]).unwrap();
        prop_assert_eq!(a[0], -a[1]);
    }

    #[test]
    fn clamps_outside_range(n in bits(), max in 0.01f64..100.0, excess in 1.0f64..1e6) {
        let q = QuantizerState::with_default_momentum(n, max).unwrap();
        let l = symbol_limit(n) as i8;
        prop_assert_eq!(q.quantize(&[max * excess, -max * excess]).unwrap(), vec![l, -l]);
    }

    #[test]
    fn monotone(n in bits(), max in 0.01f64..100.0, a in -150.0f64..150.0, b in -150.0f64..150.0) {
        let q = QuantizerState::with_default_momentum(n, max).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let s = q.quantize(&[lo, hi]).unwrap();
        prop_assert!(s[0] <= s[1]);
    }

    #[test]
    fn range_update_is_convex_blend(
        m in 0.0f64..0.999,
        prev in 0.0f64..50.0,
        batch in prop::collection::vec(-50.0f64..50.0, 1..40),
    ) {
        let q = QuantizerState::new(4, prev, m).unwrap();
        let peak = batch.iter().fold(0.0f64, |p, v| p.max(v.abs()));
        let next = q.update_range(&batch).unwrap().range_max();
        prop_assert!(next >= prev.min(peak) - 1e-12 && next <= prev.max(peak) + 1e-12);
        prop_assert!((next - (m * prev + (1.0 - m) * peak)).abs() < 1e-9);
    }
}

#[test]
fn infinities_clamp_and_nan_fails() {
    let q = QuantizerState::with_default_momentum(4, 1.0).unwrap();
    assert_eq!(
        q.quantize(&[f64::INFINITY, f64::NEG_INFINITY]).unwrap(),
        vec![7, -7]
    );
    assert!(q.quantize(&[f64::NAN]).is_err());
    assert!(q.update_range(&[f64::INFINITY]).is_err());
}
