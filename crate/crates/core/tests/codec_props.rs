use std::cmp::Reverse;
use std::collections::BinaryHeap;

use oasis::entropy::{empirical_entropy, SymbolHistogram};
use oasis::huffman::{
    avg_code_length, build_codebook, decode, encode, EncodedStream, HuffmanCodebook, HuffmanError,
};
use proptest::prelude::*;

/// Total weighted code length of an optimal prefix code, by summing merge
/// weights.
fn optimal_cost(counts: &[u64]) -> u64 {
    if counts.len() == 1 {
        return counts[0];
    }
    let mut heap: BinaryHeap<Reverse<u64>> = counts.iter().map(|&c| Reverse(c)).collect();
    let mut cost = 0;
    while heap.len() > 1 {
        let Reverse(a) = heap.pop().unwrap();
        let Reverse(b) = heap.pop().unwrap();
        cost += a + b;
        heap.push(Reverse(a + b));
    }
    cost
}

/// Cheapest weighted length over every length vector that satisfies Kraft.
fn brute_force_cost(counts: &[u64]) -> u64 {
    let k = counts.len();
    let max_len = k.max(1) as u32;
    let mut best = u64::MAX;
    let mut lens = vec![1u32; k];
    loop {
        let kraft: f64 = lens.iter().map(|&l| 0.5f64.powi(l as i32)).sum();
        if kraft <= 1.0 + 1e-12 {
            let cost: u64 = lens.iter().zip(counts).map(|(&l, &c)| l as u64 * c).sum();
            best = best.min(cost);
        }
        let mut i = 0;
        while i < k {
            lens[i] += 1;
            if lens[i] <= max_len {
                break;
            }
            lens[i] = 1;
            i += 1;
        }
        if i == k {
            return best;
        }
    }
}

fn histogram(counts: &[u64]) -> SymbolHistogram {
    SymbolHistogram::from_counts(counts.iter().enumerate().map(|(i, &c)| (i as i8 - 7, c))).unwrap()
}

#[test]
fn exhaustive_optimality_small_alphabets() {
    let mut checked = 0;
    for k in 1..=4u32 {
        for n in 0..8u64.pow(k) {
            let counts: Vec<u64> = (0..k).map(|i| n / 8u64.pow(i) % 8 + 1).collect();
            let h = histogram(&counts);
            let cb = build_codebook(&h).unwrap();
            let cost: u64 = h
                .iter()
                .map(|(s, c)| c * cb.code_length(s).unwrap() as u64)
                .sum();
            assert_eq!(cost, brute_force_cost(&counts), "counts {counts:?}");
            checked += 1;
        }
    }
    assert_eq!(checked, 8 + 64 + 512 + 4096);
}

fn counts_strategy() -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(1u64..1000, 1..=15)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn roundtrip(symbols in prop::collection::vec(-7i8..=7, 1..400)) {
        let h = SymbolHistogram::from_symbols(&symbols).unwrap();
        let cb = build_codebook(&h).unwrap();
        let s = encode(&symbols, &cb).unwrap();
        prop_assert_eq!(decode(&s).unwrap(), symbols.clone());
        let back = EncodedStream::from_bytes(&s.to_bytes()).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(decode(&back).unwrap(), symbols);
    }

    #[test]
    fn kraft_equality_and_cost(counts in counts_strategy()) {
        let h = histogram(&counts);
        let cb = build_codebook(&h).unwrap();
        if counts.len() > 1 {
            prop_assert!(cb.is_complete());
            prop_assert!((cb.kraft_sum() - 1.0).abs() < 1e-12);
        } else {
            prop_assert_eq!(cb.kraft_sum(), 0.5);
        }
        let cost: u64 = h.iter().map(|(s, c)| c * cb.code_length(s).unwrap() as u64).sum();
        prop_assert_eq!(cost, optimal_cost(&counts));
    }

    #[test]
    fn shannon_bound(counts in counts_strategy()) {
        let h = histogram(&counts);
        let cb = build_codebook(&h).unwrap();
        let l = avg_code_length(&cb, &h).unwrap();
        let e = empirical_entropy(&h);
        prop_assert!(e <= l + 1e-9);
        if counts.len() > 1 {
            prop_assert!(l < e + 1.0);
        } else {
            prop_assert_eq!(l, 1.0);
        }
    }

    #[test]
    fn canonical_codes_are_prefix_free(counts in counts_strategy()) {
        let cb = build_codebook(&histogram(&counts)).unwrap();
        let e = cb.entries();
        for (i, a) in e.iter().enumerate() {
            for b in &e[i + 1..] {
                prop_assert!(a.len <= b.len);
                prop_assert_ne!(b.code >> (b.len - a.len), a.code);
            }
        }
    }

    #[test]
    fn fuzzed_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
        if let Ok(s) = EncodedStream::from_bytes(&bytes) {
            let _ = decode(&s);
        }
    }

    #[test]
    fn fuzzed_payload_stays_in_bounds(
        symbols in prop::collection::vec(-3i8..=3, 1..200),
        noise in prop::collection::vec(any::<u8>(), 0..64),
        extra in 0u64..1000,
    ) {
        let h = SymbolHistogram::from_symbols(&symbols).unwrap();
        let cb = build_codebook(&h).unwrap();
        let mut s = encode(&symbols, &cb).unwrap();
        s.payload = noise;
        s.symbol_count += extra;
        match decode(&s) {
            Ok(out) => prop_assert_eq!(out.len() as u64, s.symbol_count),
            Err(e) => prop_assert!(matches!(e, HuffmanError::CorruptStream(_))),
        }
    }
}

#[test]
fn unknown_symbol_is_rejected() {
    let cb = HuffmanCodebook::from_lengths([(0, 1), (1, 1)]).unwrap();
    assert_eq!(encode(&[2], &cb), Err(HuffmanError::UnknownSymbol(2)));
}
