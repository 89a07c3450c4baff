use proptest::prelude::*;

use selfapprox::basic_element::{build_basic_element, build_with_weights, WeightingStrategy};
use selfapprox::metrics::{error_metrics, smape};
use selfapprox::period::{lsg_score, scan_semi_period, scan_semi_period_parallel};
use selfapprox::series::{partition, Series, SplitSpec};
use selfapprox::synth::{synth, PeriodicTerm, Recipe};
use selfapprox::trend::{fit_polynomial, fractional_blend};

fn values(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3..1e3f64, len)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

// Mean absolute lag difference computed pair by pair.
fn lag_oracle(v: &[f64], t: usize) -> f64 {
    let mut sum = 0.0;
    for k in t..v.len() {
        sum += (v[k] - v[k - t]).abs();
    }
    sum / (v.len() - t) as f64
}

proptest! {
    #[test]
    fn partition_concat_is_identity(v in values(1..200), period in 1usize..40) {
        prop_assume!(period <= v.len());
        let set = partition(&v, period).unwrap();
        prop_assert_eq!(set.concat(), v.clone());
        prop_assert_eq!(set.n(), v.len() / period);
        prop_assert!(set.remainder().len() < period);
        prop_assert!(set.full_segments().iter().all(|s| s.len() == period));
    }

    #[test]
    fn split_conserves_length(len in 40usize..400, ratio in 0.05..0.5f64, test_frac in 0.0..0.3f64) {
        let test = (len as f64 * test_frac) as usize;
        let s = Series::with_start((0..len).map(|x| x as f64).collect(), -7).unwrap();
        if let Ok((train, val, tst)) = s.split(SplitSpec::new(ratio, test)) {
            prop_assert_eq!(train.len() + val.len() + tst.len(), len);
            prop_assert_eq!(tst.len(), test);
            prop_assert_eq!(train.end_index(), val.start_index());
            prop_assert_eq!(val.end_index(), tst.start_index());
            let mut joined = train.values().to_vec();
            joined.extend_from_slice(val.values());
            joined.extend_from_slice(tst.values());
            prop_assert_eq!(joined, s.values().to_vec());
        }
    }

    #[test]
    fn subtract_then_add_restores(a in values(1..100), shift in -1e3..1e3f64) {
        let x = Series::new(a.clone()).unwrap();
        let y = Series::new(a.iter().map(|v| v * 0.5 + shift).collect()).unwrap();
        let back = x.subtract(&y).unwrap().add(&y).unwrap();
        for (p, q) in back.values().iter().zip(x.values()) {
            prop_assert!(close(*p, *q, 1e-12));
        }
    }

    #[test]
    fn lsg_matches_pairwise_oracle(v in values(4..160)) {
        for t in 1..=v.len() / 2 {
            let got = lsg_score(&v, t).unwrap();
            prop_assert!(got >= 0.0);
            prop_assert!(close(got, lag_oracle(&v, t), 1e-12));
        }
    }

    #[test]
    fn lsg_shift_invariant_scale_covariant(v in values(8..120), c in -1e3..1e3f64, a in -50.0..50.0f64) {
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        let scaled: Vec<f64> = v.iter().map(|x| x * a).collect();
        for t in 1..=v.len() / 2 {
            let base = lsg_score(&v, t).unwrap();
            prop_assert!(close(lsg_score(&shifted, t).unwrap(), base, 1e-9));
            prop_assert!(close(lsg_score(&scaled, t).unwrap(), a.abs() * base, 1e-9));
        }
    }

    #[test]
    fn exact_period_recovered(pattern in values(2..30), reps in 3usize..8) {
        let p = pattern.len();
        // A pattern that is itself periodic with a smaller period legitimately wins.
        let minimal = (1..p).all(|d| p % d != 0 || (0..p).any(|k| pattern[k] != pattern[(k + d) % p]));
        prop_assume!(minimal && p >= 2);
        let v: Vec<f64> = (0..p * reps).map(|k| pattern[k % p]).collect();
        let scan = scan_semi_period(&v, 2, v.len() / 2).unwrap();
        prop_assert_eq!(scan.best_period, p);
        prop_assert_eq!(scan.best_score(), 0.0);
        prop_assert_eq!(&scan, &scan_semi_period_parallel(&v, 2, v.len() / 2).unwrap());
    }

    #[test]
    fn uniform_element_ignores_segment_order(v in values(12..120), period in 2usize..6, seed in any::<u64>()) {
        let set = partition(&v, period).unwrap();
        prop_assume!(set.remainder().is_empty());
        let mut segments: Vec<Vec<f64>> = set.full_segments().to_vec();
        let k = segments.len();
        segments.rotate_left((seed % k as u64) as usize);
        let permuted: Vec<f64> = segments.concat();
        let a = build_basic_element(&set, WeightingStrategy::Uniform);
        let b = build_basic_element(&partition(&permuted, period).unwrap(), WeightingStrategy::Uniform);
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!(close(*x, *y, 1e-12));
        }
    }

    #[test]
    fn weights_only_matter_up_to_scale(v in values(6..100), period in 2usize..6, c in 0.01..100.0f64) {
        prop_assume!(period <= v.len());
        let set = partition(&v, period).unwrap();
        for strategy in WeightingStrategy::all(0.8) {
            let a = build_with_weights(&set, |i, n| strategy.weight(i, n));
            let b = build_with_weights(&set, |i, n| c * strategy.weight(i, n));
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!(close(*x, *y, 1e-10));
            }
        }
    }

    #[test]
    fn tiling_reproduces_periodic_input(pattern in values(2..20), reps in 2usize..6, phase_seed in any::<usize>()) {
        let p = pattern.len();
        let v: Vec<f64> = (0..p * reps).map(|k| pattern[k % p]).collect();
        for strategy in WeightingStrategy::all(0.9) {
            let e = build_basic_element(&partition(&v, p).unwrap(), strategy);
            for (x, y) in e.tile(v.len(), 0).iter().zip(&v) {
                prop_assert!(close(*x, *y, 1e-12));
            }
            let phase = phase_seed % p;
            let tiled = e.tile(p, phase);
            prop_assert!(close(tiled[0], pattern[phase], 1e-12));
        }
    }

    #[test]
    fn smape_symmetric_bounded_scale_free(
        pair in (1usize..60).prop_flat_map(|n| (values(n..n + 1), values(n..n + 1))),
        k in 1e-3..1e3f64,
    ) {
        let (a, b) = pair;
        let s = smape(&a, &b).unwrap();
        prop_assert!((0.0..=200.0).contains(&s));
        prop_assert!(close(s, smape(&b, &a).unwrap(), 1e-12));
        let ka: Vec<f64> = a.iter().map(|x| x * k).collect();
        let kb: Vec<f64> = b.iter().map(|x| x * k).collect();
        prop_assert!(close(s, smape(&ka, &kb).unwrap(), 1e-9));
        prop_assert_eq!(smape(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn nmse_below_one_iff_better_than_mean(
        pair in (2usize..60).prop_flat_map(|n| (values(n..n + 1), values(n..n + 1))),
    ) {
        let (actual, predicted) = pair;
        let mean = actual.iter().sum::<f64>() / actual.len() as f64;
        let mean_sse: f64 = actual.iter().map(|y| (y - mean).powi(2)).sum();
        let sse: f64 = actual.iter().zip(&predicted).map(|(y, f)| (y - f).powi(2)).sum();
        prop_assume!(mean_sse > 1e-9 && (sse - mean_sse).abs() > 1e-9 * mean_sse);
        let nmse = error_metrics(&actual, &predicted).unwrap().nmse.unwrap();
        prop_assert_eq!(nmse < 1.0, sse < mean_sse);
    }

    #[test]
    fn fit_residual_is_orthogonal_and_nested(v in values(12..80), degree in 0usize..4) {
        let s = Series::new(v.clone()).unwrap();
        let len = v.len() as i64;
        let lo = fit_polynomial(&s, degree).unwrap().evaluate(0..len).unwrap();
        let hi = fit_polynomial(&s, degree + 1).unwrap().evaluate(0..len).unwrap();
        let res: Vec<f64> = v.iter().zip(&lo).map(|(y, f)| y - f).collect();
        let c = (v.len() - 1) as f64 / 2.0;
        let scale: f64 = v.iter().map(|x| x.abs()).sum::<f64>() + 1.0;
        for j in 0..=degree {
            let dot: f64 = res.iter().enumerate().map(|(x, r)| r * ((x as f64 - c) / c).powi(j as i32)).sum();
            prop_assert!(dot.abs() <= 1e-9 * scale, "degree {} basis {} dot {}", degree, j, dot);
        }
        let ssr = |f: &[f64]| v.iter().zip(f).map(|(y, p)| (y - p).powi(2)).sum::<f64>();
        prop_assert!(ssr(&hi) <= ssr(&lo) * (1.0 + 1e-9) + 1e-9);
    }

    #[test]
    fn blend_endpoints_and_monotone_interior(
        coef in prop::collection::vec(-1.0..1.0f64, 3),
        offset in 50.0..100.0f64,
        m in 0usize..3,
        n in 2usize..12,
    ) {
        let v: Vec<f64> = (0..40)
            .map(|x| {
                let t = x as f64 / 10.0;
                offset + coef[0] * t + coef[1] * t * t + coef[2] * (3.0 * t).sin()
            })
            .collect();
        let s = Series::new(v).unwrap();
        let lower = fit_polynomial(&s, m).unwrap();
        let upper = fit_polynomial(&s, m + 1).unwrap();
        let lo = lower.evaluate(0..40).unwrap();
        let up = upper.evaluate(0..40).unwrap();
        let at = |i| fractional_blend(&lower, &upper, i, n).unwrap().evaluate(0..40).unwrap();
        prop_assert_eq!(at(n), lo.clone());
        prop_assert_eq!(at(0), up.clone());
        let mut previous = up.clone();
        for i in 1..=n {
            let b = at(i);
            for k in 0..40 {
                // Moving i towards N walks monotonically from the upper fit to the lower one.
                if lo[k] > up[k] {
                    prop_assert!(b[k] >= previous[k]);
                } else {
                    prop_assert!(b[k] <= previous[k]);
                }
            }
            previous = b;
        }
    }

    #[test]
    fn synth_is_pure(seed in any::<u64>(), len in 1usize..300, sigma in 0.0..2.0f64) {
        let recipe = Recipe::default()
            .with_trend(&[1.0, -0.02])
            .with_term(PeriodicTerm::sine(12.0, 1.5))
            .with_noise(sigma);
        prop_assert_eq!(synth(&recipe, len, seed).unwrap(), synth(&recipe, len, seed).unwrap());
        if sigma == 0.0 {
            let s = synth(&recipe, len, seed).unwrap();
            for (t, v) in s.values().iter().enumerate() {
                prop_assert_eq!(*v, recipe.clean_value(t as f64));
            }
        }
    }
}
