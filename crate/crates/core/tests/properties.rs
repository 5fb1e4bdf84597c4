//! Property tests for the numeric invariants of the signal chain.

use proptest::prelude::*;

use rppg_core::eval::compute_metrics;
use rppg_core::pulse::{power_spectrum_samples, spectrum_peak_hr};
use rppg_core::rectify::{nlms_rectify, NlmsParams};
use rppg_core::trace::{detrend, normalize, resample_uniform};
use rppg_core::types::{BandLimits, Channel, ChannelTrace, Region};

fn trace(samples: Vec<f64>) -> ChannelTrace {
    ChannelTrace::new(samples, 60.0, Channel::G, Region::Foreground)
}

/// Reference NLMS recursion, written independently of the library path:
/// explicit window vector, naive dot products.
fn nlms_brute_force(primary: &[f64], reference: &[f64], l: usize, mu: f64, eps: f64) -> Vec<f64> {
    let mut w = vec![0.0f64; l];
    let mut pure = Vec::with_capacity(primary.len());
    for t in 0..primary.len() {
        let mut window = vec![0.0f64; l];
        for (k, slot) in window.iter_mut().enumerate() {
            if t >= k {
                *slot = reference[t - k];
            }
        }
        let y: f64 = w.iter().zip(&window).map(|(a, b)| a * b).sum();
        let e = primary[t] - y;
        pure.push(e);
        let norm: f64 = window.iter().map(|x| x * x).sum();
        for (wk, xk) in w.iter_mut().zip(&window) {
            *wk += mu * e * xk / (eps + norm);
        }
    }
    pure
}

fn signal(len: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-10.0f64..10.0, len..=len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nlms_matches_brute_force(
        primary in signal(300),
        reference in signal(300),
        l in 1usize..12,
        mu in 0.05f64..2.0,
    ) {
        let params = NlmsParams { order: l, mu, eps: 1e-6 };
        let r = nlms_rectify(&trace(primary.clone()), &trace(reference.clone()), &params).unwrap();
        let oracle = nlms_brute_force(&primary, &reference, l, mu, 1e-6);
        for (a, b) in r.pure.samples.iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn nlms_decomposition_and_scale_covariance(
        primary in signal(200),
        reference in signal(200),
        c in prop_oneof![Just(2.0f64), 0.1f64..10.0],
    ) {
        let params = NlmsParams::default();
        let r = nlms_rectify(&trace(primary.clone()), &trace(reference.clone()), &params).unwrap();
        for t in 0..primary.len() {
            prop_assert_eq!(r.pure.samples[t], primary[t] - r.noise_estimate.samples[t]);
        }
        let scaled: Vec<f64> = primary.iter().map(|v| c * v).collect();
        let rs = nlms_rectify(&trace(scaled), &trace(reference), &params).unwrap();
        for t in 0..primary.len() {
            let want = c * r.pure.samples[t];
            let got = rs.pure.samples[t];
            prop_assert!(
                (got - want).abs() <= 1e-9 * want.abs().max(1.0),
                "sample {}: {} vs {}", t, got, want
            );
        }
    }

    #[test]
    fn metric_ordering_and_bounds(pairs in proptest::collection::vec((40.0f64..240.0, 40.0f64..240.0), 2..60)) {
        let r = compute_metrics(&pairs).unwrap();
        prop_assert!(r.rmse >= r.mae - 1e-12);
        prop_assert!(r.mae >= r.mean_error.abs() - 1e-12);
        prop_assert!((0.0..=100.0).contains(&r.pct_within_5));
        if let Some(rho) = r.pearson_r {
            prop_assert!((-1.0..=1.0).contains(&rho));
        }
    }

    #[test]
    fn pearson_affine_invariance(
        pairs in proptest::collection::vec((40.0f64..240.0, 40.0f64..240.0), 3..40),
        a in 0.1f64..5.0,
        b in -50.0f64..50.0,
    ) {
        let base = compute_metrics(&pairs).unwrap();
        let transformed: Vec<(f64, f64)> = pairs.iter().map(|&(e, t)| (a * e + b, t)).collect();
        let shifted = compute_metrics(&transformed).unwrap();
        match (base.pearson_r, shifted.pearson_r) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-9, "{x} vs {y}"),
            (None, None) => {}
            other => prop_assert!(false, "pearson presence changed: {:?}", other),
        }
    }

    #[test]
    fn metrics_symmetric_under_permutation(
        pairs in proptest::collection::vec((40.0f64..240.0, 40.0f64..240.0), 2..30),
        seed in 0u64..1000,
    ) {
        let mut shuffled = pairs.clone();
        // Deterministic Fisher-Yates driven by a simple LCG.
        let mut state = seed.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
        for i in (1..shuffled.len()).rev() {
            state = state.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
            let j = (state >> 33) as usize % (i + 1);
            shuffled.swap(i, j);
        }
        let a = compute_metrics(&pairs).unwrap();
        let b = compute_metrics(&shuffled).unwrap();
        prop_assert!((a.rmse - b.rmse).abs() < 1e-12);
        prop_assert!((a.mae - b.mae).abs() < 1e-12);
        prop_assert!((a.pct_within_5 - b.pct_within_5).abs() < 1e-12);
    }

    #[test]
    fn zero_error_pair_never_lowers_pct_within_5(
        pairs in proptest::collection::vec((40.0f64..240.0, 40.0f64..240.0), 2..30),
        truth in 40.0f64..240.0,
    ) {
        let before = compute_metrics(&pairs).unwrap().pct_within_5;
        let mut extended = pairs.clone();
        extended.push((truth, truth));
        let after = compute_metrics(&extended).unwrap().pct_within_5;
        prop_assert!(after >= before - 1e-12);
    }

    #[test]
    fn peak_hr_always_inside_band(seed in 0u64..500) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let samples: Vec<f64> = (0..1024).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let spec = power_spectrum_samples(&samples, 60.0, 0.01).unwrap();
        let band = BandLimits::DEFAULT;
        let hr = spectrum_peak_hr(&spec, band).unwrap();
        prop_assert!(hr >= 60.0 * band.low && hr <= 60.0 * band.high, "hr {}", hr);
    }

    #[test]
    fn resample_stays_inside_time_range(
        n in 3usize..40,
        fs_out in 1.0f64..100.0,
        seed in 0u64..1000,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut t = 0.0;
        let samples: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                t += rng.gen_range(0.001..0.5);
                (t, rng.gen_range(-5.0..5.0))
            })
            .collect();
        let r = resample_uniform(&samples, fs_out, Channel::G, Region::Foreground).unwrap();
        let t0 = samples[0].0;
        let t_end = samples[samples.len() - 1].0;
        prop_assert!(!r.samples.is_empty());
        let last_t = t0 + (r.len() - 1) as f64 / fs_out;
        prop_assert!(last_t <= t_end + 1e-9, "grid end {} past {}", last_t, t_end);
        let (lo, hi) = samples.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &(_, v)| (lo.min(v), hi.max(v)));
        for v in &r.samples {
            prop_assert!(*v >= lo - 1e-9 && *v <= hi + 1e-9);
        }
    }

    #[test]
    fn detrend_of_normalize_zero_mean(samples in signal(256)) {
        let t = trace(samples);
        if t.std() == 0.0 {
            return Ok(());
        }
        let d = detrend(&normalize(&t).unwrap(), 1.5).unwrap();
        prop_assert!(d.mean().abs() < 1e-9, "mean {}", d.mean());
    }
}
