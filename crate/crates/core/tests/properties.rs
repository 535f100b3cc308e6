use echo_core::{
    cyclic_autocorrelation, recover_phaseintact, synthesize_phaseintact, AcquisitionConfig, Echo, PulseSpectrum,
    RecoverySettings, SparseSRF,
};
use proptest::prelude::*;

fn small_config() -> AcquisitionConfig {
    AcquisitionConfig::single_period(401, 1.0, 20).unwrap()
}

fn pulse() -> PulseSpectrum {
    PulseSpectrum::periodized_gaussian(20, 0.012).unwrap()
}

fn brute_autocorrelation(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n).map(|k| (0..n).map(|i| x[i] * x[(i + k) % n]).sum()).collect()
}

/// Real echoes at delays spread at least `gap` apart on a circle of length
/// `period`.
fn spread_scene(amplitudes: &[f64], offsets: &[f64], period: f64) -> SparseSRF {
    let k = amplitudes.len();
    let slot = period / k as f64;
    let echoes = amplitudes
        .iter()
        .zip(offsets)
        .enumerate()
        .map(|(i, (&g, &u))| Echo::real(g, i as f64 * slot + u * 0.5 * slot))
        .collect();
    SparseSRF::new(echoes).unwrap()
}

fn amplitude() -> impl Strategy<Value = f64> {
    (0.1f64..10.0, any::<bool>()).prop_map(|(g, neg)| if neg { -g } else { g })
}

fn scene(max_echoes: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..=max_echoes).prop_flat_map(|k| (prop::collection::vec(amplitude(), k), prop::collection::vec(0.0f64..1.0, k)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn autocorrelation_is_even_and_peaks_at_zero_lag(x in prop::collection::vec(-10.0f64..10.0, 1..200)) {
        let a = cyclic_autocorrelation(&x).unwrap();
        let n = x.len();
        let scale = a[0].max(1e-300);
        for k in 0..n {
            prop_assert!((a[k] - a[(n - k) % n]).abs() <= 1e-12 * scale);
            prop_assert!(a[k] <= a[0] + 1e-12 * scale);
        }
        let brute = brute_autocorrelation(&x);
        for (fast, slow) in a.iter().zip(&brute) {
            prop_assert!((fast - slow).abs() <= 1e-9 * scale.max(1.0));
        }
    }

    #[test]
    fn lock_in_samples_are_linear_in_amplitudes(
        (amplitudes, offsets) in scene(4),
        factor in -5.0f64..5.0,
    ) {
        let config = small_config();
        let srf = spread_scene(&amplitudes, &offsets, config.period());
        let scaled: Vec<f64> = amplitudes.iter().map(|g| g * factor).collect();
        let srf_scaled = spread_scene(&scaled, &offsets, config.period());
        let y = synthesize_phaseintact(&srf, &pulse(), &config).unwrap().into_samples();
        let y_scaled = synthesize_phaseintact(&srf_scaled, &pulse(), &config).unwrap().into_samples();
        let peak = y.iter().fold(0.0f64, |p, v| p.max(v.abs()));
        for (a, b) in y.iter().zip(&y_scaled) {
            prop_assert!((a * factor - b).abs() <= 1e-12 * peak * factor.abs().max(1.0));
        }
    }

    #[test]
    fn lock_in_samples_superpose(
        (amplitudes, offsets) in scene(4),
    ) {
        let config = small_config();
        let whole = spread_scene(&amplitudes, &offsets, config.period());
        let y = synthesize_phaseintact(&whole, &pulse(), &config).unwrap().into_samples();
        let mut sum = vec![0.0; y.len()];
        for echo in whole.echoes() {
            let part = SparseSRF::new(vec![*echo]).unwrap();
            let y_part = synthesize_phaseintact(&part, &pulse(), &config).unwrap().into_samples();
            for (s, v) in sum.iter_mut().zip(&y_part) {
                *s += v;
            }
        }
        let peak = sum.iter().fold(1e-300f64, |p, v| p.max(v.abs()));
        for (a, b) in y.iter().zip(&sum) {
            prop_assert!((a - b).abs() <= 1e-10 * peak);
        }
    }

    #[test]
    fn phase_intact_round_trip(
        (amplitudes, offsets) in scene(4),
    ) {
        let config = small_config();
        let srf = spread_scene(&amplitudes, &offsets, config.period());
        let h_hat: Vec<_> = (-20i64..=20)
            .map(|ell| echo_core::h_hat_of_omega(&srf, ell as f64 * config.omega0()))
            .collect();
        let rec = recover_phaseintact(&h_hat, config.omega0(), srf.len(), &RecoverySettings::default()).unwrap();
        prop_assert_eq!(rec.srf.len(), srf.len());
        for (found, truth) in rec.srf.echoes().iter().zip(srf.echoes()) {
            prop_assert!((found.amplitude - truth.amplitude).norm() <= 1e-8 * truth.amplitude.norm());
            prop_assert!((found.delay - truth.delay).abs() <= 1e-8 * config.period());
        }
    }
}
