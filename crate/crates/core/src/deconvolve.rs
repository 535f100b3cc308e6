//! Weighted Fourier deconvolution of uniform measurements.
//!
//! Both measurement paths are linear in a vector of Fourier samples:
//! `m = U D_ψ̂ ŝ` (phase-less) and `y = U D_φ̂ conj(ĥ)` (phase-intact), where
//! `U[n, ℓ] = e^{jℓω₀nΔ}`. On a grid spanning whole periods the columns of
//! `U` are distinct DFT columns, hence orthogonal with `UᴴU = N·I`, and the
//! least-squares solution `U⁺v = Uᴴv / N` is read off one forward FFT.

use std::sync::Arc;

use nalgebra::DMatrix;
use rustfft::{Fft, FftPlanner};

use crate::error::{EchoError, Result};
use crate::signal::{AcquisitionConfig, Complex64, MeasurementKind, MeasurementVector, PulseSpectrum};

/// Default relative floor on the diagonal weights. Frequencies whose weight
/// falls below `floor · max weight` are dropped from the band.
pub const DEFAULT_WEIGHT_FLOOR: f64 = 1e-8;

/// Solutions with an imaginary part above this fraction of their norm are not
/// the spectrum of an autocorrelation.
const IMAGINARY_RESIDUE_TOLERANCE: f64 = 1e-6;

#[derive(Clone)]
pub struct MeasurementSystem {
    config: AcquisitionConfig,
    path: MeasurementKind,
    effective_bandlimit: usize,
    weights: Vec<f64>,
    floor: f64,
    below_floor: Vec<i64>,
    matrix: DMatrix<Complex64>,
    bins: Vec<usize>,
    fft: Arc<dyn Fft<f64>>,
    singular_values: Vec<f64>,
}

impl std::fmt::Debug for MeasurementSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MeasurementSystem")
            .field("path", &self.path)
            .field("effective_bandlimit", &self.effective_bandlimit)
            .field("weights", &self.weights)
            .field("floor", &self.floor)
            .field("below_floor", &self.below_floor)
            .finish()
    }
}

impl MeasurementSystem {
    pub fn config(&self) -> &AcquisitionConfig {
        &self.config
    }

    pub fn path(&self) -> MeasurementKind {
        self.path
    }

    /// Bandlimit actually solved for, after trimming the high-frequency tail
    /// whose weights fall below the floor.
    pub fn effective_bandlimit(&self) -> usize {
        self.effective_bandlimit
    }

    /// Diagonal weights over the retained band, `ℓ = -L_eff..=L_eff`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Absolute weight floor.
    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// Frequencies inside the retained band whose weight is below the floor.
    pub fn below_floor(&self) -> &[i64] {
        &self.below_floor
    }

    /// The DFT-type matrix `U`, `N × (2L_eff + 1)`.
    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    /// Singular values of `U`, descending.
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn condition_number(&self) -> f64 {
        let max = self.singular_values.first().copied().unwrap_or(0.0);
        let min = self.singular_values.last().copied().unwrap_or(0.0);
        if min > 0.0 {
            max / min
        } else {
            f64::INFINITY
        }
    }

    /// Least-squares solution `x = U⁺ v` for a real right-hand side.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<Complex64>> {
        if rhs.len() != self.config.samples() {
            return Err(EchoError::invalid(format!(
                "system expects {} samples, got {}",
                self.config.samples(),
                rhs.len()
            )));
        }
        let mut spectrum: Vec<Complex64> = rhs.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.process(&mut spectrum);
        let n = rhs.len() as f64;
        Ok(self.bins.iter().map(|&b| spectrum[b] / n).collect())
    }

    fn check_input(&self, v: &MeasurementVector, kind: MeasurementKind) -> Result<()> {
        if v.kind() != kind || self.path != kind {
            return Err(EchoError::invalid(format!(
                "expected {kind:?} measurements on a {kind:?} system, got {:?} on {:?}",
                v.kind(),
                self.path
            )));
        }
        if v.config().samples() != self.config.samples() || v.config().bandlimit() != self.config.bandlimit() {
            return Err(EchoError::invalid("measurement grid differs from the system grid"));
        }
        if let Some(&ell) = self.below_floor.first() {
            let idx = (ell + self.effective_bandlimit as i64) as usize;
            return Err(EchoError::IllConditioned { ell, weight: self.weights[idx], floor: self.floor });
        }
        Ok(())
    }
}

/// Builds `U` and the diagonal weights for one path, dropping frequencies
/// whose weight is below [`DEFAULT_WEIGHT_FLOOR`] relative to the largest.
pub fn build_system(
    pulse: &PulseSpectrum,
    config: &AcquisitionConfig,
    path: MeasurementKind,
) -> Result<MeasurementSystem> {
    build_system_with_floor(pulse, config, path, DEFAULT_WEIGHT_FLOOR)
}

pub fn build_system_with_floor(
    pulse: &PulseSpectrum,
    config: &AcquisitionConfig,
    path: MeasurementKind,
    relative_floor: f64,
) -> Result<MeasurementSystem> {
    if pulse.bandlimit() != config.bandlimit() {
        return Err(EchoError::invalid(format!(
            "pulse bandlimit {} differs from acquisition bandlimit {}",
            pulse.bandlimit(),
            config.bandlimit()
        )));
    }
    if !(relative_floor.is_finite() && relative_floor >= 0.0) {
        return Err(EchoError::invalid(format!("weight floor {relative_floor} must be nonnegative")));
    }
    let all_weights = match path {
        MeasurementKind::PhaseLess => pulse.psi_hat(),
        MeasurementKind::PhaseIntact => pulse.phi_hat(),
    };
    let l = config.bandlimit();
    let max_weight = all_weights.iter().copied().fold(0.0, f64::max);
    if max_weight <= 0.0 {
        return Err(EchoError::invalid("pulse spectrum is identically zero"));
    }
    let floor = relative_floor * max_weight;

    // Trim the outer tail, then flag anything still below the floor inside.
    let effective = (0..=l)
        .rev()
        .find(|&k| all_weights[l + k] >= floor || all_weights[l - k] >= floor)
        .unwrap_or(0);
    let weights: Vec<f64> = all_weights[l - effective..=l + effective].to_vec();
    let below_floor = (-(effective as i64)..=effective as i64)
        .zip(&weights)
        .filter(|(_, &w)| w < floor || w == 0.0)
        .map(|(ell, _)| ell)
        .collect();

    let trimmed = config.with_bandlimit(effective)?;
    let harmonics = trimmed.harmonics();
    let n = config.samples();
    let cols = 2 * effective + 1;
    let matrix = DMatrix::from_fn(n, cols, |row, col| harmonics.entry(row, col));

    let mut singular_values: Vec<f64> = matrix.clone().singular_values().iter().copied().collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));

    Ok(MeasurementSystem {
        config: config.clone(),
        path,
        effective_bandlimit: effective,
        weights,
        floor,
        below_floor,
        matrix,
        bins: harmonics.bins().to_vec(),
        fft: FftPlanner::new().plan_fft_forward(n),
        singular_values,
    })
}

/// `ŝ = D_ψ̂⁻¹ U⁺ m`: the phase-less Fourier samples `ŝ(ℓω₀)`,
/// `ℓ = -L_eff..=L_eff`.
///
/// The solution of an autocorrelation is real; an imaginary residue above
/// tolerance is reported as [`EchoError::DataInconsistency`].
pub fn estimate_s_hat(m: &MeasurementVector, system: &MeasurementSystem) -> Result<Vec<f64>> {
    system.check_input(m, MeasurementKind::PhaseLess)?;
    let x = system.solve(m.samples())?;
    let s: Vec<Complex64> = x.iter().zip(&system.weights).map(|(v, w)| v / *w).collect();
    let norm = s.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let residue = s.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    if residue > IMAGINARY_RESIDUE_TOLERANCE * norm {
        return Err(EchoError::DataInconsistency { residue, norm });
    }
    Ok(s.into_iter().map(|v| v.re).collect())
}

/// Phase-intact SRF spectrum samples `ĥ(ℓω₀)`, `ℓ = -L_eff..=L_eff`, from
/// lock-in samples modelled as `ŷ = φ̂ · conj(ĥ)`.
pub fn estimate_h_hat(y: &MeasurementVector, system: &MeasurementSystem) -> Result<Vec<Complex64>> {
    system.check_input(y, MeasurementKind::PhaseIntact)?;
    let x = system.solve(y.samples())?;
    Ok(x.iter().zip(&system.weights).map(|(v, w)| v.conj() / *w).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{h_hat_of_omega, s_hat_of_omega, synthesize_phaseintact, synthesize_phaseless, Echo, SparseSRF};

    fn setup(n: usize, l: usize) -> (AcquisitionConfig, PulseSpectrum) {
        let cfg = AcquisitionConfig::single_period(n, 1e-9, l).unwrap();
        let pulse = PulseSpectrum::periodized_gaussian(l, 0.015).unwrap();
        (cfg, pulse)
    }

    #[test]
    fn small_dft_matrix() {
        let cfg = AcquisitionConfig::single_period(4, 0.25, 1).unwrap();
        let pulse = PulseSpectrum::raised_cosine(1).unwrap();
        let sys = build_system(&pulse, &cfg, MeasurementKind::PhaseLess).unwrap();
        let u = sys.matrix();
        assert_eq!(u.shape(), (4, 3));
        for n in 0..4 {
            for (col, ell) in (-1..=1i64).enumerate() {
                let want = Complex64::from_polar(1.0, std::f64::consts::PI / 2.0 * (ell * n as i64) as f64);
                assert!((u[(n, col)] - want).norm() < 1e-15);
                assert!((u[(n, col)].norm() - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn weights_follow_path() {
        let (cfg, pulse) = setup(128, 8);
        let less = build_system(&pulse, &cfg, MeasurementKind::PhaseLess).unwrap();
        let intact = build_system(&pulse, &cfg, MeasurementKind::PhaseIntact).unwrap();
        for (k, c) in pulse.coefficients().iter().enumerate() {
            assert!((less.weights()[k] - c.norm().powi(4)).abs() < 1e-15);
            assert!((intact.weights()[k] - c.norm().powi(2)).abs() < 1e-15);
        }
    }

    #[test]
    fn commensurate_grid_has_orthogonal_columns() {
        let (cfg, pulse) = setup(97, 10);
        let sys = build_system(&pulse, &cfg, MeasurementKind::PhaseLess).unwrap();
        let gram = sys.matrix().adjoint() * sys.matrix();
        for i in 0..21 {
            for j in 0..21 {
                let want = if i == j { 97.0 } else { 0.0 };
                assert!((gram[(i, j)] - Complex64::new(want, 0.0)).norm() < 1e-10);
            }
        }
        for s in sys.singular_values() {
            assert!((s - 97f64.sqrt()).abs() < 1e-10);
        }
        assert!((sys.condition_number() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn noiseless_phaseless_round_trip() {
        let (cfg, pulse) = setup(256, 12);
        let sys = build_system(&pulse, &cfg, MeasurementKind::PhaseLess).unwrap();
        let srf = SparseSRF::new(vec![Echo::real(1.3, 20e-9), Echo::real(0.4, 71e-9), Echo::real(-0.2, 130e-9)]).unwrap();
        let m = synthesize_phaseless(&srf, &pulse, &cfg).unwrap();
        let s = estimate_s_hat(&m, &sys).unwrap();
        for (k, v) in s.iter().enumerate() {
            let ell = k as f64 - 12.0;
            let want = s_hat_of_omega(&srf, ell * cfg.omega0());
            assert!((v - want).abs() <= 1e-8 * want.abs().max(1.0), "l = {ell}: {v} vs {want}");
        }
    }

    #[test]
    fn zero_measurements_give_zero_spectrum() {
        let (cfg, pulse) = setup(64, 5);
        let sys = build_system(&pulse, &cfg, MeasurementKind::PhaseLess).unwrap();
        let m = MeasurementVector::phase_less(vec![0.0; 64], cfg).unwrap();
        assert!(estimate_s_hat(&m, &sys).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn noiseless_phaseintact_round_trip() {
        let (cfg, pulse) = setup(256, 12);
        let sys = build_system(&pulse, &cfg, MeasurementKind::PhaseIntact).unwrap();
        let srf = SparseSRF::new(vec![Echo::real(0.8, 33e-9), Echo::real(0.5, 90e-9)]).unwrap();
        let y = synthesize_phaseintact(&srf, &pulse, &cfg).unwrap();
        let h = estimate_h_hat(&y, &sys).unwrap();
        for (k, v) in h.iter().enumerate() {
            let want = h_hat_of_omega(&srf, (k as f64 - 12.0) * cfg.omega0());
            assert!((v - want).norm() <= 1e-8 * want.norm().max(1.0));
        }
    }

    #[test]
    fn single_echo_at_origin_gives_flat_h() {
        let (cfg, pulse) = setup(64, 5);
        let sys = build_system(&pulse, &cfg, MeasurementKind::PhaseIntact).unwrap();
        let srf = SparseSRF::new(vec![Echo::real(0.7, 0.0)]).unwrap();
        let y = synthesize_phaseintact(&srf, &pulse, &cfg).unwrap();
        for v in estimate_h_hat(&y, &sys).unwrap() {
            assert!((v - Complex64::new(0.7, 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn paired_paths_agree_on_power_spectrum() {
        let (cfg, pulse) = setup(200, 9);
        let less = build_system(&pulse, &cfg, MeasurementKind::PhaseLess).unwrap();
        let intact = build_system(&pulse, &cfg, MeasurementKind::PhaseIntact).unwrap();
        let srf = SparseSRF::new(vec![Echo::real(2.0, 5e-9), Echo::real(0.6, 47e-9)]).unwrap();
        let h = estimate_h_hat(&synthesize_phaseintact(&srf, &pulse, &cfg).unwrap(), &intact).unwrap();
        let s = estimate_s_hat(&synthesize_phaseless(&srf, &pulse, &cfg).unwrap(), &less).unwrap();
        for (hv, sv) in h.iter().zip(&s) {
            assert!((hv.norm_sqr() - sv).abs() <= 1e-6 * sv.abs().max(1e-12));
        }
    }

    #[test]
    fn tail_below_floor_is_trimmed() {
        let cfg = AcquisitionConfig::single_period(128, 1e-9, 20).unwrap();
        // wide Gaussian: |p̂_ℓ|⁴ collapses well before ℓ = 20
        let pulse = PulseSpectrum::periodized_gaussian(20, 0.05).unwrap();
        let sys = build_system(&pulse, &cfg, MeasurementKind::PhaseLess).unwrap();
        let l_eff = sys.effective_bandlimit();
        assert!(l_eff < 20);
        assert_eq!(sys.weights().len(), 2 * l_eff + 1);
        let max = pulse.psi_hat().iter().copied().fold(0.0, f64::max);
        assert!(pulse.psi_hat()[20 + l_eff] >= 1e-8 * max);
        assert!(pulse.psi_hat()[20 + l_eff + 1] < 1e-8 * max);
        // the amplitude path keeps more of the band
        let intact = build_system(&pulse, &cfg, MeasurementKind::PhaseIntact).unwrap();
        assert!(intact.effective_bandlimit() > l_eff);
    }

    #[test]
    fn interior_zero_weight_is_ill_conditioned() {
        let cfg = AcquisitionConfig::single_period(32, 1.0, 2).unwrap();
        let c = |v: f64| Complex64::new(v, 0.0);
        let pulse = PulseSpectrum::new(vec![c(0.5), c(0.0), c(1.0), c(0.0), c(0.5)]).unwrap();
        let sys = build_system(&pulse, &cfg, MeasurementKind::PhaseLess).unwrap();
        assert_eq!(sys.effective_bandlimit(), 2);
        assert_eq!(sys.below_floor(), &[-1, 1]);
        let m = MeasurementVector::phase_less(vec![1.0; 32], cfg).unwrap();
        match estimate_s_hat(&m, &sys) {
            Err(EchoError::IllConditioned { ell, .. }) => assert_eq!(ell, -1),
            other => panic!("expected ill-conditioned error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_path_is_rejected() {
        let (cfg, pulse) = setup(64, 5);
        let sys = build_system(&pulse, &cfg, MeasurementKind::PhaseIntact).unwrap();
        let m = MeasurementVector::phase_less(vec![0.0; 64], cfg).unwrap();
        assert!(matches!(estimate_s_hat(&m, &sys), Err(EchoError::InvalidArgument(_))));
    }

    #[test]
    fn preset_scale_solve_is_fast() {
        let cfg = AcquisitionConfig::experiment_preset();
        let pulse = PulseSpectrum::periodized_gaussian(20, 0.012).unwrap();
        let sys = build_system(&pulse, &cfg, MeasurementKind::PhaseLess).unwrap();
        let srf = SparseSRF::new(vec![Echo::real(1.0, 10e-9), Echo::real(0.5, 30e-9)]).unwrap();
        let m = synthesize_phaseless(&srf, &pulse, &cfg).unwrap();
        let start = std::time::Instant::now();
        let s = estimate_s_hat(&m, &sys).unwrap();
        assert!(start.elapsed().as_secs_f64() < 1.0);
        assert_eq!(s.len(), 41);
    }
}
