//! Domain types and the forward acquisition model.
//!
//! A `T`-periodic pulse with Fourier coefficients `p̂_ℓ`, `|ℓ| ≤ L`, probes a
//! scene whose response is a train of `K` Dirac echoes `Γ_k δ(t - t_k)`. A
//! homodyne (lock-in) sensor correlates the return with the emitted pulse, so
//! the phase-intact samples are
//!
//! ```text
//! y[n] = Σ_ℓ φ̂_ℓ · conj(ĥ(ℓω₀)) · e^{jℓω₀nΔ},   φ̂_ℓ = |p̂_ℓ|²
//! ```
//!
//! and the phase-less (autocorrelated) samples are
//!
//! ```text
//! m[n] = Σ_ℓ ψ̂_ℓ · ŝ(ℓω₀) · e^{jℓω₀nΔ},          ψ̂_ℓ = |p̂_ℓ|⁴,  ŝ = |ĥ|²
//! ```
//!
//! with `ĥ(ω) = Σ_k Γ_k e^{jωt_k}`.
//!
//! Normalization: on a commensurate grid (`NΔ` an integer multiple of `T`)
//! the discrete cyclic autocorrelation of `y` equals `N · m` exactly, because
//! [`cyclic_autocorrelation`] carries no `1/N` factor.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{EchoError, Result};

pub type Complex64 = Complex<f64>;

/// Relative tolerance used when checking that `NΔ` is a multiple of `T`.
const GRID_TOLERANCE: f64 = 1e-9;
/// Synthesized samples whose imaginary part exceeds this fraction of their
/// magnitude cannot come from a real sensor.
const REAL_RESIDUE_TOLERANCE: f64 = 1e-6;
/// Tolerance on cyclic evenness of phase-less vectors, relative to the peak.
const EVENNESS_TOLERANCE: f64 = 1e-9;

/// Uniform sampling grid and bandlimit of one acquisition.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionConfig {
    samples: usize,
    interval: f64,
    period: f64,
    omega0: f64,
    bandlimit: usize,
    periods: usize,
}

impl AcquisitionConfig {
    /// `samples` uniform samples `interval` seconds apart, a pulse of period
    /// `period` seconds approximated with `2·bandlimit + 1` Fourier terms.
    ///
    /// The grid must span an integer number of periods, and the retained
    /// harmonics must land on distinct DFT bins of that grid.
    pub fn new(samples: usize, interval: f64, period: f64, bandlimit: usize) -> Result<Self> {
        if samples == 0 {
            return Err(EchoError::invalid("sample count must be positive"));
        }
        if !(interval.is_finite() && interval > 0.0) {
            return Err(EchoError::invalid(format!("sampling interval {interval} must be positive")));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(EchoError::invalid(format!("pulse period {period} must be positive")));
        }
        if 2 * bandlimit + 1 > samples {
            return Err(EchoError::invalid(format!(
                "2L+1 = {} exceeds the sample count N = {samples}",
                2 * bandlimit + 1
            )));
        }
        let ratio = samples as f64 * interval / period;
        let periods = ratio.round();
        if periods < 1.0 || (ratio - periods).abs() > GRID_TOLERANCE * ratio.max(1.0) {
            return Err(EchoError::invalid(format!(
                "N·Δ must be an integer multiple of T (N·Δ/T = {ratio})"
            )));
        }
        let periods = periods as usize;
        // Harmonic ℓ lands on bin q·ℓ mod N; these are distinct for |ℓ| ≤ L iff
        // N / gcd(N, q) > 2L.
        if samples / gcd(samples, periods) <= 2 * bandlimit {
            return Err(EchoError::invalid(format!(
                "harmonics alias on the sampling grid (N = {samples}, periods = {periods}, L = {bandlimit})"
            )));
        }
        Ok(Self {
            samples,
            interval,
            period,
            omega0: 2.0 * PI / period,
            bandlimit,
            periods,
        })
    }

    /// Grid with exactly one period: `T = N·Δ`.
    pub fn single_period(samples: usize, interval: f64, bandlimit: usize) -> Result<Self> {
        Self::new(samples, interval, samples as f64 * interval, bandlimit)
    }

    /// The hardware preset: Δ = 70 ps, N = 2795, L = 20, T = N·Δ.
    pub fn experiment_preset() -> Self {
        Self::single_period(2795, 70e-12, 20).expect("preset is valid")
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn interval(&self) -> f64 {
        self.interval
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// Fundamental angular frequency, `2π / T`.
    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn bandlimit(&self) -> usize {
        self.bandlimit
    }

    /// Number of pulse periods spanned by the grid, `N·Δ / T`.
    pub fn periods(&self) -> usize {
        self.periods
    }

    /// Same grid, different bandlimit.
    pub fn with_bandlimit(&self, bandlimit: usize) -> Result<Self> {
        Self::new(self.samples, self.interval, self.period, bandlimit)
    }

    /// DFT bin of the `N`-point grid carrying harmonic `ell`.
    pub fn bin(&self, ell: i64) -> usize {
        (self.periods as i64 * ell).rem_euclid(self.samples as i64) as usize
    }

    pub(crate) fn harmonics(&self) -> Harmonics {
        Harmonics::new(self)
    }
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

/// Evaluates `Σ_ℓ c_ℓ e^{jℓω₀nΔ}` on the sampling grid. Each harmonic owns a
/// distinct DFT bin, so the sum is one inverse FFT of the scattered
/// coefficients.
#[derive(Clone)]
pub(crate) struct Harmonics {
    twiddles: Vec<Complex64>,
    steps: Vec<usize>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Harmonics {
    fn new(config: &AcquisitionConfig) -> Self {
        let n = config.samples();
        let twiddles = (0..n)
            .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64))
            .collect();
        let l = config.bandlimit() as i64;
        let steps = (-l..=l).map(|ell| config.bin(ell)).collect();
        let inverse = FftPlanner::new().plan_fft_inverse(n);
        Self { twiddles, steps, inverse }
    }

    /// `e^{jℓω₀nΔ}` for the `column`-th harmonic (ℓ = column − L).
    pub(crate) fn entry(&self, row: usize, column: usize) -> Complex64 {
        let n = self.twiddles.len();
        self.twiddles[(self.steps[column] * row) % n]
    }

    /// DFT bin of each harmonic, `ℓ = -L..=L`.
    pub(crate) fn bins(&self) -> &[usize] {
        &self.steps
    }

    pub(crate) fn evaluate(&self, coefficients: &[Complex64]) -> Vec<Complex64> {
        debug_assert_eq!(coefficients.len(), self.steps.len());
        let mut out = vec![Complex64::new(0.0, 0.0); self.twiddles.len()];
        for (c, &bin) in coefficients.iter().zip(&self.steps) {
            out[bin] = *c;
        }
        self.inverse.process(&mut out);
        out
    }
}

/// Fourier-series coefficients `p̂_ℓ`, `ℓ = -L..=L`, of the periodic probing
/// pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSpectrum {
    coefficients: Vec<Complex64>,
}

impl PulseSpectrum {
    /// Coefficients ordered `ℓ = -L..=L`. The pulse is real, so the array must
    /// be Hermitian: `p̂_{-ℓ} = conj(p̂_ℓ)`.
    pub fn new(coefficients: Vec<Complex64>) -> Result<Self> {
        if coefficients.len().is_multiple_of(2) {
            return Err(EchoError::invalid(format!(
                "pulse spectrum needs 2L+1 coefficients, got {}",
                coefficients.len()
            )));
        }
        if coefficients.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(EchoError::invalid("pulse coefficients must be finite"));
        }
        let scale = coefficients.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let l = coefficients.len() / 2;
        for k in 0..=l {
            let pos = coefficients[l + k];
            let neg = coefficients[l - k];
            if (pos - neg.conj()).norm() > 1e-9 * scale {
                return Err(EchoError::invalid(format!(
                    "pulse spectrum is not Hermitian at l = {k}"
                )));
            }
        }
        Ok(Self { coefficients })
    }

    /// Raised cosine `p(t) = 1 + cos(ω₀t)`, padded with zeros up to `bandlimit`.
    pub fn raised_cosine(bandlimit: usize) -> Result<Self> {
        if bandlimit == 0 {
            return Err(EchoError::invalid("a raised cosine needs L >= 1"));
        }
        let mut c = vec![Complex64::new(0.0, 0.0); 2 * bandlimit + 1];
        c[bandlimit] = Complex64::new(1.0, 0.0);
        c[bandlimit - 1] = Complex64::new(0.5, 0.0);
        c[bandlimit + 1] = Complex64::new(0.5, 0.0);
        Self::new(c)
    }

    /// Periodized Gaussian of standard deviation `width · T`, truncated to
    /// `|ℓ| ≤ bandlimit` and normalized to `p̂₀ = 1`.
    pub fn periodized_gaussian(bandlimit: usize, width: f64) -> Result<Self> {
        if !(width.is_finite() && width > 0.0) {
            return Err(EchoError::invalid(format!("gaussian width {width} must be positive")));
        }
        let l = bandlimit as i64;
        let c = (-l..=l)
            .map(|ell| {
                let x = ell as f64 * width;
                Complex64::new((-2.0 * PI * PI * x * x).exp(), 0.0)
            })
            .collect();
        Self::new(c)
    }

    pub fn bandlimit(&self) -> usize {
        self.coefficients.len() / 2
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn coefficient(&self, ell: i64) -> Option<Complex64> {
        let idx = ell + self.bandlimit() as i64;
        usize::try_from(idx).ok().and_then(|i| self.coefficients.get(i).copied())
    }

    /// `φ̂_ℓ = |p̂_ℓ|²`, the spectrum of the pulse autocorrelation.
    pub fn phi_hat(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.norm_sqr()).collect()
    }

    /// `ψ̂_ℓ = |p̂_ℓ|⁴`, the weights of the phase-less measurement model.
    pub fn psi_hat(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.norm_sqr().powi(2)).collect()
    }

    /// Bandlimited pulse `p̃(t)` for period `period`.
    pub fn evaluate(&self, t: f64, period: f64) -> f64 {
        let omega0 = 2.0 * PI / period;
        let l = self.bandlimit() as i64;
        (-l..=l)
            .zip(&self.coefficients)
            .map(|(ell, c)| (c * Complex64::from_polar(1.0, ell as f64 * omega0 * t)).re)
            .sum()
    }
}

/// Lowest `2L+1` Fourier-series coefficients of one sampled pulse period.
///
/// The samples are taken as uniform over `[0, T)`; the returned coefficients
/// give the least-squares order-`L` trigonometric fit on that grid.
pub fn pulse_spectrum_from_samples(pulse: &[f64], config: &AcquisitionConfig) -> Result<PulseSpectrum> {
    let p = pulse.len();
    let l = config.bandlimit();
    if p < 2 * l + 1 {
        return Err(EchoError::invalid(format!(
            "{p} pulse samples cannot determine 2L+1 = {} coefficients",
            2 * l + 1
        )));
    }
    let twiddles: Vec<Complex64> = (0..p)
        .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / p as f64))
        .collect();
    let coefficients = (-(l as i64)..=l as i64)
        .map(|ell| {
            let step = ell.rem_euclid(p as i64) as usize;
            let sum: Complex64 = pulse
                .iter()
                .enumerate()
                .map(|(i, &v)| twiddles[(step * i) % p] * v)
                .sum();
            sum / p as f64
        })
        .collect();
    PulseSpectrum::new(coefficients)
}

/// One echo: complex amplitude `Γ` (reflectivity absorbed) at delay `t` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Echo {
    pub amplitude: Complex64,
    pub delay: f64,
}

impl Echo {
    pub fn new(amplitude: Complex64, delay: f64) -> Self {
        Self { amplitude, delay }
    }

    pub fn real(amplitude: f64, delay: f64) -> Self {
        Self::new(Complex64::new(amplitude, 0.0), delay)
    }
}

/// K-sparse scene response: echoes ordered by strictly increasing delay.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSRF {
    echoes: Vec<Echo>,
}

impl SparseSRF {
    pub fn new(echoes: Vec<Echo>) -> Result<Self> {
        if echoes.is_empty() {
            return Err(EchoError::invalid("a sparse SRF needs at least one echo"));
        }
        for e in &echoes {
            if !(e.delay.is_finite() && e.delay >= 0.0) {
                return Err(EchoError::invalid(format!("echo delay {} must be nonnegative", e.delay)));
            }
            if !(e.amplitude.re.is_finite() && e.amplitude.im.is_finite()) {
                return Err(EchoError::invalid("echo amplitudes must be finite"));
            }
        }
        if echoes.windows(2).any(|w| w[1].delay <= w[0].delay) {
            return Err(EchoError::invalid("echo delays must be strictly increasing"));
        }
        Ok(Self { echoes })
    }

    /// Sorts echoes by delay and collapses coincident ones into a single echo
    /// carrying the summed amplitude. Returns the SRF and the number of echoes
    /// that were merged away.
    pub fn merging_coincident(mut echoes: Vec<Echo>) -> Result<(Self, usize)> {
        echoes.sort_by(|a, b| a.delay.total_cmp(&b.delay));
        let before = echoes.len();
        let mut merged: Vec<Echo> = Vec::with_capacity(before);
        for e in echoes {
            match merged.last_mut() {
                Some(last) if coincident(last.delay, e.delay) => last.amplitude += e.amplitude,
                _ => merged.push(e),
            }
        }
        let removed = before - merged.len();
        Ok((Self::new(merged)?, removed))
    }

    pub fn echoes(&self) -> &[Echo] {
        &self.echoes
    }

    /// Number of echoes `K`.
    pub fn len(&self) -> usize {
        self.echoes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.echoes.is_empty()
    }

    fn check_period(&self, period: f64) -> Result<()> {
        match self.echoes.iter().find(|e| e.delay >= period) {
            Some(e) => Err(EchoError::invalid(format!(
                "echo delay {} lies outside one period [0, {period})",
                e.delay
            ))),
            None => Ok(()),
        }
    }
}

fn coincident(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Phase-intact (`y`) or autocorrelated, phase-less (`m`) samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeasurementKind {
    PhaseIntact,
    PhaseLess,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementVector {
    samples: Vec<f64>,
    config: AcquisitionConfig,
    kind: MeasurementKind,
}

impl MeasurementVector {
    pub fn phase_intact(samples: Vec<f64>, config: AcquisitionConfig) -> Result<Self> {
        check_length(&samples, &config)?;
        Ok(Self { samples, config, kind: MeasurementKind::PhaseIntact })
    }

    /// Rejects vectors that are not cyclically even, since no autocorrelation
    /// can produce them.
    pub fn phase_less(samples: Vec<f64>, config: AcquisitionConfig) -> Result<Self> {
        check_length(&samples, &config)?;
        let n = samples.len();
        let peak = samples.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let residue = (1..n)
            .map(|i| (samples[i] - samples[n - i]).abs())
            .fold(0.0, f64::max);
        if residue > EVENNESS_TOLERANCE * peak {
            return Err(EchoError::DataInconsistency { residue, norm: peak });
        }
        Ok(Self { samples, config, kind: MeasurementKind::PhaseLess })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn config(&self) -> &AcquisitionConfig {
        &self.config
    }

    pub fn kind(&self) -> MeasurementKind {
        self.kind
    }
}

fn check_length(samples: &[f64], config: &AcquisitionConfig) -> Result<()> {
    if samples.len() != config.samples() {
        return Err(EchoError::invalid(format!(
            "expected {} samples, got {}",
            config.samples(),
            samples.len()
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(EchoError::invalid("measurement samples must be finite"));
    }
    Ok(())
}

/// Cyclic autocorrelation `a[n] = Σ_i x[i]·x[(i+n) mod N]` computed through
/// the FFT. Plans are built once per length and reused across calls.
#[derive(Clone)]
pub struct Autocorrelator {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Autocorrelator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Autocorrelator").field("len", &self.len).finish()
    }
}

impl Autocorrelator {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(EchoError::invalid("autocorrelation of an empty sequence"));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn compute(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.len {
            return Err(EchoError::invalid(format!(
                "autocorrelator planned for {} samples, got {}",
                self.len,
                x.len()
            )));
        }
        let n = self.len;
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        for v in buf.iter_mut() {
            *v = Complex64::new(v.norm_sqr(), 0.0);
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / n as f64;
        let raw: Vec<f64> = buf.iter().map(|v| v.re * scale).collect();
        // Exact evenness; the FFT only gives it up to rounding.
        Ok((0..n).map(|i| 0.5 * (raw[i] + raw[(n - i) % n])).collect())
    }
}

/// One-shot cyclic autocorrelation (no `1/N` normalization).
pub fn cyclic_autocorrelation(x: &[f64]) -> Result<Vec<f64>> {
    Autocorrelator::new(x.len())?.compute(x)
}

/// Phase-intact SRF spectrum `ĥ(ω) = Σ_k Γ_k e^{jωt_k}`.
pub fn h_hat_of_omega(srf: &SparseSRF, omega: f64) -> Complex64 {
    srf.echoes
        .iter()
        .map(|e| e.amplitude * Complex64::from_polar(1.0, omega * e.delay))
        .sum()
}

/// Phase-less spectrum `ŝ(ω) = |ĥ(ω)|²`.
pub fn s_hat_of_omega(srf: &SparseSRF, omega: f64) -> f64 {
    h_hat_of_omega(srf, omega).norm_sqr()
}

/// Conventional (time-marginalized) photograph intensity `Σ_k Γ_k`.
pub fn marginalize(srf: &SparseSRF) -> Complex64 {
    srf.echoes.iter().map(|e| e.amplitude).sum()
}

fn check_consistent(srf: &SparseSRF, pulse: &PulseSpectrum, config: &AcquisitionConfig) -> Result<()> {
    if pulse.bandlimit() != config.bandlimit() {
        return Err(EchoError::invalid(format!(
            "pulse bandlimit {} differs from acquisition bandlimit {}",
            pulse.bandlimit(),
            config.bandlimit()
        )));
    }
    srf.check_period(config.period())
}

/// Evaluates harmonic coefficients on the grid and keeps the real part,
/// refusing results a real sensor could not produce.
fn real_samples(coefficients: &[Complex64], harmonics: &Harmonics) -> Result<Vec<f64>> {
    let values = harmonics.evaluate(coefficients);
    let residue = values.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    let norm = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if residue > REAL_RESIDUE_TOLERANCE * norm {
        return Err(EchoError::DataInconsistency { residue, norm });
    }
    Ok(values.into_iter().map(|v| v.re).collect())
}

pub(crate) fn phaseless_coefficients(srf: &SparseSRF, pulse: &PulseSpectrum, omega0: f64) -> Vec<Complex64> {
    let l = pulse.bandlimit() as i64;
    (-l..=l)
        .zip(pulse.psi_hat())
        .map(|(ell, psi)| Complex64::new(psi * s_hat_of_omega(srf, ell as f64 * omega0), 0.0))
        .collect()
}

pub(crate) fn phaseintact_coefficients(srf: &SparseSRF, pulse: &PulseSpectrum, omega0: f64) -> Vec<Complex64> {
    let l = pulse.bandlimit() as i64;
    (-l..=l)
        .zip(pulse.phi_hat())
        .map(|(ell, phi)| h_hat_of_omega(srf, ell as f64 * omega0).conj() * phi)
        .collect()
}

/// Reusable forward model for one acquisition grid and pulse.
pub struct ForwardModel {
    pulse: PulseSpectrum,
    config: AcquisitionConfig,
    harmonics: Harmonics,
}

impl ForwardModel {
    pub fn new(pulse: PulseSpectrum, config: AcquisitionConfig) -> Result<Self> {
        if pulse.bandlimit() != config.bandlimit() {
            return Err(EchoError::invalid(format!(
                "pulse bandlimit {} differs from acquisition bandlimit {}",
                pulse.bandlimit(),
                config.bandlimit()
            )));
        }
        let harmonics = config.harmonics();
        Ok(Self { pulse, config, harmonics })
    }

    pub fn pulse(&self) -> &PulseSpectrum {
        &self.pulse
    }

    pub fn config(&self) -> &AcquisitionConfig {
        &self.config
    }

    pub fn phaseless(&self, srf: &SparseSRF) -> Result<MeasurementVector> {
        check_consistent(srf, &self.pulse, &self.config)?;
        let c = phaseless_coefficients(srf, &self.pulse, self.config.omega0());
        let samples = real_samples(&c, &self.harmonics)?;
        Ok(MeasurementVector { samples, config: self.config.clone(), kind: MeasurementKind::PhaseLess })
    }

    pub fn phaseintact(&self, srf: &SparseSRF) -> Result<MeasurementVector> {
        check_consistent(srf, &self.pulse, &self.config)?;
        let c = phaseintact_coefficients(srf, &self.pulse, self.config.omega0());
        let samples = real_samples(&c, &self.harmonics)?;
        Ok(MeasurementVector { samples, config: self.config.clone(), kind: MeasurementKind::PhaseIntact })
    }
}

/// Phase-less samples `m = U D_ψ̂ ŝ`.
pub fn synthesize_phaseless(
    srf: &SparseSRF,
    pulse: &PulseSpectrum,
    config: &AcquisitionConfig,
) -> Result<MeasurementVector> {
    ForwardModel::new(pulse.clone(), config.clone())?.phaseless(srf)
}

/// Phase-intact lock-in samples `y = U D_φ̂ conj(ĥ)`.
pub fn synthesize_phaseintact(
    srf: &SparseSRF,
    pulse: &PulseSpectrum,
    config: &AcquisitionConfig,
) -> Result<MeasurementVector> {
    ForwardModel::new(pulse.clone(), config.clone())?.phaseintact(srf)
}
