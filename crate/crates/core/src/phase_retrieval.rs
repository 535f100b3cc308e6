//! From exponential components to echo magnitudes.
//!
//! A phase-less spectrum of a `K`-echo scene is
//! `ŝ(ω) = a₀ + Σ_{k≠m} a_{k,m} e^{j(ωt_{k,m} + ∠Γ_{k,m})}`, a sum of
//! `K² − K + 1` exponentials. For `K = 2` the constant and the single cross
//! term determine `{|Γ₀|, |Γ₁|}` up to ordering.
//!
//! The phase-intact path ([`oracle_extract`]) recovers the full `{Γ_k, t_k}`
//! and serves as ground truth.

use crate::error::{EchoError, Result};
use crate::signal::{AcquisitionConfig, Complex64, Echo, SparseSRF};
use crate::spectral::{
    annihilating_filter, cadzow_denoise, fit_amplitudes, hankel_singular_values, CadzowSettings, Component, ExponentialModel,
    ModelWarning, RootPairing, UniformSpectrumSamples,
};

/// Components closer to zero delay than this fraction of the period are DC.
const DC_DELAY_TOL: f64 = 1e-9;
/// Tolerance on the imaginary part of the DC amplitude, relative to its modulus.
const DC_IMAG_TOL: f64 = 1e-6;
/// Conjugate components must sit at opposite delays within this fraction of
/// the period.
const PAIR_DELAY_TOL: f64 = 1e-4;
/// Hankel singular values below this fraction of the largest are treated as
/// zero when detecting vanished echoes.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// One oscillatory term `a·e^{j(ωt + θ)}` of a phase-less spectrum, together
/// with its conjugate at `−t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossTerm {
    /// `|Γ_k||Γ_m|`.
    pub amplitude: f64,
    /// Delay separation `t_m − t_k`, folded into `(0, T/2]`.
    pub delay: f64,
    /// `∠Γ_k − ∠Γ_m` for the term at the positive separation.
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutocorrParams {
    /// `Σ|Γ_k|²`.
    pub a0: f64,
    pub cross_terms: Vec<CrossTerm>,
}

impl AutocorrParams {
    /// Exact parameters of a known scene.
    pub fn from_srf(srf: &SparseSRF, period: f64) -> Self {
        let echoes = srf.echoes();
        let a0 = echoes.iter().map(|e| e.amplitude.norm_sqr()).sum();
        let mut cross_terms = Vec::new();
        for (k, ek) in echoes.iter().enumerate() {
            for em in &echoes[k + 1..] {
                let c = ek.amplitude * em.amplitude.conj();
                let separation = (em.delay - ek.delay).rem_euclid(period);
                let (delay, phase) = if separation > period / 2.0 {
                    (period - separation, -c.arg())
                } else {
                    (separation, c.arg())
                };
                cross_terms.push(CrossTerm { amplitude: c.norm(), delay, phase });
            }
        }
        Self { a0, cross_terms }
    }
}

/// Reads `{a₀, a_{k,m}, t_{k,m}, ∠Γ_{k,m}}` off a fitted model of a
/// phase-less spectrum.
pub fn identify_parameters(model: &ExponentialModel) -> Result<AutocorrParams> {
    if !model.is_fitted() {
        return Err(EchoError::invalid("model amplitudes have not been fitted"));
    }
    let period = model.period();
    let (dc, rest): (Vec<&Component>, Vec<&Component>) = model
        .components()
        .iter()
        .partition(|c| c.delay.abs() < DC_DELAY_TOL * period);
    let dc = match dc.as_slice() {
        [one] => one.amplitude.expect("fitted"),
        [] => return Err(EchoError::ModelOrderMismatch("model has no DC component".into())),
        many => {
            return Err(EchoError::ModelOrderMismatch(format!(
                "model has {} components at zero delay",
                many.len()
            )))
        }
    };
    if dc.im.abs() > DC_IMAG_TOL * dc.norm() {
        return Err(EchoError::InconsistentSpectrum(format!("complex DC amplitude {dc}")));
    }
    if dc.re <= 0.0 {
        return Err(EchoError::InconsistentSpectrum(format!("nonpositive DC amplitude {}", dc.re)));
    }

    let (positive, negative): (Vec<&Component>, Vec<&Component>) = rest.into_iter().partition(|c| c.delay > 0.0);
    if positive.len() != negative.len() {
        return Err(EchoError::InconsistentSpectrum(format!(
            "{} components at positive delay but {} at negative delay",
            positive.len(),
            negative.len()
        )));
    }
    let mut used = vec![false; negative.len()];
    let mut cross_terms = Vec::with_capacity(positive.len());
    for p in positive {
        let partner = negative
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, n)| (i, (p.delay + n.delay).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        let Some((i, _)) = partner.filter(|&(_, gap)| gap <= PAIR_DELAY_TOL * period) else {
            return Err(EchoError::InconsistentSpectrum(format!(
                "component at delay {:e} has no conjugate partner",
                p.delay
            )));
        };
        used[i] = true;
        let (cp, cn) = (p.amplitude.expect("fitted"), negative[i].amplitude.expect("fitted"));
        cross_terms.push(CrossTerm { amplitude: 0.5 * (cp.norm() + cn.norm()), delay: p.delay, phase: cp.arg() });
    }
    Ok(AutocorrParams { a0: dc.re, cross_terms })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MagnitudeOrdering {
    ByMagnitudeDescending,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ResolveDiagnostics {
    /// `ã₀₁` exceeded `ã₀` and was clamped.
    pub clamped: bool,
    /// `max(ã₀₁ − ã₀, 0)` before clamping.
    pub excess: f64,
    /// The spectrum carried no cross term; the weaker echo is reported as 0.
    pub vanishing_cross_term: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EchoMagnitudes {
    pub magnitudes: Vec<f64>,
    pub ordering: MagnitudeOrdering,
    pub diagnostics: ResolveDiagnostics,
}

impl EchoMagnitudes {
    fn single_echo(a0: f64) -> Self {
        Self {
            magnitudes: vec![a0.max(0.0).sqrt(), 0.0],
            ordering: MagnitudeOrdering::ByMagnitudeDescending,
            diagnostics: ResolveDiagnostics { vanishing_cross_term: true, ..Default::default() },
        }
    }
}

/// Closed-form two-echo magnitudes
/// `|Γ̃_{0,1}| = (√(ã₀ + ã₀₁) ± √(ã₀ − ã₀₁)) / 2` with `ã₀₁ = 2a₀₁`.
///
/// Noise can push `ã₀₁` above `ã₀`; it is then clamped to `ã₀` and the
/// diagnostic flag set.
pub fn resolve_magnitudes_k2(params: &AutocorrParams) -> Result<EchoMagnitudes> {
    if !(params.a0 > 0.0) {
        return Err(EchoError::InconsistentSpectrum(format!("a0 = {} must be positive", params.a0)));
    }
    if params.cross_terms.len() != 1 {
        return Err(EchoError::WrongArity { expected: 1, found: params.cross_terms.len() });
    }
    let a0 = params.a0;
    let mut a01 = 2.0 * params.cross_terms[0].amplitude;
    let mut diagnostics = ResolveDiagnostics::default();
    if a01 > a0 {
        diagnostics.clamped = true;
        diagnostics.excess = a01 - a0;
        a01 = a0;
    }
    let (sum, diff) = ((a0 + a01).sqrt(), (a0 - a01).sqrt());
    Ok(EchoMagnitudes {
        magnitudes: vec![(sum + diff) / 2.0, (sum - diff) / 2.0],
        ordering: MagnitudeOrdering::ByMagnitudeDescending,
        diagnostics,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoverySettings {
    /// Cadzow denoising before the annihilating filter; `None` skips it.
    pub cadzow: Option<CadzowSettings>,
    /// Relative singular-value threshold for detecting missing echoes on
    /// exact data.
    pub rank_tol: f64,
    /// When the full model cannot be fitted (its components collapse or fail
    /// to pair), retry with one echo fewer instead of failing. The outcome
    /// records the error that triggered the retry.
    pub reduce_on_degenerate: bool,
    /// A component counts as present only if its Hankel singular value
    /// exceeds the next one by this factor; weaker ones sit in the noise and
    /// are dropped. 1 disables the test.
    pub order_gap: f64,
}

impl Default for RecoverySettings {
    fn default() -> Self {
        Self { cadzow: Some(CadzowSettings::default()), rank_tol: DEFAULT_RANK_TOL, reduce_on_degenerate: true, order_gap: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CadzowSummary {
    pub iterations: usize,
    pub converged: bool,
    pub tail_ratio: f64,
}

fn denoise(
    samples: UniformSpectrumSamples,
    rank: usize,
    settings: &RecoverySettings,
) -> Result<(UniformSpectrumSamples, Option<CadzowSummary>)> {
    match settings.cadzow {
        None => Ok((samples, None)),
        Some(c) => {
            let out = cadzow_denoise(&samples, rank, c.max_iters, c.tol)?;
            let summary = CadzowSummary { iterations: out.iterations, converged: out.converged, tail_ratio: out.tail_ratio };
            Ok((out.samples, Some(summary)))
        }
    }
}

/// Number of components, at most `max`, that the singular values `sv`
/// (descending) support: those above `rank_tol·σ₁`, then only while each
/// stands clear of the next by `order_gap`.
fn supported_order(sv: &[f64], max: usize, settings: &RecoverySettings) -> usize {
    let top = sv.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return 0;
    }
    let rank = sv.iter().filter(|&&s| s > settings.rank_tol * top).count();
    // Exactly low-rank data keep their rank; the gap test is for noise.
    if rank < max {
        return rank;
    }
    let mut order = max;
    while order > 1 && sv.get(order).is_some_and(|&next| sv[order - 1] < settings.order_gap * next) {
        order -= 1;
    }
    order
}

/// Errors that mean the data do not support the requested number of echoes,
/// as opposed to malformed input.
fn is_degenerate(e: &EchoError) -> bool {
    matches!(
        e,
        EchoError::ModelOrderMismatch(_)
            | EchoError::NearDegenerateModel { .. }
            | EchoError::CancellingComponents { .. }
            | EchoError::InconsistentSpectrum(_)
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaselessRecovery {
    pub magnitudes: EchoMagnitudes,
    pub params: AutocorrParams,
    pub warnings: Vec<ModelWarning>,
    pub cadzow: Option<CadzowSummary>,
    /// Why the two-echo model was abandoned for the constant term alone.
    pub reduced_by: Option<EchoError>,
}

impl PhaselessRecovery {
    fn single_echo(a0: f64) -> Self {
        Self {
            magnitudes: EchoMagnitudes::single_echo(a0),
            params: AutocorrParams { a0, cross_terms: Vec::new() },
            warnings: Vec::new(),
            cadzow: None,
            reduced_by: None,
        }
    }

    /// A two-echo scene with the recovered magnitudes, separation and
    /// relative phase, the stronger echo placed at zero delay. Its phase-less
    /// measurement matches that of any scene with the same parameters.
    pub fn resynthesis_srf(&self) -> Result<SparseSRF> {
        let g = &self.magnitudes.magnitudes;
        let mut echoes = vec![Echo::real(g[0], 0.0)];
        if let Some(term) = self.params.cross_terms.first() {
            if g[1] > 0.0 && term.delay > 0.0 {
                echoes.push(Echo::new(Complex64::from_polar(g[1], -term.phase), term.delay));
            }
        }
        SparseSRF::new(echoes)
    }
}

fn mean_level(s_hat: &[f64]) -> Result<f64> {
    let a0 = s_hat.iter().sum::<f64>() / s_hat.len() as f64;
    if a0 > 0.0 {
        Ok(a0)
    } else {
        Err(EchoError::InconsistentSpectrum(format!("a0 = {a0} must be positive")))
    }
}

/// Two-echo magnitudes from phase-less Fourier samples `ŝ(ℓω₀)`,
/// `ℓ = -L..=L`: optional Cadzow at rank 3, annihilating filter of order 3
/// with conjugate pairing, amplitude fit, parameter identification and the
/// closed-form resolution.
///
/// Exactly rank-1 data (one echo vanished) short-circuit to `{√a₀, 0}`.
pub fn recover_phaseless(s_hat: &[f64], omega0: f64, settings: &RecoverySettings) -> Result<PhaselessRecovery> {
    const ORDER: usize = 3;
    let samples = UniformSpectrumSamples::from_real(s_hat, omega0)?;
    if samples.bandlimit() < ORDER {
        return Err(EchoError::ModelOrderMismatch(format!(
            "bandlimit L = {} is below the {ORDER} exponentials of a two-echo phase-less spectrum",
            samples.bandlimit()
        )));
    }
    let sv = hankel_singular_values(&samples)?;
    if supported_order(&sv, ORDER, settings) <= 1 {
        return Ok(PhaselessRecovery::single_echo(mean_level(s_hat)?));
    }
    let (samples, cadzow) = denoise(samples, ORDER, settings)?;
    let attempt = annihilating_filter(&samples, ORDER, RootPairing::Conjugate)
        .and_then(|model| fit_amplitudes(&samples, &model))
        .and_then(|model| {
            let params = identify_parameters(&model)?;
            let magnitudes = resolve_magnitudes_k2(&params)?;
            Ok(PhaselessRecovery { magnitudes, params, warnings: model.warnings().to_vec(), cadzow, reduced_by: None })
        });
    match attempt {
        Err(e) if settings.reduce_on_degenerate && is_degenerate(&e) => {
            let mut out = PhaselessRecovery::single_echo(mean_level(s_hat).map_err(|_| e.clone())?);
            out.cadzow = cadzow;
            out.reduced_by = Some(e);
            Ok(out)
        }
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRecovery {
    pub srf: SparseSRF,
    /// Echoes requested but not recovered: exactly absent from the data, or
    /// dropped after a degenerate fit.
    pub vanished_echoes: usize,
    pub warnings: Vec<ModelWarning>,
    pub cadzow: Option<CadzowSummary>,
    pub reduced_by: Option<EchoError>,
}

/// Full `{Γ_k, t_k}` from phase-intact samples `ĥ(ℓω₀)`, `ℓ = -L..=L`, with
/// default settings.
pub fn oracle_extract(h_hat: &[Complex64], config: &AcquisitionConfig, echoes: usize) -> Result<SparseSRF> {
    Ok(recover_phaseintact(h_hat, config.omega0(), echoes, &RecoverySettings::default())?.srf)
}

/// Phase-intact recovery: Cadzow at rank `K`, annihilating filter of order
/// `K`, amplitude fit. Delays map back to `[0, T)`.
pub fn recover_phaseintact(
    h_hat: &[Complex64],
    omega0: f64,
    echoes: usize,
    settings: &RecoverySettings,
) -> Result<OracleRecovery> {
    if echoes == 0 {
        return Err(EchoError::invalid("at least one echo is required"));
    }
    let samples = UniformSpectrumSamples::new(h_hat.to_vec(), omega0)?;
    if samples.bandlimit() < echoes {
        return Err(EchoError::ModelOrderMismatch(format!(
            "bandlimit L = {} cannot resolve {echoes} echoes",
            samples.bandlimit()
        )));
    }
    let mut order = supported_order(&hankel_singular_values(&samples)?, echoes, settings);
    if order == 0 {
        return Err(EchoError::ModelOrderMismatch("phase-intact spectrum is identically zero".into()));
    }
    let mut reduced_by = None;
    loop {
        match extract_echoes(&samples, order, settings) {
            Ok((srf, warnings, cadzow)) => {
                return Ok(OracleRecovery { srf, vanished_echoes: echoes - order, warnings, cadzow, reduced_by })
            }
            Err(e) if settings.reduce_on_degenerate && order > 1 && is_degenerate(&e) => {
                reduced_by.get_or_insert(e);
                order -= 1;
            }
            Err(e) => return Err(e),
        }
    }
}

type Extraction = (SparseSRF, Vec<ModelWarning>, Option<CadzowSummary>);

fn extract_echoes(samples: &UniformSpectrumSamples, order: usize, settings: &RecoverySettings) -> Result<Extraction> {
    let (samples, cadzow) = denoise(samples.clone(), order, settings)?;
    let model = fit_amplitudes(&samples, &annihilating_filter(&samples, order, RootPairing::Free)?)?;
    let period = model.period();
    let mut list: Vec<Echo> = model
        .components()
        .iter()
        .map(|c| Echo::new(c.amplitude.expect("fitted"), (-c.delay).rem_euclid(period)))
        .collect();
    list.sort_by(|a, b| a.delay.total_cmp(&b.delay));
    Ok((SparseSRF::new(list)?, model.warnings().to_vec(), cadzow))
}
