//! Phase-less time-of-flight echo recovery.
//!
//! A lock-in sensor correlates the scene response `h` (a train of `K` echoes
//! `Γ_k δ(t − t_k)`) with a periodic pulse. When only the cyclic
//! autocorrelation of the sampled output survives, the echo phases are lost,
//! yet the echo magnitudes `|Γ_k|` remain recoverable:
//!
//! - [`signal`]: scene, pulse and acquisition types and the forward model.
//! - [`deconvolve`]: weighted Fourier deconvolution of the samples.
//! - [`spectral`]: Cadzow denoising, annihilating filter and amplitude fit.
//! - [`phase_retrieval`]: magnitudes from the phase-less spectrum, and the
//!   phase-intact reference path.

pub mod deconvolve;
pub mod error;
pub mod phase_retrieval;
pub mod signal;
pub mod spectral;

pub use deconvolve::{build_system, build_system_with_floor, estimate_h_hat, estimate_s_hat, MeasurementSystem};
pub use error::{EchoError, Result};
pub use phase_retrieval::{
    identify_parameters, oracle_extract, recover_phaseintact, recover_phaseless, resolve_magnitudes_k2,
    AutocorrParams, CrossTerm, EchoMagnitudes, MagnitudeOrdering, OracleRecovery, PhaselessRecovery,
    RecoverySettings,
};
pub use signal::{
    cyclic_autocorrelation, h_hat_of_omega, marginalize, s_hat_of_omega, synthesize_phaseintact,
    synthesize_phaseless, AcquisitionConfig, Autocorrelator, Complex64, Echo, ForwardModel, MeasurementKind,
    MeasurementVector, PulseSpectrum, SparseSRF,
};
pub use spectral::{
    annihilating_filter, cadzow_denoise, fit_amplitudes, CadzowSettings, Component, ExponentialModel,
    ModelWarning, RootPairing, UniformSpectrumSamples, MAX_AMPLITUDE_GAIN, MAX_VANDERMONDE_CONDITION,
};
