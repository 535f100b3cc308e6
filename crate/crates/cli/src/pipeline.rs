//! Per-pixel synthesis and reconstruction over a scene.

use echo_core::{
    build_system_with_floor, estimate_h_hat, estimate_s_hat, h_hat_of_omega, recover_phaseintact, recover_phaseless,
    s_hat_of_omega, AcquisitionConfig, Echo, Autocorrelator, ForwardModel, MeasurementKind, MeasurementSystem,
    MeasurementVector, RecoverySettings, SparseSRF,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::scene::Scene;

#[derive(Debug, Clone, PartialEq)]
pub struct PhaselessPixel {
    /// Descending.
    pub magnitudes: [f64; 2],
    pub separation: Option<f64>,
    pub clamped: bool,
    pub vanishing: bool,
    /// Set when the two-echo fit failed and the pixel fell back to one echo.
    pub reduced: Option<String>,
    pub low_confidence: bool,
    pub resynthesis_sse: f64,
    pub input_peak: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OraclePixel {
    /// In delay order; echoes that were not recovered read 0.
    pub magnitudes: [f64; 2],
    pub delays: [Option<f64>; 2],
    pub vanished: usize,
    pub reduced: Option<String>,
    pub low_confidence: bool,
    pub resynthesis_sse: f64,
    pub input_peak: f64,
}

pub type PathOutcome<T> = Option<std::result::Result<T, String>>;

#[derive(Debug, Clone, PartialEq)]
pub struct PixelOutcome {
    pub phaseless: PathOutcome<PhaselessPixel>,
    pub oracle: PathOutcome<OraclePixel>,
}

impl PixelOutcome {
    pub fn is_ok(&self) -> bool {
        !matches!(self.phaseless, Some(Err(_))) && !matches!(self.oracle, Some(Err(_)))
    }

    fn failed(pipeline: &Pipeline, reason: String) -> Self {
        Self {
            phaseless: pipeline.phaseless.is_some().then(|| Err(reason.clone())),
            oracle: pipeline.oracle.is_some().then_some(Err(reason)),
        }
    }
}

/// Time samples, spectra and fits of one pixel.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PixelTrace {
    pub y: Vec<f64>,
    pub m: Vec<f64>,
    pub y_fit: Option<Vec<f64>>,
    pub m_fit: Option<Vec<f64>>,
    pub s_hat: Option<Vec<f64>>,
    pub s_hat_fit: Option<Vec<f64>>,
    pub h_hat_abs: Option<Vec<f64>>,
    pub h_hat_abs_fit: Option<Vec<f64>>,
}

/// Shared, immutable per-run state: pulse, grid, factorized systems.
pub struct Pipeline {
    acquisition: AcquisitionConfig,
    forward: ForwardModel,
    autocorrelator: Autocorrelator,
    oracle: Option<MeasurementSystem>,
    phaseless: Option<MeasurementSystem>,
    settings: RecoverySettings,
    echoes: usize,
    noise_sigma: f64,
    seed: u64,
}

impl Pipeline {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let acquisition = config.acquisition.build()?;
        let pulse = config.pulse.build(&config.acquisition)?;
        let r = &config.reconstruction;
        let system = |kind| build_system_with_floor(&pulse, &acquisition, kind, r.weight_floor_rel);
        let oracle = r.oracle.then(|| system(MeasurementKind::PhaseIntact)).transpose()?;
        let phaseless = r.phaseless.then(|| system(MeasurementKind::PhaseLess)).transpose()?;
        Ok(Self {
            forward: ForwardModel::new(pulse, acquisition.clone())?,
            autocorrelator: Autocorrelator::new(acquisition.samples())?,
            acquisition,
            oracle,
            phaseless,
            settings: r.settings(),
            echoes: r.echoes,
            noise_sigma: config.noise.sigma_rel_peak,
            seed: config.noise.seed,
        })
    }

    pub fn acquisition(&self) -> &AcquisitionConfig {
        &self.acquisition
    }

    /// Lock-in samples `y` of one pixel with its own noise stream, so the
    /// result does not depend on scheduling.
    pub fn measure(&self, scene: &Scene, index: usize) -> Result<Vec<f64>> {
        let srf = scene.srf(index)?;
        let mut y = self.forward.phaseintact(&srf)?.into_samples();
        if self.noise_sigma > 0.0 {
            let peak = y.iter().fold(0.0f64, |p, v| p.max(v.abs()));
            let normal = Normal::new(0.0, self.noise_sigma * peak)
                .map_err(|e| CliError::Config(format!("noise distribution: {e}")))?;
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(index as u64);
            for v in y.iter_mut() {
                *v += normal.sample(&mut rng);
            }
        }
        Ok(y)
    }

    /// Phase-less samples `m = ac(y)/N`.
    pub fn autocorrelate(&self, y: &[f64]) -> Result<Vec<f64>> {
        let n = self.acquisition.samples() as f64;
        Ok(self.autocorrelator.compute(y)?.into_iter().map(|v| v / n).collect())
    }

    pub fn reconstruct(&self, y: &[f64]) -> PixelOutcome {
        self.reconstruct_traced(y, None)
    }

    pub fn trace(&self, y: &[f64]) -> (PixelOutcome, PixelTrace) {
        let mut trace = PixelTrace::default();
        let outcome = self.reconstruct_traced(y, Some(&mut trace));
        (outcome, trace)
    }

    fn reconstruct_traced(&self, y: &[f64], mut trace: Option<&mut PixelTrace>) -> PixelOutcome {
        if let Some(t) = trace.as_deref_mut() {
            t.y = y.to_vec();
        }
        let oracle = self.oracle.as_ref().map(|system| {
            self.oracle_pixel(system, y, trace.as_deref_mut()).map_err(|e| e.to_string())
        });
        let phaseless = self.phaseless.as_ref().map(|system| {
            self.phaseless_pixel(system, y, trace).map_err(|e| e.to_string())
        });
        PixelOutcome { phaseless, oracle }
    }

    fn oracle_pixel(
        &self,
        system: &MeasurementSystem,
        y: &[f64],
        trace: Option<&mut PixelTrace>,
    ) -> Result<OraclePixel> {
        let omega0 = self.acquisition.omega0();
        let input = MeasurementVector::phase_intact(y.to_vec(), self.acquisition.clone())?;
        let h_hat = estimate_h_hat(&input, system)?;
        let rec = recover_phaseintact(&h_hat, omega0, self.echoes, &self.settings)?;
        let mut echoes = rec.srf.echoes().to_vec();
        echoes.sort_by(|a, b| a.delay.total_cmp(&b.delay));
        let mut magnitudes = [0.0; 2];
        let mut delays = [None; 2];
        for (k, e) in echoes.iter().take(2).enumerate() {
            magnitudes[k] = e.amplitude.norm();
            delays[k] = Some(e.delay);
        }
        let resynthesis = real_sensor_srf(&rec.srf)?;
        let fit = self.forward.phaseintact(&resynthesis)?.into_samples();
        if let Some(t) = trace {
            let l = system.effective_bandlimit() as i64;
            t.h_hat_abs = Some(h_hat.iter().map(|v| v.norm()).collect());
            t.h_hat_abs_fit = Some((-l..=l).map(|ell| h_hat_of_omega(&rec.srf, ell as f64 * omega0).norm()).collect());
            t.y_fit = Some(fit.clone());
        }
        Ok(OraclePixel {
            magnitudes,
            delays,
            vanished: rec.vanished_echoes,
            reduced: rec.reduced_by.map(|e| e.to_string()),
            low_confidence: !rec.warnings.is_empty(),
            resynthesis_sse: sse(y, &fit),
            input_peak: peak(y),
        })
    }

    fn phaseless_pixel(
        &self,
        system: &MeasurementSystem,
        y: &[f64],
        trace: Option<&mut PixelTrace>,
    ) -> Result<PhaselessPixel> {
        let omega0 = self.acquisition.omega0();
        let m = self.autocorrelate(y)?;
        let input = MeasurementVector::phase_less(m, self.acquisition.clone())?;
        let s_hat = estimate_s_hat(&input, system)?;
        let rec = recover_phaseless(&s_hat, omega0, &self.settings)?;
        let srf = real_sensor_srf(&rec.resynthesis_srf()?)?;
        let fit = self.forward.phaseless(&srf)?.into_samples();
        let m = input.into_samples();
        let g = &rec.magnitudes.magnitudes;
        let d = rec.magnitudes.diagnostics;
        let out = PhaselessPixel {
            magnitudes: [g[0], g[1]],
            separation: rec.params.cross_terms.first().map(|c| c.delay),
            clamped: d.clamped,
            vanishing: d.vanishing_cross_term,
            reduced: rec.reduced_by.as_ref().map(|e| e.to_string()),
            low_confidence: !rec.warnings.is_empty(),
            resynthesis_sse: sse(&m, &fit),
            input_peak: peak(&m),
        };
        if let Some(t) = trace {
            let l = system.effective_bandlimit() as i64;
            t.s_hat_fit = Some((-l..=l).map(|ell| s_hat_of_omega(&srf, ell as f64 * omega0)).collect());
            t.s_hat = Some(s_hat);
            t.m_fit = Some(fit);
            t.m = m;
        }
        Ok(out)
    }

    /// Synthesizes and reconstructs every pixel. Output order is pixel order
    /// whatever the worker count.
    pub fn run_scene(&self, scene: &Scene, workers: usize) -> Result<Vec<PixelOutcome>> {
        scene.validate(self.acquisition.period())?;
        in_pool(workers, || {
            (0..scene.len())
                .into_par_iter()
                .map(|i| match self.measure(scene, i) {
                    Ok(y) => self.reconstruct(&y),
                    Err(e) => PixelOutcome::failed(self, e.to_string()),
                })
                .collect()
        })
    }

    /// Reconstructs recorded lock-in samples, one vector per pixel.
    pub fn run_measurements(&self, samples: &[Vec<f64>], workers: usize) -> Result<Vec<PixelOutcome>> {
        in_pool(workers, || samples.par_iter().map(|y| self.reconstruct(y)).collect())
    }
}

fn in_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    Ok(pool.install(job))
}

/// The echoes with each amplitude rounded to the real axis, keeping its
/// magnitude. Real lock-in samples only arise from real amplitudes, and noisy
/// fits leave small imaginary parts.
pub fn real_sensor_srf(srf: &SparseSRF) -> Result<SparseSRF> {
    let echoes = srf
        .echoes()
        .iter()
        .map(|e| Echo::real(e.amplitude.norm().copysign(e.amplitude.re), e.delay))
        .collect();
    Ok(SparseSRF::new(echoes)?)
}

fn sse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn peak(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |p, v| p.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::SceneSpec;

    fn small_config(noise: f64) -> RunConfig {
        let mut c = RunConfig::default();
        c.acquisition.samples = 401;
        c.acquisition.delta_ps = 500.0;
        c.noise.sigma_rel_peak = noise;
        c.noise.seed = 7;
        c.scene = SceneSpec::Flat { width_px: 2, height_px: 2, gamma0: 1.0, gamma1: 0.5, t0_ns: 10.0, t1_ns: 60.0 };
        c
    }

    #[test]
    fn noiseless_flat_pixel_is_exact() {
        let c = small_config(0.0);
        let p = Pipeline::new(&c).unwrap();
        let scene = Scene::generate(&c.scene).unwrap();
        let out = p.run_scene(&scene, 1).unwrap();
        for o in &out {
            let pl = o.phaseless.as_ref().unwrap().as_ref().unwrap();
            let or = o.oracle.as_ref().unwrap().as_ref().unwrap();
            for (got, want) in pl.magnitudes.iter().zip([1.0, 0.5]) {
                assert!((got - want).abs() < 1e-9, "{got} vs {want}");
            }
            for (got, want) in or.magnitudes.iter().zip([1.0, 0.5]) {
                assert!((got - want).abs() < 1e-9);
            }
            assert!((pl.separation.unwrap() - 50e-9).abs() < 1e-15);
            assert!(!pl.clamped);
        }
    }

    #[test]
    fn noise_streams_are_per_pixel() {
        let c = small_config(0.01);
        let p = Pipeline::new(&c).unwrap();
        let scene = Scene::generate(&c.scene).unwrap();
        let a = p.measure(&scene, 1).unwrap();
        let b = p.measure(&scene, 1).unwrap();
        let other = p.measure(&scene, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, other);
    }

    #[test]
    fn trace_has_full_length() {
        let c = small_config(0.0);
        let p = Pipeline::new(&c).unwrap();
        let scene = Scene::generate(&c.scene).unwrap();
        let y = p.measure(&scene, 0).unwrap();
        let (_, t) = p.trace(&y);
        assert_eq!(t.y.len(), 401);
        assert_eq!(t.m.len(), 401);
        assert_eq!(t.m_fit.unwrap().len(), 401);
        assert_eq!(t.s_hat.unwrap().len(), 41);
    }
}
