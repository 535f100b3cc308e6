//! Run configuration, read from TOML. Physical quantities carry their unit in
//! the key name.

use std::path::{Path, PathBuf};

use echo_core::{AcquisitionConfig, CadzowSettings, PulseSpectrum, RecoverySettings};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::scene::SceneSpec;

const PS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionSection {
    pub samples: usize,
    pub delta_ps: f64,
    /// Defaults to `samples · delta_ps`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub period_ps: Option<f64>,
    pub bandlimit: usize,
}

impl Default for AcquisitionSection {
    fn default() -> Self {
        Self { samples: 2795, delta_ps: 70.0, period_ps: None, bandlimit: 20 }
    }
}

impl AcquisitionSection {
    pub fn period_ps(&self) -> f64 {
        self.period_ps.unwrap_or(self.samples as f64 * self.delta_ps)
    }

    pub fn build(&self) -> Result<AcquisitionConfig> {
        Ok(AcquisitionConfig::new(self.samples, self.delta_ps * PS, self.period_ps() * PS, self.bandlimit)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PulseShape {
    Gaussian,
    RaisedCosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseSection {
    pub shape: PulseShape,
    /// Gaussian standard deviation; defaults to 1.2% of the period.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_ps: Option<f64>,
}

impl Default for PulseSection {
    fn default() -> Self {
        Self { shape: PulseShape::Gaussian, sigma_ps: None }
    }
}

pub const DEFAULT_PULSE_WIDTH: f64 = 0.012;

impl PulseSection {
    pub fn sigma_ps(&self, period_ps: f64) -> f64 {
        self.sigma_ps.unwrap_or(DEFAULT_PULSE_WIDTH * period_ps)
    }

    pub fn build(&self, acquisition: &AcquisitionSection) -> Result<PulseSpectrum> {
        let l = acquisition.bandlimit;
        let pulse = match self.shape {
            PulseShape::Gaussian => {
                let period = acquisition.period_ps();
                PulseSpectrum::periodized_gaussian(l, self.sigma_ps(period) / period)?
            }
            PulseShape::RaisedCosine => PulseSpectrum::raised_cosine(l)?,
        };
        Ok(pulse)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    /// White Gaussian noise on the time samples, standard deviation relative
    /// to the per-pixel peak `max |y|`.
    pub sigma_rel_peak: f64,
    pub seed: u64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { sigma_rel_peak: 0.0, seed: 0 }
    }
}

impl NoiseSection {
    /// Peak-referenced sample SNR, `20·log10(1/σ_rel)`; `None` when noiseless.
    pub fn sample_snr_db(&self) -> Option<f64> {
        (self.sigma_rel_peak > 0.0).then(|| -20.0 * self.sigma_rel_peak.log10())
    }

    pub fn sigma_for_snr_db(snr_db: f64) -> f64 {
        10f64.powf(-snr_db / 20.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructionSection {
    pub echoes: usize,
    pub oracle: bool,
    pub phaseless: bool,
    pub cadzow: bool,
    pub cadzow_max_iters: usize,
    pub cadzow_tol: f64,
    pub weight_floor_rel: f64,
    /// Hankel singular-value ratio a component needs over the next one to
    /// count as an echo rather than noise; 1 disables the test.
    pub order_gap: f64,
}

impl Default for ReconstructionSection {
    fn default() -> Self {
        let c = CadzowSettings::default();
        Self {
            echoes: 2,
            oracle: true,
            phaseless: true,
            cadzow: true,
            cadzow_max_iters: c.max_iters,
            cadzow_tol: c.tol,
            weight_floor_rel: 1e-8,
            order_gap: DEFAULT_ORDER_GAP,
        }
    }
}

pub const DEFAULT_ORDER_GAP: f64 = 4.0;

impl ReconstructionSection {
    pub fn settings(&self) -> RecoverySettings {
        let cadzow = self.cadzow.then_some(CadzowSettings { max_iters: self.cadzow_max_iters, tol: self.cadzow_tol });
        RecoverySettings { cadzow, order_gap: self.order_gap, ..RecoverySettings::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// 0 uses every available core.
    pub workers: usize,
    /// The run fails when more than this fraction of pixels is flagged.
    pub max_flagged_fraction: f64,
    /// Pixel `[x, y]` whose traces and spectra are written; defaults to the
    /// first pixel with two echoes, else the centre.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_pixel: Option<[usize; 2]>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { workers: 0, max_flagged_fraction: 0.01, trace_pixel: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub acquisition: AcquisitionSection,
    pub pulse: PulseSection,
    pub noise: NoiseSection,
    pub reconstruction: ReconstructionSection,
    pub run: RunSection,
    pub scene: SceneSpec,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let config: Self =
            toml::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))?;
        std::fs::write(path, text).map_err(CliError::io(path))
    }

    pub fn validate(&self) -> Result<()> {
        self.acquisition.build()?;
        self.pulse.build(&self.acquisition)?;
        let noise = self.noise.sigma_rel_peak;
        if !(noise.is_finite() && noise >= 0.0) {
            return Err(CliError::Config(format!("noise sigma_rel_peak = {noise} must be finite and >= 0")));
        }
        let r = &self.reconstruction;
        if !(r.oracle || r.phaseless) {
            return Err(CliError::Config("no reconstruction path enabled".into()));
        }
        if !(1..=2).contains(&r.echoes) {
            return Err(CliError::Config(format!("echoes = {} (scenes carry two layers)", r.echoes)));
        }
        if r.phaseless && r.echoes != 2 {
            return Err(CliError::Config("the phase-less path needs echoes = 2".into()));
        }
        if !(r.order_gap >= 1.0) {
            return Err(CliError::Config(format!("order_gap = {} must be >= 1", r.order_gap)));
        }
        let f = self.run.max_flagged_fraction;
        if !(0.0..=1.0).contains(&f) {
            return Err(CliError::Config(format!("max_flagged_fraction = {f} must lie in [0, 1]")));
        }
        Ok(())
    }

    /// Resolves a relative `files` scene directory against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let SceneSpec::Files { dir } = &mut self.scene {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
    }

    pub fn workers(&self) -> usize {
        match self.run.workers {
            0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
            w => w,
        }
    }
}

pub fn default_config_path(dir: &Path) -> PathBuf {
    dir.join("config.toml")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_preset() {
        let c = RunConfig::default();
        let acq = c.acquisition.build().unwrap();
        assert_eq!(acq, AcquisitionConfig::experiment_preset());
        c.validate().unwrap();
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = RunConfig::default();
        c.noise.sigma_rel_peak = 0.01;
        c.run.trace_pixel = Some([3, 4]);
        let text = toml::to_string(&c).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c: RunConfig = toml::from_str("[noise]\nsigma_rel_peak = 0.01\n").unwrap();
        assert_eq!(c.acquisition, AcquisitionSection::default());
        assert_eq!(c.noise.sigma_rel_peak, 0.01);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(toml::from_str::<RunConfig>("[acquisition]\ndelta = 70\n").is_err());
        let mut c = RunConfig::default();
        c.noise.sigma_rel_peak = -1.0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.reconstruction.echoes = 1;
        assert!(c.validate().is_err());
        c.reconstruction.phaseless = false;
        c.validate().unwrap();
    }

    #[test]
    fn snr_conversion() {
        let n = NoiseSection { sigma_rel_peak: 0.01, seed: 0 };
        assert!((n.sample_snr_db().unwrap() - 40.0).abs() < 1e-12);
        assert!((NoiseSection::sigma_for_snr_db(40.0) - 0.01).abs() < 1e-15);
        assert_eq!(NoiseSection::default().sample_snr_db(), None);
    }
}
