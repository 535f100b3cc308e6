//! Map assembly, PSNR metrics and the run report.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{PulseShape, RunConfig};
use crate::error::{CliError, Result};
use crate::metrics::{psnr_from_sums, psnr_masked};
use crate::pipeline::PixelOutcome;
use crate::scene::Scene;

pub const ATTRIBUTION_NOTE: &str = "phase-less magnitudes are assigned to the gamma0/gamma1 maps in descending order; \
oracle magnitudes in delay order. The phase-less path cannot tell which echo came first.";
pub const PSNR_NOTE: &str = "10*log10(peak^2/MSE), peak = max |reference|, capped at 300 dB; \
map PSNRs use the first-named map as reference and skip flagged pixels; resynthesis PSNRs compare \
the forward model of the recovered parameters with the input samples over all unflagged pixels.";

/// Recovered magnitude maps of one path; `ok` marks unflagged pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct PathMaps {
    pub gamma0: Vec<f64>,
    pub gamma1: Vec<f64>,
    pub ok: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSummary {
    pub kind: String,
    pub width_px: usize,
    pub height_px: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionSummary {
    pub samples: usize,
    pub delta_ps: f64,
    pub period_ps: f64,
    pub bandlimit: usize,
    pub pulse: PulseShape,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pulse_sigma_ps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSummary {
    pub sigma_rel_peak: f64,
    /// Peak-referenced, `20·log10(1/σ_rel)`; absent when noiseless.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_snr_db: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionSummary {
    pub echoes: usize,
    pub oracle: bool,
    pub phaseless: bool,
    pub cadzow: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PixelCounts {
    pub total: usize,
    pub ok: usize,
    pub flagged: usize,
    pub clamped: usize,
    pub vanishing: usize,
    pub reduced_phaseless: usize,
    pub reduced_oracle: usize,
    pub low_confidence: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Notes {
    pub attribution: String,
    pub psnr: String,
}

/// Deterministic summary of a run: identical inputs and seed give an
/// identical report whatever the worker count. Timing lives elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scene: SceneSummary,
    pub acquisition: AcquisitionSummary,
    pub noise: NoiseSummary,
    pub reconstruction: ReconstructionSummary,
    pub pixels: PixelCounts,
    pub psnr_db: BTreeMap<String, f64>,
    /// The same values rounded to two decimals.
    pub psnr_db_2dp: BTreeMap<String, String>,
    pub notes: Notes,
}

impl RunReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))?;
        std::fs::write(path, text).map_err(CliError::io(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        toml::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))
    }

    pub fn psnr(&self, key: &str) -> Option<f64> {
        self.psnr_db.get(key).copied()
    }

    pub fn flagged_limit_exceeded(&self, max_fraction: f64) -> bool {
        self.pixels.flagged as f64 > max_fraction * self.pixels.total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub workers: usize,
    pub pixels: usize,
    pub pipeline_s: f64,
    pub ms_per_pixel: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outputs_s: Option<f64>,
}

impl Timing {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))?;
        std::fs::write(path, text).map_err(CliError::io(path))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub report: RunReport,
    pub truth: Option<PathMaps>,
    pub oracle: Option<PathMaps>,
    pub phaseless: Option<PathMaps>,
    pub outcomes: Vec<PixelOutcome>,
    pub width: usize,
    pub height: usize,
}

pub fn assemble(config: &RunConfig, scene: &Scene, outcomes: Vec<PixelOutcome>) -> Result<RunResult> {
    let n = scene.len();
    if outcomes.len() != n {
        return Err(CliError::Config(format!("{} pixel results for {n} pixels", outcomes.len())));
    }
    let mut counts = PixelCounts { total: n, ..Default::default() };
    let mut oracle_maps = config.reconstruction.oracle.then(|| empty_maps(n));
    let mut phaseless_maps = config.reconstruction.phaseless.then(|| empty_maps(n));
    let mut resynthesis = [ResynthesisSums::default(), ResynthesisSums::default()];

    for (i, o) in outcomes.iter().enumerate() {
        if o.is_ok() {
            counts.ok += 1;
        } else {
            counts.flagged += 1;
        }
        let mut low_confidence = false;
        if let (Some(Ok(p)), Some(maps)) = (&o.phaseless, phaseless_maps.as_mut()) {
            maps.gamma0[i] = p.magnitudes[0];
            maps.gamma1[i] = p.magnitudes[1];
            maps.ok[i] = true;
            counts.clamped += p.clamped as usize;
            counts.vanishing += p.vanishing as usize;
            counts.reduced_phaseless += p.reduced.is_some() as usize;
            low_confidence |= p.low_confidence;
            resynthesis[0].add(p.input_peak, p.resynthesis_sse);
        }
        if let (Some(Ok(p)), Some(maps)) = (&o.oracle, oracle_maps.as_mut()) {
            maps.gamma0[i] = p.magnitudes[0];
            maps.gamma1[i] = p.magnitudes[1];
            maps.ok[i] = true;
            counts.reduced_oracle += p.reduced.is_some() as usize;
            low_confidence |= p.low_confidence;
            resynthesis[1].add(p.input_peak, p.resynthesis_sse);
        }
        counts.low_confidence += low_confidence as usize;
    }

    let truth = PathMaps { gamma0: scene.gamma0.clone(), gamma1: scene.gamma1.clone(), ok: vec![true; n] };
    let samples = config.acquisition.samples;
    let mut psnr = BTreeMap::new();
    let mut put_maps = |name: &str, a: &PathMaps, b: &PathMaps| -> Result<()> {
        let keep: Vec<bool> = a.ok.iter().zip(&b.ok).map(|(x, y)| *x && *y).collect();
        if let Some(v) = psnr_masked(&a.gamma0, &b.gamma0, &keep)? {
            psnr.insert(format!("gamma0_{name}"), v);
        }
        if let Some(v) = psnr_masked(&a.gamma1, &b.gamma1, &keep)? {
            psnr.insert(format!("gamma1_{name}"), v);
        }
        Ok(())
    };
    if let (Some(o), Some(p)) = (&oracle_maps, &phaseless_maps) {
        put_maps("oracle_vs_phaseless", o, p)?;
    }
    if let Some(p) = &phaseless_maps {
        put_maps("truth_vs_phaseless", &truth, p)?;
    }
    if let Some(o) = &oracle_maps {
        put_maps("truth_vs_oracle", &truth, o)?;
    }
    for (name, sums, enabled) in [
        ("resynthesis_phaseless", &resynthesis[0], phaseless_maps.is_some()),
        ("resynthesis_oracle", &resynthesis[1], oracle_maps.is_some()),
    ] {
        if enabled && sums.pixels > 0 {
            psnr.insert(name.to_string(), psnr_from_sums(sums.peak, sums.sse, sums.pixels * samples));
        }
    }
    let psnr_db_2dp = psnr.iter().map(|(k, v)| (k.clone(), format!("{v:.2}"))).collect();

    let a = &config.acquisition;
    let report = RunReport {
        scene: SceneSummary { kind: config.scene.kind().into(), width_px: scene.width, height_px: scene.height },
        acquisition: AcquisitionSummary {
            samples: a.samples,
            delta_ps: a.delta_ps,
            period_ps: a.period_ps(),
            bandlimit: a.bandlimit,
            pulse: config.pulse.shape,
            pulse_sigma_ps: (config.pulse.shape == PulseShape::Gaussian).then(|| config.pulse.sigma_ps(a.period_ps())),
        },
        noise: NoiseSummary {
            sigma_rel_peak: config.noise.sigma_rel_peak,
            sample_snr_db: config.noise.sample_snr_db(),
            seed: config.noise.seed,
        },
        reconstruction: ReconstructionSummary {
            echoes: config.reconstruction.echoes,
            oracle: config.reconstruction.oracle,
            phaseless: config.reconstruction.phaseless,
            cadzow: config.reconstruction.cadzow,
        },
        pixels: counts,
        psnr_db: psnr,
        psnr_db_2dp,
        notes: Notes { attribution: ATTRIBUTION_NOTE.into(), psnr: PSNR_NOTE.into() },
    };
    Ok(RunResult {
        report,
        truth: Some(truth),
        oracle: oracle_maps,
        phaseless: phaseless_maps,
        outcomes,
        width: scene.width,
        height: scene.height,
    })
}

fn empty_maps(n: usize) -> PathMaps {
    PathMaps { gamma0: vec![0.0; n], gamma1: vec![0.0; n], ok: vec![false; n] }
}

/// Accumulated in pixel order, so the sum is reproducible.
#[derive(Debug, Default)]
struct ResynthesisSums {
    peak: f64,
    sse: f64,
    pixels: usize,
}

impl ResynthesisSums {
    fn add(&mut self, peak: f64, sse: f64) {
        self.peak = self.peak.max(peak);
        self.sse += sse;
        self.pixels += 1;
    }
}
