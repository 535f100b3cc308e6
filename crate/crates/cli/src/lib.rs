//! Scene simulation and batch reconstruction for phase-less time-of-flight
//! imaging: per-pixel oracle and phase-less pipelines, PSNR metrics and
//! file outputs.

pub mod config;
pub mod error;
pub mod metrics;
pub mod output;
pub mod pipeline;
pub mod report;
pub mod scene;

use std::path::Path;
use std::time::Instant;

pub use config::RunConfig;
pub use error::{CliError, Result};
pub use pipeline::{Pipeline, PixelOutcome, PixelTrace};
pub use report::{RunReport, RunResult, Timing};
pub use scene::{Scene, SceneSpec};

/// Everything a run produces before it is written out.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub result: RunResult,
    pub trace: Option<(usize, usize, PixelTrace)>,
    pub timing: Timing,
}

impl RunArtifacts {
    pub fn emit(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        let trace = self.trace.as_ref().map(|(x, y, t)| (*x, *y, t));
        output::emit_outputs(&self.result, trace, Some(&self.timing), dir)
    }
}

/// The traced pixel: configured, else the first with two echoes, else the
/// centre.
pub fn trace_pixel(config: &RunConfig, scene: &Scene) -> Result<usize> {
    match config.run.trace_pixel {
        Some([x, y]) if x < scene.width && y < scene.height => Ok(scene.index(x, y)),
        Some([x, y]) => Err(CliError::Config(format!(
            "trace pixel ({x}, {y}) lies outside the {}x{} scene",
            scene.width, scene.height
        ))),
        None => Ok(scene
            .gamma1
            .iter()
            .zip(&scene.gamma0)
            .position(|(g1, g0)| *g1 > 0.0 && *g0 > 0.0)
            .unwrap_or(scene.index(scene.width / 2, scene.height / 2))),
    }
}

fn finish(
    config: &RunConfig,
    pipeline: &Pipeline,
    scene: &Scene,
    outcomes: Vec<PixelOutcome>,
    traced_y: Option<Vec<f64>>,
    index: usize,
    started: Instant,
) -> Result<RunArtifacts> {
    let pipeline_s = started.elapsed().as_secs_f64();
    let trace = traced_y.map(|y| {
        let (x, yy) = scene.coords(index);
        (x, yy, pipeline.trace(&y).1)
    });
    let result = report::assemble(config, scene, outcomes)?;
    let pixels = scene.len();
    let timing = Timing {
        workers: config.workers(),
        pixels,
        pipeline_s,
        ms_per_pixel: 1e3 * pipeline_s / pixels as f64,
        outputs_s: None,
    };
    Ok(RunArtifacts { result, trace, timing })
}

/// Synthesizes the configured scene and reconstructs every pixel.
pub fn run(config: &RunConfig) -> Result<RunArtifacts> {
    let scene = Scene::generate(&config.scene)?;
    run_scene(config, &scene)
}

pub fn run_scene(config: &RunConfig, scene: &Scene) -> Result<RunArtifacts> {
    let started = Instant::now();
    let pipeline = Pipeline::new(config)?;
    let outcomes = pipeline.run_scene(scene, config.workers())?;
    let index = trace_pixel(config, scene)?;
    let y = pipeline.measure(scene, index).ok();
    finish(config, &pipeline, scene, outcomes, y, index, started)
}

/// Reconstructs recorded lock-in samples of `scene`, in pixel order.
pub fn reconstruct(config: &RunConfig, scene: &Scene, measurements: &[Vec<f64>]) -> Result<RunArtifacts> {
    if measurements.len() != scene.len() {
        return Err(CliError::Config(format!(
            "{} measurement vectors for {} pixels",
            measurements.len(),
            scene.len()
        )));
    }
    let started = Instant::now();
    let pipeline = Pipeline::new(config)?;
    scene.validate(pipeline.acquisition().period())?;
    let outcomes = pipeline.run_measurements(measurements, config.workers())?;
    let index = trace_pixel(config, scene)?;
    let y = Some(measurements[index].clone());
    finish(config, &pipeline, scene, outcomes, y, index, started)
}

/// Writes the scene, the effective configuration and the noisy lock-in
/// samples of every pixel into `dir`.
pub fn simulate(config: &RunConfig, dir: &Path) -> Result<Scene> {
    let scene = Scene::generate(&config.scene)?;
    let pipeline = Pipeline::new(config)?;
    scene.validate(pipeline.acquisition().period())?;
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let scene_dir = dir.join("scene");
    scene.save(&scene_dir)?;
    let mut recorded = config.clone();
    recorded.scene = SceneSpec::Files { dir: "scene".into() };
    recorded.save(&config::default_config_path(dir))?;
    output::write_measurements(
        &dir.join(output::MEASUREMENTS_FILE),
        scene.width,
        (0..scene.len()).map(|i| pipeline.measure(&scene, i)),
    )?;
    Ok(scene)
}

/// Loads a directory written by [`simulate`].
pub fn load_simulation(dir: &Path) -> Result<(RunConfig, Scene, Vec<Vec<f64>>)> {
    let mut config = RunConfig::load(&config::default_config_path(dir))?;
    config.resolve_paths(dir);
    let scene = Scene::generate(&config.scene)?;
    let measurements = output::read_measurements(
        &dir.join(output::MEASUREMENTS_FILE),
        scene.width,
        scene.height,
        config.acquisition.samples,
    )?;
    Ok((config, scene, measurements))
}
