use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tof_cli::config::NoiseSection;
use tof_cli::output::REPORT_FILE;
use tof_cli::{RunArtifacts, RunConfig, RunReport, SceneSpec};

/// Phase-less time-of-flight echo recovery on synthetic scenes.
#[derive(Parser)]
#[command(name = "tof", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scene and write its noisy lock-in samples.
    Simulate {
        #[command(flatten)]
        opts: Options,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Reconstruct a directory written by `simulate`.
    Reconstruct {
        #[arg(long, short)]
        input: PathBuf,
        #[command(flatten)]
        opts: Options,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Simulate and reconstruct in one pass.
    Run {
        #[command(flatten)]
        opts: Options,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Print the report of a finished run.
    Report {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long)]
        max_flagged_fraction: Option<f64>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PathName {
    Oracle,
    Phaseless,
}

#[derive(Args, Default)]
struct Options {
    /// TOML configuration; missing keys take their defaults.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// `placard`, `flat`, or a directory of map files.
    #[arg(long)]
    scene: Option<String>,
    /// Scene size for built-in scenes, e.g. `128x128`.
    #[arg(long)]
    size: Option<String>,
    /// Placard text.
    #[arg(long)]
    text: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Noise standard deviation relative to the per-pixel peak sample.
    #[arg(long, conflicts_with = "snr_db")]
    noise: Option<f64>,
    /// Peak-referenced sample SNR in dB.
    #[arg(long)]
    snr_db: Option<f64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    /// Reconstruction paths to run.
    #[arg(long, value_enum, value_delimiter = ',')]
    paths: Option<Vec<PathName>>,
    #[arg(long)]
    no_cadzow: bool,
    /// Fail with exit code 2 above this fraction of flagged pixels.
    #[arg(long)]
    max_flagged_fraction: Option<f64>,
}

const FLAGGED_EXIT: u8 = 2;

fn parse_size(s: &str) -> anyhow::Result<(usize, usize)> {
    let (w, h) = s.split_once(['x', 'X']).context("size must look like WIDTHxHEIGHT")?;
    Ok((w.trim().parse().context("bad width")?, h.trim().parse().context("bad height")?))
}

impl Options {
    fn apply(&self, mut config: RunConfig) -> anyhow::Result<RunConfig> {
        if let Some(scene) = &self.scene {
            config.scene = match scene.as_str() {
                "placard" => SceneSpec::default(),
                "flat" => SceneSpec::Flat { width_px: 8, height_px: 8, gamma0: 1.0, gamma1: 0.5, t0_ns: 10.0, t1_ns: 30.0 },
                dir if Path::new(dir).is_dir() => SceneSpec::Files { dir: dir.into() },
                other => bail!("unknown scene {other:?}: use placard, flat or a directory of maps"),
            };
        }
        if let Some(size) = &self.size {
            let (w, h) = parse_size(size)?;
            match &mut config.scene {
                SceneSpec::Placard { width_px, height_px, .. } | SceneSpec::Flat { width_px, height_px, .. } => {
                    (*width_px, *height_px) = (w, h);
                }
                SceneSpec::Files { .. } => bail!("--size does not apply to scenes read from files"),
            }
        }
        if let Some(t) = &self.text {
            match &mut config.scene {
                SceneSpec::Placard { text, .. } => text.clone_from(t),
                _ => bail!("--text applies to the placard scene only"),
            }
        }
        if let Some(seed) = self.seed {
            config.noise.seed = seed;
        }
        if let Some(noise) = self.noise {
            config.noise.sigma_rel_peak = noise;
        }
        if let Some(snr) = self.snr_db {
            config.noise.sigma_rel_peak = NoiseSection::sigma_for_snr_db(snr);
        }
        if let Some(w) = self.workers {
            config.run.workers = w;
        }
        if let Some(paths) = &self.paths {
            config.reconstruction.oracle = paths.contains(&PathName::Oracle);
            config.reconstruction.phaseless = paths.contains(&PathName::Phaseless);
        }
        if self.no_cadzow {
            config.reconstruction.cadzow = false;
        }
        if let Some(f) = self.max_flagged_fraction {
            config.run.max_flagged_fraction = f;
        }
        config.validate()?;
        Ok(config)
    }

    fn load(&self) -> anyhow::Result<RunConfig> {
        let config = match &self.config {
            Some(path) => {
                let mut c = RunConfig::load(path)?;
                c.resolve_paths(path.parent().unwrap_or(Path::new(".")));
                c
            }
            None => RunConfig::default(),
        };
        self.apply(config)
    }
}

fn print_report(report: &RunReport) {
    let p = &report.pixels;
    println!(
        "scene {} {}x{}: {} ok, {} flagged ({} clamped, {} reduced)",
        report.scene.kind,
        report.scene.width_px,
        report.scene.height_px,
        p.ok,
        p.flagged,
        p.clamped,
        p.reduced_phaseless + p.reduced_oracle
    );
    for (key, value) in &report.psnr_db_2dp {
        println!("  psnr {key}: {value} dB");
    }
}

fn finish(artifacts: &mut RunArtifacts, config: &RunConfig, out: &Path) -> anyhow::Result<ExitCode> {
    let started = Instant::now();
    artifacts.emit(out)?;
    artifacts.timing.outputs_s = Some(started.elapsed().as_secs_f64());
    artifacts.timing.save(&out.join(tof_cli::output::TIMING_FILE))?;
    print_report(&artifacts.result.report);
    println!("  {:.1} s on {} workers, outputs in {}", artifacts.timing.pipeline_s, artifacts.timing.workers, out.display());
    Ok(exit_for(&artifacts.result.report, config.run.max_flagged_fraction))
}

fn exit_for(report: &RunReport, max_fraction: f64) -> ExitCode {
    if report.flagged_limit_exceeded(max_fraction) {
        eprintln!(
            "{} of {} pixels flagged, above the {max_fraction} threshold",
            report.pixels.flagged, report.pixels.total
        );
        ExitCode::from(FLAGGED_EXIT)
    } else {
        ExitCode::SUCCESS
    }
}

fn execute(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Simulate { opts, out } => {
            let config = opts.load()?;
            let scene = tof_cli::simulate(&config, &out)?;
            println!("simulated {}x{} pixels into {}", scene.width, scene.height, out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Reconstruct { input, opts, out } => {
            let (recorded, scene, measurements) = tof_cli::load_simulation(&input)?;
            let mut config = opts.apply(recorded)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            config.scene = SceneSpec::Files { dir: input.join("scene") };
            let mut artifacts = tof_cli::reconstruct(&config, &scene, &measurements)?;
            finish(&mut artifacts, &config, &out)
        }
        Command::Run { opts, out } => {
            let config = opts.load()?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let mut artifacts = tof_cli::run(&config)?;
            finish(&mut artifacts, &config, &out)
        }
        Command::Report { input, max_flagged_fraction } => {
            let report = RunReport::load(&input.join(REPORT_FILE))?;
            print_report(&report);
            let default = RunConfig::default().run.max_flagged_fraction;
            Ok(exit_for(&report, max_flagged_fraction.unwrap_or(default)))
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
