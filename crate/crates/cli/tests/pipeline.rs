use std::path::Path;

use tof_cli::config::NoiseSection;
use tof_cli::output::{FLAGS_FILE, REPORT_FILE, TRACES_FILE};
use tof_cli::{Pipeline, RunConfig, RunReport, Scene, SceneSpec};

fn flat_config(width: usize, height: usize) -> RunConfig {
    let mut config = RunConfig::default();
    config.scene = SceneSpec::Flat { width_px: width, height_px: height, gamma0: 1.0, gamma1: 0.5, t0_ns: 10.0, t1_ns: 30.0 };
    config.run.workers = 1;
    config
}

fn small_placard(sigma_rel: f64) -> RunConfig {
    let mut config = RunConfig::default();
    config.scene = SceneSpec::Placard { width_px: 16, height_px: 12, text: "T".into() };
    config.noise = NoiseSection { sigma_rel_peak: sigma_rel, seed: 3 };
    config.run.workers = 1;
    config
}

fn csv_rows(path: &Path) -> usize {
    csv::Reader::from_path(path).unwrap().records().count()
}

#[test]
fn noiseless_flat_scene_matches_truth() {
    let artifacts = tof_cli::run(&flat_config(2, 2)).unwrap();
    let result = &artifacts.result;
    let maps = result.phaseless.as_ref().unwrap();
    assert!(maps.ok.iter().all(|&ok| ok));
    for (g0, g1) in maps.gamma0.iter().zip(&maps.gamma1) {
        assert!((g0 - 1.0).abs() <= 1e-6, "gamma0 {g0}");
        assert!((g1 - 0.5).abs() <= 1e-6, "gamma1 {g1}");
    }
    for key in ["gamma0_truth_vs_phaseless", "gamma1_truth_vs_phaseless", "resynthesis_phaseless"] {
        let psnr = result.report.psnr(key).unwrap();
        assert!(psnr > 200.0 && psnr <= tof_cli::metrics::PSNR_CAP_DB, "{key} = {psnr}");
    }
}

#[test]
fn scene_maps_round_trip_byte_exactly() {
    let scene = Scene::generate(&small_placard(0.0).scene).unwrap();
    let (first, second) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    scene.save(first.path()).unwrap();
    let loaded = Scene::load(first.path()).unwrap();
    assert_eq!(loaded, scene);
    loaded.save(second.path()).unwrap();
    for name in tof_cli::scene::MAP_NAMES {
        let file = format!("{name}.csv");
        let a = std::fs::read(first.path().join(&file)).unwrap();
        let b = std::fs::read(second.path().join(&file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
}

#[test]
fn emitted_report_reloads_exactly() {
    let artifacts = tof_cli::run(&small_placard(0.01)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    artifacts.emit(dir.path()).unwrap();
    let loaded = RunReport::load(&dir.path().join(REPORT_FILE)).unwrap();
    assert_eq!(loaded, artifacts.result.report);
}

#[test]
fn trace_and_report_formats() {
    let config = small_placard(0.01);
    let artifacts = tof_cli::run(&config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    artifacts.emit(dir.path()).unwrap();
    assert_eq!(csv_rows(&dir.path().join(TRACES_FILE)), config.acquisition.samples);
    let report = &artifacts.result.report;
    assert_eq!(report.psnr_db.len(), report.psnr_db_2dp.len());
    for (key, value) in &report.psnr_db {
        let rounded = &report.psnr_db_2dp[key];
        assert_eq!(rounded, &format!("{value:.2}"), "{key}");
        let decimals = rounded.split_once('.').map(|(_, d)| d.len());
        assert_eq!(decimals, Some(2), "{key} = {rounded}");
    }
}

#[test]
fn pixel_totals_reconcile() {
    let config = small_placard(0.01);
    let artifacts = tof_cli::run(&config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    artifacts.emit(dir.path()).unwrap();
    let pixels = &artifacts.result.report.pixels;
    assert_eq!(pixels.total, 16 * 12);
    assert_eq!(pixels.ok + pixels.flagged, pixels.total);
    assert_eq!(csv_rows(&dir.path().join(FLAGS_FILE)), pixels.total);
    let ok = artifacts.result.outcomes.iter().filter(|o| o.is_ok()).count();
    assert_eq!(ok, pixels.ok);
}

#[test]
fn pixels_are_reconstructed_in_isolation() {
    let config = small_placard(0.01);
    let scene = Scene::generate(&config.scene).unwrap();
    let pipeline = Pipeline::new(&config).unwrap();
    let mut samples: Vec<Vec<f64>> = (0..scene.len()).map(|i| pipeline.measure(&scene, i).unwrap()).collect();
    let batch = pipeline.run_measurements(&samples, 1).unwrap();
    for i in [0, scene.len() / 2, scene.len() - 1] {
        assert_eq!(pipeline.reconstruct(&samples[i]), batch[i], "pixel {i}");
    }

    let broken = scene.len() / 3;
    samples[broken][0] = f64::NAN;
    let damaged = pipeline.run_measurements(&samples, 1).unwrap();
    assert!(!damaged[broken].is_ok());
    for (i, (a, b)) in damaged.iter().zip(&batch).enumerate() {
        if i != broken {
            assert_eq!(a, b, "pixel {i} changed when another pixel failed");
        }
    }
}

#[test]
fn recorded_measurements_reproduce_the_run() {
    let config = small_placard(0.01);
    let dir = tempfile::tempdir().unwrap();
    tof_cli::simulate(&config, dir.path()).unwrap();
    let (recorded, scene, measurements) = tof_cli::load_simulation(dir.path()).unwrap();
    assert_eq!(recorded.noise, config.noise);
    let replayed = tof_cli::reconstruct(&recorded, &scene, &measurements).unwrap();
    let direct = tof_cli::run(&config).unwrap();
    assert_eq!(replayed.result.outcomes, direct.result.outcomes);
    assert_eq!(replayed.result.report.psnr_db, direct.result.report.psnr_db);
}
