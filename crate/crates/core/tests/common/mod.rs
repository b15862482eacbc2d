#![allow(dead_code)]

use beampred::harness::ExperimentConfig;
use beampred::net::ModelConfig;

/// A preset shrunk to two 100-snapshot laps and a one-layer model.
pub fn small_config(preset: &str) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset(preset).unwrap();
    // 8.4 m square lap: 100 reports at 4.2 m/s and 20 ms
    cfg.trajectory.waypoints = vec![[-1.05, -1.05, 1.5], [1.05, -1.05, 1.5], [1.05, 1.05, 1.5], [-1.05, 1.05, 1.5]];
    cfg.trajectory.num_laps = 2;
    cfg.model = ModelConfig {
        num_layers: 1,
        head_hidden: vec![16],
        batch_size: 16,
        epochs: 2,
        max_train_pairs: Some(40),
        seed: cfg.seed,
        ..ModelConfig::default()
    };
    cfg.horizons = vec![0, 20];
    cfg
}

pub fn write_config(cfg: &ExperimentConfig, dir: &std::path::Path) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

/// Participation ratio `(sum eta)^2 / sum eta^2`: how many beams share the energy.
pub fn effective_beam_count(eta: &[f32]) -> f64 {
    let s: f64 = eta.iter().map(|&v| v as f64).sum();
    let s2: f64 = eta.iter().map(|&v| (v as f64).powi(2)).sum();
    s * s / s2
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}
