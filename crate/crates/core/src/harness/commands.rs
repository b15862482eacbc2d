use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use super::container::{read_features, write_dataset, Dataset};
use super::pipeline::{build_dataset, eval_pairs, ingest, train_model, RawReport};
use super::raw::{export_scale, RawQ15Header, RawQ15Reader, RawQ15Writer};
use super::{hash_hex, ExperimentConfig};
use crate::eval::{evaluate_horizon, write_plot_csv, write_report_csv, write_report_json, EvalSettings, HorizonReport};
use crate::net::{read_checkpoint, write_checkpoint, Checkpoint};
use crate::scene::SnapshotGenerator;
use crate::srs::Verdict;
use crate::{Error, Result};

pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_JSON: &str = "report.json";

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateSummary {
    pub path: PathBuf,
    pub snapshots: usize,
    pub valid: usize,
    pub insufficient: usize,
    pub stalled: usize,
    pub normalization: f64,
}

impl GenerateSummary {
    fn of(ds: &Dataset, path: &Path) -> Self {
        GenerateSummary {
            path: path.to_path_buf(),
            snapshots: ds.len(),
            valid: ds.count(Verdict::Valid),
            insufficient: ds.count(Verdict::InsufficientCsi),
            stalled: ds.count(Verdict::Stalled),
            normalization: ds.header.normalization,
        }
    }
}

impl std::fmt::Display for GenerateSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: {} snapshots, {} valid, {} dropped (insufficient CSI {}, stalled {}), normalization {:.6e}",
            self.path.display(),
            self.snapshots,
            self.valid,
            self.insufficient + self.stalled,
            self.insufficient,
            self.stalled,
            self.normalization
        )
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("cannot create {}: {e}", path.display()))))
}

fn check_hash(cfg: &ExperimentConfig, ds: &Dataset) -> Result<()> {
    let expected = cfg.dataset_hash();
    if ds.header.config_hash != expected {
        return Err(Error::HashMismatch { left: hash_hex(&ds.header.config_hash), right: hash_hex(&expected) });
    }
    Ok(())
}

/// Simulates, processes and writes a dataset container to `out`.
pub fn cmd_generate(cfg: &ExperimentConfig, out: &Path) -> Result<GenerateSummary> {
    let ds = build_dataset(cfg)?;
    write_dataset(create(out)?, &ds)?;
    Ok(GenerateSummary::of(&ds, out))
}

pub fn checkpoint_path(dir: &Path, horizon_ms: u64) -> PathBuf {
    dir.join(format!("model_h{horizon_ms}.bin"))
}

fn log_path(dir: &Path, horizon_ms: u64) -> PathBuf {
    dir.join(format!("train_log_h{horizon_ms}.csv"))
}

/// Trains one model per horizon; writes checkpoints and training logs.
pub fn cmd_train(cfg: &ExperimentConfig, dataset: &Path, horizons: &[u64], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if horizons.is_empty() {
        log::warn!("no horizons requested; nothing to train");
        return Ok(Vec::new());
    }
    let ds = read_features(dataset)?;
    check_hash(cfg, &ds)?;
    let mut written = Vec::new();
    for &h in horizons {
        log::info!("training horizon {h} ms");
        let (model, log) = train_model(&ds, cfg, h)?;
        let path = checkpoint_path(out_dir, h);
        let ckpt = Checkpoint { model, horizon_ms: h, config_hash: hash_hex(&ds.header.config_hash) };
        write_checkpoint(create(&path)?, &ckpt)?;
        log.write_csv(create(&log_path(out_dir, h))?)?;
        written.push(path);
    }
    Ok(written)
}

/// Evaluates the checkpoint of every horizon on the test lap and writes
/// `report.csv`, `report.json` and one `plot_h{ms}.csv` per horizon.
pub fn cmd_evaluate(
    cfg: &ExperimentConfig,
    dataset: &Path,
    checkpoint_dir: &Path,
    horizons: &[u64],
    out_dir: &Path,
) -> Result<Vec<HorizonReport>> {
    if horizons.is_empty() {
        log::warn!("no horizons requested; nothing to evaluate");
        return Ok(Vec::new());
    }
    let missing: Vec<String> = horizons
        .iter()
        .map(|&h| checkpoint_path(checkpoint_dir, h))
        .filter(|p| !p.exists())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "refusing a partial report, missing checkpoints: {}",
            missing.join(", ")
        )));
    }
    let ds = read_features(dataset)?;
    check_hash(cfg, &ds)?;
    let ds_hash = hash_hex(&ds.header.config_hash);

    let mut reports = Vec::with_capacity(horizons.len());
    for &h in horizons {
        let path = checkpoint_path(checkpoint_dir, h);
        let ckpt = read_checkpoint(std::io::BufReader::new(File::open(&path)?))?;
        if ckpt.config_hash != ds_hash {
            return Err(Error::HashMismatch { left: ckpt.config_hash, right: ds_hash });
        }
        if ckpt.horizon_ms != h {
            return Err(Error::InvalidConfig(format!(
                "{} was trained for {} ms, not {h} ms",
                path.display(),
                ckpt.horizon_ms
            )));
        }
        let pairs = eval_pairs(&ds, cfg, h)?;
        let settings = EvalSettings {
            subset_sizes: cfg.subset_sizes.clone(),
            horizon_ms: h,
            speed: cfg.trajectory.speed,
            carrier_frequency: cfg.scene.carrier_frequency,
            seed: cfg.seed,
        };
        let report = evaluate_horizon(&ckpt.model, &pairs, &settings)?;
        write_plot_csv(create(&out_dir.join(format!("plot_h{h}.csv")))?, &report, &cfg.subset_sizes)?;
        reports.push(report);
    }
    write_report_csv(create(&out_dir.join(REPORT_CSV))?, &reports)?;
    write_report_json(create(&out_dir.join(REPORT_JSON))?, &reports)?;
    Ok(reports)
}

/// Writes the simulated raw per-PRB reports as an SRSQ15 file and returns
/// the scale applied before quantization.
pub fn cmd_export_q15(cfg: &ExperimentConfig, out: &Path) -> Result<f64> {
    let generator = SnapshotGenerator::new(&cfg.scene, &cfg.trajectory, &cfg.pipeline.impairments)?;
    let scale = export_scale(&cfg.scene, &generator)?;
    let header = RawQ15Header {
        layers: crate::NUM_UE_LAYERS,
        beams: generator.beams().num_beams(),
        prbs: cfg.scene.num_prb,
        records: generator.len(),
    };
    let mut w = RawQ15Writer::new(create(out)?, header, scale)?;
    for k in 0..generator.len() {
        let s = generator.snapshot(k)?;
        w.write(&RawReport { timestamp: s.timestamp, ctf: s.ctf, mask: s.mask })?;
    }
    w.finish()?;
    Ok(scale)
}

/// Ingests an SRSQ15 file through the processing chain into a container.
pub fn cmd_replay(cfg: &ExperimentConfig, raw: &Path, out: &Path) -> Result<GenerateSummary> {
    let mut reader = RawQ15Reader::open(raw)?;
    let ds = ingest(std::iter::from_fn(|| reader.next_report().transpose()), cfg)?;
    write_dataset(create(out)?, &ds)?;
    Ok(GenerateSummary::of(&ds, out))
}

/// Renders `report.json` in `dir` as a text table.
pub fn cmd_report(dir: &Path) -> Result<String> {
    let path = dir.join(REPORT_JSON);
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
    let reports: Vec<HorizonReport> = serde_json::from_str(&text)?;
    let mut out = String::from(
        "horizon_ms  distance_lambda   n   pred   oracle  persist  random   mape%   wmape%\n",
    );
    for r in &reports {
        for s in &r.subsets {
            out.push_str(&format!(
                "{:>10}  {:>15.1}  {:>2}  {:.3}  {:.3}   {:.3}    {:.3}  {:>7.2}  {:>7.2}\n",
                r.horizon_ms,
                r.wavelengths,
                s.n,
                s.pred_ratio,
                s.oracle_ratio,
                s.persistence_ratio,
                s.random_ratio,
                s.mape_pct,
                s.wmape_pct
            ));
        }
    }
    Ok(out)
}
