use ndarray::{Array1, Array3};
use num_complex::{Complex32, Complex64};
use rayon::prelude::*;

use super::container::{Dataset, DatasetHeader, DatasetRecord, StoredCtf, CONTAINER_VERSION};
use super::ExperimentConfig;
use crate::eval::EvalPair;
use crate::ground_truth::{beam_energy_target, compute_dl_beam_tf};
use crate::net::{train, EncoderModel, TrainingLog, TrainingPair};
use crate::scene::{SnapshotGenerator, Trajectory};
use crate::srs::{
    cir_features, reduce_prb_to_prsg, validate_snapshot, NormalizationAccumulator, PrsgCtf,
    ValidationRules, Verdict,
};
use crate::{Error, Result, NUM_BEAMS, NUM_PRSG, NUM_UE_LAYERS};

// Reports reduced in parallel per batch.
const BATCH: usize = 32;

/// One raw per-PRB uplink report, `[layer, beam, prb]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawReport {
    pub timestamp: f64,
    pub ctf: Array3<Complex64>,
    pub mask: Array3<bool>,
}

// Validates reports in arrival order and keeps them in storage precision
// until the normalization scalar is known.
struct Ingest {
    rules: ValidationRules,
    prev: Option<PrsgCtf>,
    acc: NormalizationAccumulator,
    pending: Vec<(f64, Verdict, StoredCtf)>,
}

impl Ingest {
    fn new(rules: ValidationRules) -> Self {
        Ingest { rules, prev: None, acc: NormalizationAccumulator::default(), pending: Vec::new() }
    }

    fn push(&mut self, ctf: PrsgCtf) {
        let verdict = validate_snapshot(&ctf, self.prev.as_ref(), &self.rules);
        if verdict.is_valid() {
            self.acc.add(&ctf);
        }
        let stored = StoredCtf {
            values: ctf.values.mapv(|c| Complex32::new(c.re as f32, c.im as f32)),
            mask: ctf.mask.clone(),
        };
        self.pending.push((ctf.timestamp, verdict, stored));
        self.prev = Some(ctf);
    }

    fn finish(self, cfg: &ExperimentConfig) -> Result<Dataset> {
        if self.acc.snapshots == 0 {
            return Err(Error::Empty("no valid snapshots to normalize"));
        }
        let s = self.acc.scalar()?;
        let sigma2 = cfg.pipeline.mmse_sigma2.unwrap_or(cfg.scene.noise_variance * s * s);
        let records = self
            .pending
            .into_par_iter()
            .map(|(timestamp, verdict, mut stored)| {
                stored.values.mapv_inplace(|c| {
                    Complex32::new((c.re as f64 * s) as f32, (c.im as f64 * s) as f32)
                });
                // features and targets come from the stored values so that
                // reading a container reproduces them exactly
                let ctf = stored.to_prsg(timestamp)?;
                let cir = cir_features(&ctf).amplitudes.mapv(|v| v as f32);
                let eta = if verdict.is_valid() {
                    let tf = compute_dl_beam_tf(&ctf, verdict, sigma2)?;
                    beam_energy_target(&tf).eta.mapv(|v| v as f32)
                } else {
                    Array1::zeros(ctf.num_beams())
                };
                Ok(DatasetRecord { timestamp, verdict, ctf: Some(stored), cir, eta })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            header: DatasetHeader {
                version: CONTAINER_VERSION,
                num_snapshots: records.len(),
                layers: NUM_UE_LAYERS,
                beams: NUM_BEAMS,
                prsgs: NUM_PRSG,
                normalization: s,
                config_hash: cfg.dataset_hash(),
            },
            records,
        })
    }
}

/// Simulates the configured scene and runs it through the SRS chain and
/// ground-truth computation.
pub fn build_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let generator = SnapshotGenerator::new(&cfg.scene, &cfg.trajectory, &cfg.pipeline.impairments)?;
    let mut ingest = Ingest::new(cfg.pipeline.rules());
    let indices: Vec<usize> = (0..generator.len()).collect();
    for chunk in indices.chunks(BATCH) {
        let reduced: Vec<PrsgCtf> = chunk
            .par_iter()
            .map(|&k| {
                let snap = generator.snapshot(k)?;
                reduce_prb_to_prsg(&snap.ctf, &snap.mask, snap.timestamp)
            })
            .collect::<Result<_>>()?;
        for ctf in reduced {
            ingest.push(ctf);
        }
    }
    ingest.finish(cfg)
}

/// Runs externally supplied raw reports through the same chain.
pub fn ingest<I>(reports: I, cfg: &ExperimentConfig) -> Result<Dataset>
where
    I: IntoIterator<Item = Result<RawReport>>,
{
    let mut ingest = Ingest::new(cfg.pipeline.rules());
    for report in reports {
        let r = report?;
        ingest.push(reduce_prb_to_prsg(&r.ctf, &r.mask, r.timestamp)?);
    }
    ingest.finish(cfg)
}

/// Lap of record `k` on the configured route.
pub fn lap_index(cfg: &ExperimentConfig, k: usize) -> Result<usize> {
    Ok(Trajectory::new(&cfg.trajectory)?.lap_and_arc(k).0)
}

/// Horizon in whole snapshot intervals.
pub fn horizon_steps(cfg: &ExperimentConfig, horizon_ms: u64) -> usize {
    (horizon_ms as f64 / 1000.0 / cfg.trajectory.snapshot_interval).round() as usize
}

#[derive(Clone, Copy, PartialEq)]
enum Region {
    Train,
    Test,
}

// (k, k + step) index pairs with both endpoints valid and inside `region`:
// every lap but the last trains, the last lap tests.
fn pair_indices(ds: &Dataset, cfg: &ExperimentConfig, horizon_ms: u64, region: Region) -> Result<Vec<(usize, usize)>> {
    let laps = cfg.trajectory.num_laps;
    if laps < 2 {
        return Err(Error::InvalidConfig(format!("a train/test split needs at least 2 laps, config has {laps}")));
    }
    let step = horizon_steps(cfg, horizon_ms);
    if step >= ds.len() {
        return Err(Error::OutOfRange(format!(
            "horizon {horizon_ms} ms ({step} snapshots) exceeds the dataset span of {} snapshots",
            ds.len()
        )));
    }
    let traj = Trajectory::new(&cfg.trajectory)?;
    let in_region = |k: usize| {
        let lap = traj.lap_and_arc(k).0;
        match region {
            Region::Train => lap + 1 < laps,
            Region::Test => lap + 1 == laps,
        }
    };
    Ok((0..ds.len() - step)
        .filter(|&k| {
            let j = k + step;
            ds.records[k].verdict.is_valid() && ds.records[j].verdict.is_valid() && in_region(k) && in_region(j)
        })
        .map(|k| (k, k + step))
        .collect())
}

pub fn training_pairs(ds: &Dataset, cfg: &ExperimentConfig, horizon_ms: u64) -> Result<Vec<TrainingPair>> {
    Ok(pair_indices(ds, cfg, horizon_ms, Region::Train)?
        .into_iter()
        .map(|(k, j)| TrainingPair {
            input: ds.records[k].cir.mapv(f64::from),
            target: ds.records[j].eta.mapv(f64::from),
            horizon: horizon_ms as f64 / 1000.0,
            timestamp: ds.records[k].timestamp,
        })
        .collect())
}

pub fn eval_pairs(ds: &Dataset, cfg: &ExperimentConfig, horizon_ms: u64) -> Result<Vec<EvalPair>> {
    Ok(pair_indices(ds, cfg, horizon_ms, Region::Test)?
        .into_iter()
        .map(|(k, j)| EvalPair {
            input: ds.records[k].cir.mapv(f64::from),
            eta_now: ds.records[k].eta.mapv(f64::from),
            eta_future: ds.records[j].eta.mapv(f64::from),
            timestamp: ds.records[k].timestamp,
        })
        .collect())
}

/// Trains the model for one horizon on the training laps.
pub fn train_model(ds: &Dataset, cfg: &ExperimentConfig, horizon_ms: u64) -> Result<(EncoderModel, TrainingLog)> {
    let pairs = training_pairs(ds, cfg, horizon_ms)?;
    if pairs.is_empty() {
        return Err(Error::Empty("training pairs (no valid pair inside the training laps)"));
    }
    train(&pairs, &cfg.model)
}
