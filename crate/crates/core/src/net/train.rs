use std::io::Write;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{mse_loss, AdamState, EncoderModel, ModelConfig, Params};
use crate::{Error, Result};

// Samples per gradient work item. Chunk sums are reduced in index order so
// results do not depend on the thread count.
const CHUNK: usize = 8;

/// One supervised example: CIR amplitudes at `t` and the beam energies at
/// `t + horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub input: Array2<f64>,
    pub target: Array1<f64>,
    /// Seconds.
    pub horizon: f64,
    pub timestamp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub holdout_loss: Option<f64>,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub optimizer_steps: u64,
}

impl TrainingLog {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,train_loss,holdout_loss,wall_ms")?;
        for r in &self.records {
            let holdout = r.holdout_loss.map(|v| format!("{v:.9e}")).unwrap_or_default();
            writeln!(w, "{},{:.9e},{},{}", r.epoch, r.train_loss, holdout, r.wall_ms)?;
        }
        Ok(())
    }

    /// Losses only, for comparisons that must ignore timing.
    pub fn losses(&self) -> Vec<(f64, Option<f64>)> {
        self.records.iter().map(|r| (r.train_loss, r.holdout_loss)).collect()
    }
}

fn rms<'a>(values: impl Iterator<Item = &'a f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

struct Sample {
    input: Array2<f64>,
    target: Array1<f64>,
}

fn batch_gradient(model: &EncoderModel, batch: &[&Sample]) -> Result<(Params, f64)> {
    let n = batch.len() as f64;
    let parts: Vec<Result<(Params, f64)>> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grads = Params::zeros_like(&model.params);
            let mut sse = 0.0;
            for s in chunk {
                let (pred, cache) = model.forward(s.input.view())?;
                let diff = &s.target - &pred;
                sse += diff.mapv(|d| d * d).sum();
                let dout: Vec<f64> = diff.iter().map(|d| -2.0 * d / n).collect();
                grads.add_assign(&model.backward(&cache, &dout)?);
            }
            Ok((grads, sse))
        })
        .collect();
    let mut total = Params::zeros_like(&model.params);
    let mut sse = 0.0;
    for part in parts {
        let (g, s) = part?;
        total.add_assign(&g);
        sse += s;
    }
    Ok((total, sse))
}

fn mean_loss(model: &EncoderModel, samples: &[Sample]) -> Result<f64> {
    let sums: Vec<Result<f64>> = samples
        .par_chunks(CHUNK)
        .map(|chunk| {
            let preds = chunk.iter().map(|s| model.forward(s.input.view()).map(|p| p.0)).collect::<Result<Vec<_>>>()?;
            let targets: Vec<Array1<f64>> = chunk.iter().map(|s| s.target.clone()).collect();
            Ok(mse_loss(&preds, &targets)?.0 * chunk.len() as f64)
        })
        .collect();
    let mut total = 0.0;
    for s in sums {
        total += s?;
    }
    Ok(total / samples.len() as f64)
}

/// Mini-batch Adam on the mean squared error between predicted and true
/// beam energies.
///
/// Pairs are taken in chronological order; the trailing `holdout_fraction`
/// is held out and the parameters with the lowest held-out loss are
/// returned. Inputs and targets are rescaled to unit RMS over the training
/// portion and the scalings are stored in the model.
pub fn train(pairs: &[TrainingPair], cfg: &ModelConfig) -> Result<(EncoderModel, TrainingLog)> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::Empty("training pairs"));
    }
    for p in pairs {
        if p.input.dim() != (cfg.seq_len, cfg.d_model) || p.target.len() != cfg.output_dim {
            return Err(Error::shape(
                "training pair",
                format!("{}x{} -> {}", cfg.seq_len, cfg.d_model, cfg.output_dim),
                format!("{}x{} -> {}", p.input.nrows(), p.input.ncols(), p.target.len()),
            ));
        }
    }

    let mut n_holdout = (pairs.len() as f64 * cfg.holdout_fraction).round() as usize;
    if cfg.holdout_fraction > 0.0 && n_holdout == 0 && pairs.len() > 1 {
        n_holdout = 1;
    }
    n_holdout = n_holdout.min(pairs.len() - 1);
    let (fit, held) = pairs.split_at(pairs.len() - n_holdout);
    let fit: Vec<&TrainingPair> = match cfg.max_train_pairs {
        Some(cap) if cap > 0 && cap < fit.len() => {
            (0..cap).map(|k| &fit[k * fit.len() / cap]).collect()
        }
        _ => fit.iter().collect(),
    };

    let input_rms = rms(fit.iter().flat_map(|p| p.input.iter()));
    let target_rms = rms(fit.iter().flat_map(|p| p.target.iter()));
    let input_scale = if input_rms > 0.0 { 1.0 / input_rms } else { 1.0 };
    let target_scale = if target_rms > 0.0 { target_rms } else { 1.0 };
    let prepare = |p: &TrainingPair| Sample {
        input: p.input.mapv(|v| v * input_scale),
        target: p.target.mapv(|v| v / target_scale),
    };
    let train_set: Vec<Sample> = fit.iter().map(|p| prepare(p)).collect();
    let holdout_set: Vec<Sample> = held.iter().map(prepare).collect();

    let mut model = EncoderModel::init(cfg, cfg.seed)?;
    model.input_scale = input_scale;
    model.target_scale = target_scale;
    let mut adam = AdamState::new(&model.params);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);

    let mut log = TrainingLog::default();
    let mut best: Option<(f64, Params)> = None;
    let mut since_best = 0usize;
    let start = Instant::now();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sse = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = idx.iter().map(|&i| &train_set[i]).collect();
            let (grads, batch_sse) = batch_gradient(&model, &batch)?;
            sse += batch_sse;
            adam.step(&mut model.params, &grads, cfg.learning_rate);
            if !model.params.all_finite() {
                return Err(Error::NonFinite(format!("parameters after epoch {epoch}")));
            }
        }
        let train_loss = sse / train_set.len() as f64;

        let last = epoch + 1 == cfg.epochs;
        let holdout_loss = if (epoch + 1) % cfg.holdout_every == 0 || last {
            let loss = if holdout_set.is_empty() {
                mean_loss(&model, &train_set)?
            } else {
                mean_loss(&model, &holdout_set)?
            };
            Some(loss)
        } else {
            None
        };
        log.records.push(EpochRecord {
            epoch,
            train_loss,
            holdout_loss,
            wall_ms: start.elapsed().as_millis() as u64,
        });
        log::debug!("epoch {epoch}: train {train_loss:.4e} holdout {holdout_loss:?}");

        if let Some(loss) = holdout_loss {
            if best.as_ref().is_none_or(|(b, _)| loss < *b) {
                best = Some((loss, model.params.clone()));
                log.best_epoch = epoch;
                since_best = 0;
            } else {
                since_best += cfg.holdout_every;
            }
            if cfg.patience.is_some_and(|p| since_best >= p) {
                break;
            }
        }
    }
    log.optimizer_steps = adam.step;
    if let Some((_, params)) = best {
        model.params = params;
    }
    Ok((model, log))
}
