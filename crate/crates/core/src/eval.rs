//! Beam-subset selection, captured-energy ratios, MAPE/WMAPE, and
//! per-horizon reports with persistence and random baselines.

use std::io::Write;

use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::net::EncoderModel;
use crate::scene::SPEED_OF_LIGHT;
use crate::{Error, Result};

/// Default subset sizes.
pub const SUBSET_SIZES: [usize; 4] = [4, 8, 16, 32];

/// Relative MAPE floor: entries below this fraction of the mean true energy
/// are excluded.
pub const MAPE_FLOOR_FRACTION: f64 = 1e-9;

/// Beam indices ordered by predicted energy, strongest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetSelection {
    pub beam_indices: Vec<usize>,
}

/// Indices of the `n` largest entries; equal energies go to the lower index.
pub fn top_n_beams(eta: &[f64], n: usize) -> Result<SubsetSelection> {
    if n == 0 || n > eta.len() {
        return Err(Error::OutOfRange(format!("subset size {n} not in 1..={}", eta.len())));
    }
    let mut idx: Vec<usize> = (0..eta.len()).collect();
    idx.sort_by(|&a, &b| eta[b].total_cmp(&eta[a]).then(a.cmp(&b)));
    idx.truncate(n);
    Ok(SubsetSelection { beam_indices: idx })
}

/// Sum of the first `n` entries of a descending power list.
pub fn cumulative_power(sorted_desc: &[f64], n: usize) -> Result<f64> {
    if n > sorted_desc.len() {
        return Err(Error::OutOfRange(format!("n = {n} exceeds length {}", sorted_desc.len())));
    }
    if sorted_desc.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::OutOfRange("powers are not sorted in descending order".into()));
    }
    Ok(sorted_desc[..n].iter().sum())
}

fn total_energy(truth: &[f64]) -> Result<f64> {
    let total: f64 = truth.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroEnergy("true beam energies"));
    }
    Ok(total)
}

/// Fraction of the true energy held by the top-`n` beams of `pred`.
pub fn captured_energy_ratio(pred: &[f64], truth: &[f64], n: usize) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::shape("beam energies", truth.len(), pred.len()));
    }
    let total = total_energy(truth)?;
    let sel = top_n_beams(pred, n)?;
    Ok(sel.beam_indices.iter().map(|&i| truth[i]).sum::<f64>() / total)
}

/// Best achievable captured ratio: the truth ranked by itself.
pub fn oracle_energy_ratio(truth: &[f64], n: usize) -> Result<f64> {
    captured_energy_ratio(truth, truth, n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapeResult {
    pub percent: f64,
    pub excluded: usize,
}

/// Mean of `|y - yhat| / |y|` in percent over entries with `|y| >= floor`.
pub fn mape(y: &[f64], yhat: &[f64], floor: f64) -> Result<MapeResult> {
    if y.len() != yhat.len() {
        return Err(Error::shape("mape", y.len(), yhat.len()));
    }
    let (mut sum, mut count) = (0.0, 0usize);
    for (a, b) in y.iter().zip(yhat) {
        if a.abs() >= floor && a.abs() > 0.0 {
            sum += (a - b).abs() / a.abs();
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Empty("mape entries above the floor"));
    }
    Ok(MapeResult { percent: 100.0 * sum / count as f64, excluded: y.len() - count })
}

/// `sum |y - yhat| / sum |y|` in percent.
pub fn wmape(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::shape("wmape", y.len(), yhat.len()));
    }
    let den: f64 = y.iter().map(|v| v.abs()).sum();
    if !(den > 0.0) {
        return Err(Error::ZeroEnergy("wmape denominator"));
    }
    let num: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum();
    Ok(100.0 * num / den)
}

/// Distance covered in `horizon` seconds, in carrier wavelengths.
pub fn distance_in_wavelengths(speed: f64, horizon: f64, carrier_frequency: f64) -> f64 {
    speed * horizon * carrier_frequency / SPEED_OF_LIGHT
}

/// One test example: features at `t`, true energies at `t` and `t + horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPair {
    pub input: Array2<f64>,
    pub eta_now: Array1<f64>,
    pub eta_future: Array1<f64>,
    pub timestamp: f64,
}

/// Anything that ranks beams for a test example.
pub trait Predictor: Sync {
    fn predict(&self, pair: &EvalPair) -> Result<Array1<f64>>;
}

impl Predictor for EncoderModel {
    fn predict(&self, pair: &EvalPair) -> Result<Array1<f64>> {
        EncoderModel::predict(self, pair.input.view())
    }
}

/// Returns the true future energies.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleStub;

impl Predictor for OracleStub {
    fn predict(&self, pair: &EvalPair) -> Result<Array1<f64>> {
        Ok(pair.eta_future.clone())
    }
}

/// Uniform random scores, reproducible per timestamp.
#[derive(Debug, Clone, Copy)]
pub struct RandomStub {
    pub seed: u64,
}

impl Predictor for RandomStub {
    fn predict(&self, pair: &EvalPair) -> Result<Array1<f64>> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ pair.timestamp.to_bits());
        Ok(Array1::from_shape_fn(pair.eta_future.len(), |_| rng.random::<f64>()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetMetrics {
    pub n: usize,
    pub pred_ratio: f64,
    pub oracle_ratio: f64,
    pub persistence_ratio: f64,
    pub random_ratio: f64,
    pub mape_pct: f64,
    pub wmape_pct: f64,
    pub excluded_count: usize,
}

/// Captured ratios of one test snapshot, per subset size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRatios {
    pub timestamp: f64,
    pub pred: Vec<f64>,
    pub oracle: Vec<f64>,
    pub persistence: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonReport {
    pub horizon_ms: u64,
    pub snapshots: usize,
    pub wavelengths: f64,
    pub subsets: Vec<SubsetMetrics>,
    #[serde(skip)]
    pub per_snapshot: Vec<SnapshotRatios>,
}

impl HorizonReport {
    pub fn subset(&self, n: usize) -> Option<&SubsetMetrics> {
        self.subsets.iter().find(|s| s.n == n)
    }
}

#[derive(Debug, Clone)]
pub struct EvalSettings {
    pub subset_sizes: Vec<usize>,
    pub horizon_ms: u64,
    /// UE speed in m/s, for the wavelength distance.
    pub speed: f64,
    pub carrier_frequency: f64,
    /// Seed of the random-subset baseline.
    pub seed: u64,
}

/// Runs `predictor` on every test pair and aggregates mean captured ratios
/// for the model, the oracle, persistence and random subsets, plus
/// MAPE/WMAPE over each snapshot's predicted top-`n` beams.
pub fn evaluate_horizon<P: Predictor + ?Sized>(
    predictor: &P,
    pairs: &[EvalPair],
    settings: &EvalSettings,
) -> Result<HorizonReport> {
    if pairs.is_empty() {
        return Err(Error::Empty("test pairs"));
    }
    let preds: Vec<Array1<f64>> = pairs.par_iter().map(|p| predictor.predict(p)).collect::<Result<_>>()?;

    let mean_energy = pairs.iter().map(|p| p.eta_future.sum()).sum::<f64>()
        / pairs.iter().map(|p| p.eta_future.len()).sum::<usize>() as f64;
    let floor = MAPE_FLOOR_FRACTION * mean_energy;

    let mut per_snapshot: Vec<SnapshotRatios> = pairs
        .iter()
        .map(|p| SnapshotRatios { timestamp: p.timestamp, pred: vec![], oracle: vec![], persistence: vec![] })
        .collect();
    let mut subsets = Vec::with_capacity(settings.subset_sizes.len());
    let count = pairs.len() as f64;
    for (si, &n) in settings.subset_sizes.iter().enumerate() {
        let (mut pred_sum, mut oracle_sum, mut pers_sum, mut rand_sum) = (0.0, 0.0, 0.0, 0.0);
        let (mut y, mut yhat) = (Vec::new(), Vec::new());
        for (k, (pair, pred)) in pairs.iter().zip(&preds).enumerate() {
            let truth = pair.eta_future.as_slice().expect("contiguous");
            let pred = pred.as_slice().expect("contiguous");
            let total = total_energy(truth)?;
            let r_pred = captured_energy_ratio(pred, truth, n)?;
            let r_oracle = oracle_energy_ratio(truth, n)?;
            let r_pers = captured_energy_ratio(pair.eta_now.as_slice().expect("contiguous"), truth, n)?;
            let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
            rng.set_stream((si * pairs.len() + k) as u64);
            let r_rand = sample(&mut rng, truth.len(), n).iter().map(|i| truth[i]).sum::<f64>() / total;
            pred_sum += r_pred;
            oracle_sum += r_oracle;
            pers_sum += r_pers;
            rand_sum += r_rand;
            per_snapshot[k].pred.push(r_pred);
            per_snapshot[k].oracle.push(r_oracle);
            per_snapshot[k].persistence.push(r_pers);
            for i in top_n_beams(pred, n)?.beam_indices {
                y.push(truth[i]);
                yhat.push(pred[i]);
            }
        }
        let m = mape(&y, &yhat, floor)?;
        subsets.push(SubsetMetrics {
            n,
            pred_ratio: pred_sum / count,
            oracle_ratio: oracle_sum / count,
            persistence_ratio: pers_sum / count,
            random_ratio: rand_sum / count,
            mape_pct: m.percent,
            wmape_pct: wmape(&y, &yhat)?,
            excluded_count: m.excluded,
        });
    }
    Ok(HorizonReport {
        horizon_ms: settings.horizon_ms,
        snapshots: pairs.len(),
        wavelengths: distance_in_wavelengths(
            settings.speed,
            settings.horizon_ms as f64 / 1000.0,
            settings.carrier_frequency,
        ),
        subsets,
        per_snapshot,
    })
}

pub const REPORT_CSV_HEADER: &str = "horizon_ms,n,pred_ratio,oracle_ratio,persistence_ratio,random_ratio,mape_pct,wmape_pct,excluded_count,snapshots,wavelengths";

pub fn write_report_csv<W: Write>(mut w: W, reports: &[HorizonReport]) -> std::io::Result<()> {
    writeln!(w, "{REPORT_CSV_HEADER}")?;
    for r in reports {
        for s in &r.subsets {
            writeln!(
                w,
                "{},{},{:.6},{:.6},{:.6},{:.6},{:.4},{:.4},{},{},{:.2}",
                r.horizon_ms,
                s.n,
                s.pred_ratio,
                s.oracle_ratio,
                s.persistence_ratio,
                s.random_ratio,
                s.mape_pct,
                s.wmape_pct,
                s.excluded_count,
                r.snapshots,
                r.wavelengths
            )?;
        }
    }
    Ok(())
}

pub fn write_report_json<W: Write>(w: W, reports: &[HorizonReport]) -> Result<()> {
    serde_json::to_writer_pretty(w, reports)?;
    Ok(())
}

/// Per-snapshot captured ratios of one horizon, one row per test snapshot.
pub fn write_plot_csv<W: Write>(mut w: W, report: &HorizonReport, subset_sizes: &[usize]) -> std::io::Result<()> {
    write!(w, "timestamp")?;
    for n in subset_sizes {
        write!(w, ",pred_n{n},oracle_n{n},persistence_n{n}")?;
    }
    writeln!(w)?;
    for s in &report.per_snapshot {
        write!(w, "{:.3}", s.timestamp)?;
        for k in 0..s.pred.len() {
            write!(w, ",{:.6},{:.6},{:.6}", s.pred[k], s.oracle[k], s.persistence[k])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random::<f64>()).collect()
    }

    // Largest subset sum over all n-subsets, by exhaustive enumeration.
    fn brute_force_best(eta: &[f64], n: usize) -> f64 {
        let len = eta.len();
        (0u32..1 << len)
            .filter(|m| m.count_ones() as usize == n)
            .map(|m| (0..len).filter(|i| m >> i & 1 == 1).map(|i| eta[i]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn ties_go_to_lower_index() {
        let mut eta = vec![0.0; 64];
        eta[..4].copy_from_slice(&[0.1, 0.5, 0.2, 0.2]);
        assert_eq!(top_n_beams(&eta, 2).unwrap().beam_indices, vec![1, 2]);
    }

    #[test]
    fn full_selection_is_sorted() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let eta = random_vec(&mut rng, 64);
        let sel = top_n_beams(&eta, 64).unwrap().beam_indices;
        assert_eq!(sel.len(), 64);
        assert!(sel.windows(2).all(|w| eta[w[0]] >= eta[w[1]]));
    }

    #[test]
    fn subset_size_out_of_range() {
        assert!(top_n_beams(&[1.0; 64], 0).is_err());
        assert!(top_n_beams(&[1.0; 64], 65).is_err());
    }

    #[test]
    fn top_three_of_six_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let eta = random_vec(&mut rng, 6);
            let sel = top_n_beams(&eta, 3).unwrap().beam_indices;
            let sum: f64 = sel.iter().map(|&i| eta[i]).sum();
            assert!((sum - brute_force_best(&eta, 3)).abs() < 1e-12);
        }
    }

    #[test]
    fn top_n_matches_enumeration_up_to_length_eight() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for len in 1..=8 {
            for _ in 0..20 {
                // coarse values so ties occur
                let eta: Vec<f64> = (0..len).map(|_| rng.random_range(0..4) as f64).collect();
                for n in 1..=len {
                    let sel = top_n_beams(&eta, n).unwrap().beam_indices;
                    let sum: f64 = sel.iter().map(|&i| eta[i]).sum();
                    assert_eq!(sum, brute_force_best(&eta, n));
                }
            }
        }
    }

    #[test]
    fn cumulative_power_examples() {
        assert_eq!(cumulative_power(&[4.0, 3.0, 2.0, 1.0], 2).unwrap(), 7.0);
        assert_eq!(cumulative_power(&[4.0, 3.0, 2.0, 1.0], 4).unwrap(), 10.0);
        assert_eq!(cumulative_power(&[9.0, 3.0], 1).unwrap(), 9.0);
        assert!(cumulative_power(&[1.0, 2.0], 1).is_err());
        assert!(cumulative_power(&[2.0, 1.0], 3).is_err());
    }

    #[test]
    fn concentrated_energy_is_fully_captured() {
        let mut truth = vec![0.0; 64];
        truth[17] = 5.0;
        let mut pred = vec![0.0; 64];
        pred[17] = 0.3;
        pred[3] = 0.9;
        assert_eq!(captured_energy_ratio(&pred, &truth, 4).unwrap(), 1.0);
        assert!(matches!(captured_energy_ratio(&pred, &[0.0; 64], 4), Err(Error::ZeroEnergy(_))));
    }

    #[test]
    fn oracle_ratio_is_monotone_and_reaches_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let truth = random_vec(&mut rng, 64);
            let ratios: Vec<f64> = (1..=64).map(|n| oracle_energy_ratio(&truth, n).unwrap()).collect();
            assert!(ratios.windows(2).all(|w| w[1] >= w[0]));
            assert!((ratios[63] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mape_and_wmape_examples() {
        let y = [1.0, 2.0];
        let yhat = [1.1, 1.8];
        assert!((mape(&y, &yhat, 0.0).unwrap().percent - 10.0).abs() < 1e-9);
        assert!((wmape(&y, &yhat).unwrap() - 10.0).abs() < 1e-9);
        assert_eq!(mape(&y, &y, 0.0).unwrap().percent, 0.0);
        assert_eq!(wmape(&y, &y).unwrap(), 0.0);
        let m = mape(&[0.0, 1.0], &[5.0, 1.0], 1e-6).unwrap();
        assert_eq!(m, MapeResult { percent: 0.0, excluded: 1 });
        assert!(mape(&[0.0], &[1.0], 1e-6).is_err());
        assert!(wmape(&[0.0], &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn wmape_is_scale_invariant(y in prop::collection::vec(0.01f64..10.0, 1..20), c in 0.1f64..100.0, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let yhat: Vec<f64> = y.iter().map(|v| v * rng.random_range(0.5..1.5)).collect();
            let a = wmape(&y, &yhat).unwrap();
            let ys: Vec<f64> = y.iter().map(|v| v * c).collect();
            let yhats: Vec<f64> = yhat.iter().map(|v| v * c).collect();
            prop_assert!((a - wmape(&ys, &yhats).unwrap()).abs() < 1e-9 * a.max(1.0));
        }

        #[test]
        fn wmape_equals_mape_for_equal_magnitudes(m in 0.1f64..10.0, signs in prop::collection::vec(any::<bool>(), 1..20), seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y: Vec<f64> = signs.iter().map(|&s| if s { m } else { -m }).collect();
            let yhat: Vec<f64> = y.iter().map(|v| v + rng.random_range(-1.0..1.0)).collect();
            let a = wmape(&y, &yhat).unwrap();
            let b = mape(&y, &yhat, 0.0).unwrap().percent;
            prop_assert!(a <= b + 1e-9 && (a - b).abs() < 1e-9);
        }
    }

    fn random_pairs(count: usize, seed: u64) -> Vec<EvalPair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|k| EvalPair {
                input: Array2::zeros((64, 46)),
                eta_now: Array1::from(random_vec(&mut rng, 64)),
                eta_future: Array1::from_shape_fn(64, |_| rng.random::<f64>().powi(4)),
                timestamp: k as f64 * 0.02,
            })
            .collect()
    }

    fn settings(horizon_ms: u64) -> EvalSettings {
        EvalSettings { subset_sizes: SUBSET_SIZES.to_vec(), horizon_ms, speed: 4.2, carrier_frequency: 3.85e9, seed: 7 }
    }

    #[test]
    fn oracle_stub_reaches_oracle_ratio() {
        let pairs = random_pairs(50, 4);
        let r = evaluate_horizon(&OracleStub, &pairs, &settings(0)).unwrap();
        for s in &r.subsets {
            assert_eq!(s.pred_ratio, s.oracle_ratio);
            assert_eq!(s.mape_pct, 0.0);
        }
        assert_eq!(r.snapshots, 50);
    }

    #[test]
    fn random_stub_matches_monte_carlo() {
        let pairs = random_pairs(600, 5);
        let r = evaluate_horizon(&RandomStub { seed: 99 }, &pairs, &settings(0)).unwrap();
        // independent estimate: many uniform 32-subsets per snapshot
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let mut mc = 0.0;
        for p in &pairs {
            let total = p.eta_future.sum();
            let mut acc = 0.0;
            for _ in 0..50 {
                let mut idx: Vec<usize> = (0..64).collect();
                rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut rng);
                acc += idx[..32].iter().map(|&i| p.eta_future[i]).sum::<f64>() / total;
            }
            mc += acc / 50.0;
        }
        mc /= pairs.len() as f64;
        let s = r.subset(32).unwrap();
        assert!((s.pred_ratio - mc).abs() < 0.02 * mc, "{} vs {mc}", s.pred_ratio);
        assert!((s.random_ratio - mc).abs() < 0.02 * mc, "{} vs {mc}", s.random_ratio);
    }

    #[test]
    fn predictions_never_beat_the_oracle() {
        let pairs = random_pairs(100, 6);
        let r = evaluate_horizon(&RandomStub { seed: 1 }, &pairs, &settings(20)).unwrap();
        for s in &r.per_snapshot {
            for (p, o) in s.pred.iter().zip(&s.oracle) {
                assert!(*p <= o + 1e-12);
            }
        }
    }

    #[test]
    fn one_second_covers_about_54_wavelengths() {
        let r = evaluate_horizon(&OracleStub, &random_pairs(3, 7), &settings(1000)).unwrap();
        let expect = 4.2 * 1.0 / (SPEED_OF_LIGHT / 3.85e9);
        assert!((r.wavelengths - expect).abs() < 1e-9);
        assert!((r.wavelengths - 53.9).abs() < 0.05);
    }

    #[test]
    fn empty_test_set_is_an_error() {
        assert!(matches!(evaluate_horizon(&OracleStub, &[], &settings(0)), Err(Error::Empty(_))));
    }

    #[test]
    fn reports_are_deterministic() {
        let pairs = random_pairs(40, 8);
        let write = || {
            let r = evaluate_horizon(&RandomStub { seed: 3 }, &pairs, &settings(40)).unwrap();
            let mut buf = Vec::new();
            write_report_csv(&mut buf, &[r]).unwrap();
            buf
        };
        let a = write();
        assert_eq!(a, write());
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with(REPORT_CSV_HEADER));
        assert_eq!(text.lines().count(), 5);
    }
}
