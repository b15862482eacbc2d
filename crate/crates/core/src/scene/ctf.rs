use std::f64::consts::PI;

use ndarray::Array3;
use num_complex::Complex64;

use super::{BeamResponseTable, MultipathSet, SceneConfig};
use crate::{Error, Result, NUM_UE_LAYERS};

/// Centre frequency of every PRB across the configured bandwidth.
pub fn prb_frequencies(cfg: &SceneConfig) -> Vec<f64> {
    let n = cfg.num_prb as f64;
    let step = cfg.bandwidth / n;
    let start = cfg.carrier_frequency - cfg.bandwidth / 2.0;
    (0..cfg.num_prb).map(|k| start + (k as f64 + 0.5) * step).collect()
}

/// Per-beam channel transfer function, `[layer, beam, freq]`:
///
/// ```text
/// h[m, i, f] = sum_p beta_i(az_p, el_p, f) * alpha_{p,m} * exp(-j 2 pi f tau_p)
/// ```
pub fn evaluate_ctf(
    paths: &MultipathSet,
    beams: &BeamResponseTable,
    freqs: &[f64],
) -> Result<Array3<Complex64>> {
    if paths.is_empty() {
        return Err(Error::Empty("multipath set"));
    }
    let nb = beams.num_beams();
    let mut h = Array3::<Complex64>::zeros((NUM_UE_LAYERS, nb, freqs.len()));
    let mut beta = vec![Complex64::new(0.0, 0.0); nb];
    for p in &paths.paths {
        for (fi, &f) in freqs.iter().enumerate() {
            beams.responses_into(p.azimuth, p.elevation, f, &mut beta);
            let delay = Complex64::from_polar(1.0, -2.0 * PI * f * p.delay);
            for (m, g) in p.gains.iter().enumerate() {
                let c = g * delay;
                for (i, b) in beta.iter().enumerate() {
                    h[[m, i, fi]] += b * c;
                }
            }
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{BeamScaling, Path};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn iso() -> BeamResponseTable {
        BeamResponseTable::with_geometry(1, 1, 3.85e9, BeamScaling::Unit).unwrap()
    }

    fn path(delay: f64, gain: Complex64) -> Path {
        Path { delay, gains: [gain; NUM_UE_LAYERS], azimuth: 0.1, elevation: -0.2 }
    }

    #[test]
    fn unit_path_is_flat_one() {
        let set = MultipathSet { paths: vec![path(0.0, Complex64::new(1.0, 0.0))] };
        let freqs = [3.8e9, 3.85e9, 3.9e9];
        let h = evaluate_ctf(&set, &iso(), &freqs).unwrap();
        for v in h.iter() {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn single_path_has_linear_phase() {
        let tau = 137e-9;
        let set = MultipathSet { paths: vec![path(tau, Complex64::new(0.8, 0.0))] };
        let freqs = [1.0e6, 1.1e6, 1.2e6];
        let h = evaluate_ctf(&set, &iso(), &freqs).unwrap();
        for (fi, &f) in freqs.iter().enumerate() {
            let v = h[[0, 0, fi]];
            assert!((v.norm() - 0.8).abs() < 1e-12);
            let expect = Complex64::from_polar(0.8, -2.0 * PI * f * tau);
            assert!((v - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn two_path_ripple_matches_direct_sum() {
        let (t1, t2) = (50e-9, 210e-9);
        let set = MultipathSet {
            paths: vec![path(t1, Complex64::new(0.5, 0.0)), path(t2, Complex64::new(0.5, 0.0))],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let freqs: Vec<f64> = (0..10).map(|_| 3.8e9 + rng.random::<f64>() * 1e8).collect();
        let h = evaluate_ctf(&set, &iso(), &freqs).unwrap();
        for (fi, &f) in freqs.iter().enumerate() {
            let direct = 0.5 * Complex64::from_polar(1.0, -2.0 * PI * f * t1)
                + 0.5 * Complex64::from_polar(1.0, -2.0 * PI * f * t2);
            assert!((h[[0, 0, fi]] - direct).norm() < 1e-12);
            // |h|^2 = 0.5 + 0.5 cos(2 pi f dtau)
            let ripple = 0.5 + 0.5 * (2.0 * PI * f * (t2 - t1)).cos();
            assert!((h[[0, 0, fi]].norm_sqr() - ripple).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_path_set_is_rejected() {
        assert!(evaluate_ctf(&MultipathSet::default(), &iso(), &[1.0]).is_err());
    }

    #[test]
    fn prb_grid_spans_bandwidth() {
        let cfg = SceneConfig::default();
        let f = prb_frequencies(&cfg);
        assert_eq!(f.len(), 273);
        let step = f[1] - f[0];
        assert!((step - 100e6 / 273.0).abs() < 1e-3);
        assert!((f[136] - cfg.carrier_frequency).abs() < 1e-3);
    }
}
