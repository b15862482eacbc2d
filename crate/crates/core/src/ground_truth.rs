//! Downlink beamforming ground truth from uplink CTFs: TDD reciprocity, the
//! regularized MMSE estimator, and per-beam energy targets.

use nalgebra::DMatrix;
use ndarray::{Array, Array1, Array2, Dimension};
use num_complex::Complex64;

use crate::srs::{PrsgCtf, Verdict};
use crate::{Error, Result};

/// Downlink beam transfer function, `[beam, prsg]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DlBeamTf {
    pub values: Array2<Complex64>,
    pub timestamp: f64,
}

/// Per-beam downlink energy `eta`, indexed by beam.
#[derive(Debug, Clone, PartialEq)]
pub struct DlBeamTarget {
    pub eta: Array1<f64>,
    pub timestamp: f64,
}

/// `(H^H H + sigma2 I)^{-1} H^H`, shape `cols x rows`.
///
/// Solved through a QR factorization of the stacked matrix `[H; sigma I]`,
/// whose triangular factor `R` satisfies `R^H R = H^H H + sigma2 I`; two
/// triangular solves then give the result without forming an inverse.
pub fn mmse_dl(h_ul: &DMatrix<Complex64>, sigma2: f64) -> Result<DMatrix<Complex64>> {
    if !(sigma2 >= 0.0) {
        return Err(Error::OutOfRange(format!("noise variance {sigma2} must be >= 0")));
    }
    let (rows, cols) = h_ul.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::Empty("channel matrix"));
    }
    let sigma = Complex64::new(sigma2.sqrt(), 0.0);
    let stacked = DMatrix::from_fn(rows + cols, cols, |r, c| {
        if r < rows {
            h_ul[(r, c)]
        } else if r - rows == c {
            sigma
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let r = stacked.qr().r();

    let diag: Vec<f64> = (0..cols).map(|k| r[(k, k)].norm()).collect();
    let largest = diag.iter().cloned().fold(0.0, f64::max);
    let tol = largest * (rows + cols) as f64 * f64::EPSILON * 16.0;
    let rank = diag.iter().filter(|&&d| d > tol).count();
    if rank < cols || largest == 0.0 {
        return Err(Error::RankDeficient { rank, cols });
    }

    let hh = h_ul.adjoint();
    let y = r
        .adjoint()
        .solve_lower_triangular(&hh)
        .ok_or(Error::RankDeficient { rank, cols })?;
    r.solve_upper_triangular(&y).ok_or(Error::RankDeficient { rank, cols })
}

/// TDD reciprocity: the downlink channel estimate is the elementwise
/// conjugate of the uplink one.
pub fn reciprocity_conjugate<D: Dimension>(h_ul: &Array<Complex64, D>) -> Array<Complex64, D> {
    h_ul.mapv(|c| c.conj())
}

/// Applies the MMSE estimator independently on every PRSG.
///
/// For PRSG `f` the narrowband `beam x layer` uplink matrix is conjugated,
/// passed through [`mmse_dl`], and each beam's downlink weights are
/// combined across layers by root-sum-square.
pub fn compute_dl_beam_tf(snapshot: &PrsgCtf, verdict: Verdict, sigma2: f64) -> Result<DlBeamTf> {
    if !verdict.is_valid() {
        return Err(Error::SnapshotRefused(verdict));
    }
    let (layers, beams, prsgs) = snapshot.values.dim();
    let downlink = reciprocity_conjugate(&snapshot.values);
    let mut values = Array2::zeros((beams, prsgs));
    for f in 0..prsgs {
        let h = DMatrix::from_fn(beams, layers, |i, m| downlink[[m, i, f]]);
        let w = mmse_dl(&h, sigma2)?;
        for i in 0..beams {
            let power: f64 = (0..layers).map(|m| w[(m, i)].norm_sqr()).sum();
            values[[i, f]] = Complex64::new(power.sqrt(), 0.0);
        }
    }
    Ok(DlBeamTf { values, timestamp: snapshot.timestamp })
}

/// `eta_i = sum_f |tf[i, f]|^2`.
pub fn beam_energy_target(tf: &DlBeamTf) -> DlBeamTarget {
    let eta = tf.values.map(|c| c.norm_sqr()).sum_axis(ndarray::Axis(1));
    DlBeamTarget { eta, timestamp: tf.timestamp }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    #[test]
    fn identity_with_noise_scales_diagonal() {
        let h = DMatrix::<Complex64>::identity(4, 4);
        let w = mmse_dl(&h, 0.5).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 1.0 / 1.5 } else { 0.0 };
                assert!((w[(i, j)] - c(expect, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn scalar_one_inverts_to_one() {
        let h = DMatrix::from_element(1, 1, c(1.0, 0.0));
        let w = mmse_dl(&h, 0.0).unwrap();
        assert!((w[(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn noiseless_result_is_left_inverse() {
        let h = random_matrix(6, 3, 1);
        let w = mmse_dl(&h, 0.0).unwrap();
        assert_eq!(w.shape(), (3, 6));
        let p = &w * &h;
        let err = (p - DMatrix::<Complex64>::identity(3, 3)).norm();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn rank_deficient_without_noise_is_an_error() {
        let mut h = random_matrix(5, 3, 2);
        let col = h.column(0).into_owned();
        h.set_column(2, &(col * c(2.0, -1.0)));
        assert!(matches!(mmse_dl(&h, 0.0), Err(Error::RankDeficient { rank: 2, cols: 3 })));
        assert!(mmse_dl(&h, 0.1).is_ok());
    }

    #[test]
    fn conjugation_is_an_involution() {
        let a = ndarray::arr1(&[c(1.0, 2.0), c(-0.5, 0.0)]);
        let b = reciprocity_conjugate(&a);
        assert_eq!(b[0], c(1.0, -2.0));
        assert_eq!(b[1], c(-0.5, 0.0));
        assert_eq!(reciprocity_conjugate(&b), a);
    }

    fn single_layer_snapshot(column: impl Fn(usize) -> Complex64) -> PrsgCtf {
        let values = Array3::from_shape_fn((1, 8, 46), |(_, i, _)| column(i));
        PrsgCtf::new(values, Array3::from_elem((1, 8, 46), true), 0.0).unwrap()
    }

    #[test]
    fn unit_vector_channel_concentrates_on_its_beam() {
        let snap = single_layer_snapshot(|i| if i == 5 { c(1.0, 0.0) } else { c(0.0, 0.0) });
        let tf = compute_dl_beam_tf(&snap, Verdict::Valid, 0.0).unwrap();
        let eta = beam_energy_target(&tf).eta;
        for i in 0..8 {
            let expect = if i == 5 { 46.0 } else { 0.0 };
            assert!((eta[i] - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn large_noise_tends_to_matched_filter() {
        let snap = single_layer_snapshot(|i| c(0.03 + 0.01 * i as f64, -0.02 * i as f64));
        let sigma2 = 1e6;
        let tf = compute_dl_beam_tf(&snap, Verdict::Valid, sigma2).unwrap();
        for i in 0..8 {
            let mf = snap.values[[0, i, 0]].norm() / sigma2;
            assert!(((tf.values[[i, 0]].norm() - mf) / mf).abs() < 1e-6);
        }
    }

    #[test]
    fn invalid_snapshot_is_refused() {
        let snap = single_layer_snapshot(|_| c(1.0, 0.0));
        assert!(matches!(
            compute_dl_beam_tf(&snap, Verdict::Stalled, 1.0),
            Err(Error::SnapshotRefused(Verdict::Stalled))
        ));
    }

    #[test]
    fn energy_target_sums_squared_magnitudes() {
        let mut values = Array2::zeros((64, 46));
        values[[7, 12]] = c(0.0, 3.0);
        let eta = beam_energy_target(&DlBeamTf { values, timestamp: 0.0 }).eta;
        assert_eq!(eta[7], 9.0);
        assert_eq!(eta.iter().filter(|&&e| e != 0.0).count(), 1);
    }

    #[test]
    fn energy_total_equals_frobenius_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let values = Array2::from_shape_fn((64, 46), |_| c(rng.random(), rng.random()));
        let fro: f64 = values.iter().map(|v| v.norm_sqr()).sum();
        let eta = beam_energy_target(&DlBeamTf { values, timestamp: 0.0 }).eta;
        assert!(((eta.sum() - fro) / fro).abs() < 1e-12);
    }
}
