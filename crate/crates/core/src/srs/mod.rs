//! Uplink SRS processing: Q15 unpacking, PRB→PRSG reduction, snapshot
//! validation, dataset normalization, and the windowed-IDFT impulse-response
//! features `|G_t|`.

mod cir;
mod normalize;
mod q15;
mod reduce;
mod validate;

pub use cir::{cir_features, hann_window, window_and_idft, CirBeamMatrix};
pub use normalize::{normalization_scalar, normalize_dataset, NormalizationAccumulator};
pub use q15::{q15_decode, q15_encode, Q15Sample, Q15_MAX, Q15_STEP};
pub use reduce::{reduce_prb_to_prsg, stage_one_groups, stage_two_groups};
pub use validate::{validate_snapshot, ValidationRules, Verdict};

use ndarray::{Array2, Array3, Axis};
use num_complex::Complex64;

use crate::{Error, Result, NUM_PRSG};

/// Per-PRSG uplink CTF of one report, `[layer, beam, prsg]`.
///
/// Entries whose mask is false are exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PrsgCtf {
    pub values: Array3<Complex64>,
    pub mask: Array3<bool>,
    pub timestamp: f64,
}

impl PrsgCtf {
    pub fn new(mut values: Array3<Complex64>, mask: Array3<bool>, timestamp: f64) -> Result<Self> {
        if values.dim() != mask.dim() {
            return Err(Error::shape("prsg mask", format!("{:?}", values.dim()), format!("{:?}", mask.dim())));
        }
        if values.dim().2 != NUM_PRSG {
            return Err(Error::shape("prsg count", NUM_PRSG, values.dim().2));
        }
        values.zip_mut_with(&mask, |v, &m| {
            if !m {
                *v = Complex64::new(0.0, 0.0);
            }
        });
        Ok(PrsgCtf { values, mask, timestamp })
    }

    pub fn num_layers(&self) -> usize {
        self.values.dim().0
    }

    pub fn num_beams(&self) -> usize {
        self.values.dim().1
    }

    /// Collapses the layer axis by root-mean-square per `(beam, prsg)`.
    ///
    /// An aggregated entry is valid only when every layer reported it.
    pub fn aggregate_layers(&self) -> (Array2<f64>, Array2<bool>) {
        let layers = self.num_layers() as f64;
        let power = self.values.map(|c| c.norm_sqr()).sum_axis(Axis(0));
        let mask = self.mask.map_axis(Axis(0), |m| m.iter().all(|&b| b));
        let mut rms = power.mapv(|p| (p / layers).sqrt());
        rms.zip_mut_with(&mask, |v, &m| {
            if !m {
                *v = 0.0;
            }
        });
        (rms, mask)
    }

    pub fn scale(&mut self, s: f64) {
        self.values.mapv_inplace(|c| c * s);
    }
}
