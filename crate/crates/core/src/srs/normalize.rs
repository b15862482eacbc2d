use super::PrsgCtf;
use crate::{Error, Result};

/// Running count and energy of mask-true entries.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NormalizationAccumulator {
    pub energy: f64,
    pub count: usize,
    pub snapshots: usize,
}

impl NormalizationAccumulator {
    pub fn add(&mut self, s: &PrsgCtf) {
        self.snapshots += 1;
        for (v, &m) in s.values.iter().zip(s.mask.iter()) {
            if m {
                self.energy += v.norm_sqr();
                self.count += 1;
            }
        }
    }

    /// `sqrt(count / energy)`.
    pub fn scalar(&self) -> Result<f64> {
        if self.snapshots == 0 {
            return Err(Error::Empty("no snapshots to normalize"));
        }
        if self.count == 0 || !(self.energy > 0.0) {
            return Err(Error::ZeroEnergy("dataset has no nonzero valid entries"));
        }
        Ok((self.count as f64 / self.energy).sqrt())
    }
}

/// Global scalar that brings the mean square of all valid entries to one.
pub fn normalization_scalar<'a>(snapshots: impl IntoIterator<Item = &'a PrsgCtf>) -> Result<f64> {
    let mut acc = NormalizationAccumulator::default();
    for s in snapshots {
        acc.add(s);
    }
    acc.scalar()
}

/// Scales every snapshot by the dataset-wide scalar and returns it.
pub fn normalize_dataset(snapshots: &mut [PrsgCtf]) -> Result<f64> {
    let s = normalization_scalar(snapshots.iter())?;
    for snap in snapshots.iter_mut() {
        snap.scale(s);
    }
    Ok(s)
}
