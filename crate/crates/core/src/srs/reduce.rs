use std::ops::Range;

use ndarray::Array3;
use num_complex::Complex64;

use super::PrsgCtf;
use crate::{Error, Result, NUM_PRB, NUM_PRSG};

fn groups(n: usize, size: usize) -> Vec<Range<usize>> {
    (0..n.div_ceil(size)).map(|g| g * size..((g + 1) * size).min(n)).collect()
}

/// Adjacent PRB pairs; an odd last PRB stands alone (273 → 137).
pub fn stage_one_groups(num_prb: usize) -> Vec<Range<usize>> {
    groups(num_prb, 2)
}

/// Consecutive triples of first-stage subgroups; the remainder forms the
/// final group (137 → 46).
pub fn stage_two_groups(num_subgroups: usize) -> Vec<Range<usize>> {
    groups(num_subgroups, 3)
}

// Equal-weight average along the last axis; an output is valid only when
// every contributing input is.
fn average_groups(
    values: &Array3<Complex64>,
    mask: &Array3<bool>,
    groups: &[Range<usize>],
) -> (Array3<Complex64>, Array3<bool>) {
    let (l, b, _) = values.dim();
    let mut out = Array3::zeros((l, b, groups.len()));
    let mut out_mask = Array3::from_elem((l, b, groups.len()), false);
    for li in 0..l {
        for bi in 0..b {
            for (g, range) in groups.iter().enumerate() {
                let valid = range.clone().all(|k| mask[[li, bi, k]]);
                if valid {
                    let sum: Complex64 = range.clone().map(|k| values[[li, bi, k]]).sum();
                    out[[li, bi, g]] = sum / range.len() as f64;
                }
                out_mask[[li, bi, g]] = valid;
            }
        }
    }
    (out, out_mask)
}

/// Two-stage PRB → PRSG downsampling of a raw `[layer, beam, 273]` report.
pub fn reduce_prb_to_prsg(
    raw: &Array3<Complex64>,
    mask: &Array3<bool>,
    timestamp: f64,
) -> Result<PrsgCtf> {
    if raw.dim().2 != NUM_PRB {
        return Err(Error::shape("raw PRB count", NUM_PRB, raw.dim().2));
    }
    if raw.dim() != mask.dim() {
        return Err(Error::shape("raw mask", format!("{:?}", raw.dim()), format!("{:?}", mask.dim())));
    }
    let first = stage_one_groups(NUM_PRB);
    let (pairs, pair_mask) = average_groups(raw, mask, &first);
    let second = stage_two_groups(first.len());
    debug_assert_eq!(second.len(), NUM_PRSG);
    let (prsg, prsg_mask) = average_groups(&pairs, &pair_mask, &second);
    PrsgCtf::new(prsg, prsg_mask, timestamp)
}
