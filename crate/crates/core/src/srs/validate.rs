use std::fmt;

use serde::{Deserialize, Serialize};

use super::PrsgCtf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Valid,
    /// Too few populated entries in the aggregated beam × PRSG matrix.
    InsufficientCsi,
    /// Report identical to the previous one.
    Stalled,
}

impl Verdict {
    pub fn code(self) -> u8 {
        match self {
            Verdict::Valid => 0,
            Verdict::InsufficientCsi => 1,
            Verdict::Stalled => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Verdict::Valid),
            1 => Some(Verdict::InsufficientCsi),
            2 => Some(Verdict::Stalled),
            _ => None,
        }
    }

    pub fn is_valid(self) -> bool {
        self == Verdict::Valid
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Valid => "valid",
            Verdict::InsufficientCsi => "insufficient_csi",
            Verdict::Stalled => "stalled",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationRules {
    /// Minimum fraction of populated aggregated entries.
    pub min_populated_fraction: f64,
    /// Largest per-entry change still counted as "unchanged".
    pub stall_tolerance: f64,
}

impl Default for ValidationRules {
    fn default() -> Self {
        ValidationRules { min_populated_fraction: 0.60, stall_tolerance: 0.0 }
    }
}

/// Classifies a report against the population and stall rules.
///
/// Population is counted on the layer-aggregated `[beam, prsg]` matrix; the
/// stall rule compares every entry of `cur` with `prev`.
pub fn validate_snapshot(cur: &PrsgCtf, prev: Option<&PrsgCtf>, rules: &ValidationRules) -> Verdict {
    let (agg, mask) = cur.aggregate_layers();
    let populated = agg.iter().zip(mask.iter()).filter(|(&v, &m)| m && v != 0.0).count();
    if (populated as f64) < rules.min_populated_fraction * agg.len() as f64 {
        return Verdict::InsufficientCsi;
    }
    if let Some(prev) = prev {
        if prev.values.dim() == cur.values.dim() {
            let unchanged = cur
                .values
                .iter()
                .zip(prev.values.iter())
                .all(|(a, b)| (a - b).norm() <= rules.stall_tolerance);
            if unchanged {
                return Verdict::Stalled;
            }
        }
    }
    Verdict::Valid
}
