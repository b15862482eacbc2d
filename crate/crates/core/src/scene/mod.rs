//! Geometric scene synthesis: grid-of-beams responses, single-bounce
//! multipath, and per-snapshot uplink channel transfer functions along
//! repeated UE laps.

mod beams;
mod ctf;
mod paths;
mod trajectory;

pub use beams::{BeamResponseTable, BeamScaling, Polarization};
pub use ctf::{evaluate_ctf, prb_frequencies};
pub use paths::{synthesize_paths, MultipathSet, Path, UeArray};
pub use trajectory::{
    generate_trajectory_dataset, Impairments, SnapshotGenerator, Trajectory, TrajectoryConfig,
    UplinkSnapshot, PRBS_PER_BLOCK,
};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Point in meters, `[x, y, z]`, `z` up.
pub type Point3 = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub rows: usize,
    pub cols: usize,
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        ArrayGeometry { rows: 4, cols: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub position: Point3,
    pub reflection_gain: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    /// Hz.
    pub carrier_frequency: f64,
    /// Hz.
    pub bandwidth: f64,
    pub num_prb: usize,
    /// Foot of the BS mast; the array phase centre sits `bs_height` above it.
    pub bs_position: Point3,
    pub bs_height: f64,
    /// Horizontal direction of the array boresight, radians from +x.
    pub array_azimuth: f64,
    /// Per polarization.
    pub array_geometry: ArrayGeometry,
    pub scatterers: Vec<Scatterer>,
    pub los_blocked: bool,
    /// Linear power of the additive noise per PRB entry.
    pub noise_variance: f64,
    pub rng_seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            carrier_frequency: 3.85e9,
            bandwidth: 100e6,
            num_prb: crate::NUM_PRB,
            bs_position: [0.0, 0.0, 0.0],
            bs_height: 20.0,
            array_azimuth: 0.0,
            array_geometry: ArrayGeometry::default(),
            scatterers: Vec::new(),
            los_blocked: false,
            noise_variance: 1e-6,
            rng_seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_prb == 0 {
            return Err(Error::InvalidConfig("num_prb must be positive".into()));
        }
        if !(self.bandwidth > 0.0) || !(self.carrier_frequency > 0.0) {
            return Err(Error::InvalidConfig(
                "bandwidth and carrier frequency must be positive".into(),
            ));
        }
        let per_pol = self.array_geometry.rows * self.array_geometry.cols;
        if per_pol * 2 != crate::NUM_BEAMS {
            return Err(Error::InvalidConfig(format!(
                "array {}x{} gives {per_pol} elements per polarization, need {}",
                self.array_geometry.rows,
                self.array_geometry.cols,
                crate::NUM_BEAMS / 2
            )));
        }
        if let Some(s) = self.scatterers.iter().find(|s| s.reflection_gain.norm() > 1.0) {
            return Err(Error::InvalidConfig(format!(
                "reflection gain {} at {:?} exceeds unit magnitude",
                s.reflection_gain, s.position
            )));
        }
        if !(self.noise_variance >= 0.0) {
            return Err(Error::InvalidConfig("noise variance must be >= 0".into()));
        }
        Ok(())
    }

    /// Array phase centre.
    pub fn bs_center(&self) -> Point3 {
        let [x, y, z] = self.bs_position;
        [x, y, z + self.bs_height]
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency
    }
}

pub(crate) fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn norm(a: Point3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

pub(crate) fn distance(a: Point3, b: Point3) -> f64 {
    norm(sub(a, b))
}
