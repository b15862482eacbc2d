use std::f64::consts::PI;

use num_complex::Complex64;

use super::{distance, norm, sub, Point3, SceneConfig, SPEED_OF_LIGHT};
use crate::{Error, Result, NUM_UE_LAYERS};

/// Path amplitude at 1 m of total travelled distance. Keeps raw CTF entries
/// inside the unit range used by the Q15 sample format for the distances
/// the presets use.
pub const REFERENCE_AMPLITUDE: f64 = 0.5;

/// UE positions closer than this to a scatterer are inside its body.
pub const SCATTERER_RADIUS: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    /// Seconds.
    pub delay: f64,
    /// Complex gain seen by each UE antenna.
    pub gains: [Complex64; NUM_UE_LAYERS],
    /// Arrival azimuth at the BS, radians from boresight.
    pub azimuth: f64,
    /// Arrival elevation at the BS, radians from horizontal.
    pub elevation: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MultipathSet {
    pub paths: Vec<Path>,
}

impl MultipathSet {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Union of two path sets.
    pub fn union(mut self, other: &MultipathSet) -> MultipathSet {
        self.paths.extend(other.paths.iter().cloned());
        self
    }
}

/// Four UE antennas on a horizontal square with half-wavelength sides.
#[derive(Debug, Clone, Copy)]
pub struct UeArray {
    offsets: [Point3; NUM_UE_LAYERS],
    wavelength: f64,
}

impl UeArray {
    pub fn new(wavelength: f64) -> Self {
        let q = wavelength / 4.0;
        UeArray {
            offsets: [[q, q, 0.0], [-q, q, 0.0], [-q, -q, 0.0], [q, -q, 0.0]],
            wavelength,
        }
    }

    /// Per-antenna phase factors for a path leaving the UE along `dir`.
    fn phases(&self, dir: Point3) -> [Complex64; NUM_UE_LAYERS] {
        let k = 2.0 * PI / self.wavelength;
        self.offsets.map(|o| {
            let proj = o[0] * dir[0] + o[1] * dir[1] + o[2] * dir[2];
            Complex64::from_polar(1.0, k * proj)
        })
    }
}

/// Single-bounce multipath between a UE and the BS array.
///
/// One path per scatterer (UE → scatterer → BS) plus the direct path unless
/// the scene blocks line of sight. Delay is the total length over `c`, the
/// amplitude falls off as `1/length`, and arrival angles come from the last
/// leg into the array.
pub fn synthesize_paths(cfg: &SceneConfig, ue: Point3) -> Result<MultipathSet> {
    let bs = cfg.bs_center();
    let d_direct = distance(ue, bs);
    if d_direct < 1e-9 {
        return Err(Error::Geometry("UE position coincides with the BS".into()));
    }
    let ue_array = UeArray::new(cfg.wavelength());
    let mut paths = Vec::with_capacity(cfg.scatterers.len() + 1);

    if !cfg.los_blocked {
        let (azimuth, elevation) = arrival_angles(cfg, ue);
        let amp = REFERENCE_AMPLITUDE / d_direct;
        let dep = unit(sub(bs, ue));
        paths.push(Path {
            delay: d_direct / SPEED_OF_LIGHT,
            gains: ue_array.phases(dep).map(|p| p * amp),
            azimuth,
            elevation,
        });
    }

    for s in &cfg.scatterers {
        let d1 = distance(ue, s.position);
        if d1 < SCATTERER_RADIUS {
            return Err(Error::Geometry(format!(
                "UE at {ue:?} lies inside scatterer at {:?}",
                s.position
            )));
        }
        let d2 = distance(s.position, bs);
        if d2 < 1e-9 {
            return Err(Error::Geometry(format!("scatterer at {:?} coincides with the BS", s.position)));
        }
        let total = d1 + d2;
        let (azimuth, elevation) = arrival_angles(cfg, s.position);
        let gain = s.reflection_gain * (REFERENCE_AMPLITUDE / total);
        let dep = unit(sub(s.position, ue));
        paths.push(Path {
            delay: total / SPEED_OF_LIGHT,
            gains: ue_array.phases(dep).map(|p| p * gain),
            azimuth,
            elevation,
        });
    }

    if paths.is_empty() {
        return Err(Error::Geometry(
            "scene has no propagation path (line of sight blocked and no scatterers)".into(),
        ));
    }
    Ok(MultipathSet { paths })
}

/// Azimuth/elevation of `source` as seen from the array, in array-local angles.
pub(crate) fn arrival_angles(cfg: &SceneConfig, source: Point3) -> (f64, f64) {
    let d = sub(source, cfg.bs_center());
    let horizontal = (d[0] * d[0] + d[1] * d[1]).sqrt();
    let elevation = d[2].atan2(horizontal);
    let azimuth = wrap_angle(d[1].atan2(d[0]) - cfg.array_azimuth);
    (azimuth, elevation)
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a < -PI {
        a += 2.0 * PI;
    }
    a
}

fn unit(v: Point3) -> Point3 {
    let n = norm(v);
    [v[0] / n, v[1] / n, v[2] / n]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Scatterer;

    fn scene() -> SceneConfig {
        SceneConfig { bs_position: [0.0, 0.0, 0.0], bs_height: 10.0, ..SceneConfig::default() }
    }

    #[test]
    fn direct_path_geometry() {
        let cfg = scene();
        let ue = [30.0, 40.0, 10.0];
        let set = synthesize_paths(&cfg, ue).unwrap();
        assert_eq!(set.len(), 1);
        let p = &set.paths[0];
        assert!((p.delay - 50.0 / SPEED_OF_LIGHT).abs() < 1e-18);
        assert!((p.azimuth - (40.0f64).atan2(30.0)).abs() < 1e-12);
        assert!(p.elevation.abs() < 1e-12);
    }

    #[test]
    fn blocked_scene_has_one_path_per_scatterer() {
        let mut cfg = scene();
        cfg.los_blocked = true;
        cfg.scatterers = (0..3)
            .map(|i| Scatterer {
                position: [10.0 * i as f64 + 5.0, -20.0, 3.0],
                reflection_gain: Complex64::new(0.5, 0.0),
            })
            .collect();
        let set = synthesize_paths(&cfg, [20.0, 10.0, 1.5]).unwrap();
        assert_eq!(set.len(), 3);
    }

    #[test]
    fn bounce_delay_matches_brute_force_geometry() {
        // UE, scatterer and BS on one line through the scatterer
        let mut cfg = scene();
        cfg.los_blocked = true;
        let s = [40.0, 0.0, 10.0];
        cfg.scatterers = vec![Scatterer { position: s, reflection_gain: Complex64::new(1.0, 0.0) }];
        let ue = [40.0, 25.0, 10.0];
        let set = synthesize_paths(&cfg, ue).unwrap();
        let d1 = ((ue[0] - s[0]).powi(2) + (ue[1] - s[1]).powi(2) + (ue[2] - s[2]).powi(2)).sqrt();
        let bs = cfg.bs_center();
        let d2 = ((bs[0] - s[0]).powi(2) + (bs[1] - s[1]).powi(2) + (bs[2] - s[2]).powi(2)).sqrt();
        assert_eq!((d1, d2), (25.0, 40.0));
        assert!((set.paths[0].delay - 65.0 / SPEED_OF_LIGHT).abs() < 1e-18);
        // arrival from the scatterer direction, straight along boresight
        assert!(set.paths[0].azimuth.abs() < 1e-12);
    }

    #[test]
    fn ue_at_bs_is_rejected() {
        let cfg = scene();
        assert!(matches!(synthesize_paths(&cfg, cfg.bs_center()), Err(Error::Geometry(_))));
    }

    #[test]
    fn ue_inside_scatterer_is_rejected() {
        let mut cfg = scene();
        cfg.scatterers = vec![Scatterer { position: [5.0, 5.0, 1.5], reflection_gain: Complex64::new(0.3, 0.0) }];
        assert!(synthesize_paths(&cfg, [5.1, 5.0, 1.5]).is_err());
    }

    #[test]
    fn ue_antennas_differ_only_by_phase() {
        let cfg = scene();
        let set = synthesize_paths(&cfg, [20.0, 7.0, 1.5]).unwrap();
        let g = &set.paths[0].gains;
        for m in 1..NUM_UE_LAYERS {
            assert!((g[m].norm() - g[0].norm()).abs() < 1e-15);
        }
        assert!((g[0] - g[2]).norm() > 1e-6);
    }
}
