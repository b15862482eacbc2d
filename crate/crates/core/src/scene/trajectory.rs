use ndarray::Array3;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    distance, evaluate_ctf, prb_frequencies, synthesize_paths, BeamResponseTable, Point3,
    SceneConfig,
};
use crate::{Error, Result};

/// PRBs per PRSG-aligned block (two PRBs per pair, three pairs per group).
pub const PRBS_PER_BLOCK: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectoryConfig {
    /// Lap polygon; closed implicitly when the last point differs from the first.
    pub waypoints: Vec<Point3>,
    /// m/s.
    pub speed: f64,
    /// Seconds between SRS reports.
    pub snapshot_interval: f64,
    pub num_laps: usize,
    /// Standard deviation of the per-lap perpendicular offset, meters.
    pub lap_jitter_std: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        // 22.8 m x 15 m rectangle, 75.6 m per lap
        TrajectoryConfig {
            waypoints: vec![
                [-11.4, -7.5, 1.5],
                [11.4, -7.5, 1.5],
                [11.4, 7.5, 1.5],
                [-11.4, 7.5, 1.5],
            ],
            speed: 4.2,
            snapshot_interval: 0.020,
            num_laps: 5,
            lap_jitter_std: 0.05,
        }
    }
}

/// Measurement impairments injected on top of the simulated channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Impairments {
    /// Probability that a PRSG-aligned block of PRBs is not updated.
    pub missing_block_fraction: f64,
    /// Probability that a snapshot is an outage report.
    pub outage_fraction: f64,
    /// Missing-block probability inside an outage report.
    pub outage_missing_fraction: f64,
    /// Probability that a report repeats the previous one unchanged.
    pub stall_fraction: f64,
}

impl Default for Impairments {
    fn default() -> Self {
        Impairments {
            missing_block_fraction: 0.10,
            outage_fraction: 0.01,
            outage_missing_fraction: 0.6,
            stall_fraction: 0.005,
        }
    }
}

impl Impairments {
    pub fn none() -> Self {
        Impairments {
            missing_block_fraction: 0.0,
            outage_fraction: 0.0,
            outage_missing_fraction: 0.0,
            stall_fraction: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("missing_block_fraction", self.missing_block_fraction),
            ("outage_fraction", self.outage_fraction),
            ("outage_missing_fraction", self.outage_missing_fraction),
            ("stall_fraction", self.stall_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("{name} = {p} is not a probability")));
            }
        }
        Ok(())
    }
}

/// Raw per-PRB uplink report.
#[derive(Debug, Clone, PartialEq)]
pub struct UplinkSnapshot {
    pub index: usize,
    /// Seconds.
    pub timestamp: f64,
    pub ue_position: Point3,
    pub lap: usize,
    /// `[layer, beam, prb]`.
    pub ctf: Array3<Complex64>,
    /// True where the entry was updated in this interval.
    pub mask: Array3<bool>,
}

/// Closed lap polygon walked at constant speed.
#[derive(Debug, Clone)]
pub struct Trajectory {
    vertices: Vec<Point3>,
    // cumulative arc length at each vertex; last entry is the perimeter
    arc: Vec<f64>,
    step: f64,
    laps: usize,
    per_lap: Option<usize>,
    total: usize,
}

impl Trajectory {
    pub fn new(cfg: &TrajectoryConfig) -> Result<Self> {
        if !(cfg.speed > 0.0) || !(cfg.snapshot_interval > 0.0) {
            return Err(Error::InvalidConfig("speed and snapshot interval must be positive".into()));
        }
        let mut vertices = cfg.waypoints.clone();
        if vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        let mut arc = vec![0.0];
        for i in 0..vertices.len() {
            let next = vertices[(i + 1) % vertices.len()];
            arc.push(arc[i] + distance(vertices[i], next));
        }
        let perimeter = *arc.last().unwrap();
        if vertices.len() < 2 || !(perimeter > 0.0) || cfg.num_laps == 0 {
            return Err(Error::InvalidConfig("trajectory has zero length".into()));
        }
        let step = cfg.speed * cfg.snapshot_interval;
        let ratio = perimeter / step;
        let per_lap = ((ratio - ratio.round()).abs() < 1e-6).then(|| ratio.round() as usize);
        let total = match per_lap {
            Some(n) => n * cfg.num_laps,
            None => (ratio * cfg.num_laps as f64 + 1e-9).floor() as usize,
        };
        if total == 0 {
            return Err(Error::InvalidConfig("trajectory yields no snapshots".into()));
        }
        Ok(Trajectory { vertices, arc, step, laps: cfg.num_laps, per_lap, total })
    }

    pub fn perimeter(&self) -> f64 {
        *self.arc.last().unwrap()
    }

    pub fn num_snapshots(&self) -> usize {
        self.total
    }

    pub fn num_laps(&self) -> usize {
        self.laps
    }

    /// Snapshots per lap when a lap is a whole number of steps.
    pub fn snapshots_per_lap(&self) -> Option<usize> {
        self.per_lap
    }

    /// Lap index and arc length within the lap of snapshot `k`.
    pub fn lap_and_arc(&self, k: usize) -> (usize, f64) {
        match self.per_lap {
            Some(n) => (k / n, (k % n) as f64 * self.step),
            None => {
                let s = k as f64 * self.step;
                let lap = (s / self.perimeter()).floor();
                (lap as usize, s - lap * self.perimeter())
            }
        }
    }

    /// Position on the nominal polygon at arc length `s`, offset by
    /// `lateral` meters along the horizontal normal of the current edge.
    pub fn position(&self, s: f64, lateral: f64) -> Point3 {
        let n = self.vertices.len();
        let edge = match self.arc[1..].iter().position(|&a| s < a) {
            Some(e) => e,
            None => n - 1,
        };
        let a = self.vertices[edge];
        let b = self.vertices[(edge + 1) % n];
        let len = self.arc[edge + 1] - self.arc[edge];
        let t = if len > 0.0 { (s - self.arc[edge]) / len } else { 0.0 };
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let h = (dx * dx + dy * dy).sqrt();
        let (nx, ny) = if h > 0.0 { (dy / h, -dx / h) } else { (0.0, 0.0) };
        [
            a[0] + t * (b[0] - a[0]) + lateral * nx,
            a[1] + t * (b[1] - a[1]) + lateral * ny,
            a[2] + t * (b[2] - a[2]),
        ]
    }
}

/// Deterministic, index-addressable snapshot source.
///
/// Every snapshot is a pure function of its index: randomness comes from
/// ChaCha substreams keyed by the scene seed (stream 0 draws per-lap
/// offsets, stream 1 the stall/outage schedule, stream `2 + k` the noise and
/// missing blocks of snapshot `k`). Output is independent of evaluation
/// order and thread count.
pub struct SnapshotGenerator {
    scene: SceneConfig,
    beams: BeamResponseTable,
    freqs: Vec<f64>,
    trajectory: Trajectory,
    impairments: Impairments,
    interval: f64,
    lap_offsets: Vec<f64>,
    stalled: Vec<bool>,
    outage: Vec<bool>,
}

impl SnapshotGenerator {
    pub fn new(scene: &SceneConfig, traj: &TrajectoryConfig, impairments: &Impairments) -> Result<Self> {
        scene.validate()?;
        impairments.validate()?;
        if !(traj.lap_jitter_std >= 0.0) {
            return Err(Error::InvalidConfig("lap jitter must be >= 0".into()));
        }
        let beams = BeamResponseTable::new(scene)?;
        let trajectory = Trajectory::new(traj)?;

        let mut lap_rng = substream(scene.rng_seed, 0);
        let lap_offsets = (0..trajectory.num_laps() + 1)
            .map(|_| traj.lap_jitter_std * lap_rng.sample::<f64, _>(StandardNormal))
            .collect();

        let mut sched = substream(scene.rng_seed, 1);
        let n = trajectory.num_snapshots();
        let mut stalled = Vec::with_capacity(n);
        let mut outage = Vec::with_capacity(n);
        for k in 0..n {
            let s = sched.random::<f64>() < impairments.stall_fraction;
            let o = sched.random::<f64>() < impairments.outage_fraction;
            stalled.push(s && k > 0);
            outage.push(o);
        }

        Ok(SnapshotGenerator {
            scene: scene.clone(),
            beams,
            freqs: prb_frequencies(scene),
            trajectory,
            impairments: impairments.clone(),
            interval: traj.snapshot_interval,
            lap_offsets,
            stalled,
            outage,
        })
    }

    pub fn len(&self) -> usize {
        self.trajectory.num_snapshots()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    pub fn beams(&self) -> &BeamResponseTable {
        &self.beams
    }

    pub fn is_stalled(&self, k: usize) -> bool {
        self.stalled[k]
    }

    pub fn is_outage(&self, k: usize) -> bool {
        self.outage[k]
    }

    pub fn ue_position(&self, k: usize) -> Point3 {
        let (lap, s) = self.trajectory.lap_and_arc(k);
        self.trajectory.position(s, self.lap_offsets[lap.min(self.lap_offsets.len() - 1)])
    }

    pub fn snapshot(&self, k: usize) -> Result<UplinkSnapshot> {
        if k >= self.len() {
            return Err(Error::OutOfRange(format!("snapshot {k} of {}", self.len())));
        }
        // a stalled report repeats the last fresh one
        let mut source = k;
        while self.stalled[source] {
            source -= 1;
        }
        let (ctf, mask) = self.measure(source)?;
        let (lap, _) = self.trajectory.lap_and_arc(k);
        Ok(UplinkSnapshot {
            index: k,
            timestamp: k as f64 * self.interval,
            ue_position: self.ue_position(k),
            lap,
            ctf,
            mask,
        })
    }

    fn measure(&self, k: usize) -> Result<(Array3<Complex64>, Array3<bool>)> {
        let paths = synthesize_paths(&self.scene, self.ue_position(k))?;
        let mut ctf = evaluate_ctf(&paths, &self.beams, &self.freqs)?;
        let mut rng = substream(self.scene.rng_seed, 2 + k as u64);

        let sigma = (self.scene.noise_variance / 2.0).sqrt();
        if sigma > 0.0 {
            for v in ctf.iter_mut() {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *v += Complex64::new(sigma * re, sigma * im);
            }
        }

        let p_missing = if self.outage[k] {
            self.impairments.outage_missing_fraction
        } else {
            self.impairments.missing_block_fraction
        };
        let nprb = self.freqs.len();
        let mut mask = Array3::from_elem(ctf.dim(), true);
        for block in 0..nprb.div_ceil(PRBS_PER_BLOCK) {
            if rng.random::<f64>() < p_missing {
                let lo = block * PRBS_PER_BLOCK;
                let hi = (lo + PRBS_PER_BLOCK).min(nprb);
                ctf.slice_mut(ndarray::s![.., .., lo..hi]).fill(Complex64::new(0.0, 0.0));
                mask.slice_mut(ndarray::s![.., .., lo..hi]).fill(false);
            }
        }
        Ok((ctf, mask))
    }
}

pub(crate) fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generates every snapshot of the trajectory in order.
///
/// Holds all raw per-PRB tensors in memory (about 1.1 MB per snapshot);
/// long runs should stream through [`SnapshotGenerator`] instead.
pub fn generate_trajectory_dataset(
    scene: &SceneConfig,
    traj: &TrajectoryConfig,
    impairments: &Impairments,
) -> Result<Vec<UplinkSnapshot>> {
    let generator = SnapshotGenerator::new(scene, traj, impairments)?;
    (0..generator.len()).into_par_iter().map(|k| generator.snapshot(k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short_traj(laps: usize, jitter: f64) -> TrajectoryConfig {
        // 4.2 m square lap at 4.2 m/s and 0.1 s interval: 10 snapshots per lap
        TrajectoryConfig {
            waypoints: vec![[10.0, 0.0, 1.5], [11.05, 0.0, 1.5], [11.05, 1.05, 1.5], [10.0, 1.05, 1.5]],
            speed: 4.2,
            snapshot_interval: 0.1,
            num_laps: laps,
            lap_jitter_std: jitter,
        }
    }

    fn scene() -> SceneConfig {
        SceneConfig { num_prb: 12, bs_position: [-20.0, 0.0, 0.0], ..SceneConfig::default() }
    }

    #[test]
    fn lap_of_default_route_has_900_snapshots() {
        let t = Trajectory::new(&TrajectoryConfig::default()).unwrap();
        assert!((t.perimeter() - 75.6).abs() < 1e-9);
        assert_eq!(t.snapshots_per_lap(), Some(900));
        assert_eq!(t.num_snapshots(), 4500);
    }

    #[test]
    fn positions_advance_by_speed_times_interval() {
        let t = Trajectory::new(&TrajectoryConfig::default()).unwrap();
        let p0 = t.position(t.lap_and_arc(0).1, 0.0);
        let p1 = t.position(t.lap_and_arc(1).1, 0.0);
        assert!((distance(p0, p1) - 0.084).abs() < 1e-12);
    }

    #[test]
    fn zero_jitter_repeats_laps_exactly() {
        let g = SnapshotGenerator::new(&scene(), &short_traj(2, 0.0), &Impairments::none()).unwrap();
        assert_eq!(g.len(), 20);
        for k in 0..10 {
            assert_eq!(g.ue_position(k), g.ue_position(k + 10));
        }
    }

    #[test]
    fn jitter_moves_later_laps() {
        let g = SnapshotGenerator::new(&scene(), &short_traj(2, 0.05), &Impairments::none()).unwrap();
        assert_ne!(g.ue_position(3), g.ue_position(13));
    }

    #[test]
    fn seeded_generation_is_bit_reproducible() {
        let a = generate_trajectory_dataset(&scene(), &short_traj(1, 0.05), &Impairments::default()).unwrap();
        let b = generate_trajectory_dataset(&scene(), &short_traj(1, 0.05), &Impairments::default()).unwrap();
        assert_eq!(a, b);
        let mut other = scene();
        other.rng_seed = 1;
        let c = generate_trajectory_dataset(&other, &short_traj(1, 0.05), &Impairments::default()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn snapshots_are_evenly_spaced() {
        let snaps = generate_trajectory_dataset(&scene(), &short_traj(1, 0.0), &Impairments::none()).unwrap();
        for (k, s) in snaps.iter().enumerate() {
            assert_eq!(s.timestamp, k as f64 * 0.1);
            assert_eq!(s.ctf.dim(), (4, 64, 12));
        }
    }

    #[test]
    fn missing_blocks_are_zero_and_masked() {
        let imp = Impairments { missing_block_fraction: 0.5, ..Impairments::none() };
        let snaps = generate_trajectory_dataset(&scene(), &short_traj(1, 0.0), &imp).unwrap();
        let mut missing = 0;
        for s in &snaps {
            for (v, m) in s.ctf.iter().zip(s.mask.iter()) {
                if !m {
                    missing += 1;
                    assert_eq!(*v, Complex64::new(0.0, 0.0));
                }
            }
        }
        assert!(missing > 0);
    }

    #[test]
    fn stalled_report_repeats_previous_values() {
        let imp = Impairments { stall_fraction: 0.5, ..Impairments::none() };
        let g = SnapshotGenerator::new(&scene(), &short_traj(2, 0.0), &imp).unwrap();
        let k = (1..g.len()).find(|&k| g.is_stalled(k)).expect("some stall");
        let cur = g.snapshot(k).unwrap();
        let prev = g.snapshot(k - 1).unwrap();
        assert_eq!(cur.ctf, prev.ctf);
        assert_ne!(cur.ue_position, prev.ue_position);
    }

    #[test]
    fn zero_length_trajectory_is_rejected() {
        let mut t = short_traj(1, 0.0);
        t.waypoints = vec![[1.0, 1.0, 1.5], [1.0, 1.0, 1.5]];
        assert!(Trajectory::new(&t).is_err());
        let mut t = short_traj(1, 0.0);
        t.num_laps = 0;
        assert!(Trajectory::new(&t).is_err());
    }
}
