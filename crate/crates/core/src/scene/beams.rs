use std::f64::consts::PI;

use num_complex::Complex64;

use super::{ArrayGeometry, SceneConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarization {
    Vertical,
    Horizontal,
}

/// Weight normalization of the DFT beams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BeamScaling {
    /// Unit-modulus weights; a beam steered at its own grid point sums
    /// coherently to the element count.
    #[default]
    Unit,
    /// Weights scaled by `1/sqrt(N)` so the per-polarization beam set is unitary.
    Orthonormal,
}

/// Grid of beams on a dual-polarized uniform planar array.
///
/// Elements sit on a `rows x cols` lattice with half-wavelength spacing at
/// the carrier, columns along the horizontal axis and rows along the
/// vertical. Beam `i` in `0..rows*cols` uses the vertical polarization, the
/// next `rows*cols` beams the horizontal one; both share the same spatial
/// DFT grid. Within a polarization, beam `j` steers to row index
/// `j / cols` and column index `j % cols`.
///
/// Angles are local to the array: azimuth from boresight in the horizontal
/// plane, elevation from the horizontal (negative looks down).
#[derive(Debug, Clone)]
pub struct BeamResponseTable {
    rows: usize,
    cols: usize,
    carrier: f64,
    scale: f64,
    // exp(-j 2 pi k r / R) for k, r in 0..R, row-major by k
    row_twiddles: Vec<Complex64>,
    col_twiddles: Vec<Complex64>,
}

impl BeamResponseTable {
    pub fn new(cfg: &SceneConfig) -> Result<Self> {
        let ArrayGeometry { rows, cols } = cfg.array_geometry;
        if rows * cols * 2 != crate::NUM_BEAMS {
            return Err(Error::InvalidConfig(format!(
                "array {rows}x{cols} does not give {} elements per polarization",
                crate::NUM_BEAMS / 2
            )));
        }
        Self::with_geometry(rows, cols, cfg.carrier_frequency, BeamScaling::Unit)
    }

    /// Unrestricted geometry, including the degenerate 1x1 array.
    pub fn with_geometry(
        rows: usize,
        cols: usize,
        carrier: f64,
        scaling: BeamScaling,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidConfig("array needs at least one element".into()));
        }
        if !(carrier > 0.0) {
            return Err(Error::InvalidConfig("carrier frequency must be positive".into()));
        }
        let scale = match scaling {
            BeamScaling::Unit => 1.0,
            BeamScaling::Orthonormal => 1.0 / ((rows * cols) as f64).sqrt(),
        };
        Ok(BeamResponseTable {
            rows,
            cols,
            carrier,
            scale,
            row_twiddles: twiddles(rows),
            col_twiddles: twiddles(cols),
        })
    }

    pub fn elements_per_polarization(&self) -> usize {
        self.rows * self.cols
    }

    pub fn num_beams(&self) -> usize {
        2 * self.rows * self.cols
    }

    pub fn polarization(&self, beam: usize) -> Polarization {
        if beam < self.elements_per_polarization() {
            Polarization::Vertical
        } else {
            Polarization::Horizontal
        }
    }

    /// Direction cosines `(u, v)` the beam points at, with
    /// `u = cos(el) sin(az)` and `v = sin(el)`, each in `[-1, 1)`.
    pub fn grid_point(&self, beam: usize) -> (f64, f64) {
        let j = beam % self.elements_per_polarization();
        let (kr, kc) = (j / self.cols, j % self.cols);
        (dft_cosine(kc, self.cols), dft_cosine(kr, self.rows))
    }

    /// Azimuth and elevation of the beam's grid point.
    pub fn grid_angles(&self, beam: usize) -> (f64, f64) {
        let (u, v) = self.grid_point(beam);
        let el = v.asin();
        let cos_el = el.cos();
        let az = if cos_el > 0.0 { (u / cos_el).clamp(-1.0, 1.0).asin() } else { 0.0 };
        (az, el)
    }

    /// Combining weights of one beam over the elements, row-major `(r, c)`.
    pub fn steering_weights(&self, beam: usize) -> Vec<Complex64> {
        let j = beam % self.elements_per_polarization();
        let (kr, kc) = (j / self.cols, j % self.cols);
        let mut w = Vec::with_capacity(self.elements_per_polarization());
        for r in 0..self.rows {
            for c in 0..self.cols {
                let phase = 2.0 * PI * ((kr * r) as f64 / self.rows as f64
                    + (kc * c) as f64 / self.cols as f64);
                w.push(Complex64::from_polar(self.scale, phase));
            }
        }
        w
    }

    /// Element-domain response of one polarization to a plane wave from
    /// `(azimuth, elevation)` at frequency `freq`, row-major `(r, c)`.
    pub fn element_response(&self, azimuth: f64, elevation: f64, freq: f64) -> Vec<Complex64> {
        let (psi_r, psi_c) = self.phase_steps(azimuth, elevation, freq);
        let mut a = Vec::with_capacity(self.elements_per_polarization());
        for r in 0..self.rows {
            for c in 0..self.cols {
                a.push(Complex64::from_polar(1.0, r as f64 * psi_r + c as f64 * psi_c));
            }
        }
        a
    }

    /// Response of a single beam.
    pub fn response(&self, beam: usize, azimuth: f64, elevation: f64, freq: f64) -> Complex64 {
        let w = self.steering_weights(beam);
        let a = self.element_response(azimuth, elevation, freq);
        w.iter().zip(&a).map(|(w, a)| w.conj() * a).sum()
    }

    /// Responses of all beams into `out` (length `num_beams`).
    ///
    /// The DFT weights factor over rows and columns, so this costs
    /// `R^2 + C^2 + R*C` complex products instead of `(R*C)^2`.
    pub fn responses_into(&self, azimuth: f64, elevation: f64, freq: f64, out: &mut [Complex64]) {
        let n = self.elements_per_polarization();
        debug_assert_eq!(out.len(), 2 * n);
        let (psi_r, psi_c) = self.phase_steps(azimuth, elevation, freq);
        let row_factor = factor(&self.row_twiddles, self.rows, psi_r);
        let col_factor = factor(&self.col_twiddles, self.cols, psi_c);
        for kr in 0..self.rows {
            for kc in 0..self.cols {
                let b = row_factor[kr] * col_factor[kc] * self.scale;
                out[kr * self.cols + kc] = b;
                out[n + kr * self.cols + kc] = b;
            }
        }
    }

    pub fn responses(&self, azimuth: f64, elevation: f64, freq: f64) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.num_beams()];
        self.responses_into(azimuth, elevation, freq, &mut out);
        out
    }

    // Inter-element phase increments along rows and columns; spacing is half
    // a carrier wavelength, so the increment at f is pi * f/fc * cosine.
    fn phase_steps(&self, azimuth: f64, elevation: f64, freq: f64) -> (f64, f64) {
        let k = PI * freq / self.carrier;
        let u = elevation.cos() * azimuth.sin();
        let v = elevation.sin();
        (k * v, k * u)
    }
}

fn dft_cosine(k: usize, n: usize) -> f64 {
    let signed = if 2 * k >= n && n > 1 { k as f64 - n as f64 } else { k as f64 };
    2.0 * signed / n as f64
}

fn twiddles(n: usize) -> Vec<Complex64> {
    let mut t = Vec::with_capacity(n * n);
    for k in 0..n {
        for idx in 0..n {
            t.push(Complex64::from_polar(1.0, -2.0 * PI * (k * idx) as f64 / n as f64));
        }
    }
    t
}

fn factor(twiddles: &[Complex64], n: usize, psi: f64) -> Vec<Complex64> {
    let steps: Vec<Complex64> = (0..n).map(|i| Complex64::from_polar(1.0, i as f64 * psi)).collect();
    (0..n)
        .map(|k| {
            twiddles[k * n..(k + 1) * n]
                .iter()
                .zip(&steps)
                .map(|(t, s)| t * s)
                .sum()
        })
        .collect()
}
