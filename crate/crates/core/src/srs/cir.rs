use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use rustfft::FftPlanner;

use super::PrsgCtf;

/// Impulse-response amplitudes `|G_t|`, `[beam, delay]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CirBeamMatrix {
    pub amplitudes: Array2<f64>,
    pub timestamp: f64,
    pub valid: bool,
}

/// `w[f] = sin^2(pi f / F)` for `f = 0..F`.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len).map(|f| (PI * f as f64 / len as f64).sin().powi(2)).collect()
}

/// Windows every row across frequency and returns the magnitude of its
/// inverse DFT, normalized by `1/F`.
pub fn window_and_idft(rows: ArrayView2<'_, Complex64>) -> Array2<f64> {
    let (nrows, len) = rows.dim();
    let window = hann_window(len);
    let ifft = FftPlanner::new().plan_fft_inverse(len);
    let mut out = Array2::zeros((nrows, len));
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for (r, row) in rows.outer_iter().enumerate() {
        for ((b, &h), &w) in buf.iter_mut().zip(row.iter()).zip(&window) {
            *b = h * w;
        }
        ifft.process(&mut buf);
        for (o, b) in out.row_mut(r).iter_mut().zip(&buf) {
            *o = b.norm() / len as f64;
        }
    }
    out
}

/// Model input features of one validated report: layer RMS, then
/// window and IDFT per beam.
pub fn cir_features(ctf: &PrsgCtf) -> CirBeamMatrix {
    let (agg, _) = ctf.aggregate_layers();
    let rows = agg.mapv(|v| Complex64::new(v, 0.0));
    CirBeamMatrix { amplitudes: window_and_idft(rows.view()), timestamp: ctf.timestamp, valid: true }
}
