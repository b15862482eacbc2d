//! Building blocks shared by the forward and backward passes.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};

/// Layer-norm variance floor.
pub const LAYER_NORM_EPS: f64 = 1e-9;

/// Sinusoidal positional encoding, `[seq_len, d_model]`:
/// `PE[pos, 2i] = sin(pos / 10000^(2i/d))`, `PE[pos, 2i+1] = cos(...)`.
pub fn positional_encoding(seq_len: usize, d_model: usize) -> Array2<f64> {
    Array2::from_shape_fn((seq_len, d_model), |(pos, j)| {
        let i = (j / 2) as f64;
        let angle = pos as f64 / 10000f64.powf(2.0 * i / d_model as f64);
        if j % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|x| (x - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|x| x / sum);
    }
    out
}

/// `softmax(Q K^T / sqrt(d_k)) V`, also returning the attention weights.
pub fn scaled_dot_attention(
    q: ArrayView2<'_, f64>,
    k: ArrayView2<'_, f64>,
    v: ArrayView2<'_, f64>,
) -> (Array2<f64>, Array2<f64>) {
    let scale = 1.0 / (q.ncols() as f64).sqrt();
    let scores = q.dot(&k.t()) * scale;
    let weights = softmax_rows(&scores);
    (weights.dot(&v), weights)
}

/// Normalized tokens and inverse standard deviations of a layer norm.
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    pub xhat: Array2<f64>,
    pub inv_std: Array1<f64>,
}

/// Per-token layer norm: returns `gain * xhat + bias` and the cache.
pub fn layer_norm(x: &Array2<f64>, gain: &Array2<f64>, bias: &Array2<f64>) -> (Array2<f64>, LayerNormCache) {
    let d = x.ncols() as f64;
    let mean = x.sum_axis(Axis(1)) / d;
    let mut xhat = x - &mean.view().insert_axis(Axis(1));
    let var = xhat.mapv(|v| v * v).sum_axis(Axis(1)) / d;
    let inv_std = var.mapv(|v| 1.0 / (v + LAYER_NORM_EPS).sqrt());
    xhat *= &inv_std.view().insert_axis(Axis(1));
    let y = &xhat * gain + bias;
    (y, LayerNormCache { xhat, inv_std })
}

/// Backward of [`layer_norm`]; accumulates into `dgain`/`dbias` and returns
/// the input gradient.
pub fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &LayerNormCache,
    gain: &Array2<f64>,
    dgain: &mut Array2<f64>,
    dbias: &mut Array2<f64>,
) -> Array2<f64> {
    let d = dy.ncols() as f64;
    *dgain += &(dy * &cache.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
    *dbias += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    let dxhat = dy * gain;
    let sum_dxhat = dxhat.sum_axis(Axis(1));
    let sum_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(1));
    let mut dx = Array2::zeros(dy.raw_dim());
    Zip::from(dx.rows_mut())
        .and(dxhat.rows())
        .and(cache.xhat.rows())
        .and(&cache.inv_std)
        .and(&sum_dxhat)
        .and(&sum_dxhat_xhat)
        .for_each(|mut out, g, xh, &inv, &s1, &s2| {
            Zip::from(&mut out).and(&g).and(&xh).for_each(|o, &g, &xh| {
                *o = inv / d * (d * g - s1 - xh * s2);
            });
        });
    dx
}

pub fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

/// Zeroes `grad` where the pre-activation was not positive.
pub fn relu_backward(grad: &mut Array2<f64>, pre: &Array2<f64>) {
    Zip::from(grad).and(pre).for_each(|g, &p| {
        if p <= 0.0 {
            *g = 0.0;
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn encoding_at_origin_alternates_zero_one() {
        let pe = positional_encoding(4, 46);
        for j in 0..46 {
            assert_eq!(pe[[0, j]], if j % 2 == 0 { 0.0 } else { 1.0 });
        }
    }

    #[test]
    fn encoding_at_position_one() {
        let pe = positional_encoding(2, 46);
        assert!((pe[[1, 0]] - 0.841471).abs() < 1e-6);
        assert!((pe[[1, 1]] - 0.540302).abs() < 1e-6);
        assert!((pe[[1, 0]] - 1f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn encoding_is_bounded() {
        assert!(positional_encoding(64, 46).iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn zero_queries_average_values() {
        let q = Array2::zeros((2, 1));
        let k = Array2::zeros((2, 1));
        let v = ndarray::arr2(&[[1.0], [3.0]]);
        let (out, w) = scaled_dot_attention(q.view(), k.view(), v.view());
        assert_eq!(out, ndarray::arr2(&[[2.0], [2.0]]));
        assert!(w.iter().all(|&x| x == 0.5));
    }

    #[test]
    fn log_three_logit_gives_quarter_three_quarters() {
        // d_k = 1 so the scale is 1
        let q = ndarray::arr2(&[[1.0]]);
        let k = ndarray::arr2(&[[0.0], [3f64.ln()]]);
        let v = ndarray::arr2(&[[0.0], [1.0]]);
        let (out, w) = scaled_dot_attention(q.view(), k.view(), v.view());
        assert!((w[[0, 0]] - 0.25).abs() < 1e-12);
        assert!((w[[0, 1]] - 0.75).abs() < 1e-12);
        assert!((out[[0, 0]] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn softmax_survives_extreme_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let logits = Array2::from_shape_fn((16, 16), |_| (rng.random::<f64>() - 0.5) * 2e4);
        for row in softmax_rows(&logits).rows() {
            assert!((row.sum() - 1.0).abs() <= 1e-12);
            assert!(row.iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn layer_norm_standardizes_tokens() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Array2::from_shape_fn((8, 46), |_| rng.random::<f64>() * 5.0 - 1.0);
        let ones = Array2::ones((1, 46));
        let zeros = Array2::zeros((1, 46));
        let (y, _) = layer_norm(&x, &ones, &zeros);
        for row in y.rows() {
            let mean = row.mean().unwrap();
            let var = row.mapv(|v| (v - mean).powi(2)).mean().unwrap();
            assert!(mean.abs() <= 1e-9);
            assert!((var - 1.0).abs() <= 1e-6);
        }
    }
}
