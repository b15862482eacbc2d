use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use super::ops::{
    layer_norm, layer_norm_backward, positional_encoding, relu, relu_backward, softmax_rows,
    LayerNormCache,
};
use super::ModelConfig;
use crate::{Error, Result};

// Tensor slots of one encoder layer, in declaration order.
const LN1_GAIN: usize = 0;
const LN1_BIAS: usize = 1;
const WQ: usize = 2;
const WK: usize = 3;
const WV: usize = 4;
const WO: usize = 5;
const BO: usize = 6;
const LN2_GAIN: usize = 7;
const LN2_BIAS: usize = 8;
const W1: usize = 9;
const B1: usize = 10;
const W2: usize = 11;
const B2: usize = 12;
const LAYER_TENSORS: usize = 13;

const LAYER_NAMES: [&str; LAYER_TENSORS] = [
    "ln1.gain", "ln1.bias", "attn.wq", "attn.wk", "attn.wv", "attn.wo", "attn.bo", "ln2.gain",
    "ln2.bias", "ffn.w1", "ffn.b1", "ffn.w2", "ffn.b2",
];

/// Flat list of parameter tensors in declaration order.
///
/// Vectors are stored as `1 x n` matrices. Query/key/value projections
/// hold every head side by side: head `h` owns columns
/// `h*head_dim..(h+1)*head_dim`. The same type carries gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub tensors: Vec<Array2<f64>>,
}

pub type ParameterGradients = Params;

impl Params {
    pub fn zeros_like(other: &Params) -> Params {
        Params { tensors: other.tensors.iter().map(|t| Array2::zeros(t.raw_dim())).collect() }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn add_assign(&mut self, other: &Params) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in &mut self.tensors {
            t.mapv_inplace(|v| v * s);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Shapes and names of every tensor for a configuration.
pub fn parameter_layout(cfg: &ModelConfig) -> Vec<(String, (usize, usize))> {
    let d = cfg.d_model;
    let hd = cfg.num_heads * cfg.head_dim;
    let mut out = Vec::new();
    for l in 0..cfg.num_layers {
        let shapes = [
            (1, d),
            (1, d),
            (d, hd),
            (d, hd),
            (d, hd),
            (hd, d),
            (1, d),
            (1, d),
            (1, d),
            (d, cfg.ffn_inner),
            (1, cfg.ffn_inner),
            (cfg.ffn_inner, d),
            (1, d),
        ];
        for (name, shape) in LAYER_NAMES.iter().zip(shapes) {
            out.push((format!("layer{l}.{name}"), shape));
        }
    }
    let mut fan_in = cfg.seq_len * d;
    for (i, &width) in cfg.head_dims().iter().enumerate() {
        out.push((format!("head{i}.w"), (fan_in, width)));
        out.push((format!("head{i}.b"), (1, width)));
        fan_in = width;
    }
    out
}

/// The encoder-only model: parameters plus the fixed input/output scalings
/// fitted on the training set.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    pub config: ModelConfig,
    pub params: Params,
    /// Multiplies raw `|G_t|` amplitudes before the forward pass.
    pub input_scale: f64,
    /// Multiplies the forward output to give energies in target units.
    pub target_scale: f64,
}

#[derive(Debug, Clone)]
struct LayerCache {
    // sublayer inputs and outputs needed by the backward pass
    attn_in: Array2<f64>,
    ln1: LayerNormCache,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    concat: Array2<f64>,
    ffn_in: Array2<f64>,
    ln2: LayerNormCache,
    z1: Array2<f64>,
    r: Array2<f64>,
}

/// Activations retained by [`EncoderModel::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    head_inputs: Vec<Array2<f64>>,
    head_pre: Vec<Array2<f64>>,
    seq_len: usize,
    d_model: usize,
}

impl EncoderModel {
    /// Glorot-uniform weights, zero biases, unit layer-norm gains.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = parameter_layout(config)
            .into_iter()
            .map(|(name, (rows, cols))| {
                if name.ends_with(".gain") {
                    Array2::ones((rows, cols))
                } else if rows == 1 {
                    Array2::zeros((rows, cols))
                } else {
                    let limit = (6.0 / (rows + cols) as f64).sqrt();
                    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..limit))
                }
            })
            .collect();
        Ok(EncoderModel { config: config.clone(), params: Params { tensors }, input_scale: 1.0, target_scale: 1.0 })
    }

    /// All weights and biases zero, layer-norm gains one.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let tensors = parameter_layout(config)
            .into_iter()
            .map(|(name, shape)| if name.ends_with(".gain") { Array2::ones(shape) } else { Array2::zeros(shape) })
            .collect();
        Ok(EncoderModel { config: config.clone(), params: Params { tensors }, input_scale: 1.0, target_scale: 1.0 })
    }

    pub fn tensor_names(&self) -> Vec<String> {
        parameter_layout(&self.config).into_iter().map(|(n, _)| n).collect()
    }

    fn layer(&self, l: usize, slot: usize) -> &Array2<f64> {
        &self.params.tensors[l * LAYER_TENSORS + slot]
    }

    fn head_index(&self) -> usize {
        self.config.num_layers * LAYER_TENSORS
    }

    /// Raw-unit prediction: scales the input, runs the encoder, and maps
    /// the output back to target units.
    pub fn predict(&self, input: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        let x = input.mapv(|v| v * self.input_scale);
        let (out, _) = self.forward(x.view())?;
        Ok(out * self.target_scale)
    }

    /// Forward pass in model units.
    pub fn forward(&self, input: ArrayView2<'_, f64>) -> Result<(Array1<f64>, ForwardCache)> {
        let cfg = &self.config;
        if input.dim() != (cfg.seq_len, cfg.d_model) {
            return Err(Error::shape(
                "encoder input",
                format!("{}x{}", cfg.seq_len, cfg.d_model),
                format!("{}x{}", input.nrows(), input.ncols()),
            ));
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("encoder input".into()));
        }
        let mut x = &input + &positional_encoding(cfg.seq_len, cfg.d_model);
        let mut layers = Vec::with_capacity(cfg.num_layers);
        for l in 0..cfg.num_layers {
            let (next, cache) = self.layer_forward(l, x);
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("encoder layer {l}")));
            }
            layers.push(cache);
            x = next;
        }

        let mut h = x.into_shape_with_order((1, cfg.seq_len * cfg.d_model)).expect("contiguous");
        let head = self.head_index();
        let n_head = cfg.head_dims().len();
        let mut head_inputs = Vec::with_capacity(n_head);
        let mut head_pre = Vec::with_capacity(n_head);
        for i in 0..n_head {
            let w = &self.params.tensors[head + 2 * i];
            let b = &self.params.tensors[head + 2 * i + 1];
            let z = h.dot(w) + b;
            head_inputs.push(h);
            h = if i + 1 < n_head { relu(&z) } else { z.clone() };
            head_pre.push(z);
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("output head".into()));
        }
        let out = h.index_axis_move(Axis(0), 0);
        Ok((out, ForwardCache { layers, head_inputs, head_pre, seq_len: cfg.seq_len, d_model: cfg.d_model }))
    }

    fn layer_forward(&self, l: usize, x: Array2<f64>) -> (Array2<f64>, LayerCache) {
        let p = |slot| self.layer(l, slot);
        if self.config.norm_first {
            let (a, ln1) = layer_norm(&x, p(LN1_GAIN), p(LN1_BIAS));
            let (attn, q, k, v, probs, concat) = self.attention(l, &a);
            let x1 = &x + &attn;
            let (b, ln2) = layer_norm(&x1, p(LN2_GAIN), p(LN2_BIAS));
            let z1 = b.dot(p(W1)) + p(B1);
            let r = relu(&z1);
            let x2 = &x1 + &(r.dot(p(W2)) + p(B2));
            (x2, LayerCache { attn_in: a, ln1, q, k, v, probs, concat, ffn_in: b, ln2, z1, r })
        } else {
            let (attn, q, k, v, probs, concat) = self.attention(l, &x);
            let (x1, ln1) = layer_norm(&(&x + &attn), p(LN1_GAIN), p(LN1_BIAS));
            let z1 = x1.dot(p(W1)) + p(B1);
            let r = relu(&z1);
            let (x2, ln2) = layer_norm(&(&x1 + &(r.dot(p(W2)) + p(B2))), p(LN2_GAIN), p(LN2_BIAS));
            (x2, LayerCache { attn_in: x, ln1, q, k, v, probs, concat, ffn_in: x1, ln2, z1, r })
        }
    }

    #[allow(clippy::type_complexity)]
    fn attention(
        &self,
        l: usize,
        a: &Array2<f64>,
    ) -> (Array2<f64>, Array2<f64>, Array2<f64>, Array2<f64>, Vec<Array2<f64>>, Array2<f64>) {
        let dk = self.config.head_dim;
        let q = a.dot(self.layer(l, WQ));
        let k = a.dot(self.layer(l, WK));
        let v = a.dot(self.layer(l, WV));
        let scale = 1.0 / (dk as f64).sqrt();
        let mut concat = Array2::zeros(q.raw_dim());
        let mut probs = Vec::with_capacity(self.config.num_heads);
        for h in 0..self.config.num_heads {
            let cols = s![.., h * dk..(h + 1) * dk];
            let scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            let pr = softmax_rows(&scores);
            concat.slice_mut(cols).assign(&pr.dot(&v.slice(cols)));
            probs.push(pr);
        }
        let out = concat.dot(self.layer(l, WO)) + self.layer(l, BO);
        (out, q, k, v, probs, concat)
    }

    /// Exact gradients of every parameter given `d loss / d output`.
    pub fn backward(&self, cache: &ForwardCache, dout: &[f64]) -> Result<ParameterGradients> {
        let cfg = &self.config;
        if dout.len() != cfg.output_dim
            || cache.layers.len() != cfg.num_layers
            || cache.seq_len != cfg.seq_len
            || cache.d_model != cfg.d_model
            || cache.head_inputs.len() != cfg.head_dims().len()
        {
            return Err(Error::shape(
                "backward cache",
                format!("{} layers, output {}", cfg.num_layers, cfg.output_dim),
                format!("{} layers, output {}", cache.layers.len(), dout.len()),
            ));
        }
        let mut grads = Params::zeros_like(&self.params);
        let head = self.head_index();
        let n_head = cfg.head_dims().len();

        let mut g = Array2::from_shape_vec((1, dout.len()), dout.to_vec()).expect("row");
        for i in (0..n_head).rev() {
            if i + 1 < n_head {
                relu_backward(&mut g, &cache.head_pre[i]);
            }
            let w = &self.params.tensors[head + 2 * i];
            grads.tensors[head + 2 * i] += &cache.head_inputs[i].t().dot(&g);
            grads.tensors[head + 2 * i + 1] += &g;
            g = g.dot(&w.t());
        }
        let mut dx = g.into_shape_with_order((cfg.seq_len, cfg.d_model)).expect("contiguous");
        for l in (0..cfg.num_layers).rev() {
            dx = self.layer_backward(l, &cache.layers[l], dx, &mut grads);
        }
        Ok(grads)
    }

    fn layer_backward(&self, l: usize, c: &LayerCache, dx2: Array2<f64>, grads: &mut Params) -> Array2<f64> {
        let base = l * LAYER_TENSORS;
        let p = |slot| self.layer(l, slot);
        if self.config.norm_first {
            let db = self.ffn_backward(l, c, &dx2, grads);
            let (dg, rest) = grads.tensors[base + LN2_GAIN..].split_at_mut(1);
            let dx1 = &dx2 + &layer_norm_backward(&db, &c.ln2, p(LN2_GAIN), &mut dg[0], &mut rest[0]);
            let da = self.attention_backward(l, c, &dx1, grads);
            let (dg, rest) = grads.tensors[base + LN1_GAIN..].split_at_mut(1);
            &dx1 + &layer_norm_backward(&da, &c.ln1, p(LN1_GAIN), &mut dg[0], &mut rest[0])
        } else {
            let (dg, rest) = grads.tensors[base + LN2_GAIN..].split_at_mut(1);
            let du2 = layer_norm_backward(&dx2, &c.ln2, p(LN2_GAIN), &mut dg[0], &mut rest[0]);
            let dx1 = &du2 + &self.ffn_backward(l, c, &du2, grads);
            let (dg, rest) = grads.tensors[base + LN1_GAIN..].split_at_mut(1);
            let du1 = layer_norm_backward(&dx1, &c.ln1, p(LN1_GAIN), &mut dg[0], &mut rest[0]);
            &du1 + &self.attention_backward(l, c, &du1, grads)
        }
    }

    // Returns the gradient w.r.t. the FFN input.
    fn ffn_backward(&self, l: usize, c: &LayerCache, df: &Array2<f64>, grads: &mut Params) -> Array2<f64> {
        let base = l * LAYER_TENSORS;
        grads.tensors[base + W2] += &c.r.t().dot(df);
        grads.tensors[base + B2] += &df.sum_axis(Axis(0)).insert_axis(Axis(0));
        let mut dz1 = df.dot(&self.layer(l, W2).t());
        relu_backward(&mut dz1, &c.z1);
        grads.tensors[base + W1] += &c.ffn_in.t().dot(&dz1);
        grads.tensors[base + B1] += &dz1.sum_axis(Axis(0)).insert_axis(Axis(0));
        dz1.dot(&self.layer(l, W1).t())
    }

    // Returns the gradient w.r.t. the attention input.
    fn attention_backward(&self, l: usize, c: &LayerCache, dout: &Array2<f64>, grads: &mut Params) -> Array2<f64> {
        let base = l * LAYER_TENSORS;
        let dk = self.config.head_dim;
        let scale = 1.0 / (dk as f64).sqrt();
        grads.tensors[base + WO] += &c.concat.t().dot(dout);
        grads.tensors[base + BO] += &dout.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dconcat = dout.dot(&self.layer(l, WO).t());

        let mut dq = Array2::zeros(c.q.raw_dim());
        let mut dkm = Array2::zeros(c.k.raw_dim());
        let mut dv = Array2::zeros(c.v.raw_dim());
        for (h, pr) in c.probs.iter().enumerate() {
            let cols = s![.., h * dk..(h + 1) * dk];
            let doh = dconcat.slice(cols);
            let dp = doh.dot(&c.v.slice(cols).t());
            dv.slice_mut(cols).assign(&pr.t().dot(&doh));
            // softmax Jacobian, row by row
            let row_dot = (&dp * pr).sum_axis(Axis(1)).insert_axis(Axis(1));
            let ds = (pr * &(&dp - &row_dot)) * scale;
            dq.slice_mut(cols).assign(&ds.dot(&c.k.slice(cols)));
            dkm.slice_mut(cols).assign(&ds.t().dot(&c.q.slice(cols)));
        }
        let a = &c.attn_in;
        grads.tensors[base + WQ] += &a.t().dot(&dq);
        grads.tensors[base + WK] += &a.t().dot(&dkm);
        grads.tensors[base + WV] += &a.t().dot(&dv);
        dq.dot(&self.layer(l, WQ).t()) + dkm.dot(&self.layer(l, WK).t()) + dv.dot(&self.layer(l, WV).t())
    }
}

/// `(1/N) sum_i ||target_i - pred_i||^2` and its gradient w.r.t. each
/// prediction, `-2 (target_i - pred_i) / N`.
pub fn mse_loss(preds: &[Array1<f64>], targets: &[Array1<f64>]) -> Result<(f64, Vec<Array1<f64>>)> {
    if preds.len() != targets.len() || preds.is_empty() {
        return Err(Error::shape("mse batch", targets.len(), preds.len()));
    }
    let n = preds.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(preds.len());
    for (p, t) in preds.iter().zip(targets) {
        if p.len() != t.len() {
            return Err(Error::shape("mse sample", t.len(), p.len()));
        }
        let diff = t - p;
        loss += diff.mapv(|d| d * d).sum();
        grads.push(diff * (-2.0 / n));
    }
    Ok((loss / n, grads))
}
