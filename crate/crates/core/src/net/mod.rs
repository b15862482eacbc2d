//! Encoder-only attention model over beam tokens: forward and hand-derived
//! backward passes, Adam, the training loop and checkpoints.

mod adam;
mod checkpoint;
mod model;
mod ops;
mod train;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use adam::AdamState;
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use model::{mse_loss, parameter_layout, EncoderModel, ForwardCache, ParameterGradients, Params};
pub use ops::{
    layer_norm, layer_norm_backward, positional_encoding, relu, scaled_dot_attention, softmax_rows,
    LayerNormCache, LAYER_NORM_EPS,
};
pub use train::{train, EpochRecord, TrainingLog, TrainingPair};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_model: usize,
    /// Number of beam tokens.
    pub seq_len: usize,
    pub num_heads: usize,
    /// Per-head query/key/value width.
    pub head_dim: usize,
    pub num_layers: usize,
    pub ffn_inner: usize,
    pub head_hidden: Vec<usize>,
    pub output_dim: usize,
    /// Layer norm before each sublayer; `false` gives add-then-normalize.
    pub norm_first: bool,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Stop after this many epochs without held-out improvement.
    pub patience: Option<usize>,
    /// Evaluate the held-out loss every this many epochs.
    pub holdout_every: usize,
    /// Trailing fraction of the training pairs kept for held-out loss.
    pub holdout_fraction: f64,
    /// Cap on training pairs used per epoch (evenly strided); `None` uses all.
    pub max_train_pairs: Option<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 46,
            seq_len: 64,
            num_heads: 3,
            head_dim: 16,
            num_layers: 3,
            ffn_inner: 64,
            head_hidden: vec![64, 32],
            output_dim: 64,
            norm_first: true,
            batch_size: 64,
            epochs: 2500,
            learning_rate: 1e-3,
            seed: 0,
            patience: None,
            holdout_every: 1,
            holdout_fraction: 0.1,
            max_train_pairs: None,
        }
    }
}

impl ModelConfig {
    /// Widths of the head layers after the flatten, ending with the output.
    pub fn head_dims(&self) -> Vec<usize> {
        let mut dims = self.head_hidden.clone();
        dims.push(self.output_dim);
        dims
    }

    pub fn num_parameters(&self) -> usize {
        parameter_layout(self).iter().map(|(_, (r, c))| r * c).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_model", self.d_model),
            ("seq_len", self.seq_len),
            ("num_heads", self.num_heads),
            ("head_dim", self.head_dim),
            ("num_layers", self.num_layers),
            ("ffn_inner", self.ffn_inner),
            ("output_dim", self.output_dim),
            ("batch_size", self.batch_size),
            ("holdout_every", self.holdout_every),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.head_hidden.iter().any(|&w| w == 0) {
            return Err(Error::InvalidConfig("head widths must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::InvalidConfig("holdout_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}
