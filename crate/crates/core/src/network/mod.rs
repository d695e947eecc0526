//! The push-proposal CNN: architecture, parameters, forward/backward passes,
//! Adam training and the model file.

mod adam;
mod arch;
mod compute;
mod model_file;
mod params;
mod train;

pub use adam::{adam_step, AdamConfig};
pub use arch::{
    build_default_architecture, build_reduced_architecture, Architecture, LayerSpec, Shape,
};
pub use compute::{
    forward_inputs, forward_one, loss_and_gradients_inputs, nll, LOSS_CLAMP, OUTPUT_EPS,
};
pub use model_file::{
    decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION,
};
pub use params::{AdamState, LayerParams, NetworkParams, ParamSet};
pub use train::{train, EpochStats, TrainConfig, TrainLog};

use crate::dataset::LabeledSample;
use crate::encoder::PushImage;
use crate::error::Result;

/// Success probability for every push image in `batch`.
pub fn forward(params: &NetworkParams, batch: &[PushImage]) -> Result<Vec<f64>> {
    let inputs: Vec<&[f32]> = batch.iter().map(|im| im.pixels.as_slice()).collect();
    forward_inputs(params, &inputs)
}

/// Mean negative log-likelihood over `batch` and its parameter gradient.
pub fn loss_and_gradients(
    params: &NetworkParams,
    batch: &[LabeledSample],
) -> Result<(f64, ParamSet)> {
    let pairs: Vec<(&[f32], bool)> = batch
        .iter()
        .map(|s| (s.image.pixels.as_slice(), s.is_positive()))
        .collect();
    loss_and_gradients_inputs(params, &pairs)
}
