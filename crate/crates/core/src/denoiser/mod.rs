//! Toy convolutional noise predictor for dual normal maps, with hand-written backprop.

mod checkpoint;
mod dataset;
mod model;
mod train;

pub use checkpoint::{checkpoint_bytes, load_checkpoint, parse_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use dataset::{dual_sample, render_subject, split_dual_sample, synth_dataset, SynthExample, SynthRanges, SynthSubject, TrainExample};
pub use model::{Architecture, DenoiserParams, ForwardCache, INPUT_CHANNELS, OUTPUT_CHANNELS};
pub use train::{noise_prediction_loss, train, train_step, StepOutput, TrainConfig};
