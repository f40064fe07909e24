//! Multi-encoder feature-pyramid network on a small CPU tensor engine.
//!
//! Each modality has its own residual encoder; per scale the encoder features are
//! concatenated along channels, projected by 1x1 lateral convolutions and fused top-down.
//! The pyramid levels are resampled to stride 4, summed, passed through a shared head
//! with dropout and bilinearly upsampled to a 4-channel map: grip, then water, ice and
//! snow thickness in millimeters. Outputs are linear.

mod config;
mod io;
mod net;
mod real;
pub mod tensor;

pub use config::{count_params, encoder_param_count, modalities_label, parse_modalities, Modality, ModelConfig};
pub use io::{batch_inputs, read_checkpoint, write_checkpoint, GripMap, CHECKPOINT_MAGIC};
pub use net::{backward, forward, forward_cached, init_model, Block, Conv, Encoder, ForwardCache, Mode, ModelInputs, ModelParams, Stage};
pub use real::{gemm, Real};
pub use tensor::{ConvShape, Tensor};
