//! The two architectures: spatial CNN + bidirectional ConvLSTM + head CNN,
//! and spatial CNN + temporal 1-D convolution.

mod checkpoint;
mod config;
mod network;
mod params;

pub use checkpoint::{header_path, load_checkpoint, save_checkpoint, CheckpointHeader};
pub use config::{
    ClstmConfig, ConvLayerConfig, ModelConfig, ShapeChain, TemporalConvConfig, TemporalPooling,
    Variant,
};
pub use network::{
    backward, build, forward, forward_clstm, forward_conv1d, parameter_count, ForwardCache,
    Network,
};
pub use params::ModelParams;
