use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::Activation;
use crate::tensor::ConvSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Spatial CNN → stacked bidirectional ConvLSTM → head CNN → pool → dense.
    Clstm,
    /// Spatial CNN → global average pool → temporal 1-D conv → pool → dense.
    Conv1d,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "clstm" | "c-lstm" => Ok(Variant::Clstm),
            "conv1d" | "1d" => Ok(Variant::Conv1d),
            other => Err(Error::Config(format!("unknown variant {other:?}"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Clstm => "clstm",
            Variant::Conv1d => "conv1d",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemporalPooling {
    Mean,
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvLayerConfig {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    #[serde(default)]
    pub activation: Activation,
    pub dropout: f64,
}

impl ConvLayerConfig {
    /// Kernel 3, stride 2, padding 1.
    pub fn downsample(out_channels: usize, dropout: f64) -> Self {
        ConvLayerConfig {
            out_channels,
            kernel: 3,
            stride: 2,
            padding: 1,
            activation: Activation::Relu,
            dropout,
        }
    }

    pub fn linear(self) -> Self {
        ConvLayerConfig {
            activation: Activation::Identity,
            ..self
        }
    }

    pub fn spec(&self, in_channels: usize) -> ConvSpec {
        ConvSpec::cubic(in_channels, self.out_channels, self.kernel, self.stride, self.padding)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClstmConfig {
    pub hidden_channels: usize,
    pub num_bidirectional_layers: usize,
    pub kernel: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalConvConfig {
    pub out_channels: usize,
    /// Odd; applied with stride 1 and `(kernel - 1) / 2` padding.
    pub kernel: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub input_spatial: [usize; 3],
    pub input_channels: usize,
    pub crop_length: usize,
    pub spatial_cnn: Vec<ConvLayerConfig>,
    pub clstm: ClstmConfig,
    pub head_cnn: Vec<ConvLayerConfig>,
    pub temporal_conv: TemporalConvConfig,
    pub temporal_pooling: TemporalPooling,
    pub num_classes: usize,
}

/// Downsampling layers with dropout 0.2; the last one is linear because it
/// feeds temporal pooling and the dense classifier directly.
fn head_cnn(widths: &[usize]) -> Vec<ConvLayerConfig> {
    let mut layers: Vec<ConvLayerConfig> = widths
        .iter()
        .map(|&c| ConvLayerConfig::downsample(c, 0.2))
        .collect();
    if let Some(last) = layers.last_mut() {
        *last = last.linear();
    }
    layers
}

/// Per-timestep shapes implied by a [`ModelConfig`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShapeChain {
    /// `[C, D, H, W]` after each spatial CNN layer.
    pub spatial: Vec<[usize; 4]>,
    /// `[2h, D, H, W]` after each bidirectional layer (C-LSTM variant only).
    pub clstm: Vec<[usize; 4]>,
    /// `[C, D, H, W]` after each head CNN layer (C-LSTM variant only).
    pub head: Vec<[usize; 4]>,
    /// Length of the per-timestep feature vector fed to temporal pooling.
    pub features: usize,
}

impl ModelConfig {
    /// Full-resolution profile: 45×54×45 grid, four stride-2 spatial layers.
    pub fn full_scale(variant: Variant) -> Self {
        ModelConfig {
            variant,
            input_spatial: [45, 54, 45],
            input_channels: 1,
            crop_length: 20,
            spatial_cnn: [8, 16, 32, 32]
                .into_iter()
                .map(|c| ConvLayerConfig::downsample(c, 0.2))
                .collect(),
            clstm: ClstmConfig {
                hidden_channels: 32,
                num_bidirectional_layers: 2,
                kernel: 3,
            },
            head_cnn: head_cnn(&[64, 64]),
            temporal_conv: TemporalConvConfig {
                out_channels: 32,
                kernel: 3,
            },
            temporal_pooling: TemporalPooling::Mean,
            num_classes: 2,
        }
    }

    /// CPU-sized profile on the 12×14×12 grid (the full grid after two
    /// stride-2 halvings): two spatial layers reach the same 3×4×3 map the
    /// full profile reaches with four, and all widths are halved.
    pub fn desk_scale(variant: Variant) -> Self {
        ModelConfig {
            variant,
            input_spatial: [12, 14, 12],
            input_channels: 1,
            crop_length: 20,
            spatial_cnn: [8, 16]
                .into_iter()
                .map(|c| ConvLayerConfig::downsample(c, 0.2))
                .collect(),
            clstm: ClstmConfig {
                hidden_channels: 4,
                num_bidirectional_layers: 2,
                kernel: 3,
            },
            head_cnn: head_cnn(&[32, 32]),
            temporal_conv: TemporalConvConfig {
                out_channels: 16,
                kernel: 3,
            },
            temporal_pooling: TemporalPooling::Mean,
            num_classes: 2,
        }
    }

    /// A 6×6×6 model small enough for finite-difference checks.
    pub fn tiny(variant: Variant) -> Self {
        ModelConfig {
            variant,
            input_spatial: [6, 6, 6],
            input_channels: 1,
            crop_length: 4,
            spatial_cnn: vec![ConvLayerConfig::downsample(3, 0.2)],
            clstm: ClstmConfig {
                hidden_channels: 2,
                num_bidirectional_layers: 2,
                kernel: 3,
            },
            head_cnn: head_cnn(&[4]),
            temporal_conv: TemporalConvConfig {
                out_channels: 3,
                kernel: 3,
            },
            temporal_pooling: TemporalPooling::Mean,
            num_classes: 2,
        }
    }

    fn check_layer(name: &str, layer: &ConvLayerConfig) -> Result<()> {
        if layer.out_channels == 0 || layer.kernel == 0 || layer.stride == 0 {
            return Err(Error::Config(format!(
                "{name}: channels, kernel and stride must be >= 1, got {layer:?}"
            )));
        }
        if !(0.0..1.0).contains(&layer.dropout) {
            return Err(Error::Config(format!(
                "{name}: dropout {} outside [0, 1)",
                layer.dropout
            )));
        }
        Ok(())
    }

    fn run_cnn(prefix: &str, layers: &[ConvLayerConfig], input: [usize; 4]) -> Result<Vec<[usize; 4]>> {
        let mut shape = input;
        let mut out = Vec::with_capacity(layers.len());
        for (i, layer) in layers.iter().enumerate() {
            let name = format!("{prefix}[{i}]");
            Self::check_layer(&name, layer)?;
            let sp = layer
                .spec(shape[0])
                .output_spatial([shape[1], shape[2], shape[3]])
                .map_err(|e| Error::Config(format!("{name}: {e}")))?;
            shape = [layer.out_channels, sp[0], sp[1], sp[2]];
            out.push(shape);
        }
        Ok(out)
    }

    /// Validates the configuration and derives every intermediate shape.
    pub fn shape_chain(&self) -> Result<ShapeChain> {
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "num_classes must be >= 2, got {}",
                self.num_classes
            )));
        }
        if self.crop_length == 0 {
            return Err(Error::Config("crop_length must be >= 1".into()));
        }
        if self.input_channels == 0 || self.input_spatial.contains(&0) {
            return Err(Error::Config(format!(
                "input must have >= 1 channel and non-empty spatial dims, got {} × {:?}",
                self.input_channels, self.input_spatial
            )));
        }
        let [d, h, w] = self.input_spatial;
        let spatial = Self::run_cnn("spatial_cnn", &self.spatial_cnn, [self.input_channels, d, h, w])?;
        let after_spatial = *spatial.last().unwrap_or(&[self.input_channels, d, h, w]);

        match self.variant {
            Variant::Clstm => {
                let c = &self.clstm;
                if c.hidden_channels == 0 || c.num_bidirectional_layers == 0 {
                    return Err(Error::Config(format!(
                        "clstm: hidden channels and layer count must be >= 1, got {c:?}"
                    )));
                }
                if c.kernel % 2 == 0 {
                    return Err(Error::Config(format!(
                        "clstm: kernel must be odd for same-padding, got {}",
                        c.kernel
                    )));
                }
                let bi = [2 * c.hidden_channels, after_spatial[1], after_spatial[2], after_spatial[3]];
                let clstm = vec![bi; c.num_bidirectional_layers];
                let head = Self::run_cnn("head_cnn", &self.head_cnn, bi)?;
                let last = *head.last().unwrap_or(&bi);
                Ok(ShapeChain {
                    spatial,
                    clstm,
                    head,
                    features: last.iter().product(),
                })
            }
            Variant::Conv1d => {
                let t = &self.temporal_conv;
                if t.out_channels == 0 || t.kernel % 2 == 0 {
                    return Err(Error::Config(format!(
                        "temporal_conv: needs >= 1 channel and an odd kernel, got {t:?}"
                    )));
                }
                Ok(ShapeChain {
                    spatial,
                    clstm: Vec::new(),
                    head: Vec::new(),
                    features: t.out_channels,
                })
            }
        }
    }

    /// Channel count entering the first ConvLSTM layer or the global pool.
    pub fn spatial_out_channels(&self) -> usize {
        self.spatial_cnn
            .last()
            .map_or(self.input_channels, |l| l.out_channels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_grid_chain() {
        let chain = ModelConfig::full_scale(Variant::Clstm).shape_chain().unwrap();
        let sp: Vec<_> = chain.spatial.iter().map(|s| [s[1], s[2], s[3]]).collect();
        assert_eq!(sp, vec![[23, 27, 23], [12, 14, 12], [6, 7, 6], [3, 4, 3]]);
        assert_eq!(chain.clstm, vec![[64, 3, 4, 3]; 2]);
        assert_eq!(chain.head, vec![[64, 2, 2, 2], [64, 1, 1, 1]]);
        assert_eq!(chain.features, 64);
    }

    #[test]
    fn desk_chain_matches_full_after_two_layers() {
        let chain = ModelConfig::desk_scale(Variant::Clstm).shape_chain().unwrap();
        assert_eq!(chain.spatial, vec![[8, 6, 7, 6], [16, 3, 4, 3]]);
        assert_eq!(chain.head.last(), Some(&[32, 1, 1, 1]));
    }

    #[test]
    fn conv1d_features_are_temporal_channels() {
        let chain = ModelConfig::full_scale(Variant::Conv1d).shape_chain().unwrap();
        assert_eq!(chain.features, 32);
        assert!(chain.clstm.is_empty());
    }

    #[test]
    fn invalid_configs_name_the_layer() {
        let mut c = ModelConfig::desk_scale(Variant::Clstm);
        c.num_classes = 1;
        assert!(c.shape_chain().is_err());

        let mut c = ModelConfig::desk_scale(Variant::Clstm);
        c.spatial_cnn.push(ConvLayerConfig {
            out_channels: 4,
            kernel: 7,
            stride: 1,
            padding: 0,
            activation: Activation::Relu,
            dropout: 0.0,
        });
        let err = c.shape_chain().unwrap_err().to_string();
        assert!(err.contains("spatial_cnn[2]"), "{err}");

        let mut c = ModelConfig::desk_scale(Variant::Clstm);
        c.clstm.kernel = 2;
        assert!(c.shape_chain().is_err());

        let mut c = ModelConfig::desk_scale(Variant::Conv1d);
        c.temporal_conv.kernel = 4;
        assert!(c.shape_chain().is_err());
    }
}
