use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Bottleneck width of each convolution block, as a multiple of the growth
/// rate.
pub const BOTTLENECK_FACTOR: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct AvNetConfig {
    pub dense_block_layers: [usize; 4],
    pub growth_rate: usize,
    pub stem_channels: usize,
    pub transition_compression: f64,
    /// Output channels of decoder blocks, deepest first.
    pub decoder_channels: [usize; 4],
    pub num_classes: usize,
    pub input_channels: usize,
    pub input_size: usize,
}

impl Default for AvNetConfig {
    fn default() -> Self {
        Self::canonical()
    }
}

impl AvNetConfig {
    /// DenseNet-121-shaped encoder at 256x256.
    pub fn canonical() -> Self {
        Self {
            dense_block_layers: [6, 12, 24, 16],
            growth_rate: 32,
            stem_channels: 64,
            transition_compression: 0.5,
            decoder_channels: [256, 128, 64, 32],
            num_classes: 3,
            input_channels: 2,
            input_size: 256,
        }
    }

    /// Small model for CPU experiments on 64x64 inputs.
    pub fn desk() -> Self {
        Self {
            dense_block_layers: [2, 2, 2, 2],
            growth_rate: 8,
            stem_channels: 32,
            decoder_channels: [128, 64, 64, 32],
            input_size: 64,
            ..Self::canonical()
        }
    }

    /// Smallest configuration that still exercises every block; used for
    /// end-to-end gradient checks.
    pub fn tiny() -> Self {
        Self {
            dense_block_layers: [1, 1, 1, 1],
            growth_rate: 2,
            stem_channels: 4,
            decoder_channels: [8, 6, 4, 4],
            input_size: 32,
            ..Self::canonical()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut failed: Vec<String> = Vec::new();
        if self.dense_block_layers.iter().any(|&l| l == 0) {
            failed.push(format!("dense_block_layers {:?} must all be >= 1", self.dense_block_layers));
        }
        if self.growth_rate == 0 {
            failed.push("growth_rate must be >= 1".into());
        }
        if self.stem_channels == 0 {
            failed.push("stem_channels must be >= 1".into());
        }
        if !(self.transition_compression > 0.0 && self.transition_compression <= 1.0) {
            failed.push(format!(
                "transition_compression {} must lie in (0, 1]",
                self.transition_compression
            ));
        }
        if self.decoder_channels.iter().any(|&c| c == 0) {
            failed.push(format!("decoder_channels {:?} must all be >= 1", self.decoder_channels));
        }
        if self.num_classes != 3 {
            failed.push(format!("num_classes must be 3, got {}", self.num_classes));
        }
        if self.input_channels != 2 {
            failed.push(format!("input_channels must be 2, got {}", self.input_channels));
        }
        if self.input_size == 0 || self.input_size % 32 != 0 {
            failed.push(format!(
                "input_size {} must be a positive multiple of 32",
                self.input_size
            ));
        }
        if failed.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(failed.join("; ")))
        }
    }

    /// Output channels of a transition block fed with `c` channels.
    pub fn transition_channels(&self, c: usize) -> usize {
        let v = num_traits::Float::ceil(self.transition_compression * c as f64) as usize;
        v.max(1)
    }
}
