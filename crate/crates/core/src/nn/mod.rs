//! AV-Net: a dense-block encoder with dual-output transition blocks, a
//! concatenating decoder, and a softmax head producing artery / background /
//! vein probabilities at input resolution.

mod blocks;
mod config;
mod model;
mod params;

pub(crate) use blocks::he_normal as blocks_he_normal;

pub use blocks::{ConvBlock, ConvBn, DecoderBlock, DenseBlock, ForwardCtx, TransitionBlock};
pub use config::{AvNetConfig, BOTTLENECK_FACTOR};
pub use model::{load_pretrained, AvNet, LoadReport, TrainPass};
pub use params::{Entry, ParamId, ParameterStore};
