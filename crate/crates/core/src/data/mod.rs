//! Samples, the RGB label codec, augmentation, fold splitting and the
//! synthetic OCT/OCTA generator.

mod augment;
mod kfold;
mod sample;
mod synth;

pub use augment::{augment, AugmentDraw, AugmentSpec};
pub use kfold::{kfold_split, FoldPlan};
pub use sample::{
    argmax_classes, assemble_input, decode_label_rgb, encode_label_rgb, one_hot, GrayImage, RgbImage,
    Sample, ARTERY, BACKGROUND, CLASS_COLORS, CLASS_NAMES, NUM_CLASSES, VEIN,
};
pub use synth::{synth_generate, synth_sample, SynthSpec};
