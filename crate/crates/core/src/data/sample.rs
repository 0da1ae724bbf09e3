use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const ARTERY: u8 = 0;
pub const BACKGROUND: u8 = 1;
pub const VEIN: u8 = 2;
pub const NUM_CLASSES: usize = 3;
pub const CLASS_NAMES: [&str; NUM_CLASSES] = ["artery", "background", "vein"];
/// Label colours: arteries red, background green, veins blue.
pub const CLASS_COLORS: [[u8; 3]; NUM_CLASSES] = [[255, 0, 0], [0, 255, 0], [0, 0, 255]];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(shape_err("gray_image", format!("{width}x{height} needs {} bytes, got {}", width * height, pixels.len())));
        }
        Ok(Self { width, height, pixels })
    }
}

/// Interleaved 8-bit RGB.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != 3 * width * height {
            return Err(shape_err("rgb_image", format!("{width}x{height} needs {} bytes, got {}", 3 * width * height, pixels.len())));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }
}

/// One training/evaluation example: a 2×S×S input (enface OCT, OCTA in
/// `[0, 1]`) and a 3×S×S one-hot label (artery, background, vein).
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub input: Tensor<f32>,
    pub label: Tensor<f32>,
}

impl Sample {
    pub fn new(id: impl Into<String>, input: Tensor<f32>, label: Tensor<f32>) -> Result<Self> {
        let (is, ls) = (input.shape(), label.shape());
        if is.len() != 3 || is[0] != 2 || ls.len() != 3 || ls[0] != 3 || is[1..] != ls[1..] {
            return Err(shape_err("sample", format!("input {is:?} / label {ls:?}, want 2xHxW / 3xHxW")));
        }
        if input.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Config("sample input values must lie in [0, 1]".into()));
        }
        let hw = ls[1] * ls[2];
        for px in 0..hw {
            let sum: f32 = (0..3).map(|c| label.data()[c * hw + px]).sum();
            if sum != 1.0 {
                return Err(Error::NotOneHot { pixel: px, sum: sum as f64 });
            }
        }
        Ok(Self { id: id.into(), input, label })
    }

    pub fn height(&self) -> usize {
        self.input.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.input.shape()[2]
    }

    fn channel_image(&self, c: usize) -> GrayImage {
        let hw = self.height() * self.width();
        let pixels = self.input.data()[c * hw..(c + 1) * hw]
            .iter()
            .map(|&v| num_traits::Float::round(v * 255.0) as u8)
            .collect();
        GrayImage { width: self.width(), height: self.height(), pixels }
    }

    pub fn oct_image(&self) -> GrayImage {
        self.channel_image(0)
    }

    pub fn octa_image(&self) -> GrayImage {
        self.channel_image(1)
    }

    pub fn label_image(&self) -> RgbImage {
        encode_label_rgb(&self.label).expect("sample label is 3xHxW")
    }

    pub fn classes(&self) -> Vec<u8> {
        argmax_classes(&self.label).expect("sample label is 3xHxW")
    }
}

/// Per-pixel argmax over a C×H×W tensor; ties go to the lowest index.
pub fn argmax_classes<T: Scalar>(t: &Tensor<T>) -> Result<Vec<u8>> {
    let [c, h, w] = match *t.shape() {
        [c, h, w] => [c, h, w],
        _ => return Err(shape_err("argmax_classes", format!("expected CxHxW, got {:?}", t.shape()))),
    };
    let hw = h * w;
    let d = t.data();
    Ok((0..hw)
        .map(|px| {
            let mut best = 0;
            for ch in 1..c {
                if d[ch * hw + px] > d[best * hw + px] {
                    best = ch;
                }
            }
            best as u8
        })
        .collect())
}

/// 3×H×W one-hot tensor from class indices.
pub fn one_hot(classes: &[u8], height: usize, width: usize) -> Tensor<f32> {
    let hw = height * width;
    assert_eq!(classes.len(), hw);
    let mut data = vec![0.0f32; NUM_CLASSES * hw];
    for (px, &c) in classes.iter().enumerate() {
        data[c as usize * hw + px] = 1.0;
    }
    Tensor::from_parts(vec![NUM_CLASSES, height, width], data)
}

/// R, G, B -> artery, background, vein by channel argmax.
pub fn decode_label_rgb(image: &RgbImage) -> Tensor<f32> {
    let classes: Vec<u8> = image
        .pixels
        .chunks_exact(3)
        .map(|p| {
            let mut best = 0;
            for c in 1..3 {
                if p[c] > p[best] {
                    best = c;
                }
            }
            best as u8
        })
        .collect();
    one_hot(&classes, image.height, image.width)
}

/// Argmax of a 3×H×W probability map rendered as pure class colours.
pub fn encode_label_rgb<T: Scalar>(label: &Tensor<T>) -> Result<RgbImage> {
    if label.rank() != 3 || label.shape()[0] != NUM_CLASSES {
        return Err(shape_err("encode_label_rgb", format!("expected 3xHxW, got {:?}", label.shape())));
    }
    let (h, w) = (label.shape()[1], label.shape()[2]);
    let pixels = argmax_classes(label)?
        .into_iter()
        .flat_map(|c| CLASS_COLORS[c as usize])
        .collect();
    Ok(RgbImage { width: w, height: h, pixels })
}

/// Stacks enface OCT and OCTA as channels 0 and 1, scaled to `[0, 1]`.
pub fn assemble_input(oct: &GrayImage, octa: &GrayImage) -> Result<Tensor<f32>> {
    if (oct.width, oct.height) != (octa.width, octa.height) {
        return Err(shape_err(
            "assemble_input",
            format!("OCT is {}x{}, OCTA is {}x{}", oct.width, oct.height, octa.width, octa.height),
        ));
    }
    let data = oct
        .pixels
        .iter()
        .chain(&octa.pixels)
        .map(|&v| v as f32 / 255.0)
        .collect();
    Ok(Tensor::from_parts(vec![2, oct.height, oct.width], data))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rgb(px: &[[u8; 3]], w: usize) -> RgbImage {
        RgbImage::new(w, px.len() / w, px.iter().flatten().copied().collect()).unwrap()
    }

    #[test]
    fn decode_examples() {
        let img = rgb(&[[255, 0, 0], [0, 255, 0], [10, 200, 30], [0, 0, 255]], 2);
        let t = decode_label_rgb(&img);
        assert_eq!(argmax_classes(&t).unwrap(), [ARTERY, BACKGROUND, BACKGROUND, VEIN]);
        assert_eq!(t.data().iter().filter(|&&v| v == 1.0).count(), 4);
    }

    #[test]
    fn decode_ties_go_low() {
        let t = decode_label_rgb(&rgb(&[[9, 9, 9], [0, 7, 7]], 2));
        assert_eq!(argmax_classes(&t).unwrap(), [ARTERY, BACKGROUND]);
    }

    #[test]
    fn encode_examples() {
        let label = one_hot(&[ARTERY], 1, 1);
        assert_eq!(encode_label_rgb(&label).unwrap().pixels, [255, 0, 0]);
        let probs = Tensor::<f32>::from_f64(&[3, 1, 1], &[0.4, 0.4, 0.2]).unwrap();
        assert_eq!(encode_label_rgb(&probs).unwrap().pixels, [255, 0, 0]);
    }

    #[test]
    fn assemble_scaling_and_order() {
        let oct = GrayImage::new(2, 1, vec![255, 0]).unwrap();
        let octa = GrayImage::new(2, 1, vec![0, 51]).unwrap();
        let t = assemble_input(&oct, &octa).unwrap();
        assert_eq!(t.shape(), &[2, 1, 2]);
        assert_eq!(t.data(), &[1.0, 0.0, 0.0, 0.2]);
        let small = GrayImage::new(1, 1, vec![0]).unwrap();
        assert!(assemble_input(&oct, &small).is_err());
    }

    #[test]
    fn sample_validation() {
        let label = one_hot(&[ARTERY, VEIN], 1, 2);
        assert!(Sample::new("a", Tensor::zeros(&[2, 1, 2]), label.clone()).is_ok());
        assert!(Sample::new("a", Tensor::full(&[2, 1, 2], 1.5), label.clone()).is_err());
        assert!(Sample::new("a", Tensor::zeros(&[2, 1, 2]), Tensor::zeros(&[3, 1, 2])).is_err());
        assert!(Sample::new("a", Tensor::zeros(&[2, 2, 2]), label).is_err());
    }
}
