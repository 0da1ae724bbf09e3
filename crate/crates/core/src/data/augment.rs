use alloc::format;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::Rng as _;

use super::sample::{one_hot, Sample, BACKGROUND};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Ranges for the random geometric transform applied to training draws.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentSpec {
    pub flip_h_prob: f64,
    pub flip_v_prob: f64,
    pub rotation_max_deg: f64,
    pub zoom_range: (f64, f64),
    /// Maximum shift per axis as a fraction of the image side.
    pub shift_max_frac: f64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            flip_h_prob: 0.5,
            flip_v_prob: 0.5,
            rotation_max_deg: 15.0,
            zoom_range: (0.9, 1.1),
            shift_max_frac: 0.1,
        }
    }
}

impl AugmentSpec {
    /// Spec that always yields the identity transform.
    pub fn identity() -> Self {
        Self {
            flip_h_prob: 0.0,
            flip_v_prob: 0.0,
            rotation_max_deg: 0.0,
            zoom_range: (1.0, 1.0),
            shift_max_frac: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.flip_h_prob) || !prob(self.flip_v_prob) {
            return Err(Error::Config("augment flip probabilities must lie in [0, 1]".into()));
        }
        let (lo, hi) = self.zoom_range;
        if !(lo > 0.0 && lo <= 1.0 && 1.0 <= hi) {
            return Err(Error::Config(format!("augment.zoom_range ({lo}, {hi}) must satisfy 0 < lo <= 1 <= hi")));
        }
        if !(self.rotation_max_deg >= 0.0) || !(self.shift_max_frac >= 0.0) {
            return Err(Error::Config("augment rotation and shift ranges must be >= 0".into()));
        }
        Ok(())
    }
}

/// One concrete transform: flips, then zoom and rotation about the image
/// centre, then a shift in pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentDraw {
    pub flip_h: bool,
    pub flip_v: bool,
    pub angle_deg: f64,
    pub zoom: f64,
    pub shift_x: f64,
    pub shift_y: f64,
}

impl AugmentDraw {
    pub const IDENTITY: Self = Self {
        flip_h: false,
        flip_v: false,
        angle_deg: 0.0,
        zoom: 1.0,
        shift_x: 0.0,
        shift_y: 0.0,
    };

    pub fn sample(spec: &AugmentSpec, side: usize, rng: &mut Rng) -> Self {
        let mut uniform = |lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
        let flip_h = uniform(0.0, 1.0) < spec.flip_h_prob;
        let flip_v = uniform(0.0, 1.0) < spec.flip_v_prob;
        let angle_deg = uniform(-spec.rotation_max_deg, spec.rotation_max_deg);
        let zoom = uniform(spec.zoom_range.0, spec.zoom_range.1);
        let max_shift = spec.shift_max_frac * side as f64;
        let shift_x = uniform(-max_shift, max_shift);
        let shift_y = uniform(-max_shift, max_shift);
        Self { flip_h, flip_v, angle_deg, zoom, shift_x, shift_y }
    }

    /// Source coordinate that lands on output pixel `(x, y)`.
    fn source(&self, x: f64, y: f64, cx: f64, cy: f64) -> (f64, f64) {
        let (u, v) = (x - cx - self.shift_x, y - cy - self.shift_y);
        let (s, c) = self.angle_deg.to_radians().sin_cos();
        let (mut u, mut v) = ((c * u + s * v) / self.zoom, (-s * u + c * v) / self.zoom);
        if self.flip_h {
            u = -u;
        }
        if self.flip_v {
            v = -v;
        }
        (cx + u, cy + v)
    }

    /// Applies the transform: bilinear for the input, nearest for the label.
    /// Pixels mapped from outside the frame become background / zero.
    pub fn apply(&self, sample: &Sample) -> Sample {
        let (h, w) = (sample.height(), sample.width());
        let hw = h * w;
        let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
        let classes = sample.classes();
        let src = sample.input.data();
        let channels = sample.input.shape()[0];
        let mut input = alloc::vec![0.0f32; channels * hw];
        let mut out_classes = Vec::with_capacity(hw);
        let at = |ch: usize, x: isize, y: isize| -> f64 {
            if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
                0.0
            } else {
                src[ch * hw + y as usize * w + x as usize] as f64
            }
        };
        for y in 0..h {
            for x in 0..w {
                let (sx, sy) = self.source(x as f64, y as f64, cx, cy);
                let (x0, y0) = (sx.floor(), sy.floor());
                let (fx, fy) = (sx - x0, sy - y0);
                let (x0, y0) = (x0 as isize, y0 as isize);
                for ch in 0..channels {
                    let v = (1.0 - fy) * ((1.0 - fx) * at(ch, x0, y0) + fx * at(ch, x0 + 1, y0))
                        + fy * ((1.0 - fx) * at(ch, x0, y0 + 1) + fx * at(ch, x0 + 1, y0 + 1));
                    input[ch * hw + y * w + x] = v.clamp(0.0, 1.0) as f32;
                }
                let (nx, ny) = (sx.round(), sy.round());
                let inside = nx >= 0.0 && ny >= 0.0 && nx < w as f64 && ny < h as f64;
                out_classes.push(if inside {
                    classes[ny as usize * w + nx as usize]
                } else {
                    BACKGROUND
                });
            }
        }
        Sample {
            id: sample.id.clone(),
            input: Tensor::from_parts(sample.input.shape().to_vec(), input),
            label: one_hot(&out_classes, h, w),
        }
    }
}

/// Draws one transform from `spec` and applies it.
pub fn augment(sample: &Sample, spec: &AugmentSpec, rng: &mut Rng) -> Sample {
    AugmentDraw::sample(spec, sample.width().max(sample.height()), rng).apply(sample)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{synth_sample, SynthSpec};
    use crate::rng::seeded;

    fn sample() -> Sample {
        synth_sample(&SynthSpec { size: 32, ..SynthSpec::desk() }, 7, 0)
    }

    #[test]
    fn identity_spec_is_identity() {
        let s = sample();
        let mut rng = seeded(1);
        for _ in 0..5 {
            assert_eq!(augment(&s, &AugmentSpec::identity(), &mut rng), s);
        }
    }

    #[test]
    fn flip_twice_restores() {
        let s = sample();
        for (h, v) in [(true, false), (false, true), (true, true)] {
            let d = AugmentDraw { flip_h: h, flip_v: v, ..AugmentDraw::IDENTITY };
            let once = d.apply(&s);
            assert_ne!(once, s);
            assert_eq!(d.apply(&once), s);
        }
    }

    #[test]
    fn horizontal_flip_mirrors_columns() {
        let s = sample();
        let d = AugmentDraw { flip_h: true, ..AugmentDraw::IDENTITY };
        let f = d.apply(&s);
        let w = s.width();
        for y in 0..s.height() {
            for x in 0..w {
                assert_eq!(f.input.data()[y * w + x], s.input.data()[y * w + (w - 1 - x)]);
            }
        }
    }

    #[test]
    fn shift_moves_content_and_fills_background() {
        let s = sample();
        let d = AugmentDraw { shift_x: 3.0, ..AugmentDraw::IDENTITY };
        let f = d.apply(&s);
        let w = s.width();
        let (cs, cf) = (s.classes(), f.classes());
        for y in 0..s.height() {
            for x in 0..3 {
                assert_eq!(cf[y * w + x], BACKGROUND);
                assert_eq!(f.input.data()[y * w + x], 0.0);
            }
            for x in 3..w {
                assert_eq!(cf[y * w + x], cs[y * w + x - 3]);
            }
        }
    }

    #[test]
    fn spec_validation() {
        assert!(AugmentSpec::default().validate().is_ok());
        assert!(AugmentSpec::identity().validate().is_ok());
        assert!(AugmentSpec { zoom_range: (1.1, 1.2), ..Default::default() }.validate().is_err());
        assert!(AugmentSpec { flip_h_prob: 2.0, ..Default::default() }.validate().is_err());
    }
}
