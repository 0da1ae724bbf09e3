use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::TAU;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::sample::{one_hot, Sample, ARTERY, BACKGROUND, VEIN};
use crate::error::{Error, Result};
use crate::rng::{seeded, Rng};
use crate::tensor::Tensor;

/// Parameters of the procedural OCT/OCTA generator. Arteries and veins
/// differ only in their enface OCT reflectance band; OCTA shows both alike.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub count: usize,
    pub size: usize,
    pub vessels_per_image: (usize, usize),
    pub vessel_width_px: (usize, usize),
    pub artery_oct_intensity: (f64, f64),
    pub vein_oct_intensity: (f64, f64),
    pub noise_sigma: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            count: 40,
            size: 256,
            vessels_per_image: (3, 6),
            vessel_width_px: (2, 5),
            artery_oct_intensity: (0.65, 0.85),
            vein_oct_intensity: (0.30, 0.50),
            noise_sigma: 0.05,
        }
    }
}

impl SynthSpec {
    pub fn desk() -> Self {
        Self { size: 64, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: alloc::string::String| Err(Error::Config(m));
        if self.size == 0 || self.size % 32 != 0 {
            return err(format!("synth.size {} must be a positive multiple of 32", self.size));
        }
        let (vmin, vmax) = self.vessels_per_image;
        if vmin < 2 || vmin > vmax {
            return err(format!("synth.vessels_per_image ({vmin}, {vmax}) needs 2 <= min <= max"));
        }
        let (wmin, wmax) = self.vessel_width_px;
        if wmin == 0 || wmin > wmax {
            return err(format!("synth.vessel_width_px ({wmin}, {wmax}) needs 1 <= min <= max"));
        }
        for (name, (lo, hi)) in [("artery", self.artery_oct_intensity), ("vein", self.vein_oct_intensity)] {
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return err(format!("synth.{name}_oct_intensity ({lo}, {hi}) must be an interval in [0, 1]"));
            }
        }
        let (a, v) = (self.artery_oct_intensity, self.vein_oct_intensity);
        if !(a.0 > v.1 || v.0 > a.1) {
            return err("synth artery and vein OCT bands must be disjoint".into());
        }
        if !(self.noise_sigma >= 0.0) {
            return err(format!("synth.noise_sigma {} must be >= 0", self.noise_sigma));
        }
        Ok(())
    }
}

struct Canvas {
    size: usize,
    classes: Vec<u8>,
    oct: Vec<f64>,
    octa: Vec<f64>,
}

impl Canvas {
    fn stamp(&mut self, x: f64, y: f64, radius: f64, class: u8, oct: f64, octa: f64) {
        let s = self.size as isize;
        let r2 = radius * radius;
        let (x0, x1) = ((x - radius).floor() as isize, (x + radius).ceil() as isize);
        let (y0, y1) = ((y - radius).floor() as isize, (y + radius).ceil() as isize);
        for py in y0.max(0)..=y1.min(s - 1) {
            for px in x0.max(0)..=x1.min(s - 1) {
                let (dx, dy) = (px as f64 - x, py as f64 - y);
                if dx * dx + dy * dy <= r2 {
                    let i = py as usize * self.size + px as usize;
                    self.classes[i] = class;
                    self.oct[i] = oct;
                    self.octa[i] = octa;
                }
            }
        }
    }
}

fn edge_point(rng: &mut Rng, edge: u32, s: f64) -> (f64, f64) {
    let t = rng.random::<f64>() * (s - 1.0);
    match edge {
        0 => (t, 0.0),
        1 => (s - 1.0, t),
        2 => (t, s - 1.0),
        _ => (0.0, t),
    }
}

fn draw_vessels(spec: &SynthSpec, rng: &mut Rng) -> Canvas {
    let size = spec.size;
    let s = size as f64;
    let mut canvas = Canvas {
        size,
        classes: vec![BACKGROUND; size * size],
        oct: vec![0.0; size * size],
        octa: vec![0.0; size * size],
    };
    let count = rng.random_range(spec.vessels_per_image.0..=spec.vessels_per_image.1);
    for v in 0..count {
        let (class, band) = if v % 2 == 0 {
            (ARTERY, spec.artery_oct_intensity)
        } else {
            (VEIN, spec.vein_oct_intensity)
        };
        let width = rng.random_range(spec.vessel_width_px.0..=spec.vessel_width_px.1) as f64;
        let oct = band.0 + (band.1 - band.0) * rng.random::<f64>();
        let octa = 0.9 + 0.1 * rng.random::<f64>();
        let start_edge = rng.random_range(0..4u32);
        let end_edge = (start_edge + rng.random_range(1..4u32)) % 4;
        let p0 = edge_point(rng, start_edge, s);
        let p2 = edge_point(rng, end_edge, s);
        let p1 = (rng.random::<f64>() * (s - 1.0), rng.random::<f64>() * (s - 1.0));
        let steps = 4 * size;
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            let (a, b, c) = ((1.0 - t) * (1.0 - t), 2.0 * (1.0 - t) * t, t * t);
            let x = a * p0.0 + b * p1.0 + c * p2.0;
            let y = a * p0.1 + b * p1.1 + c * p2.1;
            canvas.stamp(x, y, width / 2.0, class, oct, octa);
        }
    }
    canvas
}

/// Sample `index` of the dataset generated from `seed`; its generator is
/// keyed by `seed ^ index`, so samples can be produced independently.
pub fn synth_sample(spec: &SynthSpec, seed: u64, index: usize) -> Sample {
    let mut rng = seeded(seed ^ index as u64);
    let canvas = loop {
        let c = draw_vessels(spec, &mut rng);
        // later vessels can in principle hide every pixel of an earlier one
        if c.classes.contains(&ARTERY) && c.classes.contains(&VEIN) {
            break c;
        }
    };
    let size = spec.size;
    let s = size as f64;
    let freq = (rng.random_range(1..=3) as f64, rng.random_range(1..=3) as f64);
    let phase = (rng.random::<f64>() * TAU, rng.random::<f64>() * TAU);
    let noise = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
    let hw = size * size;
    let mut input = vec![0.0f32; 2 * hw];
    for y in 0..size {
        for x in 0..size {
            let i = y * size + x;
            let oct = if canvas.classes[i] == BACKGROUND {
                0.15 + 0.05 * (TAU * freq.0 * x as f64 / s + phase.0).sin() * (TAU * freq.1 * y as f64 / s + phase.1).cos()
            } else {
                canvas.oct[i]
            };
            let n_oct: f64 = noise.sample(&mut rng);
            let n_octa: f64 = noise.sample(&mut rng);
            input[i] = (oct + n_oct).clamp(0.0, 1.0) as f32;
            input[hw + i] = (canvas.octa[i] + n_octa).clamp(0.0, 1.0) as f32;
        }
    }
    Sample {
        id: format!("synth{index:04}"),
        input: Tensor::from_parts(vec![2, size, size], input),
        label: one_hot(&canvas.classes, size, size),
    }
}

pub fn synth_generate(spec: &SynthSpec, seed: u64) -> Result<Vec<Sample>> {
    spec.validate()?;
    Ok((0..spec.count).map(|i| synth_sample(spec, seed, i)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn class_mean(s: &Sample, class: u8) -> f64 {
        let cls = s.classes();
        let (sum, n) = cls
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == class)
            .fold((0.0, 0usize), |(a, n), (i, _)| (a + s.input.data()[i] as f64, n + 1));
        sum / n as f64
    }

    #[test]
    fn deterministic() {
        let spec = SynthSpec { count: 3, ..SynthSpec::desk() };
        assert_eq!(synth_generate(&spec, 5).unwrap(), synth_generate(&spec, 5).unwrap());
        assert_ne!(synth_generate(&spec, 5).unwrap(), synth_generate(&spec, 6).unwrap());
    }

    #[test]
    fn labels_valid_with_all_classes_and_bands_hold() {
        let spec = SynthSpec { count: 20, ..SynthSpec::desk() };
        let sigma = spec.noise_sigma;
        for s in synth_generate(&spec, 11).unwrap() {
            let validated = Sample::new(s.id.clone(), s.input.clone(), s.label.clone()).unwrap();
            let cls = validated.classes();
            for c in [ARTERY, BACKGROUND, VEIN] {
                assert!(cls.contains(&c), "{} lacks class {c}", s.id);
            }
            let a = class_mean(&s, ARTERY);
            let v = class_mean(&s, VEIN);
            let (alo, ahi) = spec.artery_oct_intensity;
            let (vlo, vhi) = spec.vein_oct_intensity;
            assert!(a >= alo - 2.0 * sigma && a <= ahi + 2.0 * sigma, "artery mean {a}");
            assert!(v >= vlo - 2.0 * sigma && v <= vhi + 2.0 * sigma, "vein mean {v}");
            assert!(a - v > 4.0 * sigma);
        }
    }

    #[test]
    fn spec_validation() {
        assert!(SynthSpec::default().validate().is_ok());
        assert!(SynthSpec { size: 48, ..SynthSpec::default() }.validate().is_err());
        assert!(SynthSpec { vessels_per_image: (1, 3), ..SynthSpec::default() }.validate().is_err());
        assert!(SynthSpec { vein_oct_intensity: (0.6, 0.7), ..SynthSpec::default() }.validate().is_err());
    }
}
