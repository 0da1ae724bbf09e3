//! Plain-text `key=value` configuration: one pair per line, `#` starts a
//! comment, dotted prefixes select the section (`model.growth_rate=8`).

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;
use core::str::FromStr;

use crate::data::SynthSpec;
use crate::error::{Error, Result};
use crate::losses::LossMode;
use crate::train::TrainConfig;

/// Everything a config file can set.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub synth: SynthSpec,
}

/// Splits `text` into `(line number, key, value)` triples. Blank lines and
/// comments are skipped; later duplicates win when applied.
pub fn parse_pairs(text: &str) -> Result<Vec<(usize, &str, &str)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {line:?}", i + 1)))?;
        out.push((i + 1, k.trim(), v.trim()));
    }
    Ok(out)
}

fn scalar<V: FromStr>(line: usize, key: &str, v: &str) -> Result<V> {
    v.parse()
        .map_err(|_| Error::Config(format!("line {line}: cannot parse {key}={v:?}")))
}

fn list<V: FromStr>(line: usize, key: &str, v: &str) -> Result<Vec<V>> {
    v.split(',').map(|p| scalar(line, key, p.trim())).collect()
}

fn array<V: FromStr + Copy, const N: usize>(line: usize, key: &str, v: &str) -> Result<[V; N]> {
    let items = list::<V>(line, key, v)?;
    items
        .try_into()
        .map_err(|_| Error::Config(format!("line {line}: {key} needs {N} comma-separated values")))
}

fn pair<V: FromStr + Copy>(line: usize, key: &str, v: &str) -> Result<(V, V)> {
    let [a, b] = array::<V, 2>(line, key, v)?;
    Ok((a, b))
}

fn join<V: core::fmt::Display>(items: &[V]) -> String {
    let mut s = String::new();
    for (i, x) in items.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{x}");
    }
    s
}

pub fn parse_loss_mode(v: &str) -> Option<LossMode> {
    match v {
        "compound" => Some(LossMode::Compound),
        "dice_only" | "dice" => Some(LossMode::DiceOnly),
        _ => None,
    }
}

pub fn loss_mode_name(m: LossMode) -> &'static str {
    match m {
        LossMode::Compound => "compound",
        LossMode::DiceOnly => "dice_only",
    }
}

impl TrainConfig {
    /// Applies one key; returns `Ok(false)` when the key is not a training key.
    pub fn set(&mut self, line: usize, key: &str, v: &str) -> Result<bool> {
        let m = &mut self.model;
        let l = &mut self.loss;
        let a = &mut self.augment;
        match key {
            "model.dense_block_layers" => m.dense_block_layers = array(line, key, v)?,
            "model.growth_rate" => m.growth_rate = scalar(line, key, v)?,
            "model.stem_channels" => m.stem_channels = scalar(line, key, v)?,
            "model.transition_compression" => m.transition_compression = scalar(line, key, v)?,
            "model.decoder_channels" => m.decoder_channels = array(line, key, v)?,
            "model.num_classes" => m.num_classes = scalar(line, key, v)?,
            "model.input_channels" => m.input_channels = scalar(line, key, v)?,
            "model.input_size" => m.input_size = scalar(line, key, v)?,
            "loss.alpha" => l.alpha = scalar(line, key, v)?,
            "loss.gamma" => l.gamma = scalar(line, key, v)?,
            "loss.dice_smooth" => l.dice_smooth = scalar(line, key, v)?,
            "loss.prob_clamp" => l.prob_clamp = scalar(line, key, v)?,
            "augment.flip_h_prob" => a.flip_h_prob = scalar(line, key, v)?,
            "augment.flip_v_prob" => a.flip_v_prob = scalar(line, key, v)?,
            "augment.rotation_max_deg" => a.rotation_max_deg = scalar(line, key, v)?,
            "augment.zoom_range" => a.zoom_range = pair(line, key, v)?,
            "augment.shift_max_frac" => a.shift_max_frac = scalar(line, key, v)?,
            "augment.enabled" => {
                if !scalar::<bool>(line, key, v)? {
                    *a = crate::data::AugmentSpec::identity();
                }
            }
            "lr" => self.lr = scalar(line, key, v)?,
            "batch_size" => self.batch_size = scalar(line, key, v)?,
            "train_samples_per_fold" => self.train_samples_per_fold = scalar(line, key, v)?,
            "k_folds" => self.k_folds = scalar(line, key, v)?,
            "seed" => self.seed = scalar(line, key, v)?,
            "eval_every" => self.eval_every = scalar(line, key, v)?,
            "checkpoint_dir" => self.checkpoint_dir = v.to_string(),
            "loss_mode" => {
                self.loss_mode = parse_loss_mode(v).ok_or_else(|| {
                    Error::Config(format!("line {line}: loss_mode must be compound or dice_only, got {v:?}"))
                })?
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Parses a training-only config text (unknown keys rejected).
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (line, k, v) in parse_pairs(text)? {
            if !cfg.set(line, k, v)? {
                return Err(unknown(line, k));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv(&self) -> String {
        let (m, l, a) = (&self.model, &self.loss, &self.augment);
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        put("model.dense_block_layers", join(&m.dense_block_layers));
        put("model.growth_rate", m.growth_rate.to_string());
        put("model.stem_channels", m.stem_channels.to_string());
        put("model.transition_compression", m.transition_compression.to_string());
        put("model.decoder_channels", join(&m.decoder_channels));
        put("model.num_classes", m.num_classes.to_string());
        put("model.input_channels", m.input_channels.to_string());
        put("model.input_size", m.input_size.to_string());
        put("loss.alpha", l.alpha.to_string());
        put("loss.gamma", l.gamma.to_string());
        put("loss.dice_smooth", l.dice_smooth.to_string());
        put("loss.prob_clamp", l.prob_clamp.to_string());
        put("augment.flip_h_prob", a.flip_h_prob.to_string());
        put("augment.flip_v_prob", a.flip_v_prob.to_string());
        put("augment.rotation_max_deg", a.rotation_max_deg.to_string());
        put("augment.zoom_range", join(&[a.zoom_range.0, a.zoom_range.1]));
        put("augment.shift_max_frac", a.shift_max_frac.to_string());
        put("lr", self.lr.to_string());
        put("batch_size", self.batch_size.to_string());
        put("train_samples_per_fold", self.train_samples_per_fold.to_string());
        put("k_folds", self.k_folds.to_string());
        put("seed", self.seed.to_string());
        put("loss_mode", loss_mode_name(self.loss_mode).to_string());
        put("eval_every", self.eval_every.to_string());
        put("checkpoint_dir", self.checkpoint_dir.clone());
        s
    }
}

impl SynthSpec {
    pub fn set(&mut self, line: usize, key: &str, v: &str) -> Result<bool> {
        match key {
            "synth.count" => self.count = scalar(line, key, v)?,
            "synth.size" => self.size = scalar(line, key, v)?,
            "synth.vessels_per_image" => self.vessels_per_image = pair(line, key, v)?,
            "synth.vessel_width_px" => self.vessel_width_px = pair(line, key, v)?,
            "synth.artery_oct_intensity" => self.artery_oct_intensity = pair(line, key, v)?,
            "synth.vein_oct_intensity" => self.vein_oct_intensity = pair(line, key, v)?,
            "synth.noise_sigma" => self.noise_sigma = scalar(line, key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "synth.count={}", self.count);
        let _ = writeln!(s, "synth.size={}", self.size);
        let _ = writeln!(s, "synth.vessels_per_image={},{}", self.vessels_per_image.0, self.vessels_per_image.1);
        let _ = writeln!(s, "synth.vessel_width_px={},{}", self.vessel_width_px.0, self.vessel_width_px.1);
        let _ = writeln!(
            s,
            "synth.artery_oct_intensity={},{}",
            self.artery_oct_intensity.0, self.artery_oct_intensity.1
        );
        let _ = writeln!(s, "synth.vein_oct_intensity={},{}", self.vein_oct_intensity.0, self.vein_oct_intensity.1);
        let _ = writeln!(s, "synth.noise_sigma={}", self.noise_sigma);
        s
    }
}

fn unknown(line: usize, key: &str) -> Error {
    Error::Config(format!("line {line}: unknown key {key:?}"))
}

impl RunConfig {
    /// Parses on top of the defaults and validates the result.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies every pair in `text` without validating.
    pub fn apply(&mut self, text: &str) -> Result<()> {
        for (line, k, v) in parse_pairs(text)? {
            if !self.train.set(line, k, v)? && !self.synth.set(line, k, v)? {
                return Err(unknown(line, k));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.synth.validate()
    }

    pub fn to_kv(&self) -> String {
        let mut s = self.train.to_kv();
        s.push_str(&self.synth.to_kv());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::AvNetConfig;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse(&cfg.to_kv()).unwrap(), cfg);
    }

    #[test]
    fn dotted_keys_and_comments() {
        let text = "# desk run\nmodel.growth_rate = 8  # small\naugment.rotation_max_deg=15\n\nseed=7\nloss_mode=dice_only\nsynth.count=4\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.train.model.growth_rate, 8);
        assert_eq!(cfg.train.seed, 7);
        assert_eq!(cfg.train.loss_mode, LossMode::DiceOnly);
        assert_eq!(cfg.synth.count, 4);
    }

    #[test]
    fn unknown_key_names_line() {
        let err = RunConfig::parse("seed=1\n\nmodel.depth=3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
        assert!(msg.contains("model.depth"), "{msg}");
    }

    #[test]
    fn bad_value_and_missing_equals() {
        assert!(RunConfig::parse("batch_size=eight").unwrap_err().to_string().contains("line 1"));
        assert!(RunConfig::parse("seed 4").is_err());
        assert!(RunConfig::parse("model.dense_block_layers=1,2,3").is_err());
    }

    #[test]
    fn invalid_combination_is_rejected() {
        assert!(RunConfig::parse("batch_size=8\ntrain_samples_per_fold=4").is_err());
    }

    #[test]
    fn desk_train_config_round_trips() {
        let cfg = TrainConfig { model: AvNetConfig::desk(), lr: 3.5e-4, seed: u64::MAX, ..TrainConfig::default() };
        assert_eq!(TrainConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
    }
}
