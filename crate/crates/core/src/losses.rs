//! Dice, focal and compound segmentation losses over per-pixel class
//! probabilities (`N×L×H×W`) and one-hot targets of the same shape.

use alloc::format;

use crate::autodiff::{Graph, Var};
use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    /// Weight of the positive (g = 1) focal term.
    pub alpha: f64,
    /// Focusing exponent.
    pub gamma: f64,
    /// Added to dice numerator and denominator.
    pub dice_smooth: f64,
    /// Probabilities are clamped to `[prob_clamp, 1 - prob_clamp]` before logs.
    pub prob_clamp: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            gamma: 2.0,
            dice_smooth: 1e-6,
            prob_clamp: 1e-7,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("loss.alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::Config(format!("loss.gamma {} must be >= 0", self.gamma)));
        }
        if !(self.dice_smooth > 0.0) {
            return Err(Error::Config(format!("loss.dice_smooth {} must be > 0", self.dice_smooth)));
        }
        if !(self.prob_clamp > 0.0 && self.prob_clamp < 0.5) {
            return Err(Error::Config(format!("loss.prob_clamp {} outside (0, 0.5)", self.prob_clamp)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossMode {
    Compound,
    DiceOnly,
}

fn check_pair<T: Scalar>(g: &Graph<T>, pred: Var, target: Var, op: &'static str) -> Result<[usize; 4]> {
    let (p, t) = (g.value(pred), g.value(target));
    let dims = p.dims4(op)?;
    if p.shape() != t.shape() {
        return Err(shape_err(op, format!("pred {:?} vs target {:?}", p.shape(), t.shape())));
    }
    Ok(dims)
}

/// With two or more classes every pixel's target must sum to one. A single
/// class is a plain binary mask and only needs values in `[0, 1]`.
fn check_one_hot<T: Scalar>(g: &Graph<T>, target: Var, [n, c, h, w]: [usize; 4]) -> Result<()> {
    let data = g.value(target).data();
    let hw = h * w;
    for b in 0..n {
        for px in 0..hw {
            let vals = (0..c).map(|ch| data[(b * c + ch) * hw + px].as_f64());
            let pixel = b * hw + px;
            if c == 1 {
                let v = vals.clone().next().unwrap_or(0.0);
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::NotOneHot { pixel, sum: v });
                }
            } else {
                let sum: f64 = vals.sum();
                if (sum - 1.0).abs() > 1e-6 {
                    return Err(Error::NotOneHot { pixel, sum });
                }
            }
        }
    }
    Ok(())
}

/// Mean over classes of `1 - (2 Σ p g + s) / (Σ p² + Σ g² + s)`, sums taken
/// over every pixel of the batch.
pub fn dice_loss<T: Scalar>(g: &mut Graph<T>, pred: Var, target: Var, cfg: &LossConfig) -> Result<Var> {
    let dims = check_pair(g, pred, target, "dice_loss")?;
    check_one_hot(g, target, dims)?;
    let s = T::lit(cfg.dice_smooth);
    let pg = g.mul(pred, target)?;
    let pp = g.mul(pred, pred)?;
    let gg = g.mul(target, target)?;
    let inter = g.sum_channels(pg)?;
    let pred_sq = g.sum_channels(pp)?;
    let target_sq = g.sum_channels(gg)?;
    let twice = g.scale(inter, T::lit(2.0))?;
    let num = g.add_scalar(twice, s)?;
    let den_raw = g.add(pred_sq, target_sq)?;
    let den = g.add_scalar(den_raw, s)?;
    let ratio = g.div(num, den)?;
    let per_class = g.one_minus(ratio)?;
    let total = g.sum_all(per_class)?;
    g.scale(total, T::one() / T::lit(dims[1] as f64))
}

/// `-Σ [α (1-p)^γ g ln p + (1-α) p^γ (1-g) ln(1-p)]` over every pixel and
/// class, with `p` clamped away from 0 and 1. Not normalised by pixel count.
pub fn focal_loss<T: Scalar>(g: &mut Graph<T>, pred: Var, target: Var, cfg: &LossConfig) -> Result<Var> {
    check_pair(g, pred, target, "focal_loss")?;
    let eps = T::lit(cfg.prob_clamp);
    let gamma = T::lit(cfg.gamma);
    let p = g.clamp(pred, eps, T::one() - eps)?;
    let q = g.one_minus(p)?;
    let not_target = g.one_minus(target)?;

    let q_pow = g.pow_scalar(q, gamma)?;
    let ln_p = g.log(p)?;
    let pos = g.mul(q_pow, target)?;
    let pos = g.mul(pos, ln_p)?;
    let pos = g.scale(pos, T::lit(cfg.alpha))?;

    let p_pow = g.pow_scalar(p, gamma)?;
    let ln_q = g.log(q)?;
    let neg = g.mul(p_pow, not_target)?;
    let neg = g.mul(neg, ln_q)?;
    let neg = g.scale(neg, T::lit(1.0 - cfg.alpha))?;

    let both = g.add(pos, neg)?;
    let total = g.sum_all(both)?;
    g.scale(total, -T::one())
}

pub fn compound_loss<T: Scalar>(g: &mut Graph<T>, pred: Var, target: Var, cfg: &LossConfig) -> Result<Var> {
    let dice = dice_loss(g, pred, target, cfg)?;
    let focal = focal_loss(g, pred, target, cfg)?;
    g.add(dice, focal)
}

pub fn training_loss<T: Scalar>(
    g: &mut Graph<T>,
    pred: Var,
    target: Var,
    cfg: &LossConfig,
    mode: LossMode,
) -> Result<Var> {
    match mode {
        LossMode::Compound => compound_loss(g, pred, target, cfg),
        LossMode::DiceOnly => dice_loss(g, pred, target, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn eval(
        f: fn(&mut Graph<f64>, Var, Var, &LossConfig) -> Result<Var>,
        shape: &[usize],
        pred: &[f64],
        target: &[f64],
        cfg: &LossConfig,
    ) -> Result<f64> {
        let mut g = Graph::new();
        let p = g.constant(Tensor::from_f64(shape, pred).unwrap());
        let t = g.constant(Tensor::from_f64(shape, target).unwrap());
        let l = f(&mut g, p, t, cfg)?;
        Ok(g.value(l).item())
    }

    #[test]
    fn focal_single_pixel_values() {
        let cfg = LossConfig::default();
        let pos = eval(focal_loss, &[1, 1, 1, 1], &[0.5], &[1.0], &cfg).unwrap();
        assert!((pos - 0.0433217).abs() < 1e-6, "{pos}");
        let neg = eval(focal_loss, &[1, 1, 1, 1], &[0.5], &[0.0], &cfg).unwrap();
        assert!((neg - 0.1299650).abs() < 1e-6, "{neg}");
    }

    #[test]
    fn dice_half_prediction() {
        let cfg = LossConfig {
            dice_smooth: 1e-12,
            ..LossConfig::default()
        };
        let v = eval(dice_loss, &[1, 1, 1, 2], &[0.5, 0.5], &[1.0, 0.0], &cfg).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn perfect_and_disjoint_dice() {
        let cfg = LossConfig::default();
        let t = [1.0, 0.0, 0.0, 1.0];
        let perfect = eval(dice_loss, &[1, 2, 1, 2], &t, &t, &cfg).unwrap();
        assert!(perfect <= 1e-6);
        let swapped = [0.0, 1.0, 1.0, 0.0];
        let disjoint = eval(dice_loss, &[1, 2, 1, 2], &swapped, &t, &cfg).unwrap();
        assert!(disjoint > 1.0 - 1e-6);
    }

    #[test]
    fn perfect_focal_is_near_zero() {
        let cfg = LossConfig::default();
        let t = [1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        let v = eval(focal_loss, &[1, 3, 1, 2], &t, &t, &cfg).unwrap();
        let bound = 6.0 * cfg.alpha * cfg.prob_clamp.powi(2) * (1.0 - cfg.prob_clamp).ln().abs();
        assert!(v.abs() <= bound.max(1e-12), "{v}");
    }

    #[test]
    fn errors() {
        let cfg = LossConfig::default();
        let bad = eval(dice_loss, &[1, 2, 1, 1], &[0.5, 0.5], &[1.0, 1.0], &cfg);
        assert!(matches!(bad, Err(Error::NotOneHot { pixel: 0, .. })));
        let mut g = Graph::<f64>::new();
        let p = g.constant(Tensor::zeros(&[1, 3, 2, 2]));
        let t = g.constant(Tensor::zeros(&[1, 3, 2, 1]));
        assert!(matches!(focal_loss(&mut g, p, t, &cfg), Err(Error::ShapeMismatch { .. })));
        assert!(matches!(dice_loss(&mut g, p, t, &cfg), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn focal_decreases_with_confidence() {
        let cfg = LossConfig::default();
        let vals: alloc::vec::Vec<f64> = (1..=9)
            .map(|i| eval(focal_loss, &[1, 1, 1, 1], &[i as f64 / 10.0], &[1.0], &cfg).unwrap())
            .collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig::default().validate().is_ok());
        assert!(LossConfig { alpha: 1.5, ..Default::default() }.validate().is_err());
        assert!(LossConfig { prob_clamp: 0.5, ..Default::default() }.validate().is_err());
        assert!(LossConfig { dice_smooth: 0.0, ..Default::default() }.validate().is_err());
    }
}
