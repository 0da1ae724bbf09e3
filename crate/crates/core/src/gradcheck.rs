//! Central finite-difference checks of every differentiable op, both losses
//! and a tiny end-to-end network, all in `f64`.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::autodiff::{Graph, OpKind, Var};
use crate::data::{synth_sample, SynthSpec, NUM_CLASSES};
use crate::error::Result;
use crate::kernels::Mode;
use crate::losses::{compound_loss, dice_loss, focal_loss, LossConfig};
use crate::nn::{AvNet, AvNetConfig, ParamId};
use crate::rng::{self, seeded, stream, Rng};
use crate::tensor::Tensor;

pub const OP_STEP: f64 = 1e-4;
pub const OP_TOLERANCE: f64 = 1e-4;
pub const BN_STEP: f64 = 1e-3;
pub const BN_TOLERANCE: f64 = 1e-3;
pub const MODEL_STEP: f64 = 1e-5;
pub const MODEL_TOLERANCE: f64 = 1e-3;
/// Gradients smaller than this are compared absolutely.
pub const REL_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
    /// Number of gradient entries compared.
    pub evaluated: usize,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

#[derive(Clone, Debug)]
pub struct GradcheckOptions {
    pub seed: u64,
    /// Corrupts this op's backward rule, for negative controls.
    pub fault: Option<OpKind>,
    /// Parameter entries compared in the end-to-end check.
    pub model_samples: usize,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self { seed: 42, fault: None, model_samples: 128 }
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

type Build = Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var>>;

struct Case {
    name: &'static str,
    inputs: Vec<(Tensor<f64>, bool)>,
    build: Build,
    step: f64,
    tolerance: f64,
}

fn eval(build: &Build, inputs: &[(Tensor<f64>, bool)], fault: Option<OpKind>) -> Result<(f64, Vec<Option<Tensor<f64>>>)> {
    let mut g = Graph::new();
    g.inject_backward_fault(fault);
    let vars: Vec<Var> = inputs.iter().map(|(t, rg)| g.leaf(t.clone(), *rg)).collect();
    let loss = build(&mut g, &vars)?;
    let value = g.value(loss).item();
    g.backward(loss)?;
    let grads = vars.iter().map(|&v| g.take_grad(v)).collect();
    Ok((value, grads))
}

fn forward_only(build: &Build, inputs: &[(Tensor<f64>, bool)]) -> Result<f64> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|(t, _)| g.constant(t.clone())).collect();
    let loss = build(&mut g, &vars)?;
    Ok(g.value(loss).item())
}

fn run_case(case: &Case, fault: Option<OpKind>) -> Result<CheckResult> {
    let (_, grads) = eval(&case.build, &case.inputs, fault)?;
    let mut worst = 0.0f64;
    let mut evaluated = 0;
    let mut inputs = case.inputs.clone();
    for (i, grad) in grads.iter().enumerate() {
        if !case.inputs[i].1 {
            continue;
        }
        let zeros = Tensor::zeros(case.inputs[i].0.shape());
        let grad = grad.as_ref().unwrap_or(&zeros);
        for j in 0..grad.numel() {
            let x = case.inputs[i].0.data()[j];
            inputs[i].0.data_mut()[j] = x + case.step;
            let plus = forward_only(&case.build, &inputs)?;
            inputs[i].0.data_mut()[j] = x - case.step;
            let minus = forward_only(&case.build, &inputs)?;
            inputs[i].0.data_mut()[j] = x;
            let numeric = (plus - minus) / (2.0 * case.step);
            let err = relative_error(grad.data()[j], numeric);
            worst = if err.is_nan() { f64::INFINITY } else { worst.max(err) };
            evaluated += 1;
        }
    }
    Ok(CheckResult { name: case.name.to_string(), max_rel_error: worst, tolerance: case.tolerance, evaluated })
}

fn uniform(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// Uniform in `[-2, 2]` but at least `gap` away from each of `kinks`.
fn away_from(rng: &mut Rng, shape: &[usize], kinks: &[f64], gap: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| loop {
        let v: f64 = rng.random_range(-2.0..2.0);
        if kinks.iter().all(|k| (v - k).abs() >= gap) {
            break v;
        }
    })
}

fn one_hot_target(rng: &mut Rng, [n, c, h, w]: [usize; 4]) -> Tensor<f64> {
    let mut t = Tensor::zeros(&[n, c, h, w]);
    let hw = h * w;
    for b in 0..n {
        for px in 0..hw {
            let k = rng.random_range(0..c);
            t.data_mut()[(b * c + k) * hw + px] = 1.0;
        }
    }
    t
}

/// Reduces `y` to a scalar through fixed random weights so every output
/// element carries a distinct upstream gradient.
fn project(g: &mut Graph<f64>, y: Var, seed: u64) -> Result<Var> {
    let mut rng = seeded(seed);
    let w = uniform(&mut rng, g.value(y).shape(), -1.0, 1.0);
    let w = g.constant(w);
    let p = g.mul(y, w)?;
    g.sum_all(p)
}

fn op_cases(seed: u64) -> Vec<Case> {
    let mut r = seeded(rng::derive(seed, stream::GRADCHECK, 0));
    let ps = rng::derive(seed, stream::GRADCHECK, 1);
    let case = |name, inputs, build: Build| Case { name, inputs, build, step: OP_STEP, tolerance: OP_TOLERANCE };
    let mut cases = vec![
        case(
            "conv2d",
            vec![
                (uniform(&mut r, &[2, 3, 5, 5], -2.0, 2.0), true),
                (uniform(&mut r, &[4, 3, 3, 3], -1.0, 1.0), true),
                (uniform(&mut r, &[4], -1.0, 1.0), true),
            ],
            Box::new(move |g: &mut Graph<f64>, v: &[Var]| {
                let y = g.conv2d(v[0], v[1], Some(v[2]), 1, 1)?;
                project(g, y, ps)
            }),
        ),
        case(
            "conv2d/stride2",
            vec![
                (uniform(&mut r, &[1, 2, 7, 7], -2.0, 2.0), true),
                (uniform(&mut r, &[3, 2, 5, 5], -1.0, 1.0), true),
            ],
            Box::new(move |g: &mut Graph<f64>, v: &[Var]| {
                let y = g.conv2d(v[0], v[1], None, 2, 2)?;
                project(g, y, ps)
            }),
        ),
        case(
            "conv2d/pointwise",
            vec![
                (uniform(&mut r, &[2, 3, 3, 3], -2.0, 2.0), true),
                (uniform(&mut r, &[2, 3, 1, 1], -1.0, 1.0), true),
            ],
            Box::new(move |g: &mut Graph<f64>, v: &[Var]| {
                let y = g.conv2d(v[0], v[1], None, 1, 0)?;
                project(g, y, ps)
            }),
        ),
        case(
            "relu",
            vec![(away_from(&mut r, &[2, 2, 3, 3], &[0.0], 0.05), true)],
            Box::new(move |g: &mut Graph<f64>, v: &[Var]| {
                let y = g.relu(v[0])?;
                project(g, y, ps)
            }),
        ),
        case(
            "softmax_channels",
            vec![(uniform(&mut r, &[2, 3, 2, 2], -2.0, 2.0), true)],
            Box::new(move |g: &mut Graph<f64>, v: &[Var]| {
                let y = g.softmax_channels(v[0])?;
                project(g, y, ps)
            }),
        ),
        case(
            "avg_pool2d",
            vec![(uniform(&mut r, &[1, 2, 4, 6], -2.0, 2.0), true)],
            Box::new(move |g: &mut Graph<f64>, v: &[Var]| {
                let y = g.avg_pool2d(v[0])?;
                project(g, y, ps)
            }),
        ),
        case(
            "upsample_nearest2x",
            vec![(uniform(&mut r, &[1, 2, 3, 2], -2.0, 2.0), true)],
            Box::new(move |g: &mut Graph<f64>, v: &[Var]| {
                let y = g.upsample_nearest2x(v[0])?;
                project(g, y, ps)
            }),
        ),
        case(
            "concat_channels",
            vec![
                (uniform(&mut r, &[2, 2, 2, 2], -2.0, 2.0), true),
                (uniform(&mut r, &[2, 3, 2, 2], -2.0, 2.0), true),
            ],
            Box::new(move |g: &mut Graph<f64>, v: &[Var]| {
                let y = g.concat_channels(v[0], v[1])?;
                project(g, y, ps)
            }),
        ),
    ];
    let shape = [2, 3, 2, 2];
    let binary: [(&'static str, fn(&mut Graph<f64>, Var, Var) -> Result<Var>); 4] = [
        ("add", Graph::add),
        ("sub", Graph::sub),
        ("mul", Graph::mul),
        ("div", Graph::div),
    ];
    for (name, f) in binary {
        let b = if name == "div" {
            Tensor::from_fn(&shape, |_| {
                let m: f64 = r.random_range(0.5..2.0);
                if r.random_bool(0.5) { m } else { -m }
            })
        } else {
            uniform(&mut r, &shape, -2.0, 2.0)
        };
        cases.push(case(
            name,
            vec![(uniform(&mut r, &shape, -2.0, 2.0), true), (b, true)],
            Box::new(move |g: &mut Graph<f64>, v: &[Var]| {
                let y = f(g, v[0], v[1])?;
                project(g, y, ps)
            }),
        ));
    }
    let unary: [(&'static str, f64, f64, fn(&mut Graph<f64>, Var) -> Result<Var>); 7] = [
        ("log", 0.2, 2.0, Graph::log),
        ("pow_scalar", 0.2, 2.0, |g, x| g.pow_scalar(x, 2.0)),
        ("pow_scalar/fractional", 0.2, 2.0, |g, x| g.pow_scalar(x, 1.5)),
        ("scale", -2.0, 2.0, |g, x| g.scale(x, -0.75)),
        ("add_scalar", -2.0, 2.0, |g, x| g.add_scalar(x, 0.3)),
        ("sum_channels", -2.0, 2.0, Graph::sum_channels),
        ("one_minus", -2.0, 2.0, Graph::one_minus),
    ];
    for (name, lo, hi, f) in unary {
        cases.push(case(
            name,
            vec![(uniform(&mut r, &shape, lo, hi), true)],
            Box::new(move |g: &mut Graph<f64>, v: &[Var]| {
                let y = f(g, v[0])?;
                project(g, y, ps)
            }),
        ));
    }
    cases.push(case(
        "sum_all",
        vec![(uniform(&mut r, &shape, -2.0, 2.0), true)],
        Box::new(|g: &mut Graph<f64>, v: &[Var]| {
            let s = g.sum_all(v[0])?;
            g.mul(s, s)
        }),
    ));
    cases.push(case(
        "clamp",
        vec![(away_from(&mut r, &shape, &[-1.0, 1.0], 0.05), true)],
        Box::new(move |g: &mut Graph<f64>, v: &[Var]| {
            let y = g.clamp(v[0], -1.0, 1.0)?;
            project(g, y, ps)
        }),
    ));
    for (name, mode) in [("batch_norm2d", Mode::Train), ("batch_norm2d/eval", Mode::Eval)] {
        let rm = uniform(&mut r, &[3], -0.5, 0.5);
        let rv = uniform(&mut r, &[3], 0.5, 1.5);
        cases.push(Case {
            name,
            inputs: vec![
                (uniform(&mut r, &[3, 3, 2, 3], -2.0, 2.0), true),
                (uniform(&mut r, &[3], 0.5, 1.5), true),
                (uniform(&mut r, &[3], -0.5, 0.5), true),
            ],
            build: Box::new(move |g: &mut Graph<f64>, v: &[Var]| {
                let y = g.batch_norm2d(v[0], v[1], v[2], &rm, &rv, mode)?.output;
                project(g, y, ps)
            }),
            step: BN_STEP,
            tolerance: BN_TOLERANCE,
        });
    }
    let dims = [2, NUM_CLASSES, 3, 3];
    let losses: [(&'static str, fn(&mut Graph<f64>, Var, Var, &LossConfig) -> Result<Var>); 3] =
        [("dice_loss", dice_loss), ("focal_loss", focal_loss), ("compound_loss", compound_loss)];
    for (name, f) in losses {
        let pred = uniform(&mut r, &dims, 0.1, 0.9);
        let target = one_hot_target(&mut r, dims);
        cases.push(case(
            name,
            vec![(pred, true), (target, false)],
            Box::new(move |g: &mut Graph<f64>, v: &[Var]| f(g, v[0], v[1], &LossConfig::default())),
        ));
    }
    cases
}

/// Compound-loss gradients of a tiny network against finite differences on
/// `samples` parameter entries, spread round-robin over the trainable
/// tensors.
pub fn check_model(seed: u64, samples: usize, fault: Option<OpKind>) -> Result<CheckResult> {
    let model = AvNet::<f64>::build(AvNetConfig::tiny(), rng::derive(seed, stream::GRADCHECK, 2))?;
    let spec = SynthSpec { size: model.config().input_size, ..SynthSpec::default() };
    let data_seed = rng::derive(seed, stream::GRADCHECK, 3);
    let batch: Vec<_> = (0..2).map(|i| synth_sample(&spec, data_seed, i)).collect();
    let input = Tensor::stack(&[&batch[0].input, &batch[1].input])?.cast::<f64>();
    let label = Tensor::stack(&[&batch[0].label, &batch[1].label])?.cast::<f64>();
    let cfg = LossConfig::default();

    let loss_of = |m: &AvNet<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let pass = m.train_pass(&mut g, &input)?;
        let t = g.constant(label.clone());
        let l = compound_loss(&mut g, pass.output, t, &cfg)?;
        Ok(g.value(l).item())
    };

    let mut analytic = model.clone();
    let mut g = Graph::new();
    g.inject_backward_fault(fault);
    let pass = analytic.train_pass(&mut g, &input)?;
    let t = g.constant(label.clone());
    let l = compound_loss(&mut g, pass.output, t, &cfg)?;
    g.backward(l)?;
    analytic.absorb(&mut g, pass);

    let trainable: Vec<ParamId> = model.store().trainable().map(|(id, _)| id).collect();
    let mut r = seeded(rng::derive(seed, stream::GRADCHECK, 4));
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for k in 0..samples {
        let id = trainable[k % trainable.len()];
        let n = model.store().value(id).numel();
        let j = r.random_range(0..n);
        let a = analytic.store().entry(id).grad.as_ref().map_or(0.0, |t| t.data()[j]);
        let x = model.store().value(id).data()[j];
        probe.store_mut().value_mut(id).data_mut()[j] = x + MODEL_STEP;
        let plus = loss_of(&probe)?;
        probe.store_mut().value_mut(id).data_mut()[j] = x - MODEL_STEP;
        let minus = loss_of(&probe)?;
        probe.store_mut().value_mut(id).data_mut()[j] = x;
        let err = relative_error(a, (plus - minus) / (2.0 * MODEL_STEP));
        worst = if err.is_nan() { f64::INFINITY } else { worst.max(err) };
    }
    Ok(CheckResult {
        name: "avnet_tiny/compound_loss".to_string(),
        max_rel_error: worst,
        tolerance: MODEL_TOLERANCE,
        evaluated: samples,
    })
}

/// Every per-op and loss check, then the end-to-end model check.
pub fn run_suite(opts: &GradcheckOptions) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for case in op_cases(opts.seed) {
        out.push(run_case(&case, opts.fault)?);
    }
    out.push(check_model(opts.seed, opts.model_samples, opts.fault)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_op_passes() {
        for case in op_cases(7) {
            let r = run_case(&case, None).unwrap();
            assert!(r.passed(), "{r:?}");
            assert!(r.evaluated > 0);
        }
    }

    #[test]
    fn corrupted_rule_is_caught() {
        for kind in [OpKind::Relu, OpKind::Conv2d, OpKind::BatchNorm, OpKind::Log] {
            let failing: Vec<String> = op_cases(7)
                .iter()
                .map(|c| run_case(c, Some(kind)).unwrap())
                .filter(|r| !r.passed())
                .map(|r| r.name)
                .collect();
            assert!(failing.iter().any(|n| n.starts_with(kind.name())), "{kind:?}: {failing:?}");
        }
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((relative_error(1e-9, 0.0) - 1e-6).abs() < 1e-18);
    }
}
