//! Single-fold training and k-fold cross-validation.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::archive::WeightArchive;
use crate::autodiff::Graph;
use crate::data::{augment, kfold_split, AugmentSpec, FoldPlan, Sample};
use crate::error::{shape_err, Error, Result};
use crate::losses::{training_loss, LossConfig, LossMode};
use crate::metrics::{aggregate_report, confusion, per_class_metrics, ClassMetrics, ConfusionCounts, FoldReport};
use crate::nn::{AvNet, AvNetConfig};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::rng::{self, seeded, stream};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub model: AvNetConfig,
    pub loss: LossConfig,
    pub lr: f64,
    pub batch_size: usize,
    /// Augmented draws consumed per fold; one pass, no epochs.
    pub train_samples_per_fold: usize,
    pub k_folds: usize,
    pub seed: u64,
    pub augment: AugmentSpec,
    pub loss_mode: LossMode,
    /// Evaluate on the held-out samples every this many steps.
    pub eval_every: usize,
    pub checkpoint_dir: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: AvNetConfig::canonical(),
            loss: LossConfig::default(),
            lr: 1e-4,
            batch_size: 8,
            train_samples_per_fold: 3000,
            k_folds: 5,
            seed: 42,
            augment: AugmentSpec::default(),
            loss_mode: LossMode::Compound,
            eval_every: 50,
            checkpoint_dir: String::from("checkpoints"),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        self.augment.validate()?;
        let err = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return err("batch_size must be >= 1".into());
        }
        if self.train_samples_per_fold < self.batch_size {
            return err(format!(
                "train_samples_per_fold {} is smaller than batch_size {}",
                self.train_samples_per_fold, self.batch_size
            ));
        }
        if self.k_folds < 2 {
            return err(format!("k_folds {} must be >= 2", self.k_folds));
        }
        if self.eval_every == 0 {
            return err("eval_every must be >= 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return err(format!("lr {} must be a positive number", self.lr));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, ..AdamConfig::default() }
    }

    pub fn steps_per_fold(&self) -> usize {
        self.train_samples_per_fold.div_ceil(self.batch_size)
    }
}

/// One augmented training draw: which original it transforms and the seed
/// of its transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Draw {
    pub source: usize,
    pub seed: u64,
}

/// Minibatches of draws for one fold. Draw `d` cycles through the `n_train`
/// originals; the last batch may be short.
pub fn batch_plan(cfg: &TrainConfig, n_train: usize) -> Vec<Vec<Draw>> {
    let draws: Vec<Draw> = (0..cfg.train_samples_per_fold)
        .map(|d| Draw { source: d % n_train, seed: rng::derive(cfg.seed, stream::AUGMENT, d as u64) })
        .collect();
    draws.chunks(cfg.batch_size).map(<[Draw]>::to_vec).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    /// 1-based optimizer step.
    pub step: usize,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub step: usize,
    pub counts: ConfusionCounts,
    pub metrics: [ClassMetrics; 3],
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub steps: Vec<StepRecord>,
    pub evals: Vec<EvalRecord>,
}

impl TrainHistory {
    pub fn losses(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.loss).collect()
    }
}

/// Progress notifications from [`train_fold_with`].
#[derive(Clone, Debug)]
pub enum TrainEvent<'a> {
    Step { step: usize, total: usize, loss: f64 },
    Eval(&'a EvalRecord),
}

fn draw_sample(cfg: &TrainConfig, originals: &[Sample], draw: Draw) -> Sample {
    let src = &originals[draw.source];
    if cfg.augment == AugmentSpec::identity() {
        src.clone()
    } else {
        augment(src, &cfg.augment, &mut seeded(draw.seed))
    }
}

fn stack_batch(samples: &[Sample]) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let inputs: Vec<&Tensor<f32>> = samples.iter().map(|s| &s.input).collect();
    let labels: Vec<&Tensor<f32>> = samples.iter().map(|s| &s.label).collect();
    Ok((Tensor::stack(&inputs)?, Tensor::stack(&labels)?))
}

fn check_sizes(cfg: &TrainConfig, samples: &[Sample]) -> Result<()> {
    let s = cfg.model.input_size;
    for sample in samples {
        if sample.height() != s || sample.width() != s || sample.input.shape()[0] != cfg.model.input_channels {
            return Err(shape_err(
                "train_fold",
                format!("sample {} is {:?}, model expects {}x{s}x{s}", sample.id, sample.input.shape(), cfg.model.input_channels),
            ));
        }
    }
    Ok(())
}

/// Pooled confusion over `samples`, one eval-mode forward each.
pub fn evaluate(model: &AvNet<f32>, samples: &[Sample]) -> Result<ConfusionCounts> {
    let mut total = ConfusionCounts::default();
    for s in samples {
        let s_dim = model.config().input_size;
        let x = s.input.clone().reshape(&[1, s.input.shape()[0], s_dim, s_dim])?;
        let pred = model.predict(&x)?;
        let pred = pred.batch_item(0)?;
        total.merge(&confusion(&pred, &s.label)?);
    }
    Ok(total)
}

fn eval_record(model: &AvNet<f32>, test: &[Sample], step: usize) -> Result<EvalRecord> {
    let counts = evaluate(model, test)?;
    Ok(EvalRecord { step, counts, metrics: per_class_metrics(&counts) })
}

pub fn train_fold(cfg: &TrainConfig, train: &[Sample], test: &[Sample]) -> Result<(WeightArchive, TrainHistory)> {
    train_fold_with(cfg, train, test, &mut |_| {})
}

/// Builds the model from `(cfg.model, cfg.seed)`, runs
/// `ceil(train_samples_per_fold / batch_size)` Adam steps and evaluates on
/// `test` every `eval_every` steps and after the last one.
pub fn train_fold_with(
    cfg: &TrainConfig,
    train: &[Sample],
    test: &[Sample],
    observer: &mut dyn FnMut(TrainEvent<'_>),
) -> Result<(WeightArchive, TrainHistory)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    check_sizes(cfg, train)?;
    check_sizes(cfg, test)?;
    let mut model = AvNet::<f32>::build(cfg.model.clone(), cfg.seed)?;
    let mut adam = AdamState::new(model.store(), cfg.adam());
    let plan = batch_plan(cfg, train.len());
    let total = plan.len();
    let mut history = TrainHistory::default();
    for (i, batch) in plan.iter().enumerate() {
        let step = i + 1;
        let samples: Vec<Sample> = batch.iter().map(|&d| draw_sample(cfg, train, d)).collect();
        let (input, label) = stack_batch(&samples)?;
        let mut g = Graph::new();
        let pass = model.train_pass(&mut g, &input)?;
        let target = g.constant(label);
        let loss = training_loss(&mut g, pass.output, target, &cfg.loss, cfg.loss_mode)?;
        let value = g.value(loss).item() as f64;
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        g.backward(loss)?;
        model.absorb(&mut g, pass);
        adam_step(model.store_mut(), &mut adam)?;
        history.steps.push(StepRecord { step, loss: value });
        observer(TrainEvent::Step { step, total, loss: value });
        if !test.is_empty() && (step % cfg.eval_every == 0 || step == total) {
            let rec = eval_record(&model, test, step)?;
            observer(TrainEvent::Eval(&rec));
            history.evals.push(rec);
        }
    }
    Ok((WeightArchive::from_model(&model, cfg), history))
}

/// Seed of the model trained for `fold`. Index 0 of the fold stream is the
/// split shuffle.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    rng::derive(seed, stream::FOLD, fold as u64 + 1)
}

fn fold_config(cfg: &TrainConfig, fold: usize) -> TrainConfig {
    TrainConfig { seed: fold_seed(cfg.seed, fold), ..cfg.clone() }
}

fn pick(dataset: &[Sample], indices: &[usize]) -> Vec<Sample> {
    indices.iter().map(|&i| dataset[i].clone()).collect()
}

#[derive(Clone, Debug)]
pub struct FoldOutcome {
    pub archive: WeightArchive,
    pub history: TrainHistory,
    pub test_ids: Vec<String>,
    /// Metrics of the final model on the held-out fold.
    pub metrics: [ClassMetrics; 3],
}

#[derive(Clone, Debug)]
pub struct CvOutcome {
    pub plan: FoldPlan,
    pub folds: Vec<FoldOutcome>,
    pub report: FoldReport,
}

pub fn run_cv(cfg: &TrainConfig, dataset: &[Sample]) -> Result<CvOutcome> {
    run_cv_with(cfg, dataset, &mut |_, _| {})
}

/// Splits `dataset` into `k_folds`, trains a freshly initialised model per
/// fold on the other folds and reports the held-out metrics.
pub fn run_cv_with(
    cfg: &TrainConfig,
    dataset: &[Sample],
    observer: &mut dyn FnMut(usize, TrainEvent<'_>),
) -> Result<CvOutcome> {
    cfg.validate()?;
    let plan = kfold_split(dataset.len(), cfg.k_folds, cfg.seed)?;
    let mut folds = Vec::with_capacity(cfg.k_folds);
    for fold in 0..cfg.k_folds {
        let train = pick(dataset, &plan.train_indices(fold));
        let test = pick(dataset, &plan.test_indices(fold));
        let (archive, history) = train_fold_with(&fold_config(cfg, fold), &train, &test, &mut |e| observer(fold, e))?;
        let metrics = history.evals.last().map(|e| e.metrics).expect("test fold is never empty");
        folds.push(FoldOutcome {
            archive,
            history,
            test_ids: test.iter().map(|s| s.id.clone()).collect(),
            metrics,
        });
    }
    let per_fold: Vec<_> = folds.iter().map(|f| f.metrics).collect();
    let report = aggregate_report(&per_fold)?;
    Ok(CvOutcome { plan, folds, report })
}

/// What a cross-validation run would do, without building or training.
#[derive(Clone, Debug, PartialEq)]
pub struct DryRun {
    pub plan: FoldPlan,
    pub test_sizes: Vec<usize>,
    pub steps_per_fold: Vec<usize>,
    pub draws_per_fold: Vec<usize>,
    /// Dataset index of every training draw, per fold, in consumption order.
    pub draw_sources: Vec<Vec<usize>>,
}

pub fn dry_run_cv(cfg: &TrainConfig, n: usize) -> Result<DryRun> {
    cfg.validate()?;
    let plan = kfold_split(n, cfg.k_folds, cfg.seed)?;
    let mut out = DryRun {
        test_sizes: Vec::new(),
        steps_per_fold: Vec::new(),
        draws_per_fold: Vec::new(),
        draw_sources: Vec::new(),
        plan: plan.clone(),
    };
    for fold in 0..cfg.k_folds {
        let train = plan.train_indices(fold);
        let batches = batch_plan(&fold_config(cfg, fold), train.len());
        out.test_sizes.push(plan.test_indices(fold).len());
        out.steps_per_fold.push(batches.len());
        out.draws_per_fold.push(batches.iter().map(Vec::len).sum());
        out.draw_sources.push(batches.iter().flatten().map(|d| train[d.source]).collect());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SynthSpec};

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            model: AvNetConfig::tiny(),
            batch_size: 2,
            train_samples_per_fold: 6,
            k_folds: 2,
            eval_every: 2,
            augment: AugmentSpec::default(),
            ..TrainConfig::default()
        }
    }

    fn tiny_data(n: usize) -> Vec<Sample> {
        synth_generate(&SynthSpec { count: n, size: 32, ..SynthSpec::default() }, 5).unwrap()
    }

    #[test]
    fn default_protocol_step_count() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.steps_per_fold(), 375);
        let plan = batch_plan(&cfg, 32);
        assert_eq!(plan.len(), 375);
        assert!(plan.iter().all(|b| b.len() == 8));
    }

    #[test]
    fn last_partial_batch_is_kept() {
        let cfg = TrainConfig { train_samples_per_fold: 10, batch_size: 4, ..TrainConfig::default() };
        let sizes: Vec<usize> = batch_plan(&cfg, 3).iter().map(Vec::len).collect();
        assert_eq!(sizes, [4, 4, 2]);
        let sources: Vec<usize> = batch_plan(&cfg, 3).iter().flatten().map(|d| d.source).collect();
        assert_eq!(sources, [0, 1, 2, 0, 1, 2, 0, 1, 2, 0]);
    }

    #[test]
    fn train_fold_is_deterministic_and_evaluates() {
        let data = tiny_data(3);
        let cfg = tiny_cfg();
        let (a1, h1) = train_fold(&cfg, &data[..2], &data[2..]).unwrap();
        let (a2, h2) = train_fold(&cfg, &data[..2], &data[2..]).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(a1.store, a2.store);
        assert_eq!(h1.steps.len(), 3);
        let eval_steps: Vec<usize> = h1.evals.iter().map(|e| e.step).collect();
        assert_eq!(eval_steps, [2, 3]);
        assert!(h1.losses().iter().all(|l| l.is_finite()));
    }

    #[test]
    fn size_mismatch_is_rejected() {
        let data = tiny_data(2);
        let cfg = TrainConfig { model: AvNetConfig::desk(), ..tiny_cfg() };
        assert!(matches!(train_fold(&cfg, &data, &[]), Err(Error::ShapeMismatch { .. })));
        assert!(train_fold(&tiny_cfg(), &[], &data).is_err());
    }

    #[test]
    fn evaluation_does_not_mutate() {
        let data = tiny_data(2);
        let model = AvNet::<f32>::build(AvNetConfig::tiny(), 1).unwrap();
        let before = model.store().clone();
        let a = evaluate(&model, &data).unwrap();
        let b = evaluate(&model, &data).unwrap();
        assert_eq!(a, b);
        assert_eq!(model.store(), &before);
    }

    #[test]
    fn degenerate_two_fold_cv() {
        let data = tiny_data(2);
        let out = run_cv(&tiny_cfg(), &data).unwrap();
        assert_eq!(out.folds.len(), 2);
        for f in &out.folds {
            assert_eq!(f.test_ids.len(), 1);
        }
        assert_ne!(out.folds[0].archive.store, out.folds[1].archive.store);
    }

    #[test]
    fn draws_never_come_from_own_test_fold() {
        let cfg = TrainConfig { train_samples_per_fold: 100, ..TrainConfig::default() };
        let dry = dry_run_cv(&cfg, 40).unwrap();
        for fold in 0..5 {
            let test = dry.plan.test_indices(fold);
            assert!(dry.draw_sources[fold].iter().all(|i| !test.contains(i)));
        }
    }
}
