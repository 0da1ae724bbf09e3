//! Subcommands of the `avnet` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use avnet_core::config::{parse_loss_mode, RunConfig};
use avnet_core::data::{encode_label_rgb, synth_generate};
use avnet_core::gradcheck::{run_suite, GradcheckOptions};
use avnet_core::metrics::{aggregate_report, confusion, per_class_metrics};
use avnet_core::train::{dry_run_cv, run_cv_with, TrainEvent};
use avnet_core::OpKind;
use clap::{Args, Parser, Subcommand};

use crate::dataset::{load_dataset, load_input, read_archive, read_config, save_sample, write_archive};
use crate::error::{AppError, AppResult};
use crate::image_io::write_rgb;

#[derive(Debug, Parser)]
#[command(name = "avnet", version, about = "Artery-vein classification on enface OCT + OCTA images")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic OCT/OCTA dataset.
    Synth(SynthArgs),
    /// Cross-validate on a dataset directory.
    Train(TrainArgs),
    /// Write the predicted AV map of one image pair.
    Predict(PredictArgs),
    /// Score a trained model on a dataset directory.
    Eval(EvalArgs),
    /// Run the finite-difference gradient checks.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory; defaults to `checkpoint_dir` from the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub k_folds: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// `compound` or `dice_only`.
    #[arg(long)]
    pub loss_mode: Option<String>,
    /// Print the fold plan and step counts without training.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub oct: PathBuf,
    #[arg(long)]
    pub octa: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, required_unless_present = "pass_through")]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// Score the ground truth against itself instead of a model.
    #[arg(long)]
    pub pass_through: bool,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 128)]
    pub model_samples: usize,
    #[arg(long, hide = true)]
    pub corrupt_op: Option<String>,
}

pub fn run(cli: Cli, out: &mut dyn Write) -> AppResult<()> {
    match cli.command {
        Command::Synth(a) => synth(a, out),
        Command::Train(a) => train(a, out),
        Command::Predict(a) => predict(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Gradcheck(a) => gradcheck(a, out),
    }
}

fn write_out(out: &mut dyn Write, text: &str) -> AppResult<()> {
    out.write_all(text.as_bytes()).map_err(|e| AppError::io("<stdout>", e))
}

fn create_dir(dir: &Path) -> AppResult<()> {
    fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))
}

fn validated(cfg: RunConfig) -> AppResult<RunConfig> {
    cfg.validate().map_err(|e| match e {
        avnet_core::Error::Config(m) => AppError::Config(m),
        other => other.into(),
    })?;
    Ok(cfg)
}

fn synth(a: SynthArgs, out: &mut dyn Write) -> AppResult<()> {
    let mut cfg = read_config(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.train.seed = seed;
    }
    if let Some(count) = a.count {
        cfg.synth.count = count;
    }
    if let Some(size) = a.size {
        cfg.synth.size = size;
    }
    let cfg = validated(cfg)?;
    create_dir(&a.out)?;
    let samples = synth_generate(&cfg.synth, cfg.train.seed)?;
    for s in &samples {
        save_sample(&a.out, s)?;
    }
    write_out(out, &format!("wrote {} samples to {}\n", samples.len(), a.out.display()))
}

fn train(a: TrainArgs, out: &mut dyn Write) -> AppResult<()> {
    let mut cfg = read_config(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.train.seed = seed;
    }
    if let Some(k) = a.k_folds {
        cfg.train.k_folds = k;
    }
    if let Some(steps) = a.steps {
        cfg.train.train_samples_per_fold = steps * cfg.train.batch_size;
    }
    if let Some(mode) = &a.loss_mode {
        cfg.train.loss_mode =
            parse_loss_mode(mode).ok_or_else(|| AppError::Config(format!("unknown loss mode {mode:?}")))?;
    }
    let cfg = validated(cfg)?.train;
    let dataset = load_dataset(&a.data)?;
    if a.dry_run {
        let dry = dry_run_cv(&cfg, dataset.len())?;
        for fold in 0..cfg.k_folds {
            write_out(
                out,
                &format!(
                    "fold {}: test {} samples, {} draws, {} steps\n",
                    fold + 1,
                    dry.test_sizes[fold],
                    dry.draws_per_fold[fold],
                    dry.steps_per_fold[fold]
                ),
            )?;
        }
        return Ok(());
    }
    let dir = a.out.unwrap_or_else(|| PathBuf::from(&cfg.checkpoint_dir));
    create_dir(&dir)?;
    let log_every = cfg.eval_every;
    let mut log = |fold: usize, e: TrainEvent<'_>| match e {
        TrainEvent::Step { step, total, loss } if step % log_every == 0 || step == total => {
            eprintln!("fold {} step {step}/{total} loss {loss:.6}", fold + 1);
        }
        TrainEvent::Eval(r) => {
            let m = &r.metrics;
            let (art, vein) = (m[0], m[2]);
            eprintln!(
                "fold {} step {} held-out f1 artery {:.4} vein {:.4}",
                fold + 1,
                r.step,
                art.f1,
                vein.f1
            );
        }
        _ => {}
    };
    let outcome = run_cv_with(&cfg, &dataset, &mut log)?;
    for (i, fold) in outcome.folds.iter().enumerate() {
        write_archive(&dir.join(format!("fold{}.avnw", i + 1)), &fold.archive)?;
    }
    let csv = dir.join("report.csv");
    fs::write(&csv, outcome.report.to_csv()).map_err(|e| AppError::io(&csv, e))?;
    write_out(out, &outcome.report.to_table())
}

fn predict(a: PredictArgs, out: &mut dyn Write) -> AppResult<()> {
    let archive = read_archive(&a.weights)?;
    let model = archive.to_model()?;
    let input = load_input(&a.oct, &a.octa)?;
    let s = model.config().input_size;
    let shape = input.shape().to_vec();
    if shape[1..] != [s, s] {
        return Err(AppError::Data(format!(
            "images are {}x{}, the model expects {s}x{s}",
            shape[2], shape[1]
        )));
    }
    let pred = model.predict(&input.reshape(&[1, shape[0], s, s])?)?.batch_item(0)?;
    write_rgb(&a.out, &encode_label_rgb(&pred)?)?;
    write_out(out, &format!("wrote {}\n", a.out.display()))
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> AppResult<()> {
    let model = match (&a.weights, a.pass_through) {
        (Some(w), false) => Some(read_archive(w)?.to_model()?),
        _ => None,
    };
    let dataset = load_dataset(&a.data)?;
    let mut per_sample = Vec::with_capacity(dataset.len());
    for sample in &dataset {
        let counts = match &model {
            Some(m) => {
                let s = m.config().input_size;
                if sample.height() != s || sample.width() != s {
                    return Err(AppError::Data(format!(
                        "sample {} is {}x{}, the model expects {s}x{s}",
                        sample.id,
                        sample.width(),
                        sample.height()
                    )));
                }
                let x = sample.input.clone().reshape(&[1, 2, s, s])?;
                confusion(&m.predict(&x)?.batch_item(0)?, &sample.label)?
            }
            None => confusion(&sample.label, &sample.label)?,
        };
        per_sample.push(per_class_metrics(&counts));
    }
    let report = aggregate_report(&per_sample)?;
    write_out(out, &format!("{} samples\n", dataset.len()))?;
    write_out(out, &report.to_table())
}

fn gradcheck(a: GradcheckArgs, out: &mut dyn Write) -> AppResult<()> {
    let fault = match &a.corrupt_op {
        Some(name) => Some(OpKind::from_name(name).ok_or_else(|| AppError::Config(format!("unknown op {name:?}")))?),
        None => None,
    };
    let opts = GradcheckOptions { seed: a.seed, fault, model_samples: a.model_samples };
    let results = run_suite(&opts)?;
    let mut failing = Vec::new();
    for r in &results {
        let status = if r.passed() { "ok" } else { "FAIL" };
        write_out(
            out,
            &format!("{:<28} max rel err {:.3e}  tol {:.0e}  {status}\n", r.name, r.max_rel_error, r.tolerance),
        )?;
        if !r.passed() {
            failing.push(r.name.clone());
        }
    }
    if failing.is_empty() {
        Ok(())
    } else {
        Err(AppError::Gradcheck(failing))
    }
}
