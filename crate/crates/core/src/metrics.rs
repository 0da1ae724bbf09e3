//! Pixel confusion counts, per-class accuracy / F1 / IoU, and the
//! artery / vein / average cross-validation summary.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::data::{argmax_classes, ARTERY, NUM_CLASSES, VEIN};
use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// One-vs-rest pixel counts for a single class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ClassCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub classes: [ClassCounts; NUM_CLASSES],
}

impl ConfusionCounts {
    pub fn merge(&mut self, other: &ConfusionCounts) {
        for (a, b) in self.classes.iter_mut().zip(&other.classes) {
            a.tp += b.tp;
            a.fp += b.fp;
            a.fn_ += b.fn_;
            a.tn += b.tn;
        }
    }
}

/// Counts over the argmax maps of a 3×H×W prediction and ground truth.
pub fn confusion<T: Scalar>(pred: &Tensor<T>, truth: &Tensor<T>) -> Result<ConfusionCounts> {
    if pred.shape() != truth.shape() || pred.rank() != 3 || pred.shape()[0] != NUM_CLASSES {
        return Err(shape_err(
            "confusion",
            format!("pred {:?} vs truth {:?}, want matching 3xHxW", pred.shape(), truth.shape()),
        ));
    }
    let p = argmax_classes(pred)?;
    let t = argmax_classes(truth)?;
    Ok(confusion_from_classes(&p, &t))
}

pub fn confusion_from_classes(pred: &[u8], truth: &[u8]) -> ConfusionCounts {
    let mut joint = [[0u64; NUM_CLASSES]; NUM_CLASSES];
    for (&p, &t) in pred.iter().zip(truth) {
        joint[t as usize][p as usize] += 1;
    }
    let total = pred.len() as u64;
    let mut out = ConfusionCounts::default();
    for c in 0..NUM_CLASSES {
        let tp = joint[c][c];
        let fn_ = joint[c].iter().sum::<u64>() - tp;
        let fp = (0..NUM_CLASSES).map(|t| joint[t][c]).sum::<u64>() - tp;
        out.classes[c] = ClassCounts { tp, fp, fn_, tn: total - tp - fp - fn_ };
    }
    out
}

/// Ratios in `[0, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ClassMetrics {
    pub accuracy: f64,
    pub f1: f64,
    pub iou: f64,
}

/// Accuracy is one-vs-rest over all pixels. A class absent from both maps
/// scores F1 = IoU = 1.
pub fn class_metrics(c: &ClassCounts) -> ClassMetrics {
    let (tp, fp, fn_, tn) = (c.tp as f64, c.fp as f64, c.fn_ as f64, c.tn as f64);
    let total = tp + fp + fn_ + tn;
    let accuracy = if total > 0.0 { (tp + tn) / total } else { 1.0 };
    let (f1, iou) = if c.tp + c.fp + c.fn_ == 0 {
        (1.0, 1.0)
    } else {
        (2.0 * tp / (2.0 * tp + fp + fn_), tp / (tp + fp + fn_))
    };
    ClassMetrics { accuracy, f1, iou }
}

pub fn per_class_metrics(counts: &ConfusionCounts) -> [ClassMetrics; NUM_CLASSES] {
    counts.classes.map(|c| class_metrics(&c))
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self { mean, std: num_traits::Float::sqrt(var) }
    }
}

/// Accuracy, F1 and IoU in percent.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricRow {
    pub accuracy: f64,
    pub f1: f64,
    pub iou: f64,
}

impl MetricRow {
    fn percent(m: &ClassMetrics) -> Self {
        Self { accuracy: 100.0 * m.accuracy, f1: 100.0 * m.f1, iou: 100.0 * m.iou }
    }

    fn mean_of(a: &Self, b: &Self) -> Self {
        Self {
            accuracy: (a.accuracy + b.accuracy) / 2.0,
            f1: (a.f1 + b.f1) / 2.0,
            iou: (a.iou + b.iou) / 2.0,
        }
    }

    fn values(&self) -> [f64; 3] {
        [self.accuracy, self.f1, self.iou]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RowSummary {
    pub accuracy: MeanStd,
    pub f1: MeanStd,
    pub iou: MeanStd,
}

impl RowSummary {
    fn of(rows: &[MetricRow]) -> Self {
        let col = |f: fn(&MetricRow) -> f64| MeanStd::of(&rows.iter().map(f).collect::<Vec<_>>());
        Self { accuracy: col(|r| r.accuracy), f1: col(|r| r.f1), iou: col(|r| r.iou) }
    }

    fn values(&self) -> [MeanStd; 3] {
        [self.accuracy, self.f1, self.iou]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FoldRows {
    pub artery: MetricRow,
    pub vein: MetricRow,
    /// Mean of the artery and vein rows.
    pub average: MetricRow,
}

/// Artery, vein and average rows, each as mean ± std across folds.
/// Background is scored but not reported.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FoldReport {
    pub folds: Vec<FoldRows>,
    pub artery: RowSummary,
    pub vein: RowSummary,
    pub average: RowSummary,
}

pub const REPORT_ROWS: [&str; 3] = ["artery", "vein", "average"];
const METRIC_NAMES: [&str; 3] = ["accuracy", "f1", "iou"];

pub fn aggregate_report(per_fold: &[[ClassMetrics; NUM_CLASSES]]) -> Result<FoldReport> {
    if per_fold.is_empty() {
        return Err(Error::Config("report needs at least one fold".into()));
    }
    let folds: Vec<FoldRows> = per_fold
        .iter()
        .map(|m| {
            let artery = MetricRow::percent(&m[ARTERY as usize]);
            let vein = MetricRow::percent(&m[VEIN as usize]);
            FoldRows { artery, vein, average: MetricRow::mean_of(&artery, &vein) }
        })
        .collect();
    let column = |f: fn(&FoldRows) -> MetricRow| RowSummary::of(&folds.iter().map(f).collect::<Vec<_>>());
    Ok(FoldReport {
        artery: column(|f| f.artery),
        vein: column(|f| f.vein),
        average: column(|f| f.average),
        folds,
    })
}

impl FoldReport {
    fn rows(&self) -> [(&'static str, &RowSummary, Vec<MetricRow>); 3] {
        [
            ("artery", &self.artery, self.folds.iter().map(|f| f.artery).collect()),
            ("vein", &self.vein, self.folds.iter().map(|f| f.vein).collect()),
            ("average", &self.average, self.folds.iter().map(|f| f.average).collect()),
        ]
    }

    /// Header plus one line per row: `mean±std` per metric, then the raw
    /// per-fold values grouped by metric.
    pub fn to_csv(&self) -> String {
        let k = self.folds.len();
        let mut out = String::from("row,accuracy,f1,iou");
        for m in METRIC_NAMES {
            for f in 1..=k {
                let _ = write!(out, ",{m}_fold{f}");
            }
        }
        out.push('\n');
        for (name, summary, per_fold) in self.rows() {
            out.push_str(name);
            for ms in summary.values() {
                let _ = write!(out, ",{:.3}±{:.3}", ms.mean, ms.std);
            }
            for m in 0..3 {
                for row in &per_fold {
                    let _ = write!(out, ",{:.4}", row.values()[m]);
                }
            }
            out.push('\n');
        }
        out
    }

    /// `row.metric.mean=…`, `row.metric.std=…` and `foldN.row.metric=…` lines.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "folds={}", self.folds.len());
        for (name, summary, per_fold) in self.rows() {
            for (m, ms) in METRIC_NAMES.iter().zip(summary.values()) {
                let _ = writeln!(out, "{name}.{m}.mean={:.6}", ms.mean);
                let _ = writeln!(out, "{name}.{m}.std={:.6}", ms.std);
            }
            for (f, row) in per_fold.iter().enumerate() {
                for (m, v) in METRIC_NAMES.iter().zip(row.values()) {
                    let _ = writeln!(out, "fold{}.{name}.{m}={v:.6}", f + 1);
                }
            }
        }
        out
    }

    /// Human-readable table; the ± column is dropped for a single fold.
    pub fn to_table(&self) -> String {
        let with_std = self.folds.len() > 1;
        let mut out = String::new();
        let _ = writeln!(out, "{:<10}{:>20}{:>20}{:>20}", "", "Accuracy", "F1", "IOU");
        for (name, summary, _) in self.rows() {
            let _ = write!(out, "{name:<10}");
            for ms in summary.values() {
                let cell = if with_std {
                    format!("{:.3} ± {:.3}", ms.mean, ms.std)
                } else {
                    format!("{:.3}", ms.mean)
                };
                let _ = write!(out, "{cell:>20}");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{one_hot, BACKGROUND};

    #[test]
    fn perfect_prediction() {
        let t = one_hot(&[0, 1, 2, 1], 2, 2);
        let c = confusion(&t, &t).unwrap();
        for k in c.classes {
            assert_eq!((k.fp, k.fn_), (0, 0));
            assert_eq!(k.total(), 4);
        }
        for m in per_class_metrics(&c) {
            assert_eq!((m.accuracy, m.f1, m.iou), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn half_artery_half_vein() {
        let truth = one_hot(&[ARTERY; 4], 2, 2);
        let pred = one_hot(&[ARTERY, ARTERY, VEIN, VEIN], 2, 2);
        let c = confusion(&pred, &truth).unwrap();
        let a = c.classes[ARTERY as usize];
        assert_eq!((a.tp, a.fn_, a.fp, a.tn), (2, 2, 0, 0));
        assert_eq!(c.classes[VEIN as usize].fp, 2);
        let m = per_class_metrics(&c)[ARTERY as usize];
        assert_eq!(m.accuracy, 0.5);
        assert!((m.f1 - 4.0 / 6.0).abs() < 1e-15);
        assert_eq!(m.iou, 0.5);
        // background absent from both maps
        assert_eq!(per_class_metrics(&c)[BACKGROUND as usize].f1, 1.0);
    }

    #[test]
    fn average_row_of_two_classes() {
        let m = |a: f64| ClassMetrics { accuracy: a / 100.0, f1: 0.5, iou: 0.5 };
        let mut fold = [ClassMetrics::default(); 3];
        fold[ARTERY as usize] = m(86.705);
        fold[VEIN as usize] = m(86.798);
        let r = aggregate_report(&[fold]).unwrap();
        assert!((r.average.accuracy.mean - 86.7515).abs() < 1e-9);
        assert_eq!(r.average.accuracy.std, 0.0);
    }

    #[test]
    fn identical_folds_have_zero_std() {
        let fold = [ClassMetrics { accuracy: 0.9, f1: 0.8, iou: 0.7 }; 3];
        let r = aggregate_report(&[fold; 4]).unwrap();
        assert_eq!(r.artery.f1.std, 0.0);
        assert!((r.artery.f1.mean - 80.0).abs() < 1e-12);
        assert!(aggregate_report(&[]).is_err());
    }

    #[test]
    fn csv_shape() {
        let fold = [ClassMetrics { accuracy: 0.9, f1: 0.8, iou: 0.7 }; 3];
        let csv = aggregate_report(&[fold; 2]).unwrap().to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("row,accuracy,f1,iou,accuracy_fold1,accuracy_fold2,f1_fold1"));
        assert!(lines[1].starts_with("artery,90.000±0.000,80.000±0.000,70.000±0.000,90.0000,90.0000"));
        assert!(lines[3].starts_with("average,"));
    }
}
