//! ROC/AUC, confusion matrix and accuracy for binary classifiers.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

/// Decision threshold on the positive-class probability.
pub const THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores `>= threshold` are called positive at this point. The first
    /// point uses `+inf`.
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Roc {
    pub auc: f64,
    pub points: Vec<RocPoint>,
}

fn check_inputs(scores: &[f64], labels: &[usize]) -> Result<()> {
    if scores.len() != labels.len() {
        bail!(Input, "{} scores for {} labels", scores.len(), labels.len());
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        bail!(Input, "label {l} is not 0 or 1");
    }
    if scores.iter().any(|s| !s.is_finite()) {
        bail!(Input, "scores must be finite");
    }
    Ok(())
}

/// ROC curve with one point per distinct score and its trapezoidal area.
/// Tied scores move as one step, so the area equals the Mann-Whitney
/// statistic with half credit for ties.
pub fn roc_auc(scores: &[f64], labels: &[usize]) -> Result<Roc> {
    check_inputs(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        bail!(MetricUndefined, "AUC needs both classes ({pos} positive, {neg} negative)");
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0, threshold: f64::INFINITY }];
    let (mut tp, mut fp) = (0u64, 0u64);
    // twice the area in units of one positive-negative pair, kept integral
    let mut area2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area2 += u128::from(fp - fp0) * u128::from(tp + tp0);
        points.push(RocPoint { fpr: fp as f64 / neg as f64, tpr: tp as f64 / pos as f64, threshold: s });
    }
    let auc = area2 as f64 / (2.0 * pos as f64 * neg as f64);
    Ok(Roc { auc, points })
}

/// `[[TN, FP], [FN, TP]]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tp: u64,
}

impl Confusion {
    pub fn matrix(&self) -> [[u64; 2]; 2] {
        [[self.tn, self.fp], [self.fn_, self.tp]]
    }

    pub fn total(&self) -> u64 {
        self.tn + self.fp + self.fn_ + self.tp
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            return 0.0;
        }
        (self.tp + self.tn) as f64 / self.total() as f64
    }
}

/// Predicts positive when `score >= threshold`.
pub fn confusion_and_accuracy(scores: &[f64], labels: &[usize], threshold: f64) -> Result<(Confusion, f64)> {
    check_inputs(scores, labels)?;
    let mut c = Confusion::default();
    for (&s, &l) in scores.iter().zip(labels) {
        match (l == 1, s >= threshold) {
            (false, false) => c.tn += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (true, true) => c.tp += 1,
        }
    }
    Ok((c, c.accuracy()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: usize,
    /// `None` when the evaluated set holds a single class.
    pub auc: Option<f64>,
    pub accuracy: f64,
    pub confusion: Confusion,
    #[serde(skip)]
    pub roc_points: Vec<RocPoint>,
}

impl MetricsReport {
    pub fn compute(scores: &[f64], labels: &[usize]) -> Result<Self> {
        let (confusion, accuracy) = confusion_and_accuracy(scores, labels, THRESHOLD)?;
        let roc = match roc_auc(scores, labels) {
            Ok(r) => Some(r),
            Err(crate::Error::MetricUndefined(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(MetricsReport {
            samples: scores.len(),
            auc: roc.as_ref().map(|r| r.auc),
            accuracy,
            confusion,
            roc_points: roc.map(|r| r.points).unwrap_or_default(),
        })
    }

    /// `metrics.json` and `roc.csv` in `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(self)? + "\n")?;
        let mut roc = fs::File::create(dir.join("roc.csv"))?;
        writeln!(roc, "fpr,tpr,threshold")?;
        for p in &self.roc_points {
            writeln!(roc, "{},{},{}", p.fpr, p.tpr, p.threshold)?;
        }
        Ok(())
    }
}
