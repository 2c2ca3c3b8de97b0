use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeler::ObservationClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Adds one `(predicted, reference)` observation.
    pub fn record(&mut self, predicted: bool, reference: bool) {
        match (predicted, reference) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }
}

impl std::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.tp += rhs.tp;
        self.fp += rhs.fp;
        self.tn += rhs.tn;
        self.fn_ += rhs.fn_;
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(ConfusionCounts::default(), |mut acc, c| {
            acc += c;
            acc
        })
    }
}

/// Counts with Positive (`true`) as the positive class.
pub fn confusion_counts(pred: &[bool], reference: &[bool]) -> Result<ConfusionCounts> {
    if pred.len() != reference.len() {
        return Err(Error::InvalidInput(format!(
            "prediction and reference lengths differ ({} vs {})",
            pred.len(),
            reference.len()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &r) in pred.iter().zip(reference) {
        c.record(p, r);
    }
    Ok(c)
}

/// Per-class rates; `None` marks a 0/0 rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub npv: Option<f64>,
    pub specificity: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// F1 from counts, `2tp / (2tp + fp + fn)`. This equals `2PR / (P + R)`
/// whenever precision and recall are both defined, and is 0 rather than
/// undefined when the reference has positives but the prediction has none
/// (or vice versa). Undefined only when neither side has a positive.
pub fn f1_from_counts(c: &ConfusionCounts) -> Option<f64> {
    ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_)
}

pub fn class_metrics(c: &ConfusionCounts) -> ClassMetrics {
    ClassMetrics {
        precision: ratio(c.tp, c.tp + c.fp),
        recall: ratio(c.tp, c.tp + c.fn_),
        npv: ratio(c.tn, c.tn + c.fn_),
        specificity: ratio(c.tn, c.tn + c.fp),
        f1: f1_from_counts(c),
    }
}

/// How undefined per-class F1 values enter a macro average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UndefinedPolicy {
    #[default]
    Exclude,
    AsZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroF1 {
    pub value: f64,
    /// Classes whose F1 was defined and entered the mean.
    pub n_defined: usize,
    pub n_classes: usize,
}

/// Unweighted mean of per-class F1 over `subset`.
pub fn macro_f1(
    per_class: &[ClassMetrics; 14],
    subset: &[ObservationClass],
    policy: UndefinedPolicy,
) -> Result<MacroF1> {
    if subset.is_empty() {
        return Err(Error::InvalidInput("macro F1 over an empty class subset".into()));
    }
    let values: Vec<Option<f64>> = subset.iter().map(|c| per_class[c.index()].f1).collect();
    let n_defined = values.iter().flatten().count();
    if n_defined == 0 {
        return Err(Error::Undefined("F1 is undefined for every class in the subset".into()));
    }
    let (sum, n) = match policy {
        UndefinedPolicy::Exclude => (values.iter().flatten().sum::<f64>(), n_defined),
        UndefinedPolicy::AsZero => (values.iter().map(|v| v.unwrap_or(0.0)).sum(), values.len()),
    };
    Ok(MacroF1 {
        value: sum / n as f64,
        n_defined,
        n_classes: subset.len(),
    })
}

/// F1 of counts pooled over `subset`.
pub fn micro_f1(per_class: &[ConfusionCounts; 14], subset: &[ObservationClass]) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::InvalidInput("micro F1 over an empty class subset".into()));
    }
    let pooled: ConfusionCounts = subset.iter().map(|c| per_class[c.index()]).sum();
    f1_from_counts(&pooled)
        .ok_or_else(|| Error::Undefined("no positives in prediction or reference for the subset".into()))
}
