//! Clinical metrics: finding classification scores, graph overlap,
//! embedding similarity and the RadCliQ composite.

mod classification;
mod radgraph;

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use classification::{
    class_metrics, confusion_counts, f1_from_counts, macro_f1, micro_f1, ClassMetrics, ConfusionCounts,
    MacroF1, UndefinedPolicy,
};
pub use radgraph::{
    load_graphs, radgraph_f1, radgraph_scores, rg_er, Entity, RadGraphAnnotation, RadGraphScores, Relation,
};

/// Cosine similarity of two embeddings.
pub fn chexbert_cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "embedding dimensions differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("embedding contains a non-finite value".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let norm_a = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let norm_b = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(Error::InvalidInput("cosine similarity of a zero vector".into()));
    }
    Ok(dot / (norm_a * norm_b))
}

#[derive(Debug, Deserialize)]
struct EmbeddingRecord {
    study_id: String,
    vector: Vec<f64>,
}

/// Loads `{"study_id", "vector"}` lines.
pub fn load_embeddings(path: &Path) -> Result<HashMap<String, Vec<f64>>> {
    let records: Vec<(usize, EmbeddingRecord)> =
        crate::corpus::read_records(path, crate::corpus::FileFormat::Jsonl)?;
    let mut out = HashMap::new();
    let mut dim = None;
    for (line, r) in records {
        if r.vector.is_empty() {
            return Err(Error::schema(path, line, "empty vector"));
        }
        match dim {
            None => dim = Some(r.vector.len()),
            Some(d) if d != r.vector.len() => {
                return Err(Error::schema(
                    path,
                    line,
                    format!("vector has dimension {} but earlier vectors have {d}", r.vector.len()),
                ));
            }
            Some(_) => {}
        }
        if out.insert(r.study_id.clone(), r.vector).is_some() {
            return Err(Error::DuplicateStudy {
                path: path.to_owned(),
                line,
                study_id: r.study_id,
            });
        }
    }
    Ok(out)
}

/// Linear RadCliQ model. There are no built-in values: the coefficients
/// must come from the reference implementation of the model version in use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadCliqCoefficients {
    pub intercept: f64,
    pub w_radgraph: f64,
    pub w_bleu: f64,
    /// BLEU order fed to the model.
    #[serde(default = "default_radcliq_bleu_order")]
    pub bleu_max_n: usize,
}

fn default_radcliq_bleu_order() -> usize {
    2
}

impl RadCliqCoefficients {
    pub fn new(intercept: f64, w_radgraph: f64, w_bleu: f64) -> Self {
        RadCliqCoefficients {
            intercept,
            w_radgraph,
            w_bleu,
            bleu_max_n: default_radcliq_bleu_order(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.intercept, self.w_radgraph, self.w_bleu].iter().all(|x| x.is_finite()) {
            return Err(Error::Config("radcliq coefficients must be finite".into()));
        }
        if self.bleu_max_n == 0 {
            return Err(Error::Config("radcliq.bleu_max_n must be at least 1".into()));
        }
        Ok(())
    }
}

/// Predicted error count; lower is better.
pub fn radcliq(radgraph_f1: f64, bleu: f64, coeffs: Option<&RadCliqCoefficients>) -> Result<f64> {
    let c = coeffs.ok_or_else(|| {
        Error::Config("RadCliQ coefficients are not configured (radcliq.intercept, w_radgraph, w_bleu)".into())
    })?;
    c.validate()?;
    Ok(c.intercept + c.w_radgraph * radgraph_f1 + c.w_bleu * bleu)
}
