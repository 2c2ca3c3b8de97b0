//! Evaluation of generated chest X-ray findings against reference reports.
//!
//! The crate covers report sectioning, lexical overlap metrics (ROUGE-L,
//! BLEU, METEOR), a rule-based 14-class finding labeler, clinical metrics
//! (classification scores, RadGraph overlap, embedding cosine, RadCliQ) and
//! stratified bootstrap confidence intervals.

pub mod clinical;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod labeler;
pub mod lexical;
pub mod stats;
pub mod textnorm;

pub use config::EvalConfig;
pub use corpus::{Corpus, ReportPair};
pub use error::{Error, Result};
pub use eval::{evaluate_all, EvaluationReport};
pub use labeler::{LabelVector, ObservationClass, ObservationLabel, UncertainPolicy};
pub use stats::{bootstrap, stratify, BootstrapConfig, MetricSummary, StratumSpec};
