#![allow(dead_code)]

use std::path::PathBuf;

use radeval::clinical::{load_embeddings, load_graphs};
use radeval::corpus::{load_pairs, FileFormat};
use radeval::eval::label_corpus;
use radeval::labeler::Labeler;
use radeval::{Corpus, EvalConfig};

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic")
}

pub fn fixture(name: &str) -> PathBuf {
    fixture_dir().join(name)
}

pub fn fixture_config() -> EvalConfig {
    EvalConfig::from_path(&fixture("config.toml")).expect("fixture config")
}

/// The synthetic corpus with graphs, embeddings and rule-based labels.
pub fn fixture_corpus() -> Corpus {
    let mut corpus = load_pairs(&fixture("pred.jsonl"), &fixture("ref.jsonl"), FileFormat::Jsonl).unwrap();
    corpus.attach_graphs(
        &load_graphs(&fixture("pred_graphs.jsonl")).unwrap(),
        &load_graphs(&fixture("ref_graphs.jsonl")).unwrap(),
    );
    corpus
        .attach_embeddings(
            &load_embeddings(&fixture("pred_embeddings.jsonl")).unwrap(),
            &load_embeddings(&fixture("ref_embeddings.jsonl")).unwrap(),
        )
        .unwrap();
    label_corpus(&mut corpus, &Labeler::new(&Default::default())).unwrap();
    corpus
}
