use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use radeval::clinical::{load_embeddings, load_graphs};
use radeval::corpus::{
    filter_corpus, load_label_inputs, load_pairs, load_raw_reports, write_sectioned_jsonl, FileFormat,
    SectionParser,
};
use radeval::eval::{evaluate_all, label_corpus, write_json, write_metrics_csv, write_per_class_csv, MetricResult};
use radeval::labeler::{load_external_labels, write_labels_csv, Labeler, LabelVector, Lexicon};
use radeval::stats::{stratum_indices, StratumSpec};
use radeval::{Corpus, EvalConfig};

/// Evaluate generated chest X-ray findings against reference reports.
#[derive(Debug, Parser)]
#[command(name = "radeval", version)]
struct Cli {
    /// Worker threads for metric computation (default: one per core).
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract Findings and Indication sections from raw reports.
    Parse(ParseArgs),
    /// Label findings with the rule labeler, or validate an external label file.
    Label(LabelArgs),
    /// Compute all supported metrics with bootstrap confidence intervals.
    Evaluate(EvaluateArgs),
    /// Split a paired corpus into strata.
    Stratify(StratifyArgs),
}

#[derive(Debug, Args)]
struct ParseArgs {
    /// Raw reports, `{"study_id", "text"}` per record (JSONL or CSV).
    #[arg(long = "ref", visible_alias = "input", value_name = "RAW")]
    input: PathBuf,
    /// Sectioned JSONL output.
    #[arg(long)]
    out: PathBuf,
    /// Config file (TOML or JSON); `[sections]` sets header aliases.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LabelArgs {
    /// Sectioned reports; their findings are labeled.
    #[arg(long = "ref", conflicts_with_all = ["pred", "labels_from"])]
    reference: Option<PathBuf>,
    /// Predictions; the generated text is labeled.
    #[arg(long, conflicts_with = "labels_from")]
    pred: Option<PathBuf>,
    /// Existing label CSV(s) to validate and copy instead of labeling.
    #[arg(long, num_args = 1..=2, value_name = "CSV")]
    labels_from: Option<Vec<PathBuf>>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Lexicon file (TOML or JSON), overriding the config and the bundled default.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Label CSV output. With two `--labels-from` files, a directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Predictions, `{"study_id", "generated"}` per record.
    #[arg(long)]
    pred: PathBuf,
    /// Sectioned references, `{"study_id", "findings", "indication"}` per record.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Label CSVs for predictions and references; skips the rule labeler.
    #[arg(long, num_args = 2, value_names = ["PRED", "REF"])]
    labels_from: Option<Vec<PathBuf>>,
    /// RadGraph annotations for predictions and references.
    #[arg(long, num_args = 2, value_names = ["PRED", "REF"])]
    graphs: Option<Vec<PathBuf>>,
    /// CheXbert embeddings for predictions and references.
    #[arg(long, num_args = 2, value_names = ["PRED", "REF"])]
    embeddings: Option<Vec<PathBuf>>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Bootstrap seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated strata: finding, indication, has_finding, no_finding,
    /// has_indication, no_indication, class:<name>.
    #[arg(long)]
    strata: Option<String>,
    /// Output directory for metrics.json, metrics.csv and per_class.csv.
    #[arg(long)]
    out: PathBuf,
    /// Write only one format (default: both).
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Args)]
struct StratifyArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Label CSVs; with two files the second (reference) one is used.
    #[arg(long, num_args = 1..=2, value_name = "CSV")]
    labels_from: Option<Vec<PathBuf>>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long, default_value = "finding,indication")]
    strata: String,
    /// Output directory; one subdirectory per stratum.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.into()).build_global() {
            eprintln!("error: cannot start worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Parse(args) => cmd_parse(args),
        Command::Label(args) => cmd_label(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Stratify(args) => cmd_stratify(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 2 for usage, config, IO and schema errors; 3 when the data cannot
/// support the requested computation.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<radeval::Error>()) {
        Some(e) if !e.is_usage() => 3,
        _ => 2,
    }
}

fn load_config(path: Option<&Path>) -> Result<EvalConfig> {
    Ok(match path {
        Some(p) => EvalConfig::from_path(p)?,
        None => EvalConfig::default(),
    })
}

fn load_lexicon(flag: Option<&Path>, config: &EvalConfig) -> Result<Lexicon> {
    Ok(match flag {
        Some(p) => Lexicon::from_path(p)?,
        None => config.load_lexicon()?,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

fn cmd_parse(args: ParseArgs) -> Result<()> {
    let config = load_config(args.config.as_deref())?;
    let parser = SectionParser::new(&config.sections)?;
    let raw = load_raw_reports(&args.input, FileFormat::from_path(&args.input))?;
    let total = raw.len();
    let kept = filter_corpus(raw.iter().map(|r| parser.parse(r)).collect());

    let mut buf = Vec::new();
    write_sectioned_jsonl(&mut buf, &kept)?;
    write_file(&args.out, &buf)?;
    println!("kept {} of {total} reports, discarded {} without findings", kept.len(), total - kept.len());
    if kept.is_empty() {
        eprintln!("warning: no report has a findings section; wrote an empty file");
    }
    Ok(())
}

fn labels_csv(rows: &[(String, LabelVector)]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_labels_csv(&mut buf, rows.iter().map(|(id, v)| (id.as_str(), v)))?;
    Ok(buf)
}

fn sorted(labels: HashMap<String, LabelVector>) -> Vec<(String, LabelVector)> {
    let mut rows: Vec<_> = labels.into_iter().collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    rows
}

fn cmd_label(args: LabelArgs) -> Result<()> {
    if let Some(files) = &args.labels_from {
        // validation and normalised copy only
        let outputs: Vec<PathBuf> = match files.len() {
            1 => vec![args.out.clone()],
            _ => files
                .iter()
                .map(|f| args.out.join(f.file_name().unwrap_or(f.as_os_str())))
                .collect(),
        };
        for (file, out) in files.iter().zip(&outputs) {
            let rows = sorted(load_external_labels(file)?);
            write_file(out, &labels_csv(&rows)?)?;
            println!("{}: {} valid label rows", file.display(), rows.len());
        }
        return Ok(());
    }

    let input = match (&args.reference, &args.pred) {
        (Some(p), None) | (None, Some(p)) => p,
        _ => bail!(radeval::Error::Config("label needs one of --ref, --pred or --labels-from".into())),
    };
    let config = load_config(args.config.as_deref())?;
    let labeler = Labeler::new(&load_lexicon(args.lexicon.as_deref(), &config)?);
    let texts = load_label_inputs(input, FileFormat::from_path(input))?;
    let rows: Vec<(String, LabelVector)> = texts
        .into_iter()
        .map(|(id, text)| {
            let labels = labeler.label(&text);
            (id, labels)
        })
        .collect();
    write_file(&args.out, &labels_csv(&rows)?)?;
    println!("labeled {} reports", rows.len());
    Ok(())
}

/// Loads the paired corpus and reports ids present in only one file.
fn load_corpus(pred: &Path, reference: &Path) -> Result<Corpus> {
    let corpus = load_pairs(pred, reference, FileFormat::from_path(reference))?;
    let p = &corpus.provenance;
    if p.dropped_generated_only + p.dropped_reference_only > 0 {
        eprintln!(
            "warning: {} predictions and {} references have no counterpart and were dropped",
            p.dropped_generated_only, p.dropped_reference_only
        );
    }
    if corpus.is_empty() {
        bail!(radeval::Error::EmptyCorpus);
    }
    Ok(corpus)
}

fn attach_labels(
    corpus: &mut Corpus,
    labels_from: Option<&[PathBuf]>,
    lexicon: Option<&Path>,
    config: &EvalConfig,
) -> Result<()> {
    match labels_from {
        Some([pred, reference]) => {
            corpus.attach_labels(&load_external_labels(pred)?, &load_external_labels(reference)?);
            Ok(())
        }
        Some([reference]) => {
            corpus.attach_labels(&HashMap::new(), &load_external_labels(reference)?);
            Ok(())
        }
        Some(_) => bail!(radeval::Error::Config("--labels-from takes one or two files".into())),
        None => Ok(label_corpus(corpus, &Labeler::new(&load_lexicon(lexicon, config)?))?),
    }
}

fn fmt_result(r: &MetricResult) -> String {
    match r {
        MetricResult::Available(s) => format!("{:.4} [{:.4}, {:.4}]", s.median, s.ci_low, s.ci_high),
        MetricResult::Unavailable { unavailable } => format!("unavailable ({unavailable})"),
    }
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.bootstrap.seed = seed;
    }
    let strata = match &args.strata {
        Some(s) => StratumSpec::parse_list(s)?,
        None => Vec::new(),
    };

    let mut corpus = load_corpus(&args.pred, &args.reference)?;
    attach_labels(&mut corpus, args.labels_from.as_deref(), args.lexicon.as_deref(), &config)?;
    if let Some([pred, reference]) = args.graphs.as_deref() {
        corpus.attach_graphs(&load_graphs(pred)?, &load_graphs(reference)?);
    }
    if let Some([pred, reference]) = args.embeddings.as_deref() {
        corpus.attach_embeddings(&load_embeddings(pred)?, &load_embeddings(reference)?)?;
    }

    let report = evaluate_all(&corpus, &config, &strata)?;

    let out = &args.out;
    if args.format != Some(Format::Csv) {
        let mut buf = Vec::new();
        write_json(&mut buf, &report)?;
        write_file(&out.join("metrics.json"), &buf)?;
    }
    if args.format != Some(Format::Json) {
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &report)?;
        write_file(&out.join("metrics.csv"), &buf)?;
        let mut buf = Vec::new();
        write_per_class_csv(&mut buf, &report)?;
        write_file(&out.join("per_class.csv"), &buf)?;
    }

    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    writeln!(w, "{} pairs, {} resamples, seed {}", report.n_pairs, config.bootstrap.n_samples, config.bootstrap.seed)?;
    for row in &report.metrics {
        writeln!(w, "{:<16} {}", row.metric, fmt_result(&row.overall))?;
    }
    for s in &report.strata {
        writeln!(w, "stratum {}: {} pairs ({:.1}%)", s.name, s.n, 100.0 * s.fraction)?;
    }
    for note in &report.notes {
        eprintln!("note: {note}");
    }
    Ok(())
}

fn cmd_stratify(args: StratifyArgs) -> Result<()> {
    let config = load_config(args.config.as_deref())?;
    let strata = StratumSpec::parse_list(&args.strata)?;
    if strata.is_empty() {
        bail!(radeval::Error::Config("--strata is empty".into()));
    }
    let mut corpus = load_corpus(&args.pred, &args.reference)?;
    let needs_labels = strata
        .iter()
        .any(|s| !matches!(s, StratumSpec::HasIndication | StratumSpec::NoIndication));
    if needs_labels {
        attach_labels(&mut corpus, args.labels_from.as_deref(), args.lexicon.as_deref(), &config)?;
    }

    let mut summary = Vec::new();
    for spec in strata {
        let idx = stratum_indices(&corpus, spec)?;
        let dir = args.out.join(spec.to_string().replace(':', "_").replace(' ', "_"));
        let (mut pred, mut reference) = (String::new(), String::new());
        for &i in &idx {
            let p = &corpus.pairs()[i];
            let line = serde_json::json!({"study_id": p.study_id, "generated": p.generated});
            pred.push_str(&format!("{line}\n"));
            let line = serde_json::json!({
                "study_id": p.study_id,
                "findings": p.reference,
                "indication": p.indication,
            });
            reference.push_str(&format!("{line}\n"));
        }
        write_file(&dir.join("pred.jsonl"), pred.as_bytes())?;
        write_file(&dir.join("ref.jsonl"), reference.as_bytes())?;
        println!("{spec}: {} of {} pairs", idx.len(), corpus.len());
        summary.push(serde_json::json!({
            "stratum": spec.to_string(),
            "n": idx.len(),
            "fraction": idx.len() as f64 / corpus.len() as f64,
            "dir": dir.file_name().map(|d| d.to_string_lossy().into_owned()),
        }));
    }
    let mut buf = serde_json::to_vec_pretty(&summary)?;
    buf.push(b'\n');
    write_file(&args.out.join("strata.json"), &buf)
}
