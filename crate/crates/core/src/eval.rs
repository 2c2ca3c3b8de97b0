//! Corpus evaluation: every metric the inputs support, overall and per
//! stratum, with bootstrap intervals.
//!
//! Lexical, graph, embedding and RadCliQ scores are means of per-pair
//! values. Classification metrics are recomputed from confusion counts
//! pooled over the (resampled) pairs. All values are on a 0-1 scale except
//! RadCliQ, which is on the scale of its coefficients.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clinical::{
    chexbert_cosine, class_metrics, macro_f1, micro_f1, radcliq, radgraph_f1, rg_er, ClassMetrics,
    ConfusionCounts, UndefinedPolicy,
};
use crate::config::EvalConfig;
use crate::corpus::{Corpus, Provenance};
use crate::error::{Error, Result};
use crate::labeler::{map_uncertain, BinaryLabels, Labeler, ObservationClass, UncertainPolicy};
use crate::lexical::{bleu, score_pair, LexicalScores};
use crate::stats::{bootstrap_many, stratum_indices, BootstrapConfig, MetricSummary, StratumSpec};
use crate::textnorm::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Lexical,
    Clinical,
    Chexpert,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetricResult {
    Available(MetricSummary),
    Unavailable { unavailable: String },
}

impl MetricResult {
    pub fn summary(&self) -> Option<&MetricSummary> {
        match self {
            MetricResult::Available(s) => Some(s),
            MetricResult::Unavailable { .. } => None,
        }
    }

    fn unavailable(reason: impl Into<String>) -> Self {
        MetricResult::Unavailable {
            unavailable: reason.into(),
        }
    }

    fn from_result(r: Result<MetricSummary>) -> Self {
        match r {
            Ok(s) => MetricResult::Available(s),
            Err(e) => MetricResult::unavailable(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub category: Category,
    pub lower_is_better: bool,
    pub overall: MetricResult,
    pub strata: BTreeMap<String, MetricResult>,
}

/// Per-class rates with uncertain references and predictions read as
/// negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub class: ObservationClass,
    /// Reference positives.
    pub n_positive: usize,
    pub prevalence: f64,
    pub precision: MetricResult,
    pub recall: MetricResult,
    pub npv: MetricResult,
    pub specificity: MetricResult,
    pub f1: MetricResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumInfo {
    pub name: String,
    pub n: usize,
    pub fraction: f64,
}

/// Clinical scores of one pair; absent where inputs are missing.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PairClinical {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub radgraph_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rg_er: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub chexbert_cosine: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub radcliq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub study_id: String,
    pub lexical: LexicalScores,
    pub clinical: PairClinical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_pairs: usize,
    pub provenance: Provenance,
    pub bootstrap: BootstrapConfig,
    pub strata: Vec<StratumInfo>,
    pub metrics: Vec<MetricRow>,
    pub per_class: Vec<ClassRow>,
    pub notes: Vec<String>,
    /// Per-pair scores in corpus (study id) order.
    pub pairs: Vec<PairResult>,
}

impl EvaluationReport {
    pub fn metric(&self, name: &str) -> Option<&MetricRow> {
        self.metrics.iter().find(|m| m.metric == name)
    }
}

const CLASS_RATES: [&str; 5] = ["precision", "recall", "npv", "specificity", "f1"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Metric {
    Rouge,
    Bleu1,
    BleuN,
    Meteor,
    RadGraph,
    RgEr,
    Cosine,
    RadCliq,
    Macro14(UncertainPolicy),
    Micro14(UncertainPolicy),
    Macro5(UncertainPolicy),
    Micro5(UncertainPolicy),
}

impl Metric {
    fn table(bleu_n: usize) -> Vec<(Metric, String)> {
        use UncertainPolicy::*;
        let mut out = vec![
            (Metric::Rouge, "ROUGE-L".to_string()),
            (Metric::Bleu1, "BLEU-1".to_string()),
            (Metric::BleuN, format!("BLEU-{bleu_n}")),
            (Metric::Meteor, "METEOR".to_string()),
            (Metric::RadGraph, "RadGraph-F1".to_string()),
            (Metric::RgEr, "RG_ER".to_string()),
            (Metric::Cosine, "CheXbert vector".to_string()),
            (Metric::RadCliq, "RadCliQ".to_string()),
        ];
        for (policy, suffix) in [(AsNegative, ""), (AsPositive, "+")] {
            out.extend([
                (Metric::Macro14(policy), format!("Macro-F1-14{suffix}")),
                (Metric::Micro14(policy), format!("Micro-F1-14{suffix}")),
                (Metric::Macro5(policy), format!("Macro-F1-5{suffix}")),
                (Metric::Micro5(policy), format!("Micro-F1-5{suffix}")),
            ]);
        }
        out
    }

    fn category(self) -> Category {
        match self {
            Metric::Rouge | Metric::Bleu1 | Metric::BleuN | Metric::Meteor => Category::Lexical,
            Metric::RadGraph | Metric::RgEr | Metric::Cosine | Metric::RadCliq => Category::Clinical,
            _ => Category::Chexpert,
        }
    }
}

/// Per-pair inputs to the corpus-level aggregates.
struct PairScores {
    scores: LexicalScores,
    lexical: [f64; 4],
    graph: Option<[f64; 2]>,
    cosine: Option<f64>,
    radcliq: Option<f64>,
    /// `[policy][generated, reference]`, policies in AsNegative, AsPositive order.
    labels: Option<[[BinaryLabels; 2]; 2]>,
}

const POLICIES: [UncertainPolicy; 2] = [UncertainPolicy::AsNegative, UncertainPolicy::AsPositive];

fn policy_slot(p: UncertainPolicy) -> usize {
    match p {
        UncertainPolicy::AsNegative => 0,
        UncertainPolicy::AsPositive => 1,
    }
}

/// Why a family of metrics cannot be computed, if it cannot.
struct Availability {
    graph: Option<String>,
    cosine: Option<String>,
    radcliq: Option<String>,
    labels: Option<String>,
}

impl Availability {
    fn reason(&self, m: Metric) -> Option<&str> {
        match m.category() {
            Category::Lexical => None,
            Category::Chexpert => self.labels.as_deref(),
            Category::Clinical => match m {
                Metric::Cosine => self.cosine.as_deref(),
                Metric::RadCliq => self.radcliq.as_deref(),
                _ => self.graph.as_deref(),
            },
        }
    }
}

fn missing(what: &str, count: usize, total: usize) -> Option<String> {
    (count > 0).then(|| format!("{what} missing for {count} of {total} pairs"))
}

fn score_pairs(corpus: &Corpus, config: &EvalConfig) -> Result<(Vec<PairScores>, Availability)> {
    let lexical = config.lexical();
    let radcliq_coeffs = config.radcliq;
    let n = corpus.len();

    let scores = corpus
        .pairs()
        .par_iter()
        .map(|p| -> Result<(PairScores, Option<String>, Option<String>)> {
            let gen = tokenize(&p.generated, &config.tokenizer);
            let reference = tokenize(&p.reference, &config.tokenizer);
            let lex = score_pair(&gen, &reference, &lexical)?;

            let mut graph_err = None;
            let graph = match (&p.gen_graph, &p.ref_graph) {
                (Some(g), Some(r)) => match (radgraph_f1(g, r), rg_er(g, r)) {
                    (Ok(a), Ok(b)) => Some([a, b]),
                    (Err(e), _) | (_, Err(e)) => {
                        graph_err = Some(format!("study {:?}: {e}", p.study_id));
                        None
                    }
                },
                _ => None,
            };

            let mut cosine_err = None;
            let cosine = match (&p.gen_embedding, &p.ref_embedding) {
                (Some(g), Some(r)) => match chexbert_cosine(g, r) {
                    Ok(v) => Some(v),
                    Err(e) => {
                        cosine_err = Some(format!("study {:?}: {e}", p.study_id));
                        None
                    }
                },
                _ => None,
            };

            let radcliq = match (&graph, &radcliq_coeffs) {
                (Some([f1, _]), Some(c)) => {
                    let b = bleu(&gen, std::slice::from_ref(&reference), c.bleu_max_n, config.bleu.smoothing)?;
                    Some(radcliq(*f1, b.score, Some(c))?)
                }
                _ => None,
            };

            let labels = match (&p.gen_labels, &p.ref_labels) {
                (Some(g), Some(r)) => Some(POLICIES.map(|pol| [map_uncertain(g, pol), map_uncertain(r, pol)])),
                _ => None,
            };

            Ok((
                PairScores {
                    scores: lex,
                    lexical: [lex.rouge_l, lex.bleu1, lex.bleu4, lex.meteor],
                    graph,
                    cosine,
                    radcliq,
                    labels,
                },
                graph_err,
                cosine_err,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let graph_err = scores.iter().find_map(|s| s.1.clone());
    let cosine_err = scores.iter().find_map(|s| s.2.clone());
    let scores: Vec<PairScores> = scores.into_iter().map(|s| s.0).collect();

    let no_graph = scores.iter().filter(|s| s.graph.is_none()).count();
    let no_cosine = scores.iter().filter(|s| s.cosine.is_none()).count();
    let no_labels = scores.iter().filter(|s| s.labels.is_none()).count();
    let graph = graph_err.or_else(|| missing("graph annotations", no_graph, n));
    let radcliq = match (&graph, radcliq_coeffs) {
        (_, None) => Some("RadCliQ coefficients are not configured".to_string()),
        (Some(reason), _) => Some(reason.clone()),
        (None, Some(_)) => None,
    };
    let availability = Availability {
        graph,
        cosine: cosine_err.or_else(|| missing("embeddings", no_cosine, n)),
        radcliq,
        labels: missing("finding labels", no_labels, n),
    };
    Ok((scores, availability))
}

fn mean(idx: &[usize], f: impl Fn(usize) -> Option<f64>) -> Option<f64> {
    let mut sum = 0.0;
    for &i in idx {
        sum += f(i)?;
    }
    Some(sum / idx.len() as f64)
}

fn pooled_counts(scores: &[PairScores], idx: &[usize], slot: usize) -> Option<[ConfusionCounts; 14]> {
    let mut out = [ConfusionCounts::default(); 14];
    for &i in idx {
        let [gen, reference] = scores[i].labels.as_ref()?[slot];
        for k in 0..14 {
            out[k].record(gen[k], reference[k]);
        }
    }
    Some(out)
}

fn metric_value(
    m: Metric,
    scores: &[PairScores],
    idx: &[usize],
    counts: &[Option<[ConfusionCounts; 14]>; 2],
    undefined: UndefinedPolicy,
) -> Option<f64> {
    let all = ObservationClass::ALL;
    let five = ObservationClass::MAJOR_FIVE;
    let macro_over = |p: UncertainPolicy, subset: &[ObservationClass]| {
        let metrics = counts[policy_slot(p)]?.map(|c| class_metrics(&c));
        macro_f1(&metrics, subset, undefined).ok().map(|m| m.value)
    };
    let micro_over = |p: UncertainPolicy, subset: &[ObservationClass]| {
        micro_f1(counts[policy_slot(p)].as_ref()?, subset).ok()
    };
    match m {
        Metric::Rouge => mean(idx, |i| Some(scores[i].lexical[0])),
        Metric::Bleu1 => mean(idx, |i| Some(scores[i].lexical[1])),
        Metric::BleuN => mean(idx, |i| Some(scores[i].lexical[2])),
        Metric::Meteor => mean(idx, |i| Some(scores[i].lexical[3])),
        Metric::RadGraph => mean(idx, |i| scores[i].graph.map(|g| g[0])),
        Metric::RgEr => mean(idx, |i| scores[i].graph.map(|g| g[1])),
        Metric::Cosine => mean(idx, |i| scores[i].cosine),
        Metric::RadCliq => mean(idx, |i| scores[i].radcliq),
        Metric::Macro14(p) => macro_over(p, &all),
        Metric::Micro14(p) => micro_over(p, &all),
        Metric::Macro5(p) => macro_over(p, &five),
        Metric::Micro5(p) => micro_over(p, &five),
    }
}

fn rate(m: &ClassMetrics, k: usize) -> Option<f64> {
    [m.precision, m.recall, m.npv, m.specificity, m.f1][k]
}

/// Fills in missing generated and reference labels with the rule labeler.
pub fn label_corpus(corpus: &mut Corpus, labeler: &Labeler) -> Result<()> {
    let labels: BTreeMap<String, _> = corpus
        .pairs()
        .par_iter()
        .map(|p| {
            let gen = p.gen_labels.is_none().then(|| labeler.label(&p.generated));
            let reference = p.ref_labels.is_none().then(|| labeler.label(&p.reference));
            (p.study_id.clone(), (gen, reference))
        })
        .collect();
    corpus.update_pairs(|p| {
        let (gen, reference) = &labels[&p.study_id];
        if let Some(g) = gen {
            p.gen_labels = Some(g.clone());
        }
        if let Some(r) = reference {
            p.ref_labels = Some(r.clone());
        }
        Ok(())
    })
}

/// Evaluates every metric the corpus supports, overall and on each stratum.
///
/// Metrics whose inputs are missing for any pair are reported unavailable
/// with the reason, as are metrics undefined on the full sample or on more
/// than 10% of resamples.
pub fn evaluate_all(corpus: &Corpus, config: &EvalConfig, strata: &[StratumSpec]) -> Result<EvaluationReport> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let n = corpus.len();
    let (scores, availability) = score_pairs(corpus, config)?;
    let table = Metric::table(config.bleu.max_n);
    let undefined = config.classification.undefined_f1;
    let active: Vec<(Metric, String)> = table
        .iter()
        .filter(|(m, _)| availability.reason(*m).is_none())
        .cloned()
        .collect();
    let with_classes = availability.labels.is_none();

    // One bootstrap per scope; all metrics of a scope share its resamples.
    let run_scope = |population: &[usize], per_class: bool| -> Result<Vec<MetricResult>> {
        let mut names: Vec<String> = active.iter().map(|(_, name)| name.clone()).collect();
        if per_class {
            for c in ObservationClass::ALL {
                names.extend(CLASS_RATES.map(|r| format!("{} {r}", c.name())));
            }
        }
        let values = |idx: &[usize]| -> Vec<Option<f64>> {
            let counts = [0, 1].map(|slot| {
                if with_classes {
                    pooled_counts(&scores, idx, slot)
                } else {
                    None
                }
            });
            let mut out: Vec<Option<f64>> = active
                .iter()
                .map(|(m, _)| metric_value(*m, &scores, idx, &counts, undefined))
                .collect();
            if per_class {
                let metrics = counts[0].map(|c| c.map(|k| class_metrics(&k)));
                for k in 0..14 {
                    for r in 0..CLASS_RATES.len() {
                        out.push(metrics.as_ref().and_then(|m| rate(&m[k], r)));
                    }
                }
            }
            out
        };
        Ok(bootstrap_many(population, &names, values, &config.bootstrap)?
            .into_iter()
            .map(MetricResult::from_result)
            .collect())
    };

    let overall_idx: Vec<usize> = (0..n).collect();
    let mut overall = run_scope(&overall_idx, with_classes)?;
    let class_results = overall.split_off(active.len());

    let mut stratum_info = Vec::new();
    let mut stratum_results = Vec::new();
    for spec in strata {
        let idx = stratum_indices(corpus, *spec)?;
        stratum_info.push(StratumInfo {
            name: spec.to_string(),
            n: idx.len(),
            fraction: idx.len() as f64 / n as f64,
        });
        let results = if idx.is_empty() {
            vec![MetricResult::unavailable("empty stratum"); active.len()]
        } else {
            run_scope(&idx, false)?
        };
        stratum_results.push(results);
    }

    let mut overall = overall.into_iter();
    let mut per_stratum: Vec<_> = stratum_results.into_iter().map(Vec::into_iter).collect();
    let metrics = table
        .iter()
        .map(|(m, name)| {
            let reason = availability.reason(*m);
            let take = |it: &mut std::vec::IntoIter<MetricResult>| match reason {
                Some(r) => MetricResult::unavailable(r),
                None => it.next().expect("one result per active metric"),
            };
            let overall = take(&mut overall);
            let strata = stratum_info
                .iter()
                .zip(per_stratum.iter_mut())
                .map(|(info, it)| (info.name.clone(), take(it)))
                .collect();
            MetricRow {
                metric: name.clone(),
                category: m.category(),
                lower_is_better: *m == Metric::RadCliq,
                overall,
                strata,
            }
        })
        .collect();

    let per_class = if with_classes {
        let mut results = class_results.into_iter();
        ObservationClass::ALL
            .iter()
            .map(|&class| {
                let n_positive = scores
                    .iter()
                    .filter(|s| s.labels.as_ref().is_some_and(|l| l[0][1][class.index()]))
                    .count();
                let mut next = || results.next().expect("five rates per class");
                ClassRow {
                    class,
                    n_positive,
                    prevalence: n_positive as f64 / n as f64,
                    precision: next(),
                    recall: next(),
                    npv: next(),
                    specificity: next(),
                    f1: next(),
                }
            })
            .collect()
    } else {
        Vec::new()
    };

    let mut notes = Vec::new();
    if with_classes {
        for policy in POLICIES {
            let counts = pooled_counts(&scores, &overall_idx, policy_slot(policy)).expect("labels present");
            let undefined: Vec<&str> = ObservationClass::ALL
                .iter()
                .filter(|c| class_metrics(&counts[c.index()]).f1.is_none())
                .map(|c| c.name())
                .collect();
            if !undefined.is_empty() {
                let how = match config.classification.undefined_f1 {
                    UndefinedPolicy::Exclude => "excluded from",
                    UndefinedPolicy::AsZero => "counted as 0 in",
                };
                notes.push(format!(
                    "uncertain {}: F1 undefined for {} on the full sample; {how} macro averages",
                    match policy {
                        UncertainPolicy::AsNegative => "as negative",
                        UncertainPolicy::AsPositive => "as positive",
                    },
                    undefined.join(", ")
                ));
            }
        }
    }
    let zero_bleu = scores.iter().filter(|s| s.lexical[1] == 0.0).count();
    if zero_bleu > 0 {
        notes.push(format!("{zero_bleu} pairs have a BLEU-1 of 0"));
    }
    let pairs = corpus
        .pairs()
        .iter()
        .zip(&scores)
        .map(|(p, s)| PairResult {
            study_id: p.study_id.clone(),
            lexical: s.scores,
            clinical: PairClinical {
                radgraph_f1: s.graph.map(|g| g[0]),
                rg_er: s.graph.map(|g| g[1]),
                chexbert_cosine: s.cosine,
                radcliq: s.radcliq,
            },
        })
        .collect();

    Ok(EvaluationReport {
        n_pairs: n,
        provenance: corpus.provenance.clone(),
        bootstrap: config.bootstrap,
        strata: stratum_info,
        metrics,
        per_class,
        notes,
        pairs,
    })
}

pub fn write_json<W: Write>(mut out: W, report: &EvaluationReport) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, report).map_err(|e| Error::InvalidInput(e.to_string()))?;
    writeln!(out).map_err(|e| Error::io("<output>", e))
}

fn summary_cells(r: &MetricResult) -> [String; 4] {
    match r.summary() {
        Some(s) => [s.point, s.median, s.ci_low, s.ci_high].map(|v| v.to_string()),
        None => Default::default(),
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::InvalidInput(format!("writing CSV: {e}"))
}

/// One row per metric; four columns (point, median, CI bounds) per scope.
pub fn write_metrics_csv<W: Write>(out: W, report: &EvaluationReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let scopes: Vec<&str> = std::iter::once("overall")
        .chain(report.strata.iter().map(|s| s.name.as_str()))
        .collect();
    let mut header = vec!["metric".to_string(), "category".into(), "lower_is_better".into()];
    for s in &scopes {
        header.extend(["point", "median", "ci_low", "ci_high"].map(|c| format!("{s}_{c}")));
    }
    w.write_record(&header).map_err(csv_error)?;
    for row in &report.metrics {
        let category = match row.category {
            Category::Lexical => "lexical",
            Category::Clinical => "clinical",
            Category::Chexpert => "chexpert",
        };
        let mut record = vec![row.metric.clone(), category.into(), row.lower_is_better.to_string()];
        record.extend(summary_cells(&row.overall));
        for s in &report.strata {
            record.extend(summary_cells(&row.strata[&s.name]));
        }
        w.write_record(&record).map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::io("<output>", e))
}

/// One row per class with the five rates.
pub fn write_per_class_csv<W: Write>(out: W, report: &EvaluationReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["class".to_string(), "n_positive".into(), "prevalence".into()];
    for r in CLASS_RATES {
        header.extend(["median", "ci_low", "ci_high"].map(|c| format!("{r}_{c}")));
    }
    w.write_record(&header).map_err(csv_error)?;
    for row in &report.per_class {
        let mut record = vec![
            row.class.name().to_string(),
            row.n_positive.to_string(),
            row.prevalence.to_string(),
        ];
        for r in [&row.precision, &row.recall, &row.npv, &row.specificity, &row.f1] {
            let [_, median, lo, hi] = summary_cells(r);
            record.extend([median, lo, hi]);
        }
        w.write_record(&record).map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::io("<output>", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ReportPair;
    use crate::labeler::{LabelVector, ObservationLabel};

    fn small_config() -> EvalConfig {
        EvalConfig {
            bootstrap: BootstrapConfig {
                n_samples: 51,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    fn text_corpus() -> Corpus {
        Corpus::new(vec![
            ReportPair::new("a", "no pleural effusion .", "no pleural effusion ."),
            ReportPair::new("b", "small left effusion .", "there is a small left pleural effusion ."),
            ReportPair::new("c", "heart size is normal .", "cardiomegaly is present .").with_indication("dyspnea"),
        ])
        .unwrap()
    }

    #[test]
    fn text_only_corpus_reports_lexical_metrics() {
        let r = evaluate_all(&text_corpus(), &small_config(), &[]).unwrap();
        assert_eq!(r.metrics.len(), 16);
        for row in &r.metrics {
            let available = row.overall.summary().is_some();
            assert_eq!(available, row.category == Category::Lexical, "{}", row.metric);
        }
        assert!(r.per_class.is_empty());
        assert_eq!(r.pairs.len(), 3);
        assert_eq!(r.pairs[0].lexical.rouge_l, 1.0);
        assert_eq!(r.pairs[0].clinical, PairClinical::default());
        let rouge = r.metric("ROUGE-L").unwrap().overall.summary().unwrap();
        assert!(rouge.ci_low <= rouge.median && rouge.median <= rouge.ci_high);
        assert!(matches!(
            &r.metric("RadCliQ").unwrap().overall,
            MetricResult::Unavailable { unavailable } if unavailable.contains("not configured")
        ));
    }

    #[test]
    fn labels_enable_classification_metrics() {
        let mut c = text_corpus();
        label_corpus(&mut c, &Labeler::new(&Default::default())).unwrap();
        let r = evaluate_all(&c, &small_config(), &StratumSpec::TABLE).unwrap();
        assert!(r.metric("Micro-F1-14").unwrap().overall.summary().is_some());
        assert_eq!(r.per_class.len(), 14);
        assert_eq!(r.strata.len(), 4);
        let ind: Vec<_> = r.strata.iter().map(|s| (s.name.as_str(), s.n)).collect();
        assert_eq!(ind[2..], [("has_indication", 1), ("no_indication", 2)]);
        assert_eq!(ind[0].1 + ind[1].1, 3);
        let effusion = &r.per_class[ObservationClass::PleuralEffusion.index()];
        assert_eq!(effusion.n_positive, 1);
    }

    #[test]
    fn class_metrics_follow_pooled_counts() {
        use ObservationClass as C;
        use ObservationLabel as L;
        let mut pairs = Vec::new();
        for (i, (g, r)) in [(L::Positive, L::Positive), (L::Negative, L::Positive), (L::Positive, L::Negative)]
            .into_iter()
            .enumerate()
        {
            let mut p = ReportPair::new(format!("s{i}"), "x", "y");
            p.gen_labels = Some(LabelVector::blank().with(C::Edema, g));
            p.ref_labels = Some(LabelVector::blank().with(C::Edema, r));
            pairs.push(p);
        }
        let r = evaluate_all(&Corpus::new(pairs).unwrap(), &small_config(), &[]).unwrap();
        // a single defined class: micro and macro both equal its F1, 2/4
        for name in ["Micro-F1-14", "Macro-F1-14"] {
            assert_eq!(r.metric(name).unwrap().overall.summary().unwrap().point, 0.5);
        }
        assert!(r.notes.iter().any(|n| n.contains("Fracture")));
    }

    #[test]
    fn csv_layout() {
        let mut c = text_corpus();
        label_corpus(&mut c, &Labeler::new(&Default::default())).unwrap();
        let r = evaluate_all(&c, &small_config(), &[StratumSpec::HasIndication]).unwrap();
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &r).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "metric,category,lower_is_better,overall_point,overall_median,overall_ci_low,overall_ci_high,\
             has_indication_point,has_indication_median,has_indication_ci_low,has_indication_ci_high"
        );
        assert!(lines.next().unwrap().starts_with("ROUGE-L,lexical,false,"));
        assert_eq!(text.lines().count(), 17);

        let mut buf = Vec::new();
        write_per_class_csv(&mut buf, &r).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 15);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let c = Corpus::new(Vec::new()).unwrap();
        assert!(matches!(evaluate_all(&c, &small_config(), &[]), Err(Error::EmptyCorpus)));
    }
}
