//! Report ingestion: section extraction, inclusion filtering and joining
//! generated findings with their references.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use regex::Regex;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::clinical::RadGraphAnnotation;
use crate::error::{Error, Result};
use crate::labeler::LabelVector;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawReport {
    pub study_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SectionedReport {
    pub study_id: String,
    pub findings: Option<String>,
    pub indication: Option<String>,
    #[serde(default, skip_serializing)]
    pub impression: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Section {
    Indication,
    Findings,
    Impression,
}

impl Section {
    pub const ALL: [Section; 3] = [Section::Indication, Section::Findings, Section::Impression];

    pub fn canonical_header(self) -> &'static str {
        match self {
            Section::Indication => "INDICATION",
            Section::Findings => "FINDINGS",
            Section::Impression => "IMPRESSION",
        }
    }
}

/// Header vocabulary for [`parse_sections`]. The canonical header of each
/// section is always recognised; `aliases` add further names and
/// `ignored_headers` end the current section without starting a new one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SectionRuleSet {
    pub indication: Vec<String>,
    pub findings: Vec<String>,
    pub impression: Vec<String>,
    pub ignored_headers: Vec<String>,
}

impl Default for SectionRuleSet {
    fn default() -> Self {
        let owned = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        SectionRuleSet {
            indication: owned(&[
                "HISTORY",
                "REASON FOR EXAM",
                "REASON FOR EXAMINATION",
                "CLINICAL HISTORY",
            ]),
            findings: Vec::new(),
            impression: Vec::new(),
            ignored_headers: owned(&[
                "EXAMINATION",
                "EXAM",
                "TECHNIQUE",
                "COMPARISON",
                "COMPARISONS",
                "NOTIFICATION",
                "RECOMMENDATION",
                "RECOMMENDATIONS",
                "WET READ",
            ]),
        }
    }
}

impl SectionRuleSet {
    fn aliases(&self, section: Section) -> &[String] {
        match section {
            Section::Indication => &self.indication,
            Section::Findings => &self.findings,
            Section::Impression => &self.impression,
        }
    }
}

/// Compiled form of a [`SectionRuleSet`].
#[derive(Debug, Clone)]
pub struct SectionParser {
    pattern: Regex,
    // lowercase header (single-spaced) -> target section, None for ignored headers
    targets: HashMap<String, Option<Section>>,
}

fn normalize_header(h: &str) -> String {
    h.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl SectionParser {
    pub fn new(rules: &SectionRuleSet) -> Result<Self> {
        let mut targets = HashMap::new();
        for h in &rules.ignored_headers {
            targets.insert(normalize_header(h), None);
        }
        for section in Section::ALL {
            let names = std::iter::once(section.canonical_header())
                .chain(rules.aliases(section).iter().map(String::as_str));
            for name in names {
                let key = normalize_header(name);
                if key.is_empty() {
                    return Err(Error::Config("section header must not be empty".into()));
                }
                if let Some(Some(other)) = targets.insert(key.clone(), Some(section)) {
                    if other != section {
                        return Err(Error::Config(format!(
                            "header {name:?} is assigned to more than one section"
                        )));
                    }
                }
            }
        }
        if targets.keys().any(String::is_empty) {
            return Err(Error::Config("section header must not be empty".into()));
        }

        let mut names: Vec<&String> = targets.keys().collect();
        // longest first so that "REASON FOR EXAMINATION" wins over "REASON FOR EXAM"
        names.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        let alternation = names
            .iter()
            .map(|n| {
                n.split(' ')
                    .map(regex::escape)
                    .collect::<Vec<_>>()
                    .join(r"\s+")
            })
            .collect::<Vec<_>>()
            .join("|");
        let pattern = Regex::new(&format!(r"(?i)\b({alternation})[ \t]*:"))
            .map_err(|e| Error::Config(format!("invalid section header: {e}")))?;
        Ok(SectionParser { pattern, targets })
    }

    pub fn parse(&self, report: &RawReport) -> SectionedReport {
        let text = report.text.as_str();
        let mut headers: Vec<(usize, usize, Option<Section>)> = Vec::new();
        for caps in self.pattern.captures_iter(text) {
            let whole = caps.get(0).expect("group 0");
            if !at_header_boundary(text, whole.start()) {
                continue;
            }
            let key = normalize_header(&caps[1]);
            headers.push((whole.start(), whole.end(), self.targets[&key]));
        }

        let mut out = SectionedReport {
            study_id: report.study_id.clone(),
            ..SectionedReport::default()
        };
        for (k, &(_, content_start, target)) in headers.iter().enumerate() {
            let Some(section) = target else { continue };
            let content_end = headers.get(k + 1).map_or(text.len(), |h| h.0);
            let content = normalize_whitespace(&text[content_start..content_end]);
            if content.is_empty() {
                continue;
            }
            let slot = match section {
                Section::Findings => &mut out.findings,
                Section::Indication => &mut out.indication,
                Section::Impression => &mut out.impression,
            };
            // first non-empty occurrence wins
            if slot.is_none() {
                *slot = Some(content);
            }
        }
        out
    }
}

/// A header starts a line (after optional indentation), the text, or
/// follows whitespace after a sentence-ending character.
fn at_header_boundary(text: &str, start: usize) -> bool {
    let before = &text[..start];
    let trimmed = before.trim_end_matches([' ', '\t']);
    let skipped = trimmed.len() < before.len();
    match trimmed.chars().next_back() {
        None | Some('\n') | Some('\r') => true,
        Some('.' | '!' | '?') => skipped,
        Some(_) => false,
    }
}

pub fn parse_sections(report: &RawReport, rules: &SectionRuleSet) -> Result<SectionedReport> {
    Ok(SectionParser::new(rules)?.parse(report))
}

/// Keeps the reports with a findings section, preserving order.
pub fn filter_corpus(reports: Vec<SectionedReport>) -> Vec<SectionedReport> {
    reports
        .into_iter()
        .filter(|r| r.findings.as_deref().is_some_and(|f| !f.trim().is_empty()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    Jsonl,
    Csv,
}

impl FileFormat {
    /// `.csv` files are CSV, everything else JSON lines.
    pub fn from_path(path: &Path) -> FileFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => FileFormat::Csv,
            _ => FileFormat::Jsonl,
        }
    }
}

/// Reads every record of a JSONL or CSV file, paired with its 1-based line number.
pub fn read_records<T: DeserializeOwned>(path: &Path, format: FileFormat) -> Result<Vec<(usize, T)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        FileFormat::Jsonl => {
            let mut out = Vec::new();
            for (idx, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let record = serde_json::from_str(&line)
                    .map_err(|e| Error::schema(path, idx + 1, e.to_string()))?;
                out.push((idx + 1, record));
            }
            Ok(out)
        }
        FileFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
            let headers = reader
                .headers()
                .map_err(|e| Error::schema(path, 1, e.to_string()))?
                .clone();
            let mut out = Vec::new();
            for record in reader.records() {
                let record = record.map_err(|e| {
                    let line = e.position().map_or(0, |p| p.line() as usize);
                    Error::schema(path, line, e.to_string())
                })?;
                let line = record.position().map_or(0, |p| p.line() as usize);
                let value: T = record
                    .deserialize(Some(&headers))
                    .map_err(|e| Error::schema(path, line, e.to_string()))?;
                out.push((line, value));
            }
            Ok(out)
        }
    }
}

fn check_unique<'a, I>(path: &Path, ids: I) -> Result<()>
where
    I: IntoIterator<Item = (usize, &'a str)>,
{
    let mut seen = HashSet::new();
    for (line, id) in ids {
        if !seen.insert(id) {
            return Err(Error::DuplicateStudy {
                path: path.to_owned(),
                line,
                study_id: id.to_owned(),
            });
        }
    }
    Ok(())
}

fn require_text(path: &Path, line: usize, field: &str, value: &str) -> Result<()> {
    if value.trim().is_empty() {
        return Err(Error::schema(path, line, format!("`{field}` is empty")));
    }
    Ok(())
}

pub fn load_raw_reports(path: &Path, format: FileFormat) -> Result<Vec<RawReport>> {
    let records: Vec<(usize, RawReport)> = read_records(path, format)?;
    for (line, r) in &records {
        require_text(path, *line, "study_id", &r.study_id)?;
    }
    check_unique(path, records.iter().map(|(l, r)| (*l, r.study_id.as_str())))?;
    Ok(records.into_iter().map(|(_, r)| r).collect())
}

#[derive(Debug, Clone, Deserialize)]
struct SectionedRecord {
    study_id: String,
    findings: String,
    #[serde(default)]
    indication: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
struct PredictionRecord {
    study_id: String,
    generated: String,
}

/// Loads sectioned reference reports (`study_id`, `findings`, `indication`).
pub fn load_sectioned(path: &Path, format: FileFormat) -> Result<Vec<SectionedReport>> {
    let records: Vec<(usize, SectionedRecord)> = read_records(path, format)?;
    for (line, r) in &records {
        require_text(path, *line, "study_id", &r.study_id)?;
        require_text(path, *line, "findings", &r.findings)?;
    }
    check_unique(path, records.iter().map(|(l, r)| (*l, r.study_id.as_str())))?;
    Ok(records
        .into_iter()
        .map(|(_, r)| SectionedReport {
            study_id: r.study_id,
            findings: Some(r.findings),
            indication: r.indication.filter(|s| !s.trim().is_empty()),
            impression: None,
        })
        .collect())
}

/// Loads generated findings (`study_id`, `generated`).
pub fn load_predictions(path: &Path, format: FileFormat) -> Result<Vec<(String, String)>> {
    let records: Vec<(usize, PredictionRecord)> = read_records(path, format)?;
    for (line, r) in &records {
        require_text(path, *line, "study_id", &r.study_id)?;
        require_text(path, *line, "generated", &r.generated)?;
    }
    check_unique(path, records.iter().map(|(l, r)| (*l, r.study_id.as_str())))?;
    Ok(records
        .into_iter()
        .map(|(_, r)| (r.study_id, r.generated))
        .collect())
}

#[derive(Debug, Clone, Deserialize)]
struct LabelInputRecord {
    study_id: String,
    #[serde(default)]
    findings: Option<String>,
    #[serde(default)]
    generated: Option<String>,
}

/// Loads `(study_id, text)` pairs to label: the `findings` of sectioned
/// reports or the `generated` text of predictions. Unlike the evaluation
/// loaders, missing or empty text is accepted and yields an empty string.
pub fn load_label_inputs(path: &Path, format: FileFormat) -> Result<Vec<(String, String)>> {
    let records: Vec<(usize, LabelInputRecord)> = read_records(path, format)?;
    for (line, r) in &records {
        require_text(path, *line, "study_id", &r.study_id)?;
    }
    check_unique(path, records.iter().map(|(l, r)| (*l, r.study_id.as_str())))?;
    Ok(records
        .into_iter()
        .map(|(_, r)| (r.study_id, r.findings.or(r.generated).unwrap_or_default()))
        .collect())
}

/// Writes sectioned reports as `{"study_id", "findings", "indication"}` lines.
pub fn write_sectioned_jsonl<W: Write>(mut out: W, reports: &[SectionedReport]) -> std::io::Result<()> {
    for r in reports {
        let record = serde_json::json!({
            "study_id": r.study_id,
            "findings": r.findings,
            "indication": r.indication,
        });
        writeln!(out, "{record}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportPair {
    pub study_id: String,
    pub generated: String,
    pub reference: String,
    pub indication: Option<String>,
    pub ref_labels: Option<LabelVector>,
    pub gen_labels: Option<LabelVector>,
    pub gen_graph: Option<RadGraphAnnotation>,
    pub ref_graph: Option<RadGraphAnnotation>,
    pub gen_embedding: Option<Vec<f64>>,
    pub ref_embedding: Option<Vec<f64>>,
}

impl ReportPair {
    pub fn new(study_id: impl Into<String>, generated: impl Into<String>, reference: impl Into<String>) -> Self {
        ReportPair {
            study_id: study_id.into(),
            generated: generated.into(),
            reference: reference.into(),
            indication: None,
            ref_labels: None,
            gen_labels: None,
            gen_graph: None,
            ref_graph: None,
            gen_embedding: None,
            ref_embedding: None,
        }
    }

    pub fn with_indication(mut self, indication: impl Into<String>) -> Self {
        self.indication = Some(indication.into());
        self
    }

    pub fn has_indication(&self) -> bool {
        self.indication.as_deref().is_some_and(|s| !s.trim().is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub sources: Vec<PathBuf>,
    pub n_generated: usize,
    pub n_reference: usize,
    /// Study ids present only in the prediction file.
    pub dropped_generated_only: usize,
    /// Study ids present only in the reference file.
    pub dropped_reference_only: usize,
}

/// Report pairs ordered by study id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Corpus {
    pairs: Vec<ReportPair>,
    pub provenance: Provenance,
}

impl Corpus {
    /// Builds a corpus, sorting pairs by study id. Fails on duplicate ids,
    /// empty texts or mismatched embedding dimensions.
    pub fn new(mut pairs: Vec<ReportPair>) -> Result<Self> {
        pairs.sort_by(|a, b| a.study_id.cmp(&b.study_id));
        if let Some(w) = pairs.windows(2).find(|w| w[0].study_id == w[1].study_id) {
            return Err(Error::InvalidInput(format!(
                "duplicate study_id {:?} in corpus",
                w[0].study_id
            )));
        }
        for p in &pairs {
            p.validate()?;
        }
        Ok(Corpus {
            pairs,
            provenance: Provenance::default(),
        })
    }

    pub fn pairs(&self) -> &[ReportPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Subset at the given positions, in the given order.
    pub fn select(&self, indices: &[usize]) -> Corpus {
        Corpus {
            pairs: indices.iter().map(|&i| self.pairs[i].clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// Applies `f` to every pair, keyed by study id. Used to attach labels,
    /// graphs and embeddings after loading.
    pub fn update_pairs<F>(&mut self, mut f: F) -> Result<()>
    where
        F: FnMut(&mut ReportPair) -> Result<()>,
    {
        for p in &mut self.pairs {
            f(p)?;
            p.validate()?;
        }
        Ok(())
    }

    /// Attaches labels from study-id keyed maps. Pairs absent from a map keep
    /// their previous value.
    pub fn attach_labels(
        &mut self,
        generated: &HashMap<String, LabelVector>,
        reference: &HashMap<String, LabelVector>,
    ) {
        for p in &mut self.pairs {
            if let Some(v) = generated.get(&p.study_id) {
                p.gen_labels = Some(v.clone());
            }
            if let Some(v) = reference.get(&p.study_id) {
                p.ref_labels = Some(v.clone());
            }
        }
    }

    pub fn attach_graphs(
        &mut self,
        generated: &HashMap<String, RadGraphAnnotation>,
        reference: &HashMap<String, RadGraphAnnotation>,
    ) {
        for p in &mut self.pairs {
            if let Some(g) = generated.get(&p.study_id) {
                p.gen_graph = Some(g.clone());
            }
            if let Some(g) = reference.get(&p.study_id) {
                p.ref_graph = Some(g.clone());
            }
        }
    }

    pub fn attach_embeddings(
        &mut self,
        generated: &HashMap<String, Vec<f64>>,
        reference: &HashMap<String, Vec<f64>>,
    ) -> Result<()> {
        for p in &mut self.pairs {
            if let Some(v) = generated.get(&p.study_id) {
                p.gen_embedding = Some(v.clone());
            }
            if let Some(v) = reference.get(&p.study_id) {
                p.ref_embedding = Some(v.clone());
            }
            p.validate()?;
        }
        Ok(())
    }
}

impl ReportPair {
    fn validate(&self) -> Result<()> {
        if self.study_id.is_empty() {
            return Err(Error::InvalidInput("empty study_id".into()));
        }
        if self.generated.trim().is_empty() || self.reference.trim().is_empty() {
            return Err(Error::InvalidInput(format!(
                "study {:?}: generated and reference text must be non-empty",
                self.study_id
            )));
        }
        if let (Some(a), Some(b)) = (&self.gen_embedding, &self.ref_embedding) {
            if a.len() != b.len() {
                return Err(Error::InvalidInput(format!(
                    "study {:?}: embedding dimensions differ ({} vs {})",
                    self.study_id,
                    a.len(),
                    b.len()
                )));
            }
        }
        Ok(())
    }
}

/// Joins predictions with sectioned references on study id. Ids found in
/// only one file are dropped and counted in the provenance.
pub fn load_pairs(pred_path: &Path, ref_path: &Path, format: FileFormat) -> Result<Corpus> {
    let preds = load_predictions(pred_path, format)?;
    let refs = load_sectioned(ref_path, format)?;
    let mut ref_map: BTreeMap<String, SectionedReport> =
        refs.iter().map(|r| (r.study_id.clone(), r.clone())).collect();

    let mut pairs = Vec::new();
    let mut generated_only = 0;
    for (id, generated) in &preds {
        match ref_map.remove(id) {
            Some(r) => {
                let mut pair = ReportPair::new(id.clone(), generated.clone(), r.findings.unwrap_or_default());
                pair.indication = r.indication;
                pairs.push(pair);
            }
            None => generated_only += 1,
        }
    }

    let mut corpus = Corpus::new(pairs)?;
    corpus.provenance = Provenance {
        sources: vec![pred_path.to_owned(), ref_path.to_owned()],
        n_generated: preds.len(),
        n_reference: refs.len(),
        dropped_generated_only: generated_only,
        dropped_reference_only: ref_map.len(),
    };
    Ok(corpus)
}
