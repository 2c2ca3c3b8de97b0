//! Fourteen-class finding labels: a rule-based labeler and a loader for
//! labels produced by an external labeling model.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textnorm::{tokenize, NormConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ObservationClass {
    #[serde(rename = "No Finding")]
    NoFinding,
    #[serde(rename = "Lung Opacity")]
    LungOpacity,
    #[serde(rename = "Atelectasis")]
    Atelectasis,
    #[serde(rename = "Edema")]
    Edema,
    #[serde(rename = "Lung Lesion")]
    LungLesion,
    #[serde(rename = "Consolidation")]
    Consolidation,
    #[serde(rename = "Pneumonia")]
    Pneumonia,
    #[serde(rename = "Cardiomegaly")]
    Cardiomegaly,
    #[serde(rename = "Enlarged Cardiomediastinum")]
    EnlargedCardiomediastinum,
    #[serde(rename = "Pleural Effusion")]
    PleuralEffusion,
    #[serde(rename = "Pleural Other")]
    PleuralOther,
    #[serde(rename = "Pneumothorax")]
    Pneumothorax,
    #[serde(rename = "Fracture")]
    Fracture,
    #[serde(rename = "Support Devices")]
    SupportDevices,
}

impl ObservationClass {
    pub const ALL: [ObservationClass; 14] = [
        ObservationClass::NoFinding,
        ObservationClass::LungOpacity,
        ObservationClass::Atelectasis,
        ObservationClass::Edema,
        ObservationClass::LungLesion,
        ObservationClass::Consolidation,
        ObservationClass::Pneumonia,
        ObservationClass::Cardiomegaly,
        ObservationClass::EnlargedCardiomediastinum,
        ObservationClass::PleuralEffusion,
        ObservationClass::PleuralOther,
        ObservationClass::Pneumothorax,
        ObservationClass::Fracture,
        ObservationClass::SupportDevices,
    ];

    /// The five competition classes.
    pub const MAJOR_FIVE: [ObservationClass; 5] = [
        ObservationClass::Atelectasis,
        ObservationClass::Cardiomegaly,
        ObservationClass::Consolidation,
        ObservationClass::Edema,
        ObservationClass::PleuralEffusion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ObservationClass::NoFinding => "No Finding",
            ObservationClass::LungOpacity => "Lung Opacity",
            ObservationClass::Atelectasis => "Atelectasis",
            ObservationClass::Edema => "Edema",
            ObservationClass::LungLesion => "Lung Lesion",
            ObservationClass::Consolidation => "Consolidation",
            ObservationClass::Pneumonia => "Pneumonia",
            ObservationClass::Cardiomegaly => "Cardiomegaly",
            ObservationClass::EnlargedCardiomediastinum => "Enlarged Cardiomediastinum",
            ObservationClass::PleuralEffusion => "Pleural Effusion",
            ObservationClass::PleuralOther => "Pleural Other",
            ObservationClass::Pneumothorax => "Pneumothorax",
            ObservationClass::Fracture => "Fracture",
            ObservationClass::SupportDevices => "Support Devices",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ObservationClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObservationClass {
    type Err = Error;

    /// Case-insensitive; spaces, underscores and hyphens are interchangeable.
    fn from_str(s: &str) -> Result<Self> {
        let key = |s: &str| -> String {
            s.chars()
                .filter(|c| !matches!(c, ' ' | '_' | '-'))
                .flat_map(char::to_lowercase)
                .collect()
        };
        let wanted = key(s.trim());
        ObservationClass::ALL
            .into_iter()
            .find(|c| key(c.name()) == wanted)
            .ok_or_else(|| Error::InvalidInput(format!("unknown observation class {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservationLabel {
    Positive,
    Negative,
    Uncertain,
    /// Not mentioned.
    #[default]
    Blank,
}

impl ObservationLabel {
    /// Code used in label CSV files: `1`, `0`, `-1`, or an empty cell.
    pub fn code(self) -> &'static str {
        match self {
            ObservationLabel::Positive => "1",
            ObservationLabel::Negative => "0",
            ObservationLabel::Uncertain => "-1",
            ObservationLabel::Blank => "",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        match code.trim() {
            "" => Some(ObservationLabel::Blank),
            "1" | "1.0" => Some(ObservationLabel::Positive),
            "0" | "0.0" => Some(ObservationLabel::Negative),
            "-1" | "-1.0" => Some(ObservationLabel::Uncertain),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct LabelVector([ObservationLabel; 14]);

impl LabelVector {
    pub fn blank() -> Self {
        LabelVector::default()
    }

    pub fn get(&self, class: ObservationClass) -> ObservationLabel {
        self.0[class.index()]
    }

    pub fn set(&mut self, class: ObservationClass, label: ObservationLabel) {
        self.0[class.index()] = label;
    }

    pub fn with(mut self, class: ObservationClass, label: ObservationLabel) -> Self {
        self.set(class, label);
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = (ObservationClass, ObservationLabel)> + '_ {
        ObservationClass::ALL.into_iter().map(|c| (c, self.get(c)))
    }
}

impl Serialize for LabelVector {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(14))?;
        for (c, l) in self.iter() {
            map.serialize_entry(c.name(), &l)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for LabelVector {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let map = BTreeMap::<ObservationClass, ObservationLabel>::deserialize(deserializer)?;
        let mut v = LabelVector::blank();
        for c in ObservationClass::ALL {
            match map.get(&c) {
                Some(&l) => v.set(c, l),
                None => {
                    return Err(serde::de::Error::custom(format!("missing class {}", c.name())));
                }
            }
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UncertainPolicy {
    AsNegative,
    AsPositive,
}

/// Binary label per class: `true` is Positive.
pub type BinaryLabels = [bool; 14];

/// Collapses labels to binary. Blank is Negative; Uncertain follows `policy`.
pub fn map_uncertain(v: &LabelVector, policy: UncertainPolicy) -> BinaryLabels {
    let mut out = [false; 14];
    for (c, l) in v.iter() {
        out[c.index()] = match l {
            ObservationLabel::Positive => true,
            ObservationLabel::Negative | ObservationLabel::Blank => false,
            ObservationLabel::Uncertain => policy == UncertainPolicy::AsPositive,
        };
    }
    out
}

static DEFAULT_LEXICON: &str = include_str!("../data/lexicon.toml");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lexicon {
    /// Positive-mention phrases for every class except No Finding.
    pub phrases: BTreeMap<ObservationClass, Vec<String>>,
    pub negation_cues: Vec<String>,
    pub uncertainty_cues: Vec<String>,
    /// Tokens, besides sentence ends, that stop a cue's scope.
    #[serde(default)]
    pub scope_breaks: Vec<String>,
    #[serde(default)]
    pub normal_phrases: Vec<String>,
    pub scope_window: usize,
}

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon::from_toml_str(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }
}

impl Lexicon {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let lexicon: Lexicon =
            toml::from_str(s).map_err(|e| Error::Config(format!("lexicon: {e}")))?;
        lexicon.validate()?;
        Ok(lexicon)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let lexicon: Lexicon =
            serde_json::from_str(s).map_err(|e| Error::Config(format!("lexicon: {e}")))?;
        lexicon.validate()?;
        Ok(lexicon)
    }

    /// Loads a `.json` or TOML lexicon file.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let is_json = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let parsed = if is_json {
            Lexicon::from_json_str(&text)
        } else {
            Lexicon::from_toml_str(&text)
        };
        parsed.map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.scope_window == 0 {
            return Err(Error::Config("lexicon scope_window must be at least 1".into()));
        }
        if self.phrases.contains_key(&ObservationClass::NoFinding) {
            return Err(Error::Config(
                "No Finding is derived from the other classes; use normal_phrases instead".into(),
            ));
        }
        for class in ObservationClass::ALL.into_iter().skip(1) {
            match self.phrases.get(&class) {
                Some(list) if !list.is_empty() => {}
                _ => {
                    return Err(Error::Config(format!("lexicon has no phrases for {class}")));
                }
            }
        }
        let lists = self
            .phrases
            .values()
            .chain([
                &self.negation_cues,
                &self.uncertainty_cues,
                &self.scope_breaks,
                &self.normal_phrases,
            ]);
        for list in lists {
            for p in list {
                if p.trim().is_empty() {
                    return Err(Error::Config("lexicon entries must be non-empty".into()));
                }
                if p.chars().any(char::is_uppercase) {
                    return Err(Error::Config(format!("lexicon entry {p:?} must be lowercase")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MentionStatus {
    Positive,
    Uncertain,
    Negative,
}

/// A lexicon with every phrase pre-tokenized.
#[derive(Debug, Clone)]
pub struct Labeler {
    phrases: Vec<(ObservationClass, Vec<Vec<String>>)>,
    negation: Vec<Vec<String>>,
    uncertainty: Vec<Vec<String>>,
    breaks: Vec<Vec<String>>,
    normal: Vec<Vec<String>>,
    window: usize,
    norm: NormConfig,
}

fn find_all<'a>(tokens: &'a [String], pattern: &[String]) -> impl Iterator<Item = (usize, usize)> + 'a {
    let pattern = pattern.to_vec();
    let n = pattern.len();
    tokens
        .windows(n.max(1))
        .enumerate()
        .filter(move |(_, w)| n > 0 && *w == pattern.as_slice())
        .map(move |(i, _)| (i, i + n))
}

fn is_word(token: &str) -> bool {
    token.chars().any(char::is_alphanumeric)
}

impl Labeler {
    pub fn new(lexicon: &Lexicon) -> Self {
        let norm = NormConfig::default();
        let tok = |s: &String| tokenize(s, &norm).tokens().to_vec();
        let tok_all = |xs: &[String]| xs.iter().map(tok).filter(|t| !t.is_empty()).collect();
        let mut breaks: Vec<Vec<String>> = tok_all(&lexicon.scope_breaks);
        for end in [".", "!"] {
            let t = vec![end.to_string()];
            if !breaks.contains(&t) {
                breaks.push(t);
            }
        }
        Labeler {
            phrases: lexicon
                .phrases
                .iter()
                .map(|(c, ps)| (*c, tok_all(ps)))
                .collect(),
            negation: tok_all(&lexicon.negation_cues),
            uncertainty: tok_all(&lexicon.uncertainty_cues),
            breaks,
            normal: tok_all(&lexicon.normal_phrases),
            window: lexicon.scope_window,
            norm,
        }
    }

    pub fn label(&self, findings: &str) -> LabelVector {
        let seq = tokenize(findings, &self.norm);
        let tokens = seq.tokens();
        let mut out = LabelVector::blank();
        if tokens.is_empty() {
            return out;
        }

        // words[i]: number of word tokens in tokens[..=i]; punctuation does not
        // count towards the scope window
        let mut words = Vec::with_capacity(tokens.len());
        let mut count = 0;
        for t in tokens {
            count += usize::from(is_word(t));
            words.push(count);
        }
        // breaks_before[i]: scope breaks starting in tokens[..i]
        let mut break_starts = vec![false; tokens.len()];
        for b in &self.breaks {
            for (s, _) in find_all(tokens, b) {
                break_starts[s] = true;
            }
        }
        let mut breaks_before = vec![0usize; tokens.len() + 1];
        for i in 0..tokens.len() {
            breaks_before[i + 1] = breaks_before[i] + usize::from(break_starts[i]);
        }

        let cue_ends = |cues: &[Vec<String>]| -> Vec<usize> {
            cues.iter()
                .flat_map(|c| find_all(tokens, c).map(|(_, e)| e - 1))
                .collect()
        };
        let negation_ends = cue_ends(&self.negation);
        let uncertainty_ends = cue_ends(&self.uncertainty);

        let governs = |cue_end: usize, start: usize| -> bool {
            if cue_end >= start {
                return false;
            }
            let distance = words[start] - words[cue_end];
            (1..=self.window).contains(&distance)
                && breaks_before[start] == breaks_before[cue_end + 1]
        };

        let mut any_negated = false;
        let mut any_abnormal = false;
        for (class, patterns) in &self.phrases {
            let mut spans: Vec<(usize, usize)> =
                patterns.iter().flat_map(|p| find_all(tokens, p)).collect();
            // keep the longest of overlapping matches of the same class
            spans.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
            let mut mentions: Vec<(usize, usize)> = Vec::new();
            for span in spans {
                match mentions.last() {
                    Some(last) if span.0 < last.1 => {}
                    _ => mentions.push(span),
                }
            }
            if mentions.is_empty() {
                continue;
            }

            let statuses = mentions.iter().map(|&(start, _)| {
                if uncertainty_ends.iter().any(|&e| governs(e, start)) {
                    MentionStatus::Uncertain
                } else if negation_ends.iter().any(|&e| governs(e, start)) {
                    MentionStatus::Negative
                } else {
                    MentionStatus::Positive
                }
            });
            // Positive > Uncertain > Negative across mentions of one class
            let mut label = ObservationLabel::Negative;
            for s in statuses {
                match s {
                    MentionStatus::Positive => {
                        label = ObservationLabel::Positive;
                        break;
                    }
                    MentionStatus::Uncertain => label = ObservationLabel::Uncertain,
                    MentionStatus::Negative => {}
                }
            }
            any_negated |= label == ObservationLabel::Negative;
            any_abnormal |= label != ObservationLabel::Negative;
            out.set(*class, label);
        }

        let normal_template = self.normal.iter().any(|p| find_all(tokens, p).next().is_some());
        if !any_abnormal && (any_negated || normal_template) {
            out.set(ObservationClass::NoFinding, ObservationLabel::Positive);
        }
        out
    }
}

/// Labels one findings text. Builds a [`Labeler`] each call; reuse a
/// `Labeler` when labeling many reports.
pub fn label_report(findings: &str, lexicon: &Lexicon) -> LabelVector {
    Labeler::new(lexicon).label(findings)
}

/// Reads a label CSV: a `study_id` column plus one column per class, cells
/// holding `1`, `0`, `-1` or nothing.
pub fn load_external_labels(path: &Path) -> Result<HashMap<String, LabelVector>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::schema(path, 1, e.to_string()))?
        .clone();

    let mut id_col = None;
    let mut columns: Vec<(usize, ObservationClass)> = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        if h.trim() == "study_id" {
            if id_col.replace(i).is_some() {
                return Err(Error::schema(path, 1, "duplicate study_id column"));
            }
            continue;
        }
        let class: ObservationClass = h
            .parse()
            .map_err(|_| Error::schema(path, 1, format!("unknown class column {h:?}")))?;
        if columns.iter().any(|(_, c)| *c == class) {
            return Err(Error::schema(path, 1, format!("duplicate class column {h:?}")));
        }
        columns.push((i, class));
    }
    let id_col = id_col.ok_or_else(|| Error::schema(path, 1, "missing study_id column"))?;
    if let Some(missing) = ObservationClass::ALL
        .into_iter()
        .find(|c| !columns.iter().any(|(_, have)| have == c))
    {
        return Err(Error::schema(path, 1, format!("missing class column {missing:?}", missing = missing.name())));
    }

    let mut out = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::schema(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let id = record[id_col].trim().to_string();
        if id.is_empty() {
            return Err(Error::schema(path, line, "empty study_id"));
        }
        let mut v = LabelVector::blank();
        for &(i, class) in &columns {
            let cell = &record[i];
            let label = ObservationLabel::from_code(cell).ok_or_else(|| {
                Error::schema(path, line, format!("invalid label {cell:?} for {class}"))
            })?;
            v.set(class, label);
        }
        if out.insert(id.clone(), v).is_some() {
            return Err(Error::DuplicateStudy {
                path: path.to_owned(),
                line,
                study_id: id,
            });
        }
    }
    Ok(out)
}

/// Writes labels in the format read by [`load_external_labels`].
pub fn write_labels_csv<'a, W, I>(out: W, rows: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = (&'a str, &'a LabelVector)>,
{
    let mut writer = csv::Writer::from_writer(out);
    let io_err = |e: csv::Error| Error::InvalidInput(format!("writing labels: {e}"));
    let header = std::iter::once("study_id").chain(ObservationClass::ALL.iter().map(|c| c.name()));
    writer.write_record(header).map_err(io_err)?;
    for (id, v) in rows {
        let record = std::iter::once(id).chain(v.iter().map(|(_, l)| l.code()));
        writer.write_record(record).map_err(io_err)?;
    }
    writer
        .flush()
        .map_err(|e| Error::InvalidInput(format!("writing labels: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use ObservationClass as C;
    use ObservationLabel as L;

    fn label(text: &str) -> LabelVector {
        label_report(text, &Lexicon::default())
    }

    #[test]
    fn class_set() {
        assert_eq!(ObservationClass::ALL.len(), 14);
        for (i, c) in ObservationClass::ALL.iter().enumerate() {
            assert_eq!(c.index(), i);
            assert_eq!(c.name().parse::<ObservationClass>().unwrap(), *c);
        }
        assert_eq!("pleural_effusion".parse::<C>().unwrap(), C::PleuralEffusion);
    }

    #[test]
    fn negated_effusion_and_pneumothorax() {
        let v = label("There is no pleural effusion or pneumothorax.");
        assert_eq!(v.get(C::PleuralEffusion), L::Negative);
        assert_eq!(v.get(C::Pneumothorax), L::Negative);
        assert_eq!(v.get(C::Cardiomegaly), L::Blank);
        assert_eq!(v.get(C::NoFinding), L::Positive);
    }

    #[test]
    fn hedged_pneumonia_is_uncertain() {
        let v = label("Suspected infection, possibly pneumonia.");
        assert_eq!(v.get(C::Pneumonia), L::Uncertain);
        assert_eq!(v.get(C::NoFinding), L::Blank);
    }

    #[test]
    fn empty_text_is_all_blank() {
        assert_eq!(label(""), LabelVector::blank());
    }

    #[test]
    fn full_normal_report() {
        let v = label(
            "AP and lateral chest radiograph demonstrates hyperinflated lungs. \
             Cardiomediastinal and hilar contours are within normal limits. \
             There is no pleural effusion or pneumothorax. No evidence of pulmonary edema. \
             Lungs are without a focal opacity worrisome for pneumonia. \
             There is no air under the right hemidiaphragm.",
        );
        for c in [C::PleuralEffusion, C::Pneumothorax, C::Edema, C::LungOpacity, C::Pneumonia] {
            assert_eq!(v.get(c), L::Negative, "{c}");
        }
        assert_eq!(v.get(C::NoFinding), L::Positive);
    }

    #[test]
    fn scope_ends_at_sentence_boundary_and_window() {
        let v = label("No pneumothorax. Small left pleural effusion.");
        assert_eq!(v.get(C::Pneumothorax), L::Negative);
        assert_eq!(v.get(C::PleuralEffusion), L::Positive);
        assert_eq!(v.get(C::NoFinding), L::Blank);

        let v = label("No acute osseous abnormality seen in the visualized ribs with fracture");
        assert_eq!(v.get(C::Fracture), L::Positive);

        let v = label("No effusion but there is cardiomegaly");
        assert_eq!(v.get(C::Cardiomegaly), L::Positive);
    }

    #[test]
    fn uncertainty_outranks_negation_on_one_mention() {
        let v = label("No definite consolidation, possibly atelectasis.");
        assert_eq!(v.get(C::Consolidation), L::Negative);
        assert_eq!(v.get(C::Atelectasis), L::Uncertain);
        let v = label("No convincing signs of pneumonia, cannot exclude pneumonia.");
        assert_eq!(v.get(C::Pneumonia), L::Uncertain);
        let v = label("cannot exclude no pneumonia");
        assert_eq!(v.get(C::Pneumonia), L::Uncertain);
    }

    #[test]
    fn positive_mention_outranks_others() {
        let v = label("No pneumothorax on the left. Right apical pneumothorax.");
        assert_eq!(v.get(C::Pneumothorax), L::Positive);
    }

    #[test]
    fn normal_template_sets_no_finding() {
        let v = label("No acute cardiopulmonary process.");
        assert_eq!(v.get(C::NoFinding), L::Positive);
        let v = label("Endotracheal tube in standard position. Lungs are clear.");
        assert_eq!(v.get(C::SupportDevices), L::Positive);
        assert_eq!(v.get(C::NoFinding), L::Blank);
    }

    #[test]
    fn map_uncertain_policies() {
        let u = LabelVector::blank().with(C::Edema, L::Uncertain);
        assert!(!map_uncertain(&u, UncertainPolicy::AsNegative)[C::Edema.index()]);
        assert!(map_uncertain(&u, UncertainPolicy::AsPositive)[C::Edema.index()]);
        let b = LabelVector::blank();
        assert!(!map_uncertain(&b, UncertainPolicy::AsPositive)[C::Edema.index()]);
        assert!(!map_uncertain(&b, UncertainPolicy::AsNegative)[C::Edema.index()]);
    }

    #[test]
    fn lexicon_validation() {
        let mut lex = Lexicon::default();
        lex.scope_window = 0;
        assert!(lex.validate().is_err());

        let mut lex = Lexicon::default();
        lex.phrases.get_mut(&C::Edema).unwrap().push("Edema".into());
        assert!(lex.validate().is_err());

        let mut lex = Lexicon::default();
        lex.phrases.remove(&C::Fracture);
        assert!(lex.validate().is_err());

        assert!(Lexicon::from_toml_str("scope_window = 3").is_err());
    }

    fn csv_file(body: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        std::fs::write(&path, body).unwrap();
        (dir, path)
    }

    fn header_with_first(first: C) -> String {
        let mut names = vec![first.name()];
        names.extend(ObservationClass::ALL.iter().filter(|c| **c != first).map(|c| c.name()));
        format!("study_id,{}\n", names.join(","))
    }

    #[test]
    fn external_labels_code_mapping() {
        let body = header_with_first(C::LungOpacity) + "s1,1,,,,,,,,,,,,,\n";
        let (_d, path) = csv_file(&body);
        let map = load_external_labels(&path).unwrap();
        assert_eq!(map["s1"], LabelVector::blank().with(C::LungOpacity, L::Positive));

        let body = header_with_first(C::Edema) + "s1,-1.0,0,1,,,,,,,,,,,\n";
        let (_d, path) = csv_file(&body);
        let v = load_external_labels(&path).unwrap()["s1"];
        assert_eq!(v.get(C::Edema), L::Uncertain);
    }

    #[test]
    fn external_labels_errors() {
        let bad_code = header_with_first(C::LungOpacity) + "s1,2,,,,,,,,,,,,,\n";
        let (_d, path) = csv_file(&bad_code);
        assert!(matches!(load_external_labels(&path), Err(Error::Schema { line: 2, .. })));

        let header = header_with_first(C::LungOpacity);
        let unknown = header.replace("Fracture", "Fractures") + "s1,,,,,,,,,,,,,,\n";
        let (_d, path) = csv_file(&unknown);
        assert!(load_external_labels(&path).is_err());

        let missing = header.replace(",Fracture", "") + "s1,,,,,,,,,,,,,\n";
        let (_d, path) = csv_file(&missing);
        assert!(load_external_labels(&path).is_err());

        let (_d, path) = csv_file(&header);
        assert!(load_external_labels(&path).unwrap().is_empty());
    }

    #[test]
    fn label_csv_round_trip() {
        let lex = Lexicon::default();
        let labeler = Labeler::new(&lex);
        let texts = [
            ("a", "No pleural effusion. Possible small left pneumothorax."),
            ("b", "Cardiomegaly with mild pulmonary edema. Right PICC line in place."),
            ("c", ""),
        ];
        let labels: Vec<(String, LabelVector)> =
            texts.iter().map(|(id, t)| (id.to_string(), labeler.label(t))).collect();
        let mut buf = Vec::new();
        write_labels_csv(&mut buf, labels.iter().map(|(id, v)| (id.as_str(), v))).unwrap();
        let (_d, path) = csv_file(std::str::from_utf8(&buf).unwrap());
        let loaded = load_external_labels(&path).unwrap();
        for (id, v) in &labels {
            assert_eq!(&loaded[id], v);
        }
    }

    const FILLER: &[&str] = &["the", "patient", "is", "stable", "comparison", "made", "to", "prior", "study", "today"];

    proptest! {
        #[test]
        fn labeling_is_total_and_deterministic(text in "\\PC{0,80}") {
            let lex = Lexicon::default();
            prop_assert_eq!(label_report(&text, &lex), label_report(&text, &lex));
        }

        #[test]
        fn appending_unrelated_sentence_changes_nothing(
            base in proptest::sample::select(vec![
                "There is no pleural effusion or pneumothorax.",
                "Suspected infection, possibly pneumonia.",
                "Moderate cardiomegaly. No edema.",
                "Lungs are clear.",
                "Small left apical pneumothorax",
            ]),
            words in proptest::collection::vec(proptest::sample::select(FILLER.to_vec()), 1..8),
        ) {
            let lex = Lexicon::default();
            let extended = format!("{base} {}.", words.join(" "));
            prop_assert_eq!(label_report(base, &lex), label_report(&extended, &lex));
        }

        #[test]
        fn no_finding_never_positive_with_another_positive(text in "[a-z ,.]{0,80}") {
            let v = label_report(&text, &Lexicon::default());
            if v.get(C::NoFinding) == L::Positive {
                prop_assert!(v.iter().skip(1).all(|(_, l)| l != L::Positive));
            }
        }

        #[test]
        fn policies_differ_only_on_uncertain(codes in proptest::collection::vec(0u8..4, 14)) {
            let mut v = LabelVector::blank();
            for (c, code) in ObservationClass::ALL.iter().zip(&codes) {
                v.set(*c, [L::Positive, L::Negative, L::Uncertain, L::Blank][*code as usize]);
            }
            let neg = map_uncertain(&v, UncertainPolicy::AsNegative);
            let pos = map_uncertain(&v, UncertainPolicy::AsPositive);
            for c in ObservationClass::ALL {
                prop_assert_eq!(neg[c.index()] != pos[c.index()], v.get(c) == L::Uncertain);
            }
        }
    }
}
