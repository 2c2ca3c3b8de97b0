use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub text: String,
    #[serde(rename = "type")]
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub src: String,
    pub dst: String,
    #[serde(rename = "type")]
    pub kind: String,
}

/// Entity/relation graph of one report.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RadGraphAnnotation {
    #[serde(default)]
    pub study_id: String,
    #[serde(default)]
    pub entities: Vec<Entity>,
    #[serde(default)]
    pub relations: Vec<Relation>,
}

type EntityKey = (String, String);

impl RadGraphAnnotation {
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for e in &self.entities {
            if !ids.insert(e.id.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "graph {:?}: duplicate entity id {:?}",
                    self.study_id, e.id
                )));
            }
        }
        for r in &self.relations {
            for end in [&r.src, &r.dst] {
                if !ids.contains(end.as_str()) {
                    return Err(Error::InvalidInput(format!(
                        "graph {:?}: relation endpoint {:?} is not an entity",
                        self.study_id, end
                    )));
                }
            }
        }
        Ok(())
    }

    fn keys_by_id(&self) -> HashMap<&str, EntityKey> {
        self.entities
            .iter()
            .map(|e| (e.id.as_str(), entity_key(e)))
            .collect()
    }
}

fn entity_key(e: &Entity) -> EntityKey {
    (e.text.trim().to_lowercase(), e.kind.clone())
}

fn multiset<T: std::hash::Hash + Eq>(items: impl IntoIterator<Item = T>) -> HashMap<T, usize> {
    let mut m = HashMap::new();
    for it in items {
        *m.entry(it).or_insert(0) += 1;
    }
    m
}

/// F1 between two multisets; both empty scores 1.
fn overlap_f1<T: std::hash::Hash + Eq>(a: &HashMap<T, usize>, b: &HashMap<T, usize>) -> f64 {
    let size_a: usize = a.values().sum();
    let size_b: usize = b.values().sum();
    if size_a == 0 && size_b == 0 {
        return 1.0;
    }
    let common: usize = a
        .iter()
        .map(|(k, &n)| n.min(b.get(k).copied().unwrap_or(0)))
        .sum();
    2.0 * common as f64 / (size_a + size_b) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadGraphScores {
    pub entity_f1: f64,
    pub relation_f1: f64,
}

impl RadGraphScores {
    pub fn mean(&self) -> f64 {
        (self.entity_f1 + self.relation_f1) / 2.0
    }
}

/// Entity F1 over `(lowercased text, type)` multisets and relation F1 over
/// distinct `(source key, target key, relation type)` triples.
pub fn radgraph_scores(pred: &RadGraphAnnotation, reference: &RadGraphAnnotation) -> Result<RadGraphScores> {
    pred.validate()?;
    reference.validate()?;
    let entities = |g: &RadGraphAnnotation| multiset(g.entities.iter().map(entity_key));
    let relations = |g: &RadGraphAnnotation| {
        let keys = g.keys_by_id();
        let set: HashSet<(EntityKey, EntityKey, String)> = g
            .relations
            .iter()
            .map(|r| (keys[r.src.as_str()].clone(), keys[r.dst.as_str()].clone(), r.kind.clone()))
            .collect();
        multiset(set)
    };
    Ok(RadGraphScores {
        entity_f1: overlap_f1(&entities(pred), &entities(reference)),
        relation_f1: overlap_f1(&relations(pred), &relations(reference)),
    })
}

/// Mean of entity and relation F1.
pub fn radgraph_f1(pred: &RadGraphAnnotation, reference: &RadGraphAnnotation) -> Result<f64> {
    radgraph_scores(pred, reference).map(|s| s.mean())
}

/// F1 over `(text, type, has outgoing relation)` entity triples.
pub fn rg_er(pred: &RadGraphAnnotation, reference: &RadGraphAnnotation) -> Result<f64> {
    pred.validate()?;
    reference.validate()?;
    let triples = |g: &RadGraphAnnotation| {
        let sources: HashSet<&str> = g.relations.iter().map(|r| r.src.as_str()).collect();
        multiset(g.entities.iter().map(|e| {
            let (text, kind) = entity_key(e);
            (text, kind, sources.contains(e.id.as_str()))
        }))
    };
    Ok(overlap_f1(&triples(pred), &triples(reference)))
}

/// Loads annotations keyed by study id, from either a JSON array or one
/// annotation per line.
pub fn load_graphs(path: &Path) -> Result<HashMap<String, RadGraphAnnotation>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records: Vec<(usize, RadGraphAnnotation)> = Vec::new();
    if text.trim_start().starts_with('[') {
        let all: Vec<RadGraphAnnotation> =
            serde_json::from_str(&text).map_err(|e| Error::schema(path, e.line(), e.to_string()))?;
        records.extend(all.into_iter().map(|g| (1, g)));
    } else {
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let g = serde_json::from_str(line).map_err(|e| Error::schema(path, idx + 1, e.to_string()))?;
            records.push((idx + 1, g));
        }
    }

    let mut out = HashMap::new();
    for (line, g) in records {
        if g.study_id.trim().is_empty() {
            return Err(Error::schema(path, line, "missing study_id"));
        }
        g.validate()
            .map_err(|e| Error::schema(path, line, e.to_string()))?;
        let id = g.study_id.clone();
        if out.insert(id.clone(), g).is_some() {
            return Err(Error::DuplicateStudy {
                path: path.to_owned(),
                line,
                study_id: id,
            });
        }
    }
    Ok(out)
}
