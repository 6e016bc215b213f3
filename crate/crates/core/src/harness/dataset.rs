//! Line-delimited question sets.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::seed::rng_for;

/// Scripted attributes available in simulation. Real datasets leave them unset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionAttributes {
    pub topic: usize,
    pub hops: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub question: String,
    #[serde(alias = "gold_answers")]
    pub golden_answers: Vec<String>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attributes: Option<QuestionAttributes>,
}

impl QuestionRecord {
    pub fn new(id: &str, question: &str, golds: &[&str]) -> Self {
        QuestionRecord {
            id: id.to_string(),
            question: question.to_string(),
            golden_answers: golds.iter().map(|g| g.to_string()).collect(),
            source: String::new(),
            attributes: None,
        }
    }
}

#[derive(Deserialize)]
struct RawRecord {
    id: Option<serde_json::Value>,
    question: Option<String>,
    #[serde(alias = "gold_answers")]
    golden_answers: Option<Vec<String>>,
    #[serde(default)]
    source: String,
    #[serde(default)]
    attributes: Option<QuestionAttributes>,
}

/// Parses dataset text. Blank lines are skipped; `source` fills records
/// that carry no source tag of their own.
pub fn parse_dataset(text: &str, source: &str) -> Result<Vec<QuestionRecord>, HarnessError> {
    let mut out = Vec::new();
    let mut ids = BTreeSet::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| HarnessError::MalformedRecord { line: line_no, reason };
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let id = match raw.id {
            Some(serde_json::Value::String(s)) if !s.trim().is_empty() => s,
            Some(serde_json::Value::Number(n)) => n.to_string(),
            _ => return Err(bad("missing id".into())),
        };
        let question = raw.question.ok_or_else(|| bad("missing question".into()))?;
        let golds = raw.golden_answers.unwrap_or_default();
        if golds.is_empty() {
            return Err(bad("missing golden_answers".into()));
        }
        if !ids.insert(id.clone()) {
            return Err(bad(format!("duplicate id '{id}'")));
        }
        let source = if raw.source.is_empty() { source.to_string() } else { raw.source };
        out.push(QuestionRecord { id, question, golden_answers: golds, source, attributes: raw.attributes });
    }
    if out.is_empty() {
        return Err(HarnessError::EmptyDataset);
    }
    Ok(out)
}

/// Loads a dataset file; the file stem is the default source tag.
pub fn load_dataset(path: &Path, limit: Option<usize>, seed: u64) -> Result<Vec<QuestionRecord>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    let source = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    let records = parse_dataset(&text, source)?;
    Ok(subsample(records, limit, seed))
}

/// Seeded subset of at most `limit` records, kept in file order.
pub fn subsample(records: Vec<QuestionRecord>, limit: Option<usize>, seed: u64) -> Vec<QuestionRecord> {
    let Some(limit) = limit.filter(|&l| l < records.len()) else { return records };
    let mut idx: Vec<usize> = (0..records.len()).collect();
    idx.shuffle(&mut rng_for(seed, &["subsample"]));
    let mut keep: Vec<usize> = idx.into_iter().take(limit).collect();
    keep.sort_unstable();
    let mut records: Vec<Option<QuestionRecord>> = records.into_iter().map(Some).collect();
    keep.into_iter().map(|i| records[i].take().expect("index used once")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_errors() {
        let ok = "{\"id\":\"1\",\"question\":\"q\",\"golden_answers\":[\"a\"]}\n\n{\"id\":2,\"question\":\"r\",\"golden_answers\":[\"b\"]}\n";
        let ds = parse_dataset(ok, "nq").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds[1].id, "2");
        assert_eq!(ds[0].source, "nq");

        let bad = "{\"id\":\"1\",\"question\":\"q\",\"golden_answers\":[\"a\"]}\n{\"id\":\"2\",\"question\":\"q\"}";
        assert!(matches!(parse_dataset(bad, "x"), Err(HarnessError::MalformedRecord { line: 2, .. })));
        assert!(matches!(parse_dataset("\n", "x"), Err(HarnessError::EmptyDataset)));
    }

    #[test]
    fn seeded_limit_is_stable() {
        let recs: Vec<_> = (0..50).map(|i| QuestionRecord::new(&i.to_string(), "q", &["a"])).collect();
        let a = subsample(recs.clone(), Some(10), 3);
        let b = subsample(recs.clone(), Some(10), 3);
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        assert_ne!(a, subsample(recs, Some(10), 4));
    }
}
