//! Applying a trained model: every program votes, NULL is demoted, and the
//! spread of the vote gives a confidence.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::background::Catalog;
use crate::factstore::DocumentFacts;
use crate::synthesis::{ExtractionProgram, ProgramSet};
use crate::training::TemplateModel;

pub const DEFAULT_ENTROPY_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExtractError {
    #[error("model has no entity {0}")]
    UnknownEntity(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtractOptions {
    pub entropy_threshold: f64,
    /// Count programs without output as an outcome of their own.
    pub entropy_includes_null: bool,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions { entropy_threshold: DEFAULT_ENTROPY_THRESHOLD, entropy_includes_null: true }
    }
}

/// How many programs produced one output; `value: None` is NULL.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub value: Option<String>,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub entity: String,
    pub value: Option<String>,
    /// Most frequent first; equal counts by value, NULL last.
    pub distribution: Vec<Outcome>,
    pub entropy: f64,
    pub confident: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub untrained: bool,
}

impl ExtractionResult {
    /// Number of programs that voted.
    pub fn programs(&self) -> usize {
        self.distribution.iter().map(|o| o.count).sum()
    }

    /// Votes for `value`.
    pub fn votes_for(&self, value: &str) -> usize {
        self.distribution.iter().filter(|o| o.value.as_deref() == Some(value)).map(|o| o.count).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocumentExtraction {
    pub doc_id: String,
    pub results: Vec<ExtractionResult>,
}

/// First output of the program in SLD order; NULL when it fails.
pub fn run_program(p: &ExtractionProgram, catalog: &Catalog, facts: &DocumentFacts) -> Option<String> {
    p.first_output(catalog, facts).ok().flatten()
}

fn rank(a: &Outcome, b: &Outcome) -> Ordering {
    b.count.cmp(&a.count).then_with(|| match (&a.value, &b.value) {
        (Some(x), Some(y)) => x.cmp(y),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    })
}

/// Groups outputs into a ranked distribution.
pub fn distribution<'a>(outputs: impl IntoIterator<Item = &'a Option<String>>) -> Vec<Outcome> {
    let mut counts: HashMap<&Option<String>, usize> = HashMap::new();
    for o in outputs {
        *counts.entry(o).or_default() += 1;
    }
    let mut out: Vec<Outcome> = counts.into_iter().map(|(v, count)| Outcome { value: v.clone(), count }).collect();
    out.sort_by(rank);
    out
}

/// The most frequent output, or the runner-up when NULL is most frequent.
pub fn winner(dist: &[Outcome]) -> Option<String> {
    match dist {
        [first, ..] if first.value.is_some() => first.value.clone(),
        [_, second, ..] => second.value.clone(),
        _ => None,
    }
}

/// Shannon entropy in bits of the relative frequencies.
pub fn entropy(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.log2()
        })
        .sum();
    h.max(0.0)
}

/// Votes the outputs of one entity's programs.
pub fn vote(entity: &str, outputs: &[Option<String>], opts: &ExtractOptions) -> ExtractionResult {
    let dist = distribution(outputs);
    let counts: Vec<usize> =
        dist.iter().filter(|o| opts.entropy_includes_null || o.value.is_some()).map(|o| o.count).collect();
    let h = entropy(&counts);
    ExtractionResult {
        entity: entity.to_string(),
        value: winner(&dist),
        distribution: dist,
        entropy: h,
        confident: h <= opts.entropy_threshold,
        untrained: outputs.is_empty(),
    }
}

pub fn run_set(set: &ProgramSet, catalog: &Catalog, facts: &DocumentFacts) -> Vec<Option<String>> {
    set.iter().map(|p| run_program(p, catalog, facts)).collect()
}

pub fn extract(
    model: &TemplateModel,
    catalog: &Catalog,
    facts: &DocumentFacts,
    entity: &str,
    opts: &ExtractOptions,
) -> Result<ExtractionResult, ExtractError> {
    let set = model.program_set(entity).ok_or_else(|| ExtractError::UnknownEntity(entity.to_string()))?;
    Ok(vote(entity, &run_set(set, catalog, facts), opts))
}

/// Every entity of the model, in model order.
pub fn extract_document(
    model: &TemplateModel,
    catalog: &Catalog,
    facts: &DocumentFacts,
    opts: &ExtractOptions,
) -> DocumentExtraction {
    let results =
        model.entities().map(|e| extract(model, catalog, facts, e, opts).expect("model entities have sets")).collect();
    DocumentExtraction { doc_id: facts.doc_id().to_string(), results }
}
