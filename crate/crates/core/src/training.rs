//! One-shot training with a noisy clone, and N-shot training that asks an
//! annotator about supplementary documents while an entity is ambiguous.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::background::Catalog;
use crate::docgen::ValueSampler;
use crate::factstore::{Annotation, DocumentFacts, FactError};
use crate::synthesis::{check_completeness, intersect, mip, ExtractionProgram, ProgramSet, SynthConfig, SynthError};

pub const CLONE_ATTEMPTS: usize = 100;
pub const MODEL_FILE: &str = "model.json";
pub const PROGRAM_DIR: &str = "programs";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Facts(#[from] FactError),
    #[error("value {value:?} of entity {entity} does not occur in document {doc_id}")]
    ValueNotFound { entity: String, value: String, doc_id: String },
    #[error("no fresh value for entity {entity} after {attempts} attempts")]
    CloneExhausted { entity: String, attempts: usize },
    #[error("no training documents")]
    NoDocuments,
    #[error("invalid entity name {0:?}")]
    BadEntity(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> TrainError {
    TrainError::Io { path: path.display().to_string(), message: e.to_string() }
}

/// One line of an annotation file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationEntry {
    pub entity: String,
    pub value: String,
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationEntry>, TrainError> {
    let src = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&src).map_err(|e| io_err(path, format!("line {}: {e}", e.line())))
}

/// Resolves annotation entries against a document, locating every value.
pub fn annotate(facts: &DocumentFacts, entries: &[AnnotationEntry]) -> Result<Vec<Annotation>, TrainError> {
    entries
        .iter()
        .map(|e| {
            if !is_entity_name(&e.entity) {
                return Err(TrainError::BadEntity(e.entity.clone()));
            }
            let locations = facts.locate(&e.value);
            if locations.is_empty() {
                return Err(TrainError::ValueNotFound {
                    entity: e.entity.clone(),
                    value: e.value.clone(),
                    doc_id: facts.doc_id().to_string(),
                });
            }
            Ok(Annotation { entity: e.entity.clone(), value: e.value.clone(), locations })
        })
        .collect()
}

/// Entity names become predicate and file names.
pub fn is_entity_name(s: &str) -> bool {
    s.starts_with(|c: char| c.is_ascii_lowercase())
        && s.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmbiguityReport {
    pub entity: String,
    pub locations: Vec<(usize, usize, usize)>,
    pub count: usize,
}

/// Every occurrence of the annotated value as a run of consecutive words of
/// one line, overlapping runs included; `None` if it occurs at most once.
pub fn detect_ambiguity(facts: &DocumentFacts, annotation: &Annotation) -> Option<AmbiguityReport> {
    let locations = facts.locate(&annotation.value);
    (locations.len() >= 2).then(|| AmbiguityReport {
        entity: annotation.entity.clone(),
        count: locations.len(),
        locations,
    })
}

/// Replaces every entity value at all of its locations by a fresh value
/// of the same shape that occurs nowhere else in the document.
pub fn noisy_clone(
    facts: &DocumentFacts,
    annotations: &[Annotation],
    seed: u64,
    sampler: &ValueSampler,
) -> Result<(DocumentFacts, Vec<Annotation>), TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taken: HashSet<String> = facts.tokens().iter().map(|t| t.text.clone()).collect();
    let mut replace: HashMap<usize, String> = HashMap::new();
    let mut cloned = Vec::new();
    for a in annotations {
        let spans = facts.locate(&a.value);
        if spans.is_empty() {
            return Err(TrainError::ValueNotFound {
                entity: a.entity.clone(),
                value: a.value.clone(),
                doc_id: facts.doc_id().to_string(),
            });
        }
        let want = sampler.dtypes(&a.value);
        let fresh = (0..CLONE_ATTEMPTS)
            .map(|_| sampler.sample_like(&a.value, &mut rng))
            .find(|v| {
                let parts: Vec<&str> = v.split(' ').collect();
                let distinct = parts.iter().collect::<HashSet<_>>().len() == parts.len();
                *v != a.value && distinct && sampler.dtypes(v) == want && parts.iter().all(|p| !taken.contains(*p))
            })
            .ok_or_else(|| TrainError::CloneExhausted { entity: a.entity.clone(), attempts: CLONE_ATTEMPTS })?;
        let parts: Vec<&str> = fresh.split(' ').collect();
        for &(line, first, last) in &spans {
            for (w, part) in (first..=last).zip(&parts) {
                let idx = facts.token_at(line, w).expect("located span is on the page");
                replace.insert(idx, part.to_string());
            }
        }
        taken.extend(parts.iter().map(|p| p.to_string()));
        cloned.push(Annotation { entity: a.entity.clone(), value: fresh, locations: spans });
    }
    let doc = facts.with_replacements(&replace, sampler.detector())?;
    Ok((doc, cloned))
}

/// Per-entity training outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub entity: String,
    pub programs: usize,
    /// Supplementary annotations used.
    pub k: usize,
    /// Pool documents annotated for this entity, in order.
    pub supplementary: Vec<String>,
    pub ambiguity: Option<AmbiguityReport>,
    /// No program survived.
    pub untrainable: bool,
    /// The annotator aborted while this entity was being resolved.
    pub aborted: bool,
    /// Surviving programs still disagree on some pool document.
    pub unresolved: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Os,
    Ns,
    Raw,
}

/// Metadata stored as `model.json` next to `programs/<entity>.pl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub template_id: String,
    pub mode: TrainMode,
    pub depth: usize,
    pub seed: u64,
    pub training_docs: Vec<String>,
    pub pool_size: usize,
    pub entities: Vec<EntityRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemplateModel {
    pub meta: ModelMeta,
    pub programs: BTreeMap<String, ProgramSet>,
}

impl TemplateModel {
    pub fn entities(&self) -> impl Iterator<Item = &str> {
        self.meta.entities.iter().map(|e| e.entity.as_str())
    }

    pub fn program_set(&self, entity: &str) -> Option<&ProgramSet> {
        self.programs.get(entity)
    }

    pub fn record(&self, entity: &str) -> Option<&EntityRecord> {
        self.meta.entities.iter().find(|e| e.entity == entity)
    }

    pub fn save(&self, dir: &Path) -> Result<(), TrainError> {
        let pdir = dir.join(PROGRAM_DIR);
        std::fs::create_dir_all(&pdir).map_err(|e| io_err(&pdir, e))?;
        let meta = dir.join(MODEL_FILE);
        let mut text = serde_json::to_string_pretty(&self.meta).map_err(|e| io_err(&meta, e))?;
        text.push('\n');
        std::fs::write(&meta, text).map_err(|e| io_err(&meta, e))?;
        for (entity, set) in &self.programs {
            set.save(&pdir.join(format!("{entity}.pl")))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path, catalog: &Catalog) -> Result<Self, TrainError> {
        let path = dir.join(MODEL_FILE);
        let src = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let meta: ModelMeta = serde_json::from_str(&src).map_err(|e| io_err(&path, e))?;
        let mut programs = BTreeMap::new();
        for r in &meta.entities {
            if !is_entity_name(&r.entity) {
                return Err(TrainError::BadEntity(r.entity.clone()));
            }
            let mut set = ProgramSet::load(&dir.join(PROGRAM_DIR).join(format!("{}.pl", r.entity)), catalog)?;
            set.entity = r.entity.clone();
            programs.insert(r.entity.clone(), set);
        }
        Ok(TemplateModel { meta, programs })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TrainConfig {
    pub synth: SynthConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { synth: SynthConfig::default(), seed: 0 }
    }
}

/// A request for the value of one entity in one pool document.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRequest {
    pub entity: String,
    pub doc_id: String,
    /// Distinct outputs of the surviving programs on the document, with
    /// where each occurs.
    pub candidates: Vec<Candidate>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub value: String,
    pub votes: usize,
    pub locations: Vec<(usize, usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AnnotatorReply {
    Value(String),
    Skip,
    Abort,
}

/// Supplies supplementary annotations during N-shot training.
pub trait Annotator {
    fn annotate(&mut self, request: &AnnotationRequest, doc: &DocumentFacts) -> AnnotatorReply;
}

/// Answers from a fixed table keyed by `(doc_id, entity)`; anything else is skipped.
#[derive(Clone, Debug, Default)]
pub struct ScriptedAnnotator {
    pub answers: HashMap<(String, String), String>,
    pub calls: Vec<AnnotationRequest>,
}

impl ScriptedAnnotator {
    pub fn new(answers: impl IntoIterator<Item = (String, String, String)>) -> Self {
        ScriptedAnnotator { answers: answers.into_iter().map(|(d, e, v)| ((d, e), v)).collect(), calls: Vec::new() }
    }
}

impl Annotator for ScriptedAnnotator {
    fn annotate(&mut self, request: &AnnotationRequest, _doc: &DocumentFacts) -> AnnotatorReply {
        self.calls.push(request.clone());
        match self.answers.get(&(request.doc_id.clone(), request.entity.clone())) {
            Some(v) => AnnotatorReply::Value(v.clone()),
            None => AnnotatorReply::Skip,
        }
    }
}

/// Prompts on a text stream: a candidate number, a typed value, an empty
/// line to skip, or `q` to abort.
pub struct TerminalAnnotator<R, W> {
    input: R,
    output: W,
}

impl<R: BufRead, W: Write> TerminalAnnotator<R, W> {
    pub fn new(input: R, output: W) -> Self {
        TerminalAnnotator { input, output }
    }
}

impl<R: BufRead, W: Write> Annotator for TerminalAnnotator<R, W> {
    fn annotate(&mut self, request: &AnnotationRequest, doc: &DocumentFacts) -> AnnotatorReply {
        let o = &mut self.output;
        let _ = writeln!(o, "Document {}: value of '{}'?", request.doc_id, request.entity);
        for (i, c) in request.candidates.iter().enumerate() {
            let lines: Vec<String> = c.locations.iter().map(|l| doc.line_text(l.0)).collect();
            let _ = writeln!(o, "  [{}] {}  ({} programs; {})", i + 1, c.value, c.votes, lines.join(" | "));
        }
        let _ = write!(o, "number, value, empty to skip, q to abort> ");
        let _ = o.flush();
        let mut line = String::new();
        if self.input.read_line(&mut line).unwrap_or(0) == 0 {
            return AnnotatorReply::Abort;
        }
        let line = line.trim();
        match line {
            "" => AnnotatorReply::Skip,
            "q" => AnnotatorReply::Abort,
            _ => match line.parse::<usize>() {
                Ok(i) if (1..=request.candidates.len()).contains(&i) => {
                    AnnotatorReply::Value(request.candidates[i - 1].value.clone())
                }
                _ => AnnotatorReply::Value(line.to_string()),
            },
        }
    }
}

/// One-shot training: per entity, programs synthesized on the document that
/// also hold on its noisy clone.
pub fn train_os(
    template_id: &str,
    facts: &DocumentFacts,
    annotations: &[Annotation],
    catalog: &Catalog,
    config: &TrainConfig,
) -> Result<TemplateModel, TrainError> {
    let sampler = ValueSampler::default();
    let (clone, cloned) = noisy_clone(facts, annotations, config.seed, &sampler)?;
    let sets = annotations
        .par_iter()
        .zip(&cloned)
        .map(|(a, c)| {
            let found = mip(facts, catalog, &a.entity, &a.value, &config.synth)?.set;
            let examples = [(facts, a.value.as_str()), (&clone, c.value.as_str())];
            Ok(intersect(std::slice::from_ref(&found), catalog, &examples))
        })
        .collect::<Result<Vec<ProgramSet>, TrainError>>()?;
    Ok(assemble(template_id, TrainMode::Os, facts, annotations, sets, 0, config))
}

/// Synthesis over several annotated documents with no cloning.
pub fn train_raw(
    template_id: &str,
    docs: &[(&DocumentFacts, &[Annotation])],
    catalog: &Catalog,
    config: &TrainConfig,
) -> Result<TemplateModel, TrainError> {
    let Some(&(first, annotations)) = docs.first() else {
        return Err(TrainError::NoDocuments);
    };
    let sets = annotations
        .par_iter()
        .map(|a| {
            let found = mip(first, catalog, &a.entity, &a.value, &config.synth)?.set;
            let mut examples = Vec::new();
            for (d, anns) in docs {
                let v = anns.iter().find(|b| b.entity == a.entity).map(|b| b.value.as_str()).unwrap_or("");
                examples.push((*d, v));
            }
            Ok(found.refine(catalog, &examples))
        })
        .collect::<Result<Vec<ProgramSet>, TrainError>>()?;
    let mut model = assemble(template_id, TrainMode::Raw, first, annotations, sets, 0, config);
    model.meta.training_docs = docs.iter().map(|(d, _)| d.doc_id().to_string()).collect();
    Ok(model)
}

fn assemble(
    template_id: &str,
    mode: TrainMode,
    facts: &DocumentFacts,
    annotations: &[Annotation],
    sets: Vec<ProgramSet>,
    pool_size: usize,
    config: &TrainConfig,
) -> TemplateModel {
    let mut programs = BTreeMap::new();
    let mut entities = Vec::new();
    for (a, set) in annotations.iter().zip(sets) {
        entities.push(EntityRecord {
            entity: a.entity.clone(),
            programs: set.len(),
            k: 0,
            supplementary: Vec::new(),
            ambiguity: detect_ambiguity(facts, a),
            untrainable: set.is_empty(),
            aborted: false,
            unresolved: false,
        });
        programs.insert(a.entity.clone(), set);
    }
    TemplateModel {
        meta: ModelMeta {
            template_id: template_id.to_string(),
            mode,
            depth: config.synth.depth,
            seed: config.seed,
            training_docs: vec![facts.doc_id().to_string()],
            pool_size,
            entities,
        },
        programs,
    }
}

/// Outputs of every program on `doc`, grouped by value in first-seen order;
/// programs without output are left out.
pub fn candidates(set: &ProgramSet, catalog: &Catalog, doc: &DocumentFacts) -> Vec<Candidate> {
    group_outputs(set, doc, |p| p.first_output(catalog, doc).ok().flatten())
}

fn group_outputs(
    set: &ProgramSet,
    doc: &DocumentFacts,
    mut first: impl FnMut(&ExtractionProgram) -> Option<String>,
) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = Vec::new();
    for p in set.iter() {
        let Some(v) = first(p) else { continue };
        match out.iter_mut().find(|c| c.value == v) {
            Some(c) => c.votes += 1,
            None => out.push(Candidate { locations: doc.locate(&v), value: v, votes: 1 }),
        }
    }
    out
}

/// How programs are run during disambiguation: the first output on pool
/// document `i`, and whether a program yields exactly a value there.
pub trait PoolOracle {
    fn first(&self, p: &ExtractionProgram, i: usize) -> Option<String>;
    fn holds(&self, p: &ExtractionProgram, i: usize, value: &str) -> bool;
}

struct LivePool<'a> {
    catalog: &'a Catalog,
    pool: &'a [&'a DocumentFacts],
}

impl PoolOracle for LivePool<'_> {
    fn first(&self, p: &ExtractionProgram, i: usize) -> Option<String> {
        p.first_output(self.catalog, self.pool[i]).ok().flatten()
    }

    fn holds(&self, p: &ExtractionProgram, i: usize, value: &str) -> bool {
        check_completeness(p, self.catalog, self.pool[i], value)
    }
}

/// N-shot training. Starts from [`train_os`]; for every entity whose value
/// occurs more than once in the training document, walks the pool in order,
/// asks the annotator about each document on which the surviving programs
/// disagree, and keeps the programs that also hold on the answer. Stops once
/// the survivors agree on every remaining pool document.
pub fn train_ns(
    template_id: &str,
    facts: &DocumentFacts,
    annotations: &[Annotation],
    pool: &[DocumentFacts],
    annotator: &mut dyn Annotator,
    catalog: &Catalog,
    config: &TrainConfig,
) -> Result<TemplateModel, TrainError> {
    let mut model = train_os(template_id, facts, annotations, catalog, config)?;
    model.meta.mode = TrainMode::Ns;
    model.meta.pool_size = pool.len();
    let pool: Vec<&DocumentFacts> = pool.iter().collect();
    let oracle = LivePool { catalog, pool: &pool };
    for record in model.meta.entities.iter_mut() {
        let set = model.programs.get_mut(&record.entity).expect("every entity has a set");
        disambiguate(set, record, &pool, &oracle, annotator);
    }
    Ok(model)
}

/// The N-shot loop for one entity; a no-op unless the entity was found
/// ambiguous or the pool is empty.
pub fn disambiguate(
    set: &mut ProgramSet,
    record: &mut EntityRecord,
    pool: &[&DocumentFacts],
    oracle: &dyn PoolOracle,
    annotator: &mut dyn Annotator,
) {
    if record.ambiguity.is_none() || pool.is_empty() {
        return;
    }
    let cands = |set: &ProgramSet, i: usize| group_outputs(set, pool[i], |p| oracle.first(p, i));
    for (i, doc) in pool.iter().enumerate() {
        let found = cands(set, i);
        if found.len() <= 1 {
            continue;
        }
        let request =
            AnnotationRequest { entity: record.entity.clone(), doc_id: doc.doc_id().to_string(), candidates: found };
        match annotator.annotate(&request, doc) {
            AnnotatorReply::Abort => {
                record.aborted = true;
                break;
            }
            AnnotatorReply::Skip => continue,
            AnnotatorReply::Value(v) => {
                if doc.locate(&v).is_empty() {
                    continue;
                }
                // programs outside the current set cannot hold on the
                // training document, so refining equals intersecting
                set.programs.retain(|_, p| oracle.holds(p, i, &v));
                record.k += 1;
                record.supplementary.push(doc.doc_id().to_string());
            }
        }
        if (i + 1..pool.len()).all(|j| cands(set, j).len() <= 1) {
            break;
        }
    }
    record.unresolved = !record.aborted && (0..pool.len()).any(|j| cands(set, j).len() > 1);
    record.programs = set.len();
    record.untrainable = set.is_empty();
}
