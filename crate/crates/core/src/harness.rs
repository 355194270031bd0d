//! Evaluation over a test corpus and training-size sweeps.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::background::Catalog;
use crate::docgen::{read_truth, GenError, GeneratedDoc, TruthRecord, ValueSampler, TRUTH_FILE};
use crate::extraction::{run_program, vote, ExtractOptions, ExtractionResult};
use crate::factstore::{read_fact_file, Annotation, DatatypeDetector, DocumentFacts, FactError};
use crate::synthesis::{check_completeness, mip, ExtractionProgram, ProgramSet};
use crate::training::{
    detect_ambiguity, disambiguate, noisy_clone, EntityRecord, PoolOracle, ScriptedAnnotator, TemplateModel,
    TrainConfig, TrainError, TrainMode,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Facts(#[from] FactError),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("no truth for documents: {}", .0.join(", "))]
    MissingTruth(Vec<String>),
    #[error("{0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io { path: path.display().to_string(), message: e.to_string() }
}

/// Fact files plus their ground truth.
#[derive(Clone, Debug, Default)]
pub struct Corpus {
    pub docs: Vec<DocumentFacts>,
    pub truth: Vec<TruthRecord>,
}

impl Corpus {
    /// Every `*.json` fact file of `dir` in file-name order, and
    /// `truth.json` when present.
    pub fn load(dir: &Path, detector: &DatatypeDetector) -> Result<Self, HarnessError> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| io_err(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_name().is_some_and(|n| n != TRUTH_FILE))
            .collect();
        paths.sort();
        let docs = paths.iter().map(|p| read_fact_file(p, detector)).collect::<Result<Vec<_>, _>>()?;
        let tp = dir.join(TRUTH_FILE);
        let truth = if tp.exists() { read_truth(&tp)? } else { Vec::new() };
        Ok(Corpus { docs, truth })
    }

    /// An in-memory corpus, in generation order.
    pub fn from_generated(docs: &[GeneratedDoc]) -> Self {
        Corpus {
            docs: docs.iter().map(|d| d.facts.clone()).collect(),
            truth: docs.iter().flat_map(|d| d.truth.iter().cloned()).collect(),
        }
    }

    pub fn doc(&self, doc_id: &str) -> Option<&DocumentFacts> {
        self.docs.iter().find(|d| d.doc_id() == doc_id)
    }

    pub fn truth_value(&self, doc_id: &str, entity: &str) -> Option<&str> {
        truth_value(&self.truth, doc_id, entity)
    }

    /// Annotations of one document from the truth records, in record order.
    pub fn annotations(&self, doc_id: &str) -> Vec<Annotation> {
        self.truth
            .iter()
            .filter(|t| t.doc_id == doc_id)
            .map(|t| Annotation {
                entity: t.entity.clone(),
                value: t.value.clone(),
                locations: t.locations.iter().map(|l| (l[0], l[1], l[2])).collect(),
            })
            .collect()
    }
}

fn truth_value<'a>(truth: &'a [TruthRecord], doc_id: &str, entity: &str) -> Option<&'a str> {
    truth.iter().find(|t| t.doc_id == doc_id && t.entity == entity).map(|t| t.value.as_str())
}

/// Collapses runs of whitespace and trims.
pub fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn is_correct(predicted: Option<&str>, truth: &str) -> bool {
    predicted.is_some_and(|p| normalize(p) == normalize(truth))
}

/// Share of the votes that name the true value.
pub fn correctness(result: &ExtractionResult, truth: &str) -> f64 {
    let n = result.programs();
    if n == 0 {
        return 0.0;
    }
    let good: usize =
        result.distribution.iter().filter(|o| is_correct(o.value.as_deref(), truth)).map(|o| o.count).sum();
    good as f64 / n as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub template_id: String,
    pub mode: TrainMode,
    pub depth: usize,
    pub seed: u64,
    pub training_docs: Vec<String>,
    pub test_docs: usize,
    pub entropy_threshold: f64,
    pub entropy_includes_null: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityEval {
    pub entity: String,
    /// Percent of test documents extracted correctly.
    pub accuracy: f64,
    pub programs: f64,
    /// Mean over test documents of the share of programs with the right output.
    pub correctness: f64,
    pub correct: usize,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub doc_id: String,
    pub entity: String,
    pub predicted: Option<String>,
    pub truth: String,
    pub correct: bool,
    pub entropy: f64,
    pub confident: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: RunConfig,
    pub entities: Vec<EntityEval>,
    pub cases: Vec<CaseRecord>,
}

impl EvalReport {
    pub fn entity(&self, name: &str) -> Option<&EntityEval> {
        self.entities.iter().find(|e| e.entity == name)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Per-entity metrics.
    pub fn entities_csv(&self) -> String {
        let mut s = String::from("entity,accuracy,programs,correctness,correct,total\n");
        for e in &self.entities {
            let _ = writeln!(
                s,
                "{},{:.4},{:.4},{:.6},{},{}",
                e.entity, e.accuracy, e.programs, e.correctness, e.correct, e.total
            );
        }
        s
    }

    /// One row per extraction, for entropy plots.
    pub fn cases_csv(&self) -> String {
        let mut s = String::from("doc_id,entity,correct,entropy,confident\n");
        for c in &self.cases {
            let _ = writeln!(s, "{},{},{},{:.6},{}", c.doc_id, c.entity, c.correct, c.entropy, c.confident);
        }
        s
    }

    /// Writes `<stem>.json`, `<stem>_entities.csv` and `<stem>_cases.csv`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        for (name, body) in [
            (format!("{stem}.json"), self.to_json()),
            (format!("{stem}_entities.csv"), self.entities_csv()),
            (format!("{stem}_cases.csv"), self.cases_csv()),
        ] {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| io_err(&p, e))?;
        }
        Ok(())
    }
}

/// Metrics from one entity's extraction results against the truth.
fn entity_eval(entity: &str, programs: usize, cases: &[(&ExtractionResult, &str)]) -> EntityEval {
    let total = cases.len();
    let correct = cases.iter().filter(|(r, t)| is_correct(r.value.as_deref(), t)).count();
    let corr: f64 = cases.iter().map(|(r, t)| correctness(r, t)).sum();
    EntityEval {
        entity: entity.to_string(),
        accuracy: if total == 0 { 0.0 } else { 100.0 * correct as f64 / total as f64 },
        programs: programs as f64,
        correctness: if total == 0 { 0.0 } else { corr / total as f64 },
        correct,
        total,
    }
}

/// Runs the model on every document and scores it against the truth.
pub fn evaluate(
    model: &TemplateModel,
    catalog: &Catalog,
    docs: &[DocumentFacts],
    truth: &[TruthRecord],
    opts: &ExtractOptions,
) -> Result<EvalReport, HarnessError> {
    let entities: Vec<&str> = model.entities().collect();
    let missing: Vec<String> = docs
        .iter()
        .filter(|d| entities.iter().any(|e| truth_value(truth, d.doc_id(), e).is_none()))
        .map(|d| d.doc_id().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(HarnessError::MissingTruth(missing));
    }
    let sets: Vec<_> = entities.iter().map(|e| model.program_set(e).expect("model entities have sets")).collect();
    let results: Vec<Vec<ExtractionResult>> = docs
        .par_iter()
        .map(|d| {
            entities
                .iter()
                .zip(&sets)
                .map(|(e, set)| {
                    let outs: Vec<Option<String>> = set.iter().map(|p| run_program(p, catalog, d)).collect();
                    vote(e, &outs, opts)
                })
                .collect()
        })
        .collect();
    let mut cases = Vec::new();
    let mut evals = Vec::new();
    for (ei, e) in entities.iter().enumerate() {
        let pairs: Vec<(&ExtractionResult, &str)> = docs
            .iter()
            .zip(&results)
            .map(|(d, rs)| (&rs[ei], truth_value(truth, d.doc_id(), e).expect("checked above")))
            .collect();
        evals.push(entity_eval(e, sets[ei].len(), &pairs));
    }
    for (d, rs) in docs.iter().zip(&results) {
        for r in rs {
            let t = truth_value(truth, d.doc_id(), &r.entity).expect("checked above");
            cases.push(CaseRecord {
                doc_id: d.doc_id().to_string(),
                entity: r.entity.clone(),
                predicted: r.value.clone(),
                truth: t.to_string(),
                correct: is_correct(r.value.as_deref(), t),
                entropy: r.entropy,
                confident: r.confident,
            });
        }
    }
    Ok(EvalReport {
        config: RunConfig {
            template_id: model.meta.template_id.clone(),
            mode: model.meta.mode,
            depth: model.meta.depth,
            seed: model.meta.seed,
            training_docs: model.meta.training_docs.clone(),
            test_docs: docs.len(),
            entropy_threshold: opts.entropy_threshold,
            entropy_includes_null: opts.entropy_includes_null,
        },
        entities: evals,
        cases,
    })
}

/// Mean entropy over correct and over incorrect extractions of one entity.
/// Cases with no extraction (NULL winner) are left out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropySplit {
    pub entity: String,
    pub correct: usize,
    pub incorrect: usize,
    pub mean_correct: Option<f64>,
    pub mean_incorrect: Option<f64>,
}

pub fn entropy_split(report: &EvalReport) -> Vec<EntropySplit> {
    let mut by: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for c in report.cases.iter().filter(|c| c.predicted.is_some()) {
        let slot = by.entry(&c.entity).or_default();
        if c.correct {
            slot.0.push(c.entropy)
        } else {
            slot.1.push(c.entropy)
        }
    }
    let mean = |xs: &[f64]| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    report
        .entities
        .iter()
        .map(|e| {
            let (ok, bad) = by.get(e.entity.as_str()).cloned().unwrap_or_default();
            EntropySplit {
                entity: e.entity.clone(),
                correct: ok.len(),
                incorrect: bad.len(),
                mean_correct: mean(&ok),
                mean_incorrect: mean(&bad),
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    /// Largest training-set size.
    pub max_n: usize,
    /// Leading corpus documents that training sets are drawn from.
    pub pool: usize,
    /// Documents after the pool used for testing.
    pub test: usize,
    pub modes: Vec<TrainMode>,
    pub train: TrainConfig,
    pub opts: ExtractOptions,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            max_n: 5,
            pool: 5,
            test: 20,
            modes: vec![TrainMode::Raw, TrainMode::Os, TrainMode::Ns],
            train: TrainConfig::default(),
            opts: ExtractOptions::default(),
        }
    }
}

/// Metrics for one mode and training-set size, averaged over all
/// training sets of that size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mode: TrainMode,
    pub n: usize,
    pub combinations: usize,
    pub accuracy: f64,
    pub programs: f64,
    pub correctness: f64,
    pub entities: Vec<EntityEval>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub template_id: String,
    pub depth: usize,
    pub seed: u64,
    pub pool: Vec<String>,
    pub test_docs: usize,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn row(&self, mode: TrainMode, n: usize) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.mode == mode && r.n == n)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("mode,n,combinations,accuracy,programs,correctness\n");
        for r in &self.rows {
            let mode = serde_json::to_value(r.mode).expect("mode serializes");
            let _ = writeln!(
                s,
                "{},{},{},{:.4},{:.4},{:.6}",
                mode.as_str().unwrap_or_default(),
                r.n,
                r.combinations,
                r.accuracy,
                r.programs,
                r.correctness
            );
        }
        s
    }

    /// Writes `<stem>.json` and `<stem>.csv`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        for (name, body) in [(format!("{stem}.json"), self.to_json()), (format!("{stem}.csv"), self.to_csv())] {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| io_err(&p, e))?;
        }
        Ok(())
    }
}

/// All size-`n` subsets of `0..m` in lexicographic order.
pub fn combinations(m: usize, n: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, m: usize, n: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            cur.push(i);
            go(i + 1, m, n, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n <= m {
        go(0, m, n, &mut Vec::new(), &mut out);
    }
    out
}

/// What one program does on every sweep document.
struct Behaviour {
    holds: Vec<bool>,
    clone_holds: Vec<bool>,
    pool_first: Vec<Option<String>>,
    test_first: Vec<Option<String>>,
}

struct Cached<'a> {
    table: &'a HashMap<String, Behaviour>,
    /// Positions in the sweep pool of the documents being disambiguated.
    index: Vec<usize>,
    values: &'a [String],
}

impl PoolOracle for Cached<'_> {
    fn first(&self, p: &ExtractionProgram, i: usize) -> Option<String> {
        self.table[&p.canonical].pool_first[self.index[i]].clone()
    }

    fn holds(&self, p: &ExtractionProgram, i: usize, value: &str) -> bool {
        let j = self.index[i];
        // the cache only knows the true value
        value == self.values[j] && self.table[&p.canonical].holds[j]
    }
}

/// Training-set size sweep: for each mode and `n`, trains on every size-`n`
/// subset of the pool and tests on the documents after it. Synthesis runs
/// once per pool document and every program runs once per document.
pub fn sweep(
    template_id: &str,
    corpus: &Corpus,
    catalog: &Catalog,
    cfg: &SweepConfig,
) -> Result<SweepReport, HarnessError> {
    if cfg.pool == 0 || corpus.docs.len() < cfg.pool + cfg.test {
        return Err(HarnessError::Config(format!(
            "sweep needs {} pool and {} test documents, corpus has {}",
            cfg.pool,
            cfg.test,
            corpus.docs.len()
        )));
    }
    let pool: Vec<&DocumentFacts> = corpus.docs[..cfg.pool].iter().collect();
    let test = &corpus.docs[cfg.pool..cfg.pool + cfg.test];
    let anns: Vec<Vec<Annotation>> = pool.iter().map(|d| corpus.annotations(d.doc_id())).collect();
    let entities: Vec<String> = anns[0].iter().map(|a| a.entity.clone()).collect();
    let missing: Vec<String> = pool
        .iter()
        .copied()
        .chain(test)
        .filter(|d| entities.iter().any(|e| corpus.truth_value(d.doc_id(), e).is_none()))
        .map(|d| d.doc_id().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(HarnessError::MissingTruth(missing));
    }
    let sampler = ValueSampler::default();
    let clones = pool
        .iter()
        .zip(&anns)
        .map(|(d, a)| noisy_clone(d, a, cfg.train.seed, &sampler))
        .collect::<Result<Vec<_>, _>>()?;
    let jobs: Vec<(usize, &str)> =
        (0..pool.len()).flat_map(|i| entities.iter().map(move |e| (i, e.as_str()))).collect();
    let found = jobs
        .par_iter()
        .map(|&(i, e)| {
            let v = corpus.truth_value(pool[i].doc_id(), e).expect("checked above");
            Ok(mip(pool[i], catalog, e, v, &cfg.train.synth).map_err(TrainError::from)?.set)
        })
        .collect::<Result<Vec<ProgramSet>, HarnessError>>()?;
    let mips = |i: usize, ei: usize| &found[i * entities.len() + ei];

    let sizes: Vec<usize> = (1..=cfg.max_n.min(cfg.pool)).collect();
    let mut acc: BTreeMap<(usize, TrainMode), Vec<Vec<EntityEval>>> = BTreeMap::new();
    for (ei, entity) in entities.iter().enumerate() {
        let values: Vec<String> =
            pool.iter().map(|d| corpus.truth_value(d.doc_id(), entity).expect("checked above").to_string()).collect();
        let clone_values: Vec<String> = clones.iter().map(|(_, a)| a[ei].value.clone()).collect();
        let truths: Vec<&str> =
            test.iter().map(|d| corpus.truth_value(d.doc_id(), entity).expect("checked above")).collect();
        let mut union: BTreeMap<String, ExtractionProgram> = BTreeMap::new();
        for i in 0..pool.len() {
            for p in mips(i, ei).iter() {
                union.entry(p.canonical.clone()).or_insert_with(|| p.clone());
            }
        }
        let table: HashMap<String, Behaviour> = union
            .par_iter()
            .map(|(k, p)| {
                let b = Behaviour {
                    holds: pool.iter().zip(&values).map(|(d, v)| check_completeness(p, catalog, d, v)).collect(),
                    clone_holds: clones
                        .iter()
                        .zip(&clone_values)
                        .map(|((d, _), v)| check_completeness(p, catalog, d, v))
                        .collect(),
                    pool_first: pool.iter().map(|d| run_program(p, catalog, d)).collect(),
                    test_first: test.iter().map(|d| run_program(p, catalog, d)).collect(),
                };
                (k.clone(), b)
            })
            .collect();
        let score = |set: &ProgramSet| -> EntityEval {
            let results: Vec<ExtractionResult> = (0..test.len())
                .map(|t| {
                    let outs: Vec<Option<String>> =
                        set.iter().map(|p| table[&p.canonical].test_first[t].clone()).collect();
                    vote(entity, &outs, &cfg.opts)
                })
                .collect();
            let pairs: Vec<(&ExtractionResult, &str)> = results.iter().zip(truths.iter().copied()).collect();
            entity_eval(entity, set.len(), &pairs)
        };
        let filtered = |first: usize, keep: &dyn Fn(&Behaviour) -> bool| -> ProgramSet {
            let mut s = ProgramSet::new(entity);
            for p in mips(first, ei).iter().filter(|p| keep(&table[&p.canonical])) {
                s.insert(p.clone());
            }
            s
        };
        for &n in &sizes {
            for combo in combinations(pool.len(), n) {
                for &mode in &cfg.modes {
                    let set = match mode {
                        TrainMode::Raw => filtered(combo[0], &|b| combo.iter().all(|&d| b.holds[d])),
                        TrainMode::Os => filtered(combo[0], &|b| combo.iter().all(|&d| b.holds[d] && b.clone_holds[d])),
                        TrainMode::Ns => {
                            let c0 = combo[0];
                            let mut set = filtered(c0, &|b| b.holds[c0] && b.clone_holds[c0]);
                            let mut record = EntityRecord {
                                entity: entity.clone(),
                                programs: set.len(),
                                k: 0,
                                supplementary: Vec::new(),
                                ambiguity: detect_ambiguity(pool[c0], &anns[c0][ei]),
                                untrainable: set.is_empty(),
                                aborted: false,
                                unresolved: false,
                            };
                            let rest: Vec<&DocumentFacts> = combo[1..].iter().map(|&d| pool[d]).collect();
                            let oracle = Cached { table: &table, index: combo[1..].to_vec(), values: &values };
                            let mut annotator = ScriptedAnnotator::new(
                                combo[1..]
                                    .iter()
                                    .map(|&d| (pool[d].doc_id().to_string(), entity.clone(), values[d].clone())),
                            );
                            disambiguate(&mut set, &mut record, &rest, &oracle, &mut annotator);
                            set
                        }
                    };
                    let runs = acc.entry((n, mode)).or_default();
                    if runs.len() <= ei {
                        runs.resize_with(ei + 1, Vec::new);
                    }
                    runs[ei].push(score(&set));
                }
            }
        }
    }

    let mean = |xs: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = xs.collect();
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let mut rows = Vec::new();
    for &mode in &cfg.modes {
        for &n in &sizes {
            let Some(runs) = acc.get(&(n, mode)) else { continue };
            let per_entity: Vec<EntityEval> = runs
                .iter()
                .zip(&entities)
                .map(|(evals, e)| EntityEval {
                    entity: e.clone(),
                    accuracy: mean(&mut evals.iter().map(|x| x.accuracy)),
                    programs: mean(&mut evals.iter().map(|x| x.programs)),
                    correctness: mean(&mut evals.iter().map(|x| x.correctness)),
                    correct: evals.iter().map(|x| x.correct).sum(),
                    total: evals.iter().map(|x| x.total).sum(),
                })
                .collect();
            rows.push(SweepRow {
                mode,
                n,
                combinations: combinations(pool.len(), n).len(),
                accuracy: mean(&mut per_entity.iter().map(|x| x.accuracy)),
                programs: mean(&mut per_entity.iter().map(|x| x.programs)),
                correctness: mean(&mut per_entity.iter().map(|x| x.correctness)),
                entities: per_entity,
            });
        }
    }
    Ok(SweepReport {
        template_id: template_id.to_string(),
        depth: cfg.train.synth.depth,
        seed: cfg.train.seed,
        pool: pool.iter().map(|d| d.doc_id().to_string()).collect(),
        test_docs: test.len(),
        rows,
    })
}
