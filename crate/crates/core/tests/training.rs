mod support;

use std::collections::BTreeMap;
use std::io::Cursor;
use std::path::Path;

use proptest::prelude::*;

use docsynth::background::Catalog;
use docsynth::docgen::{generate_corpus_docs, GeneratedDoc, NoiseProfile, TemplateSpec, ValueSampler};
use docsynth::extraction::{extract, ExtractOptions};
use docsynth::factstore::{read_fact_file, Annotation, BoundingBox, DatatypeDetector, DocumentFacts, PageSize};
use docsynth::synthesis::{check_completeness, check_soundness, ExtractionProgram, ProgramSet};
use docsynth::training::{
    annotate, candidates, detect_ambiguity, disambiguate, noisy_clone, read_annotations, train_ns, train_os, train_raw,
    AnnotationEntry, AnnotationRequest, Annotator, AnnotatorReply, EntityRecord, PoolOracle, ScriptedAnnotator,
    TemplateModel, TerminalAnnotator, TrainConfig, TrainError, MODEL_FILE,
};

const PAGE: PageSize = PageSize { width: 1000, height: 1400 };

fn running_example() -> DocumentFacts {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/running_example.json");
    read_fact_file(&p, &DatatypeDetector::default()).unwrap()
}

fn ann(facts: &DocumentFacts, entity: &str, value: &str) -> Annotation {
    Annotation { entity: entity.into(), value: value.into(), locations: facts.locate(value) }
}

fn truth_annotations(d: &GeneratedDoc) -> Vec<Annotation> {
    d.truth
        .iter()
        .map(|t| Annotation {
            entity: t.entity.clone(),
            value: t.value.clone(),
            locations: t.locations.iter().map(|l| (l[0], l[1], l[2])).collect(),
        })
        .collect()
}

fn truth<'a>(d: &'a GeneratedDoc, entity: &str) -> &'a str {
    &d.truth.iter().find(|t| t.entity == entity).unwrap().value
}

/// Text of every token outside the annotated spans, in token order.
fn boilerplate(facts: &DocumentFacts, anns: &[Annotation]) -> Vec<String> {
    let mut skip = vec![false; facts.tokens().len()];
    for a in anns {
        for &(line, first, last) in &a.locations {
            for w in first..=last {
                skip[facts.token_at(line, w).unwrap()] = true;
            }
        }
    }
    facts.tokens().iter().zip(&skip).filter(|(_, s)| !**s).map(|(t, _)| t.text.clone()).collect()
}

#[test]
fn noisy_clone_keeps_shape_and_boilerplate() {
    let sampler = ValueSampler::default();
    let det = sampler.detector();
    for t in TemplateSpec::builtin_ids() {
        let d = &generate_corpus_docs(&TemplateSpec::builtin(t).unwrap(), 1, 5, &NoiseProfile::none()).unwrap()[0];
        let anns = truth_annotations(d);
        let (clone, cloned) = noisy_clone(&d.facts, &anns, 3, &sampler).unwrap();
        assert_eq!(clone.tokens().len(), d.facts.tokens().len());
        for (a, c) in anns.iter().zip(&cloned) {
            assert_eq!(a.entity, c.entity);
            assert_ne!(a.value, c.value);
            let (vs, cs): (Vec<&str>, Vec<&str>) = (a.value.split(' ').collect(), c.value.split(' ').collect());
            assert_eq!(vs.len(), cs.len(), "{} -> {}", a.value, c.value);
            for (v, w) in vs.iter().zip(&cs) {
                assert_eq!(det.datatype_of(v), det.datatype_of(w), "{v} -> {w}");
            }
            assert_eq!(clone.locate(&c.value), a.locations);
            assert!(clone.locate(&a.value).is_empty());
            assert!(d.facts.locate(&c.value).is_empty());
        }
        assert_eq!(boilerplate(&clone, &cloned), boilerplate(&d.facts, &anns));
        let (twice, twice_anns) = noisy_clone(&clone, &cloned, 4, &sampler).unwrap();
        assert_eq!(boilerplate(&twice, &twice_anns), boilerplate(&d.facts, &anns));
    }
}

#[test]
fn noisy_clone_is_seeded() {
    let d = running_example();
    let anns = [ann(&d, "corr", "186FDBC1802472"), ann(&d, "city", "Berlin")];
    let sampler = ValueSampler::default();
    let a = noisy_clone(&d, &anns, 1, &sampler).unwrap();
    let b = noisy_clone(&d, &anns, 1, &sampler).unwrap();
    assert_eq!(a.0.to_fact_file(), b.0.to_fact_file());
    assert_eq!(a.1, b.1);
}

#[test]
fn noisy_clone_needs_the_value() {
    let d = running_example();
    let bad = Annotation { entity: "corr".into(), value: "missing".into(), locations: vec![] };
    assert!(matches!(noisy_clone(&d, &[bad], 1, &ValueSampler::default()), Err(TrainError::ValueNotFound { .. })));
}

fn line_doc(lines: &[Vec<&str>]) -> DocumentFacts {
    let mut raw = Vec::new();
    for (r, words) in lines.iter().enumerate() {
        let y = 40 + 60 * r as u32;
        let mut x = 50;
        for w in words {
            let x1 = x + 10 * w.len() as u32;
            raw.push((w.to_string(), BoundingBox::new(x, y, x1, y + 20)));
            x = x1 + 10;
        }
    }
    DocumentFacts::new("d", PAGE, raw, &DatatypeDetector::default()).unwrap()
}

#[test]
fn ambiguity_counts_overlapping_runs() {
    let d = line_doc(&[vec!["a", "a", "a"], vec!["b"]]);
    let r = detect_ambiguity(&d, &ann(&d, "e", "a a")).unwrap();
    assert_eq!(r.count, 2);
    assert_eq!(r.locations, vec![(0, 0, 1), (0, 1, 2)]);
    assert!(detect_ambiguity(&d, &ann(&d, "e", "b")).is_none());
    assert_eq!(detect_ambiguity(&d, &ann(&d, "e", "a")).unwrap().count, 3);
}

proptest! {
    #[test]
    fn ambiguity_matches_brute_force_scan(
        lines in prop::collection::vec(prop::collection::vec(prop::sample::select(vec!["a", "b"]), 1..6), 1..4),
        value in prop::collection::vec(prop::sample::select(vec!["a", "b"]), 1..3),
    ) {
        let d = line_doc(&lines);
        let v = value.join(" ");
        let mut expected = Vec::new();
        for (l, words) in lines.iter().enumerate() {
            for s in 0..words.len() {
                if words[s..].starts_with(&value) {
                    expected.push((l, s, s + value.len() - 1));
                }
            }
        }
        let got = detect_ambiguity(&d, &ann(&d, "e", &v));
        if expected.len() >= 2 {
            let r = got.unwrap();
            prop_assert_eq!(r.count, expected.len());
            prop_assert_eq!(r.locations, expected);
        } else {
            prop_assert!(got.is_none());
        }
    }
}

#[test]
fn single_token_document_is_deterministic() {
    let d = line_doc(&[vec!["Q7X2"]]);
    let cat = Catalog::builtin();
    let anns = [ann(&d, "only", "Q7X2")];
    let a = train_os("tiny", &d, &anns, &cat, &TrainConfig::default()).unwrap();
    let b = train_os("tiny", &d, &anns, &cat, &TrainConfig::default()).unwrap();
    assert_eq!(a, b);
    for p in a.program_set("only").unwrap().iter() {
        assert!(check_completeness(p, &cat, &d, "Q7X2"), "{}", p.canonical);
    }
}

#[test]
fn raw_training_needs_a_document() {
    assert_eq!(train_raw("t", &[], &Catalog::builtin(), &TrainConfig::default()).unwrap_err(), TrainError::NoDocuments);
}

#[test]
fn annotation_files() {
    let d = running_example();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.json");
    std::fs::write(&p, r#"[{"entity": "corr", "value": "186FDBC1802472"}]"#).unwrap();
    let entries = read_annotations(&p).unwrap();
    let anns = annotate(&d, &entries).unwrap();
    assert_eq!(anns[0].locations.len(), 1);

    std::fs::write(&p, r#"[{"entity": "corr", "value": "x", "box": 1}]"#).unwrap();
    assert!(matches!(read_annotations(&p), Err(TrainError::Io { .. })));
    let missing = [AnnotationEntry { entity: "corr".into(), value: "nowhere".into() }];
    assert!(matches!(annotate(&d, &missing), Err(TrainError::ValueNotFound { .. })));
    let bad = [AnnotationEntry { entity: "Corr Name".into(), value: "Berlin".into() }];
    assert_eq!(annotate(&d, &bad).unwrap_err(), TrainError::BadEntity("Corr Name".into()));
}

#[test]
fn model_round_trips_through_a_directory() {
    let d = running_example();
    let cat = Catalog::builtin();
    let anns = [ann(&d, "corr", "186FDBC1802472"), ann(&d, "city", "Berlin")];
    let m = train_os("letter", &d, &anns, &cat, &TrainConfig { seed: 9, ..Default::default() }).unwrap();
    assert!(m.program_set("corr").unwrap().len() > 0);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    m.save(a.path()).unwrap();
    let back = TemplateModel::load(a.path(), &cat).unwrap();
    assert_eq!(back, m);
    back.save(b.path()).unwrap();
    for f in [MODEL_FILE.to_string(), "programs/corr.pl".into(), "programs/city.pl".into()] {
        assert_eq!(std::fs::read(a.path().join(&f)).unwrap(), std::fs::read(b.path().join(&f)).unwrap(), "{f}");
    }
    let text = std::fs::read_to_string(a.path().join(MODEL_FILE)).unwrap().replace("\"city\"", "\"../city\"");
    std::fs::write(a.path().join(MODEL_FILE), text).unwrap();
    assert!(matches!(TemplateModel::load(a.path(), &cat), Err(TrainError::BadEntity(_))));
}

#[test]
fn terminal_annotator_protocol() {
    let d = running_example();
    let req = AnnotationRequest {
        entity: "city".into(),
        doc_id: d.doc_id().into(),
        candidates: vec![
            docsynth::training::Candidate { value: "Berlin".into(), votes: 3, locations: d.locate("Berlin") },
            docsynth::training::Candidate { value: "ASA".into(), votes: 1, locations: d.locate("ASA") },
        ],
    };
    let cases = [
        ("2\n", AnnotatorReply::Value("ASA".into())),
        ("Sir\n", AnnotatorReply::Value("Sir".into())),
        ("9\n", AnnotatorReply::Value("9".into())),
        ("\n", AnnotatorReply::Skip),
        ("q\n", AnnotatorReply::Abort),
        ("", AnnotatorReply::Abort),
    ];
    for (input, want) in cases {
        let mut out = Vec::new();
        let got = TerminalAnnotator::new(Cursor::new(input), &mut out).annotate(&req, &d);
        assert_eq!(got, want, "{input:?}");
        let shown = String::from_utf8(out).unwrap();
        assert!(shown.contains("[1] Berlin") && shown.contains("[2] ASA"), "{shown}");
    }
}

/// The k=3 ambiguity template: a training document showing the value at
/// all three places, a pool of four and twenty test documents.
struct Ambiguous {
    train: GeneratedDoc,
    pool: Vec<GeneratedDoc>,
    test: Vec<GeneratedDoc>,
    entity: String,
}

fn ambiguous() -> Ambiguous {
    let spec = TemplateSpec::builtin("doctor1").unwrap();
    let entity = spec.fields.iter().find(|f| f.ambiguity.is_some()).unwrap().entity.clone();
    let mut docs = generate_corpus_docs(&spec, 30, 11, &NoiseProfile::none()).unwrap();
    let i = docs.iter().position(|d| d.truth.iter().any(|t| t.entity == entity && t.locations.len() == 3)).unwrap();
    let train = docs.remove(i);
    let test = docs.split_off(4);
    Ambiguous { train, pool: docs, test: test.into_iter().take(20).collect(), entity }
}

impl Ambiguous {
    fn annotations(&self) -> Vec<Annotation> {
        truth_annotations(&self.train).into_iter().filter(|a| a.entity == self.entity).collect()
    }

    fn accuracy(&self, m: &TemplateModel, cat: &Catalog) -> usize {
        self.test
            .iter()
            .filter(|d| {
                let r = extract(m, cat, &d.facts, &self.entity, &ExtractOptions::default()).unwrap();
                r.value.as_deref() == Some(truth(d, &self.entity))
            })
            .count()
    }

    fn scripted(&self) -> ScriptedAnnotator {
        ScriptedAnnotator::new(
            self.pool
                .iter()
                .map(|d| (d.facts.doc_id().to_string(), self.entity.clone(), truth(d, &self.entity).into())),
        )
    }
}

fn names(set: &ProgramSet) -> Vec<&str> {
    set.programs.keys().map(String::as_str).collect()
}

#[test]
fn n_shot_resolves_a_three_way_ambiguity() {
    let s = ambiguous();
    let cat = Catalog::builtin();
    let cfg = TrainConfig::default();
    let anns = s.annotations();
    let os = train_os("doctor1", &s.train.facts, &anns, &cat, &cfg).unwrap();
    let rec = os.record(&s.entity).unwrap();
    assert_eq!(rec.ambiguity.as_ref().unwrap().count, 3);
    assert!(s.accuracy(&os, &cat) < s.test.len());
    // some test document gets conflicting outputs from the surviving programs
    assert!(s.test.iter().any(|d| candidates(os.program_set(&s.entity).unwrap(), &cat, &d.facts).len() > 1));

    let pool: Vec<DocumentFacts> = s.pool.iter().map(|d| d.facts.clone()).collect();
    let mut annotator = s.scripted();
    let ns = train_ns("doctor1", &s.train.facts, &anns, &pool, &mut annotator, &cat, &cfg).unwrap();
    let rec = ns.record(&s.entity).unwrap();
    assert!(rec.k >= 1 && rec.k <= 2, "k = {}", rec.k);
    assert_eq!(annotator.calls.len(), rec.k);
    assert!(!rec.unresolved && !rec.aborted && !rec.untrainable);
    assert!(rec.k <= ns.meta.pool_size);
    assert_eq!(s.accuracy(&ns, &cat), s.test.len());
    let (before, after) = (os.program_set(&s.entity).unwrap(), ns.program_set(&s.entity).unwrap());
    assert!(after.len() < before.len());
    assert!(names(after).iter().all(|p| before.contains(p)));

    // every program holds on every document it was trained on
    let (clone, cloned) = noisy_clone(&s.train.facts, &anns, cfg.seed, &ValueSampler::default()).unwrap();
    let mut used: Vec<(&DocumentFacts, String)> =
        vec![(&s.train.facts, anns[0].value.clone()), (&clone, cloned[0].value.clone())];
    for id in &rec.supplementary {
        let d = s.pool.iter().find(|d| d.facts.doc_id() == id).unwrap();
        used.push((&d.facts, truth(d, &s.entity).to_string()));
    }
    for p in after.iter() {
        for (d, v) in &used {
            assert!(check_soundness(p, &cat, d, v) && check_completeness(p, &cat, d, v), "{}", p.canonical);
        }
    }
}

#[test]
fn n_shot_with_an_empty_pool_is_one_shot() {
    let s = ambiguous();
    let cat = Catalog::builtin();
    let anns = s.annotations();
    let os = train_os("doctor1", &s.train.facts, &anns, &cat, &TrainConfig::default()).unwrap();
    let mut annotator = ScriptedAnnotator::default();
    let ns = train_ns("doctor1", &s.train.facts, &anns, &[], &mut annotator, &cat, &TrainConfig::default()).unwrap();
    assert_eq!(ns.programs, os.programs);
    assert!(annotator.calls.is_empty());
}

struct Live<'a> {
    cat: &'a Catalog,
    pool: &'a [&'a DocumentFacts],
}

impl PoolOracle for Live<'_> {
    fn first(&self, p: &ExtractionProgram, i: usize) -> Option<String> {
        p.first_output(self.cat, self.pool[i]).ok().flatten()
    }

    fn holds(&self, p: &ExtractionProgram, i: usize, value: &str) -> bool {
        check_completeness(p, self.cat, self.pool[i], value)
    }
}

struct Fixed(AnnotatorReply);

impl Annotator for Fixed {
    fn annotate(&mut self, _: &AnnotationRequest, _: &DocumentFacts) -> AnnotatorReply {
        self.0.clone()
    }
}

#[test]
fn longer_pools_never_enlarge_the_set_and_replies_are_honoured() {
    let s = ambiguous();
    let cat = Catalog::builtin();
    let os = train_os("doctor1", &s.train.facts, &s.annotations(), &cat, &TrainConfig::default()).unwrap();
    let start = os.program_set(&s.entity).unwrap().clone();
    let record = os.record(&s.entity).unwrap().clone();
    let pool: Vec<&DocumentFacts> = s.pool.iter().map(|d| &d.facts).collect();
    let run = |l: usize, annotator: &mut dyn Annotator| -> (ProgramSet, EntityRecord) {
        let (mut set, mut rec) = (start.clone(), record.clone());
        disambiguate(&mut set, &mut rec, &pool[..l], &Live { cat: &cat, pool: &pool[..l] }, annotator);
        (set, rec)
    };

    let mut previous = start.clone();
    for l in 0..=pool.len() {
        let (set, rec) = run(l, &mut s.scripted());
        assert!(names(&set).iter().all(|p| previous.contains(p)), "pool {l}");
        assert_eq!(rec.programs, set.len());
        previous = set;
    }

    let (set, rec) = run(pool.len(), &mut Fixed(AnnotatorReply::Abort));
    assert!(rec.aborted && rec.k == 0 && !rec.unresolved);
    assert_eq!(set, start);
    let (set, rec) = run(pool.len(), &mut Fixed(AnnotatorReply::Skip));
    assert!(rec.unresolved && rec.k == 0 && !rec.aborted);
    assert_eq!(set, start);
    // a reply that is not on the page counts as a skip
    let (set, rec) = run(pool.len(), &mut Fixed(AnnotatorReply::Value("not there".into())));
    assert!(rec.unresolved && rec.k == 0);
    assert_eq!(set, start);
}

#[test]
fn unambiguous_template_never_asks() {
    let spec = TemplateSpec::builtin("doctor2").unwrap();
    assert!(spec.fields.iter().all(|f| f.ambiguity.is_none()));
    let docs = generate_corpus_docs(&spec, 3, 2, &NoiseProfile::none()).unwrap();
    let cat = Catalog::builtin();
    let anns = truth_annotations(&docs[0]);
    let pool: Vec<DocumentFacts> = docs[1..].iter().map(|d| d.facts.clone()).collect();
    let os = train_os("doctor2", &docs[0].facts, &anns, &cat, &TrainConfig::default()).unwrap();
    let mut annotator = ScriptedAnnotator::default();
    let ns = train_ns("doctor2", &docs[0].facts, &anns, &pool, &mut annotator, &cat, &TrainConfig::default()).unwrap();
    assert!(annotator.calls.is_empty());
    assert_eq!(ns.programs, os.programs);
    let ks: BTreeMap<&str, usize> = ns.meta.entities.iter().map(|e| (e.entity.as_str(), e.k)).collect();
    assert!(ks.values().all(|&k| k == 0), "{ks:?}");
    for e in &os.meta.entities {
        assert!(e.ambiguity.is_none() && !e.untrainable, "{}", e.entity);
        for p in os.program_set(&e.entity).unwrap().iter() {
            assert!(check_completeness(p, &cat, &docs[0].facts, truth(&docs[0], &e.entity)), "{}", p.canonical);
        }
    }
}

#[test]
fn one_shot_programs_replay_on_their_training_documents() {
    for t in TemplateSpec::builtin_ids() {
        assert!(support::replay_trained_programs(t, 11) > 0, "{t}");
    }
}
