use std::path::Path;

use docsynth::background::Catalog;
use docsynth::docgen::{generate_corpus, generate_corpus_docs, NoiseProfile, TemplateSpec, TruthRecord};
use docsynth::extraction::ExtractOptions;
use docsynth::factstore::{read_fact_file, DatatypeDetector, DocumentFacts};
use docsynth::harness::{combinations, entropy_split, evaluate, sweep, Corpus, HarnessError, SweepConfig};
use docsynth::synthesis::{ExtractionProgram, ProgramSet};
use docsynth::training::{train_os, train_raw, EntityRecord, ModelMeta, TemplateModel, TrainMode};

fn running_example() -> DocumentFacts {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/running_example.json");
    read_fact_file(&p, &DatatypeDetector::default()).unwrap()
}

fn edited(d: &DocumentFacts, id: &str, edit: impl Fn(&str) -> Option<String>) -> DocumentFacts {
    let raw = d.raw_tokens().into_iter().filter_map(|(t, b)| edit(&t).map(|t| (t, b))).collect();
    DocumentFacts::new(id, d.page(), raw, &DatatypeDetector::default()).unwrap()
}

fn truth(doc_id: &str, entity: &str, value: &str) -> TruthRecord {
    TruthRecord { doc_id: doc_id.into(), entity: entity.into(), value: value.into(), locations: Vec::new() }
}

fn model(entity: &str, sources: &[&str], cat: &Catalog) -> TemplateModel {
    let mut set = ProgramSet::new(entity);
    for s in sources {
        set.insert(ExtractionProgram::parse(s, cat).unwrap());
    }
    TemplateModel {
        meta: ModelMeta {
            template_id: "letter".into(),
            mode: TrainMode::Os,
            depth: 3,
            seed: 0,
            training_docs: vec!["d1".into()],
            pool_size: 0,
            entities: vec![EntityRecord {
                entity: entity.into(),
                programs: set.len(),
                k: 0,
                supplementary: Vec::new(),
                ambiguity: None,
                untrainable: set.is_empty(),
                aborted: false,
                unresolved: false,
            }],
        },
        programs: [(entity.to_string(), set)].into_iter().collect(),
    }
}

const PLEASE: &str = "corr(A,B) :- has_keyword('Please',A,C), has_line_below(C,B).";
const STREET: &str = "corr(A,B) :- has_keyword('Hauptstr.',A,C), has_line_below(C,B).";
const QUOTE: &str = "corr(A,B) :- has_keyword('quote',A,C), has_line_below(C,B).";

/// d1 as is, d2 with a new reference, d3 without "Please".
fn three_docs() -> (Vec<DocumentFacts>, Vec<TruthRecord>) {
    let d = running_example();
    let d1 = edited(&d, "d1", |t| Some(t.to_string()));
    let d2 = edited(&d, "d2", |t| Some(if t == "186FDBC1802472" { "77AB".into() } else { t.to_string() }));
    let d3 = edited(&d, "d3", |t| (t != "Please").then(|| t.to_string()));
    let truth =
        vec![truth("d1", "corr", "186FDBC1802472"), truth("d2", "corr", "77AB"), truth("d3", "corr", "186FDBC1802472")];
    (vec![d1, d2, d3], truth)
}

#[test]
fn evaluation_matches_hand_count() {
    let cat = Catalog::builtin();
    let m = model("corr", &[PLEASE, STREET, QUOTE], &cat);
    let (docs, truth) = three_docs();
    for p in m.program_set("corr").unwrap().iter() {
        let outs: Vec<_> = docs.iter().map(|d| docsynth::extraction::run_program(p, &cat, d)).collect();
        let want: Vec<Option<&str>> = match p.canonical.contains("Hauptstr.") {
            true => vec![Some("10115 Berlin"); 3],
            false if p.canonical.contains("Please") => vec![Some("186FDBC1802472"), Some("77AB"), None],
            false => vec![Some("186FDBC1802472"), Some("77AB"), Some("186FDBC1802472")],
        };
        assert_eq!(outs.iter().map(|o| o.as_deref()).collect::<Vec<_>>(), want, "{}", p.canonical);
    }

    let r = evaluate(&m, &cat, &docs, &truth, &ExtractOptions::default()).unwrap();
    let e = r.entity("corr").unwrap();
    assert_eq!((e.correct, e.total), (2, 3));
    assert!((e.accuracy - 200.0 / 3.0).abs() < 1e-9);
    assert_eq!(e.programs, 3.0);
    assert!((e.correctness - 5.0 / 9.0).abs() < 1e-12);

    // d3: one vote each for the street line, the reference and NULL; the
    // smaller value wins the tie
    let c3 = &r.cases[2];
    assert_eq!(c3.predicted.as_deref(), Some("10115 Berlin"));
    assert!(!c3.correct);
    assert!((c3.entropy - 3f64.log2()).abs() < 1e-12);
    let h = -(2.0 / 3.0 * (2.0f64 / 3.0).log2() + 1.0 / 3.0 * (1.0f64 / 3.0).log2());
    for c in &r.cases[..2] {
        assert!(c.correct);
        assert!((c.entropy - h).abs() < 1e-12);
        assert!(!c.confident);
    }

    let split = entropy_split(&r);
    assert_eq!((split[0].correct, split[0].incorrect), (2, 1));
    assert_eq!(r.config.test_docs, 3);
}

#[test]
fn missing_truth_lists_documents() {
    let cat = Catalog::builtin();
    let m = model("corr", &[PLEASE], &cat);
    let (docs, truth) = three_docs();
    let partial: Vec<_> = truth.into_iter().filter(|t| t.doc_id == "d2").collect();
    match evaluate(&m, &cat, &docs, &partial, &ExtractOptions::default()) {
        Err(HarnessError::MissingTruth(ids)) => assert_eq!(ids, vec!["d1".to_string(), "d3".to_string()]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn empty_program_set_scores_zero() {
    let cat = Catalog::builtin();
    let m = model("corr", &[], &cat);
    let (docs, truth) = three_docs();
    let r = evaluate(&m, &cat, &docs, &truth, &ExtractOptions::default()).unwrap();
    let e = r.entity("corr").unwrap();
    assert_eq!((e.accuracy, e.programs, e.correctness, e.correct), (0.0, 0.0, 0.0, 0));
    assert!(r.cases.iter().all(|c| c.predicted.is_none()));
}

#[test]
fn reports_are_reproducible() {
    let cat = Catalog::builtin();
    let spec = TemplateSpec::builtin("doctor2").unwrap();
    let docs = generate_corpus_docs(&spec, 6, 3, &NoiseProfile::none()).unwrap();
    let c = Corpus::from_generated(&docs);
    let run = || {
        let m = train_os("doctor2", &c.docs[0], &c.annotations(c.docs[0].doc_id()), &cat, &Default::default()).unwrap();
        evaluate(&m, &cat, &c.docs[1..], &c.truth, &ExtractOptions::default()).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.to_json(), b.to_json());
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    a.write(da.path(), "eval").unwrap();
    b.write(db.path(), "eval").unwrap();
    for f in ["eval.json", "eval_entities.csv", "eval_cases.csv"] {
        assert_eq!(std::fs::read(da.path().join(f)).unwrap(), std::fs::read(db.path().join(f)).unwrap(), "{f}");
    }
    assert_eq!(a.cases.len(), 5 * spec.entities().len());
}

#[test]
fn corpus_loads_from_a_generated_directory() {
    let spec = TemplateSpec::builtin("patent").unwrap();
    let dir = tempfile::tempdir().unwrap();
    generate_corpus(&spec, 4, 9, &NoiseProfile::none(), dir.path()).unwrap();
    let c = Corpus::load(dir.path(), &DatatypeDetector::default()).unwrap();
    let mem = Corpus::from_generated(&generate_corpus_docs(&spec, 4, 9, &NoiseProfile::none()).unwrap());
    let ids: Vec<_> = c.docs.iter().map(|d| d.doc_id()).collect();
    assert_eq!(ids, mem.docs.iter().map(|d| d.doc_id()).collect::<Vec<_>>());
    assert_eq!(c.truth, mem.truth);
    let first = &spec.entities()[0];
    assert_eq!(c.truth_value(ids[2], first), mem.truth_value(ids[2], first));
    assert_eq!(c.annotations(ids[0]).len(), spec.entities().len());
}

#[test]
fn combinations_are_lexicographic() {
    assert_eq!(combinations(4, 2), vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
    assert_eq!(combinations(5, 0), vec![Vec::<usize>::new()]);
    assert!(combinations(2, 3).is_empty());
    for n in 0..=5 {
        let binom = [1, 5, 10, 10, 5, 1][n];
        assert_eq!(combinations(5, n).len(), binom);
    }
}

const SMALL: &str = r#"{
  "template_id": "small",
  "page": {"width": 800, "height": 600},
  "elements": [
    {"id": "title", "text": "Lieferschein Nord", "x": 50, "y": 40},
    {"id": "order", "text": "Auftrag:", "x": 50, "y": 100},
    {"id": "note", "text": "Bitte angeben", "x": 400, "y": 100},
    {"id": "sender", "text": "Absender", "x": 50, "y": 200}
  ],
  "fields": [
    {"entity": "order_no", "dtype": "alphanumeric", "length": 8,
     "placements": [{"rule": "right_of", "anchor": "order", "gap": 1}]},
    {"entity": "sender_name", "dtype": "name", "length": 2,
     "placements": [{"rule": "below", "anchor": "sender"}]}
  ],
  "synonyms": {}
}"#;

#[test]
fn sweep_rows_agree_with_direct_training() {
    let cat = Catalog::builtin();
    let spec = TemplateSpec::from_json(SMALL).unwrap();
    let docs = generate_corpus_docs(&spec, 8, 5, &NoiseProfile::none()).unwrap();
    let c = Corpus::from_generated(&docs);
    let cfg = SweepConfig { max_n: 2, pool: 5, test: 3, ..Default::default() };

    let short = Corpus { docs: c.docs[..7].to_vec(), truth: c.truth.clone() };
    assert!(matches!(sweep("small", &short, &cat, &cfg), Err(HarnessError::Config(_))));

    let r = sweep("small", &c, &cat, &cfg).unwrap();
    assert_eq!(r.rows.len(), 6);
    for mode in [TrainMode::Raw, TrainMode::Os, TrainMode::Ns] {
        assert_eq!(r.row(mode, 1).unwrap().combinations, 5);
        assert_eq!(r.row(mode, 2).unwrap().combinations, 10);
    }
    let (os1, ns1) = (r.row(TrainMode::Os, 1).unwrap(), r.row(TrainMode::Ns, 1).unwrap());
    assert_eq!((os1.accuracy, os1.programs, os1.correctness), (ns1.accuracy, ns1.programs, ns1.correctness));

    let test = &c.docs[5..];
    let close = |a: f64, b: f64| (a - b).abs() < 1e-9;
    let mean = |xs: &[(f64, f64, f64)]| {
        let n = xs.len() as f64;
        xs.iter().fold((0.0, 0.0, 0.0), |s, x| (s.0 + x.0 / n, s.1 + x.1 / n, s.2 + x.2 / n))
    };
    let summary = |m: &TemplateModel| {
        let e = evaluate(m, &cat, test, &c.truth, &cfg.opts).unwrap();
        let k = e.entities.len() as f64;
        e.entities
            .iter()
            .fold((0.0, 0.0, 0.0), |s, x| (s.0 + x.accuracy / k, s.1 + x.programs / k, s.2 + x.correctness / k))
    };

    let os: Vec<_> = (0..5)
        .map(|i| {
            let d = &c.docs[i];
            summary(&train_os("small", d, &c.annotations(d.doc_id()), &cat, &cfg.train).unwrap())
        })
        .collect();
    let want = mean(&os);
    assert!(
        close(os1.accuracy, want.0) && close(os1.programs, want.1) && close(os1.correctness, want.2),
        "{os1:?} {want:?}"
    );

    let raw: Vec<_> = combinations(5, 2)
        .iter()
        .map(|ix| {
            let anns: Vec<_> = ix.iter().map(|&i| c.annotations(c.docs[i].doc_id())).collect();
            let pairs: Vec<_> = ix.iter().zip(&anns).map(|(&i, a)| (&c.docs[i], a.as_slice())).collect();
            summary(&train_raw("small", &pairs, &cat, &cfg.train).unwrap())
        })
        .collect();
    let raw2 = r.row(TrainMode::Raw, 2).unwrap();
    let want = mean(&raw);
    assert!(
        close(raw2.accuracy, want.0) && close(raw2.programs, want.1) && close(raw2.correctness, want.2),
        "{raw2:?} {want:?}"
    );

    for n in 1..=2 {
        let (raw, os) = (r.row(TrainMode::Raw, n).unwrap(), r.row(TrainMode::Os, n).unwrap());
        assert!(os.programs <= raw.programs + 1e-9, "n={n}");
        assert!(raw.correctness <= os.correctness + 1e-9, "n={n}");
    }
    for mode in [TrainMode::Raw, TrainMode::Os] {
        let (a, b) = (r.row(mode, 1).unwrap(), r.row(mode, 2).unwrap());
        assert!(b.programs <= a.programs + 1e-9, "{mode:?}");
    }
    for mode in [TrainMode::Raw, TrainMode::Os, TrainMode::Ns] {
        let (a, b) = (r.row(mode, 1).unwrap(), r.row(mode, 2).unwrap());
        assert!(b.accuracy >= a.accuracy - 1e-9, "{mode:?}");
    }
    assert!(r.to_csv().starts_with("mode,n,combinations,accuracy,programs,correctness\n"));
}
