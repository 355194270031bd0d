//! Property checks shared by the test suites and the acceptance runner.
#![allow(dead_code)]

pub mod relations;

use std::collections::{BTreeSet, HashMap};

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use docsynth::background::Catalog;
use docsynth::docgen::{generate_corpus_docs, NoiseProfile, TemplateSpec, ValueSampler};
use docsynth::extraction::{vote, ExtractOptions};
use docsynth::factstore::{Annotation, DatatypeDetector, DocumentFacts, FactFile, PageSize};
use docsynth::logic::{
    meta_prove, parse_atom, parse_term, theta_subsumes, unify, NoFacts, Program, SolveConfig, Solver, Term, Var,
};
use docsynth::synthesis::{check_completeness, check_soundness, generalize, ground_clause, DEFAULT_DEPTH};
use docsynth::training::{noisy_clone, train_os, TrainConfig};

pub const PAGE: PageSize = PageSize { width: 1000, height: 1400 };

pub fn running_example() -> DocumentFacts {
    let file: FactFile = serde_json::from_str(include_str!("../fixtures/running_example.json")).unwrap();
    DocumentFacts::from_fact_file(file, &DatatypeDetector::default()).unwrap()
}

// unification

pub fn term_strategy() -> impl Strategy<Value = Term> {
    let leaf = prop_oneof![
        prop::sample::select(vec!["X", "Y", "Z"]).prop_map(Term::var),
        prop::sample::select(vec!["a", "b"]).prop_map(Term::sym),
    ];
    leaf.prop_recursive(3, 16, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(|t| Term::compound("f", vec![t])),
            (inner.clone(), inner.clone()).prop_map(|(s, t)| Term::compound("g", vec![s, t])),
            prop::collection::vec(inner, 0..3).prop_map(Term::list),
        ]
    })
}

pub fn ground_strategy() -> impl Strategy<Value = HashMap<String, Term>> {
    let g = prop_oneof![
        Just(Term::sym("a")),
        Just(Term::sym("b")),
        Just(Term::compound("f", vec![Term::sym("a")])),
        Just(Term::list(vec![Term::sym("b")])),
    ];
    (g.clone(), g.clone(), g)
        .prop_map(|(x, y, z)| HashMap::from([("X".to_string(), x), ("Y".to_string(), y), ("Z".to_string(), z)]))
}

fn ground(t: &Term, theta: &HashMap<String, Term>) -> Term {
    t.map_vars(&mut |v: &Var| theta.get(&*v.name).cloned().unwrap_or(Term::Var(v.clone())))
}

pub fn unifier_equates_both_sides(s: &Term, t: &Term) -> Result<(), TestCaseError> {
    if let Some(sigma) = unify(s, t) {
        prop_assert_eq!(sigma.apply(s), sigma.apply(t));
    }
    Ok(())
}

pub fn unifier_is_idempotent(s: &Term, t: &Term) -> Result<(), TestCaseError> {
    if let Some(sigma) = unify(s, t) {
        for x in [s, t] {
            let once = sigma.apply(x);
            prop_assert_eq!(sigma.apply(&once), once);
        }
    }
    Ok(())
}

pub fn unification_is_symmetric(s: &Term, t: &Term) -> Result<(), TestCaseError> {
    prop_assert_eq!(unify(s, t).is_some(), unify(t, s).is_some());
    Ok(())
}

/// Any ground unifier factors through the computed one.
pub fn unifier_is_most_general(s: &Term, t: &Term, theta: &HashMap<String, Term>) -> Result<(), TestCaseError> {
    if ground(s, theta) == ground(t, theta) {
        let sigma = unify(s, t);
        prop_assert!(sigma.is_some());
        let sigma = sigma.unwrap();
        for name in ["X", "Y", "Z"] {
            let v = Term::var(name);
            prop_assert_eq!(ground(&sigma.apply(&v), theta), ground(&v, theta));
        }
    }
    Ok(())
}

pub fn occurs_check_cases() {
    for (a, b) in [("X", "f(X)"), ("X", "[a,g(b,X)]"), ("g(X,Y)", "g(Y,f(X))")] {
        assert!(unify(&parse_term(a).unwrap(), &parse_term(b).unwrap()).is_none(), "{a} = {b}");
    }
    let x = parse_term("X").unwrap();
    assert!(unify(&x, &x).unwrap().is_empty());
}

// bounded search over a random graph

pub const NODES: usize = 6;

pub fn graph_program(edges: &[(usize, usize)]) -> Program {
    // the sentinel keeps edge/2 defined when the graph has no edges
    let mut src = String::from("trans(step,[X],[Y]) :- edge(X,Y).\nedge(off,off).\n");
    for (a, b) in edges {
        src.push_str(&format!("edge(n{a},n{b}).\n"));
    }
    Program::parse(&src).unwrap()
}

pub fn reachable(edges: &[(usize, usize)], depth: usize) -> BTreeSet<String> {
    let mut seen = BTreeSet::from([0]);
    let mut frontier = vec![0];
    for _ in 0..depth {
        let mut next = Vec::new();
        for &u in &frontier {
            for &(a, b) in edges {
                if a == u && seen.insert(b) {
                    next.push(b);
                }
            }
        }
        frontier = next;
    }
    seen.into_iter().map(|n| format!("[n{n}]")).collect()
}

pub fn ts_answers(p: &Program, depth: usize) -> BTreeSet<String> {
    let goal = parse_atom("ts([n0],Y)").unwrap();
    let y = match &goal.args[1] {
        Term::Var(v) => v.clone(),
        _ => unreachable!(),
    };
    Solver::new(p, &NoFacts)
        .solve(&[goal], depth)
        .unwrap()
        .answers
        .iter()
        .map(|s| s.get(&y).unwrap().to_string())
        .collect()
}

pub fn edges_strategy() -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec((0..NODES, 0..NODES), 0..12)
}

pub fn bounded_ts_matches_reachability(edges: &[(usize, usize)], depth: usize) -> Result<(), TestCaseError> {
    prop_assert_eq!(ts_answers(&graph_program(edges), depth), reachable(edges, depth));
    Ok(())
}

pub fn deeper_search_never_loses_answers(edges: &[(usize, usize)]) -> Result<(), TestCaseError> {
    let p = graph_program(edges);
    for d in 0..5 {
        let shallow = ts_answers(&p, d);
        let deep = ts_answers(&p, d + 1);
        prop_assert!(shallow.is_subset(&deep), "depth {} -> {}", d, d + 1);
    }
    Ok(())
}

// generalization

pub fn graph_clauses_subsume_their_ground_explanation(edges: &[(usize, usize)]) -> Result<(), TestCaseError> {
    let p = graph_program(edges);
    let input = parse_term("[n0]").unwrap();
    for target in 1..NODES {
        let output = parse_term(&format!("[n{target}]")).unwrap();
        let proofs = meta_prove(&input, &output, &p, &NoFacts, 4, SolveConfig::default()).unwrap();
        for t in &proofs.traces {
            prop_assert!(t.is_connected());
            prop_assert!(t.depth() <= 4);
            let g = ground_clause("reach", &input, &output, &t.steps);
            prop_assert!(theta_subsumes(&generalize(&g), &g), "{}", g);
        }
    }
    Ok(())
}

/// Returns the number of traces checked.
pub fn document_clauses_subsume_their_ground_explanation() -> usize {
    let d = running_example();
    let cat = Catalog::builtin();
    let input = Term::list(vec![Term::sym(d.doc_id())]);
    let mut checked = 0;
    for value in ["186FDBC1802472", "Berlin", "ASA"] {
        let output = Term::list(vec![Term::sym(value)]);
        let proofs = meta_prove(&input, &output, cat.program(), &d, DEFAULT_DEPTH, SolveConfig::default()).unwrap();
        assert!(!proofs.traces.is_empty(), "{value}");
        for t in &proofs.traces {
            let g = ground_clause("corr", &input, &output, &t.steps);
            let h = generalize(&g);
            assert!(theta_subsumes(&h, &g), "{h}\n  over {g}");
            checked += 1;
        }
    }
    checked
}

// relation derivation

pub fn derivation_matches_brute_force(
    toks: &[(String, docsynth::factstore::BoundingBox)],
) -> Result<(), TestCaseError> {
    let det = DatatypeDetector::default();
    let d = DocumentFacts::new("d1", PAGE, toks.to_vec(), &det).unwrap();
    let got = relations::derived(&d);
    let want = relations::oracle(toks, &det);
    let missing: Vec<_> = want.difference(&got).take(5).collect();
    let extra: Vec<_> = got.difference(&want).take(5).collect();
    prop_assert!(missing.is_empty() && extra.is_empty(), "missing {:?}\nextra {:?}", missing, extra);
    Ok(())
}

// voting

pub fn outputs_strategy() -> impl Strategy<Value = Vec<Option<String>>> {
    prop::collection::vec(prop::option::of(prop::sample::select(vec!["a", "b", "c"]).prop_map(String::from)), 0..12)
}

pub fn vote_ignores_program_order(outs: &[Option<String>], seed: u64) -> Result<(), TestCaseError> {
    let o = ExtractOptions::default();
    let base = vote("e", outs, &o);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..50 {
        let mut shuffled = outs.to_vec();
        shuffled.shuffle(&mut rng);
        let r = vote("e", &shuffled, &o);
        prop_assert_eq!(&r.value, &base.value);
        prop_assert_eq!(&r.distribution, &base.distribution);
        prop_assert!((r.entropy - base.entropy).abs() < 1e-12);
    }
    Ok(())
}

// training

pub fn truth_annotations(d: &docsynth::docgen::GeneratedDoc) -> Vec<Annotation> {
    d.truth
        .iter()
        .map(|t| Annotation { entity: t.entity.clone(), value: t.value.clone(), locations: d.facts.locate(&t.value) })
        .collect()
}

/// One-shot trains on the first document of a noiseless corpus and replays
/// every program on the document and its clone. Returns the program count.
pub fn replay_trained_programs(template: &str, seed: u64) -> usize {
    let spec = TemplateSpec::builtin(template).unwrap();
    let docs = generate_corpus_docs(&spec, 1, seed, &NoiseProfile::none()).unwrap();
    let cat = Catalog::builtin();
    let cfg = TrainConfig::default();
    let anns = truth_annotations(&docs[0]);
    let m = train_os(template, &docs[0].facts, &anns, &cat, &cfg).unwrap();
    let (clone, cloned) = noisy_clone(&docs[0].facts, &anns, cfg.seed, &ValueSampler::default()).unwrap();
    let mut n = 0;
    for (a, c) in anns.iter().zip(&cloned) {
        for p in m.program_set(&a.entity).unwrap().iter() {
            for (d, v) in [(&docs[0].facts, &a.value), (&clone, &c.value)] {
                assert!(check_soundness(p, &cat, d, v), "{template} {}: unsound on {}", p.canonical, d.doc_id());
                assert!(check_completeness(p, &cat, d, v), "{template} {}: incomplete on {}", p.canonical, d.doc_id());
            }
            n += 1;
        }
    }
    n
}
