//! Program synthesis from one annotated example: prove the example with
//! the transition catalog, turn each proof into a ground explanation,
//! generalize it and keep the programs that reproduce exactly the
//! annotated value.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::ops::ControlFlow;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::background::Catalog;
use crate::factstore::DocumentFacts;
use crate::logic::{
    is_skolem, parse_clause, skolemize, Atom, Clause, Constant, ExtensionalDb, LogicError, SolveConfig, Solver, Term,
    TraceRecord, Var, TRANS, TS,
};

pub const DEFAULT_DEPTH: usize = 4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error("not an extraction program: {0}")]
    Malformed(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Clone, Copy, Debug)]
pub struct SynthConfig {
    pub depth: usize,
    pub solve: SolveConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { depth: DEFAULT_DEPTH, solve: SolveConfig { max_solutions: 200_000, max_steps: 50_000_000 } }
    }
}

/// A generalized clause `entity(A,B) :- t1, ..., tk` reading document `A`
/// and producing value `[B]`-configuration `B`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionProgram {
    pub entity: String,
    #[serde(with = "clause_text")]
    pub clause: Clause,
    pub canonical: String,
    /// Proof traces this program was generalized from.
    pub provenance: Vec<TraceRecord>,
}

mod clause_text {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::logic::{parse_clause, Clause};

    pub fn serialize<S: Serializer>(c: &Clause, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&c.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Clause, D::Error> {
        let text = String::deserialize(d)?;
        parse_clause(&text).map_err(serde::de::Error::custom)
    }
}

impl ExtractionProgram {
    /// Wraps a clause, checking its shape and computing the canonical form.
    pub fn new(clause: Clause, catalog: &Catalog) -> Result<Self, SynthError> {
        let bad = || SynthError::Malformed(clause.to_string());
        let h = &clause.head;
        if h.args.len() != 2 || !h.args.iter().all(|a| matches!(a, Term::Var(_))) || h.args[0] == h.args[1] {
            return Err(bad());
        }
        let Some(last) = clause.body.last() else { return Err(bad()) };
        for lit in &clause.body {
            let def = catalog.get(&lit.pred).ok_or_else(bad)?;
            if lit.args.len() != def.params + 2 {
                return Err(bad());
            }
        }
        if !catalog.get(&last.pred).is_some_and(|d| d.is_terminal()) {
            return Err(bad());
        }
        if clause.range_restriction_violation().is_some() {
            return Err(bad());
        }
        let clause = canonicalize(&clause);
        Ok(ExtractionProgram {
            entity: h.pred.to_string(),
            canonical: clause.to_string(),
            clause,
            provenance: Vec::new(),
        })
    }

    pub fn parse(text: &str, catalog: &Catalog) -> Result<Self, SynthError> {
        Self::new(parse_clause(text)?, catalog)
    }

    /// Body literals with `A` bound to `[doc_id]`, plus the output variable.
    fn goals(&self, doc_id: &str) -> (Vec<Atom>, Var) {
        let Term::Var(a) = &self.clause.head.args[0] else { unreachable!("checked in new") };
        let Term::Var(b) = &self.clause.head.args[1] else { unreachable!("checked in new") };
        let doc = Term::list(vec![Term::Const(Constant::sym(doc_id))]);
        let goals = self
            .clause
            .body
            .iter()
            .map(|l| l.map_vars(&mut |v| if v == a { doc.clone() } else { Term::Var(v.clone()) }))
            .collect();
        (goals, b.clone())
    }

    /// Distinct outputs in SLD order. A binding of `B` that is not a
    /// one-element list of a constant is ignored.
    pub fn outputs(&self, catalog: &Catalog, facts: &DocumentFacts) -> Result<Outputs, SynthError> {
        self.run(catalog, facts, facts.doc_id(), SolveConfig::default(), false)
    }

    /// First output in SLD order, if any.
    pub fn first_output(&self, catalog: &Catalog, facts: &DocumentFacts) -> Result<Option<String>, SynthError> {
        Ok(self.run(catalog, facts, facts.doc_id(), SolveConfig::default(), true)?.values.into_iter().next())
    }

    fn run(
        &self,
        catalog: &Catalog,
        db: &dyn ExtensionalDb,
        doc_id: &str,
        config: SolveConfig,
        first_only: bool,
    ) -> Result<Outputs, SynthError> {
        let (goals, out) = self.goals(doc_id);
        let mut values: Vec<String> = Vec::new();
        let mut seen = HashSet::new();
        let stats = Solver::new(catalog.program(), db).with_config(config).for_each(&goals, 0, |a| {
            if let Some(v) = a.subst.get(&out).and_then(value_of) {
                if seen.insert(v.clone()) {
                    values.push(v);
                    if first_only {
                        return ControlFlow::Break(());
                    }
                }
            }
            ControlFlow::Continue(())
        })?;
        Ok(Outputs { values, truncated: stats.truncated })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Outputs {
    pub values: Vec<String>,
    pub truncated: bool,
}

fn value_of(t: &Term) -> Option<String> {
    match t {
        Term::List(items) if items.len() == 1 => match &items[0] {
            Term::Const(Constant::Sym(s)) => Some(s.to_string()),
            Term::Const(Constant::Int(i)) => Some(i.to_string()),
            _ => None,
        },
        _ => None,
    }
}

fn value_term(v: &str) -> Term {
    Term::list(vec![Term::Const(Constant::sym(v))])
}

fn doc_term(doc_id: &str) -> Term {
    Term::list(vec![Term::Const(Constant::sym(doc_id))])
}

/// Runs `p` on the document and checks that the value is among its outputs.
pub fn check_soundness(p: &ExtractionProgram, catalog: &Catalog, facts: &DocumentFacts, value: &str) -> bool {
    p.outputs(catalog, facts).is_ok_and(|o| o.values.iter().any(|v| v == value))
}

/// Runs `p` on the document and checks that its only output is the value.
pub fn check_completeness(p: &ExtractionProgram, catalog: &Catalog, facts: &DocumentFacts, value: &str) -> bool {
    p.outputs(catalog, facts).is_ok_and(|o| !o.truncated && o.values.len() == 1 && o.values[0] == value)
}

/// Programs for one entity, keyed by canonical form.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramSet {
    pub entity: String,
    pub programs: BTreeMap<String, ExtractionProgram>,
}

impl ProgramSet {
    pub fn new(entity: &str) -> Self {
        ProgramSet { entity: entity.to_string(), programs: BTreeMap::new() }
    }

    pub fn len(&self) -> usize {
        self.programs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.programs.is_empty()
    }

    pub fn contains(&self, canonical: &str) -> bool {
        self.programs.contains_key(canonical)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ExtractionProgram> {
        self.programs.values()
    }

    /// Adds a program, merging provenance with an existing equal one.
    pub fn insert(&mut self, p: ExtractionProgram) {
        match self.programs.get_mut(&p.canonical) {
            Some(old) => {
                for t in p.provenance {
                    if !old.provenance.contains(&t) {
                        old.provenance.push(t);
                    }
                }
            }
            None => {
                self.programs.insert(p.canonical.clone(), p);
            }
        }
    }

    /// Keeps the programs that yield exactly the given value on every example.
    pub fn refine(&self, catalog: &Catalog, examples: &[(&DocumentFacts, &str)]) -> ProgramSet {
        let programs = self
            .programs
            .iter()
            .filter(|(_, p)| examples.iter().all(|(d, v)| check_completeness(p, catalog, d, v)))
            .map(|(k, p)| (k.clone(), p.clone()))
            .collect();
        ProgramSet { entity: self.entity.clone(), programs }
    }

    /// Text form: one clause per line, provenance as `%` comments.
    pub fn to_pl(&self) -> String {
        let mut out = format!("% entity: {}\n", self.entity);
        for p in self.iter() {
            for t in &p.provenance {
                let _ = writeln!(out, "% trace: {}", t.0.join(" ; "));
            }
            let _ = writeln!(out, "{}", p.canonical);
        }
        out
    }

    pub fn from_pl(src: &str, catalog: &Catalog) -> Result<Self, SynthError> {
        let mut set = ProgramSet::default();
        let mut pending: Vec<TraceRecord> = Vec::new();
        for line in src.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(e) = line.strip_prefix("% entity:") {
                set.entity = e.trim().to_string();
            } else if let Some(t) = line.strip_prefix("% trace:") {
                pending.push(TraceRecord(t.trim().split(" ; ").map(str::to_string).collect()));
            } else if line.starts_with('%') {
                continue;
            } else {
                let mut p = ExtractionProgram::parse(line, catalog)?;
                if set.entity.is_empty() {
                    set.entity = p.entity.clone();
                }
                p.provenance = std::mem::take(&mut pending);
                set.insert(p);
            }
        }
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<(), SynthError> {
        std::fs::write(path, self.to_pl())
            .map_err(|e| SynthError::Io { path: path.display().to_string(), message: e.to_string() })
    }

    pub fn load(path: &Path, catalog: &Catalog) -> Result<Self, SynthError> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| SynthError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_pl(&src, catalog)
    }
}

/// Union of the sets, keeping the programs that pass the checks on every
/// example. Order of `sets` does not matter.
pub fn intersect(sets: &[ProgramSet], catalog: &Catalog, examples: &[(&DocumentFacts, &str)]) -> ProgramSet {
    let mut all = ProgramSet::new(sets.first().map(|s| s.entity.as_str()).unwrap_or_default());
    for s in sets {
        for p in s.iter() {
            all.insert(p.clone());
        }
    }
    all.refine(catalog, examples)
}

/// Ground explanation of one proof: `entity(Input, Output) :- l1, ..., lk`
/// where each `trans(name(K..), Ci, Co)` step becomes `name(K.., Ci, Co)`.
pub fn ground_clause(entity: &str, input: &Term, output: &Term, steps: &[Atom]) -> Clause {
    let body = steps
        .iter()
        .map(|s| {
            let (name, mut args) = match &s.args[0] {
                Term::Compound(f, ks) => (f.to_string(), ks.clone()),
                Term::Const(c) => (c.as_str().unwrap_or_default().to_string(), Vec::new()),
                other => (other.to_string(), Vec::new()),
            };
            args.push(s.args[1].clone());
            args.push(s.args[2].clone());
            Atom::new(&name, args)
        })
        .collect();
    Clause::new(Atom::new(entity, vec![input.clone(), output.clone()]), body)
}

/// Lifts configuration terms and Skolem constants to variables; learned
/// constants stay. Equal terms map to the same variable.
pub fn generalize(g: &Clause) -> Clause {
    let mut names: HashMap<Term, Term> = HashMap::new();
    let lift = |t: &Term, names: &mut HashMap<Term, Term>| -> Term {
        let n = names.len();
        names.entry(t.clone()).or_insert_with(|| Term::var(&var_name(n))).clone()
    };
    let head = Atom::new(&g.head.pred, g.head.args.iter().map(|t| lift(t, &mut names)).collect());
    let body = g
        .body
        .iter()
        .map(|l| {
            let n = l.args.len();
            let args = l
                .args
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    if i + 2 >= n || matches!(t.as_const(), Some(c) if is_skolem(c)) {
                        lift(t, &mut names)
                    } else {
                        t.clone()
                    }
                })
                .collect();
            Atom::new(&l.pred, args)
        })
        .collect();
    canonicalize(&Clause::new(head, body))
}

fn var_name(n: usize) -> String {
    let letter = (b'A' + (n % 26) as u8) as char;
    if n < 26 {
        letter.to_string()
    } else {
        format!("{letter}{}", n / 26)
    }
}

/// Orders body literals by data flow from the head input (each literal's
/// second-to-last argument is its input configuration), breaking ties by
/// source order, then renames variables in order of first use.
pub fn canonicalize(c: &Clause) -> Clause {
    let mut bound: Vec<Term> = vec![c.head.args.first().cloned().unwrap_or(Term::var("_"))];
    let mut remaining: Vec<&Atom> = c.body.iter().collect();
    let mut ordered: Vec<&Atom> = Vec::new();
    while !remaining.is_empty() {
        let pick =
            remaining.iter().position(|l| l.args.len() >= 2 && bound.contains(&l.args[l.args.len() - 2])).unwrap_or(0);
        let l = remaining.remove(pick);
        if let Some(out) = l.args.last() {
            bound.push(out.clone());
        }
        ordered.push(l);
    }
    let mut order: Vec<Var> = Vec::new();
    c.head.collect_vars(&mut order);
    for l in &ordered {
        l.collect_vars(&mut order);
    }
    let mut rename = |v: &Var| {
        let i = order.iter().position(|o| o == v).unwrap_or(0);
        Term::var(&var_name(i))
    };
    Clause::new(c.head.map_vars(&mut rename), ordered.iter().map(|l| l.map_vars(&mut rename)).collect())
}

/// Result of one synthesis run.
#[derive(Clone, Debug, Default)]
pub struct MipResult {
    pub set: ProgramSet,
    /// Distinct proofs examined.
    pub proofs: usize,
    /// Generalized candidates rejected by the checks.
    pub rejected: usize,
    /// Set when a solution or step cap stopped the proof search early.
    pub truncated: bool,
}

/// Synthesizes every checked program for `entity = value` on one document.
pub fn mip(
    facts: &DocumentFacts,
    catalog: &Catalog,
    entity: &str,
    value: &str,
    config: &SynthConfig,
) -> Result<MipResult, SynthError> {
    let mut result = MipResult { set: ProgramSet::new(entity), ..Default::default() };
    if facts.locate(value).is_empty() {
        return Ok(result);
    }
    let input = doc_term(facts.doc_id());
    let output = value_term(value);
    let goal = Atom::new(TS, vec![input.clone(), output.clone()]);
    let mut traces: Vec<Vec<Atom>> = Vec::new();
    let mut seen: HashSet<Vec<Atom>> = HashSet::new();
    let run = Solver::new(catalog.program(), facts).with_config(config.solve).for_each(&[goal], config.depth, |a| {
        if !a.trace.is_empty() {
            let steps = skolemize(&a.trace);
            if seen.insert(steps.clone()) {
                traces.push(steps);
            }
        }
        ControlFlow::Continue(())
    });
    match run {
        Ok(stats) => result.truncated = stats.truncated,
        Err(LogicError::StepLimit(_)) => result.truncated = true,
        Err(e) => return Err(e.into()),
    }
    result.proofs = traces.len();
    let mut rejected: HashSet<String> = HashSet::new();
    for steps in traces {
        debug_assert!(steps.iter().all(|s| &*s.pred == TRANS));
        let g = ground_clause(entity, &input, &output, &steps);
        let h = generalize(&g);
        let key = h.to_string();
        if rejected.contains(&key) {
            continue;
        }
        let record = TraceRecord(steps.iter().map(|s| s.to_string()).collect());
        if let Some(p) = result.set.programs.get_mut(&key) {
            p.provenance.push(record);
            continue;
        }
        let Ok(mut p) = ExtractionProgram::new(h, catalog) else {
            rejected.insert(key);
            continue;
        };
        if check_completeness(&p, catalog, facts, value) {
            p.provenance.push(record);
            result.set.insert(p);
        } else {
            rejected.insert(key);
        }
    }
    result.rejected = rejected.len();
    Ok(result)
}
