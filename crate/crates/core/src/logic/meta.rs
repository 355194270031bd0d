//! Meta-interpretation: proofs of `ts(Ci, Cf)` together with the transition
//! literals they use.

use std::collections::HashSet;
use std::fmt;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use super::program::Program;
use super::solve::{ExtensionalDb, SolveConfig, Solver, TS};
use super::term::{Atom, Constant, Term, Var};
use super::LogicError;

/// The `trans/3` literals of one meta-interpretive proof.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ProofTrace {
    pub steps: Vec<Atom>,
    pub initial: Term,
    pub final_config: Term,
}

impl ProofTrace {
    pub fn depth(&self) -> usize {
        self.steps.len()
    }

    /// Checks that consecutive steps chain from `initial` to `final_config`.
    pub fn is_connected(&self) -> bool {
        let mut at = &self.initial;
        for s in &self.steps {
            if s.args.len() != 3 || &s.args[1] != at {
                return false;
            }
            at = &s.args[2];
        }
        at == &self.final_config
    }
}

impl fmt::Display for ProofTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, s) in self.steps.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{s}")?;
        }
        f.write_str("}")
    }
}

/// Serialized form of a trace for provenance records.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord(pub Vec<String>);

impl From<&ProofTrace> for TraceRecord {
    fn from(t: &ProofTrace) -> Self {
        TraceRecord(t.steps.iter().map(|s| s.to_string()).collect())
    }
}

#[derive(Clone, Debug, Default)]
pub struct MetaProofs {
    pub traces: Vec<ProofTrace>,
    pub truncated: bool,
}

/// Enumerates every proof of `ts(input, output)` of at most `depth`
/// transitions. Variables left unbound in a trace are replaced by
/// `sk_<n>` constants in order of first appearance.
pub fn meta_prove(
    input: &Term,
    output: &Term,
    program: &Program,
    db: &dyn ExtensionalDb,
    depth: usize,
    config: SolveConfig,
) -> Result<MetaProofs, LogicError> {
    let goal = Atom::new(TS, vec![input.clone(), output.clone()]);
    let mut seen = HashSet::new();
    let mut traces = Vec::new();
    let stats = Solver::new(program, db).with_config(config).for_each(&[goal], depth, |a| {
        let steps = skolemize(&a.trace);
        let initial = input.clone();
        let final_config = match steps.last() {
            Some(s) => s.args[2].clone(),
            None => initial.clone(),
        };
        let trace = ProofTrace { steps, initial, final_config };
        if seen.insert(trace.clone()) {
            traces.push(trace);
        }
        ControlFlow::Continue(())
    })?;
    Ok(MetaProofs { traces, truncated: stats.truncated })
}

pub fn skolemize(atoms: &[Atom]) -> Vec<Atom> {
    let mut order: Vec<Var> = Vec::new();
    for a in atoms {
        a.collect_vars(&mut order);
    }
    atoms
        .iter()
        .map(|a| {
            a.map_vars(&mut |v| {
                let n = order.iter().position(|o| o == v).unwrap_or(0);
                Term::Const(Constant::from(format!("{SKOLEM_PREFIX}{n}")))
            })
        })
        .collect()
}

pub const SKOLEM_PREFIX: &str = "sk_";

pub fn is_skolem(c: &Constant) -> bool {
    c.as_str().is_some_and(|s| {
        s.strip_prefix(SKOLEM_PREFIX).is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()))
    })
}
