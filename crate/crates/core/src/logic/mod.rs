//! A small logic-programming core: terms, unification with occurs-check,
//! depth-bounded SLD resolution over an extensional fact store, a
//! trace-recording meta-interpreter and θ-subsumption.

mod meta;
mod parse;
mod program;
mod solve;
mod subsume;
mod term;
mod unify;

pub use meta::{is_skolem, meta_prove, skolemize, MetaProofs, ProofTrace, TraceRecord, SKOLEM_PREFIX};
pub use parse::{parse_atom, parse_clause, parse_program, parse_term};
pub use program::Program;
pub use solve::{Answer, ExtensionalDb, NoFacts, RunStats, Solutions, SolveConfig, Solver, TRANS, TS};
pub use subsume::theta_subsumes;
pub use term::{Atom, Clause, Constant, Term, Var};
pub use unify::{unify, unify_atoms, Substitution};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LogicError {
    #[error("parse error at {line}:{col}: {message}")]
    Parse { line: usize, col: usize, message: String },
    #[error("unknown predicate {0}")]
    UnknownPredicate(String),
    #[error("clause is not range-restricted (variable {var}): {clause}")]
    NotRangeRestricted { clause: String, var: String },
    #[error("resolution step limit of {0} exceeded")]
    StepLimit(u64),
}
