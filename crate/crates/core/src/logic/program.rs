use std::sync::Arc;

use rustc_hash::{FxHashMap, FxHashSet};

use super::parse::parse_program;
use super::term::{Clause, Term};
use super::LogicError;

/// An ordered clause set indexed by predicate name and arity.
#[derive(Clone, Debug, Default)]
pub struct Program {
    clauses: Vec<Clause>,
    index: FxHashMap<Arc<str>, Vec<(usize, Vec<usize>)>>,
    terminal: FxHashSet<Arc<str>>,
}

impl Program {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a program, rejecting clauses that are not range-restricted.
    pub fn from_clauses(clauses: impl IntoIterator<Item = Clause>) -> Result<Self, LogicError> {
        let mut p = Program::new();
        for c in clauses {
            p.add(c)?;
        }
        Ok(p)
    }

    pub fn parse(src: &str) -> Result<Self, LogicError> {
        Self::from_clauses(parse_program(src)?)
    }

    pub fn add(&mut self, clause: Clause) -> Result<(), LogicError> {
        if let Some(v) = clause.range_restriction_violation() {
            return Err(LogicError::NotRangeRestricted { clause: clause.to_string(), var: v.to_string() });
        }
        let arity = clause.head.args.len();
        let slots = self.index.entry(clause.head.pred.clone()).or_default();
        match slots.iter_mut().find(|(a, _)| *a == arity) {
            Some((_, idx)) => idx.push(self.clauses.len()),
            None => slots.push((arity, vec![self.clauses.len()])),
        }
        self.clauses.push(clause);
        Ok(())
    }

    pub fn extend(&mut self, other: &Program) -> Result<(), LogicError> {
        for c in &other.clauses {
            self.add(c.clone())?;
        }
        self.terminal.extend(other.terminal.iter().cloned());
        Ok(())
    }

    /// Declares transitions labelled `name` as terminal: inside `ts/2` such a
    /// step must be the last one, so its output is unified with the target
    /// configuration before the step runs.
    pub fn mark_terminal(&mut self, name: &str) {
        self.terminal.insert(Arc::from(name));
    }

    pub fn has_terminals(&self) -> bool {
        !self.terminal.is_empty()
    }

    /// Whether a transition label (`name` or `name(Args..)`) is terminal.
    pub fn is_terminal_label(&self, label: &Term) -> bool {
        match label {
            Term::Compound(f, _) => self.terminal.contains(f),
            Term::Const(c) => c.as_str().is_some_and(|s| self.terminal.contains(s)),
            _ => false,
        }
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn clauses_for(&self, pred: &str, arity: usize) -> Option<&[usize]> {
        self.index.get(pred)?.iter().find(|(a, _)| *a == arity).map(|(_, idx)| idx.as_slice())
    }

    pub fn defines(&self, pred: &str, arity: usize) -> bool {
        self.clauses_for(pred, arity).is_some()
    }

    pub fn len(&self) -> usize {
        self.clauses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }
}
