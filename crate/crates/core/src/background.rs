//! The transition catalog: `trans/3` steps defined over the primitive
//! relations, used both for proving and as the synthesis vocabulary.

use std::collections::HashMap;
use std::fmt;
use std::ops::ControlFlow;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::logic::{
    parse_program, theta_subsumes, Atom, Clause, ExtensionalDb, LogicError, Program, Solver, Term, TRANS,
};

const BUILTIN: &str = include_str!("../data/background.pl");

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackgroundError {
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error("bad directive {0}")]
    Directive(String),
    #[error("transition {0} has no defining clause")]
    Undefined(String),
    #[error("clauses for {name} disagree on arity")]
    Arity { name: String },
    #[error("unknown transition {0}")]
    Unknown(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionKind {
    Anchor,
    Navigate,
    Terminal,
}

impl FromStr for TransitionKind {
    type Err = BackgroundError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "anchor" => Ok(TransitionKind::Anchor),
            "navigate" => Ok(TransitionKind::Navigate),
            "terminal" => Ok(TransitionKind::Terminal),
            _ => Err(BackgroundError::Directive(format!("unknown transition kind '{s}'"))),
        }
    }
}

impl fmt::Display for TransitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransitionKind::Anchor => "anchor",
            TransitionKind::Navigate => "navigate",
            TransitionKind::Terminal => "terminal",
        })
    }
}

#[derive(Clone, Debug)]
pub struct TransitionDef {
    pub name: String,
    pub kind: TransitionKind,
    pub priority: i64,
    /// Number of learned constants preceding the two configurations.
    pub params: usize,
    pub clauses: Vec<Clause>,
    pub interpretation: Option<String>,
}

impl TransitionDef {
    pub fn is_terminal(&self) -> bool {
        self.kind == TransitionKind::Terminal
    }

    /// One `trans(name(K1,..,Kn), Ci, Co) :- name(K1,..,Kn, Ci, Co).` per
    /// defining clause, with `Ci` shaped like that clause's input
    /// configuration so that inapplicable steps are rejected by head matching.
    fn bridges(&self) -> Vec<Clause> {
        let mut out: Vec<Clause> = Vec::new();
        for c in &self.clauses {
            let h = &c.head;
            let n = h.args.len();
            let ks = h.args[..self.params].to_vec();
            let label = if ks.is_empty() { Term::sym(&self.name) } else { Term::compound(&self.name, ks) };
            let head = Atom::new(TRANS, vec![label, h.args[n - 2].clone(), h.args[n - 1].clone()]);
            let bridge = Clause::new(head, vec![h.clone()]);
            // clauses sharing an input shape need only one bridge
            if !out.iter().any(|b| theta_subsumes(b, &bridge) && theta_subsumes(&bridge, b)) {
                out.push(bridge);
            }
        }
        out
    }
}

/// An immutable set of transitions plus the program that implements them.
#[derive(Clone, Debug)]
pub struct Catalog {
    defs: Vec<TransitionDef>,
    program: Program,
}

impl Catalog {
    /// The bundled catalog.
    pub fn builtin() -> Self {
        Self::from_rules(BUILTIN).expect("bundled catalog is valid")
    }

    pub fn load(path: &Path) -> Result<Self, BackgroundError> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| BackgroundError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_rules(&src)
    }

    /// Parses a rules file. Clauses whose predicate is declared with a
    /// `transition/3` directive become catalog entries; any other clause is
    /// kept as a helper rule.
    pub fn from_rules(src: &str) -> Result<Self, BackgroundError> {
        let clauses = parse_program(src)?;
        let mut decls: Vec<(String, TransitionKind, i64)> = Vec::new();
        let mut interp: HashMap<String, String> = HashMap::new();
        let mut others: Vec<Clause> = Vec::new();
        for c in clauses {
            let h = &c.head;
            match (&*h.pred, h.args.len(), c.is_fact()) {
                ("transition", 3, true) => {
                    let name = sym_arg(&c, 0)?;
                    let kind = sym_arg(&c, 1)?.parse()?;
                    let priority = h.args[2]
                        .as_const()
                        .and_then(|k| k.as_int())
                        .ok_or_else(|| BackgroundError::Directive(c.to_string()))?;
                    decls.push((name, kind, priority));
                }
                ("interpretation", 2, true) => {
                    interp.insert(sym_arg(&c, 0)?, sym_arg(&c, 1)?);
                }
                _ => others.push(c),
            }
        }
        let mut defs = Vec::new();
        for (name, kind, priority) in decls {
            let own: Vec<Clause> = others.iter().filter(|c| *c.head.pred == *name).cloned().collect();
            let arity = own.first().ok_or_else(|| BackgroundError::Undefined(name.clone()))?.head.arity();
            if arity < 2 || own.iter().any(|c| c.head.arity() != arity) {
                return Err(BackgroundError::Arity { name });
            }
            defs.push(TransitionDef {
                interpretation: interp.remove(&name),
                name,
                kind,
                priority,
                params: arity - 2,
                clauses: own,
            });
        }
        defs.sort_by_key(|d| d.priority);
        let mut program = Program::new();
        for d in &defs {
            for b in d.bridges() {
                program.add(b)?;
            }
            if d.is_terminal() {
                program.mark_terminal(&d.name);
            }
        }
        for c in others {
            program.add(c)?;
        }
        Ok(Catalog { defs, program })
    }

    /// Transitions in priority order.
    pub fn defs(&self) -> &[TransitionDef] {
        &self.defs
    }

    pub fn get(&self, name: &str) -> Option<&TransitionDef> {
        self.defs.iter().find(|d| d.name == name)
    }

    pub fn program(&self) -> &Program {
        &self.program
    }

    pub fn is_transition(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    /// Plain-language reading of one program literal, if the transition
    /// carries an interpretation template.
    pub fn interpret(&self, lit: &Atom) -> Option<String> {
        let def = self.get(&lit.pred)?;
        let template = def.interpretation.as_ref()?;
        let n = lit.args.len();
        if n != def.params + 2 {
            return None;
        }
        let show = |t: &Term| match t.as_const() {
            Some(c) => match c.as_str() {
                Some(s) => s.to_string(),
                None => c.to_string(),
            },
            None => t.to_string(),
        };
        let mut out = template.replace("{in}", &show(&lit.args[n - 2])).replace("{out}", &show(&lit.args[n - 1]));
        for i in 0..def.params {
            out = out.replace(&format!("{{{}}}", i + 1), &show(&lit.args[i]));
        }
        Some(out)
    }

    /// Every ground `trans/3` atom for transition `name` applicable at
    /// `config`, in document order.
    pub fn enumerate_instantiations(
        &self,
        name: &str,
        db: &dyn ExtensionalDb,
        config: &Term,
    ) -> Result<Vec<Atom>, BackgroundError> {
        let def = self.get(name).ok_or_else(|| BackgroundError::Unknown(name.to_string()))?;
        let mut args: Vec<Term> = (0..def.params).map(|i| Term::var(&format!("K{i}"))).collect();
        args.push(config.clone());
        args.push(Term::var("Out"));
        let goal = Atom::new(name, args);
        let mut out: Vec<Atom> = Vec::new();
        Solver::new(&self.program, db).for_each(std::slice::from_ref(&goal), 0, |a| {
            let g = a.subst.apply_atom(&goal);
            let ks = g.args[..def.params].to_vec();
            let label = if ks.is_empty() { Term::sym(name) } else { Term::compound(name, ks) };
            let step = Atom::new(TRANS, vec![label, config.clone(), g.args[def.params + 1].clone()]);
            if !out.contains(&step) {
                out.push(step);
            }
            ControlFlow::Continue(())
        })?;
        Ok(out)
    }
}

fn sym_arg(c: &Clause, i: usize) -> Result<String, BackgroundError> {
    c.head.args[i]
        .as_const()
        .and_then(|k| k.as_str())
        .map(str::to_string)
        .ok_or_else(|| BackgroundError::Directive(c.to_string()))
}
