//! Terms, atoms and clauses.

use std::fmt;
use std::sync::Arc;

/// An atomic value: a symbol or an integer.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Constant {
    Sym(Arc<str>),
    Int(i64),
}

impl Constant {
    pub fn sym(s: &str) -> Self {
        Constant::Sym(Arc::from(s))
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Constant::Sym(s) => Some(s),
            Constant::Int(_) => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Constant::Int(i) => Some(*i),
            Constant::Sym(_) => None,
        }
    }
}

impl From<&str> for Constant {
    fn from(s: &str) -> Self {
        Constant::sym(s)
    }
}

impl From<String> for Constant {
    fn from(s: String) -> Self {
        Constant::Sym(Arc::from(s))
    }
}

impl From<i64> for Constant {
    fn from(i: i64) -> Self {
        Constant::Int(i)
    }
}

impl From<usize> for Constant {
    fn from(i: usize) -> Self {
        Constant::Int(i as i64)
    }
}

/// A logic variable. Source clauses use `id == 0` for named variables;
/// anonymous `_` variables and renamed-apart copies carry distinct ids.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var {
    pub name: Arc<str>,
    pub id: u32,
}

impl Var {
    pub fn named(name: &str) -> Self {
        Var { name: Arc::from(name), id: 0 }
    }

    pub fn with_id(name: &str, id: u32) -> Self {
        Var { name: Arc::from(name), id }
    }

    pub fn is_anonymous(&self) -> bool {
        &*self.name == "_"
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(Var),
    Const(Constant),
    Compound(Arc<str>, Vec<Term>),
    List(Vec<Term>),
}

impl Term {
    pub fn var(name: &str) -> Self {
        Term::Var(Var::named(name))
    }

    pub fn sym(s: &str) -> Self {
        Term::Const(Constant::sym(s))
    }

    pub fn int(i: i64) -> Self {
        Term::Const(Constant::Int(i))
    }

    pub fn compound(functor: &str, args: Vec<Term>) -> Self {
        Term::Compound(Arc::from(functor), args)
    }

    pub fn list(items: Vec<Term>) -> Self {
        Term::List(items)
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::Const(_) => true,
            Term::Compound(_, args) | Term::List(args) => args.iter().all(Term::is_ground),
        }
    }

    pub fn as_const(&self) -> Option<&Constant> {
        match self {
            Term::Const(c) => Some(c),
            _ => None,
        }
    }

    /// Appends variables in first-occurrence order (duplicates skipped).
    pub fn collect_vars(&self, out: &mut Vec<Var>) {
        match self {
            Term::Var(v) => {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
            Term::Const(_) => {}
            Term::Compound(_, args) | Term::List(args) => {
                for a in args {
                    a.collect_vars(out);
                }
            }
        }
    }

    pub fn occurs(&self, var: &Var) -> bool {
        match self {
            Term::Var(v) => v == var,
            Term::Const(_) => false,
            Term::Compound(_, args) | Term::List(args) => args.iter().any(|a| a.occurs(var)),
        }
    }

    /// Replaces every variable through `f`.
    pub fn map_vars(&self, f: &mut impl FnMut(&Var) -> Term) -> Term {
        match self {
            Term::Var(v) => f(v),
            Term::Const(_) => self.clone(),
            Term::Compound(name, args) => Term::Compound(name.clone(), args.iter().map(|a| a.map_vars(f)).collect()),
            Term::List(items) => Term::List(items.iter().map(|a| a.map_vars(f)).collect()),
        }
    }
}

impl From<Constant> for Term {
    fn from(c: Constant) -> Self {
        Term::Const(c)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub pred: Arc<str>,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(pred: &str, args: Vec<Term>) -> Self {
        Atom { pred: Arc::from(pred), args }
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(Term::is_ground)
    }

    pub fn collect_vars(&self, out: &mut Vec<Var>) {
        for a in &self.args {
            a.collect_vars(out);
        }
    }

    pub fn map_vars(&self, f: &mut impl FnMut(&Var) -> Term) -> Atom {
        Atom { pred: self.pred.clone(), args: self.args.iter().map(|a| a.map_vars(f)).collect() }
    }

    /// The atom viewed as a compound term (used for `trans(T, Ci, Co)` labels).
    pub fn to_term(&self) -> Term {
        if self.args.is_empty() {
            Term::Const(Constant::Sym(self.pred.clone()))
        } else {
            Term::Compound(self.pred.clone(), self.args.clone())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Clause {
    pub head: Atom,
    pub body: Vec<Atom>,
}

impl Clause {
    pub fn new(head: Atom, body: Vec<Atom>) -> Self {
        Clause { head, body }
    }

    pub fn fact(head: Atom) -> Self {
        Clause { head, body: Vec::new() }
    }

    pub fn is_fact(&self) -> bool {
        self.body.is_empty()
    }

    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.head.collect_vars(&mut out);
        for b in &self.body {
            b.collect_vars(&mut out);
        }
        out
    }

    /// Copy with every variable replaced by a fresh one from `next_id`.
    pub fn rename_apart(&self, next_id: &mut u32) -> Clause {
        // clauses are small: a linear map beats hashing
        let mut map: Vec<(Var, Term)> = Vec::new();
        let mut f = |v: &Var| {
            if let Some((_, t)) = map.iter().find(|(w, _)| w == v) {
                return t.clone();
            }
            *next_id += 1;
            let t = Term::Var(Var { name: v.name.clone(), id: *next_id });
            map.push((v.clone(), t.clone()));
            t
        };
        Clause { head: self.head.map_vars(&mut f), body: self.body.iter().map(|b| b.map_vars(&mut f)).collect() }
    }

    /// Range restriction: every head variable of a rule must be bound by
    /// some body literal, so evaluating the body grounds the head.
    pub fn range_restriction_violation(&self) -> Option<Var> {
        if self.body.is_empty() {
            return None;
        }
        let mut head_vars = Vec::new();
        self.head.collect_vars(&mut head_vars);
        let mut body_vars = Vec::new();
        for lit in &self.body {
            lit.collect_vars(&mut body_vars);
        }
        head_vars.into_iter().find(|v| !body_vars.contains(v))
    }
}

/// Lowercase identifiers print bare; everything else is single-quoted.
pub(crate) fn needs_quotes(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => {}
        _ => return true,
    }
    !chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl fmt::Display for Constant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constant::Int(i) => write!(f, "{i}"),
            Constant::Sym(s) if needs_quotes(s) => {
                f.write_str("'")?;
                for c in s.chars() {
                    match c {
                        '\'' => f.write_str("\\'")?,
                        '\\' => f.write_str("\\\\")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("'")
            }
            Constant::Sym(s) => f.write_str(s),
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.id == 0 || self.is_anonymous() {
            f.write_str(&self.name)
        } else {
            write!(f, "{}_{}", self.name, self.id)
        }
    }
}

fn write_args(f: &mut fmt::Formatter<'_>, args: &[Term]) -> fmt::Result {
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            f.write_str(",")?;
        }
        write!(f, "{a}")?;
    }
    Ok(())
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "{v}"),
            Term::Const(c) => write!(f, "{c}"),
            Term::Compound(name, args) => {
                write!(f, "{}(", Constant::Sym(name.clone()))?;
                write_args(f, args)?;
                f.write_str(")")
            }
            Term::List(items) => {
                f.write_str("[")?;
                write_args(f, items)?;
                f.write_str("]")
            }
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", Constant::Sym(self.pred.clone()))?;
        if !self.args.is_empty() {
            f.write_str("(")?;
            write_args(f, &self.args)?;
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.head)?;
        if !self.body.is_empty() {
            f.write_str(" :- ")?;
            for (i, b) in self.body.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{b}")?;
            }
        }
        f.write_str(".")
    }
}
