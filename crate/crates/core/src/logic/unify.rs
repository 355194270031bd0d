//! Substitutions and most-general unification (occurs-check on).

use std::collections::BTreeMap;
use std::fmt;

use super::term::{Atom, Term, Var};

/// An idempotent substitution: no bound variable occurs in any binding.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Substitution {
    map: BTreeMap<Var, Term>,
}

impl Substitution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn get(&self, v: &Var) -> Option<&Term> {
        self.map.get(v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Var, &Term)> {
        self.map.iter()
    }

    pub fn apply(&self, t: &Term) -> Term {
        if self.map.is_empty() {
            return t.clone();
        }
        t.map_vars(&mut |v| match self.map.get(v) {
            Some(bound) => bound.clone(),
            None => Term::Var(v.clone()),
        })
    }

    pub fn apply_atom(&self, a: &Atom) -> Atom {
        Atom { pred: a.pred.clone(), args: a.args.iter().map(|t| self.apply(t)).collect() }
    }

    /// Binds `v` to `t` (which must already be resolved against `self`),
    /// keeping the substitution idempotent.
    fn bind(&mut self, v: Var, t: Term) {
        let single = Substitution { map: BTreeMap::from([(v.clone(), t.clone())]) };
        for bound in self.map.values_mut() {
            if bound.occurs(&v) {
                *bound = single.apply(bound);
            }
        }
        self.map.insert(v, t);
    }

    pub(crate) fn from_map(map: BTreeMap<Var, Term>) -> Self {
        Substitution { map }
    }

    /// Restricts the substitution to the given variables.
    pub fn restrict(&self, vars: &[Var]) -> Substitution {
        Substitution {
            map: self.map.iter().filter(|(k, _)| vars.contains(k)).map(|(k, v)| (k.clone(), v.clone())).collect(),
        }
    }
}

impl fmt::Display for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (k, v)) in self.map.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}↦{v}")?;
        }
        f.write_str("}")
    }
}

/// Most general unifier of `a` and `b`, or `None`.
pub fn unify(a: &Term, b: &Term) -> Option<Substitution> {
    let mut s = Substitution::new();
    if unify_into(a, b, &mut s) {
        Some(s)
    } else {
        None
    }
}

pub fn unify_atoms(a: &Atom, b: &Atom) -> Option<Substitution> {
    if a.pred != b.pred || a.args.len() != b.args.len() {
        return None;
    }
    let mut s = Substitution::new();
    for (x, y) in a.args.iter().zip(&b.args) {
        if !unify_into(x, y, &mut s) {
            return None;
        }
    }
    Some(s)
}

fn unify_into(a: &Term, b: &Term, s: &mut Substitution) -> bool {
    let a = s.apply(a);
    let b = s.apply(b);
    match (&a, &b) {
        (Term::Var(x), Term::Var(y)) if x == y => true,
        (Term::Var(x), t) | (t, Term::Var(x)) => {
            if t.occurs(x) {
                return false;
            }
            s.bind(x.clone(), t.clone());
            true
        }
        (Term::Const(x), Term::Const(y)) => x == y,
        (Term::Compound(f, xs), Term::Compound(g, ys)) => {
            f == g && xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| unify_into(x, y, s))
        }
        (Term::List(xs), Term::List(ys)) => xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| unify_into(x, y, s)),
        _ => false,
    }
}
