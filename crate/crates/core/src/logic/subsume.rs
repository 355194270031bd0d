//! θ-subsumption between clauses.

use std::collections::HashMap;

use super::term::{Atom, Clause, Term, Var};

/// True iff some θ maps `h`'s head onto `g`'s head and every body literal of
/// `h` onto some body literal of `g`. Variables of `g` are treated as
/// constants.
pub fn theta_subsumes(h: &Clause, g: &Clause) -> bool {
    let mut theta = HashMap::new();
    if !match_atom(&h.head, &g.head, &mut theta) {
        return false;
    }
    search(&h.body, &g.body, &mut theta)
}

fn search(rest: &[Atom], target: &[Atom], theta: &mut HashMap<Var, Term>) -> bool {
    let Some((lit, rest)) = rest.split_first() else {
        return true;
    };
    for cand in target {
        let mut trial = theta.clone();
        if match_atom(lit, cand, &mut trial) && search(rest, target, &mut trial) {
            *theta = trial;
            return true;
        }
    }
    false
}

fn match_atom(pattern: &Atom, target: &Atom, theta: &mut HashMap<Var, Term>) -> bool {
    pattern.pred == target.pred
        && pattern.args.len() == target.args.len()
        && pattern.args.iter().zip(&target.args).all(|(p, t)| match_term(p, t, theta))
}

/// One-way matching: binds variables of `pattern` only.
fn match_term(pattern: &Term, target: &Term, theta: &mut HashMap<Var, Term>) -> bool {
    match (pattern, target) {
        (Term::Var(v), t) => match theta.get(v) {
            Some(bound) => bound == t,
            None => {
                theta.insert(v.clone(), t.clone());
                true
            }
        },
        (Term::Const(a), Term::Const(b)) => a == b,
        (Term::Compound(f, xs), Term::Compound(g, ys)) => {
            f == g && xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| match_term(x, y, theta))
        }
        (Term::List(xs), Term::List(ys)) => {
            xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| match_term(x, y, theta))
        }
        _ => false,
    }
}
