//! Depth-bounded SLD resolution.
//!
//! Goals are resolved left to right, clauses tried in program order.
//! Predicates not defined by the program are looked up in an
//! [`ExtensionalDb`]. The built-in `ts(Ci, Cf)` implements the transition
//! system: either `Ci = Cf`, or one `trans(T, Ci, C)` step followed by
//! `ts(C, Cf)` with one less unit of depth. Every resolved `trans/3` goal is
//! recorded, so a success also yields the proof's transition trace.

use std::collections::{HashMap, HashSet};
use std::ops::ControlFlow;
use std::rc::Rc;
use std::sync::Arc;

use rustc_hash::FxHashMap;

use super::program::Program;
use super::term::{Atom, Constant, Term, Var};
use super::unify::Substitution;
use super::LogicError;

/// Read access to ground facts, one relation per predicate name.
pub trait ExtensionalDb {
    /// Arity of the named relation, if the database declares it.
    fn relation_arity(&self, name: &str) -> Option<usize>;

    /// Visits every tuple of `name` agreeing with `pattern` (`None` matches
    /// anything), in insertion order.
    fn scan(
        &self,
        name: &str,
        pattern: &[Option<Constant>],
        visit: &mut dyn FnMut(&[Constant]) -> ControlFlow<()>,
    ) -> ControlFlow<()>;
}

/// A database with no relations.
pub struct NoFacts;

impl ExtensionalDb for NoFacts {
    fn relation_arity(&self, _name: &str) -> Option<usize> {
        None
    }

    fn scan(
        &self,
        _name: &str,
        _pattern: &[Option<Constant>],
        _visit: &mut dyn FnMut(&[Constant]) -> ControlFlow<()>,
    ) -> ControlFlow<()> {
        ControlFlow::Continue(())
    }
}

pub const TS: &str = "ts";
pub const TRANS: &str = "trans";

#[derive(Clone, Copy, Debug)]
pub struct SolveConfig {
    /// Maximum number of answers before enumeration stops and reports truncation.
    pub max_solutions: usize,
    /// Hard bound on resolution steps, guarding against runaway recursion
    /// in user-supplied rules.
    pub max_steps: u64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig { max_solutions: 10_000, max_steps: 20_000_000 }
    }
}

/// One successful derivation.
#[derive(Clone, Debug)]
pub struct Answer {
    /// Bindings of the query variables.
    pub subst: Substitution,
    /// The `trans/3` literals used, in proof order, with current bindings applied.
    pub trace: Vec<Atom>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Solutions {
    pub answers: Vec<Substitution>,
    /// Set when enumeration hit `max_solutions`; `answers` then holds the partial result.
    pub truncated: bool,
}

#[derive(Clone, Debug, Default)]
pub struct RunStats {
    pub yielded: usize,
    pub steps: u64,
    pub truncated: bool,
}

pub struct Solver<'a> {
    program: &'a Program,
    db: &'a dyn ExtensionalDb,
    config: SolveConfig,
}

impl<'a> Solver<'a> {
    pub fn new(program: &'a Program, db: &'a dyn ExtensionalDb) -> Self {
        Solver { program, db, config: SolveConfig::default() }
    }

    pub fn with_config(mut self, config: SolveConfig) -> Self {
        self.config = config;
        self
    }

    /// Calls `on_answer` for every SLD success of `goals`, without
    /// deduplication. `depth` bounds the number of transition steps taken by
    /// each `ts/2` goal.
    pub fn for_each(
        &self,
        goals: &[Atom],
        depth: usize,
        mut on_answer: impl FnMut(Answer) -> ControlFlow<()>,
    ) -> Result<RunStats, LogicError> {
        let mut query_vars = Vec::new();
        for g in goals {
            g.collect_vars(&mut query_vars);
        }
        let mut next_id = 0;
        for v in &query_vars {
            next_id = next_id.max(v.id);
        }
        let mut m = Machine {
            program: self.program,
            db: self.db,
            bindings: FxHashMap::default(),
            trail: Vec::new(),
            next_id: next_id + 1_000_000,
            trace: Vec::new(),
            steps: 0,
            max_steps: self.config.max_steps,
            max_solutions: self.config.max_solutions,
            yielded: 0,
            truncated: false,
            query_vars,
            error: None,
        };
        let mut list: Goals = None;
        for g in goals.iter().rev() {
            list = push(goal_for(g, depth), list);
        }
        let _ = m.run(&list, &mut on_answer);
        if let Some(e) = m.error {
            return Err(e);
        }
        Ok(RunStats { yielded: m.yielded, steps: m.steps, truncated: m.truncated })
    }

    /// All distinct answers (up to variable renaming) in SLD order.
    pub fn solve(&self, goals: &[Atom], depth: usize) -> Result<Solutions, LogicError> {
        let mut seen = HashSet::new();
        let mut answers = Vec::new();
        let limit = self.config.max_solutions;
        let mut truncated = false;
        let mut query_vars = Vec::new();
        for g in goals {
            g.collect_vars(&mut query_vars);
        }
        let stats = self.for_each(goals, depth, |a| {
            let key = variant_key(&query_vars, &a.subst);
            if seen.insert(key) {
                if answers.len() == limit {
                    truncated = true;
                    return ControlFlow::Break(());
                }
                answers.push(a.subst);
            }
            ControlFlow::Continue(())
        })?;
        Ok(Solutions { answers, truncated: truncated || stats.truncated })
    }

    /// The first answer in SLD order.
    pub fn first(&self, goals: &[Atom], depth: usize) -> Result<Option<Substitution>, LogicError> {
        let mut found = None;
        self.for_each(goals, depth, |a| {
            found = Some(a.subst);
            ControlFlow::Break(())
        })?;
        Ok(found)
    }
}

/// Text key identifying an answer up to renaming of unbound variables.
fn variant_key(vars: &[Var], s: &Substitution) -> String {
    let mut names: HashMap<Var, usize> = HashMap::new();
    let mut key = String::new();
    for v in vars {
        let t = s.get(v).cloned().unwrap_or_else(|| Term::Var(v.clone()));
        let t = t.map_vars(&mut |x| {
            let n = names.len();
            let i = *names.entry(x.clone()).or_insert(n);
            Term::Var(Var::with_id("_V", i as u32 + 1))
        });
        key.push_str(&t.to_string());
        key.push('|');
    }
    key
}

#[derive(Clone, Debug)]
enum Goal {
    Call(Atom),
    /// A `trans/3` step restricted to terminal or to non-terminal clauses.
    Step(Atom, bool),
    Ts {
        from: Term,
        to: Term,
        budget: usize,
        path: Path,
    },
}

type Path = Option<Rc<PathNode>>;

#[derive(Debug)]
struct PathNode {
    config: Term,
    next: Path,
}

fn path_contains(mut p: &Path, t: &Term) -> bool {
    while let Some(n) = p {
        if &n.config == t {
            return true;
        }
        p = &n.next;
    }
    false
}

type Goals = Option<Rc<Cons>>;

#[derive(Debug)]
struct Cons {
    goal: Goal,
    next: Goals,
}

fn push(goal: Goal, next: Goals) -> Goals {
    Some(Rc::new(Cons { goal, next }))
}

fn goal_for(a: &Atom, depth: usize) -> Goal {
    if &*a.pred == TS && a.args.len() == 2 {
        Goal::Ts { from: a.args[0].clone(), to: a.args[1].clone(), budget: depth, path: None }
    } else {
        Goal::Call(a.clone())
    }
}

struct Machine<'a> {
    program: &'a Program,
    db: &'a dyn ExtensionalDb,
    bindings: FxHashMap<Var, Term>,
    trail: Vec<Var>,
    next_id: u32,
    trace: Vec<Atom>,
    steps: u64,
    max_steps: u64,
    max_solutions: usize,
    yielded: usize,
    truncated: bool,
    query_vars: Vec<Var>,
    error: Option<LogicError>,
}

impl Machine<'_> {
    fn walk<'t>(&'t self, mut t: &'t Term) -> &'t Term {
        while let Term::Var(v) = t {
            match self.bindings.get(v) {
                Some(b) => t = b,
                None => break,
            }
        }
        t
    }

    fn resolve(&self, t: &Term) -> Term {
        match self.walk(t) {
            Term::Var(v) => Term::Var(v.clone()),
            Term::Const(c) => Term::Const(c.clone()),
            Term::Compound(f, args) => Term::Compound(f.clone(), args.iter().map(|a| self.resolve(a)).collect()),
            Term::List(items) => Term::List(items.iter().map(|a| self.resolve(a)).collect()),
        }
    }

    fn resolve_atom(&self, a: &Atom) -> Atom {
        Atom { pred: a.pred.clone(), args: a.args.iter().map(|t| self.resolve(t)).collect() }
    }

    fn occurs(&self, v: &Var, t: &Term) -> bool {
        match self.walk(t) {
            Term::Var(w) => w == v,
            Term::Const(_) => false,
            Term::Compound(_, args) | Term::List(args) => args.iter().any(|a| self.occurs(v, a)),
        }
    }

    fn bind(&mut self, v: Var, t: Term) {
        self.trail.push(v.clone());
        self.bindings.insert(v, t);
    }

    fn undo_to(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let v = self.trail.pop().expect("trail underflow");
            self.bindings.remove(&v);
        }
    }

    fn unify(&mut self, a: &Term, b: &Term) -> bool {
        // only terms reached through a binding need copying out of `self`
        let (a_own, b_own);
        let a = if let Term::Var(_) = a {
            a_own = self.walk(a).clone();
            &a_own
        } else {
            a
        };
        let b = if let Term::Var(_) = b {
            b_own = self.walk(b).clone();
            &b_own
        } else {
            b
        };
        match (a, b) {
            (Term::Var(x), Term::Var(y)) if x == y => true,
            (Term::Var(x), t) | (t, Term::Var(x)) => {
                if self.occurs(x, t) {
                    return false;
                }
                self.bind(x.clone(), t.clone());
                true
            }
            (Term::Const(x), Term::Const(y)) => x == y,
            (Term::Compound(f, xs), Term::Compound(g, ys)) => {
                f == g && xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| self.unify(x, y))
            }
            (Term::List(xs), Term::List(ys)) => {
                xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| self.unify(x, y))
            }
            _ => false,
        }
    }

    fn fresh_var(&mut self, name: &str) -> Term {
        self.next_id += 1;
        Term::Var(Var::with_id(name, self.next_id))
    }

    fn fail(&mut self, e: LogicError) -> ControlFlow<()> {
        self.error = Some(e);
        ControlFlow::Break(())
    }

    fn run(&mut self, goals: &Goals, on_answer: &mut dyn FnMut(Answer) -> ControlFlow<()>) -> ControlFlow<()> {
        self.steps += 1;
        if self.steps > self.max_steps {
            return self.fail(LogicError::StepLimit(self.max_steps));
        }
        let Some(cell) = goals else {
            return self.emit(on_answer);
        };
        let rest = &cell.next;
        match &cell.goal {
            Goal::Ts { from, to, budget, path } => self.run_ts(from, to, *budget, path, rest, on_answer),
            Goal::Call(atom) => self.run_call(atom, rest, on_answer, None),
            Goal::Step(atom, terminal) => self.run_call(atom, rest, on_answer, Some(*terminal)),
        }
    }

    fn emit(&mut self, on_answer: &mut dyn FnMut(Answer) -> ControlFlow<()>) -> ControlFlow<()> {
        if self.yielded >= self.max_solutions {
            self.truncated = true;
            return ControlFlow::Break(());
        }
        self.yielded += 1;
        let subst = Substitution::from_map(
            self.query_vars
                .iter()
                .filter_map(|v| {
                    let t = self.resolve(&Term::Var(v.clone()));
                    (t != Term::Var(v.clone())).then(|| (v.clone(), t))
                })
                .collect(),
        );
        let trace = self.trace.iter().map(|a| self.resolve_atom(a)).collect();
        on_answer(Answer { subst, trace })
    }

    fn run_ts(
        &mut self,
        from: &Term,
        to: &Term,
        budget: usize,
        path: &Path,
        rest: &Goals,
        on_answer: &mut dyn FnMut(Answer) -> ControlFlow<()>,
    ) -> ControlFlow<()> {
        let here = self.resolve(from);
        // a proof that revisits a configuration is never needed
        if here.is_ground() && path_contains(path, &here) {
            return ControlFlow::Continue(());
        }
        let mark = self.trail.len();
        if self.unify(&here, to) {
            self.run(rest, on_answer)?;
        }
        self.undo_to(mark);
        if budget == 0 {
            return ControlFlow::Continue(());
        }
        let label = self.fresh_var("T");
        if !self.program.has_terminals() {
            let next = self.fresh_var("C");
            let step = Atom::new(TRANS, vec![label, here.clone(), next.clone()]);
            let path = Some(Rc::new(PathNode { config: here, next: path.clone() }));
            let cont = push(
                Goal::Call(step),
                push(Goal::Ts { from: next, to: to.clone(), budget: budget - 1, path }, rest.clone()),
            );
            return self.run(&cont, on_answer);
        }
        let target = self.resolve(to);
        let revisit = target.is_ground() && (target == here || path_contains(path, &target));
        // a terminal step ends the proof
        if !revisit {
            let step = Atom::new(TRANS, vec![label.clone(), here.clone(), target.clone()]);
            self.run(&push(Goal::Step(step, true), rest.clone()), on_answer)?;
        }
        if budget == 1 {
            if revisit {
                return ControlFlow::Continue(());
            }
            let step = Atom::new(TRANS, vec![label, here, target]);
            return self.run(&push(Goal::Step(step, false), rest.clone()), on_answer);
        }
        let next = self.fresh_var("C");
        let step = Atom::new(TRANS, vec![label, here.clone(), next.clone()]);
        let path = Some(Rc::new(PathNode { config: here, next: path.clone() }));
        let cont = push(
            Goal::Step(step, false),
            push(Goal::Ts { from: next, to: to.clone(), budget: budget - 1, path }, rest.clone()),
        );
        self.run(&cont, on_answer)
    }

    fn run_call(
        &mut self,
        atom: &Atom,
        rest: &Goals,
        on_answer: &mut dyn FnMut(Answer) -> ControlFlow<()>,
        terminal: Option<bool>,
    ) -> ControlFlow<()> {
        let is_trans = &*atom.pred == TRANS && atom.args.len() == 3;
        if is_trans {
            self.trace.push(atom.clone());
        }
        let flow = self.resolve_call(atom, rest, on_answer, terminal);
        if is_trans {
            self.trace.pop();
        }
        flow
    }

    fn resolve_call(
        &mut self,
        atom: &Atom,
        rest: &Goals,
        on_answer: &mut dyn FnMut(Answer) -> ControlFlow<()>,
        terminal: Option<bool>,
    ) -> ControlFlow<()> {
        let program = self.program;
        if let Some(indices) = program.clauses_for(&atom.pred, atom.args.len()) {
            for &ci in indices {
                let clause = &program.clauses()[ci];
                if terminal.is_some_and(|t| program.is_terminal_label(&clause.head.args[0]) != t) {
                    continue;
                }
                if !self.head_may_match(&clause.head, atom) {
                    continue;
                }
                let renamed = clause.rename_apart(&mut self.next_id);
                let mark = self.trail.len();
                let ok = renamed.head.args.iter().zip(&atom.args).all(|(h, g)| self.unify(h, g));
                if ok {
                    let mut cont = rest.clone();
                    for b in renamed.body.iter().rev() {
                        cont = push(Goal::Call(b.clone()), cont);
                    }
                    let flow = self.run(&cont, on_answer);
                    self.undo_to(mark);
                    flow?;
                } else {
                    self.undo_to(mark);
                }
            }
            return ControlFlow::Continue(());
        }
        match self.db.relation_arity(&atom.pred) {
            Some(n) if n == atom.args.len() => self.scan_facts(atom, rest, on_answer),
            _ => self.fail(LogicError::UnknownPredicate(format!("{}/{}", atom.pred, atom.args.len()))),
        }
    }

    /// Cheap structural pre-filter between a clause head and the goal: no
    /// bindings are made, repeated variables are ignored.
    fn head_may_match(&self, head: &Atom, goal: &Atom) -> bool {
        head.args.iter().zip(&goal.args).all(|(h, g)| self.may_match(h, g))
    }

    fn may_match(&self, h: &Term, g: &Term) -> bool {
        match (h, self.walk(g)) {
            (Term::Var(_), _) | (_, Term::Var(_)) => true,
            (Term::Const(a), Term::Const(b)) => a == b,
            (Term::Compound(f, xs), Term::Compound(g, ys)) => {
                f == g && xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| self.may_match(x, y))
            }
            (Term::List(xs), Term::List(ys)) => {
                xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| self.may_match(x, y))
            }
            _ => false,
        }
    }

    fn scan_facts(
        &mut self,
        atom: &Atom,
        rest: &Goals,
        on_answer: &mut dyn FnMut(Answer) -> ControlFlow<()>,
    ) -> ControlFlow<()> {
        let args: Vec<Term> = atom.args.iter().map(|a| self.resolve(a)).collect();
        let pattern: Vec<Option<Constant>> = args
            .iter()
            .map(|a| match a {
                Term::Const(c) => Some(c.clone()),
                _ => None,
            })
            .collect();
        if args.iter().any(|a| matches!(a, Term::Compound(..) | Term::List(..))) {
            // facts hold constants only
            return ControlFlow::Continue(());
        }
        let db = self.db;
        let name: Arc<str> = atom.pred.clone();
        db.scan(&name, &pattern, &mut |tuple| {
            let mark = self.trail.len();
            let mut ok = true;
            for (i, a) in args.iter().enumerate() {
                if pattern[i].is_none() && !self.unify(a, &Term::Const(tuple[i].clone())) {
                    ok = false;
                    break;
                }
            }
            let flow = if ok { self.run(rest, on_answer) } else { ControlFlow::Continue(()) };
            self.undo_to(mark);
            flow
        })
    }
}
