//! Local evaluation and the Progress/Call/Return composition rules.

use crate::lang::{res_name, EvalError, Expr, Lhs, LookupTable, Program, Scope, Stmt, UnknownProcedure};
use crate::trace::{chop, concat, event_trace, Context, Entry, Event, State, Trace, TraceError};
use crate::update::{Update, UpdateAtom};
use num_bigint::BigInt;
use num_traits::ToPrimitive;
use thiserror::Error;

pub const DEFAULT_FUEL: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InterpError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    UnknownProcedure(#[from] UnknownProcedure),
    #[error("fuel exhausted")]
    FuelExhausted,
    #[error("stuck configuration: {0}")]
    Stuck(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// `K(U s)`; empty updates and no statement is `K(∘)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Cont {
    pub updates: Vec<UpdateAtom>,
    pub stmt: Option<Stmt>,
}

impl Cont {
    pub fn done() -> Cont {
        Cont::default()
    }

    pub fn stmt(s: Stmt) -> Cont {
        Cont { updates: Vec::new(), stmt: Some(s) }
    }

    pub fn new(u: &Update, s: Option<Stmt>) -> Cont {
        Cont { updates: u.0.clone(), stmt: s }
    }

    pub fn is_done(&self) -> bool {
        self.updates.is_empty() && self.stmt.is_none()
    }
}

/// Counters for call ids and renamed locals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Alloc {
    pub next_id: u64,
    pub next_fresh: u64,
}

impl Alloc {
    /// Counters that are fresh with respect to everything recorded in `t`.
    pub fn after(t: &Trace) -> Alloc {
        Alloc {
            next_id: t.max_call_id().map_or(0, |m| m + 1),
            next_fresh: t.max_fresh_index().map_or(0, |m| m + 1),
        }
    }

    fn call_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    fn fresh(&mut self, x: &str) -> String {
        let base = x.split('#').next().unwrap_or(x);
        let k = self.next_fresh;
        self.next_fresh += 1;
        format!("{base}#{k}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Configuration {
    pub trace: Trace,
    pub cont: Cont,
    pub alloc: Alloc,
    /// open contexts of `trace`, innermost last
    pub stack: Vec<Context>,
}

impl Configuration {
    pub fn new(trace: Trace, cont: Cont, alloc: Alloc) -> Configuration {
        let mut stack = Vec::new();
        track_contexts(&mut stack, &trace.0);
        Configuration { trace, cont, alloc, stack }
    }
}

fn track_contexts(stack: &mut Vec<Context>, entries: &[Entry]) {
    for e in entries {
        match e {
            Entry::Event(Event::Push { proc, id }) => stack.push(Context::Call(proc.clone(), *id)),
            Entry::Event(Event::Pop { .. }) => {
                stack.pop();
            }
            _ => {}
        }
    }
}

/// Which composition rule fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    Progress,
    Call,
    Return,
}

pub struct Interp<'g> {
    pub g: &'g LookupTable,
    pub fuel: u64,
}

fn int(e: &Expr, s: &State) -> Result<BigInt, InterpError> {
    Ok(e.eval_int(s)?)
}

fn id_of(e: &Expr, s: &State) -> Result<u64, InterpError> {
    let v = int(e, s)?;
    v.to_u64().ok_or_else(|| InterpError::Stuck(format!("call id {v} is not a natural")))
}

fn seq_opt(a: Option<Stmt>, rest: Option<Stmt>) -> Option<Stmt> {
    match (a, rest) {
        (None, r) => r,
        (Some(a), None) => Some(a),
        (Some(a), Some(r)) => Some(Stmt::Seq(Box::new(a), Box::new(r))),
    }
}

impl<'g> Interp<'g> {
    pub fn new(g: &'g LookupTable, fuel: u64) -> Self {
        Interp { g, fuel }
    }

    fn burn(&mut self) -> Result<(), InterpError> {
        if self.fuel == 0 {
            return Err(InterpError::FuelExhausted);
        }
        self.fuel -= 1;
        Ok(())
    }

    /// One local evaluation step of the head of `k` in state `s`.
    pub fn local_eval(&mut self, s: &State, k: &Cont, alloc: &mut Alloc) -> Result<(Trace, Cont), InterpError> {
        if let Some((u, rest)) = k.updates.split_first() {
            let t = self.eval_update(s, u, alloc)?;
            return Ok((t, Cont { updates: rest.to_vec(), stmt: k.stmt.clone() }));
        }
        match &k.stmt {
            None => Err(InterpError::Stuck("nothing left to evaluate".into())),
            Some(st) => {
                let (t, next) = self.eval_stmt(s, st, alloc)?;
                Ok((t, Cont { updates: Vec::new(), stmt: next }))
            }
        }
    }

    fn eval_update(&mut self, s: &State, u: &UpdateAtom, alloc: &mut Alloc) -> Result<Trace, InterpError> {
        Ok(match u {
            UpdateAtom::Assign(Lhs::Var(x), e) => {
                let mut t = Trace::singleton(s.clone());
                t.push_state(s.with(x, int(e, s)?));
                t
            }
            UpdateAtom::Assign(Lhs::Res(_), _) => Trace::singleton(s.clone()),
            UpdateAtom::Call(v, m, e) => {
                let code = Cont::stmt(Stmt::Call(v.clone(), m.clone(), e.clone()));
                let (t, a) = self.run_code(Trace::singleton(s.clone()), code, *alloc)?;
                *alloc = a;
                t
            }
            UpdateAtom::Start { proc, arg, id } => {
                let v = int(arg, s)?;
                let id = id_of(id, s)?;
                alloc.next_id = alloc.next_id.max(id + 1);
                let c = event_trace(s, Event::Call { proc: proc.clone(), arg: v, id });
                chop(&c, &event_trace(s, Event::Push { proc: proc.clone(), id }))?
            }
            UpdateAtom::Finish { proc, value, id } => {
                let v = int(value, s)?;
                let id = id_of(id, s)?;
                let r = event_trace(s, Event::Ret { val: v.clone() });
                let s2 = s.with(&res_name(id), v);
                concat(&r, &event_trace(&s2, Event::Pop { proc: proc.clone(), id }))
            }
        })
    }

    fn eval_stmt(&mut self, s: &State, st: &Stmt, alloc: &mut Alloc) -> Result<(Trace, Option<Stmt>), InterpError> {
        let one = || Trace::singleton(s.clone());
        Ok(match st {
            Stmt::Skip => (one(), None),
            Stmt::Assign(Lhs::Var(x), e) => {
                let mut t = one();
                t.push_state(s.with(x, int(e, s)?));
                (t, None)
            }
            Stmt::Assign(Lhs::Res(_), _) => (one(), None),
            Stmt::Call(x, m, e) => {
                self.g.get(m)?;
                let v = int(e, s)?;
                let id = alloc.call_id();
                let t = event_trace(s, Event::Call { proc: m.clone(), arg: v, id });
                (t, Some(Stmt::assign(x, Expr::res(Expr::int(id)))))
            }
            Stmt::If(c, body) => {
                if c.eval_bool(s)? {
                    (one(), Some((**body).clone()))
                } else {
                    (one(), None)
                }
            }
            Stmt::While(c, body) => {
                let unrolled = Stmt::If(
                    c.clone(),
                    Box::new(Stmt::Seq(body.clone(), Box::new(st.clone()))),
                );
                return self.eval_stmt(s, &unrolled, alloc);
            }
            Stmt::Seq(a, b) => {
                let (t, k) = self.eval_stmt(s, a, alloc)?;
                (t, seq_opt(k, Some((**b).clone())))
            }
            Stmt::Scope(Scope { decls, body }) => match decls.split_first() {
                None => return self.eval_stmt(s, body, alloc),
                Some((x, rest)) => {
                    let x2 = alloc.fresh(x);
                    let mut t = one();
                    t.push_state(s.with(&x2, BigInt::from(0)));
                    let body2 = Scope { decls: rest.to_vec(), body: Box::new(body.rename_var(x, &x2)) };
                    (t, Some(Stmt::Scope(body2)))
                }
            },
            Stmt::Return(e) => (event_trace(s, Event::Ret { val: int(e, s)? }), None),
        })
    }

    /// One application of Progress, Call or Return.
    pub fn step(&mut self, c: &mut Configuration) -> Result<RuleKind, InterpError> {
        self.burn()?;
        let n = c.trace.len();
        let last = c.trace.last().cloned().ok_or(TraceError::Empty)?;
        let tail_event = if n >= 3 { c.trace.0[n - 2].as_event().cloned() } else { None };
        match tail_event {
            Some(Event::Call { proc, arg, id }) => {
                let decl = self.g.get(&proc)?;
                let push = event_trace(&last, Event::Push { proc: proc.clone(), id });
                c.trace.chop_in_place(push)?;
                c.stack.push(Context::Call(proc.clone(), id));
                let body = Stmt::Scope(decl.body.clone()).subst_var(&decl.param, &Expr::Int(arg));
                let stmt = seq_opt(Some(body), c.cont.stmt.take());
                c.cont = Cont { updates: std::mem::take(&mut c.cont.updates), stmt };
                Ok(RuleKind::Call)
            }
            Some(Event::Ret { val }) => {
                let Some(Context::Call(m, id)) = c.stack.pop() else {
                    return Err(InterpError::Stuck("return outside of a procedure".into()));
                };
                let s2 = last.with(&res_name(id), val);
                c.trace.push_state(s2.clone());
                c.trace.chop_in_place(event_trace(&s2, Event::Pop { proc: m, id }))?;
                Ok(RuleKind::Return)
            }
            _ => {
                if c.cont.is_done() {
                    return Err(InterpError::Stuck("continuation is empty".into()));
                }
                let (t, k) = self.local_eval(&last, &c.cont, &mut c.alloc)?;
                track_contexts(&mut c.stack, &t.0);
                c.trace.chop_in_place(t)?;
                c.cont = k;
                Ok(RuleKind::Progress)
            }
        }
    }

    fn finished(c: &Configuration) -> bool {
        let n = c.trace.len();
        let pending_event = n >= 3
            && matches!(c.trace.0[n - 2], Entry::Event(Event::Call { .. } | Event::Ret { .. }));
        c.cont.is_done() && !pending_event
    }

    /// Runs `code` from trace `t` to completion; returns the extension
    /// (starting with `last(t)`) and the final counters.
    pub fn run_code(&mut self, t: Trace, code: Cont, alloc: Alloc) -> Result<(Trace, Alloc), InterpError> {
        let start = t.len().checked_sub(1).ok_or(TraceError::Empty)?;
        let mut c = Configuration::new(t, code, alloc);
        while !Self::finished(&c) {
            self.step(&mut c)?;
        }
        Ok((Trace(c.trace.0[start..].to_vec()), c.alloc))
    }
}

/// Initial state: `s0` extended with main's declarations bound to 0.
pub fn initial_state(p: &Program, s0: &State) -> State {
    let mut s = s0.clone();
    for d in &p.main_decls {
        if s.get(d).is_none() {
            s.set(d, BigInt::from(0));
        }
    }
    s
}

/// The trace of `main` from `s0` (extended by main's declarations).
pub fn run(p: &Program, s0: &State, fuel: u64) -> Result<Trace, InterpError> {
    let g = p.lookup_table();
    let mut it = Interp::new(&g, fuel);
    let t = Trace::singleton(initial_state(p, s0));
    let alloc = Alloc::after(&t);
    Ok(it.run_code(t, Cont::stmt(p.main_body.clone()), alloc)?.0)
}

/// `⟦U s⟧(τ)`: the extension of `τ` produced by running `U s`.
pub fn run_update_prefixed(
    u: &Update,
    s: Option<&Stmt>,
    t: &Trace,
    g: &LookupTable,
    fuel: u64,
) -> Result<Trace, InterpError> {
    let mut it = Interp::new(g, fuel);
    let mut alloc = Alloc::after(t);
    let mut names = std::collections::BTreeSet::new();
    for a in &u.0 {
        names.extend(a.target().map(str::to_string));
        a.exprs().iter().for_each(|e| names.extend(e.vars()));
    }
    if let Some(s) = s {
        s.all_names(&mut names);
    }
    // names introduced by the calculus (`k#0`) must not be reused for locals
    for n in &names {
        if let Some(k) = n.split_once('#').and_then(|(_, d)| d.parse::<u64>().ok()) {
            alloc.next_fresh = alloc.next_fresh.max(k + 1);
        }
    }
    Ok(it.run_code(t.clone(), Cont::new(u, s.cloned()), alloc)?.0)
}

/// `⟦s⟧(τ)` for a plain statement.
pub fn run_stmt(s: &Stmt, t: &Trace, g: &LookupTable, fuel: u64) -> Result<Trace, InterpError> {
    run_update_prefixed(&Update::empty(), Some(s), t, g, fuel)
}

/// The trace of the bare call `m(v)`: everything up to and including the
/// final popEv, without the assignment of the result.
pub fn run_call(g: &LookupTable, m: &str, v: BigInt, s0: &State, fuel: u64) -> Result<Trace, InterpError> {
    let call = Stmt::Call("_".into(), m.to_string(), Expr::Int(v));
    let mut t = run_stmt(&call, &Trace::singleton(s0.clone()), g, fuel)?;
    t.0.pop();
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{parse_program, parse_stmt_text};

    const RUNNING: &str = "m(k) { r; if (k != 0) { r = m(k - 1); r = r + 1 }; return r }\nmain { x; x = m(1) }";

    #[test]
    fn skip_is_singleton() {
        let p = parse_program("main { skip }").unwrap();
        let t = run(&p, &State::new(), 100).unwrap();
        assert_eq!(t, Trace::singleton(State::new()));
    }

    #[test]
    fn call_assign_emits_call_event() {
        let p = parse_program(RUNNING).unwrap();
        let g = p.lookup_table();
        let mut it = Interp::new(&g, 10);
        let s0 = State::from_pairs([("x", 0)]);
        let mut a = Alloc::default();
        let (t, k) = it.local_eval(&s0, &Cont::stmt(p.main_body.clone()), &mut a).unwrap();
        assert_eq!(t, event_trace(&s0, Event::Call { proc: "m".into(), arg: 1.into(), id: 0 }));
        assert_eq!(k.stmt, Some(parse_stmt_text("x = res(0)").unwrap()));
    }

    #[test]
    fn res_update_is_ignored() {
        let g = LookupTable::default();
        let mut it = Interp::new(&g, 10);
        let s = State::new();
        let k = Cont::new(&crate::update::parse_update("{res(0) := 5}").unwrap(), None);
        let (t, k2) = it.local_eval(&s, &k, &mut Alloc::default()).unwrap();
        assert_eq!(t, Trace::singleton(s));
        assert!(k2.is_done());
    }

    #[test]
    fn nontermination_exhausts_fuel() {
        let p = parse_program("main { while (0 == 0) { skip } }").unwrap();
        assert_eq!(run(&p, &State::new(), 100), Err(InterpError::FuelExhausted));
    }

    #[test]
    fn identity_for_small_n() {
        for n in 0..=10 {
            let src = RUNNING.replace("m(1) }", &format!("m({n}) }}"));
            let p = parse_program(&src).unwrap();
            let t = run(&p, &State::new(), DEFAULT_FUEL).unwrap();
            assert_eq!(t.last().unwrap().get("x"), Some(&BigInt::from(n)));
        }
    }
}
