//! States, event markers, traces and the operations on them.

mod adequacy;
mod json;
mod schema;

pub use adequacy::{is_adequate, Mode, Verdict};
pub use json::{trace_from_json, trace_from_json_str, trace_to_json, trace_to_json_string, JsonError};
pub use schema::{matches, EventKind, EventPattern, ExclItem, SchemaAtom, TraceSchema};

use crate::lang::{res_name, Env, EvalError, Expr, Val};
use num_bigint::BigInt;
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

/// A partial map from variable names to integers. Result variables are
/// stored under `res<id>`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State(pub BTreeMap<String, BigInt>);

impl State {
    pub fn new() -> Self {
        State::default()
    }

    pub fn get(&self, x: &str) -> Option<&BigInt> {
        self.0.get(x)
    }

    pub fn set(&mut self, x: &str, v: BigInt) {
        self.0.insert(x.to_string(), v);
    }

    pub fn with(&self, x: &str, v: BigInt) -> State {
        let mut s = self.clone();
        s.set(x, v);
        s
    }

    pub fn res(&self, id: u64) -> Option<&BigInt> {
        self.0.get(&res_name(id))
    }

    pub fn from_pairs<I: IntoIterator<Item = (S, i64)>, S: Into<String>>(it: I) -> State {
        State(it.into_iter().map(|(k, v)| (k.into(), BigInt::from(v))).collect())
    }
}

impl Env for State {
    fn var(&self, name: &str) -> Option<BigInt> {
        self.0.get(name).cloned()
    }
    fn sym(&self, _: &str) -> Option<BigInt> {
        None
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, (k, v)) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{k}↦{v}")?;
        }
        write!(f, "]")
    }
}

pub fn update_state(s: &State, x: &str, v: BigInt) -> State {
    s.with(x, v)
}

pub fn eval_expr(s: &State, e: &Expr) -> Result<Val, EvalError> {
    e.eval(s)
}

/// A call context; `Main` is the distinguished `(main, nul)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Context {
    Main,
    Call(String, u64),
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Context::Main => write!(f, "(main,nul)"),
            Context::Call(m, id) => write!(f, "({m},{id})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Event {
    Call { proc: String, arg: BigInt, id: u64 },
    Ret { val: BigInt },
    Push { proc: String, id: u64 },
    Pop { proc: String, id: u64 },
}

impl Event {
    pub fn kind(&self) -> EventKind {
        match self {
            Event::Call { .. } => EventKind::Call,
            Event::Ret { .. } => EventKind::Ret,
            Event::Push { .. } => EventKind::Push,
            Event::Pop { .. } => EventKind::Pop,
        }
    }

    pub fn id(&self) -> Option<u64> {
        match self {
            Event::Call { id, .. } | Event::Push { id, .. } | Event::Pop { id, .. } => Some(*id),
            Event::Ret { .. } => None,
        }
    }

    pub fn proc(&self) -> Option<&str> {
        match self {
            Event::Call { proc, .. } | Event::Push { proc, .. } | Event::Pop { proc, .. } => Some(proc),
            Event::Ret { .. } => None,
        }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Call { proc, arg, id } => write!(f, "callEv({proc},{arg},{id})"),
            Event::Ret { val } => write!(f, "retEv({val})"),
            Event::Push { proc, id } => write!(f, "pushEv(({proc},{id}))"),
            Event::Pop { proc, id } => write!(f, "popEv(({proc},{id}))"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Entry {
    State(State),
    Event(Event),
}

impl Entry {
    pub fn as_state(&self) -> Option<&State> {
        match self {
            Entry::State(s) => Some(s),
            Entry::Event(_) => None,
        }
    }

    pub fn as_event(&self) -> Option<&Event> {
        match self {
            Entry::Event(e) => Some(e),
            Entry::State(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("operation requires a non-empty trace")]
    Empty,
    #[error("chop undefined: last state {last} differs from first state {first}")]
    ChopUndefined { last: State, first: State },
    #[error("trace must begin and end with a state")]
    NotStateBounded,
    #[error("malformed nesting at entry {0}: popEv without matching pushEv")]
    MalformedNesting(usize),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Trace(pub Vec<Entry>);

impl Trace {
    pub fn empty() -> Trace {
        Trace(Vec::new())
    }

    pub fn singleton(s: State) -> Trace {
        Trace(vec![Entry::State(s)])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn entries(&self) -> &[Entry] {
        &self.0
    }

    pub fn first(&self) -> Option<&State> {
        self.0.first().and_then(Entry::as_state)
    }

    pub fn last(&self) -> Option<&State> {
        self.0.last().and_then(Entry::as_state)
    }

    /// Appends a state step `↷σ`.
    pub fn push_state(&mut self, s: State) {
        self.0.push(Entry::State(s));
    }

    pub fn events(&self) -> impl Iterator<Item = &Event> {
        self.0.iter().filter_map(Entry::as_event)
    }

    pub fn states(&self) -> impl Iterator<Item = &State> {
        self.0.iter().filter_map(Entry::as_state)
    }

    /// Call ids occurring in events or as result variables.
    pub fn max_call_id(&self) -> Option<u64> {
        let ev = self.events().filter_map(Event::id);
        let res = self.states().flat_map(|s| {
            s.0.keys().filter_map(|k| k.strip_prefix("res").and_then(|d| d.parse::<u64>().ok()))
        });
        ev.chain(res).max()
    }

    /// Largest `k` among renamed locals `x#k`.
    pub fn max_fresh_index(&self) -> Option<u64> {
        self.states()
            .flat_map(|s| s.0.keys().filter_map(|k| k.rsplit_once('#').and_then(|(_, d)| d.parse().ok())))
            .max()
    }
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            match e {
                Entry::State(s) => write!(f, "{s}")?,
                Entry::Event(ev) => write!(f, "{ev}")?,
            }
        }
        Ok(())
    }
}

/// Semantic chop: fuses the last state of `t1` with the first of `t2`.
pub fn chop(t1: &Trace, t2: &Trace) -> Result<Trace, TraceError> {
    let (Some(l), Some(fst)) = (t1.0.last(), t2.0.first()) else {
        return Err(TraceError::Empty);
    };
    match (l, fst) {
        (Entry::State(a), Entry::State(b)) if a == b => {
            let mut out = t1.0[..t1.len() - 1].to_vec();
            out.extend(t2.0.iter().cloned());
            Ok(Trace(out))
        }
        (Entry::State(a), Entry::State(b)) => {
            Err(TraceError::ChopUndefined { last: a.clone(), first: b.clone() })
        }
        _ => Err(TraceError::NotStateBounded),
    }
}

impl Trace {
    /// `self ** t2` without copying `self`.
    pub fn chop_in_place(&mut self, t2: Trace) -> Result<(), TraceError> {
        let (Some(l), Some(fst)) = (self.0.last(), t2.0.first()) else {
            return Err(TraceError::Empty);
        };
        match (l, fst) {
            (Entry::State(a), Entry::State(b)) if a == b => {
                self.0.pop();
                self.0.extend(t2.0);
                Ok(())
            }
            (Entry::State(a), Entry::State(b)) => {
                Err(TraceError::ChopUndefined { last: a.clone(), first: b.clone() })
            }
            _ => Err(TraceError::NotStateBounded),
        }
    }
}

pub fn concat(t1: &Trace, t2: &Trace) -> Trace {
    let mut out = t1.0.clone();
    out.extend(t2.0.iter().cloned());
    Trace(out)
}

/// `⟨σ⟩·ev·σ`.
pub fn event_trace(s: &State, ev: Event) -> Trace {
    Trace(vec![Entry::State(s.clone()), Entry::Event(ev), Entry::State(s.clone())])
}

pub fn last_event(t: &Trace) -> Result<Option<&Event>, TraceError> {
    if t.is_empty() {
        return Err(TraceError::Empty);
    }
    Ok(t.0.iter().rev().find_map(Entry::as_event))
}

/// Innermost pushed context not yet popped.
pub fn curr_ctx(t: &Trace) -> Result<Context, TraceError> {
    if t.is_empty() {
        return Err(TraceError::Empty);
    }
    let stacks = context_stacks(t)?;
    Ok(stacks.last().cloned().unwrap_or(Context::Main))
}

fn context_stacks(t: &Trace) -> Result<Vec<Context>, TraceError> {
    let mut stack = Vec::new();
    for (j, e) in t.0.iter().enumerate() {
        match e {
            Entry::Event(Event::Push { proc, id }) => stack.push(Context::Call(proc.clone(), *id)),
            Entry::Event(Event::Pop { .. }) => {
                if stack.pop().is_none() {
                    return Err(TraceError::MalformedNesting(j));
                }
            }
            _ => {}
        }
    }
    Ok(stack)
}

/// Context in force at each entry: entry `j` sees the pushes and pops of
/// entries before it. Unmatched pops leave the context at main.
pub fn contexts_at(t: &Trace) -> Vec<Context> {
    let mut stack: Vec<Context> = Vec::new();
    let mut out = Vec::with_capacity(t.len());
    for e in &t.0 {
        out.push(stack.last().cloned().unwrap_or(Context::Main));
        match e {
            Entry::Event(Event::Push { proc, id }) => stack.push(Context::Call(proc.clone(), *id)),
            Entry::Event(Event::Pop { .. }) => {
                stack.pop();
            }
            _ => {}
        }
    }
    out
}

/// Whether event entry `j` of `t` involves procedure `m`. A `retEv` carries
/// no procedure; it involves `m` when it happens inside a context of `m`.
pub fn involves(ev: &Event, ctx: &Context, m: &str) -> bool {
    match ev {
        Event::Ret { .. } => matches!(ctx, Context::Call(p, _) if p == m),
        other => other.proc() == Some(m),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(pairs: &[(&str, i64)]) -> State {
        State::from_pairs(pairs.iter().map(|(k, v)| (k.to_string(), *v)))
    }

    #[test]
    fn chop_fuses_boundary() {
        let s = st(&[]);
        let s1 = s.with("x", 1.into());
        let s2 = s1.with("y", 2.into());
        let t1 = Trace(vec![Entry::State(s.clone()), Entry::State(s1.clone())]);
        let t2 = Trace(vec![Entry::State(s1.clone()), Entry::State(s2.clone())]);
        let r = chop(&t1, &t2).unwrap();
        assert_eq!(r, Trace(vec![Entry::State(s), Entry::State(s1), Entry::State(s2)]));
    }

    #[test]
    fn chop_singletons_and_mismatch() {
        let s = st(&[("x", 0)]);
        let t = Trace::singleton(s.clone());
        assert_eq!(chop(&t, &t).unwrap(), t);
        let u = Trace::singleton(st(&[("x", 1)]));
        assert!(matches!(chop(&t, &u), Err(TraceError::ChopUndefined { .. })));
        assert_eq!(chop(&Trace::empty(), &t), Err(TraceError::Empty));
    }

    #[test]
    fn concat_with_empty() {
        let t = Trace::singleton(st(&[("x", 0)]));
        assert_eq!(concat(&t, &Trace::empty()), t);
    }

    #[test]
    fn update_overwrites() {
        let s = update_state(&update_state(&State::new(), "x", 0.into()), "x", 1.into());
        assert_eq!(s, st(&[("x", 1)]));
    }

    #[test]
    fn eval_sum_from_state() {
        let s = st(&[("x", 0), ("y", 1)]);
        let e = crate::lang::parse_expr_text("x + y", &Default::default()).unwrap();
        assert_eq!(eval_expr(&s, &e).unwrap(), Val::Int(1.into()));
    }

    #[test]
    fn event_trace_is_flanked() {
        let s = st(&[("x", 0)]);
        let t = event_trace(&s, Event::Call { proc: "m".into(), arg: 1.into(), id: 0 });
        assert_eq!(t.first(), Some(&s));
        assert_eq!(t.last(), Some(&s));
        assert_eq!(t.len(), 3);
    }

    #[test]
    fn last_event_and_ctx_of_singleton() {
        let t = Trace::singleton(State::new());
        assert_eq!(last_event(&t).unwrap(), None);
        assert_eq!(curr_ctx(&t).unwrap(), Context::Main);
        assert_eq!(last_event(&Trace::empty()), Err(TraceError::Empty));
    }

    #[test]
    fn unmatched_pop_is_malformed() {
        let s = State::new();
        let t = event_trace(&s, Event::Pop { proc: "m".into(), id: 0 });
        assert_eq!(curr_ctx(&t), Err(TraceError::MalformedNesting(1)));
    }
}
