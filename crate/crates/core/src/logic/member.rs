//! Membership of a finite trace in a formula's denotation.
//!
//! Segments `[a, b]` are inclusive entry ranges of one trace. Every query
//! `(node, env, a, b)` is memoized; a query met again while it is still being
//! answered is false (least fixed point). A false answer that relied on such
//! a cut-off of a strictly enclosing query is not memoized.

use super::Formula;
use crate::lang::{Env as ExprEnv, EvalError, Expr};
use crate::trace::{contexts_at, involves, Context, Entry, Event, State, Trace};
use num_bigint::BigInt;
use num_traits::ToPrimitive;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use thiserror::Error;

pub type Bindings = BTreeMap<String, BigInt>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MemberError {
    #[error("the empty trace has no membership")]
    EmptyTrace,
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("unbound recursion variable `{0}`")]
    UnboundRecVar(String),
    #[error("arity mismatch for `{0}`")]
    Arity(String),
}

struct Beta<'a>(&'a Bindings);

impl ExprEnv for Beta<'_> {
    fn var(&self, _: &str) -> Option<BigInt> {
        None
    }
    fn sym(&self, name: &str) -> Option<BigInt> {
        self.0.get(name).cloned()
    }
}

struct StateBeta<'a>(&'a State, &'a Bindings);

impl ExprEnv for StateBeta<'_> {
    fn var(&self, name: &str) -> Option<BigInt> {
        self.0.get(name).cloned()
    }
    fn sym(&self, name: &str) -> Option<BigInt> {
        self.1.get(name).cloned()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Env {
    beta: Bindings,
    /// recursion variable -> closure id
    rho: BTreeMap<String, usize>,
}

type Key = (usize, usize, usize, usize);
const NO_CUT: usize = usize::MAX;

pub(crate) struct Checker<'t, 'f> {
    t: &'t Trace,
    ctx: Vec<Context>,
    state: Vec<bool>,
    envs: Vec<Env>,
    env_ids: HashMap<Env, usize>,
    /// (mu node, environment the node was reached in)
    closures: Vec<(&'f Formula, usize)>,
    closure_ids: HashMap<(usize, usize), usize>,
    memo: HashMap<Key, bool>,
    stack: HashMap<Key, usize>,
    spans: HashMap<usize, (usize, Option<usize>)>,
    rec: HashMap<usize, bool>,
}

fn ptr(f: &Formula) -> usize {
    f as *const Formula as usize
}

impl<'t, 'f> Checker<'t, 'f> {
    pub(crate) fn new(t: &'t Trace) -> Self {
        Checker {
            t,
            ctx: contexts_at(t),
            state: t.0.iter().map(|e| matches!(e, Entry::State(_))).collect(),
            envs: Vec::new(),
            env_ids: HashMap::new(),
            closures: Vec::new(),
            closure_ids: HashMap::new(),
            memo: HashMap::new(),
            stack: HashMap::new(),
            spans: HashMap::new(),
            rec: HashMap::new(),
        }
    }

    fn env_id(&mut self, e: Env) -> usize {
        if let Some(&id) = self.env_ids.get(&e) {
            return id;
        }
        let id = self.envs.len();
        self.envs.push(e.clone());
        self.env_ids.insert(e, id);
        id
    }

    pub(crate) fn root_env(&mut self, beta: &Bindings) -> usize {
        self.env_id(Env { beta: beta.clone(), rho: BTreeMap::new() })
    }

    fn closure(&mut self, mu: &'f Formula, env: usize) -> usize {
        let k = (ptr(mu), env);
        if let Some(&id) = self.closure_ids.get(&k) {
            return id;
        }
        let id = self.closures.len();
        self.closures.push((mu, env));
        self.closure_ids.insert(k, id);
        id
    }

    fn st(&self, j: usize) -> &State {
        match &self.t.0[j] {
            Entry::State(s) => s,
            Entry::Event(_) => unreachable!("caller checks for a state entry"),
        }
    }

    fn ev(&self, j: usize) -> Option<&Event> {
        self.t.0.get(j).and_then(Entry::as_event)
    }

    /// Entry `j` is an event involving one of `ms`.
    fn blocked(&self, j: usize, ms: &[String]) -> bool {
        match self.ev(j) {
            Some(ev) => ms.iter().any(|m| involves(ev, &self.ctx[j], m)),
            None => false,
        }
    }

    fn span(&mut self, f: &Formula) -> (usize, Option<usize>) {
        if let Some(s) = self.spans.get(&ptr(f)) {
            return *s;
        }
        let s = match f {
            Formula::State(_) | Formula::NoEv(_) => (0, Some(0)),
            Formula::Start { .. } => (4, Some(4)),
            Formula::Finish { .. } => (5, Some(5)),
            Formula::Gap(_) | Formula::App(..) | Formula::Mu { .. } => (0, None),
            Formula::And(x, y) => {
                let (a, b) = (self.span(x), self.span(y));
                (a.0.max(b.0), match (a.1, b.1) {
                    (Some(p), Some(q)) => Some(p.min(q)),
                    (p, q) => p.or(q),
                })
            }
            Formula::Or(x, y) => {
                let (a, b) = (self.span(x), self.span(y));
                (a.0.min(b.0), a.1.zip(b.1).map(|(p, q)| p.max(q)))
            }
            Formula::Chop(x, y) => {
                let (a, b) = (self.span(x), self.span(y));
                (a.0 + b.0, a.1.zip(b.1).map(|(p, q)| p + q))
            }
            Formula::Concat(x, y) => {
                let (a, b) = (self.span(x), self.span(y));
                (a.0 + b.0 + 1, a.1.zip(b.1).map(|(p, q)| p + q + 1))
            }
        };
        self.spans.insert(ptr(f), s);
        s
    }

    /// Values for an argument tuple; `fresh(e)` ranges over the call ids in
    /// the segment other than the value of `e`.
    fn arg_choices(&self, args: &[Expr], env: usize, a: usize, b: usize) -> Result<Vec<Vec<BigInt>>, MemberError> {
        let beta = &self.envs[env].beta;
        let mut out: Vec<Vec<BigInt>> = vec![vec![]];
        for arg in args {
            let vals: Vec<BigInt> = match arg {
                Expr::Fresh(e) => {
                    let not = e.eval_int(&Beta(beta))?;
                    let ids: BTreeSet<u64> = (a..=b).filter_map(|j| self.ev(j).and_then(Event::id)).collect();
                    ids.into_iter().map(BigInt::from).filter(|v| *v != not).collect()
                }
                e => vec![e.eval_int(&Beta(beta))?],
            };
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    vals.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push(v.clone());
                        p
                    })
                })
                .collect();
        }
        Ok(out)
    }

    fn enter(&mut self, closure: usize, vals: Vec<BigInt>) -> Result<(usize, &'f Formula), MemberError> {
        let (mu, cenv) = self.closures[closure];
        let Formula::Mu { var, params, body, .. } = mu else { unreachable!("closures hold mu nodes") };
        if params.len() != vals.len() {
            return Err(MemberError::Arity(var.clone()));
        }
        let mut e = self.envs[cenv].clone();
        e.beta.extend(params.iter().cloned().zip(vals));
        e.rho.insert(var.clone(), closure);
        Ok((self.env_id(e), body))
    }

    pub(crate) fn eval(&mut self, f: &'f Formula, env: usize, a: usize, b: usize) -> Result<(bool, usize), MemberError> {
        let key = (ptr(f), env, a, b);
        if let Some(&v) = self.memo.get(&key) {
            return Ok((v, NO_CUT));
        }
        if let Some(&d) = self.stack.get(&key) {
            return Ok((false, d));
        }
        let depth = self.stack.len();
        self.stack.insert(key, depth);
        let r = self.compute(f, env, a, b);
        self.stack.remove(&key);
        let (v, low) = r?;
        if v || low >= depth {
            self.memo.insert(key, v);
            return Ok((v, NO_CUT));
        }
        Ok((false, low))
    }

    fn compute(&mut self, f: &'f Formula, env: usize, a: usize, b: usize) -> Result<(bool, usize), MemberError> {
        let yes = |v: bool| Ok((v, NO_CUT));
        match f {
            Formula::State(p) => {
                if a != b || !self.state[a] {
                    return yes(false);
                }
                let beta = &self.envs[env].beta;
                // states are partial: a predicate over an absent variable does not hold
                match p.eval_bool(&StateBeta(self.st(a), beta)) {
                    Ok(v) => yes(v),
                    Err(EvalError::UndefinedVariable(_)) => yes(false),
                    Err(e) => Err(e.into()),
                }
            }
            Formula::Start { proc, arg, id } => {
                if b != a + 4 || !(self.state[a] && self.state[a + 2] && self.state[a + 4]) {
                    return yes(false);
                }
                let beta = &self.envs[env].beta;
                let (v, i) = (arg.eval_int(&Beta(beta))?, id.eval_int(&Beta(beta))?);
                let s = self.st(a);
                let ok = s == self.st(a + 2)
                    && s == self.st(a + 4)
                    && matches!(self.ev(a + 1), Some(Event::Call { proc: p, arg: x, id: k }) if p == proc && *x == v && BigInt::from(*k) == i)
                    && matches!(self.ev(a + 3), Some(Event::Push { proc: p, id: k }) if p == proc && BigInt::from(*k) == i);
                yes(ok)
            }
            Formula::Finish { proc, value, id } => {
                if b != a + 5 || !(self.state[a] && self.state[a + 2] && self.state[a + 3] && self.state[a + 5]) {
                    return yes(false);
                }
                let beta = &self.envs[env].beta;
                let (v, i) = (value.eval_int(&Beta(beta))?, id.eval_int(&Beta(beta))?);
                let Some(i) = i.to_u64() else { return yes(false) };
                let s = self.st(a);
                let s2 = s.with(&crate::lang::res_name(i), v.clone());
                let ok = s == self.st(a + 2)
                    && *self.st(a + 3) == s2
                    && *self.st(a + 5) == s2
                    && matches!(self.ev(a + 1), Some(Event::Ret { val }) if *val == v)
                    && matches!(self.ev(a + 4), Some(Event::Pop { proc: p, id: k }) if p == proc && *k == i);
                yes(ok)
            }
            Formula::NoEv(ms) => yes(a == b && !self.blocked(a, ms)),
            Formula::Gap(ms) => yes(a <= b && !(a..=b).any(|j| self.blocked(j, ms))),
            Formula::And(x, y) => {
                let (v, l1) = self.eval(x, env, a, b)?;
                if !v {
                    return Ok((false, l1));
                }
                self.eval(y, env, a, b)
            }
            Formula::Or(x, y) => {
                let (v, l1) = self.eval(x, env, a, b)?;
                if v {
                    return yes(true);
                }
                let (w, l2) = self.eval(y, env, a, b)?;
                Ok((w, if w { NO_CUT } else { l1.min(l2) }))
            }
            Formula::Chop(x, y) => self.chop(x, y, env, a, b),
            Formula::Concat(x, y) => {
                let (xs, ys) = (self.span(x), self.span(y));
                let mut low = NO_CUT;
                let lo = a + xs.0;
                let hi = match xs.1 {
                    Some(m) => (a + m).min(b),
                    None => b,
                };
                for k in lo..=hi {
                    if k + 1 + ys.0 > b || ys.1.is_some_and(|m| k + 1 + m < b) {
                        continue;
                    }
                    let (v, l) = self.eval(x, env, a, k)?;
                    low = low.min(l);
                    if !v {
                        continue;
                    }
                    let (w, l) = self.eval(y, env, k + 1, b)?;
                    if w {
                        return yes(true);
                    }
                    low = low.min(l);
                }
                Ok((false, low))
            }
            Formula::Mu { args, .. } => {
                let c = self.closure(f, env);
                self.apply(c, args, env, a, b)
            }
            Formula::App(x, args) => {
                let c = *self.envs[env].rho.get(x).ok_or_else(|| MemberError::UnboundRecVar(x.clone()))?;
                self.apply(c, args, env, a, b)
            }
        }
    }

    fn apply(&mut self, c: usize, args: &[Expr], env: usize, a: usize, b: usize) -> Result<(bool, usize), MemberError> {
        let mut low = NO_CUT;
        for vals in self.arg_choices(args, env, a, b)? {
            let (e2, body) = self.enter(c, vals)?;
            let (v, l) = self.eval(body, e2, a, b)?;
            if v {
                return Ok((true, NO_CUT));
            }
            low = low.min(l);
        }
        Ok((false, low))
    }

    fn chop(&mut self, x: &'f Formula, y: &'f Formula, env: usize, a: usize, b: usize) -> Result<(bool, usize), MemberError> {
        let (xs, ys) = (self.span(x), self.span(y));
        if a + xs.0 + ys.0 > b {
            return Ok((false, NO_CUT));
        }
        let mut lo = a + xs.0;
        if let Some(m) = ys.1 {
            lo = lo.max(b.saturating_sub(m));
        }
        let mut hi = b - ys.0;
        if let Some(m) = xs.1 {
            hi = hi.min(a + m);
        }
        if lo > hi {
            return Ok((false, NO_CUT));
        }
        let mut low = NO_CUT;
        let y_first = self.recursive(x) && !self.recursive(y);
        if let Formula::Gap(ms) = x {
            for k in a..=hi {
                if self.blocked(k, ms) {
                    break;
                }
                if k < lo || !self.state[k] {
                    continue;
                }
                let (w, l) = self.eval(y, env, k, b)?;
                if w {
                    return Ok((true, NO_CUT));
                }
                low = low.min(l);
            }
            return Ok((false, low));
        }
        if let Formula::Gap(ms) = y {
            for k in (lo..=b).rev() {
                if self.blocked(k, ms) {
                    break;
                }
                if k > hi || !self.state[k] {
                    continue;
                }
                let (v, l) = self.eval(x, env, a, k)?;
                if v {
                    return Ok((true, NO_CUT));
                }
                low = low.min(l);
            }
            return Ok((false, low));
        }
        for k in lo..=hi {
            if !self.state[k] {
                continue;
            }
            // the non-recursive side first: it is cheap and usually rules k out
            let (first, second) = if y_first { ((y, k, b), (x, a, k)) } else { ((x, a, k), (y, k, b)) };
            let (v, l) = self.eval(first.0, env, first.1, first.2)?;
            low = low.min(l);
            if !v {
                continue;
            }
            let (w, l) = self.eval(second.0, env, second.1, second.2)?;
            if w {
                return Ok((true, NO_CUT));
            }
            low = low.min(l);
        }
        Ok((false, low))
    }

    fn recursive(&mut self, f: &Formula) -> bool {
        if let Some(r) = self.rec.get(&ptr(f)) {
            return *r;
        }
        let r = match f {
            Formula::App(..) | Formula::Mu { .. } => true,
            other => other.children().into_iter().any(|c| self.recursive(c)),
        };
        self.rec.insert(ptr(f), r);
        r
    }
}

/// Whether the segment `[a, b]` of `t` belongs to `f` under `beta`.
pub fn member_in(t: &Trace, f: &Formula, beta: &Bindings, a: usize, b: usize) -> Result<bool, MemberError> {
    if t.is_empty() {
        return Err(MemberError::EmptyTrace);
    }
    if let Some(x) = f.free_syms().into_iter().find(|x| !beta.contains_key(x)) {
        return Err(EvalError::UnboundSymbol(x).into());
    }
    if let Some(x) = f.free_rec_vars().into_iter().next() {
        return Err(MemberError::UnboundRecVar(x));
    }
    let mut c = Checker::new(t);
    let env = c.root_env(beta);
    Ok(c.eval(f, env, a, b)?.0)
}

/// `τ ∈ ⟦Φ⟧` under the logical assignment `beta`.
pub fn member(t: &Trace, f: &Formula, beta: &Bindings) -> Result<bool, MemberError> {
    if t.is_empty() {
        return Err(MemberError::EmptyTrace);
    }
    member_in(t, f, beta, 0, t.len() - 1)
}
