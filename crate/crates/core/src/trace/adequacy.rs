//! Trace adequacy: every step of a trace must be explained by one of the
//! five clauses (state update, call, return, push, pop).

use super::{Context, Entry, Event, State, Trace};
use crate::lang::res_name;
use num_bigint::BigInt;
use std::collections::BTreeSet;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Literal clauses plus call/push and ret/res/pop pairing.
    #[default]
    Strict,
    /// Literal clauses only.
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Adequate,
    Violation {
        /// 1..=5 for the clauses; 0 when an event is not flanked by equal states.
        clause: u8,
        /// Index of the offending entry.
        position: usize,
        /// Set when only the strict pairing rule is violated.
        strict_only: bool,
        reason: String,
    },
}

impl Verdict {
    pub fn is_adequate(&self) -> bool {
        matches!(self, Verdict::Adequate)
    }

    pub fn clause(&self) -> Option<u8> {
        match self {
            Verdict::Violation { clause, .. } => Some(*clause),
            Verdict::Adequate => None,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Adequate => write!(f, "adequate"),
            Verdict::Violation { clause, position, strict_only, reason } => {
                write!(f, "violation of clause {clause} at entry {position}")?;
                if *strict_only {
                    write!(f, " (strict mode)")?;
                }
                write!(f, ": {reason}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Pending {
    None,
    AfterCall(String, u64),
    AfterRet(BigInt),
    AfterRes,
}

/// Whether `b` is `a` with at most one binding added or changed.
fn single_update(a: &State, b: &State) -> Result<(), String> {
    if a.0.keys().any(|k| !b.0.contains_key(k)) {
        return Err("a binding disappeared".into());
    }
    let changed: Vec<&String> =
        b.0.iter().filter(|(k, v)| a.0.get(*k) != Some(*v)).map(|(k, _)| k).collect();
    if changed.len() > 1 {
        let names: Vec<&str> = changed.iter().map(|s| s.as_str()).collect();
        return Err(format!("{} variables change in one step: {}", changed.len(), names.join(", ")));
    }
    Ok(())
}

fn violation(clause: u8, position: usize, strict_only: bool, reason: impl Into<String>) -> Verdict {
    Verdict::Violation { clause, position, strict_only, reason: reason.into() }
}

pub fn is_adequate(t: &Trace, mode: Mode) -> Verdict {
    let strict = mode == Mode::Strict;
    let es = &t.0;
    let Some(Entry::State(_)) = es.first() else {
        return violation(0, 0, false, "trace must start with a state");
    };
    let mut stack: Vec<Context> = Vec::new();
    let mut used_ids: BTreeSet<u64> = BTreeSet::new();
    let mut last_ev: Option<&Event> = None;
    let mut pending = Pending::None;
    let mut j = 0;
    while j + 1 < es.len() {
        let Entry::State(cur) = &es[j] else { unreachable!() };
        match &es[j + 1] {
            Entry::State(next) => {
                if let Err(r) = single_update(cur, next) {
                    return violation(1, j + 1, false, r);
                }
                if strict {
                    match &pending {
                        Pending::None => {}
                        Pending::AfterCall(m, id) => {
                            return violation(4, j + 1, true, format!("state step before pushEv(({m},{id}))"));
                        }
                        Pending::AfterRet(v) => {
                            let Some(Context::Call(_, id)) = stack.last() else {
                                return violation(5, j + 1, true, "retEv outside any call context");
                            };
                            let expect = cur.with(&res_name(*id), v.clone());
                            if *next != expect {
                                return violation(
                                    5,
                                    j + 1,
                                    true,
                                    format!("retEv must be followed by binding res{id}↦{v}"),
                                );
                            }
                            pending = Pending::AfterRes;
                        }
                        Pending::AfterRes => {
                            return violation(5, j + 1, true, "expected popEv after the result binding");
                        }
                    }
                }
                j += 1;
            }
            Entry::Event(ev) => {
                match es.get(j + 2) {
                    Some(Entry::State(s2)) if s2 == cur => {}
                    _ => return violation(0, j + 1, false, format!("{ev} is not flanked by equal states")),
                }
                let last_is_call_or_ret = matches!(last_ev, Some(Event::Call { .. } | Event::Ret { .. }));
                match ev {
                    Event::Call { proc, id, .. } => {
                        if last_is_call_or_ret {
                            return violation(2, j + 1, false, "callEv directly after callEv/retEv");
                        }
                        if used_ids.contains(id) {
                            return violation(2, j + 1, false, format!("call id {id} is not fresh"));
                        }
                        if let Some(v) = strict_pending(&pending, j + 1) {
                            return v;
                        }
                        used_ids.insert(*id);
                        pending = Pending::AfterCall(proc.clone(), *id);
                    }
                    Event::Ret { val } => {
                        if last_is_call_or_ret {
                            return violation(3, j + 1, false, "retEv directly after callEv/retEv");
                        }
                        if let Some(v) = strict_pending(&pending, j + 1) {
                            return v;
                        }
                        pending = Pending::AfterRet(val.clone());
                    }
                    Event::Push { proc, id } => {
                        let paired = j >= 2
                            && matches!(&es[j - 1], Entry::Event(Event::Call { proc: p, id: i, .. }) if p == proc && i == id);
                        if !paired {
                            return violation(4, j + 1, false, format!("pushEv(({proc},{id})) not directly after its callEv"));
                        }
                        used_ids.insert(*id);
                        stack.push(Context::Call(proc.clone(), *id));
                        pending = Pending::None;
                    }
                    Event::Pop { proc, id } => {
                        if !matches!(last_ev, Some(Event::Ret { .. })) {
                            return violation(5, j + 1, false, format!("popEv(({proc},{id})) not after a retEv"));
                        }
                        let want = Context::Call(proc.clone(), *id);
                        if stack.last() != Some(&want) {
                            let have = stack.last().cloned().unwrap_or(Context::Main);
                            return violation(5, j + 1, false, format!("popEv{want} in context {have}"));
                        }
                        if strict && pending != Pending::AfterRes {
                            return violation(5, j + 1, true, "popEv must follow the result binding of its retEv");
                        }
                        stack.pop();
                        pending = Pending::None;
                    }
                }
                last_ev = Some(ev);
                j += 2;
            }
        }
    }
    if !matches!(es.last(), Some(Entry::State(_))) {
        return violation(0, es.len() - 1, false, "trace must end with a state");
    }
    Verdict::Adequate
}

fn strict_pending(p: &Pending, pos: usize) -> Option<Verdict> {
    match p {
        Pending::AfterCall(m, id) => Some(violation(4, pos, true, format!("expected pushEv(({m},{id}))"))),
        Pending::AfterRet(_) | Pending::AfterRes => Some(violation(5, pos, true, "expected popEv")),
        Pending::None => None,
    }
}
