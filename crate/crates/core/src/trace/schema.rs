//! Schematic traces: literal event atoms joined by gaps that exclude some
//! events, composed with chop.

use super::{contexts_at, involves, Context, Entry, Event, Trace};
use num_bigint::BigInt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Call,
    Ret,
    Push,
    Pop,
}

/// Wildcard pattern for a single event; `None` fields match anything.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EventPattern {
    pub kind: Option<EventKind>,
    pub proc: Option<String>,
    pub id: Option<u64>,
    pub value: Option<BigInt>,
}

impl EventPattern {
    pub fn kind(k: EventKind) -> Self {
        EventPattern { kind: Some(k), ..Default::default() }
    }

    pub fn of(k: EventKind, proc: &str) -> Self {
        EventPattern { kind: Some(k), proc: Some(proc.to_string()), ..Default::default() }
    }

    fn accepts(&self, ev: &Event, ctx: &Context) -> bool {
        if self.kind.is_some_and(|k| k != ev.kind()) {
            return false;
        }
        if let Some(m) = &self.proc {
            if !involves(ev, ctx, m) {
                return false;
            }
        }
        if self.id.is_some() && ev.id() != self.id {
            return false;
        }
        if let Some(v) = &self.value {
            let got = match ev {
                Event::Call { arg, .. } => arg,
                Event::Ret { val } => val,
                _ => return false,
            };
            if got != v {
                return false;
            }
        }
        true
    }
}

/// One excluded class: an event kind (or every kind), optionally limited to
/// events involving a procedure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExclItem {
    pub kind: Option<EventKind>,
    pub proc: Option<String>,
}

impl ExclItem {
    pub fn any_of(proc: &str) -> Self {
        ExclItem { kind: None, proc: Some(proc.to_string()) }
    }

    fn hits(&self, ev: &Event, ctx: &Context) -> bool {
        EventPattern { kind: self.kind, proc: self.proc.clone(), id: None, value: None }.accepts(ev, ctx)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SchemaAtom {
    /// `⟨σ⟩·ev·σ` with `ev` matching the pattern.
    Event(EventPattern),
    /// A non-empty segment with none of the excluded events.
    Gap(Vec<ExclItem>),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TraceSchema(pub Vec<SchemaAtom>);

/// Whether `t` belongs to the schema's denotation. Atoms are chopped
/// together, so consecutive atoms share their boundary state.
pub fn matches(t: &Trace, schema: &TraceSchema) -> bool {
    let n = t.len();
    if n == 0 || !matches!(t.0[0], Entry::State(_)) || !matches!(t.0[n - 1], Entry::State(_)) {
        return false;
    }
    if schema.0.is_empty() {
        return false;
    }
    let ctx = contexts_at(t);
    let mut reach = vec![false; n];
    reach[0] = true;
    for atom in &schema.0 {
        let mut next = vec![false; n];
        for a in (0..n).filter(|&a| reach[a]) {
            match atom {
                SchemaAtom::Event(p) => {
                    if a + 2 < n {
                        if let (Entry::Event(ev), Entry::State(s2), Entry::State(s0)) =
                            (&t.0[a + 1], &t.0[a + 2], &t.0[a])
                        {
                            if s0 == s2 && p.accepts(ev, &ctx[a + 1]) {
                                next[a + 2] = true;
                            }
                        }
                    }
                }
                SchemaAtom::Gap(ex) => {
                    for b in a..n {
                        if let Entry::Event(ev) = &t.0[b] {
                            if ex.iter().any(|x| x.hits(ev, &ctx[b])) {
                                break;
                            }
                        }
                        if matches!(t.0[b], Entry::State(_)) {
                            next[b] = true;
                        }
                    }
                }
            }
        }
        reach = next;
    }
    reach[n - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{event_trace, State};

    #[test]
    fn singleton_in_unrestricted_gap() {
        let t = Trace::singleton(State::new());
        assert!(matches(&t, &TraceSchema(vec![SchemaAtom::Gap(vec![])])));
    }

    #[test]
    fn excluded_push_rejected() {
        let t = event_trace(&State::new(), Event::Push { proc: "m".into(), id: 0 });
        let ex = vec![ExclItem { kind: Some(EventKind::Push), proc: None }];
        assert!(!matches(&t, &TraceSchema(vec![SchemaAtom::Gap(ex)])));
        assert!(matches(&t, &TraceSchema(vec![SchemaAtom::Gap(vec![])])));
    }

    #[test]
    fn trailing_event_atom() {
        let t = event_trace(&State::new(), Event::Call { proc: "m".into(), arg: 1.into(), id: 0 });
        let s = TraceSchema(vec![
            SchemaAtom::Gap(vec![]),
            SchemaAtom::Event(EventPattern::kind(EventKind::Call)),
        ]);
        assert!(matches(&t, &s));
        let s = TraceSchema(vec![SchemaAtom::Event(EventPattern::kind(EventKind::Ret))]);
        assert!(!matches(&t, &s));
    }
}
