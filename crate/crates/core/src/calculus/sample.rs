//! Concrete checking of a single sequent: sample rigid symbols and an
//! initial state, run the judgment with the interpreter and test the
//! resulting trace against the formula.

use super::rules::Kernel;
use super::{Assertion, Goal, Sequent};
use crate::interp::{run_call, run_update_prefixed};
use crate::lang::{res_name, BinOp, Env, Expr};
use crate::logic::{member, member_in, Bindings};
use crate::trace::{chop, event_trace, Event, State, Trace};
use crate::update::{Update, UpdateAtom};
use num_bigint::BigInt;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FUEL: u64 = 100_000;
const LO: i64 = -2;
const HI: i64 = 6;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SampleOutcome {
    /// Samples where the antecedent held and the goal was evaluated.
    pub checked: usize,
    /// Samples skipped: antecedent false, or the run was undefined.
    pub vacuous: usize,
    pub counterexample: Option<String>,
}

impl SampleOutcome {
    pub fn ok(&self) -> bool {
        self.counterexample.is_none()
    }
}

struct Both<'a>(&'a State, &'a Bindings);

impl Env for Both<'_> {
    fn var(&self, n: &str) -> Option<BigInt> {
        self.0.get(n).cloned()
    }
    fn sym(&self, n: &str) -> Option<BigInt> {
        self.1.get(n).cloned()
    }
}

fn ground(e: &Expr, beta: &Bindings) -> Expr {
    e.map(&|x| match x {
        Expr::Sym(s) => beta.get(s).map(|v| Expr::Int(v.clone())),
        _ => None,
    })
}

/// Tries to make equations of the antecedent true by assigning their
/// state-side term; other assumptions are only checked.
fn establish(gamma: &[Assertion], s: &mut State, beta: &mut Bindings) {
    for a in gamma {
        let Assertion::Pred(Expr::Binary(BinOp::Eq, l, r)) = a else { continue };
        for (x, e) in [(&**l, &**r), (&**r, &**l)] {
            let Ok(v) = e.eval_int(&Both(s, beta)) else { continue };
            match x {
                Expr::Var(n) => s.set(n, v),
                Expr::Res(i) => match i.eval_int(&Both(s, beta)).ok().and_then(|i| i.to_u64()) {
                    Some(id) => s.set(&res_name(id), v),
                    None => continue,
                },
                Expr::Sym(n) if !e.syms().contains(n) => {
                    beta.insert(n.clone(), v);
                }
                _ => continue,
            }
            break;
        }
    }
}

fn holds(p: &Expr, s: &State, beta: &Bindings) -> Option<bool> {
    p.eval_bool(&Both(s, beta)).ok()
}

/// Contexts that finishEv atoms close without a matching startEv in `u`,
/// innermost first.
fn open_contexts(u: &Update) -> Vec<(String, u64)> {
    let mut stack: Vec<(String, Option<u64>)> = Vec::new();
    let mut need = Vec::new();
    let id_of = |e: &Expr| e.simplify().eval_int(&State::new()).ok().and_then(|v| v.to_u64());
    for a in &u.0 {
        match a {
            UpdateAtom::Start { proc, id, .. } => stack.push((proc.clone(), id_of(id))),
            UpdateAtom::Finish { proc, id, .. } => {
                if stack.pop().is_none() {
                    if let Some(id) = id_of(id) {
                        need.push((proc.clone(), id));
                    }
                }
            }
            _ => {}
        }
    }
    need
}

fn prefix(s: &State, ctxs: &[(String, u64)]) -> Trace {
    let mut t = Trace::singleton(s.clone());
    for (m, id) in ctxs.iter().rev() {
        let c = event_trace(s, Event::Call { proc: m.clone(), arg: BigInt::from(0), id: *id });
        let p = event_trace(s, Event::Push { proc: m.clone(), id: *id });
        t = chop(&chop(&t, &c).expect("same state"), &p).expect("same state");
    }
    t
}

/// Checks `seq` on `samples` random instances.
pub fn check_sequent(k: &Kernel, seq: &Sequent, samples: usize, seed: u64) -> SampleOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let syms = seq.syms();
    let vars: Vec<String> = seq.vars().into_iter().collect();
    let preds = seq.preds();
    let mut out = SampleOutcome::default();
    for _ in 0..samples {
        let mut beta: Bindings = syms.iter().map(|s| (s.clone(), BigInt::from(rng.gen_range(LO..=HI)))).collect();
        let mut s = State::new();
        for v in &vars {
            s.set(v, BigInt::from(rng.gen_range(LO..=HI)));
        }
        establish(&seq.gamma, &mut s, &mut beta);
        match preds.iter().map(|p| holds(p, &s, &beta)).collect::<Option<Vec<bool>>>() {
            Some(v) if v.iter().all(|b| *b) => {}
            _ => {
                out.vacuous += 1;
                continue;
            }
        }
        let verdict = match &seq.goal {
            Goal::Pred(p) => holds(p, &s, &beta),
            Goal::Contract(m) => check_contract(k, m, &s, &mut rng),
            Goal::Judgment(j) => {
                let g = |e: &Expr| ground(e, &beta);
                let u = j.update.map_exprs(&g);
                let st = j.stmt.as_ref().map(|x| x.map_exprs(&g));
                let tau = prefix(&s, &open_contexts(&u));
                // the run yields the extension only; membership of finishEv
                // needs the contexts opened by the prefix
                match run_update_prefixed(&u, st.as_ref(), &tau, k.g, FUEL).ok().and_then(|x| chop(&tau, &x).ok()) {
                    Some(t) => member_in(&t, &j.formula, &beta, tau.len() - 1, t.len() - 1).ok(),
                    None => None,
                }
            }
        };
        match verdict {
            None => out.vacuous += 1,
            Some(true) => out.checked += 1,
            Some(false) => {
                let b: Vec<String> = beta.iter().map(|(k, v)| format!("{k}={v}")).collect();
                out.counterexample = Some(format!("symbols [{}], initial state {s}", b.join(", ")));
                return out;
            }
        }
    }
    out
}

fn check_contract(k: &Kernel, m: &str, s: &State, rng: &mut ChaCha8Rng) -> Option<bool> {
    let decl = k.contract(m)?;
    let n = BigInt::from(rng.gen_range(0..=HI));
    let beta = Bindings::new();
    if let Some(pre) = &decl.pre {
        if !ground(pre, &[(decl.params[0].clone(), n.clone())].into()).eval_bool(&Both(s, &beta)).ok()? {
            return None;
        }
    }
    let t = run_call(k.g, m, n.clone(), s, FUEL).ok()?;
    let f = decl.instantiate(&[Expr::Int(n), Expr::int(0)]);
    member(&t, &f, &beta).ok()
}
