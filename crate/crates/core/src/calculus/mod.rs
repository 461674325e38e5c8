//! Symbolic-execution calculus: sequents over update-prefixed judgments,
//! the rule kernel, an automatic strategy for contract proofs, proof trees
//! with replay checking, and concrete differential validation.

mod auto;
mod fo;
mod proof;
mod rules;
mod sample;
mod script;

pub use auto::{next_step, prove_auto, prove_sequent, AutoError};
pub use fo::{fo_valid, lin_equiv, FoResult};
pub use proof::{check_proof, CheckFailure, ProofFile, ProofNode, ProofTree, PROOF_FORMAT};
pub use rules::{apply_rule, complete_args, rule_names, Kernel, RuleApp, RuleError, EXTENSION_RULES};
pub use sample::{check_sequent, SampleOutcome};
pub use script::{apply_step, parse_script, run_repl, run_script, ScriptError, ScriptStep};

use crate::lang::{Expr, Lhs, LookupTable, Scoping, Stmt};
use crate::logic::Formula;
use crate::update::{Update, UpdateAtom};
use std::collections::BTreeSet;
use std::fmt;

/// An antecedent entry: a first-order predicate over rigid symbols and the
/// initial state, or a procedure contract taken as an assumption.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Assertion {
    Pred(Expr),
    Contract(String),
}

impl fmt::Display for Assertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assertion::Pred(p) => write!(f, "{p}"),
            Assertion::Contract(m) => write!(f, "contract {m}"),
        }
    }
}

/// `U s : Φ`; a missing statement means the update alone.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Judgment {
    pub update: Update,
    pub stmt: Option<Stmt>,
    pub formula: Formula,
}

impl fmt::Display for Judgment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.update)?;
        if let Some(s) = &self.stmt {
            if !self.update.is_empty() {
                write!(f, " ")?;
            }
            write!(f, "{s}")?;
        }
        if self.update.is_empty() && self.stmt.is_none() {
            write!(f, "{{}}")?;
        }
        write!(f, " : {}", self.formula)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Goal {
    Judgment(Judgment),
    Pred(Expr),
    Contract(String),
}

impl fmt::Display for Goal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Goal::Judgment(j) => write!(f, "{j}"),
            Goal::Pred(p) => write!(f, "{p}"),
            Goal::Contract(m) => write!(f, "contract {m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Sequent {
    pub gamma: Vec<Assertion>,
    pub goal: Goal,
}

impl Sequent {
    pub fn contract(m: &str) -> Sequent {
        Sequent { gamma: Vec::new(), goal: Goal::Contract(m.to_string()) }
    }

    pub fn judgment(gamma: Vec<Assertion>, update: Update, stmt: Option<Stmt>, formula: Formula) -> Sequent {
        Sequent { gamma, goal: Goal::Judgment(Judgment { update, stmt, formula }) }
    }

    pub fn pred(gamma: Vec<Assertion>, p: Expr) -> Sequent {
        Sequent { gamma, goal: Goal::Pred(p) }
    }

    /// The first-order part of the antecedent.
    pub fn preds(&self) -> Vec<Expr> {
        preds_of(&self.gamma)
    }

    pub fn has_contract(&self, m: &str) -> bool {
        self.gamma.iter().any(|a| matches!(a, Assertion::Contract(c) if c == m))
    }

    /// Every rigid symbol name occurring in the sequent.
    pub fn syms(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for a in &self.gamma {
            if let Assertion::Pred(p) = a {
                out.extend(p.syms());
            }
        }
        match &self.goal {
            Goal::Pred(p) => out.extend(p.syms()),
            Goal::Contract(_) => {}
            Goal::Judgment(j) => {
                for a in &j.update.0 {
                    a.exprs().iter().for_each(|e| out.extend(e.syms()));
                }
                if let Some(s) = &j.stmt {
                    s.walk_exprs(&mut |e| out.extend(e.syms()));
                }
                out.extend(j.formula.all_syms());
            }
        }
        out
    }

    /// Every program variable name occurring in the sequent.
    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for a in &self.gamma {
            if let Assertion::Pred(p) = a {
                out.extend(p.vars());
            }
        }
        match &self.goal {
            Goal::Pred(p) => out.extend(p.vars()),
            Goal::Contract(_) => {}
            Goal::Judgment(j) => {
                for a in &j.update.0 {
                    out.extend(a.target().map(str::to_string));
                    a.exprs().iter().for_each(|e| out.extend(e.vars()));
                }
                if let Some(s) = &j.stmt {
                    s.all_names(&mut out);
                }
                j.formula.walk_exprs(&mut |e| out.extend(e.vars()));
            }
        }
        out
    }
}

impl fmt::Display for Sequent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g: Vec<String> = self.gamma.iter().map(|a| a.to_string()).collect();
        if g.is_empty() {
            write!(f, "|- {}", self.goal)
        } else {
            write!(f, "{} |- {}", g.join(", "), self.goal)
        }
    }
}

pub(crate) fn preds_of(gamma: &[Assertion]) -> Vec<Expr> {
    gamma
        .iter()
        .filter_map(|a| match a {
            Assertion::Pred(p) => Some(p.clone()),
            Assertion::Contract(_) => None,
        })
        .collect()
}

// ---------------------------------------------------------------- updates

/// Why an update could not be pushed through an expression.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Blocked {
    #[error("the value of `{0}` after the call update is unknown")]
    CallTarget(String),
    #[error("result variables after a call update are unknown")]
    CallResult,
    #[error("cannot decide whether res({0}) is bound by finishEv(.., {1})")]
    ResAlias(Expr, Expr),
}

/// `U(e)`: the value of `e` after running `U`, as a term over the initial
/// state. Updates are applied from the innermost (last) atom outwards.
/// Elementary assignments substitute; `{res(t) := e}` leaves the state
/// unchanged and is the identity; startEv is the identity; finishEv binds
/// its result variable; call atoms block on their target and on results.
pub fn apply_update_expr(u: &[UpdateAtom], e: &Expr) -> Result<Expr, Blocked> {
    let mut e = e.clone();
    for a in u.iter().rev() {
        e = match a {
            UpdateAtom::Assign(Lhs::Var(v), rhs) => e.subst_var(v, rhs),
            UpdateAtom::Assign(Lhs::Res(_), _) | UpdateAtom::Start { .. } => e,
            UpdateAtom::Call(v, _, _) => {
                if e.vars().contains(v) {
                    return Err(Blocked::CallTarget(v.clone()));
                }
                if e.mentions_res() {
                    return Err(Blocked::CallResult);
                }
                e
            }
            UpdateAtom::Finish { value, id, .. } => bind_res(&e, value, id)?,
        };
    }
    Ok(e)
}

fn bind_res(e: &Expr, value: &Expr, id: &Expr) -> Result<Expr, Blocked> {
    let id = id.simplify();
    let mut err = None;
    let out = e.map(&|x| match x {
        Expr::Res(j) => {
            let j = j.simplify();
            if j == id {
                Some(value.clone())
            } else {
                None
            }
        }
        _ => None,
    });
    e.walk(&mut |x| {
        if let Expr::Res(j) = x {
            let j = j.simplify();
            let distinct = matches!((&j, &id), (Expr::Int(a), Expr::Int(b)) if a != b);
            if j != id && !distinct && err.is_none() {
                err = Some(Blocked::ResAlias(j, id.clone()));
            }
        }
    });
    match err {
        Some(b) => Err(b),
        None => Ok(out),
    }
}

/// Call context of an update sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum UpdCtx {
    Main,
    Call(String, Expr),
}

impl fmt::Display for UpdCtx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UpdCtx::Main => write!(f, "(main, nul)"),
            UpdCtx::Call(m, i) => write!(f, "({m}, {i})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("finishEv({0}, .., {1}) has no matching startEv")]
pub struct MalformedUpdate(pub String, pub Expr);

/// `currCtx(U)`: the innermost startEv not closed by a matching finishEv.
pub fn curr_ctx_update(u: &[UpdateAtom]) -> Result<UpdCtx, MalformedUpdate> {
    let mut stack: Vec<(String, Expr)> = Vec::new();
    for a in u {
        match a {
            UpdateAtom::Start { proc, id, .. } => stack.push((proc.clone(), id.simplify())),
            UpdateAtom::Finish { proc, id, .. } => {
                let id = id.simplify();
                match stack.last() {
                    Some((m, i)) if m == proc && *i == id => {
                        stack.pop();
                    }
                    _ => return Err(MalformedUpdate(proc.clone(), id)),
                }
            }
            _ => {}
        }
    }
    Ok(stack.pop().map_or(UpdCtx::Main, |(m, i)| UpdCtx::Call(m, i)))
}

/// `inline(m, e, i) = {startEv(m, e, i)} p = e; body[p/param]` with `p` a
/// fresh program variable.
pub fn inline(g: &LookupTable, m: &str, e: &Expr, i: &Expr, p: &str) -> Result<(Update, Stmt), crate::lang::UnknownProcedure> {
    let decl = g.get(m)?;
    let body = Stmt::Scope(decl.body.clone()).subst_var(&decl.param, &Expr::var(p));
    let u = Update(vec![UpdateAtom::Start { proc: m.to_string(), arg: e.clone(), id: i.clone() }]);
    Ok((u, Stmt::seq(Stmt::assign(p, e.clone()), body)))
}

/// `base#k` for the smallest `k` not in `used`.
pub fn fresh_var(base: &str, used: &BTreeSet<String>) -> String {
    let stem = base.split('#').next().unwrap_or(base);
    (0..).map(|k| format!("{stem}#{k}")).find(|n| !used.contains(n)).expect("unbounded")
}

/// `base'`, `base''`, ... the first one not in `used`.
pub fn fresh_rigid(base: &str, used: &BTreeSet<String>) -> String {
    let mut n = format!("{}'", base.trim_end_matches('\''));
    while used.contains(&n) {
        n.push('\'');
    }
    n
}

pub(crate) fn parse_assertion(text: &str) -> Result<Assertion, crate::syntax::SyntaxError> {
    let t = text.trim();
    if let Some(m) = t.strip_prefix("contract ") {
        return Ok(Assertion::Contract(m.trim().to_string()));
    }
    Ok(Assertion::Pred(crate::lang::parse_expr_text(t, &Scoping::default())?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{parse_expr_text, parse_program};
    use crate::update::parse_update;

    fn ex(s: &str) -> Expr {
        parse_expr_text(s, &Scoping::default()).unwrap()
    }

    #[test]
    fn apply_update_examples() {
        let u = parse_update("{k#0 := n'}").unwrap();
        assert_eq!(apply_update_expr(&u.0, &ex("k#0 - 1")).unwrap(), ex("n' - 1"));
        let u = parse_update("{x := 1}{x := x + 1}").unwrap();
        assert_eq!(apply_update_expr(&u.0, &ex("x")).unwrap().simplify(), ex("2"));
        let u = parse_update("{startEv(m, n', i')}{finishEv(m, 0, i')}").unwrap();
        assert_eq!(apply_update_expr(&u.0, &ex("res(i') == 0")).unwrap(), ex("0 == 0"));
        let u = parse_update("{finishEv(m, 0, i')}").unwrap();
        assert!(apply_update_expr(&u.0, &ex("res(k')")).is_err());
        let u = parse_update("{r := m(1)}").unwrap();
        assert!(apply_update_expr(&u.0, &ex("r + 1")).is_err());
        assert_eq!(apply_update_expr(&u.0, &ex("y")).unwrap(), ex("y"));
    }

    #[test]
    fn curr_ctx_examples() {
        let u = parse_update("{startEv(m, n', i')}{k#0 := n'}").unwrap();
        assert_eq!(curr_ctx_update(&u.0).unwrap(), UpdCtx::Call("m".into(), ex("i'")));
        let u = parse_update("{startEv(m, n', i')}{finishEv(m, 0, i')}").unwrap();
        assert_eq!(curr_ctx_update(&u.0).unwrap(), UpdCtx::Main);
        assert_eq!(curr_ctx_update(&[]).unwrap(), UpdCtx::Main);
        let u = parse_update("{finishEv(m, 0, i')}").unwrap();
        assert!(curr_ctx_update(&u.0).is_err());
        let u = parse_update("{startEv(m, 1, 0)}{startEv(q, 2, 1)}{finishEv(m, 0, 0)}").unwrap();
        assert!(curr_ctx_update(&u.0).is_err());
    }

    #[test]
    fn inline_example() {
        let p = parse_program("m(k) { r; if (k != 0) { r = m(k - 1); r = r + 1 }; return r }\nmain { skip }").unwrap();
        let g = p.lookup_table();
        let (u, s) = inline(&g, "m", &Expr::sym("n'"), &Expr::sym("i'"), "k#0").unwrap();
        assert_eq!(u.to_string(), "{startEv(m, n', i')}");
        assert_eq!(s.to_string(), "k#0 = n'; { r; if (k#0 != 0) { r = m(k#0 - 1); r = r + 1 }; return r }");
    }

    #[test]
    fn fresh_names() {
        let used: BTreeSet<String> = ["k#0".to_string(), "n'".to_string()].into();
        assert_eq!(fresh_var("k", &used), "k#1");
        assert_eq!(fresh_var("r", &used), "r#0");
        assert_eq!(fresh_rigid("n", &used), "n''");
        assert_eq!(fresh_rigid("i", &used), "i'");
    }
}
