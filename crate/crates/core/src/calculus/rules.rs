//! The rule kernel. Every rule maps a conclusion sequent and a complete
//! argument map to its premises; proof checking replays exactly this.

use super::fo::{fo_valid, single_atom_bound, Bounds, FoResult};
use super::{
    apply_update_expr, curr_ctx_update, fresh_rigid, fresh_var, inline, preds_of, Assertion, Goal, Judgment,
    Sequent, UpdCtx,
};
use crate::lang::{BinOp, Expr, Lhs, LookupTable, Stmt, UnOp};
use crate::logic::{ContractDecl, Formula};
use crate::update::{Update, UpdateAtom};
use num_bigint::BigInt;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// What the kernel needs besides the sequent.
#[derive(Clone, Copy)]
pub struct Kernel<'a> {
    pub g: &'a LookupTable,
    pub contracts: &'a [ContractDecl],
    pub extensions: bool,
}

impl Kernel<'_> {
    pub fn contract(&self, m: &str) -> Option<&ContractDecl> {
        self.contracts.iter().find(|c| c.proc == m)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("unknown rule `{0}`")]
    UnknownRule(String),
    #[error("rule does not match: {0}")]
    NoMatch(String),
    #[error("side condition failed: {0}")]
    SideCondition(String),
    #[error("bad arguments: {0}")]
    BadArgs(String),
}

/// A rule name with its complete instantiation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleApp {
    pub name: String,
    #[serde(default)]
    pub args: BTreeMap<String, String>,
}

impl RuleApp {
    pub fn new(name: &str) -> RuleApp {
        RuleApp { name: name.to_string(), args: BTreeMap::new() }
    }

    pub fn arg(mut self, k: &str, v: impl ToString) -> RuleApp {
        self.args.insert(k.to_string(), v.to_string());
        self
    }
}

impl std::fmt::Display for RuleApp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.name)?;
        for (k, v) in &self.args {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

/// Rules that are only available with extensions enabled.
pub const EXTENSION_RULES: &[&str] = &["PrefixEv", "FiniteTraceEmptyPrefix", "FiniteTraceEmptyPostfix", "Composition"];

const RULES: &[(&str, &[&str])] = &[
    ("ProcedureContract", &["n", "i", "p"]),
    ("Assign", &[]),
    ("Skip", &[]),
    ("Scope", &[]),
    ("VarDecl", &["name"]),
    ("Cond", &[]),
    ("Return", &[]),
    ("Unfold", &["item"]),
    ("SelectDisjunct", &["item", "pick"]),
    ("Prestate", &[]),
    ("Poststate", &[]),
    ("TrAbs", &["at", "item", "k"]),
    ("elimUpdate1", &[]),
    ("elimUpdate2", &[]),
    ("subsumeUpdates1", &["split"]),
    ("dropUpdate", &["at"]),
    ("applyUpdate", &["at"]),
    ("applyEqRigid", &["eq"]),
    ("applyEq", &["eq"]),
    ("weaken", &["idx"]),
    ("simplifyAntecedent", &[]),
    ("emptyUpdate", &[]),
    ("Close", &[]),
    ("PrefixEv", &[]),
    ("FiniteTraceEmptyPrefix", &[]),
    ("FiniteTraceEmptyPostfix", &[]),
    ("Composition", &["split", "item"]),
];

pub fn rule_names() -> impl Iterator<Item = &'static str> {
    RULES.iter().map(|(n, _)| *n)
}

fn schema(k: &Kernel, name: &str) -> Result<&'static [&'static str], RuleError> {
    let (_, s) = RULES.iter().find(|(n, _)| *n == name).ok_or_else(|| RuleError::UnknownRule(name.to_string()))?;
    if EXTENSION_RULES.contains(&name) && !k.extensions {
        return Err(RuleError::SideCondition(format!("`{name}` is an extension rule; enable extensions")));
    }
    Ok(s)
}

type R<T> = Result<T, RuleError>;

fn no_match<T>(msg: impl Into<String>) -> R<T> {
    Err(RuleError::NoMatch(msg.into()))
}

fn side<T>(msg: impl Into<String>) -> R<T> {
    Err(RuleError::SideCondition(msg.into()))
}

fn judgment(seq: &Sequent) -> R<&Judgment> {
    match &seq.goal {
        Goal::Judgment(j) => Ok(j),
        _ => no_match("goal is not a judgment"),
    }
}

fn items(f: &Formula) -> Vec<Formula> {
    f.chop_items().into_iter().cloned().collect()
}

/// Normalized right-nested chop; the empty chain is `[true]`.
pub(crate) fn chain(items: Vec<Formula>) -> Formula {
    let flat: Vec<Formula> = items.iter().flat_map(|f| f.chop_items().into_iter().cloned()).collect();
    if flat.is_empty() {
        Formula::State(Expr::Bool(true))
    } else {
        Formula::chop_all(flat)
    }
}

fn with_goal(seq: &Sequent, u: Vec<UpdateAtom>, s: Option<Stmt>, f: Formula) -> Sequent {
    Sequent::judgment(seq.gamma.clone(), Update(u), s, f)
}

fn seq_opt(a: Stmt, rest: Option<&Stmt>) -> Stmt {
    match rest {
        None => a,
        Some(r) => Stmt::seq(a, r.clone()),
    }
}

fn usize_arg(app: &RuleApp, k: &str) -> R<usize> {
    let v = app.args.get(k).ok_or_else(|| RuleError::BadArgs(format!("missing `{k}`")))?;
    v.parse().map_err(|_| RuleError::BadArgs(format!("`{k}={v}` is not an index")))
}

fn str_arg<'a>(app: &'a RuleApp, k: &str) -> R<&'a str> {
    app.args.get(k).map(String::as_str).ok_or_else(|| RuleError::BadArgs(format!("missing `{k}`")))
}

fn is_ident(s: &str) -> bool {
    let mut cs = s.chars();
    matches!(cs.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
}

fn rigid_name(app: &RuleApp, k: &str, seq: &Sequent) -> R<String> {
    let n = str_arg(app, k)?;
    let ok = is_ident(n) && n.ends_with('\'') && n.trim_end_matches('\'').chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if !ok {
        return Err(RuleError::BadArgs(format!("`{k}={n}` is not a rigid symbol name")));
    }
    if seq.syms().contains(n) {
        return side(format!("`{n}` is not fresh"));
    }
    Ok(n.to_string())
}

fn var_name(app: &RuleApp, k: &str, seq: &Sequent) -> R<String> {
    let n = str_arg(app, k)?;
    let (stem, idx) = n.split_once('#').unwrap_or((n, ""));
    let ok = is_ident(stem)
        && stem.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !crate::lang::is_keyword(stem)
        && (idx.is_empty() && !n.contains('#') || !idx.is_empty() && idx.chars().all(|c| c.is_ascii_digit()));
    if !ok || crate::syntax::is_reserved_res_name(n) {
        return Err(RuleError::BadArgs(format!("`{k}={n}` is not a program variable name")));
    }
    if seq.vars().contains(n) {
        return side(format!("`{n}` is not fresh"));
    }
    Ok(n.to_string())
}

fn apply_u(u: &[UpdateAtom], e: &Expr) -> R<Expr> {
    apply_update_expr(u, e).map_err(|b| RuleError::SideCondition(b.to_string()))
}

fn pred_seq(gamma: &[Assertion], p: Expr) -> Sequent {
    Sequent::pred(gamma.to_vec(), p)
}

fn fo_gamma(seq: &Sequent) -> Vec<Assertion> {
    seq.preds().into_iter().map(Assertion::Pred).collect()
}

fn contracts_of(seq: &Sequent) -> Vec<Assertion> {
    seq.gamma.iter().filter(|a| matches!(a, Assertion::Contract(_))).cloned().collect()
}

fn has_call(u: &[UpdateAtom]) -> bool {
    u.iter().any(|a| matches!(a, UpdateAtom::Call(..)))
}

// ---------------------------------------------------------------- shapes

fn disjuncts(f: &Formula) -> Vec<Formula> {
    match f {
        Formula::Or(a, b) => {
            let mut v = disjuncts(a);
            v.extend(disjuncts(b));
            v
        }
        other => vec![other.clone()],
    }
}

/// Expands the item at `idx` (an `Or` or an unfoldable `mu`) into the item
/// lists of its alternatives.
fn expand_at(items: &[Formula], idx: usize) -> Option<Vec<Vec<Formula>>> {
    let alts = match &items[idx] {
        Formula::Or(..) => disjuncts(&items[idx]),
        f @ Formula::Mu { .. } => vec![f.unfold()?],
        _ => return None,
    };
    Some(
        alts.into_iter()
            .map(|a| {
                let mut v = items[..idx].to_vec();
                v.extend(a.chop_items().into_iter().cloned());
                v.extend(items[idx + 1..].iter().cloned());
                v
            })
            .collect(),
    )
}

/// Skipping state items, the first item is a gap (in every alternative).
fn gap_first(items: &[Formula], depth: u8) -> bool {
    for (idx, it) in items.iter().enumerate() {
        match it {
            Formula::State(_) => continue,
            Formula::Gap(_) => return true,
            Formula::Or(..) | Formula::Mu { .. } if depth > 0 => {
                return match expand_at(items, idx) {
                    Some(alts) => alts.iter().all(|a| gap_first(&a[idx..], depth - 1)),
                    None => false,
                }
            }
            _ => return false,
        }
    }
    false
}

/// Skipping states and gaps that exclude `m`, the first item is
/// `startEv(m, ..)`, and it is followed (up to states) by a gap.
fn start_then_gap(items: &[Formula], m: &str, depth: u8) -> bool {
    for (idx, it) in items.iter().enumerate() {
        match it {
            Formula::State(_) => continue,
            Formula::Gap(ps) if ps.iter().any(|p| p == m) => continue,
            Formula::Start { proc, .. } if proc == m => return gap_first(&items[idx + 1..], depth),
            Formula::Or(..) | Formula::Mu { .. } if depth > 0 => {
                return match expand_at(items, idx) {
                    Some(alts) => alts.iter().all(|a| start_then_gap(&a[idx..], m, depth - 1)),
                    None => false,
                }
            }
            _ => return false,
        }
    }
    false
}

fn formula_vars(f: &Formula) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    f.walk_exprs(&mut |e| out.extend(e.vars()));
    out
}

/// A contract is usable for real calls when it reads no program variables
/// and every alternative begins `[..] startEv(m, ..) [..] ~..~`: the
/// parameter copy made by `inline` is then absorbed by that gap.
fn contract_shape(decl: &ContractDecl) -> R<()> {
    if decl.params.len() != 2 {
        return side(format!("contract `{}` must take (n, i)", decl.proc));
    }
    if !formula_vars(&decl.body).is_empty() {
        return side(format!("contract `{}` reads program variables", decl.proc));
    }
    if !start_then_gap(&items(&decl.body), &decl.proc, 3) {
        return side(format!("contract `{}` does not begin with startEv followed by a gap", decl.proc));
    }
    Ok(())
}

/// Whether every alternative of the contract ends with a state predicate
/// that, together with its leading rigid predicates, forces
/// `res(i) == result`.
pub(crate) fn ensures_result(decl: &ContractDecl) -> bool {
    let Some(f) = &decl.result else { return false };
    let (n, i) = match decl.params.as_slice() {
        [n, i] => (n, i),
        _ => return false,
    };
    let body = match &decl.body {
        Formula::Mu { params, body, .. } if params == &decl.params => (**body).clone(),
        other => other.clone(),
    };
    let goal = Expr::eq(Expr::res(Expr::sym(i)), f.clone());
    let _ = n;
    disjuncts(&body).iter().all(|d| {
        let its = items(d);
        let Some(Formula::State(last)) = its.last() else { return false };
        let mut hyps: Vec<Expr> = its
            .iter()
            .take_while(|x| matches!(x, Formula::State(_)))
            .filter_map(|x| match x {
                Formula::State(p) if p.vars().is_empty() && !p.mentions_res() => Some(p.clone()),
                _ => None,
            })
            .collect();
        hyps.push(last.clone());
        fo_valid(&hyps, &goal).is_valid()
    })
}

fn nullable(f: &Formula, depth: u8) -> Expr {
    match f {
        Formula::State(p) => p.clone(),
        Formula::Gap(_) | Formula::NoEv(_) => Expr::Bool(true),
        Formula::Start { .. } | Formula::Finish { .. } | Formula::Concat(..) | Formula::App(..) => Expr::Bool(false),
        Formula::And(a, b) | Formula::Chop(a, b) => Expr::and(nullable(a, depth), nullable(b, depth)),
        Formula::Or(a, b) => Expr::or(nullable(a, depth), nullable(b, depth)),
        Formula::Mu { .. } => match f.unfold() {
            Some(u) if depth > 0 => nullable(&u, depth - 1),
            _ => Expr::Bool(false),
        },
    }
}

fn same_event(a: &UpdateAtom, f: &Formula) -> bool {
    match (a, f) {
        (UpdateAtom::Start { proc, arg, id }, Formula::Start { proc: p, arg: e, id: i })
        | (UpdateAtom::Finish { proc, value: arg, id }, Formula::Finish { proc: p, value: e, id: i }) => {
            proc == p && arg.simplify() == e.simplify() && id.simplify() == i.simplify()
        }
        _ => false,
    }
}

fn event_proc(a: &UpdateAtom) -> Option<&str> {
    match a {
        UpdateAtom::Start { proc, .. } | UpdateAtom::Finish { proc, .. } => Some(proc),
        _ => None,
    }
}

// ---------------------------------------------------------------- checks used for defaults

fn drop_check(seq: &Sequent, at: usize) -> R<()> {
    let j = judgment(seq)?;
    let u = &j.update.0;
    if at >= u.len() {
        return Err(RuleError::BadArgs(format!("no update atom at {at}")));
    }
    let v = match &u[at] {
        UpdateAtom::Assign(Lhs::Res(_), _) => return Ok(()),
        UpdateAtom::Assign(Lhs::Var(v), _) => v,
        _ => return no_match("only elementary assignments can be dropped"),
    };
    let mut overwritten = false;
    for a in &u[at + 1..] {
        if a.exprs().iter().any(|e| e.vars().contains(v)) {
            return side(format!("`{v}` is read before it is overwritten"));
        }
        if a.target() == Some(v) {
            overwritten = true;
            break;
        }
    }
    if !overwritten {
        if let Some(s) = &j.stmt {
            let mut names = BTreeSet::new();
            s.all_names(&mut names);
            if names.contains(v) {
                return side(format!("`{v}` occurs in the remaining statement"));
            }
        }
    }
    if formula_vars(&j.formula).contains(v) {
        return side(format!("the formula reads `{v}`"));
    }
    let its = items(&j.formula);
    let absorbed = if at == 0 {
        gap_first(&its, 3)
    } else {
        match &u[at - 1] {
            UpdateAtom::Start { proc, .. }
                if u[..at - 1].iter().all(|a| matches!(a, UpdateAtom::Assign(..))) =>
            {
                start_then_gap(&its, proc, 3)
            }
            _ => false,
        }
    };
    if !absorbed {
        return side("the dropped step is not covered by a gap");
    }
    Ok(())
}

fn apply_update_at(u: &[UpdateAtom], at: usize) -> R<Vec<UpdateAtom>> {
    if at >= u.len() {
        return Err(RuleError::BadArgs(format!("no update atom at {at}")));
    }
    let UpdateAtom::Assign(Lhs::Var(v), e) = &u[at] else {
        return no_match("applyUpdate needs an elementary assignment");
    };
    let ev = e.vars();
    let mut out = u.to_vec();
    for t in at + 1..u.len() {
        out[t] = u[t].map_exprs(&|x| x.subst_var(v, e));
        match u[t].target() {
            Some(w) if w == v || ev.contains(w) => break,
            _ => {}
        }
    }
    if out == u {
        return no_match("nothing to rewrite");
    }
    Ok(out)
}

fn rigid_eq(p: &Assertion) -> Option<(String, Expr)> {
    let Assertion::Pred(Expr::Binary(BinOp::Eq, a, b)) = p else { return None };
    let ok = |s: &str, t: &Expr| t.vars().is_empty() && !t.mentions_res() && !t.syms().contains(s);
    match (&**a, &**b) {
        (Expr::Sym(s), t) if ok(s, t) => Some((s.clone(), t.clone())),
        (t, Expr::Sym(s)) if ok(s, t) => Some((s.clone(), t.clone())),
        _ => None,
    }
}

fn rewrite_goal_sym(seq: &Sequent, s: &str, t: &Expr) -> R<Goal> {
    let sub = |e: &Expr| e.subst_sym(s, t);
    Ok(match &seq.goal {
        Goal::Judgment(j) => Goal::Judgment(Judgment {
            update: j.update.map_exprs(&sub),
            stmt: j.stmt.as_ref().map(|x| x.map_exprs(&sub)),
            formula: j.formula.subst_sym(s, t),
        }),
        Goal::Pred(p) => Goal::Pred(sub(p)),
        Goal::Contract(_) => return no_match("contract goals mention no symbols"),
    })
}

fn state_eq(p: &Assertion) -> Option<(Expr, Expr)> {
    let Assertion::Pred(Expr::Binary(BinOp::Eq, a, b)) = p else { return None };
    let stateful = |e: &Expr| !e.vars().is_empty() || e.mentions_res();
    if stateful(a) {
        Some(((**a).clone(), (**b).clone()))
    } else if stateful(b) {
        Some(((**b).clone(), (**a).clone()))
    } else {
        None
    }
}

fn apply_eq_atoms(u: &[UpdateAtom], lhs: &Expr, rhs: &Expr) -> Vec<UpdateAtom> {
    let lv = lhs.vars();
    let lres = lhs.mentions_res();
    let mut out = u.to_vec();
    for (t, a) in u.iter().enumerate() {
        out[t] = a.map_exprs(&|x| x.map(&|y| (y == lhs).then(|| rhs.clone())));
        let blocks = a.target().is_some_and(|w| lv.contains(w))
            || lres && matches!(a, UpdateAtom::Finish { .. } | UpdateAtom::Call(..));
        if blocks {
            break;
        }
    }
    out
}

fn subsume_ok(u: &[UpdateAtom], split: usize, ps: &[String]) -> bool {
    if ps.is_empty() {
        return true;
    }
    (split..u.len()).all(|j| match &u[j] {
        UpdateAtom::Assign(..) => true,
        UpdateAtom::Call(..) => false,
        UpdateAtom::Start { proc, .. } => !ps.contains(proc),
        UpdateAtom::Finish { proc, id, .. } => {
            !ps.contains(proc)
                && curr_ctx_update(&u[..j]).is_ok_and(|c| c == UpdCtx::Call(proc.clone(), id.simplify()))
        }
    })
}

fn contract_instance(k: &Kernel, seq: &Sequent, at: usize, item: usize) -> R<()> {
    let j = judgment(seq)?;
    let u = &j.update.0;
    let Some(UpdateAtom::Call(_, m, e)) = u.get(at) else {
        return no_match(format!("no call update at {at}"));
    };
    let decl = k.contract(m).ok_or_else(|| RuleError::SideCondition(format!("no contract for `{m}`")))?;
    let its = items(&j.formula);
    let it = its.get(item).ok_or_else(|| RuleError::BadArgs(format!("no formula item {item}")))?;
    let ue = apply_u(&u[..at], e)?;
    let Formula::Mu { args, .. } = it else {
        return side(format!("item {item} is not an instance of the contract of `{m}`"));
    };
    if args.len() != 2 || decl.instantiate(args) != *it {
        return side(format!("item {item} is not an instance of the contract of `{m}`"));
    }
    if args[0].simplify() != ue.simplify() {
        return side(format!("contract argument {} differs from the call argument {}", args[0], ue));
    }
    let Expr::Fresh(t) = &args[1] else {
        return side("the callee id must be fresh(..)");
    };
    let t = t.simplify();
    let known = u[..at].iter().any(|a| matches!(a, UpdateAtom::Start { id, .. } if id.simplify() == t));
    if !known {
        return side(format!("fresh({t}) does not refer to an enclosing startEv"));
    }
    Ok(())
}

fn select_default(seq: &Sequent, item: usize) -> R<usize> {
    let j = judgment(seq)?;
    let its = items(&j.formula);
    let Some(f @ Formula::Or(..)) = its.get(item) else {
        return no_match("no disjunction at that item");
    };
    let preds = seq.preds();
    for (idx, d) in disjuncts(f).iter().enumerate() {
        if let Some(Formula::State(q)) = d.chop_items().first() {
            if fo_valid(&preds, q).is_valid() {
                return Ok(idx);
            }
        }
    }
    no_match("no disjunct has a leading predicate entailed by the antecedent")
}

/// Fills in defaulted arguments. User-supplied arguments are kept as given.
pub fn complete_args(k: &Kernel, seq: &Sequent, app: &RuleApp) -> R<RuleApp> {
    let names = schema(k, &app.name)?;
    if let Some(extra) = app.args.keys().find(|a| !names.contains(&a.as_str())) {
        return Err(RuleError::BadArgs(format!("`{}` takes no argument `{extra}`", app.name)));
    }
    let mut out = app.clone();
    let has = |a: &str| app.args.contains_key(a);
    let syms = seq.syms();
    let vars = seq.vars();
    match app.name.as_str() {
        "ProcedureContract" => {
            let Goal::Contract(m) = &seq.goal else { return no_match("goal is not a contract") };
            let decl = k.contract(m).ok_or_else(|| RuleError::SideCondition(format!("no contract for `{m}`")))?;
            let (pn, pi) = match decl.params.as_slice() {
                [a, b] => (a.clone(), b.clone()),
                _ => return side(format!("contract `{m}` must take (n, i)")),
            };
            let mut used = syms.clone();
            if !has("n") {
                let n = fresh_rigid(&pn, &used);
                out.args.insert("n".into(), n);
            }
            used.insert(out.args["n"].clone());
            if !has("i") {
                out.args.insert("i".into(), fresh_rigid(&pi, &used));
            }
            if !has("p") {
                let param = k.g.get(m).map(|d| d.param.clone()).unwrap_or_else(|_| "p".into());
                out.args.insert("p".into(), fresh_var(&param, &vars));
            }
        }
        "VarDecl" if !has("name") => {
            let j = judgment(seq)?;
            let Some(Stmt::Scope(sc)) = j.stmt.as_ref().map(|s| s.head_tail().0) else {
                return no_match("head statement is not a block with declarations");
            };
            let Some(x) = sc.decls.first() else { return no_match("block declares nothing") };
            out.args.insert("name".into(), fresh_var(x, &vars));
        }
        "Unfold" if !has("item") => {
            let j = judgment(seq)?;
            let idx = items(&j.formula)
                .iter()
                .position(|f| matches!(f, Formula::Mu { args, .. } if !args.iter().any(Expr::mentions_fresh)))
                .ok_or_else(|| RuleError::NoMatch("no unfoldable fixed point".into()))?;
            out.args.insert("item".into(), idx.to_string());
        }
        "SelectDisjunct" => {
            let j = judgment(seq)?;
            if !has("item") {
                let idx = items(&j.formula)
                    .iter()
                    .position(|f| matches!(f, Formula::Or(..)))
                    .ok_or_else(|| RuleError::NoMatch("no disjunction".into()))?;
                out.args.insert("item".into(), idx.to_string());
            }
            if !has("pick") {
                let item = usize_arg(&out, "item")?;
                out.args.insert("pick".into(), select_default(seq, item)?.to_string());
            }
        }
        "TrAbs" => {
            let j = judgment(seq)?;
            if !has("at") {
                let at = j
                    .update
                    .0
                    .iter()
                    .position(|a| matches!(a, UpdateAtom::Call(..)))
                    .ok_or_else(|| RuleError::NoMatch("no call update".into()))?;
                out.args.insert("at".into(), at.to_string());
            }
            let at = usize_arg(&out, "at")?;
            if !has("item") {
                let n = items(&j.formula).len();
                let item = (0..n)
                    .find(|&i| contract_instance(k, seq, at, i).is_ok())
                    .ok_or_else(|| RuleError::NoMatch("no contract instance matches the call".into()))?;
                out.args.insert("item".into(), item.to_string());
            }
            if !has("k") {
                out.args.insert("k".into(), fresh_rigid("k", &syms));
            }
        }
        "subsumeUpdates1" if !has("split") => {
            let j = judgment(seq)?;
            let its = items(&j.formula);
            let Some(Formula::Gap(ps)) = its.last() else { return no_match("formula does not end with a gap") };
            let u = &j.update.0;
            let split = (0..=u.len()).find(|&s| subsume_ok(u, s, ps)).unwrap_or(u.len());
            out.args.insert("split".into(), split.to_string());
        }
        "dropUpdate" if !has("at") => {
            let j = judgment(seq)?;
            let at = (0..j.update.0.len())
                .find(|&a| drop_check(seq, a).is_ok())
                .ok_or_else(|| RuleError::NoMatch("no droppable update".into()))?;
            out.args.insert("at".into(), at.to_string());
        }
        "applyUpdate" if !has("at") => {
            let j = judgment(seq)?;
            let u = &j.update.0;
            let at = (0..u.len())
                .find(|&a| apply_update_at(u, a).is_ok())
                .ok_or_else(|| RuleError::NoMatch("no applicable update".into()))?;
            out.args.insert("at".into(), at.to_string());
        }
        "applyEqRigid" if !has("eq") => {
            let eq = (0..seq.gamma.len())
                .find(|&i| {
                    rigid_eq(&seq.gamma[i])
                        .is_some_and(|(s, t)| rewrite_goal_sym(seq, &s, &t).is_ok_and(|g| g != seq.goal))
                })
                .ok_or_else(|| RuleError::NoMatch("no usable rigid equation".into()))?;
            out.args.insert("eq".into(), eq.to_string());
        }
        "applyEq" if !has("eq") => {
            let j = judgment(seq)?;
            let eq = (0..seq.gamma.len())
                .find(|&i| {
                    state_eq(&seq.gamma[i]).is_some_and(|(l, r)| apply_eq_atoms(&j.update.0, &l, &r) != j.update.0)
                })
                .ok_or_else(|| RuleError::NoMatch("no usable state equation".into()))?;
            out.args.insert("eq".into(), eq.to_string());
        }
        _ => {}
    }
    if let Some(missing) = names.iter().find(|a| !out.args.contains_key(**a)) {
        return Err(RuleError::BadArgs(format!("`{}` needs argument `{missing}`", app.name)));
    }
    Ok(out)
}

/// Applies a fully instantiated rule; returns the premises in order.
pub fn apply_rule(k: &Kernel, seq: &Sequent, app: &RuleApp) -> R<Vec<Sequent>> {
    let names = schema(k, &app.name)?;
    for a in app.args.keys() {
        if !names.contains(&a.as_str()) {
            return Err(RuleError::BadArgs(format!("`{}` takes no argument `{a}`", app.name)));
        }
    }
    for a in names {
        if !app.args.contains_key(*a) {
            return Err(RuleError::BadArgs(format!("`{}` needs argument `{a}`", app.name)));
        }
    }
    match app.name.as_str() {
        "ProcedureContract" => procedure_contract(k, seq, app),
        "Assign" => assign(seq),
        "Skip" => {
            let j = judgment(seq)?;
            let Some((Stmt::Skip, t)) = j.stmt.as_ref().map(|s| s.head_tail()) else {
                return no_match("head statement is not skip");
            };
            Ok(vec![with_goal(seq, j.update.0.clone(), t.cloned(), j.formula.clone())])
        }
        "Scope" => {
            let j = judgment(seq)?;
            let Some((Stmt::Scope(sc), t)) = j.stmt.as_ref().map(|s| s.head_tail()) else {
                return no_match("head statement is not a block");
            };
            if !sc.decls.is_empty() {
                return no_match("block still has declarations");
            }
            Ok(vec![with_goal(seq, j.update.0.clone(), Some(seq_opt((*sc.body).clone(), t)), j.formula.clone())])
        }
        "VarDecl" => {
            let j = judgment(seq)?;
            let Some((Stmt::Scope(sc), t)) = j.stmt.as_ref().map(|s| s.head_tail()) else {
                return no_match("head statement is not a block");
            };
            let Some(x) = sc.decls.first() else { return no_match("block declares nothing") };
            let name = var_name(app, "name", seq)?;
            let body = sc.body.rename_var(x, &name);
            let inner = Stmt::scope(sc.decls[1..].to_vec(), body);
            let mut u = j.update.0.clone();
            u.push(UpdateAtom::Assign(Lhs::Var(name), Expr::int(0)));
            Ok(vec![with_goal(seq, u, Some(seq_opt(inner, t)), j.formula.clone())])
        }
        "Cond" => {
            let j = judgment(seq)?;
            let Some((Stmt::If(c, body), t)) = j.stmt.as_ref().map(|s| s.head_tail()) else {
                return no_match("head statement is not a conditional");
            };
            let uc = apply_u(&j.update.0, c)?;
            let mut g1 = seq.gamma.clone();
            g1.push(Assertion::Pred(uc.clone()));
            let mut g2 = seq.gamma.clone();
            g2.push(Assertion::Pred(Expr::not(uc)));
            Ok(vec![
                Sequent::judgment(g1, j.update.clone(), Some(seq_opt((**body).clone(), t)), j.formula.clone()),
                Sequent::judgment(g2, j.update.clone(), t.cloned(), j.formula.clone()),
            ])
        }
        "Return" => {
            let j = judgment(seq)?;
            let Some((Stmt::Return(e), t)) = j.stmt.as_ref().map(|s| s.head_tail()) else {
                return no_match("head statement is not a return");
            };
            if t.is_some() {
                return side("return must be the last statement");
            }
            let ctx = curr_ctx_update(&j.update.0).map_err(|e| RuleError::SideCondition(e.to_string()))?;
            let UpdCtx::Call(m, i) = ctx else { return side("return outside of a call context") };
            let mut u = j.update.0.clone();
            u.push(UpdateAtom::Finish { proc: m, value: e.clone(), id: i.clone() });
            Ok(vec![with_goal(seq, u, Some(Stmt::Assign(Lhs::Res(i), e.clone())), j.formula.clone())])
        }
        "Unfold" => {
            let j = judgment(seq)?;
            let mut its = items(&j.formula);
            let item = usize_arg(app, "item")?;
            let it = its.get(item).ok_or_else(|| RuleError::BadArgs(format!("no formula item {item}")))?;
            if !matches!(it, Formula::Mu { .. }) {
                return no_match(format!("item {item} is not a fixed point"));
            }
            let u = it.unfold().ok_or_else(|| RuleError::SideCondition("arguments mention fresh(..)".into()))?;
            its[item] = u;
            Ok(vec![with_goal(seq, j.update.0.clone(), j.stmt.clone(), chain(its))])
        }
        "SelectDisjunct" => {
            let j = judgment(seq)?;
            let mut its = items(&j.formula);
            let item = usize_arg(app, "item")?;
            let pick = usize_arg(app, "pick")?;
            let Some(f @ Formula::Or(..)) = its.get(item) else {
                return no_match(format!("item {item} is not a disjunction"));
            };
            let ds = disjuncts(f);
            let d = ds.get(pick).ok_or_else(|| RuleError::BadArgs(format!("no disjunct {pick}")))?.clone();
            its[item] = d;
            Ok(vec![with_goal(seq, j.update.0.clone(), j.stmt.clone(), chain(its))])
        }
        "Prestate" => {
            let j = judgment(seq)?;
            let its = items(&j.formula);
            let (Some(Formula::State(q)), true) = (its.first(), its.len() >= 2) else {
                return no_match("formula does not start with a state predicate");
            };
            Ok(vec![
                pred_seq(&seq.gamma, q.clone()),
                with_goal(seq, j.update.0.clone(), j.stmt.clone(), chain(its[1..].to_vec())),
            ])
        }
        "Poststate" => {
            let j = judgment(seq)?;
            if j.stmt.is_some() {
                return no_match("statement not yet executed");
            }
            let its = items(&j.formula);
            let (Some(Formula::State(p)), true) = (its.last(), its.len() >= 2) else {
                return no_match("formula does not end with a state predicate");
            };
            let up = apply_u(&j.update.0, p)?;
            Ok(vec![
                with_goal(seq, j.update.0.clone(), None, chain(its[..its.len() - 1].to_vec())),
                pred_seq(&seq.gamma, up),
            ])
        }
        "TrAbs" => tr_abs(k, seq, app),
        "elimUpdate1" => {
            let j = judgment(seq)?;
            if j.stmt.is_some() {
                return no_match("statement not yet executed");
            }
            let Some(UpdateAtom::Assign(Lhs::Var(_), _)) = j.update.0.last() else {
                return no_match("last update is not an elementary assignment");
            };
            let Formula::Concat(a, b) = &j.formula else { return no_match("formula is not Φ .. [φ]") };
            let Formula::State(phi) = &**b else { return no_match("formula is not Φ .. [φ]") };
            let n = j.update.0.len();
            let up = apply_u(&j.update.0, phi)?;
            Ok(vec![with_goal(seq, j.update.0[..n - 1].to_vec(), None, chain(vec![(**a).clone()])), pred_seq(&seq.gamma, up)])
        }
        "elimUpdate2" => {
            let j = judgment(seq)?;
            if j.stmt.is_some() {
                return no_match("statement not yet executed");
            }
            let u = &j.update.0;
            let Some(UpdateAtom::Finish { proc, value, id }) = u.last() else {
                return no_match("last update is not finishEv");
            };
            let its = items(&j.formula);
            let Some(Formula::Finish { proc: p2, value: v2, id: i2 }) = its.last() else {
                return no_match("formula does not end with finishEv");
            };
            if proc != p2 {
                return side(format!("procedure `{proc}` differs from `{p2}`"));
            }
            let pre = &u[..u.len() - 1];
            let ue = apply_u(pre, value)?;
            let ui = apply_u(pre, id)?;
            Ok(vec![
                with_goal(seq, pre.to_vec(), None, chain(its[..its.len() - 1].to_vec())),
                pred_seq(&seq.gamma, Expr::and(Expr::eq(ue, v2.clone()), Expr::eq(ui, i2.clone()))),
            ])
        }
        "subsumeUpdates1" => {
            let j = judgment(seq)?;
            if j.stmt.is_some() {
                return no_match("statement not yet executed");
            }
            let its = items(&j.formula);
            let Some(Formula::Gap(ps)) = its.last() else { return no_match("formula does not end with a gap") };
            let split = usize_arg(app, "split")?;
            let u = &j.update.0;
            if split > u.len() {
                return Err(RuleError::BadArgs(format!("split {split} is out of range")));
            }
            if !subsume_ok(u, split, ps) {
                return side("the dropped suffix may emit excluded events");
            }
            Ok(vec![with_goal(seq, u[..split].to_vec(), None, chain(its[..its.len() - 1].to_vec()))])
        }
        "dropUpdate" => {
            let at = usize_arg(app, "at")?;
            drop_check(seq, at)?;
            let j = judgment(seq)?;
            let mut u = j.update.0.clone();
            u.remove(at);
            Ok(vec![with_goal(seq, u, j.stmt.clone(), j.formula.clone())])
        }
        "applyUpdate" => {
            let j = judgment(seq)?;
            let u = apply_update_at(&j.update.0, usize_arg(app, "at")?)?;
            Ok(vec![with_goal(seq, u, j.stmt.clone(), j.formula.clone())])
        }
        "applyEqRigid" => {
            let eq = usize_arg(app, "eq")?;
            let a = seq.gamma.get(eq).ok_or_else(|| RuleError::BadArgs(format!("no assumption {eq}")))?;
            let (s, t) = rigid_eq(a).ok_or_else(|| RuleError::NoMatch("not an equation on a rigid symbol".into()))?;
            let goal = rewrite_goal_sym(seq, &s, &t)?;
            if goal == seq.goal {
                return no_match(format!("`{s}` does not occur in the goal"));
            }
            Ok(vec![Sequent { gamma: seq.gamma.clone(), goal }])
        }
        "applyEq" => {
            let eq = usize_arg(app, "eq")?;
            let a = seq.gamma.get(eq).ok_or_else(|| RuleError::BadArgs(format!("no assumption {eq}")))?;
            let (l, r) = state_eq(a).ok_or_else(|| RuleError::NoMatch("not an equation on a state term".into()))?;
            let j = judgment(seq)?;
            let u = apply_eq_atoms(&j.update.0, &l, &r);
            if u == j.update.0 {
                return no_match(format!("`{l}` is not read before it may change"));
            }
            Ok(vec![with_goal(seq, u, j.stmt.clone(), j.formula.clone())])
        }
        "weaken" => {
            let idx = usize_arg(app, "idx")?;
            if idx >= seq.gamma.len() {
                return Err(RuleError::BadArgs(format!("no assumption {idx}")));
            }
            let mut g = seq.gamma.clone();
            g.remove(idx);
            Ok(vec![Sequent { gamma: g, goal: seq.goal.clone() }])
        }
        "simplifyAntecedent" => {
            let g = simplify_gamma(&seq.gamma);
            if g == seq.gamma {
                return no_match("antecedent is already simplified");
            }
            Ok(vec![Sequent { gamma: g, goal: seq.goal.clone() }])
        }
        "emptyUpdate" => {
            let j = judgment(seq)?;
            if !j.update.is_empty() || j.stmt.is_some() {
                return no_match("judgment is not the empty update");
            }
            Ok(vec![pred_seq(&seq.gamma, nullable(&j.formula, 3).simplify())])
        }
        "Close" => close(seq).map(|_| vec![]),
        "PrefixEv" => {
            let j = judgment(seq)?;
            let its = items(&j.formula);
            let u = &j.update.0;
            match (u.first(), its.first()) {
                (Some(a), Some(f)) if its.len() >= 2 && same_event(a, f) => {
                    Ok(vec![with_goal(seq, u[1..].to_vec(), j.stmt.clone(), chain(its[1..].to_vec()))])
                }
                _ => no_match("update and formula do not start with the same event"),
            }
        }
        "FiniteTraceEmptyPrefix" => {
            let j = judgment(seq)?;
            let its = items(&j.formula);
            let m = j.update.0.first().and_then(event_proc);
            match (m, its.first()) {
                (Some(m), Some(Formula::Gap(ps))) if its.len() >= 2 && ps.len() == 1 && ps[0] == m => {
                    Ok(vec![with_goal(seq, j.update.0.clone(), j.stmt.clone(), chain(its[1..].to_vec()))])
                }
                _ => no_match("expected {ev} U s : ~m~ ** Φ"),
            }
        }
        "FiniteTraceEmptyPostfix" => {
            let j = judgment(seq)?;
            let its = items(&j.formula);
            let m = j.update.0.last().and_then(event_proc);
            match (m, its.last(), &j.stmt) {
                (Some(m), Some(Formula::Gap(ps)), None) if its.len() >= 2 && ps.len() == 1 && ps[0] == m => {
                    Ok(vec![with_goal(seq, j.update.0.clone(), None, chain(its[..its.len() - 1].to_vec()))])
                }
                _ => no_match("expected U{ev} : Φ ** ~m~"),
            }
        }
        "Composition" => {
            let j = judgment(seq)?;
            let its = items(&j.formula);
            let split = usize_arg(app, "split")?;
            let item = usize_arg(app, "item")?;
            let u = &j.update.0;
            if split > u.len() || item == 0 || item >= its.len() {
                return Err(RuleError::BadArgs("split or item out of range".into()));
            }
            Ok(vec![
                with_goal(seq, u[..split].to_vec(), None, chain(its[..item].to_vec())),
                with_goal(seq, u[split..].to_vec(), j.stmt.clone(), chain(its[item..].to_vec())),
            ])
        }
        other => Err(RuleError::UnknownRule(other.to_string())),
    }
}

fn procedure_contract(k: &Kernel, seq: &Sequent, app: &RuleApp) -> R<Vec<Sequent>> {
    let Goal::Contract(m) = &seq.goal else { return no_match("goal is not a contract") };
    let decl = k.contract(m).ok_or_else(|| RuleError::SideCondition(format!("no contract for `{m}`")))?;
    contract_shape(decl)?;
    let n = rigid_name(app, "n", seq)?;
    let i = rigid_name(app, "i", seq)?;
    if n == i {
        return side("n and i must be distinct");
    }
    let p = var_name(app, "p", seq)?;
    let (ns, is) = (Expr::Sym(n), Expr::Sym(i));
    let mut gamma = seq.gamma.clone();
    if let Some(pre) = &decl.pre {
        gamma.push(Assertion::Pred(pre.subst_sym(&decl.params[0], &ns)));
    }
    for c in k.contracts {
        let a = Assertion::Contract(c.proc.clone());
        if !gamma.contains(&a) {
            gamma.push(a);
        }
    }
    let (u, s) = inline(k.g, m, &ns, &is, &p).map_err(|e| RuleError::SideCondition(e.to_string()))?;
    Ok(vec![Sequent::judgment(gamma, u, Some(s), decl.instantiate(&[ns, is]))])
}

fn assign(seq: &Sequent) -> R<Vec<Sequent>> {
    let j = judgment(seq)?;
    let Some((h, t)) = j.stmt.as_ref().map(|s| s.head_tail()) else {
        return no_match("no statement left");
    };
    let atom = match h {
        Stmt::Assign(l, e) => UpdateAtom::Assign(l.clone(), e.clone()),
        Stmt::Call(v, m, e) => UpdateAtom::Call(v.clone(), m.clone(), e.clone()),
        _ => return no_match("head statement is not an assignment"),
    };
    let mut u = j.update.0.clone();
    u.push(atom);
    Ok(vec![with_goal(seq, u, t.cloned(), j.formula.clone())])
}

fn tr_abs(k: &Kernel, seq: &Sequent, app: &RuleApp) -> R<Vec<Sequent>> {
    let j = judgment(seq)?;
    if j.stmt.is_some() {
        return no_match("statement not yet executed");
    }
    let at = usize_arg(app, "at")?;
    let item = usize_arg(app, "item")?;
    contract_instance(k, seq, at, item)?;
    let u = &j.update.0;
    let UpdateAtom::Call(v, m, e) = &u[at] else { unreachable!() };
    if !seq.has_contract(m) {
        return side(format!("contract `{m}` is not assumed"));
    }
    let decl = k.contract(m).expect("checked");
    let kk = rigid_name(app, "k", seq)?;
    let (u1, u2) = (&u[..at], &u[at + 1..]);
    let ue = apply_u(u1, e)?;
    let its = items(&j.formula);
    let n = &decl.params[0];

    let mut g1 = fo_gamma(seq);
    if has_call(u1) {
        g1.extend(contracts_of(seq));
    }
    let p1 = Sequent::judgment(g1, Update(u1.to_vec()), None, chain(its[..item].to_vec()));

    let pre = decl.pre.as_ref().map_or(Expr::Bool(true), |p| p.subst_sym(n, &ue));
    let p2 = Sequent::pred(fo_gamma(seq), pre);

    let mut g3 = Vec::new();
    if let (Some(f), true) = (&decl.result, ensures_result(decl)) {
        g3.push(Assertion::Pred(Expr::eq(Expr::res(Expr::Sym(kk.clone())), f.subst_sym(n, &ue))));
    }
    if has_call(u2) {
        g3.extend(contracts_of(seq));
    }
    let mut u3 = vec![UpdateAtom::Assign(Lhs::Var(v.clone()), Expr::res(Expr::Sym(kk)))];
    u3.extend(u2.iter().cloned());
    let p3 = Sequent::judgment(g3, Update(u3), None, chain(its[item + 1..].to_vec()));
    Ok(vec![p1, p2, p3])
}

fn close(seq: &Sequent) -> R<()> {
    let preds = seq.preds();
    match &seq.goal {
        Goal::Pred(p) => match fo_valid(&preds, p) {
            FoResult::Valid => return Ok(()),
            FoResult::Invalid(m) => {
                if fo_valid(&preds, &Expr::Bool(false)).is_valid() {
                    return Ok(());
                }
                let cex: Vec<String> = m.iter().map(|(k, v)| format!("{k}={v}")).collect();
                return side(format!("not valid; counterexample {}", cex.join(", ")));
            }
            FoResult::Unknown(why) => return side(format!("validity unknown ({why})")),
        },
        Goal::Contract(m) if seq.has_contract(m) => return Ok(()),
        Goal::Judgment(j) => {
            if let ([a], None) = (j.update.0.as_slice(), &j.stmt) {
                if same_event(a, &j.formula) {
                    return Ok(());
                }
            }
        }
        Goal::Contract(_) => {}
    }
    if fo_valid(&preds, &Expr::Bool(false)).is_valid() {
        return Ok(());
    }
    side("the goal is not an axiom")
}

fn push_not(e: &Expr, out: &mut Vec<Expr>) {
    match e {
        Expr::Binary(BinOp::And, a, b) => {
            push_not(a, out);
            push_not(b, out);
        }
        Expr::Unary(UnOp::Not, x) => match &**x {
            Expr::Unary(UnOp::Not, y) => push_not(y, out),
            Expr::Binary(op, a, b) if op.is_comparison() => {
                out.push(Expr::Binary(negate(*op), a.clone(), b.clone()).simplify())
            }
            Expr::Binary(BinOp::Or, a, b) => {
                push_not(&Expr::not((**a).clone()), out);
                push_not(&Expr::not((**b).clone()), out);
            }
            Expr::Bool(b) => out.push(Expr::Bool(!b)),
            _ => out.push(e.simplify()),
        },
        other => out.push(other.simplify()),
    }
}

fn negate(op: BinOp) -> BinOp {
    match op {
        BinOp::Eq => BinOp::Ne,
        BinOp::Ne => BinOp::Eq,
        BinOp::Lt => BinOp::Ge,
        BinOp::Le => BinOp::Gt,
        BinOp::Gt => BinOp::Le,
        BinOp::Ge => BinOp::Lt,
        o => o,
    }
}

/// Splits conjunctions, pushes negations into comparisons and merges the
/// bounds on each single symbol or variable into one interval.
pub(crate) fn simplify_gamma(gamma: &[Assertion]) -> Vec<Assertion> {
    let mut flat = Vec::new();
    for p in preds_of(gamma) {
        push_not(&p, &mut flat);
    }
    enum Slot {
        Other(Expr),
        Atom(Expr),
    }
    let mut slots: Vec<Slot> = Vec::new();
    let mut bounds: BTreeMap<Expr, Bounds> = BTreeMap::new();
    for p in flat {
        if p == Expr::Bool(true) {
            continue;
        }
        match single_atom_bound(&p) {
            Some((a, b)) => {
                let e = bounds.entry(a.clone()).or_insert_with(|| {
                    slots.push(Slot::Atom(a.clone()));
                    Bounds::default()
                });
                if let Some(l) = b.lo {
                    e.lo = Some(e.lo.take().map_or(l.clone(), |x| x.max(l)));
                }
                if let Some(h) = b.hi {
                    e.hi = Some(e.hi.take().map_or(h.clone(), |x| x.min(h)));
                }
                e.ne.extend(b.ne);
            }
            None => {
                if !slots.iter().any(|s| matches!(s, Slot::Other(q) if *q == p)) {
                    slots.push(Slot::Other(p));
                }
            }
        }
    }
    let mut out = Vec::new();
    for s in slots {
        match s {
            Slot::Other(p) => out.push(Assertion::Pred(p)),
            Slot::Atom(a) => {
                let b = &bounds[&a];
                let (mut lo, mut hi) = (b.lo.clone(), b.hi.clone());
                while let Some(l) = &lo {
                    if b.ne.contains(l) {
                        lo = Some(l + 1);
                    } else {
                        break;
                    }
                }
                while let Some(h) = &hi {
                    if b.ne.contains(h) {
                        hi = Some(h - 1);
                    } else {
                        break;
                    }
                }
                let int = |v: &BigInt| Expr::Int(v.clone());
                match (&lo, &hi) {
                    (Some(l), Some(h)) if l > h => out.push(Assertion::Pred(Expr::Bool(false))),
                    (Some(l), Some(h)) if l == h => out.push(Assertion::Pred(Expr::eq(a.clone(), int(l)))),
                    _ => {
                        if let Some(l) = &lo {
                            out.push(Assertion::Pred(Expr::bin(BinOp::Ge, a.clone(), int(l))));
                        }
                        if let Some(h) = &hi {
                            out.push(Assertion::Pred(Expr::bin(BinOp::Le, a.clone(), int(h))));
                        }
                        for v in &b.ne {
                            let inside = lo.as_ref().is_none_or(|l| v > l) && hi.as_ref().is_none_or(|h| v < h);
                            if inside {
                                out.push(Assertion::Pred(Expr::bin(BinOp::Ne, a.clone(), int(v))));
                            }
                        }
                    }
                }
            }
        }
    }
    for a in gamma {
        if matches!(a, Assertion::Contract(_)) && !out.contains(a) {
            out.push(a.clone());
        }
    }
    out
}
