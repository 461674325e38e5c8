//! Fixed-point trace logic: formulas, contract templates and membership.

mod explain;
mod member;
mod parse;

pub use explain::explain_failure;
pub use member::{member, member_in, Bindings, MemberError};
pub use parse::{parse_contracts, parse_formula, parse_formula_file, parse_formula_in, ContractDecl, FormulaFile};

use crate::lang::{BinOp, Expr};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    /// `[P]`
    State(Expr),
    /// `X(t..)`
    App(String, Vec<Expr>),
    Start { proc: String, arg: Expr, id: Expr },
    Finish { proc: String, value: Expr, id: Expr },
    /// Single entry: a state, or an event not involving any listed procedure.
    NoEv(Vec<String>),
    /// Non-empty segment without events involving the listed procedures.
    Gap(Vec<String>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Concat(Box<Formula>, Box<Formula>),
    Chop(Box<Formula>, Box<Formula>),
    /// `(mu X(y..). body)(t..)`
    Mu { var: String, params: Vec<String>, body: Box<Formula>, args: Vec<Expr> },
}

use Formula as F;

impl Formula {
    pub fn and(a: Formula, b: Formula) -> Formula {
        F::And(Box::new(a), Box::new(b))
    }
    pub fn or(a: Formula, b: Formula) -> Formula {
        F::Or(Box::new(a), Box::new(b))
    }
    pub fn concat(a: Formula, b: Formula) -> Formula {
        F::Concat(Box::new(a), Box::new(b))
    }
    pub fn chop(a: Formula, b: Formula) -> Formula {
        F::Chop(Box::new(a), Box::new(b))
    }
    pub fn pred(p: Expr) -> Formula {
        F::State(p)
    }
    pub fn gap(procs: &[&str]) -> Formula {
        F::Gap(procs.iter().map(|s| s.to_string()).collect())
    }

    /// Right-nested chop of a non-empty list.
    pub fn chop_all(mut items: Vec<Formula>) -> Formula {
        let mut acc = items.pop().expect("non-empty chop list");
        while let Some(f) = items.pop() {
            acc = F::chop(f, acc);
        }
        acc
    }

    /// Flattens right- and left-nested chops into their operands.
    pub fn chop_items(&self) -> Vec<&Formula> {
        match self {
            F::Chop(a, b) => {
                let mut v = a.chop_items();
                v.extend(b.chop_items());
                v
            }
            other => vec![other],
        }
    }

    pub fn children(&self) -> Vec<&Formula> {
        match self {
            F::And(a, b) | F::Or(a, b) | F::Concat(a, b) | F::Chop(a, b) => vec![a, b],
            F::Mu { body, .. } => vec![body],
            _ => vec![],
        }
    }

    /// Every term occurring in the formula, including under binders.
    pub fn walk_exprs(&self, f: &mut dyn FnMut(&Expr)) {
        match self {
            F::State(p) => f(p),
            F::App(_, args) => args.iter().for_each(|a| f(a)),
            F::Start { arg: e, id, .. } | F::Finish { value: e, id, .. } => {
                f(e);
                f(id)
            }
            F::Mu { body, args, .. } => {
                args.iter().for_each(|a| f(a));
                body.walk_exprs(f)
            }
            other => other.children().into_iter().for_each(|c| c.walk_exprs(f)),
        }
    }

    /// Free logical symbols.
    pub fn free_syms(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&BTreeSet::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &BTreeSet<String>, out: &mut BTreeSet<String>) {
        let mut add = |e: &Expr| out.extend(e.syms().into_iter().filter(|s| !bound.contains(s)));
        match self {
            F::State(p) => add(p),
            F::App(_, args) => args.iter().for_each(add),
            F::Start { arg: e, id, .. } | F::Finish { value: e, id, .. } => {
                add(e);
                add(id)
            }
            F::NoEv(_) | F::Gap(_) => {}
            F::Mu { params, body, args, .. } => {
                args.iter().for_each(add);
                let mut b = bound.clone();
                b.extend(params.iter().cloned());
                body.collect_free(&b, out)
            }
            F::And(a, c) | F::Or(a, c) | F::Concat(a, c) | F::Chop(a, c) => {
                a.collect_free(bound, out);
                c.collect_free(bound, out)
            }
        }
    }

    /// Free recursion variables.
    pub fn free_rec_vars(&self) -> BTreeSet<String> {
        match self {
            F::App(x, _) => BTreeSet::from([x.clone()]),
            F::Mu { var, body, .. } => {
                let mut s = body.free_rec_vars();
                s.remove(var);
                s
            }
            other => other.children().into_iter().flat_map(|c| c.free_rec_vars()).collect(),
        }
    }

    /// Every symbol name used anywhere, bound or free.
    pub fn all_syms(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.walk_exprs(&mut |e| out.extend(e.syms()));
        self.walk(&mut |f| {
            if let F::Mu { params, .. } = f {
                out.extend(params.iter().cloned());
            }
        });
        out
    }

    pub fn walk(&self, f: &mut dyn FnMut(&Formula)) {
        f(self);
        for c in self.children() {
            c.walk(f);
        }
    }

    /// Rewrites every term, ignoring binders. Only safe for renamings that
    /// cannot capture (e.g. program variables, or fresh symbols).
    pub fn map_exprs(&self, f: &dyn Fn(&Expr) -> Expr) -> Formula {
        match self {
            F::State(p) => F::State(f(p)),
            F::App(x, args) => F::App(x.clone(), args.iter().map(f).collect()),
            F::Start { proc, arg, id } => F::Start { proc: proc.clone(), arg: f(arg), id: f(id) },
            F::Finish { proc, value, id } => {
                F::Finish { proc: proc.clone(), value: f(value), id: f(id) }
            }
            F::NoEv(_) | F::Gap(_) => self.clone(),
            F::And(a, b) => F::and(a.map_exprs(f), b.map_exprs(f)),
            F::Or(a, b) => F::or(a.map_exprs(f), b.map_exprs(f)),
            F::Concat(a, b) => F::concat(a.map_exprs(f), b.map_exprs(f)),
            F::Chop(a, b) => F::chop(a.map_exprs(f), b.map_exprs(f)),
            F::Mu { var, params, body, args } => F::Mu {
                var: var.clone(),
                params: params.clone(),
                body: Box::new(body.map_exprs(f)),
                args: args.iter().map(f).collect(),
            },
        }
    }

    /// Capture-avoiding simultaneous substitution of logical symbols.
    pub fn subst_syms(&self, map: &BTreeMap<String, Expr>) -> Formula {
        if map.is_empty() {
            return self.clone();
        }
        let sub = |e: &Expr| subst_expr(e, map);
        match self {
            F::Mu { var, params, body, args } => {
                let args = args.iter().map(sub).collect();
                let mut inner: BTreeMap<String, Expr> =
                    map.iter().filter(|(k, _)| !params.contains(k)).map(|(k, v)| (k.clone(), v.clone())).collect();
                let incoming: BTreeSet<String> = inner.values().flat_map(|e| e.syms()).collect();
                let mut params = params.clone();
                let mut body = (**body).clone();
                let mut taken = body.all_syms();
                taken.extend(incoming.iter().cloned());
                taken.extend(inner.keys().cloned());
                for p in params.iter_mut() {
                    if incoming.contains(p) {
                        let q = fresh_name(p, &taken);
                        taken.insert(q.clone());
                        body = body.subst_syms(&BTreeMap::from([(p.clone(), Expr::Sym(q.clone()))]));
                        *p = q;
                    }
                }
                inner.retain(|k, _| !params.contains(k));
                F::Mu { var: var.clone(), params, body: Box::new(body.subst_syms(&inner)), args }
            }
            other => other.map_children(&|c| c.subst_syms(map), &sub),
        }
    }

    pub fn subst_sym(&self, x: &str, by: &Expr) -> Formula {
        self.subst_syms(&BTreeMap::from([(x.to_string(), by.clone())]))
    }

    fn map_children(&self, fc: &dyn Fn(&Formula) -> Formula, fe: &dyn Fn(&Expr) -> Expr) -> Formula {
        match self {
            F::And(a, b) => F::and(fc(a), fc(b)),
            F::Or(a, b) => F::or(fc(a), fc(b)),
            F::Concat(a, b) => F::concat(fc(a), fc(b)),
            F::Chop(a, b) => F::chop(fc(a), fc(b)),
            F::Mu { .. } => unreachable!("handled by the caller"),
            leaf => leaf.map_exprs(fe),
        }
    }

    /// Replaces free applications of `x` by `(mu x(params). body)(args)`.
    fn roll(&self, x: &str, params: &[String], body: &Formula) -> Formula {
        match self {
            F::App(y, args) if y == x => F::Mu {
                var: x.to_string(),
                params: params.to_vec(),
                body: Box::new(body.clone()),
                args: args.clone(),
            },
            F::Mu { var, .. } if var == x => self.clone(),
            F::Mu { var, params: ps, body: b, args } => F::Mu {
                var: var.clone(),
                params: ps.clone(),
                body: Box::new(b.roll(x, params, body)),
                args: args.clone(),
            },
            other => other.map_children(&|c| c.roll(x, params, body), &|e| e.clone()),
        }
    }

    /// One-step fixed-point unfolding of a top-level `mu` application.
    pub fn unfold(&self) -> Option<Formula> {
        let F::Mu { var, params, body, args } = self else { return None };
        if args.iter().any(Expr::mentions_fresh) {
            return None;
        }
        let rolled = body.roll(var, params, body);
        let map: BTreeMap<String, Expr> = params.iter().cloned().zip(args.iter().cloned()).collect();
        Some(rolled.subst_syms(&map))
    }

    /// Constant-folds the terms of the formula.
    pub fn simplify(&self) -> Formula {
        self.map_exprs(&|e| e.simplify())
    }
}

fn subst_expr(e: &Expr, map: &BTreeMap<String, Expr>) -> Expr {
    e.map(&|x| match x {
        Expr::Sym(s) => map.get(s).cloned(),
        _ => None,
    })
}

fn fresh_name(base: &str, taken: &BTreeSet<String>) -> String {
    let stem = base.trim_end_matches('\'');
    (0..).map(|k| format!("{stem}_{k}")).find(|n| !taken.contains(n)).expect("unbounded")
}

/// `Ψ_m = μX.(NoEv(m) ∨ NoEv(m)·X)`.
pub fn psi(procs: &[&str]) -> Formula {
    let ne = F::NoEv(procs.iter().map(|s| s.to_string()).collect());
    F::Mu {
        var: "Psi".into(),
        params: vec![],
        body: Box::new(F::or(ne.clone(), F::concat(ne, F::App("Psi".into(), vec![])))),
        args: vec![],
    }
}

/// `Φ1 ⌐m¬ Φ2 = Φ1 ** Ψ_m ** Φ2`.
pub fn no_event_chop(a: Formula, procs: &[&str], b: Formula) -> Formula {
    F::chop(F::chop(a, psi(procs)), b)
}

// ---------------------------------------------------------------- printing

fn prec(f: &Formula) -> u8 {
    match f {
        F::Or(..) => 1,
        F::And(..) => 2,
        F::Concat(..) | F::Chop(..) => 3,
        F::Mu { .. } => 4,
        _ => 5,
    }
}

fn join(xs: &[Expr]) -> String {
    xs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(", ")
}

fn write_prec(f: &mut fmt::Formatter<'_>, x: &Formula, min: u8) -> fmt::Result {
    if prec(x) < min {
        write!(f, "(")?;
        write_prec(f, x, 0)?;
        return write!(f, ")");
    }
    match x {
        F::State(p) => write!(f, "[{p}]"),
        F::App(v, args) => write!(f, "{v}({})", join(args)),
        F::Start { proc, arg, id } => write!(f, "startEv({proc}, {arg}, {id})"),
        F::Finish { proc, value, id } => write!(f, "finishEv({proc}, {value}, {id})"),
        F::NoEv(ps) => write!(f, "noev({})", ps.join(", ")),
        F::Gap(ps) => write!(f, "~{}~", ps.join(",")),
        F::Or(a, b) => {
            write_prec(f, a, 2)?;
            write!(f, " \\/ ")?;
            write_prec(f, b, 1)
        }
        F::And(a, b) => {
            write_prec(f, a, 3)?;
            write!(f, " /\\ ")?;
            write_prec(f, b, 2)
        }
        F::Chop(a, b) if matches!(**a, F::Gap(_)) => {
            write_prec(f, a, 4)?;
            write!(f, " ")?;
            write_prec(f, b, 3)
        }
        F::Chop(a, b) => {
            write_prec(f, a, 4)?;
            match &**b {
                F::Gap(_) => {
                    write!(f, " ")?;
                    write_prec(f, b, 4)
                }
                F::Chop(g, c) if matches!(**g, F::Gap(_)) => {
                    write!(f, " ")?;
                    write_prec(f, g, 4)?;
                    write!(f, " ")?;
                    write_prec(f, c, 3)
                }
                _ => {
                    write!(f, " ** ")?;
                    write_prec(f, b, 3)
                }
            }
        }
        F::Concat(a, b) => {
            write_prec(f, a, 4)?;
            write!(f, " .. ")?;
            write_prec(f, b, 3)
        }
        F::Mu { var, params, body, args } => {
            write!(f, "(mu {var}({}). ", params.join(", "))?;
            write_prec(f, body, 0)?;
            write!(f, ")({})", join(args))
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_prec(f, self, 0)
    }
}

// ---------------------------------------------------------------- contracts

/// Instantiation data for the H_m template. Terms use the symbol `n`
/// for the parameter value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractSpec {
    pub proc: String,
    pub pre_base: Expr,
    pub pre_step: Expr,
    pub f: Expr,
    pub step_inv: Expr,
}

fn n() -> Expr {
    Expr::sym("n")
}
fn i() -> Expr {
    Expr::sym("i")
}

fn res_is(v: Expr) -> Formula {
    F::State(Expr::eq(Expr::res(i()), v))
}

/// `n == t` with `t` free of `n`, if `p` has that shape.
fn pinned_value(p: &Expr) -> Option<Expr> {
    match p {
        Expr::Binary(BinOp::Eq, a, b) if **a == n() && !b.syms().contains("n") => Some((**b).clone()),
        Expr::Binary(BinOp::Eq, a, b) if **b == n() && !a.syms().contains("n") => Some((**a).clone()),
        _ => None,
    }
}

/// The H_m formula `(mu X_m(n, i). base \/ step)(n, i)`. When the base
/// precondition pins `n` to a value, that value is written into the base
/// disjunct.
pub fn make_contract(spec: &ContractSpec) -> Formula {
    let m = spec.proc.as_str();
    let x = format!("X_{m}");
    let gap = || F::Gap(vec![m.to_string()]);
    let (bn, bf) = match pinned_value(&spec.pre_base) {
        Some(v) => (v.clone(), spec.f.subst_sym("n", &v).simplify()),
        None => (n(), spec.f.clone()),
    };
    let base = F::chop_all(vec![
        F::State(spec.pre_base.clone()),
        F::Start { proc: m.into(), arg: bn, id: i() },
        gap(),
        F::Finish { proc: m.into(), value: bf.clone(), id: i() },
        res_is(bf),
    ]);
    let step = F::chop_all(vec![
        F::State(spec.pre_step.clone()),
        F::Start { proc: m.into(), arg: n(), id: i() },
        gap(),
        F::App(x.clone(), vec![spec.step_inv.clone(), Expr::Fresh(Box::new(i()))]),
        gap(),
        F::Finish { proc: m.into(), value: spec.f.clone(), id: i() },
        res_is(spec.f.clone()),
    ]);
    F::Mu { var: x, params: vec!["n".into(), "i".into()], body: Box::new(F::or(base, step)), args: vec![n(), i()] }
}

/// `[pre_base || pre_step] ~~ [res(i) == f(n)]`.
pub fn big_step_of(spec: &ContractSpec) -> Formula {
    F::chop_all(vec![
        F::State(Expr::or(spec.pre_base.clone(), spec.pre_step.clone())),
        F::Gap(vec![]),
        res_is(spec.f.clone()),
    ])
}

/// The running example's contract data.
pub fn running_spec() -> ContractSpec {
    ContractSpec {
        proc: "m".into(),
        pre_base: Expr::eq(n(), Expr::int(0)),
        pre_step: Expr::bin(BinOp::Gt, n(), Expr::int(0)),
        f: n(),
        step_inv: Expr::bin(BinOp::Sub, n(), Expr::int(1)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_contract_text() {
        let f = make_contract(&running_spec());
        assert_eq!(
            f.to_string(),
            "(mu X_m(n, i). [n == 0] ** startEv(m, 0, i) ~m~ finishEv(m, 0, i) ** [res(i) == 0] \\/ \
             [n > 0] ** startEv(m, n, i) ~m~ X_m(n - 1, fresh(i)) ~m~ finishEv(m, n, i) ** [res(i) == n])(n, i)"
        );
        let logical = ["n".to_string(), "i".to_string()];
        assert_eq!(parse_formula_in(&f.to_string(), &logical).unwrap(), f);
    }

    #[test]
    fn unfold_substitutes_args() {
        let f = make_contract(&running_spec()).subst_syms(&BTreeMap::from([
            ("n".to_string(), Expr::int(0)),
            ("i".to_string(), Expr::int(0)),
        ]));
        let u = f.unfold().unwrap();
        let text = u.to_string();
        assert!(text.starts_with("[0 == 0] ** startEv(m, 0, 0)"), "{text}");
        assert!(text.contains("(mu X_m(n, i)."), "{text}");
        assert!(text.contains(")(0 - 1, fresh(0))"), "{text}");
    }

    #[test]
    fn substitution_avoids_capture() {
        let f = parse_formula("(mu X(n). [n == k'] \\/ X(n - 1))(k')").unwrap();
        let g = f.subst_sym("k'", &Expr::sym("n"));
        let F::Mu { params, body, args, .. } = &g else { panic!() };
        assert_eq!(args, &vec![Expr::sym("n")]);
        assert_ne!(params[0], "n");
        assert!(body.free_syms().contains("n"));
    }
}
