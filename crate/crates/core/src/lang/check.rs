use super::ast::{Lhs, Program, Stmt};
use super::expr::Expr;
use std::collections::BTreeSet;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiagKind {
    DuplicateProcedure,
    MissingReturn,
    ReturnNotInTail,
    UndeclaredVariable,
    SideEffect,
    UnknownProcedure,
    IllTyped,
    ReservedName,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub kind: DiagKind,
    pub location: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

struct Checker<'a> {
    prog: &'a Program,
    out: Vec<Diagnostic>,
    loc: String,
    /// Names a procedure body may write to; `None` inside main.
    writable: Option<BTreeSet<String>>,
}

impl Checker<'_> {
    fn diag(&mut self, kind: DiagKind, message: String) {
        self.out.push(Diagnostic { kind, location: self.loc.clone(), message });
    }

    fn expr(&mut self, e: &Expr, scope: &[String], want_bool: bool) {
        for v in e.vars() {
            if !scope.contains(&v) {
                self.diag(DiagKind::UndeclaredVariable, format!("variable `{v}` is not declared"));
            }
        }
        for s in e.syms() {
            self.diag(DiagKind::ReservedName, format!("`{s}` is a rigid symbol, not a program variable"));
        }
        if e.mentions_res() {
            self.diag(DiagKind::ReservedName, "programs may not mention res(..)".into());
        }
        if e.mentions_fresh() {
            self.diag(DiagKind::ReservedName, "fresh(..) is not a program expression".into());
        }
        match e.is_boolean() {
            Some(b) if b == want_bool => {}
            _ => {
                let what = if want_bool { "a condition" } else { "an integer" };
                self.diag(DiagKind::IllTyped, format!("`{e}` is not {what}"));
            }
        }
    }

    fn write(&mut self, x: &str, scope: &[String]) {
        if !scope.iter().any(|s| s == x) {
            self.diag(DiagKind::UndeclaredVariable, format!("variable `{x}` is not declared"));
        } else if let Some(w) = &self.writable {
            if !w.contains(x) {
                self.diag(
                    DiagKind::SideEffect,
                    format!("assignment to `{x}`, which is not declared inside the procedure"),
                );
            }
        }
    }

    fn stmt(&mut self, s: &Stmt, scope: &mut Vec<String>, tail_ok: bool) {
        match s {
            Stmt::Skip => {}
            Stmt::Assign(Lhs::Var(x), e) => {
                self.write(x, scope);
                self.expr(e, scope, false);
            }
            Stmt::Assign(Lhs::Res(_), _) => {
                self.diag(DiagKind::ReservedName, "programs may not assign to res(..)".into());
            }
            Stmt::Call(x, m, e) => {
                self.write(x, scope);
                self.expr(e, scope, false);
                if !self.prog.procs.iter().any(|p| &p.name == m) {
                    self.diag(DiagKind::UnknownProcedure, format!("call to unknown procedure `{m}`"));
                }
            }
            Stmt::If(c, b) | Stmt::While(c, b) => {
                self.expr(c, scope, true);
                self.stmt(b, scope, false);
            }
            Stmt::Seq(a, b) => {
                self.stmt(a, scope, false);
                self.stmt(b, scope, tail_ok);
            }
            Stmt::Scope(sc) => {
                let n = scope.len();
                for d in &sc.decls {
                    scope.push(d.clone());
                    if let Some(w) = &mut self.writable {
                        w.insert(d.clone());
                    }
                }
                self.stmt(&sc.body, scope, false);
                scope.truncate(n);
            }
            Stmt::Return(e) => {
                if !tail_ok {
                    self.diag(
                        DiagKind::ReturnNotInTail,
                        "return is only allowed as the final statement of a procedure".into(),
                    );
                }
                self.expr(e, scope, false);
            }
        }
    }
}

fn ends_in_return(s: &Stmt) -> bool {
    match s {
        Stmt::Seq(_, b) => ends_in_return(b),
        Stmt::Return(_) => true,
        _ => false,
    }
}

/// Checks every program invariant; an empty result means well-formed.
pub fn well_formed(p: &Program) -> Vec<Diagnostic> {
    let mut ck = Checker { prog: p, out: Vec::new(), loc: String::new(), writable: None };
    let mut seen = BTreeSet::new();
    for m in &p.procs {
        ck.loc = format!("procedure `{}` (line {})", m.name, m.pos.line);
        if !seen.insert(m.name.clone()) {
            ck.diag(DiagKind::DuplicateProcedure, format!("procedure `{}` declared twice", m.name));
        }
        if !ends_in_return(&m.body.body) {
            ck.diag(DiagKind::MissingReturn, "body must end with a return statement".into());
        }
        let mut scope = vec![m.param.clone()];
        scope.extend(m.body.decls.iter().cloned());
        ck.writable = Some(m.body.decls.iter().cloned().collect());
        ck.stmt(&m.body.body, &mut scope, true);
    }
    ck.loc = "main".into();
    ck.writable = None;
    let mut scope = p.main_decls.clone();
    ck.stmt(&p.main_body, &mut scope, false);
    ck.out
}
