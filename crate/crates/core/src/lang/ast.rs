use super::expr::Expr;
use crate::syntax::Pos;
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

/// Left-hand side of an assignment. `Res` only appears in statements produced
/// by the calculus (the Return rule), never in user programs.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Lhs {
    Var(String),
    Res(Expr),
}

impl fmt::Display for Lhs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Lhs::Var(x) => write!(f, "{x}"),
            Lhs::Res(i) => write!(f, "res({i})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Scope {
    pub decls: Vec<String>,
    pub body: Box<Stmt>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Stmt {
    Skip,
    Assign(Lhs, Expr),
    Call(String, String, Expr),
    If(Expr, Box<Stmt>),
    Seq(Box<Stmt>, Box<Stmt>),
    While(Expr, Box<Stmt>),
    Scope(Scope),
    Return(Expr),
}

impl Stmt {
    pub fn assign(x: &str, e: Expr) -> Stmt {
        Stmt::Assign(Lhs::Var(x.to_string()), e)
    }

    /// Right-associating sequence constructor.
    pub fn seq(a: Stmt, b: Stmt) -> Stmt {
        match a {
            Stmt::Seq(x, y) => Stmt::seq(*x, Stmt::seq(*y, b)),
            a => Stmt::Seq(Box::new(a), Box::new(b)),
        }
    }

    pub fn seq_all(mut items: Vec<Stmt>) -> Stmt {
        let mut acc = match items.pop() {
            Some(s) => s,
            None => return Stmt::Skip,
        };
        while let Some(s) = items.pop() {
            acc = Stmt::seq(s, acc);
        }
        acc
    }

    /// Splits off the first statement of a (right-associated) sequence.
    pub fn head_tail(&self) -> (&Stmt, Option<&Stmt>) {
        match self {
            Stmt::Seq(a, b) => (a, Some(b)),
            s => (s, None),
        }
    }

    pub fn scope(decls: Vec<String>, body: Stmt) -> Stmt {
        Stmt::Scope(Scope { decls, body: Box::new(body) })
    }

    pub fn contains_while(&self) -> bool {
        match self {
            Stmt::While(..) => true,
            Stmt::If(_, s) => s.contains_while(),
            Stmt::Seq(a, b) => a.contains_while() || b.contains_while(),
            Stmt::Scope(sc) => sc.body.contains_while(),
            _ => false,
        }
    }

    pub fn contains_call(&self) -> bool {
        match self {
            Stmt::Call(..) => true,
            Stmt::If(_, s) | Stmt::While(_, s) => s.contains_call(),
            Stmt::Seq(a, b) => a.contains_call() || b.contains_call(),
            Stmt::Scope(sc) => sc.body.contains_call(),
            _ => false,
        }
    }

    /// Substitutes an expression for free occurrences of variable `x`
    /// (occurrences bound by an inner declaration are left alone). Assignment
    /// targets are renamed only when `by` is itself a variable.
    pub fn subst_var(&self, x: &str, by: &Expr) -> Stmt {
        let e = |ex: &Expr| ex.subst_var(x, by);
        match self {
            Stmt::Skip => Stmt::Skip,
            Stmt::Assign(lhs, ex) => {
                let lhs = match (lhs, by) {
                    (Lhs::Var(y), Expr::Var(z)) if y == x => Lhs::Var(z.clone()),
                    (Lhs::Res(i), _) => Lhs::Res(e(i)),
                    (l, _) => l.clone(),
                };
                Stmt::Assign(lhs, e(ex))
            }
            Stmt::Call(v, m, ex) => {
                let v = match by {
                    Expr::Var(z) if v == x => z.clone(),
                    _ => v.clone(),
                };
                Stmt::Call(v, m.clone(), e(ex))
            }
            Stmt::If(c, s) => Stmt::If(e(c), Box::new(s.subst_var(x, by))),
            Stmt::While(c, s) => Stmt::While(e(c), Box::new(s.subst_var(x, by))),
            Stmt::Seq(a, b) => Stmt::Seq(Box::new(a.subst_var(x, by)), Box::new(b.subst_var(x, by))),
            Stmt::Scope(sc) => {
                if sc.decls.iter().any(|d| d == x) {
                    self.clone()
                } else {
                    Stmt::Scope(Scope {
                        decls: sc.decls.clone(),
                        body: Box::new(sc.body.subst_var(x, by)),
                    })
                }
            }
            Stmt::Return(ex) => Stmt::Return(e(ex)),
        }
    }

    pub fn rename_var(&self, x: &str, to: &str) -> Stmt {
        self.subst_var(x, &Expr::Var(to.to_string()))
    }

    pub fn map_exprs(&self, f: &dyn Fn(&Expr) -> Expr) -> Stmt {
        match self {
            Stmt::Skip => Stmt::Skip,
            Stmt::Assign(Lhs::Var(v), e) => Stmt::Assign(Lhs::Var(v.clone()), f(e)),
            Stmt::Assign(Lhs::Res(i), e) => Stmt::Assign(Lhs::Res(f(i)), f(e)),
            Stmt::Call(v, m, e) => Stmt::Call(v.clone(), m.clone(), f(e)),
            Stmt::If(c, s) => Stmt::If(f(c), Box::new(s.map_exprs(f))),
            Stmt::While(c, s) => Stmt::While(f(c), Box::new(s.map_exprs(f))),
            Stmt::Seq(a, b) => Stmt::Seq(Box::new(a.map_exprs(f)), Box::new(b.map_exprs(f))),
            Stmt::Scope(sc) => Stmt::Scope(Scope {
                decls: sc.decls.clone(),
                body: Box::new(sc.body.map_exprs(f)),
            }),
            Stmt::Return(e) => Stmt::Return(f(e)),
        }
    }

    pub fn walk_exprs(&self, f: &mut dyn FnMut(&Expr)) {
        match self {
            Stmt::Skip => {}
            Stmt::Assign(Lhs::Var(_), e) | Stmt::Call(_, _, e) | Stmt::Return(e) => f(e),
            Stmt::Assign(Lhs::Res(i), e) => {
                f(i);
                f(e)
            }
            Stmt::If(c, s) | Stmt::While(c, s) => {
                f(c);
                s.walk_exprs(f)
            }
            Stmt::Seq(a, b) => {
                a.walk_exprs(f);
                b.walk_exprs(f)
            }
            Stmt::Scope(sc) => sc.body.walk_exprs(f),
        }
    }

    /// Every variable name occurring anywhere (reads, writes, declarations).
    pub fn all_names(&self, out: &mut std::collections::BTreeSet<String>) {
        self.walk_exprs(&mut |e| out.extend(e.vars()));
        match self {
            Stmt::Assign(Lhs::Var(v), _) | Stmt::Call(v, _, _) => {
                out.insert(v.clone());
            }
            Stmt::If(_, s) | Stmt::While(_, s) => s.all_names(out),
            Stmt::Seq(a, b) => {
                a.all_names(out);
                b.all_names(out)
            }
            Stmt::Scope(sc) => {
                out.extend(sc.decls.iter().cloned());
                sc.body.all_names(out)
            }
            _ => {}
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProcDecl {
    pub name: String,
    pub param: String,
    pub body: Scope,
    pub pos: Pos,
}

impl PartialEq for ProcDecl {
    fn eq(&self, o: &Self) -> bool {
        self.name == o.name && self.param == o.param && self.body == o.body
    }
}
impl Eq for ProcDecl {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub procs: Vec<ProcDecl>,
    pub main_decls: Vec<String>,
    pub main_body: Stmt,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown procedure `{0}`")]
pub struct UnknownProcedure(pub String);

/// The global procedure lookup table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LookupTable {
    procs: BTreeMap<String, ProcDecl>,
}

impl LookupTable {
    pub fn get(&self, m: &str) -> Result<&ProcDecl, UnknownProcedure> {
        self.procs.get(m).ok_or_else(|| UnknownProcedure(m.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.procs.keys()
    }

    pub fn len(&self) -> usize {
        self.procs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.procs.is_empty()
    }
}

impl Program {
    /// Later duplicates are dropped; `well_formed` reports them.
    pub fn lookup_table(&self) -> LookupTable {
        let mut procs = BTreeMap::new();
        for p in &self.procs {
            procs.entry(p.name.clone()).or_insert_with(|| p.clone());
        }
        LookupTable { procs }
    }
}

pub fn lookup<'a>(m: &str, g: &'a LookupTable) -> Result<&'a ProcDecl, UnknownProcedure> {
    g.get(m)
}
