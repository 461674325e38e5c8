use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(self, BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge)
    }

    pub fn is_arith(self) -> bool {
        matches!(self, BinOp::Add | BinOp::Sub | BinOp::Mul)
    }

    pub fn is_logical(self) -> bool {
        matches!(self, BinOp::And | BinOp::Or)
    }

    /// Binding strength; larger binds tighter.
    pub fn prec(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 3,
            BinOp::Add | BinOp::Sub => 4,
            BinOp::Mul => 5,
        }
    }
}

/// Terms and predicates. Program expressions use `Var`, `Int`, `Res` and the
/// operators; logical variables and rigid symbols (`n'`) appear as `Sym`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Expr {
    Int(BigInt),
    Bool(bool),
    Var(String),
    Sym(String),
    Res(Box<Expr>),
    /// `fresh(i)`, only meaningful as an argument of a recursion variable.
    Fresh(Box<Expr>),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Val {
    Int(BigInt),
    Bool(bool),
}

impl fmt::Display for Val {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Val::Int(v) => write!(f, "{v}"),
            Val::Bool(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("undefined variable `{0}`")]
    UndefinedVariable(String),
    #[error("unbound logical symbol `{0}`")]
    UnboundSymbol(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("fresh(..) is only allowed as an argument of a recursion variable")]
    FreshOutsideArgs,
    #[error("result index {0} is not a call identifier")]
    BadResIndex(BigInt),
}

/// Name lookup used by the evaluator.
pub trait Env {
    fn var(&self, name: &str) -> Option<BigInt>;
    fn sym(&self, name: &str) -> Option<BigInt>;
}

pub fn res_name(id: u64) -> String {
    format!("res{id}")
}

impl Expr {
    pub fn int(v: impl Into<BigInt>) -> Expr {
        Expr::Int(v.into())
    }

    pub fn var(s: &str) -> Expr {
        Expr::Var(s.to_string())
    }

    pub fn sym(s: &str) -> Expr {
        Expr::Sym(s.to_string())
    }

    pub fn res(e: Expr) -> Expr {
        Expr::Res(Box::new(e))
    }

    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn not(e: Expr) -> Expr {
        Expr::Unary(UnOp::Not, Box::new(e))
    }

    pub fn neg(e: Expr) -> Expr {
        Expr::Unary(UnOp::Neg, Box::new(e))
    }

    pub fn eq(a: Expr, b: Expr) -> Expr {
        Expr::bin(BinOp::Eq, a, b)
    }

    pub fn and(a: Expr, b: Expr) -> Expr {
        Expr::bin(BinOp::And, a, b)
    }

    pub fn or(a: Expr, b: Expr) -> Expr {
        Expr::bin(BinOp::Or, a, b)
    }

    pub fn eval(&self, env: &dyn Env) -> Result<Val, EvalError> {
        Ok(match self {
            Expr::Int(v) => Val::Int(v.clone()),
            Expr::Bool(b) => Val::Bool(*b),
            Expr::Var(x) => {
                Val::Int(env.var(x).ok_or_else(|| EvalError::UndefinedVariable(x.clone()))?)
            }
            Expr::Sym(x) => {
                Val::Int(env.sym(x).ok_or_else(|| EvalError::UnboundSymbol(x.clone()))?)
            }
            Expr::Res(i) => {
                let id = i.eval_int(env)?;
                let id = id.to_u64().ok_or(EvalError::BadResIndex(id))?;
                let name = res_name(id);
                Val::Int(env.var(&name).ok_or(EvalError::UndefinedVariable(name))?)
            }
            Expr::Fresh(_) => return Err(EvalError::FreshOutsideArgs),
            Expr::Unary(UnOp::Neg, e) => Val::Int(-e.eval_int(env)?),
            Expr::Unary(UnOp::Not, e) => Val::Bool(!e.eval_bool(env)?),
            Expr::Binary(op, a, b) => match op {
                BinOp::And => Val::Bool(a.eval_bool(env)? && b.eval_bool(env)?),
                BinOp::Or => Val::Bool(a.eval_bool(env)? || b.eval_bool(env)?),
                _ => {
                    let x = a.eval_int(env)?;
                    let y = b.eval_int(env)?;
                    match op {
                        BinOp::Add => Val::Int(x + y),
                        BinOp::Sub => Val::Int(x - y),
                        BinOp::Mul => Val::Int(x * y),
                        BinOp::Eq => Val::Bool(x == y),
                        BinOp::Ne => Val::Bool(x != y),
                        BinOp::Lt => Val::Bool(x < y),
                        BinOp::Le => Val::Bool(x <= y),
                        BinOp::Gt => Val::Bool(x > y),
                        BinOp::Ge => Val::Bool(x >= y),
                        BinOp::And | BinOp::Or => unreachable!(),
                    }
                }
            },
        })
    }

    pub fn eval_int(&self, env: &dyn Env) -> Result<BigInt, EvalError> {
        match self.eval(env)? {
            Val::Int(v) => Ok(v),
            Val::Bool(_) => Err(EvalError::Type(format!("`{self}` is boolean, integer expected"))),
        }
    }

    pub fn eval_bool(&self, env: &dyn Env) -> Result<bool, EvalError> {
        match self.eval(env)? {
            Val::Bool(b) => Ok(b),
            Val::Int(_) => Err(EvalError::Type(format!("`{self}` is integer, condition expected"))),
        }
    }

    /// Static sort: `Some(true)` for boolean, `Some(false)` for integer,
    /// `None` when the operands are ill-sorted.
    pub fn is_boolean(&self) -> Option<bool> {
        match self {
            Expr::Int(_) | Expr::Var(_) | Expr::Sym(_) => Some(false),
            Expr::Res(i) | Expr::Fresh(i) => (i.is_boolean() == Some(false)).then_some(false),
            Expr::Bool(_) => Some(true),
            Expr::Unary(UnOp::Neg, e) => (e.is_boolean() == Some(false)).then_some(false),
            Expr::Unary(UnOp::Not, e) => (e.is_boolean() == Some(true)).then_some(true),
            Expr::Binary(op, a, b) => {
                let (x, y) = (a.is_boolean()?, b.is_boolean()?);
                if op.is_logical() {
                    (x && y).then_some(true)
                } else if op.is_comparison() {
                    (!x && !y).then_some(true)
                } else {
                    (!x && !y).then_some(false)
                }
            }
        }
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.walk(&mut |e| {
            if let Expr::Var(x) = e {
                out.insert(x.clone());
            }
        });
        out
    }

    pub fn syms(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.walk(&mut |e| {
            if let Expr::Sym(x) = e {
                out.insert(x.clone());
            }
        });
        out
    }

    pub fn mentions_res(&self) -> bool {
        let mut found = false;
        self.walk(&mut |e| found |= matches!(e, Expr::Res(_)));
        found
    }

    pub fn mentions_fresh(&self) -> bool {
        let mut found = false;
        self.walk(&mut |e| found |= matches!(e, Expr::Fresh(_)));
        found
    }

    pub fn walk(&self, f: &mut dyn FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Res(e) | Expr::Fresh(e) | Expr::Unary(_, e) => e.walk(f),
            Expr::Binary(_, a, b) => {
                a.walk(f);
                b.walk(f);
            }
            _ => {}
        }
    }

    /// Bottom-up rewrite.
    pub fn map(&self, f: &dyn Fn(&Expr) -> Option<Expr>) -> Expr {
        if let Some(e) = f(self) {
            return e;
        }
        match self {
            Expr::Res(e) => Expr::Res(Box::new(e.map(f))),
            Expr::Fresh(e) => Expr::Fresh(Box::new(e.map(f))),
            Expr::Unary(op, e) => Expr::Unary(*op, Box::new(e.map(f))),
            Expr::Binary(op, a, b) => Expr::Binary(*op, Box::new(a.map(f)), Box::new(b.map(f))),
            other => other.clone(),
        }
    }

    pub fn subst_var(&self, x: &str, by: &Expr) -> Expr {
        self.map(&|e| match e {
            Expr::Var(y) if y == x => Some(by.clone()),
            _ => None,
        })
    }

    pub fn subst_sym(&self, x: &str, by: &Expr) -> Expr {
        self.map(&|e| match e {
            Expr::Sym(y) if y == x => Some(by.clone()),
            _ => None,
        })
    }

    pub fn rename_var(&self, x: &str, to: &str) -> Expr {
        self.subst_var(x, &Expr::Var(to.to_string()))
    }

    /// Constant folding of integer arithmetic and trivially decided
    /// comparisons; leaves everything else intact.
    pub fn simplify(&self) -> Expr {
        match self {
            Expr::Unary(op, e) => {
                let e = e.simplify();
                match (op, &e) {
                    (UnOp::Neg, Expr::Int(v)) => Expr::Int(-v),
                    (UnOp::Not, Expr::Bool(b)) => Expr::Bool(!b),
                    _ => Expr::Unary(*op, Box::new(e)),
                }
            }
            Expr::Binary(op, a, b) => {
                let a = a.simplify();
                let b = b.simplify();
                match (&a, &b) {
                    (Expr::Int(x), Expr::Int(y)) => match op {
                        BinOp::Add => Expr::Int(x + y),
                        BinOp::Sub => Expr::Int(x - y),
                        BinOp::Mul => Expr::Int(x * y),
                        BinOp::Eq => Expr::Bool(x == y),
                        BinOp::Ne => Expr::Bool(x != y),
                        BinOp::Lt => Expr::Bool(x < y),
                        BinOp::Le => Expr::Bool(x <= y),
                        BinOp::Gt => Expr::Bool(x > y),
                        BinOp::Ge => Expr::Bool(x >= y),
                        _ => Expr::Binary(*op, Box::new(a), Box::new(b)),
                    },
                    (_, Expr::Int(z)) if z.is_zero() && matches!(op, BinOp::Add | BinOp::Sub) => a,
                    (Expr::Int(z), _) if z.is_zero() && *op == BinOp::Add => b,
                    (_, Expr::Int(o)) if o.is_one() && *op == BinOp::Mul => a,
                    (Expr::Bool(x), Expr::Bool(y)) if op.is_logical() => {
                        Expr::Bool(if *op == BinOp::And { *x && *y } else { *x || *y })
                    }
                    _ => Expr::Binary(*op, Box::new(a), Box::new(b)),
                }
            }
            Expr::Res(e) => Expr::Res(Box::new(e.simplify())),
            Expr::Fresh(e) => Expr::Fresh(Box::new(e.simplify())),
            other => other.clone(),
        }
    }
}

fn write_int(f: &mut fmt::Formatter<'_>, v: &BigInt) -> fmt::Result {
    if v.is_negative() {
        write!(f, "-{}", -v)
    } else {
        write!(f, "{v}")
    }
}

impl Expr {
    fn prec(&self) -> u8 {
        match self {
            Expr::Binary(op, ..) => op.prec(),
            Expr::Unary(..) => 6,
            Expr::Int(v) if v.is_negative() => 6,
            _ => 7,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let p = self.prec();
        if p < min {
            write!(f, "(")?;
            self.fmt_prec(f, 0)?;
            return write!(f, ")");
        }
        match self {
            Expr::Int(v) => write_int(f, v),
            Expr::Bool(b) => write!(f, "{b}"),
            Expr::Var(x) | Expr::Sym(x) => write!(f, "{x}"),
            Expr::Res(i) => {
                write!(f, "res(")?;
                i.fmt_prec(f, 0)?;
                write!(f, ")")
            }
            Expr::Fresh(i) => {
                write!(f, "fresh(")?;
                i.fmt_prec(f, 0)?;
                write!(f, ")")
            }
            Expr::Unary(op, e) => {
                write!(f, "{}", if *op == UnOp::Neg { "-" } else { "!" })?;
                // `-(1)` keeps a negated literal distinct from the literal -1.
                if matches!(**e, Expr::Int(_)) || e.prec() < 6 {
                    write!(f, "(")?;
                    e.fmt_prec(f, 0)?;
                    write!(f, ")")
                } else {
                    e.fmt_prec(f, 6)
                }
            }
            Expr::Binary(op, a, b) => {
                let q = op.prec();
                if op.is_comparison() {
                    a.fmt_prec(f, q + 1)?;
                    write!(f, " {} ", op.symbol())?;
                    b.fmt_prec(f, q + 1)
                } else {
                    a.fmt_prec(f, q)?;
                    write!(f, " {} ", op.symbol())?;
                    b.fmt_prec(f, q + 1)
                }
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}
