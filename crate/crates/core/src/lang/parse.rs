use super::ast::{Lhs, ProcDecl, Program, Scope, Stmt};
use super::expr::{BinOp, Expr, UnOp};
use crate::syntax::{Cursor, SyntaxError, Tok};
use std::collections::BTreeSet;

/// Names that resolve to logical variables instead of program variables.
/// Primed identifiers (`n'`) are always logical.
#[derive(Debug, Clone, Default)]
pub struct Scoping {
    pub logical: BTreeSet<String>,
}

impl Scoping {
    pub fn with(&self, names: &[String]) -> Scoping {
        let mut s = self.clone();
        s.logical.extend(names.iter().cloned());
        s
    }

    fn resolve(&self, name: String) -> Expr {
        if name.ends_with('\'') || self.logical.contains(&name) {
            Expr::Sym(name)
        } else {
            Expr::Var(name)
        }
    }
}

const KEYWORDS: &[&str] = &[
    "skip", "if", "while", "return", "main", "res", "fresh", "true", "false", "mu", "startEv",
    "finishEv", "contract", "pre", "result", "noev",
];

pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

fn binop_of(t: &Tok) -> Option<BinOp> {
    Some(match t {
        Tok::OrOr => BinOp::Or,
        Tok::AndAnd => BinOp::And,
        Tok::EqEq => BinOp::Eq,
        Tok::Ne => BinOp::Ne,
        Tok::Lt => BinOp::Lt,
        Tok::Le => BinOp::Le,
        Tok::Gt => BinOp::Gt,
        Tok::Ge => BinOp::Ge,
        Tok::Plus => BinOp::Add,
        Tok::Minus => BinOp::Sub,
        Tok::Star => BinOp::Mul,
        _ => return None,
    })
}

pub fn parse_expr(c: &mut Cursor, sc: &Scoping) -> Result<Expr, SyntaxError> {
    parse_bin(c, sc, 1)
}

fn parse_bin(c: &mut Cursor, sc: &Scoping, min: u8) -> Result<Expr, SyntaxError> {
    let mut lhs = parse_unary(c, sc)?;
    loop {
        let op = match binop_of(c.peek()) {
            Some(op) if op.prec() >= min => op,
            _ => return Ok(lhs),
        };
        c.bump();
        let rhs = parse_bin(c, sc, op.prec() + 1)?;
        if op.is_comparison() {
            if let Some(op2) = binop_of(c.peek()).filter(|o| o.is_comparison()) {
                return Err(SyntaxError::new(
                    c.pos(),
                    format!("comparison `{}` cannot be chained; add parentheses", op2.symbol()),
                ));
            }
        }
        lhs = Expr::bin(op, lhs, rhs);
    }
}

fn parse_unary(c: &mut Cursor, sc: &Scoping) -> Result<Expr, SyntaxError> {
    match c.peek().clone() {
        Tok::Minus => {
            c.bump();
            if let Tok::Int(v) = c.peek().clone() {
                c.bump();
                return Ok(Expr::Int(-v));
            }
            Ok(Expr::Unary(UnOp::Neg, Box::new(parse_unary(c, sc)?)))
        }
        Tok::Bang => {
            c.bump();
            Ok(Expr::Unary(UnOp::Not, Box::new(parse_unary(c, sc)?)))
        }
        _ => parse_atom(c, sc),
    }
}

fn parse_atom(c: &mut Cursor, sc: &Scoping) -> Result<Expr, SyntaxError> {
    let pos = c.pos();
    match c.bump() {
        Tok::Int(v) => Ok(Expr::Int(v)),
        Tok::LParen => {
            let e = parse_expr(c, sc)?;
            c.expect(&Tok::RParen)?;
            Ok(e)
        }
        Tok::Ident(s) => match s.as_str() {
            "true" => Ok(Expr::Bool(true)),
            "false" => Ok(Expr::Bool(false)),
            "res" | "fresh" => {
                c.expect(&Tok::LParen)?;
                let i = parse_expr(c, sc)?;
                c.expect(&Tok::RParen)?;
                Ok(if s == "res" { Expr::res(i) } else { Expr::Fresh(Box::new(i)) })
            }
            _ if is_keyword(&s) => {
                Err(SyntaxError::new(pos, format!("keyword `{s}` cannot start an expression")))
            }
            _ => Ok(sc.resolve(s)),
        },
        t => Err(SyntaxError::new(pos, format!("expected expression, found {t}"))),
    }
}

fn ends_with_brace(s: &Stmt) -> bool {
    matches!(s, Stmt::If(..) | Stmt::While(..) | Stmt::Scope(_))
}

/// `{ decls stmts }` after the opening brace has been consumed; consumes the
/// closing brace.
pub fn parse_block_body(c: &mut Cursor, sc: &Scoping) -> Result<(Vec<String>, Stmt), SyntaxError> {
    let mut decls = Vec::new();
    while let (Tok::Ident(name), Tok::Semi) = (c.peek().clone(), c.peek_at(1).clone()) {
        if is_keyword(&name) {
            break;
        }
        c.bump();
        c.bump();
        decls.push(name);
    }
    let body = parse_stmts(c, sc, &Tok::RBrace)?;
    c.expect(&Tok::RBrace)?;
    Ok((decls, body))
}

/// Statement sequence up to (not including) `end`.
pub fn parse_stmts(c: &mut Cursor, sc: &Scoping, end: &Tok) -> Result<Stmt, SyntaxError> {
    let mut items = Vec::new();
    while c.peek() != end {
        let s = parse_stmt(c, sc)?;
        let braced = ends_with_brace(&s);
        items.push(s);
        if !c.eat(&Tok::Semi) && c.peek() != end && !braced {
            return Err(c.unexpected(&format!("`;` or {end}")));
        }
    }
    Ok(Stmt::seq_all(items))
}

fn parse_braced(c: &mut Cursor, sc: &Scoping) -> Result<Stmt, SyntaxError> {
    c.expect(&Tok::LBrace)?;
    let (decls, body) = parse_block_body(c, sc)?;
    Ok(if decls.is_empty() { body } else { Stmt::scope(decls, body) })
}

fn parse_cond(c: &mut Cursor, sc: &Scoping) -> Result<Expr, SyntaxError> {
    c.expect(&Tok::LParen)?;
    let e = parse_expr(c, sc)?;
    c.expect(&Tok::RParen)?;
    Ok(e)
}

pub fn parse_stmt(c: &mut Cursor, sc: &Scoping) -> Result<Stmt, SyntaxError> {
    let pos = c.pos();
    match c.peek().clone() {
        Tok::LBrace => {
            c.bump();
            let (decls, body) = parse_block_body(c, sc)?;
            Ok(Stmt::scope(decls, body))
        }
        Tok::Ident(kw) if kw == "skip" => {
            c.bump();
            Ok(Stmt::Skip)
        }
        Tok::Ident(kw) if kw == "if" => {
            c.bump();
            let e = parse_cond(c, sc)?;
            Ok(Stmt::If(e, Box::new(parse_braced(c, sc)?)))
        }
        Tok::Ident(kw) if kw == "while" => {
            c.bump();
            let e = parse_cond(c, sc)?;
            Ok(Stmt::While(e, Box::new(parse_braced(c, sc)?)))
        }
        Tok::Ident(kw) if kw == "return" => {
            c.bump();
            Ok(Stmt::Return(parse_expr(c, sc)?))
        }
        Tok::Ident(kw) if kw == "res" => {
            c.bump();
            c.expect(&Tok::LParen)?;
            let i = parse_expr(c, sc)?;
            c.expect(&Tok::RParen)?;
            c.expect(&Tok::Assign)?;
            Ok(Stmt::Assign(Lhs::Res(i), parse_expr(c, sc)?))
        }
        Tok::Ident(x) if !is_keyword(&x) => {
            c.bump();
            c.expect(&Tok::Assign)?;
            if let (Tok::Ident(m), Tok::LParen) = (c.peek().clone(), c.peek_at(1).clone()) {
                if !is_keyword(&m) {
                    c.bump();
                    c.bump();
                    let e = parse_expr(c, sc)?;
                    c.expect(&Tok::RParen)?;
                    return Ok(Stmt::Call(x, m, e));
                }
            }
            Ok(Stmt::Assign(Lhs::Var(x), parse_expr(c, sc)?))
        }
        t => Err(SyntaxError::new(pos, format!("expected statement, found {t}"))),
    }
}

fn check_tail_return(body: &Stmt, proc: &str, pos: crate::syntax::Pos) -> Result<(), SyntaxError> {
    fn has_return(s: &Stmt) -> bool {
        match s {
            Stmt::Return(_) => true,
            Stmt::If(_, b) | Stmt::While(_, b) => has_return(b),
            Stmt::Seq(a, b) => has_return(a) || has_return(b),
            Stmt::Scope(sc) => has_return(&sc.body),
            _ => false,
        }
    }
    let mut cur = body;
    loop {
        match cur {
            Stmt::Seq(a, b) => {
                if has_return(a) {
                    return Err(SyntaxError::new(
                        pos,
                        format!("procedure `{proc}`: return is only allowed as the final statement"),
                    ));
                }
                cur = b;
            }
            Stmt::Return(_) => return Ok(()),
            other => {
                let msg = if has_return(other) {
                    format!("procedure `{proc}`: return is only allowed as the final statement")
                } else {
                    format!("procedure `{proc}` must end with a return statement")
                };
                return Err(SyntaxError::new(pos, msg));
            }
        }
    }
}

pub fn parse_program(text: &str) -> Result<Program, SyntaxError> {
    let mut c = Cursor::new(text)?;
    let sc = Scoping::default();
    let mut procs: Vec<ProcDecl> = Vec::new();
    loop {
        let pos = c.pos();
        let name = c.ident()?;
        if name == "main" {
            c.expect(&Tok::LBrace)?;
            let (main_decls, main_body) = parse_block_body(&mut c, &sc)?;
            if main_body_has_return(&main_body) {
                return Err(SyntaxError::new(pos, "main may not contain return"));
            }
            c.expect_eof()?;
            return Ok(Program { procs, main_decls, main_body });
        }
        if is_keyword(&name) {
            return Err(SyntaxError::new(pos, format!("keyword `{name}` cannot name a procedure")));
        }
        if procs.iter().any(|p| p.name == name) {
            return Err(SyntaxError::new(pos, format!("duplicate procedure `{name}`")));
        }
        c.expect(&Tok::LParen)?;
        let param = c.ident()?;
        c.expect(&Tok::RParen)?;
        c.expect(&Tok::LBrace)?;
        let (decls, body) = parse_block_body(&mut c, &sc)?;
        check_tail_return(&body, &name, pos)?;
        procs.push(ProcDecl { name, param, body: Scope { decls, body: Box::new(body) }, pos });
    }
}

fn main_body_has_return(s: &Stmt) -> bool {
    match s {
        Stmt::Return(_) => true,
        Stmt::If(_, b) | Stmt::While(_, b) => main_body_has_return(b),
        Stmt::Seq(a, b) => main_body_has_return(a) || main_body_has_return(b),
        Stmt::Scope(sc) => main_body_has_return(&sc.body),
        _ => false,
    }
}

/// Parses a bare statement sequence (used for judgments and tests).
pub fn parse_stmt_text(text: &str) -> Result<Stmt, SyntaxError> {
    let mut c = Cursor::new(text)?;
    let s = parse_stmts(&mut c, &Scoping::default(), &Tok::Eof)?;
    c.expect_eof()?;
    Ok(s)
}

pub fn parse_expr_text(text: &str, sc: &Scoping) -> Result<Expr, SyntaxError> {
    let mut c = Cursor::new(text)?;
    let e = parse_expr(&mut c, sc)?;
    c.expect_eof()?;
    Ok(e)
}
