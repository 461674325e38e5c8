//! `.tcf` syntax.

use super::Formula;
use crate::lang::{is_keyword, parse_expr, Expr, Scoping};
use crate::syntax::{Cursor, SyntaxError, Tok};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractDecl {
    pub proc: String,
    pub params: Vec<String>,
    pub pre: Option<Expr>,
    pub result: Option<Expr>,
    pub body: Formula,
}

impl ContractDecl {
    /// The body with the parameters replaced by `args`.
    pub fn instantiate(&self, args: &[Expr]) -> Formula {
        let map = self.params.iter().cloned().zip(args.iter().cloned()).collect();
        self.body.subst_syms(&map)
    }
}

impl fmt::Display for ContractDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "contract {}({})", self.proc, self.params.join(", "))?;
        if let Some(p) = &self.pre {
            write!(f, " pre [{p}]")?;
        }
        if let Some(r) = &self.result {
            write!(f, " result {r}")?;
        }
        write!(f, " :=\n  {}\n", self.body)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FormulaFile {
    Formula(Formula),
    Contracts(Vec<ContractDecl>),
}

struct P<'a> {
    c: &'a mut Cursor,
    /// recursion variables in scope with their arity
    rec: Vec<(String, usize)>,
}

fn starts_item(t: &Tok) -> bool {
    match t {
        Tok::LBracket | Tok::LParen | Tok::Gap(_) => true,
        Tok::Ident(s) => s != "contract",
        _ => false,
    }
}

impl P<'_> {
    fn formula(&mut self, sc: &Scoping) -> Result<Formula, SyntaxError> {
        let a = self.conj(sc)?;
        if self.c.eat(&Tok::Vee) {
            return Ok(Formula::or(a, self.formula(sc)?));
        }
        Ok(a)
    }

    fn conj(&mut self, sc: &Scoping) -> Result<Formula, SyntaxError> {
        let a = self.seq(sc)?;
        if self.c.eat(&Tok::Wedge) {
            return Ok(Formula::and(a, self.conj(sc)?));
        }
        Ok(a)
    }

    fn seq(&mut self, sc: &Scoping) -> Result<Formula, SyntaxError> {
        #[derive(Clone, Copy)]
        enum Op {
            Chop,
            Concat,
        }
        let mut items = vec![self.item(sc)?];
        let mut ops = Vec::new();
        loop {
            let prev_gap = matches!(items.last(), Some(Formula::Gap(_)));
            let op = match self.c.peek() {
                Tok::StarStar => {
                    self.c.bump();
                    Op::Chop
                }
                Tok::DotDot => {
                    self.c.bump();
                    Op::Concat
                }
                Tok::Gap(_) => Op::Chop,
                t if prev_gap && starts_item(t) => Op::Chop,
                _ => break,
            };
            ops.push(op);
            items.push(self.item(sc)?);
        }
        let mut acc = items.pop().expect("at least one item");
        while let Some(f) = items.pop() {
            acc = match ops.pop().expect("one operator per pair") {
                Op::Chop => Formula::chop(f, acc),
                Op::Concat => Formula::concat(f, acc),
            };
        }
        Ok(acc)
    }

    fn args(&mut self, sc: &Scoping) -> Result<Vec<Expr>, SyntaxError> {
        self.c.expect(&Tok::LParen)?;
        let mut out = Vec::new();
        if !self.c.eat(&Tok::RParen) {
            loop {
                out.push(parse_expr(self.c, sc)?);
                if self.c.eat(&Tok::RParen) {
                    break;
                }
                self.c.expect(&Tok::Comma)?;
            }
        }
        Ok(out)
    }

    fn names(&mut self) -> Result<Vec<String>, SyntaxError> {
        self.c.expect(&Tok::LParen)?;
        let mut out = Vec::new();
        if !self.c.eat(&Tok::RParen) {
            loop {
                out.push(self.c.ident()?);
                if self.c.eat(&Tok::RParen) {
                    break;
                }
                self.c.expect(&Tok::Comma)?;
            }
        }
        Ok(out)
    }

    fn no_fresh(&self, es: &[Expr], what: &str) -> Result<(), SyntaxError> {
        if es.iter().any(Expr::mentions_fresh) {
            return Err(SyntaxError::new(self.c.pos(), format!("fresh(..) is not allowed in {what}")));
        }
        Ok(())
    }

    fn event(&mut self, sc: &Scoping) -> Result<(String, Expr, Expr), SyntaxError> {
        self.c.expect(&Tok::LParen)?;
        let m = self.c.ident()?;
        self.c.expect(&Tok::Comma)?;
        let e = parse_expr(self.c, sc)?;
        self.c.expect(&Tok::Comma)?;
        let i = parse_expr(self.c, sc)?;
        self.c.expect(&Tok::RParen)?;
        self.no_fresh(&[e.clone(), i.clone()], "event arguments")?;
        Ok((m, e, i))
    }

    /// `mu X(y..). body` after `mu`; returns (var, params, body).
    fn mu_binder(&mut self, sc: &Scoping) -> Result<(String, Vec<String>, Formula), SyntaxError> {
        let var = self.c.ident()?;
        let params = self.names()?;
        self.c.expect(&Tok::Dot)?;
        self.rec.push((var.clone(), params.len()));
        let body = self.formula(&sc.with(&params));
        self.rec.pop();
        Ok((var, params, body?))
    }

    fn check_arity(&self, x: &str, n: usize, want: usize) -> Result<(), SyntaxError> {
        if n != want {
            return Err(SyntaxError::new(
                self.c.pos(),
                format!("`{x}` takes {want} argument(s), {n} given"),
            ));
        }
        Ok(())
    }

    fn item(&mut self, sc: &Scoping) -> Result<Formula, SyntaxError> {
        let pos = self.c.pos();
        match self.c.peek().clone() {
            Tok::Gap(ps) => {
                self.c.bump();
                Ok(Formula::Gap(ps))
            }
            Tok::LBracket => {
                self.c.bump();
                let p = parse_expr(self.c, sc)?;
                self.c.expect(&Tok::RBracket)?;
                if p.is_boolean() != Some(true) {
                    return Err(SyntaxError::new(pos, format!("`{p}` is not a predicate")));
                }
                self.no_fresh(std::slice::from_ref(&p), "state predicates")?;
                Ok(Formula::State(p))
            }
            Tok::LParen if matches!(self.c.peek_at(1), Tok::Ident(k) if k == "mu") => {
                self.c.bump();
                self.c.bump();
                let (var, params, body) = self.mu_binder(sc)?;
                self.c.expect(&Tok::RParen)?;
                let args = self.args(sc)?;
                self.check_arity(&var, args.len(), params.len())?;
                Ok(Formula::Mu { var, params, body: Box::new(body), args })
            }
            Tok::LParen => {
                self.c.bump();
                let f = self.formula(sc)?;
                self.c.expect(&Tok::RParen)?;
                Ok(f)
            }
            Tok::Ident(k) => {
                self.c.bump();
                match k.as_str() {
                    "mu" => {
                        let (var, params, body) = self.mu_binder(sc)?;
                        let args = params.iter().map(|p| Expr::Sym(p.clone())).collect();
                        Ok(Formula::Mu { var, params, body: Box::new(body), args })
                    }
                    "startEv" => {
                        let (proc, arg, id) = self.event(sc)?;
                        Ok(Formula::Start { proc, arg, id })
                    }
                    "finishEv" => {
                        let (proc, value, id) = self.event(sc)?;
                        Ok(Formula::Finish { proc, value, id })
                    }
                    "noev" => {
                        let ps = self.names()?;
                        Ok(Formula::NoEv(ps))
                    }
                    _ if is_keyword(&k) => Err(SyntaxError::new(pos, format!("unexpected keyword `{k}`"))),
                    _ => {
                        let Some(&(_, arity)) = self.rec.iter().rev().find(|(x, _)| *x == k) else {
                            return Err(SyntaxError::new(pos, format!("unbound recursion variable `{k}`")));
                        };
                        let args = self.args(sc)?;
                        self.check_arity(&k, args.len(), arity)?;
                        Ok(Formula::App(k, args))
                    }
                }
            }
            _ => Err(self.c.unexpected("formula")),
        }
    }
}

/// Parses a formula whose free names in `logical` are logical variables.
pub fn parse_formula_in(text: &str, logical: &[String]) -> Result<Formula, SyntaxError> {
    let mut c = Cursor::new(text)?;
    let sc = Scoping::default().with(logical);
    let f = P { c: &mut c, rec: Vec::new() }.formula(&sc)?;
    c.expect_eof()?;
    Ok(f)
}

pub fn parse_formula(text: &str) -> Result<Formula, SyntaxError> {
    parse_formula_in(text, &[])
}

fn contract(c: &mut Cursor) -> Result<ContractDecl, SyntaxError> {
    if !c.is_keyword("contract") {
        return Err(c.unexpected("`contract`"));
    }
    c.bump();
    let proc = c.ident()?;
    let mut p = P { c, rec: Vec::new() };
    let params = p.names()?;
    let sc = Scoping::default().with(&params);
    let mut pre = None;
    let mut result = None;
    if p.c.is_keyword("pre") {
        p.c.bump();
        p.c.expect(&Tok::LBracket)?;
        pre = Some(parse_expr(p.c, &sc)?);
        p.c.expect(&Tok::RBracket)?;
    }
    if p.c.is_keyword("result") {
        p.c.bump();
        result = Some(parse_expr(p.c, &sc)?);
    }
    p.c.expect(&Tok::Define)?;
    let body = p.formula(&sc)?;
    p.c.eat(&Tok::Semi);
    Ok(ContractDecl { proc, params, pre, result, body })
}

pub fn parse_contracts(text: &str) -> Result<Vec<ContractDecl>, SyntaxError> {
    let mut c = Cursor::new(text)?;
    let mut out: Vec<ContractDecl> = Vec::new();
    let mut seen = BTreeMap::new();
    while !c.at_eof() {
        let pos = c.pos();
        let d = contract(&mut c)?;
        if seen.insert(d.proc.clone(), ()).is_some() {
            return Err(SyntaxError::new(pos, format!("duplicate contract for `{}`", d.proc)));
        }
        let free: Vec<String> =
            d.body.free_syms().into_iter().filter(|s| !d.params.contains(s) && !s.ends_with('\'')).collect();
        if !free.is_empty() {
            return Err(SyntaxError::new(pos, format!("unbound logical variable(s): {}", free.join(", "))));
        }
        out.push(d);
    }
    Ok(out)
}

/// A `.tcf` file: either contract declarations or one bare formula.
pub fn parse_formula_file(text: &str) -> Result<FormulaFile, SyntaxError> {
    let c = Cursor::new(text)?;
    if c.is_keyword("contract") {
        Ok(FormulaFile::Contracts(parse_contracts(text)?))
    } else {
        Ok(FormulaFile::Formula(parse_formula(text)?))
    }
}
