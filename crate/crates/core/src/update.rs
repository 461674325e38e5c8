//! Updates: sequences of elementary assignments, call assignments and event
//! atoms, the residue of symbolic execution.

use crate::lang::{is_keyword, parse_expr, Expr, Lhs, Scoping};
use crate::syntax::{Cursor, SyntaxError, Tok};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum UpdateAtom {
    /// `{v := e}` or `{res(i) := e}`.
    Assign(Lhs, Expr),
    /// `{v := m(e)}`.
    Call(String, String, Expr),
    Start { proc: String, arg: Expr, id: Expr },
    Finish { proc: String, value: Expr, id: Expr },
}

impl UpdateAtom {
    pub fn is_event(&self) -> bool {
        matches!(self, UpdateAtom::Start { .. } | UpdateAtom::Finish { .. })
    }

    /// Whether evaluating the atom can emit an event of procedure `m`.
    /// Call atoms are treated as involving every procedure.
    pub fn involves(&self, m: &str) -> bool {
        match self {
            UpdateAtom::Assign(..) => false,
            UpdateAtom::Call(..) => true,
            UpdateAtom::Start { proc, .. } | UpdateAtom::Finish { proc, .. } => proc == m,
        }
    }

    pub fn map_exprs(&self, f: &dyn Fn(&Expr) -> Expr) -> UpdateAtom {
        match self {
            UpdateAtom::Assign(Lhs::Var(v), e) => UpdateAtom::Assign(Lhs::Var(v.clone()), f(e)),
            UpdateAtom::Assign(Lhs::Res(i), e) => UpdateAtom::Assign(Lhs::Res(f(i)), f(e)),
            UpdateAtom::Call(v, m, e) => UpdateAtom::Call(v.clone(), m.clone(), f(e)),
            UpdateAtom::Start { proc, arg, id } => {
                UpdateAtom::Start { proc: proc.clone(), arg: f(arg), id: f(id) }
            }
            UpdateAtom::Finish { proc, value, id } => {
                UpdateAtom::Finish { proc: proc.clone(), value: f(value), id: f(id) }
            }
        }
    }

    pub fn exprs(&self) -> Vec<&Expr> {
        match self {
            UpdateAtom::Assign(Lhs::Var(_), e) | UpdateAtom::Call(_, _, e) => vec![e],
            UpdateAtom::Assign(Lhs::Res(i), e) => vec![i, e],
            UpdateAtom::Start { arg, id, .. } => vec![arg, id],
            UpdateAtom::Finish { value, id, .. } => vec![value, id],
        }
    }

    /// Program variable written by the atom.
    pub fn target(&self) -> Option<&str> {
        match self {
            UpdateAtom::Assign(Lhs::Var(v), _) | UpdateAtom::Call(v, _, _) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for UpdateAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UpdateAtom::Assign(l, e) => write!(f, "{{{l} := {e}}}"),
            UpdateAtom::Call(v, m, e) => write!(f, "{{{v} := {m}({e})}}"),
            UpdateAtom::Start { proc, arg, id } => write!(f, "{{startEv({proc}, {arg}, {id})}}"),
            UpdateAtom::Finish { proc, value, id } => {
                write!(f, "{{finishEv({proc}, {value}, {id})}}")
            }
        }
    }
}

/// An update sequence; the empty sequence is the identity.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Update(pub Vec<UpdateAtom>);

impl Update {
    pub fn empty() -> Self {
        Update(Vec::new())
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn then(&self, a: UpdateAtom) -> Update {
        let mut u = self.clone();
        u.0.push(a);
        u
    }

    pub fn map_exprs(&self, f: &dyn Fn(&Expr) -> Expr) -> Update {
        Update(self.0.iter().map(|a| a.map_exprs(f)).collect())
    }
}

impl fmt::Display for Update {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in &self.0 {
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

fn parse_event_args(c: &mut Cursor, sc: &Scoping) -> Result<(String, Expr, Expr), SyntaxError> {
    c.expect(&Tok::LParen)?;
    let m = c.ident()?;
    c.expect(&Tok::Comma)?;
    let e = parse_expr(c, sc)?;
    c.expect(&Tok::Comma)?;
    let i = parse_expr(c, sc)?;
    c.expect(&Tok::RParen)?;
    Ok((m, e, i))
}

pub fn parse_update_atom(c: &mut Cursor, sc: &Scoping) -> Result<UpdateAtom, SyntaxError> {
    c.expect(&Tok::LBrace)?;
    let atom = match c.peek().clone() {
        Tok::Ident(k) if k == "startEv" || k == "finishEv" => {
            c.bump();
            let (proc, e, id) = parse_event_args(c, sc)?;
            if k == "startEv" {
                UpdateAtom::Start { proc, arg: e, id }
            } else {
                UpdateAtom::Finish { proc, value: e, id }
            }
        }
        Tok::Ident(k) if k == "res" => {
            c.bump();
            c.expect(&Tok::LParen)?;
            let i = parse_expr(c, sc)?;
            c.expect(&Tok::RParen)?;
            c.expect(&Tok::Define)?;
            UpdateAtom::Assign(Lhs::Res(i), parse_expr(c, sc)?)
        }
        Tok::Ident(v) if !is_keyword(&v) => {
            c.bump();
            c.expect(&Tok::Define)?;
            match (c.peek().clone(), c.peek_at(1).clone()) {
                (Tok::Ident(m), Tok::LParen) if !is_keyword(&m) => {
                    c.bump();
                    c.bump();
                    let e = parse_expr(c, sc)?;
                    c.expect(&Tok::RParen)?;
                    UpdateAtom::Call(v, m, e)
                }
                _ => UpdateAtom::Assign(Lhs::Var(v), parse_expr(c, sc)?),
            }
        }
        _ => return Err(c.unexpected("update atom")),
    };
    c.expect(&Tok::RBrace)?;
    Ok(atom)
}

/// Whether the cursor is at the start of an update atom rather than a block.
pub fn at_update_atom(c: &Cursor) -> bool {
    if c.peek() != &Tok::LBrace {
        return false;
    }
    match (c.peek_at(1), c.peek_at(2)) {
        (Tok::Ident(k), _) if k == "startEv" || k == "finishEv" => true,
        (Tok::Ident(k), Tok::LParen) if k == "res" => true,
        (Tok::Ident(_), Tok::Define) => true,
        _ => false,
    }
}

pub fn parse_update(text: &str) -> Result<Update, SyntaxError> {
    let mut c = Cursor::new(text)?;
    let sc = Scoping::default();
    let mut atoms = Vec::new();
    while !c.at_eof() {
        atoms.push(parse_update_atom(&mut c, &sc)?);
    }
    Ok(Update(atoms))
}
