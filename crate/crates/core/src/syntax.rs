//! Tokenizer shared by the program, formula, update and script parsers.

use num_bigint::BigInt;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{pos}: {msg}")]
pub struct SyntaxError {
    pub pos: Pos,
    pub msg: String,
}

impl SyntaxError {
    pub fn new(pos: Pos, msg: impl Into<String>) -> Self {
        SyntaxError { pos, msg: msg.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(BigInt),
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Semi,
    Comma,
    Colon,
    Assign,
    Define,
    EqEq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Bang,
    AndAnd,
    OrOr,
    Dot,
    DotDot,
    StarStar,
    Wedge,
    Vee,
    At,
    Turnstile,
    /// `~m~`, `~m,q~` or `~~`
    Gap(Vec<String>),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tok::Ident(s) => return write!(f, "identifier `{s}`"),
            Tok::Int(v) => return write!(f, "integer `{v}`"),
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Semi => ";",
            Tok::Comma => ",",
            Tok::Colon => ":",
            Tok::Assign => "=",
            Tok::Define => ":=",
            Tok::EqEq => "==",
            Tok::Ne => "!=",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Bang => "!",
            Tok::AndAnd => "&&",
            Tok::OrOr => "||",
            Tok::Dot => ".",
            Tok::DotDot => "..",
            Tok::StarStar => "**",
            Tok::Wedge => "/\\",
            Tok::Vee => "\\/",
            Tok::At => "@",
            Tok::Turnstile => "|-",
            Tok::Gap(ps) => return write!(f, "`~{}~`", ps.join(",")),
            Tok::Eof => "end of input",
        };
        write!(f, "`{s}`")
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Identifiers of the form `res<digits>` collide with the serialized names of
/// result variables and are rejected everywhere.
pub fn is_reserved_res_name(s: &str) -> bool {
    s.len() > 3 && s.starts_with("res") && s[3..].chars().all(|c| c.is_ascii_digit())
}

pub fn tokenize(src: &str) -> Result<Vec<(Tok, Pos)>, SyntaxError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1;
    let mut col = 1;
    macro_rules! adv {
        ($n:expr) => {{
            for _ in 0..$n {
                if chars[i] == '\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
                i += 1;
            }
        }};
    }
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        let next = chars.get(i + 1).copied();
        if c.is_whitespace() {
            adv!(1);
            continue;
        }
        if c == '/' && next == Some('/') {
            while i < chars.len() && chars[i] != '\n' {
                adv!(1);
            }
            continue;
        }
        if is_ident_start(c) {
            let start = i;
            while i < chars.len() && is_ident_char(chars[i]) {
                adv!(1);
            }
            if i < chars.len() && chars[i] == '#' {
                adv!(1);
                let d0 = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    adv!(1);
                }
                if i == d0 {
                    return Err(SyntaxError::new(pos, "expected digits after `#`"));
                }
            }
            while i < chars.len() && chars[i] == '\'' {
                adv!(1);
            }
            let s: String = chars[start..i].iter().collect();
            if is_reserved_res_name(&s) {
                return Err(SyntaxError::new(
                    pos,
                    format!("`{s}` is reserved; write result variables as res(i)"),
                ));
            }
            out.push((Tok::Ident(s), pos));
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                adv!(1);
            }
            let s: String = chars[start..i].iter().collect();
            out.push((Tok::Int(s.parse().expect("digits")), pos));
            continue;
        }
        if c == '~' {
            adv!(1);
            let mut procs = Vec::new();
            let mut cur = String::new();
            loop {
                match chars.get(i) {
                    Some('~') => {
                        adv!(1);
                        break;
                    }
                    Some(',') => {
                        if cur.is_empty() {
                            return Err(SyntaxError::new(pos, "empty name in `~...~`"));
                        }
                        procs.push(std::mem::take(&mut cur));
                        adv!(1);
                    }
                    Some(ch) if is_ident_char(*ch) => {
                        cur.push(*ch);
                        adv!(1);
                    }
                    Some(ch) if ch.is_whitespace() => adv!(1),
                    _ => return Err(SyntaxError::new(pos, "unterminated `~...~`")),
                }
            }
            if !cur.is_empty() {
                procs.push(cur);
            } else if !procs.is_empty() {
                return Err(SyntaxError::new(pos, "empty name in `~...~`"));
            }
            out.push((Tok::Gap(procs), pos));
            continue;
        }
        let two = |a: char, b: char| c == a && next == Some(b);
        let (tok, n) = if two('=', '=') {
            (Tok::EqEq, 2)
        } else if two('!', '=') {
            (Tok::Ne, 2)
        } else if two('<', '=') {
            (Tok::Le, 2)
        } else if two('>', '=') {
            (Tok::Ge, 2)
        } else if two('&', '&') {
            (Tok::AndAnd, 2)
        } else if two('|', '|') {
            (Tok::OrOr, 2)
        } else if two('|', '-') {
            (Tok::Turnstile, 2)
        } else if two(':', '=') {
            (Tok::Define, 2)
        } else if two('.', '.') {
            (Tok::DotDot, 2)
        } else if two('*', '*') {
            (Tok::StarStar, 2)
        } else if two('/', '\\') {
            (Tok::Wedge, 2)
        } else if two('\\', '/') {
            (Tok::Vee, 2)
        } else {
            let t = match c {
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                '{' => Tok::LBrace,
                '}' => Tok::RBrace,
                '[' => Tok::LBracket,
                ']' => Tok::RBracket,
                ';' => Tok::Semi,
                ',' => Tok::Comma,
                ':' => Tok::Colon,
                '=' => Tok::Assign,
                '<' => Tok::Lt,
                '>' => Tok::Gt,
                '+' => Tok::Plus,
                '-' => Tok::Minus,
                '*' => Tok::Star,
                '!' => Tok::Bang,
                '.' => Tok::Dot,
                '@' => Tok::At,
                _ => {
                    return Err(SyntaxError::new(pos, format!("unexpected character `{c}`")));
                }
            };
            (t, 1)
        };
        adv!(n);
        out.push((tok, pos));
    }
    out.push((Tok::Eof, Pos { line, col }));
    Ok(out)
}

/// Cursor over a token vector with the usual helpers.
#[derive(Debug, Clone)]
pub struct Cursor {
    toks: Vec<(Tok, Pos)>,
    at: usize,
}

impl Cursor {
    pub fn new(src: &str) -> Result<Self, SyntaxError> {
        Ok(Cursor { toks: tokenize(src)?, at: 0 })
    }

    pub fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    pub fn peek_at(&self, k: usize) -> &Tok {
        let j = (self.at + k).min(self.toks.len() - 1);
        &self.toks[j].0
    }

    pub fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    pub fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    pub fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn expect(&mut self, t: &Tok) -> Result<(), SyntaxError> {
        if self.eat(t) {
            Ok(())
        } else {
            Err(self.unexpected(&t.to_string()))
        }
    }

    pub fn unexpected(&self, wanted: &str) -> SyntaxError {
        SyntaxError::new(self.pos(), format!("expected {wanted}, found {}", self.peek()))
    }

    pub fn ident(&mut self) -> Result<String, SyntaxError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    pub fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    pub fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    pub fn expect_eof(&self) -> Result<(), SyntaxError> {
        if self.at_eof() {
            Ok(())
        } else {
            Err(self.unexpected("end of input"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_primes_and_hash_names() {
        let toks = tokenize("k#3 = n'' // tail").unwrap();
        assert_eq!(toks[0].0, Tok::Ident("k#3".into()));
        assert_eq!(toks[1].0, Tok::Assign);
        assert_eq!(toks[2].0, Tok::Ident("n''".into()));
        assert_eq!(toks[3].0, Tok::Eof);
    }

    #[test]
    fn lexes_gaps() {
        let toks = tokenize("A ~m~ B ~~ C ~m,q~").unwrap();
        assert_eq!(toks[1].0, Tok::Gap(vec!["m".into()]));
        assert_eq!(toks[3].0, Tok::Gap(vec![]));
        assert_eq!(toks[5].0, Tok::Gap(vec!["m".into(), "q".into()]));
    }

    #[test]
    fn rejects_res_digits() {
        assert!(tokenize("res0 = 1").is_err());
        assert!(tokenize("res = 1").is_ok());
    }

    #[test]
    fn tracks_positions() {
        let toks = tokenize("a\n  b").unwrap();
        assert_eq!(toks[1].1, Pos { line: 2, col: 3 });
    }
}
