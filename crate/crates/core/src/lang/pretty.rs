use super::ast::{Program, Scope, Stmt};
use std::fmt::{self, Write};

fn block_inline(f: &mut fmt::Formatter<'_>, decls: &[String], body: &Stmt) -> fmt::Result {
    write!(f, "{{ ")?;
    for d in decls {
        write!(f, "{d}; ")?;
    }
    write!(f, "{body} }}")
}

impl fmt::Display for Stmt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stmt::Skip => write!(f, "skip"),
            Stmt::Assign(l, e) => write!(f, "{l} = {e}"),
            Stmt::Call(x, m, e) => write!(f, "{x} = {m}({e})"),
            Stmt::If(c, s) => {
                write!(f, "if ({c}) ")?;
                block_inline(f, &[], s)
            }
            Stmt::While(c, s) => {
                write!(f, "while ({c}) ")?;
                block_inline(f, &[], s)
            }
            Stmt::Seq(a, b) => write!(f, "{a}; {b}"),
            Stmt::Scope(sc) => block_inline(f, &sc.decls, &sc.body),
            Stmt::Return(e) => write!(f, "return {e}"),
        }
    }
}

fn indent(out: &mut String, n: usize) {
    for _ in 0..n {
        out.push_str("  ");
    }
}

fn block_lines(out: &mut String, decls: &[String], body: &Stmt, depth: usize) {
    out.push_str("{\n");
    for d in decls {
        indent(out, depth + 1);
        let _ = writeln!(out, "{d};");
    }
    stmt_lines(out, body, depth + 1);
    out.push('\n');
    indent(out, depth);
    out.push('}');
}

fn stmt_lines(out: &mut String, s: &Stmt, depth: usize) {
    match s {
        Stmt::Seq(a, b) => {
            stmt_lines(out, a, depth);
            out.push_str(";\n");
            stmt_lines(out, b, depth);
        }
        Stmt::If(c, b) => {
            indent(out, depth);
            let _ = write!(out, "if ({c}) ");
            block_lines(out, &[], b, depth);
        }
        Stmt::While(c, b) => {
            indent(out, depth);
            let _ = write!(out, "while ({c}) ");
            block_lines(out, &[], b, depth);
        }
        Stmt::Scope(Scope { decls, body }) => {
            indent(out, depth);
            block_lines(out, decls, body, depth);
        }
        other => {
            indent(out, depth);
            let _ = write!(out, "{other}");
        }
    }
}

/// Multi-line rendering in `.tcp` syntax.
pub fn pretty_program(p: &Program) -> String {
    let mut out = String::new();
    for m in &p.procs {
        let _ = write!(out, "{}({}) ", m.name, m.param);
        block_lines(&mut out, &m.body.decls, &m.body.body, 0);
        out.push_str("\n\n");
    }
    out.push_str("main ");
    block_lines(&mut out, &p.main_decls, &p.main_body, 0);
    out.push('\n');
    out
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&pretty_program(self))
    }
}
