//! The object language: expressions, statements, programs, and the
//! procedure lookup table.

mod ast;
mod check;
mod expr;
mod parse;
mod pretty;

pub use ast::{lookup, Lhs, LookupTable, ProcDecl, Program, Scope, Stmt, UnknownProcedure};
pub use check::{well_formed, DiagKind, Diagnostic};
pub use expr::{res_name, BinOp, Env, EvalError, Expr, UnOp, Val};
pub use parse::{
    is_keyword, parse_block_body, parse_expr, parse_expr_text, parse_program, parse_stmt,
    parse_stmt_text, parse_stmts, Scoping,
};
pub use pretty::pretty_program;
