//! Trace semantics for a small recursive language, a fixed-point logic over
//! finite traces, and a symbolic-execution calculus whose proofs can be
//! replayed and checked against the interpreter.

pub mod lang;
pub mod syntax;
pub mod trace;
pub mod update;
pub mod interp;
pub mod logic;
pub mod calculus;
pub mod gen;
