//! Random terminating programs.
//!
//! Procedures `p0, p1, ..` may call themselves only as `v = pj(k - 1)`
//! under `if (k > 0)`, and may call later procedures with argument 0 or 1.
//! Loops count a dedicated variable up to a small bound. With two
//! procedures and main passing at most 2, the call stack never exceeds
//! five frames.

use crate::lang::{BinOp, Expr, Lhs, ProcDecl, Program, Scope, Stmt};
use crate::syntax::Pos;
use crate::update::{Update, UpdateAtom};
use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Debug, Clone, Copy)]
pub struct GenConfig {
    pub procs: usize,
    pub max_stmts: usize,
    pub max_nesting: u32,
    pub max_main_arg: i64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig { procs: 2, max_stmts: 30, max_nesting: 2, max_main_arg: 2 }
    }
}

struct Ctx {
    /// index of the procedure being generated; `None` for main
    proc: Option<usize>,
    procs: usize,
    readable: Vec<String>,
    writable: Vec<String>,
    budget: usize,
    self_call_used: bool,
    loops: usize,
}

fn small_expr(rng: &mut impl Rng, ctx: &Ctx, depth: u32) -> Expr {
    if depth == 0 || rng.gen_bool(0.4) {
        return if !ctx.readable.is_empty() && rng.gen_bool(0.6) {
            Expr::var(ctx.readable.choose(rng).expect("non-empty"))
        } else {
            Expr::int(rng.gen_range(-2..=3))
        };
    }
    let op = *[BinOp::Add, BinOp::Sub, BinOp::Mul].choose(rng).expect("ops");
    Expr::bin(op, small_expr(rng, ctx, depth - 1), small_expr(rng, ctx, depth - 1))
}

fn cond(rng: &mut impl Rng, ctx: &Ctx) -> Expr {
    let op = *[BinOp::Eq, BinOp::Ne, BinOp::Lt, BinOp::Le, BinOp::Gt, BinOp::Ge].choose(rng).expect("ops");
    let c = Expr::bin(op, small_expr(rng, ctx, 1), small_expr(rng, ctx, 1));
    if rng.gen_bool(0.15) {
        Expr::not(c)
    } else {
        c
    }
}

fn call_stmt(rng: &mut impl Rng, ctx: &mut Ctx, target: String) -> Option<Stmt> {
    let first = ctx.proc.map_or(0, |p| p + 1);
    if first >= ctx.procs {
        return None;
    }
    let callee = rng.gen_range(first..ctx.procs);
    let arg = match ctx.proc {
        None => rng.gen_range(0..=2),
        Some(_) => rng.gen_range(0..=1),
    };
    Some(Stmt::Call(target, format!("p{callee}"), Expr::int(arg)))
}

fn stmt(rng: &mut impl Rng, ctx: &mut Ctx, nesting: u32) -> Stmt {
    ctx.budget = ctx.budget.saturating_sub(1);
    let target = ctx.writable.choose(rng).cloned();
    let roll = rng.gen_range(0..100);
    match (roll, target) {
        (0..=39, Some(x)) => Stmt::Assign(Lhs::Var(x), small_expr(rng, ctx, 2)),
        (40..=54, Some(x)) => call_stmt(rng, ctx, x.clone()).unwrap_or(Stmt::Assign(Lhs::Var(x), small_expr(rng, ctx, 1))),
        (55..=64, Some(x)) if ctx.proc.is_some() && !ctx.self_call_used => {
            ctx.self_call_used = true;
            ctx.budget = ctx.budget.saturating_sub(1);
            let me = ctx.proc.expect("in a procedure");
            let call = Stmt::Call(x, format!("p{me}"), Expr::bin(BinOp::Sub, Expr::var("k"), Expr::int(1)));
            Stmt::If(Expr::bin(BinOp::Gt, Expr::var("k"), Expr::int(0)), Box::new(call))
        }
        (65..=79, _) if nesting > 0 && ctx.budget > 1 => {
            let c = cond(rng, ctx);
            Stmt::If(c, Box::new(block(rng, ctx, nesting - 1, 2)))
        }
        (80..=89, _) if nesting > 0 && ctx.budget > 3 => {
            // scope, loop and increment
            ctx.budget -= 2;
            let w = format!("w{}", ctx.loops);
            ctx.loops += 1;
            let bound = rng.gen_range(0..=3);
            ctx.readable.push(w.clone());
            let body = block(rng, ctx, nesting - 1, 2);
            ctx.readable.pop();
            let inc = Stmt::assign(&w, Expr::bin(BinOp::Add, Expr::var(&w), Expr::int(1)));
            let lp = Stmt::While(
                Expr::bin(BinOp::Lt, Expr::var(&w), Expr::int(bound)),
                Box::new(Stmt::seq(body, inc)),
            );
            Stmt::scope(vec![w], lp)
        }
        (90..=99, _) if nesting > 0 && ctx.budget > 1 => {
            let l = format!("l{}", ctx.loops);
            ctx.loops += 1;
            ctx.readable.push(l.clone());
            ctx.writable.push(l.clone());
            let body = block(rng, ctx, nesting - 1, 2);
            ctx.readable.pop();
            ctx.writable.pop();
            Stmt::scope(vec![l], body)
        }
        _ => Stmt::Skip,
    }
}

fn block(rng: &mut impl Rng, ctx: &mut Ctx, nesting: u32, max: usize) -> Stmt {
    let n = rng.gen_range(1..=max.max(1));
    let mut items = Vec::new();
    for _ in 0..n {
        if ctx.budget == 0 {
            break;
        }
        items.push(stmt(rng, ctx, nesting));
    }
    if items.is_empty() {
        items.push(Stmt::Skip);
    }
    Stmt::seq_all(items)
}

/// A random well-formed terminating program.
pub fn gen_program(rng: &mut impl Rng, cfg: &GenConfig) -> Program {
    let per = (cfg.max_stmts / (cfg.procs + 1)).max(2);
    let mut procs = Vec::new();
    for j in 0..cfg.procs {
        let mut ctx = Ctx {
            proc: Some(j),
            procs: cfg.procs,
            readable: vec!["k".into(), "r".into(), "a".into()],
            writable: vec!["r".into(), "a".into()],
            budget: per - 1,
            self_call_used: false,
            loops: 0,
        };
        let body = block(rng, &mut ctx, cfg.max_nesting, 4);
        let body = Stmt::seq(body, Stmt::Return(Expr::var("r")));
        procs.push(ProcDecl {
            name: format!("p{j}"),
            param: "k".into(),
            body: Scope { decls: vec!["r".into(), "a".into()], body: Box::new(body) },
            pos: Pos::default(),
        });
    }
    let mut ctx = Ctx {
        proc: None,
        procs: cfg.procs,
        readable: vec!["x".into(), "y".into()],
        writable: vec!["x".into(), "y".into()],
        budget: per - 1,
        self_call_used: false,
        loops: 0,
    };
    let mut items = Vec::new();
    if cfg.procs > 0 {
        let arg = rng.gen_range(0..=cfg.max_main_arg);
        items.push(Stmt::Call("x".into(), "p0".into(), Expr::int(arg)));
    }
    items.push(block(rng, &mut ctx, cfg.max_nesting, 5));
    Program { procs, main_decls: vec!["x".into(), "y".into()], main_body: Stmt::seq_all(items) }
}

/// Top-level statements of a sequence.
pub fn seq_items(s: &Stmt) -> Vec<Stmt> {
    match s {
        Stmt::Seq(a, b) => {
            let mut v = seq_items(a);
            v.extend(seq_items(b));
            v
        }
        other => vec![other.clone()],
    }
}

/// A random update over `vars` that only calls procedures of `p`.
pub fn gen_update(rng: &mut impl Rng, p: &Program, vars: &[String], len: usize) -> Update {
    let mut atoms = Vec::new();
    let ctx = Ctx {
        proc: None,
        procs: p.procs.len(),
        readable: vars.to_vec(),
        writable: vars.to_vec(),
        budget: 0,
        self_call_used: false,
        loops: 0,
    };
    for _ in 0..len {
        let x = vars.choose(rng).expect("vars").clone();
        let atom = match rng.gen_range(0..10) {
            0..=5 => UpdateAtom::Assign(Lhs::Var(x), small_expr(rng, &ctx, 2)),
            6 => UpdateAtom::Assign(Lhs::Res(Expr::int(rng.gen_range(0..3))), small_expr(rng, &ctx, 1)),
            _ if !p.procs.is_empty() => {
                let m = p.procs.choose(rng).expect("procs").name.clone();
                UpdateAtom::Call(x, m, Expr::int(rng.gen_range(0..=1)))
            }
            _ => UpdateAtom::Assign(Lhs::Var(x), Expr::int(0)),
        };
        atoms.push(atom);
    }
    Update(atoms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::{run, DEFAULT_FUEL};
    use crate::lang::{parse_program, pretty_program, well_formed};
    use crate::trace::State;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn stmt_count(s: &Stmt) -> usize {
        match s {
            Stmt::Seq(a, b) => stmt_count(a) + stmt_count(b),
            Stmt::If(_, b) | Stmt::While(_, b) => 1 + stmt_count(b),
            Stmt::Scope(sc) => 1 + stmt_count(&sc.body),
            _ => 1,
        }
    }

    #[test]
    fn generated_programs_are_small_well_formed_and_terminate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let p = gen_program(&mut rng, &GenConfig::default());
            assert!(well_formed(&p).is_empty(), "{:?}\n{}", well_formed(&p), pretty_program(&p));
            let n: usize = stmt_count(&p.main_body) + p.procs.iter().map(|d| stmt_count(&d.body.body)).sum::<usize>();
            assert!(n <= 30, "{n} statements\n{}", pretty_program(&p));
            assert_eq!(parse_program(&pretty_program(&p)).unwrap(), p);
            let t = run(&p, &State::new(), DEFAULT_FUEL).unwrap();
            let mut depth = 0i32;
            let mut max = 0;
            for e in t.events() {
                match e {
                    crate::trace::Event::Push { .. } => depth += 1,
                    crate::trace::Event::Pop { .. } => depth -= 1,
                    _ => {}
                }
                max = max.max(depth);
            }
            assert!(max <= 5, "call depth {max}");
        }
    }
}
