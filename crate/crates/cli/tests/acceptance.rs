//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p tracelet-cli --test acceptance -- --nocapture`
//! to see the lines.

use num_bigint::BigInt;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};
use tracelet::calculus::{check_proof, rule_names, Assertion, Goal, Kernel, ProofFile, ProofNode, ProofTree, Sequent};
use tracelet::gen::{gen_program, gen_update, seq_items, GenConfig};
use tracelet::interp::{initial_state, run, run_call, run_stmt, run_update_prefixed, DEFAULT_FUEL};
use tracelet::lang::{parse_program, BinOp, Env, EvalError, Expr, Program, Stmt, UnOp};
use tracelet::logic::{big_step_of, member, parse_contracts, running_spec, Bindings, ContractDecl, Formula};
use tracelet::trace::{chop, is_adequate, trace_from_json_str, Context, Entry, Event, Mode, State, Trace};

// ---------------------------------------------------------------- plumbing

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture(name: &str) -> PathBuf {
    root().join("fixtures").join(name)
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn tracelet(args: &[&str]) -> Out {
    let o = Command::new(env!("CARGO_BIN_EXE_tracelet")).args(args).output().expect("binary runs");
    Out {
        code: o.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&o.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
    }
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- golden traces

struct B(Vec<Entry>);

impl B {
    fn new(s: &State) -> B {
        B(vec![Entry::State(s.clone())])
    }
    fn ev(mut self, e: Event) -> B {
        let s = self.0.last().expect("non-empty").clone();
        self.0.push(Entry::Event(e));
        self.0.push(s);
        self
    }
    fn to(mut self, s: &State) -> B {
        self.0.push(Entry::State(s.clone()));
        self
    }
}

fn call(arg: i64, id: u64) -> Event {
    Event::Call { proc: "m".into(), arg: arg.into(), id }
}
fn push(id: u64) -> Event {
    Event::Push { proc: "m".into(), id }
}
fn pop(id: u64) -> Event {
    Event::Pop { proc: "m".into(), id }
}
fn ret(v: i64) -> Event {
    Event::Ret { val: v.into() }
}

/// The figure for x = m(1): σ1 binds m's local, σ2 the inner local, σ3 the
/// inner result, σ4/σ5 the outer `r = m(0)` and `r = r + 1`, σ6 the outer
/// result.
fn m1_expected() -> Trace {
    let s0 = State::from_pairs([("x", 0)]);
    let s1 = s0.with("r#0", 0.into());
    let s2 = s1.with("r#1", 0.into());
    let s3 = s2.with("res1", 0.into());
    let s4 = s3.with("r#0", 0.into());
    let s5 = s4.with("r#0", 1.into());
    let s6 = s5.with("res0", 1.into());
    let s7 = s6.with("x", 1.into());
    let b = B::new(&s0)
        .ev(call(1, 0))
        .ev(push(0))
        .to(&s1)
        .ev(call(0, 1))
        .ev(push(1))
        .to(&s2)
        .ev(ret(0))
        .to(&s3)
        .ev(pop(1))
        .to(&s4)
        .to(&s5)
        .ev(ret(1))
        .to(&s6)
        .ev(pop(0))
        .to(&s7);
    Trace(b.0)
}

/// x = m(0) with the appendix body: `r` declared, then `r = 0`.
fn m0_expected() -> Trace {
    let s = State::from_pairs([("x", 0)]);
    let s1 = s.with("r#0", 0.into());
    let s2 = s1.with("res0", 0.into());
    let s3 = s2.with("x", 0.into());
    Trace(B::new(&s).ev(call(0, 0)).ev(push(0)).to(&s1).to(&s1).ev(ret(0)).to(&s2).ev(pop(0)).to(&s3).0)
}

fn run_cli_trace(prog: &Path, dir: &Path, name: &str) -> Result<Trace, String> {
    let out = dir.join(name);
    let r = tracelet(&["run", p(prog), "--state", "x=0", "-o", p(&out)]);
    ensure(r.code == 0, || format!("run exited {}: {}", r.code, r.stderr))?;
    trace_from_json_str(&read(&out)).map_err(|e| e.to_string())
}

fn first_difference(a: &Trace, b: &Trace) -> String {
    let i = a.0.iter().zip(&b.0).position(|(x, y)| x != y).unwrap_or(a.len().min(b.len()));
    format!("first difference at entry {i} (lengths {} vs {})", a.len(), b.len())
}

fn criterion_1(dir: &Path) -> Check {
    let t = run_cli_trace(&fixture("running.tcp"), dir, "m1.trace.json")?;
    let want = m1_expected();
    ensure(t == want, || first_difference(&t, &want))?;
    Ok(format!("x=m(1) trace equals the figure entry for entry ({} entries)", t.len()))
}

fn criterion_2(dir: &Path) -> Check {
    let t = run_cli_trace(&fixture("running_variant.tcp"), dir, "m0.trace.json")?;
    let want = m0_expected();
    ensure(t == want, || format!("m(0): {}", first_difference(&t, &want)))?;

    let src = read(&fixture("running.tcp")).replace("x = m(1)", "x = m(2)");
    let prog = dir.join("m2.tcp");
    std::fs::write(&prog, src).map_err(|e| e.to_string())?;
    let t2 = run_cli_trace(&prog, dir, "m2.trace.json")?;
    let got: Vec<(String, Option<u64>)> = t2.events().map(|e| (format!("{:?}", e.kind()), e.id())).collect();
    let want: Vec<(String, Option<u64>)> =
        [call(2, 0), push(0), call(1, 1), push(1), call(0, 2), push(2), ret(0), pop(2), ret(1), pop(1), ret(2), pop(0)]
            .iter()
            .map(|e| (format!("{:?}", e.kind()), e.id()))
            .collect();
    ensure(got == want, || format!("m(2) skeleton {got:?}"))?;
    ensure(t2.last().and_then(|s| s.get("x")) == Some(&BigInt::from(2)), || "m(2) does not end with x = 2".into())?;
    Ok(format!("m(0) trace equals the listing ({} entries); m(2) skeleton matches", t.len()))
}

// ---------------------------------------------------------------- adequacy

fn set_state(t: &mut Trace, j: usize, s: State) {
    t.0[j] = Entry::State(s);
}

fn state_at(t: &Trace, j: usize) -> State {
    t.0[j].as_state().expect("state entry").clone()
}

fn index_of(t: &Trace, e: &Event) -> usize {
    t.0.iter().position(|x| x.as_event() == Some(e)).expect("event present")
}

/// Hand-made inadequate traces with the clause that rejects each in strict
/// and in lenient mode.
fn inadequate_corpus() -> Vec<(&'static str, Trace, u8, u8)> {
    let golden = m1_expected();
    let mut out = Vec::new();

    // second call reuses id 0
    let mut t = golden.clone();
    let j = index_of(&t, &call(0, 1));
    t.0[j] = Entry::Event(call(0, 0));
    let k = index_of(&t, &push(1));
    t.0[k] = Entry::Event(push(0));
    out.push(("duplicate call id", t, 2, 2));

    // two variables change in one state step
    let mut t = golden.clone();
    let j = t.0.iter().position(|e| e.as_state().is_some_and(|s| s.get("r#0").is_some())).unwrap();
    let s = state_at(&t, j).with("x", 7.into());
    set_state(&mut t, j, s.clone());
    out.push(("double update", t, 1, 1));

    // pushEv without its callEv
    let mut t = golden.clone();
    let j = index_of(&t, &call(0, 1));
    t.0.drain(j..j + 2);
    out.push(("push without call", t, 4, 4));

    // pop of the outer context while the inner one is active
    let mut t = golden.clone();
    let j = index_of(&t, &pop(1));
    t.0[j] = Entry::Event(pop(0));
    out.push(("pop in wrong context", t, 5, 5));

    // an event directly after callEv
    let mut t = golden.clone();
    let j = index_of(&t, &call(1, 0));
    let s = state_at(&t, j - 1);
    t.0.splice(j + 2..j + 2, [Entry::Event(call(5, 9)), Entry::State(s)]);
    out.push(("event after callEv", t, 2, 2));

    // retEv whose result binding is not followed by popEv; without the
    // pairing rule the next retEv is what breaks the return clause
    let mut t = golden.clone();
    let j = index_of(&t, &pop(1));
    t.0.drain(j..j + 2);
    out.push(("retEv not followed by popEv", t, 5, 3));

    // retEv directly after callEv
    let mut t = golden;
    let j = index_of(&t, &call(1, 0));
    let s = state_at(&t, j - 1);
    t.0.splice(j + 2..j + 2, [Entry::Event(ret(0)), Entry::State(s)]);
    out.push(("retEv after callEv", t, 3, 3));
    out
}

fn criterion_3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut entries = 0;
    for i in 0..500 {
        let prog = gen_program(&mut rng, &GenConfig::default());
        let t = run(&prog, &State::new(), DEFAULT_FUEL).map_err(|e| format!("program {i}: {e}"))?;
        entries += t.len();
        for mode in [Mode::Strict, Mode::Lenient] {
            let v = is_adequate(&t, mode);
            ensure(v.is_adequate(), || format!("program {i} ({mode:?}): {v}"))?;
        }
    }
    let corpus = inadequate_corpus();
    for (name, t, strict, lenient) in &corpus {
        let v = is_adequate(t, Mode::Strict);
        ensure(v.clause() == Some(*strict), || format!("{name}: expected clause {strict}, got {v}"))?;
        let l = is_adequate(t, Mode::Lenient);
        ensure(l.clause() == Some(*lenient), || format!("{name} (lenient): expected clause {lenient}, got {l}"))?;
    }
    Ok(format!("500 programs ({entries} entries) adequate in both modes; {} mutants rejected with the right clause", corpus.len()))
}

// ---------------------------------------------------------------- membership oracle

/// Depth-bounded fixed-point unfolding with brute-force split enumeration.
/// For contracts whose recursion is guarded by a startEv, unfolding depth
/// never exceeds the number of callEv entries, so the bound is exact.
struct Oracle<'t> {
    t: &'t [Entry],
    ctx: Vec<Context>,
    memo: HashMap<String, bool>,
}

#[derive(Clone)]
struct OEnv<'f> {
    beta: Bindings,
    rho: BTreeMap<String, (&'f Formula, Bindings)>,
}

struct Syms<'a>(&'a Bindings, Option<&'a State>);

impl Env for Syms<'_> {
    fn var(&self, n: &str) -> Option<BigInt> {
        self.1.and_then(|s| s.get(n).cloned())
    }
    fn sym(&self, n: &str) -> Option<BigInt> {
        self.0.get(n).cloned()
    }
}

impl<'t> Oracle<'t> {
    fn new(t: &'t Trace) -> Oracle<'t> {
        let mut stack: Vec<Context> = Vec::new();
        let mut ctx = Vec::new();
        for e in &t.0 {
            ctx.push(stack.last().cloned().unwrap_or(Context::Main));
            match e {
                Entry::Event(Event::Push { proc, id }) => stack.push(Context::Call(proc.clone(), *id)),
                Entry::Event(Event::Pop { .. }) => {
                    stack.pop();
                }
                _ => {}
            }
        }
        Oracle { t: &t.0, ctx, memo: HashMap::new() }
    }

    fn state(&self, j: usize) -> Option<&State> {
        self.t.get(j).and_then(Entry::as_state)
    }

    fn event(&self, j: usize) -> Option<&Event> {
        self.t.get(j).and_then(Entry::as_event)
    }

    fn blocked(&self, j: usize, ms: &[String]) -> bool {
        match self.event(j) {
            None => false,
            Some(Event::Ret { .. }) => matches!(&self.ctx[j], Context::Call(p, _) if ms.contains(p)),
            Some(e) => e.proc().is_some_and(|p| ms.iter().any(|m| m == p)),
        }
    }

    fn int(e: &Expr, beta: &Bindings) -> BigInt {
        e.eval_int(&Syms(beta, None)).expect("closed term")
    }

    fn args(&self, args: &[Expr], beta: &Bindings, a: usize, b: usize) -> Vec<Vec<BigInt>> {
        let mut out = vec![vec![]];
        for arg in args {
            let vals: Vec<BigInt> = match arg {
                Expr::Fresh(e) => {
                    let not = Self::int(e, beta);
                    let ids: BTreeSet<u64> = (a..=b).filter_map(|j| self.event(j).and_then(Event::id)).collect();
                    ids.into_iter().map(BigInt::from).filter(|v| *v != not).collect()
                }
                e => vec![Self::int(e, beta)],
            };
            out = out
                .into_iter()
                .flat_map(|pre| {
                    vals.iter().map(move |v| {
                        let mut p = pre.clone();
                        p.push(v.clone());
                        p
                    })
                })
                .collect();
        }
        out
    }

    fn enter<'f>(&mut self, mu: &'f Formula, base: &Bindings, env: &OEnv<'f>, vals: Vec<BigInt>, a: usize, b: usize, depth: usize) -> bool {
        let Formula::Mu { var, params, body, .. } = mu else { unreachable!() };
        let mut e = OEnv { beta: base.clone(), rho: env.rho.clone() };
        e.beta.extend(params.iter().cloned().zip(vals));
        e.rho.insert(var.clone(), (mu, base.clone()));
        self.sat(body, &e, a, b, depth - 1)
    }

    fn sat<'f>(&mut self, f: &'f Formula, env: &OEnv<'f>, a: usize, b: usize, depth: usize) -> bool {
        let key = format!("{:p}|{:?}|{:?}|{a}|{b}|{depth}", f, env.beta, env.rho.keys().collect::<Vec<_>>());
        if let Some(v) = self.memo.get(&key) {
            return *v;
        }
        let v = self.compute(f, env, a, b, depth);
        self.memo.insert(key, v);
        v
    }

    fn compute<'f>(&mut self, f: &'f Formula, env: &OEnv<'f>, a: usize, b: usize, depth: usize) -> bool {
        let beta = &env.beta;
        match f {
            Formula::State(pr) => match (a == b, self.state(a)) {
                (true, Some(s)) => match pr.eval_bool(&Syms(beta, Some(s))) {
                    Ok(v) => v,
                    Err(EvalError::UndefinedVariable(_)) => false,
                    Err(e) => panic!("{e}"),
                },
                _ => false,
            },
            Formula::Start { proc, arg, id } => {
                if b != a + 4 {
                    return false;
                }
                let v = Self::int(arg, beta);
                let Ok(i) = u64::try_from(Self::int(id, beta)) else { return false };
                let s = self.state(a);
                s.is_some()
                    && self.state(a + 2) == s
                    && self.state(a + 4) == s
                    && self.event(a + 1) == Some(&Event::Call { proc: proc.clone(), arg: v, id: i })
                    && self.event(a + 3) == Some(&Event::Push { proc: proc.clone(), id: i })
            }
            Formula::Finish { proc, value, id } => {
                if b != a + 5 {
                    return false;
                }
                let (v, i) = (Self::int(value, beta), Self::int(id, beta));
                let Ok(i) = u64::try_from(i) else { return false };
                let Some(s) = self.state(a) else { return false };
                let s2 = s.with(&format!("res{i}"), v.clone());
                self.state(a + 2) == Some(s)
                    && self.state(a + 3) == Some(&s2)
                    && self.state(a + 5) == Some(&s2)
                    && self.event(a + 1) == Some(&Event::Ret { val: v })
                    && self.event(a + 4) == Some(&Event::Pop { proc: proc.clone(), id: i })
            }
            Formula::NoEv(ms) => a == b && !self.blocked(a, ms),
            Formula::Gap(ms) => a <= b && (a..=b).all(|j| !self.blocked(j, ms)),
            Formula::And(x, y) => self.sat(x, env, a, b, depth) && self.sat(y, env, a, b, depth),
            Formula::Or(x, y) => self.sat(x, env, a, b, depth) || self.sat(y, env, a, b, depth),
            Formula::Chop(x, y) => {
                (a..=b).any(|k| self.state(k).is_some() && self.sat(x, env, a, k, depth) && self.sat(y, env, k, b, depth))
            }
            Formula::Concat(x, y) => (a..b).any(|k| self.sat(x, env, a, k, depth) && self.sat(y, env, k + 1, b, depth)),
            Formula::Mu { args, .. } => {
                if depth == 0 {
                    return false;
                }
                self.args(args, beta, a, b).into_iter().any(|vals| self.enter(f, beta, env, vals, a, b, depth))
            }
            Formula::App(x, args) => {
                if depth == 0 {
                    return false;
                }
                let (mu, base) = env.rho.get(x).cloned().expect("bound recursion variable");
                self.args(args, beta, a, b).into_iter().any(|vals| self.enter(mu, &base, env, vals, a, b, depth))
            }
        }
    }
}

fn oracle_member(t: &Trace, f: &Formula, beta: &Bindings) -> bool {
    let depth = t.events().filter(|e| matches!(e, Event::Call { .. })).count() + 2;
    let mut o = Oracle::new(t);
    let env = OEnv { beta: beta.clone(), rho: BTreeMap::new() };
    o.sat(f, &env, 0, t.len() - 1, depth)
}

fn running_program() -> Program {
    parse_program(&read(&fixture("running.tcp"))).expect("fixture parses")
}

fn running_contract() -> ContractDecl {
    parse_contracts(&read(&fixture("running.tcf"))).expect("fixture parses").remove(0)
}

/// Golden traces: the full runs, the variant's m(0) run and bare calls m(0..=3).
fn golden_corpus() -> Vec<Trace> {
    let p = running_program();
    let g = p.lookup_table();
    let mut out = vec![m1_expected(), m0_expected()];
    for n in 0..=3 {
        out.push(run_call(&g, "m", n.into(), &State::from_pairs([("x", 0)]), DEFAULT_FUEL).expect("terminates"));
    }
    out
}

fn mutate(t: &Trace, rng: &mut ChaCha8Rng) -> Trace {
    let mut t = t.clone();
    let states: Vec<usize> = (0..t.len()).filter(|&j| t.0[j].as_state().is_some()).collect();
    let events: Vec<usize> = (0..t.len()).filter(|&j| t.0[j].as_event().is_some()).collect();
    let bump = |v: &BigInt, rng: &mut ChaCha8Rng| v + BigInt::from(*[-1i64, 1, 2].choose(rng).expect("non-empty"));
    match rng.gen_range(0..7) {
        0 => {
            let j = *states.choose(rng).expect("states");
            let s = state_at(&t, j);
            let (k, v) = match s.0.iter().collect::<Vec<_>>().choose(rng) {
                Some((k, v)) => ((*k).clone(), bump(v, rng)),
                None => ("x".to_string(), BigInt::from(1)),
            };
            set_state(&mut t, j, s.with(&k, v));
        }
        1 if !events.is_empty() => {
            let j = *events.choose(rng).expect("events");
            let e = match t.0[j].as_event().expect("event").clone() {
                Event::Call { proc, arg, id } if rng.gen_bool(0.5) => Event::Call { proc, arg: bump(&arg, rng), id },
                Event::Call { proc, arg, id } => Event::Call { proc, arg, id: id + 1 },
                Event::Ret { val } => Event::Ret { val: bump(&val, rng) },
                Event::Push { proc, id } => Event::Push { proc, id: id + 1 },
                Event::Pop { proc, id } => Event::Pop { proc, id: id ^ 1 },
            };
            t.0[j] = Entry::Event(e);
        }
        2 if !events.is_empty() => {
            let j = *events.choose(rng).expect("events");
            t.0.drain(j..j + 2);
        }
        3 => {
            let j = *states.choose(rng).expect("states");
            t.0.truncate(j + 1);
        }
        4 => {
            let j = *states.choose(rng).expect("states");
            t.0.drain(..j);
        }
        5 => {
            let j = *states.choose(rng).expect("states");
            let e = t.0[j].clone();
            t.0.insert(j, e);
        }
        _ if events.len() >= 2 => {
            let a = *events.choose(rng).expect("events");
            let b = *events.choose(rng).expect("events");
            t.0.swap(a, b);
        }
        _ => {
            let j = *states.choose(rng).expect("states");
            let s = state_at(&t, j).with("x", 99.into());
            set_state(&mut t, j, s);
        }
    }
    t
}

fn corpus() -> Vec<Trace> {
    let golden = golden_corpus();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut out = golden.clone();
    let mut seen: BTreeSet<String> = golden.iter().map(|t| format!("{t:?}")).collect();
    while out.len() < golden.len() + 200 {
        let base = golden.choose(&mut rng).expect("golden");
        let mut m = mutate(base, &mut rng);
        if rng.gen_bool(0.3) {
            m = mutate(&m, &mut rng);
        }
        if seen.insert(format!("{m:?}")) {
            out.push(m);
        }
    }
    out
}

fn bindings() -> Vec<Bindings> {
    let mut out = Vec::new();
    for n in 0..=3 {
        for i in 0..=1 {
            out.push(BTreeMap::from([("n".to_string(), BigInt::from(n)), ("i".to_string(), BigInt::from(i))]));
        }
    }
    out
}

fn criterion_4() -> Check {
    let h = running_contract().body;
    let big = big_step_of(&running_spec());
    let traces = corpus();
    let (mut checks, mut positive) = (0, 0);
    for (ti, t) in traces.iter().enumerate() {
        for beta in bindings() {
            let mut verdicts = Vec::new();
            for (name, f) in [("contract", &h), ("big-step", &big)] {
                let fast = member(t, f, &beta).map_err(|e| format!("trace {ti}: {e}"))?;
                let slow = oracle_member(t, f, &beta);
                ensure(fast == slow, || format!("trace {ti}, {name}, {beta:?}: member {fast}, oracle {slow}\n{t:?}"))?;
                verdicts.push(fast);
                checks += 1;
            }
            if verdicts[0] {
                positive += 1;
                ensure(verdicts[1], || format!("trace {ti}, {beta:?}: in the contract but not in its big-step weakening"))?;
            }
        }
    }
    ensure(positive >= 4, || format!("only {positive} positive samples"))?;
    Ok(format!(
        "{} traces ({} golden + 200 mutants), {checks} verdicts agree with the split oracle; {positive} contract members all satisfy the big-step form",
        traces.len(),
        golden_corpus().len()
    ))
}

fn criterion_5() -> Check {
    let h = running_contract().body;
    let unfolded = h.unfold().ok_or("contract does not unfold")?;
    let mut checks = 0;
    for (ti, t) in corpus().iter().enumerate() {
        for beta in bindings() {
            let a = member(t, &h, &beta).map_err(|e| e.to_string())?;
            let b = member(t, &unfolded, &beta).map_err(|e| e.to_string())?;
            ensure(a == b, || format!("trace {ti}, {beta:?}: folded {a}, unfolded {b}"))?;
            checks += 1;
        }
    }
    Ok(format!("{checks} trace/binding pairs invariant under one unfolding"))
}

// ---------------------------------------------------------------- proof

/// Integer comparisons as `linear-form >= 0` or `== 0` with sorted atoms.
fn linear(e: &Expr) -> Option<BTreeMap<String, i64>> {
    let mut out = BTreeMap::new();
    fn go(e: &Expr, c: i64, out: &mut BTreeMap<String, i64>) -> Option<()> {
        match e {
            Expr::Int(v) => *out.entry(String::new()).or_default() += c * i64::try_from(v).ok()?,
            Expr::Var(_) | Expr::Sym(_) | Expr::Res(_) => *out.entry(e.to_string()).or_default() += c,
            Expr::Unary(UnOp::Neg, x) => go(x, -c, out)?,
            Expr::Binary(BinOp::Add, x, y) => {
                go(x, c, out)?;
                go(y, c, out)?;
            }
            Expr::Binary(BinOp::Sub, x, y) => {
                go(x, c, out)?;
                go(y, -c, out)?;
            }
            Expr::Binary(BinOp::Mul, x, y) => match (&**x, &**y) {
                (Expr::Int(k), t) | (t, Expr::Int(k)) => go(t, c * i64::try_from(k).ok()?, out)?,
                _ => return None,
            },
            _ => return None,
        }
        Some(())
    }
    go(e, 1, &mut out)?;
    out.retain(|_, v| *v != 0);
    Some(out)
}

fn render_linear(m: &BTreeMap<String, i64>, op: &str) -> Expr {
    let mut sum = Expr::int(*m.get("").unwrap_or(&0));
    for (k, v) in m.iter().filter(|(k, _)| !k.is_empty()) {
        sum = Expr::bin(BinOp::Add, sum, Expr::bin(BinOp::Mul, Expr::int(*v), Expr::Var(format!("<{k}>"))));
    }
    let op = if op == "==" { BinOp::Eq } else { BinOp::Ge };
    Expr::bin(op, sum, Expr::int(0))
}

fn canon_cmp(e: &Expr) -> Option<Expr> {
    let Expr::Binary(op, x, y) = e else { return None };
    let diff = |l: &Expr, r: &Expr| linear(&Expr::bin(BinOp::Sub, l.clone(), r.clone()));
    let shift = |mut m: BTreeMap<String, i64>, d: i64| {
        *m.entry(String::new()).or_default() += d;
        m.retain(|_, v| *v != 0);
        m
    };
    match op {
        BinOp::Ge => Some(render_linear(&diff(x, y)?, ">=")),
        BinOp::Le => Some(render_linear(&diff(y, x)?, ">=")),
        BinOp::Gt => Some(render_linear(&shift(diff(x, y)?, -1), ">=")),
        BinOp::Lt => Some(render_linear(&shift(diff(y, x)?, -1), ">=")),
        BinOp::Eq => {
            let mut m = diff(x, y)?;
            if m.iter().find(|(k, _)| !k.is_empty()).is_some_and(|(_, v)| *v < 0) {
                m.values_mut().for_each(|v| *v = -*v);
            }
            Some(render_linear(&m, "=="))
        }
        _ => None,
    }
}

fn canon_expr(e: &Expr) -> Expr {
    e.map(&canon_cmp)
}

/// Rigid symbols renamed in order of first appearance; generated local
/// names lose their `#k` suffix.
fn rename(text: &str) -> String {
    let cs: Vec<char> = text.chars().collect();
    let mut out = String::new();
    let mut names: HashMap<String, usize> = HashMap::new();
    let mut i = 0;
    while i < cs.len() {
        if cs[i].is_alphabetic() || cs[i] == '_' {
            let start = i;
            while i < cs.len() && (cs[i].is_alphanumeric() || cs[i] == '_') {
                i += 1;
            }
            let word: String = cs[start..i].iter().collect();
            if i < cs.len() && cs[i] == '\'' {
                i += 1;
                let k = names.len();
                let k = *names.entry(word).or_insert(k);
                out.push_str(&format!("$r{k}"));
            } else if i < cs.len() && cs[i] == '#' {
                i += 1;
                while i < cs.len() && cs[i].is_ascii_digit() {
                    i += 1;
                }
                out.push_str(&word);
            } else {
                out.push_str(&word);
            }
        } else {
            out.push(cs[i]);
            i += 1;
        }
    }
    out
}

fn normal_form(s: &Sequent) -> String {
    let gamma: Vec<String> = s
        .gamma
        .iter()
        .map(|a| match a {
            Assertion::Pred(e) => canon_expr(e).to_string(),
            other => other.to_string(),
        })
        .collect();
    let goal = match &s.goal {
        Goal::Pred(e) => canon_expr(e).to_string(),
        Goal::Judgment(j) => {
            let f = j.formula.map_exprs(&canon_expr);
            format!("{} {:?} : {f}", j.update, j.stmt.as_ref().map(|x| x.to_string()))
        }
        other => other.to_string(),
    };
    rename(&format!("{} |- {goal}", gamma.join(", ")))
}

fn sequent(json: Value) -> Sequent {
    serde_json::from_value(json).expect("expected sequent parses")
}

/// The three sequents of the worked trace-abstraction step. The callee's
/// result is `res(k')` for the fresh callee id (printed as `res_{i'}`
/// there), the finishEv id is the caller's `i'` (printed as `0`), the local
/// `r` is the program variable the body declares, and the final state
/// formula is chopped onto finishEv.
fn reference_trabs_children() -> Vec<Sequent> {
    vec![
        sequent(serde_json::json!({
            "gamma": ["n' > 0"],
            "goal": {"judgment": {"update": "{startEv(m, n', i')}", "stmt": null,
                                  "formula": "[n' > 0] ** startEv(m, n', i') ~m~"}}
        })),
        sequent(serde_json::json!({"gamma": ["n' > 0"], "goal": {"pred": "n' > 0"}})),
        sequent(serde_json::json!({
            "gamma": ["res(k') == n' - 1"],
            "goal": {"judgment": {
                "update": "{r := res(k')}{r := r + 1}{finishEv(m, r, i')}{res(i') := r}", "stmt": null,
                "formula": "~m~ finishEv(m, n', i') ** [res(i') == n']"}}
        })),
    ]
}

fn mutate_proof(t: &ProofTree, rng: &mut ChaCha8Rng) -> ProofTree {
    let names: Vec<&str> = rule_names().collect();
    loop {
        let mut m = t.clone();
        let paths: Vec<Vec<usize>> = m.tree.nodes().into_iter().map(|(p, _)| p).collect();
        let path = paths.choose(rng).expect("nodes").clone();
        let n: &mut ProofNode = m.tree.at_mut(&path).expect("path");
        match rng.gen_range(0..9) {
            0 => {
                let r = n.rule.as_mut().expect("closed tree");
                r.name = names.choose(rng).expect("rules").to_string();
            }
            1 => {
                let r = n.rule.as_mut().expect("closed tree");
                let Some(k) = r.args.keys().next().cloned() else { continue };
                r.args.remove(&k);
            }
            2 => {
                let r = n.rule.as_mut().expect("closed tree");
                r.args.insert("bogus".into(), "1".into());
            }
            3 => {
                let r = n.rule.as_mut().expect("closed tree");
                let keys: Vec<String> = r.args.keys().cloned().collect();
                let Some(k) = keys.choose(rng) else { continue };
                let v = r.args[k].clone();
                let nv = match v.parse::<i64>() {
                    Ok(x) => (x + rng.gen_range(1..3)).to_string(),
                    Err(_) => format!("{v}x"),
                };
                r.args.insert(k.clone(), nv);
            }
            4 => {
                if n.children.is_empty() {
                    continue;
                }
                let i = rng.gen_range(0..n.children.len());
                n.children.remove(i);
            }
            5 => {
                let Some(c) = n.children.choose(rng).cloned() else { continue };
                n.children.push(c);
            }
            6 => {
                if n.children.len() < 2 {
                    continue;
                }
                n.children.swap(0, 1);
            }
            7 => {
                n.rule = None;
                n.children.clear();
            }
            _ => {
                n.sequent.gamma.push(Assertion::Pred(Expr::bin(BinOp::Ge, Expr::sym("q'"), Expr::int(0))));
            }
        }
        if m != *t {
            return m;
        }
    }
}

fn criterion_6(dir: &Path) -> Check {
    let out = dir.join("running.proof.json");
    let r = tracelet(&["prove", p(&fixture("running.tcp")), p(&fixture("running.tcf")), "--auto", "-o", p(&out)]);
    ensure(r.code == 0, || format!("prove --auto exited {}: {}{}", r.code, r.stdout, r.stderr))?;
    let file = ProofFile::from_json(&read(&out))?;
    let proof = file.proofs.first().ok_or("no proof in file")?.clone();
    ensure(proof.tree.is_closed(), || "tree has open goals".into())?;

    let used: BTreeSet<String> = proof.tree.rules_used().into_iter().collect();
    for need in ["ProcedureContract", "VarDecl", "Assign", "Cond", "Return", "Unfold", "Prestate", "TrAbs"] {
        ensure(used.contains(need), || format!("rule {need} not used; used {used:?}"))?;
    }

    let trabs = proof
        .tree
        .nodes()
        .into_iter()
        .map(|(_, n)| n)
        .find(|n| n.rule.as_ref().is_some_and(|r| r.name == "TrAbs"))
        .ok_or("no TrAbs node")?;
    let got: Vec<String> = trabs.children.iter().map(|c| normal_form(&c.sequent)).collect();
    let want: Vec<String> = reference_trabs_children().iter().map(normal_form).collect();
    ensure(got == want, || format!("TrAbs children differ:\n got  {got:#?}\n want {want:#?}"))?;

    let c = tracelet(&["check-proof", p(&fixture("running.tcp")), p(&fixture("running.tcf")), p(&out)]);
    ensure(c.code == 0, || format!("check-proof exited {}: {}", c.code, c.stdout))?;

    let prog = running_program();
    let g = prog.lookup_table();
    let cs = vec![running_contract()];
    let k = Kernel { g: &g, contracts: &cs, extensions: file.extensions };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..100 {
        let m = mutate_proof(&proof, &mut rng);
        ensure(check_proof(&k, &m).is_err(), || format!("mutation {i} accepted:\n{}", m.tree.render()))?;
    }
    Ok(format!(
        "auto proof closed ({} nodes, {} distinct rules); TrAbs children match; check-proof accepts; 100/100 mutations rejected",
        proof.tree.size(),
        used.len()
    ))
}

// ---------------------------------------------------------------- validation

fn criterion_7(dir: &Path) -> Check {
    let proof = dir.join("running.proof.json");
    let args = ["--samples", "26", "--range", "0..25", "--json"];
    let (prog, plus2, tcf) = (fixture("running.tcp"), fixture("running_plus2.tcp"), fixture("running.tcf"));
    let mut a = vec!["validate", p(&prog), p(&tcf), "--proof", p(&proof)];
    a.extend(args);
    let r = tracelet(&a);
    ensure(r.code == 0, || format!("validate exited {}: {}{}", r.code, r.stdout, r.stderr))?;
    let v: Value = serde_json::from_str(&r.stdout).map_err(|e| e.to_string())?;
    let samples = v["samples"].as_array().ok_or("no samples")?;
    ensure(samples.len() == 26, || format!("{} samples", samples.len()))?;
    ensure(samples.iter().all(|s| s["verdict"] == "pass"), || "a sample did not pass".into())?;

    // results equal the argument, independently of the contract check
    let running = running_program();
    let g = running.lookup_table();
    for n in 0..=25 {
        let t = run_call(&g, "m", n.into(), &State::new(), DEFAULT_FUEL).map_err(|e| e.to_string())?;
        ensure(t.last().and_then(|s| s.res(0)) == Some(&BigInt::from(n)), || format!("m({n}) does not return {n}"))?;
    }

    let mut a = vec!["validate", p(&plus2), p(&tcf), "--no-proof"];
    a.extend(args);
    let r = tracelet(&a);
    ensure(r.code == 3, || format!("mutant: validate exited {}: {}", r.code, r.stderr))?;
    let v: Value = serde_json::from_str(&r.stdout).map_err(|e| e.to_string())?;
    ensure(v["overall"] == "fail", || "mutant passed".into())?;
    let n = &v["counterexample"]["n"];
    ensure(*n == serde_json::json!(1), || format!("counterexample n = {n}"))?;
    ensure(v["counterexample"]["seed"] == serde_json::json!(0), || "counterexample lacks the seed".into())?;
    Ok("26/26 samples pass with the closed proof; r = r + 2 mutant fails first at n = 1".into())
}

// ---------------------------------------------------------------- composition

fn criterion_8() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut seq, mut upd) = (0, 0);
    while seq < 500 || upd < 500 {
        let prog = gen_program(&mut rng, &GenConfig::default());
        let g = prog.lookup_table();
        let tau = Trace::singleton(initial_state(&prog, &State::new()));
        let items = seq_items(&prog.main_body);
        if seq < 500 && items.len() >= 2 {
            let k = rng.gen_range(1..items.len());
            let (r, s) = (Stmt::seq_all(items[..k].to_vec()), Stmt::seq_all(items[k..].to_vec()));
            let whole = run_stmt(&prog.main_body, &tau, &g, DEFAULT_FUEL).map_err(|e| e.to_string())?;
            let e1 = run_stmt(&r, &tau, &g, DEFAULT_FUEL).map_err(|e| e.to_string())?;
            let tau1 = chop(&tau, &e1).map_err(|e| e.to_string())?;
            let e2 = run_stmt(&s, &tau1, &g, DEFAULT_FUEL).map_err(|e| e.to_string())?;
            ensure(whole == chop(&e1, &e2).map_err(|e| e.to_string())?, || format!("r;s split {seq} differs"))?;
            seq += 1;
        }
        if upd < 500 {
            let len = rng.gen_range(0..5);
            let u = gen_update(&mut rng, &prog, &prog.main_decls, len);
            let s = &prog.main_body;
            let whole = run_update_prefixed(&u, Some(s), &tau, &g, DEFAULT_FUEL).map_err(|e| e.to_string())?;
            let eu = run_update_prefixed(&u, None, &tau, &g, DEFAULT_FUEL).map_err(|e| e.to_string())?;
            let tau1 = chop(&tau, &eu).map_err(|e| e.to_string())?;
            let es = run_stmt(s, &tau1, &g, DEFAULT_FUEL).map_err(|e| e.to_string())?;
            ensure(whole == chop(&eu, &es).map_err(|e| e.to_string())?, || format!("U s split {upd} differs"))?;
            upd += 1;
        }
    }

    let mut pairs = 0;
    while pairs < 1000 {
        let prog = gen_program(&mut rng, &GenConfig::default());
        let t = run(&prog, &State::new(), DEFAULT_FUEL).map_err(|e| e.to_string())?;
        let states: Vec<usize> = (0..t.len()).filter(|&j| t.0[j].as_state().is_some()).collect();
        for _ in 0..10 {
            let mut i = *states.choose(&mut rng).expect("states");
            let mut j = *states.choose(&mut rng).expect("states");
            if i > j {
                std::mem::swap(&mut i, &mut j);
            }
            let t1 = Trace(t.0[..=i].to_vec());
            let t2 = Trace(t.0[i..=j].to_vec());
            let t3 = Trace(t.0[j..].to_vec());
            let c = |a: &Trace, b: &Trace| chop(a, b).map_err(|e| e.to_string());
            let left = c(&c(&t1, &t2)?, &t3)?;
            let right = c(&t1, &c(&t2, &t3)?)?;
            ensure(left == right && left == t, || format!("associativity fails on pair {pairs}"))?;
            let first = Trace::singleton(t2.first().expect("state").clone());
            let last = Trace::singleton(t2.last().expect("state").clone());
            ensure(c(&first, &t2)? == t2 && c(&t2, &last)? == t2, || format!("identity fails on pair {pairs}"))?;
            pairs += 1;
        }
    }
    Ok(format!("{seq} r;s splits and {upd} U s splits decompose; {pairs} chop pairs associative with identities"))
}

// ---------------------------------------------------------------- driver

#[test]
fn acceptance() {
    let dir = tempfile::tempdir().expect("temp dir");
    let d = dir.path();
    type Crit<'a> = (u8, Duration, Box<dyn Fn() -> Check + 'a>);
    let criteria: Vec<Crit> = vec![
        (1, Duration::from_secs(1), Box::new(|| criterion_1(d))),
        (2, Duration::from_secs(1), Box::new(|| criterion_2(d))),
        (3, Duration::from_secs(60), Box::new(criterion_3)),
        (4, Duration::from_secs(120), Box::new(criterion_4)),
        (5, Duration::from_secs(30), Box::new(criterion_5)),
        (6, Duration::from_secs(30), Box::new(|| criterion_6(d))),
        (7, Duration::from_secs(60), Box::new(|| criterion_7(d))),
        (8, Duration::from_secs(60), Box::new(criterion_8)),
    ];
    let mut failed = Vec::new();
    for (n, limit, f) in criteria {
        let start = Instant::now();
        let r = f();
        let took = start.elapsed();
        let r = match r {
            Ok(msg) if took > limit => Err(format!("{msg}; took {took:.2?}, limit {limit:?}")),
            other => other,
        };
        match r {
            Ok(msg) => println!("criterion {n}: PASS  {msg} [{took:.2?}]"),
            Err(msg) => {
                println!("criterion {n}: FAIL  {msg} [{took:.2?}]");
                failed.push(n);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
