//! `validate`: run a procedure on sampled arguments and check every trace
//! against the contract instance for that argument.

use crate::{fuel, load_contracts, load_program, read, EXIT_FUEL, EXIT_NEGATIVE, EXIT_OK, EXIT_OPEN};
use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use num_bigint::BigInt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::{Path, PathBuf};
use tracelet::calculus::{check_proof, prove_auto, Kernel, ProofFile};
use tracelet::interp::{run_call, InterpError};
use tracelet::lang::{Expr, LookupTable};
use tracelet::logic::{member, Bindings, ContractDecl, Formula};
use tracelet::trace::{trace_to_json_string, State};

#[derive(Args)]
pub struct ValidateArgs {
    program: PathBuf,
    contracts: PathBuf,
    /// Contract to validate; required when the file declares several.
    #[arg(long)]
    contract: Option<String>,
    #[arg(long, default_value_t = 26)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Inclusive argument range `lo..hi`.
    #[arg(long, default_value = "0..25", allow_hyphen_values = true)]
    range: String,
    /// Skip the proof requirement: a purely semantic check.
    #[arg(long)]
    no_proof: bool,
    /// Use this proof file instead of proving automatically.
    #[arg(long, conflicts_with = "no_proof")]
    proof: Option<PathBuf>,
    /// Write each sampled trace into this directory.
    #[arg(long)]
    trace_dir: Option<PathBuf>,
    #[arg(long)]
    fuel: Option<u64>,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    /// The precondition is false for this argument.
    Vacuous,
}

#[derive(Debug, Serialize)]
pub struct Sample {
    #[serde(serialize_with = "as_number")]
    pub n: BigInt,
    pub seed: u64,
    pub verdict: Verdict,
    pub trace: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct Counterexample {
    pub program: String,
    #[serde(serialize_with = "as_number")]
    pub n: BigInt,
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Serialize)]
pub struct ValidationReport {
    pub contract: String,
    pub proof: &'static str,
    pub samples: Vec<Sample>,
    pub overall: Verdict,
    pub counterexample: Option<Counterexample>,
}

fn as_number<S: serde::Serializer>(n: &BigInt, s: S) -> Result<S::Ok, S::Error> {
    let v: serde_json::Number = n.to_string().parse().map_err(serde::ser::Error::custom)?;
    v.serialize(s)
}

fn parse_range(s: &str) -> Result<(i64, i64)> {
    let (a, b) = s.split_once("..").ok_or_else(|| anyhow!("expected lo..hi, found `{s}`"))?;
    let lo: i64 = a.trim().parse().with_context(|| format!("bad range start `{a}`"))?;
    let hi: i64 = b.trim().parse().with_context(|| format!("bad range end `{b}`"))?;
    if lo > hi {
        bail!("empty range {s}");
    }
    Ok((lo, hi))
}

/// Every value when the range is small enough, otherwise a seeded sample
/// without replacement. Always ascending.
pub fn sample_values(lo: i64, hi: i64, samples: usize, seed: u64) -> Vec<i64> {
    let size = (hi - lo + 1) as usize;
    if samples >= size {
        return (lo..=hi).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<i64> = rand::seq::index::sample(&mut rng, size, samples).into_iter().map(|i| lo + i as i64).collect();
    v.sort_unstable();
    v
}

/// `Φ_m(n, 0) ** [res(0) == f(n)]`.
pub fn expected(d: &ContractDecl, n: &BigInt) -> Formula {
    let f = d.instantiate(&[Expr::Int(n.clone()), Expr::int(0)]);
    match &d.result {
        Some(r) => {
            let v = r.subst_sym(&d.params[0], &Expr::Int(n.clone()));
            Formula::chop(f, Formula::State(Expr::eq(Expr::res(Expr::int(0)), v)))
        }
        None => f,
    }
}

fn pre_holds(d: &ContractDecl, n: &BigInt) -> Result<bool> {
    match &d.pre {
        None => Ok(true),
        Some(p) => {
            let p = p.subst_sym(&d.params[0], &Expr::Int(n.clone()));
            p.eval_bool(&State::new()).map_err(|e| anyhow!("precondition of `{}`: {e}", d.proc))
        }
    }
}

enum Outcome {
    Done(Sample),
    Fuel(BigInt),
}

fn one(g: &LookupTable, d: &ContractDecl, n: i64, seed: u64, fuel: u64, dir: Option<&Path>) -> Result<Outcome> {
    let n = BigInt::from(n);
    let sample = |verdict, trace, reason| Sample { n: n.clone(), seed, verdict, trace, reason };
    if !pre_holds(d, &n)? {
        return Ok(Outcome::Done(sample(Verdict::Vacuous, None, None)));
    }
    let t = match run_call(g, &d.proc, n.clone(), &State::new(), fuel) {
        Ok(t) => t,
        Err(InterpError::FuelExhausted) => return Ok(Outcome::Fuel(n)),
        Err(e) => bail!("running {}({n}): {e}", d.proc),
    };
    let trace_ref = match dir {
        Some(dir) => {
            let p = dir.join(format!("{}_{n}.trace.json", d.proc));
            std::fs::write(&p, trace_to_json_string(&t)).with_context(|| format!("cannot write {}", p.display()))?;
            Some(p.display().to_string())
        }
        None => None,
    };
    let ok = member(&t, &expected(d, &n), &Bindings::new())?;
    Ok(Outcome::Done(if ok {
        sample(Verdict::Pass, trace_ref, None)
    } else {
        let got = t.last().and_then(|s| s.res(0).cloned());
        let reason = match got {
            Some(v) => format!("trace of {}({n}) is not in the contract (res(0) = {v})", d.proc),
            None => format!("trace of {}({n}) is not in the contract", d.proc),
        };
        sample(Verdict::Fail, trace_ref, Some(reason))
    }))
}

pub fn cmd_validate(a: ValidateArgs) -> Result<u8> {
    let p = load_program(&a.program)?;
    let cs = load_contracts(&a.contracts)?;
    let g = p.lookup_table();
    let d = match &a.contract {
        Some(m) => cs.iter().find(|c| &c.proc == m).ok_or_else(|| anyhow!("no contract for `{m}`"))?,
        None if cs.len() == 1 => &cs[0],
        None => bail!("{} declares several contracts; pick one with --contract", a.contracts.display()),
    };
    if g.get(&d.proc).is_err() {
        bail!("contract `{}` names an undeclared procedure", d.proc);
    }
    if d.params.len() != 2 {
        bail!("contract `{}` must have parameters (n, i)", d.proc);
    }
    let (lo, hi) = parse_range(&a.range)?;
    let fuel = fuel(a.fuel)?;

    let proof = if a.no_proof {
        "skipped"
    } else {
        let k = Kernel { g: &g, contracts: &cs, extensions: false };
        let closed = match &a.proof {
            Some(path) => {
                let f = ProofFile::from_json(&read(path)?).map_err(|e| anyhow!("{}: {e}", path.display()))?;
                let k = Kernel { extensions: f.extensions, ..k };
                f.proofs.iter().any(|t| t.contract == d.proc && check_proof(&k, t).is_ok())
            }
            None => prove_auto(&k, &d.proc).is_ok_and(|t| t.tree.is_closed()),
        };
        if !closed {
            eprintln!("no closed proof of contract `{}`; pass --no-proof for a purely semantic check", d.proc);
            return Ok(EXIT_OPEN);
        }
        "closed"
    };
    if let Some(dir) = &a.trace_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }

    let mut samples = Vec::new();
    for n in sample_values(lo, hi, a.samples, a.seed) {
        match one(&g, d, n, a.seed, fuel, a.trace_dir.as_deref())? {
            Outcome::Done(s) => samples.push(s),
            Outcome::Fuel(n) => {
                eprintln!("fuel exhausted running {}({n})", d.proc);
                return Ok(EXIT_FUEL);
            }
        }
    }
    let counterexample = samples.iter().find(|s| s.verdict == Verdict::Fail).map(|s| Counterexample {
        program: a.program.display().to_string(),
        n: s.n.clone(),
        seed: s.seed,
        reason: s.reason.clone().unwrap_or_default(),
    });
    let overall = if counterexample.is_some() { Verdict::Fail } else { Verdict::Pass };
    let report = ValidationReport { contract: d.proc.clone(), proof, samples, overall, counterexample };

    if a.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print_human(&report);
    }
    Ok(if overall == Verdict::Pass { EXIT_OK } else { EXIT_NEGATIVE })
}

fn print_human(r: &ValidationReport) {
    let count = |v| r.samples.iter().filter(|s| s.verdict == v).count();
    for s in &r.samples {
        let v = match s.verdict {
            Verdict::Pass => "pass",
            Verdict::Fail => "FAIL",
            Verdict::Vacuous => "vacuous",
        };
        println!("{}({}): {v}", r.contract, s.n);
    }
    let (pass, fail, vac) = (count(Verdict::Pass), count(Verdict::Fail), count(Verdict::Vacuous));
    if pass + fail == 0 {
        println!("note: no sampled argument satisfies the precondition");
    }
    match &r.counterexample {
        None => println!("contract {}: pass ({pass} passed, {vac} vacuous)", r.contract),
        Some(c) => {
            println!("contract {}: fail ({pass} passed, {fail} failed, {vac} vacuous)", r.contract);
            println!("counterexample: n={} seed={} program={}", c.n, c.seed, c.program);
            println!("  {}", c.reason);
        }
    }
}
