//! `tracelet`: run programs, check traces and formulas, prove and validate
//! procedure contracts.
//!
//! Exit codes: 0 success, 1 error, 2 fuel exhausted, 3 negative verdict
//! (not adequate, not a member, proof rejected, validation failed), 4 open
//! goals or missing proof.

mod validate;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use num_bigint::BigInt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use tracelet::calculus::{
    apply_step, check_proof, parse_script, prove_auto, run_repl, AutoError, Kernel, ProofFile, ProofNode,
    ProofTree, Sequent,
};
use tracelet::interp::{run, run_call, InterpError, DEFAULT_FUEL};
use tracelet::lang::{parse_expr_text, parse_program, well_formed, Program, Scoping};
use tracelet::logic::{
    big_step_of, explain_failure, make_contract, member, parse_contracts, parse_formula_file, parse_formula_in,
    running_spec, Bindings, ContractDecl, ContractSpec, FormulaFile,
};
use tracelet::trace::{is_adequate, trace_from_json_str, trace_to_json_string, Mode, State};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_FUEL: u8 = 2;
pub const EXIT_NEGATIVE: u8 = 3;
pub const EXIT_OPEN: u8 = 4;

#[derive(Parser)]
#[command(name = "tracelet", version, about = "Trace semantics, trace contracts and their proofs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a program and write its trace.
    Run(RunArgs),
    /// Check a trace for adequacy.
    Adequacy {
        trace: PathBuf,
        /// Only the literal clauses, without call/push and ret/pop pairing.
        #[arg(long)]
        lenient: bool,
    },
    /// Check whether a trace belongs to a formula.
    Check {
        trace: PathBuf,
        formula: PathBuf,
        /// Logical variable bindings, e.g. `n=1`.
        #[arg(long = "bind", value_name = "NAME=INT")]
        bind: Vec<String>,
        /// Contract to use when the formula file declares several.
        #[arg(long)]
        contract: Option<String>,
    },
    /// Print a contract built from pre/postcondition data.
    GenContract(GenArgs),
    /// Prove procedure contracts.
    Prove(ProveArgs),
    /// Replay and check a proof file.
    CheckProof {
        program: PathBuf,
        contracts: PathBuf,
        proof: PathBuf,
    },
    /// Run a procedure on sampled arguments and check each trace against its contract.
    Validate(validate::ValidateArgs),
}

#[derive(Args)]
struct RunArgs {
    program: PathBuf,
    /// Initial bindings, e.g. `x=0`.
    #[arg(long = "state", value_name = "VAR=INT")]
    state: Vec<String>,
    /// Output file; `-` for stdout. Defaults to the program path with `.trace.json`.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    fuel: Option<u64>,
    /// Run the bare call `PROC(ARG)` instead of main.
    #[arg(long, value_name = "PROC")]
    call: Option<String>,
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    arg: i64,
}

#[derive(Args)]
struct GenArgs {
    /// Procedure name; without it the running example's data is used.
    #[arg(long)]
    proc: Option<String>,
    #[arg(long, default_value = "n == 0")]
    pre_base: String,
    #[arg(long, default_value = "n > 0")]
    pre_step: String,
    /// Result term f(n).
    #[arg(long, default_value = "n")]
    result: String,
    /// Argument of the recursive call.
    #[arg(long, default_value = "n - 1")]
    step_arg: String,
    /// Print the big-step weakening instead of the contract.
    #[arg(long)]
    big_step: bool,
}

#[derive(Args)]
struct ProveArgs {
    program: PathBuf,
    contracts: PathBuf,
    #[arg(long, conflicts_with_all = ["script", "repl"])]
    auto: bool,
    /// Proof script (`.tps`).
    #[arg(long, conflicts_with = "repl")]
    script: Option<PathBuf>,
    #[arg(long)]
    repl: bool,
    /// Allow the extension rules.
    #[arg(long)]
    extensions: bool,
    /// Prove only this contract.
    #[arg(long)]
    contract: Option<String>,
    /// Output file. Defaults to the program path with `.proof.json`.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match dispatch(cli.cmd) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    };
    ExitCode::from(code)
}

fn dispatch(cmd: Cmd) -> Result<u8> {
    match cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Adequacy { trace, lenient } => cmd_adequacy(&trace, lenient),
        Cmd::Check { trace, formula, bind, contract } => cmd_check(&trace, &formula, &bind, contract.as_deref()),
        Cmd::GenContract(a) => cmd_gen_contract(a),
        Cmd::Prove(a) => cmd_prove(a),
        Cmd::CheckProof { program, contracts, proof } => cmd_check_proof(&program, &contracts, &proof),
        Cmd::Validate(a) => validate::cmd_validate(a),
    }
}

// ---------------------------------------------------------------- helpers

pub fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

pub fn load_program(path: &Path) -> Result<Program> {
    let p = parse_program(&read(path)?).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    let diags = well_formed(&p);
    if !diags.is_empty() {
        let lines: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
        bail!("{} is not well-formed:\n  {}", path.display(), lines.join("\n  "));
    }
    Ok(p)
}

pub fn load_contracts(path: &Path) -> Result<Vec<ContractDecl>> {
    parse_contracts(&read(path)?).map_err(|e| anyhow!("{}: {e}", path.display()))
}

/// `--fuel`, else `TRACELET_FUEL`, else the default.
pub fn fuel(flag: Option<u64>) -> Result<u64> {
    let f = match flag {
        Some(f) => f,
        None => match std::env::var("TRACELET_FUEL") {
            Ok(v) => v.trim().parse().with_context(|| format!("TRACELET_FUEL=`{v}` is not a number"))?,
            Err(_) => DEFAULT_FUEL,
        },
    };
    if f == 0 {
        bail!("fuel must be at least 1");
    }
    Ok(f)
}

fn binding(s: &str) -> Result<(String, BigInt)> {
    let (k, v) = s.split_once('=').ok_or_else(|| anyhow!("expected NAME=INT, found `{s}`"))?;
    let v: BigInt = v.trim().parse().with_context(|| format!("`{v}` is not an integer"))?;
    Ok((k.trim().to_string(), v))
}

fn with_ext(p: &Path, ext: &str) -> PathBuf {
    let stem = p.file_stem().map(|s| s.to_string_lossy().to_string()).unwrap_or_default();
    p.with_file_name(format!("{stem}.{ext}"))
}

fn write_out(path: &Path, text: &str) -> Result<()> {
    if path == Path::new("-") {
        print!("{text}");
        return Ok(());
    }
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

// ---------------------------------------------------------------- commands

fn cmd_run(a: RunArgs) -> Result<u8> {
    let p = load_program(&a.program)?;
    let mut s = State::new();
    for b in &a.state {
        let (k, v) = binding(b)?;
        s.set(&k, v);
    }
    let fuel = fuel(a.fuel)?;
    let r = match &a.call {
        Some(m) => run_call(&p.lookup_table(), m, BigInt::from(a.arg), &s, fuel),
        None => run(&p, &s, fuel),
    };
    let t = match r {
        Ok(t) => t,
        Err(InterpError::FuelExhausted) => {
            eprintln!("fuel exhausted after {fuel} steps");
            return Ok(EXIT_FUEL);
        }
        Err(e) => bail!(e),
    };
    let out = a.out.unwrap_or_else(|| with_ext(&a.program, "trace.json"));
    write_out(&out, &trace_to_json_string(&t))?;
    Ok(EXIT_OK)
}

fn cmd_adequacy(path: &Path, lenient: bool) -> Result<u8> {
    let t = trace_from_json_str(&read(path)?).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    let v = is_adequate(&t, if lenient { Mode::Lenient } else { Mode::Strict });
    println!("{v}");
    Ok(if v.is_adequate() { EXIT_OK } else { EXIT_NEGATIVE })
}

fn cmd_check(trace: &Path, formula: &Path, bind: &[String], contract: Option<&str>) -> Result<u8> {
    let t = trace_from_json_str(&read(trace)?).map_err(|e| anyhow!("{}: {e}", trace.display()))?;
    let beta: Bindings = bind.iter().map(|b| binding(b)).collect::<Result<_>>()?;
    let text = read(formula)?;
    let f = match parse_formula_file(&text).map_err(|e| anyhow!("{}: {e}", formula.display()))? {
        FormulaFile::Contracts(cs) => {
            let d = match contract {
                Some(m) => cs.iter().find(|c| c.proc == m).ok_or_else(|| anyhow!("no contract for `{m}`"))?,
                None if cs.len() == 1 => &cs[0],
                None => bail!("{} declares several contracts; pick one with --contract", formula.display()),
            };
            d.body.clone()
        }
        // bound names are logical variables of a bare formula
        FormulaFile::Formula(_) => {
            let names: Vec<String> = beta.keys().cloned().collect();
            parse_formula_in(&text, &names).map_err(|e| anyhow!("{}: {e}", formula.display()))?
        }
    };
    if member(&t, &f, &beta)? {
        println!("member");
        return Ok(EXIT_OK);
    }
    println!("not a member");
    for l in explain_failure(&t, &f, &beta, 0, t.len() - 1)? {
        println!("  {l}");
    }
    Ok(EXIT_NEGATIVE)
}

fn cmd_gen_contract(a: GenArgs) -> Result<u8> {
    let spec = match &a.proc {
        None => running_spec(),
        Some(m) => {
            let sc = Scoping::default().with(&["n".to_string()]);
            let e = |t: &str| parse_expr_text(t, &sc).map_err(|e| anyhow!("`{t}`: {e}"));
            ContractSpec {
                proc: m.clone(),
                pre_base: e(&a.pre_base)?,
                pre_step: e(&a.pre_step)?,
                f: e(&a.result)?,
                step_inv: e(&a.step_arg)?,
            }
        }
    };
    if a.big_step {
        println!("{}", big_step_of(&spec));
    } else {
        let d = ContractDecl {
            proc: spec.proc.clone(),
            params: vec!["n".into(), "i".into()],
            pre: Some(tracelet::lang::Expr::or(spec.pre_base.clone(), spec.pre_step.clone())),
            result: Some(spec.f.clone()),
            body: make_contract(&spec),
        };
        print!("{d}");
    }
    Ok(EXIT_OK)
}

fn targets(p: &Program, cs: &[ContractDecl], only: Option<&str>) -> Result<Vec<String>> {
    let g = p.lookup_table();
    let names: Vec<String> = match only {
        Some(m) => {
            if !cs.iter().any(|c| c.proc == m) {
                bail!("no contract for `{m}`");
            }
            vec![m.to_string()]
        }
        None => cs.iter().map(|c| c.proc.clone()).collect(),
    };
    for m in &names {
        if g.get(m).is_err() {
            bail!("contract `{m}` names an undeclared procedure");
        }
    }
    Ok(names)
}

fn print_open(t: &ProofTree) {
    for path in t.tree.open_goals() {
        let p: Vec<String> = path.iter().map(|i| i.to_string()).collect();
        println!("open goal /{}: {}", p.join("/"), t.tree.at(&path).expect("goal").sequent);
    }
}

fn cmd_prove(a: ProveArgs) -> Result<u8> {
    let p = load_program(&a.program)?;
    let cs = load_contracts(&a.contracts)?;
    let g = p.lookup_table();
    let k = Kernel { g: &g, contracts: &cs, extensions: a.extensions };
    let names = targets(&p, &cs, a.contract.as_deref())?;
    let out = a.out.clone().unwrap_or_else(|| with_ext(&a.program, "proof.json"));
    if !a.auto && a.script.is_none() && !a.repl {
        bail!("choose one of --auto, --script FILE, --repl");
    }

    let mut proofs = Vec::new();
    let mut code = EXIT_OK;
    if a.auto {
        for m in &names {
            match prove_auto(&k, m) {
                Ok(t) => {
                    println!("contract {m}: closed ({} nodes)", t.tree.size());
                    proofs.push(t);
                }
                Err(e @ AutoError::Unsupported(_)) => bail!("contract {m}: {e}"),
                Err(AutoError::Stuck { path, sequent }) => {
                    println!("contract {m}: open");
                    println!("open goal /{path}: {sequent}");
                    code = EXIT_OPEN;
                }
                Err(e) => {
                    println!("contract {m}: open ({e})");
                    code = EXIT_OPEN;
                }
            }
        }
    } else if let Some(script) = &a.script {
        let [m] = names.as_slice() else { bail!("a script proves one contract; pick it with --contract") };
        let steps = parse_script(&read(script)?).map_err(|e| anyhow!("{}: {e}", script.display()))?;
        let mut tree = ProofNode::open(Sequent::contract(m));
        for s in &steps {
            if let Err(e) = apply_step(&k, &mut tree, s) {
                let t = ProofTree { contract: m.clone(), tree };
                eprintln!("{}: {e}", script.display());
                print_open(&t);
                return Ok(EXIT_ERROR);
            }
        }
        proofs.push(ProofTree { contract: m.clone(), tree });
    } else {
        let [m] = names.as_slice() else { bail!("the REPL proves one contract; pick it with --contract") };
        let stdin = std::io::stdin();
        let stdout = std::io::stdout();
        let t = run_repl(&k, m, stdin.lock(), stdout.lock())?;
        proofs.push(t);
    }

    for t in &proofs {
        if !t.tree.is_closed() {
            println!("contract {}: open", t.contract);
            print_open(t);
            code = EXIT_OPEN;
        } else if !a.auto {
            println!("contract {}: closed ({} nodes)", t.contract, t.tree.size());
        }
    }
    if !proofs.is_empty() {
        write_out(&out, &ProofFile::new(a.extensions, proofs).to_json())?;
    }
    Ok(code)
}

fn cmd_check_proof(program: &Path, contracts: &Path, proof: &Path) -> Result<u8> {
    let p = load_program(program)?;
    let cs = load_contracts(contracts)?;
    let f = ProofFile::from_json(&read(proof)?).map_err(|e| anyhow!("{}: {e}", proof.display()))?;
    let g = p.lookup_table();
    let k = Kernel { g: &g, contracts: &cs, extensions: f.extensions };
    let mut code = EXIT_OK;
    for t in &f.proofs {
        match check_proof(&k, t) {
            Ok(()) => println!("contract {}: proof accepted", t.contract),
            Err(e) => {
                println!("contract {}: proof rejected at {e}", t.contract);
                code = EXIT_NEGATIVE;
            }
        }
    }
    if f.proofs.is_empty() {
        println!("no proofs in {}", proof.display());
        code = EXIT_NEGATIVE;
    }
    Ok(code)
}
