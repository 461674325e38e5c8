//! Proof scripts. One step per line:
//!
//! ```text
//! // comment
//! ProcedureContract @ 0 n=n' i=i'
//! auto @ 1
//! ```
//!
//! `@ k` selects the k-th open goal in preorder (default 0). Omitted rule
//! arguments get their default values.

use super::auto::prove_sequent;
use super::proof::{ProofNode, ProofTree};
use super::rules::{apply_rule, complete_args, Kernel, RuleApp};
use super::Sequent;
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptStep {
    pub line: usize,
    pub rule: String,
    pub goal: usize,
    pub args: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {msg}")]
pub struct ScriptError {
    pub line: usize,
    pub msg: String,
}

fn parse_step(line: usize, text: &str) -> Result<Option<ScriptStep>, ScriptError> {
    let text = text.split("//").next().unwrap_or("").trim();
    if text.is_empty() {
        return Ok(None);
    }
    let err = |msg: String| ScriptError { line, msg };
    let mut words = text.split_whitespace().peekable();
    let rule = words.next().expect("non-empty").to_string();
    let mut goal = 0;
    if words.peek() == Some(&"@") {
        words.next();
        let g = words.next().ok_or_else(|| err("expected a goal index after `@`".into()))?;
        goal = g.parse().map_err(|_| err(format!("`{g}` is not a goal index")))?;
    }
    let mut args = BTreeMap::new();
    for w in words {
        let (k, v) = w.split_once('=').ok_or_else(|| err(format!("expected key=value, found `{w}`")))?;
        if args.insert(k.to_string(), v.to_string()).is_some() {
            return Err(err(format!("argument `{k}` given twice")));
        }
    }
    Ok(Some(ScriptStep { line, rule, goal, args }))
}

pub fn parse_script(text: &str) -> Result<Vec<ScriptStep>, ScriptError> {
    let mut out = Vec::new();
    for (i, l) in text.lines().enumerate() {
        out.extend(parse_step(i + 1, l)?);
    }
    Ok(out)
}

/// Applies one step to the selected open goal of `tree`.
pub fn apply_step(k: &Kernel, tree: &mut ProofNode, step: &ScriptStep) -> Result<(), ScriptError> {
    let err = |msg: String| ScriptError { line: step.line, msg };
    let open = tree.open_goals();
    let path = open
        .get(step.goal)
        .ok_or_else(|| err(format!("no open goal {} ({} open)", step.goal, open.len())))?
        .clone();
    let node = tree.at_mut(&path).expect("open goal path");
    if step.rule == "auto" {
        if !step.args.is_empty() {
            return Err(err("auto takes no arguments".into()));
        }
        *node = prove_sequent(k, node.sequent.clone()).map_err(|e| err(e.to_string()))?;
        return Ok(());
    }
    let app = RuleApp { name: step.rule.clone(), args: step.args.clone() };
    let app = complete_args(k, &node.sequent, &app).map_err(|e| err(e.to_string()))?;
    let prem = apply_rule(k, &node.sequent, &app).map_err(|e| err(e.to_string()))?;
    node.rule = Some(app);
    node.children = prem.into_iter().map(ProofNode::open).collect();
    Ok(())
}

/// Runs the steps from `contract m`. The result may still have open goals.
pub fn run_script(k: &Kernel, m: &str, steps: &[ScriptStep]) -> Result<ProofTree, ScriptError> {
    let mut tree = ProofNode::open(Sequent::contract(m));
    for s in steps {
        apply_step(k, &mut tree, s)?;
    }
    Ok(ProofTree { contract: m.to_string(), tree })
}

const HELP: &str = "commands: <rule> [@ k] [key=value ..] | auto [@ k] | goals | undo | rules | quit";

/// Interactive loop over `input`; returns the tree when input ends or on
/// `quit`.
pub fn run_repl(k: &Kernel, m: &str, input: impl BufRead, mut out: impl Write) -> std::io::Result<ProofTree> {
    let mut history = vec![ProofNode::open(Sequent::contract(m))];
    writeln!(out, "{HELP}")?;
    show_goals(history.last().expect("root"), &mut out)?;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let cmd = line.trim();
        match cmd {
            "" => continue,
            "quit" | "exit" => break,
            "help" => writeln!(out, "{HELP}")?,
            "goals" => show_goals(history.last().expect("root"), &mut out)?,
            "rules" => writeln!(out, "{}", super::rules::rule_names().collect::<Vec<_>>().join(" "))?,
            "undo" => {
                if history.len() > 1 {
                    history.pop();
                }
                show_goals(history.last().expect("root"), &mut out)?;
            }
            _ => match parse_step(i + 1, cmd) {
                Ok(Some(step)) => {
                    let mut t = history.last().expect("root").clone();
                    match apply_step(k, &mut t, &step) {
                        Ok(()) => {
                            history.push(t);
                            show_goals(history.last().expect("root"), &mut out)?;
                        }
                        Err(e) => writeln!(out, "error: {}", e.msg)?,
                    }
                }
                Ok(None) => {}
                Err(e) => writeln!(out, "error: {}", e.msg)?,
            },
        }
    }
    let tree = history.pop().expect("root");
    Ok(ProofTree { contract: m.to_string(), tree })
}

fn show_goals(t: &ProofNode, out: &mut impl Write) -> std::io::Result<()> {
    let open = t.open_goals();
    if open.is_empty() {
        return writeln!(out, "no open goals; proof complete");
    }
    for (i, p) in open.iter().enumerate() {
        writeln!(out, "[{i}] {}", t.at(p).expect("path").sequent)?;
    }
    Ok(())
}
