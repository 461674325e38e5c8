//! A fixed strategy that closes contract proofs for procedures whose
//! recursion follows the contract's fixed point.

use super::proof::{ProofNode, ProofTree};
use super::rules::{apply_rule, complete_args, Kernel, RuleApp};
use super::{Goal, Sequent};
use crate::lang::Stmt;
use crate::update::UpdateAtom;
use thiserror::Error;

const NODE_LIMIT: usize = 5000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AutoError {
    #[error("unsupported construct: {0}")]
    Unsupported(String),
    #[error("no rule applies at node /{path}: {sequent}")]
    Stuck { path: String, sequent: String },
    #[error("proof exceeded {0} nodes")]
    TooLarge(usize),
}

/// Proves `contract m` from nothing.
pub fn prove_auto(k: &Kernel, m: &str) -> Result<ProofTree, AutoError> {
    let mut budget = NODE_LIMIT;
    let tree = prove_node(k, Sequent::contract(m), &mut Vec::new(), &mut budget)?;
    Ok(ProofTree { contract: m.to_string(), tree })
}

/// Proves an arbitrary sequent with the same strategy.
pub fn prove_sequent(k: &Kernel, seq: Sequent) -> Result<ProofNode, AutoError> {
    let mut budget = NODE_LIMIT;
    prove_node(k, seq, &mut Vec::new(), &mut budget)
}

fn prove_node(k: &Kernel, seq: Sequent, path: &mut Vec<usize>, budget: &mut usize) -> Result<ProofNode, AutoError> {
    if *budget == 0 {
        return Err(AutoError::TooLarge(NODE_LIMIT));
    }
    *budget -= 1;
    let Some((rule, premises)) = next_step(k, &seq)? else {
        let p: Vec<String> = path.iter().map(|i| i.to_string()).collect();
        return Err(AutoError::Stuck { path: p.join("/"), sequent: seq.to_string() });
    };
    let mut children = Vec::new();
    for (i, p) in premises.into_iter().enumerate() {
        path.push(i);
        children.push(prove_node(k, p, path, budget)?);
        path.pop();
    }
    Ok(ProofNode { sequent: seq, rule: Some(rule), children })
}

type Step = (RuleApp, Vec<Sequent>);

fn attempt(k: &Kernel, seq: &Sequent, app: RuleApp) -> Option<Step> {
    let app = complete_args(k, seq, &app).ok()?;
    let prem = apply_rule(k, seq, &app).ok()?;
    Some((app, prem))
}

/// The next rule the strategy applies, if any.
pub fn next_step(k: &Kernel, seq: &Sequent) -> Result<Option<Step>, AutoError> {
    if let Some(s) = attempt(k, seq, RuleApp::new("Close")) {
        return Ok(Some(s));
    }
    let j = match &seq.goal {
        Goal::Contract(_) => return Ok(attempt(k, seq, RuleApp::new("ProcedureContract"))),
        Goal::Pred(_) => return Ok(attempt(k, seq, RuleApp::new("simplifyAntecedent"))),
        Goal::Judgment(j) => j,
    };
    if let Some(s) = &j.stmt {
        if let Some(st) = attempt(k, seq, RuleApp::new("simplifyAntecedent")) {
            return Ok(Some(st));
        }
        let name = match s.head_tail().0 {
            Stmt::Skip => "Skip",
            Stmt::Assign(..) | Stmt::Call(..) => "Assign",
            Stmt::Scope(sc) if sc.decls.is_empty() => "Scope",
            Stmt::Scope(_) => "VarDecl",
            Stmt::If(..) => "Cond",
            Stmt::Return(_) => "Return",
            Stmt::While(..) => return Err(AutoError::Unsupported("while loops need an invariant rule".into())),
            Stmt::Seq(..) => unreachable!("head of a sequence"),
        };
        return Ok(attempt(k, seq, RuleApp::new(name)));
    }

    let u = &j.update.0;
    let first_call = u.iter().position(|a| matches!(a, UpdateAtom::Call(..))).unwrap_or(u.len());
    let mut tries: Vec<RuleApp> = vec![
        RuleApp::new("applyEqRigid"),
        RuleApp::new("Unfold"),
        RuleApp::new("SelectDisjunct"),
        RuleApp::new("applyEq"),
    ];
    tries.extend((0..first_call).map(|at| RuleApp::new("applyUpdate").arg("at", at)));
    tries.extend((0..first_call).map(|at| RuleApp::new("dropUpdate").arg("at", at)));
    tries.extend(
        ["TrAbs", "Prestate", "Poststate", "elimUpdate2", "emptyUpdate", "subsumeUpdates1", "elimUpdate1"]
            .into_iter()
            .map(RuleApp::new),
    );
    for app in tries {
        if let Some(s) = attempt(k, seq, app) {
            return Ok(Some(s));
        }
    }
    Ok(None)
}
