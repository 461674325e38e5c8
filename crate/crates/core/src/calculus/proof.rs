//! Proof trees, their JSON form, and replay checking.

use super::rules::{apply_rule, Kernel, RuleApp};
use super::{parse_assertion, Goal, Judgment, Sequent};
use crate::lang::parse_stmt_text;
use crate::logic::parse_formula;
use crate::update::parse_update;
use serde::{Deserialize, Serialize};
use std::fmt;

pub const PROOF_FORMAT: &str = "tracelet-proof/1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProofNode {
    pub sequent: Sequent,
    pub rule: Option<RuleApp>,
    pub children: Vec<ProofNode>,
}

impl ProofNode {
    pub fn open(sequent: Sequent) -> ProofNode {
        ProofNode { sequent, rule: None, children: Vec::new() }
    }

    pub fn is_closed(&self) -> bool {
        self.rule.is_some() && self.children.iter().all(ProofNode::is_closed)
    }

    pub fn size(&self) -> usize {
        1 + self.children.iter().map(ProofNode::size).sum::<usize>()
    }

    /// Paths of all nodes without a rule, in preorder.
    pub fn open_goals(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        self.collect_open(&mut Vec::new(), &mut out);
        out
    }

    fn collect_open(&self, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if self.rule.is_none() {
            out.push(path.clone());
        }
        for (i, c) in self.children.iter().enumerate() {
            path.push(i);
            c.collect_open(path, out);
            path.pop();
        }
    }

    pub fn at(&self, path: &[usize]) -> Option<&ProofNode> {
        match path.split_first() {
            None => Some(self),
            Some((i, rest)) => self.children.get(*i)?.at(rest),
        }
    }

    pub fn at_mut(&mut self, path: &[usize]) -> Option<&mut ProofNode> {
        match path.split_first() {
            None => Some(self),
            Some((i, rest)) => self.children.get_mut(*i)?.at_mut(rest),
        }
    }

    /// All nodes in preorder with their paths.
    pub fn nodes(&self) -> Vec<(Vec<usize>, &ProofNode)> {
        fn go<'a>(n: &'a ProofNode, path: &mut Vec<usize>, out: &mut Vec<(Vec<usize>, &'a ProofNode)>) {
            out.push((path.clone(), n));
            for (i, c) in n.children.iter().enumerate() {
                path.push(i);
                go(c, path, out);
                path.pop();
            }
        }
        let mut out = Vec::new();
        go(self, &mut Vec::new(), &mut out);
        out
    }

    /// Rule names used, in preorder.
    pub fn rules_used(&self) -> Vec<String> {
        self.nodes().into_iter().filter_map(|(_, n)| n.rule.as_ref().map(|r| r.name.clone())).collect()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_into(0, &mut out);
        out
    }

    fn render_into(&self, depth: usize, out: &mut String) {
        let pad = "  ".repeat(depth);
        out.push_str(&format!("{pad}{}\n", self.sequent));
        match &self.rule {
            Some(r) => out.push_str(&format!("{pad}  by {r}\n")),
            None => out.push_str(&format!("{pad}  (open)\n")),
        }
        for c in &self.children {
            c.render_into(depth + 1, out);
        }
    }
}

/// A proof of one contract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofTree {
    pub contract: String,
    pub tree: ProofNode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofFile {
    pub format: String,
    #[serde(default)]
    pub extensions: bool,
    pub proofs: Vec<ProofTree>,
}

impl ProofFile {
    pub fn new(extensions: bool, proofs: Vec<ProofTree>) -> ProofFile {
        ProofFile { format: PROOF_FORMAT.to_string(), extensions, proofs }
    }

    pub fn from_json(text: &str) -> Result<ProofFile, String> {
        let f: ProofFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if f.format != PROOF_FORMAT {
            return Err(format!("unsupported proof format `{}`", f.format));
        }
        Ok(f)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("proof serializes")
    }
}

// ---------------------------------------------------------------- JSON

#[derive(Serialize, Deserialize)]
struct JudgmentJson {
    update: String,
    stmt: Option<String>,
    formula: String,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum GoalJson {
    Judgment(JudgmentJson),
    Pred(String),
    Contract(String),
}

#[derive(Serialize, Deserialize)]
struct SequentJson {
    gamma: Vec<String>,
    goal: GoalJson,
}

#[derive(Serialize, Deserialize)]
struct NodeJson {
    sequent: SequentJson,
    rule: Option<RuleApp>,
    #[serde(default)]
    children: Vec<NodeJson>,
    #[serde(default)]
    status: Option<String>,
}

impl From<&Sequent> for SequentJson {
    fn from(s: &Sequent) -> Self {
        let goal = match &s.goal {
            Goal::Judgment(j) => GoalJson::Judgment(JudgmentJson {
                update: j.update.to_string(),
                stmt: j.stmt.as_ref().map(|x| x.to_string()),
                formula: j.formula.to_string(),
            }),
            Goal::Pred(p) => GoalJson::Pred(p.to_string()),
            Goal::Contract(m) => GoalJson::Contract(m.clone()),
        };
        SequentJson { gamma: s.gamma.iter().map(|a| a.to_string()).collect(), goal }
    }
}

impl TryFrom<SequentJson> for Sequent {
    type Error = String;

    fn try_from(s: SequentJson) -> Result<Self, String> {
        let gamma = s
            .gamma
            .iter()
            .map(|a| parse_assertion(a).map_err(|e| format!("assumption `{a}`: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        let goal = match s.goal {
            GoalJson::Judgment(j) => Goal::Judgment(Judgment {
                update: parse_update(&j.update).map_err(|e| format!("update `{}`: {e}", j.update))?,
                stmt: match &j.stmt {
                    None => None,
                    Some(t) => Some(parse_stmt_text(t).map_err(|e| format!("statement `{t}`: {e}"))?),
                },
                formula: parse_formula(&j.formula).map_err(|e| format!("formula `{}`: {e}", j.formula))?,
            }),
            GoalJson::Pred(p) => Goal::Pred(
                crate::lang::parse_expr_text(&p, &Default::default()).map_err(|e| format!("predicate `{p}`: {e}"))?,
            ),
            GoalJson::Contract(m) => Goal::Contract(m),
        };
        Ok(Sequent { gamma, goal })
    }
}

impl From<&ProofNode> for NodeJson {
    fn from(n: &ProofNode) -> Self {
        NodeJson {
            sequent: (&n.sequent).into(),
            rule: n.rule.clone(),
            children: n.children.iter().map(NodeJson::from).collect(),
            status: Some(if n.is_closed() { "closed" } else { "open" }.to_string()),
        }
    }
}

impl TryFrom<NodeJson> for ProofNode {
    type Error = String;

    fn try_from(n: NodeJson) -> Result<Self, String> {
        Ok(ProofNode {
            sequent: n.sequent.try_into()?,
            rule: n.rule,
            children: n.children.into_iter().map(ProofNode::try_from).collect::<Result<_, _>>()?,
        })
    }
}

impl Serialize for ProofNode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        NodeJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for ProofNode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let n = NodeJson::deserialize(d)?;
        ProofNode::try_from(n).map_err(serde::de::Error::custom)
    }
}

impl Serialize for Sequent {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        SequentJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Sequent {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Sequent::try_from(SequentJson::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------- checking

/// The first node that fails replay.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckFailure {
    pub path: Vec<usize>,
    pub reason: String,
}

impl fmt::Display for CheckFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p: Vec<String> = self.path.iter().map(|i| i.to_string()).collect();
        write!(f, "node /{}: {}", p.join("/"), self.reason)
    }
}

/// Replays every rule application and requires the stored children to be
/// exactly the premises the kernel produces, and every leaf to be closed.
pub fn check_proof(k: &Kernel, proof: &ProofTree) -> Result<(), CheckFailure> {
    let root = Sequent::contract(&proof.contract);
    if proof.tree.sequent != root {
        return Err(CheckFailure { path: vec![], reason: format!("root is not `{root}`") });
    }
    check_node(k, &proof.tree, &mut Vec::new())
}

fn check_node(k: &Kernel, n: &ProofNode, path: &mut Vec<usize>) -> Result<(), CheckFailure> {
    let fail = |path: &Vec<usize>, reason: String| Err(CheckFailure { path: path.clone(), reason });
    let Some(rule) = &n.rule else { return fail(path, "open goal".into()) };
    let premises = match apply_rule(k, &n.sequent, rule) {
        Ok(p) => p,
        Err(e) => return fail(path, format!("{rule}: {e}")),
    };
    if premises.len() != n.children.len() {
        return fail(path, format!("{rule} yields {} premises, found {}", premises.len(), n.children.len()));
    }
    for (i, (want, child)) in premises.iter().zip(&n.children).enumerate() {
        if *want != child.sequent {
            return fail(path, format!("premise {i} should be `{want}`, found `{}`", child.sequent));
        }
    }
    for (i, c) in n.children.iter().enumerate() {
        path.push(i);
        check_node(k, c, path)?;
        path.pop();
    }
    Ok(())
}
