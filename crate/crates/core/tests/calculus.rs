//! The calculus on the running example: automatic proof, replay checking,
//! JSON round trip, and concrete checks of every proof node.

use std::path::PathBuf;
use tracelet::calculus::*;
use tracelet::lang::{parse_program, LookupTable};
use tracelet::logic::{parse_contracts, ContractDecl};

fn fixture(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name);
    std::fs::read_to_string(p).unwrap()
}

fn running() -> (LookupTable, Vec<ContractDecl>) {
    let p = parse_program(&fixture("running.tcp")).unwrap();
    (p.lookup_table(), parse_contracts(&fixture("running.tcf")).unwrap())
}

#[test]
fn auto_proves_running_contract() {
    let (g, cs) = running();
    let k = Kernel { g: &g, contracts: &cs, extensions: false };
    let proof = match prove_auto(&k, "m") {
        Ok(p) => p,
        Err(e) => panic!("{e}"),
    };
    println!("{}", proof.tree.render());
    assert!(proof.tree.is_closed());
    check_proof(&k, &proof).unwrap();
}

fn kernel<'a>(g: &'a LookupTable, cs: &'a [ContractDecl]) -> Kernel<'a> {
    Kernel { g, contracts: cs, extensions: false }
}

fn trabs_node(p: &ProofTree) -> &ProofNode {
    p.tree
        .nodes()
        .into_iter()
        .map(|(_, n)| n)
        .find(|n| n.rule.as_ref().is_some_and(|r| r.name == "TrAbs"))
        .expect("TrAbs node")
}

#[test]
fn trabs_children_are_the_three_obligations() {
    let (g, cs) = running();
    let p = prove_auto(&kernel(&g, &cs), "m").unwrap();
    let kids: Vec<String> = trabs_node(&p).children.iter().map(|c| c.sequent.to_string()).collect();
    assert_eq!(
        kids,
        [
            "n' >= 1 |- {startEv(m, n', i')} : [n' > 0] ** startEv(m, n', i') ~m~",
            "n' >= 1 |- n' - 1 >= 0",
            "res(k') == n' - 1 |- {r#0 := res(k')}{r#0 := r#0 + 1}{finishEv(m, r#0, i')}{res(i') := r#0} : ~m~ finishEv(m, n', i') ** [res(i') == n']",
        ]
    );
}

#[test]
fn required_rules_are_used() {
    let (g, cs) = running();
    let p = prove_auto(&kernel(&g, &cs), "m").unwrap();
    let used = p.tree.rules_used();
    for r in ["ProcedureContract", "VarDecl", "Assign", "Cond", "Return", "Unfold", "Prestate", "TrAbs"] {
        assert!(used.iter().any(|u| u == r), "{r} missing");
    }
}

#[test]
fn json_round_trip() {
    let (g, cs) = running();
    let p = prove_auto(&kernel(&g, &cs), "m").unwrap();
    let file = ProofFile::new(false, vec![p.clone()]);
    let text = file.to_json();
    assert!(text.contains("\"status\": \"closed\""));
    let back = ProofFile::from_json(&text).unwrap();
    assert_eq!(back.proofs[0], p);
    check_proof(&kernel(&g, &cs), &back.proofs[0]).unwrap();
}

#[test]
fn every_node_holds_concretely() {
    let (g, cs) = running();
    let k = kernel(&g, &cs);
    let p = prove_auto(&k, "m").unwrap();
    let mut checked = 0;
    for (path, n) in p.tree.nodes() {
        let o = check_sequent(&k, &n.sequent, 40, 7);
        assert!(o.ok(), "node {path:?} `{}`: {}", n.sequent, o.counterexample.unwrap());
        checked += o.checked;
    }
    assert!(checked > 300, "only {checked} samples were informative");
}

#[test]
fn wrong_contract_and_mutant_are_not_provable() {
    let (g, _) = running();
    let wrong = parse_contracts(&fixture("running_wrong.tcf")).unwrap();
    assert!(prove_auto(&kernel(&g, &wrong), "m").is_err());
    let plus2 = parse_program(&fixture("running_plus2.tcp")).unwrap().lookup_table();
    let (_, cs) = running();
    assert!(prove_auto(&kernel(&plus2, &cs), "m").is_err());
}

#[test]
fn variant_program_is_provable() {
    let g = parse_program(&fixture("running_variant.tcp")).unwrap().lookup_table();
    let (_, cs) = running();
    let k = kernel(&g, &cs);
    let p = prove_auto(&k, "m").unwrap();
    check_proof(&k, &p).unwrap();
}

#[test]
fn check_rejects_edited_trees() {
    let (g, cs) = running();
    let k = kernel(&g, &cs);
    let p = prove_auto(&k, "m").unwrap();
    let nodes = p.tree.nodes().len();
    for idx in 0..nodes {
        let path = p.tree.nodes()[idx].0.clone();
        // drop the subproof
        let mut q = p.clone();
        let n = q.tree.at_mut(&path).unwrap();
        n.rule = None;
        n.children.clear();
        let f = check_proof(&k, &q).unwrap_err();
        assert_eq!(f.path, path);
        // change the rule
        let mut q = p.clone();
        let n = q.tree.at_mut(&path).unwrap();
        n.rule.as_mut().unwrap().name = if n.rule.as_ref().unwrap().name == "Close" { "Skip" } else { "Close" }.into();
        assert!(check_proof(&k, &q).is_err());
    }
}

#[test]
fn script_reproduces_auto_steps() {
    let (g, cs) = running();
    let k = kernel(&g, &cs);
    let steps = parse_script("// by hand until the call, then automatic\nProcedureContract\nAssign @ 0\nVarDecl @ 0 name=r#0\nauto @ 0\n").unwrap();
    let p = run_script(&k, "m", &steps).unwrap();
    assert!(p.tree.is_closed());
    check_proof(&k, &p).unwrap();
    let bad = parse_script("Cond @ 0").unwrap();
    assert!(run_script(&k, "m", &bad).is_err());
}

#[test]
fn repl_session() {
    let (g, cs) = running();
    let k = kernel(&g, &cs);
    let input = "ProcedureContract\nTrAbs\nundo\ngoals\nauto\nquit\n";
    let mut out = Vec::new();
    let p = run_repl(&k, "m", input.as_bytes(), &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.contains("error:"));
    assert!(text.contains("proof complete"));
    assert!(p.tree.is_closed());
}

#[test]
fn extension_rules_are_gated() {
    let (g, cs) = running();
    let k = kernel(&g, &cs);
    let seq = Sequent::contract("m");
    let e = apply_rule(&k, &seq, &RuleApp::new("PrefixEv")).unwrap_err();
    assert!(matches!(e, RuleError::SideCondition(_)));
    let k2 = Kernel { extensions: true, ..k };
    assert!(matches!(apply_rule(&k2, &seq, &RuleApp::new("PrefixEv")).unwrap_err(), RuleError::NoMatch(_)));
    assert!(matches!(apply_rule(&k, &seq, &RuleApp::new("Magic")).unwrap_err(), RuleError::UnknownRule(_)));
}

#[test]
fn sampling_finds_false_sequents() {
    let (g, cs) = running();
    let k = kernel(&g, &cs);
    let p = prove_auto(&k, "m").unwrap();
    let mut bad = trabs_node(&p).children[2].sequent.clone();
    let Goal::Judgment(j) = &mut bad.goal else { unreachable!() };
    j.formula = tracelet::logic::parse_formula("~m~ finishEv(m, n', i') ** [res(i') == n' + 1]").unwrap();
    assert!(check_sequent(&k, &bad, 60, 1).counterexample.is_some());
    let bad = Sequent::pred(vec![], tracelet::lang::parse_expr_text("n' > 1", &Default::default()).unwrap());
    assert!(check_sequent(&k, &bad, 60, 1).counterexample.is_some());
}
