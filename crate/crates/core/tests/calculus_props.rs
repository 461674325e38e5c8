//! Properties of the calculus building blocks.

use num_bigint::BigInt;
use proptest::prelude::*;
use std::collections::BTreeMap;
use tracelet::calculus::{apply_rule, apply_update_expr, fo_valid, Assertion, FoResult, Kernel, RuleApp, Sequent};
use tracelet::interp::run_update_prefixed;
use tracelet::lang::{BinOp, Env, Expr, Lhs, LookupTable};
use tracelet::trace::{State, Trace};
use tracelet::update::{Update, UpdateAtom};

const VARS: [&str; 3] = ["x", "y", "z"];
const SYMS: [&str; 3] = ["a'", "b'", "c'"];

fn term(leaf: BoxedStrategy<Expr>) -> impl Strategy<Value = Expr> {
    leaf.prop_recursive(2, 8, 2, |inner| {
        (prop::sample::select(vec![BinOp::Add, BinOp::Sub, BinOp::Mul]), inner.clone(), inner)
            .prop_map(|(op, a, b)| Expr::bin(op, a, b))
    })
}

fn var_term() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-3i64..4).prop_map(Expr::int),
        prop::sample::select(VARS.to_vec()).prop_map(Expr::var),
    ];
    term(leaf.boxed())
}

fn atom() -> impl Strategy<Value = UpdateAtom> {
    prop_oneof![
        4 => (prop::sample::select(VARS.to_vec()), var_term()).prop_map(|(x, e)| UpdateAtom::Assign(Lhs::Var(x.into()), e)),
        1 => var_term().prop_map(|e| UpdateAtom::Assign(Lhs::Res(Expr::int(9)), e)),
    ]
}

/// Optionally wraps part of the update in startEv/finishEv for call id 7.
fn update() -> impl Strategy<Value = Update> {
    (prop::collection::vec(atom(), 0..6), any::<bool>(), var_term(), var_term()).prop_map(|(mut v, ev, a, r)| {
        if ev {
            let mid = v.len() / 2;
            v.insert(mid, UpdateAtom::Finish { proc: "m".into(), value: r, id: Expr::int(7) });
            v.insert(0, UpdateAtom::Start { proc: "m".into(), arg: a, id: Expr::int(7) });
        }
        Update(v)
    })
}

fn lin_term() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![(-3i64..4).prop_map(Expr::int), prop::sample::select(SYMS.to_vec()).prop_map(Expr::sym)];
    leaf.prop_recursive(2, 6, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::bin(BinOp::Add, a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::bin(BinOp::Sub, a, b)),
            (-2i64..3, inner).prop_map(|(k, a)| Expr::bin(BinOp::Mul, Expr::int(k), a)),
        ]
    })
}

fn lin_pred() -> impl Strategy<Value = Expr> {
    let cmp = prop::sample::select(vec![BinOp::Eq, BinOp::Ne, BinOp::Lt, BinOp::Le, BinOp::Gt, BinOp::Ge]);
    let atomic = (cmp, lin_term(), lin_term()).prop_map(|(op, a, b)| Expr::bin(op, a, b));
    atomic.prop_recursive(1, 4, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::or(a, b)),
            inner.prop_map(Expr::not),
        ]
    })
}

struct Model<'a>(&'a BTreeMap<String, BigInt>);

impl Env for Model<'_> {
    fn var(&self, _: &str) -> Option<BigInt> {
        None
    }
    fn sym(&self, n: &str) -> Option<BigInt> {
        Some(self.0.get(n).cloned().unwrap_or_default())
    }
}

fn holds(p: &Expr, m: &BTreeMap<String, BigInt>) -> bool {
    p.eval_bool(&Model(m)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn applying_an_update_agrees_with_running_it(u in update(), e in var_term(), vals in prop::array::uniform3(-3i64..4)) {
        let s0 = State::from_pairs(VARS.iter().zip(vals).map(|(x, v)| (*x, v)));
        let t = run_update_prefixed(&u, None, &Trace::singleton(s0.clone()), &LookupTable::default(), 1000).unwrap();
        let after = t.last().unwrap();
        let mut e = e;
        if u.0.iter().any(|a| matches!(a, UpdateAtom::Finish { .. })) {
            e = Expr::bin(BinOp::Add, e, Expr::res(Expr::int(7)));
        }
        let pushed = apply_update_expr(&u.0, &e).unwrap();
        prop_assert_eq!(pushed.eval_int(&s0).unwrap(), e.eval_int(after).unwrap());
    }

    #[test]
    fn arithmetic_verdicts_are_sound(gamma in prop::collection::vec(lin_pred(), 0..3), goal in lin_pred()) {
        match fo_valid(&gamma, &goal) {
            FoResult::Valid => {
                for a in -4i64..=4 {
                    for b in -4i64..=4 {
                        for c in -4i64..=4 {
                            let m: BTreeMap<String, BigInt> =
                                [("a'", a), ("b'", b), ("c'", c)].iter().map(|(k, v)| (k.to_string(), BigInt::from(*v))).collect();
                            if gamma.iter().all(|g| holds(g, &m)) {
                                prop_assert!(holds(&goal, &m), "claimed valid, fails at {m:?}");
                            }
                        }
                    }
                }
            }
            FoResult::Invalid(m) => {
                prop_assert!(gamma.iter().all(|g| holds(g, &m)));
                prop_assert!(!holds(&goal, &m));
            }
            FoResult::Unknown(_) => {}
        }
    }

    #[test]
    fn simplifying_the_antecedent_preserves_it(gamma in prop::collection::vec(lin_pred(), 1..4)) {
        let g = LookupTable::default();
        let k = Kernel { g: &g, contracts: &[], extensions: false };
        let seq = Sequent::pred(gamma.iter().cloned().map(Assertion::Pred).collect(), Expr::Bool(true));
        let Ok(out) = apply_rule(&k, &seq, &RuleApp::new("simplifyAntecedent")) else { return Ok(()) };
        let after = out[0].preds();
        for a in -4i64..=4 {
            for b in -4i64..=4 {
                for c in -4i64..=4 {
                    let m: BTreeMap<String, BigInt> =
                        [("a'", a), ("b'", b), ("c'", c)].iter().map(|(k, v)| (k.to_string(), BigInt::from(*v))).collect();
                    let before = gamma.iter().all(|p| holds(p, &m));
                    prop_assert_eq!(before, after.iter().all(|p| holds(p, &m)), "{:?} vs {:?} at {:?}", gamma, after, m);
                }
            }
        }
    }
}
