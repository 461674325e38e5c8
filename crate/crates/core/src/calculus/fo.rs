//! Validity of quantifier-free linear integer arithmetic: DNF of
//! `Γ ∧ ¬goal`, equality elimination, Fourier–Motzkin with integer
//! tightening, and model reconstruction for counterexamples. Products of
//! two non-constant terms are abstracted as opaque atoms, so anything that
//! depends on them is reported as unknown rather than invalid.

use crate::lang::{BinOp, Expr, UnOp};
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FoResult {
    Valid,
    /// A model of the antecedent that falsifies the goal.
    Invalid(BTreeMap<String, BigInt>),
    Unknown(String),
}

impl FoResult {
    pub fn is_valid(&self) -> bool {
        matches!(self, FoResult::Valid)
    }
}

const MAX_CONJUNCTS: usize = 4096;
const MAX_CONSTRAINTS: usize = 4000;

/// `a·x + c`, keyed by atom name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Lin {
    coef: BTreeMap<String, BigInt>,
    c: BigInt,
}

impl Lin {
    fn constant(c: BigInt) -> Lin {
        Lin { coef: BTreeMap::new(), c }
    }
    fn atom(k: String) -> Lin {
        Lin { coef: BTreeMap::from([(k, BigInt::one())]), c: BigInt::zero() }
    }
    fn scale(&self, k: &BigInt) -> Lin {
        if k.is_zero() {
            return Lin::constant(BigInt::zero());
        }
        Lin { coef: self.coef.iter().map(|(x, a)| (x.clone(), a * k)).collect(), c: &self.c * k }
    }
    fn add(&self, o: &Lin) -> Lin {
        let mut coef = self.coef.clone();
        for (x, a) in &o.coef {
            let e = coef.entry(x.clone()).or_insert_with(BigInt::zero);
            *e += a;
            if e.is_zero() {
                coef.remove(x);
            }
        }
        Lin { coef, c: &self.c + &o.c }
    }
    fn sub(&self, o: &Lin) -> Lin {
        self.add(&o.scale(&BigInt::from(-1)))
    }
    fn plus(&self, k: i64) -> Lin {
        Lin { coef: self.coef.clone(), c: &self.c + k }
    }
    fn get(&self, x: &str) -> BigInt {
        self.coef.get(x).cloned().unwrap_or_default()
    }
    fn eval(&self, m: &BTreeMap<String, BigInt>) -> BigInt {
        self.coef.iter().fold(self.c.clone(), |acc, (x, a)| acc + a * m.get(x).cloned().unwrap_or_default())
    }
    /// Substitutes `x := e`.
    fn subst(&self, x: &str, e: &Lin) -> Lin {
        let a = self.get(x);
        if a.is_zero() {
            return self.clone();
        }
        let mut rest = self.clone();
        rest.coef.remove(x);
        rest.add(&e.scale(&a))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Lit {
    /// `lin <= 0`
    Le(Lin),
    /// `lin == 0`
    Eq(Lin),
}

struct Ctx {
    nonlinear: bool,
}

fn atom_key(e: &Expr) -> String {
    match e {
        Expr::Var(x) | Expr::Sym(x) => x.clone(),
        Expr::Res(i) => format!("res({})", i.simplify()),
        other => format!("({})", other),
    }
}

fn lin(e: &Expr, cx: &mut Ctx) -> Result<Lin, String> {
    Ok(match e {
        Expr::Int(v) => Lin::constant(v.clone()),
        Expr::Var(_) | Expr::Sym(_) | Expr::Res(_) => Lin::atom(atom_key(e)),
        Expr::Unary(UnOp::Neg, a) => lin(a, cx)?.scale(&BigInt::from(-1)),
        Expr::Binary(BinOp::Add, a, b) => lin(a, cx)?.add(&lin(b, cx)?),
        Expr::Binary(BinOp::Sub, a, b) => lin(a, cx)?.sub(&lin(b, cx)?),
        Expr::Binary(BinOp::Mul, a, b) => {
            let (x, y) = (lin(a, cx)?, lin(b, cx)?);
            if x.coef.is_empty() {
                y.scale(&x.c)
            } else if y.coef.is_empty() {
                x.scale(&y.c)
            } else {
                cx.nonlinear = true;
                Lin::atom(format!("({})", e))
            }
        }
        other => return Err(format!("`{other}` is not an integer term")),
    })
}

type Dnf = Vec<Vec<Lit>>;

fn cross(a: Dnf, b: Dnf) -> Result<Dnf, String> {
    if a.len() * b.len() > MAX_CONJUNCTS {
        return Err("case split too large".into());
    }
    let mut out = Vec::new();
    for x in &a {
        for y in &b {
            let mut c = x.clone();
            c.extend(y.iter().cloned());
            out.push(c);
        }
    }
    Ok(out)
}

fn union(mut a: Dnf, b: Dnf) -> Result<Dnf, String> {
    a.extend(b);
    if a.len() > MAX_CONJUNCTS {
        return Err("case split too large".into());
    }
    Ok(a)
}

fn dnf(e: &Expr, pos: bool, cx: &mut Ctx) -> Result<Dnf, String> {
    match e {
        Expr::Bool(b) => Ok(if *b == pos { vec![vec![]] } else { vec![] }),
        Expr::Unary(UnOp::Not, a) => dnf(a, !pos, cx),
        Expr::Binary(BinOp::And, a, b) => {
            let (x, y) = (dnf(a, pos, cx)?, dnf(b, pos, cx)?);
            if pos {
                cross(x, y)
            } else {
                union(x, y)
            }
        }
        Expr::Binary(BinOp::Or, a, b) => {
            let (x, y) = (dnf(a, pos, cx)?, dnf(b, pos, cx)?);
            if pos {
                union(x, y)
            } else {
                cross(x, y)
            }
        }
        Expr::Binary(op, a, b) if op.is_comparison() => {
            let d = lin(a, cx)?.sub(&lin(b, cx)?);
            let op = if pos { *op } else { negate(*op) };
            let neg = d.scale(&BigInt::from(-1));
            Ok(match op {
                BinOp::Le => vec![vec![Lit::Le(d)]],
                BinOp::Lt => vec![vec![Lit::Le(d.plus(1))]],
                BinOp::Ge => vec![vec![Lit::Le(neg)]],
                BinOp::Gt => vec![vec![Lit::Le(neg.plus(1))]],
                BinOp::Eq => vec![vec![Lit::Eq(d)]],
                BinOp::Ne => vec![vec![Lit::Le(d.plus(1))], vec![Lit::Le(neg.plus(1))]],
                _ => unreachable!(),
            })
        }
        other => Err(format!("`{other}` is not a linear predicate")),
    }
}

fn negate(op: BinOp) -> BinOp {
    match op {
        BinOp::Eq => BinOp::Ne,
        BinOp::Ne => BinOp::Eq,
        BinOp::Lt => BinOp::Ge,
        BinOp::Le => BinOp::Gt,
        BinOp::Gt => BinOp::Le,
        BinOp::Ge => BinOp::Lt,
        o => o,
    }
}

fn ceil_div(a: &BigInt, b: &BigInt) -> BigInt {
    -((-a).div_floor(b))
}

/// Divides by the gcd of the coefficients and rounds the constant up;
/// `None` when the constraint is a false constant.
fn tighten(l: Lin) -> Option<Lin> {
    if l.coef.is_empty() {
        return if l.c.is_positive() { None } else { Some(l) };
    }
    let g = l.coef.values().fold(BigInt::zero(), |g, a| g.gcd(a));
    if g.is_one() {
        return Some(l);
    }
    Some(Lin { coef: l.coef.iter().map(|(x, a)| (x.clone(), a / &g)).collect(), c: ceil_div(&l.c, &g) })
}

enum Sat {
    Unsat,
    Model(BTreeMap<String, BigInt>),
    Unknown(String),
}

fn solve(lits: &[Lit]) -> Sat {
    let mut eqs: Vec<Lin> = Vec::new();
    let mut les: Vec<Lin> = Vec::new();
    for l in lits {
        match l {
            Lit::Le(x) => les.push(x.clone()),
            Lit::Eq(x) => eqs.push(x.clone()),
        }
    }
    // eliminate equalities with a unit coefficient; the rest become two
    // inequalities
    let mut solved: Vec<(String, Lin)> = Vec::new();
    while let Some(e) = eqs.pop() {
        if e.coef.is_empty() {
            if !e.c.is_zero() {
                return Sat::Unsat;
            }
            continue;
        }
        let unit = e.coef.iter().find(|(_, a)| a.abs().is_one()).map(|(x, a)| (x.clone(), a.clone()));
        match unit {
            Some((x, a)) => {
                // a·x + rest = 0  =>  x = -rest / a
                let mut rest = e.clone();
                rest.coef.remove(&x);
                let val = rest.scale(&-a);
                eqs = eqs.iter().map(|q| q.subst(&x, &val)).collect();
                les = les.iter().map(|q| q.subst(&x, &val)).collect();
                solved = solved.into_iter().map(|(y, q)| (y, q.subst(&x, &val))).collect();
                solved.push((x, val));
            }
            None => {
                les.push(e.clone());
                les.push(e.scale(&BigInt::from(-1)));
            }
        }
    }
    let mut cur: Vec<Lin> = Vec::new();
    for l in les {
        match tighten(l) {
            None => return Sat::Unsat,
            Some(l) if l.coef.is_empty() => {}
            Some(l) => cur.push(l),
        }
    }
    let mut stages: Vec<(String, Vec<Lin>)> = Vec::new();
    loop {
        cur.sort();
        cur.dedup();
        let vars: BTreeSet<String> = cur.iter().flat_map(|l| l.coef.keys().cloned()).collect();
        let Some(x) = vars
            .iter()
            .min_by_key(|x| {
                let p = cur.iter().filter(|l| l.get(x).is_positive()).count();
                let n = cur.iter().filter(|l| l.get(x).is_negative()).count();
                p * n
            })
            .cloned()
        else {
            break;
        };
        let (with, without): (Vec<Lin>, Vec<Lin>) = cur.iter().cloned().partition(|l| !l.get(&x).is_zero());
        let mut next = without;
        let pos: Vec<&Lin> = with.iter().filter(|l| l.get(&x).is_positive()).collect();
        let neg: Vec<&Lin> = with.iter().filter(|l| l.get(&x).is_negative()).collect();
        for p in &pos {
            for n in &neg {
                let a = p.get(&x);
                let b = -n.get(&x);
                let mut comb = p.scale(&b).add(&n.scale(&a));
                comb.coef.remove(&x);
                match tighten(comb) {
                    None => return Sat::Unsat,
                    Some(l) if l.coef.is_empty() => {}
                    Some(l) => next.push(l),
                }
            }
        }
        if next.len() > MAX_CONSTRAINTS {
            return Sat::Unknown("too many constraints".into());
        }
        stages.push((x, with));
        cur = next;
    }
    // back-substitution, choosing values closest to zero
    let mut model: BTreeMap<String, BigInt> = BTreeMap::new();
    for (x, cs) in stages.iter().rev() {
        let mut lo: Option<BigInt> = None;
        let mut hi: Option<BigInt> = None;
        for l in cs {
            let a = l.get(x);
            let mut rest = l.clone();
            rest.coef.remove(x);
            let r = rest.eval(&model);
            if a.is_positive() {
                let b = (-&r).div_floor(&a);
                hi = Some(hi.map_or(b.clone(), |h: BigInt| h.min(b)));
            } else {
                let b = ceil_div(&r, &-a);
                lo = Some(lo.map_or(b.clone(), |l: BigInt| l.max(b)));
            }
        }
        let v = match (&lo, &hi) {
            (Some(l), Some(h)) if l > h => return Sat::Unknown("no integer point in the rational shadow".into()),
            (Some(l), _) if l.is_positive() => l.clone(),
            (_, Some(h)) if h.is_negative() => h.clone(),
            _ => BigInt::zero(),
        };
        model.insert(x.clone(), v);
    }
    for (x, val) in solved.iter().rev() {
        let v = val.eval(&model);
        model.insert(x.clone(), v);
    }
    Sat::Model(model)
}

fn holds(l: &Lit, m: &BTreeMap<String, BigInt>) -> bool {
    match l {
        Lit::Le(x) => !x.eval(m).is_positive(),
        Lit::Eq(x) => x.eval(m).is_zero(),
    }
}

/// Is `Γ → goal` valid over the integers?
pub fn fo_valid(gamma: &[Expr], goal: &Expr) -> FoResult {
    let mut cx = Ctx { nonlinear: false };
    let mut f = Expr::not(goal.clone());
    for g in gamma.iter().rev() {
        f = Expr::and(g.clone(), f);
    }
    let d = match dnf(&f, true, &mut cx) {
        Ok(d) => d,
        Err(e) => return FoResult::Unknown(e),
    };
    let mut unknown = None;
    for conj in &d {
        match solve(conj) {
            Sat::Unsat => {}
            Sat::Unknown(why) => unknown = Some(why),
            Sat::Model(mut m) => {
                for l in conj {
                    let (Lit::Le(x) | Lit::Eq(x)) = l;
                    for k in x.coef.keys() {
                        m.entry(k.clone()).or_insert_with(BigInt::zero);
                    }
                }
                if !conj.iter().all(|l| holds(l, &m)) {
                    unknown = Some("model reconstruction failed".into());
                } else if cx.nonlinear {
                    unknown = Some("nonlinear terms".into());
                } else {
                    return FoResult::Invalid(m);
                }
            }
        }
    }
    match unknown {
        Some(why) => FoResult::Unknown(why),
        None => FoResult::Valid,
    }
}

/// Whether two predicates are equivalent under `gamma` (both directions
/// valid).
pub fn lin_equiv(gamma: &[Expr], a: &Expr, b: &Expr) -> bool {
    let mut ga = gamma.to_vec();
    ga.push(a.clone());
    let mut gb = gamma.to_vec();
    gb.push(b.clone());
    fo_valid(&ga, b).is_valid() && fo_valid(&gb, a).is_valid()
}

/// Per-symbol bounds extracted from single-atom linear constraints, used to
/// normalize antecedents.
#[derive(Debug, Clone, Default)]
pub(crate) struct Bounds {
    pub lo: Option<BigInt>,
    pub hi: Option<BigInt>,
    pub ne: BTreeSet<BigInt>,
}

/// `Some((atom expr, lit))` when `p` constrains exactly one variable or
/// symbol; lits are returned as (kind, coefficient, constant).
pub(crate) fn single_atom_bound(p: &Expr) -> Option<(Expr, Bounds)> {
    let Expr::Binary(op, a, b) = p else { return None };
    if !op.is_comparison() {
        return None;
    }
    let mut cx = Ctx { nonlinear: false };
    let d = lin(a, &mut cx).ok()?.sub(&lin(b, &mut cx).ok()?);
    if cx.nonlinear || d.coef.len() != 1 {
        return None;
    }
    let (key, k) = d.coef.iter().next().map(|(x, k)| (x.clone(), k.clone()))?;
    let atom = find_atom(p, &key)?;
    // k·x + c op 0
    let c = d.c.clone();
    let mut bd = Bounds::default();
    let (kk, cc) = if k.is_negative() { (-k, -c) } else { (k, c) };
    let op = if d.get(&key).is_negative() { flip(*op) } else { *op };
    // kk·x + cc op 0 with kk > 0
    let floor = |v: &BigInt| v.div_floor(&kk);
    let ceil = |v: &BigInt| ceil_div(v, &kk);
    let mc = -cc;
    match op {
        BinOp::Le => bd.hi = Some(floor(&mc)),
        BinOp::Lt => bd.hi = Some(floor(&(&mc - 1))),
        BinOp::Ge => bd.lo = Some(ceil(&mc)),
        BinOp::Gt => bd.lo = Some(ceil(&(&mc + 1))),
        BinOp::Eq => {
            if !(&mc % &kk).is_zero() {
                bd.lo = Some(BigInt::one());
                bd.hi = Some(BigInt::zero());
            } else {
                bd.lo = Some(&mc / &kk);
                bd.hi = Some(&mc / &kk);
            }
        }
        BinOp::Ne => {
            if (&mc % &kk).is_zero() {
                bd.ne.insert(&mc / &kk);
            }
        }
        _ => return None,
    }
    Some((atom, bd))
}

fn flip(op: BinOp) -> BinOp {
    match op {
        BinOp::Lt => BinOp::Gt,
        BinOp::Le => BinOp::Ge,
        BinOp::Gt => BinOp::Lt,
        BinOp::Ge => BinOp::Le,
        o => o,
    }
}

fn find_atom(p: &Expr, key: &str) -> Option<Expr> {
    let mut found = None;
    p.walk(&mut |e| {
        if found.is_none() && matches!(e, Expr::Var(_) | Expr::Sym(_)) && atom_key(e) == key {
            found = Some(e.clone());
        }
    });
    found
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{parse_expr_text, Scoping};

    fn ex(s: &str) -> Expr {
        parse_expr_text(s, &Scoping::default()).unwrap()
    }

    #[test]
    fn documented_examples() {
        assert_eq!(fo_valid(&[ex("n' > 0")], &ex("n' >= 0")), FoResult::Valid);
        match fo_valid(&[ex("n' > 0")], &ex("n' > 1")) {
            FoResult::Invalid(m) => assert_eq!(m["n'"], BigInt::from(1)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn integer_reasoning() {
        assert!(fo_valid(&[ex("n' >= 0"), ex("n' != 0")], &ex("n' > 0")).is_valid());
        assert!(fo_valid(&[ex("n' > 0")], &ex("n' - 1 >= 0")).is_valid());
        assert!(fo_valid(&[ex("2 * x == 1")], &ex("false")).is_valid());
        assert!(fo_valid(&[ex("res(k') == n' - 1")], &ex("res(k') + 1 == n'")).is_valid());
        assert!(fo_valid(&[], &ex("n' - 1 + 1 == n'")).is_valid());
        assert!(fo_valid(&[ex("x < y"), ex("y < x + 1")], &ex("false")).is_valid());
        assert!(fo_valid(&[ex("!(n' != 0)")], &ex("n' == 0")).is_valid());
        assert!(matches!(fo_valid(&[], &ex("x * y >= 0")), FoResult::Unknown(_)));
        assert!(fo_valid(&[ex("x * y > 0")], &ex("x * y >= 1")).is_valid());
        assert!(matches!(fo_valid(&[ex("x > 0 || y > 0")], &ex("x > 0")), FoResult::Invalid(_)));
    }

    #[test]
    fn bounds() {
        let (a, b) = single_atom_bound(&ex("n' - 1 >= 0")).unwrap();
        assert_eq!(a, ex("n'"));
        assert_eq!(b.lo, Some(BigInt::from(1)));
        let (_, b) = single_atom_bound(&ex("0 < n'")).unwrap();
        assert_eq!(b.lo, Some(BigInt::from(1)));
        let (_, b) = single_atom_bound(&ex("n' != 0")).unwrap();
        assert!(b.ne.contains(&BigInt::zero()));
        assert!(single_atom_bound(&ex("n' < m'")).is_none());
    }
}
