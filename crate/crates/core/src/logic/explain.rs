//! Why a segment is not in a formula's denotation: the connectives on the
//! way down to the first part that cannot be matched.

use super::{member_in, Bindings, Formula, MemberError};
use crate::trace::Trace;

const MAX_UNFOLD: usize = 8;

fn holds(t: &Trace, f: &Formula, beta: &Bindings, a: usize, b: usize) -> Result<bool, MemberError> {
    member_in(t, f, beta, a, b)
}

/// Lines describing the failing path for a segment `[a, b]` that is not a
/// member of `f`. Nested lines are indented by two spaces per level.
pub fn explain_failure(t: &Trace, f: &Formula, beta: &Bindings, a: usize, b: usize) -> Result<Vec<String>, MemberError> {
    let mut out = Vec::new();
    go(t, f, beta, a, b, 0, MAX_UNFOLD, &mut out)?;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn go(
    t: &Trace,
    f: &Formula,
    beta: &Bindings,
    a: usize,
    b: usize,
    depth: usize,
    unfolds: usize,
    out: &mut Vec<String>,
) -> Result<(), MemberError> {
    let pad = "  ".repeat(depth);
    let seg = if a == b { format!("entry {a}") } else { format!("entries {a}..{b}") };
    match f {
        Formula::And(x, y) => {
            let (side, g) = if !holds(t, x, beta, a, b)? { ("left", x) } else { ("right", y) };
            out.push(format!("{pad}/\\ on {seg}: the {side} conjunct fails"));
            go(t, g, beta, a, b, depth + 1, unfolds, out)
        }
        Formula::Or(x, y) => {
            out.push(format!("{pad}\\/ on {seg}: neither disjunct holds"));
            out.push(format!("{pad}  left:"));
            go(t, x, beta, a, b, depth + 2, unfolds, out)?;
            out.push(format!("{pad}  right:"));
            go(t, y, beta, a, b, depth + 2, unfolds, out)
        }
        Formula::Mu { var, .. } => match f.unfold() {
            Some(g) if unfolds > 0 => {
                out.push(format!("{pad}mu {var} on {seg}: unfolded once"));
                go(t, &g, beta, a, b, depth + 1, unfolds - 1, out)
            }
            _ => {
                out.push(format!("{pad}`{f}` does not hold on {seg}"));
                Ok(())
            }
        },
        Formula::Chop(..) => {
            let items = f.chop_items();
            // longest prefix of the chain that matches some segment from a
            let mut ends: Vec<usize> = Vec::new();
            let mut matched = 0;
            for k in 1..=items.len() {
                let pre = Formula::chop_all(items[..k].iter().map(|x| (*x).clone()).collect());
                let mut e = Vec::new();
                for c in a..=b {
                    if holds(t, &pre, beta, a, c)? {
                        e.push(c);
                    }
                }
                if e.is_empty() {
                    break;
                }
                matched = k;
                ends = e;
            }
            if matched == 0 {
                out.push(format!("{pad}** on {seg}: item 1 `{}` matches no segment starting at entry {a}", items[0]));
                return go(t, items[0], beta, a, a, depth + 1, unfolds, out);
            }
            if matched == items.len() {
                let e: Vec<String> = ends.iter().map(|x| x.to_string()).collect();
                out.push(format!(
                    "{pad}** on {seg}: all {} items match, but only up to entry {}, not to entry {b}",
                    items.len(),
                    e.join(" or ")
                ));
                return Ok(());
            }
            let e: Vec<String> = ends.iter().map(|x| x.to_string()).collect();
            out.push(format!(
                "{pad}** on {seg}: items 1..{matched} match up to entry {}; item {} `{}` cannot continue",
                e.join(" or "),
                matched + 1,
                items[matched]
            ));
            Ok(())
        }
        Formula::State(p) => {
            out.push(format!("{pad}[{p}] does not hold on {seg}"));
            Ok(())
        }
        other => {
            out.push(format!("{pad}`{other}` does not match {seg}"));
            Ok(())
        }
    }
}
