//! Terminating rewrite system producing canonical representatives.
//!
//! Every rule preserves finite-trace semantics at every position, so the
//! rewrites are safe inside arbitrary contexts. Operands of `&` and `|` are
//! flattened, sorted by the derived syntactic order, deduplicated and pruned
//! by syntactic implication, then rebuilt left-nested.

use super::Formula;

/// Rewrites `f` to a fixed point of the simplification rules.
pub fn simplify(f: &Formula) -> Formula {
    let mut cur = pass(f);
    loop {
        let next = pass(&cur);
        if next == cur {
            return cur;
        }
        cur = next;
    }
}

fn pass(f: &Formula) -> Formula {
    match f {
        Formula::True | Formula::False | Formula::Atom(_) => f.clone(),
        Formula::Not(s) => match pass(s) {
            Formula::True => Formula::False,
            Formula::False => Formula::True,
            Formula::Not(inner) => *inner,
            other => Formula::not(other),
        },
        Formula::And(..) => {
            let mut items = Vec::new();
            flatten(f, true, &mut items);
            build(items.iter().map(pass).collect(), true)
        }
        Formula::Or(..) => {
            let mut items = Vec::new();
            flatten(f, false, &mut items);
            build(items.iter().map(pass).collect(), false)
        }
        Formula::Next(s) => match pass(s) {
            Formula::False => Formula::False,
            other => Formula::next(other),
        },
        Formula::WeakNext(s) => match pass(s) {
            Formula::True => Formula::True,
            other => Formula::weak_next(other),
        },
        Formula::Until(l, r) => {
            let (l, r) = (pass(l), pass(r));
            match (&l, &r) {
                (_, Formula::True) => Formula::True,
                (_, Formula::False) => Formula::False,
                (Formula::False, _) => r,
                (Formula::True, _) => Formula::eventually(r),
                _ if l == r => l,
                _ => Formula::until(l, r),
            }
        }
        Formula::Eventually(s) => match pass(s) {
            c @ (Formula::True | Formula::False) => c,
            e @ Formula::Eventually(_) => e,
            other => Formula::eventually(other),
        },
        Formula::Always(s) => match pass(s) {
            c @ (Formula::True | Formula::False) => c,
            g @ Formula::Always(_) => g,
            other => Formula::always(other),
        },
    }
}

fn flatten(f: &Formula, conj: bool, out: &mut Vec<Formula>) {
    match (f, conj) {
        (Formula::And(l, r), true) | (Formula::Or(l, r), false) => {
            flatten(l, conj, out);
            flatten(r, conj, out);
        }
        _ => out.push(f.clone()),
    }
}

fn build(items: Vec<Formula>, conj: bool) -> Formula {
    let (unit, zero) = if conj {
        (Formula::True, Formula::False)
    } else {
        (Formula::False, Formula::True)
    };
    let mut flat = Vec::with_capacity(items.len());
    for it in &items {
        flatten(it, conj, &mut flat);
    }
    if flat.iter().any(|x| *x == zero) {
        return zero;
    }
    flat.retain(|x| *x != unit);
    flat.sort();
    flat.dedup();

    // Drop operands made redundant by another kept operand.
    let mut kept = vec![true; flat.len()];
    for i in 0..flat.len() {
        let redundant = (0..flat.len()).any(|j| {
            j != i
                && kept[j]
                && if conj { implies(&flat[j], &flat[i]) } else { implies(&flat[i], &flat[j]) }
        });
        if redundant {
            kept[i] = false;
        }
    }
    let ops: Vec<Formula> = flat.into_iter().zip(kept).filter(|(_, k)| *k).map(|(f, _)| f).collect();

    // Each operand fixes its own truth value at the current position, so
    // its same-position occurrences inside the others can be replaced by it.
    let mut it = ops.iter().enumerate().map(|(j, f)| {
        ops.iter()
            .enumerate()
            .filter(|&(i, _)| i != j)
            .fold(f.clone(), |acc, (_, g)| substitute(&acc, g, &unit))
    });
    match it.next() {
        None => unit,
        Some(first) => it.fold(first, |acc, x| {
            if conj {
                Formula::and(acc, x)
            } else {
                Formula::or(acc, x)
            }
        }),
    }
}

/// Replaces occurrences of `target` reachable through `&` and `|` only.
/// Negations are left alone: a residual that is valid but not `true`, such
/// as `p | !p`, must not become `true`, since `true` is also read as
/// acceptance when the trace ends.
fn substitute(f: &Formula, target: &Formula, value: &Formula) -> Formula {
    if f == target {
        return value.clone();
    }
    match f {
        Formula::And(l, r) => Formula::and(substitute(l, target, value), substitute(r, target, value)),
        Formula::Or(l, r) => Formula::or(substitute(l, target, value), substitute(r, target, value)),
        _ => f.clone(),
    }
}

fn operands(f: &Formula, conj: bool) -> Vec<&Formula> {
    let mut out = Vec::new();
    fn go<'a>(f: &'a Formula, conj: bool, out: &mut Vec<&'a Formula>) {
        match (f, conj) {
            (Formula::And(l, r), true) | (Formula::Or(l, r), false) => {
                go(l, conj, out);
                go(r, conj, out);
            }
            _ => out.push(f),
        }
    }
    go(f, conj, &mut out);
    out
}

/// Sound but incomplete syntactic entailment: when this returns true, `a`
/// implies `b` at every position of every finite trace.
pub fn implies(a: &Formula, b: &Formula) -> bool {
    if a == b || *a == Formula::False || *b == Formula::True {
        return true;
    }
    if let Formula::Or(..) = a {
        return operands(a, false).into_iter().all(|d| implies(d, b));
    }
    if let Formula::And(..) = b {
        return operands(b, true).into_iter().all(|c| implies(a, c));
    }
    if let Formula::And(..) = a {
        if operands(a, true).into_iter().any(|c| implies(c, b)) {
            return true;
        }
    }
    if let Formula::Or(..) = b {
        if operands(b, false).into_iter().any(|d| implies(a, d)) {
            return true;
        }
    }
    match (a, b) {
        (Formula::Always(a1), _) if implies(a1, b) => return true,
        (Formula::Next(a1), Formula::Next(b1)) | (Formula::Next(a1), Formula::WeakNext(b1))
        | (Formula::WeakNext(a1), Formula::WeakNext(b1)) => return implies(a1, b1),
        (Formula::Until(a1, a2), Formula::Until(b1, b2)) if implies(a1, b1) && implies(a2, b2) => {
            return true
        }
        _ => {}
    }
    match b {
        // F b1 is reached from b1 now, or from anything that reaches F b1 later.
        Formula::Eventually(b1) => {
            implies(a, b1)
                || match a {
                    Formula::Eventually(a1) | Formula::Next(a1) => implies(a1, b),
                    Formula::Until(_, a2) => implies(a2, b),
                    _ => false,
                }
        }
        Formula::Until(_, b2) => implies(a, b2),
        _ => false,
    }
}
