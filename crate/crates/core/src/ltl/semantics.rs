//! Finite-trace satisfaction, evaluated clause by clause.

use super::{Formula, LtlError, Trace};

/// Decides `⟨t, i⟩ ⊨ f` under finite-trace semantics.
///
/// `X` is strong (requires a successor step), `WX` holds vacuously at the
/// final step and `G` is `¬F¬`. The reserved `last` atom is evaluated like
/// any other atom; [`Trace::with_last`] injects it at the final index.
pub fn satisfies(t: &Trace, i: usize, f: &Formula) -> Result<bool, LtlError> {
    if i >= t.len() {
        return Err(LtlError::IndexOutOfRange { index: i, len: t.len() });
    }
    Ok(holds(t, i, f))
}

fn holds(t: &Trace, i: usize, f: &Formula) -> bool {
    let n = t.len();
    match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Atom(a) => t.steps()[i].contains(a),
        Formula::Not(s) => !holds(t, i, s),
        Formula::And(l, r) => holds(t, i, l) && holds(t, i, r),
        Formula::Or(l, r) => holds(t, i, l) || holds(t, i, r),
        Formula::Next(s) => i + 1 < n && holds(t, i + 1, s),
        Formula::WeakNext(s) => i + 1 >= n || holds(t, i + 1, s),
        Formula::Until(l, r) => {
            (i..n).any(|j| holds(t, j, r) && (i..j).all(|k| holds(t, k, l)))
        }
        Formula::Eventually(s) => (i..n).any(|j| holds(t, j, s)),
        Formula::Always(s) => (i..n).all(|j| holds(t, j, s)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltl::parse;

    fn sat(steps: &[&[&str]], i: usize, text: &str) -> bool {
        satisfies(&Trace::of(steps), i, &parse(text).unwrap()).unwrap()
    }

    #[test]
    fn sequence_then_eventually() {
        assert!(sat(&[&["p"], &["q"]], 0, "F (p & F q)"));
        assert!(!sat(&[&["q"], &["p"]], 0, "F (p & F q)"));
        assert!(sat(&[&["p", "q"]], 0, "F (p & F q)"));
    }

    #[test]
    fn constants() {
        assert!(sat(&[&[]], 0, "true"));
        assert!(!sat(&[&[]], 0, "false"));
    }

    #[test]
    fn until_clause() {
        assert!(sat(&[&["p"], &["p"], &["q"]], 0, "p U q"));
        assert!(!sat(&[&["p"], &[], &["q"]], 0, "p U q"));
        assert!(!sat(&[&["p"], &["p"]], 0, "p U q"));
        assert!(sat(&[&["q"]], 0, "r U q"));
    }

    #[test]
    fn next_variants_at_end() {
        assert!(!sat(&[&["p"]], 0, "X true"));
        assert!(sat(&[&["p"]], 0, "WX false"));
        assert!(sat(&[&[], &["p"]], 0, "X p"));
        assert!(!sat(&[&[], &[]], 0, "WX p"));
    }

    #[test]
    fn always_and_last() {
        assert!(sat(&[&["p"], &["p"]], 0, "G p"));
        assert!(!sat(&[&["p"], &[]], 0, "G p"));
        let t = Trace::of(&[&[], &[]]).with_last();
        assert!(satisfies(&t, 1, &Formula::atom("last")).unwrap());
        assert!(!satisfies(&t, 0, &Formula::atom("last")).unwrap());
    }

    #[test]
    fn out_of_range() {
        let t = Trace::of(&[&["p"]]);
        assert_eq!(
            satisfies(&t, 1, &Formula::True),
            Err(LtlError::IndexOutOfRange { index: 1, len: 1 })
        );
    }
}
