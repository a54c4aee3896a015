use super::{simplify, Formula, TruthAssignment};

/// Progresses `f` through one truth assignment and simplifies the result.
///
/// The residual formula holds from the next step on exactly when `f` held
/// at the step described by `a`.
pub fn progress(a: &TruthAssignment, f: &Formula) -> Formula {
    simplify(&raw(a, f))
}

fn raw(a: &TruthAssignment, f: &Formula) -> Formula {
    match f {
        Formula::True => Formula::True,
        Formula::False => Formula::False,
        Formula::Atom(p) => {
            if a.contains(p) {
                Formula::True
            } else {
                Formula::False
            }
        }
        Formula::Not(s) => Formula::not(raw(a, s)),
        Formula::And(l, r) => Formula::and(raw(a, l), raw(a, r)),
        Formula::Or(l, r) => Formula::or(raw(a, l), raw(a, r)),
        Formula::Next(s) | Formula::WeakNext(s) => (**s).clone(),
        Formula::Until(l, r) => Formula::or(raw(a, r), Formula::and(raw(a, l), f.clone())),
        Formula::Eventually(s) => Formula::or(raw(a, s), f.clone()),
        Formula::Always(s) => Formula::and(raw(a, s), f.clone()),
    }
}
