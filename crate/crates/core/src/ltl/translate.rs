//! Translation from LTL over finite traces into the co-safe fragment.
//!
//! The translated formula is read over `t · t'` where `t` carries the
//! reserved `last` atom at its final step and `t'` is an arbitrary
//! continuation. `G` and `WX` become `φ U (last & φ)` and `last | X φ`.
//! Strong `X` and the witness of `U` / `F` are additionally pinned to the
//! finite prefix (`!last & X φ`, `φ U (ψ & F last)`): without the guard a
//! continuation can satisfy obligations the finite trace never met, e.g.
//! `X (p | !p)` on a one-step trace.

use super::{Formula, LtlError};

/// Translates an LTL_f formula (negation on atoms only) into co-safe LTL.
pub fn translate_ltlf_to_cosafe(f: &Formula) -> Result<Formula, LtlError> {
    let last = || Formula::Atom(super::Atom::last());
    Ok(match f {
        Formula::True | Formula::False | Formula::Atom(_) => f.clone(),
        Formula::Not(s) => match &**s {
            Formula::Atom(_) => f.clone(),
            Formula::True => Formula::False,
            Formula::False => Formula::True,
            other => return Err(LtlError::CompoundNegation(other.to_string())),
        },
        Formula::And(l, r) => {
            Formula::and(translate_ltlf_to_cosafe(l)?, translate_ltlf_to_cosafe(r)?)
        }
        Formula::Or(l, r) => {
            Formula::or(translate_ltlf_to_cosafe(l)?, translate_ltlf_to_cosafe(r)?)
        }
        Formula::Next(s) => {
            Formula::and(Formula::not(last()), Formula::next(translate_ltlf_to_cosafe(s)?))
        }
        Formula::WeakNext(s) => Formula::or(last(), Formula::next(translate_ltlf_to_cosafe(s)?)),
        Formula::Until(l, r) => Formula::until(
            translate_ltlf_to_cosafe(l)?,
            Formula::and(translate_ltlf_to_cosafe(r)?, Formula::eventually(last())),
        ),
        Formula::Eventually(s) => Formula::eventually(Formula::and(
            translate_ltlf_to_cosafe(s)?,
            Formula::eventually(last()),
        )),
        Formula::Always(s) => {
            let inner = translate_ltlf_to_cosafe(s)?;
            Formula::until(inner.clone(), Formula::and(last(), inner))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltl::{parse, satisfies, Trace};

    fn tr(text: &str) -> Formula {
        translate_ltlf_to_cosafe(&parse(text).unwrap()).unwrap()
    }

    #[test]
    fn always_becomes_until_last() {
        assert_eq!(tr("G p"), parse("p U (last & p)").unwrap());
    }

    #[test]
    fn atoms_unchanged() {
        assert_eq!(tr("p"), parse("p").unwrap());
        assert_eq!(tr("!p"), parse("!p").unwrap());
    }

    #[test]
    fn weak_next_expansion() {
        // !last -> X p, written as a disjunction
        assert_eq!(tr("WX p"), parse("last | X p").unwrap());
    }

    #[test]
    fn output_is_cosafe() {
        for text in ["G (p | WX q)", "F G p", "p U G q", "WX WX p", "X G !p"] {
            assert!(tr(text).is_cosafe(), "{text}");
        }
    }

    #[test]
    fn rejects_compound_negation() {
        assert!(matches!(
            translate_ltlf_to_cosafe(&parse("!F p").unwrap()),
            Err(LtlError::CompoundNegation(_))
        ));
    }

    #[test]
    fn unguarded_next_crosses_the_trace_end() {
        // `X (p | !p)` is false on a one-step trace, yet every continuation
        // satisfies it when X is left untranslated.
        let f = parse("X (p | !p)").unwrap();
        let t = Trace::of(&[&[]]);
        assert!(!satisfies(&t, 0, &f).unwrap());
        let extended = t.with_last().concat(&Trace::of(&[&[], &["p"]]));
        assert!(satisfies(&extended, 0, &f).unwrap());
        assert!(!satisfies(&extended, 0, &translate_ltlf_to_cosafe(&f).unwrap()).unwrap());
    }
}
