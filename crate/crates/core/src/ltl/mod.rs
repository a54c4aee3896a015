//! Linear temporal logic over finite traces.
//!
//! Formulae are plain trees of [`Formula`] nodes over named [`Atom`]s. The
//! module covers parsing and rendering, the finite-trace satisfaction
//! relation, formula progression, a terminating simplifier that produces
//! canonical representatives, and the translation from LTL over finite
//! traces into the co-safe fragment.

mod parse;
mod progress;
mod render;
mod semantics;
mod simplify;
mod specfile;
mod translate;

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::{parse, ParseError};
pub use progress::progress;
pub use semantics::satisfies;
pub use simplify::{implies, simplify};
pub use specfile::{parse_spec_file, validate_spec};
pub use translate::translate_ltlf_to_cosafe;

/// Name of the reserved end-of-trace atom.
pub const LAST: &str = "last";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LtlError {
    #[error("invalid atom name `{0}`: expected [a-z][a-z0-9_]*")]
    InvalidAtom(String),
    #[error("index {index} out of range for trace of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("negation over a compound formula is not allowed here: {0}")]
    CompoundNegation(String),
    #[error("formula is not co-safe: {0}")]
    NotCoSafe(String),
    #[error("reserved atom `last` is not allowed in a task specification")]
    ReservedAtom,
    #[error("line {line}: {source}")]
    SpecLine { line: usize, source: ParseError },
}

/// An atomic proposition.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Atom(Arc<str>);

impl Atom {
    pub fn new(name: &str) -> Result<Self, LtlError> {
        if is_atom_name(name) {
            Ok(Atom(Arc::from(name)))
        } else {
            Err(LtlError::InvalidAtom(name.to_string()))
        }
    }

    /// The reserved `last` atom marking the final step of a finite trace.
    pub fn last() -> Self {
        Atom(Arc::from(LAST))
    }

    pub fn name(&self) -> &str {
        &self.0
    }

    pub fn is_last(&self) -> bool {
        &*self.0 == LAST
    }
}

pub(crate) fn is_atom_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => {}
        _ => return false,
    }
    if name == "true" || name == "false" {
        return false;
    }
    chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

impl TryFrom<String> for Atom {
    type Error = LtlError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Atom::new(&s)
    }
}

impl From<Atom> for String {
    fn from(a: Atom) -> String {
        a.0.to_string()
    }
}

impl fmt::Debug for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// LTL abstract syntax tree.
///
/// The derived ordering is the total syntactic order used to sort the
/// operands of commutative connectives during simplification.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Formula {
    True,
    False,
    Atom(Atom),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Next(Box<Formula>),
    WeakNext(Box<Formula>),
    Until(Box<Formula>, Box<Formula>),
    /// Stored as its own node; semantically `true U φ`.
    Eventually(Box<Formula>),
    Always(Box<Formula>),
}

impl Formula {
    /// Builds an atom node. Panics on an invalid name; use [`Atom::new`] for
    /// fallible construction.
    pub fn atom(name: &str) -> Self {
        Formula::Atom(Atom::new(name).expect("invalid atom name"))
    }

    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(l: Formula, r: Formula) -> Self {
        Formula::And(Box::new(l), Box::new(r))
    }

    pub fn or(l: Formula, r: Formula) -> Self {
        Formula::Or(Box::new(l), Box::new(r))
    }

    pub fn next(f: Formula) -> Self {
        Formula::Next(Box::new(f))
    }

    pub fn weak_next(f: Formula) -> Self {
        Formula::WeakNext(Box::new(f))
    }

    pub fn until(l: Formula, r: Formula) -> Self {
        Formula::Until(Box::new(l), Box::new(r))
    }

    pub fn eventually(f: Formula) -> Self {
        Formula::Eventually(Box::new(f))
    }

    pub fn always(f: Formula) -> Self {
        Formula::Always(Box::new(f))
    }

    /// True iff the formula lies in the co-safe fragment: negation only
    /// directly over atoms, and no `G` / `WX`.
    pub fn is_cosafe(&self) -> bool {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) => true,
            Formula::Not(sub) => matches!(**sub, Formula::Atom(_)),
            Formula::And(l, r) | Formula::Or(l, r) | Formula::Until(l, r) => {
                l.is_cosafe() && r.is_cosafe()
            }
            Formula::Next(sub) | Formula::Eventually(sub) => sub.is_cosafe(),
            Formula::WeakNext(_) | Formula::Always(_) => false,
        }
    }

    /// The set of atoms mentioned anywhere in the formula.
    pub fn atoms(&self) -> BTreeSet<Atom> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut BTreeSet<Atom>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(a) => {
                out.insert(a.clone());
            }
            Formula::Not(s)
            | Formula::Next(s)
            | Formula::WeakNext(s)
            | Formula::Eventually(s)
            | Formula::Always(s) => s.collect_atoms(out),
            Formula::And(l, r) | Formula::Or(l, r) | Formula::Until(l, r) => {
                l.collect_atoms(out);
                r.collect_atoms(out);
            }
        }
    }

    /// Height of the syntax tree; leaves have depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) => 1,
            Formula::Not(s)
            | Formula::Next(s)
            | Formula::WeakNext(s)
            | Formula::Eventually(s)
            | Formula::Always(s) => 1 + s.depth(),
            Formula::And(l, r) | Formula::Or(l, r) | Formula::Until(l, r) => {
                1 + l.depth().max(r.depth())
            }
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) => 1,
            Formula::Not(s)
            | Formula::Next(s)
            | Formula::WeakNext(s)
            | Formula::Eventually(s)
            | Formula::Always(s) => 1 + s.size(),
            Formula::And(l, r) | Formula::Or(l, r) | Formula::Until(l, r) => {
                1 + l.size() + r.size()
            }
        }
    }

    /// Conjunction of all formulae, `true` for an empty list.
    pub fn conjunction<I: IntoIterator<Item = Formula>>(items: I) -> Formula {
        let mut it = items.into_iter();
        match it.next() {
            None => Formula::True,
            Some(first) => it.fold(first, Formula::and),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render::render(self))
    }
}

impl std::str::FromStr for Formula {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

impl Serialize for Formula {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&render::render(self))
    }
}

impl<'de> Deserialize<'de> for Formula {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse(&text).map_err(serde::de::Error::custom)
    }
}

pub use render::render;

/// The set of atoms true at one step of a trace.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TruthAssignment(BTreeSet<Atom>);

impl TruthAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds an assignment from atom names. Panics on invalid names.
    pub fn of(names: &[&str]) -> Self {
        TruthAssignment(names.iter().map(|n| Atom::new(n).expect("invalid atom")).collect())
    }

    pub fn contains(&self, atom: &Atom) -> bool {
        self.0.contains(atom)
    }

    pub fn insert(&mut self, atom: Atom) -> bool {
        self.0.insert(atom)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Atom> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<Atom> for TruthAssignment {
    fn from_iter<I: IntoIterator<Item = Atom>>(iter: I) -> Self {
        TruthAssignment(iter.into_iter().collect())
    }
}

impl fmt::Display for TruthAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str("}")
    }
}

/// A finite sequence of truth assignments.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Trace {
    steps: Vec<TruthAssignment>,
}

impl Trace {
    pub fn new(steps: Vec<TruthAssignment>) -> Self {
        Trace { steps }
    }

    /// Builds a trace from per-step atom name lists.
    pub fn of(steps: &[&[&str]]) -> Self {
        Trace::new(steps.iter().map(|s| TruthAssignment::of(s)).collect())
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[TruthAssignment] {
        &self.steps
    }

    pub fn get(&self, i: usize) -> Option<&TruthAssignment> {
        self.steps.get(i)
    }

    pub fn push(&mut self, a: TruthAssignment) {
        self.steps.push(a);
    }

    /// Copy of this trace with `last` added to the final step.
    pub fn with_last(&self) -> Trace {
        let mut t = self.clone();
        if let Some(a) = t.steps.last_mut() {
            a.insert(Atom::last());
        }
        t
    }

    /// Concatenation `self · other`.
    pub fn concat(&self, other: &Trace) -> Trace {
        let mut steps = self.steps.clone();
        steps.extend(other.steps.iter().cloned());
        Trace { steps }
    }

    /// Suffix starting at `i`.
    pub fn suffix(&self, i: usize) -> Trace {
        Trace { steps: self.steps[i.min(self.steps.len())..].to_vec() }
    }
}

impl FromIterator<TruthAssignment> for Trace {
    fn from_iter<I: IntoIterator<Item = TruthAssignment>>(iter: I) -> Self {
        Trace { steps: iter.into_iter().collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atom_names() {
        assert!(Atom::new("got_wood").is_ok());
        assert!(Atom::new("a1").is_ok());
        assert!(Atom::new("Wood").is_err());
        assert!(Atom::new("1a").is_err());
        assert!(Atom::new("").is_err());
        assert!(Atom::new("true").is_err());
    }

    #[test]
    fn cosafe_fragment() {
        let p = Formula::atom("p");
        let q = Formula::atom("q");
        assert!(Formula::eventually(Formula::and(p.clone(), Formula::eventually(q.clone()))).is_cosafe());
        assert!(!Formula::not(Formula::eventually(p.clone())).is_cosafe());
        assert!(!Formula::always(p.clone()).is_cosafe());
        assert!(!Formula::weak_next(p.clone()).is_cosafe());
        assert!(Formula::until(Formula::not(p), q).is_cosafe());
    }

    #[test]
    fn depth_and_atoms() {
        let f = Formula::until(Formula::atom("p"), Formula::next(Formula::atom("q")));
        assert_eq!(f.depth(), 3);
        assert_eq!(f.size(), 4);
        assert_eq!(f.atoms().len(), 2);
    }

    #[test]
    fn last_injection() {
        let t = Trace::of(&[&["p"], &[]]).with_last();
        assert!(!t.steps()[0].contains(&Atom::last()));
        assert!(t.steps()[1].contains(&Atom::last()));
    }
}
