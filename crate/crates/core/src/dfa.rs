//! Deterministic automata for co-safe formulae, built by progression.
//!
//! Each state is a canonical residual formula. Compilation explores the
//! closure of the initial formula under [`progress`] for every assignment
//! over the formula's own atoms, in breadth-first order with assignments
//! enumerated as bitmasks, so identical inputs yield identical automata.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

use crate::ltl::{progress, simplify, Atom, Formula, Trace, TruthAssignment};

pub const DEFAULT_STATE_LIMIT: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DfaError {
    #[error("formula is not co-safe: {0}")]
    NotCoSafe(String),
    #[error("progression closure exceeded {0} states")]
    TooManyStates(usize),
    #[error("state index {index} out of range ({len} states)")]
    InvalidState { index: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DfaStatus {
    Accepting,
    Violated,
    InProgress,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dfa {
    states: Vec<Formula>,
    atoms: Vec<Atom>,
    /// Row-major `[state][assignment mask]`.
    delta: Vec<usize>,
    accepting: Option<usize>,
    violated: Option<usize>,
}

impl Dfa {
    pub fn compile(f: &Formula) -> Result<Dfa, DfaError> {
        Self::compile_with_limit(f, DEFAULT_STATE_LIMIT)
    }

    pub fn compile_with_limit(f: &Formula, max_states: usize) -> Result<Dfa, DfaError> {
        if !f.is_cosafe() {
            return Err(DfaError::NotCoSafe(f.to_string()));
        }
        let atoms: Vec<Atom> = f.atoms().into_iter().collect();
        let width = 1usize << atoms.len();
        let assignments: Vec<TruthAssignment> = (0..width)
            .map(|mask| {
                atoms
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, a)| a.clone())
                    .collect()
            })
            .collect();

        let initial = simplify(f);
        let mut states = vec![initial.clone()];
        let mut index: HashMap<Formula, usize> = HashMap::from([(initial, 0)]);
        let mut delta = Vec::new();
        let mut queue = VecDeque::from([0usize]);
        while let Some(q) = queue.pop_front() {
            let mut row = Vec::with_capacity(width);
            for a in &assignments {
                let succ = progress(a, &states[q]);
                let id = match index.get(&succ) {
                    Some(&id) => id,
                    None => {
                        if states.len() >= max_states {
                            return Err(DfaError::TooManyStates(max_states));
                        }
                        let id = states.len();
                        index.insert(succ.clone(), id);
                        states.push(succ);
                        queue.push_back(id);
                        id
                    }
                };
                row.push(id);
            }
            // BFS pops states in index order, so rows are appended in order.
            debug_assert_eq!(delta.len(), q * width);
            delta.extend(row);
        }
        let accepting = states.iter().position(|s| *s == Formula::True);
        let violated = states.iter().position(|s| *s == Formula::False);
        Ok(Dfa { states, atoms, delta, accepting, violated })
    }

    pub fn initial(&self) -> usize {
        0
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    /// The atoms the automaton reads; all other atoms are ignored.
    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn states(&self) -> &[Formula] {
        &self.states
    }

    pub fn formula(&self, q: usize) -> Result<&Formula, DfaError> {
        self.check(q)?;
        Ok(&self.states[q])
    }

    pub fn accepting_state(&self) -> Option<usize> {
        self.accepting
    }

    pub fn violated_state(&self) -> Option<usize> {
        self.violated
    }

    fn check(&self, q: usize) -> Result<(), DfaError> {
        if q < self.states.len() {
            Ok(())
        } else {
            Err(DfaError::InvalidState { index: q, len: self.states.len() })
        }
    }

    /// Restriction of an assignment to the automaton's atoms, as a bitmask.
    pub fn mask(&self, a: &TruthAssignment) -> usize {
        self.atoms
            .iter()
            .enumerate()
            .filter(|(_, atom)| a.contains(atom))
            .fold(0, |m, (i, _)| m | (1 << i))
    }

    pub fn step(&self, q: usize, a: &TruthAssignment) -> Result<usize, DfaError> {
        self.check(q)?;
        Ok(self.delta[(q << self.atoms.len()) + self.mask(a)])
    }

    /// Final state after reading the whole trace from the initial state.
    pub fn run(&self, t: &Trace) -> usize {
        t.steps()
            .iter()
            .fold(self.initial(), |q, a| self.delta[(q << self.atoms.len()) + self.mask(a)])
    }

    /// True iff the run visits an accepting state. Accepting states are
    /// absorbing, so this is the same as ending in one.
    pub fn accepts(&self, t: &Trace) -> bool {
        let mut q = self.initial();
        if Some(q) == self.accepting {
            return true;
        }
        for a in t.steps() {
            q = self.delta[(q << self.atoms.len()) + self.mask(a)];
            if Some(q) == self.accepting {
                return true;
            }
        }
        false
    }

    pub fn classify(&self, q: usize) -> Result<DfaStatus, DfaError> {
        self.check(q)?;
        Ok(if Some(q) == self.accepting {
            DfaStatus::Accepting
        } else if Some(q) == self.violated {
            DfaStatus::Violated
        } else {
            DfaStatus::InProgress
        })
    }

    /// Graphviz rendering with one edge per (state, assignment).
    pub fn export_dot(&self) -> String {
        let mut out = String::from("digraph {\n  rankdir=LR;\n");
        for (q, f) in self.states.iter().enumerate() {
            let shape = if Some(q) == self.accepting { "doublecircle" } else { "circle" };
            let label = f.to_string().replace('"', "\\\"");
            let _ = writeln!(out, "  {q} [label=\"{label}\", shape={shape}];");
        }
        let width = 1usize << self.atoms.len();
        for q in 0..self.states.len() {
            for mask in 0..width {
                let names: Vec<&str> = self
                    .atoms
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, a)| a.name())
                    .collect();
                let _ = writeln!(
                    out,
                    "  {q} -> {} [label=\"{{{}}}\"];",
                    self.delta[q * width + mask],
                    names.join(",")
                );
            }
        }
        out.push_str("}\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltl::parse;

    fn dfa(text: &str) -> Dfa {
        Dfa::compile(&parse(text).unwrap()).unwrap()
    }

    fn a(names: &[&str]) -> TruthAssignment {
        TruthAssignment::of(names)
    }

    #[test]
    fn single_eventually() {
        let d = dfa("F p");
        assert_eq!(d.num_states(), 2);
        assert_eq!(d.formula(0).unwrap(), &parse("F p").unwrap());
        let acc = d.accepting_state().unwrap();
        assert_eq!(d.step(0, &a(&["p"])).unwrap(), acc);
        assert_eq!(d.step(0, &a(&[])).unwrap(), 0);
        assert_eq!(d.step(0, &a(&["q"])).unwrap(), 0);
        assert_eq!(d.classify(0).unwrap(), DfaStatus::InProgress);
        assert_eq!(d.classify(acc).unwrap(), DfaStatus::Accepting);
    }

    #[test]
    fn constant_true() {
        let d = Dfa::compile(&Formula::True).unwrap();
        assert_eq!(d.num_states(), 1);
        assert_eq!(d.classify(0).unwrap(), DfaStatus::Accepting);
        assert_eq!(d.step(0, &a(&["x"])).unwrap(), 0);
        assert!(d.accepts(&Trace::of(&[&[]])));
    }

    #[test]
    fn bare_atom_can_be_violated() {
        let d = dfa("p");
        let q = d.step(0, &a(&[])).unwrap();
        assert_eq!(d.classify(q).unwrap(), DfaStatus::Violated);
        assert_eq!(d.step(q, &a(&["p"])).unwrap(), q);
    }

    #[test]
    fn acceptance() {
        let d = dfa("F p");
        assert!(d.accepts(&Trace::of(&[&[], &["p"], &[]])));
        assert!(!d.accepts(&Trace::of(&[&[], &[]])));
    }

    #[test]
    fn chained_sequence_has_one_state_per_stage() {
        assert_eq!(dfa("F (a & F (b & F (c & F d)))").num_states(), 5);
    }

    #[test]
    fn rejects_non_cosafe_and_budget() {
        assert!(matches!(
            Dfa::compile(&parse("G p").unwrap()),
            Err(DfaError::NotCoSafe(_))
        ));
        assert_eq!(
            Dfa::compile_with_limit(&parse("F (a & F b)").unwrap(), 2),
            Err(DfaError::TooManyStates(2))
        );
        let d = dfa("F p");
        assert!(matches!(d.step(7, &a(&[])), Err(DfaError::InvalidState { .. })));
        assert!(d.classify(2).is_err());
    }

    #[test]
    fn dot_export_shapes() {
        let dot = dfa("F p").export_dot();
        assert!(dot.starts_with("digraph {"));
        assert_eq!(dot.matches("shape=").count(), 2);
        assert_eq!(dot.matches("->").count(), 4);
        let dot = Dfa::compile(&Formula::True).unwrap().export_dot();
        assert_eq!(dot.matches("shape=").count(), 1);
    }
}
