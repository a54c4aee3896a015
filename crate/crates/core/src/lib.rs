//! Multi-agent reinforcement learning with co-safe temporal-logic tasks.
//!
//! Task specifications are co-safe LTL formulae ([`ltl`]) compiled into
//! progression automata ([`dfa`]). A base Markov game is extended with the
//! automaton state ([`game`]) so that task rewards become Markovian, and
//! independent learners ([`learn`], [`lpopl`]) are trained on the product in
//! a two-agent craft world ([`craftworld`]). [`harness`] runs experiments.

pub mod craftworld;
pub mod dfa;
pub mod game;
pub mod harness;
pub mod learn;
pub mod lpopl;
pub mod ltl;
