//! Markov games, history-dependent task rewards, and the extended product.
//!
//! An [`ExtendedGame`] pairs a base game with the automaton of one task
//! specification. Its state is `(automaton state, base state)`; each step
//! applies the base dynamics, labels the successor base state, advances the
//! automaton on that label and pays the [`RewardScheme`] reward for the
//! automaton move. [`NmrgTraceOracle`] computes the same rewards from the raw
//! label history alone.

use std::fmt::Debug;
use std::hash::Hash;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dfa::{Dfa, DfaError, DfaStatus};
use crate::ltl::{progress, simplify, validate_spec, Formula, LtlError, TruthAssignment};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },
    #[error("agent {agent}: action {action} out of range")]
    InvalidAction { agent: usize, action: usize },
    #[error("invalid reward scheme: {0}")]
    InvalidRewardScheme(String),
    #[error("step called before reset")]
    NotStarted,
    #[error(transparent)]
    Spec(#[from] LtlError),
    #[error(transparent)]
    Dfa(#[from] DfaError),
}

/// A (deterministic or stochastic) multi-agent environment with a labelling
/// function over its states.
pub trait MarkovGame {
    type State: Clone + Eq + Hash + Debug;

    fn num_agents(&self) -> usize;

    fn num_actions(&self, agent: usize) -> usize;

    fn initial_state(&self) -> Self::State;

    /// Successor of `state` under one action per agent.
    fn step(&self, state: &Self::State, joint: &[usize]) -> Result<Self::State, GameError>;

    /// Atoms true in `state`. Must depend on the state alone.
    fn label(&self, state: &Self::State) -> TruthAssignment;
}

/// Reward paid for each automaton move. Rewards are shared by all agents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardScheme {
    pub r_satisfy: f64,
    pub r_progress: f64,
    pub r_stall: f64,
    pub r_violate: f64,
    pub terminate_on_violation: bool,
}

impl Default for RewardScheme {
    fn default() -> Self {
        RewardScheme {
            r_satisfy: 1.0,
            r_progress: 0.0,
            r_stall: -1.0,
            r_violate: -1.0,
            terminate_on_violation: true,
        }
    }
}

impl RewardScheme {
    pub fn new(
        r_satisfy: f64,
        r_progress: f64,
        r_stall: f64,
        r_violate: f64,
        terminate_on_violation: bool,
    ) -> Result<Self, GameError> {
        let s = RewardScheme { r_satisfy, r_progress, r_stall, r_violate, terminate_on_violation };
        s.validate()?;
        Ok(s)
    }

    /// Requires `r_satisfy > r_progress > r_violate` and
    /// `r_progress >= r_stall >= r_violate`.
    pub fn validate(&self) -> Result<(), GameError> {
        let all = [self.r_satisfy, self.r_progress, self.r_stall, self.r_violate];
        if all.iter().any(|r| !r.is_finite()) {
            return Err(GameError::InvalidRewardScheme("rewards must be finite".into()));
        }
        if !(self.r_satisfy > self.r_progress && self.r_progress > self.r_violate) {
            return Err(GameError::InvalidRewardScheme(
                "need r_satisfy > r_progress > r_violate".into(),
            ));
        }
        if !(self.r_progress >= self.r_stall && self.r_stall >= self.r_violate) {
            return Err(GameError::InvalidRewardScheme(
                "need r_progress >= r_stall >= r_violate".into(),
            ));
        }
        Ok(())
    }

    /// Reward for an automaton move that ends in `status`.
    pub fn reward(&self, moved: bool, status: DfaStatus) -> f64 {
        match (moved, status) {
            (false, _) => self.r_stall,
            (true, DfaStatus::Accepting) => self.r_satisfy,
            (true, DfaStatus::Violated) => self.r_violate,
            (true, DfaStatus::InProgress) => self.r_progress,
        }
    }

    /// Whether reaching `status` ends the episode (absorbing, zero bootstrap).
    pub fn is_terminal(&self, status: DfaStatus) -> bool {
        match status {
            DfaStatus::Accepting => true,
            DfaStatus::Violated => self.terminate_on_violation,
            DfaStatus::InProgress => false,
        }
    }
}

/// Product state of the extended game.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExtendedState<S> {
    pub dfa_state: usize,
    pub base: S,
}

impl<S> ExtendedState<S> {
    /// Projection onto the base game.
    pub fn strip(self) -> S {
        self.base
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition<S> {
    pub state: ExtendedState<S>,
    pub joint_action: Vec<usize>,
    /// Label of the successor base state.
    pub label: TruthAssignment,
    pub reward: f64,
    pub next_state: ExtendedState<S>,
    /// The automaton reached an absorbing accepting or violated state.
    pub terminal: bool,
    /// The episode hit its step limit without terminating.
    pub truncated: bool,
}

impl<S> Transition<S> {
    pub fn ends_episode(&self) -> bool {
        self.terminal || self.truncated
    }
}

pub const DEFAULT_STEP_LIMIT: usize = 300;

/// Base game extended with the automaton of one specification.
#[derive(Debug, Clone)]
pub struct ExtendedGame<G: MarkovGame> {
    game: G,
    spec: Formula,
    dfa: Arc<Dfa>,
    scheme: RewardScheme,
    step_limit: usize,
    current: Option<ExtendedState<G::State>>,
    steps: usize,
}

impl<G: MarkovGame> ExtendedGame<G> {
    pub fn new(game: G, spec: Formula, scheme: RewardScheme) -> Result<Self, GameError> {
        validate_spec(&spec)?;
        scheme.validate()?;
        let dfa = Arc::new(Dfa::compile(&spec)?);
        Ok(Self::with_dfa(game, spec, dfa, scheme))
    }

    /// Uses an already compiled automaton for `spec`.
    pub fn with_dfa(game: G, spec: Formula, dfa: Arc<Dfa>, scheme: RewardScheme) -> Self {
        ExtendedGame {
            game,
            spec,
            dfa,
            scheme,
            step_limit: DEFAULT_STEP_LIMIT,
            current: None,
            steps: 0,
        }
    }

    pub fn with_step_limit(mut self, limit: usize) -> Self {
        self.step_limit = limit;
        self
    }

    pub fn game(&self) -> &G {
        &self.game
    }

    pub fn spec(&self) -> &Formula {
        &self.spec
    }

    pub fn dfa(&self) -> &Dfa {
        &self.dfa
    }

    pub fn dfa_arc(&self) -> Arc<Dfa> {
        Arc::clone(&self.dfa)
    }

    pub fn scheme(&self) -> &RewardScheme {
        &self.scheme
    }

    pub fn step_limit(&self) -> usize {
        self.step_limit
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn current(&self) -> Option<&ExtendedState<G::State>> {
        self.current.as_ref()
    }

    /// Embeds a base state at the automaton's initial state.
    pub fn lift(&self, base: G::State) -> ExtendedState<G::State> {
        ExtendedState { dfa_state: self.dfa.initial(), base }
    }

    pub fn reset(&mut self) -> ExtendedState<G::State> {
        let s = self.lift(self.game.initial_state());
        self.current = Some(s.clone());
        self.steps = 0;
        s
    }

    /// Product dynamics from an arbitrary extended state, without touching
    /// the episode position. Returns `(next, label, reward, terminal)`.
    pub fn successor(
        &self,
        state: &ExtendedState<G::State>,
        joint: &[usize],
    ) -> Result<(ExtendedState<G::State>, TruthAssignment, f64, bool), GameError> {
        let base = self.game.step(&state.base, joint)?;
        let label = self.game.label(&base);
        let q = self.dfa.step(state.dfa_state, &label)?;
        let status = self.dfa.classify(q)?;
        let reward = self.scheme.reward(q != state.dfa_state, status);
        let terminal = self.scheme.is_terminal(status);
        Ok((ExtendedState { dfa_state: q, base }, label, reward, terminal))
    }

    pub fn step(&mut self, joint: &[usize]) -> Result<Transition<G::State>, GameError> {
        let state = self.current.clone().ok_or(GameError::NotStarted)?;
        let (next, label, reward, terminal) = self.successor(&state, joint)?;
        self.steps += 1;
        let truncated = !terminal && self.steps >= self.step_limit;
        self.current = Some(next.clone());
        Ok(Transition {
            state,
            joint_action: joint.to_vec(),
            label,
            reward,
            next_state: next,
            terminal,
            truncated,
        })
    }
}

/// History-based reward: the task reward recomputed from scratch by
/// progressing the specification through every recorded label.
#[derive(Debug, Clone)]
pub struct NmrgTraceOracle<S> {
    spec: Formula,
    scheme: RewardScheme,
    history: Vec<(S, Vec<usize>, TruthAssignment)>,
}

impl<S> NmrgTraceOracle<S> {
    pub fn new(spec: Formula, scheme: RewardScheme) -> Self {
        NmrgTraceOracle { spec, scheme, history: Vec::new() }
    }

    pub fn push(&mut self, state: S, joint: Vec<usize>, label: TruthAssignment) {
        self.history.push((state, joint, label));
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    /// Reward for the most recent step, or `None` on an empty history.
    pub fn reward(&self) -> Option<f64> {
        let (last, prefix) = self.history.split_last()?;
        let before = prefix.iter().fold(simplify(&self.spec), |f, (_, _, l)| progress(l, &f));
        let after = progress(&last.2, &before);
        let status = match after {
            Formula::True => DfaStatus::Accepting,
            Formula::False => DfaStatus::Violated,
            _ => DfaStatus::InProgress,
        };
        Some(self.scheme.reward(after != before, status))
    }
}
