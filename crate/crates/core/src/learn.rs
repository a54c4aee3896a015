//! Value-based learners and the independent multi-agent training loop.
//!
//! Two backends share the [`Learner`] interface: exact tabular Q-learning
//! keyed on a discrete state key, and a small fully connected Q-network
//! trained from a replay buffer against a periodically synced target copy.
//! [`IndependentTrainer`] runs one learner per agent on an
//! [`ExtendedGame`]; each agent picks its own action, the joint action is
//! executed, and every learner is updated with the shared reward.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{ExtendedGame, ExtendedState, GameError, MarkovGame};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("input has length {got}, network expects {expected}")]
    Shape { expected: usize, got: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Game(#[from] GameError),
}

/// Named RNG streams derived from one run seed.
pub mod streams {
    use super::*;

    pub const ENV: u64 = 0;
    pub const INIT: u64 = 1;
    pub const REPLAY: u64 = 2;
    pub const POLICY: u64 = 16;

    pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(stream);
        r
    }

    pub fn policy(seed: u64, agent: usize) -> ChaCha8Rng {
        rng(seed, POLICY + agent as u64)
    }
}

/// What a learner sees of a state: a discrete key for tables and a feature
/// vector for networks. Either part may be left empty when unused.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Obs {
    pub key: Vec<usize>,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub obs: Obs,
    pub action: usize,
    pub reward: f64,
    pub next: Obs,
    pub terminal: bool,
}

/// Games whose states can be turned into learner observations.
pub trait Observe: MarkovGame {
    /// Discrete key of a base state (for tables).
    fn state_key(&self, s: &Self::State) -> Vec<usize>;

    /// Features of a base state from one agent's point of view.
    fn base_features(&self, s: &Self::State, agent: usize) -> Vec<f64>;
}

impl Observe for crate::craftworld::CraftWorld {
    fn state_key(&self, s: &Self::State) -> Vec<usize> {
        s.positions.iter().flat_map(|&(r, c)| [r, c]).collect()
    }

    fn base_features(&self, s: &Self::State, agent: usize) -> Vec<f64> {
        self.features(s, agent, 0, 0)
    }
}

/// How extended states are encoded for product learners.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObsConfig {
    /// Width of the automaton-state one-hot appended to features.
    pub max_dfa_states: usize,
    /// Prepended to table keys so states of different tasks never collide.
    pub context: usize,
    pub keys: bool,
    pub features: bool,
}

pub fn product_obs<G: Observe>(
    game: &G,
    s: &ExtendedState<G::State>,
    agent: usize,
    cfg: &ObsConfig,
) -> Obs {
    let key = if cfg.keys {
        let mut k = vec![cfg.context, s.dfa_state];
        k.extend(game.state_key(&s.base));
        k
    } else {
        Vec::new()
    };
    let x = if cfg.features {
        let mut x = game.base_features(&s.base, agent);
        x.extend((0..cfg.max_dfa_states).map(|q| if q == s.dfa_state { 1.0 } else { 0.0 }));
        x
    } else {
        Vec::new()
    };
    Obs { key, x }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// ε-greedy selection. With probability `eps` a uniformly random action,
/// otherwise [`argmax`]. No randomness is drawn when `eps` is 0.
pub fn act<R: Rng + ?Sized>(values: &[f64], eps: f64, rng: &mut R) -> usize {
    if eps > 0.0 && rng.gen::<f64>() < eps {
        rng.gen_range(0..values.len())
    } else {
        argmax(values)
    }
}

/// Linear decay from `start` to `end` over `decay_steps`, then constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: usize,
}

impl EpsilonSchedule {
    /// Decays over `frac` of `budget` steps.
    pub fn over_budget(start: f64, end: f64, frac: f64, budget: usize) -> Self {
        EpsilonSchedule { start, end, decay_steps: (frac * budget as f64).round() as usize }
    }

    pub fn value(&self, step: usize) -> f64 {
        if step >= self.decay_steps {
            return self.end;
        }
        self.start + (self.end - self.start) * step as f64 / self.decay_steps as f64
    }
}

/// Action values by discrete key, zero for unseen keys.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    num_actions: usize,
    rows: HashMap<Vec<usize>, Vec<f64>>,
}

impl QTable {
    pub fn new(num_actions: usize) -> Self {
        QTable { num_actions, rows: HashMap::new() }
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, key: &[usize]) -> Vec<f64> {
        self.rows.get(key).cloned().unwrap_or_else(|| vec![0.0; self.num_actions])
    }

    pub fn get(&self, key: &[usize], action: usize) -> f64 {
        self.rows.get(key).map_or(0.0, |r| r[action])
    }

    pub fn set(&mut self, key: &[usize], action: usize, value: f64) {
        let n = self.num_actions;
        self.rows.entry(key.to_vec()).or_insert_with(|| vec![0.0; n])[action] = value;
    }

    pub fn max(&self, key: &[usize]) -> f64 {
        self.rows
            .get(key)
            .map_or(0.0, |r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    /// Entries sorted by key, for stable serialisation.
    pub fn entries(&self) -> Vec<(Vec<usize>, Vec<f64>)> {
        let mut e: Vec<_> = self.rows.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        e.sort_by(|a, b| a.0.cmp(&b.0));
        e
    }

    pub fn from_entries(num_actions: usize, entries: Vec<(Vec<usize>, Vec<f64>)>) -> Self {
        QTable { num_actions, rows: entries.into_iter().collect() }
    }
}

/// One Q-learning backup:
/// `Q(s,a) += α (r + γ max_a' Q(s',a') [non-terminal] - Q(s,a))`.
/// Returns the new value.
pub fn q_update(
    table: &mut QTable,
    key: &[usize],
    action: usize,
    reward: f64,
    next_key: &[usize],
    terminal: bool,
    alpha: f64,
    gamma: f64,
) -> Result<f64, LearnError> {
    if !(alpha > 0.0 && alpha <= 1.0) || !(gamma > 0.0 && gamma <= 1.0) {
        return Err(LearnError::InvalidParameter(format!("alpha={alpha}, gamma={gamma}")));
    }
    if !reward.is_finite() {
        return Err(LearnError::NonFinite("reward"));
    }
    let bootstrap = if terminal { 0.0 } else { gamma * table.max(next_key) };
    let old = table.get(key, action);
    let new = old + alpha * (reward + bootstrap - old);
    if !new.is_finite() {
        return Err(LearnError::NonFinite("q-value"));
    }
    table.set(key, action, new);
    Ok(new)
}

/// Fully connected network with ReLU hidden layers and a linear output.
/// Parameters live in one flat vector; layer `l` stores its weight matrix
/// (row-major, `out × in`) followed by its bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "network needs input and output layers");
        let n = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Mlp { sizes: sizes.to_vec(), params: vec![0.0; n] }
    }

    /// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn random<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        let mut off = 0;
        for w in sizes.windows(2) {
            let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
            for p in &mut net.params[off..off + w[0] * w[1]] {
                *p = rng.gen_range(-limit..limit);
            }
            off += w[0] * w[1] + w[1];
        }
        net
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self, LearnError> {
        let net = Self::zeros(sizes);
        if params.len() != net.params.len() {
            return Err(LearnError::Shape { expected: net.params.len(), got: params.len() });
        }
        Ok(Mlp { params, ..net })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, LearnError> {
        Ok(self.activations(x)?.pop().unwrap())
    }

    /// Outputs of every layer, input included; hidden layers after ReLU.
    fn activations(&self, x: &[f64]) -> Result<Vec<Vec<f64>>, LearnError> {
        if x.len() != self.sizes[0] {
            return Err(LearnError::Shape { expected: self.sizes[0], got: x.len() });
        }
        let layers = self.sizes.len() - 1;
        let mut acts = vec![x.to_vec()];
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let input = &acts[l];
            let out: Vec<f64> = (0..n_out)
                .map(|j| {
                    let z = b[j] + w[j * n_in..(j + 1) * n_in].iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                    if l + 1 < layers { z.max(0.0) } else { z }
                })
                .collect();
            acts.push(out);
            off += n_in * n_out + n_out;
        }
        Ok(acts)
    }

    /// Adds `d out / d params · out_grad` into `grad`.
    fn backward(&self, acts: &[Vec<f64>], out_grad: &[f64], grad: &mut [f64]) {
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        let mut delta = out_grad.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let input = &acts[l];
            for j in 0..n_out {
                if delta[j] == 0.0 {
                    continue;
                }
                let row = &mut grad[off + j * n_in..off + (j + 1) * n_in];
                for (g, a) in row.iter_mut().zip(input) {
                    *g += delta[j] * a;
                }
                grad[off + n_in * n_out + j] += delta[j];
            }
            if l == 0 {
                break;
            }
            let w = &self.params[off..off + n_in * n_out];
            let mut prev = vec![0.0; n_in];
            for j in 0..n_out {
                if delta[j] == 0.0 {
                    continue;
                }
                for (p, wk) in prev.iter_mut().zip(&w[j * n_in..(j + 1) * n_in]) {
                    *p += delta[j] * wk;
                }
            }
            // ReLU derivative, taken as 0 at 0.
            for (p, a) in prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
}

/// Squared error `Σ (y - Q(x, a; θ))²` over `(x, a, y)` samples and its
/// gradient in `θ`.
pub fn regression_gradient(net: &Mlp, samples: &[(&[f64], usize, f64)]) -> Result<(f64, Vec<f64>), LearnError> {
    if samples.is_empty() {
        return Err(LearnError::EmptyBatch);
    }
    let mut grad = vec![0.0; net.params.len()];
    let mut loss = 0.0;
    let mut out_grad = vec![0.0; net.output_len()];
    for &(x, a, y) in samples {
        let acts = net.activations(x)?;
        let err = y - acts.last().unwrap()[a];
        loss += err * err;
        out_grad.iter_mut().for_each(|g| *g = 0.0);
        out_grad[a] = -2.0 * err;
        net.backward(&acts, &out_grad, &mut grad);
    }
    if !loss.is_finite() {
        return Err(LearnError::NonFinite("loss"));
    }
    Ok((loss, grad))
}

/// Batch loss `Σ (y - Q(x, a; θ))²` with `y = r + γ max_a' Q(x', a'; θ⁻)`,
/// the bootstrap dropped on terminal samples, and its gradient in `θ`.
pub fn loss_and_gradient(
    net: &Mlp,
    target: &Mlp,
    batch: &[&Experience],
    gamma: f64,
) -> Result<(f64, Vec<f64>), LearnError> {
    let mut samples = Vec::with_capacity(batch.len());
    for e in batch {
        let y = if e.terminal {
            e.reward
        } else {
            e.reward + gamma * max_value(&target.forward(&e.next.x)?)
        };
        samples.push((e.obs.x.as_slice(), e.action, y));
    }
    regression_gradient(net, &samples)
}

pub fn max_value(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(num_params: usize, lr: f64) -> Self {
        AdamState { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: vec![0.0; num_params], v: vec![0.0; num_params] }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

/// One gradient step on `batch`. Returns the pre-update loss.
pub fn train_step(
    net: &mut Mlp,
    target: &Mlp,
    batch: &[&Experience],
    gamma: f64,
    adam: &mut AdamState,
) -> Result<f64, LearnError> {
    let (loss, grad) = loss_and_gradient(net, target, batch, gamma)?;
    adam.step(&mut net.params, &grad);
    Ok(loss)
}

/// Parameter snapshot refreshed every `sync_period` calls to [`tick`](Self::tick).
#[derive(Debug, Clone, PartialEq)]
pub struct TargetNetwork {
    net: Mlp,
    sync_period: usize,
    since_sync: usize,
}

impl TargetNetwork {
    pub fn new(net: &Mlp, sync_period: usize) -> Self {
        TargetNetwork { net: net.clone(), sync_period: sync_period.max(1), since_sync: 0 }
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    /// Counts one training step and copies `online` when the period is up.
    pub fn tick(&mut self, online: &Mlp) -> bool {
        self.since_sync += 1;
        if self.since_sync >= self.sync_period {
            self.net.params.copy_from_slice(&online.params);
            self.since_sync = 0;
            true
        } else {
            false
        }
    }
}

/// FIFO buffer sampled uniformly without replacement.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    items: VecDeque<T>,
    capacity: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer { items: VecDeque::with_capacity(capacity.min(1 << 16)), capacity: capacity.max(1) }
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    /// Up to `n` distinct items.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&T> {
        index::sample(rng, self.items.len(), n.min(self.items.len()))
            .into_iter()
            .map(|i| &self.items[i])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Tabular,
    Dqn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub backend: Backend,
    pub gamma: f64,
    /// Tabular step size.
    pub alpha: f64,
    pub lr: f64,
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub target_sync: usize,
    pub learn_start: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay_frac: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            backend: Backend::Dqn,
            gamma: 0.9,
            alpha: 0.5,
            lr: 5e-4,
            hidden: vec![64, 64],
            batch_size: 32,
            buffer_capacity: 25_000,
            target_sync: 100,
            learn_start: 1_000,
            eps_start: 1.0,
            eps_end: 0.1,
            eps_decay_frac: 0.1,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::InvalidParameter(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must be in (0, 1]");
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must be in (0, 1]");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return bad("batch_size and buffer_capacity must be positive");
        }
        if !(0.0..=1.0).contains(&self.eps_end) || !(self.eps_end..=1.0).contains(&self.eps_start) {
            return bad("need 0 <= eps_end <= eps_start <= 1");
        }
        if !(0.0..=1.0).contains(&self.eps_decay_frac) {
            return bad("eps_decay_frac must be in [0, 1]");
        }
        Ok(())
    }

    pub fn epsilon(&self, budget: usize) -> EpsilonSchedule {
        EpsilonSchedule::over_budget(self.eps_start, self.eps_end, self.eps_decay_frac, budget)
    }
}

/// Anything that maps observations to action values.
pub trait QFunction {
    fn values(&self, obs: &Obs) -> Result<Vec<f64>, LearnError>;
}

/// A trainable action-value estimate for one agent.
pub trait Learner: QFunction + Send {
    /// Whether observations must carry table keys or features.
    fn uses_keys(&self) -> bool;
    fn uses_features(&self) -> bool;

    /// Records one transition and performs any due update. Returns the
    /// training loss when a gradient step was taken.
    fn update(&mut self, e: Experience) -> Result<Option<f64>, LearnError>;

    fn snapshot(&self) -> ValueSnapshot;
}

/// Serialisable frozen value function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ValueSnapshot {
    Tabular { num_actions: usize, entries: Vec<(Vec<usize>, Vec<f64>)> },
    Dqn { net: Mlp },
}

impl ValueSnapshot {
    /// Rebuilds a queryable value function.
    pub fn restore(&self) -> Box<dyn QFunction + Send + Sync> {
        match self {
            ValueSnapshot::Tabular { num_actions, entries } => {
                Box::new(QTable::from_entries(*num_actions, entries.clone()))
            }
            ValueSnapshot::Dqn { net } => Box::new(net.clone()),
        }
    }

    pub fn uses_keys(&self) -> bool {
        matches!(self, ValueSnapshot::Tabular { .. })
    }
}

impl QFunction for QTable {
    fn values(&self, obs: &Obs) -> Result<Vec<f64>, LearnError> {
        Ok(self.row(&obs.key))
    }
}

impl QFunction for Mlp {
    fn values(&self, obs: &Obs) -> Result<Vec<f64>, LearnError> {
        self.forward(&obs.x)
    }
}

#[derive(Debug, Clone)]
pub struct TabularLearner {
    pub table: QTable,
    pub alpha: f64,
    pub gamma: f64,
}

impl TabularLearner {
    pub fn new(num_actions: usize, alpha: f64, gamma: f64) -> Self {
        TabularLearner { table: QTable::new(num_actions), alpha, gamma }
    }
}

impl QFunction for TabularLearner {
    fn values(&self, obs: &Obs) -> Result<Vec<f64>, LearnError> {
        self.table.values(obs)
    }
}

impl Learner for TabularLearner {
    fn uses_keys(&self) -> bool {
        true
    }

    fn uses_features(&self) -> bool {
        false
    }

    fn update(&mut self, e: Experience) -> Result<Option<f64>, LearnError> {
        q_update(&mut self.table, &e.obs.key, e.action, e.reward, &e.next.key, e.terminal, self.alpha, self.gamma)?;
        Ok(None)
    }

    fn snapshot(&self) -> ValueSnapshot {
        ValueSnapshot::Tabular { num_actions: self.table.num_actions(), entries: self.table.entries() }
    }
}

pub struct DqnLearner {
    pub net: Mlp,
    pub target: TargetNetwork,
    pub adam: AdamState,
    pub replay: ReplayBuffer<Arc<Experience>>,
    gamma: f64,
    batch_size: usize,
    learn_start: usize,
    rng: ChaCha8Rng,
}

impl DqnLearner {
    /// `init` seeds the weights, `replay_rng` drives batch sampling.
    pub fn new(
        input: usize,
        num_actions: usize,
        cfg: &LearnerConfig,
        init: &mut ChaCha8Rng,
        replay_rng: ChaCha8Rng,
    ) -> Self {
        let mut sizes = vec![input];
        sizes.extend(&cfg.hidden);
        sizes.push(num_actions);
        let net = Mlp::random(&sizes, init);
        DqnLearner {
            target: TargetNetwork::new(&net, cfg.target_sync),
            adam: AdamState::new(net.params.len(), cfg.lr),
            net,
            replay: ReplayBuffer::new(cfg.buffer_capacity),
            gamma: cfg.gamma,
            batch_size: cfg.batch_size,
            learn_start: cfg.learn_start,
            rng: replay_rng,
        }
    }
}

impl QFunction for DqnLearner {
    fn values(&self, obs: &Obs) -> Result<Vec<f64>, LearnError> {
        self.net.forward(&obs.x)
    }
}

impl Learner for DqnLearner {
    fn uses_keys(&self) -> bool {
        false
    }

    fn uses_features(&self) -> bool {
        true
    }

    fn update(&mut self, e: Experience) -> Result<Option<f64>, LearnError> {
        self.replay.push(Arc::new(e));
        if self.replay.len() < self.learn_start.max(1) {
            return Ok(None);
        }
        let batch: Vec<&Experience> =
            self.replay.sample(self.batch_size, &mut self.rng).into_iter().map(|e| e.as_ref()).collect();
        let loss = train_step(&mut self.net, self.target.net(), &batch, self.gamma, &mut self.adam)?;
        self.target.tick(&self.net);
        Ok(Some(loss))
    }

    fn snapshot(&self) -> ValueSnapshot {
        ValueSnapshot::Dqn { net: self.net.clone() }
    }
}

/// Builds one learner per agent for a product game with `input`-wide
/// features. Seeds come from the named streams of `seed`.
pub fn make_learners(
    cfg: &LearnerConfig,
    agents: usize,
    num_actions: usize,
    input: usize,
    seed: u64,
) -> Vec<Box<dyn Learner>> {
    let mut init = streams::rng(seed, streams::INIT);
    (0..agents)
        .map(|i| -> Box<dyn Learner> {
            match cfg.backend {
                Backend::Tabular => Box::new(TabularLearner::new(num_actions, cfg.alpha, cfg.gamma)),
                Backend::Dqn => {
                    let replay = streams::rng(seed, streams::REPLAY + 1024 * i as u64);
                    Box::new(DqnLearner::new(input, num_actions, cfg, &mut init, replay))
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// Training step at which the episode ended.
    pub end_step: usize,
    pub total_reward: f64,
    pub length: usize,
    pub satisfied: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub steps: usize,
    pub episodes: Vec<EpisodeRecord>,
    /// Sum of reported losses per agent.
    pub loss_sums: Vec<f64>,
}

/// Result of one greedy rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub total_reward: f64,
    /// `Σ γ^t r_t` under the learner's discount.
    pub discounted_return: f64,
    pub length: usize,
    pub satisfied: bool,
}

/// Independent learners on one extended game. Training can be resumed in
/// chunks, and the game can be swapped for a new task while the learners
/// and their RNG streams carry over.
pub struct IndependentTrainer<G: Observe> {
    env: ExtendedGame<G>,
    learners: Vec<Box<dyn Learner>>,
    obs_cfg: ObsConfig,
    epsilon: EpsilonSchedule,
    rngs: Vec<ChaCha8Rng>,
    state: Option<ExtendedState<G::State>>,
    task_step: usize,
    episode_reward: f64,
    log: TrainingLog,
}

impl<G: Observe> IndependentTrainer<G> {
    pub fn new(
        env: ExtendedGame<G>,
        learners: Vec<Box<dyn Learner>>,
        max_dfa_states: usize,
        epsilon: EpsilonSchedule,
        seed: u64,
    ) -> Result<Self, LearnError> {
        let n = env.game().num_agents();
        if learners.len() != n || n == 0 {
            return Err(LearnError::InvalidParameter(format!(
                "{} learners for {n} agents",
                learners.len()
            )));
        }
        let obs_cfg = ObsConfig {
            max_dfa_states,
            context: 0,
            keys: learners.iter().any(|l| l.uses_keys()),
            features: learners.iter().any(|l| l.uses_features()),
        };
        Ok(IndependentTrainer {
            env,
            rngs: (0..n).map(|i| streams::policy(seed, i)).collect(),
            learners,
            obs_cfg,
            epsilon,
            state: None,
            task_step: 0,
            episode_reward: 0.0,
            log: TrainingLog { loss_sums: vec![0.0; n], ..Default::default() },
        })
    }

    /// Replaces the game, restarting the episode and the ε schedule.
    /// `context` separates table keys of different tasks.
    pub fn set_env(&mut self, env: ExtendedGame<G>, context: usize, epsilon: EpsilonSchedule) {
        self.env = env;
        self.obs_cfg.context = context;
        self.epsilon = epsilon;
        self.state = None;
        self.task_step = 0;
        self.episode_reward = 0.0;
    }

    pub fn env(&self) -> &ExtendedGame<G> {
        &self.env
    }

    pub fn learners(&self) -> &[Box<dyn Learner>] {
        &self.learners
    }

    pub fn obs_config(&self) -> ObsConfig {
        self.obs_cfg
    }

    pub fn log(&self) -> &TrainingLog {
        &self.log
    }

    pub fn into_log(self) -> TrainingLog {
        self.log
    }

    pub fn step(&mut self) -> Result<(), LearnError> {
        let state = match self.state.take() {
            Some(s) => s,
            None => {
                self.episode_reward = 0.0;
                self.env.reset()
            }
        };
        let eps = self.epsilon.value(self.task_step);
        let n = self.learners.len();
        let obs: Vec<Obs> =
            (0..n).map(|i| product_obs(self.env.game(), &state, i, &self.obs_cfg)).collect();
        let mut joint = Vec::with_capacity(n);
        for i in 0..n {
            let values = self.learners[i].values(&obs[i])?;
            joint.push(act(&values, eps, &mut self.rngs[i]));
        }
        let t = self.env.step(&joint)?;
        for (i, o) in obs.into_iter().enumerate() {
            let next = product_obs(self.env.game(), &t.next_state, i, &self.obs_cfg);
            let e = Experience { obs: o, action: joint[i], reward: t.reward, next, terminal: t.terminal };
            if let Some(loss) = self.learners[i].update(e)? {
                self.log.loss_sums[i] += loss;
            }
        }
        self.task_step += 1;
        self.log.steps += 1;
        self.episode_reward += t.reward;
        if t.ends_episode() {
            let satisfied = t.terminal && Some(t.next_state.dfa_state) == self.env.dfa().accepting_state();
            self.log.episodes.push(EpisodeRecord {
                end_step: self.log.steps,
                total_reward: self.episode_reward,
                length: self.env.steps_taken(),
                satisfied,
            });
        } else {
            self.state = Some(t.next_state);
        }
        Ok(())
    }

    pub fn run(&mut self, steps: usize) -> Result<(), LearnError> {
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }

    /// Greedy rollout of the current learners on a fresh copy of the game.
    pub fn evaluate(&self, gamma: f64) -> Result<EvalOutcome, LearnError>
    where
        G: Clone,
    {
        self.evaluate_on(self.env.clone(), self.obs_cfg.context, gamma)
    }

    /// Greedy rollout on another game, e.g. a different task of a curriculum.
    pub fn evaluate_on(&self, env: ExtendedGame<G>, context: usize, gamma: f64) -> Result<EvalOutcome, LearnError> {
        let fns: Vec<&dyn QFunction> = self.learners.iter().map(|l| l.as_ref() as &dyn QFunction).collect();
        evaluate_greedy(env, &fns, &ObsConfig { context, ..self.obs_cfg }, gamma)
    }

    pub fn into_learners(self) -> Vec<Box<dyn Learner>> {
        self.learners
    }
}

/// Runs one ε = 0 episode from reset until termination or the step limit.
pub fn evaluate_greedy<G: Observe>(
    mut env: ExtendedGame<G>,
    fns: &[&dyn QFunction],
    obs_cfg: &ObsConfig,
    gamma: f64,
) -> Result<EvalOutcome, LearnError> {
    let mut s = env.reset();
    let (mut total, mut discounted, mut discount) = (0.0, 0.0, 1.0);
    loop {
        let mut joint = Vec::with_capacity(fns.len());
        for (i, f) in fns.iter().enumerate() {
            joint.push(argmax(&f.values(&product_obs(env.game(), &s, i, obs_cfg))?));
        }
        let t = env.step(&joint)?;
        total += t.reward;
        discounted += discount * t.reward;
        discount *= gamma;
        if t.ends_episode() {
            let satisfied = t.terminal && Some(t.next_state.dfa_state) == env.dfa().accepting_state();
            return Ok(EvalOutcome {
                total_reward: total,
                discounted_return: discounted,
                length: env.steps_taken(),
                satisfied,
            });
        }
        s = t.next_state;
    }
}

/// Trains fresh independent learners on `env` for `budget` steps.
pub fn independent_train<G: Observe>(
    env: ExtendedGame<G>,
    cfg: &LearnerConfig,
    budget: usize,
    seed: u64,
) -> Result<(TrainingLog, Vec<Box<dyn Learner>>), LearnError> {
    cfg.validate()?;
    let n = env.game().num_agents();
    let max_dfa = env.dfa().num_states();
    let s0 = env.lift(env.game().initial_state());
    let input = env.game().base_features(&s0.base, 0).len() + max_dfa;
    let actions = env.game().num_actions(0);
    let learners = make_learners(cfg, n, actions, input, seed);
    let mut trainer = IndependentTrainer::new(env, learners, max_dfa, cfg.epsilon(budget), seed)?;
    trainer.run(budget)?;
    let log = trainer.log.clone();
    Ok((log, trainer.into_learners()))
}
