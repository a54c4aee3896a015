//! Multi-agent LPOPL: one value function per agent per sub-task.
//!
//! [`extract_tasks`] closes a list of specifications under progression. Every
//! formula in the closure (other than `true` and `false`) becomes a task, and
//! each agent keeps a learner per task in a [`PolicyBank`]. The agents act
//! with the learner of the task that is currently active, but every
//! environment step updates every task: the step's label is progressed
//! through each task to obtain that task's own reward and successor task, and
//! the successor's values provide the bootstrap.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dfa::{Dfa, DfaError, DfaStatus};
use crate::game::{ExtendedGame, ExtendedState, GameError, RewardScheme};
use crate::learn::{
    act, argmax, max_value, regression_gradient, streams, AdamState, Backend, EpisodeRecord,
    EpsilonSchedule, EvalOutcome, LearnError, LearnerConfig, Mlp, Observe, QTable, ReplayBuffer,
    TargetNetwork, TrainingLog, ValueSnapshot,
};
use crate::ltl::{progress, simplify, validate_spec, Atom, Formula, LtlError, TruthAssignment};

pub const DEFAULT_TASK_LIMIT: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpoplError {
    #[error("task closure exceeded {0} formulae")]
    TooManyTasks(usize),
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("no specifications given")]
    NoSpecs,
    #[error(transparent)]
    Spec(#[from] LtlError),
    #[error(transparent)]
    Dfa(#[from] DfaError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Game(#[from] GameError),
}

/// Where a task goes after one label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskNext {
    Task(usize),
    Satisfied,
    Violated,
}

/// Progression-closed set of tasks with a precomputed successor table.
#[derive(Debug, Clone)]
pub struct TaskSet {
    tasks: Vec<Formula>,
    index: HashMap<Formula, usize>,
    atoms: Vec<Vec<Atom>>,
    /// Per task, successor by assignment mask over that task's atoms.
    delta: Vec<Vec<TaskNext>>,
}

pub fn extract_tasks(specs: &[Formula]) -> Result<TaskSet, LpoplError> {
    extract_tasks_with_limit(specs, DEFAULT_TASK_LIMIT)
}

/// Breadth-first closure of `specs` under progression. The (simplified)
/// specifications come first, in order, followed by discovered sub-tasks.
pub fn extract_tasks_with_limit(specs: &[Formula], limit: usize) -> Result<TaskSet, LpoplError> {
    let mut set = TaskSet { tasks: Vec::new(), index: HashMap::new(), atoms: Vec::new(), delta: Vec::new() };
    let mut queue = VecDeque::new();
    for f in specs {
        validate_spec(f)?;
        let f = simplify(f);
        if !matches!(f, Formula::True | Formula::False) && !set.index.contains_key(&f) {
            queue.push_back(set.add(f, limit)?);
        }
    }
    while let Some(id) = queue.pop_front() {
        let atoms: Vec<Atom> = set.tasks[id].atoms().into_iter().collect();
        let mut row = Vec::with_capacity(1 << atoms.len());
        for mask in 0..1usize << atoms.len() {
            let a: TruthAssignment = atoms
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, a)| a.clone())
                .collect();
            let next = match progress(&a, &set.tasks[id]) {
                Formula::True => TaskNext::Satisfied,
                Formula::False => TaskNext::Violated,
                g => match set.index.get(&g) {
                    Some(&j) => TaskNext::Task(j),
                    None => {
                        let j = set.add(g, limit)?;
                        queue.push_back(j);
                        TaskNext::Task(j)
                    }
                },
            };
            row.push(next);
        }
        set.atoms[id] = atoms;
        set.delta[id] = row;
    }
    Ok(set)
}

impl TaskSet {
    fn add(&mut self, f: Formula, limit: usize) -> Result<usize, LpoplError> {
        if self.tasks.len() >= limit {
            return Err(LpoplError::TooManyTasks(limit));
        }
        let id = self.tasks.len();
        self.index.insert(f.clone(), id);
        self.tasks.push(f);
        self.atoms.push(Vec::new());
        self.delta.push(Vec::new());
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn tasks(&self) -> &[Formula] {
        &self.tasks
    }

    pub fn formula(&self, id: usize) -> Option<&Formula> {
        self.tasks.get(id)
    }

    /// Task id of a formula, after simplification.
    pub fn id(&self, f: &Formula) -> Option<usize> {
        self.index.get(f).or_else(|| self.index.get(&simplify(f))).copied()
    }

    pub fn contains(&self, f: &Formula) -> bool {
        self.id(f).is_some()
    }

    pub fn next(&self, id: usize, label: &TruthAssignment) -> TaskNext {
        let mask = self.atoms[id]
            .iter()
            .enumerate()
            .filter(|(_, a)| label.contains(a))
            .fold(0, |m, (i, _)| m | (1 << i));
        self.delta[id][mask]
    }

    /// Task reward for one step of task `id`, the successor task to
    /// bootstrap from, and whether the step ends the task.
    pub fn step_reward(
        &self,
        scheme: &RewardScheme,
        id: usize,
        label: &TruthAssignment,
    ) -> (f64, TaskNext, bool) {
        let next = self.next(id, label);
        let (moved, status) = match next {
            TaskNext::Task(j) => (j != id, DfaStatus::InProgress),
            TaskNext::Satisfied => (true, DfaStatus::Accepting),
            TaskNext::Violated => (true, DfaStatus::Violated),
        };
        (scheme.reward(moved, status), next, scheme.is_terminal(status))
    }
}

/// Ordered specifications, each presented for a fixed number of steps.
#[derive(Debug, Clone)]
pub struct Curriculum {
    specs: Vec<Formula>,
    budget: usize,
    cursor: usize,
    used: usize,
}

impl Curriculum {
    pub fn new(specs: Vec<Formula>, budget: usize) -> Self {
        Curriculum { specs, budget, cursor: 0, used: 0 }
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn specs(&self) -> &[Formula] {
        &self.specs
    }

    pub fn is_done(&self) -> bool {
        self.cursor >= self.specs.len() || self.budget == 0
    }

    /// Specification for the next training step, or `None` once every
    /// specification has used its budget.
    pub fn next_spec(&mut self) -> Option<&Formula> {
        if self.is_done() {
            return None;
        }
        let i = self.cursor;
        self.used += 1;
        if self.used == self.budget {
            self.cursor += 1;
            self.used = 0;
        }
        Some(&self.specs[i])
    }
}

/// One agent's experience with the raw label, so any task can derive its
/// own reward from it.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExperience {
    pub key: Vec<usize>,
    pub x: Vec<f64>,
    pub action: usize,
    pub label: TruthAssignment,
    pub next_key: Vec<usize>,
    pub next_x: Vec<f64>,
}

pub struct DeepBank {
    nets: Vec<Mlp>,
    targets: Vec<TargetNetwork>,
    adams: Vec<AdamState>,
    replay: ReplayBuffer<LabeledExperience>,
    rng: ChaCha8Rng,
}

pub enum AgentBank {
    Tabular(Vec<QTable>),
    Deep(DeepBank),
}

/// Per-agent, per-task value functions.
pub struct PolicyBank {
    tasks: Arc<TaskSet>,
    agents: Vec<AgentBank>,
    cfg: LearnerConfig,
    scheme: RewardScheme,
}

/// Serialisable frozen bank, tasks given by their rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankSnapshot {
    pub tasks: Vec<String>,
    /// `[agent][task]`.
    pub values: Vec<Vec<ValueSnapshot>>,
}

impl PolicyBank {
    pub fn new(
        tasks: Arc<TaskSet>,
        agents: usize,
        num_actions: usize,
        input: usize,
        cfg: &LearnerConfig,
        scheme: RewardScheme,
        seed: u64,
    ) -> Self {
        let mut init = streams::rng(seed, streams::INIT);
        let agents = (0..agents)
            .map(|i| match cfg.backend {
                Backend::Tabular => AgentBank::Tabular(vec![QTable::new(num_actions); tasks.len()]),
                Backend::Dqn => {
                    let mut sizes = vec![input];
                    sizes.extend(&cfg.hidden);
                    sizes.push(num_actions);
                    let nets: Vec<Mlp> = (0..tasks.len()).map(|_| Mlp::random(&sizes, &mut init)).collect();
                    AgentBank::Deep(DeepBank {
                        targets: nets.iter().map(|n| TargetNetwork::new(n, cfg.target_sync)).collect(),
                        adams: nets.iter().map(|n| AdamState::new(n.params().len(), cfg.lr)).collect(),
                        nets,
                        replay: ReplayBuffer::new(cfg.buffer_capacity),
                        rng: streams::rng(seed, streams::REPLAY + 1024 * i as u64),
                    })
                }
            })
            .collect();
        PolicyBank { tasks, agents, cfg: cfg.clone(), scheme }
    }

    pub fn tasks(&self) -> &TaskSet {
        &self.tasks
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn uses_keys(&self) -> bool {
        self.cfg.backend == Backend::Tabular
    }

    pub fn values(&self, agent: usize, task: usize, key: &[usize], x: &[f64]) -> Result<Vec<f64>, LpoplError> {
        if task >= self.tasks.len() {
            return Err(LpoplError::UnknownTask(format!("#{task}")));
        }
        match &self.agents[agent] {
            AgentBank::Tabular(tables) => Ok(tables[task].row(key)),
            AgentBank::Deep(d) => Ok(d.nets[task].forward(x)?),
        }
    }

    /// ε-greedy action from the learner of `task` only.
    pub fn behavior_policy(
        &self,
        agent: usize,
        task: usize,
        key: &[usize],
        x: &[f64],
        eps: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<usize, LpoplError> {
        Ok(act(&self.values(agent, task, key, x)?, eps, rng))
    }

    /// Bootstrap value once a task has been violated without ending the
    /// episode: the stall reward forever after.
    fn violated_value(&self) -> f64 {
        if self.scheme.terminate_on_violation || self.cfg.gamma >= 1.0 {
            0.0
        } else {
            self.scheme.r_stall / (1.0 - self.cfg.gamma)
        }
    }

    /// Updates every task learner of `agent` with one transition. Returns the
    /// summed loss when gradient steps were taken.
    pub fn update(&mut self, agent: usize, e: LabeledExperience) -> Result<Option<f64>, LpoplError> {
        let (gamma, alpha) = (self.cfg.gamma, self.cfg.alpha);
        let n_tasks = self.tasks.len();
        let tasks = Arc::clone(&self.tasks);
        let scheme = self.scheme;
        let violated = self.violated_value();
        let absorbing = |next: TaskNext| if next == TaskNext::Violated { violated } else { 0.0 };
        match &mut self.agents[agent] {
            AgentBank::Tabular(tables) => {
                for task in 0..n_tasks {
                    let (r, next, _) = tasks.step_reward(&scheme, task, &e.label);
                    let boot = match next {
                        TaskNext::Task(j) => tables[j].max(&e.next_key),
                        _ => absorbing(next),
                    };
                    let y = r + gamma * boot;
                    let old = tables[task].get(&e.key, e.action);
                    let new = old + alpha * (y - old);
                    if !new.is_finite() {
                        return Err(LearnError::NonFinite("q-value").into());
                    }
                    tables[task].set(&e.key, e.action, new);
                }
                Ok(None)
            }
            AgentBank::Deep(d) => {
                d.replay.push(e);
                if d.replay.len() < self.cfg.learn_start.max(1) {
                    return Ok(None);
                }
                let batch = d.replay.sample(self.cfg.batch_size, &mut d.rng);
                let mut total = 0.0;
                for task in 0..n_tasks {
                    let mut samples = Vec::with_capacity(batch.len());
                    for s in &batch {
                        let (r, next, _) = tasks.step_reward(&scheme, task, &s.label);
                        let boot = match next {
                            TaskNext::Task(j) => max_value(&d.targets[j].net().forward(&s.next_x)?),
                            _ => absorbing(next),
                        };
                        samples.push((s.x.as_slice(), s.action, r + gamma * boot));
                    }
                    let (loss, grad) = regression_gradient(&d.nets[task], &samples)?;
                    d.adams[task].step(d.nets[task].params_mut(), &grad);
                    d.targets[task].tick(&d.nets[task]);
                    total += loss;
                }
                Ok(Some(total))
            }
        }
    }

    pub fn snapshot(&self) -> BankSnapshot {
        let values = self
            .agents
            .iter()
            .map(|a| match a {
                AgentBank::Tabular(tables) => tables
                    .iter()
                    .map(|t| ValueSnapshot::Tabular { num_actions: t.num_actions(), entries: t.entries() })
                    .collect(),
                AgentBank::Deep(d) => d.nets.iter().map(|n| ValueSnapshot::Dqn { net: n.clone() }).collect(),
            })
            .collect();
        BankSnapshot { tasks: self.tasks.tasks().iter().map(|f| f.to_string()).collect(), values }
    }
}

/// I-LPOPL training over a list of specifications sharing one task bank.
pub struct LpoplTrainer<G: Observe + Clone> {
    game: G,
    scheme: RewardScheme,
    step_limit: usize,
    specs: Vec<Formula>,
    dfas: Vec<Arc<Dfa>>,
    /// Per specification, task id of each automaton state (`None` for
    /// `true` and `false`).
    task_of_state: Vec<Vec<Option<usize>>>,
    bank: PolicyBank,
    env: ExtendedGame<G>,
    spec: usize,
    state: Option<ExtendedState<G::State>>,
    epsilon: EpsilonSchedule,
    rngs: Vec<ChaCha8Rng>,
    task_step: usize,
    episode_reward: f64,
    log: TrainingLog,
}

impl<G: Observe + Clone> LpoplTrainer<G> {
    pub fn new(
        game: G,
        specs: Vec<Formula>,
        scheme: RewardScheme,
        cfg: &LearnerConfig,
        step_limit: usize,
        seed: u64,
    ) -> Result<Self, LpoplError> {
        cfg.validate()?;
        scheme.validate()?;
        if specs.is_empty() {
            return Err(LpoplError::NoSpecs);
        }
        let tasks = Arc::new(extract_tasks(&specs)?);
        let mut dfas = Vec::with_capacity(specs.len());
        let mut task_of_state = Vec::with_capacity(specs.len());
        for f in &specs {
            let dfa = Arc::new(Dfa::compile(f)?);
            let ids = dfa
                .states()
                .iter()
                .map(|q| match q {
                    Formula::True | Formula::False => Ok(None),
                    q => tasks.id(q).map(Some).ok_or_else(|| LpoplError::UnknownTask(q.to_string())),
                })
                .collect::<Result<Vec<_>, _>>()?;
            dfas.push(dfa);
            task_of_state.push(ids);
        }
        let agents = game.num_agents();
        let s0 = game.initial_state();
        let input = game.base_features(&s0, 0).len();
        let bank = PolicyBank::new(tasks, agents, game.num_actions(0), input, cfg, scheme, seed);
        let env = ExtendedGame::with_dfa(game.clone(), specs[0].clone(), Arc::clone(&dfas[0]), scheme)
            .with_step_limit(step_limit);
        Ok(LpoplTrainer {
            game,
            scheme,
            step_limit,
            specs,
            dfas,
            task_of_state,
            bank,
            env,
            spec: 0,
            state: None,
            epsilon: cfg.epsilon(0),
            rngs: (0..agents).map(|i| streams::policy(seed, i)).collect(),
            task_step: 0,
            episode_reward: 0.0,
            log: TrainingLog { loss_sums: vec![0.0; agents], ..Default::default() },
        })
    }

    pub fn bank(&self) -> &PolicyBank {
        &self.bank
    }

    pub fn specs(&self) -> &[Formula] {
        &self.specs
    }

    pub fn log(&self) -> &TrainingLog {
        &self.log
    }

    fn env_for(&self, spec: usize) -> ExtendedGame<G> {
        ExtendedGame::with_dfa(self.game.clone(), self.specs[spec].clone(), Arc::clone(&self.dfas[spec]), self.scheme)
            .with_step_limit(self.step_limit)
    }

    /// Switches the behaviour task source to specification `spec`,
    /// restarting the episode and the ε schedule.
    pub fn set_spec(&mut self, spec: usize, epsilon: EpsilonSchedule) {
        self.env = self.env_for(spec);
        self.spec = spec;
        self.epsilon = epsilon;
        self.state = None;
        self.task_step = 0;
        self.episode_reward = 0.0;
    }

    /// Task whose learner drives behaviour in `state` of specification `spec`.
    pub fn active_task(&self, spec: usize, dfa_state: usize) -> Result<usize, LpoplError> {
        self.task_of_state[spec][dfa_state]
            .ok_or_else(|| LpoplError::UnknownTask(self.dfas[spec].states()[dfa_state].to_string()))
    }

    fn observe(&self, s: &G::State, agent: usize) -> (Vec<usize>, Vec<f64>) {
        let key = if self.bank.uses_keys() { self.game.state_key(s) } else { Vec::new() };
        let x = if self.bank.uses_keys() { Vec::new() } else { self.game.base_features(s, agent) };
        (key, x)
    }

    pub fn step(&mut self) -> Result<(), LpoplError> {
        let state = match self.state.take() {
            Some(s) => s,
            None => {
                self.episode_reward = 0.0;
                self.env.reset()
            }
        };
        let task = self.active_task(self.spec, state.dfa_state)?;
        let eps = self.epsilon.value(self.task_step);
        let n = self.bank.num_agents();
        let obs: Vec<_> = (0..n).map(|i| self.observe(&state.base, i)).collect();
        let mut joint = Vec::with_capacity(n);
        for (i, (key, x)) in obs.iter().enumerate() {
            joint.push(self.bank.behavior_policy(i, task, key, x, eps, &mut self.rngs[i])?);
        }
        let t = self.env.step(&joint)?;
        for (i, (key, x)) in obs.into_iter().enumerate() {
            let (next_key, next_x) = self.observe(&t.next_state.base, i);
            let e = LabeledExperience { key, x, action: joint[i], label: t.label.clone(), next_key, next_x };
            if let Some(loss) = self.bank.update(i, e)? {
                self.log.loss_sums[i] += loss;
            }
        }
        self.task_step += 1;
        self.log.steps += 1;
        self.episode_reward += t.reward;
        if t.ends_episode() {
            self.log.episodes.push(EpisodeRecord {
                end_step: self.log.steps,
                total_reward: self.episode_reward,
                length: self.env.steps_taken(),
                satisfied: t.terminal && Some(t.next_state.dfa_state) == self.env.dfa().accepting_state(),
            });
        } else {
            self.state = Some(t.next_state);
        }
        Ok(())
    }

    pub fn run(&mut self, steps: usize) -> Result<(), LpoplError> {
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }

    /// Greedy rollout of specification `spec` from reset.
    pub fn evaluate(&self, spec: usize, gamma: f64) -> Result<EvalOutcome, LpoplError> {
        let mut env = self.env_for(spec);
        let mut s = env.reset();
        let (mut total, mut discounted, mut discount) = (0.0, 0.0, 1.0);
        loop {
            let task = self.active_task(spec, s.dfa_state)?;
            let mut joint = Vec::with_capacity(self.bank.num_agents());
            for i in 0..self.bank.num_agents() {
                let (key, x) = self.observe(&s.base, i);
                joint.push(argmax(&self.bank.values(i, task, &key, &x)?));
            }
            let t = env.step(&joint)?;
            total += t.reward;
            discounted += discount * t.reward;
            discount *= gamma;
            if t.ends_episode() {
                return Ok(EvalOutcome {
                    total_reward: total,
                    discounted_return: discounted,
                    length: env.steps_taken(),
                    satisfied: t.terminal && Some(t.next_state.dfa_state) == env.dfa().accepting_state(),
                });
            }
            s = t.next_state;
        }
    }
}
