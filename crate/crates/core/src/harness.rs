//! Experiment runner: curricula over specification sets, periodic greedy
//! evaluation, CSV and SVG output, and saved policies.
//!
//! A run trains one learner set per seed. Specifications are presented in
//! order, each for `steps_per_spec` steps. Every `eval_every` steps the
//! current policies are frozen and one greedy episode per specification is
//! rolled out from reset; its discounted return is recorded.
//!
//! Output files in the run directory:
//!
//! - `returns_seed<S>.csv`: `step,seed,spec_index,return`
//! - `evals_seed<S>.csv`: the same rollouts with agent count, length and
//!   whether the specification was satisfied
//! - `aggregate.csv`: `step,mean,p25,p75` of per-seed mean returns
//! - `curve.svg`: mean return with the p25 to p75 band
//! - `policy_seed<S>.json`: final value functions, readable by
//!   [`evaluate_policy`]

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::craftworld::{load_map, Action, CraftWorld, MapError};
use crate::dfa::{Dfa, DfaError};
use crate::game::{ExtendedGame, GameError, RewardScheme, DEFAULT_STEP_LIMIT};
use crate::learn::{
    argmax, evaluate_greedy, make_learners, Backend, EvalOutcome, IndependentTrainer,
    LearnError, LearnerConfig, Obs, ObsConfig, Observe, QFunction, TrainingLog, ValueSnapshot,
};
use crate::lpopl::{BankSnapshot, LpoplError, LpoplTrainer};
use crate::ltl::{parse, parse_spec_file, Formula, LtlError, ParseError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown specification set {0:?}")]
    UnknownSpecSet(String),
    #[error("step grids of the seed files do not line up")]
    Misaligned,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Spec(#[from] LtlError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Dfa(#[from] DfaError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Lpopl(#[from] LpoplError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algo {
    #[serde(rename = "dqn-l")]
    DqnL,
    #[serde(rename = "i-dqn-l")]
    IDqnL,
    #[serde(rename = "lpopl")]
    Lpopl,
    #[serde(rename = "i-lpopl")]
    ILpopl,
    #[serde(rename = "tabular")]
    Tabular,
    #[serde(rename = "i-tabular")]
    ITabular,
}

impl Algo {
    pub const ALL: [Algo; 6] = [Algo::DqnL, Algo::IDqnL, Algo::Lpopl, Algo::ILpopl, Algo::Tabular, Algo::ITabular];

    pub fn name(self) -> &'static str {
        match self {
            Algo::DqnL => "dqn-l",
            Algo::IDqnL => "i-dqn-l",
            Algo::Lpopl => "lpopl",
            Algo::ILpopl => "i-lpopl",
            Algo::Tabular => "tabular",
            Algo::ITabular => "i-tabular",
        }
    }

    pub fn is_lpopl(self) -> bool {
        matches!(self, Algo::Lpopl | Algo::ILpopl)
    }

    /// Whether the algorithm supports more than one agent.
    pub fn is_independent(self) -> bool {
        matches!(self, Algo::IDqnL | Algo::ILpopl | Algo::ITabular)
    }

    pub fn default_gamma(self) -> f64 {
        match self {
            Algo::DqnL | Algo::IDqnL => 0.98,
            _ => 0.9,
        }
    }
}

impl FromStr for Algo {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algo::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown algorithm {s:?}")))
    }
}

impl std::fmt::Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Budget and backend presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Tabular learners, 5k steps per specification (2.5k for LPOPL).
    Desk,
    /// Q-networks, 50k steps per specification (25k for LPOPL).
    Paper,
}

impl FromStr for Preset {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            _ => Err(HarnessError::Config(format!("unknown preset {s:?}"))),
        }
    }
}

impl Preset {
    pub fn steps_per_spec(self, algo: Algo) -> usize {
        let base = match self {
            Preset::Desk => 5_000,
            Preset::Paper => 50_000,
        };
        if algo.is_lpopl() { base / 2 } else { base }
    }

    pub fn backend(self, algo: Algo) -> Backend {
        match (self, algo) {
            (_, Algo::Tabular | Algo::ITabular) | (Preset::Desk, _) => Backend::Tabular,
            (Preset::Paper, _) => Backend::Dqn,
        }
    }
}

const SEQUENTIAL: [&str; 10] = [
    "F (got_wood & F used_toolshed)",
    "F (got_wood & F used_workbench)",
    "F (got_grass & F used_factory)",
    "F (got_grass & F used_toolshed)",
    "F (got_iron & F (got_wood & F used_factory))",
    "F (got_wood & F (used_toolshed & F (got_grass & F used_workbench)))",
    "F (got_wood & F (used_workbench & F (got_iron & F used_toolshed)))",
    "F (got_wood & F (used_workbench & F (got_iron & F used_workbench)))",
    "F (got_iron & F (got_wood & F (used_factory & F used_bridge)))",
    "F (got_wood & F (used_workbench & F (got_iron & F (used_toolshed & F used_axe))))",
];

const INTERLEAVING: [&str; 10] = [
    "F (got_wood & F used_workbench) & F (got_iron & F used_workbench)",
    "F (got_wood & F used_toolshed) & F got_grass",
    "F (got_grass & F used_factory) & F got_wood",
    "F (got_wood & F used_workbench) & F (got_grass & F used_toolshed)",
    "F (got_iron & F used_factory) & F (got_wood & F used_factory)",
    "F (got_wood & F used_toolshed) & F (got_iron & F used_toolshed)",
    "F (got_grass & F used_workbench) & F (got_iron & F used_workbench)",
    "F (got_iron & F used_bridge) & F (got_wood & F used_bridge)",
    "F (got_wood & F used_axe) & F (got_iron & F used_axe)",
    "F (got_grass & F used_toolshed) & F (got_iron & F at_shelter)",
];

/// The bundled `sequential` and `interleaving` sets, ten formulae each.
pub fn builtin_specs(name: &str) -> Result<Vec<Formula>, HarnessError> {
    let texts = match name {
        "sequential" => SEQUENTIAL,
        "interleaving" => INTERLEAVING,
        _ => return Err(HarnessError::UnknownSpecSet(name.to_string())),
    };
    texts.iter().map(|t| Ok(parse(t)?)).collect()
}

/// A builtin set name or the path of a specification file.
pub fn load_specs(name_or_path: &str) -> Result<Vec<Formula>, HarnessError> {
    match builtin_specs(name_or_path) {
        Err(HarnessError::UnknownSpecSet(_)) => {
            let path = Path::new(name_or_path);
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            Ok(parse_spec_file(&text)?)
        }
        r => r,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub algo: Algo,
    pub agents: usize,
    /// Map text in the ASCII legend.
    pub map: String,
    pub specs: Vec<Formula>,
    pub steps_per_spec: usize,
    pub eval_every: usize,
    /// Step limit of training and evaluation episodes.
    pub episode_cap: usize,
    pub seeds: Vec<u64>,
    pub scheme: RewardScheme,
    pub learner: LearnerConfig,
}

impl ExperimentConfig {
    /// Defaults for `algo` under `preset`: three seeds, evaluation every
    /// 1000 steps, 300-step episodes, the default reward scheme.
    pub fn new(algo: Algo, preset: Preset, agents: usize, map: String, specs: Vec<Formula>) -> Self {
        let learner = LearnerConfig { backend: preset.backend(algo), gamma: algo.default_gamma(), ..Default::default() };
        ExperimentConfig {
            algo,
            agents,
            map,
            specs,
            steps_per_spec: preset.steps_per_spec(algo),
            eval_every: 1_000,
            episode_cap: DEFAULT_STEP_LIMIT,
            seeds: vec![0, 1, 2],
            scheme: RewardScheme::default(),
            learner,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.agents == 0 {
            return bad("need at least one agent".into());
        }
        if self.agents > 1 && !self.algo.is_independent() {
            return bad(format!("{} is single-agent; use i-{}", self.algo, self.algo));
        }
        if self.specs.is_empty() || self.seeds.is_empty() {
            return bad("need at least one specification and one seed".into());
        }
        if self.eval_every == 0 || self.eval_every > self.steps_per_spec {
            return bad("need 0 < eval_every <= steps_per_spec".into());
        }
        if self.episode_cap == 0 {
            return bad("episode cap must be positive".into());
        }
        if matches!(self.algo, Algo::Tabular | Algo::ITabular) && self.learner.backend != Backend::Tabular {
            return bad(format!("{} needs the tabular backend", self.algo));
        }
        for f in &self.specs {
            crate::ltl::validate_spec(f)?;
        }
        self.scheme.validate()?;
        self.learner.validate()?;
        CraftWorld::new(load_map(&self.map)?, self.agents)?;
        Ok(())
    }
}

/// One greedy evaluation rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub step: usize,
    pub seed: u64,
    pub agents: usize,
    pub spec_index: usize,
    #[serde(rename = "return")]
    pub discounted_return: f64,
    pub length: usize,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PolicyValues {
    /// One value function per agent over the product state.
    Product { max_dfa_states: usize, learners: Vec<ValueSnapshot> },
    Lpopl(BankSnapshot),
}

/// Final policies of one seed, self-contained for later evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFile {
    pub algo: Algo,
    pub seed: u64,
    pub agents: usize,
    pub gamma: f64,
    pub map: String,
    pub specs: Vec<String>,
    pub episode_cap: usize,
    pub scheme: RewardScheme,
    pub values: PolicyValues,
}

pub struct SeedRun {
    pub seed: u64,
    pub evals: Vec<EvalRow>,
    pub log: TrainingLog,
    pub policy: PolicyFile,
}

enum Runner {
    Product { trainer: IndependentTrainer<CraftWorld>, envs: Vec<ExtendedGame<CraftWorld>>, max_dfa: usize },
    Lpopl(LpoplTrainer<CraftWorld>),
}

impl Runner {
    fn new(cfg: &ExperimentConfig, world: &CraftWorld, seed: u64) -> Result<Self, HarnessError> {
        if cfg.algo.is_lpopl() {
            let t = LpoplTrainer::new(world.clone(), cfg.specs.clone(), cfg.scheme, &cfg.learner, cfg.episode_cap, seed)?;
            return Ok(Runner::Lpopl(t));
        }
        let envs = cfg
            .specs
            .iter()
            .map(|f| {
                let dfa = Arc::new(Dfa::compile(f)?);
                Ok(ExtendedGame::with_dfa(world.clone(), f.clone(), dfa, cfg.scheme).with_step_limit(cfg.episode_cap))
            })
            .collect::<Result<Vec<_>, HarnessError>>()?;
        let max_dfa = envs.iter().map(|e| e.dfa().num_states()).max().unwrap_or(1);
        let input = world.base_features(&world.initial(), 0).len() + max_dfa;
        let learners = make_learners(&cfg.learner, cfg.agents, Action::ALL.len(), input, seed);
        let eps = cfg.learner.epsilon(cfg.steps_per_spec);
        let trainer = IndependentTrainer::new(envs[0].clone(), learners, max_dfa, eps, seed)?;
        Ok(Runner::Product { trainer, envs, max_dfa })
    }

    fn set_spec(&mut self, i: usize, cfg: &ExperimentConfig) {
        let eps = cfg.learner.epsilon(cfg.steps_per_spec);
        match self {
            Runner::Product { trainer, envs, .. } => trainer.set_env(envs[i].clone(), i, eps),
            Runner::Lpopl(t) => t.set_spec(i, eps),
        }
    }

    fn run(&mut self, steps: usize) -> Result<(), HarnessError> {
        match self {
            Runner::Product { trainer, .. } => trainer.run(steps)?,
            Runner::Lpopl(t) => t.run(steps)?,
        }
        Ok(())
    }

    fn evaluate(&self, i: usize, gamma: f64) -> Result<EvalOutcome, HarnessError> {
        Ok(match self {
            Runner::Product { trainer, envs, .. } => trainer.evaluate_on(envs[i].clone(), i, gamma)?,
            Runner::Lpopl(t) => t.evaluate(i, gamma)?,
        })
    }

    fn log(&self) -> &TrainingLog {
        match self {
            Runner::Product { trainer, .. } => trainer.log(),
            Runner::Lpopl(t) => t.log(),
        }
    }

    fn values(&self) -> PolicyValues {
        match self {
            Runner::Product { trainer, max_dfa, .. } => PolicyValues::Product {
                max_dfa_states: *max_dfa,
                learners: trainer.learners().iter().map(|l| l.snapshot()).collect(),
            },
            Runner::Lpopl(t) => PolicyValues::Lpopl(t.bank().snapshot()),
        }
    }
}

/// Trains and evaluates one seed.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun, HarnessError> {
    cfg.validate()?;
    let world = CraftWorld::new(load_map(&cfg.map)?, cfg.agents)?;
    let mut runner = Runner::new(cfg, &world, seed)?;
    let gamma = cfg.learner.gamma;
    let mut evals = Vec::new();
    for spec in 0..cfg.specs.len() {
        runner.set_spec(spec, cfg);
        let mut done = 0;
        while done < cfg.steps_per_spec {
            let chunk = cfg.eval_every.min(cfg.steps_per_spec - done);
            runner.run(chunk)?;
            done += chunk;
            let step = spec * cfg.steps_per_spec + done;
            for j in 0..cfg.specs.len() {
                let o = runner.evaluate(j, gamma)?;
                evals.push(EvalRow {
                    step,
                    seed,
                    agents: cfg.agents,
                    spec_index: j,
                    discounted_return: o.discounted_return,
                    length: o.length,
                    satisfied: o.satisfied,
                });
            }
        }
    }
    let policy = PolicyFile {
        algo: cfg.algo,
        seed,
        agents: cfg.agents,
        gamma,
        map: cfg.map.clone(),
        specs: cfg.specs.iter().map(|f| f.to_string()).collect(),
        episode_cap: cfg.episode_cap,
        scheme: cfg.scheme,
        values: runner.values(),
    };
    Ok(SeedRun { seed, evals, log: runner.log().clone(), policy })
}

/// Thread count from `TG_THREADS`, if set to a positive integer.
pub fn thread_limit() -> Option<usize> {
    std::env::var("TG_THREADS").ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Runs every seed, in parallel up to [`thread_limit`] workers.
pub fn run_seeds(cfg: &ExperimentConfig) -> Result<Vec<SeedRun>, HarnessError> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_limit() {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| HarnessError::Config(e.to_string()))?;
    pool.install(|| cfg.seeds.par_iter().map(|&s| run_seed(cfg, s)).collect())
}

/// Per-step mean return over specifications.
pub fn mean_returns(rows: &[EvalRow]) -> Vec<(usize, f64)> {
    let mut by_step: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for r in rows {
        let e = by_step.entry(r.step).or_default();
        e.0 += r.discounted_return;
        e.1 += 1;
    }
    by_step.into_iter().map(|(s, (sum, n))| (s, sum / n as f64)).collect()
}

/// Linear-interpolation percentile of sorted data, `p` in `[0, 1]`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub step: usize,
    pub mean: f64,
    pub p25: f64,
    pub p75: f64,
}

/// Mean and quartiles across seeds of per-seed `(step, value)` series.
pub fn aggregate(series: &[Vec<(usize, f64)>]) -> Result<Vec<AggregateRow>, HarnessError> {
    let first = series.first().ok_or(HarnessError::Misaligned)?;
    let steps: Vec<usize> = first.iter().map(|p| p.0).collect();
    if series.iter().any(|s| s.iter().map(|p| p.0).ne(steps.iter().copied())) {
        return Err(HarnessError::Misaligned);
    }
    Ok(steps
        .iter()
        .enumerate()
        .map(|(i, &step)| {
            let mut v: Vec<f64> = series.iter().map(|s| s[i].1).collect();
            v.sort_by(f64::total_cmp);
            AggregateRow {
                step,
                mean: v.iter().sum::<f64>() / v.len() as f64,
                p25: percentile(&v, 0.25),
                p75: percentile(&v, 0.75),
            }
        })
        .collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct ReturnRecord {
    step: usize,
    seed: u64,
    spec_index: usize,
    #[serde(rename = "return")]
    ret: f64,
}

pub fn write_returns_csv(path: &Path, rows: &[EvalRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(ReturnRecord { step: r.step, seed: r.seed, spec_index: r.spec_index, ret: r.discounted_return })?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Reads a `returns_seed` file back as per-step mean returns.
pub fn read_returns_csv(path: &Path) -> Result<Vec<(usize, f64)>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut by_step: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for rec in r.deserialize() {
        let rec: ReturnRecord = rec?;
        let e = by_step.entry(rec.step).or_default();
        e.0 += rec.ret;
        e.1 += 1;
    }
    Ok(by_step.into_iter().map(|(s, (sum, n))| (s, sum / n as f64)).collect())
}

pub fn write_evals_csv(path: &Path, rows: &[EvalRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Self-contained SVG line chart of the mean with a p25 to p75 band.
pub fn render_svg(rows: &[AggregateRow], title: &str) -> String {
    let (w, h, m) = (640.0, 400.0, 50.0);
    let x_max = rows.iter().map(|r| r.step).max().unwrap_or(1).max(1) as f64;
    let y_lo = rows.iter().map(|r| r.p25.min(r.mean)).fold(f64::INFINITY, f64::min);
    let y_hi = rows.iter().map(|r| r.p75.max(r.mean)).fold(f64::NEG_INFINITY, f64::max);
    let (y_lo, y_hi) = if rows.is_empty() {
        (0.0, 1.0)
    } else if y_hi - y_lo < 1e-9 {
        (y_lo - 0.5, y_hi + 0.5)
    } else {
        (y_lo, y_hi)
    };
    let px = |s: usize| m + (w - 2.0 * m) * s as f64 / x_max;
    let py = |v: f64| h - m - (h - 2.0 * m) * (v - y_lo) / (y_hi - y_lo);
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="25" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(out, r#"<line x1="{m}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, h - m, w - m, h - m);
    let _ = writeln!(out, r#"<line x1="{m}" y1="{m}" x2="{m}" y2="{}" stroke="black"/>"#, h - m);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#, w - m, h - m + 18.0, x_max);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="11">{:.3}</text>"#, m - 4.0, py(y_hi) + 4.0, y_hi);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="11">{:.3}</text>"#, m - 4.0, py(y_lo) + 4.0, y_lo);
    if !rows.is_empty() {
        let upper: Vec<String> = rows.iter().map(|r| format!("{:.2},{:.2}", px(r.step), py(r.p75))).collect();
        let lower: Vec<String> = rows.iter().rev().map(|r| format!("{:.2},{:.2}", px(r.step), py(r.p25))).collect();
        let _ = writeln!(out, r#"<polygon points="{} {}" fill="steelblue" fill-opacity="0.3" stroke="none"/>"#, upper.join(" "), lower.join(" "));
        let mean: Vec<String> = rows.iter().map(|r| format!("{:.2},{:.2}", px(r.step), py(r.mean))).collect();
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#, mean.join(" "));
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub struct RunSummary {
    pub runs: Vec<SeedRun>,
    pub aggregate: Vec<AggregateRow>,
}

/// Runs every seed and writes all outputs into `out`.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<RunSummary, HarnessError> {
    let runs = run_seeds(cfg)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let cfg_path = out.join("config.json");
    fs::write(&cfg_path, serde_json::to_string_pretty(cfg)?).map_err(io_err(&cfg_path))?;
    for r in &runs {
        write_returns_csv(&out.join(format!("returns_seed{}.csv", r.seed)), &r.evals)?;
        write_evals_csv(&out.join(format!("evals_seed{}.csv", r.seed)), &r.evals)?;
        let p = out.join(format!("policy_seed{}.json", r.seed));
        fs::write(&p, serde_json::to_string(&r.policy)?).map_err(io_err(&p))?;
    }
    let series: Vec<_> = runs.iter().map(|r| mean_returns(&r.evals)).collect();
    let agg = aggregate(&series)?;
    write_aggregate_csv(&out.join("aggregate.csv"), &agg)?;
    let svg = out.join("curve.svg");
    let title = format!("{} ({} agent{})", cfg.algo, cfg.agents, if cfg.agents == 1 { "" } else { "s" });
    fs::write(&svg, render_svg(&agg, &title)).map_err(io_err(&svg))?;
    Ok(RunSummary { runs, aggregate: agg })
}

pub fn read_policy(path: &Path) -> Result<PolicyFile, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}

/// Greedy rollouts of a saved policy, one per specification. Product
/// policies pair `specs[i]` with the `i`-th trained specification; LPOPL
/// policies accept any specification whose sub-tasks are all in the bank.
pub fn evaluate_policy(p: &PolicyFile, specs: &[Formula]) -> Result<Vec<EvalOutcome>, HarnessError> {
    let world = CraftWorld::new(load_map(&p.map)?, p.agents)?;
    let mut outcomes = Vec::with_capacity(specs.len());
    match &p.values {
        PolicyValues::Product { max_dfa_states, learners } => {
            let fns: Vec<_> = learners.iter().map(|l| l.restore()).collect();
            let refs: Vec<&dyn QFunction> = fns.iter().map(|f| f.as_ref() as &dyn QFunction).collect();
            let keys = learners.iter().any(|l| l.uses_keys());
            for (i, f) in specs.iter().enumerate() {
                let env = ExtendedGame::new(world.clone(), f.clone(), p.scheme)?.with_step_limit(p.episode_cap);
                let cfg = ObsConfig { max_dfa_states: *max_dfa_states, context: i, keys, features: !keys };
                outcomes.push(evaluate_greedy(env, &refs, &cfg, p.gamma)?);
            }
        }
        PolicyValues::Lpopl(bank) => {
            let index: HashMap<Formula, usize> = bank
                .tasks
                .iter()
                .enumerate()
                .map(|(i, t)| Ok((parse(t)?, i)))
                .collect::<Result<_, HarnessError>>()?;
            let fns: Vec<Vec<_>> = bank.values.iter().map(|a| a.iter().map(|v| v.restore()).collect()).collect();
            let keys = bank.values.iter().flatten().any(|v| v.uses_keys());
            for f in specs {
                let mut env = ExtendedGame::new(world.clone(), f.clone(), p.scheme)?.with_step_limit(p.episode_cap);
                let task_of: Vec<Option<usize>> = env
                    .dfa()
                    .states()
                    .iter()
                    .map(|q| index.get(q).copied())
                    .collect();
                let mut s = env.reset();
                let (mut total, mut discounted, mut discount) = (0.0, 0.0, 1.0);
                loop {
                    let task = task_of[s.dfa_state].ok_or_else(|| {
                        LpoplError::UnknownTask(env.dfa().states()[s.dfa_state].to_string())
                    })?;
                    let mut joint = Vec::with_capacity(p.agents);
                    for (i, agent) in fns.iter().enumerate() {
                        let obs = Obs {
                            key: if keys { world.state_key(&s.base) } else { Vec::new() },
                            x: if keys { Vec::new() } else { world.base_features(&s.base, i) },
                        };
                        joint.push(argmax(&agent[task].values(&obs)?));
                    }
                    let t = env.step(&joint)?;
                    total += t.reward;
                    discounted += discount * t.reward;
                    discount *= p.gamma;
                    if t.ends_episode() {
                        outcomes.push(EvalOutcome {
                            total_reward: total,
                            discounted_return: discounted,
                            length: env.steps_taken(),
                            satisfied: t.terminal && Some(t.next_state.dfa_state) == env.dfa().accepting_state(),
                        });
                        break;
                    }
                    s = t.next_state;
                }
            }
        }
    }
    Ok(outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_sets() {
        for name in ["sequential", "interleaving"] {
            let specs = builtin_specs(name).unwrap();
            assert_eq!(specs.len(), 10);
            assert!(specs.iter().all(|f| f.is_cosafe()));
        }
        let shears = parse("F (got_wood & F (used_workbench & F (got_iron & F used_workbench)))").unwrap();
        assert!(builtin_specs("sequential").unwrap().contains(&shears));
        let phi = parse("F (got_wood & F used_workbench) & F (got_iron & F used_workbench)").unwrap();
        assert!(builtin_specs("interleaving").unwrap().contains(&phi));
        assert!(matches!(builtin_specs("other"), Err(HarnessError::UnknownSpecSet(_))));
    }

    #[test]
    fn percentiles() {
        let rows = aggregate(&[vec![(1, 0.0)], vec![(1, 2.0)], vec![(1, 1.0)]]).unwrap();
        assert_eq!(rows, vec![AggregateRow { step: 1, mean: 1.0, p25: 0.5, p75: 1.5 }]);
        let rows = aggregate(&[vec![(1, 3.0)]]).unwrap();
        assert_eq!((rows[0].mean, rows[0].p25, rows[0].p75), (3.0, 3.0, 3.0));
        assert!(matches!(aggregate(&[vec![(1, 0.0)], vec![(2, 0.0)]]), Err(HarnessError::Misaligned)));
    }

    #[test]
    fn algo_names_round_trip() {
        for a in Algo::ALL {
            assert_eq!(a.name().parse::<Algo>().unwrap(), a);
            assert_eq!(serde_json::to_string(&a).unwrap(), format!("\"{}\"", a.name()));
        }
    }

    #[test]
    fn config_checks() {
        let map = crate::craftworld::maps::DUAL.to_string();
        let specs = builtin_specs("sequential").unwrap();
        let cfg = ExperimentConfig::new(Algo::ITabular, Preset::Desk, 2, map.clone(), specs.clone());
        assert!(cfg.validate().is_ok());
        let cfg = ExperimentConfig::new(Algo::Tabular, Preset::Desk, 2, map.clone(), specs.clone());
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::new(Algo::ITabular, Preset::Desk, 2, map, specs);
        cfg.eval_every = cfg.steps_per_spec + 1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn svg_is_well_formed() {
        let svg = render_svg(&[AggregateRow { step: 1, mean: 0.0, p25: -1.0, p75: 1.0 }], "a<b");
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("a&lt;b"));
    }
}
