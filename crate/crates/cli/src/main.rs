use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use tg_core::craftworld::maps;
use tg_core::dfa::Dfa;
use tg_core::game::RewardScheme;
use tg_core::harness::{self, Algo, ExperimentConfig, Preset};
use tg_core::lpopl::extract_tasks;
use tg_core::ltl::{parse, validate_spec, Formula};

#[derive(Parser)]
#[command(name = "tg", version, about = "Temporal-logic tasks for independent multi-agent learners")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on a curriculum of specifications and write curves and policies.
    Train(TrainArgs),
    /// Roll out saved greedy policies.
    Eval {
        /// Run directory or a single policy file.
        #[arg(long)]
        policy: PathBuf,
        /// Builtin set name or file; defaults to the trained specifications.
        #[arg(long)]
        specs: Option<String>,
    },
    /// Compile a formula and write its automaton as Graphviz.
    CompileDfa {
        #[arg(long)]
        spec: String,
        /// Output file; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the sub-task closure of a specification set.
    Tasks {
        #[arg(long)]
        specs: String,
    },
}

#[derive(clap::Args)]
struct TrainArgs {
    #[arg(long)]
    algo: Algo,
    /// Map file, or one of the bundled maps: micro, single, dual.
    #[arg(long, default_value = "dual")]
    map: String,
    /// Builtin set name (sequential, interleaving) or a file.
    #[arg(long, default_value = "sequential")]
    specs: String,
    #[arg(long, default_value_t = 1)]
    agents: usize,
    #[arg(long, default_value = "desk")]
    preset: Preset,
    #[arg(long)]
    steps_per_spec: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    eval_every: usize,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 300)]
    episode_cap: usize,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    r_satisfy: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    r_progress: f64,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    r_stall: f64,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    r_violate: f64,
    /// Keep running after a violation instead of ending the episode.
    #[arg(long)]
    continue_on_violation: bool,
}

fn read_map(arg: &str) -> Result<String> {
    if let Some(text) = maps::by_name(arg) {
        return Ok(text.to_string());
    }
    fs::read_to_string(arg).with_context(|| format!("reading map {arg}"))
}

fn train(a: TrainArgs) -> Result<()> {
    let specs = harness::load_specs(&a.specs)?;
    let mut cfg = ExperimentConfig::new(a.algo, a.preset, a.agents, read_map(&a.map)?, specs);
    if let Some(n) = a.steps_per_spec {
        cfg.steps_per_spec = n;
    }
    if let Some(g) = a.gamma {
        cfg.learner.gamma = g;
    }
    cfg.eval_every = a.eval_every;
    cfg.seeds = a.seeds;
    cfg.episode_cap = a.episode_cap;
    cfg.scheme = RewardScheme::new(a.r_satisfy, a.r_progress, a.r_stall, a.r_violate, !a.continue_on_violation)?;
    cfg.validate()?;
    info!("training {} with {} agent(s) on {} specification(s)", cfg.algo, cfg.agents, cfg.specs.len());
    let summary = harness::run(&cfg, &a.out)?;
    if let Some(last) = summary.aggregate.last() {
        println!("step {}: mean {:.4} (p25 {:.4}, p75 {:.4})", last.step, last.mean, last.p25, last.p75);
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn policy_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .with_context(|| format!("reading {}", path.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("policy_seed") && n.ends_with(".json"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no policy files in {}", path.display());
    }
    Ok(files)
}

fn eval(policy: &Path, specs: Option<String>) -> Result<()> {
    println!("seed,spec_index,return,length,satisfied");
    for file in policy_files(policy)? {
        let p = harness::read_policy(&file)?;
        let specs: Vec<Formula> = match &specs {
            Some(s) => harness::load_specs(s)?,
            None => p.specs.iter().map(|s| parse(s)).collect::<Result<_, _>>()?,
        };
        for (i, o) in harness::evaluate_policy(&p, &specs)?.iter().enumerate() {
            println!("{},{},{},{},{}", p.seed, i, o.discounted_return, o.length, o.satisfied);
        }
    }
    Ok(())
}

fn compile_dfa(spec: &str, out: Option<PathBuf>) -> Result<()> {
    let f = parse(spec)?;
    validate_spec(&f)?;
    let dfa = Dfa::compile(&f)?;
    let dot = dfa.export_dot();
    match out {
        Some(path) => {
            fs::write(&path, dot).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("{} states", dfa.num_states());
        }
        None => print!("{dot}"),
    }
    Ok(())
}

fn tasks(specs: &str) -> Result<()> {
    let set = extract_tasks(&harness::load_specs(specs)?)?;
    for f in set.tasks() {
        println!("{f}");
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Train(a) => train(a),
        Command::Eval { policy, specs } => eval(&policy, specs),
        Command::CompileDfa { spec, out } => compile_dfa(&spec, out),
        Command::Tasks { specs } => tasks(&specs),
    }
}
