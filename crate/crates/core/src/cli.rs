//! Command-line front end. Exit codes: 0 success, 1 usage, 2 invalid
//! scenario/config, 3 runtime (I/O or check failure).

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::harness::{
    self, default_out_dir, summarize, AgentKind, HarnessError, Scenario, SuiteOptions, SweepParam,
};
use crate::tinynet::{finite_difference_check, Network, Tensor};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Parser)]
#[command(
    name = "antijam",
    version,
    about = "Anti-jamming game simulator: jammers vs. learning defenders"
)]
struct Cli {
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress per-slot and progress output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a single episode and print per-slot metrics.
    Run {
        /// Built-in scenario name (apartment, office) or a scenario file.
        scenario: String,
        /// Override the scenario's agent (greedy|qlearn|dqn|fastdqn).
        #[arg(long)]
        agent: Option<String>,
        /// Write the learned model (Q table or network snapshot) here.
        #[arg(long)]
        save_model: Option<PathBuf>,
    },
    /// Run agents over scenarios and write curve + summary CSVs.
    Suite {
        /// Built-in names or scenario files.
        #[arg(required = true)]
        scenarios: Vec<String>,
        /// Episodes per scenario/agent pair (overrides the scenario).
        #[arg(long, short)]
        episodes: Option<usize>,
        /// Output directory (default: $ANTIJAM_OUT or ./out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; episodes run in parallel.
        #[arg(long, short, default_value_t = 1)]
        parallel: usize,
        /// Comma-separated agent subset (default: all four).
        #[arg(long, value_delimiter = ',')]
        agents: Option<Vec<String>>,
    },
    /// Sweep one parameter over a value list and write a keyed summary CSV.
    Sweep {
        /// Parameter: channels | cp | jammer-move-prob.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Base scenario (built-in name or file).
        #[arg(long, default_value = "apartment")]
        scenario: String,
        #[arg(long, short)]
        episodes: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, short, default_value_t = 1)]
        parallel: usize,
        #[arg(long, value_delimiter = ',')]
        agents: Option<Vec<String>>,
    },
    /// Parse and check a scenario file, reporting the first bad field.
    Validate { scenario: String },
    /// Finite-difference gradient check of the network engine.
    Gradcheck {
        /// Number of random initializations to check.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
}

fn load_scenario(name: &str, seed: Option<u64>) -> Result<Scenario, HarnessError> {
    let mut sc = match Scenario::builtin(name) {
        Some(sc) => sc,
        None => Scenario::load(std::path::Path::new(name))?,
    };
    if let Some(s) = seed {
        sc.seed = s;
    }
    Ok(sc)
}

fn parse_agents(names: &Option<Vec<String>>) -> Result<Vec<AgentKind>, String> {
    match names {
        None => Ok(AgentKind::ALL.to_vec()),
        Some(list) => list.iter().map(|s| AgentKind::from_str(s)).collect(),
    }
}

fn error_code(e: &HarnessError) -> i32 {
    match e {
        HarnessError::Invalid(_) => EXIT_INVALID,
        HarnessError::Io { .. } => EXIT_RUNTIME,
    }
}

fn report(e: HarnessError) -> i32 {
    eprintln!("error: {e}");
    error_code(&e)
}

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => report(e),
    }
}

fn dispatch(cli: Cli) -> Result<i32, HarnessError> {
    match cli.cmd {
        Cmd::Run { scenario, agent, save_model } => {
            let sc = load_scenario(&scenario, cli.seed)?;
            let kind = match agent {
                Some(name) => match AgentKind::from_str(&name) {
                    Ok(k) => k,
                    Err(e) => {
                        eprintln!("error: {e}");
                        return Ok(EXIT_USAGE);
                    }
                },
                None => sc.agent,
            };
            let pretrained = match kind {
                AgentKind::Fastdqn => harness::hotboot_network(&sc)?,
                _ => None,
            };
            let (rows, agent) =
                harness::run_episode_with(&sc, kind, sc.seed, pretrained.as_ref())?;
            if !cli.quiet {
                let mut out = std::io::stdout().lock();
                harness::print_episode(&rows, &mut out).map_err(|e| HarnessError::Io {
                    path: "stdout".into(),
                    source: e,
                })?;
            }
            let curve = harness::aggregate(std::slice::from_ref(&rows), sc.ma_window);
            let (sm, _, um, _) = summarize(&curve, sc.summary_slots);
            println!(
                "# scenario={} agent={kind} seed={} slots={} sinr_mean={sm} utility_mean={um}",
                sc.name, sc.seed, sc.slots_per_episode
            );
            if let Some(path) = save_model {
                let mut f = std::fs::File::create(&path)
                    .map_err(|e| HarnessError::Io { path: path.display().to_string(), source: e })?;
                let saved = agent
                    .save_model(&mut f)
                    .map_err(|e| HarnessError::Io { path: path.display().to_string(), source: e })?;
                if !saved {
                    eprintln!("note: the {kind} agent keeps no model; nothing written");
                }
            }
            Ok(EXIT_OK)
        }
        Cmd::Suite { scenarios, episodes, out, parallel, agents } => {
            let agents = match parse_agents(&agents) {
                Ok(a) => a,
                Err(e) => {
                    eprintln!("error: {e}");
                    return Ok(EXIT_USAGE);
                }
            };
            let scs: Result<Vec<Scenario>, HarnessError> =
                scenarios.iter().map(|s| load_scenario(s, cli.seed)).collect();
            let scs = scs?;
            let opts = SuiteOptions {
                episodes,
                seed: cli.seed,
                out_dir: out.unwrap_or_else(default_out_dir),
                parallel,
                agents,
                quiet: cli.quiet,
            };
            let summary = harness::run_suite(&scs, &opts)?;
            if !cli.quiet {
                println!("scenario,agent,sinr_mean,utility_mean");
                for r in &summary {
                    println!("{},{},{},{}", r.scenario, r.agent, r.sinr_mean, r.utility_mean);
                }
            }
            println!("wrote {} curve files + summary.csv to {}", summary.len(), opts.out_dir.display());
            Ok(EXIT_OK)
        }
        Cmd::Sweep { param, values, scenario, episodes, out, parallel, agents } => {
            let param = match SweepParam::from_str(&param) {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("error: {e}");
                    return Ok(EXIT_USAGE);
                }
            };
            let agents = match parse_agents(&agents) {
                Ok(a) => a,
                Err(e) => {
                    eprintln!("error: {e}");
                    return Ok(EXIT_USAGE);
                }
            };
            let base = load_scenario(&scenario, cli.seed)?;
            let opts = SuiteOptions {
                episodes,
                seed: cli.seed,
                out_dir: out.unwrap_or_else(default_out_dir),
                parallel,
                agents,
                quiet: cli.quiet,
            };
            let rows = harness::run_sweep(&base, param, &values, &opts)?;
            if !cli.quiet {
                println!("value,agent,sinr_mean,utility_mean");
                for r in &rows {
                    println!(
                        "{},{},{},{}",
                        r.value, r.summary.agent, r.summary.sinr_mean, r.summary.utility_mean
                    );
                }
            }
            println!(
                "wrote sweep_{}.csv to {}",
                param.as_str().replace('-', "_"),
                opts.out_dir.display()
            );
            Ok(EXIT_OK)
        }
        Cmd::Validate { scenario } => {
            let sc = load_scenario(&scenario, None)?;
            println!("ok: scenario '{}' is valid", sc.name);
            Ok(EXIT_OK)
        }
        Cmd::Gradcheck { seeds } => {
            let mut worst = 0.0f64;
            for seed in 0..seeds {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut net = Network::default_cnn(34, &mut rng);
                let input = Tensor::from_vec(
                    &[1, 6, 6],
                    (0..36).map(|i| ((i as f64) * 0.618).sin() * 0.5 + 0.5).collect(),
                )
                .expect("static shape");
                let rel = finite_difference_check(&mut net, &input, 1e-6)
                    .map_err(|e| HarnessError::Invalid(e.to_string()))?;
                worst = worst.max(rel);
            }
            println!("gradcheck: max relative error {worst:e} over {seeds} seeds");
            if worst <= 1e-3 {
                println!("gradcheck: pass");
                Ok(EXIT_OK)
            } else {
                eprintln!("gradcheck: FAIL (tolerance 1e-3)");
                Ok(EXIT_RUNTIME)
            }
        }
    }
}
