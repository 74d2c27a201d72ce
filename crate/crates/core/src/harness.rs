//! Experiment orchestration: scenario files, the slot loop binding game and
//! agent, multi-seed suites, sweeps, metric aggregation, and CSV output.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::JammerConfig;
use crate::agents::{
    hotboot, Agent, DqnAgent, DqnParams, FastDqnAgent, FastDqnParams, GreedyAgent, LearnSchedule,
    QLearnAgent,
};
use crate::env::{EnvConfig, EnvError, FrequencyPattern, Topology};
use crate::game::{FeedbackLossMode, Game};
use crate::tinynet::Network;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl From<EnvError> for HarnessError {
    fn from(e: EnvError) -> Self {
        HarnessError::Invalid(e.to_string())
    }
}

fn io_err(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Greedy,
    Qlearn,
    Dqn,
    Fastdqn,
}

impl AgentKind {
    pub const ALL: [AgentKind; 4] =
        [AgentKind::Greedy, AgentKind::Qlearn, AgentKind::Dqn, AgentKind::Fastdqn];

    pub fn as_str(&self) -> &'static str {
        match self {
            AgentKind::Greedy => "greedy",
            AgentKind::Qlearn => "qlearn",
            AgentKind::Dqn => "dqn",
            AgentKind::Fastdqn => "fastdqn",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "greedy" => Ok(AgentKind::Greedy),
            "qlearn" => Ok(AgentKind::Qlearn),
            "dqn" => Ok(AgentKind::Dqn),
            "fastdqn" => Ok(AgentKind::Fastdqn),
            other => Err(format!("agent: unknown agent '{other}'")),
        }
    }
}

/// Learning hyperparameters shared by all agents, plus the CNN/macro knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnConfig {
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub alpha_start: f64,
    pub alpha_end: f64,
    pub gamma_start: f64,
    pub gamma_end: f64,
    /// Slots over which the schedules anneal.
    pub horizon: usize,
    /// History pairs in the CNN input sequence.
    pub window: usize,
    pub minibatch: usize,
    pub replay_capacity: usize,
    /// SGD step size = annealed alpha times this factor.
    pub lr_scale: f64,
    /// Random-exploration slots before macros are built.
    pub explore_slots: usize,
    pub n_macros: usize,
    pub macro_len: usize,
    /// Emulated pre-training episodes (0 disables hotbooting).
    pub hotboot_episodes: usize,
    pub hotboot_slots: usize,
    /// Give the greedy baseline the shared epsilon schedule instead of the
    /// pure score-argmax rule.
    pub greedy_explore: bool,
}

impl Default for LearnConfig {
    fn default() -> Self {
        let s = LearnSchedule::default();
        let d = DqnParams::default();
        LearnConfig {
            epsilon_start: s.epsilon_start,
            epsilon_end: s.epsilon_end,
            alpha_start: s.alpha_start,
            alpha_end: s.alpha_end,
            gamma_start: s.gamma_start,
            gamma_end: s.gamma_end,
            horizon: s.horizon,
            window: d.window,
            minibatch: d.minibatch,
            replay_capacity: d.replay_capacity,
            lr_scale: d.lr_scale,
            explore_slots: 300,
            n_macros: 4,
            macro_len: 5,
            // desk-scale hotbooting; paper scale is 200 episodes x 200 slots
            hotboot_episodes: 20,
            hotboot_slots: 100,
            greedy_explore: true,
        }
    }
}

impl LearnConfig {
    pub fn schedule(&self) -> LearnSchedule {
        LearnSchedule {
            epsilon_start: self.epsilon_start,
            epsilon_end: self.epsilon_end,
            alpha_start: self.alpha_start,
            alpha_end: self.alpha_end,
            gamma_start: self.gamma_start,
            gamma_end: self.gamma_end,
            horizon: self.horizon,
        }
    }

    pub fn dqn_params(&self) -> DqnParams {
        DqnParams {
            window: self.window,
            minibatch: self.minibatch,
            replay_capacity: self.replay_capacity,
            lr_scale: self.lr_scale,
            schedule: self.schedule(),
        }
    }

    pub fn fastdqn_params(&self) -> FastDqnParams {
        FastDqnParams {
            dqn: self.dqn_params(),
            explore_slots: self.explore_slots,
            n_macros: self.n_macros,
            macro_len: self.macro_len,
            hotboot_episodes: self.hotboot_episodes,
            hotboot_slots: self.hotboot_slots,
        }
    }
}

fn default_topology() -> Topology {
    Topology::single()
}

/// One experiment configuration, loadable from a TOML file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default = "Scenario::default_agent")]
    pub agent: AgentKind,
    #[serde(default = "Scenario::default_slots")]
    pub slots_per_episode: usize,
    #[serde(default = "Scenario::default_episodes")]
    pub n_episodes: usize,
    #[serde(default = "Scenario::default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub feedback_loss: FeedbackLoss,
    /// Summary statistics cover the last this-many curve rows.
    #[serde(default = "Scenario::default_summary_slots")]
    pub summary_slots: usize,
    /// Moving-average window applied to each episode's curves.
    #[serde(default = "Scenario::default_ma_window")]
    pub ma_window: usize,
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default = "default_topology")]
    pub topology: Topology,
    #[serde(default)]
    pub jammers: Vec<JammerConfig>,
    /// Optional fixed pattern table; empty means seed-drawn patterns.
    #[serde(default)]
    pub patterns: Vec<FrequencyPattern>,
    #[serde(default)]
    pub learn: LearnConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeedbackLoss {
    #[default]
    Off,
    ZeroSinr,
}

impl From<FeedbackLoss> for FeedbackLossMode {
    fn from(f: FeedbackLoss) -> Self {
        match f {
            FeedbackLoss::Off => FeedbackLossMode::Off,
            FeedbackLoss::ZeroSinr => FeedbackLossMode::ZeroSinr,
        }
    }
}

impl Scenario {
    fn default_agent() -> AgentKind {
        AgentKind::Fastdqn
    }
    fn default_slots() -> usize {
        2000
    }
    fn default_episodes() -> usize {
        20
    }
    fn default_seed() -> u64 {
        1
    }
    fn default_summary_slots() -> usize {
        500
    }
    fn default_ma_window() -> usize {
        50
    }

    pub fn from_toml_str(text: &str) -> Result<Scenario, HarnessError> {
        let sc: Scenario =
            toml::from_str(text).map_err(|e| HarnessError::Invalid(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Scenario, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Scenario::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |msg: String| Err(HarnessError::Invalid(msg));
        let mut env = self.env.clone();
        env.n_jammers = self.jammers.len();
        env.validate()?;
        self.topology.validate()?;
        if self.name.is_empty() {
            return fail("name: must not be empty".into());
        }
        if self.slots_per_episode == 0 {
            return fail("slots_per_episode: must be >= 1".into());
        }
        if self.n_episodes == 0 {
            return fail("n_episodes: must be >= 1".into());
        }
        if self.ma_window == 0 {
            return fail("ma_window: must be >= 1".into());
        }
        if self.summary_slots == 0 || self.summary_slots > self.slots_per_episode {
            return fail(format!(
                "summary_slots: must be in [1, slots_per_episode={}]",
                self.slots_per_episode
            ));
        }
        for (i, j) in self.jammers.iter().enumerate() {
            j.validate(&env).map_err(|e| HarnessError::Invalid(format!("jammers[{i}].{e}")))?;
            if j.serving_node >= self.topology.serving_nodes.len() {
                return fail(format!(
                    "jammers[{i}].serving_node: node {} out of range [0, {})",
                    j.serving_node,
                    self.topology.serving_nodes.len()
                ));
            }
        }
        if !self.patterns.is_empty() && self.patterns.len() != self.env.n_patterns {
            return fail(format!(
                "patterns: expected {} entries, got {}",
                self.env.n_patterns,
                self.patterns.len()
            ));
        }
        for (i, p) in self.patterns.iter().enumerate() {
            p.validate(&self.env)
                .map_err(|e| HarnessError::Invalid(format!("patterns[{i}]: {e}")))?;
        }
        if self.learn.n_macros > self.env.n_strategies() {
            return fail(format!(
                "learn.n_macros: must be <= {} strategies",
                self.env.n_strategies()
            ));
        }
        if self.learn.macro_len == 0 {
            return fail("learn.macro_len: must be >= 1".into());
        }
        Ok(())
    }

    /// Builds a game instance for one episode under `seed`.
    pub fn game(&self, seed: u64) -> Result<Game, HarnessError> {
        Ok(Game::new(
            self.env.clone(),
            self.topology.clone(),
            &self.jammers,
            self.patterns.clone(),
            self.feedback_loss.into(),
            seed,
        )?)
    }

    /// The built-in scenario catalogue.
    pub fn builtin(name: &str) -> Option<Scenario> {
        match name {
            "apartment" => Some(apartment()),
            "office" => Some(office()),
            _ => None,
        }
    }

    pub const BUILTIN_NAMES: [&'static str; 2] = ["apartment", "office"];
}

/// Command dissemination in an apartment: one mobile server, four smart
/// devices as serving nodes, a random jammer, a sweep jammer, and a microwave
/// oven that interferes with probability 0.05.
fn apartment() -> Scenario {
    Scenario {
        name: "apartment".into(),
        agent: AgentKind::Fastdqn,
        slots_per_episode: 2000,
        n_episodes: 20,
        seed: 1,
        feedback_loss: FeedbackLoss::Off,
        summary_slots: 500,
        ma_window: 50,
        env: EnvConfig { interference_probs: vec![0.05], sinr_levels: 4, n_patterns: 5, ..EnvConfig::default() },
        topology: Topology {
            locations: vec![[1.0, 1.0], [4.5, 1.0], [4.5, 4.0], [1.0, 4.0]],
            serving_nodes: vec![[0.5, 0.5], [5.0, 0.5], [5.0, 4.5], [0.5, 4.5]],
            adjacency: vec![0, 1, 2, 3],
        },
        jammers: vec![
            JammerConfig {
                kind: crate::adversary::JammerKind::Random,
                stay_prob: 0.9,
                position: [2.8, 2.2],
                serving_node: 0,
                ..JammerConfig::default()
            },
            JammerConfig {
                kind: crate::adversary::JammerKind::Sweep,
                n_sweep: 4,
                position: [3.6, 3.0],
                serving_node: 0,
                ..JammerConfig::default()
            },
        ],
        patterns: Vec::new(),
        learn: LearnConfig {
            greedy_explore: false,
            alpha_end: 0.1,
            epsilon_end: 0.02,
            horizon: 300,
            explore_slots: 30,
            hotboot_episodes: 80,
            hotboot_slots: 150,
            ..LearnConfig::default()
        },
    }
}

/// Sensing-report transmission in an office: a mobile sensing robot, two
/// APs, a random jammer at (3.2, 0.9), a reactive jammer at (9.5, 3.1), a
/// microwave at (1.6, 4.6) interfering with probability 0.1, and a USRP rig
/// at (11.5, 5.1) interfering with probability 0.05.
fn office() -> Scenario {
    Scenario {
        name: "office".into(),
        agent: AgentKind::Fastdqn,
        slots_per_episode: 2000,
        n_episodes: 20,
        seed: 1,
        feedback_loss: FeedbackLoss::Off,
        summary_slots: 500,
        ma_window: 50,
        env: EnvConfig {
            interference_probs: vec![0.1, 0.05],
            sinr_levels: 4,
            n_patterns: 5,
            ..EnvConfig::default()
        },
        topology: Topology {
            locations: vec![[2.5, 2.5], [9.5, 2.5]],
            serving_nodes: vec![[2.0, 2.0], [10.0, 2.0]],
            adjacency: vec![0, 1],
        },
        jammers: vec![
            JammerConfig {
                kind: crate::adversary::JammerKind::Random,
                stay_prob: 0.9,
                position: [3.2, 0.9],
                serving_node: 0,
                ..JammerConfig::default()
            },
            JammerConfig {
                kind: crate::adversary::JammerKind::Reactive,
                n_monitor: 8,
                position: [9.5, 3.1],
                serving_node: 1,
                ..JammerConfig::default()
            },
        ],
        patterns: Vec::new(),
        learn: LearnConfig {
            greedy_explore: false,
            alpha_end: 0.1,
            epsilon_end: 0.02,
            horizon: 300,
            explore_slots: 30,
            hotboot_episodes: 80,
            hotboot_slots: 150,
            ..LearnConfig::default()
        },
    }
}

/// What the harness records for one slot of one episode.
#[derive(Debug, Clone, Copy)]
pub struct MetricsRow {
    pub slot: usize,
    pub sinr: f64,
    pub utility: f64,
    pub action: usize,
    pub moved: bool,
    pub silent: bool,
}

/// Seed for episode `i` of a run rooted at `base`.
pub fn episode_seed(base: u64, episode: usize) -> u64 {
    base.wrapping_add(episode as u64)
}

fn agent_seed(seed: u64) -> u64 {
    // decorrelate the agent's exploration stream from the game's streams
    seed ^ 0xA5A5_5A5A_1234_5678
}

fn build_agent(
    sc: &Scenario,
    kind: AgentKind,
    seed: u64,
    pretrained: Option<&Network>,
) -> Box<dyn Agent> {
    let mut env = sc.env.clone();
    env.n_jammers = sc.jammers.len();
    match kind {
        AgentKind::Greedy => Box::new(GreedyAgent::new(
            &env,
            sc.learn.schedule(),
            !sc.learn.greedy_explore,
            agent_seed(seed),
        )),
        AgentKind::Qlearn => {
            Box::new(QLearnAgent::new(&env, sc.learn.schedule(), agent_seed(seed)))
        }
        AgentKind::Dqn => {
            let mut a = DqnAgent::new(&env, sc.learn.dqn_params(), agent_seed(seed));
            if let Some(net) = pretrained {
                a.set_network(net.clone());
            }
            Box::new(a)
        }
        AgentKind::Fastdqn => Box::new(FastDqnAgent::new(
            &env,
            sc.learn.fastdqn_params(),
            pretrained.cloned(),
            agent_seed(seed),
        )),
    }
}

/// Runs one full episode and returns one row per slot.
pub fn run_episode(
    sc: &Scenario,
    kind: AgentKind,
    seed: u64,
    pretrained: Option<&Network>,
) -> Result<Vec<MetricsRow>, HarnessError> {
    run_episode_with(sc, kind, seed, pretrained).map(|(rows, _)| rows)
}

/// Like `run_episode`, but hands back the agent so callers can checkpoint
/// its learned parameters.
pub fn run_episode_with(
    sc: &Scenario,
    kind: AgentKind,
    seed: u64,
    pretrained: Option<&Network>,
) -> Result<(Vec<MetricsRow>, Box<dyn Agent>), HarnessError> {
    sc.validate()?;
    let mut game = sc.game(seed)?;
    let mut agent = build_agent(sc, kind, seed, pretrained);
    let slots = sc.slots_per_episode;
    let mut rows = Vec::with_capacity(slots);
    let mut obs = game.initial_obs();
    agent.begin_episode();
    for k in 0..slots {
        let strategy = agent.select(k, obs, slots - k);
        let rec = game.step(strategy);
        agent.observe(k, obs, strategy, rec.reward, rec.next_obs);
        rows.push(MetricsRow {
            slot: k,
            sinr: rec.outcome.sinr,
            utility: rec.outcome.utility,
            action: strategy.index(),
            moved: rec.moved,
            silent: rec.outcome.tx_power == 0.0,
        });
        obs = rec.next_obs;
    }
    Ok((rows, agent))
}

/// Pre-trains CNN parameters on emulated games drawn from this scenario.
/// Returns `None` when the scenario disables hotbooting.
pub fn hotboot_network(sc: &Scenario) -> Result<Option<Network>, HarnessError> {
    if sc.learn.hotboot_episodes == 0 {
        return Ok(None);
    }
    sc.validate()?;
    let mut env = sc.env.clone();
    env.n_jammers = sc.jammers.len();
    // emulated environments use their own seed stream, disjoint from the
    // evaluation episodes
    let base = sc.seed ^ 0x486F_7442_6F6F_7400;
    let net = hotboot(
        |i| sc.game(episode_seed(base, i)).expect("scenario validated above"),
        sc.learn.hotboot_episodes,
        sc.learn.hotboot_slots,
        &env,
        &sc.learn.dqn_params(),
        agent_seed(base),
    );
    Ok(Some(net))
}

/// One row of an averaged learning curve.
#[derive(Debug, Clone, Copy)]
pub struct CurveRow {
    pub slot: usize,
    pub sinr_mean: f64,
    pub sinr_std: f64,
    pub utility_mean: f64,
    pub utility_std: f64,
}

/// Trailing moving average with window `w` (shorter at the start).
fn moving_average(values: &[f64], w: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (k, &v) in values.iter().enumerate() {
        sum += v;
        if k >= w {
            sum -= values[k - w];
        }
        out.push(sum / (k.min(w - 1) + 1) as f64);
    }
    out
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Smooths each episode with the moving average, then takes the per-slot mean
/// and sample standard deviation across episodes.
pub fn aggregate(episodes: &[Vec<MetricsRow>], ma_window: usize) -> Vec<CurveRow> {
    assert!(!episodes.is_empty());
    let slots = episodes[0].len();
    debug_assert!(episodes.iter().all(|e| e.len() == slots));
    let sinr_ma: Vec<Vec<f64>> = episodes
        .iter()
        .map(|e| moving_average(&e.iter().map(|r| r.sinr).collect::<Vec<_>>(), ma_window))
        .collect();
    let util_ma: Vec<Vec<f64>> = episodes
        .iter()
        .map(|e| moving_average(&e.iter().map(|r| r.utility).collect::<Vec<_>>(), ma_window))
        .collect();
    (0..slots)
        .map(|k| {
            let s: Vec<f64> = sinr_ma.iter().map(|e| e[k]).collect();
            let u: Vec<f64> = util_ma.iter().map(|e| e[k]).collect();
            let (sm, ss) = mean_and_std(&s);
            let (um, us) = mean_and_std(&u);
            CurveRow { slot: k, sinr_mean: sm, sinr_std: ss, utility_mean: um, utility_std: us }
        })
        .collect()
}

/// Summary statistics for one (scenario, agent) pair.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub scenario: String,
    pub agent: AgentKind,
    pub episodes: usize,
    pub slots: usize,
    pub summary_slots: usize,
    pub sinr_mean: f64,
    pub sinr_std: f64,
    pub utility_mean: f64,
    pub utility_std: f64,
}

/// Column means of the last `last` curve rows; the summary is by definition a
/// reduction of the curve file, so recomputing it from the CSV is exact.
pub fn summarize(curve: &[CurveRow], last: usize) -> (f64, f64, f64, f64) {
    let tail = &curve[curve.len().saturating_sub(last)..];
    let n = tail.len() as f64;
    (
        tail.iter().map(|r| r.sinr_mean).sum::<f64>() / n,
        tail.iter().map(|r| r.sinr_std).sum::<f64>() / n,
        tail.iter().map(|r| r.utility_mean).sum::<f64>() / n,
        tail.iter().map(|r| r.utility_std).sum::<f64>() / n,
    )
}

pub const CURVE_HEADER: &str = "slot,sinr_mean,sinr_std,utility_mean,utility_std";

pub fn write_curve_csv(
    path: &Path,
    sc: &Scenario,
    agent: AgentKind,
    episodes: usize,
    curve: &[CurveRow],
) -> Result<(), HarnessError> {
    let mut out = String::new();
    out.push_str(&format!(
        "# scenario={} agent={} episodes={} seed={} slots={} ma_window={}\n",
        sc.name, agent, episodes, sc.seed, sc.slots_per_episode, sc.ma_window
    ));
    out.push_str(CURVE_HEADER);
    out.push('\n');
    for r in curve {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.slot, r.sinr_mean, r.sinr_std, r.utility_mean, r.utility_std
        ));
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<(), HarnessError> {
    let mut out = String::from(
        "scenario,agent,episodes,slots,summary_slots,sinr_mean,sinr_std,utility_mean,utility_std\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.scenario,
            r.agent,
            r.episodes,
            r.slots,
            r.summary_slots,
            r.sinr_mean,
            r.sinr_std,
            r.utility_mean,
            r.utility_std
        ));
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    /// Overrides each scenario's n_episodes when set.
    pub episodes: Option<usize>,
    /// Overrides each scenario's seed when set.
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    /// Worker threads; episodes are the unit of parallelism.
    pub parallel: usize,
    pub agents: Vec<AgentKind>,
    pub quiet: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            episodes: None,
            seed: None,
            out_dir: default_out_dir(),
            parallel: 1,
            agents: AgentKind::ALL.to_vec(),
            quiet: true,
        }
    }
}

/// Default output directory: `$ANTIJAM_OUT` or `./out`.
pub fn default_out_dir() -> PathBuf {
    std::env::var_os("ANTIJAM_OUT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"))
}

fn run_episodes(
    sc: &Scenario,
    kind: AgentKind,
    episodes: usize,
    pretrained: Option<&Network>,
    parallel: usize,
) -> Result<Vec<Vec<MetricsRow>>, HarnessError> {
    let run = |i: usize| run_episode(sc, kind, episode_seed(sc.seed, i), pretrained);
    if parallel <= 1 {
        (0..episodes).map(run).collect()
    } else {
        // collected in episode order, so the reduction is order-preserving
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallel)
            .build()
            .map_err(|e| HarnessError::Invalid(format!("parallel: {e}")))?;
        pool.install(|| {
            use rayon::prelude::*;
            (0..episodes).into_par_iter().map(run).collect()
        })
    }
}

/// Runs every requested agent on every scenario, writes one curve CSV per
/// (scenario, agent) pair plus `summary.csv`, and returns the summary rows.
pub fn run_suite(
    scenarios: &[Scenario],
    opts: &SuiteOptions,
) -> Result<Vec<SummaryRow>, HarnessError> {
    std::fs::create_dir_all(&opts.out_dir).map_err(|e| io_err(&opts.out_dir, e))?;
    let mut summary = Vec::new();
    for sc in scenarios {
        let mut sc = sc.clone();
        if let Some(e) = opts.episodes {
            sc.n_episodes = e;
        }
        if let Some(s) = opts.seed {
            sc.seed = s;
        }
        sc.validate()?;
        let needs_net =
            opts.agents.iter().any(|a| matches!(a, AgentKind::Fastdqn | AgentKind::Dqn));
        // one hotbooting pass per scenario, shared by every seed
        let pretrained = if needs_net { hotboot_network(&sc)? } else { None };
        for &kind in &opts.agents {
            if !opts.quiet {
                eprintln!("running {} / {} ({} episodes)", sc.name, kind, sc.n_episodes);
            }
            let net = match kind {
                AgentKind::Dqn | AgentKind::Fastdqn => pretrained.as_ref(),
                _ => None,
            };
            // the plain DQN starts from scratch, per its definition
            let net = if kind == AgentKind::Dqn { None } else { net };
            let episodes = run_episodes(&sc, kind, sc.n_episodes, net, opts.parallel)?;
            let curve = aggregate(&episodes, sc.ma_window);
            let path = opts.out_dir.join(format!("{}_{}_curve.csv", sc.name, kind));
            write_curve_csv(&path, &sc, kind, sc.n_episodes, &curve)?;
            let (sm, ss, um, us) = summarize(&curve, sc.summary_slots);
            summary.push(SummaryRow {
                scenario: sc.name.clone(),
                agent: kind,
                episodes: sc.n_episodes,
                slots: sc.slots_per_episode,
                summary_slots: sc.summary_slots,
                sinr_mean: sm,
                sinr_std: ss,
                utility_mean: um,
                utility_std: us,
            });
        }
    }
    write_summary_csv(&opts.out_dir.join("summary.csv"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// Number of frequency channels N.
    Channels,
    /// Unit transmission cost C_p.
    CostTx,
    /// Mobile-jammer relocation probability p.
    JammerMoveProb,
}

impl SweepParam {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepParam::Channels => "channels",
            SweepParam::CostTx => "cp",
            SweepParam::JammerMoveProb => "jammer-move-prob",
        }
    }
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "channels" => Ok(SweepParam::Channels),
            "cp" => Ok(SweepParam::CostTx),
            "jammer-move-prob" => Ok(SweepParam::JammerMoveProb),
            other => Err(format!("param: unknown sweep parameter '{other}'")),
        }
    }
}

/// The base scenario with one swept parameter applied.
pub fn apply_sweep(base: &Scenario, param: SweepParam, value: f64) -> Result<Scenario, HarnessError> {
    let mut sc = base.clone();
    match param {
        SweepParam::Channels => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(HarnessError::Invalid(format!(
                    "values: channel count must be a positive integer, got {value}"
                )));
            }
            sc.env.n_channels = value as usize;
            // fixed pattern tables are only valid for their own N
            sc.patterns.clear();
        }
        SweepParam::CostTx => {
            if value < 0.0 {
                return Err(HarnessError::Invalid("values: cp must be >= 0".into()));
            }
            sc.env.cost_tx_unit = value;
        }
        SweepParam::JammerMoveProb => {
            if !(0.0..=1.0).contains(&value) {
                return Err(HarnessError::Invalid(
                    "values: jammer-move-prob must be in [0,1]".into(),
                ));
            }
            for j in &mut sc.jammers {
                j.mobile = value > 0.0;
                j.move_prob = value;
            }
        }
    }
    sc.name = format!("{}_{}{}", base.name, param.as_str().replace('-', "_"), value);
    sc.validate()?;
    Ok(sc)
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub summary: SummaryRow,
}

/// Runs the sweep and writes `sweep_<param>.csv` keyed by the swept value.
pub fn run_sweep(
    base: &Scenario,
    param: SweepParam,
    values: &[f64],
    opts: &SuiteOptions,
) -> Result<Vec<SweepRow>, HarnessError> {
    if values.is_empty() {
        return Err(HarnessError::Invalid("values: at least one sweep value required".into()));
    }
    std::fs::create_dir_all(&opts.out_dir).map_err(|e| io_err(&opts.out_dir, e))?;
    let mut rows = Vec::new();
    for &v in values {
        let sc = apply_sweep(base, param, v)?;
        let mut sub = opts.clone();
        sub.out_dir = opts.out_dir.clone();
        let summary = run_suite(std::slice::from_ref(&sc), &sub)?;
        for s in summary {
            rows.push(SweepRow { value: v, summary: s });
        }
    }
    let path = opts.out_dir.join(format!("sweep_{}.csv", param.as_str().replace('-', "_")));
    let mut out = String::from(
        "param,value,scenario,agent,sinr_mean,sinr_std,utility_mean,utility_std\n",
    );
    for r in &rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            param.as_str(),
            r.value,
            r.summary.scenario,
            r.summary.agent,
            r.summary.sinr_mean,
            r.summary.sinr_std,
            r.summary.utility_mean,
            r.summary.utility_std
        ));
    }
    std::fs::write(&path, out).map_err(|e| io_err(&path, e))?;
    Ok(rows)
}

/// Reads a curve CSV back into rows (comment lines skipped).
pub fn read_curve_csv(path: &Path) -> Result<Vec<CurveRow>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') || line.starts_with("slot,") || line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 5 {
            return Err(HarnessError::Invalid(format!("csv row: expected 5 columns: {line}")));
        }
        let f = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| HarnessError::Invalid(format!("csv row: bad number {s}")))
        };
        rows.push(CurveRow {
            slot: parts[0]
                .parse()
                .map_err(|_| HarnessError::Invalid(format!("csv row: bad slot {}", parts[0])))?,
            sinr_mean: f(parts[1])?,
            sinr_std: f(parts[2])?,
            utility_mean: f(parts[3])?,
            utility_std: f(parts[4])?,
        });
    }
    Ok(rows)
}

/// Pretty-prints one episode's rows for the `run` subcommand.
pub fn print_episode(rows: &[MetricsRow], w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "slot,sinr,utility,action,moved,silent")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.slot, r.sinr, r.utility, r.action, r.moved as u8, r.silent as u8
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(agent: AgentKind) -> Scenario {
        let mut sc = Scenario::builtin("apartment").unwrap();
        sc.agent = agent;
        sc.slots_per_episode = 60;
        sc.summary_slots = 20;
        sc.n_episodes = 2;
        sc.learn.hotboot_episodes = 0;
        sc.learn.explore_slots = 20;
        sc
    }

    #[test]
    fn builtins_validate() {
        for name in Scenario::BUILTIN_NAMES {
            Scenario::builtin(name).unwrap().validate().unwrap();
        }
        assert!(Scenario::builtin("lab").is_none());
    }

    #[test]
    fn toml_round_trip_and_defaults() {
        let text = r#"
            name = "mini"
            [env]
            n_channels = 8
            [[jammers]]
            kind = "sweep"
            n_sweep = 2
        "#;
        let sc = Scenario::from_toml_str(text).unwrap();
        assert_eq!(sc.name, "mini");
        assert_eq!(sc.env.n_channels, 8);
        assert_eq!(sc.slots_per_episode, 2000);
        assert_eq!(sc.n_episodes, 20);
        assert_eq!(sc.jammers.len(), 1);
        assert_eq!(sc.jammers[0].n_sweep, 2);
        assert_eq!(sc.ma_window, 50);
    }

    #[test]
    fn bad_pattern_named_in_error() {
        let text = r#"
            name = "mini"
            [env]
            n_channels = 4
            n_patterns = 1
            pattern_len = 3
            [[patterns]]
            entries = [1, 2]
        "#;
        let err = Scenario::from_toml_str(text).unwrap_err().to_string();
        assert!(err.contains("pattern"), "error should name the field: {err}");
    }

    #[test]
    fn unknown_agent_rejected() {
        let text = "name = \"x\"\nagent = \"sarsa\"\n";
        assert!(Scenario::from_toml_str(text).is_err());
    }

    #[test]
    fn episode_is_deterministic_and_full_length() {
        let sc = tiny(AgentKind::Qlearn);
        let a = run_episode(&sc, AgentKind::Qlearn, 7, None).unwrap();
        let b = run_episode(&sc, AgentKind::Qlearn, 7, None).unwrap();
        assert_eq!(a.len(), 60);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.sinr, y.sinr);
            assert_eq!(x.utility, y.utility);
            assert_eq!(x.action, y.action);
        }
    }

    #[test]
    fn moving_average_window() {
        let v = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let ma = moving_average(&v, 2);
        assert_eq!(ma, vec![1.0, 1.5, 2.5, 3.5, 4.5]);
        let ma1 = moving_average(&v, 1);
        assert_eq!(ma1, v);
    }

    #[test]
    fn aggregate_mean_and_std() {
        let mk = |u: f64| {
            vec![MetricsRow { slot: 0, sinr: u, utility: 2.0 * u, action: 0, moved: false, silent: false }]
        };
        let rows = aggregate(&[mk(1.0), mk(3.0)], 1);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].sinr_mean, 2.0);
        // sample std of {1, 3} = sqrt(2)
        assert!((rows[0].sinr_std - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(rows[0].utility_mean, 4.0);
    }

    #[test]
    fn summary_is_column_mean_of_tail() {
        let rows: Vec<CurveRow> = (0..10)
            .map(|k| CurveRow {
                slot: k,
                sinr_mean: k as f64,
                sinr_std: 0.5,
                utility_mean: 2.0 * k as f64,
                utility_std: 1.0,
            })
            .collect();
        let (sm, ss, um, us) = summarize(&rows, 4);
        assert_eq!(sm, (6.0 + 7.0 + 8.0 + 9.0) / 4.0);
        assert_eq!(ss, 0.5);
        assert_eq!(um, 15.0);
        assert_eq!(us, 1.0);
    }

    #[test]
    fn suite_outputs_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let sc = tiny(AgentKind::Qlearn);
        let opts = SuiteOptions {
            out_dir: dir.path().to_path_buf(),
            agents: vec![AgentKind::Greedy, AgentKind::Qlearn],
            ..SuiteOptions::default()
        };
        let s1 = run_suite(std::slice::from_ref(&sc), &opts).unwrap();
        assert_eq!(s1.len(), 2);
        let c1 = std::fs::read(dir.path().join("apartment_qlearn_curve.csv")).unwrap();
        let sum1 = std::fs::read(dir.path().join("summary.csv")).unwrap();
        // second identical run: byte-identical outputs
        run_suite(std::slice::from_ref(&sc), &opts).unwrap();
        let c2 = std::fs::read(dir.path().join("apartment_qlearn_curve.csv")).unwrap();
        let sum2 = std::fs::read(dir.path().join("summary.csv")).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(sum1, sum2);
        // summary reproducible from the curve file
        let curve = read_curve_csv(&dir.path().join("apartment_qlearn_curve.csv")).unwrap();
        let (sm, ss, um, us) = summarize(&curve, sc.summary_slots);
        let row = s1.iter().find(|r| r.agent == AgentKind::Qlearn).unwrap();
        assert_eq!(sm, row.sinr_mean);
        assert_eq!(ss, row.sinr_std);
        assert_eq!(um, row.utility_mean);
        assert_eq!(us, row.utility_std);
    }

    #[test]
    fn parallel_matches_serial() {
        let sc = tiny(AgentKind::Qlearn);
        let serial = run_episodes(&sc, AgentKind::Qlearn, 3, None, 1).unwrap();
        let par = run_episodes(&sc, AgentKind::Qlearn, 3, None, 4).unwrap();
        for (a, b) in serial.iter().zip(&par) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.sinr, y.sinr);
                assert_eq!(x.utility, y.utility);
            }
        }
    }

    #[test]
    fn sweep_applies_parameter() {
        let base = tiny(AgentKind::Greedy);
        let sc = apply_sweep(&base, SweepParam::Channels, 16.0).unwrap();
        assert_eq!(sc.env.n_channels, 16);
        let sc = apply_sweep(&base, SweepParam::CostTx, 0.3).unwrap();
        assert_eq!(sc.env.cost_tx_unit, 0.3);
        let sc = apply_sweep(&base, SweepParam::JammerMoveProb, 0.8).unwrap();
        assert!(sc.jammers.iter().all(|j| j.mobile && j.move_prob == 0.8));
        assert!(apply_sweep(&base, SweepParam::Channels, 2.5).is_err());
        assert!(apply_sweep(&base, SweepParam::JammerMoveProb, 1.5).is_err());
    }

    #[test]
    fn all_agents_complete_a_short_episode() {
        for kind in AgentKind::ALL {
            let mut sc = tiny(kind);
            sc.slots_per_episode = 40;
            sc.summary_slots = 10;
            sc.learn.explore_slots = 10;
            let rows = run_episode(&sc, kind, 1, None).unwrap();
            assert_eq!(rows.len(), 40, "{kind}");
            assert!(rows.iter().all(|r| r.sinr.is_finite() && r.utility.is_finite()));
        }
    }
}
