//! Fast DQN: hotbooted initialization plus macro-actions.

use crate::env::{EnvConfig, Strategy};
use crate::game::{Game, ObsState};
use crate::tinynet::Network;

use super::{
    epsilon_greedy, random_strategy, Agent, DqnAgent, DqnParams, Experience, MacroAction,
};

#[derive(Debug, Clone)]
pub struct FastDqnParams {
    pub dqn: DqnParams,
    /// Random-exploration slots T used to score strategies for macros.
    pub explore_slots: usize,
    /// Number of macro-actions Phi.
    pub n_macros: usize,
    /// Macro length zeta.
    pub macro_len: usize,
    /// Hotbooting episodes I.
    pub hotboot_episodes: usize,
    /// Slots per hotbooting episode K.
    pub hotboot_slots: usize,
}

impl Default for FastDqnParams {
    fn default() -> Self {
        FastDqnParams {
            dqn: DqnParams::default(),
            explore_slots: 300,
            n_macros: 4,
            macro_len: 5,
            hotboot_episodes: 200,
            hotboot_slots: 200,
        }
    }
}

/// Eq-style cumulative discounted reward: sum_i gamma^i r_i.
pub fn discounted_sum(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, &r| r + gamma * acc)
}

/// Sorts strategies by their recorded best utility (descending, ties toward
/// the lower strategy index) and expands the top `n_macros` into
/// `macro_len`-repeat macros.
pub fn build_macros(
    recorded_max: &[f64],
    n_macros: usize,
    macro_len: usize,
) -> Result<Vec<MacroAction>, String> {
    if n_macros > recorded_max.len() {
        return Err(format!(
            "n_macros {} exceeds the strategy-set size {}",
            n_macros,
            recorded_max.len()
        ));
    }
    let mut order: Vec<usize> = (0..recorded_max.len()).collect();
    order.sort_by(|&a, &b| {
        recorded_max[b].partial_cmp(&recorded_max[a]).unwrap().then(a.cmp(&b))
    });
    Ok(order[..n_macros]
        .iter()
        .map(|&i| MacroAction { strategy: Strategy::from_index(i), len: macro_len })
        .collect())
}

/// Pretrains CNN parameters on `episodes` freshly initialized emulated
/// environments of `steps` slots each, running the usual DQN loop with a
/// dedicated experience pool, and returns the final parameters.
pub fn hotboot(
    mut make_game: impl FnMut(usize) -> Game,
    episodes: usize,
    steps: usize,
    cfg: &EnvConfig,
    params: &DqnParams,
    seed: u64,
) -> Network {
    let mut agent = DqnAgent::new(cfg, params.clone(), seed);
    // schedules anneal over the whole emulated stream, not per episode, so
    // the returned parameters come from the low-noise end of the schedule
    agent.start_at(0);
    let mut global = 0usize;
    for i in 0..episodes {
        let mut game = make_game(i);
        agent.history.clear();
        let mut obs = game.initial_obs();
        for k in 0..steps {
            let strategy = agent.select(global, obs, steps - k);
            let rec = game.step(strategy);
            agent.observe(global, obs, strategy, rec.reward, rec.next_obs);
            obs = rec.next_obs;
            global += 1;
        }
    }
    agent.net
}

struct MacroRun {
    action: usize,
    start_seq: Vec<f64>,
    rewards: Vec<f64>,
    gamma: f64,
    lr: f64,
}

enum Phase {
    /// Random play scoring strategies by their best observed utility.
    Explore { best_utility: Vec<f64> },
    /// Macros installed, normal DQN play over the widened head.
    Main,
}

pub struct FastDqnAgent {
    core: DqnAgent,
    params: FastDqnParams,
    phase: Phase,
    macros: Vec<MacroAction>,
    macro_run: Option<MacroRun>,
    n_primitive: usize,
}

impl FastDqnAgent {
    /// Builds the agent; `pretrained` normally comes from `hotboot`.
    pub fn new(cfg: &EnvConfig, params: FastDqnParams, pretrained: Option<Network>, seed: u64) -> Self {
        let mut core = DqnAgent::new(cfg, params.dqn.clone(), seed);
        if let Some(net) = pretrained {
            core.set_network(net);
            // the emulated stream already walked the schedules to their end
            // values; continue from there instead of re-annealing
            core.schedule_offset = params.dqn.schedule.horizon;
        }
        let n_primitive = cfg.n_strategies();
        FastDqnAgent {
            core,
            params,
            phase: Phase::Explore { best_utility: vec![0.0; n_primitive] },
            macros: Vec::new(),
            macro_run: None,
            n_primitive,
        }
    }

    pub fn macros(&self) -> &[MacroAction] {
        &self.macros
    }

    pub fn network(&self) -> &Network {
        &self.core.net
    }

    fn install_macros(&mut self, best_utility: &[f64]) {
        self.macros = build_macros(best_utility, self.params.n_macros, self.params.macro_len)
            .expect("n_macros validated against the strategy set");
        let head = self.n_primitive + self.macros.len();
        self.core.net.resize_head(head, &mut self.core.rng).expect("head >= 1");
        self.core.target_net = self.core.net.clone();
        self.phase = Phase::Main;
    }
}

impl Agent for FastDqnAgent {
    fn select(&mut self, slot: usize, obs: ObsState, slots_left: usize) -> Strategy {
        if let Some(run) = &self.macro_run {
            return self.macros[run.action - self.n_primitive].strategy;
        }
        match &self.phase {
            Phase::Explore { best_utility } => {
                if slot >= self.params.explore_slots {
                    let best = best_utility.clone();
                    self.install_macros(&best);
                    // schedules anneal over the learning slots that follow
                    self.core.start_at(slot);
                    return self.select(slot, obs, slots_left);
                }
                random_strategy(&mut self.core.rng, self.n_primitive)
            }
            Phase::Main => {
                let local = self.core.local_slot(slot);
                let seq = self.core.encode(obs);
                let q = self.core.net.forward_batch(&seq, 1).expect("sequence fits");
                let eps = self.params.dqn.schedule.epsilon(local);
                // never start a macro that cannot finish within the episode
                let usable = if slots_left < self.params.macro_len {
                    &q[..self.n_primitive]
                } else {
                    &q[..]
                };
                let action = epsilon_greedy(usable, eps, &mut self.core.rng);
                if action >= self.n_primitive {
                    self.macro_run = Some(MacroRun {
                        action,
                        start_seq: seq,
                        rewards: Vec::new(),
                        gamma: self.params.dqn.schedule.gamma(local),
                        lr: self.params.dqn.schedule.alpha(local) * self.params.dqn.lr_scale,
                    });
                    self.macros[action - self.n_primitive].strategy
                } else {
                    Strategy::from_index(action)
                }
            }
        }
    }

    fn observe(&mut self, slot: usize, obs: ObsState, strategy: Strategy, reward: f64, next_obs: ObsState) {
        match &mut self.phase {
            Phase::Explore { best_utility } => {
                let i = strategy.index();
                best_utility[i] = best_utility[i].max(reward);
                // keep training on the randomly explored slots so the
                // exploration phase costs no learning time
                self.core.push_history(obs, strategy);
                let local = self.core.local_slot(slot);
                let gamma = self.params.dqn.schedule.gamma(local);
                let lr = self.params.dqn.schedule.alpha(local) * self.params.dqn.lr_scale;
                let seq = {
                    let mut hist = self.core.history.clone();
                    hist.pop_back();
                    self.core.encoder.encode(&hist, obs)
                };
                let next_seq = self.core.encode(next_obs);
                self.core.store_and_train(
                    Experience { seq, action: strategy.index(), reward, next_seq, span: 1 },
                    gamma,
                    lr,
                );
            }
            Phase::Main => {
                self.core.push_history(obs, strategy);
                if let Some(run) = &mut self.macro_run {
                    run.rewards.push(reward);
                    if run.rewards.len() == self.params.macro_len {
                        let run = self.macro_run.take().unwrap();
                        let cumulative = discounted_sum(&run.rewards, run.gamma);
                        let next_seq = self.core.encode(next_obs);
                        self.core.store_and_train(
                            Experience {
                                seq: run.start_seq,
                                action: run.action,
                                reward: cumulative,
                                next_seq,
                                span: self.params.macro_len,
                            },
                            run.gamma,
                            run.lr,
                        );
                    }
                } else {
                    let local = self.core.local_slot(slot);
                    let gamma = self.params.dqn.schedule.gamma(local);
                    let lr = self.params.dqn.schedule.alpha(local) * self.params.dqn.lr_scale;
                    let seq = {
                        // seq as of before this pair was pushed
                        let mut hist = self.core.history.clone();
                        hist.pop_back();
                        self.core.encoder.encode(&hist, obs)
                    };
                    let next_seq = self.core.encode(next_obs);
                    self.core.store_and_train(
                        Experience { seq, action: strategy.index(), reward, next_seq, span: 1 },
                        gamma,
                        lr,
                    );
                }
            }
        }
    }

    fn begin_episode(&mut self) {
        self.core.begin_episode();
        self.macro_run = None;
        self.phase = Phase::Explore { best_utility: vec![0.0; self.n_primitive] };
        self.macros.clear();
    }

    fn save_model(&self, w: &mut dyn std::io::Write) -> std::io::Result<bool> {
        self.core.save_model(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn discounted_sum_matches_hand_rolled() {
        // zeta=5, gamma=0.7, all rewards 1: 1 + .7 + .49 + .343 + .2401
        let u = discounted_sum(&[1.0; 5], 0.7);
        assert!((u - 2.7731).abs() < 1e-12);
        assert_eq!(discounted_sum(&[0.0; 5], 0.7), 0.0);
        assert_eq!(discounted_sum(&[3.5], 0.7), 3.5);
    }

    #[test]
    fn macros_are_top_strategies_by_recorded_max() {
        let mut max_u = vec![0.0; 34];
        max_u[5] = 9.0;
        max_u[11] = 7.0;
        max_u[2] = 7.0;
        max_u[30] = 1.0;
        let macros = build_macros(&max_u, 4, 5).unwrap();
        let idx: Vec<usize> = macros.iter().map(|m| m.strategy.index()).collect();
        assert_eq!(idx, vec![5, 2, 11, 30]); // tie between 2 and 11 -> lower first
        assert!(macros.iter().all(|m| m.len == 5));
    }

    #[test]
    fn unvisited_strategies_sort_below_positive() {
        let mut max_u = vec![0.0; 34];
        max_u[20] = 0.5;
        let macros = build_macros(&max_u, 2, 5).unwrap();
        assert_eq!(macros[0].strategy.index(), 20);
        assert_eq!(macros[1].strategy.index(), 0); // ties at 0 break by index
    }

    #[test]
    fn too_many_macros_rejected() {
        assert!(build_macros(&[0.0; 34], 35, 5).is_err());
    }

    #[test]
    fn head_widens_after_exploration() {
        let cfg = EnvConfig::default();
        let params = FastDqnParams { explore_slots: 5, ..FastDqnParams::default() };
        let mut a = FastDqnAgent::new(&cfg, params, None, 3);
        let obs = ObsState { sinr_level: 0, pattern_index: 1 };
        for k in 0..5 {
            let s = a.select(k, obs, 2000 - k);
            assert!(s.index() < 34);
            a.observe(k, obs, s, 0.1, obs);
        }
        let _ = a.select(5, obs, 1995);
        assert_eq!(a.network().out_dim(), 38);
        assert_eq!(a.macros().len(), 4);
    }

    #[test]
    fn no_macro_started_near_episode_end() {
        let cfg = EnvConfig::default();
        let mut params = FastDqnParams { explore_slots: 2, ..FastDqnParams::default() };
        params.dqn.schedule.epsilon_start = 1.0; // always explore: would pick macros often
        params.dqn.schedule.epsilon_end = 1.0;
        let mut a = FastDqnAgent::new(&cfg, params, None, 9);
        let obs = ObsState { sinr_level: 1, pattern_index: 1 };
        for k in 0..2 {
            let s = a.select(k, obs, 10);
            a.observe(k, obs, s, 0.0, obs);
        }
        for k in 2..400 {
            let s = a.select(k, obs, 3); // fewer than zeta=5 slots left
            a.observe(k, obs, s, 0.0, obs);
            assert!(a.macro_run.is_none(), "macro started with 3 slots left");
            let _ = s;
        }
    }

    #[test]
    fn hotboot_zero_episodes_returns_fresh_init() {
        let cfg = EnvConfig::default();
        let params = DqnParams::default();
        let net = hotboot(|_| unreachable!(), 0, 10, &cfg, &params, 42);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let fresh = crate::tinynet::Network::default_cnn(cfg.n_strategies(), &mut rng);
        let a: Vec<f64> = net.param_slices().iter().flat_map(|(w, _)| w.to_vec()).collect();
        let b: Vec<f64> = fresh.param_slices().iter().flat_map(|(w, _)| w.to_vec()).collect();
        assert_eq!(a, b);
    }
}
