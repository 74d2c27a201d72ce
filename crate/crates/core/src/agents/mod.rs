//! The four defender policies: greedy, tabular Q-learning, DQN, and fast DQN
//! with hotbooting and macro-actions, plus the replay memory and the shared
//! annealing schedules.

mod dqn;
mod fastdqn;
mod greedy;
mod qlearn;
mod replay;

pub use dqn::{dqn_train_step, DqnAgent, DqnParams};
pub use fastdqn::{build_macros, discounted_sum, hotboot, FastDqnAgent, FastDqnParams};
pub use greedy::GreedyAgent;
pub use qlearn::{q_update, QLearnAgent, QTable};
pub use replay::{Experience, ReplayPool};

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::env::{EnvConfig, Strategy};
use crate::game::ObsState;

/// Piecewise-linear hyperparameter schedules over the first `horizon` slots,
/// clamped at the endpoints afterwards.
#[derive(Debug, Clone, Copy)]
pub struct LearnSchedule {
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub alpha_start: f64,
    pub alpha_end: f64,
    pub gamma_start: f64,
    pub gamma_end: f64,
    pub horizon: usize,
}

impl Default for LearnSchedule {
    fn default() -> Self {
        LearnSchedule {
            epsilon_start: 0.5,
            epsilon_end: 0.05,
            alpha_start: 0.7,
            alpha_end: 0.5,
            gamma_start: 0.5,
            gamma_end: 0.7,
            horizon: 300,
        }
    }
}

impl LearnSchedule {
    fn anneal(&self, start: f64, end: f64, slot: usize) -> f64 {
        if slot >= self.horizon {
            return end;
        }
        start + (end - start) * slot as f64 / self.horizon as f64
    }

    pub fn epsilon(&self, slot: usize) -> f64 {
        self.anneal(self.epsilon_start, self.epsilon_end, slot)
    }

    pub fn alpha(&self, slot: usize) -> f64 {
        self.anneal(self.alpha_start, self.alpha_end, slot)
    }

    pub fn gamma(&self, slot: usize) -> f64 {
        self.anneal(self.gamma_start, self.gamma_end, slot)
    }
}

/// Argmax with probability 1 - epsilon (ties broken toward the lowest
/// index), otherwise uniform over the remaining actions.
pub fn epsilon_greedy(q_values: &[f64], epsilon: f64, rng: &mut impl Rng) -> usize {
    debug_assert!(!q_values.is_empty());
    let mut best = 0usize;
    for (i, &q) in q_values.iter().enumerate() {
        if q > q_values[best] {
            best = i;
        }
    }
    if q_values.len() == 1 || rng.gen::<f64>() >= epsilon {
        return best;
    }
    let mut pick = rng.gen_range(0..q_values.len() - 1);
    if pick >= best {
        pick += 1;
    }
    pick
}

/// A fixed strategy repeated for `len` slots, treated as one action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MacroAction {
    pub strategy: Strategy,
    pub len: usize,
}

/// The CNN input: the last W (state, strategy) pairs plus the current state,
/// normalized to [0,1] and zero-padded to 36 values (a 6x6 grid).
///
/// Each historical pair contributes 4 values: sinr_level/xi, psi/theta,
/// power_level/L, move bit. When 4W + 2 overflows 36 the oldest pairs are
/// dropped.
#[derive(Debug, Clone)]
pub struct SeqEncoder {
    pub window: usize,
    sinr_levels: f64,
    n_patterns: f64,
    power_levels: f64,
}

pub const SEQ_LEN: usize = 36;

impl SeqEncoder {
    pub fn new(window: usize, cfg: &EnvConfig) -> Self {
        SeqEncoder {
            window,
            sinr_levels: cfg.sinr_levels as f64,
            n_patterns: cfg.n_patterns as f64,
            power_levels: cfg.power_levels as f64,
        }
    }

    pub fn encode(&self, history: &VecDeque<(ObsState, Strategy)>, current: ObsState) -> Vec<f64> {
        let fit = (SEQ_LEN - 2) / 4;
        let keep = self.window.min(fit).min(history.len());
        let mut out = Vec::with_capacity(SEQ_LEN);
        for (obs, strat) in history.iter().skip(history.len() - keep) {
            out.push(obs.sinr_level as f64 / self.sinr_levels);
            out.push(obs.pattern_index as f64 / self.n_patterns);
            out.push(strat.power_level as f64 / self.power_levels);
            out.push(strat.move_bit as u8 as f64);
        }
        out.push(current.sinr_level as f64 / self.sinr_levels);
        out.push(current.pattern_index as f64 / self.n_patterns);
        out.resize(SEQ_LEN, 0.0);
        out
    }
}

/// A defender policy driven slot-by-slot by the harness.
pub trait Agent {
    /// Chooses the strategy for slot `slot`. `slots_left` counts this slot,
    /// so an agent never starts a multi-slot macro it cannot finish.
    fn select(&mut self, slot: usize, obs: ObsState, slots_left: usize) -> Strategy;

    /// Hands back the transition the chosen strategy produced.
    fn observe(&mut self, slot: usize, obs: ObsState, strategy: Strategy, reward: f64, next_obs: ObsState);

    /// Resets per-episode state (histories, slot-local bookkeeping) while
    /// keeping learned parameters.
    fn begin_episode(&mut self);

    /// Writes the learned parameters (Q table or network snapshot) when the
    /// agent has any; returns false for purely incremental baselines.
    fn save_model(&self, _w: &mut dyn std::io::Write) -> std::io::Result<bool> {
        Ok(false)
    }
}

pub(crate) fn random_strategy(rng: &mut ChaCha8Rng, n_strategies: usize) -> Strategy {
    Strategy::from_index(rng.gen_range(0..n_strategies))
}
