//! Greedy baseline: scores each strategy by the average utility it ever
//! achieved, with the shared epsilon schedule for exploration (pure greedy
//! available via flag).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::{EnvConfig, Strategy};
use crate::game::ObsState;

use super::{epsilon_greedy, Agent, LearnSchedule};

pub struct GreedyAgent {
    averages: Vec<f64>,
    counts: Vec<u64>,
    schedule: LearnSchedule,
    /// When set, exploration is disabled entirely.
    pure: bool,
    rng: ChaCha8Rng,
    slot0: usize,
    started: bool,
}

impl GreedyAgent {
    pub fn new(cfg: &EnvConfig, schedule: LearnSchedule, pure: bool, seed: u64) -> Self {
        let n = cfg.n_strategies();
        GreedyAgent {
            averages: vec![0.0; n],
            counts: vec![0; n],
            schedule,
            pure,
            rng: ChaCha8Rng::seed_from_u64(seed),
            slot0: 0,
            started: false,
        }
    }

    pub fn averages(&self) -> &[f64] {
        &self.averages
    }
}

impl Agent for GreedyAgent {
    fn select(&mut self, slot: usize, _obs: ObsState, _slots_left: usize) -> Strategy {
        if !self.started {
            self.slot0 = slot;
            self.started = true;
        }
        let eps = if self.pure { 0.0 } else { self.schedule.epsilon(slot - self.slot0) };
        Strategy::from_index(epsilon_greedy(&self.averages, eps, &mut self.rng))
    }

    fn observe(&mut self, _slot: usize, _obs: ObsState, strategy: Strategy, reward: f64, _next: ObsState) {
        let i = strategy.index();
        self.counts[i] += 1;
        self.averages[i] += (reward - self.averages[i]) / self.counts[i] as f64;
    }

    fn begin_episode(&mut self) {
        self.started = false;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agent() -> GreedyAgent {
        GreedyAgent::new(&EnvConfig::default(), LearnSchedule::default(), true, 7)
    }

    fn obs() -> ObsState {
        ObsState { sinr_level: 0, pattern_index: 1 }
    }

    #[test]
    fn all_zero_averages_pick_lowest_index() {
        let mut a = agent();
        assert_eq!(a.select(0, obs(), 100).index(), 0);
    }

    #[test]
    fn dominant_average_wins_under_pure_greedy() {
        let mut a = agent();
        let s = Strategy::from_index(9);
        a.observe(0, obs(), s, 5.0, obs());
        assert_eq!(a.select(1, obs(), 100).index(), 9);
    }

    #[test]
    fn running_average_is_arithmetic_mean() {
        let mut a = agent();
        let s = Strategy::from_index(4);
        a.observe(0, obs(), s, 1.0, obs());
        a.observe(1, obs(), s, 3.0, obs());
        assert!((a.averages()[4] - 2.0).abs() < 1e-15);
    }
}
