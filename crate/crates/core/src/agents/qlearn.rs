//! Tabular Q-learning over the (quantized SINR, pattern index) state set.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::{EnvConfig, Strategy};
use crate::game::ObsState;

use super::{epsilon_greedy, Agent, LearnSchedule};

/// Q(s, x) and the cached state values V(s) = max_x Q(s, x).
#[derive(Debug, Clone)]
pub struct QTable {
    pub q: Vec<Vec<f64>>,
    pub v: Vec<f64>,
    pub n_actions: usize,
}

impl QTable {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        QTable { q: vec![vec![0.0; n_actions]; n_states], v: vec![0.0; n_states], n_actions }
    }

    pub fn greedy_action(&self, state: usize) -> usize {
        let row = &self.q[state];
        let mut best = 0;
        for (i, &q) in row.iter().enumerate() {
            if q > row[best] {
                best = i;
            }
        }
        best
    }
}

/// Q(s,x) <- alpha (u + gamma V(s')) + (1 - alpha) Q(s,x), then
/// V(s) <- max_x' Q(s,x').
pub fn q_update(
    table: &mut QTable,
    s: usize,
    action: usize,
    reward: f64,
    s_next: usize,
    alpha: f64,
    gamma: f64,
) {
    let target = reward + gamma * table.v[s_next];
    table.q[s][action] = alpha * target + (1.0 - alpha) * table.q[s][action];
    table.v[s] = table.q[s].iter().copied().fold(f64::NEG_INFINITY, f64::max);
}

pub struct QLearnAgent {
    pub table: QTable,
    cfg: EnvConfig,
    schedule: LearnSchedule,
    rng: ChaCha8Rng,
    slot0: usize,
    started: bool,
}

impl QLearnAgent {
    pub fn new(cfg: &EnvConfig, schedule: LearnSchedule, seed: u64) -> Self {
        let n_states = cfg.n_patterns * cfg.sinr_levels;
        QLearnAgent {
            table: QTable::new(n_states, cfg.n_strategies()),
            cfg: cfg.clone(),
            schedule,
            rng: ChaCha8Rng::seed_from_u64(seed),
            slot0: 0,
            started: false,
        }
    }

    /// Serializes the table as structured text (one state per line).
    pub fn dump_table<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "qtable-v1 {} {}", self.table.q.len(), self.table.n_actions)?;
        for row in &self.table.q {
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

impl Agent for QLearnAgent {
    fn select(&mut self, slot: usize, obs: ObsState, _slots_left: usize) -> Strategy {
        if !self.started {
            self.slot0 = slot;
            self.started = true;
        }
        let local = slot - self.slot0;
        let eps = self.schedule.epsilon(local);
        let idx = epsilon_greedy(&self.table.q[obs.index(&self.cfg)], eps, &mut self.rng);
        Strategy::from_index(idx)
    }

    fn observe(&mut self, slot: usize, obs: ObsState, strategy: Strategy, reward: f64, next_obs: ObsState) {
        let local = slot - self.slot0;
        let alpha = self.schedule.alpha(local);
        let gamma = self.schedule.gamma(local);
        q_update(
            &mut self.table,
            obs.index(&self.cfg),
            strategy.index(),
            reward,
            next_obs.index(&self.cfg),
            alpha,
            gamma,
        );
    }

    fn begin_episode(&mut self) {
        self.started = false;
    }

    fn save_model(&self, mut w: &mut dyn std::io::Write) -> std::io::Result<bool> {
        self.dump_table(&mut w)?;
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_update_from_zero_table() {
        let mut t = QTable::new(4, 3);
        q_update(&mut t, 1, 2, 1.0, 3, 0.7, 0.7);
        assert!((t.q[1][2] - 0.7).abs() < 1e-15);
        assert!((t.v[1] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn zero_alpha_is_identity() {
        let mut t = QTable::new(2, 2);
        t.q[0][0] = 5.0;
        t.v[0] = 5.0;
        q_update(&mut t, 0, 0, 100.0, 1, 0.0, 0.7);
        assert_eq!(t.q[0][0], 5.0);
    }

    #[test]
    fn decays_geometrically_toward_zero() {
        let mut t = QTable::new(2, 1);
        t.q[0][0] = 8.0;
        t.v[0] = 8.0;
        let mut expect = 8.0;
        for _ in 0..20 {
            q_update(&mut t, 0, 0, 0.0, 1, 0.7, 0.7);
            expect *= 0.3;
            assert!((t.q[0][0] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_reward_single_state_fixed_point() {
        // u = c in a single self-looping state: Q -> c / (1 - gamma).
        let c = 2.0;
        let gamma = 0.7;
        let mut t = QTable::new(1, 1);
        for i in 0..10_000 {
            q_update(&mut t, 0, 0, c, 0, 0.5, gamma);
            if i > 100 {
                let fixed = c / (1.0 - gamma);
                if (t.q[0][0] - fixed).abs() / fixed < 0.01 {
                    return;
                }
            }
        }
        panic!("did not reach the Bellman fixed point: {}", t.q[0][0]);
    }
}
