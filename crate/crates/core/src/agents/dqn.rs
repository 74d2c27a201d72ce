//! DQN defender: CNN Q-value estimates over the state-sequence input,
//! experience replay, and the one-step-stale target of the loss.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{EnvConfig, Strategy};
use crate::game::ObsState;
use crate::tinynet::{Network, SgdConfig};

use super::{
    epsilon_greedy, random_strategy, Agent, Experience, LearnSchedule, ReplayPool, SeqEncoder,
};

#[derive(Debug, Clone)]
pub struct DqnParams {
    /// History pairs W in the state sequence.
    pub window: usize,
    /// Minibatch size B.
    pub minibatch: usize,
    pub replay_capacity: usize,
    /// The annealed alpha schedule doubles as the SGD step size after this
    /// scaling (alpha itself is far too large for SGD on this net).
    pub lr_scale: f64,
    pub schedule: LearnSchedule,
}

impl Default for DqnParams {
    fn default() -> Self {
        DqnParams {
            window: 8,
            minibatch: 32,
            replay_capacity: 10_000,
            lr_scale: 0.01,
            schedule: LearnSchedule::default(),
        }
    }
}

/// epsilon-greedy over the CNN's Q-value outputs for one state sequence.
pub fn dqn_act(net: &mut Network, seq: &[f64], epsilon: f64, rng: &mut impl Rng) -> usize {
    let q = net.forward_batch(seq, 1).expect("sequence length matches the net input");
    epsilon_greedy(&q, epsilon, rng)
}

/// One experience-replay training step: B uniform samples, targets from the
/// parameters as of the previous update step (gamma^span for macro records),
/// squared error on the taken action only, one SGD step on the minibatch
/// average.
pub fn dqn_train_step(
    net: &mut Network,
    target_net: &mut Network,
    pool: &ReplayPool,
    gamma: f64,
    sgd: &SgdConfig,
    rng: &mut impl Rng,
) {
    debug_assert!(!pool.is_empty());
    let b = sgd.minibatch;
    let in_dim = net.in_dim();
    let out_dim = net.out_dim();

    let samples: Vec<&Experience> = (0..b).map(|_| pool.sample(rng)).collect();

    let mut next_batch = Vec::with_capacity(b * in_dim);
    let mut cur_batch = Vec::with_capacity(b * in_dim);
    for e in &samples {
        next_batch.extend_from_slice(&e.next_seq);
        cur_batch.extend_from_slice(&e.seq);
    }

    let q_next = target_net
        .forward_batch(&next_batch, b)
        .expect("stored sequences match the net input");
    let q_cur = net.forward_batch(&cur_batch, b).expect("stored sequences match the net input");

    let mut grad = vec![0.0; b * out_dim];
    for (i, e) in samples.iter().enumerate() {
        let row = &q_next[i * out_dim..(i + 1) * out_dim];
        let max_next = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let target = e.reward + gamma.powi(e.span as i32) * max_next;
        let q_taken = q_cur[i * out_dim + e.action];
        grad[i * out_dim + e.action] = 2.0 * (q_taken - target) / b as f64;
    }
    net.backward_batch(&grad, b).expect("forward ran above");

    // stash theta before the update so the next step's targets are
    // one-step-stale
    copy_params(net, target_net);
    net.sgd_step(sgd);
}

pub(crate) fn copy_params(from: &Network, to: &mut Network) {
    let src = from.param_slices();
    let mut dst = to.param_slices_mut();
    debug_assert_eq!(src.len(), dst.len());
    for (s, d) in src.iter().zip(dst.iter_mut()) {
        d.copy_from_slice(s.0);
    }
}

pub struct DqnAgent {
    pub(crate) cfg: EnvConfig,
    pub(crate) params: DqnParams,
    pub(crate) net: Network,
    pub(crate) target_net: Network,
    pub(crate) pool: ReplayPool,
    pub(crate) encoder: SeqEncoder,
    pub(crate) history: VecDeque<(ObsState, Strategy)>,
    pub(crate) rng: ChaCha8Rng,
    slot0: usize,
    /// Added to the local slot when evaluating schedules; hotbooted agents
    /// set this to the horizon so annealing continues from the emulated
    /// stream instead of restarting.
    pub(crate) schedule_offset: usize,
    started: bool,
}

impl DqnAgent {
    pub fn new(cfg: &EnvConfig, params: DqnParams, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Network::default_cnn(cfg.n_strategies(), &mut rng);
        let target_net = net.clone();
        let encoder = SeqEncoder::new(params.window, cfg);
        DqnAgent {
            cfg: cfg.clone(),
            params: params.clone(),
            net,
            target_net,
            pool: ReplayPool::new(params.replay_capacity),
            encoder,
            history: VecDeque::new(),
            rng,
            slot0: 0,
            schedule_offset: 0,
            started: false,
        }
    }

    /// Replaces the network, e.g. with hotbooted parameters.
    pub fn set_network(&mut self, net: Network) {
        self.target_net = net.clone();
        self.net = net;
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub(crate) fn local_slot(&self, slot: usize) -> usize {
        slot - self.slot0 + self.schedule_offset
    }

    pub(crate) fn start_at(&mut self, slot: usize) {
        self.slot0 = slot;
        self.started = true;
    }

    pub(crate) fn encode(&self, obs: ObsState) -> Vec<f64> {
        self.encoder.encode(&self.history, obs)
    }

    pub(crate) fn push_history(&mut self, obs: ObsState, strategy: Strategy) {
        self.history.push_back((obs, strategy));
        while self.history.len() > self.params.window {
            self.history.pop_front();
        }
    }

    pub(crate) fn store_and_train(&mut self, exp: Experience, gamma: f64, lr: f64) {
        self.pool.push(exp);
        let sgd = SgdConfig { learning_rate: lr, minibatch: self.params.minibatch };
        dqn_train_step(&mut self.net, &mut self.target_net, &self.pool, gamma, &sgd, &mut self.rng);
    }
}

impl Agent for DqnAgent {
    fn select(&mut self, slot: usize, obs: ObsState, _slots_left: usize) -> Strategy {
        if !self.started {
            self.start_at(slot);
        }
        let local = self.local_slot(slot);
        if local < self.params.window {
            return random_strategy(&mut self.rng, self.cfg.n_strategies());
        }
        let seq = self.encode(obs);
        let eps = self.params.schedule.epsilon(local);
        Strategy::from_index(dqn_act(&mut self.net, &seq, eps, &mut self.rng))
    }

    fn observe(&mut self, slot: usize, obs: ObsState, strategy: Strategy, reward: f64, next_obs: ObsState) {
        let seq = self.encode(obs);
        self.push_history(obs, strategy);
        let next_seq = self.encode(next_obs);
        let local = self.local_slot(slot);
        let gamma = self.params.schedule.gamma(local);
        let lr = self.params.schedule.alpha(local) * self.params.lr_scale;
        self.store_and_train(
            Experience { seq, action: strategy.index(), reward, next_seq, span: 1 },
            gamma,
            lr,
        );
    }

    fn begin_episode(&mut self) {
        self.history.clear();
        self.started = false;
    }

    fn save_model(&self, mut w: &mut dyn std::io::Write) -> std::io::Result<bool> {
        self.net
            .save(&mut w)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e))?;
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tinynet::Tensor;

    fn cfg() -> EnvConfig {
        EnvConfig::default()
    }

    #[test]
    fn acts_randomly_for_first_window_slots() {
        let c = cfg();
        let mut a = DqnAgent::new(&c, DqnParams::default(), 3);
        let obs = ObsState { sinr_level: 0, pattern_index: 1 };
        let mut seen = std::collections::BTreeSet::new();
        // re-start many episodes, always sampling slot 0: must look uniform
        for _ in 0..3000 {
            a.begin_episode();
            seen.insert(a.select(0, obs, 100).index());
        }
        assert_eq!(seen.len(), c.n_strategies(), "all 34 primitives reachable at slot 0");
    }

    #[test]
    fn greedy_after_window_follows_argmax() {
        let c = cfg();
        let mut params = DqnParams::default();
        params.schedule.epsilon_start = 0.0;
        params.schedule.epsilon_end = 0.0;
        let mut a = DqnAgent::new(&c, params, 4);
        let obs = ObsState { sinr_level: 3, pattern_index: 2 };
        a.start_at(0);
        let seq = a.encode(obs);
        let q = a.net.forward_batch(&seq, 1).unwrap();
        let argmax =
            q.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0;
        let picked = a.select(a.params.window, obs, 100);
        assert_eq!(picked.index(), argmax);
    }

    #[test]
    fn dqn_act_picks_unique_max() {
        let c = cfg();
        let mut a = DqnAgent::new(&c, DqnParams::default(), 5);
        // force a known output by zeroing the head and setting one bias
        let n_slices = a.net.param_slices().len();
        {
            let mut slices = a.net.param_slices_mut();
            // final fc bias is the last slice
            slices[n_slices - 2].iter_mut().for_each(|v| *v = 0.0);
            slices[n_slices - 1].iter_mut().for_each(|v| *v = 0.0);
            slices[n_slices - 1][7] = 1.0;
        }
        let seq = vec![0.2; 36];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(dqn_act(&mut a.net, &seq, 0.0, &mut rng), 7);
    }

    #[test]
    fn gamma_zero_target_is_immediate_reward() {
        let c = cfg();
        let mut a = DqnAgent::new(&c, DqnParams { minibatch: 4, ..DqnParams::default() }, 6);
        let seq = vec![0.1; 36];
        let next = vec![0.9; 36];
        a.pool.push(Experience { seq: seq.clone(), action: 2, reward: 3.0, next_seq: next, span: 1 });
        let sgd = SgdConfig { learning_rate: 0.01, minibatch: 8 };
        // regression toward a constant target u = 3.0 at gamma = 0
        for _ in 0..3000 {
            dqn_train_step(&mut a.net, &mut a.target_net, &a.pool, 0.0, &sgd, &mut a.rng);
        }
        let q = a.net.forward(&Tensor::from_vec(&[1, 6, 6], seq).unwrap()).unwrap();
        assert!((q.data[2] - 3.0).abs() < 1e-2, "Q = {}", q.data[2]);
    }

    #[test]
    fn single_experience_regression_converges() {
        let c = cfg();
        let mut a = DqnAgent::new(&c, DqnParams::default(), 7);
        let seq = vec![0.3; 36];
        let next = vec![0.3; 36];
        a.pool.push(Experience {
            seq: seq.clone(),
            action: 0,
            reward: 1.0,
            next_seq: next,
            span: 1,
        });
        let sgd = SgdConfig { learning_rate: 0.005, minibatch: 8 };
        for _ in 0..5000 {
            dqn_train_step(&mut a.net, &mut a.target_net, &a.pool, 0.7, &sgd, &mut a.rng);
        }
        // fixed point: Q = 1 + 0.7 * max_a Q(next) with next == seq
        let q = a.net.forward(&Tensor::from_vec(&[1, 6, 6], seq).unwrap()).unwrap();
        let max = q.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let target = 1.0 + 0.7 * max;
        assert!((q.data[0] - target).abs() < 1e-2, "Q={} target={target}", q.data[0]);
    }
}
