//! Random, sweep, reactive and mobile jammer behaviors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, JamEmission, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JammerKind {
    Random,
    Sweep,
    Reactive,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct JammerConfig {
    pub kind: JammerKind,
    /// Random kind: probability of keeping the previous channel.
    pub stay_prob: f64,
    /// Sweep kind: how many neighboring channels are blocked per slot.
    pub n_sweep: usize,
    /// Reactive kind: how many channels are monitored.
    pub n_monitor: usize,
    /// Jamming power P_J (split as P_J/N_J across a sweep block).
    pub jam_power: f64,
    /// Descriptive coordinates.
    pub position: [f64; 2],
    /// Serving node this jammer can reach; a static jammer contributes no
    /// jamming while the device is served elsewhere.
    pub serving_node: usize,
    pub mobile: bool,
    /// Probability of relocating at each move checkpoint.
    pub move_prob: f64,
    /// Checkpoint spacing in slots.
    pub move_period: usize,
}

impl Default for JammerConfig {
    fn default() -> Self {
        JammerConfig {
            kind: JammerKind::Random,
            stay_prob: 0.9,
            n_sweep: 4,
            n_monitor: 8,
            jam_power: 8.0,
            position: [0.0, 0.0],
            serving_node: 0,
            mobile: false,
            move_prob: 0.0,
            move_period: 200,
        }
    }
}

impl JammerConfig {
    pub fn validate(&self, env: &EnvConfig) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.stay_prob) {
            return Err("stay_prob: must be in [0,1]".into());
        }
        if !(0.0..=1.0).contains(&self.move_prob) {
            return Err("move_prob: must be in [0,1]".into());
        }
        if self.kind == JammerKind::Sweep && !(1..=env.n_channels).contains(&self.n_sweep) {
            return Err(format!("n_sweep: must be in [1, {}]", env.n_channels));
        }
        if self.kind == JammerKind::Reactive && !(1..=env.n_channels).contains(&self.n_monitor) {
            return Err(format!("n_monitor: must be in [1, {}]", env.n_channels));
        }
        if self.move_period < 1 {
            return Err("move_period: must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct JammerState {
    pub current_channel: usize,
    pub sweep_cursor: usize,
    pub monitored: Vec<usize>,
    pub position: [f64; 2],
    pub serving_node: usize,
}

/// One jammer instance: config, mutable state, and its identity within the
/// environment's gain matrix.
#[derive(Debug, Clone)]
pub struct Jammer {
    pub cfg: JammerConfig,
    pub state: JammerState,
    pub id: usize,
}

impl Jammer {
    pub fn new(cfg: JammerConfig, id: usize, rng: &mut impl Rng, env: &EnvConfig) -> Self {
        let monitored = sample_monitored(rng, env.n_channels, cfg.n_monitor);
        let state = JammerState {
            current_channel: rng.gen_range(1..=env.n_channels),
            sweep_cursor: 1,
            monitored,
            position: cfg.position,
            serving_node: cfg.serving_node,
        };
        Jammer { cfg, state, id }
    }

    /// Detection threshold for the reactive kind: half the smallest nonzero
    /// power step.
    pub fn detection_threshold(env: &EnvConfig) -> f64 {
        env.max_power / (2.0 * env.power_levels as f64)
    }

    /// Chooses this slot's jamming channels. `activity` is the per-channel
    /// transmit power the jammer observed in the previous slot.
    pub fn step(&mut self, activity: &[f64], rng: &mut impl Rng, env: &EnvConfig) -> Vec<JamEmission> {
        match self.cfg.kind {
            JammerKind::Random => {
                let ch = random_jam_step(&mut self.state, rng, &self.cfg, env);
                vec![JamEmission { jammer: self.id, channel: ch, power: self.cfg.jam_power }]
            }
            JammerKind::Sweep => sweep_jam_step(&mut self.state, &self.cfg, env)
                .into_iter()
                .map(|(channel, power)| JamEmission { jammer: self.id, channel, power })
                .collect(),
            JammerKind::Reactive => {
                let threshold = Self::detection_threshold(env);
                match reactive_jam_step(&mut self.state, activity, threshold, rng, &self.cfg, env) {
                    Some(ch) => {
                        vec![JamEmission { jammer: self.id, channel: ch, power: self.cfg.jam_power }]
                    }
                    None => Vec::new(),
                }
            }
        }
    }
}

/// Keeps the previous channel with probability `stay_prob`, otherwise draws
/// uniformly over the other N-1 channels.
pub fn random_jam_step(
    state: &mut JammerState,
    rng: &mut impl Rng,
    cfg: &JammerConfig,
    env: &EnvConfig,
) -> usize {
    if env.n_channels > 1 && rng.gen::<f64>() >= cfg.stay_prob {
        let mut ch = rng.gen_range(1..env.n_channels); // N-1 candidates
        if ch >= state.current_channel {
            ch += 1;
        }
        state.current_channel = ch;
    }
    state.current_channel
}

/// Returns the wrapped block [cursor, cursor+N_J-1], each at power P_J/N_J,
/// then advances the cursor by N_J.
pub fn sweep_jam_step(
    state: &mut JammerState,
    cfg: &JammerConfig,
    env: &EnvConfig,
) -> Vec<(usize, f64)> {
    let n = env.n_channels;
    let per_channel = cfg.jam_power / cfg.n_sweep as f64;
    let block: Vec<(usize, f64)> = (0..cfg.n_sweep)
        .map(|i| ((state.sweep_cursor - 1 + i) % n + 1, per_channel))
        .collect();
    state.sweep_cursor = (state.sweep_cursor - 1 + cfg.n_sweep) % n + 1;
    block
}

/// Jams the loudest monitored channel whose observed power exceeded the
/// threshold last slot, or nothing if the monitored set was quiet. A quiet
/// monitored set is redrawn each slot; a set that caught activity is kept.
pub fn reactive_jam_step(
    state: &mut JammerState,
    activity: &[f64],
    threshold: f64,
    rng: &mut impl Rng,
    cfg: &JammerConfig,
    env: &EnvConfig,
) -> Option<usize> {
    let best = state
        .monitored
        .iter()
        .copied()
        .filter(|&c| activity[c - 1] > threshold)
        .max_by(|&a, &b| activity[a - 1].partial_cmp(&activity[b - 1]).unwrap());
    match best {
        Some(ch) => Some(ch),
        None => {
            state.monitored = sample_monitored(rng, env.n_channels, cfg.n_monitor);
            None
        }
    }
}

fn sample_monitored(rng: &mut impl Rng, n_channels: usize, n_monitor: usize) -> Vec<usize> {
    // uniform without replacement (partial Fisher-Yates)
    let n_monitor = n_monitor.min(n_channels);
    let mut pool: Vec<usize> = (1..=n_channels).collect();
    for i in 0..n_monitor {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(n_monitor);
    pool
}

/// At slots that are multiples of `move_period`, relocates with probability
/// `move_prob` to a uniformly random topology position and re-attaches to the
/// given serving node. Returns true when a move happened (the environment
/// then resamples this jammer's gains).
pub fn maybe_move_jammer(
    jammer: &mut Jammer,
    slot: usize,
    rng: &mut impl Rng,
    topology: &Topology,
    device_serving_node: usize,
) -> bool {
    if !jammer.cfg.mobile || slot == 0 || slot % jammer.cfg.move_period != 0 {
        return false;
    }
    if rng.gen::<f64>() >= jammer.cfg.move_prob {
        return false;
    }
    let idx = rng.gen_range(0..topology.serving_nodes.len());
    jammer.state.position = topology.serving_nodes[idx];
    jammer.state.serving_node = device_serving_node;
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn env(n: usize) -> EnvConfig {
        EnvConfig { n_channels: n, n_jammers: 1, ..EnvConfig::default() }
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn random_jammer_stay_prob_one_never_changes() {
        let e = env(32);
        let cfg = JammerConfig { stay_prob: 1.0, ..JammerConfig::default() };
        let mut r = rng(1);
        let mut j = Jammer::new(cfg.clone(), 0, &mut r, &e);
        let start = j.state.current_channel;
        for _ in 0..1000 {
            assert_eq!(random_jam_step(&mut j.state, &mut r, &cfg, &e), start);
        }
    }

    #[test]
    fn random_jammer_change_rate_matches() {
        let e = env(32);
        let cfg = JammerConfig { stay_prob: 0.9, ..JammerConfig::default() };
        let mut r = rng(2);
        let mut j = Jammer::new(cfg.clone(), 0, &mut r, &e);
        let mut changes = 0usize;
        let mut prev = j.state.current_channel;
        for _ in 0..100_000 {
            let ch = random_jam_step(&mut j.state, &mut r, &cfg, &e);
            assert!((1..=32).contains(&ch));
            if ch != prev {
                changes += 1;
            }
            prev = ch;
        }
        let rate = changes as f64 / 100_000.0;
        assert!((rate - 0.1).abs() / 0.1 < 0.1, "change rate {rate}");
    }

    #[test]
    fn random_jammer_alternates_with_two_channels() {
        let e = env(2);
        let cfg = JammerConfig { stay_prob: 0.0, ..JammerConfig::default() };
        let mut r = rng(3);
        let mut j = Jammer::new(cfg.clone(), 0, &mut r, &e);
        let mut prev = j.state.current_channel;
        for _ in 0..100 {
            let ch = random_jam_step(&mut j.state, &mut r, &cfg, &e);
            assert_ne!(ch, prev);
            prev = ch;
        }
    }

    #[test]
    fn sweep_blocks_advance_and_wrap() {
        let e = env(8);
        let cfg = JammerConfig { kind: JammerKind::Sweep, n_sweep: 4, ..JammerConfig::default() };
        let mut r = rng(4);
        let mut j = Jammer::new(cfg.clone(), 0, &mut r, &e);
        let b1: Vec<usize> =
            sweep_jam_step(&mut j.state, &cfg, &e).iter().map(|&(c, _)| c).collect();
        let b2: Vec<usize> =
            sweep_jam_step(&mut j.state, &cfg, &e).iter().map(|&(c, _)| c).collect();
        let b3: Vec<usize> =
            sweep_jam_step(&mut j.state, &cfg, &e).iter().map(|&(c, _)| c).collect();
        assert_eq!(b1, vec![1, 2, 3, 4]);
        assert_eq!(b2, vec![5, 6, 7, 8]);
        assert_eq!(b3, vec![1, 2, 3, 4]);
    }

    #[test]
    fn full_band_sweep_splits_power() {
        let e = env(8);
        let cfg = JammerConfig {
            kind: JammerKind::Sweep,
            n_sweep: 8,
            jam_power: 8.0,
            ..JammerConfig::default()
        };
        let mut r = rng(5);
        let mut j = Jammer::new(cfg.clone(), 0, &mut r, &e);
        for _ in 0..4 {
            let block = sweep_jam_step(&mut j.state, &cfg, &e);
            let channels: std::collections::BTreeSet<usize> =
                block.iter().map(|&(c, _)| c).collect();
            assert_eq!(channels.len(), 8);
            assert!(block.iter().all(|&(_, p)| p == 1.0));
            let total: f64 = block.iter().map(|&(_, p)| p).sum();
            assert_eq!(total, 8.0);
        }
    }

    #[test]
    fn sweep_period_covers_all_channels() {
        let e = env(96);
        let cfg = JammerConfig { kind: JammerKind::Sweep, n_sweep: 4, ..JammerConfig::default() };
        let mut r = rng(6);
        let mut j = Jammer::new(cfg.clone(), 0, &mut r, &e);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..24 {
            for (c, _) in sweep_jam_step(&mut j.state, &cfg, &e) {
                seen.insert(c);
            }
        }
        assert_eq!(seen.len(), 96); // period N/N_J = 24 slots
        assert_eq!(j.state.sweep_cursor, 1);
    }

    #[test]
    fn reactive_attacks_detected_channel() {
        let e = env(16);
        let cfg =
            JammerConfig { kind: JammerKind::Reactive, n_monitor: 16, ..JammerConfig::default() };
        let mut r = rng(7);
        let mut j = Jammer::new(cfg.clone(), 0, &mut r, &e);
        let mut activity = vec![0.0; 16];
        activity[4] = 8.0;
        let hit = reactive_jam_step(&mut j.state, &activity, 0.25, &mut r, &cfg, &e);
        assert_eq!(hit, Some(5));
    }

    #[test]
    fn reactive_stays_quiet_without_activity() {
        let e = env(16);
        let cfg =
            JammerConfig { kind: JammerKind::Reactive, n_monitor: 4, ..JammerConfig::default() };
        let mut r = rng(8);
        let mut j = Jammer::new(cfg.clone(), 0, &mut r, &e);
        let activity = vec![0.0; 16];
        for _ in 0..100 {
            assert_eq!(
                reactive_jam_step(&mut j.state, &activity, 0.25, &mut r, &cfg, &e),
                None
            );
            assert_eq!(j.state.monitored.len(), 4);
        }
    }

    #[test]
    fn reactive_never_jams_outside_monitored_set() {
        let e = env(16);
        let cfg =
            JammerConfig { kind: JammerKind::Reactive, n_monitor: 4, ..JammerConfig::default() };
        let mut r = rng(9);
        let mut j = Jammer::new(cfg.clone(), 0, &mut r, &e);
        for i in 0..1000usize {
            let monitored = j.state.monitored.clone();
            let mut activity = vec![0.0; 16];
            activity[i % 16] = 8.0;
            if let Some(ch) = reactive_jam_step(&mut j.state, &activity, 0.25, &mut r, &cfg, &e) {
                assert!(monitored.contains(&ch));
            }
        }
    }

    #[test]
    fn reactive_detection_rate_on_hopping_device() {
        let e = env(96);
        let cfg =
            JammerConfig { kind: JammerKind::Reactive, n_monitor: 8, ..JammerConfig::default() };
        let mut r = rng(10);
        let mut j = Jammer::new(cfg.clone(), 0, &mut r, &e);
        let mut detections = 0usize;
        let trials = 100_000;
        for _ in 0..trials {
            let mut activity = vec![0.0; 96];
            activity[r.gen_range(0..96)] = 8.0;
            if reactive_jam_step(&mut j.state, &activity, 0.25, &mut r, &cfg, &e).is_some() {
                detections += 1;
            }
        }
        let rate = detections as f64 / trials as f64;
        let expected = 8.0 / 96.0;
        assert!((rate - expected).abs() / expected < 0.15, "detection rate {rate}");
    }

    #[test]
    fn immobile_jammer_never_moves() {
        let e = env(16);
        let topo = Topology::single();
        let cfg = JammerConfig { mobile: true, move_prob: 0.0, ..JammerConfig::default() };
        let mut r = rng(11);
        let mut j = Jammer::new(cfg, 0, &mut r, &e);
        let pos = j.state.position;
        for k in 0..2000 {
            assert!(!maybe_move_jammer(&mut j, k, &mut r, &topo, 0));
        }
        assert_eq!(j.state.position, pos);
    }

    #[test]
    fn mobile_jammer_moves_only_at_checkpoints() {
        let e = env(16);
        let topo = Topology {
            locations: vec![[0.0, 0.0], [1.0, 1.0]],
            serving_nodes: vec![[0.0, 0.5], [1.0, 1.5]],
            adjacency: vec![0, 1],
        };
        let cfg = JammerConfig {
            mobile: true,
            move_prob: 1.0,
            move_period: 200,
            ..JammerConfig::default()
        };
        let mut r = rng(12);
        let mut j = Jammer::new(cfg, 0, &mut r, &e);
        for k in 1..200 {
            assert!(!maybe_move_jammer(&mut j, k, &mut r, &topo, 0));
        }
        assert!(maybe_move_jammer(&mut j, 200, &mut r, &topo, 1));
        assert_eq!(j.state.serving_node, 1);
    }

    #[test]
    fn mobile_jammer_move_count_matches_binomial_mean() {
        let e = env(16);
        let topo = Topology::single();
        let cfg = JammerConfig {
            mobile: true,
            move_prob: 0.8,
            move_period: 200,
            ..JammerConfig::default()
        };
        let mut total_moves = 0usize;
        for seed in 0..200u64 {
            let mut r = rng(1000 + seed);
            let mut j = Jammer::new(cfg.clone(), 0, &mut r, &e);
            for k in 1..=2000 {
                if maybe_move_jammer(&mut j, k, &mut r, &topo, 0) {
                    total_moves += 1;
                }
            }
        }
        // 10 checkpoints (slots 200..2000), p=0.8: mean 8 moves per run
        let mean = total_moves as f64 / 200.0;
        assert!((mean - 8.0).abs() / 8.0 < 0.15, "mean moves {mean}");
    }
}
