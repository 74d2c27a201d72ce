//! The slot-by-slot dynamic game: one mobile device against a set of jammers
//! and interference sources. `Game` owns all per-episode mutable state and
//! its own RNG streams, so many instances can run concurrently.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adversary::{maybe_move_jammer, Jammer, JammerConfig};
use crate::env::{
    channel_for_slot, move_device, quantize_sinr, resample_gains, sample_pu, step_utility,
    ChannelGains, EnvConfig, EnvError, FrequencyPattern, SlotOutcome, Strategy, Topology,
};

/// The device's observed state: quantized SINR of the previous slot plus the
/// pattern index announced on the feedback channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ObsState {
    pub sinr_level: usize,
    /// 1-based pattern index.
    pub pattern_index: usize,
}

impl ObsState {
    /// Dense index in [0, n_patterns * sinr_levels).
    pub fn index(&self, cfg: &EnvConfig) -> usize {
        (self.pattern_index - 1) * cfg.sinr_levels + self.sinr_level
    }
}

/// What the harness records for one slot.
#[derive(Debug, Clone, Copy)]
pub struct SlotRecord {
    pub outcome: SlotOutcome,
    /// SINR as seen on the feedback channel (zero when feedback is lost).
    pub observed_sinr: f64,
    /// Reward handed to the learner; equals the utility unless feedback was
    /// lost, in which case the SINR term is zeroed.
    pub reward: f64,
    pub next_obs: ObsState,
    pub moved: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeedbackLossMode {
    #[default]
    Off,
    /// Feedback is lost every slot; the device sets the SINR to zero.
    ZeroSinr,
}

#[derive(Debug, Clone)]
pub struct Game {
    pub cfg: EnvConfig,
    pub topology: Topology,
    patterns: Vec<FrequencyPattern>,
    gains: ChannelGains,
    jammers: Vec<Jammer>,
    feedback_loss: FeedbackLossMode,
    location: usize,
    psi: usize,
    slot: usize,
    prev_channel: Option<usize>,
    /// Per-channel device transmit power in the previous slot, as sensed by
    /// reactive jammers.
    activity: Vec<f64>,
    gains_rng: ChaCha8Rng,
    pu_rng: ChaCha8Rng,
    jam_rng: ChaCha8Rng,
    pattern_rng: ChaCha8Rng,
    interference_rng: ChaCha8Rng,
}

impl Game {
    /// Builds an episode instance. All randomness derives from `seed`.
    /// When `patterns` is empty, the pattern table is drawn from the seed.
    pub fn new(
        cfg: EnvConfig,
        topology: Topology,
        jammer_cfgs: &[JammerConfig],
        patterns: Vec<FrequencyPattern>,
        feedback_loss: FeedbackLossMode,
        seed: u64,
    ) -> Result<Game, EnvError> {
        let mut cfg = cfg;
        cfg.n_jammers = jammer_cfgs.len();
        cfg.validate()?;
        topology.validate()?;

        let mut master = ChaCha8Rng::seed_from_u64(seed);
        let stream = |m: &mut ChaCha8Rng| ChaCha8Rng::seed_from_u64(m.gen());
        let mut gains_rng = stream(&mut master);
        let pu_rng = stream(&mut master);
        let mut jam_rng = stream(&mut master);
        let mut pattern_rng = stream(&mut master);
        let interference_rng = stream(&mut master);

        let patterns = if patterns.is_empty() {
            (0..cfg.n_patterns)
                .map(|_| FrequencyPattern::random(&cfg, &mut pattern_rng))
                .collect()
        } else {
            patterns
        };
        if patterns.len() != cfg.n_patterns {
            return Err(EnvError::InvalidConfig(format!(
                "patterns: expected {} patterns, got {}",
                cfg.n_patterns,
                patterns.len()
            )));
        }
        for p in &patterns {
            p.validate(&cfg)?;
        }

        let gains = resample_gains(&mut gains_rng, &cfg);
        let jammers = jammer_cfgs
            .iter()
            .enumerate()
            .map(|(i, jc)| Jammer::new(jc.clone(), i, &mut jam_rng, &cfg))
            .collect();
        let psi = pattern_rng.gen_range(1..=cfg.n_patterns);
        let activity = vec![0.0; cfg.n_channels];
        Ok(Game {
            cfg,
            topology,
            patterns,
            gains,
            jammers,
            feedback_loss,
            location: 0,
            psi,
            slot: 0,
            prev_channel: None,
            activity,
            gains_rng,
            pu_rng,
            jam_rng,
            pattern_rng,
            interference_rng,
        })
    }

    /// The state observed before the first action: SINR^(0) = 0 and the
    /// initial pattern index.
    pub fn initial_obs(&self) -> ObsState {
        ObsState { sinr_level: 0, pattern_index: self.psi }
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn serving_node(&self) -> usize {
        self.topology.serving_node_of(self.location)
    }

    /// Executes one slot: optional move, PU sensing, transmission or
    /// silence, jammer actions, SINR/utility, and feedback.
    pub fn step(&mut self, strategy: Strategy) -> SlotRecord {
        let mut moved = false;
        if strategy.move_bit {
            let new_loc = move_device(self.location, &self.topology);
            moved = new_loc != self.location || self.topology.locations.len() == 1;
            self.location = new_loc;
            // new propagation environment
            self.gains = resample_gains(&mut self.gains_rng, &self.cfg);
        }

        let node = self.serving_node();
        let channel = channel_for_slot(&self.patterns[self.psi - 1], self.slot);
        let pu_absent = sample_pu(&mut self.pu_rng, channel, &self.cfg);

        let mut emissions = Vec::new();
        let quiet = vec![0.0; self.cfg.n_channels];
        for j in &mut self.jammers {
            if maybe_move_jammer(j, self.slot, &mut self.jam_rng, &self.topology, node) {
                // relocated jammer: fresh gains toward the serving node
                for g in &mut self.gains.jammer[j.id] {
                    *g = self.gains_rng.gen_range(0.0..=1.0);
                }
            }
            // an out-of-reach jammer senses nothing and jams nothing here
            let reachable = j.state.serving_node == node;
            let sensed = if reachable { &self.activity } else { &quiet };
            let em = j.step(sensed, &mut self.jam_rng, &self.cfg);
            if reachable {
                emissions.extend(em);
            }
        }

        let irng = &mut self.interference_rng;
        let n_interferers = self
            .cfg
            .interference_probs
            .iter()
            .filter(|&&p| irng.gen::<f64>() < p)
            .count();

        let outcome = step_utility(
            strategy,
            channel,
            self.prev_channel,
            &self.gains,
            &emissions,
            pu_absent,
            n_interferers,
            &self.cfg,
        )
        .expect("gains are always finite by construction");

        // what reactive jammers will sense next slot
        self.activity.iter_mut().for_each(|v| *v = 0.0);
        if outcome.tx_power > 0.0 {
            self.activity[channel - 1] = outcome.tx_power;
        }

        self.prev_channel = Some(channel);
        self.slot += 1;
        if self.slot % self.cfg.gain_refresh_period == 0 {
            self.gains = resample_gains(&mut self.gains_rng, &self.cfg);
        }

        // feedback: SINR^(k) and the next pattern index
        if !self.cfg.fixed_pattern {
            self.psi = self.pattern_rng.gen_range(1..=self.cfg.n_patterns);
        }
        let observed_sinr = match self.feedback_loss {
            FeedbackLossMode::Off => outcome.sinr,
            FeedbackLossMode::ZeroSinr => 0.0,
        };
        let reward = outcome.utility - outcome.sinr + observed_sinr;
        let next_obs = ObsState {
            sinr_level: quantize_sinr(observed_sinr, &self.cfg),
            pattern_index: self.psi,
        };
        SlotRecord { outcome, observed_sinr, reward, next_obs, moved }
    }
}
