//! Channels, frequency patterns, locations, channel gains, primary-user and
//! interference processes, and the per-slot SINR / utility computation.
//!
//! Channels are 1-based indices in `[1, N]` throughout, matching the usual
//! frequency-table convention.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("non-finite channel gain")]
    NonFiniteGain,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Number of frequency channels N.
    pub n_channels: usize,
    /// Number of jammers J (derived from the scenario's jammer list).
    pub n_jammers: usize,
    /// Maximum transmit power P.
    pub max_power: f64,
    /// Power quantization levels L; feasible powers are P*l/L, 0 <= l <= L.
    pub power_levels: usize,
    /// Receiver noise power.
    pub noise: f64,
    /// Interference power P_f per active source.
    pub interference_power: f64,
    /// Jamming power P_J.
    pub jam_power: f64,
    /// Mobility cost C_m.
    pub cost_move: f64,
    /// Hopping cost C_h.
    pub cost_hop: f64,
    /// Unit transmission cost C_p.
    pub cost_tx_unit: f64,
    /// Number of frequency patterns.
    pub n_patterns: usize,
    /// Pattern length kappa.
    pub pattern_len: usize,
    /// Channel gains are redrawn every this many slots.
    pub gain_refresh_period: usize,
    /// Whether a primary user occupies a random channel each slot.
    pub pu_active: bool,
    /// Per-source probability that an interference source is on in a slot.
    pub interference_probs: Vec<f64>,
    /// Number of SINR quantization levels.
    pub sinr_levels: usize,
    /// Quantizer ceiling; SINR values at or above clamp to the top level.
    pub sinr_max: f64,
    /// When true the serving node keeps the initial pattern instead of
    /// redrawing one on each feedback.
    pub fixed_pattern: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            n_channels: 32,
            n_jammers: 0,
            max_power: 8.0,
            power_levels: 16,
            noise: 1.0,
            interference_power: 8.0,
            jam_power: 8.0,
            cost_move: 0.8,
            cost_hop: 0.4,
            cost_tx_unit: 0.2,
            n_patterns: 10,
            pattern_len: 30,
            gain_refresh_period: 500,
            pu_active: true,
            interference_probs: Vec::new(),
            sinr_levels: 16,
            sinr_max: 8.0,
            fixed_pattern: false,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let fail = |f: &str, why: &str| Err(EnvError::InvalidConfig(format!("{f}: {why}")));
        if self.n_channels < 1 {
            return fail("n_channels", "must be >= 1");
        }
        if self.power_levels < 1 {
            return fail("power_levels", "must be >= 1");
        }
        if self.noise <= 0.0 {
            return fail("noise", "must be > 0");
        }
        if self.pattern_len < 1 {
            return fail("pattern_len", "must be >= 1");
        }
        if self.n_patterns < 1 {
            return fail("n_patterns", "must be >= 1");
        }
        if self.sinr_levels < 2 {
            return fail("sinr_levels", "must be >= 2");
        }
        if self.sinr_max <= 0.0 {
            return fail("sinr_max", "must be > 0");
        }
        if self.gain_refresh_period < 1 {
            return fail("gain_refresh_period", "must be >= 1");
        }
        for c in [
            ("cost_move", self.cost_move),
            ("cost_hop", self.cost_hop),
            ("cost_tx_unit", self.cost_tx_unit),
        ] {
            if c.1 < 0.0 {
                return fail(c.0, "must be >= 0");
            }
        }
        for (i, p) in self.interference_probs.iter().enumerate() {
            if !(0.0..=1.0).contains(p) {
                return Err(EnvError::InvalidConfig(format!(
                    "interference_probs[{i}]: must be in [0,1]"
                )));
            }
        }
        Ok(())
    }

    /// Number of primitive strategies 2(L+1).
    pub fn n_strategies(&self) -> usize {
        2 * (self.power_levels + 1)
    }
}

/// A cyclic schedule of channel indices, length kappa.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyPattern {
    pub entries: Vec<usize>,
}

impl FrequencyPattern {
    pub fn random(cfg: &EnvConfig, rng: &mut impl Rng) -> Self {
        FrequencyPattern {
            entries: (0..cfg.pattern_len).map(|_| rng.gen_range(1..=cfg.n_channels)).collect(),
        }
    }

    pub fn validate(&self, cfg: &EnvConfig) -> Result<(), EnvError> {
        if self.entries.len() != cfg.pattern_len {
            return Err(EnvError::InvalidConfig(format!(
                "pattern entries: length {} does not match pattern_len {}",
                self.entries.len(),
                cfg.pattern_len
            )));
        }
        if let Some(c) = self.entries.iter().find(|&&c| c < 1 || c > cfg.n_channels) {
            return Err(EnvError::InvalidConfig(format!(
                "pattern entries: channel {c} out of range [1, {}]",
                cfg.n_channels
            )));
        }
        Ok(())
    }
}

/// The channel the pattern schedules for slot `k` (slots counted from 0).
pub fn channel_for_slot(pattern: &FrequencyPattern, k: usize) -> usize {
    pattern.entries[k % pattern.entries.len()]
}

/// Device locations, serving nodes, and which node each location connects to.
/// Coordinates are descriptive metadata; gains are sampled, not derived from
/// geometry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Topology {
    pub locations: Vec<[f64; 2]>,
    pub serving_nodes: Vec<[f64; 2]>,
    /// serving node index per device location
    pub adjacency: Vec<usize>,
}

impl Topology {
    pub fn single() -> Self {
        Topology {
            locations: vec![[0.0, 0.0]],
            serving_nodes: vec![[0.0, 0.0]],
            adjacency: vec![0],
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.locations.is_empty() {
            return Err(EnvError::InvalidConfig("topology.locations: empty".into()));
        }
        if self.adjacency.len() != self.locations.len() {
            return Err(EnvError::InvalidConfig(
                "topology.adjacency: must name one serving node per location".into(),
            ));
        }
        if let Some(n) = self.adjacency.iter().find(|&&n| n >= self.serving_nodes.len()) {
            return Err(EnvError::InvalidConfig(format!(
                "topology.adjacency: serving node {n} out of range"
            )));
        }
        Ok(())
    }

    pub fn serving_node_of(&self, location: usize) -> usize {
        self.adjacency[location]
    }
}

/// Round-robin advance to the next predefined device location.
pub fn move_device(current: usize, topology: &Topology) -> usize {
    (current + 1) % topology.locations.len()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelGains {
    /// h_s, one gain per channel.
    pub device: Vec<f64>,
    /// h_j, J rows of N gains.
    pub jammer: Vec<Vec<f64>>,
}

/// Fresh uniform [0,1] draws for all device and jammer gains.
pub fn resample_gains(rng: &mut impl Rng, cfg: &EnvConfig) -> ChannelGains {
    ChannelGains {
        device: (0..cfg.n_channels).map(|_| rng.gen_range(0.0..=1.0)).collect(),
        jammer: (0..cfg.n_jammers)
            .map(|_| (0..cfg.n_channels).map(|_| rng.gen_range(0.0..=1.0)).collect())
            .collect(),
    }
}

/// The device action: a power level plus a move bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strategy {
    /// l in [0, L]; transmit power is P*l/L.
    pub power_level: usize,
    pub move_bit: bool,
}

impl Strategy {
    pub fn power(&self, cfg: &EnvConfig) -> f64 {
        cfg.max_power * self.power_level as f64 / cfg.power_levels as f64
    }

    /// Index in [0, 2(L+1)): power level major, move bit minor.
    pub fn index(&self) -> usize {
        self.power_level * 2 + self.move_bit as usize
    }

    pub fn from_index(index: usize) -> Strategy {
        Strategy { power_level: index / 2, move_bit: index % 2 == 1 }
    }
}

/// One jamming transmission: jammer `jammer` puts `power` on `channel`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JamEmission {
    pub jammer: usize,
    pub channel: usize,
    pub power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotOutcome {
    pub sinr: f64,
    pub utility: f64,
    pub channel_used: usize,
    pub pu_absent: bool,
    pub interfered: bool,
    /// Power actually radiated (0 when silent).
    pub tx_power: f64,
}

/// Per-slot SINR and utility.
///
/// When the PU is present the device keeps silence: the transmit power is
/// treated as zero in both the SINR numerator and the C_p term, so only
/// mobility and hop costs remain.
#[allow(clippy::too_many_arguments)]
pub fn step_utility(
    strategy: Strategy,
    channel: usize,
    prev_channel: Option<usize>,
    gains: &ChannelGains,
    jam: &[JamEmission],
    pu_absent: bool,
    n_interferers_on: usize,
    cfg: &EnvConfig,
) -> Result<SlotOutcome, EnvError> {
    let h_s = gains.device[channel - 1];
    if !h_s.is_finite() {
        return Err(EnvError::NonFiniteGain);
    }
    let tx_power = if pu_absent { strategy.power(cfg) } else { 0.0 };
    let mut denom = cfg.noise + cfg.interference_power * n_interferers_on as f64;
    for e in jam {
        if e.channel == channel {
            let h_j = gains.jammer[e.jammer][e.channel - 1];
            if !h_j.is_finite() {
                return Err(EnvError::NonFiniteGain);
            }
            denom += e.power * h_j;
        }
    }
    let sinr = tx_power * h_s / denom;
    let hop = match prev_channel {
        Some(prev) => channel != prev,
        None => false, // no prior channel exists on the first slot
    };
    let utility = sinr
        - cfg.cost_tx_unit * tx_power
        - cfg.cost_move * strategy.move_bit as u8 as f64
        - cfg.cost_hop * hop as u8 as f64;
    Ok(SlotOutcome {
        sinr,
        utility,
        channel_used: channel,
        pu_absent,
        interfered: n_interferers_on > 0,
        tx_power,
    })
}

/// PU occupies one uniformly random channel per slot; returns the absence
/// bit (false iff the PU sits on the device's channel).
pub fn sample_pu(rng: &mut impl Rng, channel: usize, cfg: &EnvConfig) -> bool {
    if !cfg.pu_active {
        return true;
    }
    rng.gen_range(1..=cfg.n_channels) != channel
}

/// Uniform bins over [0, sinr_max]; values >= sinr_max clamp to the top bin.
pub fn quantize_sinr(sinr: f64, cfg: &EnvConfig) -> usize {
    debug_assert!(sinr >= 0.0);
    let bin = cfg.sinr_max / cfg.sinr_levels as f64;
    ((sinr / bin) as usize).min(cfg.sinr_levels - 1)
}
