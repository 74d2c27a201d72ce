//! Discrete-time simulator of the 2-D (frequency + location) anti-jamming
//! game between a mobile device and a set of jammers and interference
//! sources, with greedy, tabular Q-learning, DQN and fast-DQN defender
//! agents over a from-scratch minimal neural-network engine.

pub mod adversary;
pub mod agents;
pub mod cli;
pub mod env;
pub mod game;
pub mod harness;
pub mod tinynet;
