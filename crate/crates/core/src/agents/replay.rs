//! Experience replay memory: FIFO eviction, uniform sampling.

use std::collections::VecDeque;

use rand::Rng;

/// One replay record. `span` is 1 for primitive steps and the macro length
/// for macro steps, in which case `reward` holds the cumulative discounted
/// reward over the span.
#[derive(Debug, Clone)]
pub struct Experience {
    pub seq: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_seq: Vec<f64>,
    pub span: usize,
}

#[derive(Debug, Clone)]
pub struct ReplayPool {
    records: VecDeque<Experience>,
    capacity: usize,
}

impl ReplayPool {
    pub fn new(capacity: usize) -> Self {
        ReplayPool { records: VecDeque::with_capacity(capacity.min(16_384)), capacity }
    }

    pub fn push(&mut self, e: Experience) {
        if self.records.len() == self.capacity {
            self.records.pop_front();
        }
        self.records.push_back(e);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Uniform draw with replacement.
    pub fn sample(&self, rng: &mut impl Rng) -> &Experience {
        &self.records[rng.gen_range(0..self.records.len())]
    }

    pub fn clear(&mut self) {
        self.records.clear();
    }
}
