//! Fixed-capacity experience replay.

use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Ring buffer over transitions; once full, each push evicts the oldest.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    data: Vec<Transition>,
    capacity: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { data: Vec::with_capacity(capacity.min(1 << 20)), capacity, cursor: 0 }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, transition: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(transition);
        } else {
            self.data[self.cursor] = transition;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Uniform sample with replacement; requires at least `batch` stored
    /// transitions.
    pub fn sample<'a, R: Rng>(&'a self, batch: usize, rng: &mut R) -> Vec<&'a Transition> {
        assert!(self.data.len() >= batch, "buffer holds {} < batch {}", self.data.len(), batch);
        (0..batch).map(|_| &self.data[rng.gen_range(0..self.data.len())]).collect()
    }
}
