//! Fixed-capacity experience replay with FIFO eviction.

use super::Experience;
use crate::rng::RngStream;
use std::collections::VecDeque;

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: VecDeque<Experience>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            items: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn push(&mut self, experience: Experience) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(experience);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.items.iter()
    }

    /// Uniform sample with replacement over current contents.
    ///
    /// Returns `None` when fewer than `batch_size` transitions are stored;
    /// callers skip the update in that case.
    pub fn sample(&self, batch_size: usize, rng: &mut RngStream) -> Option<Vec<Experience>> {
        if self.items.len() < batch_size {
            return None;
        }
        Some(
            (0..batch_size)
                .map(|_| self.items[rng.next_below(self.items.len())].clone())
                .collect(),
        )
    }
}
