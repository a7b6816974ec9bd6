use std::collections::VecDeque;

use crate::rng::SeededRng;
use crate::{Error, Result, Tensor};

/// FIFO store of the last `capacity` sampled completions, oldest first.
#[derive(Clone, Debug, PartialEq)]
pub struct Buffer {
    capacity: usize,
    entries: VecDeque<Tensor>,
}

impl Buffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Usage("buffer capacity must be at least 1".into()));
        }
        Ok(Self { capacity, entries: VecDeque::with_capacity(capacity) })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends `entry`; returns the evicted oldest entry when full.
    pub fn push(&mut self, entry: Tensor) -> Option<Tensor> {
        let evicted = if self.entries.len() == self.capacity { self.entries.pop_front() } else { None };
        self.entries.push_back(entry);
        evicted
    }

    pub fn entries(&self) -> impl Iterator<Item = &Tensor> {
        self.entries.iter()
    }

    pub fn get(&self, i: usize) -> Option<&Tensor> {
        self.entries.get(i)
    }

    /// Uniformly chosen entry.
    pub fn sample(&self, rng: &mut SeededRng) -> Result<&Tensor> {
        if self.entries.is_empty() {
            return Err(Error::Usage("cannot sample from an empty buffer".into()));
        }
        Ok(&self.entries[rng.below(self.entries.len())])
    }
}
