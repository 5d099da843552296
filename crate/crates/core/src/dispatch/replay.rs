//! Fixed-capacity experience memory.

use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;

/// One dispatch experience. `next` is `None` when the vehicle left the market.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition<R> {
    pub state: Vec<R>,
    pub action: usize,
    pub reward: R,
    pub next: Option<Vec<R>>,
}

/// Keeps the most recent `capacity` items, dropping the oldest first.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T> {
    items: VecDeque<T>,
    capacity: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { items: VecDeque::with_capacity(capacity), capacity }
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
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

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    /// Up to `n` distinct items chosen uniformly.
    pub fn sample<G: Rng + ?Sized>(&self, n: usize, rng: &mut G) -> Vec<&T> {
        let n = n.min(self.items.len());
        index::sample(rng, self.items.len(), n).into_iter().map(|i| &self.items[i]).collect()
    }
}
