//! Fixed-capacity FIFO experience replay.

use rand::seq::index;
use rand::Rng;

use crate::env::{EnvAction, EnvState};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: EnvState,
    pub action: EnvAction,
    pub reward: f64,
    pub next_state: EnvState,
}

impl Transition {
    pub fn is_finite(&self) -> bool {
        self.state.is_finite() && self.next_state.is_finite() && self.reward.is_finite() && self.action.a_p.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer<T = Transition> {
    capacity: usize,
    items: Vec<T>,
    next: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, items: Vec::with_capacity(capacity.min(1 << 16)), next: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends, overwriting the oldest entry once full.
    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Uniform minibatch without replacement; `None` if fewer than `batch` items are stored.
    pub fn sample(&self, batch: usize, rng: &mut impl Rng) -> Option<Vec<&T>> {
        if batch == 0 || batch > self.items.len() {
            return None;
        }
        Some(index::sample(rng, self.items.len(), batch).into_iter().map(|i| &self.items[i]).collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn evicts_oldest_first() {
        let mut buf = ReplayBuffer::new(3);
        for i in 0..5 {
            buf.push(i);
        }
        let mut held: Vec<_> = buf.iter().copied().collect();
        held.sort();
        assert_eq!(held, vec![2, 3, 4]);
    }

    #[test]
    fn sampling_is_distinct() {
        let mut buf = ReplayBuffer::new(10);
        for i in 0..10 {
            buf.push(i);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut batch: Vec<_> = buf.sample(10, &mut rng).unwrap().into_iter().copied().collect();
        batch.sort();
        assert_eq!(batch, (0..10).collect::<Vec<_>>());
        assert!(buf.sample(11, &mut rng).is_none());
    }
}
