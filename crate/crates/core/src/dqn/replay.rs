use rand::Rng as _;

use crate::env::EnvState;
use crate::rng::Rng;

/// One stored transition `(s, x, g, s', terminal)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Experience {
    pub state: EnvState,
    pub decision: usize,
    pub reward: f64,
    pub next_state: EnvState,
    pub terminal: bool,
}

/// Fixed-capacity FIFO of experiences.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T = Experience> {
    capacity: usize,
    items: Vec<T>,
    next: usize,
    pushed: u64,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer { capacity, items: Vec::with_capacity(capacity.min(1 << 20)), next: 0, pushed: 0 }
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

    /// Total number of pushes since creation.
    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    /// Appends, evicting the oldest entry when full.
    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
        self.pushed += 1;
    }

    /// Contents from oldest to newest.
    pub fn iter_fifo(&self) -> impl Iterator<Item = &T> {
        let split = if self.items.len() < self.capacity { 0 } else { self.next };
        self.items[split..].iter().chain(&self.items[..split])
    }

    /// `n` uniform draws with replacement, or `None` while fewer than `n`
    /// items are stored.
    pub fn sample_minibatch(&self, n: usize, rng: &mut Rng) -> Option<Vec<&T>> {
        if self.items.len() < n {
            return None;
        }
        Some((0..n).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(2);
        b.push('a');
        assert_eq!(b.len(), 1);
        b.push('b');
        b.push('c');
        assert_eq!(b.iter_fifo().copied().collect::<String>(), "bc");
        let mut b = ReplayBuffer::new(1000);
        (0..10_000).for_each(|i| b.push(i));
        assert_eq!(b.len(), 1000);
        assert_eq!(b.iter_fifo().next(), Some(&9000));
        assert_eq!(b.pushed(), 10_000);
    }

    #[test]
    fn minibatch_edge_cases() {
        let mut r = rng::stream(0, "replay");
        let mut b = ReplayBuffer::new(4);
        assert!(b.sample_minibatch(1, &mut r).is_none());
        assert_eq!(b.sample_minibatch(0, &mut r).unwrap().len(), 0);
        b.push(7);
        assert_eq!(b.sample_minibatch(1, &mut r).unwrap(), vec![&7]);
        assert!(b.sample_minibatch(2, &mut r).is_none());
    }

    #[test]
    fn uniform_sampling() {
        let mut r = rng::stream(1, "replay");
        let mut b = ReplayBuffer::new(10);
        (0..10).for_each(|i| b.push(i));
        let mut counts = [0usize; 10];
        for _ in 0..100_000 {
            counts[*b.sample_minibatch(1, &mut r).unwrap()[0]] += 1;
        }
        for c in counts {
            assert!((c as f64 / 1e5 - 0.1).abs() < 0.01, "{counts:?}");
        }
    }
}
