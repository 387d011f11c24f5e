use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Fixed-capacity FIFO replay memory with uniform minibatch sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    items: Vec<T>,
    capacity: usize,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize, seed: u64) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            items: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            cursor: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
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

    /// Insert, evicting the oldest item once full.
    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.cursor] = item;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Distinct items drawn uniformly, or `None` while the buffer holds fewer
    /// than `batch` items.
    pub fn sample(&mut self, batch: usize) -> Option<Vec<&T>> {
        if batch == 0 || batch > self.items.len() {
            return None;
        }
        let picks = index::sample(&mut self.rng, self.items.len(), batch);
        Some(picks.into_iter().map(|i| &self.items[i]).collect())
    }

    /// Items from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        let split = if self.items.len() < self.capacity { 0 } else { self.cursor };
        self.items[split..].iter().chain(self.items[..split].iter())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oldest_evicted_at_capacity() {
        let mut b = ReplayBuffer::new(3, 0);
        for i in 0..4 {
            b.push(i);
        }
        assert_eq!(b.len(), 3);
        assert_eq!(b.iter().copied().collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn full_sample_is_a_permutation() {
        let mut b = ReplayBuffer::new(10, 4);
        for i in 0..10 {
            b.push(i);
        }
        let mut s: Vec<i32> = b.sample(10).unwrap().into_iter().copied().collect();
        s.sort();
        assert_eq!(s, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn not_ready_when_short() {
        let mut b = ReplayBuffer::new(10, 4);
        b.push(1);
        assert!(b.sample(2).is_none());
        assert!(b.sample(0).is_none());
    }
}
