use rand::Rng as _;

use crate::env::Transition;
use crate::{Error, Result, Rng};

/// Fixed-capacity uniform sample of a stream (Algorithm R).
#[derive(Clone, Debug, PartialEq)]
pub struct Reservoir<T> {
    items: Vec<T>,
    capacity: usize,
    seen: u64,
}

impl<T> Reservoir<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "reservoir capacity must be positive");
        Self {
            items: Vec::new(),
            capacity,
            seen: 0,
        }
    }

    pub fn items(&self) -> &[T] {
        &self.items
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

    /// Number of items offered so far, kept or not.
    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn insert(&mut self, item: T, rng: &mut Rng) {
        reservoir_insert(self, item, rng);
    }

    pub fn clear(&mut self) {
        self.items.clear();
        self.seen = 0;
    }
}

/// Appends while below capacity; afterwards the `n`-th item replaces slot
/// `j ~ U{0..n-1}` when `j < capacity`. Every item of the stream is then
/// retained with probability `capacity / n`.
pub fn reservoir_insert<T>(memory: &mut Reservoir<T>, item: T, rng: &mut Rng) {
    memory.seen += 1;
    if memory.items.len() < memory.capacity {
        memory.items.push(item);
        return;
    }
    let j = rng.random_range(0..memory.seen);
    if j < memory.capacity as u64 {
        memory.items[j as usize] = item;
    }
}

/// One transition reservoir per task.
#[derive(Clone, Debug)]
pub struct EpisodicMemory {
    per_task: Vec<Reservoir<Transition>>,
    per_task_capacity: usize,
}

impl EpisodicMemory {
    pub fn new(tasks: usize, per_task_capacity: usize) -> Self {
        Self {
            per_task: (0..tasks).map(|_| Reservoir::new(per_task_capacity)).collect(),
            per_task_capacity,
        }
    }

    pub fn per_task_capacity(&self) -> usize {
        self.per_task_capacity
    }

    pub fn task(&self, task_id: usize) -> &Reservoir<Transition> {
        &self.per_task[task_id]
    }

    pub fn insert(&mut self, t: Transition, rng: &mut Rng) -> Result<()> {
        let len = self.per_task.len();
        let r = self
            .per_task
            .get_mut(t.task_id)
            .ok_or(Error::Index { index: t.task_id, len })?;
        r.insert(t, rng);
        Ok(())
    }

    /// Total stored transitions of tasks `0..task_id`.
    pub fn len_before(&self, task_id: usize) -> usize {
        self.per_task[..task_id.min(self.per_task.len())]
            .iter()
            .map(Reservoir::len)
            .sum()
    }

    /// `n` draws, uniform over the union of the memories of tasks `0..task_id`.
    pub fn sample_before(&self, task_id: usize, n: usize, rng: &mut Rng) -> Result<Vec<&Transition>> {
        let total = self.len_before(task_id);
        if total == 0 {
            return Err(Error::EmptyBuffer);
        }
        Ok((0..n)
            .map(|_| {
                let mut k = rng.random_range(0..total);
                for r in &self.per_task {
                    if k < r.len() {
                        return &r.items()[k];
                    }
                    k -= r.len();
                }
                unreachable!("index below total")
            })
            .collect())
    }
}
