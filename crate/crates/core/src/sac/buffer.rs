use rand::Rng as _;

use crate::cl::replay::Reservoir;
use crate::env::Transition;
use crate::{Error, Result, Rng};

#[derive(Clone, Debug)]
enum Storage {
    Ring { items: Vec<Transition>, next: usize },
    Reservoir(Reservoir<Transition>),
}

/// Transition storage for SAC.
///
/// The default ring overwrites the oldest entry once full; reservoir mode
/// keeps a uniform sample of everything ever inserted.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: Storage,
    insert_count: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            storage: Storage::Ring {
                items: Vec::new(),
                next: 0,
            },
            insert_count: 0,
        }
    }

    pub fn reservoir(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            storage: Storage::Reservoir(Reservoir::new(capacity)),
            insert_count: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert_count(&self) -> u64 {
        self.insert_count
    }

    pub fn items(&self) -> &[Transition] {
        match &self.storage {
            Storage::Ring { items, .. } => items,
            Storage::Reservoir(r) => r.items(),
        }
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items().get(i)
    }

    /// `rng` only drives reservoir replacement; ring mode never touches it.
    pub fn push(&mut self, t: Transition, rng: &mut Rng) {
        self.insert_count += 1;
        match &mut self.storage {
            Storage::Ring { items, next } => {
                if items.len() < self.capacity {
                    items.push(t);
                } else {
                    items[*next] = t;
                }
                *next = (*next + 1) % self.capacity;
            }
            Storage::Reservoir(r) => r.insert(t, rng),
        }
    }

    pub fn clear(&mut self) {
        match &mut self.storage {
            Storage::Ring { items, next } => {
                items.clear();
                *next = 0;
            }
            Storage::Reservoir(r) => r.clear(),
        }
    }

    /// Uniform indices, with replacement, over the current contents.
    pub fn sample_indices(&self, n: usize, rng: &mut Rng) -> Result<Vec<usize>> {
        let len = self.len();
        if len == 0 {
            return Err(Error::BufferUnderflow { have: 0, need: n });
        }
        Ok((0..n).map(|_| rng.random_range(0..len)).collect())
    }

    pub fn sample(&self, n: usize, rng: &mut Rng) -> Result<Vec<&Transition>> {
        let items = self.items();
        Ok(self
            .sample_indices(n, rng)?
            .into_iter()
            .map(|i| &items[i])
            .collect())
    }
}
