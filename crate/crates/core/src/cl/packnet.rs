use crate::nn::{clip_global_norm, GradientVector, NetworkConfig};
use crate::{Error, Result};

/// Role of one scalar parameter under PackNet.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    /// Entry of a trunk weight matrix.
    Prunable,
    /// Trunk bias or layer-norm parameter; frozen after the first task.
    Aux,
    /// Output layer of a head.
    Head(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Training,
    Finetuning,
}

/// Ownership of prunable parameters by tasks.
///
/// `owner[i] == 0` marks a free parameter; `owner[i] == k` means the task
/// with id `k - 1` owns it. Owners never change once set.
#[derive(Clone, Debug, PartialEq)]
pub struct PruneMaskSet {
    pub slots: Vec<Slot>,
    pub owner: Vec<u16>,
    pub keep_frac: f64,
    pub aux_frozen: bool,
}

pub fn owner_label(task_id: usize) -> u16 {
    u16::try_from(task_id + 1).expect("task id fits in u16")
}

impl PruneMaskSet {
    /// Masks for a network: trunk weight matrices are prunable.
    pub fn for_network(net: &NetworkConfig, keep_frac: f64) -> Self {
        let trunk = net.trunk_entries();
        let mut slots = Vec::new();
        for (i, (name, shape)) in net.layout().into_iter().enumerate() {
            let n: usize = shape.iter().product();
            let slot = if i >= trunk {
                Slot::Head((i - trunk) / 2)
            } else if name.ends_with(".w") {
                Slot::Prunable
            } else {
                Slot::Aux
            };
            slots.extend(std::iter::repeat_n(slot, n));
        }
        Self::from_slots(slots, keep_frac)
    }

    pub fn from_slots(slots: Vec<Slot>, keep_frac: f64) -> Self {
        assert!(keep_frac > 0.0 && keep_frac <= 1.0, "keep_frac must lie in (0, 1]");
        let n = slots.len();
        Self {
            slots,
            owner: vec![0; n],
            keep_frac,
            aux_frozen: false,
        }
    }

    pub fn prunable_total(&self) -> usize {
        self.slots.iter().filter(|s| **s == Slot::Prunable).count()
    }

    /// Parameters taken by each task at pruning time.
    pub fn per_task(&self) -> usize {
        (self.keep_frac * self.prunable_total() as f64).round() as usize
    }

    pub fn free(&self) -> usize {
        self.slots
            .iter()
            .zip(&self.owner)
            .filter(|(s, o)| **s == Slot::Prunable && **o == 0)
            .count()
    }

    pub fn owned_by(&self, task_id: usize) -> usize {
        let label = owner_label(task_id);
        self.owner.iter().filter(|&&o| o == label).count()
    }

    /// Largest number of tasks the masks can hold.
    pub fn task_capacity(&self) -> usize {
        let per = self.per_task().max(1);
        self.prunable_total() / per
    }

    /// Which parameters may change while `task_id` trains on head `head`.
    pub fn active(&self, task_id: usize, head: usize, phase: Phase) -> Vec<bool> {
        let label = owner_label(task_id);
        self.slots
            .iter()
            .zip(&self.owner)
            .map(|(s, &o)| match s {
                Slot::Prunable => match phase {
                    Phase::Training => o == 0 || o == label,
                    Phase::Finetuning => o == label,
                },
                Slot::Aux => !self.aux_frozen,
                Slot::Head(k) => *k == head,
            })
            .collect()
    }

    /// Parameters as seen by `task_id` while `current_task` is being
    /// trained: weights owned by later tasks are masked out, and free
    /// weights are only visible to the current or later tasks.
    pub fn view(&self, values: &[f64], task_id: usize, current_task: usize) -> Vec<f64> {
        let label = owner_label(task_id);
        values
            .iter()
            .zip(&self.slots)
            .zip(&self.owner)
            .map(|((&v, s), &o)| {
                let visible = *s != Slot::Prunable
                    || (o != 0 && o <= label)
                    || (o == 0 && task_id >= current_task);
                if visible {
                    v
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Assigns the `keep_frac * prunable_total` largest-magnitude free weights
/// to `task_id` and zeroes every other free weight. Ties go to the lower
/// index.
pub fn packnet_prune(values: &mut [f64], masks: &PruneMaskSet, task_id: usize) -> Result<PruneMaskSet> {
    if values.len() != masks.slots.len() {
        return Err(Error::Dimension {
            what: "packnet parameters",
            expected: masks.slots.len(),
            got: values.len(),
        });
    }
    let need = masks.per_task();
    let mut free: Vec<usize> = (0..values.len())
        .filter(|&i| masks.slots[i] == Slot::Prunable && masks.owner[i] == 0)
        .collect();
    if free.len() < need || need == 0 {
        return Err(Error::Capacity {
            task: task_id,
            free: free.len(),
            need,
        });
    }
    free.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()).then(a.cmp(&b)));
    let mut out = masks.clone();
    let label = owner_label(task_id);
    for (rank, &i) in free.iter().enumerate() {
        if rank < need {
            out.owner[i] = label;
        } else {
            values[i] = 0.0;
        }
    }
    Ok(out)
}

/// Zeroes gradient entries that may not change (see
/// [`PruneMaskSet::active`]) and clips the global norm to `max_norm`.
pub fn packnet_mask_gradients(
    g: &GradientVector,
    masks: &PruneMaskSet,
    task_id: usize,
    head: usize,
    phase: Phase,
    max_norm: f64,
) -> GradientVector {
    let active = masks.active(task_id, head, phase);
    let masked = GradientVector::new(
        g.values
            .iter()
            .zip(&active)
            .map(|(&v, &a)| if a { v } else { 0.0 })
            .collect(),
    );
    clip_global_norm(&masked, max_norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rng;
    use rand::{Rng as _, SeedableRng};

    fn flat(n: usize) -> PruneMaskSet {
        PruneMaskSet::from_slots(vec![Slot::Prunable; n], 0.05)
    }

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn first_task_owns_five_percent() {
        let mut v = random(1000, 0);
        let m = packnet_prune(&mut v, &flat(1000), 0).unwrap();
        assert_eq!(m.owned_by(0), 50);
        assert_eq!(v.iter().filter(|x| **x != 0.0).count(), 50);
        let smallest_kept = (0..1000)
            .filter(|&i| m.owner[i] == 1)
            .map(|i| v[i].abs())
            .fold(f64::INFINITY, f64::min);
        let orig = random(1000, 0);
        let largest_dropped = (0..1000)
            .filter(|&i| m.owner[i] == 0)
            .map(|i| orig[i].abs())
            .fold(0.0, f64::max);
        assert!(smallest_kept >= largest_dropped);
    }

    #[test]
    fn owners_are_disjoint_and_stable() {
        let mut v = random(1000, 1);
        let m1 = packnet_prune(&mut v, &flat(1000), 0).unwrap();
        let mut v2 = random(1000, 2);
        for i in 0..1000 {
            if m1.owner[i] == 1 {
                v2[i] = v[i];
            }
        }
        let m2 = packnet_prune(&mut v2, &m1, 1).unwrap();
        assert_eq!((m2.owned_by(0), m2.owned_by(1)), (50, 50));
        for i in 0..1000 {
            if m1.owner[i] != 0 {
                assert_eq!(m2.owner[i], m1.owner[i]);
                assert_eq!(v2[i], v[i]);
            }
        }
    }

    #[test]
    fn twenty_first_task_exceeds_capacity() {
        let mut m = flat(1000);
        assert_eq!(m.task_capacity(), 20);
        for t in 0..20 {
            let mut v = random(1000, 10 + t as u64);
            m = packnet_prune(&mut v, &m, t).unwrap();
        }
        let mut v = random(1000, 99);
        assert!(matches!(packnet_prune(&mut v, &m, 20), Err(Error::Capacity { .. })));
    }

    #[test]
    fn gradient_masks() {
        let mut m = flat(10);
        m.owner = vec![1; 10];
        let g = GradientVector::new(vec![1.0; 10]);
        let out = packnet_mask_gradients(&g, &m, 1, 0, Phase::Training, 1e9);
        assert!(out.values.iter().all(|&x| x == 0.0));
        let fresh = flat(10);
        assert_eq!(packnet_mask_gradients(&g, &fresh, 0, 0, Phase::Training, 1e9), g);
        m.owner = vec![0, 2, 1, 2, 0, 0, 1, 2, 0, 0];
        let out = packnet_mask_gradients(&g, &m, 1, 0, Phase::Finetuning, 1e9);
        for i in 0..10 {
            assert_eq!(out.values[i] != 0.0, m.owner[i] == 2);
        }
    }

    #[test]
    fn aux_and_heads_follow_task() {
        let net = NetworkConfig::new(3, 2, 2).with_hidden(2, 4);
        let mut m = PruneMaskSet::for_network(&net, 0.25);
        assert_eq!(m.prunable_total(), 3 * 4 + 4 * 4);
        let a = m.active(0, 0, Phase::Training);
        let heads: Vec<Slot> = m.slots.iter().copied().filter(|s| matches!(s, Slot::Head(_))).collect();
        assert_eq!(heads.len(), 2 * (4 * 2 + 2));
        assert!(m.slots.iter().zip(&a).all(|(s, &on)| on != (*s == Slot::Head(1))));
        m.aux_frozen = true;
        let a = m.active(1, 1, Phase::Training);
        assert!(m.slots.iter().zip(&a).all(|(s, &on)| !(*s == Slot::Aux && on)));
    }

    #[test]
    fn view_hides_later_and_free_weights_from_earlier_tasks() {
        let mut m = flat(4);
        m.owner = vec![1, 2, 0, 0];
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(m.view(&v, 0, 2), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(m.view(&v, 1, 2), vec![1.0, 2.0, 0.0, 0.0]);
        assert_eq!(m.view(&v, 2, 2), v.to_vec());
    }
}
