//! Ring replay storage with three sampling views over the same items:
//! proportional to `p^alpha`, proportional to `(1/p)^alpha`, and uniform.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    /// One delta index per decision; a single entry for homogeneous actions.
    pub action: Vec<usize>,
    pub reward: Vec<f64>,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// Binary tree of partial sums over a fixed number of leaves.
///
/// Inner nodes are recomputed from their children on every write, so the
/// root is always the exact floating-point sum of the current leaves in tree
/// order, with no drift from incremental updates.
#[derive(Debug, Clone)]
pub struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let leaves = capacity.max(1).next_power_of_two();
        Self { leaves, nodes: vec![0.0; 2 * leaves] }
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    pub fn set(&mut self, i: usize, value: f64) {
        debug_assert!(value >= 0.0);
        let mut n = self.leaves + i;
        self.nodes[n] = value;
        while n > 1 {
            n /= 2;
            self.nodes[n] = self.nodes[2 * n] + self.nodes[2 * n + 1];
        }
    }

    /// Leaf whose cumulative interval contains `prefix`.
    pub fn find(&self, mut prefix: f64) -> usize {
        let mut n = 1;
        while n < self.leaves {
            let left = self.nodes[2 * n];
            if prefix < left || self.nodes[2 * n + 1] <= 0.0 {
                n *= 2;
            } else {
                prefix -= left;
                n = 2 * n + 1;
            }
        }
        n - self.leaves
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleView {
    /// Proportional to `p^alpha`: the critic buffer.
    Prioritized,
    /// Proportional to `(1/p)^alpha`: the actor buffer.
    Inverse,
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub indices: Vec<usize>,
    /// Importance weights `(n P(j))^-beta`, scaled so the largest in the batch is 1.
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PrioritizedBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
    priorities: Vec<f64>,
    direct: SumTree,
    inverse: SumTree,
    alpha: f64,
    p_min: f64,
    max_priority: f64,
}

impl PrioritizedBuffer {
    pub fn new(capacity: usize, alpha: f64, p_min: f64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidParam { name: "capacity", reason: "must be positive".into() });
        }
        if !(alpha >= 0.0 && p_min > 0.0) {
            return Err(Error::InvalidParam { name: "alpha/p_min", reason: format!("{alpha}, {p_min}") });
        }
        Ok(Self {
            capacity,
            items: Vec::with_capacity(capacity),
            next: 0,
            priorities: Vec::with_capacity(capacity),
            direct: SumTree::new(capacity),
            inverse: SumTree::new(capacity),
            alpha,
            p_min,
            max_priority: 1.0,
        })
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

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    pub fn priority(&self, i: usize) -> f64 {
        self.priorities[i]
    }

    pub fn p_min(&self) -> f64 {
        self.p_min
    }

    /// Tree masses of item `i` in the direct and inverse views.
    pub fn view_masses(&self, i: usize) -> (f64, f64) {
        (self.direct.get(i), self.inverse.get(i))
    }

    pub fn view_totals(&self) -> (f64, f64) {
        (self.direct.total(), self.inverse.total())
    }

    /// Stores `t` with the largest priority seen so far, overwriting the
    /// oldest item once full.
    pub fn push(&mut self, t: Transition) -> usize {
        let i = self.next;
        if self.items.len() < self.capacity {
            self.items.push(t);
            self.priorities.push(0.0);
        } else {
            self.items[i] = t;
        }
        self.write_priority(i, self.max_priority);
        self.next = (self.next + 1) % self.capacity;
        i
    }

    fn write_priority(&mut self, i: usize, p: f64) {
        let p = p.max(self.p_min);
        self.priorities[i] = p;
        self.direct.set(i, p.powf(self.alpha));
        self.inverse.set(i, p.recip().powf(self.alpha));
    }

    /// Replaces priorities of the given items in both views.
    pub fn update_priorities(&mut self, indices: &[usize], priorities: &[f64]) {
        assert_eq!(indices.len(), priorities.len());
        for (&i, &p) in indices.iter().zip(priorities) {
            assert!(p.is_finite() && p > 0.0, "priority {p}");
            self.write_priority(i, p);
            self.max_priority = self.max_priority.max(p);
        }
    }

    /// Probability of drawing item `i` under a view.
    pub fn probability(&self, view: SampleView, i: usize) -> f64 {
        match view {
            SampleView::Prioritized => self.direct.get(i) / self.direct.total(),
            SampleView::Inverse => self.inverse.get(i) / self.inverse.total(),
            SampleView::Uniform => 1.0 / self.len() as f64,
        }
    }

    /// Stratified draw of `batch` items; importance weights use exponent `beta`.
    pub fn sample<R: Rng>(&self, view: SampleView, batch: usize, beta: f64, rng: &mut R) -> Result<Sample> {
        if batch == 0 {
            return Err(Error::EmptyBatch);
        }
        if self.len() < batch {
            return Err(Error::Underfilled { len: self.len(), needed: batch });
        }
        let n = self.len();
        let indices: Vec<usize> = match view {
            SampleView::Uniform => (0..batch).map(|_| rng.random_range(0..n)).collect(),
            SampleView::Prioritized | SampleView::Inverse => {
                let tree = if view == SampleView::Prioritized { &self.direct } else { &self.inverse };
                let segment = tree.total() / batch as f64;
                (0..batch)
                    .map(|j| tree.find((j as f64 + rng.random::<f64>()) * segment).min(n - 1))
                    .collect()
            }
        };
        let raw: Vec<f64> = indices.iter().map(|&i| (n as f64 * self.probability(view, i)).powf(-beta)).collect();
        let max = raw.iter().copied().fold(0.0, f64::max);
        let weights = raw.iter().map(|w| w / max).collect();
        Ok(Sample { indices, weights })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(x: f64) -> Transition {
        Transition { state: vec![x], action: vec![0], reward: vec![x], next_state: vec![x], terminal: false }
    }

    #[test]
    fn sum_tree_finds_intervals() {
        let mut tree = SumTree::new(5);
        for (i, v) in [1.0, 0.0, 2.0, 3.0, 4.0].iter().enumerate() {
            tree.set(i, *v);
        }
        assert_eq!(tree.total(), 10.0);
        assert_eq!(tree.find(0.5), 0);
        assert_eq!(tree.find(1.0), 2);
        assert_eq!(tree.find(2.99), 2);
        assert_eq!(tree.find(3.0), 3);
        assert_eq!(tree.find(9.99), 4);
        tree.set(4, 0.0);
        assert_eq!(tree.total(), 6.0);
    }

    #[test]
    fn identical_items_get_unit_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut buf = PrioritizedBuffer::new(32, 0.6, 1e-6).unwrap();
        for _ in 0..20 {
            buf.push(t(1.0));
        }
        let idx: Vec<usize> = (0..20).collect();
        buf.update_priorities(&idx, &[0.7; 20]);
        for view in [SampleView::Prioritized, SampleView::Inverse, SampleView::Uniform] {
            let s = buf.sample(view, 8, 0.4, &mut rng).unwrap();
            assert!(s.weights.iter().all(|&w| w == 1.0), "{view:?} {:?}", s.weights);
        }
    }

    #[test]
    fn probabilities_sum_to_one_and_views_share_storage() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut buf = PrioritizedBuffer::new(16, 0.6, 1e-6).unwrap();
        for i in 0..40 {
            let j = buf.push(t(i as f64));
            buf.update_priorities(&[j], &[rng.random_range(1e-3..5.0)]);
        }
        assert_eq!(buf.len(), 16);
        for view in [SampleView::Prioritized, SampleView::Inverse, SampleView::Uniform] {
            let total: f64 = (0..16).map(|i| buf.probability(view, i)).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        for i in 0..16 {
            let p = buf.priority(i);
            let (d, inv) = buf.view_masses(i);
            assert!((d - p.powf(0.6)).abs() < 1e-12);
            assert!((inv - p.recip().powf(0.6)).abs() < 1e-9 * inv);
        }
    }

    #[test]
    fn priority_floor_applies() {
        let mut buf = PrioritizedBuffer::new(4, 0.6, 1e-6).unwrap();
        buf.push(t(0.0));
        buf.update_priorities(&[0], &[1e-12]);
        assert_eq!(buf.priority(0), 1e-6);
    }

    #[test]
    fn empirical_frequencies_follow_each_view() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut buf = PrioritizedBuffer::new(4, 1.0, 1e-6).unwrap();
        for i in 0..4 {
            buf.push(t(i as f64));
        }
        buf.update_priorities(&[0, 1, 2, 3], &[1.0, 2.0, 3.0, 4.0]);
        let draws = 40_000;
        for view in [SampleView::Prioritized, SampleView::Inverse] {
            let mut counts = [0usize; 4];
            for _ in 0..draws / 4 {
                for i in buf.sample(view, 4, 0.5, &mut rng).unwrap().indices {
                    counts[i] += 1;
                }
            }
            for (i, &c) in counts.iter().enumerate() {
                let p = buf.probability(view, i);
                let sd = (draws as f64 * p * (1.0 - p)).sqrt();
                assert!((c as f64 - draws as f64 * p).abs() < 4.0 * sd, "{view:?} {i} {c}");
            }
        }
    }

    #[test]
    fn underfilled_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut buf = PrioritizedBuffer::new(8, 0.6, 1e-6).unwrap();
        buf.push(t(0.0));
        assert!(matches!(
            buf.sample(SampleView::Prioritized, 4, 0.4, &mut rng),
            Err(Error::Underfilled { len: 1, needed: 4 })
        ));
    }
}
