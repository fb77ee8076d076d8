//! Tabular multi-objective Q-learning: every head bootstraps on the action
//! that is greedy for the scalarized table.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::bellman::{argmax, VectorQ};
use super::mdp::FiniteMdp;

/// Sample access to an MDP whose model the learner does not see.
pub trait TransitionSampler {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn n_objectives(&self) -> usize;
    fn initial_state<R: Rng>(&mut self, rng: &mut R) -> usize;
    /// Reward vector and next state for `(s, a)`.
    fn sample<R: Rng>(&mut self, s: usize, a: usize, rng: &mut R) -> (Vec<f64>, usize);
}

impl TransitionSampler for FiniteMdp {
    fn n_states(&self) -> usize {
        FiniteMdp::n_states(self)
    }

    fn n_actions(&self) -> usize {
        FiniteMdp::n_actions(self)
    }

    fn n_objectives(&self) -> usize {
        FiniteMdp::n_objectives(self)
    }

    fn initial_state<R: Rng>(&mut self, rng: &mut R) -> usize {
        FiniteMdp::draw(self.p0(), rng)
    }

    fn sample<R: Rng>(&mut self, s: usize, a: usize, rng: &mut R) -> (Vec<f64>, usize) {
        let next = FiniteMdp::draw(self.next_distribution(s, a), rng);
        (self.reward(s, a).to_vec(), next)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QLearningConfig {
    pub n_steps: u64,
    /// Probability of a uniformly random behaviour action.
    pub epsilon: f64,
    /// Step size `1 / (1 + visits(s,a))^omega`; Robbins-Monro for `omega` in (0.5, 1].
    pub omega: f64,
    pub seed: u64,
}

impl Default for QLearningConfig {
    fn default() -> Self {
        Self { n_steps: 100_000, epsilon: 0.05, omega: 0.7, seed: 0 }
    }
}

/// Runs one continuing trajectory and returns the learned per-head tables.
pub fn multiobjective_q_learning<S: TransitionSampler>(
    sampler: &mut S,
    lambda: &[f64],
    gamma: f64,
    cfg: &QLearningConfig,
) -> VectorQ {
    let (ns, na, heads) = (sampler.n_states(), sampler.n_actions(), sampler.n_objectives());
    assert_eq!(lambda.len(), heads, "one weight per objective");
    assert!(cfg.epsilon > 0.0, "behaviour policy must keep exploring");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut q = VectorQ::zeros(heads, ns, na);
    let mut visits = vec![0u64; ns * na];
    let mut s = sampler.initial_state(&mut rng);
    for _ in 0..cfg.n_steps {
        let a = if rng.random::<f64>() < cfg.epsilon {
            rng.random_range(0..na)
        } else {
            q.greedy_action(lambda, s)
        };
        let (r, next) = sampler.sample(s, a, &mut rng);
        let next_a = argmax((0..na).map(|b| q.scalarized_at(lambda, next, b)));
        let n = &mut visits[s * na + a];
        let alpha = 1.0 / (1.0 + *n as f64).powf(cfg.omega);
        *n += 1;
        let table = q.table_mut();
        for i in 0..heads {
            let target = r[i] + gamma * table[[i, next, next_a]];
            table[[i, s, a]] += alpha * (target - table[[i, s, a]]);
        }
        s = next;
    }
    q
}
