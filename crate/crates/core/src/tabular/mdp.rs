use rand::Rng;

use crate::error::{Error, Result};

/// Finite MDP with a vector reward `[r_0, ..., r_N]` per state-action pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    n_states: usize,
    n_actions: usize,
    n_objectives: usize,
    /// Row-major `[s][a][s']`.
    transitions: Vec<f64>,
    /// Row-major `[s][a][i]`.
    rewards: Vec<f64>,
    gamma: f64,
    p0: Vec<f64>,
}

impl FiniteMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        n_objectives: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
        gamma: f64,
        p0: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 || n_objectives == 0 {
            return Err(Error::Shape("empty state, action or objective set".into()));
        }
        if transitions.len() != n_states * n_actions * n_states {
            return Err(Error::Shape(format!(
                "transitions hold {} entries, expected {}",
                transitions.len(),
                n_states * n_actions * n_states
            )));
        }
        if rewards.len() != n_states * n_actions * n_objectives {
            return Err(Error::Shape(format!(
                "rewards hold {} entries, expected {}",
                rewards.len(),
                n_states * n_actions * n_objectives
            )));
        }
        if p0.len() != n_states {
            return Err(Error::Shape(format!("p0 has {} entries for {n_states} states", p0.len())));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidParam { name: "gamma", reason: format!("{gamma} not in [0, 1)") });
        }
        let is_distribution =
            |row: &[f64]| row.iter().all(|&p| p >= 0.0) && (row.iter().sum::<f64>() - 1.0).abs() < 1e-9;
        if !transitions.chunks(n_states).all(is_distribution) {
            return Err(Error::InvalidParam { name: "transitions", reason: "rows must be distributions".into() });
        }
        if !is_distribution(&p0) {
            return Err(Error::InvalidParam { name: "p0", reason: "not a distribution".into() });
        }
        if rewards.iter().any(|&r| !(r >= 0.0 && r.is_finite())) {
            return Err(Error::InvalidParam { name: "rewards", reason: "must be finite and non-negative".into() });
        }
        Ok(Self { n_states, n_actions, n_objectives, transitions, rewards, gamma, p0 })
    }

    /// Random MDP with dense transition rows and rewards uniform in `[0, 1)`.
    pub fn random<R: Rng>(rng: &mut R, n_states: usize, n_actions: usize, n_objectives: usize, gamma: f64) -> Self {
        let mut transitions = Vec::with_capacity(n_states * n_actions * n_states);
        for _ in 0..n_states * n_actions {
            let row: Vec<f64> = (0..n_states).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
            let total: f64 = row.iter().sum();
            transitions.extend(row.iter().map(|x| x / total));
        }
        let rewards = (0..n_states * n_actions * n_objectives).map(|_| rng.random::<f64>()).collect();
        let p0 = vec![1.0 / n_states as f64; n_states];
        Self::new(n_states, n_actions, n_objectives, transitions, rewards, gamma, p0)
            .expect("generated MDP is well formed")
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Reward heads, `N + 1`.
    pub fn n_objectives(&self) -> usize {
        self.n_objectives
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn p0(&self) -> &[f64] {
        &self.p0
    }

    /// `P(. | s, a)`.
    pub fn next_distribution(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transitions[start..start + self.n_states]
    }

    pub fn reward(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_objectives;
        &self.rewards[start..start + self.n_objectives]
    }

    /// Samples from a discrete distribution by inversion.
    pub(crate) fn draw<R: Rng>(dist: &[f64], rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in dist.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        dist.iter().rposition(|&p| p > 0.0).unwrap_or(dist.len() - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_negative_rewards_and_bad_rows() {
        let t = vec![1.0, 1.0];
        assert!(FiniteMdp::new(1, 2, 1, t.clone(), vec![0.5, -0.1], 0.5, vec![1.0]).is_err());
        assert!(FiniteMdp::new(1, 2, 1, vec![0.9, 1.0], vec![0.5, 0.1], 0.5, vec![1.0]).is_err());
        assert!(FiniteMdp::new(1, 2, 1, t.clone(), vec![0.5], 0.5, vec![1.0]).is_err());
        assert!(FiniteMdp::new(1, 2, 1, t, vec![0.5, 0.1], 0.5, vec![1.0]).is_ok());
    }

    #[test]
    fn random_mdp_is_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = FiniteMdp::random(&mut rng, 5, 3, 3, 0.9);
        for s in 0..5 {
            for a in 0..3 {
                let row = m.next_distribution(s, a);
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert_eq!(m.reward(s, a).len(), 3);
            }
        }
    }
}
