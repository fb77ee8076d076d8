//! Vector Bellman operator with a scalarized greedy bootstrap, and value
//! iteration built on it.

use ndarray::{Array2, Array3, ArrayView1};

use crate::error::{Error, Result};

use super::mdp::FiniteMdp;

/// One action-value table per objective, shape `(heads, states, actions)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorQ {
    table: Array3<f64>,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

impl VectorQ {
    pub fn zeros(heads: usize, states: usize, actions: usize) -> Self {
        Self { table: Array3::zeros((heads, states, actions)) }
    }

    pub fn from_table(table: Array3<f64>) -> Self {
        Self { table }
    }

    pub fn table(&self) -> &Array3<f64> {
        &self.table
    }

    pub fn table_mut(&mut self) -> &mut Array3<f64> {
        &mut self.table
    }

    pub fn heads(&self) -> usize {
        self.table.shape()[0]
    }

    pub fn states(&self) -> usize {
        self.table.shape()[1]
    }

    pub fn actions(&self) -> usize {
        self.table.shape()[2]
    }

    /// Vector of head values at `(s, a)`.
    pub fn at(&self, s: usize, a: usize) -> ArrayView1<'_, f64> {
        self.table.slice(ndarray::s![.., s, a])
    }

    pub fn scalarized_at(&self, lambda: &[f64], s: usize, a: usize) -> f64 {
        self.at(s, a).iter().zip(lambda).map(|(q, l)| q * l).sum()
    }

    /// `lambda^T Q` as a `(states, actions)` table.
    pub fn scalarize(&self, lambda: &[f64]) -> Array2<f64> {
        let mut out = Array2::zeros((self.states(), self.actions()));
        for (i, &l) in lambda.iter().enumerate() {
            out.scaled_add(l, &self.table.index_axis(ndarray::Axis(0), i));
        }
        out
    }

    /// Action maximizing `lambda^T Q(s, .)`, lowest index on ties.
    pub fn greedy_action(&self, lambda: &[f64], s: usize) -> usize {
        argmax((0..self.actions()).map(|a| self.scalarized_at(lambda, s, a)))
    }

    /// `max_{s,a} |lambda^T Q(s,a)|`, a norm on non-negative tables when every
    /// weight is positive.
    pub fn lambda_norm(&self, lambda: &[f64]) -> f64 {
        self.scalarize(lambda).iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sub(&self, other: &VectorQ) -> VectorQ {
        VectorQ { table: &self.table - &other.table }
    }
}

fn check_shapes(mdp: &FiniteMdp, q: &VectorQ, lambda: &[f64]) -> Result<()> {
    let want = (mdp.n_objectives(), mdp.n_states(), mdp.n_actions());
    let got = (q.heads(), q.states(), q.actions());
    if want != got {
        return Err(Error::Shape(format!("table is {got:?}, MDP needs {want:?}")));
    }
    if lambda.len() != mdp.n_objectives() {
        return Err(Error::Shape(format!("{} weights for {} objectives", lambda.len(), mdp.n_objectives())));
    }
    Ok(())
}

/// `(T_lambda Q)(s,a) = R(s,a) + gamma E_{s'}[Q(s', argmax_{a'} lambda^T Q(s',a'))]`.
pub fn bellman_lambda(mdp: &FiniteMdp, q: &VectorQ, lambda: &[f64]) -> Result<VectorQ> {
    check_shapes(mdp, q, lambda)?;
    let (heads, states, actions) = (q.heads(), q.states(), q.actions());
    let greedy: Vec<usize> = (0..states).map(|s| q.greedy_action(lambda, s)).collect();
    let mut out = Array3::zeros((heads, states, actions));
    for s in 0..states {
        for a in 0..actions {
            let r = mdp.reward(s, a);
            let p = mdp.next_distribution(s, a);
            for i in 0..heads {
                let boot: f64 = p.iter().enumerate().map(|(s2, &pr)| pr * q.table[[i, s2, greedy[s2]]]).sum();
                out[[i, s, a]] = r[i] + mdp.gamma() * boot;
            }
        }
    }
    Ok(VectorQ { table: out })
}

#[derive(Debug, Clone)]
pub struct DecomposedSolution {
    pub q: VectorQ,
    /// `||Q_{k+1} - Q_k||_lambda` after every sweep.
    pub residuals: Vec<f64>,
}

/// Iterates [`bellman_lambda`] from zero until the lambda-norm residual drops
/// below `tol`.
pub fn decomposed_value_iteration(
    mdp: &FiniteMdp,
    lambda: &[f64],
    tol: f64,
    max_sweeps: usize,
) -> Result<DecomposedSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParam { name: "tol", reason: format!("{tol} must be positive") });
    }
    let mut q = VectorQ::zeros(mdp.n_objectives(), mdp.n_states(), mdp.n_actions());
    let mut residuals = Vec::new();
    for _ in 0..max_sweeps {
        let next = bellman_lambda(mdp, &q, lambda)?;
        let residual = next.sub(&q).lambda_norm(lambda);
        residuals.push(residual);
        q = next;
        if residual < tol {
            return Ok(DecomposedSolution { q, residuals });
        }
    }
    Err(Error::IterationCap { iterations: max_sweeps, residual: residuals.last().copied().unwrap_or(f64::NAN) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::oracle::scalar_value_iteration;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_state_two_actions() -> FiniteMdp {
        FiniteMdp::new(1, 2, 2, vec![1.0, 1.0], vec![1.0, 0.0, 0.0, 1.0], 0.5, vec![1.0]).unwrap()
    }

    #[test]
    fn zero_bootstrap_returns_rewards() {
        let m = one_state_two_actions();
        let q = VectorQ::zeros(2, 1, 2);
        let out = bellman_lambda(&m, &q, &[1.0, 2.0]).unwrap();
        assert_eq!(out.at(0, 0).to_vec(), vec![1.0, 0.0]);
        assert_eq!(out.at(0, 1).to_vec(), vec![0.0, 1.0]);
    }

    #[test]
    fn worked_example_fixed_point() {
        let m = one_state_two_actions();
        let lam = [1.0, 2.0];
        let sol = decomposed_value_iteration(&m, &lam, 1e-12, 10_000).unwrap();
        let q = &sol.q;
        assert!((q.at(0, 0)[0] - 1.0).abs() < 1e-10);
        assert!((q.at(0, 0)[1] - 1.0).abs() < 1e-10);
        assert!((q.at(0, 1)[0] - 0.0).abs() < 1e-10);
        assert!((q.at(0, 1)[1] - 2.0).abs() < 1e-10);
        assert_eq!(q.greedy_action(&lam, 0), 1);
        let scalar = q.scalarize(&lam);
        assert!((scalar[[0, 0]] - 3.0).abs() < 1e-10);
        assert!((scalar[[0, 1]] - 4.0).abs() < 1e-10);
        let oracle = scalar_value_iteration(&m, &lam, 1e-12, 10_000).unwrap();
        assert!((oracle[[0, 0]] - 3.0).abs() < 1e-10);
        assert!((oracle[[0, 1]] - 4.0).abs() < 1e-10);
    }

    #[test]
    fn single_head_is_classical_value_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = FiniteMdp::random(&mut rng, 6, 3, 1, 0.9);
        let sol = decomposed_value_iteration(&m, &[1.0], 1e-12, 100_000).unwrap();
        let oracle = scalar_value_iteration(&m, &[1.0], 1e-12, 100_000).unwrap();
        let diff = (&sol.q.scalarize(&[1.0]) - &oracle).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(diff < 1e-9, "{diff}");
    }

    #[test]
    fn residuals_contract_at_rate_gamma() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = FiniteMdp::random(&mut rng, 5, 3, 3, 0.8);
        let lam = [1.0, 0.7, 2.5];
        let sol = decomposed_value_iteration(&m, &lam, 1e-10, 10_000).unwrap();
        for w in sol.residuals.windows(2) {
            assert!(w[1] <= 0.8 * w[0] + 1e-12, "{} > gamma * {}", w[1], w[0]);
        }
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = FiniteMdp::random(&mut rng, 4, 2, 2, 0.99);
        match decomposed_value_iteration(&m, &[1.0, 1.0], 1e-12, 5) {
            Err(Error::IterationCap { iterations: 5, residual }) => assert!(residual > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let m = one_state_two_actions();
        assert!(bellman_lambda(&m, &VectorQ::zeros(3, 1, 2), &[1.0, 1.0]).is_err());
        assert!(bellman_lambda(&m, &VectorQ::zeros(2, 1, 2), &[1.0]).is_err());
    }

    #[test]
    fn ties_break_to_lowest_index() {
        assert_eq!(argmax([1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax([0.0, 0.0]), 0);
    }

    fn random_table(rng: &mut ChaCha8Rng) -> VectorQ {
        VectorQ::from_table(Array3::from_shape_fn((3, 4, 3), |_| rng.random::<f64>() * 5.0))
    }

    proptest! {
        #[test]
        fn lambda_norm_axioms(seed in 0u64..10_000, c in 0.0f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let lam = [1.0, rng.random_range(0.01..5.0), rng.random_range(0.01..5.0)];
            let a = random_table(&mut rng);
            let b = random_table(&mut rng);
            let sum = VectorQ::from_table(a.table() + b.table());
            prop_assert!(sum.lambda_norm(&lam) <= a.lambda_norm(&lam) + b.lambda_norm(&lam) + 1e-12);
            let scaled = VectorQ::from_table(a.table() * c);
            prop_assert!((scaled.lambda_norm(&lam) - c * a.lambda_norm(&lam)).abs() < 1e-9);
            prop_assert!(a.lambda_norm(&lam) > 0.0);
            prop_assert_eq!(VectorQ::zeros(3, 4, 3).lambda_norm(&lam), 0.0);
        }

        #[test]
        fn operator_contracts_in_lambda_norm(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = FiniteMdp::random(&mut rng, 4, 3, 3, 0.9);
            let lam = [1.0, rng.random_range(0.01..5.0), rng.random_range(0.01..5.0)];
            let a = random_table(&mut rng);
            let b = random_table(&mut rng);
            let ta = bellman_lambda(&m, &a, &lam).unwrap();
            let tb = bellman_lambda(&m, &b, &lam).unwrap();
            let lhs = ta.sub(&tb).lambda_norm(&lam);
            prop_assert!(lhs <= 0.9 * a.sub(&b).lambda_norm(&lam) + 1e-9);
        }
    }
}
