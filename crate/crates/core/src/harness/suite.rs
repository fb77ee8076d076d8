use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tabular::oracle::scalar_value_iteration;
use crate::tabular::{
    bellman_lambda, decomposed_value_iteration, multiobjective_q_learning, FiniteMdp, QLearningConfig, VectorQ,
};

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, passed: bool, detail: String) -> PropertyOutcome {
    PropertyOutcome { name, passed, detail }
}

fn max_abs_diff(a: &ndarray::Array2<f64>, b: &ndarray::Array2<f64>) -> f64 {
    (a - b).iter().fold(0.0f64, |m, d| m.max(d.abs()))
}

/// `[1, l1, l2]` with each multiplier uniform in `(0, 5]`.
fn random_lambda(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [1.0, 5.0 * (1.0 - rng.random::<f64>()), 5.0 * (1.0 - rng.random::<f64>())]
}

/// The one-state example: action 0 pays `[1, 0]`, action 1 pays `[0, 1]`.
pub fn worked_example(gamma: f64) -> FiniteMdp {
    FiniteMdp::new(1, 2, 2, vec![1.0, 1.0], vec![1.0, 0.0, 0.0, 1.0], gamma, vec![1.0])
        .expect("well-formed example")
}

/// Decomposed and scalar value iteration agree on `n_mdps` random problems.
pub fn decomposition_matches_scalar(seed: u64, n_mdps: usize) -> (PropertyOutcome, PropertyOutcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst, mut disagreements, mut ties, mut failures) = (0.0f64, 0, 0, 0);
    for _ in 0..n_mdps {
        let ns = rng.random_range(1..=8);
        let na = rng.random_range(1..=4);
        let gamma = rng.random_range(0.5..0.95);
        let mdp = FiniteMdp::random(&mut rng, ns, na, 3, gamma);
        let lambda = random_lambda(&mut rng);
        let (Ok(dec), Ok(oracle)) = (
            decomposed_value_iteration(&mdp, &lambda, 1e-13, 100_000),
            scalar_value_iteration(&mdp, &lambda, 1e-13, 100_000),
        ) else {
            failures += 1;
            continue;
        };
        worst = worst.max(max_abs_diff(&dec.q.scalarize(&lambda), &oracle));
        for s in 0..ns {
            let row: Vec<f64> = oracle.row(s).to_vec();
            let mut sorted = row.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            if sorted.len() > 1 && sorted[0] - sorted[1] < 1e-6 {
                ties += 1;
                continue;
            }
            let best = crate::tabular::argmax(row.iter().copied());
            disagreements += usize::from(dec.q.greedy_action(&lambda, s) != best);
        }
    }
    (
        outcome(
            "decomposed value iteration matches scalar value iteration",
            failures == 0 && worst < 1e-8,
            format!("{n_mdps} MDPs, max |lambda^T Q - Q*| = {worst:.2e}, {failures} solver failures"),
        ),
        outcome(
            "greedy policies agree away from ties",
            failures == 0 && disagreements == 0,
            format!("{disagreements} disagreements, {ties} tie states skipped"),
        ),
    )
}

/// Fixed point of the one-state example: `Q(a0) = [1, 1]`, `Q(a1) = [0, 2]`.
pub fn worked_example_fixed_point() -> PropertyOutcome {
    let m = worked_example(0.5);
    let lam = [1.0, 2.0];
    let expected = [[1.0, 1.0], [0.0, 2.0]];
    let detail;
    let passed = match decomposed_value_iteration(&m, &lam, 1e-12, 10_000) {
        Ok(sol) => {
            let err = (0..2)
                .flat_map(|a| (0..2).map(move |i| (a, i)))
                .map(|(a, i)| (sol.q.at(0, a)[i] - expected[a][i]).abs())
                .fold(0.0f64, f64::max);
            detail = format!("max error {err:.2e}, greedy action {}", sol.q.greedy_action(&lam, 0));
            err < 1e-10 && sol.q.greedy_action(&lam, 0) == 1
        }
        Err(e) => {
            detail = e.to_string();
            false
        }
    };
    outcome("one-state example fixed point", passed, detail)
}

/// Successive residuals shrink at least by `gamma` in the lambda-norm.
pub fn contraction_rate(seed: u64, n_mdps: usize) -> PropertyOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC0);
    let mut worst = 0.0f64;
    for _ in 0..n_mdps {
        let gamma = rng.random_range(0.3..0.95);
        let mdp = FiniteMdp::random(&mut rng, 6, 3, 3, gamma);
        let lambda = random_lambda(&mut rng);
        let mut q = VectorQ::zeros(3, 6, 3);
        for _ in 0..rng.random_range(0..20) {
            q = bellman_lambda(&mdp, &q, &lambda).expect("shapes match");
        }
        let p = VectorQ::from_table(q.table().mapv(|x| x + rng.random_range(-1.0..1.0)));
        let tq = bellman_lambda(&mdp, &q, &lambda).expect("shapes match");
        let tp = bellman_lambda(&mdp, &p, &lambda).expect("shapes match");
        let num = tq.sub(&tp).lambda_norm(&lambda);
        let den = q.sub(&p).lambda_norm(&lambda);
        if den > 0.0 {
            worst = worst.max(num / den / gamma);
        }
    }
    outcome(
        "operator contracts at rate gamma in the lambda-norm",
        worst <= 1.0 + 1e-12,
        format!("max ||T q - T p|| / (gamma ||q - p||) = {worst:.6}"),
    )
}

fn q_learning_error(mdp: &mut FiniteMdp, lambda: &[f64], steps: u64, seed: u64) -> f64 {
    let exact = decomposed_value_iteration(mdp, lambda, 1e-12, 100_000).expect("converges").q.scalarize(lambda);
    let gamma = mdp.gamma();
    let cfg = QLearningConfig { n_steps: steps, epsilon: 0.2, seed, ..Default::default() };
    let q = multiobjective_q_learning(mdp, lambda, gamma, &cfg).scalarize(lambda);
    max_abs_diff(&q, &exact)
}

/// Q-learning on the one-state example within `1e-2` after `1e5` steps.
pub fn q_learning_worked_example(seed: u64) -> PropertyOutcome {
    let mut m = worked_example(0.5);
    let err = q_learning_error(&mut m, &[1.0, 2.0], 100_000, seed);
    outcome("q-learning converges on the one-state example", err < 1e-2, format!("error {err:.2e} after 1e5 steps"))
}

/// Median Q-learning error over `seeds` random 5-state MDPs, per step budget.
pub fn q_learning_error_curve(seed: u64, seeds: usize, budgets: &[u64]) -> Vec<f64> {
    budgets
        .iter()
        .map(|&steps| {
            let mut errs: Vec<f64> = (0..seeds as u64)
                .map(|k| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k));
                    let mut m = FiniteMdp::random(&mut rng, 5, 2, 3, 0.5);
                    let lambda = random_lambda(&mut rng);
                    q_learning_error(&mut m, &lambda, steps, seed.wrapping_add(1000 + k))
                })
                .collect();
            errs.sort_by(f64::total_cmp);
            let n = errs.len();
            if n % 2 == 1 { errs[n / 2] } else { 0.5 * (errs[n / 2 - 1] + errs[n / 2]) }
        })
        .collect()
}

pub fn q_learning_monotone(seed: u64) -> PropertyOutcome {
    let budgets = [10_000, 100_000, 1_000_000];
    let med = q_learning_error_curve(seed, 10, &budgets);
    outcome(
        "median q-learning error falls with the step budget",
        med.windows(2).all(|w| w[1] < w[0]),
        format!("medians at 1e4/1e5/1e6 steps: {:.3e} {:.3e} {:.3e}", med[0], med[1], med[2]),
    )
}

/// Every tabular property, in a fixed order.
pub fn oracle_suite(seed: u64) -> Vec<PropertyOutcome> {
    let (eq, greedy) = decomposition_matches_scalar(seed, 200);
    vec![
        eq,
        greedy,
        worked_example_fixed_point(),
        contraction_rate(seed, 200),
        q_learning_worked_example(seed),
        q_learning_monotone(seed),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_properties_pass() {
        let (a, b) = decomposition_matches_scalar(3, 20);
        assert!(a.passed, "{a:?}");
        assert!(b.passed, "{b:?}");
        assert!(worked_example_fixed_point().passed);
        assert!(contraction_rate(3, 20).passed);
    }
}
