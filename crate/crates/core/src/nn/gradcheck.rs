//! Central-difference verification of analytic gradients.

use rand::Rng;

use super::MultiHeadNet;

/// Floor on the relative-error denominator, so parameters with a vanishing
/// gradient do not report a huge relative error from rounding noise.
pub const DENOMINATOR_GUARD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub indices: Vec<usize>,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_rel_error: f64,
}

/// `|a - n| / max(|a| + |n|, guard)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(DENOMINATOR_GUARD)
}

/// Parameter indices spread over every layer, weights and biases alike.
pub fn probe_indices<R: Rng>(net: &MultiHeadNet, probes: usize, rng: &mut R) -> Vec<usize> {
    let ranges = net.layer_ranges();
    let per_layer = probes.div_ceil(ranges.len());
    let mut out = Vec::with_capacity(probes);
    for (li, &(start, end)) in ranges.iter().enumerate() {
        let take = per_layer.min(probes - out.len());
        let (inputs, outputs) = net.shape().layer_dims()[li];
        let bias_start = start + inputs * outputs;
        for j in 0..take {
            // every fourth probe of a layer lands on a bias
            let idx = if j % 4 == 3 { rng.random_range(bias_start..end) } else { rng.random_range(start..bias_start) };
            out.push(idx);
        }
    }
    out
}

/// Compares `analytic` with central differences of `loss` at `probes` indices.
pub fn check_gradient<R: Rng>(
    net: &MultiHeadNet,
    analytic: &[f64],
    probes: usize,
    h: f64,
    rng: &mut R,
    loss: impl Fn(&MultiHeadNet) -> f64,
) -> GradientReport {
    assert_eq!(analytic.len(), net.param_count(), "gradient length");
    let indices = probe_indices(net, probes, rng);
    let mut probe = net.clone();
    let mut numeric = Vec::with_capacity(indices.len());
    for &i in &indices {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + h;
        let up = loss(&probe);
        probe.params_mut()[i] = orig - h;
        let down = loss(&probe);
        probe.params_mut()[i] = orig;
        numeric.push((up - down) / (2.0 * h));
    }
    let analytic: Vec<f64> = indices.iter().map(|&i| analytic[i]).collect();
    let max_rel_error = analytic.iter().zip(&numeric).map(|(&a, &n)| relative_error(a, n)).fold(0.0, f64::max);
    GradientReport { indices, analytic, numeric, max_rel_error }
}
