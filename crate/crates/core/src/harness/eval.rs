use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::agents::{episode_seed, load_controller};
use crate::env::{Controller, Delta, Env, EnvAction, EnvConfig, EnvState};
use crate::error::{Error, Result};
use crate::fh_model::{worst_case_feasible_config, CompressionConfig};
use crate::nn::checkpoint::Checkpoint;

/// Keeps evaluation traffic disjoint from training traffic with the same seed.
const EVAL_SALT: u64 = 0x5EED_0F_E7A1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Slots simulated in total, burn-in included.
    pub n_slots: usize,
    /// Slots per independent rollout.
    pub episode_slots: usize,
    /// Leading fraction of each rollout that is discarded.
    pub burn_in: f64,
    pub bins: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { n_slots: 100_000, episode_slots: 500, burn_in: 0.1, bins: 10 }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_slots == 0 || self.episode_slots == 0 || self.bins == 0 {
            return Err(Error::Config("eval.n_slots, eval.episode_slots and eval.bins must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(Error::Config(format!("eval.burn_in {} not in [0, 1)", self.burn_in)));
        }
        Ok(())
    }

    /// Rollout seeds for a run seeded with `seed`; the last rollout is
    /// shortened so the total is exactly `n_slots`.
    pub fn rollouts(&self, seed: u64) -> Vec<(u64, usize)> {
        let n = self.n_slots.div_ceil(self.episode_slots);
        (0..n)
            .map(|i| {
                let len = self.episode_slots.min(self.n_slots - i * self.episode_slots);
                (episode_seed(seed ^ EVAL_SALT, i as u64), len)
            })
            .collect()
    }
}

/// Holds every cell at one config, walking there one index per knob and slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedController {
    pub target: CompressionConfig,
}

impl Controller for FixedController {
    fn act(&mut self, state: &EnvState, _cfg: &EnvConfig) -> EnvAction {
        let step = |from: usize, to: usize| (to as i64 - from as i64).signum() as i8;
        EnvAction::PerCell(
            state
                .cells
                .iter()
                .map(|c| Delta {
                    dq: step(c.cfg.q_idx, self.target.q_idx),
                    db: step(c.cfg.b_idx, self.target.b_idx),
                    dr: step(c.cfg.r_idx, self.target.r_idx),
                })
                .collect(),
        )
    }
}

/// Count of violating slots with a 95% Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViolationEstimate {
    pub violations: u64,
    pub slots: u64,
}

impl ViolationEstimate {
    pub fn from_flags(flags: impl IntoIterator<Item = bool>) -> Self {
        let (mut violations, mut slots) = (0, 0);
        for f in flags {
            violations += u64::from(f);
            slots += 1;
        }
        Self { violations, slots }
    }

    pub fn p(&self) -> f64 {
        if self.slots == 0 {
            return f64::NAN;
        }
        self.violations as f64 / self.slots as f64
    }

    pub fn interval(&self) -> (f64, f64) {
        const Z: f64 = 1.959_963_984_540_054;
        if self.slots == 0 {
            return (0.0, 1.0);
        }
        let n = self.slots as f64;
        let p = self.p();
        let z2 = Z * Z;
        let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
        let half = Z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
        ((centre - half).max(0.0), (centre + half).min(1.0))
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn mean(&self) -> f64 {
        if self.n == 0 { f64::NAN } else { self.mean }
    }

    fn sd(&self) -> f64 {
        if self.n < 2 { f64::NAN } else { (self.m2 / (self.n - 1) as f64).sqrt() }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Accumulator {
    rho: Moments,
    latency_us: Moments,
    latency: (u64, u64),
    loss: (u64, u64),
}

impl Accumulator {
    fn push(&mut self, s: &SlotSample) {
        self.rho.push(s.rho);
        self.latency_us.push(s.max_latency * 1e6);
        self.latency.0 += u64::from(s.latency_violation);
        self.loss.0 += u64::from(s.lossy);
        self.latency.1 += 1;
        self.loss.1 += 1;
    }

    fn stats(&self, lo: f64, hi: f64) -> BinStats {
        BinStats {
            lo,
            hi,
            slots: self.rho.n,
            mean_rho: self.rho.mean(),
            sd_rho: self.rho.sd(),
            mean_latency_us: self.latency_us.mean(),
            sd_latency_us: self.latency_us.sd(),
            latency: ViolationEstimate { violations: self.latency.0, slots: self.latency.1 },
            loss: ViolationEstimate { violations: self.loss.0, slots: self.loss.1 },
            gain_pct: None,
        }
    }
}

/// One retained evaluation slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotSample {
    pub mean_prb: f64,
    /// Aggregate link utilization `sum_k rho_k`.
    pub rho: f64,
    /// `max_k L_k` in seconds.
    pub max_latency: f64,
    pub latency_violation: bool,
    pub lossy: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinStats {
    /// Mean scheduled PRBs covered, `[lo, hi)` (the last bin is closed).
    pub lo: f64,
    pub hi: f64,
    pub slots: u64,
    pub mean_rho: f64,
    pub sd_rho: f64,
    pub mean_latency_us: f64,
    pub sd_latency_us: f64,
    pub latency: ViolationEstimate,
    pub loss: ViolationEstimate,
    /// Utilization gain over the reference in percent, once compared.
    pub gain_pct: Option<f64>,
}

impl BinStats {
    pub fn centre(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

pub const REPORT_HEADER: [&str; 14] = [
    "bin",
    "prb_lo",
    "prb_hi",
    "slots",
    "mean_rho",
    "sd_rho",
    "mean_latency_us",
    "sd_latency_us",
    "latency_lo_3sigma_us",
    "latency_hi_3sigma_us",
    "p_latency_violation",
    "p_loss",
    "gain_pct",
    "label",
];

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub label: String,
    pub bins: Vec<BinStats>,
    pub overall: BinStats,
    /// Mean of the per-bin gains over bins populated in both runs.
    pub gain_pct: Option<f64>,
}

impl EvaluationReport {
    /// Bins `samples` into `n_bins` equal-width bins over `[1, prb_max]`.
    pub fn from_samples(label: &str, samples: &[SlotSample], n_bins: usize, prb_max: u32) -> Self {
        let (lo, hi) = (1.0, prb_max as f64);
        let width = (hi - lo) / n_bins as f64;
        let mut acc = vec![Accumulator::default(); n_bins];
        let mut all = Accumulator::default();
        for s in samples {
            let b = (((s.mean_prb - lo) / width).floor().max(0.0) as usize).min(n_bins - 1);
            acc[b].push(s);
            all.push(s);
        }
        let bins = acc
            .iter()
            .enumerate()
            .map(|(i, a)| a.stats(lo + i as f64 * width, if i + 1 == n_bins { hi } else { lo + (i + 1) as f64 * width }))
            .collect();
        Self { label: label.to_owned(), bins, overall: all.stats(lo, hi), gain_pct: None }
    }

    /// Fills per-bin and mean gains against `reference`, which must use the
    /// same binning.
    pub fn compare_to(&mut self, reference: &EvaluationReport) -> Result<()> {
        if self.bins.len() != reference.bins.len() {
            return Err(Error::Shape(format!("{} bins vs {} reference bins", self.bins.len(), reference.bins.len())));
        }
        for (b, r) in self.bins.iter_mut().zip(&reference.bins) {
            b.gain_pct = (b.slots > 0 && r.slots > 0 && r.mean_rho > 0.0)
                .then(|| 100.0 * (b.mean_rho - r.mean_rho) / r.mean_rho);
        }
        self.overall.gain_pct = (reference.overall.mean_rho > 0.0)
            .then(|| 100.0 * (self.overall.mean_rho - reference.overall.mean_rho) / reference.overall.mean_rho);
        self.gain_pct = self.mean_gain(f64::NEG_INFINITY, f64::INFINITY);
        Ok(())
    }

    /// Mean per-bin gain over compared bins whose centre lies in `[lo, hi]`.
    pub fn mean_gain(&self, lo: f64, hi: f64) -> Option<f64> {
        let g: Vec<f64> =
            self.bins.iter().filter(|b| (lo..=hi).contains(&b.centre())).filter_map(|b| b.gain_pct).collect();
        (!g.is_empty()).then(|| g.iter().sum::<f64>() / g.len() as f64)
    }

    /// Mean of the per-bin mean utilizations over populated bins whose centre
    /// lies in `[lo, hi]`.
    pub fn mean_rho(&self, lo: f64, hi: f64) -> Option<f64> {
        let r: Vec<f64> = self
            .bins
            .iter()
            .filter(|b| b.slots > 0 && (lo..=hi).contains(&b.centre()))
            .map(|b| b.mean_rho)
            .collect();
        (!r.is_empty()).then(|| r.iter().sum::<f64>() / r.len() as f64)
    }

    /// One row per bin followed by an `all` row. Empty cells mean "no data".
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(REPORT_HEADER)?;
        let num = |x: f64| if x.is_finite() { x.to_string() } else { String::new() };
        let rows = self.bins.iter().enumerate().map(|(i, b)| (i.to_string(), b)).chain([("all".to_owned(), &self.overall)]);
        for (name, b) in rows {
            let band = 3.0 * b.sd_latency_us;
            w.write_record([
                name,
                num(b.lo),
                num(b.hi),
                b.slots.to_string(),
                num(b.mean_rho),
                num(b.sd_rho),
                num(b.mean_latency_us),
                num(b.sd_latency_us),
                num(b.mean_latency_us - band),
                num(b.mean_latency_us + band),
                num(b.latency.p()),
                num(b.loss.p()),
                b.gain_pct.map(num).unwrap_or_default(),
                self.label.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the rollouts of `eval` under `controller` and returns every retained slot.
pub fn rollout_samples(
    controller: &mut dyn Controller,
    env_cfg: &EnvConfig,
    eval: &EvalConfig,
    seed: u64,
) -> Result<Vec<SlotSample>> {
    eval.validate()?;
    let mut env = Env::new(env_cfg.clone(), 0)?;
    let mut out = Vec::with_capacity(eval.n_slots);
    for (ep_seed, len) in eval.rollouts(seed) {
        env.reset(ep_seed)?;
        let skip = (eval.burn_in * len as f64).ceil() as usize;
        for t in 0..len {
            let action = controller.act(env.state(), env_cfg);
            let o = env.step(&action);
            if t >= skip {
                out.push(SlotSample {
                    mean_prb: o.next_state.mean_prb(),
                    rho: o.next_state.total_rho(),
                    max_latency: o.max_latency,
                    latency_violation: !o.latency_ok,
                    lossy: o.total_lost > 0,
                });
            }
        }
    }
    Ok(out)
}

/// Greedy evaluation of any controller.
pub fn evaluate(
    label: &str,
    controller: &mut dyn Controller,
    env_cfg: &EnvConfig,
    eval: &EvalConfig,
    seed: u64,
) -> Result<EvaluationReport> {
    let samples = rollout_samples(controller, env_cfg, eval, seed)?;
    Ok(EvaluationReport::from_samples(label, &samples, eval.bins, env_cfg.params.prb_max))
}

/// Evaluates the policy stored in a checkpoint.
pub fn evaluate_checkpoint(
    ck: &Checkpoint,
    env_cfg: &EnvConfig,
    eval: &EvalConfig,
    seed: u64,
) -> Result<EvaluationReport> {
    let mut ctl = load_controller(ck, env_cfg)?;
    let label = ck.meta("agent")?.to_owned();
    evaluate(&label, ctl.as_mut(), env_cfg, eval, seed)
}

/// The static scheme that survives every cell at full load.
pub fn reference_controller(env_cfg: &EnvConfig) -> Result<FixedController> {
    env_cfg.validate()?;
    Ok(FixedController { target: worst_case_feasible_config(&env_cfg.params)? })
}

pub fn run_reference(env_cfg: &EnvConfig, eval: &EvalConfig, seed: u64) -> Result<EvaluationReport> {
    let mut ctl = reference_controller(env_cfg)?;
    evaluate("reference", &mut ctl, env_cfg, eval, seed)
}
