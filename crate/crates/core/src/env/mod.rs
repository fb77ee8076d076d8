//! Constrained fronthaul-compression environment.
//!
//! Each slot the controller nudges every cell's compression knobs by -1, 0 or
//! +1 steps, the traffic process advances, the resulting payloads cross the
//! shared switch queue, and the environment reports a reward vector:
//! total utilization, plus one `(1 - gamma)` safety indicator per constraint
//! (latency within budget, no lost packets).

mod trace;
pub mod transport;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fh_model::{self, CellLoad, CompressionConfig, KnobSets, SystemParams};
use crate::traffic::{self, TrafficBounds, TrafficState};

pub use trace::TraceWriter;
pub use transport::{transport_slot, Backlog, FifoLink, SlotTransport};

/// Number of delta triples per cell.
pub const N_DELTAS: usize = 27;

/// Objectives in the reward vector: utilization, latency safety, loss safety.
pub const N_OBJECTIVES: usize = 3;

/// Per-cell state features emitted by [`features`].
pub const FEATURES_PER_CELL: usize = 7;

/// Incremental change of the three knobs of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Delta {
    pub dq: i8,
    pub db: i8,
    pub dr: i8,
}

impl Delta {
    pub const ZERO: Delta = Delta { dq: 0, db: 0, dr: 0 };

    /// Decodes an index in `0..27`; index 13 is the zero delta.
    pub fn from_index(i: usize) -> Self {
        assert!(i < N_DELTAS, "delta index {i} out of range");
        let i = i as i8;
        Delta { dq: i / 9 - 1, db: (i / 3) % 3 - 1, dr: i % 3 - 1 }
    }

    pub fn index(&self) -> usize {
        ((self.dq + 1) * 9 + (self.db + 1) * 3 + (self.dr + 1)) as usize
    }

    pub fn is_valid(&self) -> bool {
        [self.dq, self.db, self.dr].iter().all(|d| (-1..=1).contains(d))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EnvAction {
    /// One delta shared by every cell.
    Homogeneous(Delta),
    PerCell(Vec<Delta>),
}

impl EnvAction {
    pub fn delta(&self, cell: usize) -> Delta {
        match self {
            EnvAction::Homogeneous(d) => *d,
            EnvAction::PerCell(ds) => ds[cell],
        }
    }
}

fn step_index(idx: usize, delta: i8, len: usize) -> usize {
    (idx as isize + delta as isize).clamp(0, len as isize - 1) as usize
}

/// Moves each knob by its delta, saturating at the ends of its set.
pub fn apply_action(cfg: CompressionConfig, delta: Delta, knobs: &KnobSets) -> CompressionConfig {
    CompressionConfig {
        q_idx: step_index(cfg.q_idx, delta.dq, knobs.modulation.len()),
        b_idx: step_index(cfg.b_idx, delta.db, knobs.bitwidth.len()),
        r_idx: step_index(cfg.r_idx, delta.dr, knobs.granularity.len()),
    }
}

/// Environment settings on top of the system constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub params: SystemParams,
    /// Traffic interval; defaults to `(1, prb_max)`.
    pub traffic_bounds: Option<TrafficBounds>,
    /// Standard deviation of scheduled PRBs; scales the per-step transfer bound.
    pub prb_sigma: f64,
    pub gamma: f64,
    pub packet_bits: u64,
    /// Switch buffer; defaults to the bits the link carries in the latency budget.
    pub buffer_cap_bits: Option<u64>,
    pub symbols_per_slot: u32,
    pub episode_len: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            params: SystemParams::default(),
            traffic_bounds: None,
            prb_sigma: 1.0,
            gamma: 0.95,
            packet_bits: 12_000,
            buffer_cap_bits: None,
            symbols_per_slot: 14,
            episode_len: 512,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidParam { name: "gamma", reason: format!("{} not in (0, 1)", self.gamma) });
        }
        if self.packet_bits == 0 || self.symbols_per_slot == 0 || self.episode_len == 0 {
            return Err(Error::InvalidParam {
                name: "packet_bits/symbols_per_slot/episode_len",
                reason: "must be positive".into(),
            });
        }
        let b = self.bounds();
        if !(b.low >= 1.0 && b.high <= self.params.prb_max as f64 && b.low < b.high) {
            return Err(Error::InvalidParam {
                name: "traffic_bounds",
                reason: format!("({}, {}) not inside [1, {}]", b.low, b.high, self.params.prb_max),
            });
        }
        Ok(())
    }

    pub fn bounds(&self) -> TrafficBounds {
        self.traffic_bounds.unwrap_or_else(|| TrafficBounds::full(&self.params))
    }

    pub fn link(&self) -> FifoLink {
        let mut link = FifoLink::from_params(&self.params, self.packet_bits, self.symbols_per_slot);
        if let Some(cap) = self.buffer_cap_bits {
            link.buffer_cap_bits = cap;
        }
        link
    }

    pub fn feature_dim(&self) -> usize {
        FEATURES_PER_CELL * self.params.k_cells
    }
}

/// Observable and hidden state of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub rho: f64,
    /// Seconds.
    pub latency: f64,
    pub lost_packets: u64,
    pub cfg: CompressionConfig,
    pub n_prb: u32,
}

#[derive(Debug, Clone)]
pub struct EnvState {
    pub cells: Vec<CellState>,
    pub backlog: Backlog,
    pub traffic: TrafficState,
    pub t: u64,
}

impl EnvState {
    pub fn total_rho(&self) -> f64 {
        self.cells.iter().map(|c| c.rho).sum()
    }

    pub fn max_latency(&self) -> f64 {
        self.cells.iter().map(|c| c.latency).fold(0.0, f64::max)
    }

    pub fn total_lost(&self) -> u64 {
        self.cells.iter().map(|c| c.lost_packets).sum()
    }

    pub fn mean_prb(&self) -> f64 {
        self.cells.iter().map(|c| c.n_prb as f64).sum::<f64>() / self.cells.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub next_state: EnvState,
    /// `[utilization, latency-safe, loss-free]`.
    pub reward: [f64; N_OBJECTIVES],
    pub max_latency: f64,
    pub total_lost: u64,
    /// Whether the latency budget was met, evaluated in exact arithmetic.
    pub latency_ok: bool,
}

/// Fixed-length feature vector: per cell `rho`, latency over budget, a
/// lost-packet flag, the three knob indices scaled to `[0, 1]` and the load
/// fraction implied by `rho` and the config. The last one is a function of the
/// others, but a small net does not learn the division on its own.
pub fn features(state: &EnvState, params: &SystemParams) -> Vec<f64> {
    let k = &params.knobs;
    let scale = |i: usize, len: usize| if len > 1 { i as f64 / (len - 1) as f64 } else { 0.0 };
    let l_max = params.l_max();
    state
        .cells
        .iter()
        .flat_map(|c| {
            let full = fh_model::cell_utilization(params, CellLoad { n_prb: params.prb_max }, c.cfg)
                .unwrap_or(0.0);
            let load = if full > 0.0 { c.rho / full } else { 0.0 };
            [
                c.rho,
                c.latency / l_max,
                (c.lost_packets as f64).min(1.0),
                scale(c.cfg.q_idx, k.modulation.len()),
                scale(c.cfg.b_idx, k.bitwidth.len()),
                scale(c.cfg.r_idx, k.granularity.len()),
                load,
            ]
        })
        .collect()
}

/// Anything that picks an action from the current state.
pub trait Controller {
    fn act(&mut self, state: &EnvState, cfg: &EnvConfig) -> EnvAction;
}

/// The simulator. Strictly sequential; run independent instances for parallelism.
#[derive(Debug, Clone)]
pub struct Env {
    cfg: EnvConfig,
    link: FifoLink,
    state: EnvState,
}

impl Env {
    /// Builds the environment and resets it with `seed`.
    pub fn new(cfg: EnvConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let link = cfg.link();
        let state = Self::initial_state(&cfg, seed)?;
        Ok(Self { cfg, link, state })
    }

    fn initial_state(cfg: &EnvConfig, seed: u64) -> Result<EnvState> {
        let p = &cfg.params;
        let traffic = traffic::init_traffic(p, cfg.bounds(), cfg.prb_sigma, seed)?;
        let start = CompressionConfig::max_compression(&p.knobs);
        let cells = traffic
            .scheduled_prbs(p)
            .into_iter()
            .map(|load| {
                Ok(CellState {
                    rho: fh_model::cell_utilization(p, load, start)?,
                    latency: 0.0,
                    lost_packets: 0,
                    cfg: start,
                    n_prb: load.n_prb,
                })
            })
            .collect::<Result<_>>()?;
        Ok(EnvState { cells, backlog: Backlog(0), traffic, t: 0 })
    }

    /// Fresh traffic, every cell at maximum compression, empty queue.
    pub fn reset(&mut self, seed: u64) -> Result<&EnvState> {
        self.state = Self::initial_state(&self.cfg, seed)?;
        Ok(&self.state)
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn features(&self) -> Vec<f64> {
        features(&self.state, &self.cfg.params)
    }

    pub fn step(&mut self, action: &EnvAction) -> StepOutcome {
        let p = &self.cfg.params;
        let k = p.k_cells;
        if let EnvAction::PerCell(ds) = action {
            assert_eq!(ds.len(), k, "per-cell action length");
        }
        for (cell, c) in self.state.cells.iter_mut().enumerate() {
            c.cfg = apply_action(c.cfg, action.delta(cell), &p.knobs);
        }
        self.state.traffic.propagate();
        let loads = self.state.traffic.scheduled_prbs(p);
        let bursts: Vec<u64> = loads
            .iter()
            .zip(&self.state.cells)
            .map(|(&load, c)| fh_model::slot_bits(p, load, c.cfg).expect("configs stay in bounds"))
            .collect();
        let out = transport_slot(&self.link, &bursts, self.state.backlog);

        let capacity = p.slot_capacity_bits() as f64;
        for (cell, c) in self.state.cells.iter_mut().enumerate() {
            c.n_prb = loads[cell].n_prb;
            c.rho = bursts[cell] as f64 / capacity;
            c.latency = out.latency[cell];
            c.lost_packets = out.lost_packets[cell];
        }
        self.state.backlog = out.backlog;
        self.state.t += 1;

        let safe = 1.0 - self.cfg.gamma;
        let total_lost = out.total_lost();
        let reward = [
            self.state.total_rho(),
            if out.latency_ok { safe } else { 0.0 },
            if total_lost == 0 { safe } else { 0.0 },
        ];
        StepOutcome {
            next_state: self.state.clone(),
            reward,
            max_latency: out.max_latency(),
            total_lost,
            latency_ok: out.latency_ok,
        }
    }
}

/// Per-cell loads of a state, as the fh-model sees them.
pub fn loads(state: &EnvState) -> Vec<CellLoad> {
    state.cells.iter().map(|c| CellLoad { n_prb: c.n_prb }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(seed: u64) -> Env {
        Env::new(EnvConfig::default(), seed).unwrap()
    }

    #[test]
    fn delta_index_roundtrip() {
        for i in 0..N_DELTAS {
            let d = Delta::from_index(i);
            assert!(d.is_valid());
            assert_eq!(d.index(), i);
        }
        assert_eq!(Delta::from_index(13), Delta::ZERO);
    }

    #[test]
    fn apply_action_saturates_and_moves() {
        let k = KnobSets::default();
        let top = CompressionConfig { q_idx: 1, b_idx: 0, r_idx: 0 };
        assert_eq!(apply_action(top, Delta { dq: 1, db: 0, dr: 0 }, &k), top);
        assert_eq!(apply_action(top, Delta::ZERO, &k), top);
        let c = CompressionConfig { q_idx: 0, b_idx: 3, r_idx: 1 };
        let moved = apply_action(c, Delta { dq: 0, db: -1, dr: 0 }, &k);
        assert_eq!(moved.b_idx, 2);
        assert_eq!(k.bitwidth[c.b_idx], 19);
        assert_eq!(k.bitwidth[moved.b_idx], 18);
        let bottom = CompressionConfig { q_idx: 0, b_idx: 0, r_idx: 0 };
        assert_eq!(apply_action(bottom, Delta { dq: -1, db: -1, dr: -1 }, &k), bottom);
    }

    #[test]
    fn reset_conventions() {
        let e = env(3);
        let s = e.state();
        let k = &e.config().params.knobs;
        for c in &s.cells {
            assert_eq!(c.cfg.values(k).unwrap(), (6, 16, 4));
            assert_eq!(c.latency, 0.0);
            assert_eq!(c.lost_packets, 0);
        }
        let again = env(3);
        assert_eq!(again.state().cells, s.cells);
        assert_eq!(again.features(), e.features());
        assert_eq!(e.features().len(), 21);
    }

    #[test]
    fn light_load_is_safe_under_any_config() {
        let cfg = EnvConfig { traffic_bounds: Some(TrafficBounds { low: 1.0, high: 1.4 }), ..Default::default() };
        let mut e = Env::new(cfg, 1).unwrap();
        for i in 0..60 {
            let out = e.step(&EnvAction::Homogeneous(Delta::from_index(i % 27)));
            assert!(out.next_state.cells.iter().all(|c| c.n_prb == 1));
            assert_eq!(out.reward[1], 1.0 - 0.95);
            assert_eq!(out.reward[2], out.reward[1]);
        }
    }

    #[test]
    fn indicator_rewards_are_one_minus_gamma() {
        let mut e = env(4);
        let out = e.step(&EnvAction::Homogeneous(Delta::ZERO));
        assert_eq!(out.reward[1], 1.0 - 0.95);
        assert_eq!(out.reward[2], 1.0 - 0.95);
    }

    #[test]
    fn full_load_at_max_rate_breaks_constraints() {
        let cfg = EnvConfig {
            traffic_bounds: Some(TrafficBounds { low: 272.6, high: 273.0 }),
            ..Default::default()
        };
        let mut e = Env::new(cfg, 2).unwrap();
        let up = EnvAction::Homogeneous(Delta { dq: 1, db: 1, dr: -1 });
        let mut lost = 0;
        let mut max_lat: f64 = 0.0;
        for _ in 0..40 {
            let out = e.step(&up);
            lost += out.total_lost;
            max_lat = max_lat.max(out.max_latency);
            if out.next_state.cells[0].cfg == CompressionConfig::min_compression(&e.config().params.knobs) {
                assert!((out.reward[0] - 2.1637).abs() < 1e-3, "{}", out.reward[0]);
            }
        }
        assert!(lost > 0);
        assert!(max_lat > 0.9 * 260e-6);
        assert!(e.state().backlog.0 > 0);
    }

    #[test]
    fn same_seed_same_actions_same_trajectory() {
        let run = || {
            let mut e = env(77);
            (0..300)
                .map(|t| {
                    let out = e.step(&EnvAction::Homogeneous(Delta::from_index((t * 7) % 27)));
                    (out.reward, out.max_latency, out.total_lost)
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn reward_head_zero_matches_fh_model() {
        let mut e = env(12);
        for t in 0..200 {
            let out = e.step(&EnvAction::Homogeneous(Delta::from_index((t * 5) % 27)));
            let p = &e.config().params;
            let expected: f64 = out
                .next_state
                .cells
                .iter()
                .map(|c| {
                    let load = CellLoad { n_prb: c.n_prb };
                    fh_model::utilization(fh_model::fh_rate(p, load, c.cfg).unwrap(), p)
                })
                .sum();
            assert!((out.reward[0] - expected).abs() < 1e-12);
        }
    }

    #[test]
    #[should_panic]
    fn per_cell_action_length_checked() {
        let mut e = env(1);
        e.step(&EnvAction::PerCell(vec![Delta::ZERO]));
    }
}
