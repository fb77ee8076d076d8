//! Fronthaul bit accounting.
//!
//! Per slot and per cell the fronthaul carries the modulated user data and the
//! quantized precoding weights. Both payloads are integer bit counts; rates
//! divide by the slot duration exactly once, and utilization is rate over the
//! link capacity. Durations are kept in integer nanoseconds so the golden
//! values stay exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Modulation orders defined for NR (bits per symbol).
pub const NR_MODULATION_ORDERS: [u32; 4] = [2, 4, 6, 8];

/// Ordered sets of values each compression knob may take.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KnobSets {
    /// Modulation orders, strictly increasing.
    pub modulation: Vec<u32>,
    /// Precoding-weight bitwidths, strictly increasing.
    pub bitwidth: Vec<u32>,
    /// Precoder granularities in PRBs, strictly increasing.
    pub granularity: Vec<u32>,
}

impl Default for KnobSets {
    fn default() -> Self {
        Self {
            modulation: vec![6, 8],
            bitwidth: (16..=22).collect(),
            granularity: vec![1, 2, 4],
        }
    }
}

impl KnobSets {
    pub fn validate(&self) -> Result<()> {
        fn increasing(name: &'static str, v: &[u32]) -> Result<()> {
            if v.is_empty() {
                return Err(Error::InvalidParam { name, reason: "empty set".into() });
            }
            if v.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidParam {
                    name,
                    reason: format!("{v:?} is not strictly increasing"),
                });
            }
            Ok(())
        }
        increasing("knobs.modulation", &self.modulation)?;
        increasing("knobs.bitwidth", &self.bitwidth)?;
        increasing("knobs.granularity", &self.granularity)?;
        if let Some(&q) = self.modulation.iter().find(|q| !NR_MODULATION_ORDERS.contains(q)) {
            return Err(Error::InvalidModulation(q));
        }
        if self.bitwidth[0] == 0 {
            return Err(Error::ZeroKnob { what: "weight bitwidth", value: 0 });
        }
        if self.granularity[0] == 0 {
            return Err(Error::ZeroKnob { what: "precoder granularity", value: 0 });
        }
        Ok(())
    }

    /// Number of distinct configurations.
    pub fn len(&self) -> usize {
        self.modulation.len() * self.bitwidth.len() * self.granularity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every configuration, in index order.
    pub fn all_configs(&self) -> impl Iterator<Item = CompressionConfig> + '_ {
        (0..self.modulation.len()).flat_map(move |q_idx| {
            (0..self.bitwidth.len()).flat_map(move |b_idx| {
                (0..self.granularity.len()).map(move |r_idx| CompressionConfig { q_idx, b_idx, r_idx })
            })
        })
    }
}

/// Radio and transport constants of the scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemParams {
    /// Resource elements per PRB and slot (12 subcarriers x 14 symbols).
    pub n_re: u64,
    /// Spatial layers.
    pub n_layers: u64,
    /// Transmit antennas.
    pub n_ant: u64,
    pub t_slot_ns: u64,
    /// Fronthaul capacity in bit/s.
    pub c_fh_bps: u64,
    pub k_cells: usize,
    /// PRBs available in the carrier.
    pub prb_max: u32,
    /// Subcarrier spacing index.
    pub scs_index: u32,
    pub bandwidth_hz: f64,
    /// Latency budget.
    pub l_max_ns: u64,
    /// Admissible violation probability per constraint.
    pub xi: f64,
    pub knobs: KnobSets,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            n_re: 12 * 14,
            n_layers: 12,
            n_ant: 64,
            t_slot_ns: 500_000,
            c_fh_bps: 25_000_000_000,
            k_cells: 3,
            prb_max: 273,
            scs_index: 1,
            bandwidth_hz: 100e6,
            l_max_ns: 260_000,
            xi: 0.025,
            knobs: KnobSets::default(),
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let positive: [(&'static str, u64); 7] = [
            ("n_re", self.n_re),
            ("n_layers", self.n_layers),
            ("n_ant", self.n_ant),
            ("t_slot_ns", self.t_slot_ns),
            ("c_fh_bps", self.c_fh_bps),
            ("prb_max", self.prb_max as u64),
            ("l_max_ns", self.l_max_ns),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidParam { name, reason: "must be positive".into() });
            }
        }
        if self.k_cells == 0 {
            return Err(Error::InvalidParam { name: "k_cells", reason: "must be positive".into() });
        }
        if !(self.bandwidth_hz > 0.0) {
            return Err(Error::InvalidParam { name: "bandwidth_hz", reason: "must be positive".into() });
        }
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return Err(Error::InvalidParam { name: "xi", reason: format!("{} not in (0, 1)", self.xi) });
        }
        self.knobs.validate()
    }

    pub fn t_slot(&self) -> f64 {
        self.t_slot_ns as f64 * 1e-9
    }

    pub fn l_max(&self) -> f64 {
        self.l_max_ns as f64 * 1e-9
    }

    pub fn c_fh(&self) -> f64 {
        self.c_fh_bps as f64
    }

    /// Bits the link can carry in `ns` nanoseconds, rounded down.
    pub fn bits_in(&self, ns: u64) -> u64 {
        (self.c_fh_bps as u128 * ns as u128 / 1_000_000_000) as u64
    }

    /// Bits the link drains in one slot.
    pub fn slot_capacity_bits(&self) -> u64 {
        self.bits_in(self.t_slot_ns)
    }
}

/// Per-cell compression knobs, as indices into [`KnobSets`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CompressionConfig {
    pub q_idx: usize,
    pub b_idx: usize,
    pub r_idx: usize,
}

impl CompressionConfig {
    /// Lowest modulation, narrowest weights, coarsest granularity.
    pub fn max_compression(knobs: &KnobSets) -> Self {
        Self { q_idx: 0, b_idx: 0, r_idx: knobs.granularity.len() - 1 }
    }

    /// The uncompressed end of every knob.
    pub fn min_compression(knobs: &KnobSets) -> Self {
        Self { q_idx: knobs.modulation.len() - 1, b_idx: knobs.bitwidth.len() - 1, r_idx: 0 }
    }

    pub fn is_valid(&self, knobs: &KnobSets) -> bool {
        self.q_idx < knobs.modulation.len()
            && self.b_idx < knobs.bitwidth.len()
            && self.r_idx < knobs.granularity.len()
    }

    /// `(q, b_w, r_w)` knob values.
    pub fn values(&self, knobs: &KnobSets) -> Result<(u32, u32, u32)> {
        if !self.is_valid(knobs) {
            return Err(Error::InvalidParam {
                name: "compression config",
                reason: format!("{self:?} out of bounds for {knobs:?}"),
            });
        }
        Ok((
            knobs.modulation[self.q_idx],
            knobs.bitwidth[self.b_idx],
            knobs.granularity[self.r_idx],
        ))
    }
}

/// Scheduled PRBs of one cell in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellLoad {
    pub n_prb: u32,
}

impl CellLoad {
    pub fn new(n_prb: u32, params: &SystemParams) -> Result<Self> {
        if n_prb == 0 || n_prb > params.prb_max {
            return Err(Error::InvalidParam {
                name: "n_prb",
                reason: format!("{n_prb} outside 1..={}", params.prb_max),
            });
        }
        Ok(Self { n_prb })
    }
}

/// User-data bits for one cell and slot: `N_RE * layers * N_PRB * q`.
pub fn data_payload_bits(params: &SystemParams, load: CellLoad, q: u32) -> Result<u64> {
    if !NR_MODULATION_ORDERS.contains(&q) {
        return Err(Error::InvalidModulation(q));
    }
    Ok(params.n_re * params.n_layers * load.n_prb as u64 * q as u64)
}

/// Precoding-weight bits for one cell and slot:
/// `ceil(N_PRB / r_w) * layers * N_ant * b_w`.
pub fn weight_payload_bits(params: &SystemParams, load: CellLoad, r_w: u32, b_w: u32) -> Result<u64> {
    if r_w == 0 {
        return Err(Error::ZeroKnob { what: "precoder granularity", value: r_w });
    }
    if b_w == 0 {
        return Err(Error::ZeroKnob { what: "weight bitwidth", value: b_w });
    }
    let sub_bands = (load.n_prb as u64).div_ceil(r_w as u64);
    Ok(sub_bands * params.n_layers * params.n_ant * b_w as u64)
}

/// Total fronthaul bits one cell emits in one slot.
pub fn slot_bits(params: &SystemParams, load: CellLoad, cfg: CompressionConfig) -> Result<u64> {
    let (q, b_w, r_w) = cfg.values(&params.knobs)?;
    Ok(data_payload_bits(params, load, q)? + weight_payload_bits(params, load, r_w, b_w)?)
}

/// Fronthaul rate in bit/s for one cell.
pub fn fh_rate(params: &SystemParams, load: CellLoad, cfg: CompressionConfig) -> Result<f64> {
    let bits = slot_bits(params, load, cfg)?;
    Ok(bits as f64 * 1e9 / params.t_slot_ns as f64)
}

/// Fraction of the fronthaul capacity a rate occupies.
pub fn utilization(rate: f64, params: &SystemParams) -> f64 {
    rate / params.c_fh()
}

/// Utilization of one cell, computed from its slot bits with a single division.
pub fn cell_utilization(params: &SystemParams, load: CellLoad, cfg: CompressionConfig) -> Result<f64> {
    let bits = slot_bits(params, load, cfg)?;
    Ok(bits as f64 / params.slot_capacity_bits() as f64)
}

/// The highest-rate config that keeps all cells at full load within the
/// fronthaul capacity.
pub fn worst_case_feasible_config(params: &SystemParams) -> Result<CompressionConfig> {
    let full = CellLoad { n_prb: params.prb_max };
    let budget = params.slot_capacity_bits() as u128;
    let mut best: Option<(u64, CompressionConfig)> = None;
    for cfg in params.knobs.all_configs() {
        let bits = slot_bits(params, full, cfg)?;
        if bits as u128 * params.k_cells as u128 <= budget && best.is_none_or(|(b, _)| bits > b) {
            best = Some((bits, cfg));
        }
    }
    best.map(|(_, cfg)| cfg).ok_or(Error::NoFeasibleReference {
        cells: params.k_cells,
        prb: params.prb_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn load(n: u32) -> CellLoad {
        CellLoad { n_prb: n }
    }

    fn cfg_for(params: &SystemParams, q: u32, b: u32, r: u32) -> CompressionConfig {
        let k = &params.knobs;
        CompressionConfig {
            q_idx: k.modulation.iter().position(|&v| v == q).unwrap(),
            b_idx: k.bitwidth.iter().position(|&v| v == b).unwrap(),
            r_idx: k.granularity.iter().position(|&v| v == r).unwrap(),
        }
    }

    #[test]
    fn data_payload_golden() {
        let p = SystemParams::default();
        assert_eq!(data_payload_bits(&p, load(273), 8).unwrap(), 4_402_944);
        assert_eq!(data_payload_bits(&p, load(1), 2).unwrap(), 4_032);
        let unit = SystemParams { n_re: 1, n_layers: 1, ..SystemParams::default() };
        assert_eq!(data_payload_bits(&unit, load(1), 2).unwrap(), 2);
    }

    #[test]
    fn invalid_modulation_is_named() {
        let p = SystemParams::default();
        let err = data_payload_bits(&p, load(1), 5).unwrap_err();
        assert!(matches!(err, Error::InvalidModulation(5)));
        assert!(err.to_string().contains('5'));
    }

    #[test]
    fn weight_payload_golden() {
        let p = SystemParams::default();
        assert_eq!(weight_payload_bits(&p, load(273), 4, 16).unwrap(), 847_872);
        assert_eq!(weight_payload_bits(&p, load(273), 1, 22).unwrap(), 4_612_608);
        let unit = SystemParams { n_layers: 1, n_ant: 1, ..SystemParams::default() };
        assert_eq!(weight_payload_bits(&unit, load(4), 4, 1).unwrap(), 1);
        assert!(weight_payload_bits(&p, load(4), 0, 16).is_err());
        assert!(weight_payload_bits(&p, load(4), 4, 0).is_err());
    }

    #[test]
    fn rate_golden() {
        let p = SystemParams::default();
        let max = cfg_for(&p, 8, 22, 1);
        assert_eq!(fh_rate(&p, load(273), max).unwrap(), 18_031_104_000.0);
        let reference = cfg_for(&p, 6, 16, 4);
        let r = fh_rate(&p, load(273), reference).unwrap();
        assert_eq!(r, 8_300_160_000.0);
        assert!(3.0 * r < p.c_fh());
        assert_eq!(fh_rate(&p, load(100), reference).unwrap(), 3_033_600_000.0);
    }

    #[test]
    fn utilization_values() {
        let p = SystemParams::default();
        assert_eq!(utilization(3_033_600_000.0, &p), 0.121344);
        assert_eq!(utilization(0.0, &p), 0.0);
        let max = cfg_for(&p, 8, 22, 1);
        let total: f64 = (0..3).map(|_| utilization(fh_rate(&p, load(273), max).unwrap(), &p)).sum();
        assert!((total - 2.1637).abs() < 1e-3, "{total}");
    }

    #[test]
    fn reference_is_unique_worst_case_config() {
        let p = SystemParams::default();
        let cfg = worst_case_feasible_config(&p).unwrap();
        assert_eq!(cfg.values(&p.knobs).unwrap(), (6, 16, 4));
        assert_eq!(cfg, CompressionConfig::max_compression(&p.knobs));
        let feasible = p
            .knobs
            .all_configs()
            .filter(|&c| 3 * slot_bits(&p, load(273), c).unwrap() <= p.slot_capacity_bits())
            .count();
        assert_eq!(feasible, 1);

        let tight = SystemParams { c_fh_bps: 10_000_000_000, ..SystemParams::default() };
        assert!(matches!(
            worst_case_feasible_config(&tight),
            Err(Error::NoFeasibleReference { .. })
        ));
    }

    #[test]
    fn cell_load_bounds() {
        let p = SystemParams::default();
        assert!(CellLoad::new(0, &p).is_err());
        assert!(CellLoad::new(274, &p).is_err());
        assert!(CellLoad::new(273, &p).is_ok());
    }

    #[test]
    fn default_params_validate() {
        let p = SystemParams::default();
        p.validate().unwrap();
        assert_eq!(p.n_re, 168);
        assert_eq!(p.slot_capacity_bits(), 12_500_000);
        let bad = SystemParams { xi: 1.0, ..SystemParams::default() };
        assert!(bad.validate().is_err());
        let mut bad = SystemParams::default();
        bad.knobs.bitwidth = vec![16, 16];
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn rate_is_monotone_in_every_knob(
            n in 1u32..=273,
            q in 0usize..2, b in 0usize..7, r in 0usize..3,
        ) {
            let p = SystemParams::default();
            let base = CompressionConfig { q_idx: q, b_idx: b, r_idx: r };
            let rate = |n: u32, c: CompressionConfig| fh_rate(&p, load(n), c).unwrap();
            let here = rate(n, base);
            if q + 1 < 2 {
                let up = CompressionConfig { q_idx: q + 1, ..base };
                prop_assert!(rate(n, up) >= here);
            }
            if b + 1 < 7 {
                let up = CompressionConfig { b_idx: b + 1, ..base };
                prop_assert!(rate(n, up) >= here);
            }
            if r + 1 < 3 {
                let up = CompressionConfig { r_idx: r + 1, ..base };
                prop_assert!(rate(n, up) <= here);
            }
            if n < 273 {
                prop_assert!(rate(n + 1, base) >= here);
            }
        }
    }
}
