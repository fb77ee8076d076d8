//! Shared fronthaul bottleneck: one FIFO switch queue drained at the link
//! capacity.
//!
//! Each cell's slot payload is split evenly over the OFDM symbols of the slot
//! and released at symbol boundaries. Within a release, cells are interleaved
//! round-robin at packet granularity. A packet that would push the queue
//! beyond the buffer is dropped; otherwise its latency is the queue content
//! ahead of it plus its own size, divided by the capacity.
//!
//! Queue content is tracked in sub-bits (1 bit = `symbols` sub-bits) so the
//! per-symbol drain is an exact integer.

use serde::{Deserialize, Serialize};

use crate::fh_model::SystemParams;

/// Transport parameters of the shared link.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FifoLink {
    pub c_fh_bps: u64,
    pub slot_ns: u64,
    pub l_max_ns: u64,
    pub packet_bits: u64,
    pub buffer_cap_bits: u64,
    /// Release epochs per slot; 1 releases the whole slot payload at once.
    pub symbols: u32,
}

impl FifoLink {
    /// Buffer sized so a full queue takes exactly the latency budget to drain.
    pub fn from_params(params: &SystemParams, packet_bits: u64, symbols: u32) -> Self {
        Self {
            c_fh_bps: params.c_fh_bps,
            slot_ns: params.t_slot_ns,
            l_max_ns: params.l_max_ns,
            packet_bits,
            buffer_cap_bits: params.bits_in(params.l_max_ns),
            symbols,
        }
    }

    fn drain_per_symbol(&self) -> u64 {
        (self.c_fh_bps as u128 * self.slot_ns as u128 / 1_000_000_000) as u64
    }

    fn cap(&self) -> u64 {
        self.buffer_cap_bits * self.symbols as u64
    }

    /// Whether `ahead` sub-bits in front of (and including) a packet meet the budget.
    fn within_budget(&self, ahead: u64) -> bool {
        ahead as u128 * 1_000_000_000 <= self.l_max_ns as u128 * self.symbols as u128 * self.c_fh_bps as u128
    }

    fn seconds(&self, ahead: u64) -> f64 {
        ahead as f64 / (self.symbols as f64 * self.c_fh_bps as f64)
    }
}

/// Queue content carried between slots, in sub-bits of the link it belongs to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Backlog(pub u64);

impl Backlog {
    pub fn bits(&self, link: &FifoLink) -> f64 {
        self.0 as f64 / link.symbols as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotTransport {
    /// Per cell, worst latency over its delivered packets (seconds); 0 when
    /// nothing was delivered.
    pub latency: Vec<f64>,
    pub lost_packets: Vec<u64>,
    pub accepted_bits: u64,
    pub backlog: Backlog,
    /// Every delivered packet met the latency budget.
    pub latency_ok: bool,
}

impl SlotTransport {
    pub fn max_latency(&self) -> f64 {
        self.latency.iter().copied().fold(0.0, f64::max)
    }

    pub fn total_lost(&self) -> u64 {
        self.lost_packets.iter().sum()
    }
}

/// Pushes one slot of per-cell payloads through the queue.
pub fn transport_slot(link: &FifoLink, bursts: &[u64], backlog: Backlog) -> SlotTransport {
    let k = bursts.len();
    let n = link.symbols.max(1) as u64;
    let cap = link.cap();
    let drain = link.drain_per_symbol();
    let mut queue = backlog.0;
    let mut worst = vec![0u64; k];
    let mut lost = vec![0u64; k];
    let mut accepted = 0u64;
    let mut remaining = vec![0u64; k];

    for s in 0..n {
        for (rem, &burst) in remaining.iter_mut().zip(bursts) {
            *rem = burst / n + u64::from(s < burst % n);
        }
        let mut active = remaining.iter().any(|&r| r > 0);
        while active {
            active = false;
            for cell in 0..k {
                if remaining[cell] == 0 {
                    continue;
                }
                let size = remaining[cell].min(link.packet_bits);
                remaining[cell] -= size;
                active |= remaining[cell] > 0;
                let scaled = size * n;
                if queue + scaled > cap {
                    lost[cell] += 1;
                } else {
                    queue += scaled;
                    accepted += size;
                    worst[cell] = worst[cell].max(queue);
                }
            }
        }
        queue = queue.saturating_sub(drain);
    }

    SlotTransport {
        latency: worst.iter().map(|&a| link.seconds(a)).collect(),
        lost_packets: lost,
        accepted_bits: accepted,
        backlog: Backlog(queue),
        latency_ok: worst.iter().all(|&a| link.within_budget(a)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link(symbols: u32, cap: u64) -> FifoLink {
        FifoLink {
            c_fh_bps: 25_000_000_000,
            slot_ns: 500_000,
            l_max_ns: 260_000,
            packet_bits: 12_000,
            buffer_cap_bits: cap,
            symbols,
        }
    }

    #[test]
    fn single_burst_closed_form() {
        let l = link(1, u64::MAX / 4);
        let burst = 12_500_000 / 2;
        let out = transport_slot(&l, &[burst], Backlog(0));
        assert_eq!(out.total_lost(), 0);
        // the last packet waits for the whole burst: burst / C = T_slot / 2
        assert!((out.latency[0] - 250e-6).abs() < 1e-15);
        assert_eq!(out.backlog, Backlog(0));

        // mean packet latency of the same burst is close to T_slot / 4
        let p = l.packet_bits as f64;
        let n = (burst as f64 / p).ceil() as usize;
        let mean: f64 = (1..=n).map(|i| (i as f64 * p).min(burst as f64) / 25e9).sum::<f64>() / n as f64;
        assert!((mean - 125e-6).abs() < 1e-6, "{mean}");
    }

    #[test]
    fn empty_system() {
        let l = link(14, 6_500_000);
        let out = transport_slot(&l, &[0, 0, 0], Backlog(0));
        assert_eq!(out.latency, vec![0.0; 3]);
        assert_eq!(out.lost_packets, vec![0; 3]);
        let carried = Backlog(20_000_000 * 14);
        let out = transport_slot(&l, &[0, 0, 0], carried);
        assert_eq!(out.backlog.bits(&l), 20_000_000.0 - 12_500_000.0);
        let out = transport_slot(&l, &[0, 0, 0], out.backlog);
        assert_eq!(out.backlog, Backlog(0));
    }

    /// Independent replay of the burst-mode packet sequence.
    fn overflow_oracle(bursts: &[u64], packet: u64, cap: u64) -> (u64, Vec<u64>) {
        let mut seq = Vec::new();
        let mut rem = bursts.to_vec();
        while rem.iter().any(|&r| r > 0) {
            for (cell, r) in rem.iter_mut().enumerate() {
                if *r > 0 {
                    let size = (*r).min(packet);
                    *r -= size;
                    seq.push((cell, size));
                }
            }
        }
        let mut used = 0;
        let mut lost = vec![0; bursts.len()];
        for (cell, size) in seq {
            if used + size <= cap {
                used += size;
            } else {
                lost[cell] += 1;
            }
        }
        (used, lost)
    }

    #[test]
    fn overflow_matches_counting_oracle() {
        let cap = 6_500_000;
        let l = link(1, cap);
        let bursts = [4_000_000, 5_000_000, 4_000_000];
        assert_eq!(bursts.iter().sum::<u64>(), 2 * cap);
        let out = transport_slot(&l, &bursts, Backlog(0));
        let (accepted, lost) = overflow_oracle(&bursts, l.packet_bits, cap);
        assert!(out.accepted_bits <= cap);
        assert_eq!(out.accepted_bits, accepted);
        assert_eq!(out.lost_packets, lost);
        assert!(lost.iter().all(|&x| x > 0));
    }

    #[test]
    fn full_buffer_is_exactly_the_budget() {
        let l = link(1, 6_500_000);
        let out = transport_slot(&l, &[6_500_000], Backlog(0));
        assert_eq!(out.total_lost(), 0);
        assert!(out.latency_ok);
        assert!(out.max_latency() <= 260e-6);
        let out = transport_slot(&l, &[6_500_001], Backlog(0));
        assert_eq!(out.total_lost(), 1);
    }

    #[test]
    fn latency_covers_own_transmission_in_burst_mode() {
        let l = link(1, u64::MAX / 4);
        let bursts = [3_000_000, 1_000_000, 2_000_000];
        let out = transport_slot(&l, &bursts, Backlog(0));
        for (lat, &b) in out.latency.iter().zip(&bursts) {
            assert!(*lat >= b as f64 / 25e9);
        }
    }

    #[test]
    fn paced_release_keeps_reference_load_inside_budget() {
        // three cells at the worst-case reference payload: 24.9 of 25 Gb/s
        let l = link(14, 6_500_000);
        let bursts = [4_150_080; 3];
        let mut backlog = Backlog(0);
        for _ in 0..100 {
            let out = transport_slot(&l, &bursts, backlog);
            assert!(out.latency_ok);
            assert_eq!(out.total_lost(), 0);
            assert!(out.max_latency() < 40e-6);
            backlog = out.backlog;
        }
        assert_eq!(backlog, Backlog(0));
    }

    #[test]
    fn sustained_overload_builds_backlog_then_drops() {
        let l = link(14, 6_500_000);
        let bursts = [9_015_552; 3];
        let mut backlog = Backlog(0);
        let mut first_loss = None;
        for t in 0..20 {
            let out = transport_slot(&l, &bursts, backlog);
            if out.total_lost() > 0 && first_loss.is_none() {
                first_loss = Some(t);
            }
            backlog = out.backlog;
        }
        assert!(matches!(first_loss, Some(t) if t <= 2));
        assert!(backlog.bits(&l) > 0.0);
    }
}
