use std::io::Write;

use crate::error::Result;
use crate::fh_model::KnobSets;

use super::StepOutcome;

/// Per-slot, per-cell trajectory rows:
/// `t, cell, n_prb, q, b_w, r_w, rho, latency_us, lost_packets, r0, r1, r2`.
pub struct TraceWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record([
            "t", "cell", "n_prb", "q", "b_w", "r_w", "rho", "latency_us", "lost_packets", "r0", "r1", "r2",
        ])?;
        Ok(Self { inner })
    }

    pub fn record(&mut self, outcome: &StepOutcome, knobs: &KnobSets) -> Result<()> {
        let s = &outcome.next_state;
        for (cell, c) in s.cells.iter().enumerate() {
            let (q, b, r) = c.cfg.values(knobs)?;
            self.inner.write_record([
                s.t.to_string(),
                cell.to_string(),
                c.n_prb.to_string(),
                q.to_string(),
                b.to_string(),
                r.to_string(),
                c.rho.to_string(),
                (c.latency * 1e6).to_string(),
                c.lost_packets.to_string(),
                outcome.reward[0].to_string(),
                outcome.reward[1].to_string(),
                outcome.reward[2].to_string(),
            ])?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        self.inner.into_inner().map_err(|e| e.into_error().into())
    }
}
