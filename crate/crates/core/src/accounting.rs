//! Retained-scalar bookkeeping and the per-run cost report.
//!
//! Memory is measured in retained `f64` scalars: checkpointed states plus
//! every value held by a live tape. Working vectors of size `O(d)` that all
//! engines need (current adjoint, accumulators) are not counted.

use std::cell::Cell;
use std::rc::Rc;

use serde::Serialize;

#[derive(Debug, Default)]
struct MeterState {
    live: Cell<usize>,
    peak: Cell<usize>,
}

/// Shared counter of live retained scalars with a high-water mark.
///
/// Cloning yields another handle to the same counter. Handles are
/// single-threaded; every gradient call owns its own meter.
#[derive(Debug, Clone, Default)]
pub struct MemoryMeter(Rc<MeterState>);

impl MemoryMeter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn alloc(&self, scalars: usize) {
        let live = self.0.live.get() + scalars;
        self.0.live.set(live);
        if live > self.0.peak.get() {
            self.0.peak.set(live);
        }
    }

    pub fn free(&self, scalars: usize) {
        let live = self.0.live.get();
        debug_assert!(scalars <= live, "freeing more scalars than are live");
        self.0.live.set(live.saturating_sub(scalars));
    }

    pub fn live(&self) -> usize {
        self.0.live.get()
    }

    pub fn peak(&self) -> usize {
        self.0.peak.get()
    }
}

/// Cost and memory figures for one gradient computation.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AccountingReport {
    pub engine: String,
    /// High-water mark of checkpoints plus live tape values.
    pub peak_retained_scalars: usize,
    pub nfe_forward: usize,
    /// Evaluations after the forward pass: recomputation, re-recording, and
    /// (for the continuous adjoint) backward re-integration of the state.
    pub nfe_backward: usize,
    pub vjp_count: usize,
    pub wall_time_ns: u64,
    /// Accepted forward steps `N`.
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    /// Accepted backward steps `Ñ`; equals `N` except for the continuous
    /// adjoint, which re-adapts.
    pub steps_backward: usize,
    /// Function evaluations per forward step `s`.
    pub stages: usize,
    /// Scalars held by the tape of a single dynamics evaluation (`L`).
    pub tape_scalars_per_eval: usize,
    /// Number of chained ODE components `M`; always 1 here.
    pub components: usize,
}
