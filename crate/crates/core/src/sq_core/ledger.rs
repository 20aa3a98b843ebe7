use std::ops::Sub;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Access counters for sublinearity audits.
///
/// Counters only grow; `reset` is the single way to bring them back to zero.
/// Increments are relaxed atomics so shared structures can be read from many
/// threads at once.
#[derive(Debug, Default)]
pub struct CostLedger {
    node_touches: AtomicU64,
    entry_reads: AtomicU64,
    rng_draws: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub node_touches: u64,
    pub entry_reads: u64,
    pub rng_draws: u64,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn shared() -> Arc<Self> {
        Arc::new(Self::default())
    }

    #[inline]
    pub fn touch_nodes(&self, count: u64) {
        self.node_touches.fetch_add(count, Ordering::Relaxed);
    }

    #[inline]
    pub fn read_entries(&self, count: u64) {
        self.entry_reads.fetch_add(count, Ordering::Relaxed);
    }

    #[inline]
    pub fn draw(&self, count: u64) {
        self.rng_draws.fetch_add(count, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        LedgerSnapshot {
            node_touches: self.node_touches.load(Ordering::Relaxed),
            entry_reads: self.entry_reads.load(Ordering::Relaxed),
            rng_draws: self.rng_draws.load(Ordering::Relaxed),
        }
    }

    pub fn reset(&self) {
        self.node_touches.store(0, Ordering::Relaxed);
        self.entry_reads.store(0, Ordering::Relaxed);
        self.rng_draws.store(0, Ordering::Relaxed);
    }
}

impl Sub for LedgerSnapshot {
    type Output = LedgerSnapshot;

    fn sub(self, rhs: LedgerSnapshot) -> LedgerSnapshot {
        LedgerSnapshot {
            node_touches: self.node_touches.saturating_sub(rhs.node_touches),
            entry_reads: self.entry_reads.saturating_sub(rhs.entry_reads),
            rng_draws: self.rng_draws.saturating_sub(rhs.rng_draws),
        }
    }
}

impl std::ops::Add for LedgerSnapshot {
    type Output = LedgerSnapshot;

    fn add(self, rhs: LedgerSnapshot) -> LedgerSnapshot {
        LedgerSnapshot {
            node_touches: self.node_touches + rhs.node_touches,
            entry_reads: self.entry_reads + rhs.entry_reads,
            rng_draws: self.rng_draws + rhs.rng_draws,
        }
    }
}
