//! Injected logical clock shared by the master, runtime, and simulator.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

/// Logical time. Units are whatever the caller decides; the simulator treats them as ticks.
pub type Timestamp = u64;

/// A monotone logical clock. Clones share the same underlying time.
#[derive(Debug, Clone, Default)]
pub struct LogicalClock {
    now: Arc<AtomicU64>,
}

impl LogicalClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn starting_at(t: Timestamp) -> Self {
        LogicalClock {
            now: Arc::new(AtomicU64::new(t)),
        }
    }

    pub fn now(&self) -> Timestamp {
        self.now.load(Ordering::Acquire)
    }

    /// Moves the clock forward to `t`. Never moves it backwards; returns the resulting time.
    pub fn advance_to(&self, t: Timestamp) -> Timestamp {
        self.now.fetch_max(t, Ordering::AcqRel).max(t)
    }

    pub fn advance_by(&self, d: u64) -> Timestamp {
        self.now.fetch_add(d, Ordering::AcqRel) + d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clones_share_time_and_never_rewind() {
        let c = LogicalClock::new();
        let c2 = c.clone();
        assert_eq!(c.advance_to(10), 10);
        assert_eq!(c2.now(), 10);
        assert_eq!(c2.advance_to(3), 10);
        assert_eq!(c.advance_by(5), 15);
    }
}
