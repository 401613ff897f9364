//! Elementary-operation accounting.
//!
//! Every budgeted code path charges its work through an [`OpCounter`]:
//! one unit per feature-value comparison, one per associative-map access,
//! and one per arithmetic gain update. A map access is charged one unit
//! regardless of the map's size; the counter additionally accumulates
//! `accesses * log2(size)` as a separate series so reports can compare the
//! flat count against the logarithmic cost model.

use std::cell::Cell;
use std::rc::Rc;

/// One snapshot of the counter series.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OpSnapshot {
    /// Feature-value comparisons.
    pub cmp: u64,
    /// Associative-map accesses (insert/lookup/delete/cursor step).
    pub map: u64,
    /// Arithmetic gain updates.
    pub arith: u64,
    /// Sum of log2(map size) over all map accesses.
    pub map_log_weighted: f64,
}

impl OpSnapshot {
    /// Total charged units (flat model).
    pub fn total(&self) -> u64 {
        self.cmp + self.map + self.arith
    }
}

/// Monotone operation counter. Cheap to clone; clones share the same tally.
#[derive(Clone, Default)]
pub struct OpCounter {
    inner: Rc<Cell<OpSnapshot>>,
}

impl OpCounter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Charge `k` feature-value comparisons.
    #[inline]
    pub fn cmp(&self, k: u64) {
        let mut s = self.inner.get();
        s.cmp += k;
        self.inner.set(s);
    }

    /// Charge one associative-map access on a container of `len` entries.
    #[inline]
    pub fn map_access(&self, len: usize) {
        let mut s = self.inner.get();
        s.map += 1;
        s.map_log_weighted += (len.max(2) as f64).log2();
        self.inner.set(s);
    }

    /// Charge `k` arithmetic gain updates.
    #[inline]
    pub fn arith(&self, k: u64) {
        let mut s = self.inner.get();
        s.arith += k;
        self.inner.set(s);
    }

    /// Total charged units so far.
    #[inline]
    pub fn total(&self) -> u64 {
        self.inner.get().total()
    }

    pub fn snapshot(&self) -> OpSnapshot {
        self.inner.get()
    }
}

impl std::fmt::Debug for OpCounter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "OpCounter({:?})", self.inner.get())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counter_is_monotone_and_shared() {
        let ops = OpCounter::new();
        let alias = ops.clone();
        ops.cmp(3);
        alias.map_access(16);
        ops.arith(2);
        assert_eq!(ops.total(), 6);
        assert_eq!(alias.snapshot().cmp, 3);
        assert!(alias.snapshot().map_log_weighted >= 4.0 - 1e-12);
    }
}
