//! Outcome tallies for two-party ±1-valued measurements.
//!
//! A [`TallyTable`] maps canonical setting labels ("XX", "ZZ", "A0B0", ...)
//! to the four joint-outcome counts and feeds every estimator in the crate.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Counts for the four joint outcomes of one measurement setting,
/// ordered (+1,+1), (+1,−1), (−1,+1), (−1,−1).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub pp: u64,
    pub pm: u64,
    pub mp: u64,
    pub mm: u64,
}

impl OutcomeCounts {
    pub fn total(&self) -> u64 {
        self.pp + self.pm + self.mp + self.mm
    }

    pub fn record(&mut self, a: i8, b: i8) {
        match (a >= 0, b >= 0) {
            (true, true) => self.pp += 1,
            (true, false) => self.pm += 1,
            (false, true) => self.mp += 1,
            (false, false) => self.mm += 1,
        }
    }

    /// Adds `n` counts to the outcome slot indexed in canonical order.
    pub fn add(&mut self, slot: usize, n: u64) {
        match slot {
            0 => self.pp += n,
            1 => self.pm += n,
            2 => self.mp += n,
            3 => self.mm += n,
            _ => panic!("outcome slot out of range"),
        }
    }

    pub fn as_array(&self) -> [u64; 4] {
        [self.pp, self.pm, self.mp, self.mm]
    }

    /// Ê = (N₊₊ + N₋₋ − N₊₋ − N₋₊)/N.
    pub fn correlator(&self) -> f64 {
        let n = self.total();
        assert!(n > 0, "correlator of an empty tally");
        ((self.pp + self.mm) as f64 - (self.pm + self.mp) as f64) / n as f64
    }

    /// Standard error of the correlator under binomial statistics,
    /// √((1 − Ê²)/N).
    pub fn correlator_stderr(&self) -> f64 {
        let n = self.total() as f64;
        let e = self.correlator();
        ((1.0 - e * e).max(0.0) / n).sqrt()
    }

    /// Marginal expectation of side A, (N₊₊ + N₊₋ − N₋₊ − N₋₋)/N.
    pub fn marginal_a(&self) -> f64 {
        let n = self.total();
        assert!(n > 0);
        ((self.pp + self.pm) as f64 - (self.mp + self.mm) as f64) / n as f64
    }

    /// Marginal expectation of side B.
    pub fn marginal_b(&self) -> f64 {
        let n = self.total();
        assert!(n > 0);
        ((self.pp + self.mp) as f64 - (self.pm + self.mm) as f64) / n as f64
    }

    pub fn merge(&mut self, other: &OutcomeCounts) {
        self.pp += other.pp;
        self.pm += other.pm;
        self.mp += other.mp;
        self.mm += other.mm;
    }
}

/// Per-setting outcome counts, keyed canonically.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TallyTable {
    settings: BTreeMap<String, OutcomeCounts>,
}

impl TallyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, label: &str, a: i8, b: i8) {
        self.settings.entry(label.to_string()).or_default().record(a, b);
    }

    pub fn add_counts(&mut self, label: &str, counts: OutcomeCounts) {
        self.settings.entry(label.to_string()).or_default().merge(&counts);
    }

    pub fn get(&self, label: &str) -> Option<&OutcomeCounts> {
        self.settings.get(label)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.settings.keys().map(|s| s.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.settings.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.settings.values().map(|c| c.total()).sum()
    }

    /// Merges another table into this one; commutative and associative.
    pub fn merge(&mut self, other: &TallyTable) {
        for (label, counts) in &other.settings {
            self.settings.entry(label.clone()).or_default().merge(counts);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correlator_and_marginals() {
        let mut c = OutcomeCounts::default();
        c.record(1, -1);
        c.record(1, -1);
        c.record(-1, 1);
        c.record(1, 1);
        assert_eq!(c.total(), 4);
        assert!((c.correlator() - (1.0 - 3.0) / 4.0).abs() < 1e-15);
        assert!((c.marginal_a() - 0.5).abs() < 1e-15);
        assert!((c.marginal_b() - 0.0).abs() < 1e-15);
    }

    #[test]
    fn merge_is_commutative() {
        let mut a = TallyTable::new();
        a.record("XX", 1, 1);
        let mut b = TallyTable::new();
        b.record("XX", -1, -1);
        b.record("ZZ", 1, -1);
        let mut ab = a.clone();
        ab.merge(&b);
        let mut ba = b.clone();
        ba.merge(&a);
        assert_eq!(ab, ba);
        assert_eq!(ab.get("XX").unwrap().total(), 2);
    }

    #[test]
    fn stderr_shrinks_with_counts() {
        let mut small = OutcomeCounts::default();
        let mut large = OutcomeCounts::default();
        for _ in 0..10 {
            small.record(1, 1);
            small.record(1, -1);
        }
        for _ in 0..1000 {
            large.record(1, 1);
            large.record(1, -1);
        }
        assert!(large.correlator_stderr() < small.correlator_stderr());
    }
}
