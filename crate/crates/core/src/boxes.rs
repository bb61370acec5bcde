//! Reference boxes behind one sampling interface: the ideal PR box and the
//! sixteen deterministic local strategies it is measured against.

use crate::bits::{Bit, OutputPair};
use crate::rng::SplitMix64;
use crate::scalar::Exact;
use crate::stats::Behavior;

/// A two-input/two-output box: a sampler plus, when one exists, its exact
/// conditional table.
pub trait BoxModel {
    fn sample(&self, x: Bit, y: Bit, rng: &mut SplitMix64) -> OutputPair;

    /// Closed-form `P(a, b | x, y)`, if the box has one.
    fn analytic_behavior(&self) -> Option<Behavior<Exact>> {
        None
    }
}

/// Canonical ideal PR sampler: `a` uniform, `b = a XOR (x AND y)`. The box
/// constraint holds by construction and both marginals are fair coins.
pub fn ideal_pr_sample(x: Bit, y: Bit, rng: &mut SplitMix64) -> OutputPair {
    let a = rng.next_bit();
    OutputPair::new(a, a ^ (x & y))
}

/// Exact conditional table of the ideal PR box: 1/2 wherever
/// `XOR(a, b) = AND(x, y)`, zero elsewhere.
pub fn ideal_pr_behavior() -> Behavior<Exact> {
    Behavior::from_fn(|x, y, a, b| {
        if (a ^ b) == (x & y) {
            Exact::new(1, 2)
        } else {
            Exact::new(0, 1)
        }
    })
}

/// The ideal PR box.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdealPr;

impl BoxModel for IdealPr {
    fn sample(&self, x: Bit, y: Bit, rng: &mut SplitMix64) -> OutputPair {
        ideal_pr_sample(x, y, rng)
    }

    fn analytic_behavior(&self) -> Option<Behavior<Exact>> {
        Some(ideal_pr_behavior())
    }
}

/// One deterministic local strategy: a fixed input-to-output map per party,
/// no run-time coordination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LhvStrategy {
    alice: [Bit; 2],
    bob: [Bit; 2],
}

impl LhvStrategy {
    /// Strategy `k` in the stable enumeration: bit `i` of `k` is Alice's
    /// answer to input `i`, bit `2 + i` is Bob's.
    pub fn from_index(k: usize) -> Option<Self> {
        if k >= 16 {
            return None;
        }
        let bit_at = |pos: usize| Bit::from_bool((k >> pos) & 1 == 1);
        Some(Self {
            alice: [bit_at(0), bit_at(1)],
            bob: [bit_at(2), bit_at(3)],
        })
    }

    pub fn index(&self) -> usize {
        (self.alice[0].as_usize())
            | (self.alice[1].as_usize() << 1)
            | (self.bob[0].as_usize() << 2)
            | (self.bob[1].as_usize() << 3)
    }

    pub fn respond(&self, x: Bit, y: Bit) -> OutputPair {
        OutputPair::new(self.alice[x.as_usize()], self.bob[y.as_usize()])
    }

    /// Deterministic 0/1 conditional table.
    pub fn behavior(&self) -> Behavior<Exact> {
        Behavior::from_fn(|x, y, a, b| {
            let answer = self.respond(x, y);
            if answer.alice == a && answer.bob == b {
                Exact::new(1, 1)
            } else {
                Exact::new(0, 1)
            }
        })
    }
}

impl BoxModel for LhvStrategy {
    fn sample(&self, x: Bit, y: Bit, _rng: &mut SplitMix64) -> OutputPair {
        self.respond(x, y)
    }

    fn analytic_behavior(&self) -> Option<Behavior<Exact>> {
        Some(self.behavior())
    }
}

/// All sixteen deterministic strategy pairs, in index order.
pub fn enumerate_lhv() -> Vec<LhvStrategy> {
    (0..16).map(|k| LhvStrategy::from_index(k).unwrap()).collect()
}
