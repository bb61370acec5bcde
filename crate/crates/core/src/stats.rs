//! Estimators and exact functionals over conditional outcome tables.
//!
//! [`JointCounts`] accumulates trial outcomes per input setting and folds
//! associatively, so shards can be merged in any grouping. [`Behavior`] is a
//! `P(a, b | x, y)` table over any [`Scalar`]; correlators, the CHSH value,
//! marginals, and signaling metrics are computed generically so analytic
//! tables get exact answers.

use num_traits::Float;
use serde::Serialize;
use thiserror::Error;

use crate::bits::{Bit, InputPair, OutputPair, Party};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("no samples")]
    EmptySample,
    #[error("no trials recorded for setting x={x} y={y}")]
    EmptySetting { x: u8, y: u8 },
}

/// Outcome counts indexed `[x][y][a][b]`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct JointCounts {
    counts: [[[[u64; 2]; 2]; 2]; 2],
}

impl JointCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, inputs: InputPair, outputs: OutputPair) {
        self.counts[inputs.alice.as_usize()][inputs.bob.as_usize()]
            [outputs.alice.as_usize()][outputs.bob.as_usize()] += 1;
    }

    pub fn count(&self, x: Bit, y: Bit, a: Bit, b: Bit) -> u64 {
        self.counts[x.as_usize()][y.as_usize()][a.as_usize()][b.as_usize()]
    }

    pub fn setting_total(&self, x: Bit, y: Bit) -> u64 {
        let cell = &self.counts[x.as_usize()][y.as_usize()];
        cell.iter().flatten().sum()
    }

    pub fn total(&self) -> u64 {
        InputPair::ALL
            .iter()
            .map(|i| self.setting_total(i.alice, i.bob))
            .sum()
    }

    /// Associative merge; shard accumulators fold with this.
    pub fn merge(&mut self, other: &JointCounts) {
        for x in 0..2 {
            for y in 0..2 {
                for a in 0..2 {
                    for b in 0..2 {
                        self.counts[x][y][a][b] += other.counts[x][y][a][b];
                    }
                }
            }
        }
    }

    /// Normalized behavior table; every setting must have been sampled.
    pub fn behavior<T: Scalar>(&self) -> Result<Behavior<T>, StatsError> {
        for x in Bit::VALUES {
            for y in Bit::VALUES {
                if self.setting_total(x, y) == 0 {
                    return Err(StatsError::EmptySetting {
                        x: x.as_u8(),
                        y: y.as_u8(),
                    });
                }
            }
        }
        Ok(Behavior::from_fn(|x, y, a, b| {
            T::from_count_ratio(self.count(x, y, a, b), self.setting_total(x, y))
        }))
    }

    /// Correlator from raw counts: `(agree - disagree) / total`. The integer
    /// difference is exact, so an always-agree setting yields exactly 1.0.
    pub fn correlator(&self, x: Bit, y: Bit) -> Result<f64, StatsError> {
        let total = self.setting_total(x, y);
        if total == 0 {
            return Err(StatsError::EmptySetting {
                x: x.as_u8(),
                y: y.as_u8(),
            });
        }
        let agree = self.count(x, y, Bit::Zero, Bit::Zero) + self.count(x, y, Bit::One, Bit::One);
        let disagree =
            self.count(x, y, Bit::Zero, Bit::One) + self.count(x, y, Bit::One, Bit::Zero);
        Ok((agree as i64 - disagree as i64) as f64 / total as f64)
    }

    /// CHSH value from raw counts; the minus sign sits on the setting whose
    /// input AND is 1.
    pub fn chsh(&self) -> Result<f64, StatsError> {
        Ok(self.correlator(Bit::Zero, Bit::Zero)?
            + self.correlator(Bit::Zero, Bit::One)?
            + self.correlator(Bit::One, Bit::Zero)?
            - self.correlator(Bit::One, Bit::One)?)
    }

    /// `P(outcome = 1 | x, y)` for one party, straight from counts.
    pub fn marginal(&self, party: Party, x: Bit, y: Bit) -> Result<f64, StatsError> {
        let total = self.setting_total(x, y);
        if total == 0 {
            return Err(StatsError::EmptySetting {
                x: x.as_u8(),
                y: y.as_u8(),
            });
        }
        let ones: u64 = match party {
            Party::Alice => Bit::VALUES
                .iter()
                .map(|&b| self.count(x, y, Bit::One, b))
                .sum(),
            Party::Bob => Bit::VALUES
                .iter()
                .map(|&a| self.count(x, y, a, Bit::One))
                .sum(),
        };
        Ok(ones as f64 / total as f64)
    }

    /// Plug-in mutual information, in bits, between the remote input and the
    /// named party's outcome, conditioned on that party's own input:
    /// `into = Alice` estimates `I(Y; A | X)`.
    ///
    /// The plug-in estimator is biased upward by roughly
    /// `(cells - 1) / (2 N ln 2)` bits at `N` samples per conditioning slice;
    /// tolerances downstream sit well above that. Requires every setting to
    /// have been sampled.
    pub fn mi_leak(&self, into: Party) -> Result<f64, StatsError> {
        for x in Bit::VALUES {
            for y in Bit::VALUES {
                if self.setting_total(x, y) == 0 {
                    return Err(StatsError::EmptySetting {
                        x: x.as_u8(),
                        y: y.as_u8(),
                    });
                }
            }
        }
        // joint count of (remote input r, local outcome o) given local input
        let joint = |local: Bit, r: Bit, o: Bit| -> u64 {
            Bit::VALUES
                .iter()
                .map(|&other| match into {
                    Party::Alice => self.count(local, r, o, other),
                    Party::Bob => self.count(r, local, other, o),
                })
                .sum()
        };

        let total = self.total() as f64;
        let mut mi = 0.0;
        for local in Bit::VALUES {
            let slice: u64 = Bit::VALUES
                .iter()
                .flat_map(|&r| Bit::VALUES.iter().map(move |&o| joint(local, r, o)))
                .sum();
            let n = slice as f64;
            let mut inner = 0.0;
            for r in Bit::VALUES {
                let row: u64 = Bit::VALUES.iter().map(|&o| joint(local, r, o)).sum();
                for o in Bit::VALUES {
                    let j = joint(local, r, o);
                    if j == 0 {
                        continue;
                    }
                    let col: u64 = Bit::VALUES.iter().map(|&rr| joint(local, rr, o)).sum();
                    let ratio = (j as f64 * n) / (row as f64 * col as f64);
                    inner += (j as f64 / n) * ratio.log2();
                }
            }
            mi += (n / total) * inner;
        }
        Ok(mi)
    }
}

/// Conditional outcome table `P(a, b | x, y)`, indexed `[x][y][a][b]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Behavior<T> {
    p: [[[[T; 2]; 2]; 2]; 2],
}

impl<T: Scalar> Behavior<T> {
    pub fn from_fn(mut f: impl FnMut(Bit, Bit, Bit, Bit) -> T) -> Self {
        let mut cell = |x: Bit, y: Bit| {
            let mut g = |a: Bit, b: Bit| f(x, y, a, b);
            [
                [g(Bit::Zero, Bit::Zero), g(Bit::Zero, Bit::One)],
                [g(Bit::One, Bit::Zero), g(Bit::One, Bit::One)],
            ]
        };
        Behavior {
            p: [
                [cell(Bit::Zero, Bit::Zero), cell(Bit::Zero, Bit::One)],
                [cell(Bit::One, Bit::Zero), cell(Bit::One, Bit::One)],
            ],
        }
    }

    pub fn prob(&self, x: Bit, y: Bit, a: Bit, b: Bit) -> T {
        self.p[x.as_usize()][y.as_usize()][a.as_usize()][b.as_usize()].clone()
    }

    pub fn setting_sum(&self, x: Bit, y: Bit) -> T {
        let mut sum = T::zero();
        for a in Bit::VALUES {
            for b in Bit::VALUES {
                sum = sum + self.prob(x, y, a, b);
            }
        }
        sum
    }

    /// Exact normalization check; meaningful for analytic tables.
    pub fn is_normalized(&self) -> bool {
        InputPair::ALL
            .iter()
            .all(|i| self.setting_sum(i.alice, i.bob) == T::one())
    }

    /// Exact structural no-signaling check: each party's outcome
    /// probabilities are unchanged by the remote input.
    pub fn is_no_signaling(&self) -> bool {
        let alice = |x: Bit, y: Bit, a: Bit| -> T {
            self.prob(x, y, a, Bit::Zero) + self.prob(x, y, a, Bit::One)
        };
        let bob = |x: Bit, y: Bit, b: Bit| -> T {
            self.prob(x, y, Bit::Zero, b) + self.prob(x, y, Bit::One, b)
        };
        for own in Bit::VALUES {
            for outcome in Bit::VALUES {
                if alice(own, Bit::Zero, outcome) != alice(own, Bit::One, outcome) {
                    return false;
                }
                if bob(Bit::Zero, own, outcome) != bob(Bit::One, own, outcome) {
                    return false;
                }
            }
        }
        true
    }

    /// `P(outcome = 1 | x, y)` for one party.
    pub fn marginal(&self, party: Party, x: Bit, y: Bit) -> T {
        match party {
            Party::Alice => self.prob(x, y, Bit::One, Bit::Zero) + self.prob(x, y, Bit::One, Bit::One),
            Party::Bob => self.prob(x, y, Bit::Zero, Bit::One) + self.prob(x, y, Bit::One, Bit::One),
        }
    }

    pub fn to_f64(&self) -> Behavior<f64> {
        Behavior::from_fn(|x, y, a, b| self.prob(x, y, a, b).to_f64())
    }
}

/// Correlator `E(x, y) = P(a = b | x, y) - P(a != b | x, y)`.
pub fn correlator<T: Scalar>(behavior: &Behavior<T>, x: Bit, y: Bit) -> T {
    let agree = behavior.prob(x, y, Bit::Zero, Bit::Zero) + behavior.prob(x, y, Bit::One, Bit::One);
    let disagree =
        behavior.prob(x, y, Bit::Zero, Bit::One) + behavior.prob(x, y, Bit::One, Bit::Zero);
    agree - disagree
}

/// CHSH value `S = E(0,0) + E(0,1) + E(1,0) - E(1,1)`; the negated term is
/// the one whose input AND is 1, matching the box constraint, so the maximal
/// value is +4.
pub fn chsh<T: Scalar>(behavior: &Behavior<T>) -> T {
    correlator(behavior, Bit::Zero, Bit::Zero)
        + correlator(behavior, Bit::Zero, Bit::One)
        + correlator(behavior, Bit::One, Bit::Zero)
        - correlator(behavior, Bit::One, Bit::One)
}

/// Worst-case total variation of the named party's outcome marginal as the
/// remote input flips, maximized over the party's own input. With binary
/// outcomes this is the absolute difference of the `outcome = 1`
/// probabilities. Zero for exactly no-signaling behaviors.
pub fn signaling_tv<T: Scalar>(behavior: &Behavior<T>, into: Party) -> T {
    let mut worst = T::zero();
    for own in Bit::VALUES {
        let (m0, m1) = match into {
            Party::Alice => (
                behavior.marginal(Party::Alice, own, Bit::Zero),
                behavior.marginal(Party::Alice, own, Bit::One),
            ),
            Party::Bob => (
                behavior.marginal(Party::Bob, Bit::Zero, own),
                behavior.marginal(Party::Bob, Bit::One, own),
            ),
        };
        let tv = (m0 - m1).abs();
        if tv > worst {
            worst = tv;
        }
    }
    worst
}

/// Total variation distance between two behaviors at one setting.
pub fn setting_total_variation<T: Scalar>(
    p: &Behavior<T>,
    q: &Behavior<T>,
    x: Bit,
    y: Bit,
) -> T {
    let mut sum = T::zero();
    for a in Bit::VALUES {
        for b in Bit::VALUES {
            sum = sum + (p.prob(x, y, a, b) - q.prob(x, y, a, b)).abs();
        }
    }
    T::one_half() * sum
}

/// Kolmogorov-Smirnov statistic of `samples` against `Uniform(lo, hi)`.
pub fn ks_uniform<F: Float>(samples: &[F], lo: F, hi: F) -> Result<F, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("samples must not be NaN"));
    let n = F::from(sorted.len()).expect("sample count fits the float");
    let span = hi - lo;
    let mut sup = F::zero();
    for (i, &x) in sorted.iter().enumerate() {
        let cdf = (x - lo) / span;
        let lower = F::from(i).unwrap() / n;
        let upper = F::from(i + 1).unwrap() / n;
        sup = sup.max((upper - cdf).abs().max((cdf - lower).abs()));
    }
    Ok(sup)
}
