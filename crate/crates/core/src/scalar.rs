//! Scalar abstraction for probability tables.
//!
//! Empirical tables are estimated in floating point; analytic reference
//! tables use exact rationals so normalization and no-signaling checks need
//! no tolerances. Everything downstream (correlators, CHSH, marginals,
//! signaling) is written once against [`Scalar`].

use num_rational::Ratio;
use num_traits::Signed;

/// Exact rational probability value.
pub type Exact = Ratio<i64>;

/// Numeric field the behavior-table functionals are computed in.
pub trait Scalar: num_traits::Num + Signed + PartialOrd + Clone + std::fmt::Debug {
    /// Value of `num / den` (`den` > 0), exact where the type allows.
    fn from_count_ratio(num: u64, den: u64) -> Self;

    /// Closest f64, for reporting and cross-type comparisons.
    fn to_f64(&self) -> f64;

    fn one_half() -> Self {
        Self::from_count_ratio(1, 2)
    }
}

impl Scalar for f64 {
    fn from_count_ratio(num: u64, den: u64) -> Self {
        num as f64 / den as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for f32 {
    fn from_count_ratio(num: u64, den: u64) -> Self {
        num as f32 / den as f32
    }

    fn to_f64(&self) -> f64 {
        f64::from(*self)
    }
}

impl Scalar for Exact {
    fn from_count_ratio(num: u64, den: u64) -> Self {
        // counts in this crate stay far below i64::MAX
        Ratio::new(num as i64, den as i64)
    }

    fn to_f64(&self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}
