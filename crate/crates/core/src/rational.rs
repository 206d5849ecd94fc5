//! Exact fractions for frequency arithmetic.
//!
//! Counts and frequencies are carried as reduced `i64` ratios so that
//! factorization checks and counterexample searches are free of rounding
//! ambiguity. JSON form is a `{num, den}` pair.

use std::fmt;
use std::ops::{Add, Div, Mul, Sub};

use num_rational::Ratio;
use num_traits::{Signed, Zero};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A reduced exact fraction with positive denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Frac(Ratio<i64>);

impl Frac {
    pub const ZERO: Frac = Frac(Ratio::new_raw(0, 1));
    pub const ONE: Frac = Frac(Ratio::new_raw(1, 1));

    /// `num/den`, reduced. Panics if `den == 0`.
    pub fn new(num: i64, den: i64) -> Self {
        Frac(Ratio::new(num, den))
    }

    pub fn from_int(n: i64) -> Self {
        Frac(Ratio::from_integer(n))
    }

    /// Exact ratio of two counts. Panics if `den == 0`.
    pub fn ratio(num: u64, den: u64) -> Self {
        Frac(Ratio::new(
            i64::try_from(num).expect("count fits in i64"),
            i64::try_from(den).expect("count fits in i64"),
        ))
    }

    pub fn numer(&self) -> i64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i64 {
        *self.0.denom()
    }

    pub fn abs(&self) -> Self {
        Frac(self.0.abs())
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn to_f64(&self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }
}

impl fmt::Display for Frac {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0.numer(), self.0.denom())
    }
}

impl Add for Frac {
    type Output = Frac;
    fn add(self, rhs: Frac) -> Frac {
        Frac(self.0 + rhs.0)
    }
}

impl Sub for Frac {
    type Output = Frac;
    fn sub(self, rhs: Frac) -> Frac {
        Frac(self.0 - rhs.0)
    }
}

impl Mul for Frac {
    type Output = Frac;
    fn mul(self, rhs: Frac) -> Frac {
        Frac(self.0 * rhs.0)
    }
}

impl Div for Frac {
    type Output = Frac;
    fn div(self, rhs: Frac) -> Frac {
        Frac(self.0 / rhs.0)
    }
}

impl std::iter::Sum for Frac {
    fn sum<I: Iterator<Item = Frac>>(iter: I) -> Frac {
        iter.fold(Frac::ZERO, |a, b| a + b)
    }
}

#[derive(Serialize, Deserialize)]
struct FracRepr {
    num: i64,
    den: i64,
}

impl Serialize for Frac {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        FracRepr {
            num: self.numer(),
            den: self.denom(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Frac {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = FracRepr::deserialize(d)?;
        if r.den == 0 {
            return Err(D::Error::custom("fraction denominator must be nonzero"));
        }
        Ok(Frac::new(r.num, r.den))
    }
}
