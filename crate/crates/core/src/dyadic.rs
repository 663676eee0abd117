//! Exact dyadic rationals `num / 2^level`.
//!
//! Mesh breakpoints and region boundaries such as 3/8 are all dyadic, so
//! comparisons against them are done exactly here and never in floating point.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Dyadic {
    pub num: i64,
    pub level: u32,
}

impl Dyadic {
    pub const ZERO: Dyadic = Dyadic { num: 0, level: 0 };
    pub const ONE: Dyadic = Dyadic { num: 1, level: 0 };

    pub fn new(num: i64, level: u32) -> Self {
        Dyadic { num, level }.normalized()
    }

    pub fn from_int(n: i64) -> Self {
        Dyadic { num: n, level: 0 }
    }

    fn normalized(mut self) -> Self {
        if self.num == 0 {
            return Dyadic::ZERO;
        }
        while self.level > 0 && self.num % 2 == 0 {
            self.num /= 2;
            self.level -= 1;
        }
        self
    }

    /// Numerator when written over `2^level`; panics if not representable.
    pub fn numerator_at(self, level: u32) -> i64 {
        assert!(level >= self.level, "{self} not representable at level {level}");
        self.num << (level - self.level)
    }

    pub fn half(self) -> Self {
        Dyadic { num: self.num, level: self.level + 1 }.normalized()
    }

    /// Multiply by `2^k` (k may be negative).
    pub fn scale_pow2(self, k: i32) -> Self {
        if k >= 0 {
            let k = k as u32;
            if k <= self.level {
                Dyadic { num: self.num, level: self.level - k }.normalized()
            } else {
                Dyadic { num: self.num << (k - self.level), level: 0 }
            }
        } else {
            Dyadic { num: self.num, level: self.level + (-k) as u32 }.normalized()
        }
    }

    /// `floor(self * 2^level)`.
    pub fn floor_at(self, level: u32) -> i64 {
        if self.level <= level {
            self.numerator_at(level)
        } else {
            self.num.div_euclid(1i64 << (self.level - level))
        }
    }

    /// `ceil(self * 2^level)`.
    pub fn ceil_at(self, level: u32) -> i64 {
        if self.level <= level {
            self.numerator_at(level)
        } else {
            let d = 1i64 << (self.level - level);
            (self.num + d - 1).div_euclid(d)
        }
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / (2f64).powi(self.level as i32)
    }

    pub fn min(self, other: Self) -> Self {
        if self <= other {
            self
        } else {
            other
        }
    }

    pub fn max(self, other: Self) -> Self {
        if self >= other {
            self
        } else {
            other
        }
    }
}

impl PartialEq for Dyadic {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Dyadic {}

impl std::hash::Hash for Dyadic {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        let n = self.normalized();
        n.num.hash(state);
        n.level.hash(state);
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let l = self.level.max(other.level);
        let a = (self.num as i128) << (l - self.level);
        let b = (other.num as i128) << (l - other.level);
        a.cmp(&b)
    }
}

impl Add for Dyadic {
    type Output = Dyadic;
    fn add(self, rhs: Dyadic) -> Dyadic {
        let l = self.level.max(rhs.level);
        Dyadic::new(self.numerator_at(l) + rhs.numerator_at(l), l)
    }
}

impl Sub for Dyadic {
    type Output = Dyadic;
    fn sub(self, rhs: Dyadic) -> Dyadic {
        self + (-rhs)
    }
}

impl Neg for Dyadic {
    type Output = Dyadic;
    fn neg(self) -> Dyadic {
        Dyadic { num: -self.num, level: self.level }
    }
}

impl Mul for Dyadic {
    type Output = Dyadic;
    fn mul(self, rhs: Dyadic) -> Dyadic {
        Dyadic::new(self.num * rhs.num, self.level + rhs.level)
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.level == 0 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, 1u64 << self.level)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalizes_and_compares() {
        assert_eq!(Dyadic::new(6, 4), Dyadic::new(3, 3));
        assert_eq!(Dyadic::new(6, 4).level, 3);
        assert!(Dyadic::new(3, 3) < Dyadic::new(1, 1));
        assert_eq!(Dyadic::new(1, 1).half(), Dyadic::new(1, 2));
        assert_eq!(Dyadic::new(3, 4).scale_pow2(1), Dyadic::new(3, 3));
        assert_eq!(Dyadic::new(3, 4).scale_pow2(5), Dyadic::from_int(6));
        assert_eq!(Dyadic::new(3, 3).to_string(), "3/8");
        assert_eq!(Dyadic::new(3, 3).floor_at(2), 1);
        assert_eq!(Dyadic::new(3, 3).ceil_at(2), 2);
        assert_eq!(Dyadic::new(3, 3).floor_at(4), 6);
    }

    proptest! {
        #[test]
        fn arithmetic_matches_float(a in -1000i64..1000, la in 0u32..12, b in -1000i64..1000, lb in 0u32..12) {
            let x = Dyadic::new(a, la);
            let y = Dyadic::new(b, lb);
            prop_assert_eq!((x + y).to_f64(), x.to_f64() + y.to_f64());
            prop_assert_eq!((x - y).to_f64(), x.to_f64() - y.to_f64());
            prop_assert_eq!((x * y).to_f64(), x.to_f64() * y.to_f64());
            prop_assert_eq!(x < y, x.to_f64() < y.to_f64());
        }
    }
}
