use core::fmt;
use core::ops::{Add, Neg, Sub};
use serde::{Deserialize, Serialize};

/// Exact multiple of 1/2, stored as twice its value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "f64", try_from = "f64")]
pub struct HalfInt(i64);

impl HalfInt {
    pub const ZERO: HalfInt = HalfInt(0);

    pub const fn from_int(v: i64) -> Self {
        HalfInt(2 * v)
    }

    /// `v / 2`.
    pub const fn halves(v: i64) -> Self {
        HalfInt(v)
    }

    pub const fn twice(self) -> i64 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / 2.0
    }
}

impl Add for HalfInt {
    type Output = HalfInt;
    fn add(self, o: HalfInt) -> HalfInt {
        HalfInt(self.0 + o.0)
    }
}

impl Sub for HalfInt {
    type Output = HalfInt;
    fn sub(self, o: HalfInt) -> HalfInt {
        HalfInt(self.0 - o.0)
    }
}

impl Neg for HalfInt {
    type Output = HalfInt;
    fn neg(self) -> HalfInt {
        HalfInt(-self.0)
    }
}

impl From<HalfInt> for f64 {
    fn from(v: HalfInt) -> f64 {
        v.to_f64()
    }
}

impl TryFrom<f64> for HalfInt {
    type Error = &'static str;
    fn try_from(v: f64) -> Result<Self, Self::Error> {
        let t = v * 2.0;
        if t.is_finite() && t == (t as i64) as f64 {
            Ok(HalfInt(t as i64))
        } else {
            Err("not a multiple of 1/2")
        }
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 % 2 == 0 {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}
