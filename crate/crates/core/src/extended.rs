use serde::{Serialize, Serializer};
use std::cmp::Ordering;
use std::fmt;

/// A real number extended with `±∞`.
///
/// Infinite values never enter linear algebra; they only appear at the
/// boundaries where value, dual and primal functions are evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    NegInf,
    Finite(f64),
    PosInf,
}

impl ExtReal {
    pub const ZERO: ExtReal = ExtReal::Finite(0.0);

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            _ => None,
        }
    }

    /// Converts to `f64`, mapping the infinities to IEEE infinities.
    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::NegInf => f64::NEG_INFINITY,
            ExtReal::Finite(v) => v,
            ExtReal::PosInf => f64::INFINITY,
        }
    }

    /// Inverse of [`ExtReal::to_f64`]. NaN is rejected.
    pub fn from_f64(v: f64) -> Option<ExtReal> {
        if v.is_nan() {
            None
        } else if v == f64::INFINITY {
            Some(ExtReal::PosInf)
        } else if v == f64::NEG_INFINITY {
            Some(ExtReal::NegInf)
        } else {
            Some(ExtReal::Finite(v))
        }
    }

    /// Like [`ExtReal::from_f64`] for values known not to be NaN.
    pub fn of(v: f64) -> ExtReal {
        ExtReal::from_f64(v).expect("NaN has no extended-real value")
    }

    /// `coeff * self` with `0 * ±∞ = 0`.
    pub fn scale(self, coeff: f64) -> ExtReal {
        if coeff == 0.0 {
            return ExtReal::ZERO;
        }
        match self {
            ExtReal::Finite(v) => ExtReal::Finite(coeff * v),
            ExtReal::PosInf if coeff > 0.0 => ExtReal::PosInf,
            ExtReal::PosInf => ExtReal::NegInf,
            ExtReal::NegInf if coeff > 0.0 => ExtReal::NegInf,
            ExtReal::NegInf => ExtReal::PosInf,
        }
    }

    /// Adds a finite shift.
    pub fn shift(self, by: f64) -> ExtReal {
        match self {
            ExtReal::Finite(v) => ExtReal::Finite(v + by),
            other => other,
        }
    }

    /// Sum where `+∞ + −∞` resolves to `−∞` (a vacuous lower bound).
    pub fn add_lower(self, other: ExtReal) -> ExtReal {
        match (self, other) {
            (ExtReal::NegInf, _) | (_, ExtReal::NegInf) => ExtReal::NegInf,
            (ExtReal::PosInf, _) | (_, ExtReal::PosInf) => ExtReal::PosInf,
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a + b),
        }
    }

    pub fn max(self, other: ExtReal) -> ExtReal {
        if self >= other {
            self
        } else {
            other
        }
    }

    pub fn min(self, other: ExtReal) -> ExtReal {
        if self <= other {
            self
        } else {
            other
        }
    }
}

impl From<f64> for ExtReal {
    fn from(v: f64) -> Self {
        ExtReal::Finite(v)
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        use ExtReal::*;
        match (self, other) {
            (NegInf, NegInf) | (PosInf, PosInf) => Some(Ordering::Equal),
            (NegInf, _) | (_, PosInf) => Some(Ordering::Less),
            (_, NegInf) | (PosInf, _) => Some(Ordering::Greater),
            (Finite(a), Finite(b)) => a.partial_cmp(b),
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::NegInf => f.write_str("-inf"),
            ExtReal::PosInf => f.write_str("inf"),
            ExtReal::Finite(v) => write!(f, "{v}"),
        }
    }
}

/// Finite values serialize as numbers, infinities as `"inf"` / `"-inf"`.
impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(v) => s.serialize_f64(*v),
            other => s.serialize_str(&other.to_string()),
        }
    }
}
