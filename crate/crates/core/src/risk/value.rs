use std::cmp::Ordering;
use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use super::RiskError;

/// A real number extended with the two symbolic infinities.
///
/// Variant order matters: the derived ordering places `NegInf` below every
/// finite value and `PosInf` above.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum ExtendedValue {
    NegInf,
    Finite(f64),
    PosInf,
}

impl ExtendedValue {
    /// Maps IEEE infinities onto the symbolic variants. NaN is rejected.
    pub fn from_f64(x: f64) -> Option<Self> {
        if x.is_nan() {
            None
        } else if x == f64::INFINITY {
            Some(Self::PosInf)
        } else if x == f64::NEG_INFINITY {
            Some(Self::NegInf)
        } else {
            Some(Self::Finite(x))
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Self::NegInf => f64::NEG_INFINITY,
            Self::Finite(x) => x,
            Self::PosInf => f64::INFINITY,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Self::Finite(x) => Some(x),
            _ => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Self::Finite(_))
    }

    /// Total order; panics only if a `Finite` payload is NaN, which the
    /// constructors never produce.
    pub fn total_cmp(&self, other: &Self) -> Ordering {
        self.partial_cmp(other).expect("NaN inside ExtendedValue")
    }

    pub fn min(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    pub fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    /// `self + c` for a finite shift.
    pub fn shift(self, c: f64) -> Self {
        match self {
            Self::Finite(x) => Self::Finite(x + c),
            other => other,
        }
    }

    /// `w * self` with the convention `0 * (±inf) = 0`.
    pub fn weighted(self, w: f64) -> Self {
        if w == 0.0 {
            return Self::Finite(0.0);
        }
        match self {
            Self::Finite(x) => Self::Finite(w * x),
            Self::PosInf if w > 0.0 => Self::PosInf,
            Self::PosInf => Self::NegInf,
            Self::NegInf if w > 0.0 => Self::NegInf,
            Self::NegInf => Self::PosInf,
        }
    }

    /// Sum of two extended values; `+inf + -inf` is an error.
    pub fn checked_add(self, other: Self) -> Result<Self, RiskError> {
        match (self, other) {
            (Self::Finite(a), Self::Finite(b)) => Ok(Self::Finite(a + b)),
            (Self::PosInf, Self::NegInf) | (Self::NegInf, Self::PosInf) => Err(RiskError::IndeterminateSum),
            (Self::PosInf, _) | (_, Self::PosInf) => Ok(Self::PosInf),
            _ => Ok(Self::NegInf),
        }
    }
}

impl From<f64> for ExtendedValue {
    fn from(x: f64) -> Self {
        Self::from_f64(x).expect("NaN is not an extended value")
    }
}

impl fmt::Display for ExtendedValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NegInf => f.write_str("-inf"),
            Self::Finite(x) => write!(f, "{x}"),
            Self::PosInf => f.write_str("inf"),
        }
    }
}

// Finite values serialize as JSON numbers, infinities as "inf" / "-inf".
impl Serialize for ExtendedValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Finite(x) => serializer.serialize_f64(*x),
            Self::PosInf => serializer.serialize_str("inf"),
            Self::NegInf => serializer.serialize_str("-inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExtendedValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ExtVisitor;

        impl Visitor<'_> for ExtVisitor {
            type Value = ExtendedValue;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number, \"inf\" or \"-inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Self::Value, E> {
                ExtendedValue::from_f64(v).ok_or_else(|| E::custom("NaN"))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Self::Value, E> {
                Ok(ExtendedValue::Finite(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Self::Value, E> {
                Ok(ExtendedValue::Finite(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
                match v {
                    "inf" | "+inf" => Ok(ExtendedValue::PosInf),
                    "-inf" => Ok(ExtendedValue::NegInf),
                    other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
                }
            }
        }

        deserializer.deserialize_any(ExtVisitor)
    }
}

/// Risk level in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RiskLevel(f64);

impl RiskLevel {
    pub const ZERO: RiskLevel = RiskLevel(0.0);
    pub const ONE: RiskLevel = RiskLevel(1.0);

    pub fn new(alpha: f64) -> Result<Self, RiskError> {
        if (0.0..=1.0).contains(&alpha) {
            Ok(Self(alpha))
        } else {
            Err(RiskError::InvalidRiskLevel(alpha))
        }
    }

    /// Clamps values that drifted outside `[0, 1]` through rounding.
    pub fn clamped(alpha: f64) -> Self {
        assert!(!alpha.is_nan(), "NaN risk level");
        Self(alpha.clamp(0.0, 1.0))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for RiskLevel {
    type Error = RiskError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<RiskLevel> for f64 {
    fn from(value: RiskLevel) -> Self {
        value.0
    }
}

impl fmt::Display for RiskLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
