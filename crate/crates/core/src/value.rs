//! Exact-or-float scalar.
//!
//! Sums and inequality checks run over `Num` so that exactness survives as
//! long as every operand and operation is rational-closed. The first
//! transcendental evaluation (or float-only input) degrades the whole chain
//! to f64, which is recorded rather than hidden: reports carry an `exact`
//! flag derived from the variant that survived.

use std::cmp::Ordering;
use std::fmt;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rational::Rational;

#[derive(Clone, PartialEq)]
pub enum Num {
    Exact(Rational),
    Approx(f64),
}

impl Num {
    pub fn zero() -> Self {
        Num::Exact(Rational::zero())
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Num::Exact(_))
    }

    pub fn as_exact(&self) -> Option<&Rational> {
        match self {
            Num::Exact(r) => Some(r),
            Num::Approx(_) => None,
        }
    }

    /// Float view. Exact values convert via nearest rounding; a rational far
    /// outside the f64 range maps to a signed infinity (comparisons stay
    /// ordered, arithmetic saturates loudly instead of silently wrapping).
    pub fn to_f64(&self) -> f64 {
        match self {
            Num::Exact(r) => r.to_f64().unwrap_or_else(|_| {
                if r.is_negative() {
                    f64::NEG_INFINITY
                } else {
                    f64::INFINITY
                }
            }),
            Num::Approx(v) => *v,
        }
    }

    pub fn neg(&self) -> Num {
        match self {
            Num::Exact(r) => Num::Exact(-r),
            Num::Approx(v) => Num::Approx(-v),
        }
    }

    pub fn abs(&self) -> Num {
        match self {
            Num::Exact(r) => Num::Exact(r.abs()),
            Num::Approx(v) => Num::Approx(v.abs()),
        }
    }

    pub fn add(&self, other: &Num) -> Num {
        match (self, other) {
            (Num::Exact(a), Num::Exact(b)) => Num::Exact(a + b),
            _ => Num::Approx(self.to_f64() + other.to_f64()),
        }
    }

    pub fn sub(&self, other: &Num) -> Num {
        match (self, other) {
            (Num::Exact(a), Num::Exact(b)) => Num::Exact(a - b),
            _ => Num::Approx(self.to_f64() - other.to_f64()),
        }
    }

    pub fn mul(&self, other: &Num) -> Num {
        match (self, other) {
            (Num::Exact(a), Num::Exact(b)) => Num::Exact(a * b),
            _ => Num::Approx(self.to_f64() * other.to_f64()),
        }
    }

    pub fn div(&self, other: &Num) -> Result<Num> {
        match (self, other) {
            (Num::Exact(a), Num::Exact(b)) => a.div_exact(b).map(Num::Exact),
            _ => {
                let d = other.to_f64();
                if d == 0.0 {
                    Err(Error::Domain("division by zero".into()))
                } else {
                    Ok(Num::Approx(self.to_f64() / d))
                }
            }
        }
    }

    pub fn pow_i(&self, exp: i64) -> Result<Num> {
        match self {
            Num::Exact(r) => r.pow_i(exp).map(Num::Exact),
            Num::Approx(v) => {
                if *v == 0.0 && exp < 0 {
                    return Err(Error::Domain("zero raised to a negative power".into()));
                }
                let e = i32::try_from(exp)
                    .map_err(|_| Error::Range(format!("exponent {exp} out of range")))?;
                Ok(Num::Approx(v.powi(e)))
            }
        }
    }

    pub fn min(self, other: Num) -> Num {
        if self.cmp_num(&other) != Ordering::Greater {
            self
        } else {
            other
        }
    }

    pub fn max(self, other: Num) -> Num {
        if self.cmp_num(&other) != Ordering::Less {
            self
        } else {
            other
        }
    }

    /// Total-order comparison: rational order when both sides are exact,
    /// f64 order otherwise (NaN sorts as equal, which sums never produce).
    pub fn cmp_num(&self, other: &Num) -> Ordering {
        match (self, other) {
            (Num::Exact(a), Num::Exact(b)) => a.cmp(b),
            _ => self
                .to_f64()
                .partial_cmp(&other.to_f64())
                .unwrap_or(Ordering::Equal),
        }
    }

    /// True when `self > other + tol`: the violation test used by every
    /// inequality check. Exact operands compare in exact arithmetic (the
    /// tolerance converts to a dyadic rational without rounding).
    pub fn exceeds(&self, other: &Num, tol: f64) -> bool {
        match (self, other, Rational::from_f64(tol)) {
            (Num::Exact(a), Num::Exact(b), Some(t)) => *a > b + &t,
            _ => self.to_f64() > other.to_f64() + tol,
        }
    }

    /// Midpoint (a+b)/2.
    pub fn midpoint(a: &Num, b: &Num) -> Num {
        match (a, b) {
            (Num::Exact(x), Num::Exact(y)) => Num::Exact(Rational::midpoint(x, y)),
            _ => Num::Approx(0.5 * (a.to_f64() + b.to_f64())),
        }
    }
}

impl From<Rational> for Num {
    fn from(r: Rational) -> Self {
        Num::Exact(r)
    }
}

impl From<&Rational> for Num {
    fn from(r: &Rational) -> Self {
        Num::Exact(r.clone())
    }
}

impl From<f64> for Num {
    fn from(v: f64) -> Self {
        Num::Approx(v)
    }
}

impl fmt::Debug for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Num::Exact(r) => write!(f, "{r}"),
            Num::Approx(v) => write!(f, "~{v}"),
        }
    }
}

/// Exact values display as "p/q" with the denominator always written, so an
/// exact integer result is visibly exact ("36/1" rather than "36"). Floats
/// use the shortest round-trip form.
impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Num::Exact(r) => f.write_str(&r.to_frac_string()),
            Num::Approx(v) => write!(f, "{v}"),
        }
    }
}

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Num::Exact(r) => serializer.serialize_str(&r.to_frac_string()),
            Num::Approx(v) => serializer.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct NumVisitor;

        impl de::Visitor<'_> for NumVisitor {
            type Value = Num;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a rational string \"p/q\" or a float")
            }

            fn visit_str<E: de::Error>(self, s: &str) -> std::result::Result<Num, E> {
                s.parse::<Rational>()
                    .map(Num::Exact)
                    .map_err(de::Error::custom)
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Num, E> {
                Ok(Num::Approx(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Num, E> {
                Ok(Num::Approx(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Num, E> {
                Ok(Num::Approx(v as f64))
            }
        }

        deserializer.deserialize_any(NumVisitor)
    }
}
