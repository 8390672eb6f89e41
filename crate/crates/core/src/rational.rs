//! Exact rational arithmetic on arbitrary-precision integers.
//!
//! `Rational` is the backbone of partition coordinates and exact-mode
//! evaluation. Values are always held in canonical form: reduced to lowest
//! terms with a positive denominator. Partition refinement multiplies
//! denominators freely, so the integer parts are arbitrary precision.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// An exact rational number in canonical form (`gcd(|num|, den) = 1`,
/// `den > 0`). Immutable after construction; cheap to clone for small values.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rational(BigRational);

impl Rational {
    /// Canonical rational from a numerator/denominator pair.
    ///
    /// Fails with an invalid-argument error when `den` is zero.
    pub fn new(num: impl Into<BigInt>, den: impl Into<BigInt>) -> Result<Self> {
        let den = den.into();
        if den.is_zero() {
            return Err(Error::invalid("rational with zero denominator"));
        }
        Ok(Rational(BigRational::new(num.into(), den)))
    }

    pub fn from_int(n: impl Into<BigInt>) -> Self {
        Rational(BigRational::from_integer(n.into()))
    }

    pub fn zero() -> Self {
        Rational(BigRational::zero())
    }

    pub fn one() -> Self {
        Rational(BigRational::one())
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn abs(&self) -> Self {
        Rational(self.0.abs())
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

    /// Exact division; division by zero is an arithmetic error.
    pub fn div_exact(&self, other: &Self) -> Result<Self> {
        if other.is_zero() {
            return Err(Error::Arithmetic("division by zero".into()));
        }
        Ok(Rational(&self.0 / &other.0))
    }

    /// Integer power. Negative exponents invert; `0^-n` is an arithmetic error.
    pub fn pow_i(&self, exp: i64) -> Result<Self> {
        if exp < 0 && self.is_zero() {
            return Err(Error::Arithmetic("zero raised to a negative power".into()));
        }
        let e =
            i32::try_from(exp).map_err(|_| Error::Range(format!("exponent {exp} out of range")))?;
        Ok(Rational(self.0.pow(e)))
    }

    /// Mediant (num_a+num_b)/(den_a+den_b) of two rationals with `a < b`.
    /// The result lies strictly between the inputs.
    pub fn mediant(a: &Self, b: &Self) -> Result<Self> {
        if a >= b {
            return Err(Error::invalid(format!(
                "mediant requires a < b, got {a} and {b}"
            )));
        }
        Rational::new(a.numer() + b.numer(), a.denom() + b.denom())
    }

    /// Midpoint (a+b)/2.
    pub fn midpoint(a: &Self, b: &Self) -> Self {
        Rational((&a.0 + &b.0) / BigRational::from_integer(2.into()))
    }

    /// Nearest binary floating-point value. Values beyond the f64 exponent
    /// range are a range error rather than a silent infinity.
    pub fn to_f64(&self) -> Result<f64> {
        let v = self
            .0
            .to_f64()
            .ok_or_else(|| Error::Range(format!("{self} is not representable as f64")))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Range(format!(
                "{self} overflows the f64 exponent range"
            )))
        }
    }

    /// Exact conversion of a finite float (every finite f64 is a dyadic
    /// rational). Returns `None` for NaN and infinities.
    pub fn from_f64(v: f64) -> Option<Self> {
        BigRational::from_float(v).map(Rational)
    }

    /// Canonical "p/q" form, denominator always written (used by JSON
    /// serialization and exact CLI output).
    pub fn to_frac_string(&self) -> String {
        format!("{}/{}", self.0.numer(), self.0.denom())
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Rational {
    type Err = Error;

    /// Accepts "p/q", "p", and decimal forms ("0.25" parses to 1/4 exactly).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::invalid("empty rational literal"));
        }
        if let Some((num, den)) = s.split_once('/') {
            let num: BigInt = num
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad numerator in {s:?}")))?;
            let den: BigInt = den
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad denominator in {s:?}")))?;
            return Rational::new(num, den);
        }
        if let Some((int_part, frac_part)) = s.split_once('.') {
            let neg = int_part.starts_with('-');
            let int_digits = int_part.trim_start_matches(['-', '+']);
            if !int_digits.chars().all(|c| c.is_ascii_digit())
                || !frac_part.chars().all(|c| c.is_ascii_digit())
                || frac_part.is_empty()
            {
                return Err(Error::invalid(format!("bad decimal literal {s:?}")));
            }
            let digits = format!("{int_digits}{frac_part}");
            let num: BigInt = digits
                .parse()
                .map_err(|_| Error::invalid(format!("bad decimal literal {s:?}")))?;
            let den = BigInt::from(10u32).pow(frac_part.len() as u32);
            let num = if neg { -num } else { num };
            return Rational::new(num, den);
        }
        let num: BigInt = s
            .parse()
            .map_err(|_| Error::invalid(format!("bad integer literal {s:?}")))?;
        Ok(Rational::from_int(num))
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_frac_string())
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(de::Error::custom)
    }
}

impl From<i64> for Rational {
    fn from(n: i64) -> Self {
        Rational::from_int(n)
    }
}

macro_rules! impl_binop {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait for &Rational {
            type Output = Rational;
            fn $method(self, rhs: &Rational) -> Rational {
                Rational(&self.0 $op &rhs.0)
            }
        }
        impl $trait for Rational {
            type Output = Rational;
            fn $method(self, rhs: Rational) -> Rational {
                Rational(self.0 $op rhs.0)
            }
        }
    };
}

impl_binop!(Add, add, +);
impl_binop!(Sub, sub, -);
impl_binop!(Mul, mul, *);

impl Div for &Rational {
    type Output = Rational;
    /// Panics on a zero divisor; use `div_exact` for a checked division.
    fn div(self, rhs: &Rational) -> Rational {
        assert!(!rhs.is_zero(), "rational division by zero");
        Rational(&self.0 / &rhs.0)
    }
}

impl Neg for &Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-&self.0)
    }
}

impl Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-self.0)
    }
}

/// Shorthand used across the crate and in tests: `rat(1, 2)` is 1/2.
pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(num, den).expect("nonzero denominator")
}
