//! Expressions in one variable.
//!
//! The AST covers rational literals, the variable `x`, the four arithmetic
//! operations, integer powers, and the calls exp, log, sin, cos, abs, max,
//! min. Literals are canonical [`Rational`]s and are never negative; negative
//! constants are represented as `Neg(Lit)`, which is also the only form the
//! parser can produce.
//!
//! Printing is precedence-aware and round-trips: `parse(print(e))` yields an
//! AST equal to `e`. The one subtlety is the greedy rational-literal
//! production (`3/4` is a single literal, not a division), so the printer
//! parenthesizes a denominator whenever the slash of a `Div` node could
//! otherwise fuse with neighbouring integer tokens.

mod builtins;
mod eval;
mod parse;

pub use builtins::{builtin_suite, lookup_builtin};
pub use parse::{parse, ParseError};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Lit(Rational),
    Var,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i64),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Abs,
    Max,
    Min,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Abs => "abs",
            Func::Max => "max",
            Func::Min => "min",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Max | Func::Min => 2,
            _ => 1,
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "abs" => Func::Abs,
            "max" => Func::Max,
            "min" => Func::Min,
            _ => return None,
        })
    }

    /// Whether exact rational evaluation passes through this call.
    pub fn is_rational_closed(self) -> bool {
        matches!(self, Func::Abs | Func::Max | Func::Min)
    }
}

impl Expr {
    /// Literal constructor; negative values become `Neg(Lit(|r|))` so the
    /// nonnegative-literal invariant holds for programmatic construction too.
    pub fn lit(r: Rational) -> Expr {
        if r.is_negative() {
            Expr::Neg(Box::new(Expr::Lit(r.abs())))
        } else {
            Expr::Lit(r)
        }
    }

    pub fn var() -> Expr {
        Expr::Var
    }

    fn prec(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            Expr::Lit(_) | Expr::Var | Expr::Call(..) => 5,
        }
    }

    /// True if the unparenthesized rendering of `self` begins with a positive
    /// integer token, i.e. could be eaten by the greedy literal production
    /// when it follows `int /`.
    fn starts_with_posint(&self) -> bool {
        match self {
            Expr::Lit(r) => !r.is_zero() && !r.is_negative(),
            Expr::Pow(base, _) if base.prec() == 5 => base.starts_with_posint(),
            _ => false,
        }
    }
}

/// Writes `e`, parenthesizing if its precedence is below `min_prec`. Returns
/// true when the emitted text ends with a bare integer-literal atom, the only
/// token the greedy literal production can fuse with a following `/ posint`.
fn fmt_prec(e: &Expr, min_prec: u8, f: &mut fmt::Formatter<'_>) -> Result<bool, fmt::Error> {
    if e.prec() < min_prec {
        write!(f, "(")?;
        fmt_prec(e, 0, f)?;
        write!(f, ")")?;
        return Ok(false);
    }
    match e {
        Expr::Lit(r) => {
            write!(f, "{r}")?;
            Ok(r.is_integer())
        }
        Expr::Var => {
            write!(f, "x")?;
            Ok(false)
        }
        Expr::Neg(c) => {
            write!(f, "-")?;
            fmt_prec(c, 3, f)
        }
        Expr::Add(a, b) => {
            fmt_prec(a, 1, f)?;
            write!(f, " + ")?;
            fmt_prec(b, 2, f)
        }
        Expr::Sub(a, b) => {
            fmt_prec(a, 1, f)?;
            write!(f, " - ")?;
            fmt_prec(b, 2, f)
        }
        Expr::Mul(a, b) => {
            fmt_prec(a, 2, f)?;
            write!(f, "*")?;
            fmt_prec(b, 3, f)
        }
        Expr::Div(a, b) => {
            let ends_int = fmt_prec(a, 2, f)?;
            write!(f, "/")?;
            if ends_int && b.prec() >= 3 && b.starts_with_posint() {
                write!(f, "(")?;
                fmt_prec(b, 0, f)?;
                write!(f, ")")?;
                Ok(false)
            } else {
                fmt_prec(b, 3, f)
            }
        }
        Expr::Pow(base, k) => {
            if base.prec() == 5 {
                fmt_prec(base, 5, f)?;
            } else {
                write!(f, "(")?;
                fmt_prec(base, 0, f)?;
                write!(f, ")")?;
            }
            write!(f, "^{k}")?;
            Ok(false)
        }
        Expr::Call(func, args) => {
            write!(f, "{}(", func.name())?;
            for (i, arg) in args.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                fmt_prec(arg, 0, f)?;
            }
            write!(f, ")")?;
            Ok(false)
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_prec(self, 0, f).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Convex,
    Concave,
    Affine,
    Unknown,
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Shape::Convex => "convex",
            Shape::Concave => "concave",
            Shape::Affine => "affine",
            Shape::Unknown => "unknown",
        };
        f.write_str(s)
    }
}

/// Open interval domain; `None` endpoints are infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lo: Option<Rational>,
    pub hi: Option<Rational>,
}

impl Domain {
    pub fn full() -> Self {
        Domain { lo: None, hi: None }
    }

    pub fn open(lo: Rational, hi: Rational) -> Self {
        Domain {
            lo: Some(lo),
            hi: Some(hi),
        }
    }

    pub fn contains(&self, x: &Rational) -> bool {
        self.lo.as_ref().is_none_or(|lo| lo < x) && self.hi.as_ref().is_none_or(|hi| x < hi)
    }

    pub fn contains_f64(&self, x: f64) -> bool {
        let above = match &self.lo {
            Some(lo) => lo.to_f64().map(|l| l < x).unwrap_or(false),
            None => true,
        };
        let below = match &self.hi {
            Some(hi) => hi.to_f64().map(|h| x < h).unwrap_or(false),
            None => true,
        };
        above && below
    }
}

/// A named function, optionally paired with a known antiderivative.
/// `declared_shape` is advisory; nothing downstream trusts it without an
/// actual convexity check.
#[derive(Debug, Clone, PartialEq)]
pub struct FuncDef {
    pub name: String,
    pub body: Expr,
    pub antiderivative: Option<Expr>,
    pub declared_shape: Shape,
    pub domain: Domain,
}
