//! Expression evaluation: fast float path, exact rational path, and the
//! combined `Num` path that stays exact until a transcendental node forces a
//! float.

use super::{Expr, Func};
use crate::error::{Error, Result};
use crate::rational::Rational;
use crate::value::Num;

impl Expr {
    /// IEEE double evaluation. Division by zero and `log` of a non-positive
    /// argument are domain errors rather than silent NaN/inf.
    pub fn eval_float(&self, x: f64) -> Result<f64> {
        match self {
            Expr::Lit(r) => r.to_f64(),
            Expr::Var => Ok(x),
            Expr::Neg(c) => Ok(-c.eval_float(x)?),
            Expr::Add(a, b) => Ok(a.eval_float(x)? + b.eval_float(x)?),
            Expr::Sub(a, b) => Ok(a.eval_float(x)? - b.eval_float(x)?),
            Expr::Mul(a, b) => Ok(a.eval_float(x)? * b.eval_float(x)?),
            Expr::Div(a, b) => {
                let d = b.eval_float(x)?;
                if d == 0.0 {
                    return Err(Error::Domain("division by zero".into()));
                }
                Ok(a.eval_float(x)? / d)
            }
            Expr::Pow(base, k) => {
                let v = base.eval_float(x)?;
                if v == 0.0 && *k < 0 {
                    return Err(Error::Domain("zero raised to a negative power".into()));
                }
                let e = i32::try_from(*k)
                    .map_err(|_| Error::Range(format!("exponent {k} out of range")))?;
                Ok(v.powi(e))
            }
            Expr::Call(func, args) => {
                let a0 = args[0].eval_float(x)?;
                match func {
                    Func::Exp => Ok(a0.exp()),
                    Func::Log => {
                        if a0 <= 0.0 {
                            Err(Error::Domain(format!("log of non-positive value {a0}")))
                        } else {
                            Ok(a0.ln())
                        }
                    }
                    Func::Sin => Ok(a0.sin()),
                    Func::Cos => Ok(a0.cos()),
                    Func::Abs => Ok(a0.abs()),
                    Func::Max => Ok(a0.max(args[1].eval_float(x)?)),
                    Func::Min => Ok(a0.min(args[1].eval_float(x)?)),
                }
            }
        }
    }

    /// Exact evaluation over the rational-closed fragment (+, −, ×, ÷,
    /// integer powers, abs, max, min). `Ok(None)` signals that a
    /// transcendental node was reached; it is not an error.
    pub fn eval_rational(&self, x: &Rational) -> Result<Option<Rational>> {
        match self {
            Expr::Lit(r) => Ok(Some(r.clone())),
            Expr::Var => Ok(Some(x.clone())),
            Expr::Neg(c) => Ok(c.eval_rational(x)?.map(|v| -&v)),
            Expr::Add(a, b) => {
                Ok(both(a.eval_rational(x)?, b.eval_rational(x)?).map(|(u, v)| &u + &v))
            }
            Expr::Sub(a, b) => {
                Ok(both(a.eval_rational(x)?, b.eval_rational(x)?).map(|(u, v)| &u - &v))
            }
            Expr::Mul(a, b) => {
                Ok(both(a.eval_rational(x)?, b.eval_rational(x)?).map(|(u, v)| &u * &v))
            }
            Expr::Div(a, b) => match both(a.eval_rational(x)?, b.eval_rational(x)?) {
                Some((u, v)) => u.div_exact(&v).map(Some),
                None => Ok(None),
            },
            Expr::Pow(base, k) => match base.eval_rational(x)? {
                Some(v) => v.pow_i(*k).map(Some),
                None => Ok(None),
            },
            Expr::Call(func, args) => {
                if !func.is_rational_closed() {
                    return Ok(None);
                }
                let a0 = args[0].eval_rational(x)?;
                match func {
                    Func::Abs => Ok(a0.map(|v| v.abs())),
                    Func::Max => Ok(both(a0, args[1].eval_rational(x)?).map(|(u, v)| u.max(v))),
                    Func::Min => Ok(both(a0, args[1].eval_rational(x)?).map(|(u, v)| u.min(v))),
                    _ => unreachable!("non-closed calls returned above"),
                }
            }
        }
    }

    /// Evaluation that keeps exactness as long as every operand allows it and
    /// degrades to f64 at the first transcendental node or float input.
    pub fn eval_num(&self, x: &Num) -> Result<Num> {
        match self {
            Expr::Lit(r) => Ok(Num::Exact(r.clone())),
            Expr::Var => Ok(x.clone()),
            Expr::Neg(c) => Ok(c.eval_num(x)?.neg()),
            Expr::Add(a, b) => Ok(a.eval_num(x)?.add(&b.eval_num(x)?)),
            Expr::Sub(a, b) => Ok(a.eval_num(x)?.sub(&b.eval_num(x)?)),
            Expr::Mul(a, b) => Ok(a.eval_num(x)?.mul(&b.eval_num(x)?)),
            Expr::Div(a, b) => a.eval_num(x)?.div(&b.eval_num(x)?),
            Expr::Pow(base, k) => base.eval_num(x)?.pow_i(*k),
            Expr::Call(func, args) => {
                let a0 = args[0].eval_num(x)?;
                match func {
                    Func::Abs => Ok(a0.abs()),
                    Func::Max => Ok(a0.max(args[1].eval_num(x)?)),
                    Func::Min => Ok(a0.min(args[1].eval_num(x)?)),
                    Func::Exp => Ok(Num::Approx(a0.to_f64().exp())),
                    Func::Log => {
                        let v = a0.to_f64();
                        if v <= 0.0 {
                            Err(Error::Domain(format!("log of non-positive value {v}")))
                        } else {
                            Ok(Num::Approx(v.ln()))
                        }
                    }
                    Func::Sin => Ok(Num::Approx(a0.to_f64().sin())),
                    Func::Cos => Ok(Num::Approx(a0.to_f64().cos())),
                }
            }
        }
    }

    /// True when every node of the tree is rational-closed, i.e.
    /// `eval_rational` can never return the NotExact signal.
    pub fn is_rational_closed(&self) -> bool {
        match self {
            Expr::Lit(_) | Expr::Var => true,
            Expr::Neg(c) => c.is_rational_closed(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.is_rational_closed() && b.is_rational_closed()
            }
            Expr::Pow(base, _) => base.is_rational_closed(),
            Expr::Call(func, args) => {
                func.is_rational_closed() && args.iter().all(Expr::is_rational_closed)
            }
        }
    }
}

fn both(a: Option<Rational>, b: Option<Rational>) -> Option<(Rational, Rational)> {
    match (a, b) {
        (Some(a), Some(b)) => Some((a, b)),
        _ => None,
    }
}

impl super::FuncDef {
    /// Evaluate the body at a rational point, exactly when the body is
    /// rational-closed and in floats otherwise.
    pub fn eval_at(&self, t: &Rational) -> Result<Num> {
        if self.body.is_rational_closed() {
            self.body.eval_num(&Num::Exact(t.clone()))
        } else {
            Ok(Num::Approx(self.body.eval_float(t.to_f64()?)?))
        }
    }
}
