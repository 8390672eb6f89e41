//! Darboux-style sums over rational partitions and the bracketing
//! integration driver.
//!
//! True per-cell sup/inf of a black-box function is uncomputable, so every
//! sum is parameterized by a [`BoundStrategy`] and reports carry the strategy
//! and an exactness flag rather than pretending the bounds are ideal:
//!
//! * [`BoundStrategy::EndpointConvex`] is valid for functions declared (or
//!   separately verified) convex, concave, or affine. The endpoint side is
//!   exact: a convex function attains its sup over a cell at an endpoint.
//!   The opposite side locates the single interior extremum once per
//!   interval by ternary search; cells away from it are monotone and stay
//!   endpoint-exact, and only the one or two cells containing the extremum
//!   fall back to a bounded-tolerance local search.
//! * [`BoundStrategy::DenseSample`] probes each cell at `count` equally
//!   spaced rational points (endpoints included), giving inner estimates
//!   for any shape.
//! * [`BoundStrategy::UserOracle`] delegates the cell bounds entirely.
//!
//! The driver walks a refinement schedule (dyadic by default; the grids
//! nest, so the running bracket is monotone), keeps the tightest
//! [max lower, min upper] bracket seen, and reports its midpoint as the
//! value. Affine integrands short-circuit to the exact closed form
//! `g((a+b)/2)(b-a)`. Deep dyadic grids are streamed point-by-point instead
//! of materializing a partition.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{Expr, FuncDef, Shape};
use crate::partition::KPartition;
use crate::rational::{rat, Rational};
use crate::value::Num;

/// Per-cell bounds supplier for [`BoundStrategy::UserOracle`]: returns
/// `(inf, sup)` estimates for `f` over `[lo, hi]`.
pub trait CellOracle: Send + Sync {
    fn bounds(&self, f: &FuncDef, lo: &Rational, hi: &Rational) -> Result<(Num, Num)>;
}

#[derive(Clone)]
pub enum BoundStrategy {
    EndpointConvex,
    DenseSample(u32),
    UserOracle(Arc<dyn CellOracle>),
}

impl BoundStrategy {
    pub fn descriptor(&self) -> String {
        match self {
            BoundStrategy::EndpointConvex => "endpoint".to_string(),
            BoundStrategy::DenseSample(n) => format!("dense:{n}"),
            BoundStrategy::UserOracle(_) => "oracle".to_string(),
        }
    }
}

impl fmt::Debug for BoundStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.descriptor())
    }
}

impl Serialize for BoundStrategy {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.descriptor())
    }
}

/// Lower and upper Darboux-style sums over one partition, with the strategy
/// that produced the cell bounds and whether every step stayed exact.
#[derive(Debug, Clone, Serialize)]
pub struct SumReport {
    pub partition: KPartition,
    pub lower: Num,
    pub upper: Num,
    pub strategy: BoundStrategy,
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TagRule {
    Left,
    Right,
    Midpoint,
    Explicit(Vec<Rational>),
}

/// Refinement schedule for the driver.
#[derive(Debug, Clone)]
pub enum Schedule {
    /// Uniform 2^d-cell grids for d = 1..=max_depth, streamed.
    Dyadic { max_depth: u32 },
    /// Caller-supplied partitions, walked in order; all must cover the
    /// integration interval.
    Explicit(Vec<KPartition>),
}

/// Streaming depths beyond this would take hours regardless of memory.
const MAX_DRIVER_DEPTH: u32 = 26;

/// Cell count past which a dyadic refinement pass stops computing exact
/// Darboux sums and continues in floats. Exact passes cost several
/// arbitrary-precision operations per cell, so letting the ladder run them
/// at depth 20 (a million cells) takes minutes while contributing nothing a
/// practical tolerance can see; the float tail keeps the bracket semantics
/// with rounding error around 1e−12. Partition-level sums and explicit
/// schedules are never affected: their sizes are the caller's choice.
pub const EXACT_REFINEMENT_LIMIT: usize = 1024;

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Dyadic { max_depth: 20 }
    }
}

#[derive(Debug, Clone)]
pub struct IntegrateOptions {
    pub tol: f64,
    pub schedule: Schedule,
    /// `None` selects by declared shape: endpoint bounds for
    /// convex/concave/affine, a small dense sample otherwise.
    pub strategy: Option<BoundStrategy>,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            tol: 1e-6,
            schedule: Schedule::default(),
            strategy: None,
        }
    }
}

/// One schedule step of the driver trace.
#[derive(Debug, Clone, Serialize)]
pub struct BracketRow {
    pub depth: u32,
    pub cells: usize,
    pub lower: Num,
    pub upper: Num,
    pub midpoint: Num,
    pub trapezoid: Num,
}

#[derive(Debug, Clone, Serialize)]
pub struct IntegralEstimate {
    pub value: Num,
    pub lower: Num,
    pub upper: Num,
    pub converged: bool,
    /// True when the reported value is an exact rational: closed-form affine
    /// integrands always, otherwise rational-closed integrands whose bracket
    /// tightened within [`EXACT_REFINEMENT_LIMIT`] cells per pass.
    pub exact: bool,
    pub tolerance: f64,
    pub schedule: Vec<String>,
    pub rows: Vec<BracketRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AdditivityReport {
    pub holds: bool,
    /// True when all three integrals came out with a zero-width bracket, in
    /// which case `holds` demanded exact equality rather than `tolerance`.
    pub exact: bool,
    pub whole: Num,
    pub left_part: Num,
    pub right_part: Num,
    pub residual: Num,
    pub tolerance: f64,
}

/// Affine slope/intercept of an expression, when the tree is affine in `x`.
pub fn as_affine(e: &Expr) -> Option<(Rational, Rational)> {
    match e {
        Expr::Lit(r) => Some((Rational::zero(), r.clone())),
        Expr::Var => Some((Rational::one(), Rational::zero())),
        Expr::Neg(c) => as_affine(c).map(|(s, i)| (-&s, -&i)),
        Expr::Add(a, b) => {
            let (sa, ia) = as_affine(a)?;
            let (sb, ib) = as_affine(b)?;
            Some((&sa + &sb, &ia + &ib))
        }
        Expr::Sub(a, b) => {
            let (sa, ia) = as_affine(a)?;
            let (sb, ib) = as_affine(b)?;
            Some((&sa - &sb, &ia - &ib))
        }
        Expr::Mul(a, b) => {
            let (sa, ia) = as_affine(a)?;
            let (sb, ib) = as_affine(b)?;
            if sa.is_zero() {
                Some((&ia * &sb, &ia * &ib))
            } else if sb.is_zero() {
                Some((&sa * &ib, &ia * &ib))
            } else {
                None
            }
        }
        Expr::Div(a, b) => {
            let (sa, ia) = as_affine(a)?;
            let (sb, ib) = as_affine(b)?;
            if sb.is_zero() && !ib.is_zero() {
                Some((sa.div_exact(&ib).ok()?, ia.div_exact(&ib).ok()?))
            } else {
                None
            }
        }
        Expr::Pow(base, k) => match *k {
            0 => Some((Rational::zero(), Rational::one())),
            1 => as_affine(base),
            _ => {
                let (s, i) = as_affine(base)?;
                if s.is_zero() {
                    Some((Rational::zero(), i.pow_i(*k).ok()?))
                } else {
                    None
                }
            }
        },
        Expr::Call(_, _) => {
            // constant subtree: abs/max/min of constants folds exactly
            if e.is_rational_closed() {
                let args_constant = collect_vars(e) == 0;
                if args_constant {
                    let v = e.eval_rational(&Rational::zero()).ok()??;
                    return Some((Rational::zero(), v));
                }
            }
            None
        }
    }
}

fn collect_vars(e: &Expr) -> usize {
    match e {
        Expr::Lit(_) => 0,
        Expr::Var => 1,
        Expr::Neg(c) => collect_vars(c),
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
            collect_vars(a) + collect_vars(b)
        }
        Expr::Pow(base, _) => collect_vars(base),
        Expr::Call(_, args) => args.iter().map(collect_vars).sum(),
    }
}

/// Closed form for an affine integrand: (slope·(a+b)/2 + intercept)·(b−a),
/// exactly. The midpoint tag is exact for affine functions, so no
/// refinement is needed.
pub fn affine_integral_exact(
    slope: &Rational,
    intercept: &Rational,
    a: &Rational,
    b: &Rational,
) -> Result<Rational> {
    if a >= b {
        return Err(Error::invalid(format!(
            "affine integral needs a < b, got [{a}, {b}]"
        )));
    }
    let mid = Rational::midpoint(a, b);
    let g_mid = &(slope * &mid) + intercept;
    Ok(&g_mid * &(b - a))
}

/// Function evaluation with the widest exactness the expression permits.
struct Evaluator<'a> {
    expr: &'a Expr,
    exact: bool,
}

impl<'a> Evaluator<'a> {
    fn new(f: &'a FuncDef) -> Self {
        Evaluator {
            expr: &f.body,
            exact: f.body.is_rational_closed(),
        }
    }

    fn eval_point(&self, t: &Rational) -> Result<Num> {
        if self.exact {
            self.expr.eval_num(&Num::Exact(t.clone()))
        } else {
            Ok(Num::Approx(self.expr.eval_float(t.to_f64()?)?))
        }
    }

    fn eval_f64(&self, x: f64) -> Result<f64> {
        self.expr.eval_float(x)
    }
}

/// Resolved per-cell bound policy; built once per (function, interval).
enum Plan {
    /// Monotone-linear: both bounds at endpoints, exact.
    Affine,
    /// Convex: sup at endpoints; inf exact on cells away from the located
    /// argmin bracket, local search inside it.
    Convex {
        arg: (f64, f64),
    },
    /// Concave mirror image.
    Concave {
        arg: (f64, f64),
    },
    Dense {
        count: u32,
    },
    Oracle(Arc<dyn CellOracle>),
}

fn ternary_extremum(
    eval: &Evaluator<'_>,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    maximize: bool,
) -> Result<(f64, f64)> {
    while hi - lo > tol {
        let third = (hi - lo) / 3.0;
        let m1 = lo + third;
        let m2 = hi - third;
        let v1 = eval.eval_f64(m1)?;
        let v2 = eval.eval_f64(m2)?;
        let keep_left = if maximize { v1 >= v2 } else { v1 <= v2 };
        if keep_left {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    Ok((lo, hi))
}

fn prepare_plan(
    strategy: &BoundStrategy,
    f: &FuncDef,
    eval: &Evaluator<'_>,
    a: &Rational,
    b: &Rational,
) -> Result<Plan> {
    match strategy {
        BoundStrategy::EndpointConvex => {
            if as_affine(&f.body).is_some() {
                return Ok(Plan::Affine);
            }
            let shape = f.declared_shape;
            let (af, bf) = (a.to_f64()?, b.to_f64()?);
            let width = bf - af;
            let tol = width * 1e-12;
            match shape {
                Shape::Affine => Ok(Plan::Affine),
                Shape::Convex => {
                    let arg = ternary_extremum(eval, af, bf, tol, false)?;
                    Ok(Plan::Convex { arg })
                }
                Shape::Concave => {
                    let arg = ternary_extremum(eval, af, bf, tol, true)?;
                    Ok(Plan::Concave { arg })
                }
                Shape::Unknown => Err(Error::StrategyMisuse(format!(
                    "endpoint bounds need a convex/concave/affine shape, but '{}' is unverified",
                    f.name
                ))),
            }
        }
        BoundStrategy::DenseSample(count) => {
            if *count < 2 {
                Err(Error::invalid("dense sampling needs at least 2 probes"))
            } else {
                Ok(Plan::Dense { count: *count })
            }
        }
        BoundStrategy::UserOracle(oracle) => Ok(Plan::Oracle(Arc::clone(oracle))),
    }
}

/// `(inf, sup)` estimates for one cell, given already-computed endpoint
/// values.
#[allow(clippy::too_many_arguments)]
fn cell_bounds(
    plan: &Plan,
    f: &FuncDef,
    eval: &Evaluator<'_>,
    lo: &Rational,
    hi: &Rational,
    v_lo: &Num,
    v_hi: &Num,
) -> Result<(Num, Num)> {
    let endpoint_min = v_lo.clone().min(v_hi.clone());
    let endpoint_max = v_lo.clone().max(v_hi.clone());
    match plan {
        Plan::Affine => Ok((endpoint_min, endpoint_max)),
        Plan::Convex { arg } => {
            let inf = one_sided_extremum(eval, lo, hi, v_lo, v_hi, *arg, false)?;
            Ok((inf, endpoint_max))
        }
        Plan::Concave { arg } => {
            let sup = one_sided_extremum(eval, lo, hi, v_lo, v_hi, *arg, true)?;
            Ok((endpoint_min, sup))
        }
        Plan::Dense { count } => {
            let mut min_v = endpoint_min;
            let mut max_v = endpoint_max;
            let steps = i64::from(*count) - 1;
            let width = hi - lo;
            for j in 1..steps {
                let t = lo + &(&width * &rat(j, steps));
                let v = eval.eval_point(&t)?;
                min_v = min_v.min(v.clone());
                max_v = max_v.max(v);
            }
            Ok((min_v, max_v))
        }
        Plan::Oracle(oracle) => oracle.bounds(f, lo, hi),
    }
}

/// True when the located argmin/argmax bracket cannot touch the cell, which
/// makes the function monotone there and puts the extremum at an endpoint.
fn bracket_misses_cell((arg_lo, arg_hi): (f64, f64), lo_f: f64, hi_f: f64) -> bool {
    let snap = (arg_hi - arg_lo).max(f64::EPSILON * (hi_f - lo_f).abs());
    arg_hi <= lo_f + snap || arg_lo >= hi_f - snap
}

/// Interior-extremum side of the endpoint strategy. Cells that the located
/// argmin/argmax bracket cannot touch are monotone, so the extremum is at an
/// endpoint and stays exact; the bracket cell gets a bounded local ternary
/// search (tolerance cell-width · 1e−9).
fn one_sided_extremum(
    eval: &Evaluator<'_>,
    lo: &Rational,
    hi: &Rational,
    v_lo: &Num,
    v_hi: &Num,
    arg: (f64, f64),
    maximize: bool,
) -> Result<Num> {
    let lo_f = lo.to_f64()?;
    let hi_f = hi.to_f64()?;
    if bracket_misses_cell(arg, lo_f, hi_f) {
        return Ok(if maximize {
            v_lo.clone().max(v_hi.clone())
        } else {
            v_lo.clone().min(v_hi.clone())
        });
    }
    let cell_tol = (hi_f - lo_f) * 1e-9;
    let (bl, bh) = ternary_extremum(eval, lo_f, hi_f, cell_tol, maximize)?;
    let interior = eval.eval_f64(0.5 * (bl + bh))?;
    let acc = Num::Approx(interior);
    Ok(if maximize {
        acc.max(v_lo.clone()).max(v_hi.clone())
    } else {
        acc.min(v_lo.clone()).min(v_hi.clone())
    })
}

/// One full pass over a partition's points: lower, upper, midpoint-tagged and
/// trapezoid sums, sharing a single evaluation per grid point. Summation is
/// strictly left-to-right so float results are reproducible.
struct PassSums {
    lower: Num,
    upper: Num,
    midpoint: Num,
    trapezoid: Num,
}

/// Float twin of [`cell_bounds`] for integrands that evaluate in floats
/// anyway; grid points never exist as rationals on this path.
fn cell_bounds_f64(
    plan: &Plan,
    eval: &Evaluator<'_>,
    lo: f64,
    hi: f64,
    v_lo: f64,
    v_hi: f64,
) -> Result<(f64, f64)> {
    let endpoint_min = v_lo.min(v_hi);
    let endpoint_max = v_lo.max(v_hi);
    match plan {
        Plan::Affine => Ok((endpoint_min, endpoint_max)),
        Plan::Convex { arg } => {
            let inf = one_sided_extremum_f64(eval, lo, hi, v_lo, v_hi, *arg, false)?;
            Ok((inf, endpoint_max))
        }
        Plan::Concave { arg } => {
            let sup = one_sided_extremum_f64(eval, lo, hi, v_lo, v_hi, *arg, true)?;
            Ok((endpoint_min, sup))
        }
        Plan::Dense { count } => {
            let mut min_v = endpoint_min;
            let mut max_v = endpoint_max;
            let steps = i64::from(*count) - 1;
            for j in 1..steps {
                let t = lo + (hi - lo) * (j as f64) / (steps as f64);
                let v = eval.eval_f64(t)?;
                min_v = min_v.min(v);
                max_v = max_v.max(v);
            }
            Ok((min_v, max_v))
        }
        Plan::Oracle(_) => Err(Error::invalid(
            "oracle bounds require the rational cell pass",
        )),
    }
}

fn one_sided_extremum_f64(
    eval: &Evaluator<'_>,
    lo: f64,
    hi: f64,
    v_lo: f64,
    v_hi: f64,
    arg: (f64, f64),
    maximize: bool,
) -> Result<f64> {
    if bracket_misses_cell(arg, lo, hi) {
        return Ok(if maximize {
            v_lo.max(v_hi)
        } else {
            v_lo.min(v_hi)
        });
    }
    let cell_tol = (hi - lo) * 1e-9;
    let (bl, bh) = ternary_extremum(eval, lo, hi, cell_tol, maximize)?;
    let interior = eval.eval_f64(0.5 * (bl + bh))?;
    Ok(if maximize {
        interior.max(v_lo).max(v_hi)
    } else {
        interior.min(v_lo).min(v_hi)
    })
}

fn pass_float<I>(eval: &Evaluator<'_>, plan: &Plan, points: I) -> Result<PassSums>
where
    I: IntoIterator<Item = f64>,
{
    let mut it = points.into_iter();
    let mut t_prev = it
        .next()
        .ok_or_else(|| Error::invalid("empty point sequence"))?;
    let mut v_prev = eval.eval_f64(t_prev)?;
    let (mut lower, mut upper, mut midpoint, mut trapezoid) = (0.0f64, 0.0, 0.0, 0.0);
    for t in it {
        let v = eval.eval_f64(t)?;
        let width = t - t_prev;
        let (inf, sup) = cell_bounds_f64(plan, eval, t_prev, t, v_prev, v)?;
        lower += inf * width;
        upper += sup * width;
        midpoint += eval.eval_f64(0.5 * (t_prev + t))? * width;
        trapezoid += 0.5 * (v_prev + v) * width;
        t_prev = t;
        v_prev = v;
    }
    Ok(PassSums {
        lower: Num::Approx(lower),
        upper: Num::Approx(upper),
        midpoint: Num::Approx(midpoint),
        trapezoid: Num::Approx(trapezoid),
    })
}

fn pass<I>(f: &FuncDef, eval: &Evaluator<'_>, plan: &Plan, points: I) -> Result<PassSums>
where
    I: IntoIterator<Item = Rational>,
{
    let two = rat(2, 1);
    let mut it = points.into_iter();
    let mut t_prev = it
        .next()
        .ok_or_else(|| Error::invalid("empty point sequence"))?;
    let mut v_prev = eval.eval_point(&t_prev)?;
    let mut lower = Num::zero();
    let mut upper = Num::zero();
    let mut midpoint = Num::zero();
    let mut trapezoid = Num::zero();
    for t in it {
        let v = eval.eval_point(&t)?;
        let width = Num::Exact(&t - &t_prev);
        let (inf, sup) = cell_bounds(plan, f, eval, &t_prev, &t, &v_prev, &v)?;
        lower = lower.add(&inf.mul(&width));
        upper = upper.add(&sup.mul(&width));
        let mid_t = Rational::midpoint(&t_prev, &t);
        let v_mid = eval.eval_point(&mid_t)?;
        midpoint = midpoint.add(&v_mid.mul(&width));
        let avg = v_prev.add(&v).div(&Num::Exact(two.clone()))?;
        trapezoid = trapezoid.add(&avg.mul(&width));
        t_prev = t;
        v_prev = v;
    }
    Ok(PassSums {
        lower,
        upper,
        midpoint,
        trapezoid,
    })
}

fn accumulate_extra(slot: &mut Option<Num>, term: Num) {
    *slot = Some(match slot.take() {
        Some(prev) => prev.add(&term),
        None => term,
    });
}

/// Exact pass specialized to uniform grids: points advance by one addition of
/// the constant step, the cell width is factored out of every sum, and the
/// trapezoid reuses the endpoint evaluations. Algebraically this equals
/// [`pass`] over the same points; it just spends far fewer
/// arbitrary-precision operations per cell. Cells overlapping an interior
/// argmin/argmax bracket fall back to the searched bound, collected
/// separately so the rest of the sum stays exact.
fn pass_uniform_exact(
    eval: &Evaluator<'_>,
    plan: &Plan,
    a: &Rational,
    b: &Rational,
    n: i64,
) -> Result<PassSums> {
    let h = (b - a).div_exact(&Rational::from_int(n))?;
    let half_h = h.div_exact(&rat(2, 1))?;
    let dense_offsets: Vec<Rational> = if let Plan::Dense { count } = plan {
        let steps = i64::from(*count) - 1;
        (1..steps).map(|j| &h * &rat(j, steps)).collect()
    } else {
        Vec::new()
    };
    let exact_at = |t: &Rational| -> Result<Rational> {
        eval.expr
            .eval_rational(t)?
            .ok_or_else(|| Error::Arithmetic("exact evaluation left the rationals".into()))
    };

    let mut t_prev = a.clone();
    let mut tf_prev = t_prev.to_f64()?;
    let mut v_prev = exact_at(&t_prev)?;
    let v_first = v_prev.clone();
    let mut sum_inf = Rational::zero();
    let mut sum_sup = Rational::zero();
    let mut sum_mid = Rational::zero();
    let mut interior = Rational::zero();
    let mut lower_extra: Option<Num> = None;
    let mut upper_extra: Option<Num> = None;

    for i in 1..=n {
        let t = if i == n { b.clone() } else { &t_prev + &h };
        let tf = t.to_f64()?;
        let v = exact_at(&t)?;
        let (cell_min, cell_max) = if v_prev <= v {
            (&v_prev, &v)
        } else {
            (&v, &v_prev)
        };
        match plan {
            Plan::Affine => {
                sum_inf = &sum_inf + cell_min;
                sum_sup = &sum_sup + cell_max;
            }
            Plan::Convex { arg } => {
                sum_sup = &sum_sup + cell_max;
                if bracket_misses_cell(*arg, tf_prev, tf) {
                    sum_inf = &sum_inf + cell_min;
                } else {
                    let inf = one_sided_extremum(
                        eval,
                        &t_prev,
                        &t,
                        &Num::Exact(v_prev.clone()),
                        &Num::Exact(v.clone()),
                        *arg,
                        false,
                    )?;
                    accumulate_extra(&mut lower_extra, inf.mul(&Num::Exact(h.clone())));
                }
            }
            Plan::Concave { arg } => {
                sum_inf = &sum_inf + cell_min;
                if bracket_misses_cell(*arg, tf_prev, tf) {
                    sum_sup = &sum_sup + cell_max;
                } else {
                    let sup = one_sided_extremum(
                        eval,
                        &t_prev,
                        &t,
                        &Num::Exact(v_prev.clone()),
                        &Num::Exact(v.clone()),
                        *arg,
                        true,
                    )?;
                    accumulate_extra(&mut upper_extra, sup.mul(&Num::Exact(h.clone())));
                }
            }
            Plan::Dense { .. } => {
                let mut lo_v = cell_min.clone();
                let mut hi_v = cell_max.clone();
                for off in &dense_offsets {
                    let pv = exact_at(&(&t_prev + off))?;
                    if pv < lo_v {
                        lo_v = pv;
                    } else if pv > hi_v {
                        hi_v = pv;
                    }
                }
                sum_inf = &sum_inf + &lo_v;
                sum_sup = &sum_sup + &hi_v;
            }
            Plan::Oracle(_) => {
                return Err(Error::invalid(
                    "oracle bounds require the generic cell pass",
                ))
            }
        }
        sum_mid = &sum_mid + &exact_at(&(&t_prev + &half_h))?;
        if i < n {
            interior = &interior + &v;
        }
        t_prev = t;
        tf_prev = tf;
        v_prev = v;
    }

    let ends_half = (&v_first + &v_prev).div_exact(&rat(2, 1))?;
    let mut lower = Num::Exact(&sum_inf * &h);
    if let Some(extra) = lower_extra {
        lower = lower.add(&extra);
    }
    let mut upper = Num::Exact(&sum_sup * &h);
    if let Some(extra) = upper_extra {
        upper = upper.add(&extra);
    }
    Ok(PassSums {
        lower,
        upper,
        midpoint: Num::Exact(&sum_mid * &h),
        trapezoid: Num::Exact(&(&interior + &ends_half) * &h),
    })
}

fn float_dyadic_pass(
    eval: &Evaluator<'_>,
    plan: &Plan,
    a: &Rational,
    b: &Rational,
    depth: u32,
) -> Result<PassSums> {
    let (af, bf) = (a.to_f64()?, b.to_f64()?);
    let n = 1u64 << depth;
    let h = (bf - af) / n as f64;
    let pts = (0..=n).map(move |i| if i == n { bf } else { af + i as f64 * h });
    pass_float(eval, plan, pts)
}

fn dyadic_points(a: &Rational, b: &Rational, depth: u32) -> impl Iterator<Item = Rational> {
    let n = 1i64 << depth;
    let h = (b - a).div_exact(&Rational::from_int(n)).expect("n > 0");
    let a = a.clone();
    (0..=n).map(move |i| {
        if i == 0 {
            a.clone()
        } else {
            &a + &(&h * &Rational::from_int(i))
        }
    })
}

fn resolve_strategy(f: &FuncDef, requested: Option<&BoundStrategy>) -> BoundStrategy {
    if let Some(s) = requested {
        return s.clone();
    }
    match f.declared_shape {
        Shape::Convex | Shape::Concave | Shape::Affine => BoundStrategy::EndpointConvex,
        Shape::Unknown => BoundStrategy::DenseSample(5),
    }
}

fn darboux(f: &FuncDef, p: &KPartition, strategy: &BoundStrategy) -> Result<PassSums> {
    let eval = Evaluator::new(f);
    let plan = prepare_plan(strategy, f, &eval, p.a(), p.b())?;
    pass(f, &eval, &plan, p.points())
}

/// Σ sup-estimate · cell width.
pub fn upper_sum(f: &FuncDef, p: &KPartition, strategy: &BoundStrategy) -> Result<Num> {
    Ok(darboux(f, p, strategy)?.upper)
}

/// Σ inf-estimate · cell width.
pub fn lower_sum(f: &FuncDef, p: &KPartition, strategy: &BoundStrategy) -> Result<Num> {
    Ok(darboux(f, p, strategy)?.lower)
}

/// Both Darboux sums plus the metadata that qualifies them.
pub fn sum_report(f: &FuncDef, p: &KPartition, strategy: &BoundStrategy) -> Result<SumReport> {
    let sums = darboux(f, p, strategy)?;
    let exact = sums.lower.is_exact() && sums.upper.is_exact();
    Ok(SumReport {
        partition: p.clone(),
        lower: sums.lower,
        upper: sums.upper,
        strategy: strategy.clone(),
        exact,
    })
}

/// Σ f(s_j)·(t_j − t_{j−1}) for the chosen tags.
pub fn tagged_sum(f: &FuncDef, p: &KPartition, tags: &TagRule) -> Result<Num> {
    let eval = Evaluator::new(f);
    let pts = p.points();
    if let TagRule::Explicit(s) = tags {
        if s.len() != p.n_cells() {
            return Err(Error::invalid(format!(
                "{} tags for {} cells",
                s.len(),
                p.n_cells()
            )));
        }
        for (j, w) in pts.windows(2).enumerate() {
            if s[j] < w[0] || s[j] > w[1] {
                return Err(Error::invalid(format!(
                    "tag {} lies outside its cell [{}, {}]",
                    s[j], w[0], w[1]
                )));
            }
        }
    }
    let mut acc = Num::zero();
    for (j, w) in pts.windows(2).enumerate() {
        let s_j = match tags {
            TagRule::Left => w[0].clone(),
            TagRule::Right => w[1].clone(),
            TagRule::Midpoint => Rational::midpoint(&w[0], &w[1]),
            TagRule::Explicit(s) => s[j].clone(),
        };
        let width = Num::Exact(&w[1] - &w[0]);
        acc = acc.add(&eval.eval_point(&s_j)?.mul(&width));
    }
    Ok(acc)
}

/// ½(left-tagged + right-tagged): the composite trapezoid value, evaluating
/// each grid point once.
pub fn trapezoid_sum(f: &FuncDef, p: &KPartition) -> Result<Num> {
    let eval = Evaluator::new(f);
    let two = Num::Exact(rat(2, 1));
    let pts = p.points();
    let mut v_prev = eval.eval_point(&pts[0])?;
    let mut acc = Num::zero();
    for w in pts.windows(2) {
        let v = eval.eval_point(&w[1])?;
        let width = Num::Exact(&w[1] - &w[0]);
        acc = acc.add(&v_prev.add(&v).div(&two)?.mul(&width));
        v_prev = v;
    }
    Ok(acc)
}

/// Bracketing driver: refines along the schedule, keeps the tightest
/// [max lower, min upper] bracket, and reports its midpoint. Affine
/// integrands return the exact closed form immediately. Rational-closed
/// integrands are summed exactly until a dyadic pass would exceed
/// [`EXACT_REFINEMENT_LIMIT`] cells, after which refinement continues in
/// floats. Non-convergence within the schedule is reported, not an error.
pub fn integrate(
    f: &FuncDef,
    a: &Rational,
    b: &Rational,
    opts: &IntegrateOptions,
) -> Result<IntegralEstimate> {
    if a >= b {
        return Err(Error::invalid(format!(
            "integration interval [{a}, {b}] is degenerate or reversed"
        )));
    }
    if opts.tol <= 0.0 || opts.tol.is_nan() {
        return Err(Error::invalid("tolerance must be positive"));
    }
    if let Some((slope, intercept)) = as_affine(&f.body) {
        let v = affine_integral_exact(&slope, &intercept, a, b)?;
        let value = Num::Exact(v);
        return Ok(IntegralEstimate {
            value: value.clone(),
            lower: value.clone(),
            upper: value.clone(),
            converged: true,
            exact: true,
            tolerance: opts.tol,
            schedule: vec!["affine:closed-form".to_string()],
            rows: vec![BracketRow {
                depth: 1,
                cells: 1,
                lower: value.clone(),
                upper: value.clone(),
                midpoint: value.clone(),
                trapezoid: value,
            }],
        });
    }

    let strategy = resolve_strategy(f, opts.strategy.as_ref());
    let eval = Evaluator::new(f);
    let plan = prepare_plan(&strategy, f, &eval, a, b)?;

    let mut best_lower: Option<Num> = None;
    let mut best_upper: Option<Num> = None;
    let mut rows = Vec::new();
    let mut used = Vec::new();
    let mut converged = false;

    let steps: Vec<(u32, usize, String, Option<&KPartition>)> = match &opts.schedule {
        Schedule::Dyadic { max_depth } => {
            if *max_depth == 0 || *max_depth > MAX_DRIVER_DEPTH {
                return Err(Error::invalid(format!(
                    "dyadic schedule depth must be in 1..={MAX_DRIVER_DEPTH}"
                )));
            }
            (1..=*max_depth)
                .map(|d| (d, 1usize << d, format!("dyadic:{d}"), None))
                .collect()
        }
        Schedule::Explicit(parts) => {
            for p in parts {
                if p.a() != a || p.b() != b {
                    return Err(Error::invalid(format!(
                        "schedule partition covers [{}, {}], expected [{a}, {b}]",
                        p.a(),
                        p.b()
                    )));
                }
            }
            parts
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    (
                        (i + 1) as u32,
                        p.n_cells(),
                        format!("explicit:{}({} cells)", i + 1, p.n_cells()),
                        Some(p),
                    )
                })
                .collect()
        }
    };

    // Once the integrand leaves the rationals every sum is a float anyway,
    // so skip materializing rational grid points (deep dyadic ladders build
    // millions of them). User oracles are promised rational cell endpoints
    // and keep the generic pass whatever the depth.
    let oracle_plan = matches!(plan, Plan::Oracle(_));
    let float_fast = !eval.exact && !oracle_plan;
    for (depth, cells, descriptor, part) in steps {
        let sums = match part {
            Some(p) if float_fast => {
                let pts: Result<Vec<f64>> = p.points().iter().map(|t| t.to_f64()).collect();
                pass_float(&eval, &plan, pts?)?
            }
            Some(p) => pass(f, &eval, &plan, p.points())?,
            None if float_fast => float_dyadic_pass(&eval, &plan, a, b, depth)?,
            None if eval.exact && !oracle_plan => {
                if cells <= EXACT_REFINEMENT_LIMIT {
                    pass_uniform_exact(&eval, &plan, a, b, cells as i64)?
                } else {
                    float_dyadic_pass(&eval, &plan, a, b, depth)?
                }
            }
            None => pass(f, &eval, &plan, dyadic_points(a, b, depth))?,
        };
        best_lower = Some(match best_lower {
            Some(prev) => prev.max(sums.lower.clone()),
            None => sums.lower.clone(),
        });
        best_upper = Some(match best_upper {
            Some(prev) => prev.min(sums.upper.clone()),
            None => sums.upper.clone(),
        });
        rows.push(BracketRow {
            depth,
            cells,
            lower: sums.lower,
            upper: sums.upper,
            midpoint: sums.midpoint,
            trapezoid: sums.trapezoid,
        });
        used.push(descriptor);
        let gap = best_upper
            .as_ref()
            .unwrap()
            .sub(best_lower.as_ref().unwrap());
        if !gap.exceeds(&Num::zero(), opts.tol) {
            converged = true;
            break;
        }
    }

    let lower = best_lower.expect("schedule is nonempty");
    let upper = best_upper.expect("schedule is nonempty");
    let value = Num::midpoint(&lower, &upper);
    let exact = value.is_exact();
    Ok(IntegralEstimate {
        value,
        lower,
        upper,
        converged,
        exact,
        tolerance: opts.tol,
        schedule: used,
        rows,
    })
}

/// |∫_a^b − ∫_a^g − ∫_g^b| against `tol`; all three integrals run the same
/// tolerance-matched schedule so the discretization errors are
/// commensurate. When every bracket is zero-width (closed-form affine),
/// exact equality is demanded instead.
/// Ladder depth matched to the tolerance: the reported value tracks the
/// composite trapezoid, whose error shrinks O(4^−d), so two depths past
/// log₄(1/tol) leaves the additivity residual comfortably under tol without
/// walking the whole default schedule.
fn additivity_depth(tol: f64) -> u32 {
    let needed = (1.0 / tol).log(4.0).ceil() as i64 + 2;
    needed.clamp(4, 20) as u32
}

pub fn interval_additivity_check(
    f: &FuncDef,
    a: &Rational,
    g: &Rational,
    b: &Rational,
    tol: f64,
) -> Result<AdditivityReport> {
    if !(a < g && g < b) {
        return Err(Error::invalid(format!(
            "split must satisfy a < g < b, got {a}, {g}, {b}"
        )));
    }
    if tol <= 0.0 || tol.is_nan() {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let opts = IntegrateOptions {
        tol,
        schedule: Schedule::Dyadic {
            max_depth: additivity_depth(tol),
        },
        strategy: None,
    };
    let whole = integrate(f, a, b, &opts)?;
    let left = integrate(f, a, g, &opts)?;
    let right = integrate(f, g, b, &opts)?;
    let residual = whole.value.sub(&left.value).sub(&right.value).abs();
    let zero_width = |e: &IntegralEstimate| e.lower.cmp_num(&e.upper) == std::cmp::Ordering::Equal;
    let exact = zero_width(&whole) && zero_width(&left) && zero_width(&right);
    let holds = if exact {
        match residual.as_exact() {
            Some(r) => r.is_zero(),
            None => residual.to_f64() == 0.0,
        }
    } else {
        !residual.exceeds(&Num::zero(), tol)
    };
    Ok(AdditivityReport {
        holds,
        exact,
        whole: whole.value,
        left_part: left.value,
        right_part: right.value,
        residual,
        tolerance: tol,
    })
}
