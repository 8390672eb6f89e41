//! Sample-based convexity certification and numeric support lines.
//!
//! Nothing here is a proof. Every check evaluates finitely many weighted
//! pairs (a deterministic interior grid for coverage, then seeded random
//! rational pairs for thin violations) and reports either the first
//! counterexample in that fixed order or `NoViolationFound`. Exact
//! arithmetic is used whenever the function body is rational-closed, so
//! for polynomial and piecewise-rational functions a verdict at `tol = 0`
//! is an exact statement about the sampled points.
//!
//! An inequality counts as violated only when it fails by more than `tol`;
//! affine functions, which satisfy every inequality with equality, are
//! never reported as counterexamples.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{Domain, Expr, FuncDef, Shape};
use crate::partition::KPartition;
use crate::rational::{rat, Rational};
use crate::value::Num;

/// Interior grid points used by the deterministic phase of every search.
pub(crate) const GRID_POINTS: i64 = 24;

/// Random interior points are drawn as `a + (b-a)·k/RAND_DEN`.
const RAND_DEN: i64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    NoViolationFound,
    Counterexample,
}

/// One failed convexity inequality: `f(λx + (1−λ)y) > λf(x) + (1−λ)f(y) + tol`.
#[derive(Debug, Clone, Serialize)]
pub struct ConvexityWitness {
    pub x: Rational,
    pub y: Rational,
    pub lambda: Rational,
    pub lhs: Num,
    pub rhs: Num,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvexityReport {
    pub verdict: Verdict,
    pub witness: Option<ConvexityWitness>,
    pub pairs_tested: u64,
    pub seed: u64,
}

impl ConvexityReport {
    fn clean(pairs_tested: u64, seed: u64) -> Self {
        ConvexityReport {
            verdict: Verdict::NoViolationFound,
            witness: None,
            pairs_tested,
            seed,
        }
    }

    fn broken(witness: ConvexityWitness, pairs_tested: u64, seed: u64) -> Self {
        ConvexityReport {
            verdict: Verdict::Counterexample,
            witness: Some(witness),
            pairs_tested,
            seed,
        }
    }
}

/// Which half of the Hermite-Hadamard system a [`ViolationWitness`] breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// Midpoint value exceeded the difference quotient.
    Left,
    /// Difference quotient exceeded the endpoint average.
    Right,
}

/// One pair `(x, y)` breaking the midpoint/quotient/endpoint-average chain
/// for a claimed (function, primitive) pair.
#[derive(Debug, Clone, Serialize)]
pub struct ViolationWitness {
    pub x: Rational,
    pub y: Rational,
    pub side: Side,
    pub lhs: Num,
    pub rhs: Num,
}

impl ViolationWitness {
    /// Recompute both sides from scratch and confirm the violation still
    /// exceeds `tol` (typically a tightened tolerance).
    pub fn revalidate(&self, f: &FuncDef, big_f: &FuncDef, tol: f64) -> Result<bool> {
        let (mid, quo, avg) = hh_quantities(f, big_f, &self.x, &self.y)?;
        Ok(match self.side {
            Side::Left => mid.exceeds(&quo, tol),
            Side::Right => quo.exceeds(&avg, tol),
        })
    }
}

fn check_interval(a: &Rational, b: &Rational) -> Result<()> {
    if a < b {
        Ok(())
    } else {
        Err(Error::invalid(format!("empty domain ({a}, {b})")))
    }
}

pub(crate) fn grid_points(a: &Rational, b: &Rational, count: i64) -> Vec<Rational> {
    let width = b - a;
    (1..=count)
        .map(|i| a + &(&width * &rat(i, count + 1)))
        .collect()
}

fn random_interior(rng: &mut ChaCha8Rng, a: &Rational, b: &Rational) -> Rational {
    let k = rng.random_range(1..RAND_DEN);
    a + &(&(b - a) * &rat(k, RAND_DEN))
}

/// Distinct random pair with a minimum separation of width/1000, so float
/// difference quotients stay well conditioned.
pub(crate) fn random_pair(
    rng: &mut ChaCha8Rng,
    a: &Rational,
    b: &Rational,
) -> (Rational, Rational) {
    let min_gap = &(b - a) * &rat(1, 1000);
    let x = random_interior(rng, a, b);
    for _ in 0..64 {
        let y = random_interior(rng, a, b);
        let gap = (&y - &x).abs();
        if gap >= min_gap {
            return if x < y { (x, y) } else { (y, x) };
        }
    }
    // min_gap < width/1000 fails 64 times only with vanishing probability;
    // fall back to a fixed offset that stays interior
    let y = if &x - a > min_gap {
        &x - &min_gap
    } else {
        &x + &min_gap
    };
    (x.clone().min(y.clone()), x.max(y))
}

/// `f(λx + (1−λ)y) ≤ λf(x) + (1−λ)f(y) + tol`, reported as a witness when it
/// fails.
fn weighted_pair_violation(
    f: &FuncDef,
    x: &Rational,
    y: &Rational,
    lambda: &Rational,
    tol: f64,
) -> Result<Option<ConvexityWitness>> {
    let one_minus = &Rational::one() - lambda;
    let point = &(lambda * x) + &(&one_minus * y);
    let lhs = f.eval_at(&point)?;
    let rhs = Num::Exact(lambda.clone())
        .mul(&f.eval_at(x)?)
        .add(&Num::Exact(one_minus).mul(&f.eval_at(y)?));
    if lhs.exceeds(&rhs, tol) {
        Ok(Some(ConvexityWitness {
            x: x.clone(),
            y: y.clone(),
            lambda: lambda.clone(),
            lhs,
            rhs,
        }))
    } else {
        Ok(None)
    }
}

/// Midpoint-convexity (Jensen) check: `f((x+y)/2) ≤ (f(x)+f(y))/2` over a
/// deterministic grid plus `pairs` seeded random pairs.
pub fn jensen_check(
    f: &FuncDef,
    a: &Rational,
    b: &Rational,
    pairs: u64,
    seed: u64,
    tol: f64,
) -> Result<ConvexityReport> {
    check_interval(a, b)?;
    if pairs < 1 {
        return Err(Error::invalid("need at least one pair"));
    }
    let half = rat(1, 2);
    let mut tested = 0u64;
    let grid = grid_points(a, b, GRID_POINTS);
    for i in 0..grid.len() {
        for j in (i + 1)..grid.len() {
            tested += 1;
            if let Some(w) = weighted_pair_violation(f, &grid[i], &grid[j], &half, tol)? {
                return Ok(ConvexityReport::broken(w, tested, seed));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..pairs {
        let (x, y) = random_pair(&mut rng, a, b);
        tested += 1;
        if let Some(w) = weighted_pair_violation(f, &x, &y, &half, tol)? {
            return Ok(ConvexityReport::broken(w, tested, seed));
        }
    }
    Ok(ConvexityReport::clean(tested, seed))
}

/// Convexity over rational weights: like [`jensen_check`] but λ ranges over
/// reduced fractions with denominator ≤ `max_den`. The grid phase pairs each
/// grid pair with λ ∈ {1/2, 1/3, 2/3, 1/4, 3/4} (clipped to `max_den`);
/// the random phase draws λ = p/q with 2 ≤ q ≤ max_den, 0 < p < q.
pub fn k_convex_check(
    f: &FuncDef,
    a: &Rational,
    b: &Rational,
    pairs: u64,
    max_den: i64,
    seed: u64,
    tol: f64,
) -> Result<ConvexityReport> {
    check_interval(a, b)?;
    if pairs < 1 {
        return Err(Error::invalid("need at least one pair"));
    }
    if max_den < 2 {
        return Err(Error::invalid("max_den must be at least 2"));
    }
    let grid_lambdas: Vec<Rational> = [(1, 2), (1, 3), (2, 3), (1, 4), (3, 4)]
        .iter()
        .filter(|(_, q)| *q <= max_den)
        .map(|(p, q)| rat(*p, *q))
        .collect();
    let mut tested = 0u64;
    let grid = grid_points(a, b, GRID_POINTS);
    for i in 0..grid.len() {
        for j in (i + 1)..grid.len() {
            for lambda in &grid_lambdas {
                tested += 1;
                if let Some(w) = weighted_pair_violation(f, &grid[i], &grid[j], lambda, tol)? {
                    return Ok(ConvexityReport::broken(w, tested, seed));
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..pairs {
        let (x, y) = random_pair(&mut rng, a, b);
        let q = rng.random_range(2..=max_den);
        let p = rng.random_range(1..q);
        let lambda = rat(p, q);
        tested += 1;
        if let Some(w) = weighted_pair_violation(f, &x, &y, &lambda, tol)? {
            return Ok(ConvexityReport::broken(w, tested, seed));
        }
    }
    Ok(ConvexityReport::clean(tested, seed))
}

/// Discrete convexity along a partition: each interior point must lie on or
/// below the chord of its neighbors. With `λ = (t_{i+1} − t_i)/(t_{i+1} −
/// t_{i−1})` the test is `f(t_i) ≤ λf(t_{i−1}) + (1−λ)f(t_{i+1}) + tol`; on
/// a uniform grid that is the second difference `f(t_{i−1}) − 2f(t_i) +
/// f(t_{i+1}) ≥ −2·tol`.
pub fn second_difference_check(
    f: &FuncDef,
    grid: &KPartition,
    tol: f64,
) -> Result<ConvexityReport> {
    let pts = grid.points();
    if pts.len() < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 grid points, got {}",
            pts.len()
        )));
    }
    let values: Vec<Num> = pts.iter().map(|t| f.eval_at(t)).collect::<Result<_>>()?;
    let mut tested = 0u64;
    for i in 1..pts.len() - 1 {
        let (x, mid, y) = (&pts[i - 1], &pts[i], &pts[i + 1]);
        let lambda = (y - mid).div_exact(&(y - x))?;
        let one_minus = &Rational::one() - &lambda;
        let lhs = values[i].clone();
        let rhs = Num::Exact(lambda.clone())
            .mul(&values[i - 1])
            .add(&Num::Exact(one_minus).mul(&values[i + 1]));
        tested += 1;
        if lhs.exceeds(&rhs, tol) {
            return Ok(ConvexityReport::broken(
                ConvexityWitness {
                    x: x.clone(),
                    y: y.clone(),
                    lambda,
                    lhs,
                    rhs,
                },
                tested,
                0,
            ));
        }
    }
    Ok(ConvexityReport::clean(tested, 0))
}

/// An affine minorant `slope·x + intercept` of a convex function, touching
/// it at `z`.
#[derive(Debug, Clone, Serialize)]
pub struct SupportLine {
    pub z: Rational,
    pub slope: Num,
    pub intercept: Num,
}

impl SupportLine {
    pub fn value_at(&self, t: &Rational) -> Num {
        self.slope.mul(&Num::Exact(t.clone())).add(&self.intercept)
    }

    /// Package the line as a function definition (rational coefficients;
    /// float slopes are frozen to their exact dyadic value).
    pub fn to_func(&self) -> FuncDef {
        let to_rat = |n: &Num| {
            n.as_exact()
                .cloned()
                .or_else(|| Rational::from_f64(n.to_f64()))
                .unwrap_or_else(Rational::zero)
        };
        let body = Expr::Add(
            Box::new(Expr::Mul(
                Box::new(Expr::lit(to_rat(&self.slope))),
                Box::new(Expr::var()),
            )),
            Box::new(Expr::lit(to_rat(&self.intercept))),
        );
        FuncDef {
            name: format!("support_line_at_{}", self.z),
            body,
            antiderivative: None,
            declared_shape: Shape::Affine,
            domain: Domain::full(),
        }
    }
}

/// One-sided difference quotients `(f(z±h) − f(z))/(±h)` refined by
/// Richardson extrapolation (`2Q(h) − Q(2h)` cancels the O(h) term) along a
/// halving schedule from `h0`. Returns `(d−, d+)`.
fn one_sided_slopes(f: &FuncDef, z: &Rational, h0: f64) -> Result<(Num, Num)> {
    let two = Num::Exact(rat(2, 1));
    let half = rat(1, 2);
    let fz = f.eval_at(z)?;
    let mut h =
        Rational::from_f64(h0).ok_or_else(|| Error::Range(format!("step {h0} is not finite")))?;
    let mut prev: Option<(Num, Num)> = None;
    let mut refined: Option<(Num, Num)> = None;
    for _ in 0..=10 {
        let hn = Num::Exact(h.clone());
        let qp = f.eval_at(&(z + &h))?.sub(&fz).div(&hn)?;
        let qm = fz.sub(&f.eval_at(&(z - &h))?).div(&hn)?;
        if let Some((pp, pm)) = prev {
            refined = Some((qp.mul(&two).sub(&pp), qm.mul(&two).sub(&pm)));
        }
        prev = Some((qp, qm));
        h = &h * &half;
    }
    let (dp, dm) = refined.expect("schedule has more than one step");
    Ok((dm, dp))
}

/// Construct a support line of `f` at `z`: slope is the midpoint of the
/// one-sided derivative estimates (the subdifferential midpoint at kinks),
/// intercept pins the line to `f(z)`. The support property `line ≤ f + tol`
/// is then verified on a 1001-point probe grid around `z`; failure (for
/// instance a concave `f`) is a [`Error::NoSupport`].
pub fn support_line(f: &FuncDef, z: &Rational, h0: f64, tol: f64) -> Result<SupportLine> {
    if !f.domain.contains(z) {
        return Err(Error::invalid(format!(
            "{z} is not interior to the domain of '{}'",
            f.name
        )));
    }
    if !(h0 > 0.0 && h0.is_finite()) {
        return Err(Error::invalid("h0 must be positive and finite"));
    }
    // shrink the first step so the whole schedule stays inside the domain
    let mut h_eff = h0;
    for bound in [f.domain.lo.as_ref(), f.domain.hi.as_ref()]
        .into_iter()
        .flatten()
    {
        let dist = (bound - z).abs().to_f64()?;
        h_eff = h_eff.min(dist / 2.0);
    }
    if h_eff <= 0.0 || h_eff.is_nan() {
        return Err(Error::invalid(format!(
            "{z} is too close to the domain boundary"
        )));
    }
    let (d_minus, d_plus) = one_sided_slopes(f, z, h_eff)?;
    let slope = Num::midpoint(&d_minus, &d_plus);
    let fz = f.eval_at(z)?;
    let intercept = fz.sub(&slope.mul(&Num::Exact(z.clone())));
    let line = SupportLine {
        z: z.clone(),
        slope,
        intercept,
    };

    let at_z = line.value_at(z);
    if at_z.exceeds(&fz, tol) || fz.exceeds(&at_z, tol) {
        return Err(Error::NoSupport(format!(
            "line misses f({z}) by more than {tol}"
        )));
    }
    let span = Rational::one().max(z.abs());
    let margin = rat(1, 1_000_000_000);
    let mut lo = z - &span;
    let mut hi = z + &span;
    if let Some(dlo) = &f.domain.lo {
        lo = lo.max(dlo + &(&(&hi - dlo) * &margin));
    }
    if let Some(dhi) = &f.domain.hi {
        hi = hi.min(dhi - &(&(dhi - &lo) * &margin));
    }
    let probes = 1000i64;
    let width = &hi - &lo;
    for i in 0..=probes {
        let t = &lo + &(&width * &rat(i, probes));
        let lv = line.value_at(&t);
        let fv = f.eval_at(&t)?;
        if lv.exceeds(&fv, tol) {
            return Err(Error::NoSupport(format!(
                "line exceeds f at {t}: {lv} > {fv}"
            )));
        }
    }
    Ok(line)
}

fn hh_quantities(
    f: &FuncDef,
    big_f: &FuncDef,
    x: &Rational,
    y: &Rational,
) -> Result<(Num, Num, Num)> {
    let two = Num::Exact(rat(2, 1));
    let mid = f.eval_at(&Rational::midpoint(x, y))?;
    let quo = big_f
        .eval_at(y)?
        .sub(&big_f.eval_at(x)?)
        .div(&Num::Exact(y - x))?;
    let avg = f.eval_at(x)?.add(&f.eval_at(y)?).div(&two)?;
    Ok((mid, quo, avg))
}

/// Search for a pair breaking either inequality of the midpoint ≤ quotient ≤
/// endpoint-average chain for the claimed (f, F). The deterministic grid is
/// scanned first, then seeded random pairs, up to `budget` pairs in total;
/// the first violation found is re-validated at `tol/10` before being
/// returned.
pub fn find_violation(
    f: &FuncDef,
    big_f: &FuncDef,
    a: &Rational,
    b: &Rational,
    budget: u64,
    seed: u64,
    tol: f64,
) -> Result<Option<ViolationWitness>> {
    check_interval(a, b)?;
    if budget < 1 {
        return Err(Error::invalid("budget must be at least 1"));
    }
    let mut tested = 0u64;
    let check = |x: &Rational, y: &Rational| -> Result<Option<ViolationWitness>> {
        let (mid, quo, avg) = hh_quantities(f, big_f, x, y)?;
        if mid.exceeds(&quo, tol) {
            return Ok(Some(ViolationWitness {
                x: x.clone(),
                y: y.clone(),
                side: Side::Left,
                lhs: mid,
                rhs: quo,
            }));
        }
        if quo.exceeds(&avg, tol) {
            return Ok(Some(ViolationWitness {
                x: x.clone(),
                y: y.clone(),
                side: Side::Right,
                lhs: quo,
                rhs: avg,
            }));
        }
        Ok(None)
    };

    let grid = grid_points(a, b, GRID_POINTS);
    'grid: for i in 0..grid.len() {
        for j in (i + 1)..grid.len() {
            if tested >= budget {
                break 'grid;
            }
            tested += 1;
            if let Some(w) = check(&grid[i], &grid[j])? {
                if w.revalidate(f, big_f, tol / 10.0)? {
                    return Ok(Some(w));
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while tested < budget {
        let (x, y) = random_pair(&mut rng, a, b);
        tested += 1;
        if let Some(w) = check(&x, &y)? {
            if w.revalidate(f, big_f, tol / 10.0)? {
                return Ok(Some(w));
            }
        }
    }
    Ok(None)
}
