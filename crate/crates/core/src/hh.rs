//! The Hermite-Hadamard engine.
//!
//! Everything here revolves around the two-sided system
//!
//! ```text
//! f((x+y)/2)  ≤  (F(y) − F(x)) / (y − x)  ≤  (f(x) + f(y)) / 2
//! ```
//!
//! which holds for all x ≠ y exactly when f is convex and F is a primitive
//! of f. The module checks single pairs, scans many pairs, walks the
//! refining-partition sandwich whose two outer sums squeeze the telescoping
//! middle term, verifies F′ = f through one-sided difference quotients, and
//! reconstructs a primitive by integration.
//!
//! An inequality counts as violated only when it fails by more than the
//! given tolerance, so the affine equality case is never misreported.
//!
//! Only machine-representable functions are in play. The classical
//! pathology this system is famous for, a discontinuous midpoint-convex
//! function violating the inequalities, needs a Hamel basis to write down
//! and therefore cannot appear here; the checks demonstrate the equivalence
//! over expressible functions only.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::convexity::{grid_points, random_pair, GRID_POINTS};
use crate::error::{Error, Result};
use crate::expr::{FuncDef, Shape};
use crate::kriemann::{integrate, tagged_sum, trapezoid_sum, IntegrateOptions, TagRule};
use crate::partition::KPartition;
use crate::rational::{rat, Rational};
use crate::value::Num;

/// A primitive F with its provenance, so reports can state what was
/// actually tested.
pub enum Primitive {
    /// A closed-form expression for F.
    Symbolic(FuncDef),
    /// Tabulated values; only exactly tabulated points may be queried
    /// (no interpolation of any kind).
    Table(Vec<(Rational, Num)>),
    /// F(x) := ∫ from `base` to x of f, computed on demand and cached.
    Reconstructed {
        f: FuncDef,
        base: Rational,
        tol: f64,
        cache: Mutex<HashMap<Rational, Num>>,
    },
}

impl Primitive {
    pub fn symbolic(f: FuncDef) -> Primitive {
        Primitive::Symbolic(f)
    }

    pub fn table(points: Vec<(Rational, Num)>) -> Primitive {
        Primitive::Table(points)
    }

    pub fn reconstructed(f: FuncDef, base: Rational, tol: f64) -> Primitive {
        Primitive::Reconstructed {
            f,
            base,
            tol,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn provenance(&self) -> &'static str {
        match self {
            Primitive::Symbolic(_) => "symbolic",
            Primitive::Table(_) => "table",
            Primitive::Reconstructed { .. } => "reconstructed",
        }
    }

    pub fn eval(&self, x: &Rational) -> Result<Num> {
        match self {
            Primitive::Symbolic(big_f) => big_f.eval_at(x),
            Primitive::Table(points) => points
                .iter()
                .find(|(t, _)| t == x)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| {
                    Error::invalid(format!("{x} is not tabulated and interpolation is refused"))
                }),
            Primitive::Reconstructed {
                f,
                base,
                tol,
                cache,
            } => {
                if let Some(v) = cache.lock().unwrap().get(x) {
                    return Ok(v.clone());
                }
                let v = if x == base {
                    Num::zero()
                } else {
                    let opts = IntegrateOptions {
                        tol: *tol,
                        ..Default::default()
                    };
                    let est = if x > base {
                        integrate(f, base, x, &opts)?
                    } else {
                        integrate(f, x, base, &opts)?
                    };
                    if !est.converged {
                        return Err(Error::Arithmetic(format!(
                            "reconstruction of F({x}) did not converge at tolerance {tol}"
                        )));
                    }
                    if x > base {
                        est.value
                    } else {
                        est.value.neg()
                    }
                };
                cache.lock().unwrap().insert(x.clone(), v.clone());
                Ok(v)
            }
        }
    }
}

/// The primitive a builtin carries, packaged for the checks here.
pub fn builtin_primitive(f: &FuncDef) -> Option<Primitive> {
    f.antiderivative.as_ref().map(|anti| {
        Primitive::Symbolic(FuncDef {
            name: format!("{}_primitive", f.name),
            body: anti.clone(),
            antiderivative: None,
            declared_shape: Shape::Unknown,
            domain: f.domain.clone(),
        })
    })
}

/// All three quantities of the system for one pair, with per-side flags.
#[derive(Debug, Clone, Serialize)]
pub struct HHPairResult {
    pub x: Rational,
    pub y: Rational,
    pub midpoint_value: Num,
    pub difference_quotient: Num,
    pub endpoint_average: Num,
    pub left_holds: bool,
    pub right_holds: bool,
    pub tol: f64,
}

/// Evaluate the system on one pair. The pair may come in either order;
/// all three quantities are symmetric in (x, y).
pub fn hh_check_pair(
    f: &FuncDef,
    big_f: &Primitive,
    x: &Rational,
    y: &Rational,
    tol: f64,
) -> Result<HHPairResult> {
    if x == y {
        return Err(Error::invalid(format!(
            "pair needs x != y, got x = y = {x}"
        )));
    }
    if !f.domain.contains(x) || !f.domain.contains(y) {
        return Err(Error::invalid(format!(
            "pair ({x}, {y}) leaves the domain of '{}'",
            f.name
        )));
    }
    let two = Num::Exact(rat(2, 1));
    let midpoint_value = f.eval_at(&Rational::midpoint(x, y))?;
    let difference_quotient = big_f
        .eval(y)?
        .sub(&big_f.eval(x)?)
        .div(&Num::Exact(y - x))?;
    let endpoint_average = f.eval_at(x)?.add(&f.eval_at(y)?).div(&two)?;
    let left_holds = !midpoint_value.exceeds(&difference_quotient, tol);
    let right_holds = !difference_quotient.exceeds(&endpoint_average, tol);
    Ok(HHPairResult {
        x: x.clone(),
        y: y.clone(),
        midpoint_value,
        difference_quotient,
        endpoint_average,
        left_holds,
        right_holds,
        tol,
    })
}

#[derive(Debug, Serialize)]
pub struct ScanReport {
    pub pairs_tested: u64,
    pub violations: u64,
    pub first_violation: Option<HHPairResult>,
    pub seed: u64,
    pub tol: f64,
    pub provenance: &'static str,
}

/// Run [`hh_check_pair`] over the deterministic interior grid plus `pairs`
/// seeded random pairs on (a, b). Sampled points are strictly interior, so
/// closed-interval input is implicitly shrunk to the open interval the
/// system quantifies over. Pair evaluation fans out across workers; the
/// violation count and the first violation in enumeration order are
/// deterministic regardless of thread count.
pub fn hh_scan(
    f: &FuncDef,
    big_f: &Primitive,
    a: &Rational,
    b: &Rational,
    pairs: u64,
    seed: u64,
    tol: f64,
) -> Result<ScanReport> {
    if a >= b {
        return Err(Error::invalid(format!("empty scan interval ({a}, {b})")));
    }
    if pairs < 1 {
        return Err(Error::invalid("need at least one pair"));
    }
    let grid = grid_points(a, b, GRID_POINTS);
    let mut pair_list: Vec<(Rational, Rational)> = Vec::new();
    for i in 0..grid.len() {
        for j in (i + 1)..grid.len() {
            pair_list.push((grid[i].clone(), grid[j].clone()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..pairs {
        pair_list.push(random_pair(&mut rng, a, b));
    }

    let results: Vec<Option<HHPairResult>> = pair_list
        .par_iter()
        .map(|(x, y)| {
            let r = hh_check_pair(f, big_f, x, y, tol)?;
            Ok(if r.left_holds && r.right_holds {
                None
            } else {
                Some(r)
            })
        })
        .collect::<Result<_>>()?;

    let violations = results.iter().flatten().count() as u64;
    let first_violation = results.into_iter().flatten().next();
    Ok(ScanReport {
        pairs_tested: pair_list.len() as u64,
        violations,
        first_violation,
        seed,
        tol,
        provenance: big_f.provenance(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SandwichRow {
    pub depth: u32,
    pub n_cells: usize,
    pub midpoint_sum: Num,
    #[serde(rename = "delta_F")]
    pub delta_f: Num,
    pub trapezoid_sum: Num,
    /// trapezoid_sum − midpoint_sum.
    pub gap: Num,
    pub left_holds: bool,
    pub right_holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SandwichReport {
    pub x: Rational,
    pub y: Rational,
    pub rows: Vec<SandwichRow>,
    pub converged: bool,
    /// Midpoint-weighted blend (2·midpoint + trapezoid)/3 of the last row,
    /// which cancels the leading error term both rules share.
    pub limit: Num,
    pub telescoping_exact: bool,
    pub tol: f64,
    pub provenance: &'static str,
}

/// Σ over cells of F(t_j) − F(t_{j−1}), accumulated literally rather than
/// collapsed to F(y) − F(x), so the telescoping identity is demonstrated
/// instead of assumed.
fn telescoping_sum(big_f: &Primitive, pts: &[Rational]) -> Result<Num> {
    let mut prev = big_f.eval(&pts[0])?;
    let mut acc = Num::zero();
    for t in &pts[1..] {
        let v = big_f.eval(t)?;
        acc = acc.add(&v.sub(&prev));
        prev = v;
    }
    Ok(acc)
}

/// Walk dyadic partitions of [x, y] at depth 1..=max_depth. Each row holds
/// the midpoint-tagged sum, the telescoping ΔF, and the trapezoid sum; for a
/// convex f with primitive F the first is a lower and the last an upper
/// bound for ΔF, and the two outer sums close in on it as the mesh shrinks.
/// Stops early once trapezoid − midpoint is within tol.
pub fn sandwich(
    f: &FuncDef,
    big_f: &Primitive,
    x: &Rational,
    y: &Rational,
    max_depth: u32,
    tol: f64,
) -> Result<SandwichReport> {
    if x >= y {
        return Err(Error::invalid(format!("need x < y, got [{x}, {y}]")));
    }
    if !(1..=18).contains(&max_depth) {
        return Err(Error::invalid("max_depth must be in 1..=18"));
    }
    if !f.domain.contains(x) || !f.domain.contains(y) {
        return Err(Error::invalid(format!(
            "[{x}, {y}] leaves the domain of '{}'",
            f.name
        )));
    }
    let mut rows: Vec<SandwichRow> = Vec::new();
    let mut converged = false;
    for depth in 1..=max_depth {
        // depth d refines [x, y] into 2^(d-1) cells, so the first row is
        // the single-cell system for the pair itself
        let p = if depth == 1 {
            KPartition::uniform(x.clone(), y.clone(), 1)?
        } else {
            KPartition::dyadic(x.clone(), y.clone(), depth - 1)?
        };
        let midpoint_sum = tagged_sum(f, &p, &TagRule::Midpoint)?;
        let trap = trapezoid_sum(f, &p)?;
        let delta_f = telescoping_sum(big_f, &p.points())?;
        let gap = trap.sub(&midpoint_sum);
        let left_holds = !midpoint_sum.exceeds(&delta_f, tol);
        let right_holds = !delta_f.exceeds(&trap, tol);
        let done = !gap.exceeds(&Num::zero(), tol);
        rows.push(SandwichRow {
            depth,
            n_cells: p.n_cells(),
            midpoint_sum,
            delta_f,
            trapezoid_sum: trap,
            gap,
            left_holds,
            right_holds,
        });
        if done {
            converged = true;
            break;
        }
    }
    let last = rows.last().expect("max_depth >= 1");
    let three = Num::Exact(rat(3, 1));
    let two = Num::Exact(rat(2, 1));
    let limit = last
        .midpoint_sum
        .mul(&two)
        .add(&last.trapezoid_sum)
        .div(&three)?;
    let telescoping_exact = rows.iter().all(|r| r.delta_f.is_exact())
        && rows
            .windows(2)
            .all(|w| w[0].delta_f.cmp_num(&w[1].delta_f) == std::cmp::Ordering::Equal);
    Ok(SandwichReport {
        x: x.clone(),
        y: y.clone(),
        rows,
        converged,
        limit,
        telescoping_exact,
        tol,
        provenance: big_f.provenance(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PrimitiveIdentityReport {
    pub holds: bool,
    /// Set when the integral did not converge, in which case `holds` only
    /// reflects the bracket the driver reached.
    pub indeterminate: bool,
    pub delta_f: Num,
    pub integral: Num,
    pub residual: Num,
    pub threshold: f64,
}

/// Compare F(y) − F(x) against ∫ f over [x, y]. The two agree when the
/// residual is within max(tol, bracket width); a wider bracket than tol
/// loosens the test rather than failing it, and is flagged indeterminate.
pub fn derive_primitive_identity(
    f: &FuncDef,
    big_f: &Primitive,
    x: &Rational,
    y: &Rational,
    tol: f64,
) -> Result<PrimitiveIdentityReport> {
    if x >= y {
        return Err(Error::invalid(format!("need x < y, got [{x}, {y}]")));
    }
    let opts = IntegrateOptions {
        tol,
        ..Default::default()
    };
    let est = integrate(f, x, y, &opts)?;
    let delta_f = big_f.eval(y)?.sub(&big_f.eval(x)?);
    let residual = delta_f.sub(&est.value).abs();
    let width = est.upper.sub(&est.lower).to_f64().abs();
    let threshold = tol.max(width);
    let holds = !residual.exceeds(&Num::zero(), threshold);
    Ok(PrimitiveIdentityReport {
        holds,
        indeterminate: !est.converged,
        delta_f,
        integral: est.value,
        residual,
        threshold,
    })
}

/// Verify F′(x) = f(x) through the squeeze: for every h in the shrinking
/// schedule, both oriented pairs (x, x+h) and (x−h, x) must satisfy the
/// two-sided system, and at the smallest h both one-sided difference
/// quotients must be within tol of f(x). One-sided quotients are what make
/// kinks work: at a kink each side converges to its own one-sided
/// derivative, and the squeeze pins f(x) between them.
pub fn derivative_check(
    f: &FuncDef,
    big_f: &Primitive,
    x: &Rational,
    h_schedule: &[f64],
    tol: f64,
) -> Result<bool> {
    if h_schedule.is_empty() {
        return Err(Error::invalid("empty step schedule"));
    }
    let mut steps: Vec<Rational> = Vec::with_capacity(h_schedule.len());
    for &h in h_schedule {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid(format!(
                "step {h} must be positive and finite"
            )));
        }
        let hr = Rational::from_f64(h).expect("finite");
        if !f.domain.contains(&(x + &hr)) || !f.domain.contains(&(x - &hr)) {
            return Err(Error::invalid(format!(
                "step {h} leaves the domain of '{}' around {x}",
                f.name
            )));
        }
        steps.push(hr);
    }
    let fx = f.eval_at(x)?;
    let mut quotients = (Num::zero(), Num::zero());
    for h in &steps {
        let forward = hh_check_pair(f, big_f, x, &(x + h), tol)?;
        let backward = hh_check_pair(f, big_f, &(x - h), x, tol)?;
        if !(forward.left_holds
            && forward.right_holds
            && backward.left_holds
            && backward.right_holds)
        {
            return Ok(false);
        }
        quotients = (forward.difference_quotient, backward.difference_quotient);
    }
    let (qf, qb) = quotients;
    let close = |q: &Num| !q.sub(&fx).abs().exceeds(&Num::zero(), tol);
    Ok(close(&qf) && close(&qb))
}

#[derive(Debug, Clone, Serialize)]
pub struct ReconstructedPoint {
    pub x: Rational,
    pub value: Num,
    pub converged: bool,
}

/// Tabulate F(x) := ∫ from `base` to x of f at the given points, negating
/// below the base so the table is consistent with interval additivity;
/// F(base) = 0. Per-point convergence is reported, not raised.
pub fn reconstruct_primitive(
    f: &FuncDef,
    base: &Rational,
    xs: &[Rational],
    tol: f64,
) -> Result<Vec<ReconstructedPoint>> {
    if !f.domain.contains(base) {
        return Err(Error::invalid(format!(
            "base {base} is outside the domain of '{}'",
            f.name
        )));
    }
    let opts = IntegrateOptions {
        tol,
        ..Default::default()
    };
    xs.iter()
        .map(|x| {
            if !f.domain.contains(x) {
                return Err(Error::invalid(format!(
                    "{x} is outside the domain of '{}'",
                    f.name
                )));
            }
            if x == base {
                return Ok(ReconstructedPoint {
                    x: x.clone(),
                    value: Num::zero(),
                    converged: true,
                });
            }
            let (lo, hi, flip) = if x > base {
                (base, x, false)
            } else {
                (x, base, true)
            };
            let est = integrate(f, lo, hi, &opts)?;
            Ok(ReconstructedPoint {
                x: x.clone(),
                value: if flip { est.value.neg() } else { est.value },
                converged: est.converged,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{lookup_builtin, parse, Domain};

    fn builtin(name: &str) -> FuncDef {
        lookup_builtin(name).unwrap()
    }

    fn symbolic(body: &str) -> Primitive {
        Primitive::Symbolic(FuncDef {
            name: body.to_string(),
            body: parse(body).unwrap(),
            antiderivative: None,
            declared_shape: Shape::Unknown,
            domain: Domain::full(),
        })
    }

    fn exact(n: &Num) -> &Rational {
        n.as_exact().expect("expected exact value")
    }

    #[test]
    fn pair_check_square() {
        let r = hh_check_pair(
            &builtin("square"),
            &symbolic("x^3/3"),
            &rat(0, 1),
            &rat(1, 1),
            1e-12,
        )
        .unwrap();
        assert_eq!(exact(&r.midpoint_value), &rat(1, 4));
        assert_eq!(exact(&r.difference_quotient), &rat(1, 3));
        assert_eq!(exact(&r.endpoint_average), &rat(1, 2));
        assert!(r.left_holds && r.right_holds);
    }

    #[test]
    fn pair_check_affine_collapses() {
        let r = hh_check_pair(
            &builtin("affine"),
            &symbolic("x^2 + 3*x"),
            &rat(1, 1),
            &rat(5, 1),
            0.0,
        )
        .unwrap();
        assert_eq!(exact(&r.midpoint_value), &rat(9, 1));
        assert_eq!(exact(&r.difference_quotient), &rat(9, 1));
        assert_eq!(exact(&r.endpoint_average), &rat(9, 1));
        assert!(r.left_holds && r.right_holds);
    }

    #[test]
    fn pair_check_negated_square_fails_both_sides() {
        let r = hh_check_pair(
            &builtin("neg_square"),
            &symbolic("-x^3/3"),
            &rat(0, 1),
            &rat(1, 1),
            1e-12,
        )
        .unwrap();
        assert_eq!(exact(&r.midpoint_value), &rat(-1, 4));
        assert_eq!(exact(&r.difference_quotient), &rat(-1, 3));
        assert_eq!(exact(&r.endpoint_average), &rat(-1, 2));
        assert!(!r.left_holds && !r.right_holds);
    }

    #[test]
    fn pair_check_rejects_equal_points() {
        let r = hh_check_pair(
            &builtin("square"),
            &symbolic("x^3/3"),
            &rat(1, 2),
            &rat(1, 2),
            1e-9,
        );
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn pair_check_respects_domain() {
        let mut f = builtin("square");
        f.domain = Domain::open(rat(0, 1), rat(1, 1));
        let r = hh_check_pair(&f, &symbolic("x^3/3"), &rat(-1, 1), &rat(1, 2), 1e-9);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn table_primitive_serves_only_exact_points() {
        let table = Primitive::table(vec![
            (rat(0, 1), Num::Exact(rat(0, 1))),
            (rat(1, 1), Num::Exact(rat(1, 3))),
        ]);
        assert_eq!(table.provenance(), "table");
        let r = hh_check_pair(&builtin("square"), &table, &rat(0, 1), &rat(1, 1), 1e-12).unwrap();
        assert!(r.left_holds && r.right_holds);
        assert!(hh_check_pair(&builtin("square"), &table, &rat(0, 1), &rat(1, 2), 1e-12).is_err());
    }

    #[test]
    fn scan_clean_for_square() {
        let report = hh_scan(
            &builtin("square"),
            &symbolic("x^3/3"),
            &rat(-1, 1),
            &rat(1, 1),
            10_000,
            17,
            1e-12,
        )
        .unwrap();
        assert_eq!(report.violations, 0);
        assert!(report.first_violation.is_none());
        assert!(report.pairs_tested >= 10_000);
        assert_eq!(report.provenance, "symbolic");
    }

    #[test]
    fn scan_clean_for_exp() {
        let report = hh_scan(
            &builtin("exp"),
            &symbolic("exp(x)"),
            &rat(-1, 1),
            &rat(1, 1),
            2000,
            17,
            1e-12,
        )
        .unwrap();
        assert_eq!(report.violations, 0);
    }

    #[test]
    fn scan_catches_sine() {
        let report = hh_scan(
            &builtin("sine"),
            &symbolic("-cos(x)"),
            &rat(0, 1),
            &rat(3, 1),
            2000,
            17,
            1e-9,
        )
        .unwrap();
        assert!(report.violations > 0);
        let first = report.first_violation.unwrap();
        assert!(!first.left_holds);
    }

    #[test]
    fn scan_is_deterministic() {
        let f = builtin("sine");
        let run = || {
            serde_json::to_string(
                &hh_scan(
                    &f,
                    &symbolic("-cos(x)"),
                    &rat(0, 1),
                    &rat(3, 1),
                    500,
                    23,
                    1e-9,
                )
                .unwrap(),
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn sandwich_square_first_row_and_limit() {
        let report = sandwich(
            &builtin("square"),
            &symbolic("x^3/3"),
            &rat(0, 1),
            &rat(1, 1),
            6,
            1e-12,
        )
        .unwrap();
        assert_eq!(report.rows.len(), 6);
        let first = &report.rows[0];
        assert_eq!(exact(&first.midpoint_sum), &rat(1, 4));
        assert_eq!(exact(&first.delta_f), &rat(1, 3));
        assert_eq!(exact(&first.trapezoid_sum), &rat(1, 2));
        assert!(first.left_holds && first.right_holds);
        // the gap quarters exactly at each refinement for a quadratic
        for w in report.rows.windows(2) {
            let four = Num::Exact(rat(4, 1));
            assert_eq!(
                w[1].gap.mul(&four).cmp_num(&w[0].gap),
                std::cmp::Ordering::Equal
            );
        }
        assert!(report.telescoping_exact);
        for row in &report.rows {
            assert_eq!(exact(&row.delta_f), &rat(1, 3));
        }
        // the midpoint-weighted blend lands on 1/3 exactly for a quadratic
        assert_eq!(exact(&report.limit), &rat(1, 3));
    }

    #[test]
    fn sandwich_affine_converges_immediately() {
        let report = sandwich(
            &builtin("affine"),
            &symbolic("x^2 + 3*x"),
            &rat(1, 1),
            &rat(5, 1),
            10,
            1e-12,
        )
        .unwrap();
        assert!(report.converged);
        assert_eq!(report.rows.len(), 1);
        let row = &report.rows[0];
        assert_eq!(exact(&row.midpoint_sum), &rat(36, 1));
        assert_eq!(exact(&row.delta_f), &rat(36, 1));
        assert_eq!(exact(&row.trapezoid_sum), &rat(36, 1));
        assert_eq!(exact(&report.limit), &rat(36, 1));
    }

    #[test]
    fn sandwich_flags_broken_sides() {
        let report = sandwich(
            &builtin("neg_square"),
            &symbolic("-x^3/3"),
            &rat(0, 1),
            &rat(1, 1),
            3,
            1e-9,
        )
        .unwrap();
        let first = &report.rows[0];
        assert!(!first.left_holds);
        assert!(!first.right_holds);
    }

    #[test]
    fn sandwich_validates_input() {
        let f = builtin("square");
        let p = symbolic("x^3/3");
        assert!(sandwich(&f, &p, &rat(1, 1), &rat(0, 1), 4, 1e-9).is_err());
        assert!(sandwich(&f, &p, &rat(0, 1), &rat(1, 1), 0, 1e-9).is_err());
        assert!(sandwich(&f, &p, &rat(0, 1), &rat(1, 1), 40, 1e-9).is_err());
    }

    #[test]
    fn primitive_identity_for_square() {
        let f = builtin("square");
        let r = derive_primitive_identity(&f, &symbolic("x^3/3"), &rat(0, 1), &rat(1, 1), 1e-4)
            .unwrap();
        assert!(r.holds);
        assert!(!r.indeterminate);
        assert_eq!(exact(&r.delta_f), &rat(1, 3));
    }

    #[test]
    fn primitive_identity_ignores_additive_constants() {
        let f = builtin("square");
        let r = derive_primitive_identity(&f, &symbolic("x^3/3 + 7"), &rat(0, 1), &rat(1, 1), 1e-4)
            .unwrap();
        assert!(r.holds);
    }

    #[test]
    fn primitive_identity_rejects_drift() {
        let f = builtin("square");
        let r =
            derive_primitive_identity(&f, &symbolic("x^3/3 + x/10"), &rat(0, 1), &rat(1, 1), 1e-4)
                .unwrap();
        assert!(!r.holds);
        assert!((r.residual.to_f64() - 0.1).abs() < 1e-3);
    }

    #[test]
    fn primitive_identity_flags_non_convergence() {
        // float-mode brackets cannot shrink below ~1e-6 on the default
        // ladder, so 1e-14 is unreachable and must flag, not error
        let f = builtin("exp");
        let r = derive_primitive_identity(&f, &symbolic("exp(x)"), &rat(0, 1), &rat(1, 1), 1e-14)
            .unwrap();
        assert!(r.indeterminate);
        assert!(r.holds, "bracket-width threshold still brackets the truth");
    }

    #[test]
    fn derivative_check_exp_at_zero() {
        let ok = derivative_check(
            &builtin("exp"),
            &symbolic("exp(x)"),
            &rat(0, 1),
            &[1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
            1e-4,
        )
        .unwrap();
        assert!(ok);
    }

    #[test]
    fn derivative_check_square_interior() {
        let ok = derivative_check(
            &builtin("square"),
            &symbolic("x^3/3"),
            &rat(1, 2),
            &[1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
            1e-4,
        )
        .unwrap();
        assert!(ok);
    }

    #[test]
    fn derivative_check_abs_kink() {
        let ok = derivative_check(
            &builtin("abs"),
            &symbolic("x*abs(x)/2"),
            &rat(0, 1),
            &[1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
            1e-4,
        )
        .unwrap();
        assert!(ok);
    }

    #[test]
    fn derivative_check_rejects_wrong_primitive() {
        // F' = x^2 + 1/10, off by a constant from f = x^2
        let ok = derivative_check(
            &builtin("square"),
            &symbolic("x^3/3 + x/10"),
            &rat(1, 2),
            &[1e-1, 1e-2, 1e-3, 1e-4],
            1e-4,
        )
        .unwrap();
        assert!(!ok);
    }

    #[test]
    fn derivative_check_validates_schedule() {
        let f = builtin("square");
        let p = symbolic("x^3/3");
        assert!(derivative_check(&f, &p, &rat(0, 1), &[], 1e-4).is_err());
        assert!(derivative_check(&f, &p, &rat(0, 1), &[-0.5], 1e-4).is_err());
        let mut bounded = builtin("square");
        bounded.domain = Domain::open(rat(0, 1), rat(1, 1));
        assert!(derivative_check(&bounded, &p, &rat(1, 2), &[1.0], 1e-4).is_err());
    }

    #[test]
    fn reconstruct_square_primitive() {
        let pts = reconstruct_primitive(
            &builtin("square"),
            &rat(0, 1),
            &[rat(1, 2), rat(1, 1)],
            1e-4,
        )
        .unwrap();
        assert!((pts[0].value.to_f64() - 1.0 / 24.0).abs() < 1e-4);
        assert!((pts[1].value.to_f64() - 1.0 / 3.0).abs() < 1e-4);
        assert!(pts.iter().all(|p| p.converged));
    }

    #[test]
    fn reconstruct_zero_function() {
        let zero = FuncDef {
            name: "zero".into(),
            body: parse("0").unwrap(),
            antiderivative: None,
            declared_shape: Shape::Affine,
            domain: Domain::full(),
        };
        let pts =
            reconstruct_primitive(&zero, &rat(0, 1), &[rat(-1, 1), rat(0, 1), rat(2, 1)], 1e-9)
                .unwrap();
        for p in &pts {
            assert_eq!(exact(&p.value), &rat(0, 1));
            assert!(p.converged);
        }
    }

    #[test]
    fn reconstruct_is_odd_around_base_for_even_f() {
        let pts = reconstruct_primitive(
            &builtin("square"),
            &rat(0, 1),
            &[rat(-1, 1), rat(1, 1)],
            1e-4,
        )
        .unwrap();
        assert!((pts[0].value.to_f64() + 1.0 / 3.0).abs() < 1e-4);
        assert!((pts[1].value.to_f64() - 1.0 / 3.0).abs() < 1e-4);
    }

    #[test]
    fn reconstructed_primitive_passes_scan_for_exp() {
        // reconstruction error is O(h^2) of the integration mesh, about
        // 1e-9 here, far inside the 1e-4 scan tolerance
        let f = builtin("exp");
        let big_f = Primitive::reconstructed(f.clone(), rat(0, 1), 3e-4);
        let report = hh_scan(&f, &big_f, &rat(0, 1), &rat(1, 1), 100, 5, 1e-4).unwrap();
        assert_eq!(report.violations, 0);
        assert_eq!(report.provenance, "reconstructed");
    }

    #[test]
    fn builtin_primitive_wraps_the_antiderivative() {
        let f = builtin("square");
        let p = builtin_primitive(&f).unwrap();
        assert_eq!(p.provenance(), "symbolic");
        assert_eq!(exact(&p.eval(&rat(1, 1)).unwrap()), &rat(1, 3));
        let bare = FuncDef {
            name: "bare".into(),
            body: parse("x").unwrap(),
            antiderivative: None,
            declared_shape: Shape::Affine,
            domain: Domain::full(),
        };
        assert!(builtin_primitive(&bare).is_none());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(16))]

            #[test]
            fn shift_invariance(num in -50i64..=50, den in 1i64..=9) {
                let shifted = format!("x^3/3 + {}", rat(num, den));
                let base = hh_check_pair(
                    &lookup_builtin("square").unwrap(),
                    &symbolic("x^3/3"),
                    &rat(-1, 2),
                    &rat(3, 4),
                    1e-12,
                )
                .unwrap();
                let moved = hh_check_pair(
                    &lookup_builtin("square").unwrap(),
                    &symbolic(&shifted),
                    &rat(-1, 2),
                    &rat(3, 4),
                    1e-12,
                )
                .unwrap();
                prop_assert_eq!(
                    base.difference_quotient.cmp_num(&moved.difference_quotient),
                    std::cmp::Ordering::Equal
                );
                prop_assert_eq!(base.left_holds, moved.left_holds);
                prop_assert_eq!(base.right_holds, moved.right_holds);
            }

            #[test]
            fn quadratic_midpoint_convergence(depth in 1u32..=8) {
                let report = sandwich(
                    &lookup_builtin("square").unwrap(),
                    &symbolic("x^3/3"),
                    &rat(0, 1),
                    &rat(1, 1),
                    depth,
                    1e-15,
                )
                .unwrap();
                for row in &report.rows {
                    let err = (row.midpoint_sum.to_f64() - 1.0 / 3.0).abs();
                    prop_assert!(err <= 1.0 * 0.25f64.powi(row.depth as i32));
                }
            }

            #[test]
            fn random_partition_sums_sandwich_delta_f(n in 2u32..=12, seed in 0u64..500) {
                let f = lookup_builtin("square").unwrap();
                let big_f = symbolic("x^3/3");
                let p = KPartition::random_rational(
                    rat(0, 1),
                    rat(1, 1),
                    n,
                    200,
                    seed,
                )
                .unwrap();
                let mid = tagged_sum(&f, &p, &TagRule::Midpoint).unwrap();
                let trap = trapezoid_sum(&f, &p).unwrap();
                let delta = telescoping_sum(&big_f, &p.points()).unwrap();
                prop_assert!(mid.cmp_num(&delta) != std::cmp::Ordering::Greater);
                prop_assert!(delta.cmp_num(&trap) != std::cmp::Ordering::Greater);
            }
        }
    }
}
