//! K-partitions of an interval [a,b].
//!
//! A partition is stored as its relative coordinates 0 = α_0 < α_1 < … <
//! α_n = 1 rather than the points t_i = a + α_i(b−a). Membership in the
//! rational class is then structural, and the same coefficient list can be
//! transported to any interval.
//!
//! Endpoints are exact rationals. The `Reals` field tag widens which
//! coefficients are admissible in principle; since every representable
//! float is a dyadic rational, the stored form is identical and the tag
//! travels through reports as metadata.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{rat, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KField {
    #[serde(rename = "Q")]
    Rationals,
    #[serde(rename = "R")]
    Reals,
}

impl fmt::Display for KField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KField::Rationals => "Q",
            KField::Reals => "R",
        })
    }
}

impl FromStr for KField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "q" | "rationals" => Ok(KField::Rationals),
            "r" | "reals" => Ok(KField::Reals),
            other => Err(Error::invalid(format!(
                "unknown field '{other}', expected Q or R"
            ))),
        }
    }
}

/// Largest dyadic depth the materializing constructor accepts; deeper grids
/// are handled streamingly by the integration driver and would otherwise
/// allocate gigabytes of coefficients here.
pub const MAX_DYADIC_DEPTH: u32 = 22;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKPartition")]
pub struct KPartition {
    a: Rational,
    b: Rational,
    #[serde(rename = "alphas")]
    coefficients: Vec<Rational>,
    field: KField,
}

#[derive(Deserialize)]
struct RawKPartition {
    a: Rational,
    b: Rational,
    alphas: Vec<Rational>,
    field: KField,
}

impl TryFrom<RawKPartition> for KPartition {
    type Error = Error;

    fn try_from(raw: RawKPartition) -> Result<Self> {
        KPartition::new(raw.a, raw.b, raw.alphas, raw.field)
    }
}

impl KPartition {
    pub fn new(
        a: Rational,
        b: Rational,
        coefficients: Vec<Rational>,
        field: KField,
    ) -> Result<Self> {
        if a >= b {
            return Err(Error::invalid(format!("interval [{a}, {b}] is empty")));
        }
        if coefficients.len() < 2 {
            return Err(Error::invalid(
                "a partition needs at least two coefficients",
            ));
        }
        if !coefficients[0].is_zero() {
            return Err(Error::invalid("first coefficient must be 0"));
        }
        if coefficients.last().unwrap() != &Rational::one() {
            return Err(Error::invalid("last coefficient must be 1"));
        }
        if coefficients.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("coefficients must be strictly increasing"));
        }
        Ok(KPartition {
            a,
            b,
            coefficients,
            field,
        })
    }

    pub fn uniform(a: Rational, b: Rational, n: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("uniform partition needs n >= 1"));
        }
        let coefficients = (0..=n).map(|i| rat(i as i64, n as i64)).collect();
        Self::new(a, b, coefficients, KField::Rationals)
    }

    pub fn dyadic(a: Rational, b: Rational, depth: u32) -> Result<Self> {
        if depth == 0 {
            return Err(Error::invalid("dyadic partition needs depth >= 1"));
        }
        if depth > MAX_DYADIC_DEPTH {
            return Err(Error::Range(format!(
                "dyadic depth {depth} exceeds the materialization limit {MAX_DYADIC_DEPTH}"
            )));
        }
        Self::uniform(a, b, 1u32 << depth)
    }

    pub fn farey(a: Rational, b: Rational, order: u32) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("farey partition needs order >= 1"));
        }
        if order > 2000 {
            return Err(Error::Range(format!(
                "farey order {order} exceeds the materialization limit 2000"
            )));
        }
        let coefficients = farey_sequence(order)
            .into_iter()
            .map(|(p, q)| rat(p, q))
            .collect();
        Self::new(a, b, coefficients, KField::Rationals)
    }

    /// n+1 sorted distinct coefficients with denominators ≤ `max_den`,
    /// always including 0 and 1, sampled without replacement from the Farey
    /// pool of order `max_den`. Deterministic for a fixed seed.
    pub fn random_rational(
        a: Rational,
        b: Rational,
        n: u32,
        max_den: u32,
        seed: u64,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("random partition needs n >= 1"));
        }
        if max_den < n {
            return Err(Error::invalid(format!(
                "cannot place {} distinct coefficients with denominators <= {max_den}",
                n + 1
            )));
        }
        if max_den > 2000 {
            return Err(Error::Range(format!(
                "max_den {max_den} exceeds the materialization limit 2000"
            )));
        }
        let pool = farey_sequence(max_den);
        let interior = &pool[1..pool.len() - 1];
        let want = (n - 1) as usize;
        if interior.len() < want {
            return Err(Error::invalid(format!(
                "cannot place {} distinct coefficients with denominators <= {max_den}",
                n + 1
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked: Vec<usize> =
            rand::seq::index::sample(&mut rng, interior.len(), want).into_vec();
        picked.sort_unstable();
        let mut coefficients = Vec::with_capacity(n as usize + 1);
        coefficients.push(Rational::zero());
        coefficients.extend(
            picked
                .into_iter()
                .map(|i| rat(interior[i].0, interior[i].1)),
        );
        coefficients.push(Rational::one());
        Self::new(a, b, coefficients, KField::Rationals)
    }

    pub fn a(&self) -> &Rational {
        &self.a
    }

    pub fn b(&self) -> &Rational {
        &self.b
    }

    pub fn field(&self) -> KField {
        self.field
    }

    pub fn coefficients(&self) -> &[Rational] {
        &self.coefficients
    }

    pub fn n_cells(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// The partition points t_i = a + α_i(b−a).
    pub fn points(&self) -> Vec<Rational> {
        let width = &self.b - &self.a;
        self.coefficients
            .iter()
            .map(|alpha| &self.a + &(alpha * &width))
            .collect()
    }

    pub fn cells(&self) -> Vec<(Rational, Rational)> {
        let pts = self.points();
        pts.windows(2)
            .map(|w| (w[0].clone(), w[1].clone()))
            .collect()
    }

    /// Maximum gap t_i − t_{i−1}.
    pub fn mesh(&self) -> Rational {
        let width = &self.b - &self.a;
        let max_alpha_gap = self
            .coefficients
            .windows(2)
            .map(|w| &w[1] - &w[0])
            .max()
            .expect("partition has at least one cell");
        &max_alpha_gap * &width
    }

    /// Common refinement: the union of the two coefficient sets over the same
    /// interval and field.
    pub fn refine(&self, other: &Self) -> Result<Self> {
        if self.a != other.a || self.b != other.b {
            return Err(Error::invalid(format!(
                "cannot refine partitions of [{}, {}] and [{}, {}]",
                self.a, self.b, other.a, other.b
            )));
        }
        if self.field != other.field {
            return Err(Error::invalid(
                "cannot refine partitions over different fields",
            ));
        }
        let mut merged: Vec<Rational> =
            Vec::with_capacity(self.coefficients.len() + other.coefficients.len());
        let (mut i, mut j) = (0, 0);
        while i < self.coefficients.len() || j < other.coefficients.len() {
            let next = match (self.coefficients.get(i), other.coefficients.get(j)) {
                (Some(x), Some(y)) => {
                    if x < y {
                        i += 1;
                        x
                    } else if y < x {
                        j += 1;
                        y
                    } else {
                        i += 1;
                        j += 1;
                        x
                    }
                }
                (Some(x), None) => {
                    i += 1;
                    x
                }
                (None, Some(y)) => {
                    j += 1;
                    y
                }
                (None, None) => unreachable!(),
            };
            merged.push(next.clone());
        }
        Self::new(self.a.clone(), self.b.clone(), merged, self.field)
    }
}

/// Farey sequence of the given order as reduced (numerator, denominator)
/// pairs, ascending from 0/1 to 1/1, via the Stern–Brocot next-term
/// recurrence.
fn farey_sequence(order: u32) -> Vec<(i64, i64)> {
    let q = order as i64;
    let mut seq = vec![(0, 1), (1, q)];
    loop {
        let (&(c, d), &(a, b)) = {
            let len = seq.len();
            (&seq[len - 1], &seq[len - 2])
        };
        if (c, d) == (1, 1) {
            break;
        }
        let k = (q + b) / d;
        seq.push((k * c - a, k * d - b));
    }
    seq
}
