//! Exact and approximate machinery for integrals over rational partitions
//! and the midpoint/trapezoid bounds around them.
//!
//! The crate is organized bottom-up:
//!
//! * [`rational`]: arbitrary-precision rationals in canonical form.
//! * [`value`]: the exact-or-float scalar [`value::Num`] used by every sum.
//! * [`expr`]: a small expression language for functions of one variable,
//!   with exact evaluation over its rational-closed fragment.
//! * [`partition`]: partitions of [a,b] given by rational coordinates,
//!   including Farey and seeded random generators.
//! * [`kriemann`]: upper/lower/tagged/trapezoid sums, the bracketing
//!   integration driver, and the exact affine closed form.
//! * [`convexity`]: sample-based convexity checks, violation search, and
//!   numeric support lines.
//! * [`hh`]: the Hermite–Hadamard engine: pair checks, scans, the sandwich
//!   procedure, derivative squeeze, and primitive reconstruction.

pub mod convexity;
pub mod error;
pub mod expr;
pub mod hh;
pub mod kriemann;
pub mod partition;
pub mod rational;
pub mod value;

pub use error::{Error, Result};
pub use rational::{rat, Rational};
pub use value::Num;
