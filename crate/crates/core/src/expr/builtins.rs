//! Built-in test functions with known antiderivatives.

use super::{parse, Domain, FuncDef, Shape};

fn def(name: &str, body: &str, anti: &str, shape: Shape) -> FuncDef {
    FuncDef {
        name: name.to_string(),
        body: parse(body).expect("builtin body parses"),
        antiderivative: Some(parse(anti).expect("builtin antiderivative parses")),
        declared_shape: shape,
        domain: Domain::full(),
    }
}

/// The standard corpus: convex, concave, affine, and nonsmooth cases, each
/// with a closed-form antiderivative.
pub fn builtin_suite() -> Vec<FuncDef> {
    vec![
        def("square", "x^2", "x^3/3", Shape::Convex),
        def("quartic", "x^4", "x^5/5", Shape::Convex),
        def("abs", "abs(x)", "x*abs(x)/2", Shape::Convex),
        def("exp", "exp(x)", "exp(x)", Shape::Convex),
        def("relu", "max(x, 0)", "max(x, 0)^2/2", Shape::Convex),
        def("neg_square", "-x^2", "-x^3/3", Shape::Concave),
        def("sine", "sin(x)", "-cos(x)", Shape::Unknown),
        def("affine", "2*x + 3", "x^2 + 3*x", Shape::Affine),
    ]
}

pub fn lookup_builtin(name: &str) -> Option<FuncDef> {
    builtin_suite().into_iter().find(|d| d.name == name)
}
