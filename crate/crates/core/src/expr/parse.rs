//! Lexer and recursive-descent parser.
//!
//! Grammar, in precedence order (loosest first):
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := factor (("*" | "/") factor)*
//! factor := "-" factor | atom ("^" int)?
//! atom   := number | "x" | ident "(" expr ("," expr)* ")" | "(" expr ")"
//! number := int ("/" posint)? | decimal
//! ```
//!
//! The `number` production is greedy: an integer followed by `/` and a
//! positive integer is one rational literal wherever an atom is expected, so
//! `3/4` and `x/2/3` contain literal fractions while `x/2` is a division.
//! Decimals are exact: `0.25` parses to the rational 1/4.

use thiserror::Error;

use super::{Expr, Func};
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at offset {offset}: expected {}; found {found}", .expected.join(", "))]
pub struct ParseError {
    /// Byte offset into the input where the offending token starts.
    pub offset: usize,
    pub expected: Vec<String>,
    pub found: String,
}

impl ParseError {
    fn new(offset: usize, expected: &[&str], found: impl Into<String>) -> Self {
        ParseError {
            offset,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: found.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(String),
    Dec(String),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Int(s) | Tok::Dec(s) => format!("'{s}'"),
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Star => "'*'".into(),
            Tok::Slash => "'/'".into(),
            Tok::Caret => "'^'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                toks.push((i, Tok::Plus));
                i += 1;
            }
            '-' => {
                toks.push((i, Tok::Minus));
                i += 1;
            }
            '*' => {
                toks.push((i, Tok::Star));
                i += 1;
            }
            '/' => {
                toks.push((i, Tok::Slash));
                i += 1;
            }
            '^' => {
                toks.push((i, Tok::Caret));
                i += 1;
            }
            '(' => {
                toks.push((i, Tok::LParen));
                i += 1;
            }
            ')' => {
                toks.push((i, Tok::RParen));
                i += 1;
            }
            ',' => {
                toks.push((i, Tok::Comma));
                i += 1;
            }
            '0'..='9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len()
                    && bytes[i] == b'.'
                    && i + 1 < bytes.len()
                    && bytes[i + 1].is_ascii_digit()
                {
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                    toks.push((start, Tok::Dec(text[start..i].to_string())));
                } else if i < bytes.len() && bytes[i] == b'.' {
                    return Err(ParseError::new(i, &["digits after decimal point"], "'.'"));
                } else {
                    toks.push((start, Tok::Int(text[start..i].to_string())));
                }
            }
            'a'..='z' | 'A'..='Z' => {
                let start = i;
                while i < bytes.len() && (bytes[i] as char).is_ascii_alphabetic() {
                    i += 1;
                }
                toks.push((start, Tok::Ident(text[start..i].to_string())));
            }
            _ => return Err(ParseError::new(i, &["expression token"], format!("'{c}'"))),
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

const ATOM_EXPECTED: &[&str] = &["number", "'x'", "function name", "'('", "'-'"];

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.pos + 1).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(o, _)| *o).unwrap_or(self.end)
    }

    fn found(&self) -> String {
        self.peek()
            .map(Tok::describe)
            .unwrap_or_else(|| "end of input".into())
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(_, t)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, want: &Tok, expected: &[&str]) -> Result<(), ParseError> {
        if self.peek() == Some(want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(ParseError::new(self.offset(), expected, self.found()))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    lhs = Expr::Div(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            let inner = self.factor()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        let atom = self.atom()?;
        if self.peek() == Some(&Tok::Caret) {
            self.pos += 1;
            let exp = self.exponent()?;
            return Ok(Expr::Pow(Box::new(atom), exp));
        }
        Ok(atom)
    }

    fn exponent(&mut self) -> Result<i64, ParseError> {
        let negative = if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            true
        } else {
            false
        };
        let off = self.offset();
        match self.bump() {
            Some(Tok::Int(s)) => {
                let mag: i64 = s.parse().map_err(|_| {
                    ParseError::new(off, &["integer exponent within i64"], format!("'{s}'"))
                })?;
                Ok(if negative { -mag } else { mag })
            }
            Some(t) => Err(ParseError::new(off, &["integer exponent"], t.describe())),
            None => Err(ParseError::new(off, &["integer exponent"], "end of input")),
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let off = self.offset();
        match self.peek().cloned() {
            Some(Tok::Int(a)) => {
                // Greedy literal production: int "/" posint is one rational.
                if self.peek2() == Some(&Tok::Slash) {
                    if let Some((_, Tok::Int(b))) = self.toks.get(self.pos + 2) {
                        if b.bytes().any(|d| d != b'0') {
                            let lit = format!("{a}/{b}")
                                .parse::<Rational>()
                                .expect("lexer-validated rational literal");
                            self.pos += 3;
                            return Ok(Expr::Lit(lit));
                        }
                    }
                }
                self.pos += 1;
                Ok(Expr::Lit(
                    a.parse::<Rational>().expect("lexer-validated integer"),
                ))
            }
            Some(Tok::Dec(s)) => {
                self.pos += 1;
                Ok(Expr::Lit(
                    s.parse::<Rational>().expect("lexer-validated decimal"),
                ))
            }
            Some(Tok::Ident(name)) => {
                if name == "x" {
                    self.pos += 1;
                    return Ok(Expr::Var);
                }
                let Some(func) = Func::from_name(&name) else {
                    return Err(ParseError::new(
                        off,
                        &["'x'", "one of exp, log, sin, cos, abs, max, min"],
                        format!("'{name}'"),
                    ));
                };
                self.pos += 1;
                self.eat(&Tok::LParen, &["'('"])?;
                let mut args = vec![self.expr()?];
                while self.peek() == Some(&Tok::Comma) {
                    self.pos += 1;
                    args.push(self.expr()?);
                }
                self.eat(&Tok::RParen, &["')'", "','"])?;
                if args.len() != func.arity() {
                    return Err(ParseError {
                        offset: off,
                        expected: vec![format!("{} argument(s) to {}", func.arity(), func.name())],
                        found: format!("{} argument(s)", args.len()),
                    });
                }
                Ok(Expr::Call(func, args))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.expr()?;
                self.eat(&Tok::RParen, &["')'"])?;
                Ok(inner)
            }
            _ => Err(ParseError::new(off, ATOM_EXPECTED, self.found())),
        }
    }
}

pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: text.len(),
    };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(ParseError::new(
            p.offset(),
            &["operator", "end of input"],
            p.found(),
        ));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    fn b(e: Expr) -> Box<Expr> {
        Box::new(e)
    }

    #[test]
    fn grammar_forced_shapes() {
        assert_eq!(
            parse("x^2 + 3/4").unwrap(),
            Expr::Add(b(Expr::Pow(b(Expr::Var), 2)), b(Expr::Lit(rat(3, 4))))
        );
        assert_eq!(
            parse("max(x, 0)").unwrap(),
            Expr::Call(Func::Max, vec![Expr::Var, Expr::Lit(rat(0, 1))])
        );
    }

    #[test]
    fn malformed_input_reports_offset() {
        let err = parse("x + * 2").unwrap_err();
        assert_eq!(err.offset, 4);
        assert_eq!(err.found, "'*'");

        let err = parse("").unwrap_err();
        assert_eq!(err.offset, 0);
        assert_eq!(err.found, "end of input");

        let err = parse("x 2").unwrap_err();
        assert_eq!(err.offset, 2);
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(
            parse("2*x + 3").unwrap(),
            Expr::Add(
                b(Expr::Mul(b(Expr::Lit(rat(2, 1))), b(Expr::Var))),
                b(Expr::Lit(rat(3, 1)))
            )
        );
        assert_eq!(
            parse("-x^2").unwrap(),
            Expr::Neg(b(Expr::Pow(b(Expr::Var), 2)))
        );
        assert_eq!(
            parse("x - 1 - 2").unwrap(),
            Expr::Sub(
                b(Expr::Sub(b(Expr::Var), b(Expr::Lit(rat(1, 1))))),
                b(Expr::Lit(rat(2, 1)))
            )
        );
        assert_eq!(parse("x^-2").unwrap(), Expr::Pow(b(Expr::Var), -2));
    }

    #[test]
    fn literal_production_is_greedy() {
        assert_eq!(parse("3/4").unwrap(), Expr::Lit(rat(3, 4)));
        // the denominator-position fraction binds as one literal
        assert_eq!(
            parse("x/2/3").unwrap(),
            Expr::Div(b(Expr::Var), b(Expr::Lit(rat(2, 3))))
        );
        // a zero "denominator" is not a posint, so this is division
        assert_eq!(
            parse("1/0").unwrap(),
            Expr::Div(b(Expr::Lit(rat(1, 1))), b(Expr::Lit(rat(0, 1))))
        );
        // parentheses force real division nodes
        assert_eq!(
            parse("(3)/4").unwrap(),
            Expr::Div(b(Expr::Lit(rat(3, 1))), b(Expr::Lit(rat(4, 1))))
        );
    }

    #[test]
    fn decimals_are_exact_rationals() {
        assert_eq!(parse("0.25").unwrap(), Expr::Lit(rat(1, 4)));
        assert_eq!(parse("3.14").unwrap(), Expr::Lit(rat(157, 50)));
        assert!(parse("2.").is_err());
    }

    #[test]
    fn call_arity_is_checked() {
        assert!(parse("max(x)").is_err());
        assert!(parse("abs(x, 1)").is_err());
        assert!(parse("min(x, 0)").is_ok());
    }

    #[test]
    fn unknown_names_are_rejected() {
        let err = parse("foo(x)").unwrap_err();
        assert_eq!(err.offset, 0);
        assert!(parse("y").is_err());
        assert!(parse("exp + 1").is_err());
    }

    #[test]
    fn whitespace_is_insignificant() {
        assert_eq!(parse(" x ^ 2 ").unwrap(), parse("x^2").unwrap());
        assert_eq!(parse("max( x , 0 )").unwrap(), parse("max(x,0)").unwrap());
    }

    #[test]
    fn print_parse_round_trip_on_samples() {
        let samples = [
            "x^2 + 3/4",
            "max(x, 0)",
            "-x^2",
            "x^3/3",
            "(x + 1)*(x - 1)",
            "exp(x)*log(x + 5)",
            "x*abs(x)/2",
            "max(x, 0)^2/2",
            "1/2*x - 0.25",
            "x/2/3",
            "x^-3",
            "min(sin(x), cos(x))",
        ];
        for s in samples {
            let ast = parse(s).unwrap();
            let printed = ast.to_string();
            assert_eq!(parse(&printed).unwrap(), ast, "round-trip failed for {s}");
        }
    }
}
