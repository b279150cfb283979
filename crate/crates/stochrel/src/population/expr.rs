//! The rate-expression mini-language.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor ('*' factor)*
//! factor := rational | 'x' '[' int ']' | '(' expr ')'
//!         | 'min' '(' expr ',' expr ')' | 'max' '(' expr ',' expr ')'
//!         | 'ind' '(' expr cmp expr ')'
//! cmp    := '<' | '<=' | '==' | '>=' | '>'
//! ```
//!
//! Rational literals are written `p/q` or as plain integers; there are
//! no floating-point literals. Evaluation over an integer state vector
//! is exact.

use std::fmt;

use num_bigint::BigInt;
use num_traits::One;

use crate::error::{Error, Result};
use crate::rational::{format_rat, Rat};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cmp {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl Cmp {
    fn eval(self, a: &Rat, b: &Rat) -> bool {
        match self {
            Cmp::Lt => a < b,
            Cmp::Le => a <= b,
            Cmp::Eq => a == b,
            Cmp::Ge => a >= b,
            Cmp::Gt => a > b,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Cmp::Lt => "<",
            Cmp::Le => "<=",
            Cmp::Eq => "==",
            Cmp::Ge => ">=",
            Cmp::Gt => ">",
        }
    }
}

/// Parsed rate expression over an integer state vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RateExpr {
    Const(Rat),
    /// 1-based coordinate `x[k]`.
    Var(usize),
    Add(Box<RateExpr>, Box<RateExpr>),
    Sub(Box<RateExpr>, Box<RateExpr>),
    Mul(Box<RateExpr>, Box<RateExpr>),
    Min(Box<RateExpr>, Box<RateExpr>),
    Max(Box<RateExpr>, Box<RateExpr>),
    /// Indicator `ind(a cmp b)`: one when the comparison holds.
    Ind(Box<RateExpr>, Cmp, Box<RateExpr>),
}

impl RateExpr {
    /// Exact value at the state vector `x` (1-based coordinates).
    pub fn eval(&self, x: &[i64]) -> Rat {
        match self {
            RateExpr::Const(c) => c.clone(),
            RateExpr::Var(k) => Rat::from_integer(BigInt::from(x[*k - 1])),
            RateExpr::Add(a, b) => a.eval(x) + b.eval(x),
            RateExpr::Sub(a, b) => a.eval(x) - b.eval(x),
            RateExpr::Mul(a, b) => a.eval(x) * b.eval(x),
            RateExpr::Min(a, b) => a.eval(x).min(b.eval(x)),
            RateExpr::Max(a, b) => a.eval(x).max(b.eval(x)),
            RateExpr::Ind(a, cmp, b) => {
                if cmp.eval(&a.eval(x), &b.eval(x)) {
                    Rat::one()
                } else {
                    Rat::from_integer(0.into())
                }
            }
        }
    }

    /// Largest coordinate index mentioned, or zero.
    pub fn max_coordinate(&self) -> usize {
        match self {
            RateExpr::Const(_) => 0,
            RateExpr::Var(k) => *k,
            RateExpr::Add(a, b)
            | RateExpr::Sub(a, b)
            | RateExpr::Mul(a, b)
            | RateExpr::Min(a, b)
            | RateExpr::Max(a, b)
            | RateExpr::Ind(a, _, b) => a.max_coordinate().max(b.max_coordinate()),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            RateExpr::Add(..) | RateExpr::Sub(..) => 1,
            RateExpr::Mul(..) => 2,
            _ => 3,
        }
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>, parent: u8, right: bool) -> fmt::Result {
        let prec = self.precedence();
        // parentheses exactly when reparsing would change the shape
        let need = prec < parent || (right && prec == parent && parent > 0);
        if need {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for RateExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateExpr::Const(c) => f.write_str(&format_rat(c)),
            RateExpr::Var(k) => write!(f, "x[{k}]"),
            RateExpr::Add(a, b) => {
                a.fmt_child(f, 1, false)?;
                f.write_str(" + ")?;
                b.fmt_child(f, 1, true)
            }
            RateExpr::Sub(a, b) => {
                a.fmt_child(f, 1, false)?;
                f.write_str(" - ")?;
                b.fmt_child(f, 1, true)
            }
            RateExpr::Mul(a, b) => {
                a.fmt_child(f, 2, false)?;
                f.write_str("*")?;
                b.fmt_child(f, 2, true)
            }
            RateExpr::Min(a, b) => write!(f, "min({a},{b})"),
            RateExpr::Max(a, b) => write!(f, "max({a},{b})"),
            RateExpr::Ind(a, cmp, b) => write!(f, "ind({a}{}{b})", cmp.symbol()),
        }
    }
}

/// Parses a rate expression, reporting the byte position of any error.
pub fn parse_rate(src: &str) -> Result<RateExpr> {
    let mut p = Parser { src: src.as_bytes(), pos: 0 };
    p.skip_ws();
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> Error {
        Error::Parse { pos: self.pos, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.src.get(self.pos).is_some_and(|b| b.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.peek() == Some(b) {
            self.pos += 1;
            self.skip_ws();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, b: u8) -> Result<()> {
        if self.eat(b) {
            Ok(())
        } else {
            Err(self.error(&format!("expected '{}'", b as char)))
        }
    }

    fn expr(&mut self) -> Result<RateExpr> {
        let mut acc = self.term()?;
        loop {
            if self.eat(b'+') {
                acc = RateExpr::Add(Box::new(acc), Box::new(self.term()?));
            } else if self.eat(b'-') {
                acc = RateExpr::Sub(Box::new(acc), Box::new(self.term()?));
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<RateExpr> {
        let mut acc = self.factor()?;
        while self.eat(b'*') {
            acc = RateExpr::Mul(Box::new(acc), Box::new(self.factor()?));
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<RateExpr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                self.skip_ws();
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(b) if b.is_ascii_digit() => self.rational(),
            Some(b) if b.is_ascii_alphabetic() => self.keyword(),
            _ => Err(self.error("expected a factor")),
        }
    }

    fn integer(&mut self) -> Result<BigInt> {
        let start = self.pos;
        while self.peek().is_some_and(|b| b.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("expected an integer"));
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("digits are utf-8");
        let n = text.parse().expect("digits parse as an integer");
        self.skip_ws();
        Ok(n)
    }

    fn rational(&mut self) -> Result<RateExpr> {
        let num = self.integer()?;
        if self.eat(b'/') {
            let den_pos = self.pos;
            let den = self.integer()?;
            if den == BigInt::from(0) {
                return Err(Error::Parse { pos: den_pos, message: "zero denominator".into() });
            }
            Ok(RateExpr::Const(Rat::new(num, den)))
        } else {
            Ok(RateExpr::Const(Rat::from_integer(num)))
        }
    }

    fn keyword(&mut self) -> Result<RateExpr> {
        let start = self.pos;
        while self.peek().is_some_and(|b| b.is_ascii_alphabetic()) {
            self.pos += 1;
        }
        let word = std::str::from_utf8(&self.src[start..self.pos]).expect("letters are utf-8");
        let word = word.to_string();
        self.skip_ws();
        match word.as_str() {
            "x" => {
                self.expect(b'[')?;
                let idx_pos = self.pos;
                let k = self.integer()?;
                self.expect(b']')?;
                use num_traits::ToPrimitive;
                let k = k
                    .to_usize()
                    .filter(|&k| k >= 1)
                    .ok_or(Error::Parse { pos: idx_pos, message: "coordinate must be >= 1".into() })?;
                Ok(RateExpr::Var(k))
            }
            "min" | "max" => {
                self.expect(b'(')?;
                let a = self.expr()?;
                self.expect(b',')?;
                let b = self.expr()?;
                self.expect(b')')?;
                Ok(if word == "min" {
                    RateExpr::Min(Box::new(a), Box::new(b))
                } else {
                    RateExpr::Max(Box::new(a), Box::new(b))
                })
            }
            "ind" => {
                self.expect(b'(')?;
                let a = self.expr()?;
                let cmp = self.comparison()?;
                let b = self.expr()?;
                self.expect(b')')?;
                Ok(RateExpr::Ind(Box::new(a), cmp, Box::new(b)))
            }
            _ => {
                self.pos = start;
                Err(self.error(&format!("unknown name {word:?}")))
            }
        }
    }

    fn comparison(&mut self) -> Result<Cmp> {
        let cmp = match self.peek() {
            Some(b'<') => {
                self.pos += 1;
                if self.peek() == Some(b'=') {
                    self.pos += 1;
                    Cmp::Le
                } else {
                    Cmp::Lt
                }
            }
            Some(b'>') => {
                self.pos += 1;
                if self.peek() == Some(b'=') {
                    self.pos += 1;
                    Cmp::Ge
                } else {
                    Cmp::Gt
                }
            }
            Some(b'=') => {
                self.pos += 1;
                if self.peek() == Some(b'=') {
                    self.pos += 1;
                    Cmp::Eq
                } else {
                    return Err(self.error("expected '=='"));
                }
            }
            _ => return Err(self.error("expected a comparison operator")),
        };
        self.skip_ws();
        Ok(cmp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, rat_int};

    #[test]
    fn constants_and_indicators() {
        assert_eq!(parse_rate("2/5").unwrap().eval(&[]), rat(2, 5));
        let ind = parse_rate("ind(x[1]>0)").unwrap();
        assert_eq!(ind.eval(&[0, 3]), rat_int(0));
        assert_eq!(ind.eval(&[1, 0]), rat_int(1));
    }

    #[test]
    fn compound_rate_by_hand() {
        let e = parse_rate("(2/5+3/10)*ind(x[1]<x[2]) + 2/5*ind(x[1]==x[2])").unwrap();
        assert_eq!(e.eval(&[1, 1]), rat(2, 5));
        assert_eq!(e.eval(&[0, 1]), rat(7, 10));
        assert_eq!(e.eval(&[2, 1]), rat_int(0));
    }

    #[test]
    fn min_max_and_subtraction() {
        let e = parse_rate("max(x[1],x[2]) - min(x[1], 2)").unwrap();
        assert_eq!(e.eval(&[5, 3]), rat_int(3));
        assert_eq!(e.eval(&[1, 4]), rat_int(3));
    }

    #[test]
    fn errors_carry_positions() {
        match parse_rate("2/5 + @").unwrap_err() {
            Error::Parse { pos, .. } => assert_eq!(pos, 6),
            other => panic!("unexpected error {other}"),
        }
        assert!(parse_rate("1/0").is_err());
        assert!(parse_rate("x[0]").is_err());
        assert!(parse_rate("ind(x[1]=1)").is_err());
        assert!(parse_rate("2 2").is_err());
    }

    #[test]
    fn pretty_print_round_trip() {
        for src in [
            "2/5",
            "(2/5+3/10)*ind(x[1]<x[2]) + 2/5*ind(x[1]==x[2])",
            "x[1]*x[2]*3 - (x[1]+1)*(x[2]+2)",
            "min(max(x[1],x[2]), 7/3) + ind(x[1]>=x[2])",
            "1 - (2 - 3) - 4",
            "2*(3+4)*5",
        ] {
            let ast = parse_rate(src).unwrap();
            let printed = ast.to_string();
            let reparsed = parse_rate(&printed).unwrap();
            assert_eq!(reparsed, ast, "round trip through {printed:?}");
        }
    }
}
