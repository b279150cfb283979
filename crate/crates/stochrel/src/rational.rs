//! Exact rational scalars and their text form.
//!
//! Every probability, rate, and capacity in the decision path is a
//! [`Rat`]: an arbitrary-precision rational. The text form used in all
//! JSON interfaces is `"p/q"` (or plain `"p"` for integers), so exactness
//! survives serialization.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Exact rational number used throughout the library.
pub type Rat = BigRational;

/// Builds `n/d` as a [`Rat`]. Panics when `d == 0`.
pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

/// Builds the integer `n` as a [`Rat`].
pub fn rat_int(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Parses `"p/q"` or `"p"` (optionally signed, ASCII digits only).
pub fn parse_rat(s: &str) -> Result<Rat> {
    let s = s.trim();
    let err = |msg: &str| Error::BadInput(format!("cannot parse rational {s:?}: {msg}"));
    let (num_str, den_str) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), Some(d.trim())),
        None => (s, None),
    };
    let num: BigInt = num_str.parse().map_err(|_| err("bad numerator"))?;
    let den: BigInt = match den_str {
        Some(d) => d.parse().map_err(|_| err("bad denominator"))?,
        None => BigInt::one(),
    };
    if den.is_zero() {
        return Err(err("zero denominator"));
    }
    Ok(Rat::new(num, den))
}

/// Canonical text form: `"p/q"` in lowest terms, or `"p"` when integral.
pub fn format_rat(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Nearest floating-point value, for reports and approximate modes.
pub fn rat_to_f64(r: &Rat) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // Fall back to a quotient of lossy conversions for huge terms.
        let n = r.numer().to_f64().unwrap_or(f64::MAX * r.numer().signum().to_f64().unwrap());
        let d = r.denom().to_f64().unwrap_or(f64::MAX);
        n / d
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format_round_trip() {
        for s in ["1/3", "-7/2", "0", "4", "-12"] {
            let r = parse_rat(s).unwrap();
            assert_eq!(format_rat(&r), s);
        }
        // reduced on parse
        assert_eq!(format_rat(&parse_rat("2/4").unwrap()), "1/2");
        assert_eq!(format_rat(&parse_rat(" 3 / 6 ").unwrap()), "1/2");
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_rat("1/0").is_err());
        assert!(parse_rat("a/b").is_err());
        assert!(parse_rat("1.5").is_err());
        assert!(parse_rat("").is_err());
    }
}
