//! Exact rational helpers shared by the exponent calculus, the sieve-weight
//! machinery and the JSON/CSV writers.
//!
//! Rationals always serialize as `"num/den"` with a positive denominator,
//! including integers (`"7/1"`).

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = BigRational;

/// `n/d` as an exact rational. Panics on `d == 0`.
pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn format_ratio(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Parses `"num/den"` or a bare integer. Zero denominators are rejected.
pub fn parse_ratio(s: &str) -> Result<Rational> {
    let s = s.trim();
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let n: BigInt = n
        .parse()
        .map_err(|_| Error::Parse(format!("bad numerator in {s:?}")))?;
    let d: BigInt = d
        .parse()
        .map_err(|_| Error::Parse(format!("bad denominator in {s:?}")))?;
    if d.is_zero() {
        return Err(Error::Parse(format!("zero denominator in {s:?}")));
    }
    Ok(Rational::new(n, d))
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // numerator/denominator individually overflow f64; scale down first
        let n = r.numer().bits() as i64;
        let d = r.denom().bits() as i64;
        let shift = (n.max(d) - 1000).max(0) as usize;
        let nn = (r.numer() >> shift).to_f64().unwrap_or(0.0);
        let dd = (r.denom() >> shift).to_f64().unwrap_or(f64::INFINITY);
        nn / dd
    })
}

/// Exact rational value of a finite float.
pub fn from_f64(v: f64) -> Option<Rational> {
    Rational::from_float(v)
}

/// Floor of a rational as a BigInt.
pub fn floor(r: &Rational) -> BigInt {
    r.numer().div_floor(r.denom())
}

/// Largest integer `m >= 0` with `m <= x^e`, for `x >= 1` and `e >= 0`.
///
/// Exact: with `e = a/b` this is the largest `m` such that `m^b <= x^a`.
pub fn floor_pow(x: u64, e: &Rational) -> Result<u64> {
    if e.is_negative() {
        return Err(Error::Domain(format!(
            "floor_pow needs a nonnegative exponent, got {}",
            format_ratio(e)
        )));
    }
    if x == 0 {
        return Ok(0);
    }
    let a = e
        .numer()
        .to_u32()
        .ok_or_else(|| Error::Resource("exponent numerator too large".into()))?;
    let b = e
        .denom()
        .to_u32()
        .ok_or_else(|| Error::Resource("exponent denominator too large".into()))?;
    let target = BigUint::from(x).pow(a);
    let fits = |m: u64| BigUint::from(m).pow(b) <= target;
    let approx = (x as f64).powf(to_f64(e));
    if !approx.is_finite() || approx > 1.8e19 {
        return Err(Error::Resource(format!(
            "{x}^{} does not fit in 64 bits",
            format_ratio(e)
        )));
    }
    let mut m = approx.floor() as u64;
    while m > 0 && !fits(m) {
        m -= 1;
    }
    while fits(m + 1) {
        m += 1;
    }
    Ok(m)
}

pub fn is_unit_interval(r: &Rational) -> bool {
    !r.is_negative() && *r <= Rational::one()
}

/// Serde adapter: a `Rational` as a `"num/den"` string.
pub mod serde_ratio {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format_ratio(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Rational, D::Error> {
        let s = String::deserialize(d)?;
        parse_ratio(&s).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter: an integer-like value as a decimal string.
pub mod serde_decimal {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::fmt::Display;
    use std::str::FromStr;

    pub fn serialize<T: Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<T, D::Error>
    where
        T: FromStr,
        T::Err: Display,
        D: Deserializer<'de>,
    {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format() {
        assert_eq!(parse_ratio("7/17").unwrap(), rat(7, 17));
        assert_eq!(parse_ratio(" 4 / 8 ").unwrap(), rat(1, 2));
        assert_eq!(parse_ratio("-3").unwrap(), int(-3));
        assert_eq!(format_ratio(&int(1)), "1/1");
        assert_eq!(format_ratio(&rat(-2, 4)), "-1/2");
        assert!(parse_ratio("1/0").is_err());
        assert!(parse_ratio("a/2").is_err());
    }

    #[test]
    fn floor_pow_is_exact() {
        assert_eq!(floor_pow(10_000, &rat(1, 2)).unwrap(), 100);
        assert_eq!(floor_pow(10_000, &rat(1, 4)).unwrap(), 10);
        assert_eq!(floor_pow(9_999, &rat(1, 4)).unwrap(), 9);
        assert_eq!(floor_pow(1_000_000, &rat(1, 3)).unwrap(), 100);
        assert_eq!(floor_pow(999_999, &rat(1, 3)).unwrap(), 99);
        assert_eq!(floor_pow(7, &int(0)).unwrap(), 1);
        assert_eq!(floor_pow(7, &int(2)).unwrap(), 49);
        assert!(floor_pow(7, &rat(-1, 2)).is_err());
    }

    #[test]
    fn floor_of_negative() {
        assert_eq!(floor(&rat(-1, 3)), BigInt::from(-1));
        assert_eq!(floor(&rat(5, 3)), BigInt::from(1));
    }
}
