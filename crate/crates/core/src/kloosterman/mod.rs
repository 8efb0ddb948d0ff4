//! Kloosterman sums and the Euler product
//! `prod_p (1 - S(1,1;p) p^{-s} + p^{1-2s})^{-1} = sum lambda_S(n) n^{-s}`.
//!
//! Sums are evaluated directly in binary fixed point. Nonvanishing of
//! `lambda_S(p^v)` is certified by margins: a value counts as nonzero only
//! when its unit-normalized size exceeds a conservative error bound.

pub mod hp;

use num_bigint::BigInt;
use num_traits::Pow;
use rayon::prelude::*;
use serde::Serialize;

use crate::arith::{inv_mod, is_prime_u64, primes_in};
use crate::error::{Error, Result};

pub use hp::{HpComplex, HpReal};

pub const DEFAULT_PRECISION_BITS: u32 = 128;
/// Bits carried beyond the requested precision during summation.
pub const GUARD_BITS: u32 = 64;
/// Unit-normalized margins below this are re-examined at higher precision.
pub const NEAR_ZERO_TOLERANCE: f64 = 1e-6;
/// Near-zeros are re-run at up to this multiple of the requested precision.
pub const MAX_PRECISION_FACTOR: u32 = 4;
/// Rotation steps between fresh Taylor evaluations of `e(k/c)`.
const REANCHOR: usize = 256;

/// `S(a,b;c) = sum_{x mod c, (x,c)=1} e((a x + b xbar)/c)` at `bits` of
/// precision.
pub fn kloosterman_sum(a: i64, b: i64, c: u64, bits: u32) -> Result<HpComplex> {
    if c == 0 {
        return Err(Error::Precondition("modulus c must be >= 1".into()));
    }
    let w = bits + GUARD_BITS;
    if c == 1 {
        return Ok(HpComplex { re: HpReal::from_int(1, bits), im: HpReal::zero(bits) });
    }
    let ci = c as i128;
    let mut count = vec![0u64; c as usize];
    for x in 1..c {
        if let Some(xbar) = inv_mod(x, c) {
            let k = (a as i128 * x as i128 + b as i128 * xbar as i128).rem_euclid(ci);
            count[k as usize] += 1;
        }
    }
    let step = hp::e_rational(1, c, w);
    let mut z = HpComplex::zero(w);
    let mut acc = HpComplex::zero(w);
    for (k, &n) in count.iter().enumerate() {
        z = if k % REANCHOR == 0 { hp::e_rational(k as i64, c, w) } else { z.mul(&step) };
        if n > 0 {
            acc = acc.add(&z.mul_int(n));
        }
    }
    Ok(acc.with_bits(bits))
}

/// `lambda_S(1), lambda_S(p), ..., lambda_S(p^nu_max)`.
pub fn lambda_s_sequence(p: u64, nu_max: u32, bits: u32) -> Result<Vec<HpReal>> {
    if !is_prime_u64(p) {
        return Err(Error::Domain(format!("{p} is not prime")));
    }
    let w = bits + GUARD_BITS;
    let s = kloosterman_sum(1, 1, p, w)?.re;
    Ok(trace_series(&s, p, nu_max)
        .into_iter()
        .map(|v| v.with_bits(bits))
        .collect())
}

pub fn lambda_s(p: u64, nu: u32, bits: u32) -> Result<HpReal> {
    Ok(lambda_s_sequence(p, nu, bits)?.pop().expect("nonempty"))
}

/// `a_{v+1} = s a_v - p a_{v-1}` from `a_0 = 1`, for any trace `s`.
pub fn trace_series(s: &HpReal, p: u64, nu_max: u32) -> Vec<HpReal> {
    let bits = s.bits();
    let mut out = vec![HpReal::from_int(1, bits)];
    if nu_max >= 1 {
        out.push(s.clone());
    }
    for v in 2..=nu_max as usize {
        let next = &(s * &out[v - 1]) - &out[v - 2].mul_int(p);
        out.push(next);
    }
    out
}

/// `|a| / p^{v/2}`.
fn unit_margin(a: &HpReal, p: u64, nu: u32) -> f64 {
    a.abs().to_f64() / (p as f64).powf(nu as f64 / 2.0)
}

/// Conservative bound on the unit-normalized rounding error of the `v`-th
/// term computed at `bits` (guard bits ignored).
fn error_bound(p: u64, nu: u32, bits: u32) -> f64 {
    ((nu as f64 + 1.0).powi(2) * p as f64) * 2f64.powi(-(bits as i32))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NearZero {
    pub p: u64,
    pub nu: u32,
    pub margin: f64,
    /// precision of the last evaluation
    pub precision_bits: u32,
    pub certified_nonzero: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prop4Report {
    pub p_max: u64,
    pub nu_max: u32,
    pub precision_bits: u32,
    pub tolerance: f64,
    pub primes_scanned: usize,
    pub min_margin: f64,
    pub min_margin_at: (u64, u32),
    /// margins under `tolerance`, with the outcome of higher-precision re-runs
    pub near_zeros: Vec<NearZero>,
    /// `|lambda_S(p^v)| / p^{v/2} <= v + 1` held on every scanned term
    pub weil_bound_holds: bool,
    /// some near-zero could not be certified nonzero
    pub inconclusive: bool,
}

struct PrimeScan {
    p: u64,
    margins: Vec<f64>,
}

/// Scans `lambda_S(p^v)` for primes `p <= p_max` and `1 <= v <= nu_max`.
pub fn verify_prop4(p_max: u64, nu_max: u32, precision_bits: u32) -> Result<Prop4Report> {
    if p_max < 2 {
        return Err(Error::Precondition("p_max must be >= 2".into()));
    }
    if precision_bits < 32 {
        return Err(Error::Precondition("precision_bits must be >= 32".into()));
    }
    let primes = primes_in(2, p_max)?;
    let scans: Vec<PrimeScan> = primes
        .par_iter()
        .map(|&p| {
            let seq = lambda_s_sequence(p, nu_max, precision_bits)?;
            let margins = (0..=nu_max).map(|v| unit_margin(&seq[v as usize], p, v)).collect();
            Ok(PrimeScan { p, margins })
        })
        .collect::<Result<_>>()?;

    let mut min_margin = f64::INFINITY;
    let mut min_margin_at = (2, 0);
    let mut weil_bound_holds = true;
    let mut near_zeros = Vec::new();
    for s in &scans {
        for v in 1..=nu_max {
            let m = s.margins[v as usize];
            if m < min_margin {
                min_margin = m;
                min_margin_at = (s.p, v);
            }
            if m > v as f64 + 1.0 + 1e-9 {
                weil_bound_holds = false;
            }
            if m < NEAR_ZERO_TOLERANCE {
                near_zeros.push(recheck(s.p, v, precision_bits)?);
            }
        }
    }
    let inconclusive = near_zeros.iter().any(|z| !z.certified_nonzero);
    Ok(Prop4Report {
        p_max,
        nu_max,
        precision_bits,
        tolerance: NEAR_ZERO_TOLERANCE,
        primes_scanned: primes.len(),
        min_margin,
        min_margin_at,
        near_zeros,
        weil_bound_holds,
        inconclusive,
    })
}

fn recheck(p: u64, nu: u32, base_bits: u32) -> Result<NearZero> {
    let mut bits = base_bits;
    loop {
        let margin = unit_margin(&lambda_s(p, nu, bits)?, p, nu);
        let certified = margin > error_bound(p, nu, bits);
        if certified || bits >= base_bits * MAX_PRECISION_FACTOR {
            return Ok(NearZero { p, nu, margin, precision_bits: bits, certified_nonzero: certified });
        }
        bits *= 2;
    }
}

/// Zero detection on an arbitrary trace: returns the `v` in `1..=nu_max`
/// whose term cannot be certified nonzero.
pub fn uncertified_terms(s: &HpReal, p: u64, nu_max: u32) -> Vec<u32> {
    let seq = trace_series(s, p, nu_max);
    (1..=nu_max)
        .filter(|&v| unit_margin(&seq[v as usize], p, v) <= error_bound(p, v, s.bits()))
        .collect()
}

/// Closed form `p^v (e(2/p^{2v}) + e(-2/p^{2v})) = 2 p^v cos(4 pi / p^{2v})`
/// of `S(1,1;p^{2v})` for odd `p`.
pub fn kloosterman_even_prime_power(p: u64, nu: u32, bits: u32) -> Result<HpComplex> {
    if p == 2 {
        return Err(Error::Precondition("the identity is stated for odd p".into()));
    }
    if !is_prime_u64(p) || nu < 1 {
        return Err(Error::Precondition(format!("need an odd prime and nu >= 1, got ({p}, {nu})")));
    }
    let c = BigInt::from(p).pow(2 * nu);
    let c: u64 = c
        .try_into()
        .map_err(|_| Error::Resource(format!("{p}^{} does not fit in 64 bits", 2 * nu)))?;
    let w = bits + GUARD_BITS;
    let z = hp::e_rational(2, c, w);
    let pn = BigInt::from(p).pow(nu);
    // e(x) + e(-x) = 2 cos(2 pi x)
    let re = z.re.mul_int(pn * 2);
    Ok(HpComplex { re, im: HpReal::zero(w) }.with_bits(bits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    const B: u32 = DEFAULT_PRECISION_BITS;

    fn naive(a: i64, b: i64, c: u64) -> Complex64 {
        (0..c)
            .filter_map(|x| inv_mod(x, c).map(|xb| (x, xb)))
            .map(|(x, xb)| {
                let k = (a as i128 * x as i128 + b as i128 * xb as i128).rem_euclid(c as i128);
                Complex64::from_polar(1.0, 2.0 * PI * k as f64 / c as f64)
            })
            .sum()
    }

    #[test]
    fn small_sums() {
        let s2 = kloosterman_sum(1, 1, 2, B).unwrap().to_complex64();
        assert!((s2 - Complex64::new(1.0, 0.0)).norm() < 1e-30);
        let s3 = kloosterman_sum(1, 1, 3, B).unwrap().to_complex64();
        assert!((s3 - Complex64::new(-1.0, 0.0)).norm() < 1e-30);
        assert!(kloosterman_sum(1, 1, 0, B).is_err());
        for c in [1u64, 4, 9, 12, 30, 97, 300, 1000] {
            for (a, b) in [(1, 1), (2, 5), (-3, 7), (0, 1)] {
                let got = kloosterman_sum(a, b, c, B).unwrap().to_complex64();
                let want = naive(a, b, c);
                assert!((got - want).norm() < 1e-9, "S({a},{b};{c})");
            }
        }
    }

    #[test]
    fn weil_bound_and_mod_p() {
        for p in primes_in(2, 1000).unwrap() {
            let s = kloosterman_sum(1, 1, p, B).unwrap();
            let v = s.re.to_f64();
            assert!(v.abs() <= 2.0 * (p as f64).sqrt() + 1e-12, "p = {p}");
            assert!(s.im.abs().to_f64() < 1e-12);
            let r = v / p as f64;
            assert!((r - r.round()).abs() * p as f64 > 1e-6, "p = {p}");
        }
    }

    #[test]
    fn lambda_examples() {
        assert_eq!(lambda_s(7, 0, B).unwrap().to_f64(), 1.0);
        let s = kloosterman_sum(1, 1, 7, B).unwrap().re;
        assert_eq!(lambda_s(7, 1, B).unwrap(), s);
        assert!((lambda_s(3, 2, B).unwrap().to_f64() + 2.0).abs() < 1e-30);
        let seq = lambda_s_sequence(3, 5, B).unwrap();
        for (v, a) in seq.iter().enumerate() {
            assert!(unit_margin(a, 3, v as u32) >= 1e-3);
        }
    }

    #[test]
    fn prop4_scan() {
        let r = verify_prop4(200, 30, B).unwrap();
        assert!(r.near_zeros.is_empty(), "{:?}", r.near_zeros);
        assert!(!r.inconclusive && r.weil_bound_holds);
        assert_eq!(r.primes_scanned, 46);
        assert!(r.min_margin > 0.0);
        assert!(verify_prop4(1, 3, B).is_err());
    }

    #[test]
    fn synthetic_zero_is_detected() {
        let zero = HpReal::zero(B);
        let bad = uncertified_terms(&zero, 5, 6);
        assert_eq!(bad, vec![1, 3, 5]);
        let s = kloosterman_sum(1, 1, 5, B).unwrap().re;
        assert!(uncertified_terms(&s, 5, 30).is_empty());
    }

    #[test]
    fn even_prime_powers() {
        for (p, nu) in [(3u64, 1u32), (5, 1), (7, 2)] {
            let closed = kloosterman_even_prime_power(p, nu, B).unwrap().to_complex64();
            let c = p.pow(2 * nu);
            let direct = kloosterman_sum(1, 1, c, B).unwrap().to_complex64();
            assert!((closed - direct).norm() < 1e-9, "({p}, {nu}): {closed} vs {direct}");
        }
        let c = kloosterman_even_prime_power(3, 1, B).unwrap().re.to_f64();
        assert!((c - 6.0 * (4.0 * PI / 9.0).cos()).abs() < 1e-14);
        assert!(matches!(kloosterman_even_prime_power(2, 1, B), Err(Error::Precondition(_))));
    }
}
