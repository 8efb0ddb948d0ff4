//! Binary fixed-point reals: a value is `mantissa * 2^-bits`.
//!
//! Only what the Kloosterman computations need: ring operations, integer
//! scaling, pi by Machin's formula and `e(k/c)` by Taylor series on an angle
//! reduced into `[-pi, pi]`.

use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};

/// Extra bits carried internally by the transcendental routines.
const TRIG_GUARD: u32 = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HpReal {
    mantissa: BigInt,
    bits: u32,
}

impl HpReal {
    pub fn zero(bits: u32) -> Self {
        HpReal { mantissa: BigInt::zero(), bits }
    }

    pub fn from_int(v: impl Into<BigInt>, bits: u32) -> Self {
        HpReal { mantissa: v.into() << bits as usize, bits }
    }

    pub fn from_mantissa(mantissa: BigInt, bits: u32) -> Self {
        HpReal { mantissa, bits }
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn mantissa(&self) -> &BigInt {
        &self.mantissa
    }

    /// Changes the scale, rounding to nearest when bits are dropped.
    pub fn with_bits(&self, bits: u32) -> Self {
        let mantissa = if bits >= self.bits {
            &self.mantissa << (bits - self.bits) as usize
        } else {
            round_shr(&self.mantissa, self.bits - bits)
        };
        HpReal { mantissa, bits }
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa.is_zero()
    }

    pub fn abs(&self) -> Self {
        HpReal { mantissa: self.mantissa.abs(), bits: self.bits }
    }

    pub fn mul_int(&self, k: impl Into<BigInt>) -> Self {
        HpReal { mantissa: &self.mantissa * k.into(), bits: self.bits }
    }

    /// Division by a nonzero integer, rounded to nearest.
    pub fn div_int(&self, k: impl Into<BigInt>) -> Self {
        let mut k = k.into();
        let mut m = self.mantissa.clone();
        if k.is_negative() {
            k = -k;
            m = -m;
        }
        let q = ((m << 1usize) + &k).div_floor(&(k << 1usize));
        HpReal { mantissa: q, bits: self.bits }
    }

    pub fn to_f64(&self) -> f64 {
        let m = &self.mantissa;
        let nb = m.bits() as i64;
        if nb == 0 {
            return 0.0;
        }
        // keep the top 64 bits so the integer conversion is exact enough
        let drop = (nb - 64).max(0);
        let top = (m >> drop as usize).to_f64().unwrap_or(0.0);
        let exp = drop - self.bits as i64;
        top * 2f64.powi(exp.clamp(-1074, 1023) as i32)
    }
}

fn round_shr(m: &BigInt, s: u32) -> BigInt {
    if s == 0 {
        return m.clone();
    }
    let half = BigInt::from(1) << (s - 1) as usize;
    (m + half) >> s as usize
}

impl Add for &HpReal {
    type Output = HpReal;
    fn add(self, o: &HpReal) -> HpReal {
        assert_eq!(self.bits, o.bits, "mixed fixed-point scales");
        HpReal { mantissa: &self.mantissa + &o.mantissa, bits: self.bits }
    }
}

impl Sub for &HpReal {
    type Output = HpReal;
    fn sub(self, o: &HpReal) -> HpReal {
        assert_eq!(self.bits, o.bits, "mixed fixed-point scales");
        HpReal { mantissa: &self.mantissa - &o.mantissa, bits: self.bits }
    }
}

impl Mul for &HpReal {
    type Output = HpReal;
    fn mul(self, o: &HpReal) -> HpReal {
        assert_eq!(self.bits, o.bits, "mixed fixed-point scales");
        HpReal { mantissa: round_shr(&(&self.mantissa * &o.mantissa), self.bits), bits: self.bits }
    }
}

impl Neg for &HpReal {
    type Output = HpReal;
    fn neg(self) -> HpReal {
        HpReal { mantissa: -&self.mantissa, bits: self.bits }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HpComplex {
    pub re: HpReal,
    pub im: HpReal,
}

impl HpComplex {
    pub fn zero(bits: u32) -> Self {
        HpComplex { re: HpReal::zero(bits), im: HpReal::zero(bits) }
    }

    pub fn add(&self, o: &HpComplex) -> HpComplex {
        HpComplex { re: &self.re + &o.re, im: &self.im + &o.im }
    }

    pub fn mul(&self, o: &HpComplex) -> HpComplex {
        HpComplex {
            re: &(&self.re * &o.re) - &(&self.im * &o.im),
            im: &(&self.re * &o.im) + &(&self.im * &o.re),
        }
    }

    pub fn mul_int(&self, k: impl Into<BigInt>) -> HpComplex {
        let k = k.into();
        HpComplex { re: self.re.mul_int(k.clone()), im: self.im.mul_int(k) }
    }

    pub fn with_bits(&self, bits: u32) -> HpComplex {
        HpComplex { re: self.re.with_bits(bits), im: self.im.with_bits(bits) }
    }

    pub fn to_complex64(&self) -> num_complex::Complex64 {
        num_complex::Complex64::new(self.re.to_f64(), self.im.to_f64())
    }
}

/// `atan(1/k) * 2^bits` by its alternating series.
fn atan_inv(k: u64, bits: u32) -> BigInt {
    let k = BigInt::from(k);
    let k2 = &k * &k;
    let mut power = (BigInt::from(1) << bits as usize) / &k;
    let mut sum = BigInt::zero();
    let mut n = 0u64;
    while !power.is_zero() {
        let term = &power / BigInt::from(2 * n + 1);
        if n % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
        power /= &k2;
        n += 1;
    }
    sum
}

/// `pi` to `bits` fractional bits.
pub fn pi(bits: u32) -> HpReal {
    let w = bits + TRIG_GUARD;
    let v = atan_inv(5, w) * 16 - atan_inv(239, w) * 4;
    HpReal::from_mantissa(v, w).with_bits(bits)
}

/// `e(k/c) = exp(2 pi i k / c)` to `bits` fractional bits.
pub fn e_rational(k: i64, c: u64, bits: u32) -> HpComplex {
    assert!(c >= 1);
    let w = bits + TRIG_GUARD;
    let c_i = c as i128;
    let mut r = (k as i128).rem_euclid(c_i);
    if 2 * r > c_i {
        r -= c_i;
    }
    // theta = 2 pi r / c with |theta| <= pi
    let theta = pi(w).mul_int(BigInt::from(2 * r)).div_int(BigInt::from(c));
    let (cos, sin) = cos_sin(&theta);
    HpComplex { re: cos.with_bits(bits), im: sin.with_bits(bits) }
}

/// Taylor series for `|theta| <= pi`.
fn cos_sin(theta: &HpReal) -> (HpReal, HpReal) {
    let bits = theta.bits();
    let one = HpReal::from_int(1, bits);
    let x2 = theta * theta;
    let mut cos = one.clone();
    let mut sin = theta.clone();
    let mut term_c = one;
    let mut term_s = theta.clone();
    let mut n = 1u64;
    loop {
        term_c = (&term_c * &x2).div_int(BigInt::from((2 * n - 1) * (2 * n)));
        term_s = (&term_s * &x2).div_int(BigInt::from((2 * n) * (2 * n + 1)));
        if term_c.is_zero() && term_s.is_zero() {
            break;
        }
        if n % 2 == 1 {
            cos = &cos - &term_c;
            sin = &sin - &term_s;
        } else {
            cos = &cos + &term_c;
            sin = &sin + &term_s;
        }
        n += 1;
    }
    (cos, sin)
}
