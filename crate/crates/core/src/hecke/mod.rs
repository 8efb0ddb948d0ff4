//! Hecke eigenvalues of primitive forms.
//!
//! A form is described by its weight `k`, level `N`, nebentypus `chi` and a
//! source for the prime coefficients `lambda(p)`. Everything else is derived:
//! prime powers by the Hecke recursion
//!
//! ```text
//! lambda(p^{v+1}) = lambda(p) lambda(p^v) - chi(p) p^{k-1} lambda(p^{v-1})
//! ```
//!
//! (total multiplicativity at `p | N`), composite indices by multiplicativity.
//! Explicit tables hold values in the arithmetic normalization. Exact sources
//! with an integer-valued character are evaluated in `BigInt`; everything else
//! in `Complex64`, where "zero" means a unit-normalized magnitude below a
//! tolerance and results are flagged approximate.

pub mod tau;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use num_bigint::{BigInt, BigUint};
use num_complex::Complex64;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Num, One, Pow, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::arith::{self, divisor_count_table, ec_discriminant_core, factorize, is_prime_u64};
use crate::error::{Error, Result};

pub use tau::{TauCache, TauTable, MAX_TAU_CEILING};

/// Absolute tolerance for zero detection on unit-normalized complex values.
pub const DEFAULT_ZERO_TOLERANCE: f64 = 1e-9;

/// Largest `x` for which unit-normalized even moments are summed exactly.
/// Beyond it the common denominator outgrows desk-scale arithmetic.
pub const EXACT_MOMENT_LIMIT: u64 = 20_000;

/// Largest `x` accepted by [`divisor_cube_sum`].
pub const DIVISOR_CUBE_LIMIT: u64 = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    #[default]
    Arithmetic,
    /// Divide `lambda(n)` by `n^{(k-1)/2}`.
    Unit,
}

/// Dirichlet character modulo `N`, stored as its values on residues.
#[derive(Debug, Clone, PartialEq)]
pub enum Character {
    Trivial { modulus: u64 },
    Table { modulus: u64, values: Vec<Complex64> },
}

/// Residues beyond this bound are not used as left factors when checking
/// multiplicativity of a tabulated character.
const CHARACTER_CHECK_SPAN: u64 = 256;

impl Character {
    pub fn trivial(modulus: u64) -> Self {
        Character::Trivial { modulus: modulus.max(1) }
    }

    /// Validates a value table: zero exactly off the units, unimodular on
    /// them, `chi(1) = 1` and multiplicative.
    pub fn from_values(modulus: u64, values: Vec<Complex64>) -> Result<Self> {
        if modulus == 0 || values.len() as u64 != modulus {
            return Err(Error::Precondition(format!(
                "character table for modulus {modulus} needs exactly {modulus} values"
            )));
        }
        let tol = 1e-9;
        for (r, v) in values.iter().enumerate() {
            let unit = (r as u64).gcd(&modulus) == 1;
            if unit && (v.norm() - 1.0).abs() > tol {
                return Err(Error::Precondition(format!("chi({r}) is not unimodular")));
            }
            if !unit && v.norm() > tol {
                return Err(Error::Precondition(format!("chi({r}) must vanish")));
            }
        }
        if (values[(1 % modulus) as usize] - Complex64::new(1.0, 0.0)).norm() > tol {
            return Err(Error::Precondition("chi(1) must be 1".into()));
        }
        for a in 0..modulus.min(CHARACTER_CHECK_SPAN) {
            for b in 0..modulus {
                let ab = ((a as u128 * b as u128) % modulus as u128) as usize;
                let lhs = values[ab];
                let rhs = values[a as usize] * values[b as usize];
                if (lhs - rhs).norm() > tol {
                    return Err(Error::Precondition(format!(
                        "character is not multiplicative at ({a}, {b})"
                    )));
                }
            }
        }
        Ok(Character::Table { modulus, values })
    }

    pub fn modulus(&self) -> u64 {
        match self {
            Character::Trivial { modulus } | Character::Table { modulus, .. } => *modulus,
        }
    }

    pub fn value(&self, n: u64) -> Complex64 {
        match self {
            Character::Trivial { modulus } => {
                if n.gcd(modulus) == 1 {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }
            Character::Table { modulus, values } => values[(n % modulus) as usize],
        }
    }

    /// `chi(n)` as an integer when it is one of `-1, 0, 1`.
    pub fn integer_value(&self, n: u64) -> Option<i64> {
        let v = self.value(n);
        [-1i64, 0, 1]
            .into_iter()
            .find(|&c| (v - Complex64::new(c as f64, 0.0)).norm() < 1e-12)
    }

    pub fn is_integer_valued(&self) -> bool {
        match self {
            Character::Trivial { .. } => true,
            Character::Table { modulus, .. } => (0..*modulus).all(|r| self.integer_value(r).is_some()),
        }
    }

    /// Principal character, whatever its representation.
    pub fn is_trivial(&self) -> bool {
        match self {
            Character::Trivial { .. } => true,
            Character::Table { modulus, .. } => (0..*modulus)
                .filter(|r| r.gcd(modulus) == 1)
                .all(|r| self.integer_value(r) == Some(1)),
        }
    }
}

/// Prime coefficients `lambda(p)` of an explicitly tabulated form.
#[derive(Debug, Clone, PartialEq)]
pub enum ExplicitTable {
    Integer(BTreeMap<u64, BigInt>),
    Complex(BTreeMap<u64, Complex64>),
}

#[derive(Clone)]
pub enum CoeffSource {
    Tau(Arc<TauTable>),
    /// `y^2 = x^3 + a4 x + a6`
    Elliptic { a4: i64, a6: i64 },
    Explicit(ExplicitTable),
}

impl fmt::Debug for CoeffSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoeffSource::Tau(t) => write!(f, "Tau(ceiling = {})", t.ceiling()),
            CoeffSource::Elliptic { a4, a6 } => write!(f, "Elliptic({a4}, {a6})"),
            CoeffSource::Explicit(t) => write!(f, "Explicit({t:?})"),
        }
    }
}

/// A Hecke eigenvalue, exact or floating.
#[derive(Debug, Clone, PartialEq)]
pub enum Coeff {
    Exact(BigInt),
    Approx(Complex64),
}

impl Coeff {
    pub fn is_exact(&self) -> bool {
        matches!(self, Coeff::Exact(_))
    }

    pub fn as_exact(&self) -> Option<&BigInt> {
        match self {
            Coeff::Exact(v) => Some(v),
            Coeff::Approx(_) => None,
        }
    }

    pub fn to_complex(&self) -> Complex64 {
        match self {
            Coeff::Exact(v) => Complex64::new(crate::rational::to_f64(&BigRational::from_integer(v.clone())), 0.0),
            Coeff::Approx(z) => *z,
        }
    }

    /// Exact zero test; floating values are never reported as exactly zero.
    pub fn is_exact_zero(&self) -> bool {
        matches!(self, Coeff::Exact(v) if v.is_zero())
    }
}

impl fmt::Display for Coeff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coeff::Exact(v) => write!(f, "{v}"),
            Coeff::Approx(z) if z.im == 0.0 => write!(f, "{:e}", z.re),
            Coeff::Approx(z) => write!(f, "{:e}{:+e}i", z.re, z.im),
        }
    }
}

/// Local data at a prime: `lambda(p)` and `c = chi(p) p^{k-1}`.
#[derive(Debug, Clone)]
enum Local {
    Exact { lp: BigInt, c: BigInt },
    Approx { lp: Complex64, c: Complex64 },
}

#[derive(Debug, Clone)]
pub struct HeckeForm {
    weight: u32,
    level: u64,
    character: Character,
    source: CoeffSource,
    normalization: Normalization,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VanishingReport {
    pub prime: u64,
    pub vanishing_orders: Vec<u32>,
    /// `d` with `alpha_p / beta_p` a primitive `d`-th root of unity
    pub root_ratio_order: Option<u32>,
    pub all_nonzero: bool,
    pub approximate: bool,
    pub nu_max: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentSum {
    pub x: u64,
    pub r: u32,
    /// number of `n` that passed the selection
    pub terms: u64,
    /// exact value when the source and normalization allow it
    pub exact: Option<BigRational>,
    pub value: f64,
    /// `value / x` (unit) or `value / x^{1 + r(k-1)/2}` (arithmetic)
    pub ratio: f64,
}

impl HeckeForm {
    /// Ramanujan's Delta: weight 12, level 1.
    pub fn delta(table: Arc<TauTable>) -> Self {
        HeckeForm {
            weight: 12,
            level: 1,
            character: Character::trivial(1),
            source: CoeffSource::Tau(table),
            normalization: Normalization::Arithmetic,
        }
    }

    /// Weight 2 form attached to `y^2 = x^3 + a4 x + a6`. The level is the
    /// radical of the discriminant `-16 (4 a4^3 + 27 a6^2)`, a proxy for the
    /// conductor with the same prime support.
    pub fn elliptic(a4: i64, a6: i64) -> Result<Self> {
        let core = ec_discriminant_core(a4, a6);
        if core.is_zero() {
            return Err(Error::Domain(format!("y^2 = x^3 + {a4}x + {a6} is singular")));
        }
        let disc = core.abs() * BigInt::from(16);
        let fac = factorize(&disc.to_biguint().expect("positive"))?;
        let mut level = BigUint::one();
        for (p, _) in &fac.factors {
            level *= p;
        }
        let level = level
            .to_u64()
            .ok_or_else(|| Error::Resource("discriminant radical exceeds 64 bits".into()))?;
        Ok(HeckeForm {
            weight: 2,
            level,
            character: Character::trivial(level),
            source: CoeffSource::Elliptic { a4, a6 },
            normalization: Normalization::Arithmetic,
        })
    }

    pub fn explicit(weight: u32, level: u64, character: Character, table: ExplicitTable) -> Result<Self> {
        if weight < 2 {
            return Err(Error::Precondition(format!("weight {weight} < 2")));
        }
        if level == 0 || character.modulus() != level {
            return Err(Error::Precondition(format!(
                "character modulus {} does not match level {level}",
                character.modulus()
            )));
        }
        Ok(HeckeForm {
            weight,
            level,
            character,
            source: CoeffSource::Explicit(table),
            normalization: Normalization::Arithmetic,
        })
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn weight(&self) -> u32 {
        self.weight
    }

    pub fn level(&self) -> u64 {
        self.level
    }

    pub fn character(&self) -> &Character {
        &self.character
    }

    pub fn source(&self) -> &CoeffSource {
        &self.source
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    /// Exact integer arithmetic applies.
    pub fn is_exact(&self) -> bool {
        !matches!(self.source, CoeffSource::Explicit(ExplicitTable::Complex(_)))
            && self.character.is_integer_valued()
    }

    pub fn is_bad_prime(&self, p: u64) -> bool {
        self.level % p == 0
    }

    /// `lambda(p)` from the source, arithmetic normalization.
    pub fn lambda_p(&self, p: u64) -> Result<Coeff> {
        if !is_prime_u64(p) {
            return Err(Error::Domain(format!("{p} is not prime")));
        }
        let raw = match &self.source {
            CoeffSource::Tau(t) => Coeff::Exact(t.tau(p).map_err(|_| Error::MissingData { prime: p })?),
            CoeffSource::Elliptic { a4, a6 } => {
                let v = if self.is_bad_prime(p) {
                    arith::ec_point_count_trace(*a4, *a6, p)
                } else {
                    arith::ec_trace(*a4, *a6, p)?
                };
                Coeff::Exact(BigInt::from(v))
            }
            CoeffSource::Explicit(ExplicitTable::Integer(m)) => {
                Coeff::Exact(m.get(&p).cloned().ok_or(Error::MissingData { prime: p })?)
            }
            CoeffSource::Explicit(ExplicitTable::Complex(m)) => {
                Coeff::Approx(*m.get(&p).ok_or(Error::MissingData { prime: p })?)
            }
        };
        Ok(raw)
    }

    fn local(&self, p: u64) -> Result<Local> {
        let lp = self.lambda_p(p)?;
        let bad = self.is_bad_prime(p);
        let km1 = self.weight - 1;
        if self.is_exact() {
            let lp = lp.as_exact().cloned().expect("exact source");
            let c = if bad {
                BigInt::zero()
            } else {
                let chi = self.character.integer_value(p).expect("integer character");
                BigInt::from(chi) * BigInt::from(p).pow(km1)
            };
            Ok(Local::Exact { lp, c })
        } else {
            let c = if bad {
                Complex64::zero()
            } else {
                self.character.value(p) * (p as f64).powi(km1 as i32)
            };
            Ok(Local::Approx { lp: lp.to_complex(), c })
        }
    }

    /// `lambda(p^0), ..., lambda(p^nu_max)` in the arithmetic normalization.
    /// At bad primes `c = 0`, which turns the recursion into `lambda(p)^v`.
    pub fn prime_power_sequence(&self, p: u64, nu_max: u32) -> Result<Vec<Coeff>> {
        Ok(match self.local(p)? {
            Local::Exact { lp, c } => hecke_sequence(lp, c, nu_max).into_iter().map(Coeff::Exact).collect(),
            Local::Approx { lp, c } => hecke_sequence(lp, c, nu_max).into_iter().map(Coeff::Approx).collect(),
        })
    }

    /// `lambda(p^nu)` in the form's normalization.
    pub fn coeff_prime_power(&self, p: u64, nu: u32) -> Result<Coeff> {
        let v = self.prime_power_sequence(p, nu)?.pop().expect("nonempty");
        Ok(self.normalize(v, p, nu))
    }

    /// `lambda(n)` in the arithmetic normalization.
    pub fn arithmetic_coeff(&self, n: u64) -> Result<Coeff> {
        if n == 0 {
            return Err(Error::Domain("coefficients are indexed by n >= 1".into()));
        }
        let mut acc = if self.is_exact() {
            Coeff::Exact(BigInt::one())
        } else {
            Coeff::Approx(Complex64::new(1.0, 0.0))
        };
        for (p, e) in arith::factorize_u64(n) {
            let v = self.prime_power_sequence(p, e)?.pop().expect("nonempty");
            acc = mul(acc, v);
        }
        Ok(acc)
    }

    /// `lambda(n)` in the form's normalization.
    pub fn coeff(&self, n: u64) -> Result<Coeff> {
        let v = self.arithmetic_coeff(n)?;
        Ok(self.normalize(v, n, 1))
    }

    /// `lambda(1..=x)` in the arithmetic normalization; index 0 holds zero.
    pub fn coefficients_up_to(&self, x: u64) -> Result<Vec<Coeff>> {
        let len = x as usize + 1;
        let spf = smallest_prime_factors(x as usize);
        let exact = self.is_exact();
        let zero = if exact { Coeff::Exact(BigInt::zero()) } else { Coeff::Approx(Complex64::zero()) };
        let one = if exact { Coeff::Exact(BigInt::one()) } else { Coeff::Approx(Complex64::new(1.0, 0.0)) };
        let mut out = vec![zero; len];
        if len > 1 {
            out[1] = one;
        }
        let mut powers: HashMap<u64, Vec<Coeff>> = HashMap::new();
        for n in 2..len {
            let p = spf[n] as u64;
            let mut m = n as u64;
            let mut e = 0u32;
            while m % p == 0 {
                m /= p;
                e += 1;
            }
            if !powers.contains_key(&p) {
                let mut top = 1u32;
                let mut q = p;
                while q <= x / p {
                    q *= p;
                    top += 1;
                }
                powers.insert(p, self.prime_power_sequence(p, top)?);
            }
            let pe = powers[&p][e as usize].clone();
            out[n] = mul(pe, out[m as usize].clone());
        }
        Ok(out)
    }

    fn normalize(&self, v: Coeff, base: u64, exp: u32) -> Coeff {
        match self.normalization {
            Normalization::Arithmetic => v,
            Normalization::Unit => {
                let scale = (base as f64).powf(exp as f64 * (self.weight as f64 - 1.0) / 2.0);
                Coeff::Approx(v.to_complex() / scale)
            }
        }
    }

    pub fn vanishing_scan(&self, p: u64, nu_max: u32) -> Result<VanishingReport> {
        self.vanishing_scan_with_tolerance(p, nu_max, DEFAULT_ZERO_TOLERANCE)
    }

    /// Zeros of `lambda(p^v)` for `1 <= v <= nu_max`. Complex sources are
    /// scanned in the unit normalization, where the recursion has bounded
    /// coefficients and `tol` is meaningful.
    pub fn vanishing_scan_with_tolerance(&self, p: u64, nu_max: u32, tol: f64) -> Result<VanishingReport> {
        if nu_max < 1 {
            return Err(Error::Precondition("nu_max must be >= 1".into()));
        }
        let bad = self.is_bad_prime(p);
        let (zeros, approximate): (Vec<bool>, bool) = match self.local(p)? {
            Local::Exact { lp, c } => (hecke_sequence(lp, c, nu_max).iter().map(Zero::is_zero).collect(), false),
            Local::Approx { lp, c } => {
                let scale = (p as f64).powf((self.weight as f64 - 1.0) / 2.0);
                let c_unit = if bad { Complex64::zero() } else { c / (scale * scale) };
                let seq = hecke_sequence(lp / scale, c_unit, nu_max);
                (seq.iter().map(|z| z.norm() < tol).collect(), true)
            }
        };
        let vanishing_orders: Vec<u32> = (1..=nu_max).filter(|&v| zeros[v as usize]).collect();
        // for good p, lambda(p^v) = 0 iff (alpha/beta)^{v+1} = 1 with alpha != beta,
        // so the first zero pins down the order of the ratio
        let root_ratio_order = if bad { None } else { vanishing_orders.first().map(|v| v + 1) };
        Ok(VanishingReport {
            prime: p,
            all_nonzero: vanishing_orders.is_empty(),
            vanishing_orders,
            root_ratio_order,
            approximate,
            nu_max,
        })
    }

    /// Good primes `p <= p_max` with `lambda(p) != 0` but `lambda(p^v) = 0`
    /// for some `2 <= v <= nu_max`. Empty for integer forms of trivial
    /// character and even weight.
    pub fn integer_form_criterion(&self, p_max: u64, nu_max: u32) -> Result<Vec<u64>> {
        if !self.is_exact() || !self.character.is_trivial() || self.weight % 2 != 0 {
            return Err(Error::Precondition(
                "needs exact integer coefficients, trivial character and even weight".into(),
            ));
        }
        let mut out = Vec::new();
        if p_max < 2 {
            return Ok(out);
        }
        for p in arith::primes_in(2, p_max)? {
            if self.is_bad_prime(p) {
                continue;
            }
            let Local::Exact { lp, c } = self.local(p)? else {
                return Err(Error::Internal("exact form produced float data".into()));
            };
            if lp.is_zero() {
                continue;
            }
            let seq = hecke_sequence(lp, c, nu_max.max(1));
            if seq.iter().skip(2).any(Zero::is_zero) {
                out.push(p);
            }
        }
        Ok(out)
    }

    /// Coefficient of `X^nu` in `prod_{0<=j<=m} (1 - alpha^j beta^{m-j} X)^{-1}`.
    pub fn symmetric_power_coeff(&self, m: u32, p: u64, nu: u32) -> Result<Coeff> {
        if m < 1 {
            return Err(Error::Precondition("symmetric power m must be >= 1".into()));
        }
        if self.is_bad_prime(p) {
            return Err(Error::Precondition(format!("p = {p} divides the level")));
        }
        Ok(match self.local(p)? {
            Local::Exact { lp, c } => Coeff::Exact(sym_power(lp, c, m, nu)),
            Local::Approx { lp, c } => Coeff::Approx(sym_power(lp, c, m, nu)),
        })
    }

    /// `|lambda(p)|^4 = 1 + 2 lambda(p^2) + lambda(p^2)^2` in the unit
    /// normalization, checked as its arithmetic-normalization equivalent.
    pub fn fourth_moment_identity(&self, p: u64) -> Result<bool> {
        if !self.character.is_trivial() {
            return Err(Error::Precondition("identity needs the trivial character".into()));
        }
        if self.is_bad_prime(p) {
            return Err(Error::Precondition(format!("p = {p} divides the level")));
        }
        let pk = BigInt::from(p).pow(self.weight - 1);
        Ok(match self.local(p)? {
            Local::Exact { lp, c } => {
                let l2 = &lp * &lp - c;
                let lhs = lp.clone() * &lp * &lp * &lp;
                let rhs = &pk * &pk + BigInt::from(2) * &l2 * &pk + &l2 * &l2;
                lhs == rhs
            }
            Local::Approx { lp, c } => {
                let scale = (p as f64).powf((self.weight as f64 - 1.0) / 2.0);
                let l1 = lp / scale;
                let l2 = (lp * lp - c) / (scale * scale);
                let lhs = l1.norm().powi(4);
                let rhs = Complex64::new(1.0, 0.0) + l2 * 2.0 + l2 * l2;
                (Complex64::new(lhs, 0.0) - rhs).norm() <= 1e-9 * lhs.max(1.0)
            }
        })
    }

    /// `sum |lambda(n)|^r` over `n <= x` with `gcd(n, coprime_to) = 1`,
    /// optionally restricted to squarefree `n`.
    pub fn moment_sum(&self, x: u64, r: u32, squarefree_only: bool, coprime_to: u64) -> Result<MomentSum> {
        if !(2..=4).contains(&r) {
            return Err(Error::Precondition(format!("moment order {r} not in 2..=4")));
        }
        if x < 1 || coprime_to < 1 {
            return Err(Error::Precondition("x and coprime_to must be >= 1".into()));
        }
        let coeffs = self.coefficients_up_to(x)?;
        let selected: Vec<u64> = (1..=x)
            .filter(|&n| n.gcd(&coprime_to) == 1)
            .filter(|&n| !squarefree_only || arith::is_squarefree(n))
            .collect();
        let half = (self.weight as f64 - 1.0) / 2.0;
        let exact = match (self.is_exact(), self.normalization) {
            (true, Normalization::Arithmetic) => {
                let mut acc = BigInt::zero();
                for &n in &selected {
                    acc += coeffs[n as usize].as_exact().expect("exact").abs().pow(r);
                }
                Some(BigRational::from_integer(acc))
            }
            (true, Normalization::Unit) if r % 2 == 0 && x <= EXACT_MOMENT_LIMIT => {
                let e = r * (self.weight - 1) / 2;
                // common denominator: prod over p <= x of p^{e * floor(log_p x)}
                let mut den = BigInt::one();
                if x >= 2 {
                    for p in arith::primes_in(2, x)? {
                        let mut q = p;
                        while q <= x / p {
                            q *= p;
                        }
                        den *= BigInt::from(q).pow(e);
                    }
                }
                let mut num = BigInt::zero();
                for &n in &selected {
                    let v = coeffs[n as usize].as_exact().expect("exact").pow(r);
                    if !v.is_zero() {
                        num += v * (&den / BigInt::from(n).pow(e));
                    }
                }
                Some(BigRational::new(num, den))
            }
            _ => None,
        };
        let value = match &exact {
            Some(q) => crate::rational::to_f64(q),
            None => {
                let mut s = 0.0f64;
                let mut comp = 0.0f64;
                for &n in &selected {
                    let mut a = coeffs[n as usize].to_complex().norm();
                    if self.normalization == Normalization::Unit {
                        a /= (n as f64).powf(half);
                    }
                    // Kahan summation
                    let y = a.powi(r as i32) - comp;
                    let t = s + y;
                    comp = (t - s) - y;
                    s = t;
                }
                s
            }
        };
        let xf = x as f64;
        let ratio = match self.normalization {
            Normalization::Unit => value / xf,
            Normalization::Arithmetic => (value.ln() - (1.0 + r as f64 * half) * xf.ln()).exp(),
        };
        Ok(MomentSum { x, r, terms: selected.len() as u64, exact, value, ratio })
    }
}

fn mul(a: Coeff, b: Coeff) -> Coeff {
    match (a, b) {
        (Coeff::Exact(a), Coeff::Exact(b)) => Coeff::Exact(a * b),
        (a, b) => Coeff::Approx(a.to_complex() * b.to_complex()),
    }
}

fn smallest_prime_factors(limit: usize) -> Vec<u32> {
    let mut spf = vec![0u32; limit + 1];
    for i in 2..=limit {
        if spf[i] == 0 {
            let mut j = i;
            while j <= limit {
                if spf[j] == 0 {
                    spf[j] = i as u32;
                }
                j += i;
            }
        }
    }
    spf
}

/// `1, lambda(p), ..., lambda(p^nu_max)` from
/// `a_{v+1} = lp a_v - c a_{v-1}`.
pub(crate) fn hecke_sequence<T: Clone + Num>(lp: T, c: T, nu_max: u32) -> Vec<T> {
    let mut seq = Vec::with_capacity(nu_max as usize + 1);
    seq.push(T::one());
    if nu_max >= 1 {
        seq.push(lp.clone());
    }
    for v in 2..=nu_max as usize {
        let next = lp.clone() * seq[v - 1].clone() - c.clone() * seq[v - 2].clone();
        seq.push(next);
    }
    seq
}

/// Scalars usable in the symmetric-function identities.
pub(crate) trait Scalar: Clone + Num {
    fn from_u64(v: u64) -> Self;
    /// Division by a positive integer that is known to be exact on integers.
    fn div_int(self, d: u64) -> Self;
}

impl Scalar for BigInt {
    fn from_u64(v: u64) -> Self {
        BigInt::from(v)
    }
    fn div_int(self, d: u64) -> Self {
        let d = BigInt::from(d);
        debug_assert!((&self % &d).is_zero());
        self / d
    }
}

impl Scalar for Complex64 {
    fn from_u64(v: u64) -> Self {
        Complex64::new(v as f64, 0.0)
    }
    fn div_int(self, d: u64) -> Self {
        self / d as f64
    }
}

/// Symmetric power coefficients from `s = alpha + beta` and `q = alpha beta`.
///
/// Power sums of the roots `alpha^j beta^{m-j}` are complete homogeneous
/// polynomials `h_m(alpha^r, beta^r)`, each a Lucas-type sequence in
/// `t_r = alpha^r + beta^r` and `q^r`. Newton's identities turn them into
/// elementary symmetric functions, which drive the order-`(m+1)` recursion.
pub(crate) fn sym_power<T: Scalar>(s: T, q: T, m: u32, nu: u32) -> T {
    let m = m as usize;
    let deg = m + 1;
    let mut t = vec![T::from_u64(2), s.clone()];
    let mut qpow = vec![T::one(), q.clone()];
    for r in 2..=deg {
        t.push(s.clone() * t[r - 1].clone() - q.clone() * t[r - 2].clone());
        qpow.push(qpow[r - 1].clone() * q.clone());
    }
    // power sums P_r, r = 1..=deg
    let mut psum = vec![T::zero()];
    for r in 1..=deg {
        let (mut h0, mut h1) = (T::one(), t[r].clone());
        for _ in 1..m {
            let h2 = t[r].clone() * h1.clone() - qpow[r].clone() * h0;
            h0 = h1;
            h1 = h2;
        }
        psum.push(if m == 0 { h0 } else { h1 });
    }
    let mut e = vec![T::one()];
    for i in 1..=deg {
        let mut acc = T::zero();
        for r in 1..=i {
            let term = e[i - r].clone() * psum[r].clone();
            acc = if r % 2 == 1 { acc + term } else { acc - term };
        }
        e.push(acc.div_int(i as u64));
    }
    let mut c = vec![T::one()];
    for v in 1..=nu as usize {
        let mut acc = T::zero();
        for i in 1..=v.min(deg) {
            let term = e[i].clone() * c[v - i].clone();
            acc = if i % 2 == 1 { acc + term } else { acc - term };
        }
        c.push(acc);
    }
    c.pop().expect("nonempty")
}

/// Exact `sum_{n <= x} d(n)^3`.
pub fn divisor_cube_sum(x: u64) -> Result<BigInt> {
    if x < 1 {
        return Err(Error::Precondition("x must be >= 1".into()));
    }
    if x > DIVISOR_CUBE_LIMIT {
        return Err(Error::Resource(format!("divisor table up to {x} exceeds {DIVISOR_CUBE_LIMIT}")));
    }
    let d = divisor_count_table(x as usize);
    let total: u128 = d[1..].iter().map(|&v| (v as u128).pow(3)).sum();
    Ok(BigInt::from(total))
}

/// First `len` coefficients of the local factor `(1 - X)^{-4} (1 + 4X + X^2)`
/// of `sum d(n)^3 n^{-s}`; they equal `d(p^j)^3 = (j+1)^3`.
pub fn divisor_cube_series(len: usize) -> Vec<BigInt> {
    let binom = |j: usize| BigInt::from((j + 1) * (j + 2) * (j + 3) / 6);
    (0..len)
        .map(|j| {
            let mut v = binom(j);
            if j >= 1 {
                v += BigInt::from(4) * binom(j - 1);
            }
            if j >= 2 {
                v += binom(j - 2);
            }
            v
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn delta() -> HeckeForm {
        static T: OnceLock<Arc<TauTable>> = OnceLock::new();
        HeckeForm::delta(T.get_or_init(|| Arc::new(TauTable::compute(2_000).unwrap())).clone())
    }

    fn exact(v: Coeff) -> BigInt {
        v.as_exact().cloned().unwrap()
    }

    #[test]
    fn prime_power_examples() {
        let d = delta();
        assert_eq!(exact(d.coeff_prime_power(2, 0).unwrap()), BigInt::one());
        assert_eq!(exact(d.coeff_prime_power(2, 2).unwrap()), BigInt::from(-1472));
        let tau12 = exact(d.coeff(12).unwrap());
        assert_eq!(tau12, BigInt::from(-370944));
        assert_eq!(tau12, exact(d.coeff_prime_power(2, 2).unwrap()) * BigInt::from(252));
        assert_eq!(exact(d.coeff(1).unwrap()), BigInt::one());
        assert!(matches!(d.coeff(2003), Err(Error::MissingData { prime: 2003 })));
    }

    #[test]
    fn equal_roots_give_linear_growth() {
        // lambda(p)^2 = 4 p^{k-1} with k = 3: lambda(p) = 2p, alpha = beta = p
        let table = ExplicitTable::Integer([(5u64, BigInt::from(10))].into_iter().collect());
        let f = HeckeForm::explicit(3, 1, Character::trivial(1), table).unwrap();
        for nu in 0..12u32 {
            let expect = BigInt::from(nu + 1) * BigInt::from(5).pow(nu);
            assert_eq!(exact(f.coeff_prime_power(5, nu).unwrap()), expect);
        }
        // complex version with chi(p) = -1: tau^2 = -1, lambda(p) = 2i sqrt(p) at k = 2
        let chi = Character::from_values(
            4,
            vec![0.0, 1.0, 0.0, -1.0].into_iter().map(|v| Complex64::new(v, 0.0)).collect(),
        )
        .unwrap();
        let p = 7u64;
        let lp = Complex64::new(0.0, 2.0 * (p as f64).sqrt());
        let f = HeckeForm::explicit(2, 4, chi, ExplicitTable::Complex([(p, lp)].into_iter().collect())).unwrap();
        for nu in 0..10u32 {
            let expect = Complex64::new(0.0, 1.0).powu(nu) * (nu as f64 + 1.0) * (p as f64).powf(nu as f64 / 2.0);
            let got = f.coeff_prime_power(p, nu).unwrap().to_complex();
            assert!((got - expect).norm() <= 1e-9 * expect.norm().max(1.0), "nu = {nu}");
        }
    }

    #[test]
    fn elliptic_coefficients() {
        let f = HeckeForm::elliptic(0, 1).unwrap();
        assert_eq!(f.level(), 6);
        assert_eq!(exact(f.coeff(5).unwrap()), BigInt::zero());
        assert_eq!(exact(f.coeff(7).unwrap()), BigInt::from(arith::ec_trace(0, 1, 7).unwrap()));
        assert!(HeckeForm::elliptic(0, 0).is_err());
        // bad primes are totally multiplicative
        let l2 = exact(f.lambda_p(2).unwrap());
        assert_eq!(exact(f.coeff(8).unwrap()), l2.pow(3u32));
    }

    #[test]
    fn vanishing_examples() {
        let d = delta();
        let r = d.vanishing_scan(2, 50).unwrap();
        assert!(r.all_nonzero && !r.approximate && r.root_ratio_order.is_none());

        let p = 11u64;
        let lp = Complex64::new((2.0 * p as f64).sqrt(), 0.0);
        let f = HeckeForm::explicit(2, 1, Character::trivial(1), ExplicitTable::Complex([(p, lp)].into_iter().collect()))
            .unwrap();
        let r = f.vanishing_scan(p, 12).unwrap();
        assert_eq!(r.vanishing_orders, vec![3, 7, 11]);
        assert_eq!(r.root_ratio_order, Some(4));
        assert!(r.approximate);
        assert!((f.coeff_prime_power(p, 2).unwrap().to_complex().re - p as f64).abs() < 1e-9);

        let z = ExplicitTable::Integer([(3u64, BigInt::zero())].into_iter().collect());
        let f = HeckeForm::explicit(2, 1, Character::trivial(1), z).unwrap();
        let r = f.vanishing_scan(3, 6).unwrap();
        assert_eq!(r.vanishing_orders, vec![1, 3, 5]);
        assert_eq!(r.root_ratio_order, Some(2));
        assert!(f.vanishing_scan(3, 0).is_err());
    }

    #[test]
    fn integer_criterion() {
        assert!(delta().integer_form_criterion(1000, 50).unwrap().is_empty());
        let e = HeckeForm::elliptic(0, 1).unwrap();
        assert!(e.integer_form_criterion(200, 30).unwrap().is_empty());
        let z = ExplicitTable::Integer([(2u64, BigInt::zero()), (3, BigInt::from(1))].into_iter().collect());
        let f = HeckeForm::explicit(2, 1, Character::trivial(1), z).unwrap();
        assert!(f.integer_form_criterion(3, 10).unwrap().is_empty());
        let c = ExplicitTable::Complex(BTreeMap::new());
        let f = HeckeForm::explicit(2, 1, Character::trivial(1), c).unwrap();
        assert!(matches!(f.integer_form_criterion(3, 10), Err(Error::Precondition(_))));
    }

    /// Coefficient of X^nu in prod_j (1 - r_j X)^{-1} by series multiplication.
    fn sym_oracle(lp: f64, c: f64, m: u32, nu: usize) -> Complex64 {
        let disc = Complex64::new(lp * lp - 4.0 * c, 0.0).sqrt();
        let a = (Complex64::new(lp, 0.0) + disc) / 2.0;
        let b = (Complex64::new(lp, 0.0) - disc) / 2.0;
        let mut series = vec![Complex64::zero(); nu + 1];
        series[0] = Complex64::new(1.0, 0.0);
        for j in 0..=m {
            let root = a.powu(j) * b.powu(m - j);
            let mut next = vec![Complex64::zero(); nu + 1];
            for (i, s) in series.iter().enumerate() {
                let mut g = Complex64::new(1.0, 0.0);
                for k in i..=nu {
                    next[k] += s * g;
                    g *= root;
                }
            }
            series = next;
        }
        series[nu]
    }

    #[test]
    fn symmetric_powers() {
        let d = delta();
        for p in [2u64, 3, 5, 7] {
            for nu in 0..6 {
                assert_eq!(d.symmetric_power_coeff(1, p, nu).unwrap(), d.coeff_prime_power(p, nu).unwrap());
            }
            let tp = exact(d.lambda_p(p).unwrap());
            let sym2 = exact(d.symmetric_power_coeff(2, p, 1).unwrap());
            assert_eq!(sym2, &tp * &tp - BigInt::from(p).pow(11u32));
            for m in 1..6 {
                assert_eq!(d.symmetric_power_coeff(m, p, 1).unwrap(), d.coeff_prime_power(p, m).unwrap());
            }
        }
        let got = exact(d.symmetric_power_coeff(3, 2, 2).unwrap()).to_f64().unwrap();
        let want = sym_oracle(-24.0, 2048.0, 3, 2);
        assert!((got - want.re).abs() <= 1e-6 * want.norm());
        assert!(want.im.abs() <= 1e-6 * want.norm());
        let e = HeckeForm::elliptic(0, 1).unwrap();
        assert!(e.symmetric_power_coeff(2, 3, 1).is_err());
    }

    #[test]
    fn moments() {
        let d = delta();
        let one = d.moment_sum(1, 2, false, 1).unwrap();
        assert_eq!(one.exact, Some(BigRational::one()));

        let du = delta().with_normalization(Normalization::Unit);
        let m = du.moment_sum(10, 2, false, 1).unwrap();
        let mut oracle = BigRational::zero();
        for n in 1..=10u64 {
            let t = exact(d.coeff(n).unwrap());
            oracle += BigRational::new(&t * &t, BigInt::from(n).pow(11u32));
        }
        assert_eq!(m.exact, Some(oracle));
        assert!((m.ratio - m.value / 10.0).abs() < 1e-15);

        let sq = du.moment_sum(10, 4, true, 2).unwrap();
        assert_eq!(sq.terms, 4); // 1, 3, 5, 7
        let three = du.moment_sum(10, 3, false, 1).unwrap();
        assert!(three.exact.is_none() && three.value > 0.0);
        assert!(d.moment_sum(10, 5, false, 1).is_err());
    }

    #[test]
    fn fourth_moment_identity_for_delta() {
        let d = delta();
        for p in arith::primes_in(2, 1000).unwrap() {
            assert!(d.fourth_moment_identity(p).unwrap(), "p = {p}");
        }
    }

    #[test]
    fn divisor_cubes() {
        assert_eq!(divisor_cube_sum(1).unwrap(), BigInt::one());
        assert_eq!(divisor_cube_sum(4).unwrap(), BigInt::from(44));
        let s = divisor_cube_series(12);
        assert_eq!(s[1], BigInt::from(8));
        for (j, v) in s.iter().enumerate() {
            assert_eq!(*v, BigInt::from((j + 1).pow(3)));
        }
    }

    #[test]
    fn deligne_bound() {
        let d = delta();
        for p in arith::primes_in(2, 2000).unwrap() {
            let t = exact(d.lambda_p(p).unwrap());
            // tau(p)^2 <= 4 p^11
            assert!(&t * &t <= BigInt::from(4) * BigInt::from(p).pow(11u32), "p = {p}");
        }
    }

    #[test]
    fn sieve_matches_factorization() {
        let d = delta();
        let all = d.coefficients_up_to(500).unwrap();
        for n in 1..=500u64 {
            assert_eq!(all[n as usize], d.arithmetic_coeff(n).unwrap());
        }
    }

    proptest! {
        #[test]
        fn multiplicative(m in 1u64..500, n in 1u64..500) {
            prop_assume!(m.gcd(&n) == 1);
            let d = delta();
            let lhs = exact(d.coeff(m * n).unwrap());
            prop_assert_eq!(lhs, exact(d.coeff(m).unwrap()) * exact(d.coeff(n).unwrap()));
        }

        #[test]
        fn periodic_vanishing(p in prop::sample::select(vec![3u64, 5, 7, 11, 13]), k in 2u32..6) {
            // lambda(p) = 2 sqrt(p) cos(pi / k) at weight 2 gives alpha/beta = e(1/k)
            let lp = Complex64::new(2.0 * (p as f64).sqrt() * (std::f64::consts::PI / k as f64).cos(), 0.0);
            let f = HeckeForm::explicit(2, 1, Character::trivial(1),
                ExplicitTable::Complex([(p, lp)].into_iter().collect())).unwrap();
            let nu_max = 40;
            let r = f.vanishing_scan(p, nu_max).unwrap();
            prop_assert_eq!(r.root_ratio_order, Some(k));
            for j in 1.. {
                let v = j * k - 1;
                if v > nu_max { break; }
                prop_assert!(r.vanishing_orders.contains(&v));
            }
        }
    }
}
