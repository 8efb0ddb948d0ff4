//! Weighted sieve machinery behind the short-interval lower bounds.
//!
//! Three weight systems are supported: the two-factor weight counting
//! `mp | n` with `m` a quasi-prime and `p` a prime from a window, the
//! one-factor weight counting quasi-primes `m | n`, and the prime-only weight
//! counting primes `p | n` from a window. All counts are exact integers or
//! exact rationals; asymptotic statements are reported, never asserted.

use std::collections::{BTreeMap, HashMap, HashSet};

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::arith::{factorize_u64, primes_in};
use crate::bfree::BSet;
use crate::error::{Error, Result};
use crate::exponents::{
    admissibility, theta_prop7_68, theta_prop7_69, theta_prop8, theta_prop9, AdmissibilityInput, Condition,
    ExponentPair, ThetaFormula,
};
use crate::rational::{floor_pow, format_ratio, int, rat, serde_ratio, to_f64, Rational};

/// Largest truncation index for the inclusion-exclusion over `2^ell` subsets.
pub const MAX_ELL: usize = 20;

/// Widest quasi-prime range enumerated before giving up.
pub const MAX_WINDOW: u64 = 50_000_000;

/// Default grid step for [`buchstab_w`].
pub const BUCHSTAB_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    TwoFactor,
    OneFactor,
    PrimeOnly,
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-factor" => Ok(Variant::TwoFactor),
            "one-factor" => Ok(Variant::OneFactor),
            "prime-only" => Ok(Variant::PrimeOnly),
            _ => Err(Error::Parse(format!("unknown weight variant {s:?}"))),
        }
    }
}

/// Exact parameters of a weight system, independent of `x`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightParams {
    pub variant: Variant,
    #[serde(with = "serde_ratio")]
    pub rho: Rational,
    #[serde(with = "serde_ratio")]
    pub epsilon: Rational,
    #[serde(with = "serde_ratio")]
    pub theta: Rational,
    /// formula that produced `theta - epsilon` (or `theta - 2 epsilon`)
    pub theta_source: ThetaFormula,
    pub pair: Option<ExponentPair>,
    #[serde(with = "serde_ratio")]
    pub eta: Rational,
    #[serde(with = "serde_ratio")]
    pub s: Rational,
    /// quasi-prime exponent (`delta_1` or `delta`); unused for prime-only
    #[serde(with = "serde_ratio")]
    pub delta1: Rational,
    /// prime-window exponent (`delta_2`, or `theta - 2 epsilon` for prime-only)
    #[serde(with = "serde_ratio")]
    pub delta2: Rational,
}

/// Picks `theta` and the window exponents for `variant`, then validates the
/// parameter system. `epsilon' = epsilon` throughout.
///
/// Two-factor: `theta = min(theta_prop7_68, theta_prop7_69 at (4/18, 11/18)) + eps`,
/// `delta_1 = theta/rho - 2 eps`, `delta_2 = 1 - 2 theta/rho + 3 eps`.
/// One-factor: `theta = theta_8(rho) + eps` with `delta = (19 theta - 3)/7 - eps`
/// below `rho = 9/17` and `delta = 4 theta/3 - eps` from there on.
/// Prime-only: `theta = rho/(1 + rho) + 2 eps`.
/// All variants take `eta = eps^2/25` and `s = 5/eps`.
pub fn choose_parameters(rho: &Rational, epsilon: &Rational, variant: Variant) -> Result<WeightParams> {
    if !rho.is_positive() || *rho > int(1) {
        return Err(Error::Domain(format!("rho = {} outside (0, 1]", format_ratio(rho))));
    }
    if !epsilon.is_positive() || *epsilon >= rat(1, 2) {
        return Err(Error::Domain(format!("epsilon = {} outside (0, 1/2)", format_ratio(epsilon))));
    }
    let e = epsilon;
    let eta = e * e / int(25);
    let s = int(5) / e;
    let p = match variant {
        Variant::TwoFactor => {
            let lit = ExponentPair::literature();
            let t68 = theta_prop7_68(rho)?;
            let t69 = theta_prop7_69(rho, &lit)?;
            let (base, src, pair) = if t69 < t68 {
                (t69, ThetaFormula::Prop7_69, Some(lit))
            } else {
                (t68, ThetaFormula::Prop7_68, None)
            };
            let theta = base + e;
            let tr = &theta / rho;
            WeightParams {
                variant,
                rho: rho.clone(),
                epsilon: e.clone(),
                delta1: &tr - e * int(2),
                delta2: int(1) - &tr * int(2) + e * int(3),
                theta,
                theta_source: src,
                pair,
                eta,
                s,
            }
        }
        Variant::OneFactor => {
            let theta = theta_prop8(rho)? + e;
            let delta = if *rho < rat(9, 17) {
                (&theta * int(19) - int(3)) / int(7) - e
            } else {
                &theta * int(4) / int(3) - e
            };
            WeightParams {
                variant,
                rho: rho.clone(),
                epsilon: e.clone(),
                theta,
                theta_source: ThetaFormula::Prop8_610,
                pair: None,
                eta,
                s,
                delta1: delta,
                delta2: int(0),
            }
        }
        Variant::PrimeOnly => {
            let theta = theta_prop9(rho)? + e * int(2);
            WeightParams {
                variant,
                rho: rho.clone(),
                epsilon: e.clone(),
                delta2: &theta - e * int(2),
                theta,
                theta_source: ThetaFormula::Thm2,
                pair: None,
                eta,
                s,
                delta1: int(0),
            }
        }
    };
    p.validate()?;
    Ok(p)
}

impl WeightParams {
    /// Checks the variant's parameter system; the error names the first
    /// failing inequality.
    pub fn validate(&self) -> Result<()> {
        let e = &self.epsilon;
        let fail = |what: &str, clause: String| {
            Err(Error::Constraint(format!("{what}: {clause} fails")))
        };
        // s >= 3 and s eta < eps/2 < 1/4
        if self.s < int(3) {
            return fail("sieve level", "s >= 3".into());
        }
        if &self.s * &self.eta >= e / int(2) {
            return fail("sieve level", "s eta < eps/2".into());
        }
        if e / int(2) >= rat(1, 4) {
            return fail("sieve level", "eps/2 < 1/4".into());
        }
        if !self.eta.is_positive() {
            return fail("sieve level", "eta > 0".into());
        }
        let base = AdmissibilityInput {
            theta: Some(self.theta.clone()),
            rho: Some(self.rho.clone()),
            epsilon: Some(e.clone()),
            epsilon_prime: Some(e.clone()),
            ..Default::default()
        };
        let check = |cond: Condition, input: &AdmissibilityInput, what: &str| -> Result<()> {
            let r = admissibility(cond, input)?;
            match r.first_failure {
                None => Ok(()),
                Some(c) => Err(Error::Constraint(format!("{what}: {c} fails"))),
            }
        };
        match self.variant {
            Variant::TwoFactor => {
                let input = AdmissibilityInput {
                    delta1: Some(self.delta1.clone()),
                    delta2: Some(self.delta2.clone()),
                    pair: self.pair.clone(),
                    ..base
                };
                check(Condition::C71, &input, "two-factor parameters")?;
                let cond = if self.pair.is_some() { Condition::C719 } else { Condition::C718 };
                check(cond, &input, "type I remainder range")?;
                if self.eta >= self.delta1 {
                    return fail("quasi-primes", "eta < delta1".into());
                }
            }
            Variant::OneFactor => {
                let input = AdmissibilityInput { delta: Some(self.delta1.clone()), ..base };
                check(Condition::C81, &input, "one-factor parameters")?;
                check(Condition::C811, &input, "linear remainder range")?;
                if self.eta >= self.delta1 {
                    return fail("quasi-primes", "eta < delta".into());
                }
            }
            Variant::PrimeOnly => {
                let lo = &self.theta - e * int(2);
                if !lo.is_positive() {
                    return fail("prime-only parameters", "theta - 2 eps > 0".into());
                }
                if &lo + &self.theta / &self.rho <= int(1) {
                    return fail("prime-only parameters", "theta - 2 eps + theta/rho > 1".into());
                }
            }
        }
        Ok(())
    }
}

/// Smallest integer `c >= x^e`.
fn ceil_pow(x: u64, e: &Rational) -> Result<u64> {
    let f = floor_pow(x, e)?;
    let a = e.numer().to_u32().ok_or_else(|| Error::Resource("exponent too large".into()))?;
    let b = e.denom().to_u32().ok_or_else(|| Error::Resource("exponent too large".into()))?;
    let exact = BigUint::from(f).pow(b) == BigUint::from(x).pow(a);
    Ok(if exact { f } else { f + 1 })
}

/// `m` in `(x^{delta1}, x^{delta1 + eps}]` with every prime factor `>= x^eta`.
pub fn quasi_primes(x: u64, delta1: &Rational, epsilon: &Rational, eta: &Rational) -> Result<Vec<u64>> {
    if !eta.is_positive() || eta >= delta1 {
        return Err(Error::Precondition("quasi_primes needs 0 < eta < delta1".into()));
    }
    if x < 2 {
        return Err(Error::Precondition("quasi_primes needs x >= 2".into()));
    }
    let lo = floor_pow(x, delta1)?;
    let hi = floor_pow(x, &(delta1 + epsilon))?;
    if hi.saturating_sub(lo) > MAX_WINDOW {
        return Err(Error::Resource(format!("quasi-prime window ({lo}, {hi}] exceeds {MAX_WINDOW} integers")));
    }
    let zc = ceil_pow(x, eta)?;
    Ok((lo + 1..=hi)
        .into_par_iter()
        .filter(|&m| m > 1 && factorize_u64(m).iter().all(|&(p, _)| p >= zc))
        .collect())
}

/// Primes in `(x^{lo}, x^{lo + width}]`.
pub fn prime_window(x: u64, lo: &Rational, width: &Rational) -> Result<Vec<u64>> {
    let a = floor_pow(x, lo)?;
    let b = floor_pow(x, &(lo + width))?;
    if b < 2 || b <= a {
        return Ok(Vec::new());
    }
    primes_in((a + 1).max(2), b)
}

/// Exact `d`-remainder `(floor((x+y)/d) - floor(x/d)) - y/d`.
pub fn remainder_r(d: u64, x: u64, y: &Rational) -> Result<Rational> {
    if d == 0 {
        return Err(Error::Precondition("remainder needs d >= 1".into()));
    }
    if y.is_negative() {
        return Err(Error::Precondition("remainder needs y >= 0".into()));
    }
    let d_big = BigInt::from(d);
    let top = (Rational::from_integer(BigInt::from(x)) + y) / Rational::from_integer(d_big.clone());
    let count = top.floor().to_integer() - BigInt::from(x / d);
    Ok(Rational::from_integer(count) - y / Rational::from_integer(d_big))
}

/// Bonferroni-truncated Moebius weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FundamentalLemma {
    pub z: u64,
    pub q: u64,
    /// number of prime factors kept by the upper system (even)
    pub r_plus: u32,
    /// number of prime factors kept by the lower system (odd, or -1 for the
    /// zero system)
    pub r_minus: i32,
    /// nonzero `lambda^+_d`, all equal to `mu(d)`
    pub lambda_plus: BTreeMap<u64, i8>,
    pub lambda_minus: BTreeMap<u64, i8>,
    /// `sum lambda^+_q / q`, `sum lambda^-_q / q`, `prod_{p < z} (1 - 1/p)`
    pub sum_plus: f64,
    pub sum_minus: f64,
    pub mertens_product: f64,
    /// `s^{-s}` with `s = log Q / log z`, the scale the sums approach at
    pub s_scale: f64,
}

impl FundamentalLemma {
    /// `(lambda^+ * 1)(n)`
    pub fn upper(&self, n: u64) -> i64 {
        convolve_one(&self.lambda_plus, n)
    }

    /// `(lambda^- * 1)(n)`
    pub fn lower(&self, n: u64) -> i64 {
        convolve_one(&self.lambda_minus, n)
    }
}

fn convolve_one(w: &BTreeMap<u64, i8>, n: u64) -> i64 {
    w.iter().filter(|(&d, _)| n % d == 0).map(|(_, &v)| v as i64).sum()
}

/// Weights `lambda_d = mu(d)` on squarefree `d` built from primes `< z` with
/// at most `r` prime factors. Truncating the Moebius sum at an even `r`
/// bounds the sieve indicator from above, at an odd `r` from below, for every
/// `n`. The requested `r0` is lowered (keeping parity) until every admitted
/// `d` is `<= Q`, so the cut at `Q` never removes a term and the bounds stay
/// exact.
pub fn fundamental_lemma_weights(z: u64, q: u64, r0: u32) -> Result<FundamentalLemma> {
    if z < 2 {
        return Err(Error::Precondition("fundamental lemma needs z >= 2".into()));
    }
    if q < 1 {
        return Err(Error::Precondition("fundamental lemma needs Q >= 1".into()));
    }
    let primes = if z > 2 { primes_in(2, z - 1)? } else { Vec::new() };
    // d <= Q for every admitted d iff the product of the r largest primes is
    let fits = |r: i64| -> bool {
        if r <= 0 {
            return true;
        }
        let r = r as usize;
        if r > primes.len() {
            // all squarefree d are admitted; compare the full product
            return primes.iter().try_fold(1u64, |acc, &p| acc.checked_mul(p)).is_some_and(|v| v <= q);
        }
        primes[primes.len() - r..]
            .iter()
            .try_fold(1u64, |acc, &p| acc.checked_mul(p))
            .is_some_and(|v| v <= q)
    };
    let mut r_plus = if r0 % 2 == 0 { r0 as i64 } else { r0 as i64 - 1 };
    while r_plus > 0 && !fits(r_plus) {
        r_plus -= 2;
    }
    let mut r_minus = if r0 % 2 == 1 { r0 as i64 } else { r0 as i64 + 1 };
    while r_minus > 0 && !fits(r_minus) {
        r_minus -= 2;
    }
    let build = |r: i64| -> BTreeMap<u64, i8> {
        let mut out = BTreeMap::new();
        if r < 0 {
            return out;
        }
        fn rec(ps: &[u64], d: u64, k: i64, r: i64, q: u64, out: &mut BTreeMap<u64, i8>) {
            out.insert(d, if k % 2 == 0 { 1 } else { -1 });
            if k == r {
                return;
            }
            for (i, &p) in ps.iter().enumerate() {
                match d.checked_mul(p) {
                    Some(nd) if nd <= q => rec(&ps[i + 1..], nd, k + 1, r, q, out),
                    _ => break,
                }
            }
        }
        rec(&primes, 1, 0, r, q, &mut out);
        out
    };
    let lambda_plus = build(r_plus);
    let lambda_minus = build(r_minus);
    let recip = |w: &BTreeMap<u64, i8>| w.iter().map(|(&d, &v)| v as f64 / d as f64).sum::<f64>();
    let mertens_product = primes.iter().map(|&p| 1.0 - 1.0 / p as f64).product();
    let s = (q as f64).ln() / (z as f64).ln();
    Ok(FundamentalLemma {
        z,
        q,
        r_plus: r_plus as u32,
        r_minus: r_minus as i32,
        sum_plus: recip(&lambda_plus),
        sum_minus: recip(&lambda_minus),
        lambda_plus,
        lambda_minus,
        mertens_product,
        s_scale: if s > 0.0 { s.powf(-s) } else { f64::NAN },
    })
}

/// A weight system instantiated at a concrete `x`.
#[derive(Debug, Clone, Serialize)]
pub struct WeightSystem {
    pub x: u64,
    pub params: WeightParams,
    /// `max(2, floor(x^eta))`
    pub z: u64,
    /// `max(1, floor(x^{eta s}))`
    pub q: u64,
    pub ell: usize,
    /// quasi-primes (two-factor, one-factor); empty for prime-only
    pub quasi_primes: Vec<u64>,
    /// prime window (two-factor, prime-only); empty for one-factor
    pub prime_window: Vec<u64>,
    pub fundamental_lemma: FundamentalLemma,
    #[serde(skip)]
    quasi_set: HashSet<u64>,
    #[serde(skip)]
    prime_set: HashSet<u64>,
}

impl WeightSystem {
    pub fn build(params: WeightParams, x: u64, ell: usize, r0: u32) -> Result<Self> {
        if ell > MAX_ELL {
            return Err(Error::Precondition(format!("ell = {ell} exceeds {MAX_ELL}")));
        }
        if x < 2 {
            return Err(Error::Precondition("weight system needs x >= 2".into()));
        }
        let e = &params.epsilon;
        let (quasi_primes, prime_window) = match params.variant {
            Variant::TwoFactor => (
                quasi_primes(x, &params.delta1, e, &params.eta)?,
                prime_window(x, &params.delta2, e)?,
            ),
            Variant::OneFactor => (quasi_primes(x, &params.delta1, e, &params.eta)?, Vec::new()),
            Variant::PrimeOnly => (Vec::new(), prime_window(x, &params.delta2, e)?),
        };
        let z = floor_pow(x, &params.eta)?.max(2);
        let q = floor_pow(x, &(&params.eta * &params.s))?.max(1);
        let fundamental_lemma = fundamental_lemma_weights(z, q, 2)?;
        Ok(WeightSystem {
            quasi_set: quasi_primes.iter().copied().collect(),
            prime_set: prime_window.iter().copied().collect(),
            x,
            params,
            z,
            q,
            ell,
            quasi_primes,
            prime_window,
            fundamental_lemma,
        }
        .with_fundamental_lemma(r0)?)
    }

    fn with_fundamental_lemma(mut self, r0: u32) -> Result<Self> {
        self.fundamental_lemma = fundamental_lemma_weights(self.z, self.q, r0)?;
        Ok(self)
    }

    /// Weight system with explicit windows, for tests and experiments.
    pub fn from_windows(params: WeightParams, x: u64, ell: usize, quasi_primes: Vec<u64>, prime_window: Vec<u64>) -> Result<Self> {
        if ell > MAX_ELL {
            return Err(Error::Precondition(format!("ell = {ell} exceeds {MAX_ELL}")));
        }
        let fundamental_lemma = fundamental_lemma_weights(2, 1, 0)?;
        Ok(WeightSystem {
            quasi_set: quasi_primes.iter().copied().collect(),
            prime_set: prime_window.iter().copied().collect(),
            x,
            params,
            z: 2,
            q: 1,
            ell,
            quasi_primes,
            prime_window,
            fundamental_lemma,
        })
    }

    pub fn variant(&self) -> Variant {
        self.params.variant
    }

    /// The "moduli" `mp`, `m`, or `p` whose divisibility the weight counts.
    fn moduli(&self) -> Vec<u64> {
        match self.variant() {
            Variant::TwoFactor => {
                let mut v = Vec::with_capacity(self.quasi_primes.len() * self.prime_window.len());
                for &m in &self.quasi_primes {
                    for &p in &self.prime_window {
                        v.push(m * p);
                    }
                }
                v
            }
            Variant::OneFactor => self.quasi_primes.clone(),
            Variant::PrimeOnly => self.prime_window.clone(),
        }
    }
}

/// `c(n)`, `c'(n)` or `c''(n)` for the system's variant.
pub fn weight_c(n: u64, w: &WeightSystem) -> u64 {
    if n <= 1 {
        return 0;
    }
    let fac = factorize_u64(n);
    match w.variant() {
        Variant::PrimeOnly => fac.iter().filter(|(p, _)| w.prime_set.contains(p)).count() as u64,
        Variant::OneFactor => divisors_of(&fac).into_iter().filter(|d| w.quasi_set.contains(d)).count() as u64,
        Variant::TwoFactor => fac
            .iter()
            .filter(|(p, _)| w.prime_set.contains(p))
            .map(|&(p, _)| {
                let rest: Vec<(u64, u32)> = fac
                    .iter()
                    .filter_map(|&(q, e)| {
                        let e = if q == p { e - 1 } else { e };
                        (e > 0).then_some((q, e))
                    })
                    .collect();
                divisors_of(&rest).into_iter().filter(|d| w.quasi_set.contains(d)).count() as u64
            })
            .sum(),
    }
}

fn divisors_of(fac: &[(u64, u32)]) -> Vec<u64> {
    let mut out = vec![1u64];
    for &(p, e) in fac {
        let len = out.len();
        let mut pk = 1u64;
        for _ in 0..e {
            pk *= p;
            for i in 0..len {
                out.push(out[i] * pk);
            }
        }
    }
    out
}

/// Every quantity of the weighted lower-bound decomposition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decomposition {
    pub x: u64,
    pub y: u64,
    pub ell: usize,
    /// first `ell` members of B (fewer when B has fewer members `<= x + y`)
    pub leading_members: Vec<u64>,
    /// weighted count over B-free `n`
    pub a: u64,
    /// weighted count over `n` free of the leading members
    pub a1: u64,
    /// members `b_ell < b <= y`
    pub a2: u64,
    /// members `y < b <= x + y`
    pub a3: u64,
    /// `sum_sigma (-1)^|sigma| sum r_{[d_sigma, k]}(x, y)` over the moduli `k`
    #[serde(with = "serde_ratio")]
    pub r: Rational,
    /// `y sum_sigma (-1)^|sigma| sum 1/[d_sigma, k]`
    #[serde(with = "serde_ratio")]
    pub main_term: Rational,
    /// the coprime product form `y prod (1 - 1/b_k) sum 1/k`
    #[serde(with = "serde_ratio")]
    pub product_main_term: Rational,
    /// `(k, modulus)` pairs with `gcd(b_k, modulus) > 1`
    pub coprimality_violations: u64,
    /// `A1 - main_term - R`, zero by construction
    #[serde(with = "serde_ratio")]
    pub identity_defect: Rational,
    /// `sum_{k > ell, b_k <= x + y} 1/b_k`
    pub tail_sum: f64,
}

impl Decomposition {
    pub fn lower_bound_holds(&self) -> bool {
        self.a as i128 >= self.a1 as i128 - self.a2 as i128 - self.a3 as i128
    }
}

/// Computes `A`, `A1`, `A2`, `A3` by weighted counting over `(x, x + y]` and
/// `R`, the main term by inclusion-exclusion over subsets of the first `ell`
/// members. Divisibility by `d_sigma` and a modulus `k` is counted through
/// their lcm, so the identity `A1 = main + R` holds even where they share a
/// factor; such cases are counted in `coprimality_violations`.
pub fn decomposition_a(x: u64, y: u64, b: &BSet, w: &WeightSystem) -> Result<Decomposition> {
    if y == 0 {
        return Err(Error::Precondition("interval length y must be >= 1".into()));
    }
    let hi = x + y;
    let members = b.members_up_to(hi)?;
    let ell = w.ell.min(members.len());
    let lead: Vec<u64> = members[..ell].to_vec();
    let b_ell = lead.last().copied().unwrap_or(1);

    let weights: Vec<u64> = (x + 1..=hi).into_par_iter().map(|n| weight_c(n, w)).collect();
    let c = |n: u64| weights[(n - x - 1) as usize];
    let mut a = 0u64;
    let mut a1 = 0u64;
    for n in x + 1..=hi {
        let cn = c(n);
        if cn == 0 {
            continue;
        }
        if members.iter().take_while(|&&m| m <= n).all(|&m| n % m != 0) {
            a += cn;
        }
        if lead.iter().all(|&m| n % m != 0) {
            a1 += cn;
        }
    }
    let multiples = |m: u64| -> u64 {
        let mut s = 0;
        let mut k = (x / m + 1) * m;
        while k <= hi {
            s += c(k);
            k += m;
        }
        s
    };
    let a2: u64 = members.iter().filter(|&&m| m > b_ell && m <= y).map(|&m| multiples(m)).sum();
    let a3: u64 = members.iter().filter(|&&m| m > y && m <= hi).map(|&m| multiples(m)).sum();

    let moduli = w.moduli();
    let coprimality_violations = lead
        .iter()
        .map(|&bk| moduli.iter().filter(|&&k| bk.gcd(&k) > 1).count() as u64)
        .sum();

    // coefficient of each lcm over all (sigma, modulus)
    let coeffs: HashMap<u64, i64> = (0u32..(1u32 << ell))
        .into_par_iter()
        .fold(HashMap::new, |mut acc: HashMap<u64, i64>, mask| {
            let mut d = 1u64;
            for (i, &bk) in lead.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    d = d.saturating_mul(bk);
                }
            }
            let sign = if mask.count_ones() % 2 == 0 { 1 } else { -1 };
            for &k in &moduli {
                let l = (d / d.gcd(&k)).saturating_mul(k);
                *acc.entry(l).or_insert(0) += sign;
            }
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            a
        });
    let y_rat = int(y as i64);
    let mut recip_sum = Rational::zero();
    let mut r = Rational::zero();
    let mut a1_check = BigInt::zero();
    for (&l, &coef) in &coeffs {
        if coef == 0 {
            continue;
        }
        let inv = Rational::new(BigInt::from(coef), BigInt::from(l));
        recip_sum += &inv;
        let count = (hi / l - x / l) as i64;
        a1_check += BigInt::from(coef * count);
        r += Rational::from_integer(BigInt::from(coef * count)) - &y_rat * &inv;
    }
    let main_term = &y_rat * recip_sum;
    let identity_defect = Rational::from_integer(BigInt::from(a1)) - &main_term - &r;
    if Rational::from_integer(a1_check) != Rational::from_integer(BigInt::from(a1)) {
        return Err(Error::Internal("inclusion-exclusion count disagrees with direct A1".into()));
    }
    let lead_product = lead
        .iter()
        .fold(Rational::one(), |acc, &bk| acc * Rational::new(BigInt::from(bk - 1), BigInt::from(bk)));
    let moduli_recip = moduli
        .iter()
        .fold(Rational::zero(), |acc, &k| acc + Rational::new(BigInt::one(), BigInt::from(k)));
    let tail_sum = members[ell..].iter().map(|&m| 1.0 / m as f64).sum();
    Ok(Decomposition {
        x,
        y,
        ell,
        leading_members: lead,
        a,
        a1,
        a2,
        a3,
        r,
        main_term,
        product_main_term: y_rat * lead_product * moduli_recip,
        coprimality_violations,
        identity_defect,
        tail_sum,
    })
}

/// Buchstab's function with the default step.
pub fn buchstab_w(t: f64) -> Result<f64> {
    buchstab_w_with_step(t, BUCHSTAB_STEP)
}

/// `w(t) = 1/t` on `[1, 2]`; beyond, `(t w(t))' = w(t - 1)` is integrated by
/// the trapezoid rule on a grid whose step divides 1, so the delayed values
/// are grid values.
pub fn buchstab_w_with_step(t: f64, h: f64) -> Result<f64> {
    if !(t >= 1.0) {
        return Err(Error::Domain(format!("Buchstab's function needs t >= 1, got {t}")));
    }
    if t <= 2.0 {
        return Ok(1.0 / t);
    }
    let per_unit = (1.0 / h).round() as usize;
    if per_unit < 2 {
        return Err(Error::Precondition("step must be at most 1/2".into()));
    }
    let h = 1.0 / per_unit as f64;
    let steps = ((t - 1.0) * per_unit as f64).ceil() as usize;
    let mut w = Vec::with_capacity(steps + 1);
    for k in 0..=per_unit {
        w.push(1.0 / (1.0 + k as f64 * h));
    }
    // F = t w(t)
    let mut f = 2.0 * w[per_unit];
    for k in per_unit + 1..=steps {
        f += 0.5 * h * (w[k - 1 - per_unit] + w[k - per_unit]);
        w.push(f / (1.0 + k as f64 * h));
    }
    let pos = (t - 1.0) * per_unit as f64;
    let i = (pos.floor() as usize).min(steps - 1);
    let frac = pos - i as f64;
    Ok(w[i] * (1.0 - frac) + w[i + 1] * frac)
}

/// Reciprocal sums over the windows of a weight system, with the asymptotic
/// brackets they are expected to approach.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowSums {
    #[serde(with = "serde_ratio")]
    pub prime_reciprocal_sum: Rational,
    #[serde(with = "serde_ratio")]
    pub quasi_prime_reciprocal_sum: Rational,
    /// `log((a + eps)/a)` for the prime window starting at exponent `a`
    pub prime_prediction: Option<f64>,
    /// `[eps/(2 eta), eps/eta]`
    pub quasi_prime_bracket: Option<(f64, f64)>,
    pub prime_relative_error: Option<f64>,
    pub quasi_prime_in_bracket: Option<bool>,
}

pub fn reciprocal_sum(set: &[u64]) -> Rational {
    set.iter().fold(Rational::zero(), |acc, &v| acc + Rational::new(BigInt::one(), BigInt::from(v)))
}

/// `log((a + eps)/a)`, the leading term of `sum 1/p` over `(x^a, x^{a+eps}]`.
pub fn prime_window_prediction(a: &Rational, epsilon: &Rational) -> f64 {
    (to_f64(&(a + epsilon)) / to_f64(a)).ln()
}

pub fn window_sums(w: &WeightSystem) -> WindowSums {
    let ps = reciprocal_sum(&w.prime_window);
    let ms = reciprocal_sum(&w.quasi_primes);
    let e = &w.params.epsilon;
    let has_primes = w.variant() != Variant::OneFactor;
    let has_quasi = w.variant() != Variant::PrimeOnly;
    let prime_prediction = (has_primes && w.params.delta2.is_positive()).then(|| prime_window_prediction(&w.params.delta2, e));
    let bracket = has_quasi.then(|| {
        let r = to_f64(&(e / &w.params.eta));
        (r / 2.0, r)
    });
    WindowSums {
        prime_relative_error: prime_prediction.map(|p| (to_f64(&ps) - p).abs() / p),
        quasi_prime_in_bracket: bracket.map(|(lo, hi)| (lo..=hi).contains(&to_f64(&ms))),
        prime_reciprocal_sum: ps,
        quasi_prime_reciprocal_sum: ms,
        prime_prediction,
        quasi_prime_bracket: bracket,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::{is_squarefree, mobius};
    use proptest::prelude::*;

    fn sieve_indicator(n: u64, z: u64) -> i64 {
        i64::from(factorize_u64(n).iter().all(|&(p, _)| p >= z))
    }

    #[test]
    fn parameters_two_factor() {
        let p = choose_parameters(&int(1), &rat(1, 100), Variant::TwoFactor).unwrap();
        assert_eq!(p.theta, rat(7, 17) + rat(1, 100));
        assert_eq!(p.theta_source, ThetaFormula::Prop7_68);
        assert!(p.validate().is_ok());
        // delta_2 would be negative once theta/rho exceeds 1/2 + 2 eps
        let err = choose_parameters(&rat(1, 2), &rat(1, 100), Variant::TwoFactor).unwrap_err();
        assert!(matches!(err, Error::Constraint(ref m) if m.contains("eps < delta2 + 2 eps")), "{err}");
        let p = choose_parameters(&rat(3, 4), &rat(1, 200), Variant::TwoFactor).unwrap();
        assert_eq!(p.theta_source, ThetaFormula::Prop7_69);
        assert_eq!(p.theta, rat(33, 94) + rat(1, 200));
    }

    #[test]
    fn parameters_one_factor_and_prime_only() {
        let p = choose_parameters(&rat(1, 2), &rat(1, 1000), Variant::OneFactor).unwrap();
        assert_eq!(p.theta, rat(10, 33) + rat(1, 1000));
        let p = choose_parameters(&rat(2, 3), &rat(1, 1000), Variant::OneFactor).unwrap();
        assert_eq!(p.theta, rat(6, 17) + rat(1, 1000));
        assert_eq!(p.delta1, p.theta.clone() * int(4) / int(3) - rat(1, 1000));
        // delta = 4 theta/3 - eps exceeds theta/rho - 2 eps once rho >= 3/4
        let err = choose_parameters(&int(1), &rat(1, 1000), Variant::OneFactor).unwrap_err();
        assert!(matches!(err, Error::Constraint(ref m) if m.contains("min(theta/rho, 1)")), "{err}");
        let p = choose_parameters(&rat(1, 3), &rat(1, 100), Variant::PrimeOnly).unwrap();
        assert_eq!(p.theta, rat(1, 4) + rat(1, 50));
        assert_eq!(p.delta2, rat(1, 4));
        assert!(choose_parameters(&int(0), &rat(1, 100), Variant::PrimeOnly).is_err());
    }

    #[test]
    fn quasi_prime_examples() {
        // x^eta = 2 admits every integer of the window
        let q = quasi_primes(1 << 16, &rat(1, 4), &rat(1, 8), &rat(1, 16)).unwrap();
        assert_eq!(q, (17..=64).collect::<Vec<_>>());
        // brute-force filter at x = 10^4
        let q = quasi_primes(10_000, &rat(1, 4), &rat(1, 10), &rat(1, 8)).unwrap();
        let lo = 10f64.powf(1.0);
        let hi = 10f64.powf(4.0 * 0.35);
        let z = 10f64.powf(0.5);
        let brute: Vec<u64> = (1..=hi as u64)
            .filter(|&m| m as f64 > lo && factorize_u64(m).iter().all(|&(p, _)| p as f64 >= z))
            .collect();
        assert_eq!(q, brute);
        // x^{2 eta} > x^{delta1 + eps}: only primes survive
        let q = quasi_primes(1_000_000, &rat(1, 3), &rat(1, 10), &rat(1, 4)).unwrap();
        assert!(!q.is_empty() && q.iter().all(|&m| crate::arith::is_prime_u64(m)));
        assert!(quasi_primes(100, &rat(1, 4), &rat(1, 10), &rat(1, 2)).is_err());
    }

    #[test]
    fn remainder_examples() {
        assert_eq!(remainder_r(1, 17, &int(5)).unwrap(), int(0));
        assert_eq!(remainder_r(3, 10, &int(5)).unwrap(), rat(1, 3));
        assert_eq!(remainder_r(7, 0, &rat(1, 2)).unwrap(), rat(-1, 14));
        assert!(remainder_r(0, 1, &int(1)).is_err());
    }

    #[test]
    fn fundamental_lemma_examples() {
        let fl = fundamental_lemma_weights(3, 100, 0).unwrap();
        assert_eq!(fl.lambda_plus, BTreeMap::from([(1, 1)]));
        for n in 1..200 {
            assert!(fl.upper(n) >= sieve_indicator(n, 3));
            assert!(fl.lower(n) <= sieve_indicator(n, 3));
        }
        let fl = fundamental_lemma_weights(10, 1000, 2).unwrap();
        assert_eq!((fl.r_plus, fl.r_minus), (2, 3));
        for n in 1..=10_000 {
            let ind = sieve_indicator(n, 10);
            assert!(fl.lower(n) <= ind && ind <= fl.upper(n), "n = {n}");
        }
        for (&d, &v) in fl.lambda_plus.iter().chain(&fl.lambda_minus) {
            assert!(d <= 1000 && is_squarefree(d) && v == mobius(d));
        }
        // a small Q lowers the truncation instead of cutting terms
        let fl = fundamental_lemma_weights(10, 20, 4).unwrap();
        assert_eq!((fl.r_plus, fl.r_minus), (0, 1));
        assert!(fl.lambda_plus.keys().chain(fl.lambda_minus.keys()).all(|&d| d <= 20));
        let fl = fundamental_lemma_weights(10, 5, 1).unwrap();
        assert_eq!(fl.r_minus, -1);
        assert!(fl.lambda_minus.is_empty());
        assert!(fundamental_lemma_weights(1, 5, 1).is_err());
    }

    fn small_system(variant: Variant) -> WeightSystem {
        let (rho, eps) = match variant {
            Variant::TwoFactor => (int(1), rat(1, 25)),
            Variant::OneFactor => (rat(1, 2), rat(1, 200)),
            Variant::PrimeOnly => (rat(1, 2), rat(1, 20)),
        };
        let p = choose_parameters(&rho, &eps, variant).unwrap();
        WeightSystem::build(p, 100_000, 3, 2).unwrap()
    }

    #[test]
    fn weights_against_divisor_scan() {
        for variant in [Variant::TwoFactor, Variant::OneFactor, Variant::PrimeOnly] {
            let w = small_system(variant);
            assert_eq!(weight_c(1, &w), 0);
            assert_eq!(weight_c(10_007, &w), 0);
            for n in (1..=20_000u64).step_by(7) {
                let brute = match variant {
                    Variant::TwoFactor => w
                        .quasi_primes
                        .iter()
                        .flat_map(|&m| w.prime_window.iter().map(move |&p| m * p))
                        .filter(|&k| n % k == 0)
                        .count(),
                    Variant::OneFactor => w.quasi_primes.iter().filter(|&&m| n % m == 0).count(),
                    Variant::PrimeOnly => w.prime_window.iter().filter(|&&p| n % p == 0).count(),
                } as u64;
                assert_eq!(weight_c(n, &w), brute, "{variant:?} n = {n}");
            }
        }
    }

    #[test]
    fn weight_bound() {
        let w = small_system(Variant::TwoFactor);
        // log2 of 2^{1/eta}/eps
        let bound = to_f64(&(int(1) / &w.params.eta)) - to_f64(&w.params.epsilon).log2();
        let max = (1..=20_000).map(|n| weight_c(n, &w)).max().unwrap();
        assert!((max as f64).log2() <= bound);
    }

    #[test]
    fn decomposition_examples() {
        let w = small_system(Variant::TwoFactor);
        let d = decomposition_a(100_000, 500, &BSet::empty(), &w).unwrap();
        assert_eq!((d.a, d.a2, d.a3), (d.a1, 0, 0));
        assert!(d.identity_defect.is_zero());
        let d = decomposition_a(100_000, 500, &BSet::squarefree(), &w).unwrap();
        assert_eq!(d.leading_members, vec![4, 9, 25]);
        assert!(d.lower_bound_holds());
        assert!(d.identity_defect.is_zero());
        assert!(d.a > 0);
        let w9 = small_system(Variant::PrimeOnly);
        let d = decomposition_a(100_000, 500, &BSet::generated([2, 3]).unwrap(), &w9).unwrap();
        assert!(d.identity_defect.is_zero() && d.lower_bound_holds());
        // |R| <= 2^ell |P''| since every remainder is below 1 in size
        let bound = int((1i64 << d.ell) * w9.prime_window.len() as i64);
        assert!(d.r.abs() <= bound);
        if d.coprimality_violations == 0 {
            assert_eq!(d.main_term, d.product_main_term);
        }
    }

    #[test]
    fn buchstab_values() {
        assert_eq!(buchstab_w(1.5).unwrap(), 2.0 / 3.0);
        assert_eq!(buchstab_w(2.0).unwrap(), 0.5);
        // (1 + log(t - 1))/t on [2, 3]
        let t = 2.5;
        assert!((buchstab_w(t).unwrap() - (1.0 + (t - 1.0f64).ln()) / t).abs() < 1e-8);
        let w10 = buchstab_w(10.0).unwrap();
        assert!((w10 - 0.561459).abs() < 1e-3);
        let half = buchstab_w_with_step(10.0, BUCHSTAB_STEP / 2.0).unwrap();
        assert!((w10 - half).abs() < 1e-4);
        assert!(buchstab_w(0.5).is_err());
    }

    #[test]
    fn window_sum_examples() {
        assert_eq!(reciprocal_sum(&[2]), rat(1, 2));
        assert_eq!(reciprocal_sum(&[]), int(0));
        let ps = prime_window(1_000_000, &rat(1, 5), &rat(1, 20)).unwrap();
        let got = to_f64(&reciprocal_sum(&ps));
        let want = prime_window_prediction(&rat(1, 5), &rat(1, 20));
        assert!((got - want).abs() / want < 0.25, "{got} vs {want}");
        let ws = window_sums(&small_system(Variant::TwoFactor));
        assert!(ws.prime_prediction.is_some() && ws.quasi_prime_bracket.is_some());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn bonferroni_sandwich(z in 2u64..40, q in 1u64..5000, r0 in 0u32..6) {
            let fl = fundamental_lemma_weights(z, q, r0).unwrap();
            for n in 1..=3000u64 {
                let ind = sieve_indicator(n, z);
                prop_assert!(fl.lower(n) <= ind && ind <= fl.upper(n));
            }
            for &d in fl.lambda_plus.keys().chain(fl.lambda_minus.keys()) {
                prop_assert!(d <= q && factorize_u64(d).iter().all(|&(p, e)| p < z && e == 1));
            }
        }

        #[test]
        fn remainder_is_small(d in 1u64..10_000, x in 0u64..1_000_000, yn in 0i64..100_000, yd in 1i64..50) {
            let r = remainder_r(d, x, &rat(yn, yd)).unwrap();
            prop_assert!(r.abs() < int(1));
        }

        #[test]
        fn decomposition_identity(x in 20_000u64..200_000, y in 50u64..400, ell in 0usize..5) {
            let p = choose_parameters(&int(1), &rat(1, 25), Variant::TwoFactor).unwrap();
            let w = WeightSystem::build(p, x, ell, 2).unwrap();
            let d = decomposition_a(x, y, &BSet::squarefree(), &w).unwrap();
            prop_assert!(d.identity_defect.is_zero());
            prop_assert!(d.lower_bound_holds());
        }
    }
}
