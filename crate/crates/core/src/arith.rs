//! Exact integer substrate: primes, factorization, multiplicative functions
//! and Frobenius traces of elliptic curves over prime fields.
//!
//! The small-prime table (up to [`TABLE_LIMIT`]) is built once on first use and
//! is read-only afterwards, so every function here is safe to call from
//! concurrent tasks.

use std::sync::OnceLock;

use num_bigint::{BigInt, BigUint};
use num_integer::{Integer, Roots};
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Trial-division table bound; above it factorization falls back to Pollard rho.
pub const TABLE_LIMIT: u64 = 1_000_000;

/// Default byte budget for range enumerations (1 GiB).
pub const DEFAULT_MEMORY_BUDGET: u64 = 1 << 30;

struct SmallPrimes {
    primes: Vec<u64>,
    /// smallest prime factor for n <= TABLE_LIMIT (0 at 0 and 1)
    spf: Vec<u32>,
}

fn small_primes() -> &'static SmallPrimes {
    static TABLE: OnceLock<SmallPrimes> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = TABLE_LIMIT as usize;
        let mut spf = vec![0u32; n + 1];
        let mut primes = Vec::with_capacity(78_498);
        for i in 2..=n {
            if spf[i] == 0 {
                spf[i] = i as u32;
                primes.push(i as u64);
                let mut j = i * i;
                while j <= n {
                    if spf[j] == 0 {
                        spf[j] = i as u32;
                    }
                    j += i;
                }
            }
        }
        SmallPrimes { primes, spf }
    })
}

/// Primes up to [`TABLE_LIMIT`], ascending.
pub fn prime_table() -> &'static [u64] {
    &small_primes().primes
}

/// Canonical factorization of a positive integer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Factorization {
    pub value: BigUint,
    /// (prime, exponent), primes strictly increasing, exponents >= 1
    pub factors: Vec<(BigUint, u32)>,
}

impl Factorization {
    pub fn product(&self) -> BigUint {
        self.factors
            .iter()
            .fold(BigUint::one(), |acc, (p, e)| acc * p.pow(*e))
    }

    /// Number of distinct prime factors.
    pub fn omega(&self) -> usize {
        self.factors.len()
    }

    pub fn is_squarefree(&self) -> bool {
        self.factors.iter().all(|&(_, e)| e == 1)
    }
}

/// Primes in `[lo, hi]` by a segmented sieve of Eratosthenes.
pub fn primes_in(lo: u64, hi: u64) -> Result<Vec<u64>> {
    primes_in_with_budget(lo, hi, DEFAULT_MEMORY_BUDGET)
}

/// [`primes_in`] with an explicit byte budget covering the output list and
/// the sieve buffers.
pub fn primes_in_with_budget(lo: u64, hi: u64, budget_bytes: u64) -> Result<Vec<u64>> {
    if lo < 2 || lo > hi {
        return Err(Error::Precondition(format!(
            "primes_in needs 2 <= lo <= hi, got [{lo}, {hi}]"
        )));
    }
    let span = hi - lo + 1;
    // pi(hi) - pi(lo) is at most about span / ln(span) * 1.26 for span >= 17
    let est_count = if span < 64 {
        span
    } else {
        (1.3 * span as f64 / (span as f64).ln()) as u64 + 64
    };
    let root = hi.sqrt();
    let est_bytes = est_count * 8 + (root / 2).max(1) * 8 + SEGMENT as u64;
    if est_bytes > budget_bytes {
        return Err(Error::Resource(format!(
            "enumerating primes in [{lo}, {hi}] needs about {est_bytes} bytes, budget is {budget_bytes}"
        )));
    }
    if hi <= TABLE_LIMIT {
        let table = prime_table();
        let a = table.partition_point(|&p| p < lo);
        let b = table.partition_point(|&p| p <= hi);
        return Ok(table[a..b].to_vec());
    }
    let base = base_primes(root)?;
    let mut out = Vec::with_capacity(est_count.min(1 << 24) as usize);
    let mut seg = vec![true; SEGMENT];
    let mut start = lo;
    loop {
        let end = start.saturating_add(SEGMENT as u64 - 1).min(hi);
        let len = (end - start + 1) as usize;
        seg[..len].fill(true);
        for &p in &base {
            if p * p > end {
                break;
            }
            let first = (start.div_ceil(p) * p).max(p * p);
            let mut m = first;
            while m <= end {
                seg[(m - start) as usize] = false;
                m += p;
            }
        }
        for (i, &is_p) in seg[..len].iter().enumerate() {
            if is_p {
                out.push(start + i as u64);
            }
        }
        if end == hi {
            break;
        }
        start = end + 1;
    }
    Ok(out)
}

const SEGMENT: usize = 1 << 18;

fn base_primes(limit: u64) -> Result<Vec<u64>> {
    if limit <= TABLE_LIMIT {
        let table = prime_table();
        let b = table.partition_point(|&p| p <= limit);
        Ok(table[..b].to_vec())
    } else {
        primes_in(2, limit)
    }
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod(r, b, m);
        }
        b = mul_mod(b, b, m);
        e >>= 1;
    }
    r
}

/// Deterministic Miller-Rabin for 64-bit integers.
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n <= TABLE_LIMIT {
        return small_primes().spf[n as usize] as u64 == n;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n % p == 0 {
            return n == p;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn is_probable_prime_big(n: &BigUint) -> bool {
    if let Some(v) = n.to_u64() {
        return is_prime_u64(v);
    }
    let one = BigUint::one();
    let two = BigUint::from(2u32);
    if n.is_even() {
        return false;
    }
    let nm1 = n - &one;
    let s = nm1.trailing_zeros().unwrap_or(0);
    let d = &nm1 >> s;
    // the first 20 prime bases; error probability far below anything desk scale reaches
    'witness: for &a in prime_table().iter().take(20) {
        let mut x = BigUint::from(a).modpow(&d, n);
        if x == one || x == nm1 {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == nm1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn pollard_rho_u64(n: u64) -> u64 {
    if n % 2 == 0 {
        return 2;
    }
    let mut c = 1u64;
    loop {
        let f = |x: u64| (mul_mod(x, x, n) + c) % n;
        let (mut x, mut y, mut d) = (2u64, 2u64, 1u64);
        while d == 1 {
            x = f(x);
            y = f(f(y));
            d = x.abs_diff(y).gcd(&n);
        }
        if d != n {
            return d;
        }
        c += 1;
    }
}

fn pollard_rho_big(n: &BigUint) -> BigUint {
    let mut c = BigUint::one();
    loop {
        let f = |x: &BigUint| (x * x + &c) % n;
        let mut x = BigUint::from(2u32);
        let mut y = x.clone();
        let mut d = BigUint::one();
        while d.is_one() {
            x = f(&x);
            y = f(&f(&y));
            let diff = if x > y { &x - &y } else { &y - &x };
            d = diff.gcd(n);
        }
        if &d != n {
            return d;
        }
        c += 1u32;
    }
}

fn push_factor(out: &mut Vec<(u64, u32)>, p: u64) {
    match out.iter_mut().find(|(q, _)| *q == p) {
        Some(entry) => entry.1 += 1,
        None => out.push((p, 1)),
    }
}

fn split_u64(n: u64, out: &mut Vec<(u64, u32)>) {
    if n == 1 {
        return;
    }
    if is_prime_u64(n) {
        push_factor(out, n);
        return;
    }
    let d = pollard_rho_u64(n);
    split_u64(d, out);
    split_u64(n / d, out);
}

/// Factorization of a 64-bit integer as (prime, exponent) pairs, ascending.
pub fn factorize_u64(mut n: u64) -> Vec<(u64, u32)> {
    let mut out: Vec<(u64, u32)> = Vec::new();
    if n <= 1 {
        return out;
    }
    let sp = small_primes();
    if n <= TABLE_LIMIT {
        while n > 1 {
            let p = sp.spf[n as usize] as u64;
            let mut e = 0;
            while n % p == 0 {
                n /= p;
                e += 1;
            }
            out.push((p, e));
        }
        return out;
    }
    for &p in &sp.primes {
        if p * p > n {
            break;
        }
        if n % p == 0 {
            let mut e = 0;
            while n % p == 0 {
                n /= p;
                e += 1;
            }
            out.push((p, e));
        }
    }
    if n > 1 {
        split_u64(n, &mut out);
    }
    out.sort_unstable();
    out
}

fn split_big(n: BigUint, out: &mut Vec<(BigUint, u32)>) {
    if n.is_one() {
        return;
    }
    if let Some(v) = n.to_u64() {
        for (p, e) in factorize_u64(v) {
            for _ in 0..e {
                push_big(out, BigUint::from(p));
            }
        }
        return;
    }
    if is_probable_prime_big(&n) {
        push_big(out, n);
        return;
    }
    let d = pollard_rho_big(&n);
    let rest = &n / &d;
    split_big(d, out);
    split_big(rest, out);
}

fn push_big(out: &mut Vec<(BigUint, u32)>, p: BigUint) {
    match out.iter_mut().find(|(q, _)| *q == p) {
        Some(entry) => entry.1 += 1,
        None => out.push((p, 1)),
    }
}

/// Canonical factorization: trial division by the prime table, then Pollard
/// rho on whatever cofactor remains. `factorize(1)` has no factors.
pub fn factorize(n: &BigUint) -> Result<Factorization> {
    if n.is_zero() {
        return Err(Error::Domain("factorize needs n >= 1".into()));
    }
    let mut rest = n.clone();
    let mut factors: Vec<(BigUint, u32)> = Vec::new();
    if let Some(v) = rest.to_u64() {
        factors = factorize_u64(v)
            .into_iter()
            .map(|(p, e)| (BigUint::from(p), e))
            .collect();
    } else {
        for &p in prime_table() {
            let bp = BigUint::from(p);
            if &bp * &bp > rest {
                break;
            }
            let mut e = 0;
            while (&rest % &bp).is_zero() {
                rest /= &bp;
                e += 1;
            }
            if e > 0 {
                factors.push((bp, e));
            }
        }
        split_big(rest, &mut factors);
        factors.sort();
    }
    Ok(Factorization {
        value: n.clone(),
        factors,
    })
}

/// The multiplicative functions used across the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MultFn {
    Mobius,
    Liouville,
    EulerPhi,
    DivisorCount,
}

pub fn mult_fn(kind: MultFn, n: &BigUint) -> Result<BigInt> {
    let f = factorize(n)?;
    Ok(match kind {
        MultFn::Mobius => {
            if f.is_squarefree() {
                if f.omega() % 2 == 0 {
                    BigInt::one()
                } else {
                    -BigInt::one()
                }
            } else {
                BigInt::zero()
            }
        }
        MultFn::Liouville => {
            let big_omega: u64 = f.factors.iter().map(|&(_, e)| e as u64).sum();
            if big_omega % 2 == 0 {
                BigInt::one()
            } else {
                -BigInt::one()
            }
        }
        MultFn::EulerPhi => {
            let phi = f.factors.iter().fold(BigUint::one(), |acc, (p, e)| {
                acc * p.pow(e - 1) * (p - BigUint::one())
            });
            BigInt::from(phi)
        }
        MultFn::DivisorCount => BigInt::from(
            f.factors
                .iter()
                .fold(BigUint::one(), |acc, &(_, e)| acc * BigUint::from(e + 1)),
        ),
    })
}

pub fn mobius(n: u64) -> i8 {
    let f = factorize_u64(n);
    if f.iter().any(|&(_, e)| e > 1) {
        0
    } else if f.len() % 2 == 0 {
        1
    } else {
        -1
    }
}

pub fn liouville(n: u64) -> i8 {
    let total: u32 = factorize_u64(n).iter().map(|&(_, e)| e).sum();
    if total % 2 == 0 {
        1
    } else {
        -1
    }
}

pub fn euler_phi(n: u64) -> u64 {
    factorize_u64(n)
        .iter()
        .fold(1, |acc, &(p, e)| acc * p.pow(e - 1) * (p - 1))
}

pub fn divisor_count(n: u64) -> u64 {
    factorize_u64(n).iter().map(|&(_, e)| e as u64 + 1).product()
}

pub fn is_squarefree(n: u64) -> bool {
    n >= 1 && factorize_u64(n).iter().all(|&(_, e)| e == 1)
}

/// All positive divisors of `n`, ascending.
pub fn divisors(n: u64) -> Vec<u64> {
    let mut ds = vec![1u64];
    for (p, e) in factorize_u64(n) {
        let len = ds.len();
        let mut pk = 1;
        for _ in 0..e {
            pk *= p;
            for i in 0..len {
                ds.push(ds[i] * pk);
            }
        }
    }
    ds.sort_unstable();
    ds
}

/// Divisor counts d(n) for 0 <= n <= limit (index 0 unused).
pub fn divisor_count_table(limit: usize) -> Vec<u32> {
    let mut d = vec![0u32; limit + 1];
    for i in 1..=limit {
        let mut j = i;
        while j <= limit {
            d[j] += 1;
            j += i;
        }
    }
    d
}

/// `4 a4^3 + 27 a6^2`; the curve discriminant is `-16` times this.
pub fn ec_discriminant_core(a4: i64, a6: i64) -> BigInt {
    let a4 = BigInt::from(a4);
    let a6 = BigInt::from(a6);
    BigInt::from(4) * &a4 * &a4 * &a4 + BigInt::from(27) * &a6 * &a6
}

/// Trace of Frobenius `a_p = p + 1 - #E(F_p)` of `y^2 = x^3 + a4 x + a6`,
/// by exhaustive point count. Requires good reduction at the odd prime `p`.
pub fn ec_trace(a4: i64, a6: i64, p: u64) -> Result<i64> {
    if !is_prime_u64(p) {
        return Err(Error::Precondition(format!("{p} is not prime")));
    }
    if p == 2 || (ec_discriminant_core(a4, a6) % BigInt::from(p)).is_zero() {
        return Err(Error::BadReduction { prime: p });
    }
    Ok(ec_point_count_trace(a4, a6, p))
}

/// `p + 1 - #E(F_p)` counted on the given model without any reduction check.
/// At primes of bad reduction this is the usual 0 / +1 / -1 when the model is
/// minimal there.
pub fn ec_point_count_trace(a4: i64, a6: i64, p: u64) -> i64 {
    let pi = p as i128;
    // number of y with y^2 = r, for each residue r
    let mut roots = vec![0u32; p as usize];
    for y in 0..p {
        roots[mul_mod(y, y, p) as usize] += 1;
    }
    let a4 = (a4 as i128).rem_euclid(pi) as u64;
    let a6 = (a6 as i128).rem_euclid(pi) as u64;
    let mut affine: u64 = 0;
    for x in 0..p {
        let x2 = mul_mod(x, x, p);
        let rhs = (mul_mod(x2, x, p) + mul_mod(a4, x, p) + a6) % p;
        affine += roots[rhs as usize] as u64;
    }
    let count = affine as i64 + 1;
    p as i64 + 1 - count
}

/// Modular inverse of `a` modulo `m` when `gcd(a, m) = 1`.
pub fn inv_mod(a: u64, m: u64) -> Option<u64> {
    let g = (a as i128).extended_gcd(&(m as i128));
    if g.gcd != 1 {
        return None;
    }
    Some(g.x.rem_euclid(m as i128) as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial_is_prime(n: u64) -> bool {
        n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| n % d != 0)
    }

    #[test]
    fn primes_in_small_ranges() {
        assert_eq!(primes_in(2, 10).unwrap(), vec![2, 3, 5, 7]);
        assert_eq!(primes_in(11, 11).unwrap(), vec![11]);
        let oracle: Vec<u64> = (90..=100).filter(|&n| trial_is_prime(n)).collect();
        assert_eq!(oracle, vec![97]);
        assert_eq!(primes_in(90, 100).unwrap(), oracle);
        assert!(primes_in(1, 10).is_err());
        assert!(primes_in(10, 9).is_err());
    }

    #[test]
    fn segmented_path_above_table() {
        let lo = TABLE_LIMIT - 500;
        let hi = TABLE_LIMIT + 3_000;
        let got = primes_in(lo, hi).unwrap();
        let want: Vec<u64> = (lo..=hi).filter(|&n| trial_is_prime(n)).collect();
        assert_eq!(got, want);
        let far = primes_in(10_000_000_000, 10_000_000_200).unwrap();
        let want: Vec<u64> = (10_000_000_000..=10_000_000_200u64)
            .filter(|&n| trial_is_prime(n))
            .collect();
        assert_eq!(far, want);
    }

    #[test]
    fn budget_is_enforced() {
        assert!(matches!(
            primes_in_with_budget(2, 1_000_000_000, 1 << 20),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn primes_in_agrees_with_factorization_on_1e5() {
        let sieve = primes_in(2, 100_000).unwrap();
        let by_factor: Vec<u64> = (2..=100_000u64)
            .filter(|&n| {
                let f = factorize_u64(n);
                f.len() == 1 && f[0].1 == 1
            })
            .collect();
        assert_eq!(sieve, by_factor);
    }

    #[test]
    fn factorize_examples() {
        let f = factorize(&BigUint::one()).unwrap();
        assert!(f.factors.is_empty());
        let f = factorize(&BigUint::from(12u32)).unwrap();
        assert_eq!(
            f.factors,
            vec![(BigUint::from(2u32), 2), (BigUint::from(3u32), 1)]
        );
        let f = factorize(&BigUint::from(3104u32)).unwrap();
        assert_eq!(
            f.factors,
            vec![(BigUint::from(2u32), 5), (BigUint::from(97u32), 1)]
        );
    }

    #[test]
    fn factorize_large() {
        // (2^61 - 1) * (10^6 + 3) * 7^2, beyond 64 bits
        let m61 = BigUint::from((1u64 << 61) - 1);
        let n = &m61 * BigUint::from(1_000_003u64) * BigUint::from(49u32);
        let f = factorize(&n).unwrap();
        assert_eq!(f.product(), n);
        assert_eq!(
            f.factors,
            vec![
                (BigUint::from(7u32), 2),
                (BigUint::from(1_000_003u64), 1),
                (m61, 1)
            ]
        );
        // semiprime with two ~32-bit factors exercises rho
        let n = 4_294_967_291u64 * 4_294_967_279u64;
        assert_eq!(
            factorize_u64(n),
            vec![(4_294_967_279, 1), (4_294_967_291, 1)]
        );
    }

    #[test]
    fn mult_fn_examples() {
        let b = |n: u32| BigUint::from(n);
        assert_eq!(mult_fn(MultFn::Mobius, &b(12)).unwrap(), BigInt::zero());
        assert_eq!(mult_fn(MultFn::EulerPhi, &b(10)).unwrap(), BigInt::from(4));
        assert_eq!(mult_fn(MultFn::Liouville, &b(8)).unwrap(), BigInt::from(-1));
        assert_eq!(mult_fn(MultFn::DivisorCount, &b(12)).unwrap(), BigInt::from(6));
        assert_eq!(mult_fn(MultFn::Mobius, &b(1)).unwrap(), BigInt::one());
        assert_eq!(mobius(30), -1);
        assert_eq!(liouville(12), -1);
        assert_eq!(euler_phi(97), 96);
        assert_eq!(divisor_count(3104), 12);
    }

    #[test]
    fn mobius_sum_identity() {
        for n in 1..=10_000u64 {
            let s: i64 = divisors(n).iter().map(|&d| mobius(d) as i64).sum();
            assert_eq!(s, i64::from(n == 1), "n = {n}");
        }
    }

    fn brute_trace(a4: i64, a6: i64, p: u64) -> i64 {
        let p_i = p as i64;
        let mut count = 1; // point at infinity
        for x in 0..p_i {
            for y in 0..p_i {
                let lhs = (y * y).rem_euclid(p_i);
                let rhs = (x * x * x + a4 * x + a6).rem_euclid(p_i);
                if lhs == rhs {
                    count += 1;
                }
            }
        }
        p_i + 1 - count
    }

    #[test]
    fn ec_trace_examples() {
        assert_eq!(brute_trace(0, 1, 5), 0);
        assert_eq!(ec_trace(0, 1, 5).unwrap(), 0);
        assert_eq!(brute_trace(0, 1, 7), -4);
        assert_eq!(ec_trace(0, 1, 7).unwrap(), -4);
        assert_eq!(ec_trace(0, 1, 3), Err(Error::BadReduction { prime: 3 }));
        assert_eq!(ec_trace(0, 1, 2), Err(Error::BadReduction { prime: 2 }));
    }

    #[test]
    fn ec_trace_hasse_and_oracle() {
        for &(a4, a6) in &[(0i64, 1i64), (-1, 0), (1, 1), (-7, 10), (3, -5)] {
            for p in primes_in(3, 1_000).unwrap() {
                match ec_trace(a4, a6, p) {
                    Ok(t) => {
                        assert!((t * t) as u64 <= 4 * p, "Hasse fails at {a4},{a6},{p}");
                        if p < 120 {
                            assert_eq!(t, brute_trace(a4, a6, p));
                        }
                    }
                    Err(Error::BadReduction { .. }) => {}
                    Err(e) => panic!("{e}"),
                }
            }
        }
    }

    #[test]
    fn inverse() {
        assert_eq!(inv_mod(3, 7), Some(5));
        assert_eq!(inv_mod(2, 4), None);
    }
}
