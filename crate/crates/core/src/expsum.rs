//! Direct evaluation of the bilinear and trilinear exponential sums, the
//! quadruplet spacing counts that control them, and the remainder sums of
//! type I. Bound evaluators carry a user constant `C`; nothing here asserts
//! an inequality with an unspecified implied constant.
//!
//! Seeded coefficients are `e(u)` with `u = (next >> 11) / 2^53`, where
//! `next` is the SplitMix64 stream started at the seed.

use std::fmt::Write as _;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{Signed, Zero};
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exponents::{admissibility, Admissibility, AdmissibilityInput, Condition, ExponentPair};
use crate::rational::{int, Rational};

/// Largest number of terms a direct sum will evaluate.
pub const MAX_TERMS: u64 = 1 << 31;

/// Largest `M` for the sorted pair-sum counter (`M^2` floats in memory).
pub const MAX_QUAD_FAST_M: u64 = 10_000;

/// Largest `M` for the `O(M^4)` counter.
pub const MAX_QUAD_BRUTE_M: u64 = 256;

/// Largest number of `(m, n)` terms in an exact remainder sum.
pub const MAX_REMAINDER_TERMS: u64 = 1 << 20;

/// Outer-index rows per parallel task; partial sums merge in row order.
const ROW_BLOCK: u64 = 8;

/// `e(t) = exp(2 pi i t)`, reducing `t` mod 1 first.
pub fn e(t: f64) -> Complex64 {
    let f = t - t.floor();
    let a = std::f64::consts::TAU * f;
    Complex64::new(a.cos(), a.sin())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Coefficients {
    Ones,
    /// unimodular `e(u)` from the SplitMix64 stream at `seed`
    Random { seed: u64 },
    Explicit(Vec<Complex64>),
}

impl Coefficients {
    /// The first `len` coefficients; explicit lists must have length `len`
    /// and entries of modulus at most 1.
    pub fn materialize(&self, len: u64) -> Result<Vec<Complex64>> {
        match self {
            Coefficients::Ones => Ok(vec![Complex64::new(1.0, 0.0); len as usize]),
            Coefficients::Random { seed } => Ok(random_unimodular(*seed, len as usize)),
            Coefficients::Explicit(v) => {
                if v.len() as u64 != len {
                    return Err(Error::Precondition(format!(
                        "coefficient list has {} entries, expected {len}",
                        v.len()
                    )));
                }
                if let Some(c) = v.iter().find(|c| !(c.norm() <= 1.0 + 1e-12)) {
                    return Err(Error::Precondition(format!("coefficient {c} has modulus above 1")));
                }
                Ok(v.clone())
            }
        }
    }
}

pub fn random_unimodular(seed: u64, len: usize) -> Vec<Complex64> {
    let mut rng = SplitMix64::seed_from_u64(seed);
    (0..len).map(|_| e((rng.next_u64() >> 11) as f64 * (-53f64).exp2())).collect()
}

/// Shape and coefficients of a type II double sum or type I triple sum.
/// Dyadic ranges are `M <= m < 2M`; `interval` is a half-open `I` inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct SumSpec {
    pub x: f64,
    pub m: u64,
    pub n: u64,
    pub h: u64,
    pub alpha: f64,
    pub beta: f64,
    pub phi: Coefficients,
    pub psi: Coefficients,
    pub xi: Coefficients,
    pub interval: Option<(u64, u64)>,
}

impl SumSpec {
    pub fn new(x: f64, m: u64, n: u64, alpha: f64, beta: f64) -> Self {
        SumSpec {
            x,
            m,
            n,
            h: 1,
            alpha,
            beta,
            phi: Coefficients::Ones,
            psi: Coefficients::Ones,
            xi: Coefficients::Ones,
            interval: None,
        }
    }

    fn check_shape(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 || self.h == 0 {
            return Err(Error::Precondition("M, N, H must be positive".into()));
        }
        if !self.x.is_finite() || !self.alpha.is_finite() || !self.beta.is_finite() {
            return Err(Error::Precondition("X, alpha, beta must be finite".into()));
        }
        Ok(())
    }

    fn interval(&self) -> Result<(u64, u64)> {
        let (a, b) = self.interval.unwrap_or((self.m, 2 * self.m));
        if a > b || a < self.m || b > 2 * self.m {
            return Err(Error::Precondition(format!("interval [{a}, {b}) is not inside [M, 2M)")));
        }
        Ok((a, b))
    }
}

/// Neumaier-compensated complex accumulator.
#[derive(Debug, Clone, Copy, Default)]
struct Compensated {
    re: (f64, f64),
    im: (f64, f64),
}

impl Compensated {
    fn add(&mut self, z: Complex64) {
        fn step(acc: &mut (f64, f64), v: f64) {
            let t = acc.0 + v;
            if acc.0.abs() >= v.abs() {
                acc.1 += (acc.0 - t) + v;
            } else {
                acc.1 += (v - t) + acc.0;
            }
            acc.0 = t;
        }
        step(&mut self.re, z.re);
        step(&mut self.im, z.im);
    }

    fn value(&self) -> Complex64 {
        Complex64::new(self.re.0 + self.re.1, self.im.0 + self.im.1)
    }
}

fn check_budget(terms: u128) -> Result<()> {
    if terms > MAX_TERMS as u128 {
        return Err(Error::Resource(format!("{terms} terms exceed the budget of {MAX_TERMS}")));
    }
    Ok(())
}

/// Sums `row(i)` over `0..rows` in blocks of [`ROW_BLOCK`], merging block
/// partials in index order so the result is independent of scheduling.
fn blocked_sum(rows: u64, row: impl Fn(u64, &mut Compensated) + Sync) -> Complex64 {
    let blocks = rows.div_ceil(ROW_BLOCK);
    let partials: Vec<Complex64> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = Compensated::default();
            for i in b * ROW_BLOCK..((b + 1) * ROW_BLOCK).min(rows) {
                row(i, &mut acc);
            }
            acc.value()
        })
        .collect();
    let mut total = Compensated::default();
    for p in partials {
        total.add(p);
    }
    total.value()
}

/// `sum_{m ~ M} sum_{n ~ N} phi_m psi_n e(X m^a n^b / (M^a N^b))`.
pub fn type2_sum(spec: &SumSpec) -> Result<Complex64> {
    spec.check_shape()?;
    check_budget(spec.m as u128 * spec.n as u128)?;
    let phi = spec.phi.materialize(spec.m)?;
    let psi = spec.psi.materialize(spec.n)?;
    let (mf, nf) = (spec.m as f64, spec.n as f64);
    let npow: Vec<f64> = (0..spec.n).map(|j| ((spec.n + j) as f64 / nf).powf(spec.beta)).collect();
    Ok(blocked_sum(spec.m, |i, acc| {
        let a = spec.x * ((spec.m + i) as f64 / mf).powf(spec.alpha);
        for (j, np) in npow.iter().enumerate() {
            acc.add(phi[i as usize] * psi[j] * e(a * np));
        }
    }))
}

/// `sum_{h ~ H} sum_{m in I} sum_{n ~ N} xi_h psi_n e(X h^b m^{-b} n^a / (H^b M^{-b} N^a))`.
pub fn type1_triple_sum(spec: &SumSpec) -> Result<Complex64> {
    spec.check_shape()?;
    let (lo, hi) = spec.interval()?;
    check_budget(spec.h as u128 * (hi - lo) as u128 * spec.n as u128)?;
    let xi = spec.xi.materialize(spec.h)?;
    let psi = spec.psi.materialize(spec.n)?;
    let (hf, mf, nf) = (spec.h as f64, spec.m as f64, spec.n as f64);
    let mpow: Vec<f64> = (lo..hi).map(|m| (m as f64 / mf).powf(-spec.beta)).collect();
    let npow: Vec<f64> = (0..spec.n).map(|j| ((spec.n + j) as f64 / nf).powf(spec.alpha)).collect();
    Ok(blocked_sum(spec.h, |i, acc| {
        let a = spec.x * ((spec.h + i) as f64 / hf).powf(spec.beta);
        for mp in &mpow {
            let b = a * mp;
            for (j, np) in npow.iter().enumerate() {
                acc.add(xi[i as usize] * psi[j] * e(b * np));
            }
        }
    }))
}

/// Ordered pair sums `m1^a + m2^a` over `{M+1, ..., 2M}^2`.
fn pair_sums(m: u64, alpha: f64) -> Vec<f64> {
    let pw: Vec<f64> = (m + 1..=2 * m).map(|v| (v as f64).powf(alpha)).collect();
    let mut out = Vec::with_capacity(pw.len() * pw.len());
    for &a in &pw {
        for &b in &pw {
            out.push(a + b);
        }
    }
    out
}

fn quad_check(m: u64, delta: f64, cap: u64) -> Result<()> {
    if m == 0 {
        return Err(Error::Precondition("quadruple count needs M >= 1".into()));
    }
    if !(delta >= 0.0) {
        return Err(Error::Precondition("quadruple count needs Delta >= 0".into()));
    }
    if m > cap {
        return Err(Error::Resource(format!("M = {m} exceeds {cap} for this algorithm")));
    }
    Ok(())
}

/// Number of `(m1, m2, m3, m4)` in `{M+1, ..., 2M}^4` with
/// `|m1^a + m2^a - m3^a - m4^a| <= Delta M^a`, by a two-pointer window over
/// the sorted pair sums. Floating subtraction is monotone in each argument,
/// so the window selects exactly the pairs the direct comparison accepts.
pub fn quadruple_count(m: u64, alpha: f64, delta: f64) -> Result<u64> {
    quad_check(m, delta, MAX_QUAD_FAST_M)?;
    let t = delta * (m as f64).powf(alpha);
    let mut s = pair_sums(m, alpha);
    s.par_sort_unstable_by(f64::total_cmp);
    let (mut lo, mut hi, mut count) = (0usize, 0usize, 0u64);
    for i in 0..s.len() {
        while s[i] - s[lo] > t {
            lo += 1;
        }
        while hi < s.len() && s[hi] - s[i] <= t {
            hi += 1;
        }
        count += (hi - lo) as u64;
    }
    Ok(count)
}

/// The same count by direct enumeration of all quadruplets.
pub fn quadruple_count_brute(m: u64, alpha: f64, delta: f64) -> Result<u64> {
    quad_check(m, delta, MAX_QUAD_BRUTE_M)?;
    let t = delta * (m as f64).powf(alpha);
    let pw: Vec<f64> = (m + 1..=2 * m).map(|v| (v as f64).powf(alpha)).collect();
    Ok(pw
        .par_iter()
        .map(|&a| {
            let mut c = 0u64;
            for &b in &pw {
                let l = a + b;
                for &p in &pw {
                    for &q in &pw {
                        if (l - (p + q)).abs() <= t {
                            c += 1;
                        }
                    }
                }
            }
            c
        })
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundFormula {
    Prop5,
    Cor8_59,
    Cor8_510,
    Rs39,
}

impl BoundFormula {
    pub fn id(self) -> &'static str {
        match self {
            BoundFormula::Prop5 => "prop5",
            BoundFormula::Cor8_59 => "cor8_59",
            BoundFormula::Cor8_510 => "cor8_510",
            BoundFormula::Rs39 => "rs39",
        }
    }
}

impl std::str::FromStr for BoundFormula {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prop5" => Ok(BoundFormula::Prop5),
            "cor8_59" => Ok(BoundFormula::Cor8_59),
            "cor8_510" => Ok(BoundFormula::Cor8_510),
            "rs39" => Ok(BoundFormula::Rs39),
            _ => Err(Error::Parse(format!("unknown bound formula {s:?}"))),
        }
    }
}

impl std::fmt::Display for BoundFormula {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

/// `C * (sum of terms) * (size)^eps`, with every term built in logarithms.
///
/// * prop5: `(X M^6 N^6)^{1/8} + M^{1/2} N + M N^{3/4} + X^{-1/2} M N`, size `MN`
/// * cor8_59: `(X^3 H^6 M^2 N^6)^{1/8} + (X H^2 N)^{1/2} + H N + (X H^3 M)^{1/4} N + X^{-1} H M N`
/// * cor8_510: `(X^{k+l} H^{1+k+l} M^{1+k-l} N^{2+k})^{1/(2+2k)} + (X H^2 N)^{1/2} + (H M)^{1/2} N + H N + X^{-1} H M N`
/// * rs39: `M^2 + X^{-1} M^4`, size `M`
pub fn bound_eval(formula: BoundFormula, spec: &SumSpec, eps: f64, c: f64, pair: Option<&ExponentPair>) -> Result<f64> {
    if !(spec.x > 0.0) || !(c > 0.0) || !(eps >= 0.0) || spec.m == 0 || spec.n == 0 || spec.h == 0 {
        return Err(Error::Precondition("bounds need X, C > 0, eps >= 0 and positive M, N, H".into()));
    }
    let (x, m, n, h) = ((spec.x).ln(), (spec.m as f64).ln(), (spec.n as f64).ln(), (spec.h as f64).ln());
    let (terms, size): (Vec<f64>, f64) = match formula {
        BoundFormula::Prop5 => (
            vec![(x + 6.0 * m + 6.0 * n) / 8.0, m / 2.0 + n, m + 0.75 * n, -x / 2.0 + m + n],
            m + n,
        ),
        BoundFormula::Cor8_59 => (
            vec![
                (3.0 * x + 6.0 * h + 2.0 * m + 6.0 * n) / 8.0,
                (x + 2.0 * h + n) / 2.0,
                h + n,
                (x + 3.0 * h + m) / 4.0 + n,
                -x + h + m + n,
            ],
            h + m + n,
        ),
        BoundFormula::Cor8_510 => {
            let p = pair.ok_or_else(|| Error::Precondition("cor8_510 needs an exponent pair".into()))?;
            let (k, l) = (crate::rational::to_f64(&p.kappa), crate::rational::to_f64(&p.lambda));
            (
                vec![
                    ((k + l) * x + (1.0 + k + l) * h + (1.0 + k - l) * m + (2.0 + k) * n) / (2.0 + 2.0 * k),
                    (x + 2.0 * h + n) / 2.0,
                    (h + m) / 2.0 + n,
                    h + n,
                    -x + h + m + n,
                ],
                h + m + n,
            )
        }
        BoundFormula::Rs39 => (vec![2.0 * m, -x + 4.0 * m], m),
    };
    Ok(c * terms.iter().map(|t| t.exp()).sum::<f64>() * (eps * size).exp())
}

/// Outcome of [`dls_check`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DlsReport {
    pub n_m: u64,
    pub n_n: u64,
    /// `|S|^8 / (C X (MN)^4 N(M, 1/X) N(N, 1/X))` per trial
    pub ratios: Vec<f64>,
    pub worst_ratio: f64,
}

/// Default constant for [`dls_check`].
pub const DLS_DEFAULT_C: f64 = 1024.0;

/// Ratios of `|S|^8` to the double large sieve right-hand side over seeded
/// coefficient draws. Trial `t` uses seeds `seed + 2t` for `phi` and
/// `seed + 2t + 1` for `psi`.
#[allow(clippy::too_many_arguments)]
pub fn dls_check(m: u64, n: u64, x: f64, alpha: f64, beta: f64, c: f64, trials: u32, seed: u64) -> Result<DlsReport> {
    if !(x > 0.0) || !(c > 0.0) {
        return Err(Error::Precondition("double large sieve check needs X > 0 and C > 0".into()));
    }
    let n_m = quadruple_count(m, alpha, 1.0 / x)?;
    let n_n = quadruple_count(n, beta, 1.0 / x)?;
    let log_rhs = c.ln() + x.ln() + 4.0 * ((m as f64).ln() + (n as f64).ln()) + (n_m as f64).ln() + (n_n as f64).ln();
    let mut ratios = Vec::with_capacity(trials as usize);
    for t in 0..trials as u64 {
        let mut spec = SumSpec::new(x, m, n, alpha, beta);
        spec.phi = Coefficients::Random { seed: seed.wrapping_add(2 * t) };
        spec.psi = Coefficients::Random { seed: seed.wrapping_add(2 * t + 1) };
        let s = type2_sum(&spec)?.norm();
        ratios.push(if s == 0.0 { 0.0 } else { (8.0 * s.ln() - log_rhs).exp() });
    }
    let worst_ratio = ratios.iter().copied().fold(0.0, f64::max);
    Ok(DlsReport { n_m, n_n, ratios, worst_ratio })
}

fn remainder_parts(coeffs: impl Iterator<Item = (u64, Rational)>, x: u64, y: &Rational) -> Rational {
    // sum c_d (count_d - y/d) = sum c_d count_d - y sum c_d/d
    let terms: Vec<(u64, Rational)> = coeffs.filter(|(_, c)| !c.is_zero()).collect();
    let top = Rational::from_integer(BigInt::from(x)) + y;
    let (counts, recips) = terms
        .par_iter()
        .map(|(d, c)| {
            let bd = Rational::from_integer(BigInt::from(*d));
            let count = (&top / &bd).floor().to_integer() - BigInt::from(x / d);
            (c * Rational::from_integer(count), c / bd)
        })
        .reduce(
            || (Rational::zero(), Rational::zero()),
            |a, b| (a.0 + b.0, a.1 + b.1),
        );
    counts - y * recips
}

fn remainder_budget(terms: u128) -> Result<()> {
    if terms > MAX_REMAINDER_TERMS as u128 {
        return Err(Error::Resource(format!("{terms} remainder terms exceed {MAX_REMAINDER_TERMS}")));
    }
    Ok(())
}

/// Exact `sum_{m ~ M} sum_{n ~ N} psi_n r_{mn}(x, y)`; `psi[j]` belongs to `n = N + j`.
pub fn bilinear_r_sum(m: u64, n: u64, psi: &[Rational], x: u64, y: &Rational) -> Result<Rational> {
    if m == 0 || n == 0 {
        return Err(Error::Precondition("M and N must be positive".into()));
    }
    if psi.len() as u64 != n {
        return Err(Error::Precondition(format!("psi has {} entries, expected {n}", psi.len())));
    }
    if psi.iter().any(|p| p.abs() > int(1)) {
        return Err(Error::Precondition("psi values must lie in [-1, 1]".into()));
    }
    if y.is_negative() {
        return Err(Error::Precondition("y must be >= 0".into()));
    }
    remainder_budget(m as u128 * n as u128)?;
    let mut by_d = std::collections::BTreeMap::<u64, Rational>::new();
    for a in m..2 * m {
        for (j, p) in psi.iter().enumerate() {
            *by_d.entry(a * (n + j as u64)).or_insert_with(Rational::zero) += p;
        }
    }
    Ok(remainder_parts(by_d.into_iter(), x, y))
}

/// Exact `sum_{m ~ M} r_m(x, y)`.
pub fn linear_r_sum(m: u64, x: u64, y: &Rational) -> Result<Rational> {
    if m == 0 {
        return Err(Error::Precondition("M must be positive".into()));
    }
    if y.is_negative() {
        return Err(Error::Precondition("y must be >= 0".into()));
    }
    remainder_budget(m as u128)?;
    Ok(remainder_parts((m..2 * m).map(|d| (d, int(1))), x, y))
}

/// Whether `(M, N)` falls in the ranges where the type I bilinear remainder
/// sum is known to be small, at `y = x^theta`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RemainderFlags {
    pub first: Admissibility,
    pub second: Option<Admissibility>,
}

impl RemainderFlags {
    pub fn any(&self) -> bool {
        self.first.holds || self.second.as_ref().is_some_and(|a| a.holds)
    }
}

fn size_input(m: u64, n: Option<u64>, x: u64, theta: &Rational, eps_prime: &Rational, pair: Option<&ExponentPair>) -> AdmissibilityInput {
    let xf = x as f64;
    AdmissibilityInput {
        theta: Some(theta.clone()),
        epsilon_prime: Some(eps_prime.clone()),
        m: Some(m as f64),
        n: n.map(|v| v as f64),
        x: Some(xf),
        y: Some(xf.powf(crate::rational::to_f64(theta))),
        pair: pair.cloned(),
        ..Default::default()
    }
}

/// Conditions 514 and (with a pair) 515 for the bilinear sum.
pub fn bilinear_flags(m: u64, n: u64, x: u64, theta: &Rational, eps_prime: &Rational, pair: Option<&ExponentPair>) -> Result<RemainderFlags> {
    let input = size_input(m, Some(n), x, theta, eps_prime, pair);
    Ok(RemainderFlags {
        first: admissibility(Condition::C514, &input)?,
        second: pair.map(|_| admissibility(Condition::C515, &input)).transpose()?,
    })
}

/// Conditions 517 and 518 for the linear sum.
pub fn linear_flags(m: u64, x: u64, theta: &Rational, eps_prime: &Rational) -> Result<RemainderFlags> {
    let input = size_input(m, None, x, theta, eps_prime, None);
    Ok(RemainderFlags {
        first: admissibility(Condition::C517, &input)?,
        second: Some(admissibility(Condition::C518, &input)?),
    })
}

/// One benchmark line: the evaluated sum against a bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub formula: BoundFormula,
    pub x: f64,
    pub m: u64,
    pub n: u64,
    pub h: u64,
    pub alpha: f64,
    pub beta: f64,
    /// `|S|`, or the quadruplet count `N(M, 1/X)` for rs39
    pub value: f64,
    pub bound: f64,
    pub ratio: f64,
    pub seed: Option<u64>,
}

/// Evaluates the sum the formula bounds (type II for prop5, type I for the
/// cor8 bounds, `N(M, 1/X)` for rs39) and its bound.
pub fn bench_row(formula: BoundFormula, spec: &SumSpec, eps: f64, c: f64, pair: Option<&ExponentPair>, seed: Option<u64>) -> Result<BenchRow> {
    let bound = bound_eval(formula, spec, eps, c, pair)?;
    let value = match formula {
        BoundFormula::Prop5 => type2_sum(spec)?.norm(),
        BoundFormula::Cor8_59 | BoundFormula::Cor8_510 => type1_triple_sum(spec)?.norm(),
        BoundFormula::Rs39 => quadruple_count(spec.m, spec.alpha, 1.0 / spec.x)? as f64,
    };
    Ok(BenchRow {
        formula,
        x: spec.x,
        m: spec.m,
        n: spec.n,
        h: spec.h,
        alpha: spec.alpha,
        beta: spec.beta,
        value,
        bound,
        ratio: value / bound,
        seed,
    })
}

pub const BENCH_CSV_HEADER: &str = "formula,X,M,N,H,alpha,beta,|S|,bound,ratio,seed";

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(BENCH_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let seed = r.seed.map(|s| s.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{:e},{:e},{:e},{}",
            r.formula, r.x, r.m, r.n, r.h, r.alpha, r.beta, r.value, r.bound, r.ratio, seed
        );
    }
    out
}
