//! B-free numbers in short intervals.
//!
//! A set `B = {b_1 < b_2 < ...}` of pairwise coprime integers `> 1` is either
//! listed explicitly or generated from a prime set `P` by the rule
//! `B_P = P ∪ {p^2 : p not in P}`. An integer is B-free when no member
//! divides it.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use bitvec::prelude::*;
use num_bigint::BigInt;
use num_integer::{Integer, Roots};
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{factorize_u64, is_prime_u64, primes_in};
use crate::error::{Error, Result};
use crate::hecke::{Coeff, HeckeForm, DEFAULT_ZERO_TOLERANCE};
use crate::rational::{format_ratio, int, parse_ratio, Rational};

/// Members used for the main term of an [`IntervalReport`] unless the set
/// says otherwise.
pub const DEFAULT_TRUNCATION: usize = 256;

/// Positions handled by one parallel sieve task.
const CHUNK: u64 = 1 << 18;

/// How much of the set lies beyond the listed members.
#[derive(Debug, Clone, PartialEq)]
pub enum Tail {
    /// the listed members are the whole set
    Complete,
    /// unlisted members `b` satisfy `sum 1/b <= bound`
    Bounded(Rational),
    Unknown,
}

#[derive(Clone)]
pub enum PrimeSet {
    List(BTreeSet<u64>),
    Predicate(Arc<dyn Fn(u64) -> bool + Send + Sync>),
}

impl PrimeSet {
    pub fn contains(&self, p: u64) -> bool {
        match self {
            PrimeSet::List(s) => s.contains(&p),
            PrimeSet::Predicate(f) => f(p),
        }
    }
}

impl fmt::Debug for PrimeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrimeSet::List(s) => f.debug_tuple("List").field(s).finish(),
            PrimeSet::Predicate(_) => f.write_str("Predicate(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum BKind {
    Explicit { members: Vec<u64>, tail: Tail },
    Generated { primes: PrimeSet },
}

#[derive(Debug, Clone)]
pub struct BSet {
    kind: BKind,
    truncation: usize,
    tail_estimate: Option<Rational>,
}

impl BSet {
    /// Validated explicit set; members are sorted and must be pairwise
    /// coprime and `> 1`.
    pub fn explicit(members: impl IntoIterator<Item = u64>, tail: Tail) -> Result<Self> {
        let mut m: Vec<u64> = members.into_iter().collect();
        m.sort_unstable();
        let mut used = BTreeSet::new();
        for (i, &b) in m.iter().enumerate() {
            if b <= 1 {
                return Err(Error::Domain(format!("member {b} is not > 1")));
            }
            if i > 0 && m[i - 1] == b {
                return Err(Error::Domain(format!("member {b} repeated")));
            }
            for (p, _) in factorize_u64(b) {
                if !used.insert(p) {
                    return Err(Error::Domain(format!("members are not pairwise coprime (prime {p} repeats)")));
                }
            }
        }
        let tail_estimate = match &tail {
            Tail::Bounded(t) => Some(t.clone()),
            _ => None,
        };
        Ok(BSet { kind: BKind::Explicit { members: m, tail }, truncation: DEFAULT_TRUNCATION, tail_estimate })
    }

    pub fn empty() -> Self {
        BSet::explicit([], Tail::Complete).expect("empty set is valid")
    }

    /// `B_P` for a finite list of primes.
    pub fn generated(primes: impl IntoIterator<Item = u64>) -> Result<Self> {
        let set: BTreeSet<u64> = primes.into_iter().collect();
        if let Some(&q) = set.iter().find(|&&q| !is_prime_u64(q)) {
            return Err(Error::Domain(format!("{q} is not prime")));
        }
        Ok(Self::from_prime_set(PrimeSet::List(set)))
    }

    /// `B_P` for `P` given by a predicate on primes.
    pub fn generated_by(pred: impl Fn(u64) -> bool + Send + Sync + 'static) -> Self {
        Self::from_prime_set(PrimeSet::Predicate(Arc::new(pred)))
    }

    /// `P` empty: B-free means squarefree.
    pub fn squarefree() -> Self {
        Self::from_prime_set(PrimeSet::List(BTreeSet::new()))
    }

    fn from_prime_set(primes: PrimeSet) -> Self {
        BSet { kind: BKind::Generated { primes }, truncation: DEFAULT_TRUNCATION, tail_estimate: None }
    }

    pub fn with_truncation(mut self, members: usize) -> Self {
        self.truncation = members;
        self
    }

    /// Caller-supplied bound on `sum 1/b` over the primes of `P` above any
    /// density cut, for predicate-generated sets.
    pub fn with_tail_estimate(mut self, t: Rational) -> Self {
        self.tail_estimate = Some(t);
        self
    }

    pub fn kind(&self) -> &BKind {
        &self.kind
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn tail_estimate(&self) -> Option<&Rational> {
        self.tail_estimate.as_ref()
    }

    /// Members `<= t`, ascending.
    pub fn members_up_to(&self, t: u64) -> Result<Vec<u64>> {
        match &self.kind {
            BKind::Explicit { members, .. } => Ok(members.iter().copied().take_while(|&b| b <= t).collect()),
            BKind::Generated { primes } => {
                let root = t.sqrt();
                let squares = if root >= 2 { primes_in(2, root)? } else { Vec::new() };
                let mut out: Vec<u64> =
                    squares.into_iter().filter(|&p| !primes.contains(p)).map(|p| p * p).collect();
                match primes {
                    PrimeSet::List(s) => out.extend(s.range(..=t).copied()),
                    PrimeSet::Predicate(f) => {
                        if t >= 2 {
                            out.extend(primes_in(2, t)?.into_iter().filter(|&p| f(p)));
                        }
                    }
                }
                out.sort_unstable();
                Ok(out)
            }
        }
    }

    /// Trial-division membership test for `n` (independent of the sieve).
    pub fn is_free(&self, n: u64) -> bool {
        match &self.kind {
            BKind::Explicit { members, .. } => members.iter().take_while(|&&b| b <= n).all(|&b| n % b != 0),
            BKind::Generated { primes } => {
                factorize_u64(n).into_iter().all(|(p, e)| e == 1 && !primes.contains(p))
            }
        }
    }
}

/// Result of sieving `(x, x + y]`; bit `i` of `positions` is `x + 1 + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalReport {
    pub x: u64,
    pub y: u64,
    pub bfree_count: u64,
    pub positions: BitVec<u64, Lsb0>,
    pub max_gap: u64,
    /// `y * prod (1 - 1/b)` over the first `truncation` members `<= x + y`
    pub density_main_term: Rational,
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportWire {
    schema_version: u32,
    #[serde(with = "crate::rational::serde_decimal")]
    x: u64,
    #[serde(with = "crate::rational::serde_decimal")]
    y: u64,
    #[serde(with = "crate::rational::serde_decimal")]
    bfree_count: u64,
    #[serde(with = "crate::rational::serde_decimal")]
    max_gap: u64,
    density_main_term: String,
    positions: String,
}

impl IntervalReport {
    pub fn to_json(&self) -> String {
        let wire = ReportWire {
            schema_version: REPORT_SCHEMA_VERSION,
            x: self.x,
            y: self.y,
            bfree_count: self.bfree_count,
            max_gap: self.max_gap,
            density_main_term: format_ratio(&self.density_main_term),
            positions: encode_hex(&self.positions),
        };
        serde_json::to_string(&wire).expect("report serializes")
    }

    /// Parses and re-checks the count and gap against the bit vector.
    pub fn from_json(s: &str) -> Result<Self> {
        let w: ReportWire = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        if w.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::Parse(format!("unsupported schema version {}", w.schema_version)));
        }
        let positions = decode_hex(&w.positions, w.y)?;
        let report = IntervalReport {
            x: w.x,
            y: w.y,
            bfree_count: w.bfree_count,
            max_gap: w.max_gap,
            density_main_term: parse_ratio(&w.density_main_term)?,
            positions,
        };
        if report.positions.count_ones() as u64 != report.bfree_count
            || longest_zero_run(&report.positions) != report.max_gap
        {
            return Err(Error::Parse("report counts disagree with its bit vector".into()));
        }
        Ok(report)
    }

    /// B-free integers of the interval, ascending.
    pub fn bfree_numbers(&self) -> impl Iterator<Item = u64> + '_ {
        self.positions.iter_ones().map(move |i| self.x + 1 + i as u64)
    }
}

/// Lower-case hex of the bit vector packed LSB-first into bytes.
fn encode_hex(bits: &BitSlice<u64, Lsb0>) -> String {
    let mut bytes = vec![0u8; bits.len().div_ceil(8)];
    for i in bits.iter_ones() {
        bytes[i / 8] |= 1 << (i % 8);
    }
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn decode_hex(s: &str, len: u64) -> Result<BitVec<u64, Lsb0>> {
    let len = len as usize;
    if s.len() != 2 * len.div_ceil(8) {
        return Err(Error::Parse(format!("positions hold {} hex digits, expected {}", s.len(), 2 * len.div_ceil(8))));
    }
    let mut bits = bitvec![u64, Lsb0; 0; len];
    for (k, chunk) in s.as_bytes().chunks(2).enumerate() {
        let txt = std::str::from_utf8(chunk).map_err(|e| Error::Parse(e.to_string()))?;
        let byte = u8::from_str_radix(txt, 16).map_err(|_| Error::Parse(format!("bad hex {txt:?}")))?;
        for j in 0..8 {
            if byte >> j & 1 == 1 {
                let i = 8 * k + j;
                if i >= len {
                    return Err(Error::Parse("set bit beyond the interval".into()));
                }
                bits.set(i, true);
            }
        }
    }
    Ok(bits)
}

fn longest_zero_run(bits: &BitSlice<u64, Lsb0>) -> u64 {
    let (mut best, mut run) = (0u64, 0u64);
    for b in bits.iter().by_vals() {
        if b {
            run = 0;
        } else {
            run += 1;
            best = best.max(run);
        }
    }
    best
}

/// `prod (b - 1)/b` with one final reduction.
fn euler_product(members: &[u64]) -> Rational {
    fn tree(v: &[BigInt]) -> BigInt {
        match v.len() {
            0 => BigInt::one(),
            1 => v[0].clone(),
            n => tree(&v[..n / 2]) * tree(&v[n / 2..]),
        }
    }
    let num: Vec<BigInt> = members.iter().map(|&b| BigInt::from(b - 1)).collect();
    let den: Vec<BigInt> = members.iter().map(|&b| BigInt::from(b)).collect();
    Rational::new(tree(&num), tree(&den))
}

/// Marks the B-free integers of `(x, x + y]` by striking multiples of every
/// member `<= x + y`.
pub fn sieve_interval(x: u64, y: u64, b: &BSet) -> Result<IntervalReport> {
    if y == 0 {
        return Err(Error::Precondition("interval length y must be >= 1".into()));
    }
    let hi = x
        .checked_add(y)
        .ok_or_else(|| Error::Precondition("x + y overflows".into()))?;
    let members = b.members_up_to(hi)?;
    let starts: Vec<u64> = (0..y.div_ceil(CHUNK)).map(|k| x + k * CHUNK).collect();
    let pieces: Vec<BitVec<u64, Lsb0>> = starts
        .par_iter()
        .map(|&lo| {
            // chunk covers (lo, end]
            let end = (lo + CHUNK).min(hi);
            let mut bits = bitvec![u64, Lsb0; 1; (end - lo) as usize];
            for &m in &members {
                let mut k = (lo / m + 1) * m;
                while k <= end {
                    bits.set((k - lo - 1) as usize, false);
                    k += m;
                }
            }
            bits
        })
        .collect();
    let mut positions = BitVec::with_capacity(y as usize);
    for p in pieces {
        positions.extend_from_bitslice(&p);
    }
    let cut = members.len().min(b.truncation);
    Ok(IntervalReport {
        x,
        y,
        bfree_count: positions.count_ones() as u64,
        max_gap: longest_zero_run(&positions),
        density_main_term: int(y as i64) * euler_product(&members[..cut]),
        positions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityBound {
    #[serde(with = "crate::rational::serde_ratio")]
    pub lower: Rational,
    #[serde(with = "crate::rational::serde_ratio")]
    pub upper: Rational,
    /// lower bound unavailable; `lower` is 0
    pub upper_only: bool,
    pub cut: u64,
}

/// Bounds for the natural density `prod_b (1 - 1/b)` from the members up to
/// `t` and `prod (1 - a_i) >= 1 - sum a_i` on the rest.
pub fn density(b: &BSet, t: u64) -> Result<DensityBound> {
    let members = b.members_up_to(t)?;
    let upper = euler_product(&members);
    let tail: Option<Rational> = match b.kind() {
        BKind::Explicit { members: all, tail } => {
            let listed: Rational = all
                .iter()
                .filter(|&&m| m > t)
                .fold(Rational::zero(), |acc, &m| acc + Rational::new(BigInt::one(), BigInt::from(m)));
            match tail {
                Tail::Complete => Some(listed),
                Tail::Bounded(extra) => Some(listed + extra),
                Tail::Unknown => None,
            }
        }
        BKind::Generated { primes } => {
            // unlisted squares p^2 > t have p >= floor(sqrt t) + 1, and
            // sum_{n > r} 1/n^2 < 1/r
            let r = t.sqrt();
            let squares = if r == 0 { None } else { Some(Rational::new(BigInt::one(), BigInt::from(r))) };
            let prime_tail = match primes {
                PrimeSet::List(s) => Some(
                    s.range(t + 1..)
                        .fold(Rational::zero(), |acc, &p| acc + Rational::new(BigInt::one(), BigInt::from(p))),
                ),
                PrimeSet::Predicate(_) => b.tail_estimate().cloned(),
            };
            match (squares, prime_tail) {
                (Some(a), Some(c)) => Some(a + c),
                _ => None,
            }
        }
    };
    Ok(match tail {
        Some(s) => {
            let factor = int(1) - s;
            let lower = if factor > Rational::zero() { &upper * factor } else { Rational::zero() };
            DensityBound { lower, upper, upper_only: false, cut: t }
        }
        None => DensityBound { lower: Rational::zero(), upper, upper_only: true, cut: t },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GapScan {
    /// longest run of consecutive `n` in `[lo, hi]` with the predicate false
    pub max_gap: u64,
    /// `n` with the run occupying `n + 1 ..= n + max_gap` (first longest
    /// run; `lo` when there is no run, `lo - 1` when a run starts at `lo`)
    pub position: u64,
}

pub fn gap_scan(pred: impl Fn(u64) -> bool, lo: u64, hi: u64) -> Result<GapScan> {
    if lo > hi {
        return Err(Error::Precondition(format!("gap scan needs lo <= hi, got [{lo}, {hi}]")));
    }
    let mut best = GapScan { max_gap: 0, position: lo };
    let mut run = 0u64;
    for n in lo..=hi {
        if pred(n) {
            run = 0;
        } else {
            run += 1;
            if run > best.max_gap {
                best = GapScan { max_gap: run, position: (n + 1 - run).saturating_sub(1) };
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SquareSupportCount {
    /// `n` in `(x, x + y]` whose `p`-adic valuations are even for all `p` in `P`
    pub exact: u64,
    /// `sum_{d | P^inf, d <= x + y} lambda(d) (floor((x+y)/d) - floor(x/d))`
    pub liouville: i64,
    #[serde(with = "crate::rational::serde_ratio")]
    pub main_term: Rational,
}

/// Counts `n` in `(x, x + y]` with `(n, P^inf)` a square.
pub fn support_count_cor7(primes: &[u64], x: u64, y: u64) -> Result<SquareSupportCount> {
    if primes.is_empty() {
        return Err(Error::Precondition("P must be nonempty".into()));
    }
    let set: BTreeSet<u64> = primes.iter().copied().collect();
    if set.len() != primes.len() {
        return Err(Error::Precondition("P has repeated primes".into()));
    }
    if let Some(&q) = set.iter().find(|&&q| !is_prime_u64(q)) {
        return Err(Error::Precondition(format!("{q} is not prime")));
    }
    let hi = x + y;
    let exact = (x + 1..=hi)
        .filter(|&n| {
            set.iter().all(|&p| {
                let mut m = n;
                let mut e = 0u32;
                while m % p == 0 {
                    m /= p;
                    e += 1;
                }
                e % 2 == 0
            })
        })
        .count() as u64;

    fn walk(ps: &[u64], d: u64, sign: i64, hi: u64, x: u64, acc: &mut i64) {
        *acc += sign * ((hi / d) as i64 - (x / d) as i64);
        for (i, &p) in ps.iter().enumerate() {
            if let Some(nd) = d.checked_mul(p).filter(|&v| v <= hi) {
                // extending by p keeps d | P^inf with primes non-decreasing
                walk(&ps[i..], nd, -sign, hi, x, acc);
            }
        }
    }
    let ps: Vec<u64> = set.iter().copied().collect();
    let mut liouville = 0i64;
    walk(&ps, 1, 1, hi, x, &mut liouville);

    let main_term = set
        .iter()
        .fold(int(y as i64), |acc, &p| acc * Rational::new(BigInt::from(p), BigInt::from(p + 1)));
    Ok(SquareSupportCount { exact, liouville, main_term })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SieveMode {
    /// square rule with `P = {p : p | N or lambda(p) = 0}`
    Thm1,
    /// detected vanishing prime powers at every prime
    Thm2,
}

impl std::str::FromStr for SieveMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "thm1" => Ok(SieveMode::Thm1),
            "thm2" => Ok(SieveMode::Thm2),
            _ => Err(Error::Parse(format!("unknown sieve mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonvanishingReport {
    pub x: u64,
    pub y: u64,
    pub mode: SieveMode,
    /// `n` in the interval with `lambda(n) != 0`, evaluated directly
    pub direct_count: u64,
    /// `n` predicted nonvanishing from the local vanishing data
    pub sieve_count: u64,
    /// `n` free of the B-set built for `mode`; never exceeds `direct_count`
    pub bfree_count: u64,
    /// prediction equals direct evaluation on every `n` coprime to the level
    /// whose prime factors are `<= scan_bound`
    pub agreement: bool,
    /// first disagreements on the checked part, at most 16
    pub mismatches: Vec<u64>,
    /// some prime of the interval exceeds `scan_bound`
    pub partial: bool,
    pub scan_bound: u64,
    pub nu_max: u32,
}

/// Local rule at one prime: which exponents `e >= 1` make `lambda(p^e)` vanish.
enum LocalRule {
    Never,
    Odd,
    AllPositive,
    Listed(Vec<u32>),
}

impl LocalRule {
    fn vanishes(&self, e: u32) -> bool {
        match self {
            LocalRule::Never => false,
            LocalRule::Odd => e % 2 == 1,
            LocalRule::AllPositive => e >= 1,
            LocalRule::Listed(v) => v.binary_search(&e).is_ok(),
        }
    }

    /// smallest vanishing exponent, the member `p^e` of the B-set
    fn first(&self) -> Option<u32> {
        match self {
            LocalRule::Never => None,
            LocalRule::Odd | LocalRule::AllPositive => Some(1),
            LocalRule::Listed(v) => v.first().copied(),
        }
    }
}

fn coeff_is_zero(c: &Coeff, tol: f64) -> bool {
    match c {
        Coeff::Exact(v) => v.is_zero(),
        Coeff::Approx(z) => z.norm() < tol,
    }
}

/// Compares direct evaluation of `lambda(n)` on `(x, x + y]` with the
/// prediction from local vanishing data at primes `<= scan_bound`.
pub fn hecke_nonvanishing_interval(
    form: &HeckeForm,
    x: u64,
    y: u64,
    mode: SieveMode,
    scan_bound: u64,
    nu_max: u32,
) -> Result<NonvanishingReport> {
    if y == 0 {
        return Err(Error::Precondition("interval length y must be >= 1".into()));
    }
    if nu_max == 0 {
        return Err(Error::Precondition("nu_max must be >= 1".into()));
    }
    let hi = x + y;
    let unit = form.clone().with_normalization(crate::hecke::Normalization::Unit);
    let tol = DEFAULT_ZERO_TOLERANCE;
    let top = scan_bound.min(hi);
    let primes = if top >= 2 { primes_in(2, top)? } else { Vec::new() };
    let mut rules = std::collections::HashMap::with_capacity(primes.len());
    for &p in &primes {
        let mut e_top = 1u32;
        let mut q = p;
        while q <= hi / p {
            q *= p;
            e_top += 1;
        }
        let rule = match mode {
            SieveMode::Thm1 => {
                let lp_zero = coeff_is_zero(&unit.coeff_prime_power(p, 1)?, tol);
                match (form.is_bad_prime(p), lp_zero) {
                    (true, true) => LocalRule::AllPositive,
                    (false, true) => LocalRule::Odd,
                    _ => LocalRule::Never,
                }
            }
            SieveMode::Thm2 => {
                let rep = form.vanishing_scan(p, nu_max.min(e_top))?;
                if rep.all_nonzero {
                    LocalRule::Never
                } else {
                    LocalRule::Listed(rep.vanishing_orders)
                }
            }
        };
        rules.insert(p, rule);
    }
    let members: Vec<u64> = match mode {
        SieveMode::Thm1 => {
            let p_set: Vec<u64> = primes.iter().copied().filter(|p| !matches!(rules[p], LocalRule::Never)).collect();
            let bset = BSet::generated(p_set)?;
            bset.members_up_to(hi)?
        }
        SieveMode::Thm2 => {
            let mut v: Vec<u64> = primes
                .iter()
                .filter_map(|p| rules[p].first().and_then(|e| p.checked_pow(e)))
                .filter(|&m| m <= hi)
                .collect();
            v.sort_unstable();
            v
        }
    };
    let level = form.level();
    let mut out = NonvanishingReport {
        x,
        y,
        mode,
        direct_count: 0,
        sieve_count: 0,
        bfree_count: 0,
        agreement: true,
        mismatches: Vec::new(),
        partial: scan_bound < hi,
        scan_bound,
        nu_max,
    };
    for n in x + 1..=hi {
        if n == 0 {
            continue;
        }
        let fac = factorize_u64(n);
        let direct = !coeff_is_zero(&unit.coeff(n)?, tol);
        let predicted = fac
            .iter()
            .all(|(p, e)| rules.get(p).map_or(true, |r| !r.vanishes(*e)));
        let free = members.iter().take_while(|&&m| m <= n).all(|&m| n % m != 0);
        out.direct_count += u64::from(direct);
        out.sieve_count += u64::from(predicted);
        out.bfree_count += u64::from(free);
        let checked = n.gcd(&level) == 1 && fac.iter().all(|(p, _)| *p <= scan_bound);
        if checked && direct != predicted {
            out.agreement = false;
            if out.mismatches.len() < 16 {
                out.mismatches.push(n);
            }
        }
    }
    Ok(out)
}
