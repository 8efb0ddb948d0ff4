//! Exact exponent calculus for B-free numbers in short intervals.
//!
//! Every `theta(rho)` here is an exact rational; the `+ epsilon` of the
//! underlying statements is implicit and never folded into the value.

use std::collections::{HashSet, VecDeque};
use std::fmt;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{format_ratio, int, rat, serde_ratio, to_f64, Rational};

/// Exponent pair `(kappa, lambda)` with `0 <= kappa <= 1/2 <= lambda <= 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExponentPair {
    #[serde(with = "serde_ratio")]
    pub kappa: Rational,
    #[serde(with = "serde_ratio")]
    pub lambda: Rational,
}

impl ExponentPair {
    pub fn new(kappa: Rational, lambda: Rational) -> Result<Self> {
        let half = rat(1, 2);
        if kappa.is_negative() || kappa > half || lambda < half || lambda > int(1) {
            return Err(Error::Domain(format!(
                "({}, {}) violates 0 <= kappa <= 1/2 <= lambda <= 1",
                format_ratio(&kappa),
                format_ratio(&lambda)
            )));
        }
        Ok(ExponentPair { kappa, lambda })
    }

    /// The trivial pair `(0, 1)`.
    pub fn trivial() -> Self {
        ExponentPair { kappa: int(0), lambda: int(1) }
    }

    /// `(4/18, 11/18)`, the pair behind the middle pieces of the optimum.
    pub fn literature() -> Self {
        ExponentPair { kappa: rat(4, 18), lambda: rat(11, 18) }
    }

    /// `A(k, l) = (k / (2k + 2), (k + l + 1) / (2k + 2))`
    pub fn a(&self) -> Self {
        let d = &self.kappa * int(2) + int(2);
        ExponentPair { kappa: &self.kappa / &d, lambda: (&self.kappa + &self.lambda + int(1)) / d }
    }

    /// `B(k, l) = (l - 1/2, k + 1/2)`
    pub fn b(&self) -> Self {
        ExponentPair { kappa: &self.lambda - rat(1, 2), lambda: &self.kappa + rat(1, 2) }
    }
}

impl fmt::Display for ExponentPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", format_ratio(&self.kappa), format_ratio(&self.lambda))
    }
}

/// Applies the letters of `word` left to right.
pub fn ab_process(pair: &ExponentPair, word: &str) -> Result<ExponentPair> {
    let mut p = pair.clone();
    for ch in word.chars() {
        p = match ch {
            'A' | 'a' => p.a(),
            'B' | 'b' => p.b(),
            _ => return Err(Error::Parse(format!("letter {ch:?} is not A or B"))),
        };
    }
    ExponentPair::new(p.kappa.clone(), p.lambda.clone())
        .map_err(|e| Error::Internal(format!("A/B process left the pair domain: {e}")))
}

fn check_rho(rho: &Rational) -> Result<()> {
    if rho.is_negative() || *rho > int(1) {
        return Err(Error::Domain(format!("rho = {} outside [0, 1]", format_ratio(rho))));
    }
    Ok(())
}

fn max(a: Rational, b: Rational) -> Rational {
    if a >= b {
        a
    } else {
        b
    }
}

/// Piecewise optimum over the whole range of `rho`.
pub fn theta_cor10(rho: &Rational) -> Result<Rational> {
    check_rho(rho)?;
    let r = rho;
    Ok(if *r <= rat(1, 3) {
        rat(1, 4)
    } else if *r <= rat(9, 17) {
        r * int(10) / (r * int(19) + int(7))
    } else if *r <= rat(15, 28) {
        r * int(3) / (r * int(4) + int(3))
    } else if *r <= rat(5, 8) {
        rat(5, 16)
    } else if *r <= rat(9, 10) {
        r * int(22) / (r * int(24) + int(29))
    } else {
        r * int(7) / (r * int(9) + int(8))
    })
}

/// `rho / (1 + rho)`
pub fn theta_thm2(rho: &Rational) -> Result<Rational> {
    check_rho(rho)?;
    Ok(rho / (rho + int(1)))
}

/// Same formula as [`theta_thm2`], for the prime-only sieve.
pub fn theta_prop9(rho: &Rational) -> Result<Rational> {
    theta_thm2(rho)
}

/// `max(1/3, 7 rho / (9 rho + 8))`
pub fn theta_prop7_68(rho: &Rational) -> Result<Rational> {
    check_rho(rho)?;
    Ok(max(rat(1, 3), rho * int(7) / (rho * int(9) + int(8))))
}

/// `max((k + l) / (1 + 2k + 2l), (1 + k + 2l) rho / ((1 + 2k + 2l) rho + 2 + 2l))`
pub fn theta_prop7_69(rho: &Rational, pair: &ExponentPair) -> Result<Rational> {
    check_rho(rho)?;
    let (k, l) = (&pair.kappa, &pair.lambda);
    let s = k + l;
    let d = int(1) + k * int(2) + l * int(2);
    let first = &s / &d;
    let second = (int(1) + k + l * int(2)) * rho / (&d * rho + int(2) + l * int(2));
    Ok(max(first, second))
}

/// Either branch of the two-factor result.
pub fn theta_prop7(rho: &Rational, pair: Option<&ExponentPair>) -> Result<Rational> {
    match pair {
        None => theta_prop7_68(rho),
        Some(p) => theta_prop7_69(rho, p),
    }
}

/// One-factor result: `max(1/4, 10 rho / (19 rho + 7))` below `9/17`,
/// `3 rho / (4 rho + 3)` from there on.
pub fn theta_prop8(rho: &Rational) -> Result<Rational> {
    check_rho(rho)?;
    Ok(if *rho < rat(9, 17) {
        max(rat(1, 4), rho * int(10) / (rho * int(19) + int(7)))
    } else {
        rho * int(3) / (rho * int(4) + int(3))
    })
}

/// Earlier exponent for `rho >= 1/2`, exactly as printed: `1/3` at `1/2` and
/// `max(7/19, 23 rho / (35 rho + 16))` above.
pub fn alkan_theta(rho: &Rational) -> Result<Rational> {
    check_rho(rho)?;
    if *rho < rat(1, 2) {
        return Err(Error::Domain(format!(
            "comparison exponent needs rho >= 1/2, got {}",
            format_ratio(rho)
        )));
    }
    if *rho == rat(1, 2) {
        return Ok(rat(1, 3));
    }
    Ok(max(rat(7, 19), rho * int(23) / (rho * int(35) + int(16))))
}

/// Identifier of a theta formula; serialized as the short ids used in tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ThetaFormula {
    #[serde(rename = "thm1_cor10")]
    Thm1Cor10,
    #[serde(rename = "thm2")]
    Thm2,
    #[serde(rename = "prop7_68")]
    Prop7_68,
    #[serde(rename = "prop7_69")]
    Prop7_69,
    #[serde(rename = "prop8_610")]
    Prop8_610,
    #[serde(rename = "alkan_63")]
    Alkan63,
}

impl ThetaFormula {
    pub fn id(&self) -> &'static str {
        match self {
            ThetaFormula::Thm1Cor10 => "thm1_cor10",
            ThetaFormula::Thm2 => "thm2",
            ThetaFormula::Prop7_68 => "prop7_68",
            ThetaFormula::Prop7_69 => "prop7_69",
            ThetaFormula::Prop8_610 => "prop8_610",
            ThetaFormula::Alkan63 => "alkan_63",
        }
    }
}

impl fmt::Display for ThetaFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// Largest depth accepted by [`optimize_theta`].
pub const MAX_HULL_DEPTH: u32 = 12;

/// All pairs reachable from `seeds` by words of length at most `depth`, in
/// breadth-first order without repeats.
pub fn ab_hull(seeds: &[ExponentPair], depth: u32) -> Vec<ExponentPair> {
    let mut seen: HashSet<ExponentPair> = HashSet::new();
    let mut order = Vec::new();
    let mut queue: VecDeque<(ExponentPair, u32)> = VecDeque::new();
    for s in seeds {
        if seen.insert(s.clone()) {
            order.push(s.clone());
            queue.push_back((s.clone(), 0));
        }
    }
    while let Some((p, d)) = queue.pop_front() {
        if d == depth {
            continue;
        }
        for q in [p.a(), p.b()] {
            if seen.insert(q.clone()) {
                order.push(q.clone());
                queue.push_back((q, d + 1));
            }
        }
    }
    order
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizedTheta {
    #[serde(with = "serde_ratio")]
    pub theta: Rational,
    pub formula: ThetaFormula,
    pub pair: Option<ExponentPair>,
}

/// Minimum of the one-factor bound, the two-factor bound without a pair,
/// and the two-factor bound over the A/B hull of `seeds`. Ties keep the
/// earlier candidate in that order.
pub fn optimize_theta(rho: &Rational, seeds: &[ExponentPair], depth: u32) -> Result<OptimizedTheta> {
    check_rho(rho)?;
    if depth > MAX_HULL_DEPTH {
        return Err(Error::Precondition(format!("hull depth {depth} > {MAX_HULL_DEPTH}")));
    }
    let mut best = OptimizedTheta { theta: theta_prop8(rho)?, formula: ThetaFormula::Prop8_610, pair: None };
    let t68 = theta_prop7_68(rho)?;
    if t68 < best.theta {
        best = OptimizedTheta { theta: t68, formula: ThetaFormula::Prop7_68, pair: None };
    }
    for q in ab_hull(seeds, depth) {
        let t = theta_prop7_69(rho, &q)?;
        if t < best.theta {
            best = OptimizedTheta { theta: t, formula: ThetaFormula::Prop7_69, pair: Some(q) };
        }
    }
    Ok(best)
}

/// Linear constraint families whose binding equality determines theta.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintVariant {
    /// `delta_2 <= (9 theta - 3)/4` against `delta_2 = 1 - 2 theta / rho`
    #[serde(rename = "718")]
    V718,
    /// pair version of the above
    #[serde(rename = "719")]
    V719,
    /// `delta <= (19 theta - 3)/7` against `delta + theta / rho = 1`
    #[serde(rename = "811a")]
    V811a,
    /// `delta <= 4 theta / 3` against `delta + theta / rho = 1`
    #[serde(rename = "811b")]
    V811b,
}

impl std::str::FromStr for ConstraintVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "718" => Ok(ConstraintVariant::V718),
            "719" => Ok(ConstraintVariant::V719),
            "811a" => Ok(ConstraintVariant::V811a),
            "811b" => Ok(ConstraintVariant::V811b),
            _ => Err(Error::Parse(format!("unknown constraint variant {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSolution {
    pub theta: Rational,
    /// `rho = 0` made the equality degenerate; `theta` is the limit value.
    pub degenerate: bool,
}

/// Solves `a theta + b = 1 - c theta / rho` for theta, where the upper bound
/// on the sieve dimension is `a theta + b` and the lower bound forced by the
/// weight support is `1 - c theta / rho`.
pub fn minimal_theta_from_constraints(
    rho: &Rational,
    variant: ConstraintVariant,
    pair: Option<&ExponentPair>,
) -> Result<ConstraintSolution> {
    check_rho(rho)?;
    let (a, b, c) = match variant {
        ConstraintVariant::V718 => (rat(9, 4), rat(-3, 4), int(2)),
        ConstraintVariant::V719 => {
            let p = pair.ok_or_else(|| Error::Precondition("variant 719 needs an exponent pair".into()))?;
            let (k, l) = (&p.kappa, &p.lambda);
            let d = l + int(1);
            ((int(1) + k * int(2) + l * int(2)) / &d, -(k + l) / &d, int(2))
        }
        ConstraintVariant::V811a => (rat(19, 7), rat(-3, 7), int(1)),
        ConstraintVariant::V811b => (rat(4, 3), int(0), int(1)),
    };
    if rho.is_zero() {
        return Ok(ConstraintSolution { theta: int(0), degenerate: true });
    }
    // theta (a rho + c) = (1 - b) rho
    let theta = (int(1) - b) * rho / (a * rho + c);
    Ok(ConstraintSolution { theta, degenerate: false })
}

/// Conditions checked by [`admissibility`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    #[serde(rename = "514")]
    C514,
    #[serde(rename = "515")]
    C515,
    #[serde(rename = "517")]
    C517,
    #[serde(rename = "518")]
    C518,
    #[serde(rename = "66_67")]
    C66_67,
    #[serde(rename = "718")]
    C718,
    #[serde(rename = "719")]
    C719,
    #[serde(rename = "811")]
    C811,
    /// two-factor parameter system
    #[serde(rename = "71")]
    C71,
    /// one-factor parameter system
    #[serde(rename = "81")]
    C81,
}

impl std::str::FromStr for Condition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "514" => Condition::C514,
            "515" => Condition::C515,
            "517" => Condition::C517,
            "518" => Condition::C518,
            "66_67" => Condition::C66_67,
            "718" => Condition::C718,
            "719" => Condition::C719,
            "811" => Condition::C811,
            "71" => Condition::C71,
            "81" => Condition::C81,
            _ => return Err(Error::Parse(format!("unknown condition {s:?}"))),
        })
    }
}

/// Inputs of an admissibility check. Fields a condition does not mention
/// may be left unset; a missing field that is needed is a precondition error.
#[derive(Debug, Clone, Default)]
pub struct AdmissibilityInput {
    pub theta: Option<Rational>,
    pub rho: Option<Rational>,
    pub epsilon: Option<Rational>,
    /// `epsilon'` in the size conditions; zero when unset
    pub epsilon_prime: Option<Rational>,
    pub m: Option<f64>,
    pub n: Option<f64>,
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub delta1: Option<Rational>,
    pub delta2: Option<Rational>,
    pub delta: Option<Rational>,
    pub pair: Option<ExponentPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Clause {
    pub text: String,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Admissibility {
    pub holds: bool,
    pub clauses: Vec<Clause>,
    pub first_failure: Option<String>,
}

fn need<'a, T>(v: &'a Option<T>, name: &str) -> Result<&'a T> {
    v.as_ref()
        .ok_or_else(|| Error::Precondition(format!("condition needs {name}")))
}

/// `lhs <= y^a x^b`, compared in logarithms.
fn size_le(lhs: f64, y: f64, a: &Rational, x: f64, b: &Rational) -> bool {
    lhs.ln() <= to_f64(a) * y.ln() + to_f64(b) * x.ln() + 1e-12 * (1.0 + lhs.ln().abs())
}

/// Evaluates every clause of `cond`.
pub fn admissibility(cond: Condition, input: &AdmissibilityInput) -> Result<Admissibility> {
    let mut clauses: Vec<Clause> = Vec::new();
    let mut push = |text: String, holds: bool| clauses.push(Clause { text, holds });
    let ep = input.epsilon_prime.clone().unwrap_or_else(Rational::zero);
    let theta = || need(&input.theta, "theta");
    let window = |lo: Rational, lo_strict: bool, hi: Rational, hi_strict: bool, t: &Rational| {
        let lo_ok = if lo_strict { *t > lo } else { *t >= lo };
        let hi_ok = if hi_strict { *t < hi } else { *t <= hi };
        let text = format!(
            "{} {} theta {} {}",
            format_ratio(&lo),
            if lo_strict { "<" } else { "<=" },
            if hi_strict { "<" } else { "<=" },
            format_ratio(&hi)
        );
        (text, lo_ok && hi_ok)
    };
    let pair_window = |p: &ExponentPair, t: &Rational| {
        let s = &p.kappa + &p.lambda;
        let lo = &s / (int(1) + &p.kappa * int(2) + &p.lambda * int(2));
        let hi = &s / (&p.kappa * int(2) + &p.lambda);
        window(lo, true, hi, false, t)
    };
    match cond {
        Condition::C514 | Condition::C515 => {
            let t = theta()?;
            let (x, y) = (*need(&input.x, "x")?, *need(&input.y, "y")?);
            let (m, n) = (*need(&input.m, "M")?, *need(&input.n, "N")?);
            let (wt, wok, a, b) = if cond == Condition::C514 {
                let (wt, wok) = window(rat(1, 3), true, rat(5, 11), false, t);
                (wt, wok, rat(9, 4), rat(-3, 4) - &ep)
            } else {
                let p = need(&input.pair, "an exponent pair")?;
                let (wt, wok) = pair_window(p, t);
                let d = &p.lambda + int(1);
                let a = (int(1) + &p.kappa * int(2) + &p.lambda * int(2)) / &d;
                let b = -(&p.kappa + &p.lambda) / &d - &ep;
                (wt, wok, a, b)
            };
            push(wt, wok);
            push(
                format!("N <= y^{} x^{}", format_ratio(&a), format_ratio(&b)),
                size_le(n, y, &a, x, &b),
            );
            let one_minus = int(1) - &ep;
            push(format!("MN <= x^{}", format_ratio(&one_minus)), size_le(m * n, y, &int(0), x, &one_minus));
        }
        Condition::C517 | Condition::C518 => {
            let t = theta()?;
            let (x, y) = (*need(&input.x, "x")?, *need(&input.y, "y")?);
            let m = *need(&input.m, "M")?;
            let (wt, wok, a, b) = if cond == Condition::C517 {
                let (wt, wok) = window(rat(1, 4), true, rat(9, 29), false, t);
                (wt, wok, rat(19, 7), rat(-3, 7) - &ep)
            } else {
                let (wt, wok) = window(rat(9, 29), true, rat(1, 2), false, t);
                (wt, wok, rat(4, 3), -ep.clone())
            };
            push(wt, wok);
            push(format!("M <= y^{} x^{}", format_ratio(&a), format_ratio(&b)), size_le(m, y, &a, x, &b));
        }
        Condition::C66_67 => {
            let t = theta()?;
            let (x, y) = (*need(&input.x, "x")?, *need(&input.y, "y")?);
            let (m, n) = (*need(&input.m, "M")?, *need(&input.n, "N")?);
            let (wt, wok) = window(rat(7, 19), true, rat(11, 23), false, t);
            push(wt, wok);
            let b = -ep.clone();
            push(format!("M <= y x^{}", format_ratio(&b)), size_le(m, y, &int(1), x, &b));
            let b = rat(-7, 16) - &ep;
            push(
                format!("N <= y^19/16 x^{}", format_ratio(&b)),
                size_le(n, y, &rat(19, 16), x, &b),
            );
        }
        Condition::C718 | Condition::C719 => {
            let t = theta()?;
            let d1 = need(&input.delta1, "delta1")?;
            let d2 = need(&input.delta2, "delta2")?;
            let (wt, wok, bound) = if cond == Condition::C718 {
                let (wt, wok) = window(rat(1, 3), true, rat(5, 11), false, t);
                (wt, wok, (t * int(9) - int(3)) / int(4) - &ep)
            } else {
                let p = need(&input.pair, "an exponent pair")?;
                let (wt, wok) = pair_window(p, t);
                let num = (int(1) + &p.kappa * int(2) + &p.lambda * int(2)) * t - &p.kappa - &p.lambda;
                (wt, wok, num / (&p.lambda + int(1)) - &ep)
            };
            push(wt, wok);
            push(format!("delta2 <= {}", format_ratio(&bound)), *d2 <= bound);
            let cap = int(1) - &ep;
            push(format!("delta1 + delta2 <= {}", format_ratio(&cap)), d1 + d2 <= cap);
        }
        Condition::C811 => {
            let t = theta()?;
            let d = need(&input.delta, "delta")?;
            let low = *t > rat(1, 4) && *t < rat(9, 29) && *d <= (t * int(19) - int(3)) / int(7) - &ep;
            let high = *t > rat(9, 29) && *t < rat(1, 2) && *d <= t * int(4) / int(3) - &ep;
            push("1/4 < theta < 9/29 and delta <= (19 theta - 3)/7 - eps'".into(), low);
            push("9/29 < theta < 1/2 and delta <= 4 theta/3 - eps'".into(), high);
            // either branch suffices; record one combined clause for the verdict
            let text = if low || high { "one branch holds" } else { "neither branch holds" };
            clauses.retain(|_| true);
            return Ok(finish_any(clauses, text.to_string(), low || high));
        }
        Condition::C71 => {
            let t = theta()?;
            let rho = need(&input.rho, "rho")?;
            let e = need(&input.epsilon, "epsilon")?;
            let d1 = need(&input.delta1, "delta1")?;
            let d2 = need(&input.delta2, "delta2")?;
            let tr = theta_over_rho(t, rho);
            push("1/4 + eps <= theta".into(), *t >= rat(1, 4) + e);
            push("theta < 1/2".into(), *t < rat(1, 2));
            push("eps < delta2 + 2 eps".into(), *e < d2 + e * int(2));
            push("delta2 + 2 eps < delta1 + eps".into(), d2 + e * int(2) < d1 + e);
            push("delta1 + eps < theta/rho".into(), lt_opt(&(d1 + e), &tr));
            push("delta1 + delta2 < 1".into(), d1 + d2 < int(1));
            push("delta1 + delta2 + theta/rho > 1".into(), gt_opt_sum(&(d1 + d2), &tr, &int(1)));
        }
        Condition::C81 => {
            let t = theta()?;
            let rho = need(&input.rho, "rho")?;
            let e = need(&input.epsilon, "epsilon")?;
            let d = need(&input.delta, "delta")?;
            let tr = theta_over_rho(t, rho);
            let cap = match &tr {
                Some(v) if *v < int(1) => v.clone(),
                _ => int(1),
            };
            push("1/4 + eps <= theta".into(), *t >= rat(1, 4) + e);
            push("theta < 1/2".into(), *t < rat(1, 2));
            push("theta < delta + 2 eps".into(), *t < d + e * int(2));
            push("delta + 2 eps < min(theta/rho, 1)".into(), d + e * int(2) < cap);
            push("delta + theta/rho > 1".into(), gt_opt_sum(d, &tr, &int(1)));
        }
    }
    let first_failure = clauses.iter().find(|c| !c.holds).map(|c| c.text.clone());
    Ok(Admissibility { holds: first_failure.is_none(), clauses, first_failure })
}

fn finish_any(clauses: Vec<Clause>, summary: String, holds: bool) -> Admissibility {
    Admissibility { holds, clauses, first_failure: if holds { None } else { Some(summary) } }
}

/// `theta / rho`, with `None` standing for `+infinity` at `rho = 0`.
fn theta_over_rho(theta: &Rational, rho: &Rational) -> Option<Rational> {
    if rho.is_zero() {
        None
    } else {
        Some(theta / rho)
    }
}

fn lt_opt(a: &Rational, b: &Option<Rational>) -> bool {
    b.as_ref().map_or(true, |b| a < b)
}

fn gt_opt_sum(a: &Rational, b: &Option<Rational>, c: &Rational) -> bool {
    b.as_ref().map_or(true, |b| a + b > *c)
}

/// Earlier admissible exponents for general B-free sets, ending with 7/17.
pub fn historical_table() -> Vec<(Rational, &'static str)> {
    vec![
        (rat(1, 2), "Szemeredi"),
        (rat(9, 20), "Bantle & Grupp"),
        (rat(5, 12), "Wu"),
        (rat(17, 41), "Wu"),
        (rat(33, 80), "Wu; Zhai"),
        (rat(40, 97), "Sargos & Wu"),
        (rat(7, 17), "type I bilinear weights"),
    ]
}

/// Density hypothesis `|P cap [1, x]| << x^rho (log log x)^Psi / (log x)^Theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoHypothesis {
    #[serde(with = "serde_ratio")]
    pub rho: Rational,
    pub theta_rho: f64,
    pub psi_rho: f64,
    pub label: String,
}

impl RhoHypothesis {
    pub fn new(rho: Rational, theta_rho: f64, psi_rho: f64, label: impl Into<String>) -> Result<Self> {
        check_rho(&rho)?;
        if rho.is_one() && theta_rho <= 1.0 {
            return Err(Error::Domain("rho = 1 requires Theta > 1".into()));
        }
        Ok(RhoHypothesis { rho, theta_rho, psi_rho, label: label.into() })
    }

    /// Unconditional Chebotarev-type bound, with `delta = 1/4`.
    pub fn serre() -> Self {
        Self::new(int(1), 1.25, 0.0, "Serre (unconditional)").expect("valid preset")
    }

    pub fn serre_grh() -> Self {
        Self::new(rat(3, 4), 0.0, 0.0, "Serre (GRH)").expect("valid preset")
    }

    pub fn elkies() -> Self {
        Self::new(rat(3, 4), 0.0, 0.0, "Elkies (elliptic curves)").expect("valid preset")
    }

    pub fn lang_trotter() -> Self {
        Self::new(rat(1, 2), 1.0, 0.0, "Lang-Trotter").expect("valid preset")
    }

    /// Generalized Lang-Trotter triple by weight and degree of the stable
    /// trace field.
    pub fn murty(weight: u32, trace_field_degree: u32) -> Self {
        match (weight, trace_field_degree) {
            (2, 2) => Self::new(rat(1, 2), 1.0, 0.0, "Murty (k=2, degree 2)"),
            (2, 3) | (3, 2) => Self::new(int(0), 0.0, 1.0, "Murty (degree-3 or weight-3 case)"),
            _ => Self::new(int(0), 0.0, 0.0, "Murty (generic)"),
        }
        .expect("valid preset")
    }

    /// Conjectured vanishing density for every prime power, by weight.
    pub fn conjecture1(weight: u32) -> Self {
        match weight {
            0..=2 => Self::new(rat(1, 2), 1.0, 0.0, "conjectural (k=2)"),
            3 => Self::new(int(0), 0.0, 1.0, "conjectural (k=3)"),
            _ => Self::new(int(0), 0.0, 0.0, "conjectural (k>=4)"),
        }
        .expect("valid preset")
    }

    pub fn presets() -> Vec<RhoHypothesis> {
        vec![
            Self::serre(),
            Self::serre_grh(),
            Self::elkies(),
            Self::lang_trotter(),
            Self::murty(2, 2),
            Self::murty(2, 3),
            Self::murty(4, 1),
            Self::conjecture1(2),
            Self::conjecture1(3),
            Self::conjecture1(4),
        ]
    }
}

/// All formulas at one `rho`, with the smallest of the competing ones.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaProfile {
    #[serde(with = "serde_ratio")]
    pub rho: Rational,
    #[serde(with = "serde_ratio")]
    pub thm1_cor10: Rational,
    #[serde(with = "serde_ratio")]
    pub thm2: Rational,
    #[serde(with = "serde_ratio")]
    pub prop7_68: Rational,
    #[serde(with = "serde_ratio")]
    pub prop7_69: Rational,
    pub prop7_69_pair: ExponentPair,
    #[serde(with = "serde_ratio")]
    pub prop8_610: Rational,
    #[serde(serialize_with = "serialize_opt_ratio")]
    pub alkan_63: Option<Rational>,
    pub winner: ThetaFormula,
    #[serde(with = "serde_ratio")]
    pub winner_value: Rational,
}

fn serialize_opt_ratio<S: serde::Serializer>(v: &Option<Rational>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(r) => s.serialize_str(&format_ratio(r)),
        None => s.serialize_none(),
    }
}

impl ThetaProfile {
    /// Candidates compete in the order two-factor (no pair), two-factor
    /// (pair), one-factor, prime-only, earlier bound; ties keep the first.
    pub fn at(rho: &Rational, pair: &ExponentPair) -> Result<Self> {
        let p68 = theta_prop7_68(rho)?;
        let p69 = theta_prop7_69(rho, pair)?;
        let p8 = theta_prop8(rho)?;
        let t2 = theta_thm2(rho)?;
        let alkan = if *rho >= rat(1, 2) { Some(alkan_theta(rho)?) } else { None };
        let mut cands = vec![
            (ThetaFormula::Prop7_68, p68.clone()),
            (ThetaFormula::Prop7_69, p69.clone()),
            (ThetaFormula::Prop8_610, p8.clone()),
            (ThetaFormula::Thm2, t2.clone()),
        ];
        if let Some(a) = &alkan {
            cands.push((ThetaFormula::Alkan63, a.clone()));
        }
        let (winner, winner_value) = cands
            .into_iter()
            .fold(None::<(ThetaFormula, Rational)>, |best, c| match best {
                Some(b) if b.1 <= c.1 => Some(b),
                _ => Some(c),
            })
            .expect("nonempty");
        Ok(ThetaProfile {
            rho: rho.clone(),
            thm1_cor10: theta_cor10(rho)?,
            thm2: t2,
            prop7_68: p68,
            prop7_69: p69,
            prop7_69_pair: pair.clone(),
            prop8_610: p8,
            alkan_63: alkan,
            winner,
            winner_value,
        })
    }
}

/// `0, step, 2 step, ...` up to and including 1 (when it lies on the grid).
pub fn rho_grid(step: &Rational) -> Result<Vec<Rational>> {
    if !step.is_positive() || *step > int(1) {
        return Err(Error::Domain("grid step must lie in (0, 1]".into()));
    }
    let mut out = Vec::new();
    let mut r = int(0);
    while r <= int(1) {
        out.push(r.clone());
        r += step;
    }
    Ok(out)
}

pub fn theta_table(grid: &[Rational], pair: &ExponentPair) -> Result<Vec<ThetaProfile>> {
    grid.iter().map(|r| ThetaProfile::at(r, pair)).collect()
}

/// CSV with columns `rho,theta,winner`; `breakdown` appends every formula.
pub fn theta_csv(rows: &[ThetaProfile], breakdown: bool) -> String {
    let mut out = String::from("rho,theta,winner");
    if breakdown {
        out.push_str(",thm1_cor10,thm2,prop7_68,prop7_69,prop8_610,alkan_63");
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{}", format_ratio(&r.rho), format_ratio(&r.winner_value), r.winner));
        if breakdown {
            out.push_str(&format!(
                ",{},{},{},{},{},{}",
                format_ratio(&r.thm1_cor10),
                format_ratio(&r.thm2),
                format_ratio(&r.prop7_68),
                format_ratio(&r.prop7_69),
                format_ratio(&r.prop8_610),
                r.alkan_63.as_ref().map(format_ratio).unwrap_or_default()
            ));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cor10_values() {
        let cases = [
            (rat(1, 1), rat(7, 17)),
            (rat(3, 4), rat(33, 94)),
            (rat(9, 17), rat(9, 29)),
            (rat(15, 28), rat(5, 16)),
            (rat(9, 10), rat(9, 23)),
            (rat(1, 2), rat(10, 33)),
            (rat(1, 5), rat(1, 4)),
        ];
        for (rho, t) in cases {
            assert_eq!(theta_cor10(&rho).unwrap(), t, "rho = {rho}");
        }
        assert!(theta_cor10(&rat(11, 10)).is_err());
        assert!(theta_cor10(&rat(-1, 10)).is_err());
    }

    #[test]
    fn cor10_continuity_and_monotonicity() {
        // left and right formulas agree at every breakpoint
        let pieces: [fn(&Rational) -> Rational; 6] = [
            |_| rat(1, 4),
            |r| r * int(10) / (r * int(19) + int(7)),
            |r| r * int(3) / (r * int(4) + int(3)),
            |_| rat(5, 16),
            |r| r * int(22) / (r * int(24) + int(29)),
            |r| r * int(7) / (r * int(9) + int(8)),
        ];
        let breaks = [rat(1, 3), rat(9, 17), rat(15, 28), rat(5, 8), rat(9, 10)];
        for (i, b) in breaks.iter().enumerate() {
            assert_eq!(pieces[i](b), pieces[i + 1](b), "break {b}");
        }
        let grid = rho_grid(&rat(1, 1000)).unwrap();
        for w in grid.windows(2) {
            assert!(theta_cor10(&w[0]).unwrap() <= theta_cor10(&w[1]).unwrap());
        }
    }

    #[test]
    fn thm2_and_prop9() {
        assert_eq!(theta_thm2(&int(0)).unwrap(), int(0));
        assert_eq!(theta_thm2(&int(1)).unwrap(), rat(1, 2));
        assert_eq!(theta_thm2(&rat(1, 3)).unwrap(), rat(1, 4));
        assert_eq!(theta_thm2(&rat(1, 3)).unwrap(), theta_cor10(&rat(1, 3)).unwrap());
        assert_eq!(theta_prop9(&rat(1, 3)).unwrap(), rat(1, 4));
        for k in 0..=1000 {
            let r = rat(k, 1000);
            let (a, b) = (theta_thm2(&r).unwrap(), theta_cor10(&r).unwrap());
            assert_eq!(a < b, r < rat(1, 3), "rho = {r}");
            assert_eq!(a == b, r == rat(1, 3), "rho = {r}");
        }
    }

    #[test]
    fn prop7_and_prop8() {
        assert_eq!(theta_prop7(&int(1), None).unwrap(), rat(7, 17));
        let lit = ExponentPair::literature();
        assert_eq!(theta_prop7(&rat(3, 4), Some(&lit)).unwrap(), rat(33, 94));
        let half = ExponentPair::new(rat(1, 2), rat(1, 2)).unwrap();
        // first branch of the pair formula at (1/2, 1/2)
        assert_eq!(theta_prop7_69(&int(0), &half).unwrap(), rat(1, 3));
        assert_eq!(theta_prop8(&rat(9, 17)).unwrap(), rat(9, 29));
        assert_eq!(rat(9, 17) * int(10) / (rat(9, 17) * int(19) + int(7)), rat(9, 29));
        assert_eq!(theta_prop8(&int(0)).unwrap(), rat(1, 4));
        assert_eq!(theta_prop8(&int(1)).unwrap(), rat(3, 7));
    }

    #[test]
    fn alkan_values() {
        assert_eq!(alkan_theta(&rat(1, 2)).unwrap(), rat(1, 3));
        assert_eq!(alkan_theta(&int(1)).unwrap(), rat(23, 51));
        let r = rat(3, 5);
        assert_eq!(alkan_theta(&r).unwrap(), max(rat(7, 19), rat(69, 5) / rat(185, 5)));
        assert!(alkan_theta(&rat(1, 3)).is_err());
    }

    #[test]
    fn ab_examples() {
        let b = ab_process(&ExponentPair::trivial(), "B").unwrap();
        assert_eq!(b, ExponentPair::new(rat(1, 2), rat(1, 2)).unwrap());
        assert_eq!(ab_process(&b, "A").unwrap(), ExponentPair::new(rat(1, 6), rat(2, 3)).unwrap());
        assert_eq!(ab_process(&b, "").unwrap(), b);
        assert_eq!(ab_process(&ExponentPair::trivial(), "BA").unwrap(), ab_process(&b, "A").unwrap());
        assert!(ab_process(&b, "AC").is_err());
        assert!(ExponentPair::new(rat(3, 4), rat(1, 2)).is_err());
    }

    #[test]
    fn optimizer_examples() {
        let seeds = [ExponentPair::trivial(), ExponentPair::literature()];
        let r1 = optimize_theta(&int(1), &seeds, 6).unwrap();
        assert_eq!((r1.theta, r1.formula), (rat(7, 17), ThetaFormula::Prop7_68));
        let r = optimize_theta(&rat(7, 10), &seeds, 1).unwrap();
        assert_eq!(r.theta, rat(77, 229));
        assert_eq!(r.formula, ThetaFormula::Prop7_69);
        assert_eq!(r.pair, Some(ExponentPair::literature()));
        // deeper words of the hull beat the literature pair here
        let deep = optimize_theta(&rat(7, 10), &seeds, 6).unwrap();
        assert_eq!(deep.theta, rat(317, 943));
        assert_eq!(deep.pair, Some(ExponentPair::new(rat(26, 129), rat(27, 43)).unwrap()));
        let r = optimize_theta(&rat(1, 5), &seeds, 6).unwrap();
        assert_eq!((r.theta, r.formula), (rat(1, 4), ThetaFormula::Prop8_610));
        assert!(optimize_theta(&int(1), &seeds, 13).is_err());
    }

    #[test]
    fn optimizer_against_cor10_on_grid() {
        let seeds = [ExponentPair::trivial(), ExponentPair::literature()];
        let mut improved = 0;
        for k in 1..=100 {
            let r = rat(k, 100);
            let c = theta_cor10(&r).unwrap();
            assert_eq!(optimize_theta(&r, &seeds, 1).unwrap().theta, c, "rho = {r}");
            let deep = optimize_theta(&r, &seeds, 6).unwrap().theta;
            assert!(deep <= c, "rho = {r}");
            improved += usize::from(deep < c);
        }
        // (1/4, 13/22) = BA(4/18, 11/18) already wins on 83/100..90/100
        let ba = ab_process(&ExponentPair::literature(), "AB").unwrap();
        assert_eq!(ba, ExponentPair::new(rat(1, 4), rat(13, 22)).unwrap());
        assert!(theta_prop7_69(&rat(9, 10), &ba).unwrap() < theta_cor10(&rat(9, 10)).unwrap());
        assert_eq!(improved, 37);
    }

    #[test]
    fn constraint_examples() {
        use ConstraintVariant::*;
        let s = minimal_theta_from_constraints(&int(1), V718, None).unwrap();
        assert_eq!(s.theta, rat(7, 17));
        assert_eq!(minimal_theta_from_constraints(&int(1), V811b, None).unwrap().theta, rat(3, 7));
        let half = ExponentPair::new(rat(1, 2), rat(1, 2)).unwrap();
        assert_eq!(minimal_theta_from_constraints(&int(1), V719, Some(&half)).unwrap().theta, rat(5, 12));
        let z = minimal_theta_from_constraints(&int(0), V811a, None).unwrap();
        assert!(z.degenerate && z.theta.is_zero());
        assert!(minimal_theta_from_constraints(&int(1), V719, None).is_err());
    }

    #[test]
    fn admissibility_examples() {
        let x = 1e6f64;
        let base = AdmissibilityInput {
            theta: Some(rat(2, 5)),
            x: Some(x),
            y: Some(x.powf(0.4)),
            m: Some(10.0),
            n: Some(1.0),
            epsilon_prime: Some(rat(1, 100)),
            ..Default::default()
        };
        assert!(admissibility(Condition::C514, &base).unwrap().holds);

        let y = x.powf(0.26);
        let inp = AdmissibilityInput { theta: Some(rat(26, 100)), x: Some(x), y: Some(y), m: Some(y.powi(3)), ..Default::default() };
        let r = admissibility(Condition::C517, &inp).unwrap();
        assert!(!r.holds);
        assert!(r.first_failure.unwrap().starts_with("M <="));

        let half = ExponentPair::new(rat(1, 2), rat(1, 2)).unwrap();
        let mut inp = AdmissibilityInput { pair: Some(half), x: Some(x), y: Some(x.powf(0.5)), m: Some(1.0), n: Some(1.0), ..Default::default() };
        for (t, ok) in [(rat(1, 3), false), (rat(1, 2), true), (rat(2, 3), true), (rat(7, 10), false)] {
            inp.theta = Some(t.clone());
            let r = admissibility(Condition::C515, &inp).unwrap();
            assert_eq!(r.clauses[0].holds, ok, "theta = {t}");
        }
        assert!(admissibility(Condition::C514, &AdmissibilityInput::default()).is_err());
    }

    #[test]
    fn historical() {
        let t = historical_table();
        assert!(t.iter().any(|(v, _)| *v == rat(17, 41)));
        assert!(t.iter().any(|(v, _)| *v == rat(40, 97)));
        for w in t.windows(2) {
            assert!(w[1].0 < w[0].0);
        }
    }

    #[test]
    fn hypotheses() {
        assert!(RhoHypothesis::new(int(1), 1.0, 0.0, "bad").is_err());
        assert!(RhoHypothesis::new(int(1), 1.1, 0.0, "ok").is_ok());
        for h in RhoHypothesis::presets() {
            assert!(!h.rho.is_one() || h.theta_rho > 1.0, "{}", h.label);
        }
        assert_eq!(RhoHypothesis::conjecture1(2).rho, rat(1, 2));
    }

    #[test]
    fn profile_and_csv() {
        let rows = theta_table(&rho_grid(&rat(1, 100)).unwrap(), &ExponentPair::literature()).unwrap();
        assert_eq!(rows.len(), 101);
        let last = rows.last().unwrap();
        assert_eq!((last.winner, last.winner_value.clone()), (ThetaFormula::Prop7_68, rat(7, 17)));
        let csv = theta_csv(&rows, false);
        assert!(csv.starts_with("rho,theta,winner\n0/1,"));
        assert!(csv.ends_with("1/1,7/17,prop7_68\n"));
        assert_eq!(csv.lines().count(), 102);
        for r in &rows {
            let vals = [&r.prop7_68, &r.prop7_69, &r.prop8_610, &r.thm2];
            assert!(vals.iter().all(|v| r.winner_value <= **v));
        }
        assert!(theta_csv(&rows[..1], true).lines().next().unwrap().ends_with("alkan_63"));
    }

    fn arb_rho() -> impl Strategy<Value = Rational> {
        (1i64..=10_000, 1i64..=10_000).prop_map(|(a, b)| {
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            rat(a, b)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn constraints_reproduce_closed_forms(rho in arb_rho()) {
            use ConstraintVariant::*;
            let lit = ExponentPair::literature();
            let r = &rho;
            prop_assert_eq!(minimal_theta_from_constraints(r, V718, None).unwrap().theta,
                r * int(7) / (r * int(9) + int(8)));
            let (k, l) = (&lit.kappa, &lit.lambda);
            prop_assert_eq!(minimal_theta_from_constraints(r, V719, Some(&lit)).unwrap().theta,
                (int(1) + k + l * int(2)) * r / ((int(1) + k * int(2) + l * int(2)) * r + int(2) + l * int(2)));
            prop_assert_eq!(minimal_theta_from_constraints(r, V811a, None).unwrap().theta,
                r * int(10) / (r * int(19) + int(7)));
            prop_assert_eq!(minimal_theta_from_constraints(r, V811b, None).unwrap().theta,
                r * int(3) / (r * int(4) + int(3)));
        }

        #[test]
        fn ab_words_stay_in_domain(word in "[AB]{0,12}") {
            for seed in [ExponentPair::trivial(), ExponentPair::literature()] {
                let p = ab_process(&seed, &word).unwrap();
                prop_assert!(ExponentPair::new(p.kappa.clone(), p.lambda.clone()).is_ok());
            }
        }
    }
}
