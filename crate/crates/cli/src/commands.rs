use std::fmt::Write as _;
use std::sync::Arc;

use bfree_lab::arith::is_squarefree;
use bfree_lab::bfree::{gap_scan, sieve_interval};
use bfree_lab::exponents::{rho_grid, theta_csv, theta_table};
use bfree_lab::expsum::{bench_csv, bench_row, BoundFormula, Coefficients, SumSpec};
use bfree_lab::hecke::{Normalization, TauCache, MAX_TAU_CEILING};
use bfree_lab::kloosterman::verify_prop4;
use bfree_lab::rational::format_ratio;
use bfree_lab::sieveweights::{choose_parameters, decomposition_a, window_sums};
use bfree_lab::{BSet, Coeff, ExponentPair, HeckeForm, Rational, Tail, TauTable, Variant, WeightSystem};
use serde_json::{json, Value};

use crate::{BArgs, Cli, CliError, Command, Config, FormArgs, FormKind, Format, GapSource, Rule, WeightVariant};

const SCHEMA_VERSION: u32 = 1;

pub(crate) struct Output {
    pub text: String,
    /// set when the output is complete but its conclusion is not certified
    pub inconclusive: Option<String>,
}

impl Output {
    fn done(text: String) -> Self {
        Output { text, inconclusive: None }
    }
}

fn format_for(cli: &Cli, default: Format, allowed: &[Format], command: &str) -> Result<Format, CliError> {
    let f = cli.format.unwrap_or(default);
    if !allowed.contains(&f) {
        return Err(CliError::Usage(format!("{command} does not support --format {f:?}").to_lowercase()));
    }
    Ok(f)
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("JSON values always serialize")
}

fn envelope(command: &str, body: Value) -> Value {
    let mut v = json!({ "schema_version": SCHEMA_VERSION, "command": command });
    if let (Value::Object(dst), Value::Object(src)) = (&mut v, body) {
        dst.extend(src);
    }
    v
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types always serialize")
}

fn check_bytes(bytes: u64, config: &Config, what: &str) -> Result<(), CliError> {
    if bytes > config.memory_budget_bytes() {
        return Err(CliError::Resource(format!(
            "{what} needs about {} MiB, over the {} MiB budget",
            bytes >> 20,
            config.memory_budget_mb
        )));
    }
    Ok(())
}

fn b_set(b: &BArgs) -> Result<BSet, CliError> {
    Ok(match b.rule {
        Rule::Squarefree => BSet::squarefree(),
        Rule::Generated => {
            let ps = b.primes.clone().ok_or_else(|| CliError::Usage("--rule generated needs --primes".into()))?;
            BSet::generated(ps)?
        }
        Rule::Explicit => {
            let ms = b.members.clone().ok_or_else(|| CliError::Usage("--rule explicit needs --members".into()))?;
            BSet::explicit(ms, Tail::Complete)?
        }
    })
}

fn tau_table(ceiling: u64, config: &Config) -> Result<Arc<TauTable>, CliError> {
    let ceiling = ceiling.max(2);
    if ceiling > MAX_TAU_CEILING as u64 {
        return Err(CliError::Resource(format!("tau table ceiling {ceiling} exceeds {MAX_TAU_CEILING}")));
    }
    check_bytes(ceiling * 16, config, "the tau table")?;
    let table = match config.effective_cache_dir() {
        Some(dir) => TauCache::new(dir).load(ceiling as usize, true)?,
        None => TauTable::compute(ceiling as usize)?,
    };
    Ok(Arc::new(table))
}

fn hecke_form(f: &FormArgs, ceiling: u64, config: &Config) -> Result<HeckeForm, CliError> {
    Ok(match f.form {
        FormKind::Delta => HeckeForm::delta(tau_table(ceiling, config)?),
        FormKind::Elliptic => HeckeForm::elliptic(f.a4, f.a6)?,
    })
}

fn coeff_text(c: &Coeff) -> String {
    match c {
        Coeff::Exact(v) => v.to_string(),
        Coeff::Approx(z) => format!("{}{:+}i", z.re, z.im),
    }
}

fn pair_of(p: &Option<(Rational, Rational)>) -> Result<Option<ExponentPair>, CliError> {
    p.as_ref().map(|(k, l)| ExponentPair::new(k.clone(), l.clone()).map_err(CliError::from)).transpose()
}

pub(crate) fn dispatch(cli: &Cli, config: &Config, seed: u64) -> Result<Output, CliError> {
    match &cli.command {
        Command::Sieve { x, y, b, truncation } => {
            format_for(cli, Format::Json, &[Format::Json], "sieve")?;
            check_bytes(y / 8 + (1 << 20), config, "the interval bit set")?;
            let mut set = b_set(b)?;
            if let Some(t) = truncation {
                set = set.with_truncation(*t);
            }
            Ok(Output::done(sieve_interval(*x, *y, &set)?.to_json()))
        }

        Command::Gaps { source, lo, hi, blocks, a4, a6 } => {
            let fmt = format_for(cli, Format::Json, &[Format::Json, Format::Csv], "gaps")?;
            if *blocks == 0 || lo > hi || *lo == 0 {
                return Err(CliError::Usage("gaps needs 1 <= lo <= hi and blocks >= 1".into()));
            }
            let pred: Box<dyn Fn(u64) -> bool> = match source {
                GapSource::Tau => {
                    let t = tau_table(*hi, config)?;
                    Box::new(move |n| t.as_slice()[n as usize] != 0)
                }
                GapSource::Elliptic => {
                    check_bytes(hi * 32, config, "the coefficient list")?;
                    let c = HeckeForm::elliptic(*a4, *a6)?.coefficients_up_to(*hi)?;
                    Box::new(move |n| !matches!(&c[n as usize], Coeff::Exact(v) if v == &0.into()))
                }
                GapSource::Squarefree => Box::new(is_squarefree),
            };
            let width = (hi - lo + 1).div_ceil(*blocks);
            let mut rows = Vec::new();
            let mut a = *lo;
            while a <= *hi {
                let b = (a + width - 1).min(*hi);
                let g = gap_scan(&pred, a, b)?;
                rows.push((a, b, g.max_gap, g.position));
                a = b + 1;
            }
            let max_gap = rows.iter().map(|r| r.2).max().unwrap_or(0);
            let src = format!("{source:?}").to_lowercase();
            Ok(Output::done(match fmt {
                Format::Csv => {
                    let mut s = String::from("lo,hi,max_gap,position\n");
                    for (a, b, g, p) in &rows {
                        let _ = writeln!(s, "{a},{b},{g},{p}");
                    }
                    s
                }
                Format::Json => pretty(&envelope(
                    "gaps",
                    json!({
                        "source": src,
                        "lo": lo,
                        "hi": hi,
                        "max_gap": max_gap,
                        "rows": rows.iter().map(|(a, b, g, p)| json!({"lo": a, "hi": b, "max_gap": g, "position": p})).collect::<Vec<_>>(),
                    }),
                )),
            }))
        }

        Command::Theta { step, pair, breakdown } => {
            let fmt = format_for(cli, Format::Csv, &[Format::Json, Format::Csv], "theta")?;
            let pair = pair_of(pair)?.unwrap_or_else(ExponentPair::literature);
            let rows = theta_table(&rho_grid(step)?, &pair)?;
            Ok(Output::done(match fmt {
                Format::Csv => theta_csv(&rows, *breakdown),
                Format::Json => pretty(&envelope("theta", json!({ "pair": pair.to_string(), "rows": to_value(&rows) }))),
            }))
        }

        Command::Expsum { formula, x, m, n, h, alpha, beta, eps, c, pair, trials, ones } => {
            let fmt = format_for(cli, Format::Csv, &[Format::Json, Format::Csv], "expsum")?;
            let formula: BoundFormula = formula.parse()?;
            let pair = pair_of(pair)?;
            let mut rows = Vec::new();
            for t in 0..*trials as u64 {
                let base = seed.wrapping_add(3 * t);
                let mut spec = SumSpec::new(*x, *m, *n, *alpha, *beta);
                spec.h = *h;
                if !ones {
                    spec.phi = Coefficients::Random { seed: base };
                    spec.psi = Coefficients::Random { seed: base.wrapping_add(1) };
                    spec.xi = Coefficients::Random { seed: base.wrapping_add(2) };
                }
                rows.push(bench_row(formula, &spec, *eps, *c, pair.as_ref(), (!ones).then_some(base))?);
            }
            Ok(Output::done(match fmt {
                Format::Csv => bench_csv(&rows),
                Format::Json => pretty(&envelope("expsum", json!({ "label": "report", "rows": to_value(&rows) }))),
            }))
        }

        Command::Weights { variant, rho, eps, x, y, ell, r0, b } => {
            format_for(cli, Format::Json, &[Format::Json], "weights")?;
            let v = match variant {
                WeightVariant::TwoFactor => Variant::TwoFactor,
                WeightVariant::OneFactor => Variant::OneFactor,
                WeightVariant::PrimeOnly => Variant::PrimeOnly,
            };
            let eps = eps.clone().unwrap_or_else(|| config.default_epsilon.clone());
            let params = choose_parameters(rho, &eps, v)?;
            let w = WeightSystem::build(params, *x, *ell, *r0)?;
            let d = decomposition_a(*x, *y, &b_set(b)?, &w)?;
            let sums = window_sums(&w);
            let fl = &w.fundamental_lemma;
            let checks = json!([
                { "name": "A1 = main_term + R", "label": "assert", "holds": d.identity_defect == Rational::from_integer(0.into()) },
                { "name": "A >= A1 - A2 - A3", "label": "assert", "holds": d.lower_bound_holds() },
                { "name": "prime window reciprocal sum vs log((a + eps)/a)", "label": "report", "relative_error": sums.prime_relative_error },
                { "name": "quasi-prime reciprocal sum in [eps/(2 eta), eps/eta]", "label": "report", "inside": sums.quasi_prime_in_bracket },
                { "name": "sum lambda/d against prod (1 - 1/p), scale s^-s", "label": "report",
                  "upper_gap": fl.sum_plus - fl.mertens_product, "lower_gap": fl.sum_minus - fl.mertens_product, "s_scale": fl.s_scale },
            ]);
            Ok(Output::done(pretty(&envelope(
                "weights",
                json!({
                    "parameters": to_value(&w.params),
                    "x": x, "y": y, "z": w.z, "q": w.q, "ell": w.ell,
                    "quasi_prime_count": w.quasi_primes.len(),
                    "prime_window_count": w.prime_window.len(),
                    "fundamental_lemma": {
                        "r_plus": fl.r_plus, "r_minus": fl.r_minus,
                        "support_plus": fl.lambda_plus.len(), "support_minus": fl.lambda_minus.len(),
                        "sum_plus": fl.sum_plus, "sum_minus": fl.sum_minus, "mertens_product": fl.mertens_product,
                    },
                    "window_sums": to_value(&sums),
                    "decomposition": to_value(&d),
                    "checks": checks,
                }),
            ))))
        }

        Command::Hecke { form, n_max, p_max, nu_max } => {
            let fmt = format_for(cli, Format::Json, &[Format::Json, Format::Csv], "hecke")?;
            let f = hecke_form(form, (*n_max).max(*p_max), config)?;
            check_bytes(n_max * 32, config, "the coefficient list")?;
            let coeffs = f.coefficients_up_to(*n_max)?;
            if fmt == Format::Csv {
                let mut s = String::from("n,coefficient\n");
                for (i, c) in coeffs.iter().enumerate().skip(1) {
                    let _ = writeln!(s, "{i},{}", coeff_text(c));
                }
                return Ok(Output::done(s));
            }
            let mut vanishing = Vec::new();
            let mut scanned = 0;
            for p in bfree_lab::arith::primes_in(2, *p_max)? {
                scanned += 1;
                let r = f.vanishing_scan(p, *nu_max)?;
                if !r.all_nonzero {
                    vanishing.push(to_value(&r));
                }
            }
            Ok(Output::done(pretty(&envelope(
                "hecke",
                json!({
                    "form": format!("{:?}", form.form).to_lowercase(),
                    "weight": f.weight(),
                    "level": f.level(),
                    "coefficients": coeffs.iter().skip(1).map(coeff_text).collect::<Vec<_>>(),
                    "primes_scanned": scanned,
                    "nu_max": nu_max,
                    "vanishing": vanishing,
                }),
            ))))
        }

        Command::Kloosterman { p_max, nu_max, bits } => {
            format_for(cli, Format::Json, &[Format::Json], "kloosterman")?;
            let r = verify_prop4(*p_max, *nu_max, bits.unwrap_or(config.precision_bits))?;
            let inconclusive = r
                .inconclusive
                .then(|| format!("{} near-zero traces could not be certified", r.near_zeros.iter().filter(|z| !z.certified_nonzero).count()));
            Ok(Output {
                text: pretty(&envelope("kloosterman", json!({ "label": "report", "report": to_value(&r) }))),
                inconclusive,
            })
        }

        Command::Moments { form, x_max, r, points, squarefree, coprime_to } => {
            let fmt = format_for(cli, Format::Csv, &[Format::Json, Format::Csv], "moments")?;
            if *points == 0 || *x_max == 0 {
                return Err(CliError::Usage("moments needs x-max >= 1 and points >= 1".into()));
            }
            check_bytes(x_max * 32, config, "the coefficient list")?;
            let f = hecke_form(form, *x_max, config)?.with_normalization(Normalization::Unit);
            let mut rows = Vec::new();
            for k in 1..=*points {
                let x = (x_max * k / points).max(1);
                let m = f.moment_sum(x, *r, *squarefree, *coprime_to)?;
                rows.push((x, m.terms, m.value, m.ratio, m.exact.as_ref().map(format_ratio)));
            }
            Ok(Output::done(match fmt {
                Format::Csv => {
                    let mut s = String::from("x,r,terms,value,ratio\n");
                    for (x, t, v, q, _) in &rows {
                        let _ = writeln!(s, "{x},{r},{t},{v},{q}");
                    }
                    s
                }
                Format::Json => pretty(&envelope(
                    "moments",
                    json!({
                        "label": "report",
                        "r": r,
                        "rows": rows.iter().map(|(x, t, v, q, e)| json!({"x": x, "terms": t, "value": v, "ratio": q, "exact": e})).collect::<Vec<_>>(),
                    }),
                )),
            }))
        }
    }
}
