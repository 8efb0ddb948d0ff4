//! Command-line front end. [`run`] parses arguments, executes one
//! subcommand and returns the process exit code:
//!
//! * 0 success
//! * 1 usage or validation error
//! * 2 resource, budget or i/o failure
//! * 3 inconclusive precision (kloosterman)

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use bfree_lab::rational::parse_ratio;
use bfree_lab::Rational;
use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
pub mod config;

pub use config::{load_config, Config, CACHE_DIR_ENV};

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Usage(String),
    Resource(String),
    Inconclusive(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Resource(_) => 2,
            CliError::Inconclusive(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Resource(m) | CliError::Inconclusive(m) => f.write_str(m),
        }
    }
}

impl From<bfree_lab::Error> for CliError {
    fn from(e: bfree_lab::Error) -> Self {
        use bfree_lab::Error as E;
        match e {
            E::Resource(_) | E::Io(_) => CliError::Resource(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "bfree-lab", version, about = "B-free numbers, Hecke nonvanishing and sieve exponents")]
pub struct Cli {
    /// JSON configuration file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// write the primary output here instead of stdout
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// overrides rng_seed from the configuration
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

fn rational(s: &str) -> Result<Rational, String> {
    parse_ratio(s).map_err(|e| e.to_string())
}

/// Comma-separated list parsed as one value; the alias keeps clap from
/// treating the field as a repeated argument.
type U64List = Vec<u64>;

fn u64_list(s: &str) -> Result<U64List, String> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<u64>().map_err(|e| format!("{t:?}: {e}")))
        .collect()
}

fn rational_pair(s: &str) -> Result<(Rational, Rational), String> {
    let (a, b) = s.split_once(',').ok_or("expected \"kappa,lambda\"")?;
    Ok((rational(a)?, rational(b)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Rule {
    Squarefree,
    Generated,
    Explicit,
}

#[derive(Debug, Args)]
pub struct BArgs {
    /// how the set B is built
    #[arg(long, value_enum, default_value = "squarefree")]
    pub rule: Rule,
    /// primes of P for the generated rule, comma separated
    #[arg(long, value_parser = u64_list)]
    pub primes: Option<U64List>,
    /// pairwise coprime members for the explicit rule, comma separated
    #[arg(long, value_parser = u64_list)]
    pub members: Option<U64List>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormKind {
    Delta,
    Elliptic,
}

#[derive(Debug, Args)]
pub struct FormArgs {
    #[arg(long, value_enum, default_value = "delta")]
    pub form: FormKind,
    /// curve y^2 = x^3 + a4 x + a6 for the elliptic form
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    pub a4: i64,
    #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
    pub a6: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GapSource {
    Tau,
    Elliptic,
    Squarefree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightVariant {
    TwoFactor,
    OneFactor,
    PrimeOnly,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// B-free numbers in (x, x + y] as a JSON interval report
    Sieve {
        #[arg(long)]
        x: u64,
        #[arg(long)]
        y: u64,
        #[command(flatten)]
        b: BArgs,
        /// members of B used in the density main term
        #[arg(long)]
        truncation: Option<usize>,
    },
    /// longest runs where a coefficient source vanishes
    Gaps {
        #[arg(long, value_enum, default_value = "tau")]
        source: GapSource,
        #[arg(long, default_value_t = 1)]
        lo: u64,
        #[arg(long)]
        hi: u64,
        /// split [lo, hi] into this many rows
        #[arg(long, default_value_t = 1)]
        blocks: u64,
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        a4: i64,
        #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
        a6: i64,
    },
    /// admissible exponent theta(rho) over a grid of rho in [0, 1]
    Theta {
        #[arg(long, value_parser = rational, default_value = "1/100")]
        step: Rational,
        /// exponent pair "kappa,lambda" for the pair-dependent formula
        #[arg(long, value_parser = rational_pair)]
        pair: Option<(Rational, Rational)>,
        /// one column per formula
        #[arg(long)]
        breakdown: bool,
    },
    /// exponential sums against their bounds, as benchmark rows
    Expsum {
        #[arg(long, default_value = "prop5")]
        formula: String,
        #[arg(long)]
        x: f64,
        #[arg(long)]
        m: u64,
        #[arg(long, default_value_t = 1)]
        n: u64,
        #[arg(long, default_value_t = 1)]
        h: u64,
        #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long, default_value_t = 1.5, allow_hyphen_values = true)]
        beta: f64,
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long, value_parser = rational_pair)]
        pair: Option<(Rational, Rational)>,
        /// seeded coefficient draws; trial t uses seed + 3t, + 1, + 2
        #[arg(long, default_value_t = 1)]
        trials: u32,
        /// all-ones coefficients instead of seeded ones
        #[arg(long)]
        ones: bool,
    },
    /// weighted sieve decomposition at one (x, y)
    Weights {
        #[arg(long, value_enum, default_value = "two-factor")]
        variant: WeightVariant,
        #[arg(long, value_parser = rational, default_value = "1")]
        rho: Rational,
        /// defaults to default_epsilon from the configuration
        #[arg(long, value_parser = rational)]
        eps: Option<Rational>,
        #[arg(long)]
        x: u64,
        #[arg(long)]
        y: u64,
        #[arg(long, default_value_t = 3)]
        ell: usize,
        #[arg(long, default_value_t = 2)]
        r0: u32,
        #[command(flatten)]
        b: BArgs,
    },
    /// coefficient and vanishing dumps of a form
    Hecke {
        #[command(flatten)]
        form: FormArgs,
        /// dump lambda(n) for n <= n-max
        #[arg(long, default_value_t = 100)]
        n_max: u64,
        /// scan prime powers at primes up to this bound
        #[arg(long, default_value_t = 100)]
        p_max: u64,
        #[arg(long, default_value_t = 20)]
        nu_max: u32,
    },
    /// nonvanishing scan of lambda_S(p^nu) for the Kloosterman form
    Kloosterman {
        #[arg(long, default_value_t = 200)]
        p_max: u64,
        #[arg(long, default_value_t = 30)]
        nu_max: u32,
        /// defaults to precision_bits from the configuration
        #[arg(long)]
        bits: Option<u32>,
    },
    /// partial sums of |lambda(n)|^r along a grid of x
    Moments {
        #[command(flatten)]
        form: FormArgs,
        #[arg(long)]
        x_max: u64,
        #[arg(long, default_value_t = 2)]
        r: u32,
        #[arg(long, default_value_t = 10)]
        points: u64,
        #[arg(long)]
        squarefree: bool,
        #[arg(long, default_value_t = 1)]
        coprime_to: u64,
    },
}

/// Parses `args` (including the program name) and runs the command.
/// Primary output goes to `--out` or `stdout`; diagnostics go to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{e}");
                    0
                }
                _ => {
                    let _ = write!(stderr, "{e}");
                    1
                }
            };
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(p) => load_config(p)?,
        None => Config::default(),
    };
    let seed = cli.seed.unwrap_or(config.rng_seed);
    let out = commands::dispatch(cli, &config, seed)?;
    let write = |w: &mut dyn Write| -> std::io::Result<()> {
        w.write_all(out.text.as_bytes())?;
        if !out.text.ends_with('\n') {
            w.write_all(b"\n")?;
        }
        w.flush()
    };
    match &cli.out {
        Some(path) => {
            let mut f = std::fs::File::create(path)
                .map_err(|e| CliError::Resource(format!("cannot create {}: {e}", path.display())))?;
            write(&mut f).map_err(|e| CliError::Resource(e.to_string()))?;
        }
        None => write(stdout).map_err(|e| CliError::Resource(e.to_string()))?,
    }
    match out.inconclusive {
        Some(why) => Err(CliError::Inconclusive(why)),
        None => Ok(()),
    }
}
