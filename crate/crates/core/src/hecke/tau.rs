//! Ramanujan's tau function from the q-expansion of Delta, with an on-disk
//! cache.
//!
//! `Delta = q * prod_{m>=1} (1 - q^m)^24 = q * (eta^3 / q^{1/8})^8`, and the
//! cube of the eta product has the sparse Jacobi expansion
//! `sum_{k>=0} (-1)^k (2k+1) q^{k(k+1)/2}`. Raising that sparse series to the
//! eighth power costs `O(n^{3/2})` instead of the `O(n^2)` of a dense product.
//!
//! Cache file layout (text):
//!
//! ```text
//! tau-cache v1 <ceiling>
//! 1,1
//! 2,-24
//! ...
//! ```

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use num_bigint::BigInt;

use crate::error::{Error, Result};

/// Hard ceiling; tau(n) for n near it still fits comfortably in i128.
pub const MAX_TAU_CEILING: usize = 5_000_000;

const CACHE_FILE: &str = "tau-cache-v1.txt";
const HEADER: &str = "tau-cache v1";

/// tau(1..=ceiling).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TauTable {
    ceiling: usize,
    /// index n holds tau(n); index 0 is unused
    values: Vec<i128>,
}

impl TauTable {
    /// Computes the table from scratch.
    pub fn compute(ceiling: usize) -> Result<Self> {
        if ceiling == 0 {
            return Err(Error::Precondition("tau ceiling must be >= 1".into()));
        }
        if ceiling > MAX_TAU_CEILING {
            return Err(Error::Resource(format!(
                "tau ceiling {ceiling} exceeds the supported {MAX_TAU_CEILING}"
            )));
        }
        // coefficients of q^0 .. q^{ceiling-1} of (eta^3)^8 / q
        let len = ceiling;
        let jacobi: Vec<(usize, i128)> = (0..)
            .map(|k: usize| (k * (k + 1) / 2, k))
            .take_while(|&(e, _)| e < len)
            .map(|(e, k)| {
                let c = (2 * k + 1) as i128;
                (e, if k % 2 == 0 { c } else { -c })
            })
            .collect();
        let mut acc = vec![0i128; len];
        for &(e, c) in &jacobi {
            acc[e] = c;
        }
        for _ in 1..8 {
            let mut next = vec![0i128; len];
            for (i, &a) in acc.iter().enumerate() {
                if a == 0 {
                    continue;
                }
                for &(e, c) in &jacobi {
                    let j = i + e;
                    if j >= len {
                        break;
                    }
                    let term = a.checked_mul(c).ok_or_else(overflow)?;
                    next[j] = next[j].checked_add(term).ok_or_else(overflow)?;
                }
            }
            acc = next;
        }
        let mut values = Vec::with_capacity(len + 1);
        values.push(0);
        values.extend(acc);
        Ok(TauTable { ceiling, values })
    }

    pub fn ceiling(&self) -> usize {
        self.ceiling
    }

    /// Exact tau(n) for `1 <= n <= ceiling`.
    pub fn tau(&self, n: u64) -> Result<BigInt> {
        self.tau_i128(n).map(BigInt::from)
    }

    pub fn tau_i128(&self, n: u64) -> Result<i128> {
        if n == 0 {
            return Err(Error::Domain("tau is defined for n >= 1".into()));
        }
        if n as usize > self.ceiling {
            return Err(Error::Resource(format!(
                "tau({n}) is above the table ceiling {}",
                self.ceiling
            )));
        }
        Ok(self.values[n as usize])
    }

    /// Borrowed view of tau(0..=ceiling) with a zero at index 0.
    pub fn as_slice(&self) -> &[i128] {
        &self.values
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{HEADER} {}", self.ceiling)?;
        for n in 1..=self.ceiling {
            writeln!(w, "{n},{}", self.values[n])?;
        }
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty tau cache".into()))??;
        let ceiling: usize = header
            .strip_prefix(HEADER)
            .map(str::trim)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad tau cache header {header:?}")))?;
        if ceiling == 0 || ceiling > MAX_TAU_CEILING {
            return Err(Error::Parse(format!("tau cache ceiling {ceiling} out of range")));
        }
        let mut values = Vec::with_capacity(ceiling + 1);
        values.push(0i128);
        for (idx, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let expect = idx + 1;
            let (n, v) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("bad tau cache line {line:?}")))?;
            let n: usize = n
                .parse()
                .map_err(|_| Error::Parse(format!("bad index in {line:?}")))?;
            if n != expect {
                return Err(Error::Parse(format!(
                    "tau cache out of order: expected n = {expect}, found {n}"
                )));
            }
            let v: i128 = v
                .parse()
                .map_err(|_| Error::Parse(format!("bad value in {line:?}")))?;
            values.push(v);
        }
        if values.len() != ceiling + 1 {
            return Err(Error::Parse(format!(
                "tau cache declares ceiling {ceiling} but holds {} values",
                values.len() - 1
            )));
        }
        Ok(TauTable { ceiling, values })
    }
}

fn overflow() -> Error {
    Error::Resource("tau expansion overflowed 128-bit accumulators".into())
}

/// Directory-backed tau cache. Extension recomputes the whole table and
/// replaces the file atomically (write to a sibling, then rename).
#[derive(Debug, Clone)]
pub struct TauCache {
    dir: PathBuf,
}

impl TauCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        TauCache { dir: dir.into() }
    }

    pub fn path(&self) -> PathBuf {
        self.dir.join(CACHE_FILE)
    }

    /// Ceiling of the table on disk, if any.
    pub fn stored_ceiling(&self) -> Result<Option<usize>> {
        let path = self.path();
        if !path.exists() {
            return Ok(None);
        }
        let file = fs::File::open(&path)?;
        let mut first = String::new();
        BufReader::new(file).read_line(&mut first)?;
        let c = first
            .trim()
            .strip_prefix(HEADER)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad tau cache header in {}", path.display())))?;
        Ok(Some(c))
    }

    /// Loads a table covering `ceiling`. A missing or short cache is rebuilt
    /// only when `allow_extend` is set; otherwise that is a resource error.
    pub fn load(&self, ceiling: usize, allow_extend: bool) -> Result<TauTable> {
        if let Some(stored) = self.stored_ceiling()? {
            if stored >= ceiling {
                let file = fs::File::open(self.path())?;
                return TauTable::read_from(BufReader::new(file));
            }
        }
        if !allow_extend {
            return Err(Error::Resource(format!(
                "tau cache at {} does not reach {ceiling} and extension is not permitted",
                self.dir.display()
            )));
        }
        let table = TauTable::compute(ceiling)?;
        self.store(&table)?;
        Ok(table)
    }

    pub fn store(&self, table: &TauTable) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        let tmp = self.dir.join(format!("{CACHE_FILE}.tmp"));
        {
            let mut w = BufWriter::new(fs::File::create(&tmp)?);
            table.write_to(&mut w)?;
            w.flush()?;
        }
        fs::rename(&tmp, self.path())?;
        Ok(())
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Zero;

    /// Independent route: expand prod (1 - q^m) by Euler's pentagonal theorem,
    /// then take the 24th power by repeated multiplication.
    pub(crate) fn pentagonal_delta(ceiling: usize) -> Vec<BigInt> {
        let len = ceiling;
        let mut euler = vec![BigInt::zero(); len];
        let mut k: i64 = 0;
        loop {
            let mut any = false;
            for kk in [k, -k] {
                let e = (kk * (3 * kk - 1) / 2) as usize;
                if e < len {
                    any = true;
                    if kk == k || k != 0 {
                        let sign = if kk.rem_euclid(2) == 0 { 1 } else { -1 };
                        euler[e] += BigInt::from(sign);
                    }
                }
                if k == 0 {
                    break;
                }
            }
            if !any {
                break;
            }
            k += 1;
        }
        let sparse: Vec<(usize, BigInt)> = euler
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(i, c)| (i, c.clone()))
            .collect();
        let mut acc = euler.clone();
        for _ in 1..24 {
            let mut next = vec![BigInt::zero(); len];
            for (i, a) in acc.iter().enumerate() {
                if a.is_zero() {
                    continue;
                }
                for (e, c) in &sparse {
                    if i + e >= len {
                        break;
                    }
                    next[i + e] += a * c;
                }
            }
            acc = next;
        }
        let mut out = vec![BigInt::zero()];
        out.extend(acc);
        out
    }

    #[test]
    fn first_values() {
        let t = TauTable::compute(12).unwrap();
        let expect = [1i128, -24, 252, -1472, 4830, -6048, -16744, 84480, -113643, -115920, 534612, -370944];
        for (i, &v) in expect.iter().enumerate() {
            assert_eq!(t.tau_i128(i as u64 + 1).unwrap(), v);
        }
        assert_eq!(t.tau_i128(6).unwrap(), t.tau_i128(2).unwrap() * t.tau_i128(3).unwrap());
        assert!(matches!(t.tau(13), Err(Error::Resource(_))));
        assert!(t.tau(0).is_err());
    }

    #[test]
    fn jacobi_route_matches_pentagonal_route() {
        let n = 600;
        let fast = TauTable::compute(n).unwrap();
        let slow = pentagonal_delta(n);
        for k in 1..=n {
            assert_eq!(fast.tau(k as u64).unwrap(), slow[k], "n = {k}");
        }
    }

    #[test]
    fn cache_round_trip_and_extension() {
        let dir = tempfile::tempdir().unwrap();
        let cache = TauCache::new(dir.path());
        assert!(matches!(cache.load(50, false), Err(Error::Resource(_))));
        let t = cache.load(50, true).unwrap();
        assert_eq!(cache.stored_ceiling().unwrap(), Some(50));
        let text = std::fs::read_to_string(cache.path()).unwrap();
        assert!(text.starts_with("tau-cache v1 50\n1,1\n2,-24\n3,252\n"));
        // smaller request served from disk
        let again = cache.load(20, false).unwrap();
        assert_eq!(again, t);
        // larger request needs permission
        assert!(cache.load(80, false).is_err());
        let bigger = cache.load(80, true).unwrap();
        assert_eq!(bigger.ceiling(), 80);
        assert_eq!(cache.stored_ceiling().unwrap(), Some(80));
    }

    #[test]
    fn corrupt_cache_is_rejected() {
        let bad = "tau-cache v1 3\n1,1\n3,252\n2,-24\n";
        assert!(TauTable::read_from(bad.as_bytes()).is_err());
        let short = "tau-cache v1 4\n1,1\n2,-24\n";
        assert!(TauTable::read_from(short.as_bytes()).is_err());
        let header = "tau cache 4\n";
        assert!(TauTable::read_from(header.as_bytes()).is_err());
    }
}
