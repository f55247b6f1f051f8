//! Stream files and synthetic stream generators.
//!
//! The text format is one `<i> <v>` record per line. Lines starting with `#`
//! are comments, and a `# n=<n>` comment declares the domain size. The binary
//! format is a bare sequence of little-endian `(u32 item, i64 delta)` pairs.

use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Zipf};

use crate::error::{invalid, Error, Result};

/// One turnstile record `f_item += delta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamUpdate {
    pub item: u64,
    pub delta: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Stream {
    pub n: u64,
    pub updates: Vec<StreamUpdate>,
}

impl Stream {
    /// Parses the text format. Without a header, `n` is `fallback_n` or, failing
    /// that, the largest item seen.
    pub fn parse_text(reader: impl BufRead, fallback_n: Option<u64>) -> Result<Self> {
        let mut declared = None;
        let mut updates = Vec::new();
        for (k, line) in reader.lines().enumerate() {
            let line_no = k + 1;
            let line = line.map_err(|e| parse_error(line_no, e.to_string()))?;
            let text = line.trim();
            if text.is_empty() {
                continue;
            }
            if let Some(comment) = text.strip_prefix('#') {
                if let Some(value) = comment.trim().strip_prefix("n=") {
                    let n = value
                        .trim()
                        .parse::<u64>()
                        .map_err(|e| parse_error(line_no, format!("bad domain size: {e}")))?;
                    if n == 0 {
                        return Err(parse_error(line_no, "domain size must be at least 1".into()));
                    }
                    declared = Some(n);
                }
                continue;
            }
            let mut fields = text.split_whitespace();
            let (Some(i), Some(v), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(parse_error(line_no, format!("expected `<i> <v>`, got `{text}`")));
            };
            let item = i
                .parse::<u64>()
                .map_err(|e| parse_error(line_no, format!("bad item `{i}`: {e}")))?;
            let delta = v
                .parse::<i64>()
                .map_err(|e| parse_error(line_no, format!("bad delta `{v}`: {e}")))?;
            if item == 0 {
                return Err(parse_error(line_no, "items are 1-based".into()));
            }
            if let Some(n) = declared {
                if item > n {
                    return Err(parse_error(line_no, format!("item {item} exceeds n = {n}")));
                }
            }
            updates.push(StreamUpdate { item, delta });
        }
        let n = declared
            .or(fallback_n)
            .or_else(|| updates.iter().map(|u| u.item).max())
            .unwrap_or(1);
        if let Some(pos) = updates.iter().position(|u| u.item > n) {
            return Err(parse_error(pos + 1, format!("item {} exceeds n = {n}", updates[pos].item)));
        }
        Ok(Self { n, updates })
    }

    /// Parses the binary format. Errors report the record number.
    pub fn parse_binary(mut reader: impl Read, n: Option<u64>) -> Result<Self> {
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes)?;
        if bytes.len() % 12 != 0 {
            return Err(parse_error(bytes.len() / 12 + 1, "truncated record".into()));
        }
        let updates: Vec<StreamUpdate> = bytes
            .chunks_exact(12)
            .map(|c| StreamUpdate {
                item: u64::from(u32::from_le_bytes(c[..4].try_into().unwrap())),
                delta: i64::from_le_bytes(c[4..].try_into().unwrap()),
            })
            .collect();
        let n = n.or_else(|| updates.iter().map(|u| u.item).max()).unwrap_or(1);
        if let Some(pos) = updates.iter().position(|u| u.item == 0 || u.item > n) {
            return Err(parse_error(pos + 1, format!("item {} outside [1, {n}]", updates[pos].item)));
        }
        Ok(Self { n, updates })
    }

    pub fn write_text(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "# n={}", self.n)?;
        for u in &self.updates {
            writeln!(out, "{} {}", u.item, u.delta)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_binary(&self, mut out: impl Write) -> Result<()> {
        for u in &self.updates {
            let item = u32::try_from(u.item).map_err(|_| invalid("item", format!("{} does not fit in 32 bits", u.item)))?;
            out.write_all(&item.to_le_bytes())?;
            out.write_all(&u.delta.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }
}

fn parse_error(line: usize, reason: String) -> Error {
    Error::Parse { line, reason }
}

/// Shape of a synthetic stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    /// Items drawn with probability proportional to `rank^-s`.
    Zipf(f64),
    Uniform,
    /// `heavy` items at frequency `heavy_f`; every other item gets a
    /// frequency in `[1, light_max]`.
    Planted { heavy: u64, heavy_f: i64, light_max: i64 },
    /// Large insertions later cancelled down to unit frequencies.
    Adversarial,
}

/// Magnitude inserted and then almost cancelled by the adversarial generator.
pub const CHURN: i64 = 1_000_000;

impl FromStr for Distribution {
    type Err = Error;

    /// Accepts `zipf:<s>`, `uniform`, `planted:<h>,<f>,<lmax>`, `adversarial`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let bad = |reason: &str| invalid("dist", format!("`{s}`: {reason}"));
        match name {
            "zipf" => {
                let exponent = if args.is_empty() { 1.1 } else { args.parse().map_err(|_| bad("bad exponent"))? };
                if !(exponent > 0.0 && f64::is_finite(exponent)) {
                    return Err(bad("exponent must be positive"));
                }
                Ok(Self::Zipf(exponent))
            }
            "uniform" if args.is_empty() => Ok(Self::Uniform),
            "adversarial" if args.is_empty() => Ok(Self::Adversarial),
            "planted" => {
                let parts: Vec<&str> = args.split(',').collect();
                let [h, f, l] = parts[..] else {
                    return Err(bad("expected planted:<h>,<f>,<lmax>"));
                };
                let heavy = h.trim().parse().map_err(|_| bad("bad heavy count"))?;
                let heavy_f = f.trim().parse().map_err(|_| bad("bad heavy frequency"))?;
                let light_max = l.trim().parse().map_err(|_| bad("bad light maximum"))?;
                if heavy_f < 1 || light_max < 0 {
                    return Err(bad("frequencies must be nonnegative, heavy at least 1"));
                }
                Ok(Self::Planted { heavy, heavy_f, light_max })
            }
            _ => Err(bad("unknown distribution")),
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zipf(s) => write!(f, "zipf:{s}"),
            Self::Uniform => write!(f, "uniform"),
            Self::Planted { heavy, heavy_f, light_max } => write!(f, "planted:{heavy},{heavy_f},{light_max}"),
            Self::Adversarial => write!(f, "adversarial"),
        }
    }
}

/// Deterministic synthetic stream of exactly `m` records over `[1, n]`.
///
/// With `turnstile`, every item gets a random final sign, and the planted
/// shape splits each frequency into positive and negative pieces. The
/// adversarial shape always contains deletions.
pub fn generate(dist: Distribution, n: u64, m: u64, seed: u64, turnstile: bool) -> Result<Stream> {
    if n == 0 {
        return Err(invalid("n", "domain size must be at least 1"));
    }
    if m == 0 {
        return Err(invalid("m", "need at least one record"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Signs use their own stream so both modes draw the same items.
    let mut sign_rng = ChaCha8Rng::seed_from_u64(seed);
    sign_rng.set_stream(1);
    let signs: Vec<i64> = if turnstile {
        (0..n).map(|_| if sign_rng.random::<bool>() { 1 } else { -1 }).collect()
    } else {
        vec![1; n as usize]
    };
    let sign = |item: u64| signs[(item - 1) as usize];
    let updates = match dist {
        Distribution::Uniform => (0..m)
            .map(|_| {
                let item = rng.random_range(1..=n);
                StreamUpdate { item, delta: sign(item) }
            })
            .collect(),
        Distribution::Zipf(s) => {
            let zipf = Zipf::new(n as f64, s).map_err(|e| invalid("dist", e.to_string()))?;
            (0..m)
                .map(|_| {
                    let item = (zipf.sample(&mut rng) as u64).clamp(1, n);
                    StreamUpdate { item, delta: sign(item) }
                })
                .collect()
        }
        Distribution::Planted { heavy, heavy_f, light_max } => {
            planted(&mut rng, n, m, heavy, heavy_f, light_max, turnstile, &signs)?
        }
        Distribution::Adversarial => adversarial(&mut rng, n, m),
    };
    Ok(Stream { n, updates })
}

#[allow(clippy::too_many_arguments)]
fn planted(
    rng: &mut ChaCha8Rng,
    n: u64,
    m: u64,
    heavy: u64,
    heavy_f: i64,
    light_max: i64,
    turnstile: bool,
    signs: &[i64],
) -> Result<Vec<StreamUpdate>> {
    if heavy > n {
        return Err(invalid("dist", format!("{heavy} heavy items exceed n = {n}")));
    }
    let mut items: Vec<u64> = (1..=n).collect();
    items.shuffle(rng);
    let mut targets: Vec<(u64, i64)> = items
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let f = if (k as u64) < heavy {
                heavy_f
            } else if light_max == 0 {
                0
            } else {
                rng.random_range(1..=light_max)
            };
            (i, f * signs[(i - 1) as usize])
        })
        .filter(|&(_, f)| f != 0)
        .collect();
    targets.sort_unstable();
    let z = targets.len() as u64;
    if m < z {
        return Err(invalid("m", format!("{m} records cannot carry {z} nonzero items")));
    }
    // Spread m records over the nonzero items; each item's pieces sum to its
    // target. In turnstile mode the extra pieces of an item alternate in sign.
    let mut updates = Vec::with_capacity(m as usize);
    for (k, &(item, f)) in targets.iter().enumerate() {
        let pieces = m / z + u64::from((k as u64) < m % z);
        updates.extend(split(f, pieces, turnstile).into_iter().map(|delta| StreamUpdate { item, delta }));
    }
    updates.shuffle(rng);
    Ok(updates)
}

fn split(total: i64, pieces: u64, turnstile: bool) -> Vec<i64> {
    let count = pieces as i64;
    if turnstile && pieces >= 3 {
        // `total` then pairs of +1/-1, with a trailing 0 on even counts.
        let mut parts = vec![total];
        for k in 1..count {
            parts.push(match (k % 2, k == count - 1) {
                (1, true) => 0,
                (1, false) => 1,
                _ => -1,
            });
        }
        return parts;
    }
    let base = total / count;
    let rem = total % count;
    (0..count).map(|k| base + i64::from(k < rem.abs()) * rem.signum()).collect()
}

fn adversarial(rng: &mut ChaCha8Rng, n: u64, m: u64) -> Vec<StreamUpdate> {
    let pairs = m / 2;
    let items: Vec<u64> = (0..pairs).map(|_| rng.random_range(1..=n)).collect();
    let mut updates: Vec<StreamUpdate> = items.iter().map(|&item| StreamUpdate { item, delta: CHURN }).collect();
    let mut deletes: Vec<StreamUpdate> = items
        .iter()
        .map(|&item| StreamUpdate { item, delta: 1 - CHURN })
        .collect();
    deletes.shuffle(rng);
    updates.extend(deletes);
    if m % 2 == 1 {
        updates.push(StreamUpdate { item: rng.random_range(1..=n), delta: 1 });
    }
    updates
}
