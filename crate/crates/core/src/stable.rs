//! p-stable variates, their fractional-moment constants, and the two classic
//! stable-sketch baselines (median of absolute values, geometric means).

use std::f64::consts::PI;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Result};

/// Default magnitude cap applied to every variate.
pub const DEFAULT_TRUNCATION: f64 = 1e9;

/// Fractional bits of the fixed-point form of a variate.
pub const FIXED_BITS: u32 = 32;

/// Largest cap whose fixed-point variates fit in an `i64`.
pub const MAX_TRUNCATION: f64 = (1u64 << 31) as f64;

/// `round(x 2^32)`. Requires `|x| <= MAX_TRUNCATION`.
#[inline]
pub fn to_fixed(x: f64) -> i64 {
    (x * (1u64 << FIXED_BITS) as f64).round() as i64
}

/// Inverse of [`to_fixed`] for accumulated sums.
#[inline]
pub fn from_fixed(x: i128) -> f64 {
    x as f64 / (1u64 << FIXED_BITS) as f64
}

/// Deterministic source of symmetric p-stable variates `s_{b,r}(i)`.
///
/// Each `(bucket, item)` pair addresses one ChaCha8 block: the bucket selects
/// the stream and the item the block offset. Replica `r` reads two words of
/// that block, so the three replicas of a bucket are independent and buckets
/// never share randomness.
#[derive(Debug, Clone, PartialEq)]
pub struct StableVariateSource {
    key: [u8; 32],
    p: f64,
    cap: f64,
}

impl StableVariateSource {
    pub fn new(seed: u64, p: f64, cap: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 2.0) {
            return Err(invalid("p", format!("stability index {p} not in (0, 2]")));
        }
        if !(cap > 0.0 && cap <= MAX_TRUNCATION) {
            return Err(invalid("cap", format!("truncation cap {cap} not in (0, 2^31]")));
        }
        let mut key = [0u8; 32];
        ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut key);
        Ok(Self { key, p, cap })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    /// The three replicas `s_{b,1}(i), s_{b,2}(i), s_{b,3}(i)`.
    pub fn variates(&self, bucket: u64, item: u64) -> [f64; 3] {
        let mut words = [0u64; 6];
        self.block(bucket, item, &mut words);
        [0, 1, 2].map(|r| self.transform(words[2 * r], words[2 * r + 1]))
    }

    /// [`Self::variates`] rounded to multiples of `2^-32`. Sums of these are
    /// exact in integer arithmetic.
    pub fn fixed_variates(&self, bucket: u64, item: u64) -> [i64; 3] {
        self.variates(bucket, item).map(to_fixed)
    }

    /// Replica `r` in `1..=3` of bucket `bucket` at item `item`.
    pub fn variate(&self, bucket: u64, replica: usize, item: u64) -> f64 {
        assert!((1..=3).contains(&replica), "replica {replica} not in 1..=3");
        self.variates(bucket, item)[replica - 1]
    }

    fn block(&self, bucket: u64, item: u64, out: &mut [u64; 6]) {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(bucket);
        rng.set_word_pos(u128::from(item) * 16);
        for w in out.iter_mut() {
            *w = rng.next_u64();
        }
    }

    fn transform(&self, w1: u64, w2: u64) -> f64 {
        let u1 = open_unit(w1);
        if self.p == 1.0 {
            cauchy_unchecked(u1, self.cap)
        } else {
            stable_unchecked(self.p, u1, open_unit(w2), self.cap)
        }
    }
}

/// Maps 53 random bits to the open interval `(0, 1)`.
#[inline]
fn open_unit(word: u64) -> f64 {
    ((word >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard Cauchy variate by inversion, `tan(pi (u - 1/2))`, clamped to `±cap`.
pub fn cauchy_variate(u: f64, cap: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(invalid("u", format!("{u} not in the open interval (0, 1)")));
    }
    Ok(cauchy_unchecked(u, cap))
}

#[inline]
fn cauchy_unchecked(u: f64, cap: f64) -> f64 {
    (PI * (u - 0.5)).tan().clamp(-cap, cap)
}

/// Symmetric p-stable variate with characteristic function `exp(-|t|^p)`
/// via the Chambers-Mallows-Stuck transform of two open uniforms.
pub fn stable_variate(p: f64, u1: f64, u2: f64, cap: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 2.0) {
        return Err(invalid("p", format!("stability index {p} not in (0, 2]")));
    }
    for u in [u1, u2] {
        if !(u > 0.0 && u < 1.0) {
            return Err(invalid("u", format!("{u} not in the open interval (0, 1)")));
        }
    }
    Ok(if p == 1.0 {
        cauchy_unchecked(u1, cap)
    } else {
        stable_unchecked(p, u1, u2, cap)
    })
}

#[inline]
fn stable_unchecked(p: f64, u1: f64, u2: f64, cap: f64) -> f64 {
    let theta = PI * (u1 - 0.5);
    let w = -u2.ln();
    let x = (p * theta).sin() / theta.cos().powf(1.0 / p)
        * (((1.0 - p) * theta).cos() / w).powf((1.0 - p) / p);
    x.clamp(-cap, cap)
}

/// `C(p, q) = (2/pi) Gamma(1 - q/p) Gamma(q) sin(pi q / 2)`, the `q`-th absolute
/// moment of a standard symmetric p-stable variable.
pub fn stability_constant(p: f64, q: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 2.0) {
        return Err(invalid("p", format!("stability index {p} not in (0, 2]")));
    }
    if !(q > -1.0 && q < p) || q == 0.0 {
        return Err(invalid("q", format!("moment order {q} must satisfy -1 < q < p = {p}, q != 0")));
    }
    // For q < 0 both Gamma(q) and sin(pi q / 2) are negative; work with magnitudes.
    let ln_abs_gamma_q = if q > 0.0 {
        ln_gamma(q)
    } else {
        ln_gamma(q + 1.0) - (-q).ln()
    };
    let ln_value = ln_gamma(1.0 - q / p) + ln_abs_gamma_q;
    Ok(2.0 / PI * ln_value.exp() * (PI * q / 2.0).sin().abs())
}

/// `K_p = C(p, p/3)^-6 C(p, 2p/3)^3`, the normalised second moment of one
/// geometric-means bucket estimate.
pub fn kp_constant(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 2.0) {
        return Err(invalid("p", format!("{p} not in (0, 2)")));
    }
    let c1 = stability_constant(p, p / 3.0)?;
    let c2 = stability_constant(p, 2.0 * p / 3.0)?;
    Ok(c2.powi(3) / c1.powi(6))
}

/// Geometric-means estimate of `F_p` from `t >= 3` independent sketch values.
pub fn geometric_means_estimate(sketches: &[f64], p: f64) -> Result<f64> {
    let t = sketches.len();
    if t < 3 {
        return Err(invalid("sketches", format!("need at least 3 values, got {t}")));
    }
    if sketches.iter().any(|x| !x.is_finite()) {
        return Err(invalid("sketches", "values must be finite"));
    }
    if sketches.contains(&0.0) {
        return Ok(0.0);
    }
    let exponent = p / t as f64;
    let c = stability_constant(p, exponent)?;
    let log_sum: f64 = sketches.iter().map(|x| x.abs().ln()).sum();
    Ok((exponent * log_sum - t as f64 * c.ln()).exp())
}

/// Median of `|X_r|` with scale 1 (the median of a standard `|Cauchy|` is 1).
/// Even lengths take the lower median.
pub fn indyk_median_estimate(sketches: &[f64]) -> Result<f64> {
    if sketches.is_empty() {
        return Err(invalid("sketches", "median of an empty list"));
    }
    let mut abs: Vec<f64> = sketches.iter().map(|x| x.abs()).collect();
    let mid = (abs.len() - 1) / 2;
    let (_, median, _) = abs.select_nth_unstable_by(mid, f64::total_cmp);
    Ok(*median)
}
