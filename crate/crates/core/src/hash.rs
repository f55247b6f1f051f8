//! Limited-independence hash families over a prime field.
//!
//! A [`KWiseHash`] is a uniformly random polynomial of degree `t - 1` over
//! `GF(p)`, evaluated with Horner's rule and then folded onto `[1, C]` by
//! `value mod C + 1`. For any `t` distinct inputs below `p` the field values
//! are jointly uniform over the coefficient choice. The final fold skews each
//! bucket probability by at most `1/p`; with the default prime `2^61 - 1` and
//! `C <= 2^31` that is below `2^-30`.
//!
//! Every hash in an estimator is built from a seed obtained with
//! [`derive_seed`], so one master seed replays the whole run.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};

/// The Mersenne prime `2^61 - 1`, the default field modulus.
pub const MERSENNE_61: u64 = (1 << 61) - 1;

/// Role tags separating the seed streams of the different hash families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Role {
    StableBucket = 1,
    StableVariates = 2,
    TableBucket = 3,
    TableSign = 4,
    HeavyBucket = 5,
    HeavySign = 6,
}

/// Keyed pseudorandom function of `(master, role, index)`.
///
/// The master seed keys a ChaCha8 stream, the role picks the stream id and the
/// index picks the word offset, so distinct triples give unrelated seeds.
pub fn derive_seed(master: u64, role: Role, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(role as u64);
    rng.set_word_pos(u128::from(index) * 2);
    rng.next_u64()
}

/// Polynomial hash `[1, n] -> [1, C]` with `t`-wise independent field values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KWiseHash {
    // Highest-degree coefficient first.
    coefficients: Vec<u64>,
    prime: u64,
    range: u64,
    domain: u64,
}

impl KWiseHash {
    /// Draws a degree `t - 1` polynomial over `GF(2^61 - 1)` from `seed`.
    pub fn new(seed: u64, t: usize, n: u64, range: u64) -> Result<Self> {
        if t == 0 {
            return Err(invalid("t", "independence degree must be at least 1"));
        }
        check_sizes(MERSENNE_61, n, range)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coefficients = (0..t).map(|_| rng.random_range(0..MERSENNE_61)).collect();
        Ok(Self {
            coefficients,
            prime: MERSENNE_61,
            range,
            domain: n,
        })
    }

    /// Builds a hash from explicit coefficients (highest degree first) over an
    /// arbitrary prime. Used for exhaustive checks over small fields.
    pub fn from_coefficients(coefficients: Vec<u64>, prime: u64, n: u64, range: u64) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(invalid("t", "independence degree must be at least 1"));
        }
        if !is_prime(prime) {
            return Err(invalid("prime", format!("{prime} is not prime")));
        }
        check_sizes(prime, n, range)?;
        if let Some(c) = coefficients.iter().find(|&&c| c >= prime) {
            return Err(invalid("coefficients", format!("{c} is not reduced mod {prime}")));
        }
        Ok(Self {
            coefficients,
            prime,
            range,
            domain: n,
        })
    }

    /// Independence degree `t`.
    pub fn independence(&self) -> usize {
        self.coefficients.len()
    }

    pub fn coefficients(&self) -> &[u64] {
        &self.coefficients
    }

    pub fn prime(&self) -> u64 {
        self.prime
    }

    pub fn range(&self) -> u64 {
        self.range
    }

    pub fn domain(&self) -> u64 {
        self.domain
    }

    /// Polynomial value at `i` in `[0, prime)`.
    #[inline]
    pub fn field_value(&self, i: u64) -> u64 {
        debug_assert!(i >= 1 && i <= self.domain, "item {i} outside [1, {}]", self.domain);
        let mut coeffs = self.coefficients.iter();
        let mut acc = *coeffs.next().expect("at least one coefficient");
        if self.prime == MERSENNE_61 {
            for &c in coeffs {
                acc = add_mod_mersenne(mul_mod_mersenne(acc, i), c);
            }
        } else {
            let p = u128::from(self.prime);
            let x = u128::from(i);
            for &c in coeffs {
                acc = ((u128::from(acc) * x + u128::from(c)) % p) as u64;
            }
        }
        acc
    }

    /// Bucket of `i` in `[1, range]`.
    #[inline]
    pub fn eval(&self, i: u64) -> u64 {
        self.field_value(i) % self.range + 1
    }
}

fn check_sizes(prime: u64, n: u64, range: u64) -> Result<()> {
    if n == 0 {
        return Err(invalid("n", "domain size must be at least 1"));
    }
    if range == 0 {
        return Err(invalid("range", "hash range must be at least 1"));
    }
    // A range equal to the modulus is the identity reduction.
    if prime <= n || prime < range {
        return Err(invalid(
            "prime",
            format!("modulus {prime} must exceed n = {n} and be at least range = {range}"),
        ));
    }
    Ok(())
}

/// 4-wise independent sign hash `[1, n] -> {-1, +1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignHash {
    inner: KWiseHash,
}

impl SignHash {
    pub fn new(seed: u64, n: u64) -> Result<Self> {
        Ok(Self {
            inner: KWiseHash::new(seed, 4, n, 2)?,
        })
    }

    /// Wraps an explicit range-2 hash. The independence degree is whatever the
    /// inner hash carries.
    pub fn from_inner(inner: KWiseHash) -> Result<Self> {
        if inner.range() != 2 {
            return Err(invalid("range", "sign hash needs an inner range of 2"));
        }
        Ok(Self { inner })
    }

    pub fn inner(&self) -> &KWiseHash {
        &self.inner
    }

    /// `+1` when the inner hash lands on its first bucket, `-1` otherwise.
    #[inline]
    pub fn eval(&self, i: u64) -> i64 {
        if self.inner.eval(i) == 1 {
            1
        } else {
            -1
        }
    }
}

#[inline]
fn mul_mod_mersenne(a: u64, b: u64) -> u64 {
    let prod = u128::from(a) * u128::from(b);
    let lo = (prod as u64) & MERSENNE_61;
    let hi = (prod >> 61) as u64;
    add_mod_mersenne(lo, hi)
}

#[inline]
fn add_mod_mersenne(a: u64, b: u64) -> u64 {
    let s = a + b;
    if s >= MERSENNE_61 {
        s - MERSENNE_61
    } else {
        s
    }
}

/// Deterministic Miller-Rabin, exact for every `u64`.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &w in &WITNESSES {
        if n.is_multiple_of(w) {
            return n == w;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    let mul = |a: u64, b: u64| ((u128::from(a) * u128::from(b)) % u128::from(n)) as u64;
    let pow = |mut base: u64, mut exp: u64| {
        let mut acc = 1u64;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = mul(acc, base);
            }
            base = mul(base, base);
            exp >>= 1;
        }
        acc
    };
    'witness: for &a in &WITNESSES {
        let mut x = pow(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashMap;

    /// All coefficient tuples of length `t` over `GF(p)`.
    fn all_tuples(p: u64, t: usize) -> Vec<Vec<u64>> {
        let mut out = vec![vec![]];
        for _ in 0..t {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    (0..p).map(move |c| {
                        let mut v = prefix.clone();
                        v.push(c);
                        v
                    })
                })
                .collect();
        }
        out
    }

    #[test]
    fn same_seed_same_hash() {
        let a = KWiseHash::new(42, 4, 10, 5).unwrap();
        let b = KWiseHash::new(42, 4, 10, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.eval(3), a.eval(3));
        assert_eq!(a.eval(3), b.eval(3));
        assert_ne!(a, KWiseHash::new(43, 4, 10, 5).unwrap());
    }

    #[test]
    fn degree_zero_is_constant() {
        let h = KWiseHash::new(7, 1, 1000, 17).unwrap();
        let first = h.eval(1);
        assert!((1..=1000).all(|i| h.eval(i) == first));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(KWiseHash::new(1, 0, 10, 5).is_err());
        assert!(KWiseHash::new(1, 4, 10, 0).is_err());
        assert!(KWiseHash::new(1, 4, 0, 5).is_err());
        assert!(KWiseHash::from_coefficients(vec![1, 2], 9, 5, 5).is_err());
        assert!(KWiseHash::from_coefficients(vec![1, 2], 7, 7, 5).is_err());
        assert!(KWiseHash::from_coefficients(vec![1, 7], 7, 6, 5).is_err());
        assert!(SignHash::from_inner(KWiseHash::new(1, 4, 10, 3).unwrap()).is_err());
    }

    #[test]
    fn hand_evaluated_polynomial() {
        // 3x + 0 over GF(11) at x = 4 is 12 mod 11 = 1, bucket 2.
        let h = KWiseHash::from_coefficients(vec![3, 0], 11, 10, 11).unwrap();
        assert_eq!(h.field_value(4), 1);
        assert_eq!(h.eval(4), 2);
    }

    #[test]
    fn mersenne_path_matches_generic_reduction() {
        let h = KWiseHash::new(99, 9, 1 << 40, 1 << 20).unwrap();
        let p = u128::from(MERSENNE_61);
        for i in [1u64, 2, 3, 1000, 123_456_789, (1 << 40) - 1] {
            let mut acc = 0u128;
            for &c in h.coefficients() {
                acc = (acc * u128::from(i) + u128::from(c)) % p;
            }
            assert_eq!(h.field_value(i), acc as u64);
        }
    }

    #[test]
    fn pairwise_exhaustive_over_gf7() {
        let p = 7;
        let tuples = all_tuples(p, 2);
        assert_eq!(tuples.len(), 49);
        let hashes: Vec<_> = tuples
            .iter()
            .map(|c| KWiseHash::from_coefficients(c.clone(), p, 6, 6).unwrap())
            .collect();
        for x in 1..=6u64 {
            for y in 1..=6u64 {
                if x == y {
                    continue;
                }
                let mut joint: HashMap<(u64, u64), usize> = HashMap::new();
                for h in &hashes {
                    *joint.entry((h.field_value(x), h.field_value(y))).or_default() += 1;
                }
                assert_eq!(joint.len(), 49);
                assert!(joint.values().all(|&c| c == 1));
            }
            // Folding 7 field values onto 6 buckets: each bucket receives
            // floor(7/6) or ceil(7/6) field values, i.e. skew of one value.
            let mut per_bucket = [0usize; 7];
            for h in &hashes {
                per_bucket[h.eval(x) as usize] += 1;
            }
            let counts: Vec<_> = per_bucket[1..].iter().map(|&c| c / 7).collect();
            assert!(per_bucket[1..].iter().all(|&c| c % 7 == 0));
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            assert!(hi - lo <= 1, "{counts:?}");
        }
    }

    #[test]
    fn four_wise_exhaustive_over_gf13() {
        let p = 13;
        let points = [1u64, 4, 7, 12];
        let mut joint: HashMap<[u64; 4], usize> = HashMap::new();
        let mut signs: HashMap<[i64; 4], usize> = HashMap::new();
        for c in all_tuples(p, 4) {
            let inner = KWiseHash::from_coefficients(c, p, 12, 2).unwrap();
            let values = points.map(|x| inner.field_value(x));
            *joint.entry(values).or_default() += 1;
            let sign = SignHash::from_inner(inner).unwrap();
            *signs.entry(points.map(|x| sign.eval(x))).or_default() += 1;
        }
        // Field values: exactly uniform over 13^4 tuples.
        assert_eq!(joint.len(), 13usize.pow(4));
        assert!(joint.values().all(|&c| c == 1));
        // Signs: 7 of the 13 field values are even (+1) and 6 odd (-1), so a
        // pattern with k plus signs is hit 7^k 6^(4-k) times; patterns with the
        // same number of plus signs are equally frequent.
        assert_eq!(signs.len(), 16);
        for (pattern, &count) in &signs {
            let plus = pattern.iter().filter(|&&s| s == 1).count() as u32;
            assert_eq!(count, 7usize.pow(plus) * 6usize.pow(4 - plus));
        }
    }

    #[test]
    fn eight_wise_bucket_balance() {
        let h = KWiseHash::new(2024, 8, 100_000, 64).unwrap();
        let mut load = [0usize; 64];
        for i in 1..=100_000 {
            load[(h.eval(i) - 1) as usize] += 1;
        }
        let mean = 100_000.0 / 64.0;
        let max = *load.iter().max().unwrap() as f64;
        assert!(max <= 3.0 * mean, "max load {max} vs mean {mean}");
    }

    #[test]
    fn sign_balance_and_square() {
        let xi = SignHash::new(derive_seed(5, Role::TableSign, 0), 100_000).unwrap();
        let mut sum = 0i64;
        for i in 1..=100_000 {
            let s = xi.eval(i);
            assert_eq!(s * s, 1);
            sum += s;
        }
        let mean = sum as f64 / 100_000.0;
        assert!(mean.abs() <= 0.02, "mean {mean}");
    }

    #[test]
    fn derived_seeds_differ_by_role_and_index() {
        let a = derive_seed(1, Role::TableBucket, 0);
        assert_eq!(a, derive_seed(1, Role::TableBucket, 0));
        assert_ne!(a, derive_seed(1, Role::TableBucket, 1));
        assert_ne!(a, derive_seed(1, Role::TableSign, 0));
        assert_ne!(a, derive_seed(2, Role::TableBucket, 0));
    }

    #[test]
    fn primality() {
        let small: Vec<u64> = (0..50).filter(|&n| is_prime(n)).collect();
        assert_eq!(small, [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47]);
        assert!(is_prime(MERSENNE_61));
        assert!(!is_prime(MERSENNE_61 - 2));
        assert!(!is_prime(3_215_031_751)); // strong pseudoprime to bases 2, 3, 5, 7
    }

    proptest! {
        #[test]
        fn outputs_stay_in_range(seed: u64, t in 1usize..12, range in 1u64..10_000, i in 1u64..1_000_000) {
            let h = KWiseHash::new(seed, t, 1_000_000, range).unwrap();
            let b = h.eval(i);
            prop_assert!((1..=range).contains(&b));
            let xi = SignHash::new(seed, 1_000_000).unwrap();
            prop_assert!(matches!(xi.eval(i), -1 | 1));
        }
    }
}
