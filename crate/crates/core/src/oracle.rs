//! Exact ground truth: the full frequency vector, its moments and residuals,
//! and cell-by-cell recomputation of every sketch from it.

use crate::countsketch::CountSketchTable;
use crate::error::{invalid, Error, Result};
use crate::hash::KWiseHash;
use crate::stable::StableVariateSource;

/// Dense frequency vector over `[1, n]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactState {
    f: Vec<i64>,
}

impl ExactState {
    pub fn new(n: u64) -> Self {
        Self { f: vec![0; n as usize] }
    }

    /// `frequencies[i - 1]` is `f_i`.
    pub fn from_frequencies(frequencies: Vec<i64>) -> Self {
        Self { f: frequencies }
    }

    pub fn n(&self) -> u64 {
        self.f.len() as u64
    }

    pub fn update(&mut self, item: u64, delta: i64) -> Result<()> {
        let n = self.n();
        let slot = item
            .checked_sub(1)
            .and_then(|k| self.f.get_mut(k as usize))
            .ok_or(Error::ItemOutOfRange { item, n })?;
        *slot = slot
            .checked_add(delta)
            .ok_or(Error::Overflow { limit: i64::MAX as u64 })?;
        Ok(())
    }

    pub fn frequency(&self, item: u64) -> i64 {
        self.f[(item - 1) as usize]
    }

    pub fn frequencies(&self) -> &[i64] {
        &self.f
    }

    /// Items ordered by `|f|` descending, ties to the smaller index.
    pub fn ranked_items(&self) -> Vec<u64> {
        let mut items: Vec<u64> = (1..=self.n()).collect();
        items.sort_by(|&a, &b| {
            self.frequency(b)
                .unsigned_abs()
                .cmp(&self.frequency(a).unsigned_abs())
                .then(a.cmp(&b))
        });
        items
    }

    /// `F_p = Σ |f_i|^p`.
    pub fn moment(&self, p: f64) -> f64 {
        moment_of(self.f.iter().copied(), p)
    }

    /// `Σ_{i in items} |f_i|^p`.
    pub fn moment_over(&self, items: &[u64], p: f64) -> f64 {
        moment_of(items.iter().map(|&i| self.frequency(i)), p)
    }

    /// `F_p^res(k)`: the moment left after dropping the `k` largest `|f_i|`.
    pub fn residual(&self, p: f64, k: usize) -> f64 {
        let ranked = self.ranked_items();
        let tail: Vec<u64> = ranked.into_iter().skip(k).collect();
        self.moment_over(&tail, p)
    }

    /// Exact integer `F_2^res(k)`.
    pub fn residual_f2(&self, k: usize) -> u128 {
        self.ranked_items()
            .into_iter()
            .skip(k)
            .map(|i| {
                let a = u128::from(self.frequency(i).unsigned_abs());
                a * a
            })
            .sum()
    }

    /// Items with `f_i^2 >= 4 F_2^res(4B) / B`, from exact quantities.
    pub fn heavy_set(&self, scale: u64) -> Vec<u64> {
        let residual = self.residual_f2(4 * scale as usize);
        (1..=self.n())
            .filter(|&i| {
                let a = u128::from(self.frequency(i).unsigned_abs());
                a > 0 && a * a * u128::from(scale) >= 4 * residual
            })
            .collect()
    }

    /// Recomputes every counter of `table` as `Σ_{h_j(i) = b} f_i xi_j(i)`,
    /// row-major.
    pub fn countsketch_cells(&self, table: &CountSketchTable) -> Vec<i64> {
        let cols = table.cols() as usize;
        let mut cells = vec![0i64; table.rows() * cols];
        for j in 0..table.rows() {
            for (k, &f) in self.f.iter().enumerate() {
                if f == 0 {
                    continue;
                }
                let i = k as u64 + 1;
                let b = (table.bucket_hash(j).eval(i) - 1) as usize;
                cells[j * cols + b] += f * table.sign_hash(j).eval(i);
            }
        }
        cells
    }

    /// Same, in floating point from the unrounded variates.
    pub fn stable_values(&self, bucket_hash: &KWiseHash, source: &StableVariateSource) -> Vec<[f64; 3]> {
        let mut cells = vec![[0.0f64; 3]; bucket_hash.range() as usize];
        for (k, &f) in self.f.iter().enumerate() {
            if f == 0 {
                continue;
            }
            let i = k as u64 + 1;
            let b = bucket_hash.eval(i);
            let s = source.variates(b, i);
            for r in 0..3 {
                cells[(b - 1) as usize][r] += f as f64 * s[r];
            }
        }
        cells
    }

    /// Recomputes the fixed-point stable accumulators
    /// `X_{b,r} = Σ_{h(i) = b} f_i s_{b,r}(i)`.
    pub fn stable_cells(&self, bucket_hash: &KWiseHash, source: &StableVariateSource) -> Vec<[i128; 3]> {
        let mut cells = vec![[0i128; 3]; bucket_hash.range() as usize];
        for (k, &f) in self.f.iter().enumerate() {
            if f == 0 {
                continue;
            }
            let i = k as u64 + 1;
            let b = bucket_hash.eval(i);
            let s = source.fixed_variates(b, i);
            for r in 0..3 {
                cells[(b - 1) as usize][r] += i128::from(f) * i128::from(s[r]);
            }
        }
        cells
    }
}

fn moment_of(values: impl Iterator<Item = i64>, p: f64) -> f64 {
    if p == 1.0 {
        values.map(|x| u128::from(x.unsigned_abs())).sum::<u128>() as f64
    } else if p == 2.0 {
        values
            .map(|x| {
                let a = u128::from(x.unsigned_abs());
                a * a
            })
            .sum::<u128>() as f64
    } else {
        // Ascending order makes every residual a prefix sum of the same
        // sequence, so residuals are monotone in floating point too.
        let mut magnitudes: Vec<u64> = values.filter(|&x| x != 0).map(i64::unsigned_abs).collect();
        magnitudes.sort_unstable();
        magnitudes.into_iter().map(|a| (a as f64).powf(p)).sum()
    }
}

/// Both sides of the tail inequality
/// `Σ_{j > B} |f_(j)|^q <= B^{1 - q/p} (Σ_j |f_(j)|^p)^{q/p}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailBound {
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
}

pub fn check_tail_bound(state: &ExactState, p: f64, q: f64, scale: u64) -> Result<TailBound> {
    if !(p > 0.0 && q >= p) {
        return Err(invalid("q", format!("need 0 < p <= q, got p = {p}, q = {q}")));
    }
    if scale == 0 {
        return Err(invalid("B", "must be at least 1"));
    }
    // Ascending order: partial sums of nonnegative terms never decrease, so
    // the q = p case compares a prefix against its own completion.
    let mut magnitudes: Vec<f64> = state.frequencies().iter().map(|x| x.unsigned_abs() as f64).collect();
    magnitudes.sort_by(f64::total_cmp);
    let tail_len = magnitudes.len().saturating_sub(scale as usize);
    let lhs: f64 = magnitudes[..tail_len].iter().map(|a| a.powf(q)).sum();
    let fp: f64 = magnitudes.iter().map(|a| a.powf(p)).sum();
    let rhs = (scale as f64).powf(1.0 - q / p) * fp.powf(q / p);
    Ok(TailBound {
        holds: lhs <= rhs,
        lhs,
        rhs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn moments_by_hand() {
        assert_eq!(ExactState::new(5).moment(1.0), 0.0);
        let s = ExactState::from_frequencies(vec![3, -4]);
        assert_eq!(s.moment(1.0), 7.0);
        assert_eq!(s.moment(2.0), 25.0);
        assert!((s.moment(0.5) - (3f64.sqrt() + 2.0)).abs() < 1e-15);
    }

    #[test]
    fn residual_by_hand() {
        let s = ExactState::from_frequencies(vec![5, 4, 3, 2, 1]);
        assert_eq!(s.residual(2.0, 0), s.moment(2.0));
        assert_eq!(s.residual(2.0, 2), 14.0);
        assert_eq!(s.residual_f2(2), 14);
        assert_eq!(s.residual(2.0, 5), 0.0);
        let mixed = ExactState::from_frequencies(vec![-2, 7, 2, -7]);
        assert_eq!(mixed.ranked_items(), vec![2, 4, 1, 3]);
        assert_eq!(mixed.residual(1.0, 1), 11.0);
    }

    #[test]
    fn update_and_domain() {
        let mut s = ExactState::new(3);
        s.update(1, 5).unwrap();
        s.update(1, -8).unwrap();
        s.update(3, 2).unwrap();
        assert_eq!(s.frequencies(), &[-3, 0, 2]);
        assert!(s.update(0, 1).is_err());
        assert!(s.update(4, 1).is_err());
    }

    #[test]
    fn tail_bound_by_hand() {
        let ones = ExactState::from_frequencies(vec![1; 100]);
        let t = check_tail_bound(&ones, 1.0, 2.0, 10).unwrap();
        assert_eq!((t.lhs, t.rhs, t.holds), (90.0, 1000.0, true));
        let t = check_tail_bound(&ones, 1.0, 1.0, 10).unwrap();
        assert_eq!((t.lhs, t.rhs, t.holds), (90.0, 100.0, true));
        let zero = ExactState::new(4);
        assert!(check_tail_bound(&zero, 1.0, 2.0, 1).unwrap().holds);
        assert!(check_tail_bound(&ones, 2.0, 1.0, 1).is_err());
        assert!(check_tail_bound(&ones, 1.0, 2.0, 0).is_err());
    }

    #[test]
    fn heavy_set_edges() {
        assert!(ExactState::new(10).heavy_set(4).is_empty());
        let mut one = ExactState::new(10);
        one.update(6, -3).unwrap();
        assert_eq!(one.heavy_set(4), vec![6]);
        // 200 unit items, B = 1: residual past 4 items is 196, threshold 784.
        let flat = ExactState::from_frequencies(vec![1; 200]);
        assert!(flat.heavy_set(1).is_empty());
    }

    proptest! {
        #[test]
        fn residual_is_monotone(f in proptest::collection::vec(-1000i64..1000, 1..60), p in 0.3f64..3.0) {
            let s = ExactState::from_frequencies(f);
            prop_assert_eq!(s.residual(p, 0), s.moment(p));
            let curve: Vec<f64> = (0..=s.n() as usize).map(|k| s.residual(p, k)).collect();
            prop_assert!(curve.windows(2).all(|w| w[1] <= w[0]));
            prop_assert_eq!(*curve.last().unwrap(), 0.0);
        }

        #[test]
        fn tail_bound_never_fails(
            f in proptest::collection::vec(-10_000i64..10_000, 1..200),
            p in 0.1f64..2.0,
            extra in 0.0f64..2.0,
            scale in 1u64..50,
        ) {
            let s = ExactState::from_frequencies(f);
            let t = check_tail_bound(&s, p, p + extra, scale).unwrap();
            prop_assert!(t.holds, "{:?}", t);
        }
    }
}
