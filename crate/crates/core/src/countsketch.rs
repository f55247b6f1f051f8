//! CountSketch tables: signed bucket counters for point queries, top-k
//! extraction, and (residual) second-moment estimates.

use std::cmp::Reverse;
use std::collections::{BTreeSet, HashMap, HashSet};

use crate::error::{invalid, Error, Result};
use crate::hash::{derive_seed, KWiseHash, Role, SignHash};

/// Cells are `i64`; the total absolute update mass is capped here so no cell
/// can overflow.
pub const MASS_LIMIT: u64 = 1 << 62;

/// Default independence degree of the bucket hashes.
pub const BUCKET_INDEPENDENCE: usize = 8;

/// How a table remembers which items may be reported by [`CountSketchTable::top_k`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tracking {
    /// No candidate set; `top_k` returns nothing.
    Off,
    /// Every touched item index, `O(distinct items)` space.
    Exact,
    /// At most this many items with the largest estimated `|f|`, refreshed on
    /// each arrival.
    Bounded(usize),
}

#[derive(Debug, Clone)]
enum Candidates {
    Off,
    Exact(HashSet<u64>),
    Bounded {
        capacity: usize,
        current: HashMap<u64, f64>,
        // Smallest |estimate| first; among ties the larger index is evicted first.
        order: BTreeSet<(u64, Reverse<u64>)>,
    },
}

#[derive(Debug, Clone)]
pub struct CountSketchTable {
    rows: usize,
    cols: u64,
    domain: u64,
    cells: Vec<i64>,
    bucket_hashes: Vec<KWiseHash>,
    sign_hashes: Vec<SignHash>,
    mass: u64,
    candidates: Candidates,
}

impl CountSketchTable {
    /// `rows` independent rows of `cols` buckets over items `[1, n]`, every
    /// hash derived from `seed`.
    pub fn new(seed: u64, rows: usize, cols: u64, n: u64, independence: usize) -> Result<Self> {
        Self::with_roles(seed, Role::TableBucket, Role::TableSign, rows, cols, n, independence)
    }

    pub(crate) fn with_roles(
        seed: u64,
        bucket_role: Role,
        sign_role: Role,
        rows: usize,
        cols: u64,
        n: u64,
        independence: usize,
    ) -> Result<Self> {
        let bucket_hashes = (0..rows as u64)
            .map(|j| KWiseHash::new(derive_seed(seed, bucket_role, j), independence, n, cols))
            .collect::<Result<Vec<_>>>()?;
        let sign_hashes = (0..rows as u64)
            .map(|j| SignHash::new(derive_seed(seed, sign_role, j), n))
            .collect::<Result<Vec<_>>>()?;
        Self::from_hashes(bucket_hashes, sign_hashes)
    }

    /// Assembles a table from explicit per-row hashes.
    pub fn from_hashes(bucket_hashes: Vec<KWiseHash>, sign_hashes: Vec<SignHash>) -> Result<Self> {
        if bucket_hashes.is_empty() {
            return Err(invalid("rows", "a table needs at least one row"));
        }
        if bucket_hashes.len() != sign_hashes.len() {
            return Err(invalid("rows", "bucket and sign hash counts differ"));
        }
        let cols = bucket_hashes[0].range();
        let domain = bucket_hashes[0].domain();
        let consistent = bucket_hashes.iter().all(|h| h.range() == cols && h.domain() == domain)
            && sign_hashes.iter().all(|s| s.inner().domain() == domain);
        if !consistent {
            return Err(invalid("hashes", "rows disagree on range or domain"));
        }
        let rows = bucket_hashes.len();
        Ok(Self {
            rows,
            cols,
            domain,
            cells: vec![0; rows * cols as usize],
            bucket_hashes,
            sign_hashes,
            mass: 0,
            candidates: Candidates::Off,
        })
    }

    /// Enables candidate tracking. Call before ingesting.
    pub fn with_tracking(mut self, tracking: Tracking) -> Self {
        self.candidates = match tracking {
            Tracking::Off => Candidates::Off,
            Tracking::Exact => Candidates::Exact(HashSet::new()),
            Tracking::Bounded(capacity) => Candidates::Bounded {
                capacity: capacity.max(1),
                current: HashMap::new(),
                order: BTreeSet::new(),
            },
        };
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> u64 {
        self.cols
    }

    pub fn domain(&self) -> u64 {
        self.domain
    }

    pub fn bucket_hash(&self, row: usize) -> &KWiseHash {
        &self.bucket_hashes[row]
    }

    pub fn sign_hash(&self, row: usize) -> &SignHash {
        &self.sign_hashes[row]
    }

    /// Counters of one row, indexed by `bucket - 1`.
    pub fn row(&self, row: usize) -> &[i64] {
        let c = self.cols as usize;
        &self.cells[row * c..(row + 1) * c]
    }

    /// Counter at `bucket` in `[1, cols]`.
    pub fn cell(&self, row: usize, bucket: u64) -> i64 {
        self.row(row)[(bucket - 1) as usize]
    }

    /// Total `Σ |v|` ingested so far.
    pub fn mass(&self) -> u64 {
        self.mass
    }

    /// Heap footprint of the counters and hash coefficients.
    pub fn bytes(&self) -> usize {
        let coeffs: usize = self
            .bucket_hashes
            .iter()
            .map(|h| h.independence())
            .chain(self.sign_hashes.iter().map(|s| s.inner().independence()))
            .sum();
        self.cells.len() * std::mem::size_of::<i64>() + coeffs * std::mem::size_of::<u64>()
    }

    /// `T_j[h_j(i)] += v * xi_j(i)` for every row `j`.
    pub fn update(&mut self, item: u64, delta: i64) -> Result<()> {
        if item == 0 || item > self.domain {
            return Err(Error::ItemOutOfRange { item, n: self.domain });
        }
        self.mass = self
            .mass
            .checked_add(delta.unsigned_abs())
            .filter(|&m| m <= MASS_LIMIT)
            .ok_or(Error::Overflow { limit: MASS_LIMIT })?;
        self.apply(item, delta);
        self.track(item);
        Ok(())
    }

    // Every |cell| is bounded by the mass, so plain adds cannot overflow.
    #[inline]
    fn apply(&mut self, item: u64, delta: i64) {
        let c = self.cols as usize;
        for j in 0..self.rows {
            let b = (self.bucket_hashes[j].eval(item) - 1) as usize;
            self.cells[j * c + b] += delta * self.sign_hashes[j].eval(item);
        }
    }

    fn track(&mut self, item: u64) {
        let estimate = match &self.candidates {
            Candidates::Off => return,
            Candidates::Exact(_) => 0.0,
            Candidates::Bounded { .. } => self.point_estimate(item),
        };
        match &mut self.candidates {
            Candidates::Off => {}
            Candidates::Exact(set) => {
                set.insert(item);
            }
            Candidates::Bounded { capacity, current, order } => {
                if let Some(old) = current.insert(item, estimate) {
                    order.remove(&(old.abs().to_bits(), Reverse(item)));
                }
                order.insert((estimate.abs().to_bits(), Reverse(item)));
                if current.len() > *capacity {
                    let (_, Reverse(evicted)) = order.pop_first().expect("non-empty");
                    current.remove(&evicted);
                }
            }
        }
    }

    /// Whether the candidate set is known to hold every touched item.
    pub fn tracks_exactly(&self) -> bool {
        matches!(self.candidates, Candidates::Exact(_))
    }

    /// Candidate items in increasing index order.
    pub fn candidates(&self) -> Vec<u64> {
        let mut items: Vec<u64> = match &self.candidates {
            Candidates::Off => Vec::new(),
            Candidates::Exact(set) => set.iter().copied().collect(),
            Candidates::Bounded { current, .. } => current.keys().copied().collect(),
        };
        items.sort_unstable();
        items
    }

    /// Row `j`'s unbiased guess `T_j[h_j(i)] * xi_j(i)`.
    #[inline]
    pub fn row_estimate(&self, row: usize, item: u64) -> i64 {
        self.cell(row, self.bucket_hashes[row].eval(item)) * self.sign_hashes[row].eval(item)
    }

    /// Median over rows of the row estimates; an even row count averages the
    /// two middle values.
    pub fn point_estimate(&self, item: u64) -> f64 {
        let mut vals: Vec<i64> = (0..self.rows).map(|j| self.row_estimate(j, item)).collect();
        vals.sort_unstable();
        let mid = vals.len() / 2;
        if vals.len() % 2 == 1 {
            vals[mid] as f64
        } else {
            (vals[mid - 1] as f64 + vals[mid] as f64) / 2.0
        }
    }

    /// Candidates ranked by `|f̂|` descending, ties to the smaller index.
    pub fn ranked_candidates(&self) -> Vec<(u64, f64)> {
        let mut ranked: Vec<(u64, f64)> = self
            .candidates()
            .into_iter()
            .map(|i| (i, self.point_estimate(i)))
            .collect();
        ranked.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
        ranked
    }

    /// The `k` candidates with the largest `|f̂|`; fewer if fewer are known.
    pub fn top_k(&self, k: usize) -> Vec<(u64, f64)> {
        let mut ranked = self.ranked_candidates();
        ranked.truncate(k);
        ranked
    }

    /// Median over rows of `Σ_b T_j[b]^2`.
    pub fn estimate_f2(&self) -> f64 {
        let sums: Vec<f64> = (0..self.rows).map(|j| sum_squares(self.row(j))).collect();
        median(sums)
    }

    /// Estimate of `F_2^res(k)`.
    ///
    /// The top-`k` candidates' estimated contributions `f̂_i xi_j(i)` are
    /// subtracted from a copy of every row, and the median over rows of the
    /// remaining squared mass is taken after each removal. The result is the
    /// smallest of those medians for prefixes up to `k`, clamped at zero, so
    /// it never increases with `k`. When `k` covers every touched item the
    /// residual is zero.
    pub fn estimate_f2_res(&self, k: usize) -> f64 {
        let ranked = self.ranked_candidates();
        self.residual_from_ranked(&ranked, k)
    }

    pub(crate) fn residual_from_ranked(&self, ranked: &[(u64, f64)], k: usize) -> f64 {
        if self.tracks_exactly() && k >= ranked.len() {
            return 0.0;
        }
        let c = self.cols as usize;
        let mut residual: Vec<f64> = self.cells.iter().map(|&x| x as f64).collect();
        let mut sums: Vec<f64> = residual.chunks(c).map(sum_squares_f64).collect();
        let mut best = median(sums.clone());
        for &(item, estimate) in ranked.iter().take(k) {
            for (j, sum) in sums.iter_mut().enumerate() {
                let b = (self.bucket_hashes[j].eval(item) - 1) as usize;
                let cell = &mut residual[j * c + b];
                let next = *cell - estimate * self.sign_hashes[j].eval(item) as f64;
                *sum += next * next - *cell * *cell;
                *cell = next;
            }
            best = best.min(median(sums.clone()));
        }
        best.max(0.0)
    }
}

fn sum_squares(row: &[i64]) -> f64 {
    row.iter().map(|&x| (x as f64) * (x as f64)).sum()
}

fn sum_squares_f64(row: &[f64]) -> f64 {
    row.iter().map(|x| x * x).sum()
}

fn median(mut vals: Vec<f64>) -> f64 {
    vals.sort_by(f64::total_cmp);
    let mid = vals.len() / 2;
    if vals.len() % 2 == 1 {
        vals[mid]
    } else {
        (vals[mid - 1] + vals[mid]) / 2.0
    }
}

/// The tall CountSketch used to find heavy hitters. It always tracks the
/// items it has seen so candidates can be enumerated.
#[derive(Debug, Clone)]
pub struct HeavyHitterStructure {
    table: CountSketchTable,
}

impl HeavyHitterStructure {
    pub fn new(seed: u64, rows: usize, cols: u64, n: u64, tracking: Tracking) -> Result<Self> {
        let table = CountSketchTable::with_roles(
            seed,
            Role::HeavyBucket,
            Role::HeavySign,
            rows,
            cols,
            n,
            BUCKET_INDEPENDENCE,
        )?
        .with_tracking(tracking);
        Ok(Self { table })
    }

    /// `⌈log2 n⌉ + 2` rows.
    pub fn default_rows(n: u64) -> usize {
        let bits = 64 - n.saturating_sub(1).leading_zeros() as usize;
        bits + 2
    }

    pub fn table(&self) -> &CountSketchTable {
        &self.table
    }

    pub fn update(&mut self, item: u64, delta: i64) -> Result<()> {
        self.table.update(item, delta)
    }
}

impl std::ops::Deref for HeavyHitterStructure {
    type Target = CountSketchTable;

    fn deref(&self) -> &CountSketchTable {
        &self.table
    }
}
