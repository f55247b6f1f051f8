//! The hybrid heavy/light `F_1` estimator.
//!
//! Each update touches one bucket of a Cauchy-sketch table (three
//! accumulators), one cell in each of `g` CountSketch rows, and one cell in
//! each row of a tall heavy-hitter CountSketch. At query time items are split
//! by their estimated squared frequency against the residual second moment:
//!
//! * heavy items are read back from a CountSketch row where no other heavy
//!   item shares their bucket;
//! * light items are summed by geometric-means estimates over the stable
//!   buckets no heavy item hashes to, rescaled by the probability that a
//!   bucket escapes every heavy item.

use std::collections::HashMap;
use std::time::Instant;

use crate::countsketch::{CountSketchTable, HeavyHitterStructure, Tracking, BUCKET_INDEPENDENCE, MASS_LIMIT};
use crate::error::{invalid, Error, Result};
use crate::hash::{derive_seed, KWiseHash, Role};
use crate::stable::{from_fixed, stability_constant, StableVariateSource, DEFAULT_TRUNCATION};
#[cfg(doc)]
use crate::stable::FIXED_BITS;

/// Default ceiling on sketch memory.
pub const DEFAULT_MEMORY_CAP: u64 = 1 << 30;

/// Sizing and seeding of an [`Estimator`].
///
/// [`EstimatorConfig::new`] derives every size from the user accuracy; the
/// `with_*` methods override individual sizes for experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    /// Accuracy requested by the caller, in `(0, 1/2]`.
    pub epsilon_user: f64,
    /// Internal accuracy, `epsilon_user / 10`.
    pub epsilon: f64,
    /// Domain size; items are `1..=n`.
    pub n: u64,
    /// `B = ⌈1/ε²⌉`.
    pub scale: u64,
    /// Buckets per table, `C = 64B`.
    pub buckets: u64,
    /// CountSketch rows used for heavy read-back, `g`.
    pub rows: usize,
    /// Rows of the heavy-hitter structure.
    pub heavy_rows: usize,
    /// Independence of the stable table's bucket hash.
    pub independence: usize,
    /// Independence of the CountSketch bucket hashes.
    pub table_independence: usize,
    pub seed: u64,
    /// Stability index of the light sketches (moment order estimated).
    pub p: f64,
    pub truncation: f64,
    pub tracking: Tracking,
    pub memory_cap: u64,
}

impl EstimatorConfig {
    pub fn new(epsilon_user: f64, n: u64, seed: u64) -> Result<Self> {
        if !(epsilon_user > 0.0 && epsilon_user <= 0.5) {
            return Err(invalid("epsilon", format!("{epsilon_user} not in (0, 1/2]")));
        }
        if n == 0 {
            return Err(invalid("n", "domain size must be at least 1"));
        }
        let epsilon = epsilon_user / 10.0;
        let scale = ceil_tolerant(1.0 / (epsilon * epsilon)) as u64;
        Ok(Self {
            epsilon_user,
            epsilon,
            n,
            scale,
            buckets: 64 * scale,
            rows: Self::default_rows(epsilon),
            heavy_rows: HeavyHitterStructure::default_rows(n),
            independence: Self::default_independence(epsilon),
            table_independence: BUCKET_INDEPENDENCE,
            seed,
            p: 1.0,
            truncation: DEFAULT_TRUNCATION,
            tracking: Tracking::Exact,
            memory_cap: DEFAULT_MEMORY_CAP,
        })
    }

    /// `g = ⌈2 + log2(5.1/ε²)⌉`.
    pub fn default_rows(epsilon: f64) -> usize {
        ceil_tolerant(2.0 + (5.1 / (epsilon * epsilon)).log2()) as usize
    }

    /// The larger row count `⌈log2(36 B² / ε⁴)⌉`.
    pub fn conservative_rows(epsilon: f64) -> usize {
        let b = ceil_tolerant(1.0 / (epsilon * epsilon));
        ceil_tolerant((36.0 * b * b / epsilon.powi(4)).log2()) as usize
    }

    /// `t = max(8, ⌈log2(1/ε²)⌉)`.
    pub fn default_independence(epsilon: f64) -> usize {
        (ceil_tolerant((1.0 / (epsilon * epsilon)).log2()) as usize).max(8)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.p = p;
        self
    }

    pub fn with_buckets(mut self, buckets: u64) -> Self {
        self.buckets = buckets;
        self
    }

    pub fn with_rows(mut self, rows: usize) -> Self {
        self.rows = rows;
        self
    }

    pub fn with_heavy_rows(mut self, rows: usize) -> Self {
        self.heavy_rows = rows;
        self
    }

    pub fn with_independence(mut self, t: usize) -> Self {
        self.independence = t;
        self
    }

    pub fn with_tracking(mut self, tracking: Tracking) -> Self {
        self.tracking = tracking;
        self
    }

    pub fn with_truncation(mut self, cap: f64) -> Self {
        self.truncation = cap;
        self
    }

    pub fn with_memory_cap(mut self, bytes: u64) -> Self {
        self.memory_cap = bytes;
        self
    }

    /// Largest heavy count used in the light correction, `⌈5.1B⌉`.
    pub fn heavy_clamp(&self) -> usize {
        ceil_tolerant(5.1 * self.scale as f64) as usize
    }

    /// Counter memory in bytes.
    pub fn counter_bytes(&self) -> u64 {
        let c = self.buckets as u128;
        let cells = 3 * c + (self.rows + self.heavy_rows) as u128 * c;
        (cells * 8).min(u64::MAX as u128) as u64
    }

    fn validate(&self) -> Result<()> {
        if self.buckets == 0 {
            return Err(invalid("buckets", "need at least one bucket"));
        }
        if self.rows == 0 || self.heavy_rows == 0 {
            return Err(invalid("rows", "need at least one row per table"));
        }
        if !(self.p > 0.0 && self.p < 2.0) {
            return Err(invalid("p", format!("{} not in (0, 2)", self.p)));
        }
        let needed = self.counter_bytes();
        if needed > self.memory_cap {
            return Err(Error::MemoryCap {
                needed,
                cap: self.memory_cap,
            });
        }
        Ok(())
    }
}

// ceil that ignores rounding noise such as 1/0.01² = 10000.000000000002.
fn ceil_tolerant(x: f64) -> f64 {
    (x - 1e-9 * x.abs().max(1.0)).ceil()
}

/// The table of `C` buckets, each holding three p-stable sketches.
///
/// Accumulators are fixed point with [`FIXED_BITS`] fractional bits, so the
/// state is an exact linear function of the frequency vector. With the
/// update mass capped at 2^62 and variates below 2^31, no sum leaves `i128`.
#[derive(Debug, Clone)]
pub struct StableTable {
    cells: Vec<[i128; 3]>,
    hash: KWiseHash,
    source: StableVariateSource,
}

impl StableTable {
    fn new(config: &EstimatorConfig) -> Result<Self> {
        let hash = KWiseHash::new(
            derive_seed(config.seed, Role::StableBucket, 0),
            config.independence,
            config.n,
            config.buckets,
        )?;
        let source = StableVariateSource::new(
            derive_seed(config.seed, Role::StableVariates, 0),
            config.p,
            config.truncation,
        )?;
        Ok(Self {
            cells: vec![[0; 3]; config.buckets as usize],
            hash,
            source,
        })
    }

    pub fn bucket_hash(&self) -> &KWiseHash {
        &self.hash
    }

    pub fn source(&self) -> &StableVariateSource {
        &self.source
    }

    /// Raw fixed-point accumulators indexed by `bucket - 1`.
    pub fn cells(&self) -> &[[i128; 3]] {
        &self.cells
    }

    /// `X_{b,1}, X_{b,2}, X_{b,3}` for a 1-based bucket.
    pub fn values(&self, bucket: u64) -> [f64; 3] {
        self.cells[(bucket - 1) as usize].map(from_fixed)
    }

    pub fn bytes(&self) -> usize {
        self.cells.len() * std::mem::size_of::<[i128; 3]>()
            + self.hash.independence() * std::mem::size_of::<u64>()
    }

    fn update(&mut self, item: u64, delta: i64) {
        let b = self.hash.eval(item);
        let s = self.source.fixed_variates(b, item);
        let cell = &mut self.cells[(b - 1) as usize];
        let v = i128::from(delta);
        for r in 0..3 {
            cell[r] += v * i128::from(s[r]);
        }
    }
}

/// A heavy item with its estimated frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeavyItem {
    pub item: u64,
    pub estimate: f64,
    /// `sgn(f̂)`, with `sgn(0) = +1`.
    pub sign: i64,
}

/// Split of the touched items into heavy and light.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Classification {
    heavy: Vec<HeavyItem>,
    light: Vec<u64>,
    residual: f64,
    threshold: f64,
}

impl Classification {
    /// No heavy items at all.
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn heavy(&self) -> &[HeavyItem] {
        &self.heavy
    }

    pub fn heavy_items(&self) -> Vec<u64> {
        self.heavy.iter().map(|h| h.item).collect()
    }

    pub fn light(&self) -> &[u64] {
        &self.light
    }

    pub fn heavy_count(&self) -> usize {
        self.heavy.len()
    }

    /// `F̂_2^res(4B)` used for the split.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// `4 F̂_2^res(4B) / B`.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn is_heavy(&self, item: u64) -> bool {
        self.heavy.binary_search_by_key(&item, |h| h.item).is_ok()
    }
}

/// One heavy item's contribution `Y_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeavyTerm {
    pub item: u64,
    /// Table index `θ(i)` in `1..=g` where the item is alone among heavy items.
    pub row: Option<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightEstimate {
    pub value: f64,
    /// `C_L = (1 - 1/C)^{-|H|}` with `|H|` clamped at `⌈5.1B⌉`.
    pub correction: f64,
    pub buckets_used: usize,
    pub clamped: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub classify_ns: u128,
    pub heavy_ns: u128,
    pub light_ns: u128,
    pub stable_bytes: usize,
    pub table_bytes: usize,
    pub heavy_table_bytes: usize,
    pub candidates: usize,
    pub residual: f64,
    pub threshold: f64,
    pub isolation_failures: usize,
    pub heavy_clamped: bool,
    pub updates: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    /// `F̂ = F̂^H + F̂^L`.
    pub estimate: f64,
    pub heavy: f64,
    pub light: f64,
    pub heavy_count: usize,
    pub light_correction: f64,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone)]
pub struct Estimator {
    config: EstimatorConfig,
    stable: StableTable,
    tables: CountSketchTable,
    heavy: HeavyHitterStructure,
    updates: u64,
}

impl Estimator {
    pub fn new(config: EstimatorConfig) -> Result<Self> {
        config.validate()?;
        let stable = StableTable::new(&config)?;
        let tables = CountSketchTable::new(
            config.seed,
            config.rows,
            config.buckets,
            config.n,
            config.table_independence,
        )?;
        let heavy = HeavyHitterStructure::new(
            config.seed,
            config.heavy_rows,
            config.buckets,
            config.n,
            config.tracking,
        )?;
        Ok(Self {
            config,
            stable,
            tables,
            heavy,
            updates: 0,
        })
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    pub fn stable_table(&self) -> &StableTable {
        &self.stable
    }

    /// The `g` CountSketch rows `T_1..T_g`.
    pub fn tables(&self) -> &CountSketchTable {
        &self.tables
    }

    pub fn heavy_hitters(&self) -> &HeavyHitterStructure {
        &self.heavy
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Applies `f_i += v` to every structure. On error nothing changes.
    pub fn update(&mut self, item: u64, delta: i64) -> Result<()> {
        let n = self.config.n;
        if item == 0 || item > n {
            return Err(Error::ItemOutOfRange { item, n });
        }
        let mass = self.heavy.mass().checked_add(delta.unsigned_abs());
        if mass.is_none_or(|m| m > MASS_LIMIT) {
            return Err(Error::Overflow { limit: MASS_LIMIT });
        }
        self.stable.update(item, delta);
        self.tables.update(item, delta)?;
        self.heavy.update(item, delta)?;
        self.updates += 1;
        Ok(())
    }

    /// Heavy/light split by `f̂_i² >= 4 F̂_2^res(4B) / B`.
    pub fn classify(&self) -> Classification {
        let ranked = self.heavy.ranked_candidates();
        let residual = self.heavy.residual_from_ranked(&ranked, 4 * self.config.scale as usize);
        let threshold = 4.0 * residual / self.config.scale as f64;
        let mut heavy = Vec::new();
        let mut light = Vec::new();
        for (item, estimate) in ranked {
            if estimate * estimate >= threshold {
                heavy.push(HeavyItem {
                    item,
                    estimate,
                    sign: if estimate < 0.0 { -1 } else { 1 },
                });
            } else {
                light.push(item);
            }
        }
        heavy.sort_by_key(|h| h.item);
        light.sort_unstable();
        Classification {
            heavy,
            light,
            residual,
            threshold,
        }
    }

    /// A classification with a caller-chosen heavy set; signs come from the
    /// heavy-hitter estimates and every other touched item is light.
    pub fn classification_with(&self, heavy_items: &[u64]) -> Classification {
        let mut heavy: Vec<HeavyItem> = heavy_items
            .iter()
            .map(|&item| {
                let estimate = self.heavy.point_estimate(item);
                HeavyItem {
                    item,
                    estimate,
                    sign: if estimate < 0.0 { -1 } else { 1 },
                }
            })
            .collect();
        heavy.sort_by_key(|h| h.item);
        heavy.dedup_by_key(|h| h.item);
        let probe = Classification {
            heavy,
            ..Classification::default()
        };
        let light = self
            .heavy
            .candidates()
            .into_iter()
            .filter(|&i| !probe.is_heavy(i))
            .collect();
        Classification { light, ..probe }
    }

    fn occupancy(&self, cls: &Classification) -> Vec<HashMap<u64, usize>> {
        (0..self.tables.rows())
            .map(|j| {
                let mut counts = HashMap::new();
                for h in cls.heavy() {
                    *counts.entry(self.tables.bucket_hash(j).eval(h.item)).or_insert(0) += 1;
                }
                counts
            })
            .collect()
    }

    fn isolated_row(&self, occupancy: &[HashMap<u64, usize>], item: u64, is_heavy: bool) -> Option<usize> {
        let own = usize::from(is_heavy);
        (0..self.tables.rows())
            .find(|&j| {
                let b = self.tables.bucket_hash(j).eval(item);
                occupancy[j].get(&b).copied().unwrap_or(0) <= own
            })
            .map(|j| j + 1)
    }

    /// Smallest table index `j` in `1..=g` in which no other heavy item
    /// shares `h_j(item)`.
    pub fn isolation_index(&self, item: u64, cls: &Classification) -> Option<usize> {
        let occupancy = self.occupancy(cls);
        self.isolated_row(&occupancy, item, cls.is_heavy(item))
    }

    /// `Y_i = T_j[h_j(i)] sgn(f̂_i) xi_j(i)` at `j = θ(i)`, or 0 without isolation.
    pub fn heavy_terms(&self, cls: &Classification) -> Vec<HeavyTerm> {
        let occupancy = self.occupancy(cls);
        cls.heavy()
            .iter()
            .map(|h| {
                let row = self.isolated_row(&occupancy, h.item, true);
                let value = row.map_or(0.0, |j| (self.tables.row_estimate(j - 1, h.item) * h.sign) as f64);
                HeavyTerm {
                    item: h.item,
                    row,
                    value,
                }
            })
            .collect()
    }

    /// `F̂^H = Σ_{i in H} Y_i`; for `p != 1` the plug-in `Σ |Y_i|^p`.
    pub fn heavy_estimate(&self, cls: &Classification) -> f64 {
        self.heavy_from_terms(&self.heavy_terms(cls))
    }

    fn heavy_from_terms(&self, terms: &[HeavyTerm]) -> f64 {
        let p = self.config.p;
        if p == 1.0 {
            terms.iter().map(|t| t.value).sum()
        } else {
            terms.iter().map(|t| t.value.abs().powf(p)).sum()
        }
    }

    /// Stable-table buckets (1-based) that receive no heavy item.
    pub fn collision_free_buckets(&self, cls: &Classification) -> Vec<u64> {
        let mask = self.heavy_bucket_mask(cls);
        (1..=self.config.buckets).filter(|&b| !mask[(b - 1) as usize]).collect()
    }

    fn heavy_bucket_mask(&self, cls: &Classification) -> Vec<bool> {
        let mut mask = vec![false; self.config.buckets as usize];
        for h in cls.heavy() {
            mask[(self.stable.hash.eval(h.item) - 1) as usize] = true;
        }
        mask
    }

    /// `F̂_p^L = C_L Σ_{b in 𝓑} C(p, p/3)^{-3} Π_r |X_{b,r}|^{p/3}`.
    pub fn light_estimate(&self, cls: &Classification) -> LightEstimate {
        let p = self.config.p;
        let clamp = self.config.heavy_clamp();
        let clamped = cls.heavy_count() > clamp;
        let counted = cls.heavy_count().min(clamp);
        let c = self.config.buckets as f64;
        let correction = (1.0 - 1.0 / c).powi(-(counted as i32));
        let norm = stability_constant(p, p / 3.0)
            .expect("p validated in (0, 2)")
            .powi(-3);
        let mask = self.heavy_bucket_mask(cls);
        let exponent = p / 3.0;
        let mut sum = 0.0;
        let mut buckets_used = 0;
        for (cell, &hit) in self.stable.cells.iter().zip(&mask) {
            if hit {
                continue;
            }
            buckets_used += 1;
            let product: f64 = cell.iter().map(|&x| from_fixed(x).abs().powf(exponent)).product();
            sum += product;
        }
        let value = if buckets_used == 0 { 0.0 } else { correction * norm * sum };
        LightEstimate {
            value,
            correction,
            buckets_used,
            clamped,
        }
    }

    /// Classifies, then estimates both parts. Does not modify the sketch.
    pub fn estimate(&self) -> EstimateReport {
        let t0 = Instant::now();
        let cls = self.classify();
        let t1 = Instant::now();
        let terms = self.heavy_terms(&cls);
        let heavy = self.heavy_from_terms(&terms);
        let t2 = Instant::now();
        let light = self.light_estimate(&cls);
        let t3 = Instant::now();
        EstimateReport {
            estimate: heavy + light.value,
            heavy,
            light: light.value,
            heavy_count: cls.heavy_count(),
            light_correction: light.correction,
            diagnostics: Diagnostics {
                classify_ns: (t1 - t0).as_nanos(),
                heavy_ns: (t2 - t1).as_nanos(),
                light_ns: (t3 - t2).as_nanos(),
                stable_bytes: self.stable.bytes(),
                table_bytes: self.tables.bytes(),
                heavy_table_bytes: self.heavy.bytes(),
                candidates: cls.heavy_count() + cls.light().len(),
                residual: cls.residual(),
                threshold: cls.threshold(),
                isolation_failures: terms.iter().filter(|t| t.row.is_none()).count(),
                heavy_clamped: light.clamped,
                updates: self.updates,
            },
        }
    }
}
