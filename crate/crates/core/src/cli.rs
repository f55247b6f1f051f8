//! Trial driver behind the `run` and `eval` subcommands.

use std::fmt;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::{EstimateReport, Estimator, EstimatorConfig};
use crate::oracle::ExactState;
use crate::stream::Stream;

pub const CSV_HEADER: &str = "trial,seed,exact_f1,est_f1,rel_err,est_heavy,est_light,heavy_count,wall_ns_per_update";

/// Parameters shared by every trial over one stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSpec {
    pub epsilon: f64,
    pub p: f64,
}

/// One estimator run against one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub trial: u64,
    pub seed: u64,
    /// Exact moment, when the oracle ran.
    pub exact_f1: Option<f64>,
    pub est_f1: f64,
    pub est_heavy: f64,
    pub est_light: f64,
    pub heavy_count: usize,
    pub wall_ns_per_update: f64,
}

impl TrialRow {
    /// `|est - exact| / max(exact, 1)`.
    pub fn rel_err(&self) -> Option<f64> {
        self.exact_f1.map(|exact| (self.est_f1 - exact).abs() / exact.max(1.0))
    }
}

impl fmt::Display for TrialRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        write!(
            f,
            "{},{},{},{},{},{},{},{},{}",
            self.trial,
            self.seed,
            opt(self.exact_f1),
            self.est_f1,
            opt(self.rel_err()),
            self.est_heavy,
            self.est_light,
            self.heavy_count,
            self.wall_ns_per_update
        )
    }
}

/// Builds an estimator for `seed`, ingests the stream and estimates.
pub fn run_estimator(stream: &Stream, spec: TrialSpec, seed: u64) -> Result<(EstimateReport, f64)> {
    let config = EstimatorConfig::new(spec.epsilon, stream.n, seed)?.with_p(spec.p);
    let mut est = Estimator::new(config)?;
    let start = Instant::now();
    for u in &stream.updates {
        est.update(u.item, u.delta)?;
    }
    let elapsed = start.elapsed().as_nanos() as f64;
    let per_update = if stream.updates.is_empty() { 0.0 } else { elapsed / stream.updates.len() as f64 };
    Ok((est.estimate(), per_update))
}

pub fn exact_state(stream: &Stream) -> Result<ExactState> {
    let mut exact = ExactState::new(stream.n);
    for u in &stream.updates {
        exact.update(u.item, u.delta)?;
    }
    Ok(exact)
}

pub fn run_trial(stream: &Stream, spec: TrialSpec, trial: u64, seed: u64, exact: Option<f64>) -> Result<TrialRow> {
    let (report, wall_ns_per_update) = run_estimator(stream, spec, seed)?;
    Ok(TrialRow {
        trial,
        seed,
        exact_f1: exact,
        est_f1: report.estimate,
        est_heavy: report.heavy,
        est_light: report.light,
        heavy_count: report.heavy_count,
        wall_ns_per_update,
    })
}

/// Runs `trials` estimators with seeds `base_seed..base_seed + trials`, in
/// parallel on up to `jobs` threads. Rows come back in trial order.
pub fn evaluate(stream: &Stream, spec: TrialSpec, trials: u64, base_seed: u64, jobs: usize) -> Result<Vec<TrialRow>> {
    if trials == 0 {
        return Err(crate::error::invalid("trials", "need at least one trial"));
    }
    let exact = exact_state(stream)?.moment(spec.p);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| crate::error::invalid("jobs", e.to_string()))?;
    pool.install(|| {
        (0..trials)
            .into_par_iter()
            .map(|t| run_trial(stream, spec, t, base_seed.wrapping_add(t), Some(exact)))
            .collect()
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub trials: usize,
    /// Fraction of trials with `rel_err <= epsilon`.
    pub success: f64,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
}

impl Summary {
    /// Percentiles use the nearest-rank rule.
    pub fn from_rows(rows: &[TrialRow], epsilon: f64) -> Self {
        let mut errs: Vec<f64> = rows.iter().filter_map(TrialRow::rel_err).collect();
        errs.sort_by(f64::total_cmp);
        let count = errs.len();
        if count == 0 {
            return Self {
                trials: 0,
                success: 0.0,
                mean: 0.0,
                median: 0.0,
                p95: 0.0,
            };
        }
        let rank = |q: f64| errs[((q * count as f64).ceil() as usize).clamp(1, count) - 1];
        Self {
            trials: count,
            success: errs.iter().filter(|&&e| e <= epsilon).count() as f64 / count as f64,
            mean: errs.iter().sum::<f64>() / count as f64,
            median: rank(0.5),
            p95: rank(0.95),
        }
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "trials={} success_fraction={} mean_rel_err={} median_rel_err={} p95_rel_err={}",
            self.trials, self.success, self.mean, self.median, self.p95
        )
    }
}

pub fn write_csv(rows: &[TrialRow], mut out: impl Write) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(out, "{row}")?;
    }
    out.flush()?;
    Ok(())
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parse { .. } => 2,
        Error::Overflow { .. } | Error::NonFinite => 3,
        _ => 1,
    }
}
