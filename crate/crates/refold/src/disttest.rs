//! Two-sample distance statistics between a folded candidate (the probe) and
//! the fixed data histogram (the reference).
//!
//! The chi-square style statistics (Pearson, Porter) work on raw counts and
//! apply the empty-bin merging derived from the reference; the remaining three
//! (Bhattacharyya, Wasserstein-1, Kullback-Leibler) compare count-normalized
//! shapes and need no merging.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::histogram::{merge_bins, BinMerging, Histogram};

/// Default floor applied to normalized bins before the KL divergence.
pub const DEFAULT_KL_EPSILON: f64 = 1e-9;

/// The implemented two-sample statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    #[default]
    Pearson,
    Porter,
    Bhattacharyya,
    Wasserstein1,
    Kl,
}

impl DistanceKind {
    /// Whether the statistic is chi-square calibrated, i.e. its per-NDOF value
    /// is comparable to 1 under the null and a chi-square p-value applies.
    pub fn chi2_calibrated(self) -> bool {
        matches!(self, DistanceKind::Pearson | DistanceKind::Porter)
    }
}

impl std::str::FromStr for DistanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pearson" => Ok(DistanceKind::Pearson),
            "porter" => Ok(DistanceKind::Porter),
            "bhattacharyya" => Ok(DistanceKind::Bhattacharyya),
            "wasserstein1" => Ok(DistanceKind::Wasserstein1),
            "kl" => Ok(DistanceKind::Kl),
            other => Err(Error::Config(format!(
                "unknown test '{other}' (expected pearson|porter|bhattacharyya|wasserstein1|kl)"
            ))),
        }
    }
}

impl std::fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            DistanceKind::Pearson => "pearson",
            DistanceKind::Porter => "porter",
            DistanceKind::Bhattacharyya => "bhattacharyya",
            DistanceKind::Wasserstein1 => "wasserstein1",
            DistanceKind::Kl => "kl",
        };
        f.write_str(name)
    }
}

/// Which statistic to use and its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceSpec {
    pub kind: DistanceKind,
    /// Smoothing floor for the KL divergence; must be positive.
    pub epsilon: f64,
}

impl Default for DistanceSpec {
    fn default() -> Self {
        DistanceSpec { kind: DistanceKind::Pearson, epsilon: DEFAULT_KL_EPSILON }
    }
}

impl DistanceSpec {
    pub fn new(kind: DistanceKind) -> Self {
        DistanceSpec { kind, epsilon: DEFAULT_KL_EPSILON }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon <= 0.0 || !self.epsilon.is_finite() {
            return Err(Error::Config(format!("KL epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }

    /// Evaluate the selected statistic. `merging` is honored by the
    /// chi-square style kinds and ignored by the normalized-shape kinds.
    pub fn evaluate(
        &self,
        probe: &Histogram,
        reference: &Histogram,
        merging: &BinMerging,
    ) -> Result<TestResult> {
        self.validate()?;
        match self.kind {
            DistanceKind::Pearson => pearson(probe, reference, merging),
            DistanceKind::Porter => porter(probe, reference, merging),
            DistanceKind::Bhattacharyya => bhattacharyya(probe, reference),
            DistanceKind::Wasserstein1 => wasserstein1(probe, reference),
            DistanceKind::Kl => kl(probe, reference, self.epsilon),
        }
    }
}

/// Value of a two-sample statistic. `p_value` is present for the chi-square
/// calibrated kinds only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub ts: f64,
    pub ndof: usize,
    pub ts_per_ndof: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
}

impl TestResult {
    fn new(ts: f64, ndof: usize, p_value: Option<f64>) -> Self {
        TestResult { ts, ndof, ts_per_ndof: ts / ndof as f64, p_value }
    }
}

fn check_same_binning(probe: &Histogram, reference: &Histogram) -> Result<()> {
    if !probe.same_binning(reference) {
        return Err(Error::FoldShape(format!(
            "probe has {} bins, reference has {}; statistics need a common binning",
            probe.n_bins(),
            reference.n_bins()
        )));
    }
    Ok(())
}

fn chi2_upper_tail(ts: f64, ndof: usize) -> f64 {
    // ChiSquared::new only fails for a non-positive dof, which merging rules out.
    let dist = ChiSquared::new(ndof as f64).expect("positive ndof");
    (1.0 - dist.cdf(ts)).clamp(0.0, 1.0)
}

/// Pearson chi-square against the (merged) reference:
/// `Σ_b (probe_b - ref_b)² / ref_b`, with one degree of freedom per merged bin.
pub fn pearson(probe: &Histogram, reference: &Histogram, merging: &BinMerging) -> Result<TestResult> {
    check_same_binning(probe, reference)?;
    let p = merge_bins(probe, merging)?;
    let r = merge_bins(reference, merging)?;
    let mut ts = 0.0;
    for (b, (&pv, &rv)) in p.counts().iter().zip(r.counts()).enumerate() {
        if rv <= 0.0 {
            return Err(Error::DivisionDomain(format!(
                "merged reference bin {b} is empty; merging must leave positive reference bins"
            )));
        }
        let d = pv - rv;
        ts += d * d / rv;
    }
    let ndof = r.n_bins();
    Ok(TestResult::new(ts, ndof, Some(chi2_upper_tail(ts, ndof))))
}

/// Porter's symmetric modification: `Σ_b (p_b - q_b)² / (p_b + q_b)` over
/// merged bins. Bins where both totals vanish are skipped and do not count
/// toward the degrees of freedom.
pub fn porter(probe: &Histogram, reference: &Histogram, merging: &BinMerging) -> Result<TestResult> {
    check_same_binning(probe, reference)?;
    let p = merge_bins(probe, merging)?;
    let q = merge_bins(reference, merging)?;
    let mut ts = 0.0;
    let mut used = 0usize;
    for (&pv, &qv) in p.counts().iter().zip(q.counts()) {
        let sum = pv + qv;
        if sum > 0.0 {
            let d = pv - qv;
            ts += d * d / sum;
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::DivisionDomain("all merged bins empty in both histograms".into()));
    }
    Ok(TestResult::new(ts, used, Some(chi2_upper_tail(ts, used))))
}

/// Bhattacharyya distance between the count-normalized shapes:
/// `-ln Σ_b sqrt(p̂_b q̂_b)`. Disjoint supports give an infinite distance.
pub fn bhattacharyya(probe: &Histogram, reference: &Histogram) -> Result<TestResult> {
    check_same_binning(probe, reference)?;
    let p = probe.normalized()?;
    let q = reference.normalized()?;
    let coefficient: f64 = p
        .counts()
        .iter()
        .zip(q.counts())
        .map(|(&a, &b)| (a * b).sqrt())
        .sum();
    let ts = if coefficient <= 0.0 { f64::INFINITY } else { -coefficient.ln() };
    // exactly zero on identical shapes: guard the tiny negative from rounding
    let ts = if ts < 0.0 && ts > -1e-12 { 0.0 } else { ts };
    Ok(TestResult::new(ts, probe.n_bins(), None))
}

/// Discrete 1-D Wasserstein-1 distance between the count-normalized shapes:
/// `Σ_b |CDF_p̂(b) - CDF_q̂(b)| · width_b`.
pub fn wasserstein1(probe: &Histogram, reference: &Histogram) -> Result<TestResult> {
    check_same_binning(probe, reference)?;
    let p = probe.normalized()?;
    let q = reference.normalized()?;
    let mut cdf_p = 0.0;
    let mut cdf_q = 0.0;
    let mut ts = 0.0;
    for b in 0..p.n_bins() {
        cdf_p += p.counts()[b];
        cdf_q += q.counts()[b];
        ts += (cdf_p - cdf_q).abs() * p.bin_width(b);
    }
    Ok(TestResult::new(ts, probe.n_bins(), None))
}

/// Kullback-Leibler divergence `Σ_b p̂_b ln(p̂_b / q̂_b)` on normalized shapes,
/// with every bin floored at `epsilon` and renormalized so the divergence is
/// finite on discrete histograms with empty bins.
pub fn kl(probe: &Histogram, reference: &Histogram, epsilon: f64) -> Result<TestResult> {
    check_same_binning(probe, reference)?;
    if epsilon <= 0.0 || !epsilon.is_finite() {
        return Err(Error::Config(format!("KL epsilon must be positive, got {epsilon}")));
    }
    let p = smoothed_shape(probe, epsilon)?;
    let q = smoothed_shape(reference, epsilon)?;
    let ts: f64 = p
        .iter()
        .zip(&q)
        .map(|(&a, &b)| a * (a / b).ln())
        .sum();
    Ok(TestResult::new(ts.max(0.0), probe.n_bins(), None))
}

/// Normalize, floor at epsilon, renormalize.
fn smoothed_shape(h: &Histogram, epsilon: f64) -> Result<Vec<f64>> {
    let normed = h.normalized()?;
    let floored: Vec<f64> = normed.counts().iter().map(|&c| c.max(epsilon)).collect();
    let total: f64 = floored.iter().sum();
    Ok(floored.into_iter().map(|c| c / total).collect())
}
