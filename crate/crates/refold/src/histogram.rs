//! Binned spectra: the core histogram type, filling from raw samples,
//! Poisson resampling, and the empty-bin merging policy.
//!
//! Histograms are immutable after construction and all operations here are
//! pure functions, so they are safe to share across search chains. Counts are
//! stored as reals rather than integers: iterative unfolding estimates and
//! systematically shifted spectra are non-integral, and the Poisson resampler
//! only interprets the stored value as a mean.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A binned spectrum: ordered bin edges, per-bin counts, and per-bin 1σ errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    edges: Vec<f64>,
    counts: Vec<f64>,
    errors: Vec<f64>,
}

impl Histogram {
    /// Build a histogram from edges, counts, and errors, validating the invariants:
    /// edges strictly increasing, `counts.len() == errors.len() == edges.len() - 1`,
    /// and all counts/errors finite and non-negative.
    pub fn new(edges: Vec<f64>, counts: Vec<f64>, errors: Vec<f64>) -> Result<Self> {
        validate_edges(&edges)?;
        let n_bins = edges.len() - 1;
        if counts.len() != n_bins {
            return Err(Error::InvalidBinning(format!(
                "expected {} counts for {} edges, got {}",
                n_bins,
                edges.len(),
                counts.len()
            )));
        }
        if errors.len() != n_bins {
            return Err(Error::InvalidBinning(format!(
                "expected {} errors for {} edges, got {}",
                n_bins,
                edges.len(),
                errors.len()
            )));
        }
        for (i, &c) in counts.iter().enumerate() {
            if !c.is_finite() || c < 0.0 {
                return Err(Error::Domain(format!("count[{i}] = {c} is not a finite non-negative value")));
            }
        }
        for (i, &e) in errors.iter().enumerate() {
            if !e.is_finite() || e < 0.0 {
                return Err(Error::Domain(format!("error[{i}] = {e} is not a finite non-negative value")));
            }
        }
        Ok(Self { edges, counts, errors })
    }

    /// Histogram with the given counts and Poisson errors `sqrt(count)`.
    pub fn with_poisson_errors(edges: Vec<f64>, counts: Vec<f64>) -> Result<Self> {
        let errors = counts.iter().map(|c| c.sqrt()).collect();
        Self::new(edges, counts, errors)
    }

    /// Diagnostic-only constructor that skips the non-negativity check, for
    /// results like direct matrix inversion whose oscillating negative bins
    /// are the quantity of interest. Edges and lengths are still validated by
    /// the caller's construction path.
    pub(crate) fn raw_for_diagnostics(edges: Vec<f64>, counts: Vec<f64>, errors: Vec<f64>) -> Self {
        Self { edges, counts, errors }
    }

    /// All-zero histogram on the given edges.
    pub fn zeroed(edges: Vec<f64>) -> Result<Self> {
        validate_edges(&edges)?;
        let n = edges.len() - 1;
        Ok(Self { edges, counts: vec![0.0; n], errors: vec![0.0; n] })
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn errors(&self) -> &[f64] {
        &self.errors
    }

    /// Width of bin `i`.
    pub fn bin_width(&self, i: usize) -> f64 {
        self.edges[i + 1] - self.edges[i]
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Largest bin content.
    pub fn max_count(&self) -> f64 {
        self.counts.iter().cloned().fold(0.0, f64::max)
    }

    /// Counts rescaled to unit total. Errors scale by the same factor.
    pub fn normalized(&self) -> Result<Histogram> {
        let total = self.total();
        if total <= 0.0 {
            return Err(Error::DegenerateData("cannot normalize a zero-total histogram".into()));
        }
        Ok(Histogram {
            edges: self.edges.clone(),
            counts: self.counts.iter().map(|c| c / total).collect(),
            errors: self.errors.iter().map(|e| e / total).collect(),
        })
    }

    /// True when `other` shares this histogram's binning (within floating tolerance).
    pub fn same_binning(&self, other: &Histogram) -> bool {
        edges_equal(&self.edges, &other.edges)
    }
}

/// Compare two edge vectors, tolerating last-ulp differences from text round-trips.
pub(crate) fn edges_equal(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            let scale = x.abs().max(y.abs()).max(1.0);
            (x - y).abs() <= 1e-9 * scale
        })
}

fn validate_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::InvalidBinning(format!(
            "need at least 2 edges to define a bin, got {}",
            edges.len()
        )));
    }
    for w in edges.windows(2) {
        if !(w[0] < w[1]) || !w[0].is_finite() || !w[1].is_finite() {
            return Err(Error::InvalidBinning(format!(
                "edges must be finite and strictly increasing, found [{}, {}]",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

/// Outcome of filling a histogram from raw samples: the histogram plus the
/// number of samples that fell below/above the binning range and were dropped.
#[derive(Debug, Clone)]
pub struct FillResult {
    pub histogram: Histogram,
    pub underflow: usize,
    pub overflow: usize,
}

/// Bin samples onto the given edges. A sample lands in bin `i` when it lies in
/// `[edges[i], edges[i+1])`; samples outside `[edges[0], edges[n])` are dropped
/// and reported. Errors are Poisson, `sqrt(count)`.
pub fn fill_from_samples(samples: &[f64], edges: &[f64]) -> Result<FillResult> {
    validate_edges(edges)?;
    let n_bins = edges.len() - 1;
    let mut counts = vec![0.0; n_bins];
    let mut underflow = 0usize;
    let mut overflow = 0usize;
    for &s in samples {
        if !s.is_finite() {
            return Err(Error::Domain(format!("sample value {s} is not finite")));
        }
        match bin_index(edges, s) {
            BinLocation::Bin(i) => counts[i] += 1.0,
            BinLocation::Underflow => underflow += 1,
            BinLocation::Overflow => overflow += 1,
        }
    }
    let histogram = Histogram::with_poisson_errors(edges.to_vec(), counts)?;
    Ok(FillResult { histogram, underflow, overflow })
}

/// Weighted fill: like [`fill_from_samples`] but each sample carries a weight.
/// Bin errors are `sqrt(sum of squared weights)`.
pub fn fill_from_weighted_samples(samples: &[f64], weights: &[f64], edges: &[f64]) -> Result<FillResult> {
    if samples.len() != weights.len() {
        return Err(Error::PairedInput(format!(
            "{} samples vs {} weights",
            samples.len(),
            weights.len()
        )));
    }
    validate_edges(edges)?;
    let n_bins = edges.len() - 1;
    let mut counts = vec![0.0; n_bins];
    let mut sumw2 = vec![0.0; n_bins];
    let mut underflow = 0usize;
    let mut overflow = 0usize;
    for (&s, &w) in samples.iter().zip(weights) {
        if !s.is_finite() || !w.is_finite() {
            return Err(Error::Domain(format!("non-finite sample/weight pair ({s}, {w})")));
        }
        match bin_index(edges, s) {
            BinLocation::Bin(i) => {
                counts[i] += w;
                sumw2[i] += w * w;
            }
            BinLocation::Underflow => underflow += 1,
            BinLocation::Overflow => overflow += 1,
        }
    }
    let errors = sumw2.iter().map(|v| v.sqrt()).collect();
    let histogram = Histogram::new(edges.to_vec(), counts, errors)?;
    Ok(FillResult { histogram, underflow, overflow })
}

pub(crate) enum BinLocation {
    Bin(usize),
    Underflow,
    Overflow,
}

/// Locate `value` on `edges` with half-open bins `[lo, hi)`.
pub(crate) fn bin_index(edges: &[f64], value: f64) -> BinLocation {
    let n_bins = edges.len() - 1;
    if value < edges[0] {
        return BinLocation::Underflow;
    }
    if value >= edges[n_bins] {
        return BinLocation::Overflow;
    }
    // number of edges <= value, minus one
    let k = edges.partition_point(|e| *e <= value);
    BinLocation::Bin(k - 1)
}

/// Draw a fluctuated copy of `h`: each bin is an independent Poisson draw with
/// mean equal to the stored count. Zero bins stay zero; errors become
/// `sqrt(new count)`; edges are unchanged.
pub fn poisson_resample<R: Rng + ?Sized>(h: &Histogram, rng: &mut R) -> Result<Histogram> {
    let mut counts = Vec::with_capacity(h.n_bins());
    for (i, &mean) in h.counts().iter().enumerate() {
        if !mean.is_finite() || mean < 0.0 {
            return Err(Error::Domain(format!(
                "bin {i} has count {mean}; Poisson resampling needs finite non-negative means"
            )));
        }
        if mean == 0.0 {
            counts.push(0.0);
        } else {
            let draw = Poisson::new(mean)
                .map_err(|e| Error::Domain(format!("Poisson(mean={mean}) for bin {i}: {e}")))?
                .sample(rng);
            counts.push(draw);
        }
    }
    Histogram::with_poisson_errors(h.edges().to_vec(), counts)
}

/// An ordered partition of bin indices into contiguous groups, produced by
/// [`derive_merging`] so that every merged group of the reference histogram
/// has positive content (except possibly a trailing group with no later
/// non-empty bin, which is folded back into its predecessor).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinMerging {
    groups: Vec<(usize, usize)>, // inclusive start, exclusive end
    degenerate: bool,
}

impl BinMerging {
    /// Identity merging: every bin its own group.
    pub fn identity(n_bins: usize) -> Self {
        BinMerging {
            groups: (0..n_bins).map(|i| (i, i + 1)).collect(),
            degenerate: false,
        }
    }

    /// Build from explicit `(start, end)` index ranges. The ranges must be
    /// non-empty, contiguous, and cover `0..n` in order.
    pub fn from_groups(groups: Vec<(usize, usize)>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::InvalidMerging("no groups".into()));
        }
        let mut expect = 0usize;
        for &(lo, hi) in &groups {
            if lo != expect || hi <= lo {
                return Err(Error::InvalidMerging(format!(
                    "group [{lo}, {hi}) breaks the contiguous cover at index {expect}"
                )));
            }
            expect = hi;
        }
        Ok(BinMerging { groups, degenerate: false })
    }

    pub fn groups(&self) -> &[(usize, usize)] {
        &self.groups
    }

    /// Number of merged bins.
    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    /// Number of original bins covered.
    pub fn n_source_bins(&self) -> usize {
        self.groups.last().map(|&(_, hi)| hi).unwrap_or(0)
    }

    /// Set when the reference histogram was entirely empty and everything was
    /// collapsed into a single group.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }
}

/// Scan the reference left to right and group every zero-count bin with the
/// following bins until a non-empty one is included. A trailing run of zeros,
/// with no later non-empty bin to absorb it, merges backward into the last
/// non-empty group. An all-zero reference collapses to a single flagged group.
pub fn derive_merging(reference: &Histogram) -> BinMerging {
    let counts = reference.counts();
    let n = counts.len();
    let mut groups: Vec<(usize, usize)> = Vec::new();
    let mut start = 0usize;
    let mut has_content = false;
    for i in 0..n {
        if counts[i] > 0.0 {
            groups.push((start, i + 1));
            start = i + 1;
            has_content = true;
        }
    }
    if start < n {
        // trailing zeros: fold into the last non-empty group if one exists
        match groups.last_mut() {
            Some(last) => last.1 = n,
            None => groups.push((0, n)),
        }
    }
    BinMerging { groups, degenerate: !has_content }
}

/// Merge bins of `h` according to `merging`: counts are summed per group,
/// errors added in quadrature, and edges keep only the group boundaries.
pub fn merge_bins(h: &Histogram, merging: &BinMerging) -> Result<Histogram> {
    if merging.n_source_bins() != h.n_bins() {
        return Err(Error::InvalidMerging(format!(
            "merging covers {} bins but histogram has {}",
            merging.n_source_bins(),
            h.n_bins()
        )));
    }
    let mut edges = Vec::with_capacity(merging.n_groups() + 1);
    let mut counts = Vec::with_capacity(merging.n_groups());
    let mut errors = Vec::with_capacity(merging.n_groups());
    edges.push(h.edges()[0]);
    for &(lo, hi) in merging.groups() {
        edges.push(h.edges()[hi]);
        counts.push(h.counts()[lo..hi].iter().sum());
        errors.push(h.errors()[lo..hi].iter().map(|e| e * e).sum::<f64>().sqrt());
    }
    Histogram::new(edges, counts, errors)
}
