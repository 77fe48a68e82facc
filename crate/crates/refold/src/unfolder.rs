//! Stochastic search in truth space.
//!
//! The basic search keeps a best candidate truth spectrum, repeatedly draws a
//! Poisson fluctuation of it, folds the draw through the response matrix, and
//! accepts the draw whenever its folded image is closer to the data under the
//! configured statistic. Resampling chains from the current best candidate
//! rather than from the fixed input spectrum; restarting from the input every
//! time converges far more slowly.
//!
//! The nuisance-sampled variant additionally draws a nuisance value per
//! iteration, deforms the response by interpolating between its systematic
//! variants, and collects the accepted truth candidates into a per-bin
//! posterior whose quantiles give the uncertainty bands.
//!
//! Every chain is single-threaded and fully determined by its seed; chains in
//! a group run concurrently on substreams derived from (seed, chain index).

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::disttest::{DistanceSpec, TestResult};
use crate::error::{Error, Result};
use crate::histogram::{self, derive_merging, BinMerging, Histogram};
use crate::response::{fold, ResponseBundle, ResponseMatrix};

/// Initial best statistic, so the first finite candidate is always accepted.
const INITIAL_BEST: f64 = 1e5;

/// RNG substream indices for the chain groups.
const STREAM_NOMINAL: u64 = 0;
const STREAM_UP: u64 = 1;
const STREAM_DOWN: u64 = 2;
const STREAM_NUISANCE: u64 = 3;

/// Where the search starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StartKind {
    /// The simulated truth spectrum.
    #[default]
    Truth,
    /// Flat spectrum at half the maximum truth bin.
    FlatHalfMax,
    /// Any other caller-provided histogram.
    Custom,
}

/// Configuration of one search chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Iteration budget.
    pub max_samples: u64,
    /// Compatibility threshold: once the best per-NDOF statistic falls to or
    /// below this value the chain stops (chi-square calibrated statistics only).
    pub stop_ts_low: f64,
    /// Early-stop window around the target: stop when `|TS_best - 1| < window`
    /// for chi-square statistics, or `|TS_best - target_distance| < window`
    /// for the normalized-shape statistics.
    pub early_stop_window: f64,
    /// Optional acceptance floor: candidates below it are never accepted,
    /// preventing overfitting past statistical compatibility. Off by default
    /// for the basic search; the nuisance-sampled search uses 1 unless told
    /// otherwise.
    pub accept_floor: Option<f64>,
    /// Stop target for statistics without a chi-square calibration.
    pub target_distance: f64,
    /// Descriptive record of the starting spectrum.
    pub start: StartKind,
    pub distance: DistanceSpec,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            max_samples: 100_000,
            stop_ts_low: 0.9,
            early_stop_window: 0.01,
            accept_floor: None,
            target_distance: 0.0,
            start: StartKind::Truth,
            distance: DistanceSpec::default(),
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_samples < 1 {
            return Err(Error::Config("max_samples must be at least 1".into()));
        }
        if !(self.stop_ts_low > 0.0) {
            return Err(Error::Config(format!(
                "stop_ts_low must be positive, got {}",
                self.stop_ts_low
            )));
        }
        if !(self.early_stop_window > 0.0) {
            return Err(Error::Config(format!(
                "early_stop_window must be positive, got {}",
                self.early_stop_window
            )));
        }
        if let Some(floor) = self.accept_floor {
            if self.stop_ts_low > floor {
                return Err(Error::Config(format!(
                    "stop_ts_low {} exceeds accept_floor {floor}",
                    self.stop_ts_low
                )));
            }
        }
        if !(self.target_distance >= 0.0) || !self.target_distance.is_finite() {
            return Err(Error::Config(format!(
                "target_distance must be a finite non-negative value, got {}",
                self.target_distance
            )));
        }
        self.distance.validate()
    }
}

/// Why a chain stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Best statistic entered the compatibility region (`TS_best <= stop_ts_low`).
    CompatibilityReached,
    /// Best statistic landed within the early-stop window of the target.
    EarlyStopWindow,
    /// Iteration budget exhausted.
    MaxSamples,
}

/// One accepted improvement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: u64,
    pub ts_per_ndof: f64,
}

/// Result of one search chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnfoldRun {
    pub best_sample: Histogram,
    pub best_ts: TestResult,
    pub trace: Vec<TracePoint>,
    pub iterations_used: u64,
    pub stop_reason: StopReason,
    pub config: SearchConfig,
}

/// Flat starting spectrum: every bin at half the maximum of the truth
/// distribution, with Poisson errors on that value.
pub fn flat_start(truth: &Histogram) -> Result<Histogram> {
    let level = truth.max_count() / 2.0;
    if level <= 0.0 {
        return Err(Error::DegenerateStart(
            "truth distribution has no content to set a flat level from".into(),
        ));
    }
    let counts = vec![level; truth.n_bins()];
    Histogram::with_poisson_errors(truth.edges().to_vec(), counts)
}

/// Comparison score for the accept/stop logic: per-NDOF for chi-square
/// calibrated statistics, the raw distance otherwise.
fn score_of(spec: &DistanceSpec, t: &TestResult) -> f64 {
    if spec.kind.chi2_calibrated() {
        t.ts_per_ndof
    } else {
        t.ts
    }
}

fn stop_reason(cfg: &SearchConfig, score: f64) -> Option<StopReason> {
    if cfg.distance.kind.chi2_calibrated() {
        if score <= cfg.stop_ts_low {
            return Some(StopReason::CompatibilityReached);
        }
        if (score - 1.0).abs() < cfg.early_stop_window {
            return Some(StopReason::EarlyStopWindow);
        }
    } else if (score - cfg.target_distance).abs() < cfg.early_stop_window {
        return Some(StopReason::EarlyStopWindow);
    }
    None
}

fn check_search_inputs(start: &Histogram, data: &Histogram, response: &ResponseMatrix) -> Result<()> {
    if !histogram::edges_equal(start.edges(), response.gen_edges()) {
        return Err(Error::SearchSetup(format!(
            "start spectrum binning ({} bins) does not match the response gen binning ({} bins)",
            start.n_bins(),
            response.n_gen_bins()
        )));
    }
    if !histogram::edges_equal(data.edges(), response.reco_edges()) {
        return Err(Error::SearchSetup(format!(
            "data binning ({} bins) does not match the response reco binning ({} bins)",
            data.n_bins(),
            response.n_reco_bins()
        )));
    }
    if data.total() <= 0.0 {
        return Err(Error::DegenerateData("data histogram has zero total yield".into()));
    }
    Ok(())
}

/// Run the basic search against a fixed response.
pub fn unfold(
    start: &Histogram,
    data: &Histogram,
    response: &ResponseMatrix,
    cfg: &SearchConfig,
) -> Result<UnfoldRun> {
    unfold_with_observer(start, data, response, cfg, &mut |_| {})
}

/// Like [`unfold`], invoking `on_accept` for every accepted improvement so
/// long searches can stream their convergence trace.
pub fn unfold_with_observer(
    start: &Histogram,
    data: &Histogram,
    response: &ResponseMatrix,
    cfg: &SearchConfig,
    on_accept: &mut dyn FnMut(&TracePoint),
) -> Result<UnfoldRun> {
    cfg.validate()?;
    check_search_inputs(start, data, response)?;
    let merging = derive_merging(data);
    let mut rng = chain_rng(cfg.seed, STREAM_NOMINAL);
    run_chain(start, data, response, cfg, &merging, &mut rng, on_accept)
}

fn chain_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn run_chain(
    start: &Histogram,
    data: &Histogram,
    response: &ResponseMatrix,
    cfg: &SearchConfig,
    merging: &BinMerging,
    rng: &mut ChaCha8Rng,
    on_accept: &mut dyn FnMut(&TracePoint),
) -> Result<UnfoldRun> {
    let mut best = start.clone();
    let mut best_score = INITIAL_BEST;
    let mut best_result: Option<TestResult> = None;
    let mut trace = Vec::new();
    let mut iterations_used = cfg.max_samples;
    let mut stop = StopReason::MaxSamples;

    for i in 0..cfg.max_samples {
        let candidate = histogram::poisson_resample(&best, rng)?;
        let folded = fold(response, &candidate)?;
        let t = match cfg.distance.evaluate(&folded, data, merging) {
            Ok(t) => t,
            // a zero-total folded draw cannot be scored by the normalized
            // statistics; it is simply not a viable candidate
            Err(Error::DegenerateData(_)) => continue,
            Err(e) => return Err(e),
        };
        let score = score_of(&cfg.distance, &t);
        let above_floor = cfg.accept_floor.map_or(true, |f| score >= f);
        if score < best_score && above_floor {
            best = candidate;
            best_score = score;
            best_result = Some(t);
            let point = TracePoint { iteration: i, ts_per_ndof: t.ts_per_ndof };
            trace.push(point);
            on_accept(&point);
            if let Some(reason) = stop_reason(cfg, score) {
                iterations_used = i + 1;
                stop = reason;
                break;
            }
        }
    }

    let best_ts = match best_result {
        Some(t) => t,
        // nothing accepted: report the statistic of the folded start
        None => cfg.distance.evaluate(&fold(response, &best)?, data, merging)?,
    };
    Ok(UnfoldRun {
        best_sample: best,
        best_ts,
        trace,
        iterations_used,
        stop_reason: stop,
        config: cfg.clone(),
    })
}

/// The three searches of a systematic-variation study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystematicsRuns {
    pub nominal: UnfoldRun,
    pub up: UnfoldRun,
    pub down: UnfoldRun,
}

/// Run three independent chains against the same data, one per response in
/// the bundle, on RNG substreams derived from the configured seed. The chains
/// run concurrently.
pub fn unfold_with_systematics(
    start: &Histogram,
    data: &Histogram,
    bundle: &ResponseBundle,
    cfg: &SearchConfig,
) -> Result<SystematicsRuns> {
    cfg.validate()?;
    for (name, matrix) in [
        ("nominal", &bundle.nominal),
        ("up", &bundle.up),
        ("down", &bundle.down),
    ] {
        check_search_inputs(start, data, matrix)
            .map_err(|e| Error::SearchSetup(format!("{name} variant: {e}")))?;
    }
    let merging = derive_merging(data);
    let jobs: Vec<(&ResponseMatrix, u64)> = vec![
        (&bundle.nominal, STREAM_NOMINAL),
        (&bundle.up, STREAM_UP),
        (&bundle.down, STREAM_DOWN),
    ];
    let mut runs: Vec<Result<UnfoldRun>> = Vec::new();
    rayon::scope(|_| {
        use rayon::prelude::*;
        runs = jobs
            .into_par_iter()
            .map(|(matrix, stream)| {
                let mut rng = chain_rng(cfg.seed, stream);
                run_chain(start, data, matrix, cfg, &merging, &mut rng, &mut |_| {})
            })
            .collect();
    });
    let mut it = runs.into_iter();
    Ok(SystematicsRuns {
        nominal: it.next().unwrap()?,
        up: it.next().unwrap()?,
        down: it.next().unwrap()?,
    })
}

/// Nuisance prior for the response deformation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuisancePrior {
    /// `alpha ~ N(0, 1)`, fresh draw per iteration.
    StandardNormal,
    /// Pinned nuisance value, mainly for diagnostics: `Fixed(0.0)` reproduces
    /// a nominal-only chain.
    Fixed(f64),
}

impl NuisancePrior {
    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            NuisancePrior::StandardNormal => StandardNormal.sample(rng),
            NuisancePrior::Fixed(v) => *v,
        }
    }
}

/// Posterior quantile envelopes over the accepted truth candidates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorBands {
    pub central: Histogram,
    pub low: Histogram,
    pub high: Histogram,
    /// Band quantiles (low, high); the central value is the median.
    pub quantiles: (f64, f64),
    pub accepted_count: usize,
}

/// Default band quantiles: the central 68%.
pub const BAND_QUANTILES: (f64, f64) = (0.16, 0.84);

/// Nuisance-sampled search. Each iteration draws a nuisance value, deforms the
/// response by per-entry interpolation between the bundle's variants
/// (renormalizing columns), folds a Poisson draw of the current best candidate
/// through it, and applies the accept rule `score < best && score >= floor`
/// with the floor defaulting to 1. The chain runs its full budget; the last
/// `n_keep` accepted candidates form the per-bin posterior whose 0.16/0.5/0.84
/// quantiles give the bands.
pub fn unfold_abc(
    start: &Histogram,
    data: &Histogram,
    bundle: &ResponseBundle,
    prior: NuisancePrior,
    cfg: &SearchConfig,
    n_keep: usize,
) -> Result<PosteriorBands> {
    cfg.validate()?;
    check_search_inputs(start, data, &bundle.nominal)?;
    if n_keep < 100 {
        return Err(Error::Config(format!("n_keep must be at least 100, got {n_keep}")));
    }
    let merging = derive_merging(data);
    let mut rng = chain_rng(cfg.seed, STREAM_NUISANCE);
    let floor = cfg.accept_floor.unwrap_or(1.0);

    let n_gen = bundle.nominal.n_gen_bins();
    let n_reco = bundle.nominal.n_reco_bins();
    let nominal_probs = bundle.nominal.probs();
    let up_probs = bundle.up.probs();
    let down_probs = bundle.down.probs();
    // column sums of the nominal matrix are the renormalization targets
    let column_targets: Vec<f64> = (0..n_gen)
        .map(|j| (0..n_reco).map(|i| nominal_probs[i][j]).sum())
        .collect();

    let mut best = start.clone();
    let mut best_score = INITIAL_BEST;
    let mut kept: VecDeque<Vec<f64>> = VecDeque::with_capacity(n_keep + 1);
    let mut accepted_count = 0usize;

    let mut probs_alpha = vec![vec![0.0; n_gen]; n_reco];
    let mut folded_counts = vec![0.0; n_reco];
    let zero_errors = vec![0.0; n_reco];
    let reco_edges = bundle.nominal.reco_edges().to_vec();

    for _ in 0..cfg.max_samples {
        let alpha = prior.draw(&mut rng);

        // interpolated, clipped, column-renormalized migration probabilities
        for i in 0..n_reco {
            for j in 0..n_gen {
                let n = nominal_probs[i][j];
                let v = if alpha >= 0.0 {
                    n + alpha * (up_probs[i][j] - n)
                } else {
                    n + alpha * (n - down_probs[i][j])
                };
                probs_alpha[i][j] = v.max(0.0);
            }
        }
        for j in 0..n_gen {
            let col: f64 = (0..n_reco).map(|i| probs_alpha[i][j]).sum();
            if col > 0.0 && column_targets[j] > 0.0 {
                let scale = column_targets[j] / col;
                for row in probs_alpha.iter_mut() {
                    row[j] *= scale;
                }
            }
        }

        let candidate = histogram::poisson_resample(&best, &mut rng)?;
        folded_counts.clear();
        for row in &probs_alpha {
            folded_counts.push(row.iter().zip(candidate.counts()).map(|(p, c)| p * c).sum());
        }
        let folded = Histogram::new(reco_edges.clone(), folded_counts.clone(), zero_errors.clone())?;
        let t = match cfg.distance.evaluate(&folded, data, &merging) {
            Ok(t) => t,
            Err(Error::DegenerateData(_)) => continue,
            Err(e) => return Err(e),
        };
        let score = score_of(&cfg.distance, &t);
        if score < best_score && score >= floor {
            best_score = score;
            kept.push_back(candidate.counts().to_vec());
            if kept.len() > n_keep {
                kept.pop_front();
            }
            accepted_count += 1;
            best = candidate;
        }
    }

    let bands = bands_from_candidates(start.edges(), &kept)?;
    if accepted_count < n_keep {
        return Err(Error::InsufficientPosterior {
            needed: n_keep,
            got: accepted_count,
            partial: Box::new(PosteriorBands { accepted_count, ..bands }),
        });
    }
    Ok(PosteriorBands { accepted_count, ..bands })
}

fn bands_from_candidates(gen_edges: &[f64], kept: &VecDeque<Vec<f64>>) -> Result<PosteriorBands> {
    if kept.is_empty() {
        return Err(Error::DegenerateData("no accepted candidates to form a posterior".into()));
    }
    let n_bins = kept[0].len();
    let mut central = Vec::with_capacity(n_bins);
    let mut low = Vec::with_capacity(n_bins);
    let mut high = Vec::with_capacity(n_bins);
    let mut column: Vec<f64> = Vec::with_capacity(kept.len());
    for b in 0..n_bins {
        column.clear();
        column.extend(kept.iter().map(|c| c[b]));
        column.sort_by(|a, b| a.partial_cmp(b).expect("finite counts"));
        low.push(quantile_sorted(&column, BAND_QUANTILES.0));
        central.push(quantile_sorted(&column, 0.5));
        high.push(quantile_sorted(&column, BAND_QUANTILES.1));
    }
    Ok(PosteriorBands {
        central: Histogram::with_poisson_errors(gen_edges.to_vec(), central)?,
        low: Histogram::new(gen_edges.to_vec(), low, vec![0.0; n_bins])?,
        high: Histogram::new(gen_edges.to_vec(), high, vec![0.0; n_bins])?,
        quantiles: BAND_QUANTILES,
        accepted_count: kept.len(),
    })
}

/// Linear-interpolation quantile on a sorted slice.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::response::{build_response, EfficiencyMode};
    use approx::assert_relative_eq;

    fn identity_setup(counts: Vec<f64>) -> (Histogram, ResponseMatrix) {
        let n = counts.len();
        let edges: Vec<f64> = (0..=n).map(|i| i as f64).collect();
        let centers: Vec<f64> = (0..n).map(|i| i as f64 + 0.5).collect();
        let r = build_response(&centers, &centers, &edges, &edges, EfficiencyMode::AssumeFull).unwrap();
        let h = Histogram::with_poisson_errors(edges, counts).unwrap();
        (h, r)
    }

    #[test]
    fn flat_start_is_half_of_max() {
        let truth = Histogram::with_poisson_errors(vec![0.0, 1.0, 2.0, 3.0], vec![2.0, 8.0, 4.0]).unwrap();
        let flat = flat_start(&truth).unwrap();
        assert_eq!(flat.counts(), &[4.0, 4.0, 4.0]);
        assert_relative_eq!(flat.errors()[0], 2.0);

        let single = Histogram::with_poisson_errors(vec![0.0, 1.0], vec![6.0]).unwrap();
        assert_eq!(flat_start(&single).unwrap().counts(), &[3.0]);

        let empty = Histogram::zeroed(vec![0.0, 1.0]).unwrap();
        assert!(matches!(flat_start(&empty), Err(Error::DegenerateStart(_))));
    }

    #[test]
    fn identity_search_reaches_compatibility() {
        let (truth, r) = identity_setup(vec![900.0, 1400.0, 800.0, 300.0, 120.0]);
        let cfg = SearchConfig { max_samples: 10_000, seed: 11, ..Default::default() };
        let run = unfold(&truth, &truth, &r, &cfg).unwrap();
        assert!(run.best_ts.ts_per_ndof < 1.1, "final TS {}", run.best_ts.ts_per_ndof);
        assert!(run.iterations_used <= 10_000);
    }

    #[test]
    fn single_iteration_budget() {
        let (truth, r) = identity_setup(vec![50.0, 70.0]);
        let cfg = SearchConfig { max_samples: 1, seed: 3, ..Default::default() };
        let run = unfold(&truth, &truth, &r, &cfg).unwrap();
        assert!(run.trace.len() <= 1);
        assert_eq!(run.iterations_used, 1);
    }

    #[test]
    fn zero_budget_is_rejected() {
        let (truth, r) = identity_setup(vec![50.0]);
        let cfg = SearchConfig { max_samples: 0, seed: 3, ..Default::default() };
        assert!(matches!(unfold(&truth, &truth, &r, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn zero_total_data_is_rejected() {
        let (truth, r) = identity_setup(vec![50.0, 60.0]);
        let data = Histogram::zeroed(truth.edges().to_vec()).unwrap();
        assert!(matches!(
            unfold(&truth, &data, &r, &SearchConfig::default()),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn mismatched_edges_are_rejected() {
        let (truth, r) = identity_setup(vec![50.0, 60.0]);
        let other = Histogram::with_poisson_errors(vec![0.0, 2.0, 4.0], vec![10.0, 10.0]).unwrap();
        assert!(matches!(
            unfold(&other, &truth, &r, &SearchConfig::default()),
            Err(Error::SearchSetup(_))
        ));
    }

    #[test]
    fn runs_are_deterministic() {
        let (truth, r) = identity_setup(vec![300.0, 500.0, 200.0]);
        let cfg = SearchConfig { max_samples: 3000, seed: 42, ..Default::default() };
        let a = unfold(&truth, &truth, &r, &cfg).unwrap();
        let b = unfold(&truth, &truth, &r, &cfg).unwrap();
        assert_eq!(a.best_sample, b.best_sample);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.iterations_used, b.iterations_used);
    }

    #[test]
    fn accepted_trace_is_strictly_decreasing() {
        let (truth, r) = identity_setup(vec![400.0, 900.0, 600.0, 100.0]);
        let data = {
            // target shifted away from the start so several acceptances happen
            let counts = vec![500.0, 800.0, 500.0, 200.0];
            Histogram::with_poisson_errors(truth.edges().to_vec(), counts).unwrap()
        };
        let cfg = SearchConfig { max_samples: 20_000, seed: 5, ..Default::default() };
        let run = unfold(&truth, &data, &r, &cfg).unwrap();
        assert!(run.trace.len() > 1);
        for w in run.trace.windows(2) {
            assert!(w[1].ts_per_ndof < w[0].ts_per_ndof);
        }
        let last = run.trace.last().unwrap();
        assert_relative_eq!(last.ts_per_ndof, run.best_ts.ts_per_ndof);
    }

    #[test]
    fn folded_best_is_closer_than_folded_start() {
        let (truth, r) = identity_setup(vec![400.0, 900.0, 600.0, 100.0]);
        let data = Histogram::with_poisson_errors(truth.edges().to_vec(), vec![500.0, 800.0, 500.0, 200.0]).unwrap();
        let cfg = SearchConfig { max_samples: 20_000, seed: 6, ..Default::default() };
        let run = unfold(&truth, &data, &r, &cfg).unwrap();
        let merging = derive_merging(&data);
        let start_ts = cfg
            .distance
            .evaluate(&fold(&r, &truth).unwrap(), &data, &merging)
            .unwrap();
        assert!(run.best_ts.ts_per_ndof < start_ts.ts_per_ndof);
    }

    #[test]
    fn accept_floor_blocks_overfitting() {
        let (truth, r) = identity_setup(vec![2000.0, 3000.0, 2500.0]);
        let cfg = SearchConfig {
            max_samples: 50_000,
            accept_floor: Some(1.0),
            seed: 9,
            ..Default::default()
        };
        let run = unfold(&truth, &truth, &r, &cfg).unwrap();
        assert!(run.best_ts.ts_per_ndof >= 1.0, "floor violated: {}", run.best_ts.ts_per_ndof);
    }

    #[test]
    fn systematics_triple_is_deterministic() {
        let (truth, r) = identity_setup(vec![300.0, 700.0, 400.0]);
        let bundle = ResponseBundle::degenerate(r);
        let cfg = SearchConfig { max_samples: 5000, seed: 21, ..Default::default() };
        let a = unfold_with_systematics(&truth, &truth, &bundle, &cfg).unwrap();
        let b = unfold_with_systematics(&truth, &truth, &bundle, &cfg).unwrap();
        assert_eq!(a.nominal.best_sample, b.nominal.best_sample);
        assert_eq!(a.up.best_sample, b.up.best_sample);
        assert_eq!(a.down.best_sample, b.down.best_sample);
        // degenerate bundle: all three end in the stopping band
        for run in [&a.nominal, &a.up, &a.down] {
            assert!(run.best_ts.ts_per_ndof < 1.2);
        }
    }

    #[test]
    fn abc_fixed_alpha_zero_matches_degenerate_bundle() {
        let (truth, r) = identity_setup(vec![500.0, 900.0, 700.0, 300.0]);
        let deformed = {
            // make up/down genuinely different from nominal
            let mut up = r.probs().to_vec();
            let n = up.len();
            for i in 0..n {
                for j in 0..n {
                    up[i][j] = if i == j { 0.9 } else { 0.1 / (n - 1) as f64 };
                }
            }
            ResponseMatrix::from_parts(
                r.gen_edges().to_vec(),
                r.reco_edges().to_vec(),
                r.raw_counts().to_vec(),
                up,
                r.efficiency().to_vec(),
            )
            .unwrap()
        };
        let bundle_real = ResponseBundle {
            nominal: r.clone(),
            up: deformed.clone(),
            down: deformed,
        };
        let bundle_degen = ResponseBundle::degenerate(r);
        let cfg = SearchConfig { max_samples: 40_000, seed: 31, ..Default::default() };
        let a = unfold_abc(&truth, &truth, &bundle_real, NuisancePrior::Fixed(0.0), &cfg, 100);
        let b = unfold_abc(&truth, &truth, &bundle_degen, NuisancePrior::Fixed(0.0), &cfg, 100);
        match (a, b) {
            (Ok(x), Ok(y)) => {
                assert_eq!(x.central, y.central);
                assert_eq!(x.accepted_count, y.accepted_count);
            }
            (
                Err(Error::InsufficientPosterior { got: ga, partial: pa, .. }),
                Err(Error::InsufficientPosterior { got: gb, partial: pb, .. }),
            ) => {
                assert_eq!(ga, gb);
                assert_eq!(pa.central, pb.central);
            }
            other => panic!("chains diverged: {other:?}"),
        }
    }

    #[test]
    fn abc_bands_are_ordered() {
        let (truth, r) = identity_setup(vec![800.0, 1500.0, 1000.0, 500.0]);
        let bundle = ResponseBundle::degenerate(r);
        let cfg = SearchConfig { max_samples: 200_000, seed: 12, ..Default::default() };
        let bands = match unfold_abc(&truth, &truth, &bundle, NuisancePrior::StandardNormal, &cfg, 100) {
            Ok(b) => b,
            Err(Error::InsufficientPosterior { partial, .. }) => *partial,
            Err(e) => panic!("{e}"),
        };
        for b in 0..bands.central.n_bins() {
            assert!(bands.low.counts()[b] <= bands.central.counts()[b]);
            assert!(bands.central.counts()[b] <= bands.high.counts()[b]);
        }
    }

    #[test]
    fn abc_requires_minimum_keep() {
        let (truth, r) = identity_setup(vec![100.0]);
        let bundle = ResponseBundle::degenerate(r);
        let cfg = SearchConfig { seed: 1, ..Default::default() };
        assert!(matches!(
            unfold_abc(&truth, &truth, &bundle, NuisancePrior::StandardNormal, &cfg, 10),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn quantile_interpolation() {
        let sorted = vec![1.0, 2.0, 3.0, 4.0];
        assert_relative_eq!(quantile_sorted(&sorted, 0.0), 1.0);
        assert_relative_eq!(quantile_sorted(&sorted, 1.0), 4.0);
        assert_relative_eq!(quantile_sorted(&sorted, 0.5), 2.5);
    }
}
