//! Comparison harness: relative deviations, the bottom-line test, toy-ensemble
//! bias studies, and the naive matrix-inversion diagnostic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dagostini::{dagostini_unfold, DagostiniConfig, DagostiniPrior};
use crate::disttest::DistanceSpec;
use crate::error::{Error, Result};
use crate::histogram::{derive_merging, Histogram};
use crate::response::{fold, ResponseMatrix};
use crate::scenarios::{generate, ScenarioData, ScenarioSpec};
use crate::unfolder::{flat_start, unfold, SearchConfig, StartKind, UnfoldRun};

/// Per-bin `(a - b) / b`; `None` where the denominator bin is zero.
pub fn relative_deviation(a: &Histogram, b: &Histogram) -> Result<Vec<Option<f64>>> {
    if !a.same_binning(b) {
        return Err(Error::Report(format!(
            "relative deviation needs a common binning ({} vs {} bins)",
            a.n_bins(),
            b.n_bins()
        )));
    }
    Ok(a.counts()
        .iter()
        .zip(b.counts())
        .map(|(&x, &y)| if y != 0.0 { Some((x - y) / y) } else { None })
        .collect())
}

/// The three per-NDOF entries of one bottom-line comparison: data against
/// folded truth in reco space, and both unfolded estimates against the truth
/// in gen space.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BottomLineReport {
    pub folded_space_ts: f64,
    pub unfolded_space_ts_algo1: f64,
    pub unfolded_space_ts_dagostini: f64,
    pub start_kind: StartKind,
}

/// Compute the bottom-line comparison for runs performed against the
/// scenario's alternative data. The probe/reference convention puts the
/// truth-derived histogram on the reference side in both spaces.
pub fn bottom_line(
    scenario: &ScenarioData,
    algo1_run: &UnfoldRun,
    dagostini_result: &Histogram,
    distance: &DistanceSpec,
) -> Result<BottomLineReport> {
    let folded_truth = fold(&scenario.response.nominal, &scenario.truth)?;
    if !algo1_run.best_sample.same_binning(&scenario.truth) {
        return Err(Error::Report(
            "best sample and truth are on different binnings".into(),
        ));
    }
    if !dagostini_result.same_binning(&scenario.truth) {
        return Err(Error::Report(
            "unfolded baseline and truth are on different binnings".into(),
        ));
    }
    let folded = distance.evaluate(
        &scenario.alt_data,
        &folded_truth,
        &derive_merging(&folded_truth),
    )?;
    let gen_merging = derive_merging(&scenario.truth);
    let algo1 = distance.evaluate(&algo1_run.best_sample, &scenario.truth, &gen_merging)?;
    let dag = distance.evaluate(dagostini_result, &scenario.truth, &gen_merging)?;
    Ok(BottomLineReport {
        folded_space_ts: folded.ts_per_ndof,
        unfolded_space_ts_algo1: algo1.ts_per_ndof,
        unfolded_space_ts_dagostini: dag.ts_per_ndof,
        start_kind: algo1_run.config.start,
    })
}

/// Bottom-line reports for one scenario, one per starting point, pairing the
/// truth-started search with the truth-prior baseline and the flat-started
/// search with the flat-prior baseline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BottomLineScenarioReport {
    pub scenario: String,
    pub truth_start: BottomLineReport,
    pub flat_start: BottomLineReport,
}

/// Run the full bottom-line comparison for a named scenario: two searches
/// (truth and flat start) plus two baseline unfoldings (truth and flat prior),
/// all against the alternative data.
pub fn bottom_line_scenario(
    name: &str,
    spec: &ScenarioSpec,
    search_cfg: &SearchConfig,
    distance: &DistanceSpec,
) -> Result<BottomLineScenarioReport> {
    let data = generate(spec)?;
    let nominal = &data.response.nominal;

    let truth_cfg = SearchConfig { start: StartKind::Truth, ..search_cfg.clone() };
    let flat_cfg = SearchConfig {
        start: StartKind::FlatHalfMax,
        seed: search_cfg.seed.wrapping_add(1),
        ..search_cfg.clone()
    };
    let flat = flat_start(&data.truth)?;

    let (run_truth, run_flat) = rayon::join(
        || unfold(&data.truth, &data.alt_data, nominal, &truth_cfg),
        || unfold(&flat, &data.alt_data, nominal, &flat_cfg),
    );
    let run_truth = run_truth?;
    let run_flat = run_flat?;

    let dag_truth = dagostini_unfold(
        &data.alt_data,
        nominal,
        &DagostiniConfig {
            prior: DagostiniPrior::Spectrum(data.truth.clone()),
            ..Default::default()
        },
    )?;
    let dag_flat = dagostini_unfold(&data.alt_data, nominal, &DagostiniConfig::default())?;

    Ok(BottomLineScenarioReport {
        scenario: name.to_string(),
        truth_start: bottom_line(&data, &run_truth, &dag_truth.unfolded, distance)?,
        flat_start: bottom_line(&data, &run_flat, &dag_flat.unfolded, distance)?,
    })
}

/// Which estimator a toy ensemble exercises.
#[derive(Debug, Clone)]
pub enum EnsembleMethod {
    /// The stochastic search, truth-started, against the nominal response.
    Algo1(SearchConfig),
    /// The iterative Bayesian baseline with a truth prior.
    Dagostini(DagostiniConfig),
}

/// Per-bin statistics of `(estimate - alt_truth) / alt_truth` over a toy
/// ensemble. Bins where the alternative truth is empty in a toy are skipped
/// for that toy; `per_bin_used` counts the toys entering each bin.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleBias {
    pub edges: Vec<f64>,
    pub per_bin_mean: Vec<Option<f64>>,
    /// Standard deviation over toys; absent with fewer than two toys.
    pub per_bin_spread: Vec<Option<f64>>,
    /// Median of |relative deviation| over toys.
    pub per_bin_median_abs: Vec<Option<f64>>,
    pub per_bin_used: Vec<usize>,
    pub n_toys: usize,
    pub n_failed: usize,
}

/// Repeat generate-and-unfold over independent seeds and summarize the
/// per-bin relative deviation of the estimate from the alternative truth.
/// Failed toys are counted and excluded. Toys run concurrently; aggregation
/// is ordered by toy index.
pub fn ensemble_bias(spec: &ScenarioSpec, n_toys: usize, method: &EnsembleMethod) -> Result<EnsembleBias> {
    if n_toys < 1 {
        return Err(Error::Config("ensemble needs at least one toy".into()));
    }
    let outcomes: Vec<Result<Vec<Option<f64>>>> = (0..n_toys)
        .into_par_iter()
        .map(|toy| {
            let toy_spec = ScenarioSpec { seed: spec.seed.wrapping_add(toy as u64), ..spec.clone() };
            let data = generate(&toy_spec)?;
            let estimate = match method {
                EnsembleMethod::Algo1(cfg) => {
                    let toy_cfg = SearchConfig {
                        seed: cfg.seed.wrapping_add(toy as u64),
                        start: StartKind::Truth,
                        ..cfg.clone()
                    };
                    unfold(&data.truth, &data.alt_data, &data.response.nominal, &toy_cfg)?.best_sample
                }
                EnsembleMethod::Dagostini(cfg) => {
                    let toy_cfg = DagostiniConfig {
                        prior: DagostiniPrior::Spectrum(data.truth.clone()),
                        ..cfg.clone()
                    };
                    dagostini_unfold(&data.alt_data, &data.response.nominal, &toy_cfg)?.unfolded
                }
            };
            relative_deviation(&estimate, &data.alt_truth)
        })
        .collect();

    let mut deviations: Vec<Vec<Option<f64>>> = Vec::with_capacity(n_toys);
    let mut n_failed = 0usize;
    for outcome in outcomes {
        match outcome {
            Ok(d) => deviations.push(d),
            Err(e) => {
                log::warn!("toy failed and was excluded: {e}");
                n_failed += 1;
            }
        }
    }
    if deviations.is_empty() {
        return Err(Error::Report(format!("all {n_toys} toys failed")));
    }

    let n_bins = deviations[0].len();
    let mut per_bin_mean = Vec::with_capacity(n_bins);
    let mut per_bin_spread = Vec::with_capacity(n_bins);
    let mut per_bin_median_abs = Vec::with_capacity(n_bins);
    let mut per_bin_used = Vec::with_capacity(n_bins);
    for b in 0..n_bins {
        let mut values: Vec<f64> = deviations.iter().filter_map(|d| d[b]).collect();
        per_bin_used.push(values.len());
        if values.is_empty() {
            per_bin_mean.push(None);
            per_bin_spread.push(None);
            per_bin_median_abs.push(None);
            continue;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        per_bin_mean.push(Some(mean));
        per_bin_spread.push(if values.len() > 1 {
            Some((values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt())
        } else {
            None
        });
        values.sort_by(|a, b| a.abs().partial_cmp(&b.abs()).expect("finite deviations"));
        let mid = values.len() / 2;
        let median_abs = if values.len() % 2 == 1 {
            values[mid].abs()
        } else {
            (values[mid - 1].abs() + values[mid].abs()) / 2.0
        };
        per_bin_median_abs.push(Some(median_abs));
    }

    let edges = spec.gen_edges();
    Ok(EnsembleBias {
        edges,
        per_bin_mean,
        per_bin_spread,
        per_bin_median_abs,
        per_bin_used,
        n_toys,
        n_failed,
    })
}

/// Solve `probs * x = y` by direct LU decomposition. Diagnostic only: on
/// ill-conditioned matrices the result oscillates with large amplitude, which
/// is exactly what this comparator is meant to exhibit. Requires a square
/// matrix. Errors are propagated through the inverse.
pub fn naive_inversion(response: &ResponseMatrix, y: &Histogram) -> Result<Histogram> {
    let n_reco = response.n_reco_bins();
    let n_gen = response.n_gen_bins();
    if n_reco != n_gen {
        return Err(Error::Inversion(format!(
            "direct inversion needs a square matrix, got {n_reco}x{n_gen}"
        )));
    }
    if !crate::histogram::edges_equal(y.edges(), response.reco_edges()) {
        return Err(Error::Inversion("observed histogram is not on the reco binning".into()));
    }
    let m = nalgebra::DMatrix::from_fn(n_reco, n_gen, |i, j| response.probs()[i][j]);
    let rhs = nalgebra::DVector::from_column_slice(y.counts());
    let lu = m.clone().lu();
    let solution = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Inversion("matrix is singular".into()))?;
    let inverse = lu
        .try_inverse()
        .ok_or_else(|| Error::Inversion("matrix is singular".into()))?;
    let errors: Vec<f64> = (0..n_gen)
        .map(|j| {
            (0..n_reco)
                .map(|i| {
                    let w = inverse[(j, i)];
                    let e = y.errors()[i];
                    w * w * e * e
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    // negative bins are expected on ill-conditioned inputs; bypass the
    // non-negativity validation and return the raw solution
    Ok(Histogram::raw_for_diagnostics(
        response.gen_edges().to_vec(),
        solution.iter().cloned().collect(),
        errors,
    ))
}
