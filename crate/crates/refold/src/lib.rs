//! Unfolding by folding: recover a truth-level spectrum from a
//! detector-smeared observation without inverting the response matrix.
//!
//! Instead of solving `y = Rx` for `x`, the search repeatedly Poisson-resamples
//! a candidate truth spectrum, folds it through the response, and keeps the
//! candidate whose folded image is statistically closest to the data. The crate
//! provides:
//!
//! - [`histogram`]: the binned-spectrum type, sample filling, Poisson
//!   resampling, and the empty-bin merging policy;
//! - [`response`]: building, normalizing, diagnosing (condition number), and
//!   applying the response matrix, including systematic variants;
//! - [`disttest`]: the menu of two-sample statistics (Pearson, Porter,
//!   Bhattacharyya, Wasserstein-1, Kullback-Leibler);
//! - [`unfolder`]: the stochastic search itself, with and without nuisance
//!   sampling of the response, plus posterior uncertainty bands;
//! - [`dagostini`]: the iterative Bayesian baseline run to convergence;
//! - [`scenarios`]: the built-in Gaussian simulation setups;
//! - [`evaluation`]: relative deviations, the bottom-line test, toy-ensemble
//!   bias studies, and the naive-inversion diagnostic;
//! - [`io`]: CSV/JSON interchange and run manifests;
//! - [`cli`]: the `refold` command-line front end.
//!
//! Start with the `examples/` directory for runnable walkthroughs of each
//! capability.

pub mod cli;
pub mod dagostini;
pub mod disttest;
pub mod error;
pub mod evaluation;
pub mod histogram;
pub mod io;
pub mod response;
pub mod scenarios;
pub mod unfolder;

pub use dagostini::{dagostini_unfold, DagostiniConfig, DagostiniPrior, DagostiniRun};
pub use disttest::{DistanceKind, DistanceSpec, TestResult};
pub use error::{Error, Result};
pub use evaluation::{
    bottom_line, bottom_line_scenario, ensemble_bias, naive_inversion, relative_deviation,
    BottomLineReport, EnsembleBias, EnsembleMethod,
};
pub use histogram::{
    derive_merging, fill_from_samples, merge_bins, poisson_resample, BinMerging, FillResult,
    Histogram,
};
pub use response::{
    build_response, condition_number, fold, systematic_variants, EfficiencyMode, ResponseBundle,
    ResponseMatrix, ShiftMode,
};
pub use scenarios::{builtin_scenarios, generate, scenario_by_name, ScenarioData, ScenarioSpec};
pub use unfolder::{
    flat_start, unfold, unfold_abc, unfold_with_systematics, NuisancePrior, PosteriorBands,
    SearchConfig, StartKind, StopReason, SystematicsRuns, UnfoldRun,
};
