//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by histogram handling, response building,
/// distance tests, the searches, and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// Bin edges do not define a valid binning (too few, or not strictly increasing).
    #[error("invalid binning: {0}")]
    InvalidBinning(String),

    /// A value outside the mathematical domain of an operation (e.g. a negative count
    /// used as a Poisson mean).
    #[error("domain error: {0}")]
    Domain(String),

    /// A bin-merging partition that does not match the histogram it is applied to.
    #[error("invalid merging: {0}")]
    InvalidMerging(String),

    /// Event-paired inputs of unequal length.
    #[error("paired input error: {0}")]
    PairedInput(String),

    /// A response matrix built from no events.
    #[error("empty response: {0}")]
    EmptyResponse(String),

    /// Histogram/matrix dimensions incompatible with folding.
    #[error("fold shape error: {0}")]
    FoldShape(String),

    /// An out-of-range or inconsistent configuration value.
    #[error("config error: {0}")]
    Config(String),

    /// Inputs to a search that violate its preconditions.
    #[error("search setup error: {0}")]
    SearchSetup(String),

    /// Data with zero total yield cannot act as a search target.
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// A starting spectrum with no content at all.
    #[error("degenerate start: {0}")]
    DegenerateStart(String),

    /// A two-sample statistic that would divide by an empty reference bin.
    #[error("division domain error: {0}")]
    DivisionDomain(String),

    /// The iterative Bayesian update cannot redistribute a populated data bin
    /// because the folded prior there is zero.
    #[error("stalled iteration: {0}")]
    StalledIteration(String),

    /// Direct linear solve failed (singular or non-square matrix).
    #[error("inversion error: {0}")]
    Inversion(String),

    /// Mismatched inputs handed to the comparison harness.
    #[error("report error: {0}")]
    Report(String),

    /// The nuisance-sampled search finished without enough accepted candidates
    /// to form the requested posterior. Carries the partial bands.
    #[error("insufficient posterior: kept {got} of {needed} requested candidates")]
    InsufficientPosterior {
        needed: usize,
        got: usize,
        partial: Box<crate::unfolder::PosteriorBands>,
    },

    /// Malformed CSV/JSON input, with the offending location.
    #[error("format error in {path}:{line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error on {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}
