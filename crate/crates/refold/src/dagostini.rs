//! Iterative Bayesian unfolding, used as the reference baseline.
//!
//! Each pass redistributes the observed counts onto the truth bins in
//! proportion to the current estimate:
//!
//! `x_j <- (1/eff_j) * Σ_i [ probs[i][j] * x_j / Σ_l probs[i][l] * x_l ] * y_i`
//!
//! and iterates until the largest relative per-bin change falls below the
//! configured tolerance. No early-stopping regularization is applied; the
//! baseline deliberately runs to convergence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::{self, Histogram};
use crate::response::ResponseMatrix;

/// Prior spectrum fed to the first iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DagostiniPrior {
    /// Uniform spectrum carrying the total observed yield.
    Flat,
    /// A caller-provided spectrum on the truth binning.
    Spectrum(Histogram),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DagostiniConfig {
    pub max_iterations: usize,
    /// Convergence threshold on the maximum relative per-bin change.
    pub convergence_tol: f64,
    pub prior: DagostiniPrior,
}

impl Default for DagostiniConfig {
    fn default() -> Self {
        DagostiniConfig {
            max_iterations: 100_000,
            convergence_tol: 1e-4,
            prior: DagostiniPrior::Flat,
        }
    }
}

impl DagostiniConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::Config(format!(
                "convergence_tol must be positive, got {}",
                self.convergence_tol
            )));
        }
        Ok(())
    }
}

/// Converged estimate plus the per-iteration convergence trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DagostiniRun {
    pub unfolded: Histogram,
    /// Maximum relative per-bin change after each iteration.
    pub trace: Vec<f64>,
    pub iterations_used: usize,
    pub converged: bool,
}

/// Unfold `data` through `response` by iterating the Bayesian update from the
/// configured prior.
pub fn dagostini_unfold(
    data: &Histogram,
    response: &ResponseMatrix,
    cfg: &DagostiniConfig,
) -> Result<DagostiniRun> {
    cfg.validate()?;
    if !histogram::edges_equal(data.edges(), response.reco_edges()) {
        return Err(Error::FoldShape(format!(
            "data binning ({} bins) does not match the response reco binning ({} bins)",
            data.n_bins(),
            response.n_reco_bins()
        )));
    }
    let n_gen = response.n_gen_bins();
    let n_reco = response.n_reco_bins();
    let probs = response.probs();
    let efficiency = response.efficiency();
    let y = data.counts();

    let mut x: Vec<f64> = match &cfg.prior {
        DagostiniPrior::Flat => vec![data.total() / n_gen as f64; n_gen],
        DagostiniPrior::Spectrum(h) => {
            if !histogram::edges_equal(h.edges(), response.gen_edges()) {
                return Err(Error::FoldShape(format!(
                    "prior binning ({} bins) does not match the response gen binning ({} bins)",
                    h.n_bins(),
                    response.n_gen_bins()
                )));
            }
            h.counts().to_vec()
        }
    };

    let mut trace = Vec::new();
    let mut converged = false;
    let mut folded = vec![0.0; n_reco];
    let mut iterations_used = 0usize;

    for _ in 0..cfg.max_iterations {
        iterations_used += 1;
        for (i, f) in folded.iter_mut().enumerate() {
            *f = probs[i].iter().zip(&x).map(|(p, c)| p * c).sum();
        }
        for (i, &f) in folded.iter().enumerate() {
            if f <= 0.0 && y[i] > 0.0 {
                return Err(Error::StalledIteration(format!(
                    "data bin {i} holds {} events but the folded prior there is zero",
                    y[i]
                )));
            }
        }
        let mut next = vec![0.0; n_gen];
        for (j, nx) in next.iter_mut().enumerate() {
            if x[j] == 0.0 || efficiency[j] == 0.0 {
                continue;
            }
            let mut acc = 0.0;
            for i in 0..n_reco {
                if folded[i] > 0.0 {
                    acc += probs[i][j] * y[i] / folded[i];
                }
            }
            *nx = x[j] * acc / efficiency[j];
        }
        let max_rel_change = x
            .iter()
            .zip(&next)
            .map(|(&old, &new)| {
                if old > 0.0 {
                    (new - old).abs() / old
                } else if new > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max);
        trace.push(max_rel_change);
        x = next;
        if max_rel_change < cfg.convergence_tol {
            converged = true;
            break;
        }
    }

    // Error propagation through the final redistribution matrix
    // M[j][i] = probs[i][j] * x_j / (eff_j * folded_i), neglecting the
    // iteration dependence (no covariance matrix is carried).
    for (i, f) in folded.iter_mut().enumerate() {
        *f = probs[i].iter().zip(&x).map(|(p, c)| p * c).sum();
    }
    let errors: Vec<f64> = (0..n_gen)
        .map(|j| {
            if x[j] == 0.0 || efficiency[j] == 0.0 {
                return 0.0;
            }
            (0..n_reco)
                .map(|i| {
                    if folded[i] > 0.0 {
                        let m = probs[i][j] * x[j] / (efficiency[j] * folded[i]);
                        let e = data.errors()[i];
                        m * m * e * e
                    } else {
                        0.0
                    }
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect();

    let unfolded = Histogram::new(response.gen_edges().to_vec(), x, errors)?;
    Ok(DagostiniRun { unfolded, trace, iterations_used, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::response::{build_response, EfficiencyMode};
    use approx::assert_relative_eq;

    fn response_2x2() -> ResponseMatrix {
        ResponseMatrix::from_parts(
            vec![0.0, 1.0, 2.0],
            vec![0.0, 1.0, 2.0],
            vec![vec![80.0, 20.0], vec![20.0, 80.0]],
            vec![vec![0.8, 0.2], vec![0.2, 0.8]],
            vec![1.0, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn identity_converges_in_one_iteration() {
        let edges: Vec<f64> = vec![0.0, 1.0, 2.0, 3.0];
        let centers = [0.5, 1.5, 2.5];
        let r = build_response(&centers, &centers, &edges, &edges, EfficiencyMode::AssumeFull).unwrap();
        let data = Histogram::with_poisson_errors(edges, vec![30.0, 50.0, 20.0]).unwrap();
        let run = dagostini_unfold(&data, &r, &DagostiniConfig::default()).unwrap();
        for (a, b) in run.unfolded.counts().iter().zip(data.counts()) {
            assert_relative_eq!(a, b, epsilon = 1e-9);
        }
        // one productive step plus the step that observes no further change
        assert!(run.iterations_used <= 2, "took {} iterations", run.iterations_used);
    }

    #[test]
    fn two_by_two_matches_direct_inversion() {
        // oracle: solve probs * x = y directly
        let r = response_2x2();
        let y = [80.0, 20.0];
        let m = nalgebra::Matrix2::new(0.8, 0.2, 0.2, 0.8);
        let exact = m.lu().solve(&nalgebra::Vector2::new(y[0], y[1])).unwrap();
        assert_relative_eq!(exact[0], 100.0, epsilon = 1e-12);
        assert_relative_eq!(exact[1], 0.0, epsilon = 1e-12);

        let data = Histogram::with_poisson_errors(vec![0.0, 1.0, 2.0], y.to_vec()).unwrap();
        let run = dagostini_unfold(&data, &r, &DagostiniConfig::default()).unwrap();
        assert!((run.unfolded.counts()[0] - 100.0).abs() < 1.0);
        assert!(run.unfolded.counts()[1].abs() < 1.0);
    }

    #[test]
    fn uniform_columns_match_totals_only() {
        // maximal smearing: every truth bin feeds every reco bin evenly
        let r = ResponseMatrix::from_parts(
            vec![0.0, 1.0, 2.0],
            vec![0.0, 1.0, 2.0],
            vec![vec![50.0, 50.0], vec![50.0, 50.0]],
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            vec![1.0, 1.0],
        )
        .unwrap();
        let data = Histogram::with_poisson_errors(vec![0.0, 1.0, 2.0], vec![70.0, 30.0]).unwrap();
        let run = dagostini_unfold(&data, &r, &DagostiniConfig::default()).unwrap();
        let folded: f64 = run.unfolded.total();
        assert_relative_eq!(folded, 100.0, epsilon = 1e-6);
    }

    #[test]
    fn conserves_counts_each_iteration_at_full_efficiency() {
        let r = response_2x2();
        let data = Histogram::with_poisson_errors(vec![0.0, 1.0, 2.0], vec![60.0, 40.0]).unwrap();
        let cfg = DagostiniConfig { max_iterations: 7, convergence_tol: 1e-300, ..Default::default() };
        let run = dagostini_unfold(&data, &r, &cfg).unwrap();
        assert_relative_eq!(run.unfolded.total(), 100.0, epsilon = 1e-9);
        assert!(run.unfolded.counts().iter().all(|&c| c >= 0.0));
    }

    #[test]
    fn stalls_on_unreachable_data_bin() {
        // prior empty in the only truth bin feeding reco bin 1
        let r = ResponseMatrix::from_parts(
            vec![0.0, 1.0, 2.0],
            vec![0.0, 1.0, 2.0],
            vec![vec![10.0, 0.0], vec![0.0, 10.0]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![1.0, 1.0],
        )
        .unwrap();
        let prior = Histogram::with_poisson_errors(vec![0.0, 1.0, 2.0], vec![10.0, 0.0]).unwrap();
        let data = Histogram::with_poisson_errors(vec![0.0, 1.0, 2.0], vec![5.0, 5.0]).unwrap();
        let cfg = DagostiniConfig { prior: DagostiniPrior::Spectrum(prior), ..Default::default() };
        assert!(matches!(dagostini_unfold(&data, &r, &cfg), Err(Error::StalledIteration(_))));
    }

    #[test]
    fn truth_prior_accepted_on_matching_edges() {
        let r = response_2x2();
        let prior = Histogram::with_poisson_errors(vec![0.0, 1.0, 2.0], vec![55.0, 45.0]).unwrap();
        let data = Histogram::with_poisson_errors(vec![0.0, 1.0, 2.0], vec![60.0, 40.0]).unwrap();
        let cfg = DagostiniConfig { prior: DagostiniPrior::Spectrum(prior), ..Default::default() };
        let run = dagostini_unfold(&data, &r, &cfg).unwrap();
        assert!(run.converged);
    }
}
