//! The detector response: migration probabilities from truth bins to
//! reconstructed bins, built from event-paired samples.
//!
//! The matrix is stored reco-major (`probs[reco][gen]`) so that folding a
//! truth spectrum is a plain matrix-vector product. Columns are normalized so
//! that each nonzero truth column sums to its reconstruction efficiency; with
//! the default full-efficiency convention every nonzero column sums to 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::{self, BinLocation, Histogram};

/// How the per-column efficiency is treated when building a response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EfficiencyMode {
    /// Treat reconstruction as fully efficient: columns are normalized over
    /// the events that land in some reco bin and every efficiency entry is 1.
    #[default]
    AssumeFull,
    /// Measure efficiency[j] as the fraction of truth-bin-j events that land
    /// in any reco bin; columns then sum to that fraction.
    Measured,
}

/// How a systematic shift is applied to the truth side when rebuilding
/// response variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ShiftMode {
    /// Scale every truth event weight by `1 ± f`. Column normalization divides
    /// the flat factor out of the probabilities, so the variation shows up in
    /// the raw counts and their errors, not in `probs`.
    #[default]
    FlatWeight,
    /// Shift every truth value by `± f` of itself (`t -> t * (1 ± f)`), moving
    /// events across truth bins and genuinely deforming `probs`.
    ValueShift,
}

/// Column-normalized migration matrix plus the raw counts it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMatrix {
    gen_edges: Vec<f64>,
    reco_edges: Vec<f64>,
    raw_counts: Vec<Vec<f64>>, // [reco][gen]
    raw_errors: Vec<Vec<f64>>, // [reco][gen]
    probs: Vec<Vec<f64>>,      // [reco][gen]
    efficiency: Vec<f64>,      // [gen]
}

/// Serialized form: exactly the interchange fields, in order.
#[derive(Serialize, Deserialize)]
struct ResponseMatrixWire {
    gen_edges: Vec<f64>,
    reco_edges: Vec<f64>,
    probs: Vec<Vec<f64>>,
    raw_counts: Vec<Vec<f64>>,
    efficiency: Vec<f64>,
}

impl Serialize for ResponseMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ResponseMatrixWire {
            gen_edges: self.gen_edges.clone(),
            reco_edges: self.reco_edges.clone(),
            probs: self.probs.clone(),
            raw_counts: self.raw_counts.clone(),
            efficiency: self.efficiency.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ResponseMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let wire = ResponseMatrixWire::deserialize(deserializer)?;
        ResponseMatrix::from_parts(
            wire.gen_edges,
            wire.reco_edges,
            wire.raw_counts,
            wire.probs,
            wire.efficiency,
        )
        .map_err(serde::de::Error::custom)
    }
}

impl ResponseMatrix {
    /// Assemble from explicit parts, validating dimensions and recomputing the
    /// Poisson errors on the raw counts.
    pub fn from_parts(
        gen_edges: Vec<f64>,
        reco_edges: Vec<f64>,
        raw_counts: Vec<Vec<f64>>,
        probs: Vec<Vec<f64>>,
        efficiency: Vec<f64>,
    ) -> Result<Self> {
        let n_gen = gen_edges.len().saturating_sub(1);
        let n_reco = reco_edges.len().saturating_sub(1);
        if n_gen == 0 || n_reco == 0 {
            return Err(Error::InvalidBinning("response needs at least one gen and one reco bin".into()));
        }
        for (name, m) in [("raw_counts", &raw_counts), ("probs", &probs)] {
            if m.len() != n_reco || m.iter().any(|row| row.len() != n_gen) {
                return Err(Error::FoldShape(format!(
                    "{name} must be {n_reco}x{n_gen} (reco-major)"
                )));
            }
        }
        if efficiency.len() != n_gen {
            return Err(Error::FoldShape(format!(
                "efficiency has {} entries, expected {n_gen}",
                efficiency.len()
            )));
        }
        for row in &probs {
            for &p in row {
                if !(0.0..=1.0 + 1e-12).contains(&p) {
                    return Err(Error::Domain(format!("probability entry {p} outside [0, 1]")));
                }
            }
        }
        let raw_errors = raw_counts
            .iter()
            .map(|row| row.iter().map(|c| c.sqrt()).collect())
            .collect();
        Ok(Self { gen_edges, reco_edges, raw_counts, raw_errors, probs, efficiency })
    }

    pub fn n_gen_bins(&self) -> usize {
        self.gen_edges.len() - 1
    }

    pub fn n_reco_bins(&self) -> usize {
        self.reco_edges.len() - 1
    }

    pub fn gen_edges(&self) -> &[f64] {
        &self.gen_edges
    }

    pub fn reco_edges(&self) -> &[f64] {
        &self.reco_edges
    }

    /// Migration probabilities, reco-major: `probs()[i][j]` is the probability
    /// for truth bin `j` to be reconstructed in reco bin `i`.
    pub fn probs(&self) -> &[Vec<f64>] {
        &self.probs
    }

    pub fn raw_counts(&self) -> &[Vec<f64>] {
        &self.raw_counts
    }

    pub fn raw_errors(&self) -> &[Vec<f64>] {
        &self.raw_errors
    }

    pub fn efficiency(&self) -> &[f64] {
        &self.efficiency
    }

    /// Truth bins whose columns are entirely empty (no simulated events).
    pub fn empty_columns(&self) -> Vec<usize> {
        (0..self.n_gen_bins())
            .filter(|&j| self.raw_counts.iter().all(|row| row[j] == 0.0))
            .collect()
    }
}

/// Build the response from event-paired `(truth, reco)` values with unit
/// weights. Events whose truth value falls outside the gen edges are ignored;
/// events whose reco value falls outside the reco edges count toward the
/// truth-bin total (and so lower the measured efficiency) but enter no cell.
pub fn build_response(
    truth_values: &[f64],
    reco_values: &[f64],
    gen_edges: &[f64],
    reco_edges: &[f64],
    mode: EfficiencyMode,
) -> Result<ResponseMatrix> {
    let weights = vec![1.0; truth_values.len()];
    build_response_weighted(truth_values, reco_values, &weights, gen_edges, reco_edges, mode, ShiftMode::FlatWeight, 0.0)
}

/// Weighted build with an optional systematic deformation applied to the
/// truth side. `shift` is the signed fraction (e.g. `+0.10` / `-0.10`); with
/// [`ShiftMode::FlatWeight`] it scales event weights, with
/// [`ShiftMode::ValueShift`] it rescales the truth values themselves.
#[allow(clippy::too_many_arguments)]
pub fn build_response_weighted(
    truth_values: &[f64],
    reco_values: &[f64],
    weights: &[f64],
    gen_edges: &[f64],
    reco_edges: &[f64],
    mode: EfficiencyMode,
    shift_mode: ShiftMode,
    shift: f64,
) -> Result<ResponseMatrix> {
    if truth_values.len() != reco_values.len() {
        return Err(Error::PairedInput(format!(
            "{} truth values vs {} reco values",
            truth_values.len(),
            reco_values.len()
        )));
    }
    if truth_values.len() != weights.len() {
        return Err(Error::PairedInput(format!(
            "{} truth values vs {} weights",
            truth_values.len(),
            weights.len()
        )));
    }
    if truth_values.is_empty() {
        return Err(Error::EmptyResponse("no event pairs".into()));
    }
    let n_gen = gen_edges.len().saturating_sub(1);
    let n_reco = reco_edges.len().saturating_sub(1);
    if n_gen == 0 || n_reco == 0 {
        return Err(Error::InvalidBinning("response needs at least one gen and one reco bin".into()));
    }

    let mut raw_counts = vec![vec![0.0; n_gen]; n_reco];
    let mut gen_totals = vec![0.0; n_gen]; // all events per truth bin, reco-lost included
    for ((&t0, &r), &w0) in truth_values.iter().zip(reco_values).zip(weights) {
        let (t, w) = match shift_mode {
            ShiftMode::FlatWeight => (t0, w0 * (1.0 + shift)),
            ShiftMode::ValueShift => (t0 * (1.0 + shift), w0),
        };
        let BinLocation::Bin(j) = histogram::bin_index(gen_edges, t) else {
            continue;
        };
        gen_totals[j] += w;
        if let BinLocation::Bin(i) = histogram::bin_index(reco_edges, r) {
            raw_counts[i][j] += w;
        }
    }

    let mut probs = vec![vec![0.0; n_gen]; n_reco];
    let mut efficiency = vec![1.0; n_gen];
    for j in 0..n_gen {
        let col_total: f64 = (0..n_reco).map(|i| raw_counts[i][j]).sum();
        match mode {
            EfficiencyMode::AssumeFull => {
                if col_total > 0.0 {
                    for i in 0..n_reco {
                        probs[i][j] = raw_counts[i][j] / col_total;
                    }
                }
            }
            EfficiencyMode::Measured => {
                if gen_totals[j] > 0.0 {
                    efficiency[j] = col_total / gen_totals[j];
                    for i in 0..n_reco {
                        probs[i][j] = raw_counts[i][j] / gen_totals[j];
                    }
                } else {
                    efficiency[j] = 1.0;
                }
            }
        }
    }

    let raw_errors = raw_counts
        .iter()
        .map(|row| row.iter().map(|c| c.sqrt()).collect())
        .collect();
    Ok(ResponseMatrix {
        gen_edges: gen_edges.to_vec(),
        reco_edges: reco_edges.to_vec(),
        raw_counts,
        raw_errors,
        probs,
        efficiency,
    })
}

/// Fold a truth spectrum through the response: `y_i = Σ_j probs[i][j] x_j`,
/// with errors propagated as `sqrt(Σ_j probs[i][j]² σ_j²)`.
pub fn fold(response: &ResponseMatrix, x: &Histogram) -> Result<Histogram> {
    if !histogram::edges_equal(x.edges(), response.gen_edges()) {
        return Err(Error::FoldShape(format!(
            "input has {} bins on different edges than the response's {} gen bins",
            x.n_bins(),
            response.n_gen_bins()
        )));
    }
    let counts: Vec<f64> = response
        .probs
        .iter()
        .map(|row| row.iter().zip(x.counts()).map(|(p, c)| p * c).sum())
        .collect();
    let errors: Vec<f64> = response
        .probs
        .iter()
        .map(|row| {
            row.iter()
                .zip(x.errors())
                .map(|(p, e)| p * p * e * e)
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    Histogram::new(response.reco_edges.clone(), counts, errors)
}

/// Ratio of largest to smallest singular value of `probs`, with the smallest
/// clipped at zero: `σ_max / max(0, σ_min)`. Returns `f64::INFINITY` when the
/// clipped minimum is zero (including the negative values finite precision can
/// produce).
pub fn condition_number(response: &ResponseMatrix) -> f64 {
    let n_reco = response.n_reco_bins();
    let n_gen = response.n_gen_bins();
    let m = nalgebra::DMatrix::from_fn(n_reco, n_gen, |i, j| response.probs[i][j]);
    let svd = m.svd(false, false);
    let s_max = svd.singular_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s_min = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let clipped = s_min.max(0.0);
    if clipped == 0.0 {
        f64::INFINITY
    } else {
        s_max / clipped
    }
}

/// A nominal response together with its up/down systematic variants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResponseBundle {
    pub nominal: ResponseMatrix,
    pub up: ResponseMatrix,
    pub down: ResponseMatrix,
}

impl ResponseBundle {
    /// A bundle whose variants equal the nominal matrix.
    pub fn degenerate(nominal: ResponseMatrix) -> Self {
        ResponseBundle { up: nominal.clone(), down: nominal.clone(), nominal }
    }

    /// Response at nuisance value `alpha`: per-entry piecewise-linear
    /// interpolation between nominal and the up (`alpha = +1`) or down
    /// (`alpha = -1`) probabilities, clipped at zero and with each nonzero
    /// column renormalized to the nominal column sum.
    pub fn at_alpha(&self, alpha: f64) -> Result<ResponseMatrix> {
        let mut probs = interpolate_probs_raw(&self.nominal.probs, &self.up.probs, &self.down.probs, alpha);
        let n_reco = self.nominal.n_reco_bins();
        let n_gen = self.nominal.n_gen_bins();
        for row in probs.iter_mut() {
            for p in row.iter_mut() {
                if *p < 0.0 {
                    *p = 0.0;
                }
            }
        }
        for j in 0..n_gen {
            let col: f64 = (0..n_reco).map(|i| probs[i][j]).sum();
            let target: f64 = (0..n_reco).map(|i| self.nominal.probs[i][j]).sum();
            if col > 0.0 && target > 0.0 {
                let scale = target / col;
                for row in probs.iter_mut() {
                    row[j] = (row[j] * scale).min(1.0);
                }
            }
        }
        ResponseMatrix::from_parts(
            self.nominal.gen_edges.clone(),
            self.nominal.reco_edges.clone(),
            self.nominal.raw_counts.clone(),
            probs,
            self.nominal.efficiency.clone(),
        )
    }
}

/// Per-entry interpolation before clipping/renormalization: `alpha = +1`
/// reproduces the up probabilities exactly, `alpha = -1` the down ones, and
/// values beyond ±1 extrapolate linearly.
pub(crate) fn interpolate_probs_raw(
    nominal: &[Vec<f64>],
    up: &[Vec<f64>],
    down: &[Vec<f64>],
    alpha: f64,
) -> Vec<Vec<f64>> {
    nominal
        .iter()
        .zip(up)
        .zip(down)
        .map(|((n_row, u_row), d_row)| {
            n_row
                .iter()
                .zip(u_row)
                .zip(d_row)
                .map(|((&n, &u), &d)| {
                    if alpha >= 0.0 {
                        n + alpha * (u - n)
                    } else {
                        n + alpha * (n - d)
                    }
                })
                .collect()
        })
        .collect()
}

/// Rebuild the response with the truth side shifted up and down by
/// `shift_fraction`, returning nominal plus both variants.
#[allow(clippy::too_many_arguments)]
pub fn systematic_variants(
    truth_values: &[f64],
    reco_values: &[f64],
    gen_edges: &[f64],
    reco_edges: &[f64],
    mode: EfficiencyMode,
    shift_mode: ShiftMode,
    shift_fraction: f64,
) -> Result<ResponseBundle> {
    if !(0.0..1.0).contains(&shift_fraction) {
        return Err(Error::Config(format!(
            "shift fraction {shift_fraction} outside [0, 1)"
        )));
    }
    let weights = vec![1.0; truth_values.len()];
    let build = |shift: f64| {
        build_response_weighted(
            truth_values,
            reco_values,
            &weights,
            gen_edges,
            reco_edges,
            mode,
            shift_mode,
            shift,
        )
    };
    Ok(ResponseBundle {
        nominal: build(0.0)?,
        up: build(shift_fraction)?,
        down: build(-shift_fraction)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn identity_response(n: usize) -> ResponseMatrix {
        let edges: Vec<f64> = (0..=n).map(|i| i as f64).collect();
        let truth: Vec<f64> = (0..n).map(|i| i as f64 + 0.5).collect();
        build_response(&truth, &truth, &edges, &edges, EfficiencyMode::AssumeFull).unwrap()
    }

    #[test]
    fn identical_events_give_identity_probs() {
        let r = identity_response(3);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(r.probs()[i][j], expect);
            }
        }
    }

    #[test]
    fn column_fractions_match_migration_counts() {
        // 3 events from gen bin 0: two stay in reco bin 0, one migrates to reco bin 1
        let truth = [0.5, 0.5, 0.5];
        let reco = [0.5, 0.5, 1.5];
        let edges = [0.0, 1.0, 2.0];
        let r = build_response(&truth, &reco, &edges, &edges, EfficiencyMode::AssumeFull).unwrap();
        assert_relative_eq!(r.probs()[0][0], 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(r.probs()[1][0], 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_gen_column_is_flagged() {
        let truth = [0.5];
        let reco = [0.5];
        let edges = [0.0, 1.0, 2.0];
        let r = build_response(&truth, &reco, &edges, &edges, EfficiencyMode::AssumeFull).unwrap();
        assert_eq!(r.empty_columns(), vec![1]);
        assert!(r.probs().iter().all(|row| row[1] == 0.0));
    }

    #[test]
    fn mismatched_pairs_are_rejected() {
        let edges = [0.0, 1.0];
        assert!(matches!(
            build_response(&[0.5], &[0.5, 0.6], &edges, &edges, EfficiencyMode::AssumeFull),
            Err(Error::PairedInput(_))
        ));
        assert!(matches!(
            build_response(&[], &[], &edges, &edges, EfficiencyMode::AssumeFull),
            Err(Error::EmptyResponse(_))
        ));
    }

    #[test]
    fn measured_efficiency_sums_columns() {
        // two events in gen bin 0; one lands out of reco range
        let truth = [0.5, 0.5];
        let reco = [0.5, 9.0];
        let gen_edges = [0.0, 1.0];
        let reco_edges = [0.0, 1.0];
        let r = build_response(&truth, &reco, &gen_edges, &reco_edges, EfficiencyMode::Measured).unwrap();
        assert_relative_eq!(r.efficiency()[0], 0.5);
        let col_sum: f64 = r.probs().iter().map(|row| row[0]).sum();
        assert_relative_eq!(col_sum, r.efficiency()[0], epsilon = 1e-12);
    }

    #[test]
    fn fold_identity_returns_input() {
        let r = identity_response(3);
        let x = Histogram::with_poisson_errors(vec![0.0, 1.0, 2.0, 3.0], vec![5.0, 7.0, 2.0]).unwrap();
        let y = fold(&r, &x).unwrap();
        assert_eq!(y.counts(), x.counts());
    }

    #[test]
    fn fold_splits_one_gen_bin() {
        // 1 gen bin feeding 2 reco bins evenly
        let r = ResponseMatrix::from_parts(
            vec![0.0, 1.0],
            vec![0.0, 0.5, 1.0],
            vec![vec![5.0], vec![5.0]],
            vec![vec![0.5], vec![0.5]],
            vec![1.0],
        )
        .unwrap();
        let x = Histogram::with_poisson_errors(vec![0.0, 1.0], vec![10.0]).unwrap();
        let y = fold(&r, &x).unwrap();
        assert_eq!(y.counts(), &[5.0, 5.0]);
    }

    #[test]
    fn fold_zero_input_gives_zero_output() {
        let r = identity_response(4);
        let x = Histogram::zeroed(vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(fold(&r, &x).unwrap().total(), 0.0);
    }

    #[test]
    fn fold_rejects_wrong_edges() {
        let r = identity_response(3);
        let x = Histogram::zeroed(vec![0.0, 1.0]).unwrap();
        assert!(matches!(fold(&r, &x), Err(Error::FoldShape(_))));
    }

    #[test]
    fn condition_number_identity_is_one() {
        let r = identity_response(5);
        assert_relative_eq!(condition_number(&r), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn condition_number_diagonal_ratio() {
        let r = ResponseMatrix::from_parts(
            vec![0.0, 1.0, 2.0],
            vec![0.0, 1.0, 2.0],
            vec![vec![2.0, 0.0], vec![0.0, 1.0]],
            vec![vec![1.0, 0.0], vec![0.0, 0.5]],
            vec![1.0, 1.0],
        )
        .unwrap();
        assert_relative_eq!(condition_number(&r), 2.0, epsilon = 1e-9);
    }

    #[test]
    fn condition_number_singular_is_infinite() {
        let r = ResponseMatrix::from_parts(
            vec![0.0, 1.0, 2.0],
            vec![0.0, 1.0, 2.0],
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            vec![1.0, 1.0],
        )
        .unwrap();
        assert!(condition_number(&r).is_infinite());
    }

    #[test]
    fn flat_weight_shift_cancels_in_probs() {
        let truth: Vec<f64> = (0..200).map(|i| (i % 10) as f64 + 0.3).collect();
        let reco: Vec<f64> = truth.iter().map(|t| t + 0.2).collect();
        let edges: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        let b = systematic_variants(
            &truth,
            &reco,
            &edges,
            &edges,
            EfficiencyMode::AssumeFull,
            ShiftMode::FlatWeight,
            0.10,
        )
        .unwrap();
        for i in 0..10 {
            for j in 0..10 {
                assert_relative_eq!(b.up.probs()[i][j], b.nominal.probs()[i][j], epsilon = 1e-12);
                assert_relative_eq!(
                    b.up.raw_counts()[i][j],
                    1.1 * b.nominal.raw_counts()[i][j],
                    epsilon = 1e-9
                );
            }
        }
    }

    #[test]
    fn value_shift_deforms_probs() {
        let truth: Vec<f64> = (0..4000).map(|i| 1.0 + 8.0 * (i as f64 / 4000.0)).collect();
        let reco: Vec<f64> = truth.iter().map(|t| t + 0.4).collect();
        let edges: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        let b = systematic_variants(
            &truth,
            &reco,
            &edges,
            &edges,
            EfficiencyMode::AssumeFull,
            ShiftMode::ValueShift,
            0.10,
        )
        .unwrap();
        let differs = (0..10).any(|i| {
            (0..10).any(|j| (b.up.probs()[i][j] - b.nominal.probs()[i][j]).abs() > 1e-9)
        });
        assert!(differs, "value shift should move events across truth bins");
    }

    #[test]
    fn zero_shift_gives_degenerate_bundle() {
        let truth = [0.5, 1.5, 1.5];
        let reco = [0.5, 1.5, 0.5];
        let edges = [0.0, 1.0, 2.0];
        let b = systematic_variants(
            &truth,
            &reco,
            &edges,
            &edges,
            EfficiencyMode::AssumeFull,
            ShiftMode::FlatWeight,
            0.0,
        );
        // zero is allowed as the degenerate end of the range
        let b = b.unwrap();
        assert_eq!(b.up, b.nominal);
        assert_eq!(b.down, b.nominal);
    }

    #[test]
    fn shift_fraction_out_of_range_is_rejected() {
        let truth = [0.5];
        let reco = [0.5];
        let edges = [0.0, 1.0];
        assert!(matches!(
            systematic_variants(
                &truth,
                &reco,
                &edges,
                &edges,
                EfficiencyMode::AssumeFull,
                ShiftMode::FlatWeight,
                1.5
            ),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn interpolation_hits_variants_at_unit_alpha() {
        let nominal = vec![vec![0.8, 0.2], vec![0.2, 0.8]];
        let up = vec![vec![0.7, 0.3], vec![0.3, 0.7]];
        let down = vec![vec![0.9, 0.1], vec![0.1, 0.9]];
        let at_up = interpolate_probs_raw(&nominal, &up, &down, 1.0);
        let at_down = interpolate_probs_raw(&nominal, &up, &down, -1.0);
        let at_zero = interpolate_probs_raw(&nominal, &up, &down, 0.0);
        assert_eq!(at_up, up);
        assert_eq!(at_down, down);
        assert_eq!(at_zero, nominal);
    }

    #[test]
    fn json_round_trip_preserves_matrix() {
        let r = identity_response(3);
        let text = serde_json::to_string(&r).unwrap();
        let back: ResponseMatrix = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        // wire format carries exactly the interchange fields
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        let obj = value.as_object().unwrap();
        let mut keys: Vec<&str> = obj.keys().map(|k| k.as_str()).collect();
        keys.sort_unstable();
        assert_eq!(keys, vec!["efficiency", "gen_edges", "probs", "raw_counts", "reco_edges"]);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;
        use rand::SeedableRng;

        fn small_response_and_input() -> impl Strategy<Value = (ResponseMatrix, Vec<f64>, Vec<f64>)> {
            (2usize..6, 1u64..1000).prop_map(|(n, seed)| {
                use rand::Rng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let edges: Vec<f64> = (0..=n).map(|i| i as f64).collect();
                let n_events = 500;
                let truth: Vec<f64> = (0..n_events).map(|_| rng.gen_range(0.0..n as f64)).collect();
                let reco: Vec<f64> = truth
                    .iter()
                    .map(|t| (t + rng.gen_range(-0.4..0.4)).clamp(0.0, n as f64 - 1e-9))
                    .collect();
                let r = build_response(&truth, &reco, &edges, &edges, EfficiencyMode::AssumeFull).unwrap();
                let x1: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..50.0)).collect();
                let x2: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..50.0)).collect();
                (r, x1, x2)
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn fold_conserves_total_at_full_efficiency((r, x1, _) in small_response_and_input()) {
                let edges = r.gen_edges().to_vec();
                let h = Histogram::with_poisson_errors(edges, x1.clone()).unwrap();
                let y = fold(&r, &h).unwrap();
                let empty = r.empty_columns();
                let expected: f64 = x1.iter().enumerate()
                    .filter(|(j, _)| !empty.contains(j))
                    .map(|(_, c)| c)
                    .sum();
                prop_assert!((y.total() - expected).abs() <= 1e-9 * expected.max(1.0));
            }

            #[test]
            fn fold_is_linear((r, x1, x2) in small_response_and_input()) {
                let edges = r.gen_edges().to_vec();
                let a = 2.0;
                let b = 0.5;
                let h1 = Histogram::with_poisson_errors(edges.clone(), x1.clone()).unwrap();
                let h2 = Histogram::with_poisson_errors(edges.clone(), x2.clone()).unwrap();
                let combined: Vec<f64> = x1.iter().zip(&x2).map(|(u, v)| a * u + b * v).collect();
                let hc = Histogram::with_poisson_errors(edges, combined).unwrap();
                let yc = fold(&r, &hc).unwrap();
                let y1 = fold(&r, &h1).unwrap();
                let y2 = fold(&r, &h2).unwrap();
                for i in 0..yc.n_bins() {
                    let lin = a * y1.counts()[i] + b * y2.counts()[i];
                    prop_assert!((yc.counts()[i] - lin).abs() <= 1e-9 * lin.abs().max(1.0));
                }
            }

            #[test]
            fn condition_number_permutation_invariant((r, _, _) in small_response_and_input()) {
                let n = r.n_gen_bins();
                // reverse rows and columns: a permutation of the matrix
                let permuted: Vec<Vec<f64>> = (0..n).rev()
                    .map(|i| (0..n).rev().map(|j| r.probs()[i][j]).collect())
                    .collect();
                let raw: Vec<Vec<f64>> = (0..n).rev()
                    .map(|i| (0..n).rev().map(|j| r.raw_counts()[i][j]).collect())
                    .collect();
                let rp = ResponseMatrix::from_parts(
                    r.gen_edges().to_vec(),
                    r.reco_edges().to_vec(),
                    raw,
                    permuted,
                    r.efficiency().to_vec(),
                ).unwrap();
                let c0 = condition_number(&r);
                let c1 = condition_number(&rp);
                if c0.is_finite() && c1.is_finite() {
                    prop_assert!((c0 - c1).abs() <= 1e-6 * c0.max(1.0));
                } else {
                    prop_assert_eq!(c0.is_infinite(), c1.is_infinite());
                }
            }

            #[test]
            fn nonzero_columns_sum_to_efficiency((r, _, _) in small_response_and_input()) {
                for j in 0..r.n_gen_bins() {
                    let col: f64 = r.probs().iter().map(|row| row[j]).sum();
                    if col > 0.0 {
                        prop_assert!((col - r.efficiency()[j]).abs() <= 1e-12);
                    }
                }
            }
        }
    }
}
