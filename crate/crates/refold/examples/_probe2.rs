use refold::*;
use std::time::Instant;

fn main() {
    let which = std::env::args().nth(1).unwrap_or_default();
    match which.as_str() {
        "s4range" => s4range(),
        "agreement" => agreement(),
        "s2s3" => s2s3(),
        "osc" => osc(),
        _ => println!("usage: s4range|agreement|s2s3|osc"),
    }
}

fn s4range() {
    for half_width_sigmas in [2.5f64, 3.0, 3.5, 4.0, 5.0] {
        for seed in 0..5u64 {
            let mut spec = scenario_by_name("s4", seed).unwrap();
            spec.range_lo = spec.truth_mean - half_width_sigmas * spec.truth_sigma;
            spec.range_hi = spec.truth_mean + half_width_sigmas * spec.truth_sigma;
            let d = generate(&spec).unwrap();
            print!("{:.1e} ", condition_number(&d.response.nominal));
        }
        println!("  <- +/-{half_width_sigmas} sigma");
    }
}

fn agreement() {
    // ks: fraction of bins with |Delta| <= k * combined Poisson error
    let t0 = Instant::now();
    let ks = [1.0f64, 1.5, 2.0, 3.0, 5.0];
    let mut pooled = vec![0usize; ks.len()];
    let mut total = 0usize;
    let mut band_ok = 0usize;
    for toy in 0..10u64 {
        let spec = scenario_by_name("s1", 100 + toy).unwrap();
        let data = generate(&spec).unwrap();
        // floor at stop threshold keeps the termination inside [0.9, 1.0]
        let base = SearchConfig {
            max_samples: 500_000,
            accept_floor: Some(0.9),
            ..Default::default()
        };
        let cfg_t = SearchConfig { seed: toy, ..base.clone() };
        let cfg_f = SearchConfig { seed: 1000 + toy, start: StartKind::FlatHalfMax, ..base };
        let flat = flat_start(&data.truth).unwrap();
        let rt = unfold(&data.truth, &data.alt_data, &data.response.nominal, &cfg_t).unwrap();
        let rf = unfold(&flat, &data.alt_data, &data.response.nominal, &cfg_f).unwrap();
        for r in [&rt, &rf] {
            if r.best_ts.ts_per_ndof >= 0.9 && r.best_ts.ts_per_ndof <= 1.01 { band_ok += 1; }
        }
        for b in 0..rt.best_sample.n_bins() {
            let d = (rt.best_sample.counts()[b] - rf.best_sample.counts()[b]).abs();
            let s = (rt.best_sample.errors()[b].powi(2) + rf.best_sample.errors()[b].powi(2)).sqrt();
            total += 1;
            for (i, k) in ks.iter().enumerate() {
                if d <= k * s { pooled[i] += 1; }
            }
        }
    }
    println!("band-terminations: {band_ok}/20");
    for (i, k) in ks.iter().enumerate() {
        println!("k={k}: {}/{} = {:.3}", pooled[i], total, pooled[i] as f64 / total as f64);
    }
    println!("[{:?}]", t0.elapsed());
}

fn s2s3() {
    use refold::dagostini::{DagostiniConfig, DagostiniPrior};
    for name in ["s2", "s3"] {
        let spec = scenario_by_name(name, 0).unwrap();
        let data = generate(&spec).unwrap();
        let cfg = SearchConfig { max_samples: 2_000_000, seed: 0, ..Default::default() };
        let run = unfold(&data.truth, &data.alt_data, &data.response.nominal, &cfg).unwrap();
        let dag = dagostini_unfold(
            &data.alt_data,
            &data.response.nominal,
            &DagostiniConfig { prior: DagostiniPrior::Spectrum(data.truth.clone()), ..Default::default() },
        )
        .unwrap();
        let report = bottom_line(&data, &run, &dag.unfolded, &DistanceSpec::default()).unwrap();
        println!(
            "{name}: folded {:.1} algo1 {:.1} dag {:.1}",
            report.folded_space_ts, report.unfolded_space_ts_algo1, report.unfolded_space_ts_dagostini
        );
    }
}

fn osc() {
    // naive inversion on the strong-smear scenario: negative bins expected
    for seed in 0..3u64 {
        let d = generate(&scenario_by_name("s4", seed).unwrap()).unwrap();
        let inverted = naive_inversion(&d.response.nominal, &d.alt_data).unwrap();
        let negatives = inverted.counts().iter().filter(|&&c| c < 0.0).count();
        println!("seed {seed}: {negatives} negative bins");
    }
}
