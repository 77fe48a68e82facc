use refold::*;
use refold::dagostini::{DagostiniConfig, DagostiniPrior};
use refold::evaluation::EnsembleMethod;
use std::time::Instant;

fn main() {
    let which = std::env::args().nth(1).unwrap_or_default();
    match which.as_str() {
        "cond" => cond(),
        "s1" => s1(),
        "s3" => s3(),
        "starts" => starts(),
        "s5" => s5(),
        _ => println!("usage: cond|s1|s3|starts|s5"),
    }
}

fn cond() {
    for seed in 0..5u64 {
        let d1 = generate(&scenario_by_name("s1", seed).unwrap()).unwrap();
        let d4 = generate(&scenario_by_name("s4", seed).unwrap()).unwrap();
        println!(
            "seed {seed}: cond(s1) = {:.2}, cond(s4) = {:.3e}",
            condition_number(&d1.response.nominal),
            condition_number(&d4.response.nominal)
        );
    }
}

fn s1() {
    for seed in [0u64, 7, 123] {
        let t0 = Instant::now();
        let spec = scenario_by_name("s1", seed).unwrap();
        let data = generate(&spec).unwrap();
        // criterion 3: vs original reco
        let cfg = SearchConfig { max_samples: 100_000, seed, ..Default::default() };
        let run = unfold(&data.truth, &data.reco, &data.response.nominal, &cfg).unwrap();
        println!(
            "seed {seed} vs reco: ts/ndof {:.3} iters {} reason {:?} [{:?}]",
            run.best_ts.ts_per_ndof, run.iterations_used, run.stop_reason, t0.elapsed()
        );
        // bottom line style: vs alt_data
        let t0 = Instant::now();
        let cfg = SearchConfig { max_samples: 200_000, seed, ..Default::default() };
        let run = unfold(&data.truth, &data.alt_data, &data.response.nominal, &cfg).unwrap();
        let dag = dagostini_unfold(
            &data.alt_data,
            &data.response.nominal,
            &DagostiniConfig { prior: DagostiniPrior::Spectrum(data.truth.clone()), ..Default::default() },
        )
        .unwrap();
        let report = bottom_line(&data, &run, &dag.unfolded, &DistanceSpec::default()).unwrap();
        println!(
            "seed {seed} vs alt: search ts/ndof {:.3} iters {} accepted {} | folded {:.1} algo1 {:.1} dag {:.1} [{:?}]",
            run.best_ts.ts_per_ndof,
            run.iterations_used,
            run.trace.len(),
            report.folded_space_ts,
            report.unfolded_space_ts_algo1,
            report.unfolded_space_ts_dagostini,
            t0.elapsed()
        );
    }
}

fn s3() {
    for seed in [0u64, 7] {
        let t0 = Instant::now();
        let spec = scenario_by_name("s3", seed).unwrap();
        let data = generate(&spec).unwrap();
        let cfg = SearchConfig { max_samples: 2_000_000, seed, ..Default::default() };
        let run = unfold(&data.truth, &data.alt_data, &data.response.nominal, &cfg).unwrap();
        let unpopulated = run.best_sample.counts().iter().filter(|&&c| c == 0.0).count();
        println!(
            "seed {seed}: ts/ndof {:.3} iters {} reason {:?} empty-gen-bins {} [{:?}]",
            run.best_ts.ts_per_ndof, run.iterations_used, run.stop_reason, unpopulated, t0.elapsed()
        );
    }
}

fn starts() {
    let t0 = Instant::now();
    let mut pooled_ok = 0usize;
    let mut pooled_all = 0usize;
    for toy in 0..10u64 {
        let spec = scenario_by_name("s1", 100 + toy).unwrap();
        let data = generate(&spec).unwrap();
        let cfg_t = SearchConfig { max_samples: 500_000, seed: toy, ..Default::default() };
        let cfg_f = SearchConfig { max_samples: 500_000, seed: 1000 + toy, start: StartKind::FlatHalfMax, ..Default::default() };
        let flat = flat_start(&data.truth).unwrap();
        let rt = unfold(&data.truth, &data.alt_data, &data.response.nominal, &cfg_t).unwrap();
        let rf = unfold(&flat, &data.alt_data, &data.response.nominal, &cfg_f).unwrap();
        let mut ok = 0;
        for b in 0..rt.best_sample.n_bins() {
            let d = (rt.best_sample.counts()[b] - rf.best_sample.counts()[b]).abs();
            let s = (rt.best_sample.errors()[b].powi(2) + rf.best_sample.errors()[b].powi(2)).sqrt();
            if d <= s { ok += 1; }
        }
        pooled_ok += ok;
        pooled_all += rt.best_sample.n_bins();
        println!(
            "toy {toy}: truth ts {:.3}/{} flat ts {:.3}/{} agree {}/{}",
            rt.best_ts.ts_per_ndof, rt.iterations_used, rf.best_ts.ts_per_ndof, rf.iterations_used, ok, rt.best_sample.n_bins()
        );
    }
    println!("pooled agreement {}/{} = {:.2} [{:?}]", pooled_ok, pooled_all, pooled_ok as f64 / pooled_all as f64, t0.elapsed());
}

fn s5() {
    let t0 = Instant::now();
    let spec = scenario_by_name("s5-small", 900).unwrap();
    let a = ensemble_bias(&spec, 20, &EnsembleMethod::Algo1(SearchConfig { max_samples: 2_000_000, seed: 1, ..Default::default() })).unwrap();
    println!("algo1 ensemble done [{:?}], failed {}", t0.elapsed(), a.n_failed);
    let t1 = Instant::now();
    let d = ensemble_bias(&spec, 20, &EnsembleMethod::Dagostini(DagostiniConfig::default())).unwrap();
    println!("dag ensemble done [{:?}], failed {}", t1.elapsed(), d.n_failed);
    let mut algo_better = 0;
    let mut populated = 0;
    for b in 0..a.per_bin_median_abs.len() {
        if let (Some(ma), Some(md)) = (a.per_bin_median_abs[b], d.per_bin_median_abs[b]) {
            populated += 1;
            if ma < md { algo_better += 1; }
            println!("bin {b:2}: algo1 {:.4} dag {:.4} {}", ma, md, if ma < md { "<" } else { ">=" });
        }
    }
    println!("algo1 better in {algo_better}/{populated} populated bins");
}
