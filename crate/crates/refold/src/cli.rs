//! The `refold` command-line front end.
//!
//! Subcommands: `scenario`, `build-response`, `unfold`, `unfold-abc`,
//! `dagostini`, `bottom-line`, `ensemble`, `cond`. Every file-producing
//! command writes a run manifest next to its outputs recording the invocation,
//! seed, input digests, and runtime, so any output can be reproduced
//! bit-exactly. Exit codes: 0 success, 1 usage error, 2 runtime error.
//! Set `REFOLD_LOG` to control verbosity.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use crate::dagostini::{dagostini_unfold, DagostiniConfig, DagostiniPrior};
use crate::disttest::{DistanceKind, DistanceSpec, DEFAULT_KL_EPSILON};
use crate::error::Error;
use crate::evaluation::{bottom_line_scenario, ensemble_bias, EnsembleMethod};
use crate::histogram::Histogram;
use crate::io::{self, RunManifest, TraceWriter};
use crate::response::{build_response, condition_number, EfficiencyMode, ResponseBundle};
use crate::scenarios::{generate, scenario_by_name};
use crate::unfolder::{
    flat_start, unfold_abc, unfold_with_observer, NuisancePrior, SearchConfig, StartKind,
};

const EXIT_OK: i32 = 0;
const EXIT_USAGE: i32 = 1;
const EXIT_RUNTIME: i32 = 2;

/// Acceptances per trace-file flush while a search is running.
const TRACE_FLUSH_EVERY: usize = 1000;

#[derive(Parser)]
#[command(name = "refold", version, about = "Spectrum unfolding by stochastic search in truth space")]
struct Cli {
    /// Base random seed for commands that draw random numbers.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for the concurrent parts (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a built-in simulation scenario and write its histograms and response files.
    Scenario(ScenarioArgs),
    /// Build a response matrix from an event-pair CSV.
    BuildResponse(BuildResponseArgs),
    /// Run the stochastic search against a fixed response.
    Unfold(UnfoldArgs),
    /// Run the nuisance-sampled search and write posterior bands.
    UnfoldAbc(UnfoldAbcArgs),
    /// Run the iterative Bayesian baseline.
    Dagostini(DagostiniArgs),
    /// Run the bottom-line comparison for one scenario.
    BottomLine(BottomLineArgs),
    /// Toy-ensemble bias study.
    Ensemble(EnsembleArgs),
    /// Print the condition number of a response matrix.
    Cond(CondArgs),
}

#[derive(clap::Args)]
struct ScenarioArgs {
    /// Scenario name: s1, s2, s3, s4, or s5-small.
    #[arg(long)]
    name: String,
    #[arg(long)]
    outdir: PathBuf,
    /// Also write the raw (truth, reco) event pairs as pairs.csv.
    #[arg(long, default_value_t = false)]
    write_pairs: bool,
}

#[derive(clap::Args)]
struct BuildResponseArgs {
    /// Event pairs CSV with header `truth,reco`.
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    gen_bins: usize,
    #[arg(long)]
    reco_bins: usize,
    /// Binning range; defaults to the min/max of the respective values.
    #[arg(long)]
    range_lo: Option<f64>,
    #[arg(long)]
    range_hi: Option<f64>,
    /// Efficiency convention.
    #[arg(long, value_enum, default_value_t = EfficiencyArg::Full)]
    efficiency: EfficiencyArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum EfficiencyArg {
    Full,
    Measured,
}

#[derive(Clone, Copy, ValueEnum)]
enum StartArg {
    Truth,
    Flat,
}

#[derive(clap::Args)]
struct UnfoldArgs {
    /// Target data histogram CSV.
    #[arg(long)]
    data: PathBuf,
    /// Response matrix JSON.
    #[arg(long)]
    response: PathBuf,
    /// Starting point for the sampling.
    #[arg(long, value_enum, default_value_t = StartArg::Truth)]
    start: StartArg,
    /// Truth histogram CSV (start spectrum, or the base of the flat start).
    #[arg(long)]
    truth: PathBuf,
    /// Two-sample statistic: pearson, porter, bhattacharyya, wasserstein1, kl.
    #[arg(long, default_value = "pearson")]
    test: String,
    #[arg(long)]
    kl_epsilon: Option<f64>,
    #[arg(long, default_value_t = 100_000)]
    max_samples: u64,
    /// Compatibility threshold on the best per-NDOF statistic.
    #[arg(long, default_value_t = 0.9)]
    stop_ts_low: f64,
    #[arg(long, default_value_t = 0.01)]
    early_stop_window: f64,
    /// Enable the acceptance floor (candidates below it are never accepted).
    #[arg(long)]
    accept_floor: Option<f64>,
    /// Stop target for statistics without a chi-square calibration.
    #[arg(long, default_value_t = 0.0)]
    target_distance: f64,
    /// Search result JSON.
    #[arg(long)]
    out: PathBuf,
    /// Convergence trace CSV, streamed while the search runs.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(clap::Args)]
struct UnfoldAbcArgs {
    #[arg(long)]
    data: PathBuf,
    /// Nominal response JSON.
    #[arg(long)]
    response: PathBuf,
    /// Up/down systematic variants; default to the nominal matrix.
    #[arg(long)]
    response_up: Option<PathBuf>,
    #[arg(long)]
    response_down: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = StartArg::Truth)]
    start: StartArg,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value = "pearson")]
    test: String,
    #[arg(long)]
    kl_epsilon: Option<f64>,
    #[arg(long, default_value_t = 1_000_000)]
    max_samples: u64,
    /// Posterior size: the last N accepted candidates form the bands.
    #[arg(long, default_value_t = 100)]
    n_keep: usize,
    #[arg(long)]
    accept_floor: Option<f64>,
    /// Posterior bands JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct DagostiniArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    response: PathBuf,
    /// Prior spectrum for the first iteration.
    #[arg(long, value_enum, default_value_t = StartArg::Flat)]
    prior: StartArg,
    /// Truth histogram CSV; required for --prior truth.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Convergence tolerance on the maximum relative per-bin change.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iterations: usize,
    /// Unfolded histogram CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct BottomLineArgs {
    #[arg(long)]
    scenario: String,
    /// Iteration budget per search; defaults to 200k, or 2M for the
    /// ill-defined scenarios (s3, s5-small).
    #[arg(long)]
    max_samples: Option<u64>,
    #[arg(long, default_value = "pearson")]
    test: String,
    /// Report JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Algo1,
    Dagostini,
}

#[derive(clap::Args)]
struct EnsembleArgs {
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    toys: usize,
    #[arg(long, value_enum)]
    method: MethodArg,
    #[arg(long)]
    max_samples: Option<u64>,
    /// Per-bin bias CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct CondArgs {
    #[arg(long)]
    response: PathBuf,
}

enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

type CliResult = std::result::Result<(), CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parse `argv` and execute one subcommand, returning the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let argv_strings: Vec<String> = argv
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };

    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already initialized: {e}");
        }
    }

    let started = Instant::now();
    let result = match &cli.command {
        Command::Scenario(args) => cmd_scenario(&cli, args, &argv_strings, started),
        Command::BuildResponse(args) => cmd_build_response(&cli, args, &argv_strings, started),
        Command::Unfold(args) => cmd_unfold(&cli, args, &argv_strings, started),
        Command::UnfoldAbc(args) => cmd_unfold_abc(&cli, args, &argv_strings, started),
        Command::Dagostini(args) => cmd_dagostini(&cli, args, &argv_strings, started),
        Command::BottomLine(args) => cmd_bottom_line(&cli, args, &argv_strings, started),
        Command::Ensemble(args) => cmd_ensemble(&cli, args, &argv_strings, started),
        Command::Cond(args) => cmd_cond(args),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn manifest_path_for(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    out.with_file_name(format!("{stem}.manifest.json"))
}

fn finish_manifest(mut manifest: RunManifest, path: &Path, started: Instant) -> CliResult {
    manifest.runtime_seconds = started.elapsed().as_secs_f64();
    manifest.write(path)?;
    Ok(())
}

fn parse_distance(test: &str, kl_epsilon: Option<f64>) -> std::result::Result<DistanceSpec, CliError> {
    let kind: DistanceKind = test.parse().map_err(|e: Error| usage(e.to_string()))?;
    Ok(DistanceSpec { kind, epsilon: kl_epsilon.unwrap_or(DEFAULT_KL_EPSILON) })
}

fn load_start(
    start: StartArg,
    truth_path: &Path,
    manifest: &mut RunManifest,
) -> std::result::Result<(Histogram, StartKind), CliError> {
    let truth = io::read_histogram_csv(truth_path)?;
    manifest.add_input(truth_path)?;
    match start {
        StartArg::Truth => Ok((truth, StartKind::Truth)),
        StartArg::Flat => Ok((flat_start(&truth)?, StartKind::FlatHalfMax)),
    }
}

fn cmd_scenario(cli: &Cli, args: &ScenarioArgs, argv: &[String], started: Instant) -> CliResult {
    let spec = scenario_by_name(&args.name, cli.seed).map_err(|e| usage(e.to_string()))?;
    let data = generate(&spec)?;
    std::fs::create_dir_all(&args.outdir).map_err(|e| {
        CliError::Runtime(Error::Io { path: args.outdir.display().to_string(), source: e })
    })?;
    let mut manifest = RunManifest::new("scenario", argv.to_vec(), Some(cli.seed));
    let dir = &args.outdir;
    let files: [(&str, &Histogram); 4] = [
        ("truth.csv", &data.truth),
        ("reco.csv", &data.reco),
        ("alt_truth.csv", &data.alt_truth),
        ("alt_data.csv", &data.alt_data),
    ];
    for (name, hist) in files {
        let path = dir.join(name);
        io::write_histogram_csv(&path, hist)?;
        manifest.add_output(&path);
    }
    for (name, matrix) in [
        ("resp.json", &data.response.nominal),
        ("resp_up.json", &data.response.up),
        ("resp_down.json", &data.response.down),
    ] {
        let path = dir.join(name);
        io::write_response_json(&path, matrix)?;
        manifest.add_output(&path);
    }
    if args.write_pairs {
        let path = dir.join("pairs.csv");
        io::write_pairs_csv(&path, &data.truth_values, &data.reco_values)?;
        manifest.add_output(&path);
    }
    finish_manifest(manifest, &dir.join("manifest.json"), started)
}

fn cmd_build_response(cli: &Cli, args: &BuildResponseArgs, argv: &[String], started: Instant) -> CliResult {
    if args.gen_bins == 0 || args.reco_bins == 0 {
        return Err(usage("--gen-bins and --reco-bins must be positive"));
    }
    let mut manifest = RunManifest::new("build-response", argv.to_vec(), Some(cli.seed));
    let (truth, reco) = io::read_pairs_csv(&args.pairs)?;
    manifest.add_input(&args.pairs)?;
    if truth.is_empty() {
        return Err(CliError::Runtime(Error::EmptyResponse("pairs file holds no events".into())));
    }
    let min_max = |values: &[f64]| {
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        // widen the top so the maximum falls inside the last half-open bin
        (lo, hi + (hi - lo).abs().max(1.0) * 1e-9)
    };
    let (gen_lo, gen_hi) = match (args.range_lo, args.range_hi) {
        (Some(lo), Some(hi)) => (lo, hi),
        (None, None) => min_max(&truth),
        _ => return Err(usage("--range-lo and --range-hi must be given together")),
    };
    let (reco_lo, reco_hi) = match (args.range_lo, args.range_hi) {
        (Some(lo), Some(hi)) => (lo, hi),
        _ => min_max(&reco),
    };
    let edges = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
        let step = (hi - lo) / n as f64;
        (0..n).map(|i| lo + step * i as f64).chain(std::iter::once(hi)).collect()
    };
    let mode = match args.efficiency {
        EfficiencyArg::Full => EfficiencyMode::AssumeFull,
        EfficiencyArg::Measured => EfficiencyMode::Measured,
    };
    let response = build_response(
        &truth,
        &reco,
        &edges(gen_lo, gen_hi, args.gen_bins),
        &edges(reco_lo, reco_hi, args.reco_bins),
        mode,
    )?;
    io::write_response_json(&args.out, &response)?;
    manifest.add_output(&args.out);
    finish_manifest(manifest, &manifest_path_for(&args.out), started)
}

fn cmd_unfold(cli: &Cli, args: &UnfoldArgs, argv: &[String], started: Instant) -> CliResult {
    let distance = parse_distance(&args.test, args.kl_epsilon)?;
    let mut manifest = RunManifest::new("unfold", argv.to_vec(), Some(cli.seed));
    let data = io::read_histogram_csv(&args.data)?;
    manifest.add_input(&args.data)?;
    let response = io::read_response_json(&args.response)?;
    manifest.add_input(&args.response)?;
    let (start, start_kind) = load_start(args.start, &args.truth, &mut manifest)?;
    let cfg = SearchConfig {
        max_samples: args.max_samples,
        stop_ts_low: args.stop_ts_low,
        early_stop_window: args.early_stop_window,
        accept_floor: args.accept_floor,
        target_distance: args.target_distance,
        start: start_kind,
        distance,
        seed: cli.seed,
    };

    let mut trace_writer = match &args.trace {
        Some(path) => Some(TraceWriter::create(path, TRACE_FLUSH_EVERY)?),
        None => None,
    };
    let mut trace_error: Option<Error> = None;
    let run = unfold_with_observer(&start, &data, &response, &cfg, &mut |point| {
        if let Some(w) = trace_writer.as_mut() {
            if let Err(e) = w.record(point) {
                if trace_error.is_none() {
                    trace_error = Some(e);
                }
            }
        }
    })?;
    if let Some(e) = trace_error {
        return Err(CliError::Runtime(e));
    }
    if let Some(w) = trace_writer {
        w.finish()?;
        manifest.add_output(args.trace.as_ref().expect("trace path"));
    }

    log::info!(
        "unfold finished: ts/ndof = {:.4} after {} iterations ({:?})",
        run.best_ts.ts_per_ndof,
        run.iterations_used,
        run.stop_reason
    );
    io::write_json(&args.out, &run)?;
    manifest.add_output(&args.out);
    finish_manifest(manifest, &manifest_path_for(&args.out), started)
}

fn cmd_unfold_abc(cli: &Cli, args: &UnfoldAbcArgs, argv: &[String], started: Instant) -> CliResult {
    let distance = parse_distance(&args.test, args.kl_epsilon)?;
    let mut manifest = RunManifest::new("unfold-abc", argv.to_vec(), Some(cli.seed));
    let data = io::read_histogram_csv(&args.data)?;
    manifest.add_input(&args.data)?;
    let nominal = io::read_response_json(&args.response)?;
    manifest.add_input(&args.response)?;
    let mut load_variant = |path: &Option<PathBuf>| -> std::result::Result<_, CliError> {
        match path {
            Some(p) => {
                let m = io::read_response_json(p)?;
                manifest.add_input(p)?;
                Ok(Some(m))
            }
            None => Ok(None),
        }
    };
    let up = load_variant(&args.response_up)?;
    let down = load_variant(&args.response_down)?;
    let bundle = ResponseBundle {
        up: up.unwrap_or_else(|| nominal.clone()),
        down: down.unwrap_or_else(|| nominal.clone()),
        nominal,
    };
    let (start, start_kind) = load_start(args.start, &args.truth, &mut manifest)?;
    let cfg = SearchConfig {
        max_samples: args.max_samples,
        accept_floor: args.accept_floor,
        start: start_kind,
        distance,
        seed: cli.seed,
        ..Default::default()
    };
    let bands = match unfold_abc(&start, &data, &bundle, NuisancePrior::StandardNormal, &cfg, args.n_keep) {
        Ok(b) => b,
        Err(Error::InsufficientPosterior { needed, got, partial }) => {
            // write the partial result before reporting the failure
            io::write_json(&args.out, &*partial)?;
            return Err(CliError::Runtime(Error::InsufficientPosterior { needed, got, partial }));
        }
        Err(e) => return Err(CliError::Runtime(e)),
    };
    io::write_json(&args.out, &bands)?;
    manifest.add_output(&args.out);
    finish_manifest(manifest, &manifest_path_for(&args.out), started)
}

fn cmd_dagostini(cli: &Cli, args: &DagostiniArgs, argv: &[String], started: Instant) -> CliResult {
    let mut manifest = RunManifest::new("dagostini", argv.to_vec(), Some(cli.seed));
    let data = io::read_histogram_csv(&args.data)?;
    manifest.add_input(&args.data)?;
    let response = io::read_response_json(&args.response)?;
    manifest.add_input(&args.response)?;
    let prior = match args.prior {
        StartArg::Flat => DagostiniPrior::Flat,
        StartArg::Truth => {
            let path = args
                .truth
                .as_ref()
                .ok_or_else(|| usage("--prior truth requires --truth"))?;
            let truth = io::read_histogram_csv(path)?;
            manifest.add_input(path)?;
            DagostiniPrior::Spectrum(truth)
        }
    };
    let cfg = DagostiniConfig {
        max_iterations: args.max_iterations,
        convergence_tol: args.tol,
        prior,
    };
    let run = dagostini_unfold(&data, &response, &cfg)?;
    log::info!(
        "baseline finished after {} iterations (converged: {})",
        run.iterations_used,
        run.converged
    );
    io::write_histogram_csv(&args.out, &run.unfolded)?;
    manifest.add_output(&args.out);
    finish_manifest(manifest, &manifest_path_for(&args.out), started)
}

fn default_budget(scenario: &str) -> u64 {
    match scenario {
        "s3" | "s5-small" => 2_000_000,
        _ => 200_000,
    }
}

fn cmd_bottom_line(cli: &Cli, args: &BottomLineArgs, argv: &[String], started: Instant) -> CliResult {
    let distance = parse_distance(&args.test, None)?;
    let spec = scenario_by_name(&args.scenario, cli.seed).map_err(|e| usage(e.to_string()))?;
    let cfg = SearchConfig {
        max_samples: args.max_samples.unwrap_or_else(|| default_budget(&args.scenario)),
        distance,
        seed: cli.seed,
        ..Default::default()
    };
    let report = bottom_line_scenario(&args.scenario, &spec, &cfg, &distance)?;
    io::write_json(&args.out, &report)?;
    let mut manifest = RunManifest::new("bottom-line", argv.to_vec(), Some(cli.seed));
    manifest.add_output(&args.out);
    finish_manifest(manifest, &manifest_path_for(&args.out), started)
}

fn cmd_ensemble(cli: &Cli, args: &EnsembleArgs, argv: &[String], started: Instant) -> CliResult {
    let spec = scenario_by_name(&args.scenario, cli.seed).map_err(|e| usage(e.to_string()))?;
    let method = match args.method {
        MethodArg::Algo1 => EnsembleMethod::Algo1(SearchConfig {
            max_samples: args.max_samples.unwrap_or_else(|| default_budget(&args.scenario)),
            seed: cli.seed,
            ..Default::default()
        }),
        MethodArg::Dagostini => EnsembleMethod::Dagostini(DagostiniConfig::default()),
    };
    let bias = ensemble_bias(&spec, args.toys, &method)?;
    let mut out = String::from("bin_lo,bin_hi,mean_rel_dev,spread_rel_dev,median_abs_rel_dev,toys_used\n");
    let fmt = |v: &Option<f64>| v.map_or("nan".to_string(), |x| x.to_string());
    for b in 0..bias.per_bin_mean.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            bias.edges[b],
            bias.edges[b + 1],
            fmt(&bias.per_bin_mean[b]),
            fmt(&bias.per_bin_spread[b]),
            fmt(&bias.per_bin_median_abs[b]),
            bias.per_bin_used[b]
        );
    }
    std::fs::write(&args.out, out)
        .map_err(|e| CliError::Runtime(Error::Io { path: args.out.display().to_string(), source: e }))?;
    let mut manifest = RunManifest::new("ensemble", argv.to_vec(), Some(cli.seed));
    manifest.add_output(&args.out);
    finish_manifest(manifest, &manifest_path_for(&args.out), started)
}

fn cmd_cond(args: &CondArgs) -> CliResult {
    let response = io::read_response_json(&args.response)?;
    let cond = condition_number(&response);
    if cond.is_infinite() {
        println!("inf");
    } else {
        println!("{cond}");
    }
    Ok(())
}
