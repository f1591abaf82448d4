//! `scmbench`: generate, analyze, verify and evaluate random SCM benchmarks.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use scmbench::analysis;
use scmbench::dataset::{self, GenerateOptions, RunManifest};
use scmbench::eval::{self, BuiltinEstimator, EstimatorCommand};
use scmbench::scm::{sample_scm, Scm};
use scmbench::soi::{parse_soi_with_overrides, SpaceOfInterest};
use scmbench::verify::{self, Level, VerificationResult, VerifyConfig};
use scmbench::Error;

#[derive(Parser, Debug)]
#[command(
    name = "scmbench",
    version,
    about = "Random structural causal model benchmarks"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Space-of-interest file (TOML). Repeat for `evaluate` over several spaces.
    #[arg(long, global = true)]
    soi: Vec<PathBuf>,
    /// Master seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory (or file for `analyze`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Override a space-of-interest key, e.g. `--set num_nodes=[3,5]`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Record start and finish times in the manifest.
    #[arg(long, global = true)]
    timestamps: bool,
    /// Only print warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample models, data, queries and ground truths into `--out`.
    Generate {
        /// Number of models.
        #[arg(long, default_value_t = 1)]
        scms: u64,
        /// Skip metrics.json.
        #[arg(long)]
        no_metrics: bool,
    },
    /// Recompute the metrics of a generated tree as CSV.
    Analyze {
        /// Directory written by `generate`.
        input: PathBuf,
    },
    /// Check sampled models against the causal hierarchy.
    Verify {
        #[arg(long, value_parser = parse_level)]
        level: Level,
        /// Number of models sampled from `--soi` (ignored with `--input`).
        #[arg(long, default_value_t = 1)]
        scms: u64,
        /// Verify the models of a generated tree instead.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Samples per dataset (L1, L2).
        #[arg(long)]
        samples: Option<usize>,
        /// Largest conditioning set (L1).
        #[arg(long)]
        max_cond: Option<usize>,
        /// Noise draws per partition (L3).
        #[arg(long)]
        noise_draws: Option<usize>,
        /// Variable partitions per model (L3).
        #[arg(long)]
        partitions: Option<usize>,
    },
    /// Run an estimator over fresh benchmarks and score it.
    Evaluate {
        /// External estimator program, called as `PROGRAM [ARGS] WORKDIR`.
        #[arg(long, conflicts_with = "method", required_unless_present = "method")]
        estimator: Option<String>,
        /// Extra argument for the estimator (repeatable).
        #[arg(long = "arg", allow_hyphen_values = true)]
        args: Vec<String>,
        /// Built-in reference estimator.
        #[arg(long)]
        method: Option<Method>,
        /// Comma-separated seeds; defaults to `--seed`.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 1)]
        scms: u64,
        /// Per-model timeout in seconds.
        #[arg(long, default_value_t = 600.0)]
        timeout: f64,
        /// Leave truth.jsonl in the work directories.
        #[arg(long)]
        truth_sidecar: bool,
    },
    /// Built-in estimator on one work directory (writes estimates.jsonl).
    Estimate {
        #[arg(long)]
        method: Method,
        workdir: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    /// Copies truth.jsonl.
    Oracle,
    /// Answers 0.
    Zero,
}

impl From<Method> for BuiltinEstimator {
    fn from(m: Method) -> Self {
        match m {
            Method::Oracle => BuiltinEstimator::Oracle,
            Method::Zero => BuiltinEstimator::Zero,
        }
    }
}

fn parse_level(s: &str) -> Result<Level, String> {
    s.parse::<Level>().map_err(|e| e.to_string())
}

/// A failure with its exit status: 2 for bad input, 3 at run time.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let usage = e.is_config_error()
            || matches!(
                e,
                Error::NotDiscrete | Error::NotMarkovian | Error::TooFewNodes(_)
            );
        Failure {
            code: if usage { 2 } else { 3 },
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type Outcome<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.global.quiet {
            log::LevelFilter::Warn
        } else {
            log::LevelFilter::Info
        })
        .format_timestamp(None)
        .format_target(false)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Outcome<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Generate { scms, no_metrics } => generate(g, *scms, !no_metrics),
        Command::Analyze { input } => analyze(g, input),
        Command::Verify {
            level,
            scms,
            input,
            alpha,
            samples,
            max_cond,
            noise_draws,
            partitions,
        } => {
            let mut cfg = VerifyConfig {
                alpha: *alpha,
                ..VerifyConfig::default()
            };
            cfg.samples = samples.unwrap_or(cfg.samples);
            cfg.max_cond = max_cond.unwrap_or(cfg.max_cond);
            cfg.noise_draws = noise_draws.unwrap_or(cfg.noise_draws);
            cfg.partitions = partitions.unwrap_or(cfg.partitions);
            if !(*alpha > 0.0 && *alpha < 1.0) {
                return Err(usage("--alpha must lie in (0, 1)"));
            }
            run_verify(g, *level, *scms, input.as_deref(), &cfg)
        }
        Command::Evaluate {
            estimator,
            args,
            method,
            seeds,
            scms,
            timeout,
            truth_sidecar,
        } => {
            let mut cmd = match (estimator, method) {
                (Some(p), _) => EstimatorCommand::new(p.clone(), args.clone()),
                (None, Some(m)) => {
                    let exe = std::env::current_exe()
                        .map_err(|e| usage(format!("cannot locate own executable: {e}")))?;
                    let name = format!("{m:?}").to_lowercase();
                    let mut c = EstimatorCommand::new(
                        exe.to_string_lossy(),
                        vec!["estimate".into(), "--method".into(), name.clone()],
                    );
                    c.name = name;
                    c.truth_sidecar = matches!(m, Method::Oracle);
                    c
                }
                (None, None) => unreachable!("clap requires one of them"),
            };
            if !(timeout.is_finite() && *timeout > 0.0) {
                return Err(usage("--timeout must be positive"));
            }
            cmd.timeout = Duration::from_secs_f64(*timeout);
            cmd.truth_sidecar |= *truth_sidecar;
            let seeds = if seeds.is_empty() {
                vec![g.seed]
            } else {
                seeds.clone()
            };
            evaluate(g, &cmd, &seeds, *scms)
        }
        Command::Estimate { method, workdir } => {
            eval::run_builtin((*method).into(), workdir)?;
            Ok(())
        }
    }
}

fn jobs(g: &Global) -> usize {
    g.jobs.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    })
}

fn overrides(g: &Global) -> Outcome<Vec<(String, String)>> {
    g.overrides
        .iter()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got `{kv}`")))
        })
        .collect()
}

fn load_soi(path: Option<&Path>, g: &Global) -> Outcome<SpaceOfInterest> {
    load_soi_inner(path, g, true)
}

fn load_soi_inner(path: Option<&Path>, g: &Global, warn: bool) -> Outcome<SpaceOfInterest> {
    let text = match path {
        Some(p) => {
            fs::read_to_string(p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?
        }
        None => String::new(),
    };
    let (soi, warnings) = parse_soi_with_overrides(&text, &overrides(g)?)?;
    for w in warnings.iter().filter(|_| warn) {
        log::warn!("{w}");
    }
    Ok(soi)
}

fn single_soi(g: &Global) -> Outcome<SpaceOfInterest> {
    if g.soi.len() > 1 {
        return Err(usage("this command takes a single --soi"));
    }
    load_soi(g.soi.first().map(PathBuf::as_path), g)
}

fn out_dir(g: &Global) -> Outcome<&Path> {
    g.out
        .as_deref()
        .ok_or_else(|| usage("--out is required for this command"))
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn generate(g: &Global, scms: u64, metrics: bool) -> Outcome<()> {
    let soi = single_soi(g)?;
    let out = out_dir(g)?;
    // paths and worker counts do not change the output, so they stay out
    let mut command_line = vec!["generate".to_string()];
    command_line.extend(["--seed".into(), g.seed.to_string()]);
    command_line.extend(["--scms".into(), scms.to_string()]);
    for kv in &g.overrides {
        command_line.extend(["--set".into(), kv.clone()]);
    }
    if !metrics {
        command_line.push("--no-metrics".into());
    }
    let started = g.timestamps.then(now);
    log::info!("generating {scms} models into {}", out.display());
    let mut manifest = dataset::generate(
        &soi,
        g.seed,
        scms,
        out,
        jobs(g),
        GenerateOptions { metrics },
        command_line,
    )?;
    if g.timestamps {
        manifest.started_at = started;
        manifest.finished_at = Some(now());
        dataset::write_manifest(out, &manifest)?;
    }
    log::info!("done");
    Ok(())
}

fn read_manifest(dir: &Path) -> Option<RunManifest> {
    let text = fs::read_to_string(dir.join("manifest.json")).ok()?;
    serde_json::from_str(&text).ok()
}

fn analyze(g: &Global, input: &Path) -> Outcome<()> {
    if !input.is_dir() {
        return Err(usage(format!("{} is not a directory", input.display())));
    }
    let dirs = dataset::list_scm_dirs(input)?;
    // the tree's own space of interest and seed unless overridden; its
    // canonical form lists every key, so warnings about unused ones are noise
    let probe_samples = if dirs.is_empty() {
        0
    } else if g.soi.is_empty() && input.join("soi.toml").is_file() {
        load_soi_inner(Some(&input.join("soi.toml")), g, false)?.probe_samples
    } else {
        single_soi(g)?.probe_samples
    };
    let master = read_manifest(input).map_or(g.seed, |m| m.master_seed);
    let rows = dataset::parallel_map(dirs.len() as u64, jobs(g), |i| {
        let (k, dir) = &dirs[i as usize];
        let scm = dataset::read_scm(dir)?;
        let seed = dataset::scm_seed(master, *k).child("analysis", 0);
        let report = analysis::analyze(&scm, probe_samples, &seed)?;
        log::info!("analyzed scm_{k}");
        Ok::<_, Error>((*k, analysis::flatten(&report)))
    })?
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let csv = dataset::metrics_csv(&rows);
    match &g.out {
        Some(path) => dataset::write_atomic(path, csv.as_bytes())?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn run_verify(
    g: &Global,
    level: Level,
    scms: u64,
    input: Option<&Path>,
    cfg: &VerifyConfig,
) -> Outcome<()> {
    let (models, master): (Vec<(u64, Scm)>, u64) = match input {
        Some(dir) => {
            let master = read_manifest(dir).map_or(g.seed, |m| m.master_seed);
            let models = dataset::list_scm_dirs(dir)?
                .into_iter()
                .map(|(k, d)| dataset::read_scm(&d).map(|s| (k, s)))
                .collect::<Result<_, _>>()?;
            (models, master)
        }
        None => {
            let soi = single_soi(g)?;
            let models = (0..scms)
                .map(|k| {
                    sample_scm(
                        &soi,
                        &mut dataset::scm_seed(g.seed, k).stream("structure", 0),
                    )
                    .map(|s| (k, s))
                })
                .collect::<Result<_, _>>()?;
            (models, g.seed)
        }
    };
    let results = dataset::parallel_map(models.len() as u64, jobs(g), |i| {
        let (k, scm) = &models[i as usize];
        let seed = dataset::scm_seed(master, *k).child("verify", 0);
        let r = verify::verify_scm(level, scm, cfg, &seed, *k as usize);
        log::info!("verified scm_{k}");
        r
    })?;
    let samples = match level {
        Level::L3 => cfg.noise_draws,
        _ => cfg.samples,
    };
    let mut total = VerificationResult::new(level, cfg.alpha, samples);
    for r in results {
        total.merge(r?);
    }
    let mut summary = serde_json::to_string_pretty(&total.summary_json()).map_err(Error::from)?;
    summary.push('\n');
    if let Some(out) = &g.out {
        fs::create_dir_all(out).map_err(|e| usage(format!("{}: {e}", out.display())))?;
        dataset::write_atomic(&out.join("verify.json"), summary.as_bytes())?;
        dataset::write_atomic(&out.join("records.csv"), total.records_csv().as_bytes())?;
    }
    print!("{summary}");
    let t = total.composite_total();
    log::info!(
        "{} composite tests: {} pass, {} fail, {} skip",
        t.total,
        t.pass,
        t.fail,
        t.skip
    );
    Ok(())
}

fn evaluate(g: &Global, cmd: &EstimatorCommand, seeds: &[u64], scms: u64) -> Outcome<()> {
    let out = out_dir(g)?;
    let sois = if g.soi.is_empty() {
        vec![("default".to_string(), load_soi(None, g)?)]
    } else {
        g.soi
            .iter()
            .map(|p| {
                let name = p
                    .file_stem()
                    .map_or("soi".into(), |s| s.to_string_lossy().into_owned());
                load_soi(Some(p), g).map(|s| (name, s))
            })
            .collect::<Outcome<_>>()?
    };
    let mut names: Vec<&String> = sois.iter().map(|(n, _)| n).collect();
    names.sort();
    names.dedup();
    if names.len() != sois.len() {
        return Err(usage("space-of-interest files must have distinct names"));
    }
    log::info!(
        "evaluating {} on {} space(s) of interest",
        cmd.name,
        sois.len()
    );
    let (run, records) = eval::run_evaluation(&sois, seeds, scms, cmd, &out.join("work"), jobs(g))?;
    eval::write_results(out, &run, &records)?;
    let o = &run.overall;
    log::info!(
        "{} queries, mean error {}, failure rate {}",
        o.queries,
        o.mean_error,
        o.failure_rate
    );
    Ok(())
}
