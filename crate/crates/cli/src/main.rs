mod args;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use log::info;
use serde::Serialize;
use thiserror::Error;

use immunorec::affinity::{affinity, kendalls_tau, AffinityMeasure, MeasureKind};
use immunorec::datastore::{generate_synthetic, load_ratings, partition, save_ratings, DataError};
use immunorec::domain::{common_movies, Dataset};
use immunorec::evaluation::{
    accuracy_experiment, paired_comparison, sample_users, ties_experiment, AccuracySettings,
    ComparisonSummary, EvalError, ExperimentReport, Predictor,
};
use immunorec::recommender::{recommend_top_n, RecommendError};
use immunorec::{run_to_convergence, Execution};

use args::{
    AccuracyArgs, AffinityArgs, Cli, Command, CompareArgs, DataArgs, EvalCommand, GenArgs,
    IngestCheckArgs, RecommendArgs, ReportFormat, SplitArgs, TiesArgs,
};

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::InsufficientRatings { .. }
            | EvalError::InsufficientAntigens { .. }
            | EvalError::InsufficientOverlapEverywhere => CliError::Data(e.to_string()),
            EvalError::Ais(immunorec::immune_network::AisError::InvalidParams(_)) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("IMMUNOREC_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(command: &Command) -> Result<()> {
    match command {
        Command::Gen(a) => gen(a, command),
        Command::IngestCheck(a) => ingest_check(a, command),
        Command::Affinity(a) => affinity_cmd(a),
        Command::Recommend(a) => recommend(a, command),
        Command::Eval(EvalCommand::Accuracy(a)) => eval_accuracy(a, command),
        Command::Eval(EvalCommand::Ties(a)) => eval_ties(a, command),
        Command::Eval(EvalCommand::Compare(a)) => eval_compare(a, command),
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn sidecar_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".config.json");
    PathBuf::from(name)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::Runtime(e.to_string()))?;
    out.write_all(b"\n")
        .and_then(|_| out.flush())
        .map_err(|e| io_err(path, e))
}

fn write_csv(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    f(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| io_err(path, e))
}

/// Record the effective invocation next to an output file.
fn write_sidecar<T: Serialize>(output: &Path, config: &T) -> Result<()> {
    #[derive(Serialize)]
    struct Sidecar<'a, T> {
        tool: &'static str,
        version: &'static str,
        #[serde(flatten)]
        config: &'a T,
    }
    write_json(
        &sidecar_path(output),
        &Sidecar {
            tool: "immunorec",
            version: env!("CARGO_PKG_VERSION"),
            config,
        },
    )
}

fn load(data: &DataArgs) -> Result<Dataset> {
    let (dataset, report) = load_ratings(&data.data, &data.ingest())?;
    info!(
        "loaded {} users ({} dropped) and {} movies from {}",
        report.users_kept,
        report.users_dropped,
        report.movies,
        data.data.display()
    );
    if dataset.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no user has at least {} ratings",
            data.data.display(),
            data.min_ratings
        )));
    }
    Ok(dataset)
}

fn split(
    dataset: &Dataset,
    data: &DataArgs,
    split: &SplitArgs,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let mut cfg = data.ingest();
    cfg.pool_id_threshold = split.pool_threshold;
    cfg.pool_fraction = split.pool_fraction;
    cfg.validate()?;
    let parts = partition(dataset, &cfg, seed)?;
    if parts.pool.is_empty() || parts.antigens.is_empty() {
        return Err(CliError::Data(format!(
            "split left {} pool users and {} test users",
            parts.pool.len(),
            parts.antigens.len()
        )));
    }
    Ok((parts.pool, parts.antigens))
}

fn gen(a: &GenArgs, command: &Command) -> Result<()> {
    let cfg = a.config();
    let dataset = generate_synthetic(&cfg)?;
    save_ratings(&dataset, &a.output)?;
    write_sidecar(&a.output, command)?;
    println!(
        "wrote {} users, {} movies, {} ratings to {}",
        dataset.len(),
        dataset.movie_ids().len(),
        dataset.num_ratings(),
        a.output.display()
    );
    Ok(())
}

fn ingest_check(a: &IngestCheckArgs, command: &Command) -> Result<()> {
    let mut cfg = a.data.ingest();
    cfg.strict = false;
    let (dataset, report) = load_ratings(&a.data.data, &cfg)?;
    println!("users kept     {}", report.users_kept);
    println!("users dropped  {}", report.users_dropped);
    println!("rows rejected  {}", report.rows_rejected);
    println!("movies         {}", report.movies);
    println!("ratings        {}", dataset.num_ratings());
    for d in &report.diagnostics {
        println!("  {d}");
    }
    if let Some(path) = &a.output {
        write_json(path, &report)?;
        write_sidecar(path, command)?;
    }
    if report.rows_rejected > 0 {
        return Err(CliError::Data(format!(
            "{} malformed rows",
            report.rows_rejected
        )));
    }
    Ok(())
}

fn affinity_cmd(a: &AffinityArgs) -> Result<()> {
    let dataset = load(&a.data)?;
    let get = |id| {
        dataset
            .get(id)
            .ok_or_else(|| CliError::Data(format!("unknown user {id}")))
    };
    let (ua, ub) = (get(a.user_a)?, get(a.user_b)?);
    let min = a.min_overlap as usize;
    println!("users          {} {}", a.user_a, a.user_b);
    println!("common movies  {}", common_movies(ua, ub).len());
    for kind in [
        MeasureKind::WeightedKappa,
        MeasureKind::KendallsTau,
        MeasureKind::PearsonBaseline,
    ] {
        let v = affinity(&AffinityMeasure::with_min_overlap(kind, min), ua, ub);
        let mut line = format!("{:<14} {:.6}", kind.short_name(), v.value);
        if v.insufficient_overlap {
            line.push_str(" (too few common movies)");
        } else if v.degenerate {
            line.push_str(" (zero variance)");
        } else if kind == MeasureKind::KendallsTau {
            if let Ok(kt) = kendalls_tau(ua, ub) {
                line.push_str(&format!(
                    " (concordant {}, discordant {}, ignored {}, pairs {})",
                    kt.concordant, kt.discordant, kt.ignored, kt.total_pairs
                ));
            }
        }
        println!("{line}");
    }
    Ok(())
}

#[derive(Serialize)]
struct RecommendOutput {
    user_id: u32,
    measure: AffinityMeasure,
    seed: u64,
    converged: bool,
    iterations: usize,
    population: Vec<(u32, f64)>,
    recommendations: Vec<immunorec::recommender::RecommendationEntry>,
}

fn recommend(a: &RecommendArgs, command: &Command) -> Result<()> {
    let dataset = load(&a.data)?;
    let params = a.network.params();
    params
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let antigen = dataset
        .get(a.user)
        .ok_or_else(|| CliError::Data(format!("unknown user {}", a.user)))?;
    let measure = a.network.measure(a.measure);
    let population = run_to_convergence(antigen, &dataset, &measure, &params, a.seed)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let list = match recommend_top_n(&population, antigen, a.count as usize) {
        Ok(list) => list,
        Err(RecommendError::EmptyPopulation) => {
            return Err(CliError::Runtime(
                "no antibody survived; nothing to recommend".into(),
            ))
        }
        Err(e) => return Err(CliError::Runtime(e.to_string())),
    };
    let entries: Vec<_> = list
        .entries
        .iter()
        .take(a.count as usize)
        .copied()
        .collect();

    println!(
        "user {}  measure {}  population {}  iterations {}  converged {}",
        a.user,
        measure.kind.short_name(),
        population.len(),
        population.iterations_used,
        population.converged
    );
    if entries.is_empty() {
        println!("no unrated movie has a prediction");
    } else {
        println!(
            "{:>4}  {:>8}  {:>9}  {:>7}",
            "rank", "movie", "predicted", "support"
        );
        for (i, e) in entries.iter().enumerate() {
            println!(
                "{:>4}  {:>8}  {:>9.4}  {:>7}",
                i + 1,
                e.movie_id,
                e.predicted,
                e.support
            );
        }
    }

    if let Some(path) = &a.out.output {
        match a.out.format() {
            ReportFormat::Json => write_json(
                path,
                &RecommendOutput {
                    user_id: a.user,
                    measure,
                    seed: a.seed,
                    converged: population.converged,
                    iterations: population.iterations_used,
                    population: population.summary(),
                    recommendations: entries,
                },
            )?,
            ReportFormat::Csv => write_csv(path, |w| {
                writeln!(w, "rank,movie_id,predicted,support")?;
                for (i, e) in entries.iter().enumerate() {
                    writeln!(w, "{},{},{},{}", i + 1, e.movie_id, e.predicted, e.support)?;
                }
                Ok(())
            })?,
        }
        write_sidecar(path, command)?;
    }
    Ok(())
}

fn print_summary(label: &str, report: &ExperimentReport) {
    println!(
        "{label:<10} users {:>4}  median {:.4}  mean {:.4}",
        report.rows.len(),
        report.median,
        report.mean
    );
}

fn write_report(
    report: &ExperimentReport,
    out: &args::OutputArgs,
    command: &Command,
) -> Result<()> {
    if let Some(path) = &out.output {
        match out.format() {
            ReportFormat::Json => write_json(path, report)?,
            ReportFormat::Csv => write_csv(path, |w| report.write_csv(w))?,
        }
        write_sidecar(path, command)?;
    }
    Ok(())
}

fn eval_accuracy(a: &AccuracyArgs, command: &Command) -> Result<()> {
    let dataset = load(&a.data)?;
    let (pool, antigens) = split(&dataset, &a.data, &a.split, a.run.seed)?;
    let settings = AccuracySettings {
        params: a.network.params(),
        trials: a.trials as usize,
        mode: a.mode.into(),
    };
    let predictor = if a.baseline {
        Predictor::GlobalMean
    } else {
        Predictor::Network {
            measure: a.network.measure(a.measure),
        }
    };
    let report = accuracy_experiment(
        &antigens,
        &pool,
        &predictor,
        &settings,
        a.run.users as usize,
        a.run.seed,
        Execution::with_jobs(a.run.jobs),
    )?;
    let label = match predictor {
        Predictor::GlobalMean => "baseline".to_string(),
        Predictor::Network { measure } => measure.kind.short_name().to_string(),
    };
    print_summary(&label, &report);
    let fallbacks: usize = report
        .accuracy_rows()
        .unwrap_or_default()
        .iter()
        .map(|r| r.fallback_trials)
        .sum();
    if fallbacks > 0 {
        println!("fallback predictions: {fallbacks}");
    }
    write_report(&report, &a.out, command)
}

fn eval_ties(a: &TiesArgs, command: &Command) -> Result<()> {
    let dataset = load(&a.data)?;
    let picked = sample_users(&dataset, a.run.users as usize, a.run.seed, |_| true)?;
    let sample = Dataset::from_profiles(picked.into_iter().cloned())
        .map_err(|e| CliError::Data(e.to_string()))?;
    let report = ties_experiment(
        &sample,
        &dataset,
        a.peers as usize,
        a.run.seed,
        Execution::with_jobs(a.run.jobs),
    )?;
    print_summary("ties", &report);
    if !report.skipped_users.is_empty() {
        println!("skipped users: {}", report.skipped_users.len());
    }
    write_report(&report, &a.out, command)
}

#[derive(Serialize)]
struct CompareOutput<'a> {
    a: &'a ExperimentReport,
    b: &'a ExperimentReport,
    summary: &'a ComparisonSummary,
}

fn eval_compare(a: &CompareArgs, command: &Command) -> Result<()> {
    if a.measures.len() != 2 {
        return Err(CliError::Usage(format!(
            "--measures takes exactly two measures, got {}",
            a.measures.len()
        )));
    }
    let dataset = load(&a.data)?;
    let (pool, antigens) = split(&dataset, &a.data, &a.split, a.run.seed)?;
    let settings = AccuracySettings {
        params: a.network.params(),
        trials: a.trials as usize,
        mode: a.mode.into(),
    };
    let exec = Execution::with_jobs(a.run.jobs);
    let run = |m| {
        let predictor = Predictor::Network {
            measure: a.network.measure(m),
        };
        accuracy_experiment(
            &antigens,
            &pool,
            &predictor,
            &settings,
            a.run.users as usize,
            a.run.seed,
            exec,
        )
    };
    let (ra, rb) = (run(a.measures[0])?, run(a.measures[1])?);
    let summary = paired_comparison(&ra, &rb)?;
    let name = |r: &ExperimentReport| r.measure().map(|m| m.short_name()).unwrap_or("?");
    print_summary(name(&ra), &ra);
    print_summary(name(&rb), &rb);
    println!(
        "difference mean {:.4}  sd {:.4}  t {}  df {}",
        summary.mean_difference,
        summary.sd_difference,
        summary
            .t_statistic
            .map_or("n/a".to_string(), |t| format!("{t:.4}")),
        summary.degrees_of_freedom
    );

    if let Some(path) = &a.out.output {
        match a.out.format() {
            ReportFormat::Json => write_json(
                path,
                &CompareOutput {
                    a: &ra,
                    b: &rb,
                    summary: &summary,
                },
            )?,
            ReportFormat::Csv => {
                let (rows_a, rows_b) = (
                    ra.accuracy_rows().unwrap_or_default(),
                    rb.accuracy_rows().unwrap_or_default(),
                );
                write_csv(path, |w| {
                    writeln!(
                        w,
                        "user_id,accuracy_{},accuracy_{},difference",
                        name(&ra),
                        name(&rb)
                    )?;
                    for ((x, y), (_, d)) in rows_a.iter().zip(rows_b).zip(&summary.differences) {
                        writeln!(w, "{},{},{},{}", x.user_id, x.accuracy, y.accuracy, d)?;
                    }
                    Ok(())
                })?
            }
        }
        write_sidecar(path, command)?;
    }
    Ok(())
}
