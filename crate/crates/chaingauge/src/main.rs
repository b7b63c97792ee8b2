//! Command-line front end. Exit codes: 0 success, 1 usage or input errors,
//! 2 solver or I/O failures, 3 replay discrepancies. Log verbosity comes
//! from RUST_LOG (default warn).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process;

use clap::{Args, Parser, Subcommand};

use chaingauge::analysis::{evaluate_policy, no_attack_reference};
use chaingauge::error::Error;
use chaingauge::mdp::{build_mdp, MdpInstance};
use chaingauge::policy::{load_policy, save_policy, Policy, PolicyHeader};
use chaingauge::replay::replay_verify;
use chaingauge::report::{write_csv, Method, ReportRow};
use chaingauge::sim::{
    derive_rep_seed, simulate_views, summarize, DelayModel, SimConfig, ViewRecord,
};
use chaingauge::solver::{solve_min_metric, Metric, SolveOptions};
use chaingauge::state::Protocol;

#[derive(Parser)]
#[command(
    name = "chaingauge",
    version,
    about = "Worst-case chain growth and commitment rate of chained BFT protocols"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the worst-case metric at one point and write the optimal policy.
    Solve(SolveArgs),
    /// Tabulate worst-case values over an alpha grid as CSV.
    Sweep(SweepArgs),
    /// Estimate a policy's metrics by replicated simulation, with replay
    /// verification of every run.
    Simulate(SimulateArgs),
    /// Attack strategies against the silent baseline and the no-attack
    /// reference over an alpha grid.
    Compare(CompareArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Protocol: chs, 2chs, fhs, or streamlet.
    #[arg(long)]
    protocol: Protocol,
    /// Adversarial fraction, in [0, 1/3).
    #[arg(long)]
    alpha: f64,
    /// Metric to minimize: growth or rate.
    #[arg(long)]
    metric: Metric,
    /// Delay bound as a multiple of the actual network delay.
    #[arg(long, default_value_t = 5.0)]
    k: f64,
    /// Outer binary-search precision on rho.
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    /// Pending-block cap (Streamlet only; default 4).
    #[arg(long)]
    lh_cap: Option<u8>,
    /// Policy file destination; derived from the flags when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated protocols; all four when omitted.
    #[arg(long, value_delimiter = ',', default_values_t = Protocol::ALL)]
    protocols: Vec<Protocol>,
    /// Grid as start:step:end.
    #[arg(long, default_value = "0:0.03:0.33")]
    alpha_grid: String,
    /// growth, rate, or both.
    #[arg(long, default_value = "both")]
    metric: String,
    #[arg(long, default_value_t = 5.0)]
    k: f64,
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    #[arg(long)]
    lh_cap: Option<u8>,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    protocol: Protocol,
    #[arg(long)]
    alpha: f64,
    /// Policy source: a policy file path, optimal:growth, optimal:rate,
    /// or silent.
    #[arg(long)]
    policy: String,
    /// Views per replication (including the warmup).
    #[arg(long, default_value_t = 100_000)]
    views: u64,
    /// Delay model: fixed:D or uniform:D:A.
    #[arg(long, default_value = "fixed:1")]
    delay: DelayModel,
    /// Independent replications.
    #[arg(long, default_value_t = 6)]
    reps: u32,
    /// Master seed; per-replication streams are derived from it.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 5.0)]
    k: f64,
    #[arg(long)]
    lh_cap: Option<u8>,
    /// Dump the first replication's full view trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    protocol: Protocol,
    /// Comma-separated: optimal, silent, none.
    #[arg(long, value_delimiter = ',', default_value = "optimal,silent,none")]
    strategies: Vec<String>,
    #[arg(long, default_value = "0:0.03:0.33")]
    alpha_grid: String,
    #[arg(long, default_value = "rate")]
    metric: Metric,
    #[arg(long, default_value_t = 5.0)]
    k: f64,
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    #[arg(long)]
    lh_cap: Option<u8>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            process::exit(code);
        }
    };
    if let Err(err) = run(cli) {
        // A closed pipe downstream (e.g. head) ends the program, not an error.
        if let Error::Io(io_err) = &err {
            if io_err.kind() == std::io::ErrorKind::BrokenPipe {
                process::exit(0);
            }
        }
        eprintln!("error: {err}");
        process::exit(exit_code(&err));
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Replay { .. } => 3,
        Error::Solver(_) | Error::Reducible(_) | Error::Io(_) => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Compare(args) => cmd_compare(args),
    }
}

/// Parses start:step:end into the inclusive grid it spans.
fn parse_alpha_grid(text: &str) -> Result<Vec<f64>, Error> {
    let parts: Vec<&str> = text.split(':').collect();
    let &[start, step, end] = parts.as_slice() else {
        return Err(Error::Parse(format!(
            "alpha grid must be start:step:end, got {text:?}"
        )));
    };
    let number = |t: &str, name: &str| -> Result<f64, Error> {
        t.parse()
            .map_err(|e| Error::Parse(format!("alpha grid {name}: {e}")))
    };
    let start = number(start, "start")?;
    let step = number(step, "step")?;
    let end = number(end, "end")?;
    if !(step > 0.0 && start <= end) {
        return Err(Error::Config(format!(
            "alpha grid needs a positive step and start <= end, got {text:?}"
        )));
    }
    let mut grid = Vec::new();
    let mut i = 0u32;
    loop {
        let alpha = start + f64::from(i) * step;
        if alpha > end + 1e-9 {
            break;
        }
        grid.push(alpha);
        i += 1;
    }
    Ok(grid)
}

fn parse_metric_list(text: &str) -> Result<Vec<Metric>, Error> {
    match text {
        "both" => Ok(vec![Metric::Growth, Metric::Rate]),
        other => Ok(vec![other.parse()?]),
    }
}

fn solve_options(eps: f64) -> SolveOptions {
    SolveOptions {
        eps,
        ..SolveOptions::default()
    }
}

fn emit(rows: &[ReportRow], out: Option<&Path>) -> Result<(), Error> {
    match out {
        Some(path) => {
            let mut file = std::fs::File::create(path)?;
            write_csv(&mut file, rows)
        }
        None => {
            let stdout = std::io::stdout();
            write_csv(&mut stdout.lock(), rows)
        }
    }
}

fn cmd_solve(args: SolveArgs) -> Result<(), Error> {
    let mdp = build_mdp(args.protocol, args.alpha, args.k, args.lh_cap)?;
    let sol = solve_min_metric(&mdp, args.metric, solve_options(args.eps))?;
    let path = args.out.unwrap_or_else(|| {
        PathBuf::from(format!(
            "{}-{}-a{}.policy",
            args.protocol, args.metric, args.alpha
        ))
    });
    let header = PolicyHeader {
        protocol: sol.protocol,
        alpha: sol.alpha,
        k: sol.k,
        lh_cap: sol.lh_cap,
        metric: sol.metric,
        rho_bar: sol.rho_bar,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    save_policy(&path, &header, &sol.policy, &mdp.space)?;
    let mut stdout = std::io::stdout().lock();
    writeln!(
        stdout,
        "{} {} alpha={} k={}: value={:.6} rho_bar={} iterations={}",
        sol.protocol, sol.metric, sol.alpha, sol.k, sol.metric_value, sol.rho_bar,
        sol.outer_iterations
    )?;
    writeln!(stdout, "policy written to {}", path.display())?;
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Error> {
    let grid = parse_alpha_grid(&args.alpha_grid)?;
    let metrics = parse_metric_list(&args.metric)?;
    let mut rows = Vec::new();
    for &protocol in &args.protocols {
        for &alpha in &grid {
            let mdp = build_mdp(protocol, alpha, args.k, args.lh_cap)?;
            for &metric in &metrics {
                let sol = solve_min_metric(&mdp, metric, solve_options(args.eps))?;
                rows.push(ReportRow::exact(
                    protocol,
                    alpha,
                    metric,
                    Method::Theory,
                    sol.metric_value,
                    args.k,
                ));
            }
        }
    }
    emit(&rows, args.out.as_deref())
}

/// Resolves the --policy flag: a named strategy or a policy file path.
fn resolve_policy(source: &str, mdp: &MdpInstance, eps: f64) -> Result<Policy, Error> {
    match source {
        "silent" => Ok(Policy::all_silent(mdp)),
        "optimal:growth" | "optimal:rate" => {
            let metric: Metric = source.split(':').nth(1).unwrap().parse()?;
            Ok(solve_min_metric(mdp, metric, solve_options(eps))?.policy)
        }
        path => Ok(load_policy(Path::new(path), mdp)?.1),
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Error> {
    let mdp = build_mdp(args.protocol, args.alpha, args.k, args.lh_cap)?;
    let policy = resolve_policy(&args.policy, &mdp, 1e-4)?;
    let cfg = SimConfig {
        lh_cap: args.lh_cap,
        ..SimConfig::new(args.protocol, args.alpha, args.k, args.views, args.delay)
    };

    let mut samples = Vec::with_capacity(args.reps as usize);
    for rep in 0..args.reps {
        let mut trace: Vec<ViewRecord> = Vec::with_capacity(args.views as usize);
        let sample = simulate_views(
            &cfg,
            &policy,
            derive_rep_seed(args.seed, rep),
            Some(&mut trace),
        )?;
        replay_verify(args.protocol, args.lh_cap, args.k, args.delay, &trace)?.to_result()?;
        if rep == 0 {
            if let Some(path) = &args.trace {
                let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
                for record in &trace {
                    writeln!(file, "{record}")?;
                }
            }
        }
        samples.push(sample);
    }
    let report = summarize(samples, args.seed)?;

    let row = |metric: Metric| {
        let stats = match metric {
            Metric::Growth => &report.growth,
            Metric::Rate => &report.rate,
        };
        ReportRow {
            protocol: args.protocol,
            alpha: args.alpha,
            metric,
            method: Method::Simulation,
            value: stats.mean,
            ci_low: stats.ci_low,
            ci_high: stats.ci_high,
            seed: Some(args.seed),
            k: args.k,
        }
    };
    emit(&[row(Metric::Growth), row(Metric::Rate)], None)
}

fn cmd_compare(args: CompareArgs) -> Result<(), Error> {
    let grid = parse_alpha_grid(&args.alpha_grid)?;
    for strategy in &args.strategies {
        if !["optimal", "silent", "none"].contains(&strategy.as_str()) {
            return Err(Error::Config(format!(
                "unknown strategy {strategy:?}, expected optimal, silent, or none"
            )));
        }
    }
    let reference = no_attack_reference(args.protocol, args.k, args.lh_cap)?;
    let mut rows = Vec::new();
    for &alpha in &grid {
        let mdp = build_mdp(args.protocol, alpha, args.k, args.lh_cap)?;
        let mut optimal_value = None;
        let mut silent_value = None;
        for strategy in &args.strategies {
            let (method, value) = match strategy.as_str() {
                "optimal" => {
                    let sol = solve_min_metric(&mdp, args.metric, solve_options(args.eps))?;
                    optimal_value = Some(sol.metric_value);
                    (Method::Theory, sol.metric_value)
                }
                "silent" => {
                    let value =
                        evaluate_policy(&mdp, &Policy::all_silent(&mdp))?.metric(args.metric);
                    silent_value = Some(value);
                    (Method::BaselineSilent, value)
                }
                _ => (Method::NoAttack, reference.metric(args.metric)),
            };
            rows.push(ReportRow::exact(
                args.protocol, alpha, args.metric, method, value, args.k,
            ));
        }
        if let (Some(optimal), Some(silent)) = (optimal_value, silent_value) {
            if optimal > silent + 1e-9 {
                log::warn!(
                    "alpha={alpha}: optimal {} exceeds the silent baseline {}",
                    optimal,
                    silent
                );
            }
        }
    }
    emit(&rows, args.out.as_deref())
}
