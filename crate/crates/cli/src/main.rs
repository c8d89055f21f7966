//! Command-line front end: run one experiment, tune a stepsize-multiplier
//! grid, inspect a LibSVM dataset, or execute the built-in verification
//! suites.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or configuration
//! error, 3 divergence.

use clap::{Args, Parser, Subcommand};
use efsim::harness::{
    self, RunConfig, RunRecord, TerminalStatus, DEFAULT_MULTIPLIERS,
};
use efsim::{data, verify, Error};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "efsim", version, about = "error-feedback distributed optimization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one run described by a config file and write its emissions.
    Run(RunArgs),
    /// Run a stepsize-multiplier grid and report the best multiplier.
    Tune(TuneArgs),
    /// Parse a LibSVM file and print its shape and per-client row counts.
    InspectData(InspectArgs),
    /// Execute the built-in invariant suites.
    Verify,
}

#[derive(Args)]
struct ConfigArgs {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Dotted-path overrides, e.g. --set method.compressor.k=4
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (overrides the config's `output`).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Root seed override.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Comma-separated multiplier grid; defaults to the powers-of-two grid
    /// 0.25..2048.
    #[arg(long)]
    multipliers: Option<String>,
}

#[derive(Args)]
struct InspectArgs {
    /// LibSVM file to inspect.
    path: PathBuf,
    /// Print per-client row counts for this many clients.
    #[arg(long, default_value_t = 1)]
    clients: usize,
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig, Error> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut value: serde_json::Value = serde_json::from_str(&text)?;
    let mut overrides = args.overrides.clone();
    if let Some(seed) = args.seed {
        overrides.push(format!("seed={seed}"));
    }
    harness::apply_overrides(&mut value, &overrides)?;
    let cfg: RunConfig = serde_json::from_value(value)?;
    Ok(cfg)
}

fn output_dir(args: &ConfigArgs, cfg: &RunConfig) -> Option<PathBuf> {
    args.output
        .clone()
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
}

fn summarize(record: &RunRecord) -> String {
    let last = record.final_row();
    format!(
        "status={:?} rounds={} grad_norm_sq={:.3e} bits_up/n={:.3e} epochs={:.2}",
        record.status,
        last.t,
        last.grad_norm_sq,
        last.bits_up_cum as f64 / record.header.n as f64,
        last.epochs_cum,
    )
}

fn cmd_run(args: &RunArgs) -> Result<ExitCode, Error> {
    let cfg = load_config(&args.config)?;
    let record = harness::run(&cfg)?;
    println!(
        "run: method={} compressor={} gamma={:.6e}",
        record.header.method, record.header.compressor, record.header.gamma
    );
    println!("run: {}", summarize(&record));
    if let Some(dir) = output_dir(&args.config, &cfg) {
        let sub = harness::write_outputs(&record, &dir)?;
        println!("run: wrote {}", sub.display());
    }
    Ok(if record.status == TerminalStatus::Diverged {
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    })
}

fn parse_multipliers(text: &str) -> Result<Vec<f64>, Error> {
    text.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::config(format!("bad multiplier '{tok}'")))
        })
        .collect()
}

fn cmd_tune(args: &TuneArgs) -> Result<ExitCode, Error> {
    let cfg = load_config(&args.config)?;
    let grid = match &args.multipliers {
        Some(text) => parse_multipliers(text)?,
        None => DEFAULT_MULTIPLIERS.to_vec(),
    };
    let outcome = harness::tune(&cfg, &grid)?;
    println!("tune: multiplier status rounds grad_norm_sq bits_up/n");
    for (m, rec) in &outcome.runs {
        let last = rec.final_row();
        println!(
            "tune: {m} {:?} {} {:.3e} {:.3e}",
            rec.status,
            last.t,
            last.grad_norm_sq,
            last.bits_up_cum as f64 / rec.header.n as f64
        );
    }
    println!("tune: best_multiplier={}", outcome.best_multiplier);
    if let Some(dir) = output_dir(&args.config, &cfg) {
        for (_, rec) in &outcome.runs {
            let sub = harness::write_outputs(rec, &dir)?;
            println!("tune: wrote {}", sub.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_inspect(args: &InspectArgs) -> Result<ExitCode, Error> {
    let text = std::fs::read_to_string(&args.path)?;
    let raw = data::parse_libsvm(&text)?;
    let n_rows = raw.rows.len();
    println!("rows: {n_rows}");
    println!("dim: {}", raw.inferred_dim);
    let mut histogram: Vec<(f64, usize)> = Vec::new();
    for row in &raw.rows {
        match histogram.iter_mut().find(|(l, _)| *l == row.label) {
            Some((_, c)) => *c += 1,
            None => histogram.push((row.label, 1)),
        }
    }
    histogram.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    for (label, count) in &histogram {
        println!("label {label}: {count}");
    }
    if args.clients > n_rows {
        return Err(Error::config(format!(
            "clients {} exceeds the {n_rows} rows available",
            args.clients
        )));
    }
    let sizes = data::shard_sizes(n_rows, args.clients);
    println!(
        "clients {}: sizes [{}]",
        args.clients,
        sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", ")
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify() -> ExitCode {
    let checks = verify::run_all();
    let mut all_ok = true;
    for check in &checks {
        let status = if check.passed { "PASS" } else { "FAIL" };
        println!("verify: {status} {} - {}", check.name, check.detail);
        all_ok &= check.passed;
    }
    if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Tune(args) => cmd_tune(args),
        Command::InspectData(args) => cmd_inspect(args),
        Command::Verify => return cmd_verify(),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
