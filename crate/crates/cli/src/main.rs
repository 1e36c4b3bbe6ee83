//! Command-line driver: single experiments and the two standard sweeps.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;

use commitsim::experiment::SweepAxis;
use commitsim::metrics::{emit_csv, emit_table, ReportRow};
use commitsim::{failure_trends, mpl_trends, parse_config, run_experiment, sweep_partial, SimConfig};

#[derive(Debug, Parser)]
#[command(name = "commitsim", version, about = "Atomic commit protocol simulator (2PC, Presumed Commit, Short-Commit)")]
struct Args {
    /// 2pc, prc or short
    #[arg(long)]
    protocol: Option<String>,
    #[arg(long)]
    mpl: Option<String>,
    /// Crash probability per involved site per transaction
    #[arg(long = "failure-prob")]
    failure_prob: Option<String>,
    /// Transactions per run
    #[arg(long)]
    txns: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Runs averaged per row (seeds seed, seed+1, ...)
    #[arg(long)]
    trials: Option<String>,
    /// key=value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the CSV report here (`-` for stdout)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run every protocol over the MPL or failure-probability axis
    #[arg(long)]
    sweep: Option<String>,
    /// Any other config key, e.g. `--set arrival_ms=90`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Print the message trace of every atomicity violation found
    #[arg(long)]
    show_violations: bool,
    /// Suppress the table and trend summary
    #[arg(long, short)]
    quiet: bool,
}

fn overrides(args: &Args) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let flags = [
        ("protocol", &args.protocol),
        ("mpl", &args.mpl),
        ("failure_prob", &args.failure_prob),
        ("total_txns", &args.txns),
        ("seed", &args.seed),
        ("trials", &args.trials),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            out.push((key.to_string(), v.clone()));
        }
    }
    for kv in &args.set {
        let Some((k, v)) = kv.split_once('=') else { bail!("--set expects KEY=VALUE, got `{kv}`") };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn load_config(args: &Args) -> Result<SimConfig> {
    let text = match &args.config {
        Some(path) => fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        None => String::new(),
    };
    let cfg = parse_config(&text, &overrides(args)?)?;
    Ok(cfg)
}

fn write_csv(out: &Option<PathBuf>, rows: &[ReportRow]) -> Result<()> {
    let csv = emit_csv(rows);
    match out {
        Some(p) if p.as_os_str() == "-" => print!("{csv}"),
        Some(p) => fs::write(p, csv).with_context(|| format!("writing {}", p.display()))?,
        None => {}
    }
    Ok(())
}

fn run(args: Args) -> Result<()> {
    let cfg = load_config(&args)?;
    let to_stdout = args.out.as_ref().is_some_and(|p| p.as_os_str() == "-");
    let show = !args.quiet && !to_stdout;
    match args.sweep.as_deref() {
        None => {
            let result = run_experiment(&cfg)?;
            let rows = [result.row()];
            if show {
                print!("{}", emit_table(&rows));
            }
            if args.show_violations {
                for (seed, v) in &result.violations {
                    eprintln!(
                        "violation seed={seed} {} committed={:?} aborted={:?} unilateral={:?}",
                        v.txn, v.committed, v.aborted, v.unilateral
                    );
                    for e in &v.trace {
                        eprintln!("  {:>8} {:>4} -> {:<4} {:<15} {}", e.at, e.from, e.to, e.kind, if e.delivered { "" } else { "(lost)" });
                    }
                }
            }
            write_csv(&args.out, &rows)?;
        }
        Some(axis) => {
            let axis: SweepAxis = axis.parse().map_err(anyhow::Error::msg)?;
            let (rows, err) = sweep_partial(&cfg, axis);
            write_csv(&args.out, &rows)?;
            if show {
                print!("{}", emit_table(&rows));
                let checks = match axis {
                    SweepAxis::Mpl => mpl_trends(&rows),
                    SweepAxis::Failure => failure_trends(&rows),
                };
                println!();
                for c in &checks {
                    println!("{}", c.line());
                }
            }
            if let Some(e) = err {
                return Err(anyhow::Error::new(e).context(format!("sweep stopped after {} rows", rows.len())));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
