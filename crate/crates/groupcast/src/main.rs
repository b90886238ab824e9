//! Command-line front end: single runs, sweeps, trace replay, and config
//! validation.

use clap::{Args, Parser, Subcommand};
use groupcast::error::{Error, Result};
use groupcast::sim::config::SimConfig;
use groupcast::sim::engine::run;
use groupcast::sim::metrics::{
    compute_metrics, delivery_rows, delivery_to_csv_string, report_to_csv_string,
};
use groupcast::sim::sweep::{run_sweep, sweep_to_csv_string};
use groupcast::sim::trace::{read_trace_csv, trace_to_csv_string};
use std::path::{Path, PathBuf};

/// Group-communication radio access simulator.
#[derive(Parser)]
#[command(name = "groupcast", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Configuration layering shared by the subcommands; precedence is
/// defaults, then `--config` file, then `--set` pairs, then the dedicated
/// flags.
#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one config key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Master RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Dissemination method: unicast-pdsch | pmch | sc-ptm | sc-ptm-ic.
    #[arg(long)]
    strategy: Option<String>,
    /// Members per group.
    #[arg(long)]
    group_size: Option<u32>,
    /// Concurrent groups in the cell.
    #[arg(long)]
    groups: Option<u32>,
    /// Print the effective configuration and exit without running.
    #[arg(long)]
    print_config: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one run and write config.txt, trace.csv, report.csv and
    /// delivery.csv.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the configured strategy × group-size × seed sweep and write
    /// config.txt and sweep.csv.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Recompute reports from a previously written run directory and
    /// verify them byte-for-byte (writing any that are missing).
    Replay {
        /// Run directory holding config.txt and trace.csv.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check a layered configuration and print `ok`.
    Validate {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn effective_config(args: &ConfigArgs) -> Result<SimConfig> {
    let mut cfg = match &args.config {
        Some(path) => SimConfig::load(path)?,
        None => SimConfig::default(),
    };
    for pair in &args.set {
        let (key, value) = pair.split_once('=').ok_or_else(|| {
            Error::invalid(format!("--set expects KEY=VALUE, got `{pair}`"))
        })?;
        cfg.apply(key.trim(), value.trim())?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(strategy) = &args.strategy {
        cfg.strategy = strategy.parse()?;
    }
    if let Some(group_size) = args.group_size {
        cfg.group_size = group_size;
    }
    if let Some(groups) = args.groups {
        cfg.groups = groups;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn make_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn cmd_run(args: &ConfigArgs, out: &Path) -> Result<()> {
    let cfg = effective_config(args)?;
    if args.print_config {
        print!("{}", cfg.dump());
        return Ok(());
    }
    let result = run(&cfg)?;
    let report = compute_metrics(&cfg, &result.events)?;
    let delivery = delivery_rows(&cfg, &result.events)?;
    make_dir(out)?;
    write(&out.join("config.txt"), &cfg.dump())?;
    write(&out.join("trace.csv"), &trace_to_csv_string(&result.events))?;
    write(&out.join("report.csv"), &report_to_csv_string(&report))?;
    write(&out.join("delivery.csv"), &delivery_to_csv_string(&delivery))?;
    println!(
        "run: wrote config.txt, trace.csv, report.csv, delivery.csv to {}",
        out.display()
    );
    Ok(())
}

fn cmd_sweep(args: &ConfigArgs, out: &Path) -> Result<()> {
    let cfg = effective_config(args)?;
    if args.print_config {
        print!("{}", cfg.dump());
        return Ok(());
    }
    let result = run_sweep(&cfg)?;
    make_dir(out)?;
    write(&out.join("config.txt"), &cfg.dump())?;
    write(&out.join("sweep.csv"), &sweep_to_csv_string(&result))?;
    println!(
        "sweep: {} runs, wrote config.txt, sweep.csv to {}",
        result.rows.len(),
        out.display()
    );
    Ok(())
}

fn cmd_replay(out: &Path) -> Result<()> {
    let cfg = SimConfig::load(&out.join("config.txt"))?;
    cfg.validate()?;
    let events = read_trace_csv(&out.join("trace.csv"))?;
    let report = report_to_csv_string(&compute_metrics(&cfg, &events)?);
    let delivery = delivery_to_csv_string(&delivery_rows(&cfg, &events)?);
    let mut verified = Vec::new();
    let mut written = Vec::new();
    for (name, fresh) in [("report.csv", report), ("delivery.csv", delivery)] {
        let path = out.join(name);
        if path.exists() {
            if read(&path)? != fresh {
                return Err(Error::invalid(format!(
                    "replay mismatch: {} does not match the trace",
                    path.display()
                )));
            }
            verified.push(name);
        } else {
            write(&path, &fresh)?;
            written.push(name);
        }
    }
    let mut parts = Vec::new();
    if !verified.is_empty() {
        parts.push(format!("verified {}", verified.join(", ")));
    }
    if !written.is_empty() {
        parts.push(format!("wrote {}", written.join(", ")));
    }
    println!("replay: {}", parts.join("; "));
    Ok(())
}

fn cmd_validate(args: &ConfigArgs) -> Result<()> {
    let cfg = effective_config(args)?;
    if args.print_config {
        print!("{}", cfg.dump());
        return Ok(());
    }
    println!("ok");
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Run { cfg, out } => cmd_run(cfg, out),
        Cmd::Sweep { cfg, out } => cmd_sweep(cfg, out),
        Cmd::Replay { out } => cmd_replay(out),
        Cmd::Validate { cfg } => cmd_validate(cfg),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(&cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
