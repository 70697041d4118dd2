use std::path::PathBuf;
use std::process::ExitCode;

use burstvar::config::{parse_methods, RunConfig};
use burstvar::error::CliError;
use burstvar::run::{run_grid, run_report, run_sweep, write_table};
use burstvar::validate::run_checks;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "burstvar", version, about = "Variance bounds for bursty two-species reaction systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args)]
struct Global {
    /// TOML run configuration; defaults apply when omitted
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Comma-separated subset of bound,series,lna,ssa,cme
    #[arg(long, global = true, value_name = "LIST")]
    methods: Option<String>,
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long = "rel-tol", global = true, value_name = "REAL")]
    rel_tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Moments at a single point, written as report.json
    Report,
    /// Sweep over E[A], written as sweep.csv
    Sweep,
    /// Relative-error grid over (gamma_B, E[A]), written as grid.csv
    Grid,
    /// Run the invariant checks and print PASS/FAIL per check
    Validate,
}

fn load(g: &Global) -> Result<RunConfig, CliError> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(m) = &g.methods {
        cfg.methods = parse_methods(m)?;
    }
    if let Some(o) = &g.out {
        cfg.out = o.clone();
    }
    if let Some(t) = g.rel_tol {
        cfg.rel_tol = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load(&cli.global)?;
    match cli.command {
        Command::Report => {
            let r = run_report(&cfg, Some(&cfg.out))?;
            println!("{}", serde_json::to_string_pretty(&r.moments)?);
        }
        Command::Sweep => {
            let (t, _) = run_sweep(&cfg)?;
            for p in write_table(&cfg, &t, &cfg.out, "sweep")? {
                println!("wrote {}", p.display());
            }
        }
        Command::Grid => {
            let (t, _) = run_grid(&cfg)?;
            for p in write_table(&cfg, &t, &cfg.out, "grid")? {
                println!("wrote {}", p.display());
            }
        }
        Command::Validate => {
            let checks = run_checks(&cfg);
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                let n = failed;
                return Err(CliError::Numerical(format!("{n} check(s) failed")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
