use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dualmenu_cli::config::parse_alphas;
use dualmenu_cli::{
    run_alpha_sweep, run_conditions, run_oracle_compare, run_synthesize, run_verify, CliError,
    CliResult, RunOptions, ScenarioConfig,
};

/// Optimal insurance menus for dual-utility agents with private types.
#[derive(Debug, Parser)]
#[command(name = "dualmenu", version)]
struct Cli {
    /// Scenario config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Fail with exit status 2 when modelling assumptions do not hold.
    #[arg(long, global = true)]
    strict: bool,
    /// Seed for randomized checks; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Menu file (CSV or JSON) for `verify`.
    #[arg(long, global = true)]
    menu: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute the optimal menu and write menu.csv, menu.json, synthesis.json.
    Synthesize,
    /// Check a stored menu for incentive compatibility and participation.
    Verify {
        /// Also check the structural properties of optimal menus.
        #[arg(long)]
        properties: bool,
    },
    /// Compare synthesis with brute-force enumeration on a small instance.
    OracleCompare,
    /// Report modelling assumptions and sufficient monotonicity conditions.
    Conditions,
    /// Synthesize over a list of welfare weights and write sweep.csv.
    AlphaSweep {
        /// Comma-separated weights; fractions such as 1/3 are accepted.
        #[arg(long)]
        alphas: Option<String>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config: a scenario config is required".into()))?;
    let cfg = ScenarioConfig::load(path)?;
    let opts = RunOptions {
        strict: cli.strict,
        seed: cli.seed,
        out: cli.out.clone(),
    };
    match cli.command {
        Command::Synthesize => {
            let run = run_synthesize(&cfg, &opts)?;
            let a = &run.artifact;
            println!(
                "regime {} welfare {:.10} aggregate_v {:.10} ic_violations {}",
                a.regime, a.welfare, a.aggregate_v, a.ic_violations
            );
            for f in &run.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Verify { properties } => {
            let menu = cli
                .menu
                .as_ref()
                .ok_or_else(|| CliError::Config("--menu: verify needs a menu file".into()))?;
            let (report, path) = run_verify(&cfg, menu, properties, &opts)?;
            println!(
                "ic {} ({} violations) ir {} (p2 {:.10})",
                pass(report.ic_passed),
                report.ic_violations.len(),
                pass(report.ir_status.passed),
                report.ir_status.p2_value
            );
            if let Some(p) = &report.properties {
                for c in &p.checks {
                    println!("{} {}", c.name, pass(c.passed));
                }
            }
            println!("wrote {}", path.display());
            if !report.passed {
                return Err(CliError::ChecksFailed(format!("see {}", path.display())));
            }
        }
        Command::OracleCompare => {
            let (cmp, path) = run_oracle_compare(&cfg, &opts)?;
            let opt = |v: Option<f64>| v.map_or("none".to_string(), |x| format!("{x:.12}"));
            println!(
                "oracle {} synthesized {:.12} gap {} feasible {}/{} in {:.2}s",
                opt(cmp.oracle.max_welfare),
                cmp.synthesized_welfare,
                opt(cmp.gap),
                cmp.oracle.feasible_count,
                cmp.oracle.total,
                cmp.oracle.wall_time_s
            );
            println!("wrote {}", path.display());
        }
        Command::Conditions => {
            let (report, path) = run_conditions(&cfg, &opts)?;
            println!(
                "assumptions {} sufficient conditions {}",
                pass(report.assumptions_pass()),
                pass(report.conditions.sufficient_all_pass)
            );
            println!("wrote {}", path.display());
        }
        Command::AlphaSweep { alphas } => {
            let list = alphas.as_deref().map(parse_alphas).transpose()?;
            let (rows, path) = run_alpha_sweep(&cfg, list.as_deref(), &opts)?;
            for r in &rows {
                println!("alpha {} regime {}", r.alpha, r.regime);
            }
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
