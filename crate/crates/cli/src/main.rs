use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use regularframe::report::{to_json, write_report};
use regularframe::scenario::{FockScenario, Kind, Scenario};
use regularframe::{load_and_run, run_scenario, run_suite, suite_exit_code, CliError, Report};

#[derive(Parser)]
#[command(
    name = "regularframe",
    version,
    about = "Verification pipelines for fields on curved backgrounds: charts, \
             metric interpolation, Klein-Gordon transport, mass-shell maps, \
             and truncated Fock checks"
)]
struct Cli {
    /// Write the JSON report here (tables also land next to it as CSV).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for suites; REGULARFRAME_THREADS is the fallback.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct ScenarioArg {
    /// Scenario JSON file; its `kind` must match the subcommand.
    scenario: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a regular chart and audit the pulled-back metric.
    Chart(ScenarioArg),
    /// Check the flat-to-curved metric interpolation on a time line.
    Interpolate(ScenarioArg),
    /// Evolve a packet and audit norm conservation and convergence.
    Evolve(ScenarioArg),
    /// Transport a packet family across the interpolation window.
    Transport(ScenarioArg),
    /// Mass-shell measures and the lattice-to-field isometry chain.
    Shell(ScenarioArg),
    /// Truncated Fock algebra checks.
    Fock(FockArgs),
    /// Run every scenario in a directory and aggregate.
    Suite { dir: PathBuf },
}

#[derive(Args)]
struct FockArgs {
    /// Scenario JSON file (exclusive with --system).
    scenario: Option<PathBuf>,
    /// Particle table JSON; builds an ad-hoc scenario with --modes/--cutoff.
    #[arg(long)]
    system: Option<PathBuf>,
    #[arg(long)]
    modes: Option<usize>,
    #[arg(long)]
    cutoff: Option<usize>,
    /// Checks to run (repeatable): ccr | gamma | spectrum | registry.
    #[arg(long = "check")]
    checks: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn thread_count(flag: Option<usize>) -> usize {
    flag.or_else(|| {
        std::env::var("REGULARFRAME_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
    .unwrap_or(1)
    .max(1)
}

fn expect_kind(report: &Report, want: &str) -> Result<(), CliError> {
    if report.kind == want {
        Ok(())
    } else {
        Err(CliError::Schema(format!(
            "scenario kind `{}` does not match the `{want}` subcommand",
            report.kind
        )))
    }
}

fn emit(report: &Report, out: &Option<PathBuf>) -> Result<u8, CliError> {
    for check in &report.checks {
        eprintln!(
            "{} {}: measured {:e} vs {} {:e}",
            if check.pass { "pass" } else { "FAIL" },
            check.name,
            check.measured,
            check.sense,
            check.tolerance
        );
    }
    match out {
        Some(path) => write_report(report, path)?,
        None => print!("{}", to_json(report)),
    }
    Ok(if report.pass { 0 } else { 1 })
}

fn dispatch(cli: Cli) -> Result<u8, CliError> {
    match &cli.cmd {
        Cmd::Chart(a) => run_file(&a.scenario, "chart", &cli),
        Cmd::Interpolate(a) => run_file(&a.scenario, "interpolate", &cli),
        Cmd::Evolve(a) => run_file(&a.scenario, "evolve", &cli),
        Cmd::Transport(a) => run_file(&a.scenario, "transport", &cli),
        Cmd::Shell(a) => run_file(&a.scenario, "shell", &cli),
        Cmd::Fock(args) => {
            let report = match (&args.scenario, &args.system) {
                (Some(path), None) => {
                    let r = load_and_run(path, cli.seed)?;
                    expect_kind(&r, "fock")?;
                    r
                }
                (None, Some(system_path)) => {
                    let text = std::fs::read_to_string(system_path)
                        .map_err(|e| CliError::Io(format!("{}: {e}", system_path.display())))?;
                    let system = serde_json::from_str(&text)
                        .map_err(|e| CliError::Schema(format!("system: {e}")))?;
                    let sc = Scenario::Fock(FockScenario {
                        kind: Kind::Fock,
                        system,
                        modes: args.modes.ok_or_else(|| {
                            CliError::Schema("--modes is required with --system".into())
                        })?,
                        cutoff: args.cutoff.ok_or_else(|| {
                            CliError::Schema("--cutoff is required with --system".into())
                        })?,
                        dp: 1.0,
                        checks: if args.checks.is_empty() {
                            vec!["ccr".into(), "gamma".into(), "spectrum".into(), "registry".into()]
                        } else {
                            args.checks.clone()
                        },
                        exact_tol: 1e-15,
                        product_tol: 1e-12,
                        gamma_tol: 1e-10,
                        spectrum_tol: 1e-9,
                        registry_tol: 1e-10,
                        seed: cli.seed.unwrap_or(0),
                    });
                    run_scenario(&sc, cli.seed)?
                }
                _ => {
                    return Err(CliError::Schema(
                        "fock needs a scenario file or --system with --modes/--cutoff".into(),
                    ))
                }
            };
            emit(&report, &cli.out)
        }
        Cmd::Suite { dir } => {
            let report = run_suite(dir, cli.seed, thread_count(cli.threads))?;
            for entry in &report.entries {
                match (&entry.report, &entry.error) {
                    (Some(r), _) => eprintln!(
                        "{} {} ({} checks)",
                        if r.pass { "pass" } else { "FAIL" },
                        entry.file,
                        r.checks.len()
                    ),
                    (_, Some(e)) => eprintln!("ERROR {}: {e}", entry.file),
                    _ => {}
                }
            }
            match &cli.out {
                Some(path) => std::fs::write(path, to_json(&report))
                    .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?,
                None => print!("{}", to_json(&report)),
            }
            Ok(suite_exit_code(&report))
        }
    }
}

fn run_file(path: &PathBuf, want: &str, cli: &Cli) -> Result<u8, CliError> {
    let report = load_and_run(path, cli.seed)?;
    expect_kind(&report, want)?;
    emit(&report, &cli.out)
}
