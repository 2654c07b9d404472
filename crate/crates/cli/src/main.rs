use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use log::info;

use swarmsim::model::{validate_scenario, Scenario};
use swarmsim::{output, scenario_file, selfcheck, sim};

mod report;

use report::RunReport;

const EXIT_OK: u8 = 0;
const EXIT_INVALID: u8 = 1;
const EXIT_PARSE: u8 = 2;
const EXIT_SAFETY: u8 = 3;
const EXIT_NOT_CONVERGED: u8 = 4;

/// Formation control simulator for rigid-body agents with potential-field barriers.
///
/// Exit codes: 0 success or converged, 1 invalid scenario or failed check,
/// 2 unreadable input, 3 safety violation, 4 finished without converging.
#[derive(Debug, Parser)]
#[command(name = "swarmsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a scenario file against every admissibility condition.
    Validate { scenario: PathBuf },
    /// Simulate a scenario and write the trajectory, summary and plot data.
    Run {
        scenario: PathBuf,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        kappa: Option<f64>,
        /// Damping gain for every agent.
        #[arg(long)]
        gain: Option<f64>,
        /// rk4 or semi-implicit-euler.
        #[arg(long)]
        integrator: Option<String>,
    },
    /// Run the randomized property suites.
    Selfcheck {
        #[arg(long, default_value_t = selfcheck::DEFAULT_SEED)]
        seed: u64,
    },
    /// Compare analytic potential gradients with central differences.
    CheckGradients {
        #[arg(long, default_value_t = selfcheck::DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = 6)]
        scenarios: usize,
        /// Random states per scenario.
        #[arg(long, default_value_t = 20)]
        states: usize,
    },
}

struct Overrides {
    dt: Option<f64>,
    t_end: Option<f64>,
    kappa: Option<f64>,
    gain: Option<f64>,
    integrator: Option<String>,
}

impl Overrides {
    fn apply(&self, s: &mut Scenario) -> swarmsim::Result<()> {
        if let Some(dt) = self.dt {
            s.numerics.dt = dt;
        }
        if let Some(t) = self.t_end {
            s.numerics.t_end = t;
        }
        if let Some(k) = self.kappa {
            s.numerics.kappa = k;
        }
        if let Some(g) = self.gain {
            for a in &mut s.agents {
                a.gain = g;
            }
        }
        if let Some(name) = &self.integrator {
            s.numerics.integrator = scenario_file::parse_integrator(name)?;
        }
        Ok(())
    }
}

fn load(path: &Path) -> Result<(Scenario, Vec<u8>), u8> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("cannot read {}: {e}", path.display());
            return Err(EXIT_PARSE);
        }
    };
    let text = String::from_utf8_lossy(&bytes);
    match scenario_file::parse_str(&text) {
        Ok(s) => Ok((s, bytes)),
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            Err(EXIT_PARSE)
        }
    }
}

fn cmd_validate(path: &Path) -> u8 {
    let scenario = match load(path) {
        Ok((s, _)) => s,
        Err(code) => return code,
    };
    let report = validate_scenario(&scenario);
    for w in &report.warnings {
        println!("warning: {w}");
    }
    if report.is_ok() {
        println!("{}: valid", path.display());
        EXIT_OK
    } else {
        for v in &report.violations {
            println!("{v}");
        }
        EXIT_INVALID
    }
}

fn cmd_run(path: &Path, out: &Path, overrides: &Overrides) -> anyhow::Result<u8> {
    let (mut scenario, bytes) = match load(path) {
        Ok(loaded) => loaded,
        Err(code) => return Ok(code),
    };
    if let Err(e) = overrides.apply(&mut scenario) {
        eprintln!("{e}");
        return Ok(EXIT_PARSE);
    }
    if let Err(e) = scenario.numerics.check() {
        eprintln!("invalid numerics: {e}");
        return Ok(EXIT_PARSE);
    }
    let validation = validate_scenario(&scenario);
    for w in &validation.warnings {
        eprintln!("warning: {w}");
    }
    if !validation.is_ok() {
        for v in &validation.violations {
            eprintln!("{v}");
        }
        return Ok(EXIT_INVALID);
    }

    let simulator = sim::Simulator::new(&scenario).context("building the simulator")?;
    let log = simulator.run();
    let files = output::write_all(&log, &scenario.name, out)
        .with_context(|| format!("writing results to {}", out.display()))?;
    let report = RunReport::new(&bytes, &log, files);
    let text = report.to_toml();
    let report_path = out.join(report::REPORT_FILE);
    fs::write(&report_path, &text).with_context(|| format!("writing {}", report_path.display()))?;
    print!("{text}");
    info!("wrote {}", report_path.display());

    Ok(match log.verdict {
        sim::Verdict::Converged => EXIT_OK,
        sim::Verdict::Running => EXIT_NOT_CONVERGED,
        sim::Verdict::SafetyViolation { .. } => EXIT_SAFETY,
    })
}

fn cmd_selfcheck(seed: u64) -> u8 {
    let report = selfcheck::run_all(seed);
    print!("{report}");
    match report.first_failure() {
        None => EXIT_OK,
        Some(f) => {
            eprintln!("failed: {}", f.name);
            EXIT_INVALID
        }
    }
}

fn cmd_check_gradients(seed: u64, scenarios: usize, states: usize) -> u8 {
    let report = selfcheck::check_gradients(seed, scenarios, states);
    println!("{report}");
    if report.passed() {
        EXIT_OK
    } else {
        EXIT_INVALID
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SWARMSIM_LOG_LEVEL", "warn")).init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Validate { scenario } => cmd_validate(&scenario),
        Command::Run {
            scenario,
            out,
            dt,
            t_end,
            kappa,
            gain,
            integrator,
        } => {
            let overrides = Overrides {
                dt,
                t_end,
                kappa,
                gain,
                integrator,
            };
            match cmd_run(&scenario, &out, &overrides) {
                Ok(code) => code,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    EXIT_PARSE
                }
            }
        }
        Command::Selfcheck { seed } => cmd_selfcheck(seed),
        Command::CheckGradients { seed, scenarios, states } => cmd_check_gradients(seed, scenarios, states),
    };
    ExitCode::from(code)
}
