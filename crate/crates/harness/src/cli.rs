//! Command-line interface.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use observerkit_core::verify::{JacobianSource, PdeMode};

use crate::checks::{self, EquivCase, EquivOutcome, PdeCase, PdeOutcome, PeOutcome};
use crate::config::{PlantId, ScenarioConfig};
use crate::export::{export_result, format_sig9};
use crate::{build_scenario, run_scenario, HarnessError};

#[derive(Debug, Parser)]
#[command(
    name = "observerkit",
    version,
    about = "Observer simulation and verification"
)]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one plant with one or more of its observers.
    Simulate {
        /// cuk, acad3 or cascade; defaults to the configured plant.
        #[arg(long)]
        plant: Option<String>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run all six converter observers on one shared trajectory.
    Compare {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Residual of the design equation for the shipped triples.
    PdeCheck {
        /// cuk-kklo, cuk-pebo, cuk-kklpebo, acad3 or all.
        #[arg(long, default_value = "all")]
        case: String,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, value_enum, default_value_t = JacobianArg::Analytic)]
        jacobian: JacobianArg,
        #[arg(long, value_enum, default_value_t = ModeArg::General)]
        mode: ModeArg,
        /// Directory for `pde_check.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Side-by-side run of a converter observer and its I&I instantiation.
    EquivCheck {
        /// kkl-pebo, kklo or all.
        #[arg(long, default_value = "all")]
        case: String,
        #[arg(long, default_value_t = 1e-5)]
        dt: f64,
        #[arg(long, default_value_t = 0.5)]
        horizon: f64,
        /// Directory for `equiv_check.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Windowed excitation of the cascade demo regressor.
    PeCheck {
        /// Scenario file whose `[cascade] start` seeds the trajectory.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 2.0 * std::f64::consts::PI)]
        window: f64,
        #[arg(long, default_value_t = 1e-3)]
        delta: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 20.0)]
        horizon: f64,
        /// Directory for `pe_check.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Flags shared by `simulate` and `compare`; each overrides the config file.
#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub noise: Option<Switch>,
    /// Observer id or `all`.
    #[arg(long)]
    pub observer: Option<String>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum JacobianArg {
    Analytic,
    Fd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    General,
    Block,
    InputAffine,
}

impl From<JacobianArg> for JacobianSource {
    fn from(j: JacobianArg) -> Self {
        match j {
            JacobianArg::Analytic => JacobianSource::Analytic,
            JacobianArg::Fd => JacobianSource::FiniteDifference,
        }
    }
}

impl From<ModeArg> for PdeMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::General => PdeMode::General,
            ModeArg::Block => PdeMode::Block,
            ModeArg::InputAffine => PdeMode::InputAffine,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match execute(cli.command, &mut out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command, writing the summary to `out`. A check that exceeds
/// its tolerance returns exit code 2.
pub fn execute(command: Command, out: &mut dyn Write) -> Result<i32, HarnessError> {
    match command {
        Command::Simulate { plant, run } => {
            let plant = plant.map(|p| p.parse::<PlantId>()).transpose()?;
            let cfg = scenario_config(plant, &run)?;
            run_and_export(&cfg, out)
        }
        Command::Compare { run } => {
            let cfg = scenario_config(Some(PlantId::Cuk), &run)?;
            run_and_export(&cfg, out)
        }
        Command::PdeCheck {
            case,
            samples,
            jacobian,
            mode,
            out: dir,
        } => {
            let cases = if case == "all" {
                PdeCase::ALL.to_vec()
            } else {
                vec![case.parse()?]
            };
            let mut outcomes = Vec::with_capacity(cases.len());
            for c in cases {
                let o = checks::run_pde_case(c, samples, mode.into(), jacobian.into())?;
                print_pde(out, &o)?;
                outcomes.push(o);
            }
            if let Some(dir) = dir {
                write_pde_csv(&dir, &outcomes)?;
            }
            Ok(if outcomes.iter().all(|o| o.passed) {
                0
            } else {
                2
            })
        }
        Command::EquivCheck {
            case,
            dt,
            horizon,
            out: dir,
        } => {
            let cases = if case == "all" {
                EquivCase::ALL.to_vec()
            } else {
                vec![case.parse()?]
            };
            let mut outcomes = Vec::with_capacity(cases.len());
            for c in cases {
                let o = checks::run_equivalence(c, horizon, dt)?;
                print_equiv(out, &o)?;
                outcomes.push(o);
            }
            if let Some(dir) = dir {
                write_equiv_csv(&dir, &outcomes)?;
            }
            Ok(if outcomes.iter().all(|o| o.passed) {
                0
            } else {
                2
            })
        }
        Command::PeCheck {
            config,
            window,
            delta,
            dt,
            horizon,
            out: dir,
        } => {
            let start = match config {
                Some(path) => ScenarioConfig::load(&path)?.cascade.start,
                None => ScenarioConfig::new(PlantId::Cascade).cascade.start,
            };
            let o = checks::run_pe_check(&start, window, delta, horizon, dt)?;
            print_pe(out, &o)?;
            if let Some(dir) = dir {
                write_pe_csv(&dir, &o)?;
            }
            Ok(if o.report.excited { 0 } else { 2 })
        }
    }
}

fn scenario_config(plant: Option<PlantId>, run: &RunArgs) -> Result<ScenarioConfig, HarnessError> {
    let mut cfg = match &run.config {
        Some(path) => {
            let cfg = ScenarioConfig::load(path)?;
            if let Some(p) = plant.filter(|p| *p != cfg.plant) {
                return Err(HarnessError::Validation(format!(
                    "{} configures plant {} but {p} was requested",
                    path.display(),
                    cfg.plant
                )));
            }
            cfg
        }
        None => ScenarioConfig::new(plant.unwrap_or(PlantId::Cuk)),
    };
    if let Some(o) = &run.out {
        cfg.output = Some(o.clone());
    }
    if let Some(s) = run.seed {
        cfg.seed = s;
    }
    if let Some(n) = run.noise {
        cfg.noise.enabled = n == Switch::On;
    }
    if let Some(o) = &run.observer {
        cfg.observers = vec![o.clone()];
    }
    if let Some(dt) = run.dt {
        cfg.dt = Some(dt);
    }
    if let Some(h) = run.horizon {
        cfg.horizon = Some(h);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn io_err(e: std::io::Error) -> HarnessError {
    HarnessError::io(Path::new("<stdout>"), e)
}

fn run_and_export(cfg: &ScenarioConfig, out: &mut dyn Write) -> Result<i32, HarnessError> {
    let scenario = build_scenario(cfg)?;
    let result = run_scenario(&scenario)?;
    let written = export_result(&result, &scenario.diagnostics, &scenario.output)?;
    for m in &result.report.observers {
        for s in &m.states {
            let conv = s
                .convergence_time
                .map_or_else(|| "not converged".into(), format_sig9);
            writeln!(
                out,
                "{:<9} {:<4} rms={:<12} converged={:<14} peak={}",
                m.observer,
                s.label,
                format_sig9(s.steady_rms),
                conv,
                format_sig9(s.peak_error)
            )
            .map_err(io_err)?;
        }
        if let Some(e) = m.final_theta_error {
            writeln!(out, "{:<9} |theta_err|={}", m.observer, format_sig9(e)).map_err(io_err)?;
        }
    }
    for p in &written {
        writeln!(out, "wrote {}", p.display()).map_err(io_err)?;
    }
    match result.failure() {
        Some(e) => Err(e),
        None => Ok(0),
    }
}

fn verdict(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}

fn print_pde(out: &mut dyn Write, o: &PdeOutcome) -> Result<(), HarnessError> {
    let worst: Vec<String> = o.report.worst_x.iter().map(|v| format_sig9(*v)).collect();
    writeln!(
        out,
        "{} jacobian={:?} mode={:?} samples={} max_residual={} max_relative_residual={} worst_x=[{}] time={:.3}s {}",
        o.case,
        o.jacobian,
        o.report.mode,
        o.report.samples,
        format_sig9(o.report.max_residual),
        format_sig9(o.report.max_relative_residual),
        worst.join(", "),
        o.elapsed.as_secs_f64(),
        verdict(o.passed)
    )
    .map_err(io_err)
}

fn print_equiv(out: &mut dyn Write, o: &EquivOutcome) -> Result<(), HarnessError> {
    writeln!(
        out,
        "{} steps={} max_chi_deviation={} max_estimate_deviation={} invariant_set_chi_deviation={} invariant_set_estimate_deviation={} time={:.3}s {}",
        o.case,
        o.report.steps,
        format_sig9(o.report.max_chi_deviation),
        format_sig9(o.report.max_estimate_deviation),
        format_sig9(o.invariant_set.max_chi_deviation),
        format_sig9(o.invariant_set.max_estimate_deviation),
        o.elapsed.as_secs_f64(),
        verdict(o.passed)
    )
    .map_err(io_err)
}

fn print_pe(out: &mut dyn Write, o: &PeOutcome) -> Result<(), HarnessError> {
    writeln!(
        out,
        "cascade window={} delta={} windows={} min_eigenvalue={} time={:.3}s {}",
        format_sig9(o.window),
        format_sig9(o.delta),
        o.report.window_min.len(),
        format_sig9(o.report.min_eigenvalue),
        o.elapsed.as_secs_f64(),
        verdict(o.report.excited)
    )
    .map_err(io_err)
}

fn write_rows(
    dir: &Path,
    name: &str,
    header: &[&str],
    rows: Vec<Vec<String>>,
) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let path = dir.join(name);
    let fail = |e: csv::Error| HarnessError::io(&path, std::io::Error::other(e.to_string()));
    let mut w = csv::Writer::from_path(&path).map_err(fail)?;
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.write_record(&r).map_err(fail)?;
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))
}

fn write_pde_csv(dir: &Path, outcomes: &[PdeOutcome]) -> Result<(), HarnessError> {
    let rows = outcomes
        .iter()
        .map(|o| {
            vec![
                o.case.to_string(),
                format!("{:?}", o.jacobian),
                format!("{:?}", o.report.mode),
                o.report.samples.to_string(),
                format_sig9(o.report.max_residual),
                format_sig9(o.report.max_relative_residual),
                o.passed.to_string(),
            ]
        })
        .collect();
    write_rows(
        dir,
        "pde_check.csv",
        &[
            "case",
            "jacobian",
            "mode",
            "samples",
            "max_residual",
            "max_relative_residual",
            "passed",
        ],
        rows,
    )
}

fn write_equiv_csv(dir: &Path, outcomes: &[EquivOutcome]) -> Result<(), HarnessError> {
    let rows = outcomes
        .iter()
        .map(|o| {
            vec![
                o.case.to_string(),
                o.report.steps.to_string(),
                format_sig9(o.report.max_chi_deviation),
                format_sig9(o.report.max_estimate_deviation),
                format_sig9(o.invariant_set.max_chi_deviation),
                format_sig9(o.invariant_set.max_estimate_deviation),
                o.passed.to_string(),
            ]
        })
        .collect();
    write_rows(
        dir,
        "equiv_check.csv",
        &[
            "case",
            "steps",
            "max_chi_deviation",
            "max_estimate_deviation",
            "invariant_set_chi_deviation",
            "invariant_set_estimate_deviation",
            "passed",
        ],
        rows,
    )
}

fn write_pe_csv(dir: &Path, o: &PeOutcome) -> Result<(), HarnessError> {
    let rows = o
        .report
        .window_min
        .iter()
        .enumerate()
        .map(|(k, v)| vec![k.to_string(), format_sig9(*v)])
        .collect();
    write_rows(dir, "pe_check.csv", &["window", "min_eigenvalue"], rows)
}
