//! Scenario driver: parses or picks a scenario, applies command-line
//! overrides, runs it and writes the requested outputs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dirbeam::kinematics::DirectorMode;
use dirbeam::material::MaterialModel;
use dirbeam::scenario::{self, RunOptions, Scenario, ScenarioError, SchemeSpec};

#[derive(Parser)]
#[command(
    name = "beamsolve",
    about = "Nonlinear elastodynamic beam solver with extensible directors",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Emc,
    Midpoint,
    Trapezoidal,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    #[value(name = "D-disc", alias = "discrete")]
    Discrete,
    #[value(name = "D-cont", alias = "continuous")]
    Continuous,
}

#[derive(Clone, Copy, ValueEnum)]
enum MaterialArg {
    Svk,
    NeoHookean,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario: a JSON file path or the name of a bundled example.
    Run {
        scenario: String,
        /// Variant of a bundled example (see `list-examples`).
        #[arg(long)]
        case: Option<String>,
        /// Output directory for CSV histories, snapshots and the report.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the dynamic time-stepping scheme.
        #[arg(long, value_enum)]
        scheme: Option<SchemeArg>,
        /// Override the time step size.
        #[arg(long)]
        dt: Option<f64>,
        /// Override the step count (every phase for quasi-static runs).
        #[arg(long)]
        steps: Option<usize>,
        /// Initial director treatment: reconstructed (D-disc) or exact (D-cont).
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Override the director basis degree.
        #[arg(long)]
        pd: Option<usize>,
        /// Override the constitutive model.
        #[arg(long, value_enum)]
        material: Option<MaterialArg>,
        /// Write the section enhancement basis coefficients as CSV.
        #[arg(long)]
        dump_eas_basis: bool,
        /// Write the tangent matrix at the reference state as triplet text.
        #[arg(long)]
        dump_matrix: bool,
        /// Write the per-step residual history.
        #[arg(long)]
        log_residuals: bool,
    },
    /// Parse and validate a scenario file, echoing the materialized document.
    Validate { file: PathBuf },
    /// List the bundled example scenarios.
    ListExamples {
        #[arg(long)]
        json: bool,
    },
}

fn init_thread_pool() {
    if let Ok(v) = std::env::var("BEAMSOLVE_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
}

fn load_scenario(spec: &str, case: Option<&str>) -> Result<Scenario, ScenarioError> {
    let path = PathBuf::from(spec);
    if path.exists() {
        let text = std::fs::read_to_string(&path)?;
        scenario::parse_scenario(&text)
    } else {
        scenario::bundled(spec, case)
    }
}

fn apply_overrides(
    s: &mut Scenario,
    scheme: Option<SchemeArg>,
    dt: Option<f64>,
    steps: Option<usize>,
    mode: Option<ModeArg>,
    pd: Option<usize>,
    material: Option<MaterialArg>,
) {
    if let Some(m) = mode {
        s.geometry.director_mode = match m {
            ModeArg::Discrete => DirectorMode::Discrete,
            ModeArg::Continuous => DirectorMode::Continuous,
        };
    }
    if let Some(pd) = pd {
        s.geometry.director_degree = Some(pd);
    }
    if let Some(m) = material {
        s.material.model = match m {
            MaterialArg::Svk => MaterialModel::SaintVenantKirchhoff,
            MaterialArg::NeoHookean => MaterialModel::NeoHookean,
        };
    }
    match &mut s.scheme {
        SchemeSpec::Dynamic {
            scheme: sch,
            dt: d,
            steps: n,
            ..
        } => {
            if let Some(v) = scheme {
                *sch = match v {
                    SchemeArg::Emc => scenario::DynamicScheme::Emc,
                    SchemeArg::Midpoint => scenario::DynamicScheme::Midpoint,
                    SchemeArg::Trapezoidal => scenario::DynamicScheme::Trapezoidal,
                };
            }
            if let Some(v) = dt {
                *d = v;
            }
            if let Some(v) = steps {
                *n = v;
            }
        }
        SchemeSpec::QuasiStatic { phases } => {
            if let Some(v) = steps {
                for ph in phases {
                    ph.steps = v;
                }
            }
        }
    }
}

fn main() -> ExitCode {
    init_thread_pool();
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            scenario: spec,
            case,
            out,
            scheme,
            dt,
            steps,
            mode,
            pd,
            material,
            dump_eas_basis,
            dump_matrix,
            log_residuals,
        } => {
            let mut s = match load_scenario(&spec, case.as_deref()) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            apply_overrides(&mut s, scheme, dt, steps, mode, pd, material);
            if let Err(e) = scenario::validate(&s) {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
            let opts = RunOptions {
                out_dir: out,
                dump_eas_basis,
                dump_matrix,
                log_residuals,
            };
            match scenario::run(&s, &opts) {
                Ok(result) => {
                    let rep = &result.report;
                    println!(
                        "{}: {} steps, {} Newton iterations, {:.1} s",
                        rep.name,
                        rep.steps_completed,
                        rep.total_iterations,
                        rep.wall_ms as f64 / 1000.0
                    );
                    println!(
                        "final strain energy {:.6e}, total energy {:.6e}",
                        rep.final_strain_energy, rep.final_total_energy
                    );
                    for path in &rep.manifest {
                        println!("wrote {path}");
                    }
                    if let Some(f) = &rep.failure {
                        eprintln!("run ended early: {f}");
                        return ExitCode::from(3);
                    }
                    ExitCode::SUCCESS
                }
                Err(ScenarioError::Integrator(e)) => {
                    eprintln!("error: {e}");
                    ExitCode::from(3)
                }
                Err(e @ (ScenarioError::Validation(_) | ScenarioError::Parse(_))) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
        Command::Validate { file } => {
            let text = match std::fs::read_to_string(&file) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::FAILURE;
                }
            };
            match scenario::parse_scenario(&text) {
                Ok(s) => {
                    println!("{}", serde_json::to_string_pretty(&s).unwrap());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("invalid scenario: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::ListExamples { json } => {
            let catalog = scenario::catalog();
            if json {
                println!("{}", serde_json::to_string_pretty(&catalog).unwrap());
            } else {
                for e in catalog {
                    if e.cases.is_empty() {
                        println!("{:<18} {}", e.name, e.summary);
                    } else {
                        println!(
                            "{:<18} {} (cases: {})",
                            e.name,
                            e.summary,
                            e.cases.join(", ")
                        );
                    }
                }
            }
            ExitCode::SUCCESS
        }
    }
}
