#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use codesign_core::codesign::{run_codesign, solve_design_certificate};
use codesign_core::plant::{CheckStatus, GainMatrix, PlantFamily, Transform};
use codesign_core::simulate::{integrate, l2_output_cost, verify_trace_bound, BoundReport, Trajectory};
use codesign_core::Error;
use log::{info, LevelFilter};
use nalgebra::DVector;
use serde::Serialize;

mod config;
mod report;

use config::{matrix, to_rows, ConfigError, Matrix, Problem};
use report::ReportFile;

/// Number of random probes used by the sampled Lipschitz check.
const LIPSCHITZ_PROBES: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Exit {
    Ok = 0,
    AssumptionFailed = 1,
    BadInput = 2,
    NotConverged = 3,
    Infeasible = 4,
    Diverged = 5,
}

impl From<Exit> for ExitCode {
    fn from(e: Exit) -> Self {
        ExitCode::from(e as u8)
    }
}

#[derive(Parser)]
#[command(
    name = "codesign",
    version,
    about = "Plant and state-feedback co-design for Lipschitz nonlinear systems"
)]
struct Cli {
    #[arg(long, global = true, default_value = "warn")]
    log_level: LevelFilter,
    /// Seed for randomized self-checks.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the plant assumptions.
    Validate { config: PathBuf },
    /// Run initial synthesis and the descent; writes report.json.
    Codesign {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate the closed loop; writes trajectory.csv and bound.json.
    Simulate {
        config: PathBuf,
        /// Path to a report.json, or `inline` for `simulate.gains` in the config.
        #[arg(long)]
        gains: String,
        #[arg(long)]
        out: PathBuf,
    },
}

struct Failure {
    exit: Exit,
    message: String,
}

impl Failure {
    fn new(exit: Exit, message: impl Into<String>) -> Self {
        Self {
            exit,
            message: message.into(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::new(Exit::BadInput, format!("config error: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level).init();
    let result = match cli.command {
        Command::Validate { config } => cmd_validate(&config, cli.seed),
        Command::Codesign { config, out } => cmd_codesign(&config, &out, cli.seed),
        Command::Simulate { config, gains, out } => cmd_simulate(&config, &gains, &out),
    };
    match result {
        Ok(exit) => exit.into(),
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.exit.into()
        }
    }
}

fn load(path: &Path) -> Result<Problem, Failure> {
    Ok(config::load(path)?.build()?)
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::new(Exit::BadInput, format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), Failure> {
    fs::create_dir_all(path).map_err(|e| Failure::new(Exit::BadInput, format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// Returns the printed report and whether every checked assumption holds.
fn assumption_report(plant: &PlantFamily, seed: u64) -> Result<(String, bool), Failure> {
    let report = plant
        .check_assumptions(LIPSCHITZ_PROBES, seed)
        .map_err(|e| Failure::new(Exit::BadInput, e.to_string()))?;
    let mut out = String::new();
    for check in &report.checks {
        let status = match &check.status {
            CheckStatus::Pass => "pass".to_string(),
            CheckStatus::Fail(why) => format!("FAIL ({why})"),
            CheckStatus::NotChecked(why) => format!("not checked ({why})"),
        };
        let _ = writeln!(out, "{:<10} {:<48} {status}", check.name, check.description);
    }
    let _ = writeln!(out, "R = D^T D = {:?}", to_rows(&report.r));
    let _ = writeln!(
        out,
        "alpha = {}, largest sampled Lipschitz ratio = {:.6}",
        plant.alpha, report.max_sampled_ratio
    );
    if let Some(w) = &report.lipschitz_witness {
        let _ = writeln!(
            out,
            "Lipschitz witness: x1 = {:?}, x2 = {:?}, ratio = {}",
            w.x1.as_slice(),
            w.x2.as_slice(),
            w.ratio
        );
    }
    Ok((out, report.all_passed()))
}

fn cmd_validate(path: &Path, seed: u64) -> Result<Exit, Failure> {
    let problem = load(path)?;
    let (text, ok) = assumption_report(&problem.plant, seed)?;
    print!("{text}");
    Ok(if ok { Exit::Ok } else { Exit::AssumptionFailed })
}

fn cmd_codesign(path: &Path, out: &Path, seed: u64) -> Result<Exit, Failure> {
    let problem = load(path)?;
    let (text, ok) = assumption_report(&problem.plant, seed)?;
    if !ok {
        print!("{text}");
        return Err(Failure::new(Exit::AssumptionFailed, "plant assumptions fail"));
    }
    let run = match run_codesign(&problem.plant, &problem.codesign) {
        Ok(run) => run,
        Err(e @ Error::Infeasible { .. }) | Err(e @ Error::NoFeasibleMu) => {
            return Err(Failure::new(Exit::Infeasible, e.to_string()))
        }
        Err(e) => return Err(Failure::new(Exit::NotConverged, format!("co-design failed: {e}"))),
    };
    let alpha_working = if run.transform.is_identity() {
        problem.plant.alpha
    } else {
        problem
            .plant
            .transform(&run.transform)
            .map_err(|e| Failure::new(Exit::BadInput, e.to_string()))?
            .alpha
    };
    let file = ReportFile::new(&run, alpha_working);
    create_dir(out)?;
    write_file(&out.join("report.json"), &to_json(&file))?;

    println!(
        "delta0 = {:.6} (threshold {:.6}, feasible {})",
        file.original.delta0, file.original.threshold, file.original.feasible
    );
    if let Some(t) = &file.transformed {
        println!(
            "transformed: delta0 = {:.6} (threshold {:.6}, feasible {}), alpha = {:.6}",
            t.delta0, t.threshold, t.feasible, alpha_working
        );
    }
    println!("mu = {}", file.mu);
    println!(
        "{} after {} iterations: objective {:.6} -> {:.6} ({:.2}% improvement)",
        file.termination, file.iteration_count, file.objective_initial, file.objective_final, file.improvement_percent
    );
    println!("d = {:?}", file.final_d);
    println!("K = {:?}", file.final_k);
    Ok(if run.converged { Exit::Ok } else { Exit::NotConverged })
}

/// Gains and design to simulate, plus what is needed to check the trace bound.
struct GainSource {
    name: String,
    d: DVector<f64>,
    k: GainMatrix,
    bound: BoundInputs,
}

struct BoundInputs {
    transform: Transform,
    k_working: GainMatrix,
    mu: Option<f64>,
}

fn gains_from_report(path: &Path, problem: &Problem) -> Result<GainSource, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::new(Exit::BadInput, format!("{}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let file: ReportFile = serde_path_to_error::deserialize(de)
        .map_err(|e| Failure::new(Exit::BadInput, format!("report error at {}: {}", e.path(), e.inner())))?;
    let plant = &problem.plant;
    let shape = (plant.n_u(), plant.n_x());
    let k = matrix(&file.final_k, shape, "final_k")?;
    let k_working = matrix(&file.final_k_working, shape, "final_k_working")?;
    let t = matrix(&file.transform, (plant.n_x(), plant.n_x()), "transform")?;
    let transform = Transform::new(t).map_err(|e| Failure::new(Exit::BadInput, format!("report transform: {e}")))?;
    Ok(GainSource {
        name: path.display().to_string(),
        d: config::vector(&file.final_d, plant.n_d(), "final_d")?,
        k: GainMatrix(k),
        bound: BoundInputs {
            transform,
            k_working: GainMatrix(k_working),
            mu: Some(file.mu),
        },
    })
}

fn inline_gains(problem: &Problem) -> Result<GainSource, Failure> {
    let plant = &problem.plant;
    let spec = &problem.spec.simulate;
    let rows: &Matrix = spec.gains.as_ref().ok_or_else(|| {
        Failure::new(
            Exit::BadInput,
            "config error: simulate.gains: required for --gains inline",
        )
    })?;
    let k = GainMatrix(matrix(rows, (plant.n_u(), plant.n_x()), "simulate.gains")?);
    let d = match &spec.design {
        Some(d) => config::vector(d, plant.n_d(), "simulate.design")?,
        None => problem.codesign.initial_d.clone(),
    };
    Ok(GainSource {
        name: "inline".into(),
        d,
        k: k.clone(),
        bound: BoundInputs {
            transform: Transform::identity(plant.n_x()),
            k_working: k,
            mu: problem.codesign.mu,
        },
    })
}

#[derive(Serialize)]
struct BoundSummary {
    mu: f64,
    bound: f64,
    total_cost: f64,
    passed: bool,
    direction_costs: Vec<f64>,
    diverged_direction: Option<usize>,
    horizon: f64,
    dt: f64,
}

impl BoundSummary {
    fn new(r: &BoundReport, mu: f64) -> Self {
        Self {
            mu,
            bound: r.bound,
            total_cost: r.total_cost,
            passed: r.passed,
            direction_costs: r.directions.iter().map(|c| c.cost).collect(),
            diverged_direction: r.diverged.map(|(k, _)| k),
            horizon: r.horizon,
            dt: r.dt,
        }
    }
}

#[derive(Serialize)]
struct SimulationSummary {
    gains_source: String,
    d: Vec<f64>,
    k: Matrix,
    samples: usize,
    final_state: Option<Vec<f64>>,
    output_cost: f64,
    trace_bound: Option<BoundSummary>,
    trace_bound_note: Option<String>,
}

fn trace_bound(plant: &PlantFamily, src: &GainSource, dt: f64) -> Result<BoundSummary, String> {
    let inputs = &src.bound;
    let working = if inputs.transform.is_identity() {
        plant.clone()
    } else {
        plant.transform(&inputs.transform).map_err(|e| e.to_string())?
    };
    let (mu, cert) = match inputs.mu {
        Some(mu) => (
            mu,
            solve_design_certificate(&working, &src.d, &inputs.k_working, mu).map_err(|e| e.to_string())?,
        ),
        None => codesign_core::codesign::find_mu(&working, &src.d, &inputs.k_working, 1.0)
            .ok_or("no output weight admits a certificate")?,
    };
    let report =
        verify_trace_bound(&working, &src.d, &inputs.k_working, &cert, mu, None, dt).map_err(|e| e.to_string())?;
    Ok(BoundSummary::new(&report, mu))
}

fn csv_header(plant: &PlantFamily) -> String {
    let mut cols = vec!["t".to_string()];
    let groups = [
        ("x", plant.n_x()),
        ("u", plant.n_u()),
        ("z", plant.n_z()),
        ("w", plant.n_w()),
    ];
    for (prefix, n) in groups {
        cols.extend((1..=n).map(|i| format!("{prefix}{i}")));
    }
    cols.join(",")
}

fn csv_table(plant: &PlantFamily, traj: Option<&Trajectory>) -> String {
    let mut out = csv_header(plant);
    out.push('\n');
    let Some(traj) = traj else {
        return out;
    };
    for i in 0..traj.len() {
        let mut fields = vec![traj.times[i].to_string()];
        for v in [&traj.states[i], &traj.inputs[i], &traj.outputs[i], &traj.disturbance[i]] {
            fields.extend(v.iter().map(f64::to_string));
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

fn cmd_simulate(path: &Path, gains: &str, out: &Path) -> Result<Exit, Failure> {
    let problem = load(path)?;
    let plant = &problem.plant;
    let spec = &problem.spec.simulate;
    let src = if gains == "inline" {
        inline_gains(&problem)?
    } else {
        gains_from_report(Path::new(gains), &problem)?
    };
    let x0 = spec
        .x0
        .as_ref()
        .map_or_else(|| DVector::zeros(plant.n_x()), |v| DVector::from_column_slice(v));

    let traj = if spec.t_end > 0.0 {
        match integrate(plant, &src.d, &src.k, &x0, &spec.signal(), spec.t_end, spec.dt) {
            Ok(t) => Some(t),
            Err(Error::Diverged { time }) => {
                return Err(Failure::new(
                    Exit::Diverged,
                    format!("closed loop diverged at t = {time}"),
                ))
            }
            Err(e) => return Err(Failure::new(Exit::BadInput, e.to_string())),
        }
    } else {
        None
    };

    let (trace_bound, trace_bound_note) = match trace_bound(plant, &src, spec.dt) {
        Ok(b) => (Some(b), None),
        Err(note) => {
            info!("trace bound not evaluated: {note}");
            (None, Some(note))
        }
    };
    let summary = SimulationSummary {
        gains_source: src.name.clone(),
        d: src.d.iter().copied().collect(),
        k: to_rows(&src.k.0),
        samples: traj.as_ref().map_or(0, Trajectory::len),
        final_state: traj
            .as_ref()
            .and_then(|t| t.final_state())
            .map(|x| x.iter().copied().collect()),
        output_cost: traj.as_ref().map_or(0.0, l2_output_cost),
        trace_bound,
        trace_bound_note,
    };

    create_dir(out)?;
    write_file(&out.join("trajectory.csv"), &csv_table(plant, traj.as_ref()))?;
    write_file(&out.join("bound.json"), &to_json(&summary))?;
    if let Some(x) = &summary.final_state {
        println!("final state = {x:?}");
    }
    println!("output cost = {}", summary.output_cost);
    if let Some(b) = &summary.trace_bound {
        println!(
            "trace bound: cost {} <= {} : {}",
            b.total_cost,
            b.bound,
            if b.passed { "pass" } else { "FAIL" }
        );
    }
    Ok(Exit::Ok)
}

#[cfg(test)]
mod tests {
    use super::*;
    use codesign_core::manipulator;

    #[test]
    fn header_order() {
        assert_eq!(csv_header(&manipulator::plant()), "t,x1,x2,x3,x4,u1,z1,z2,z3,z4,w1");
    }

    #[test]
    fn empty_table_is_header_only() {
        assert_eq!(csv_table(&manipulator::plant(), None).lines().count(), 1);
    }

    #[test]
    fn exit_codes() {
        let codes: Vec<u8> = [
            Exit::Ok,
            Exit::AssumptionFailed,
            Exit::BadInput,
            Exit::NotConverged,
            Exit::Infeasible,
            Exit::Diverged,
        ]
        .iter()
        .map(|e| *e as u8)
        .collect();
        assert_eq!(codes, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn full_precision_rendering() {
        let traj = Trajectory {
            times: vec![0.0],
            states: vec![DVector::from_element(4, 0.1 + 0.2)],
            inputs: vec![DVector::zeros(1)],
            outputs: vec![DVector::zeros(4)],
            disturbance: vec![DVector::zeros(1)],
        };
        let table = csv_table(&manipulator::plant(), Some(&traj));
        let row = table.lines().nth(1).unwrap();
        let x1: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(x1, 0.1 + 0.2);
    }
}
