//! Task orchestration, output files and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use nullcone_core::cross_section_geometry::CrossSection;
use nullcone_core::flow_engine::{run_flow, FlowConfig, Termination};
use nullcone_core::foliation_builder::{build_foliation, check_foliation, FoliationConfig};
use nullcone_core::identity_suite::{codazzi_residual, gauss_residual, simon_residual, ResidualReport, SimonForm};
use nullcone_core::sphere_spectral::{snapshot_to_string, ScalarField};
use nullcone_core::stcmc_solver::{newton_stcmc, NewtonConfig};

use crate::config::{RunConfig, TaskConfig};
use crate::error::CliError;

/// Artifact version recorded in every manifest.
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Exit status when every gate passes.
pub const STATUS_OK: i32 = 0;
/// Exit status when a gate fails or a kernel reports an error.
pub const STATUS_FAILED: i32 = 1;
/// Exit status when a flow exhausts its step or time budget.
pub const STATUS_BUDGET: i32 = 2;
/// Exit status for invalid configurations or command lines.
pub const STATUS_CONFIG: i32 = 3;

/// Manifest file name.
pub const MANIFEST: &str = "run.json";

/// One acceptance gate of a task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    /// Gate name.
    pub name: String,
    /// Measured value.
    pub value: f64,
    /// Threshold the value is compared against.
    pub threshold: f64,
    /// Whether the gate passed.
    pub pass: bool,
}

impl Gate {
    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, pass: value <= threshold }
    }

    fn flag(name: &str, ok: bool) -> Self {
        Self { name: name.into(), value: if ok { 1.0 } else { 0.0 }, threshold: 1.0, pass: ok }
    }
}

/// The run manifest `run.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// False while the run is in progress or if it crashed.
    pub completed: bool,
    /// Version of the program that produced the run.
    pub artifact_version: String,
    /// Task name.
    pub task: String,
    /// Run seed.
    pub seed: u64,
    /// The configuration with every default materialized.
    pub config: RunConfig,
    /// Wall-clock duration in seconds.
    pub wall_time_seconds: f64,
    /// Exit status.
    pub status: i32,
    /// Termination reason of iterative tasks.
    pub termination: Option<String>,
    /// Name of the failing gate, the exhausted budget or the error.
    pub reason: Option<String>,
    /// Acceptance gates of the task.
    pub gates: Vec<Gate>,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
    /// Task-specific summary values.
    pub summary: Value,
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn write(&mut self, name: &str, contents: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_vec_pretty(value)?;
        text.push(b'\n');
        self.write(name, &text)
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Csv(e.into_error().into()))?;
        self.write(name, &bytes)
    }

    fn snapshot(&mut self, index: usize, field: &ScalarField) -> Result<String, CliError> {
        let name = format!("field_t{index:04}.sphere");
        self.write(&name, snapshot_to_string(field).as_bytes())?;
        Ok(name)
    }
}

/// Write the manifest atomically (temporary file, then rename).
pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<(), CliError> {
    let tmp = dir.join(format!("{MANIFEST}.tmp"));
    let path = dir.join(MANIFEST);
    let mut text = serde_json::to_vec_pretty(manifest)?;
    text.push(b'\n');
    fs::write(&tmp, text).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| CliError::io(&path, e))
}

/// What a task produced, before the manifest is finalized.
struct TaskOutcome {
    gates: Vec<Gate>,
    termination: Option<String>,
    budget_exhausted: Option<String>,
    summary: Value,
}

/// Configure the global rayon pool from `NULLCONE_THREADS`.
pub fn configure_threads() -> Result<usize, CliError> {
    let threads = match std::env::var("NULLCONE_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::Threads(format!("NULLCONE_THREADS must be a positive integer, got {v:?}")))?,
        Err(_) => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    // A pool that is already initialized (e.g. in tests) is kept.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(threads)
}

/// Run a validated configuration, writing all artifacts into `out`.
/// Returns the final manifest; its `status` is the process exit status.
pub fn run(config: RunConfig, out: &Path) -> Result<RunManifest, CliError> {
    let config = config.materialize();
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let start = Instant::now();
    let mut manifest = RunManifest {
        completed: false,
        artifact_version: ARTIFACT_VERSION.to_string(),
        task: config.task.kind().to_string(),
        seed: config.seed,
        config: config.clone(),
        wall_time_seconds: 0.0,
        status: STATUS_FAILED,
        termination: None,
        reason: None,
        gates: Vec::new(),
        outputs: Vec::new(),
        summary: Value::Null,
    };
    write_manifest(out, &manifest)?;
    let mut outputs = Outputs { dir: out.to_path_buf(), files: Vec::new() };
    match execute(&config, &mut outputs) {
        Ok(outcome) => {
            let failing = outcome.gates.iter().find(|g| !g.pass).map(|g| g.name.clone());
            manifest.status = match (&outcome.budget_exhausted, &failing) {
                (Some(_), _) => STATUS_BUDGET,
                (None, Some(_)) => STATUS_FAILED,
                (None, None) => STATUS_OK,
            };
            manifest.reason = outcome.budget_exhausted.or(failing);
            manifest.termination = outcome.termination;
            manifest.gates = outcome.gates;
            manifest.summary = outcome.summary;
        }
        Err(e) => {
            manifest.status = STATUS_FAILED;
            manifest.reason = Some(e.to_string());
        }
    }
    manifest.outputs = outputs.files;
    manifest.wall_time_seconds = start.elapsed().as_secs_f64();
    manifest.completed = true;
    write_manifest(out, &manifest)?;
    Ok(manifest)
}

fn execute(config: &RunConfig, out: &mut Outputs) -> Result<TaskOutcome, CliError> {
    let model = config.model()?;
    let grid = config.grid()?;
    let omega = config.initial_surface(&grid)?;
    match &config.task {
        TaskConfig::Verify { tolerance } => verify(&CrossSection::new(&model, &omega)?, *tolerance, out),
        TaskConfig::Flow { settings, area_drift_tolerance } => {
            flow(&CrossSection::new(&model, &omega)?, settings, *area_drift_tolerance, out)
        }
        TaskConfig::Solve { newton } => solve(&CrossSection::new(&model, &omega)?, newton, out),
        TaskConfig::Foliate { foliation } => foliate(&model, &omega, foliation, out),
    }
}

fn verify(cs: &CrossSection, tolerance: f64, out: &mut Outputs) -> Result<TaskOutcome, CliError> {
    let gauss = gauss_residual(cs)?;
    let (codazzi, codazzi_contracted) = codazzi_residual(cs)?;
    let simon = simon_residual(cs, SimonForm::Full)?;
    let mut gates = Vec::new();
    for r in [&gauss, &codazzi, &simon] {
        out.json(&format!("report_{}.json", r.name), r)?;
        gates.push(Gate::at_most(&r.name, r.relative, tolerance));
    }
    let diagnostics: Vec<ResidualReport> = vec![
        codazzi_contracted,
        simon_residual(cs, SimonForm::Contracted)?,
        simon_residual(cs, SimonForm::ContractedRederived)?,
    ];
    Ok(TaskOutcome { gates, termination: None, budget_exhausted: None, summary: json!({ "diagnostics": diagnostics }) })
}

#[derive(Serialize)]
struct SeriesRow {
    step: usize,
    t: f64,
    area: f64,
    rho: f64,
    mean_h2: f64,
    l2_dev: f64,
    sup_dev: f64,
    a_x: f64,
    a_y: f64,
    a_z: f64,
    a_tf_scaled: f64,
    grad_a_tf_scaled: f64,
}

#[derive(Serialize)]
struct DecayRow {
    t: f64,
    l2_dev_sq: f64,
}

fn flow(cs: &CrossSection, settings: &FlowConfig, drift_tol: f64, out: &mut Outputs) -> Result<TaskOutcome, CliError> {
    let run = run_flow(cs, settings)?;
    let rows: Vec<SeriesRow> = run
        .rows
        .iter()
        .map(|r| SeriesRow {
            step: r.step,
            t: r.t,
            area: r.area,
            rho: r.rho,
            mean_h2: r.mean_h2,
            l2_dev: r.l2_dev,
            sup_dev: r.sup_dev,
            a_x: r.a[0],
            a_y: r.a[1],
            a_z: r.a[2],
            a_tf_scaled: r.a_tf_scaled,
            grad_a_tf_scaled: r.grad_a_tf_scaled,
        })
        .collect();
    out.csv("series.csv", &rows)?;
    let decay: Vec<DecayRow> = run.decay.iter().map(|&(t, y)| DecayRow { t, l2_dev_sq: y }).collect();
    out.csv("decay.csv", &decay)?;
    let mut snapshots = Vec::new();
    for (i, s) in run.snapshots.iter().enumerate() {
        let file = out.snapshot(i, &s.omega)?;
        snapshots.push(json!({ "file": file, "step": s.step, "t": s.t }));
    }
    let w = run.final_section.omega();
    let sigma = cs.area_radius();
    let roundness = (w.max() - w.min()) / 2.0 / sigma;
    let rate = run.decay_rate().ok();
    let report = json!({
        "termination": run.termination.as_str(),
        "steps": run.steps,
        "final_time": run.rows.last().map(|r| r.t),
        "max_area_drift": run.max_area_drift,
        "final_sup_deviation_over_sigma": roundness,
        "decay_rate": rate,
        "failure": run.failure.as_ref().map(|e| e.to_string()),
        "snapshots": snapshots,
    });
    out.json("report_flow.json", &report)?;
    let mut gates = vec![Gate::at_most("area_drift", run.max_area_drift, drift_tol)];
    let budget = match run.termination {
        Termination::MaxSteps | Termination::MaxTime => Some(run.termination.as_str().to_string()),
        _ => None,
    };
    if run.termination == Termination::StepFailure {
        gates.push(Gate::flag("step_failure", false));
    }
    Ok(TaskOutcome { gates, termination: Some(run.termination.as_str().to_string()), budget_exhausted: budget, summary: report })
}

#[derive(Serialize)]
struct NewtonCsvRow {
    iter: usize,
    residual: f64,
    c: f64,
    damping: f64,
}

fn solve(cs: &CrossSection, cfg: &NewtonConfig, out: &mut Outputs) -> Result<TaskOutcome, CliError> {
    let run = newton_stcmc(cs, cfg);
    let rows: Vec<NewtonCsvRow> =
        run.log.iter().map(|r| NewtonCsvRow { iter: r.iter, residual: r.residual, c: r.c, damping: r.damping }).collect();
    out.csv("series.csv", &rows)?;
    out.snapshot(0, cs.omega())?;
    out.snapshot(1, run.surface.omega())?;
    let residual = run.log.last().map(|r| r.residual).unwrap_or(f64::NAN);
    let report = json!({
        "converged": run.converged(),
        "iterations": run.log.len().saturating_sub(1),
        "residual": residual,
        "area": run.surface.area(),
        "area_radius": run.surface.area_radius(),
        "mean_h2": run.surface.mean_h2(),
        "failure": run.failure.as_ref().map(|e| e.to_string()),
    });
    out.json("report_solve.json", &report)?;
    let gates = vec![Gate::flag("converged", run.converged())];
    let termination = Some(if run.converged() { "tolerance".to_string() } else { "failure".to_string() });
    Ok(TaskOutcome { gates, termination, budget_exhausted: None, summary: report })
}

#[derive(Serialize)]
struct LeafRow {
    sigma: f64,
    h2: f64,
    rho: f64,
    a_norm: f64,
    gap_margin: Option<f64>,
    a_x: f64,
    a_y: f64,
    a_z: f64,
    min_eig: Option<f64>,
}

fn foliate(
    model: &nullcone_core::background_model::BackgroundModel,
    seed: &ScalarField,
    cfg: &FoliationConfig,
    out: &mut Outputs,
) -> Result<TaskOutcome, CliError> {
    let res = build_foliation(model, seed, cfg)?;
    let rows: Vec<LeafRow> = res
        .leaves
        .iter()
        .enumerate()
        .map(|(i, l)| LeafRow {
            sigma: l.sigma,
            h2: l.h2,
            rho: l.rho,
            a_norm: l.a.iter().map(|x| x * x).sum::<f64>().sqrt(),
            gap_margin: res.gap_margins.get(i).copied(),
            a_x: l.a[0],
            a_y: l.a[1],
            a_z: l.a[2],
            min_eig: l.min_eig,
        })
        .collect();
    out.csv("series.csv", &rows)?;
    for (i, l) in res.leaves.iter().enumerate() {
        out.snapshot(i, l.section.omega())?;
    }
    let check = if res.leaves.len() >= 3 { Some(check_foliation(&res, model.mass())?) } else { None };
    let report = json!({
        "leaves": res.leaves.len(),
        "failure": res.failure.as_ref().map(|e| e.to_string()),
        "bondi_energy": res.bondi.0,
        "bondi_momentum": res.bondi.1,
        "check": check,
    });
    out.json("report_foliation.json", &report)?;
    let mut gates = vec![Gate::flag("all_leaves_solved", res.failure.is_none())];
    if let Some(c) = &check {
        gates.push(Gate::flag("gaps_positive", c.gaps_positive));
        gates.push(Gate::flag("h2_strictly_decreasing", c.h2_strictly_decreasing));
        gates.push(Gate::flag("d_sigma_omega_positive", c.d_sigma_omega_positive));
    }
    let termination = Some(if res.failure.is_none() { "complete".to_string() } else { "leaf_failure".to_string() });
    Ok(TaskOutcome { gates, termination, budget_exhausted: None, summary: report })
}
