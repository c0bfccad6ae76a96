//! Experiment dispatch and artifact writing.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use repligame::analysis::{
    delta_sweep, longrun_replicator, refinement_study, RowStatus, Snapshot, SweepReport,
};
use repligame::DensityTrajectory;
use repligame::{energy_equilibrium_report, grd_solve, CandidateKind, EquilibriumRegime};

use crate::config::{ConfigError, Experiment, ScenarioConfig};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Solver(#[from] repligame::Error),
}

/// How a completed run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Every row was produced but at least one MFG solve failed.
    ConvergenceFailure,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::ConvergenceFailure => 2,
        }
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, num)
}

/// Collects a file in memory and writes it in one go, mapping failures to the path.
struct Artifact {
    path: PathBuf,
    body: String,
}

impl Artifact {
    fn new(dir: &Path, name: &str, header: &str) -> Self {
        Self {
            path: dir.join(name),
            body: format!("{header}\n"),
        }
    }

    fn row(&mut self, fields: &[String]) {
        self.body.push_str(&fields.join(","));
        self.body.push('\n');
    }

    fn write(self) -> Result<(), RunError> {
        let io = |source| RunError::Io {
            path: self.path.clone(),
            source,
        };
        let mut file = fs::File::create(&self.path).map_err(io)?;
        file.write_all(self.body.as_bytes()).map_err(io)?;
        Ok(())
    }
}

fn create_dir(dir: &Path) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(|source| RunError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_snapshots(dir: &Path, x: &[f64], snapshots: &[Snapshot<f64>]) -> Result<(), RunError> {
    create_dir(dir)?;
    for snap in snapshots {
        let mut density = Artifact::new(
            dir,
            &format!("density_t{}.csv", snap.level),
            "x,p_grd,p_mfg",
        );
        let mut value = Artifact::new(
            dir,
            &format!("value_t{}.csv", snap.level),
            "x,u_grd,phi_mfg",
        );
        for j in 0..x.len() {
            let mfg = |field: &Option<Vec<f64>>| {
                field.as_ref().map_or_else(|| "CF".into(), |v| num(v[j]))
            };
            density.row(&[num(x[j]), num(snap.p_grd[j]), mfg(&snap.p_mfg)]);
            value.row(&[num(x[j]), num(snap.u_grd[j]), mfg(&snap.phi_mfg)]);
        }
        density.write()?;
        value.write()?;
    }
    Ok(())
}

fn write_sweep(
    dir: &Path,
    x: &[f64],
    report: &SweepReport<f64>,
    nested: bool,
) -> Result<(), RunError> {
    let mut csv = Artifact::new(
        dir,
        "report.csv",
        "delta,err_density,cr_density,err_value,cr_value,status,iterations,runtime_s",
    );
    for row in &report.rows {
        let converged = row.status.is_converged();
        let err = |e: Option<f64>| if converged { opt(e) } else { "CF".into() };
        csv.row(&[
            num(row.delta),
            err(row.err_density),
            opt(row.cr_density),
            err(row.err_value),
            opt(row.cr_value),
            if converged {
                "Converged".into()
            } else {
                "CF".into()
            },
            row.iterations.to_string(),
            num(row.runtime_seconds),
        ]);
        if let RowStatus::ConvergenceFailure(why) = &row.status {
            eprintln!("delta = {}: CF ({why})", row.delta);
        }
        let sub = if nested {
            dir.join(format!("delta_{:e}", row.delta))
        } else {
            dir.to_path_buf()
        };
        write_snapshots(&sub, x, &row.snapshots)?;
    }
    csv.write()
}

fn write_grd(dir: &Path, cfg: &ScenarioConfig) -> Result<(), RunError> {
    let scenario = cfg.scenario()?;
    let grid = &scenario.grid;
    let kernel = scenario.kernel.build(grid)?;
    let traj: DensityTrajectory = grd_solve(&scenario.p0(), &kernel, &scenario.rate, grid)?;
    for level in grid.quarter_levels() {
        let u = kernel.utility(traj.row(level), grid)?;
        let mut density = Artifact::new(dir, &format!("density_t{level}.csv"), "x,p_grd");
        let mut value = Artifact::new(dir, &format!("value_t{level}.csv"), "x,u_grd");
        for (j, &x) in grid.nodes().iter().enumerate() {
            density.row(&[num(x), num(traj.row(level)[j])]);
            value.row(&[num(x), num(u[j])]);
        }
        density.write()?;
        value.write()?;
    }
    let mut csv = Artifact::new(dir, "report.csv", "level,t,mass,min_density");
    for level in grid.quarter_levels() {
        let row = traj.row(level);
        csv.row(&[
            level.to_string(),
            num(grid.time(level)),
            num(grid.mass(row)),
            num(row.iter().copied().fold(f64::INFINITY, f64::min)),
        ]);
    }
    csv.write()
}

fn write_refinement(dir: &Path, cfg: &ScenarioConfig) -> Result<Outcome, RunError> {
    let scenario = cfg.scenario()?;
    let report = refinement_study(&scenario, cfg.refinement_levels, &cfg.deltas)?;
    let mut csv = Artifact::new(dir, "report.csv", "level,I,J,delta,error,cr,status");
    let mut outcome = Outcome::Success;
    for row in &report.rows {
        let status = if row.converged && row.error.is_some() {
            "Converged"
        } else {
            outcome = Outcome::ConvergenceFailure;
            "CF"
        };
        csv.row(&[
            row.level.to_string(),
            row.steps.to_string(),
            row.cells.to_string(),
            num(row.delta),
            row.error.map_or_else(|| "CF".into(), num),
            opt(row.cr),
            status.into(),
        ]);
    }
    csv.write()?;
    Ok(outcome)
}

fn write_longrun(dir: &Path, cfg: &ScenarioConfig) -> Result<(), RunError> {
    let params = cfg.energy_params().expect("validated energy kernel");
    let lr = &cfg.longrun;
    let records = longrun_replicator(&params, &lr.x_bars, &lr.times, lr.dt, lr.cells)?;
    let mut csv = Artifact::new(dir, "report.csv", "x_bar,t,average_utility");
    for r in &records {
        csv.row(&[num(r.x_bar), num(r.time), num(r.average_utility)]);
        println!(
            "x_bar = {:.3}  t = {:>8}  U_avg = {:.6}",
            r.x_bar, r.time, r.average_utility
        );
    }
    csv.write()
}

fn write_equilibrium(dir: &Path, cfg: &ScenarioConfig) -> Result<(), RunError> {
    let params = cfg.energy_params().expect("validated energy kernel");
    let report = energy_equilibrium_report(&params)?;
    let regime = match report.regime {
        EquilibriumRegime::BelowX2 => "below_x2",
        EquilibriumRegime::Between => "between",
        EquilibriumRegime::AboveX1 => "above_x1",
    };
    println!("X1 = {:.3}", report.x_bar_1);
    println!("X2 = {:.3}", report.x_bar_2);
    println!("regime: {regime}");
    let mut csv = Artifact::new(dir, "report.csv", "candidate,x,utility");
    csv.row(&["x_bar_1".into(), num(report.x_bar_1), String::new()]);
    csv.row(&["x_bar_2".into(), num(report.x_bar_2), String::new()]);
    for c in &report.candidates {
        let name = match c.kind {
            CandidateKind::PenalizedPeak => "penalized_peak",
            CandidateKind::UnpenalizedPeak => "unpenalized_peak",
            CandidateKind::ThresholdSupremum => "threshold_supremum",
        };
        println!("U({name} at x = {:.3}) = {:.3}", c.x, c.utility);
        csv.row(&[name.into(), num(c.x), num(c.utility)]);
    }
    csv.write()
}

fn write_metadata(dir: &Path, cfg: &ScenarioConfig, outcome: Outcome) -> Result<(), RunError> {
    let meta = serde_json::json!({
        "experiment": cfg.experiment.name(),
        "grid": {
            "I": cfg.big_i,
            "J": cfg.big_j,
            "T": cfg.t_end,
            "dt": cfg.t_end / cfg.big_i as f64,
            "dx": 1.0 / cfg.big_j as f64,
        },
        "rate": { "family": cfg.family.name(), "q": cfg.q },
        "version": env!("CARGO_PKG_VERSION"),
        "threads": rayon::current_num_threads(),
        "exit_code": outcome.exit_code(),
        "config": cfg.render(),
    });
    let path = dir.join("run.json");
    let text = serde_json::to_string_pretty(&meta).expect("json value");
    fs::write(&path, text).map_err(|source| RunError::Io { path, source })
}

/// Runs the configured experiment and writes every artifact under `output_path`.
pub fn run_experiment(cfg: &ScenarioConfig) -> Result<Outcome, RunError> {
    cfg.validate()?;
    let dir = PathBuf::from(&cfg.output_path);
    create_dir(&dir)?;
    let outcome = match cfg.experiment {
        Experiment::Grd => {
            write_grd(&dir, cfg)?;
            Outcome::Success
        }
        Experiment::Mfg | Experiment::DeltaSweep => {
            let scenario = cfg.scenario()?;
            let report = delta_sweep(&scenario)?;
            let nested = cfg.experiment == Experiment::DeltaSweep;
            write_sweep(&dir, scenario.grid.nodes(), &report, nested)?;
            for row in &report.rows {
                let e = |v: Option<f64>| v.map_or_else(|| "CF".to_string(), |x| format!("{x:.2e}"));
                let c = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"));
                println!(
                    "delta = {:<8e} err_p = {:<9} cr = {:<6} err_phi = {:<9} cr = {:<6} iters = {}",
                    row.delta,
                    e(row.err_density),
                    c(row.cr_density),
                    e(row.err_value),
                    c(row.cr_value),
                    row.iterations
                );
            }
            if report.any_failure() {
                Outcome::ConvergenceFailure
            } else {
                Outcome::Success
            }
        }
        Experiment::Refinement => write_refinement(&dir, cfg)?,
        Experiment::Longrun => {
            write_longrun(&dir, cfg)?;
            Outcome::Success
        }
        Experiment::Equilibrium => {
            write_equilibrium(&dir, cfg)?;
            Outcome::Success
        }
    };
    write_metadata(&dir, cfg, outcome)?;
    Ok(outcome)
}
