//! Experiment harness: mid-time GRD-vs-MFG errors, δ sweeps with convergence rates, grid
//! refinement, and long runs of the classical replicator.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grd::GrdStepper;
use crate::grid::{
    initial_density, terminal_value, DensityTrajectory, GridSpec, InitialKind, TerminalKind,
};
use crate::mfg::{mfg_fixed_point, FailureReason, FixedPointConfig, MfgSolution};
use crate::pairsum::PairSumMode;
use crate::rates::TransitionRateSpec;
use crate::scalar::{sup_distance, Scalar};
use crate::utilities::{average_utility, EnergyParams, PotentialSign, UtilityKernel};

/// Kernel choice, resolved against a grid when a scenario runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec<T> {
    Zero,
    Potential(PotentialSign),
    Energy(EnergyParams<T>),
}

impl<T: Scalar> KernelSpec<T> {
    pub fn build(&self, grid: &GridSpec<T>) -> Result<UtilityKernel<T>> {
        match self {
            KernelSpec::Zero => Ok(UtilityKernel::zero(grid)),
            KernelSpec::Potential(sign) => Ok(UtilityKernel::potential(*sign, grid)),
            KernelSpec::Energy(params) => UtilityKernel::energy(params, grid),
        }
    }
}

/// Everything needed to run GRD and MFG side by side.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<T> {
    pub kernel: KernelSpec<T>,
    pub rate: TransitionRateSpec<T>,
    pub init: InitialKind,
    pub terminal: TerminalKind,
    /// `Ψ̄` of the linear terminal gain; ignored for a zero terminal value.
    pub psi_bar: T,
    pub grid: GridSpec<T>,
    pub deltas: Vec<T>,
    pub fixed_point: FixedPointConfig<T>,
}

impl<T: Scalar> Scenario<T> {
    /// Uniform start, zero terminal value, default fixed-point settings, no δ values.
    pub fn new(kernel: KernelSpec<T>, rate: TransitionRateSpec<T>, grid: GridSpec<T>) -> Self {
        Self {
            kernel,
            rate,
            init: InitialKind::Uniform,
            terminal: TerminalKind::Zero,
            psi_bar: T::zero(),
            grid,
            deltas: Vec::new(),
            fixed_point: FixedPointConfig::default(),
        }
    }

    pub fn with_init(mut self, init: InitialKind) -> Self {
        self.init = init;
        self
    }

    pub fn with_terminal(mut self, terminal: TerminalKind, psi_bar: T) -> Self {
        self.terminal = terminal;
        self.psi_bar = psi_bar;
        self
    }

    pub fn with_deltas(mut self, deltas: impl Into<Vec<T>>) -> Self {
        self.deltas = deltas.into();
        self
    }

    pub fn with_fixed_point(mut self, cfg: FixedPointConfig<T>) -> Self {
        self.fixed_point = cfg;
        self
    }

    pub fn with_grid(mut self, grid: GridSpec<T>) -> Self {
        self.grid = grid;
        self
    }

    pub fn p0(&self) -> Vec<T> {
        initial_density(self.init, &self.grid)
    }

    pub fn psi(&self) -> Result<Vec<T>> {
        terminal_value(self.terminal, self.psi_bar, &self.grid)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.half_level()?;
        self.fixed_point.validate()?;
        if let KernelSpec::Energy(params) = &self.kernel {
            params.validate()?;
        }
        if let Some(d) = self
            .deltas
            .iter()
            .find(|d| !(**d > T::zero()) || !d.is_finite())
        {
            return Err(Error::InvalidParameter(format!(
                "discount rates must be positive, got {d}"
            )));
        }
        terminal_value(self.terminal, self.psi_bar, &self.grid).map(|_| ())
    }

    /// Solves the MFG for one discount rate.
    pub fn solve_mfg(&self, kernel: &UtilityKernel<T>, delta: T) -> Result<MfgSolution<T>> {
        mfg_fixed_point(
            &self.p0(),
            kernel,
            &self.rate,
            delta,
            &self.psi()?,
            &self.grid,
            &self.fixed_point,
        )
    }
}

/// `max_j |a_{I/2,j} − b_{I/2,j}|` for two density trajectories on `grid`.
pub fn midtime_density_error<T: Scalar>(
    a: &DensityTrajectory<T>,
    b: &DensityTrajectory<T>,
    grid: &GridSpec<T>,
) -> Result<T> {
    let half = grid.half_level()?;
    if !a.matches(grid) || !b.matches(grid) {
        return Err(Error::Incomparable(
            "density trajectories do not live on the same grid".into(),
        ));
    }
    Ok(sup_distance(a.row(half), b.row(half)))
}

/// Mid-time errors `(max_j |p^GRD − p^MFG|, max_j |U^GRD − Φ^MFG|)` at `t = T/2`.
///
/// `grd_utility_half` are the GRD utilities at level `I/2`.
pub fn midtime_errors<T: Scalar>(
    grd: &DensityTrajectory<T>,
    grd_utility_half: &[T],
    mfg: &MfgSolution<T>,
    grid: &GridSpec<T>,
) -> Result<(T, T)> {
    if !mfg.converged() {
        return Err(Error::ConvergenceFailure);
    }
    let half = grid.half_level()?;
    if grd_utility_half.len() != grid.cells() || !mfg.value.matches(grid) {
        return Err(Error::Incomparable(
            "utilities and value function do not live on the same grid".into(),
        ));
    }
    let density = midtime_density_error(grd, &mfg.density, grid)?;
    Ok((density, sup_distance(grd_utility_half, mfg.value.row(half))))
}

/// `log₁₀(e_prev / e) / log₁₀(δ / δ_prev)` for consecutive entries; a decade ladder gives
/// `log₁₀(e_prev / e)`. The first entry, CF entries (`None`), and entries right after a CF
/// have no rate.
pub fn convergence_rates<T: Scalar>(errs: &[(T, Option<T>)]) -> Vec<Option<T>> {
    let mut out = Vec::with_capacity(errs.len());
    let mut prev: Option<(T, T)> = None;
    for &(delta, err) in errs {
        let rate = match (prev, err) {
            (Some((d0, e0)), Some(e)) if e > T::zero() && e0 > T::zero() => {
                Some((e0 / e).log10() / (delta / d0).log10())
            }
            _ => None,
        };
        out.push(rate);
        prev = err.map(|e| (delta, e));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum RowStatus {
    Converged,
    /// The fixed point failed or the solve was rejected; the reason is kept for diagnostics.
    ConvergenceFailure(String),
}

impl RowStatus {
    pub fn is_converged(&self) -> bool {
        matches!(self, RowStatus::Converged)
    }
}

/// GRD and MFG fields at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot<T> {
    pub level: usize,
    pub time: T,
    pub p_grd: Vec<T>,
    pub u_grd: Vec<T>,
    /// `None` when the MFG solve failed.
    pub p_mfg: Option<Vec<T>>,
    pub phi_mfg: Option<Vec<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow<T> {
    pub delta: T,
    pub status: RowStatus,
    pub err_density: Option<T>,
    pub err_value: Option<T>,
    pub cr_density: Option<T>,
    pub cr_value: Option<T>,
    pub iterations: usize,
    pub final_residual: Option<T>,
    pub runtime_seconds: f64,
    /// Fields at `t ∈ {0, T/4, T/2, 3T/4, T}`.
    pub snapshots: Vec<Snapshot<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport<T> {
    pub rows: Vec<SweepRow<T>>,
}

impl<T: Scalar> SweepReport<T> {
    pub fn any_failure(&self) -> bool {
        self.rows.iter().any(|r| !r.status.is_converged())
    }

    pub fn row(&self, delta: T) -> Option<&SweepRow<T>> {
        self.rows.iter().find(|r| r.delta == delta)
    }

    fn fill_rates(&mut self) {
        let dens: Vec<_> = self.rows.iter().map(|r| (r.delta, r.err_density)).collect();
        let vals: Vec<_> = self.rows.iter().map(|r| (r.delta, r.err_value)).collect();
        for ((row, cd), cv) in self
            .rows
            .iter_mut()
            .zip(convergence_rates(&dens))
            .zip(convergence_rates(&vals))
        {
            row.cr_density = cd;
            row.cr_value = cv;
        }
    }
}

/// GRD fields recorded at the quarter-time levels.
struct GrdSnapshots<T> {
    levels: [usize; 5],
    density: Vec<Vec<T>>,
    utility: Vec<Vec<T>>,
}

fn grd_snapshots<T: Scalar>(
    scenario: &Scenario<T>,
    kernel: &UtilityKernel<T>,
) -> Result<GrdSnapshots<T>> {
    let grid = &scenario.grid;
    let p0 = scenario.p0();
    let levels = grid.quarter_levels();
    let mut stepper = GrdStepper::new(
        &p0,
        kernel,
        &scenario.rate,
        grid,
        scenario.fixed_point.pair_sums,
    )?;
    let mut density = Vec::with_capacity(5);
    let mut utility = Vec::with_capacity(5);
    for &level in &levels {
        stepper.advance_to(level)?;
        density.push(stepper.density().to_vec());
        utility.push(stepper.utility().to_vec());
    }
    Ok(GrdSnapshots {
        levels,
        density,
        utility,
    })
}

fn failure_text<T: Scalar>(sol: &MfgSolution<T>) -> String {
    match sol.failure {
        Some(FailureReason::Diverged) => format!(
            "residual {} exceeded the divergence cap after {} iterations",
            sol.final_residual, sol.iterations
        ),
        _ => format!(
            "no convergence within {} iterations (residual {})",
            sol.iterations, sol.final_residual
        ),
    }
}

fn sweep_row<T: Scalar>(
    scenario: &Scenario<T>,
    kernel: &UtilityKernel<T>,
    grd: &GrdSnapshots<T>,
    delta: T,
) -> SweepRow<T> {
    let grid = &scenario.grid;
    let start = Instant::now();
    let solved = scenario.solve_mfg(kernel, delta);
    let runtime_seconds = start.elapsed().as_secs_f64();
    let snapshot = |k: usize, mfg: Option<&MfgSolution<T>>| Snapshot {
        level: grd.levels[k],
        time: grid.time(grd.levels[k]),
        p_grd: grd.density[k].clone(),
        u_grd: grd.utility[k].clone(),
        p_mfg: mfg.map(|s| s.density.row(grd.levels[k]).to_vec()),
        phi_mfg: mfg.map(|s| s.value.row(grd.levels[k]).to_vec()),
    };
    let mut row = SweepRow {
        delta,
        status: RowStatus::Converged,
        err_density: None,
        err_value: None,
        cr_density: None,
        cr_value: None,
        iterations: 0,
        final_residual: None,
        runtime_seconds,
        snapshots: Vec::new(),
    };
    match solved {
        Ok(sol) if sol.converged() => {
            // quarter level 2 is I/2
            row.err_density = Some(sup_distance(
                &grd.density[2],
                sol.density.row(grd.levels[2]),
            ));
            row.err_value = Some(sup_distance(&grd.utility[2], sol.value.row(grd.levels[2])));
            row.iterations = sol.iterations;
            row.final_residual = Some(sol.final_residual);
            row.snapshots = (0..5).map(|k| snapshot(k, Some(&sol))).collect();
        }
        Ok(sol) => {
            row.status = RowStatus::ConvergenceFailure(failure_text(&sol));
            row.iterations = sol.iterations;
            row.final_residual = Some(sol.final_residual);
            row.snapshots = (0..5).map(|k| snapshot(k, None)).collect();
        }
        Err(e) => {
            row.status = RowStatus::ConvergenceFailure(e.to_string());
            row.snapshots = (0..5).map(|k| snapshot(k, None)).collect();
        }
    }
    row
}

/// Runs the GRD once and the MFG for every δ (in parallel on the current rayon pool),
/// then tabulates mid-time errors and convergence rates. Rows are sorted by δ; failed
/// solves stay in the table as CF rows.
pub fn delta_sweep<T: Scalar>(scenario: &Scenario<T>) -> Result<SweepReport<T>> {
    scenario.validate()?;
    let kernel = scenario.kernel.build(&scenario.grid)?;
    let grd = grd_snapshots(scenario, &kernel)?;
    let mut deltas = scenario.deltas.clone();
    deltas.sort_by(|a, b| a.partial_cmp(b).expect("validated deltas"));
    let rows = deltas
        .par_iter()
        .map(|&delta| sweep_row(scenario, &kernel, &grd, delta))
        .collect();
    let mut report = SweepReport { rows };
    report.fill_rates();
    Ok(report)
}

/// Fine values sampled at the coarse cell centers. `fine.len()` must be a multiple of `cells`;
/// with an even ratio the center falls between two fine cells and their mean is taken.
pub fn restrict_to_centers<T: Scalar>(fine: &[T], cells: usize) -> Result<Vec<T>> {
    if cells == 0 || !fine.len().is_multiple_of(cells) {
        return Err(Error::Incomparable(format!(
            "{} fine cells do not nest in {cells} coarse cells",
            fine.len()
        )));
    }
    let ratio = fine.len() / cells;
    Ok(fine
        .chunks_exact(ratio)
        .map(|block| {
            let mid = ratio / 2;
            if ratio % 2 == 1 {
                block[mid]
            } else {
                (block[mid - 1] + block[mid]) * T::lit(0.5)
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementRow<T> {
    /// Level `n`, starting at 1.
    pub level: usize,
    pub steps: usize,
    pub cells: usize,
    pub delta: T,
    /// Sup-norm density error at `t = T/2` against the finest level; `None` if either solve failed.
    pub error: Option<T>,
    /// `log₂(e_{n−1} / e_n)`.
    pub cr: Option<T>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementReport<T> {
    pub rows: Vec<RefinementRow<T>>,
}

impl<T: Scalar> RefinementReport<T> {
    /// Rows for one δ, ordered by level.
    pub fn for_delta(&self, delta: T) -> Vec<&RefinementRow<T>> {
        self.rows.iter().filter(|r| r.delta == delta).collect()
    }
}

/// MFG refinement on the nested grids `(I₀·2^{n−1}, J₀·2^{n−1})`, `n = 1..=n_levels`, with
/// `(I₀, J₀)` taken from the scenario grid. Each level is compared at `t = T/2` with the finest
/// one, sampled at the coarse cell centers.
///
/// Levels run one after another (the finest solve dominates memory); δ values for a level run
/// in parallel.
pub fn refinement_study<T: Scalar>(
    scenario: &Scenario<T>,
    n_levels: usize,
    deltas: &[T],
) -> Result<RefinementReport<T>> {
    if n_levels < 2 {
        return Err(Error::InvalidParameter(
            "refinement needs at least 2 levels".into(),
        ));
    }
    scenario.validate()?;
    let base = &scenario.grid;
    let mid_rows = |n: usize| -> Result<Vec<Option<Vec<T>>>> {
        let scale = 1usize << (n - 1);
        let grid = GridSpec::new(base.steps() * scale, base.cells() * scale, base.t_end())?;
        let level = scenario.clone().with_grid(grid);
        let kernel = level.kernel.build(&level.grid)?;
        let half = level.grid.half_level()?;
        Ok(deltas
            .par_iter()
            .map(|&delta| match level.solve_mfg(&kernel, delta) {
                Ok(sol) if sol.converged() => Some(sol.density.row(half).to_vec()),
                _ => None,
            })
            .collect())
    };
    let reference = mid_rows(n_levels)?;
    let mut rows = Vec::new();
    for n in 1..n_levels {
        let coarse = mid_rows(n)?;
        let cells = base.cells() << (n - 1);
        for (k, &delta) in deltas.iter().enumerate() {
            let error = match (&coarse[k], &reference[k]) {
                (Some(c), Some(r)) => Some(sup_distance(c, &restrict_to_centers(r, cells)?)),
                _ => None,
            };
            rows.push(RefinementRow {
                level: n,
                steps: base.steps() << (n - 1),
                cells,
                delta,
                error,
                cr: None,
                converged: coarse[k].is_some(),
            });
        }
    }
    for k in 0..deltas.len() {
        let idx: Vec<usize> = (0..rows.len()).filter(|&r| r % deltas.len() == k).collect();
        for w in idx.windows(2) {
            if let (Some(e0), Some(e1)) = (rows[w[0]].error, rows[w[1]].error) {
                if e0 > T::zero() && e1 > T::zero() {
                    rows[w[1]].cr = Some((e0 / e1).log2());
                }
            }
        }
    }
    Ok(RefinementReport { rows })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LongrunRecord<T> {
    pub x_bar: T,
    pub time: T,
    /// Average utility `Ū = ∫ U dμ` at `time`.
    pub average_utility: T,
}

/// Classical replicator (`C(x) = x₊`) for the energy utility from a uniform start, one run per
/// threshold, recording `Ū` at each requested time. `dt` and `cells` fix the grid; the horizon is
/// the largest requested time.
pub fn longrun_replicator<T: Scalar>(
    params: &EnergyParams<T>,
    x_bars: &[T],
    times: &[T],
    dt: T,
    cells: usize,
) -> Result<Vec<LongrunRecord<T>>> {
    if !(dt > T::zero()) {
        return Err(Error::InvalidParameter("dt > 0".into()));
    }
    let mut levels = Vec::with_capacity(times.len());
    for &t in times {
        let steps = (t / dt).round();
        if t < T::zero() || (steps * dt - t).abs() > T::lit(1e-9) * t.max(T::one()) {
            return Err(Error::InvalidParameter(format!(
                "recorded time {t} is not a multiple of dt = {dt}"
            )));
        }
        levels.push(steps.to_usize().expect("nonnegative step count"));
    }
    let last = levels.iter().copied().max().unwrap_or(0).max(1);
    let grid = GridSpec::new(last, cells, dt * T::from_usize_lossy(last))?;
    let spec = TransitionRateSpec::power(T::one())?;
    let p0 = initial_density(InitialKind::Uniform, &grid);

    x_bars
        .par_iter()
        .map(|&x_bar| -> Result<Vec<LongrunRecord<T>>> {
            let params = EnergyParams { x_bar, ..*params };
            let kernel = UtilityKernel::energy(&params, &grid)?;
            let mut order: Vec<usize> = (0..levels.len()).collect();
            order.sort_by_key(|&k| levels[k]);
            let mut records = vec![None; levels.len()];
            let mut stepper = GrdStepper::new(&p0, &kernel, &spec, &grid, PairSumMode::Auto)?;
            for k in order {
                stepper.advance_to(levels[k])?;
                let ubar = average_utility(stepper.utility(), stepper.density(), &grid)?;
                records[k] = Some(LongrunRecord {
                    x_bar,
                    time: times[k],
                    average_utility: ubar,
                });
            }
            Ok(records
                .into_iter()
                .map(|r| r.expect("every time recorded"))
                .collect())
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().flatten().collect())
}
