//! Discounted mean-field game on the grid: backward HJB sweep, forward Fokker–Planck sweep
//! driven by the optimal rates, and the relaxed fixed-point iteration coupling them.
//!
//! ```text
//! HJB  Φ_{i,j} = (1 − δΔt) Φ_{i+1,j} + Δt Δx Σ_k p_{i,k} P((Φ_{i+1,k} − Φ_{i+1,j})₊) + δΔt U_{i,j}
//! FP   p_{i,j} = p_{i−1,j} + Δt p_{i−1,j} Δx Σ_k [C(Φ_{i,j} − Φ_{i,k}) − C(Φ_{i,k} − Φ_{i,j})] p_{i−1,k}
//! ```

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::grd::{apply_flux, check_positivity};
use crate::grid::{DensityTrajectory, GridSpec, ValueTrajectory};
use crate::pairsum::{PairSumMode, PairSums};
use crate::rates::TransitionRateSpec;
use crate::scalar::{sup_abs, Scalar};
use crate::utilities::UtilityKernel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointConfig<T> {
    /// Weight `ω` of the new forward solution in `p ← (1 − ω) p + ω p̃`.
    pub relaxation: T,
    pub max_iters: usize,
    /// Sup-norm tolerance on successive density trajectories.
    pub tol: T,
    /// Residual above which the iteration is declared divergent.
    pub divergence_cap: T,
    pub pair_sums: PairSumMode,
}

impl<T: Scalar> Default for FixedPointConfig<T> {
    fn default() -> Self {
        Self {
            relaxation: T::lit(0.25),
            max_iters: 1000,
            tol: T::lit(1e-9),
            divergence_cap: T::lit(1e6),
            pair_sums: PairSumMode::Auto,
        }
    }
}

impl<T: Scalar> FixedPointConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.relaxation > T::zero() && self.relaxation <= T::one()) {
            return Err(Error::InvalidParameter("0 < relaxation <= 1".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters >= 1".into()));
        }
        if !(self.tol > T::zero()) {
            return Err(Error::InvalidParameter("tol > 0".into()));
        }
        if !(self.divergence_cap > self.tol) {
            return Err(Error::InvalidParameter("divergence_cap > tol".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    ConvergenceFailure,
}

/// Why a fixed-point solve stopped without converging.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureReason {
    IterationLimit,
    /// The residual exceeded the divergence cap or stopped being finite.
    Diverged,
}

/// Sufficient conditions for the discrete value bound and for positivity of the forward sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport<T> {
    /// Lipschitz constant of the primitive on `[0, 3K₂]`.
    pub l_c: T,
    /// `(δ + L_C) Δt < 1`.
    pub prop2_ok: bool,
    /// `2 C(2K₂) Δt < 1`.
    pub prop3_ok: bool,
    /// `1 − (δ + L_C) Δt`.
    pub prop2_margin: T,
    /// `1 − 2 C(2K₂) Δt`.
    pub prop3_margin: T,
}

#[derive(Debug, Clone)]
pub struct MfgSolution<T> {
    pub density: DensityTrajectory<T>,
    pub value: ValueTrajectory<T>,
    pub status: SolveStatus,
    pub failure: Option<FailureReason>,
    pub iterations: usize,
    pub final_residual: T,
    /// `K₂` used for truncation and the value bound.
    pub k2_bound: T,
    pub stability: StabilityReport<T>,
}

impl<T: Scalar> MfgSolution<T> {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

/// `K₂ = max{|max Ψ + K|, |min Ψ − K|}`, a δ-independent bound on the value function.
pub fn value_bound<T: Scalar>(psi: &[T], k_utility: T) -> T {
    let (lo, hi) = psi
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if psi.is_empty() {
        return k_utility.abs();
    }
    (hi + k_utility).abs().max((lo - k_utility).abs())
}

pub fn stability_report<T: Scalar>(
    delta: T,
    spec: &TransitionRateSpec<T>,
    k2: T,
    dt: T,
) -> StabilityReport<T> {
    let l_c = if k2 > T::zero() {
        spec.rate(T::lit(3.0) * k2)
    } else {
        T::zero()
    };
    let prop2 = (delta + l_c) * dt;
    let prop3 = T::lit(2.0) * spec.rate(T::lit(2.0) * k2) * dt;
    StabilityReport {
        l_c,
        prop2_ok: prop2 < T::one(),
        prop3_ok: prop3 < T::one(),
        prop2_margin: T::one() - prop2,
        prop3_margin: T::one() - prop3,
    }
}

/// Entry `(j, k)` is the optimal rate of switching from `x_j` to `x_k`, `C(Φ_k − Φ_j)`.
pub fn optimal_rate_matrix<T: Scalar>(phi_row: &[T], spec: &TransitionRateSpec<T>) -> Array2<T> {
    let n = phi_row.len();
    Array2::from_shape_fn((n, n), |(j, k)| spec.rate(phi_row[k] - phi_row[j]))
}

fn check_discount<T: Scalar>(delta: T, dt: T) -> Result<()> {
    if !(delta > T::zero()) || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "discount rate must be positive, got {delta}"
        )));
    }
    let lhs = delta * dt;
    if lhs > T::one() {
        return Err(Error::StabilityViolation {
            inequality: "delta dt <= 1",
            lhs: lhs.as_f64(),
            bound: 1.0,
        });
    }
    Ok(())
}

/// Scratch buffers for the sweeps.
struct Workspace<T> {
    sums: PairSums<T>,
    u: Vec<T>,
    acc: Vec<T>,
    cur: Vec<T>,
    next: Vec<T>,
}

impl<T: Scalar> Workspace<T> {
    fn new(n: usize, mode: PairSumMode) -> Self {
        Self {
            sums: PairSums::new(mode),
            u: vec![T::zero(); n],
            acc: vec![T::zero(); n],
            cur: vec![T::zero(); n],
            next: vec![T::zero(); n],
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn hjb_sweep<T: Scalar>(
    ws: &mut Workspace<T>,
    density: &Array2<T>,
    kernel: &UtilityKernel<T>,
    spec: &TransitionRateSpec<T>,
    delta: T,
    psi: &[T],
    grid: &GridSpec<T>,
    value: &mut Array2<T>,
) -> Result<()> {
    let (dt, dx) = (grid.dt(), grid.dx());
    let keep = T::one() - delta * dt;
    let gain = delta * dt;
    let steps = grid.steps();
    value
        .row_mut(steps)
        .as_slice_mut()
        .expect("row-major")
        .copy_from_slice(psi);
    for i in (0..steps).rev() {
        let p_i = density.row(i);
        let p_i = p_i.as_slice().expect("row-major");
        kernel.utility_into(p_i, dx, &mut ws.u)?;
        let (mut head, tail) = value.view_mut().split_at(ndarray::Axis(0), i + 1);
        let later = tail.row(0);
        let later = later.as_slice().expect("row-major");
        ws.sums.upward_primitive(spec, later, p_i, &mut ws.acc);
        let mut row = head.row_mut(i);
        let row = row.as_slice_mut().expect("row-major");
        for j in 0..row.len() {
            row[j] = keep * later[j] + dt * dx * ws.acc[j] + gain * ws.u[j];
        }
    }
    Ok(())
}

/// Backward sweep for the value function given a density trajectory.
pub fn hjb_backward_with<T: Scalar>(
    density: &DensityTrajectory<T>,
    kernel: &UtilityKernel<T>,
    spec: &TransitionRateSpec<T>,
    delta: T,
    psi: &[T],
    grid: &GridSpec<T>,
    mode: PairSumMode,
) -> Result<ValueTrajectory<T>> {
    check_discount(delta, grid.dt())?;
    grid.check_len(psi.len())?;
    grid.check_len(kernel.size())?;
    if !density.matches(grid) {
        return Err(Error::DimensionMismatch {
            expected: grid.steps() + 1,
            actual: density.levels(),
        });
    }
    let mut value = ValueTrajectory::zeros(grid);
    let mut ws = Workspace::new(grid.cells(), mode);
    hjb_sweep(
        &mut ws,
        &density.0,
        kernel,
        spec,
        delta,
        psi,
        grid,
        &mut value.0,
    )?;
    Ok(value)
}

pub fn hjb_backward<T: Scalar>(
    density: &DensityTrajectory<T>,
    kernel: &UtilityKernel<T>,
    spec: &TransitionRateSpec<T>,
    delta: T,
    psi: &[T],
    grid: &GridSpec<T>,
) -> Result<ValueTrajectory<T>> {
    hjb_backward_with(density, kernel, spec, delta, psi, grid, PairSumMode::Auto)
}

/// Forward sweep for the density given a value trajectory.
pub fn fp_forward_with<T: Scalar>(
    value: &ValueTrajectory<T>,
    p0: &[T],
    spec: &TransitionRateSpec<T>,
    grid: &GridSpec<T>,
    mode: PairSumMode,
) -> Result<DensityTrajectory<T>> {
    grid.check_len(p0.len())?;
    if !value.matches(grid) {
        return Err(Error::DimensionMismatch {
            expected: grid.steps() + 1,
            actual: value.levels(),
        });
    }
    check_positivity(spec, value.max_abs(), grid.dt())?;
    let mut ws = Workspace::new(grid.cells(), mode);
    let mut out = DensityTrajectory::zeros(grid);
    out.row_mut(0).copy_from_slice(p0);
    for i in 1..=grid.steps() {
        let (head, mut tail) = out.0.view_mut().split_at(ndarray::Axis(0), i);
        let prev = head.row(i - 1);
        let prev = prev.as_slice().expect("row-major");
        ws.sums.net_flux(spec, value.row(i), prev, &mut ws.acc);
        let mut row = tail.row_mut(0);
        apply_flux(
            prev,
            &ws.acc,
            grid.dt(),
            grid.dx(),
            row.as_slice_mut().expect("row-major"),
        );
    }
    Ok(out)
}

pub fn fp_forward<T: Scalar>(
    value: &ValueTrajectory<T>,
    p0: &[T],
    spec: &TransitionRateSpec<T>,
    grid: &GridSpec<T>,
) -> Result<DensityTrajectory<T>> {
    fp_forward_with(value, p0, spec, grid, PairSumMode::Auto)
}

/// Runs the forward sweep from `p0` without storing it, relaxing each new row into `density`.
/// Returns the sup-norm change of `density`.
fn relaxed_forward<T: Scalar>(
    ws: &mut Workspace<T>,
    value: &Array2<T>,
    p0: &[T],
    spec: &TransitionRateSpec<T>,
    grid: &GridSpec<T>,
    omega: T,
    density: &mut Array2<T>,
) -> T {
    let keep = T::one() - omega;
    ws.cur.copy_from_slice(p0);
    let mut residual = T::zero();
    for i in 1..=grid.steps() {
        let phi = value.row(i);
        ws.sums.net_flux(
            spec,
            phi.as_slice().expect("row-major"),
            &ws.cur,
            &mut ws.acc,
        );
        apply_flux(&ws.cur, &ws.acc, grid.dt(), grid.dx(), &mut ws.next);
        let mut row = density.row_mut(i);
        for (old, &fresh) in row.iter_mut().zip(&ws.next) {
            let relaxed = keep * *old + omega * fresh;
            let change = (relaxed - *old).abs();
            if change.is_nan() || change > residual {
                residual = change;
            }
            *old = relaxed;
        }
        std::mem::swap(&mut ws.cur, &mut ws.next);
    }
    residual
}

/// Relaxed fixed-point iteration between the two sweeps, started from the time-constant
/// trajectory `p0`. The rate is truncated at `3K₂` for the solve.
///
/// Non-convergence is reported through [`MfgSolution::status`]; errors are reserved for
/// invalid input and violated step-size conditions.
pub fn mfg_fixed_point<T: Scalar>(
    p0: &[T],
    kernel: &UtilityKernel<T>,
    spec: &TransitionRateSpec<T>,
    delta: T,
    psi: &[T],
    grid: &GridSpec<T>,
    cfg: &FixedPointConfig<T>,
) -> Result<MfgSolution<T>> {
    cfg.validate()?;
    check_discount(delta, grid.dt())?;
    grid.check_len(p0.len())?;
    grid.check_len(psi.len())?;
    grid.check_len(kernel.size())?;

    let k2 = value_bound(psi, kernel.bound());
    let spec = if k2 > T::zero() && spec.truncation_level().is_none() {
        spec.with_truncation(T::lit(3.0) * k2)?
    } else {
        *spec
    };
    let stability = stability_report(delta, &spec, k2, grid.dt());

    let mut ws = Workspace::new(grid.cells(), cfg.pair_sums);
    let mut density = DensityTrajectory::constant(p0, grid)?;
    let mut value = ValueTrajectory::zeros(grid);
    let mut status = SolveStatus::ConvergenceFailure;
    let mut failure = Some(FailureReason::IterationLimit);
    let mut residual = T::infinity();
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        iterations += 1;
        hjb_sweep(
            &mut ws,
            &density.0,
            kernel,
            &spec,
            delta,
            psi,
            grid,
            &mut value.0,
        )?;
        check_positivity(&spec, value.max_abs(), grid.dt())?;
        residual = relaxed_forward(
            &mut ws,
            &value.0,
            p0,
            &spec,
            grid,
            cfg.relaxation,
            &mut density.0,
        );
        if !residual.is_finite() || residual > cfg.divergence_cap {
            failure = Some(FailureReason::Diverged);
            break;
        }
        if residual <= cfg.tol {
            status = SolveStatus::Converged;
            failure = None;
            break;
        }
    }

    // value function consistent with the returned density
    if residual.is_finite() {
        hjb_sweep(
            &mut ws,
            &density.0,
            kernel,
            &spec,
            delta,
            psi,
            grid,
            &mut value.0,
        )?;
    }

    Ok(MfgSolution {
        density,
        value,
        status,
        failure,
        iterations,
        final_residual: residual,
        k2_bound: k2,
        stability,
    })
}

/// Largest `|Φ|` over every level of `value`, compared against `K₂` in the tests.
pub fn value_excess<T: Scalar>(value: &ValueTrajectory<T>, k2: T) -> T {
    sup_abs(value.values().iter().copied()) - k2
}
