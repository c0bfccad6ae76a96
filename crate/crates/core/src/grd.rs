//! Explicit Euler scheme for the generalized replicator dynamic
//!
//! ```text
//! p_{i,j} = p_{i−1,j} + Δt p_{i−1,j} Δx Σ_k [C(U_{i−1,j} − U_{i−1,k}) − C(U_{i−1,k} − U_{i−1,j})] p_{i−1,k}
//! ```

use crate::error::{Error, Result};
use crate::grid::{DensityTrajectory, GridSpec};
use crate::pairsum::{PairSumMode, PairSums};
use crate::rates::TransitionRateSpec;
use crate::scalar::{sup_abs, Scalar};
use crate::utilities::UtilityKernel;

/// Fails unless `2 C(2K) Δt < 1`, the condition under which an explicit step of the
/// pairwise-comparison flux keeps densities nonnegative when node values lie in `[−K, K]`.
pub(crate) fn check_positivity<T: Scalar>(spec: &TransitionRateSpec<T>, k: T, dt: T) -> Result<()> {
    let lhs = T::lit(2.0) * spec.rate(T::lit(2.0) * k) * dt;
    if lhs < T::one() {
        Ok(())
    } else {
        Err(Error::StabilityViolation {
            inequality: "2 C(2K) dt < 1",
            lhs: lhs.as_f64(),
            bound: 1.0,
        })
    }
}

/// `out_j = p_j + Δt p_j Δx flux_j`.
pub(crate) fn apply_flux<T: Scalar>(p: &[T], flux: &[T], dt: T, dx: T, out: &mut [T]) {
    let scale = dt * dx;
    for ((o, &pj), &fj) in out.iter_mut().zip(p).zip(flux) {
        *o = pj + scale * pj * fj;
    }
}

/// One step of the scheme, reusing `sums` and `flux` as scratch space.
pub fn grd_step_with<T: Scalar>(
    sums: &mut PairSums<T>,
    p_prev: &[T],
    u_prev: &[T],
    spec: &TransitionRateSpec<T>,
    grid: &GridSpec<T>,
    flux: &mut [T],
    out: &mut [T],
) -> Result<()> {
    for len in [p_prev.len(), u_prev.len(), flux.len(), out.len()] {
        grid.check_len(len)?;
    }
    check_positivity(spec, sup_abs(u_prev.iter().copied()), grid.dt())?;
    sums.net_flux(spec, u_prev, p_prev, flux);
    apply_flux(p_prev, flux, grid.dt(), grid.dx(), out);
    Ok(())
}

/// One step from `p_prev` given the utilities `u_prev` evaluated at `p_prev`.
pub fn grd_step<T: Scalar>(
    p_prev: &[T],
    u_prev: &[T],
    spec: &TransitionRateSpec<T>,
    grid: &GridSpec<T>,
) -> Result<Vec<T>> {
    let n = grid.cells();
    let mut flux = vec![T::zero(); n];
    let mut out = vec![T::zero(); n];
    grd_step_with(
        &mut PairSums::new(PairSumMode::Auto),
        p_prev,
        u_prev,
        spec,
        grid,
        &mut flux,
        &mut out,
    )?;
    Ok(out)
}

/// Streaming solver holding only the current density; used for long runs where the full
/// trajectory is not needed.
#[derive(Debug, Clone)]
pub struct GrdStepper<'a, T> {
    kernel: &'a UtilityKernel<T>,
    spec: TransitionRateSpec<T>,
    grid: GridSpec<T>,
    sums: PairSums<T>,
    p: Vec<T>,
    u: Vec<T>,
    flux: Vec<T>,
    next: Vec<T>,
    level: usize,
}

impl<'a, T: Scalar> GrdStepper<'a, T> {
    pub fn new(
        p0: &[T],
        kernel: &'a UtilityKernel<T>,
        spec: &TransitionRateSpec<T>,
        grid: &GridSpec<T>,
        mode: PairSumMode,
    ) -> Result<Self> {
        grid.check_len(p0.len())?;
        grid.check_len(kernel.size())?;
        let n = grid.cells();
        let mut u = vec![T::zero(); n];
        kernel.utility_into(p0, grid.dx(), &mut u)?;
        Ok(Self {
            kernel,
            spec: *spec,
            grid: grid.clone(),
            sums: PairSums::new(mode),
            p: p0.to_vec(),
            u,
            flux: vec![T::zero(); n],
            next: vec![T::zero(); n],
            level: 0,
        })
    }

    /// Advances one time step.
    pub fn advance(&mut self) -> Result<()> {
        grd_step_with(
            &mut self.sums,
            &self.p,
            &self.u,
            &self.spec,
            &self.grid,
            &mut self.flux,
            &mut self.next,
        )?;
        std::mem::swap(&mut self.p, &mut self.next);
        self.kernel
            .utility_into(&self.p, self.grid.dx(), &mut self.u)?;
        self.level += 1;
        Ok(())
    }

    /// Advances until `level` is reached; no-op if already there.
    pub fn advance_to(&mut self, level: usize) -> Result<()> {
        while self.level < level {
            self.advance()?;
        }
        Ok(())
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn density(&self) -> &[T] {
        &self.p
    }

    /// Utilities at the current density.
    pub fn utility(&self) -> &[T] {
        &self.u
    }
}

pub fn grd_solve_with<T: Scalar>(
    p0: &[T],
    kernel: &UtilityKernel<T>,
    spec: &TransitionRateSpec<T>,
    grid: &GridSpec<T>,
    mode: PairSumMode,
) -> Result<DensityTrajectory<T>> {
    let mut stepper = GrdStepper::new(p0, kernel, spec, grid, mode)?;
    let mut traj = DensityTrajectory::zeros(grid);
    traj.row_mut(0).copy_from_slice(p0);
    for i in 1..=grid.steps() {
        stepper.advance()?;
        traj.row_mut(i).copy_from_slice(stepper.density());
    }
    Ok(traj)
}

/// Full trajectory of the scheme from `p0`, utilities recomputed from the density at every step.
pub fn grd_solve<T: Scalar>(
    p0: &[T],
    kernel: &UtilityKernel<T>,
    spec: &TransitionRateSpec<T>,
    grid: &GridSpec<T>,
) -> Result<DensityTrajectory<T>> {
    grd_solve_with(p0, kernel, spec, grid, PairSumMode::Auto)
}
