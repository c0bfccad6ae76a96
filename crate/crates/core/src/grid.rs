//! Space-time grid on `[0, T] × [0, 1]`, trajectory storage, and initial/terminal data.

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Uniform grid: `I` time steps of size `T/I`, `J` cells of size `1/J` with centers
/// `x_j = (j − 1/2)/J`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec<T> {
    big_i: usize,
    big_j: usize,
    t_end: T,
    dt: T,
    dx: T,
    nodes: Vec<T>,
}

impl<T: Scalar> GridSpec<T> {
    pub fn new(big_i: usize, big_j: usize, t_end: T) -> Result<Self> {
        if big_i == 0 || big_j == 0 {
            return Err(Error::InvalidParameter(format!(
                "grid needs I >= 1 and J >= 1, got I = {big_i}, J = {big_j}"
            )));
        }
        if !t_end.is_finite() || t_end <= T::zero() {
            return Err(Error::InvalidParameter(format!(
                "terminal time must be positive, got {t_end}"
            )));
        }
        let dt = t_end / T::from_usize_lossy(big_i);
        let dx = T::from_usize_lossy(big_j).recip();
        // mirror the lower half so that x_j + x_{J+1-j} == 1 holds bit-exactly
        let two_j = T::from_usize_lossy(2 * big_j);
        let mut nodes = vec![T::zero(); big_j];
        for j in 0..big_j.div_ceil(2) {
            let x = T::from_usize_lossy(2 * j + 1) / two_j;
            nodes[j] = x;
            nodes[big_j - 1 - j] = T::one() - x;
        }
        if big_j % 2 == 1 {
            nodes[big_j / 2] = T::lit(0.5);
        }
        Ok(Self {
            big_i,
            big_j,
            t_end,
            dt,
            dx,
            nodes,
        })
    }

    /// Number of time steps `I`.
    pub fn steps(&self) -> usize {
        self.big_i
    }

    /// Number of cells `J`.
    pub fn cells(&self) -> usize {
        self.big_j
    }

    pub fn t_end(&self) -> T {
        self.t_end
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn dx(&self) -> T {
        self.dx
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn time(&self, level: usize) -> T {
        T::from_usize_lossy(level) * self.dt
    }

    /// `Δx Σ_j p_j`.
    pub fn mass(&self, p: &[T]) -> T {
        p.iter().copied().sum::<T>() * self.dx
    }

    /// Time level of `t = T/2`; requires even `I`.
    pub fn half_level(&self) -> Result<usize> {
        if !self.big_i.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "mid-time comparison needs an even number of time steps, got I = {}",
                self.big_i
            )));
        }
        Ok(self.big_i / 2)
    }

    /// Levels at `t ∈ {0, T/4, T/2, 3T/4, T}` (rounded down when `I` is not divisible by 4).
    pub fn quarter_levels(&self) -> [usize; 5] {
        let i = self.big_i;
        [0, i / 4, i / 2, 3 * i / 4, i]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.big_i == other.big_i && self.big_j == other.big_j && self.t_end == other.t_end
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.big_j {
            return Err(Error::DimensionMismatch {
                expected: self.big_j,
                actual: len,
            });
        }
        Ok(())
    }
}

/// `(I+1) × J` array of densities `p_{i,j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTrajectory<T>(pub(crate) Array2<T>);

/// `(I+1) × J` array of value-function entries `Φ_{i,j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTrajectory<T>(pub(crate) Array2<T>);

macro_rules! trajectory_common {
    ($name:ident) => {
        impl<T: Scalar> $name<T> {
            pub fn from_array(values: Array2<T>) -> Self {
                if values.is_standard_layout() {
                    Self(values)
                } else {
                    Self(values.as_standard_layout().into_owned())
                }
            }

            pub fn zeros(grid: &GridSpec<T>) -> Self {
                Self(Array2::zeros((grid.steps() + 1, grid.cells())))
            }

            pub fn values(&self) -> &Array2<T> {
                &self.0
            }

            pub fn into_array(self) -> Array2<T> {
                self.0
            }

            pub fn levels(&self) -> usize {
                self.0.nrows()
            }

            pub fn cells(&self) -> usize {
                self.0.ncols()
            }

            pub fn row(&self, level: usize) -> &[T] {
                self.0
                    .row(level)
                    .to_slice()
                    .expect("trajectories are stored row-major")
            }

            pub fn row_view(&self, level: usize) -> ArrayView1<'_, T> {
                self.0.row(level)
            }

            #[allow(dead_code)]
            pub(crate) fn row_mut(&mut self, level: usize) -> &mut [T] {
                self.0
                    .row_mut(level)
                    .into_slice()
                    .expect("trajectories are stored row-major")
            }

            pub(crate) fn matches(&self, grid: &GridSpec<T>) -> bool {
                self.levels() == grid.steps() + 1 && self.cells() == grid.cells()
            }
        }
    };
}

trajectory_common!(DensityTrajectory);
trajectory_common!(ValueTrajectory);

impl<T: Scalar> DensityTrajectory<T> {
    /// Trajectory whose every level equals `p0`.
    pub fn constant(p0: &[T], grid: &GridSpec<T>) -> Result<Self> {
        grid.check_len(p0.len())?;
        let mut out = Self::zeros(grid);
        for mut row in out.0.rows_mut() {
            row.as_slice_mut().expect("row-major").copy_from_slice(p0);
        }
        Ok(out)
    }

    /// `max_i |Δx Σ_j p_{i,j} − 1|`.
    pub fn max_mass_defect(&self, grid: &GridSpec<T>) -> T {
        (0..self.levels())
            .map(|i| (grid.mass(self.row(i)) - T::one()).abs())
            .fold(T::zero(), T::max)
    }

    pub fn min_value(&self) -> T {
        self.0.iter().copied().fold(T::infinity(), T::min)
    }
}

impl<T: Scalar> ValueTrajectory<T> {
    pub fn max_abs(&self) -> T {
        self.0.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialKind {
    /// `p ≡ 1`.
    Uniform,
    /// `p = 5/3` on `x ≤ 3/5`, zero elsewhere, renormalized on the grid.
    FiniteSupport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminalKind {
    Zero,
    /// `Ψ(x) = Ψ̄ (1 − x)`.
    LinearGain,
}

pub fn initial_density<T: Scalar>(kind: InitialKind, grid: &GridSpec<T>) -> Vec<T> {
    match kind {
        InitialKind::Uniform => vec![T::one(); grid.cells()],
        InitialKind::FiniteSupport => {
            let cut = T::lit(0.6);
            let height = T::lit(5.0) / T::lit(3.0);
            let raw: Vec<T> = grid
                .nodes()
                .iter()
                .map(|&x| if x <= cut { height } else { T::zero() })
                .collect();
            let mass = grid.mass(&raw);
            if mass > T::zero() {
                raw.into_iter().map(|v| v / mass).collect()
            } else {
                raw
            }
        }
    }
}

pub fn terminal_value<T: Scalar>(
    kind: TerminalKind,
    psi_bar: T,
    grid: &GridSpec<T>,
) -> Result<Vec<T>> {
    if psi_bar.is_nan() || psi_bar < T::zero() {
        return Err(Error::InvalidParameter(format!(
            "terminal gain must be nonnegative, got {psi_bar}"
        )));
    }
    Ok(match kind {
        TerminalKind::Zero => vec![T::zero(); grid.cells()],
        TerminalKind::LinearGain => grid
            .nodes()
            .iter()
            .map(|&x| psi_bar * (T::one() - x))
            .collect(),
    })
}
