//! Utilities of the nonlocal form `U(x, μ) = ∫ f(x, y) μ(dy)`, tabulated on the grid.
//!
//! Kernels are stored as `J × J` tables. The built-in kernels also carry a low-rank
//! factorization `f(x, y) = Σ_r a_r(x) b_r(y)`, which lets the utility be evaluated in `O(rJ)`
//! instead of `O(J²)`; hand-built tables fall back to the matrix-vector product.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialSign {
    /// `f(x, y) = −(x − y)²`.
    Concave,
    /// `f(x, y) = (x − y)²`.
    Convex,
}

/// Parameters of the energy-management utility
/// `U(x, μ) = x^α/α − σ (1 + w μ([X̄, 1])) x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParams<T> {
    pub alpha: T,
    pub sigma: T,
    pub w: T,
    pub x_bar: T,
}

impl<T: Scalar> EnergyParams<T> {
    pub fn new(alpha: T, sigma: T, w: T, x_bar: T) -> Result<Self> {
        let params = Self {
            alpha,
            sigma,
            w,
            x_bar,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let (zero, one) = (T::zero(), T::one());
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if !(self.alpha > zero && self.alpha < one) {
            return bad("0 < alpha < 1");
        }
        if !(self.sigma > one) || !self.sigma.is_finite() {
            return bad("sigma > 1");
        }
        if !(self.w > zero) || !self.w.is_finite() {
            return bad("w > 0");
        }
        if !(self.x_bar > zero && self.x_bar <= one) {
            return bad("0 < x_bar <= 1");
        }
        Ok(())
    }

    /// `x^α/α − s·x`, the utility of a pure strategy at `x` with marginal cost `s`.
    fn branch(&self, x: T, slope: T) -> T {
        x.powf(self.alpha) / self.alpha - slope * x
    }

    /// `sup_{x ∈ [0,1]} |x^α/α − s·x|` for a concave branch.
    fn branch_sup(&self, slope: T) -> T {
        let peak_x = slope.powf(-(T::one() - self.alpha).recip());
        let peak = self.branch(peak_x.min(T::one()), slope);
        let end = self.branch(T::one(), slope);
        peak.abs().max(end.abs())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct LowRank<T> {
    left: Vec<Vec<T>>,
    right: Vec<Vec<T>>,
}

/// Tabulated interaction kernel `f(x_j, x_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityKernel<T> {
    table: Array2<T>,
    bound: T,
    symmetric: bool,
    label: String,
    factors: Option<LowRank<T>>,
}

impl<T: Scalar> UtilityKernel<T> {
    /// Wraps a square table. `bound` must dominate every entry; `None` uses the table maximum.
    pub fn from_table(
        table: Array2<T>,
        bound: Option<T>,
        label: impl Into<String>,
    ) -> Result<Self> {
        if table.nrows() != table.ncols() {
            return Err(Error::DimensionMismatch {
                expected: table.nrows(),
                actual: table.ncols(),
            });
        }
        let scan = table_sup(&table);
        let bound = match bound {
            Some(b) if b >= scan => b,
            Some(b) => {
                return Err(Error::InvalidParameter(format!(
                    "kernel bound {b} is below the table maximum {scan}"
                )))
            }
            None => scan,
        };
        let symmetric = is_symmetric(&table);
        Ok(Self {
            table: table.as_standard_layout().to_owned(),
            bound,
            symmetric,
            label: label.into(),
            factors: None,
        })
    }

    pub fn from_fn(grid: &GridSpec<T>, label: impl Into<String>, f: impl Fn(T, T) -> T) -> Self {
        let x = grid.nodes();
        let table = Array2::from_shape_fn((x.len(), x.len()), |(j, k)| f(x[j], x[k]));
        Self::from_table(table, None, label).expect("square table with scanned bound")
    }

    pub fn zero(grid: &GridSpec<T>) -> Self {
        let n = grid.cells();
        Self {
            table: Array2::zeros((n, n)),
            bound: T::zero(),
            symmetric: true,
            label: "zero".into(),
            factors: Some(LowRank {
                left: Vec::new(),
                right: Vec::new(),
            }),
        }
    }

    /// `∓(x − y)²`; the bound is the supremum over the continuous square, 1.
    pub fn potential(sign: PotentialSign, grid: &GridSpec<T>) -> Self {
        let x = grid.nodes();
        let n = x.len();
        let s = match sign {
            PotentialSign::Concave => -T::one(),
            PotentialSign::Convex => T::one(),
        };
        let table = Array2::from_shape_fn((n, n), |(j, k)| {
            let d = x[j] - x[k];
            s * d * d
        });
        // s(x² − 2xy + y²)
        let ones = vec![T::one(); n];
        let sq: Vec<T> = x.iter().map(|&v| v * v).collect();
        let left = vec![
            sq.iter().map(|&v| s * v).collect(),
            x.iter().map(|&v| T::lit(-2.0) * s * v).collect(),
            vec![s; n],
        ];
        let right = vec![ones, x.to_vec(), sq];
        let label = match sign {
            PotentialSign::Concave => "potential_concave",
            PotentialSign::Convex => "potential_convex",
        };
        Self {
            table,
            bound: T::one(),
            symmetric: true,
            label: label.into(),
            factors: Some(LowRank { left, right }),
        }
    }

    /// `f(x, y) = x^α/α − σx − σw·x·𝟙[y ≥ X̄]`, so that the form-(4) utility is the
    /// energy-management utility exactly.
    pub fn energy(params: &EnergyParams<T>, grid: &GridSpec<T>) -> Result<Self> {
        params.validate()?;
        let x = grid.nodes();
        let n = x.len();
        let base: Vec<T> = x.iter().map(|&v| params.branch(v, params.sigma)).collect();
        let penalty: Vec<T> = x.iter().map(|&v| -params.sigma * params.w * v).collect();
        let active: Vec<T> = x
            .iter()
            .map(|&v| {
                if v >= params.x_bar {
                    T::one()
                } else {
                    T::zero()
                }
            })
            .collect();
        let table = Array2::from_shape_fn((n, n), |(j, k)| base[j] + penalty[j] * active[k]);
        let bound = params
            .branch_sup(params.sigma)
            .max(params.branch_sup(params.sigma * (T::one() + params.w)))
            .max(table_sup(&table));
        let symmetric = is_symmetric(&table);
        Ok(Self {
            table,
            bound,
            symmetric,
            label: "energy".into(),
            factors: Some(LowRank {
                left: vec![base, penalty],
                right: vec![vec![T::one(); n], active],
            }),
        })
    }

    /// Kernel `f + c`.
    pub fn with_offset(&self, c: T) -> Self {
        let factors = self.factors.as_ref().map(|lr| {
            let n = self.size();
            let mut lr = lr.clone();
            lr.left.push(vec![c; n]);
            lr.right.push(vec![T::one(); n]);
            lr
        });
        Self {
            table: self.table.mapv(|v| v + c),
            bound: self.bound + c.abs(),
            symmetric: self.symmetric,
            label: format!("{}+{c}", self.label),
            factors,
        }
    }

    /// Same kernel without the low-rank shortcut; utilities come from the full table.
    pub fn tabulated_only(&self) -> Self {
        Self {
            factors: None,
            ..self.clone()
        }
    }

    pub fn table(&self) -> &Array2<T> {
        &self.table
    }

    pub fn size(&self) -> usize {
        self.table.nrows()
    }

    /// `K`, an upper bound of `|f|`.
    pub fn bound(&self) -> T {
        self.bound
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `U_j = Δx Σ_k f(x_j, x_k) p_k` written into `out`.
    pub fn utility_into(&self, p: &[T], dx: T, out: &mut [T]) -> Result<()> {
        let n = self.size();
        for len in [p.len(), out.len()] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: len,
                });
            }
        }
        match &self.factors {
            Some(lr) => {
                out.iter_mut().for_each(|o| *o = T::zero());
                for (a, b) in lr.left.iter().zip(&lr.right) {
                    let moment = dx * b.iter().zip(p).map(|(&bk, &pk)| bk * pk).sum::<T>();
                    for (o, &aj) in out.iter_mut().zip(a) {
                        *o = *o + aj * moment;
                    }
                }
            }
            None => {
                for (o, row) in out.iter_mut().zip(self.table.rows()) {
                    let row = row.to_slice().expect("row-major table");
                    *o = dx * row.iter().zip(p).map(|(&f, &pk)| f * pk).sum::<T>();
                }
            }
        }
        Ok(())
    }

    pub fn utility(&self, p: &[T], grid: &GridSpec<T>) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.size()];
        grid.check_len(self.size())?;
        self.utility_into(p, grid.dx(), &mut out)?;
        Ok(out)
    }
}

fn table_sup<T: Scalar>(table: &Array2<T>) -> T {
    table.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()))
}

fn is_symmetric<T: Scalar>(table: &Array2<T>) -> bool {
    let n = table.nrows();
    (0..n).all(|j| (j + 1..n).all(|k| table[[j, k]] == table[[k, j]]))
}

pub fn kernel_utility<T: Scalar>(
    kernel: &UtilityKernel<T>,
    p: &[T],
    grid: &GridSpec<T>,
) -> Result<Vec<T>> {
    kernel.utility(p, grid)
}

pub fn make_potential_kernel<T: Scalar>(
    sign: PotentialSign,
    grid: &GridSpec<T>,
) -> UtilityKernel<T> {
    UtilityKernel::potential(sign, grid)
}

pub fn make_energy_kernel<T: Scalar>(
    params: &EnergyParams<T>,
    grid: &GridSpec<T>,
) -> Result<UtilityKernel<T>> {
    UtilityKernel::energy(params, grid)
}

/// `max_{j,k} |f(x_j, x_k)|` over the tabulated grid.
pub fn utility_bound<T: Scalar>(kernel: &UtilityKernel<T>) -> T {
    table_sup(kernel.table())
}

/// `Ū = Δx Σ_j U_j p_j`.
pub fn average_utility<T: Scalar>(u: &[T], p: &[T], grid: &GridSpec<T>) -> Result<T> {
    grid.check_len(u.len())?;
    grid.check_len(p.len())?;
    Ok(grid.dx() * u.iter().zip(p).map(|(&a, &b)| a * b).sum::<T>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquilibriumRegime {
    /// `X̄ ≤ X̄₂`: the density penalty is active at the pure equilibrium.
    BelowX2,
    /// `X̄₂ < X̄ < X̄₁`: no pure-strategy maximizer.
    Between,
    /// `X̄ ≥ X̄₁`: the unpenalized optimum lies below the threshold.
    AboveX1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateKind {
    /// `X̄₂`, evaluated with the density penalty switched on.
    PenalizedPeak,
    /// `X̄₁`, evaluated without the penalty.
    UnpenalizedPeak,
    /// `X̄`, limit from below (supremum at the discontinuity).
    ThresholdSupremum,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumCandidate<T> {
    pub kind: CandidateKind,
    pub x: T,
    pub utility: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumReport<T> {
    pub x_bar_1: T,
    pub x_bar_2: T,
    pub regime: EquilibriumRegime,
    pub candidates: Vec<EquilibriumCandidate<T>>,
}

/// Pure-strategy analysis of the energy utility. Each stationary point is evaluated on the
/// branch of the pure-strategy utility where it is stationary.
pub fn energy_equilibrium_report<T: Scalar>(
    params: &EnergyParams<T>,
) -> Result<EquilibriumReport<T>> {
    params.validate()?;
    let exponent = -(T::one() - params.alpha).recip();
    let penalized = params.sigma * (T::one() + params.w);
    let x_bar_1 = params.sigma.powf(exponent);
    let x_bar_2 = penalized.powf(exponent);
    let regime = if params.x_bar <= x_bar_2 {
        EquilibriumRegime::BelowX2
    } else if params.x_bar >= x_bar_1 {
        EquilibriumRegime::AboveX1
    } else {
        EquilibriumRegime::Between
    };
    let candidates = vec![
        EquilibriumCandidate {
            kind: CandidateKind::PenalizedPeak,
            x: x_bar_2,
            utility: params.branch(x_bar_2, penalized),
        },
        EquilibriumCandidate {
            kind: CandidateKind::UnpenalizedPeak,
            x: x_bar_1,
            utility: params.branch(x_bar_1, params.sigma),
        },
        EquilibriumCandidate {
            kind: CandidateKind::ThresholdSupremum,
            x: params.x_bar,
            utility: params.branch(params.x_bar, params.sigma),
        },
    ];
    Ok(EquilibriumReport {
        x_bar_1,
        x_bar_2,
        regime,
        candidates,
    })
}
