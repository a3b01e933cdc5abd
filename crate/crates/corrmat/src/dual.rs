//! Dual objective, gradient, and the dual-to-primal map for the entropy
//! model, all in log domain.
//!
//! The kernel is `B[i][j] = exp(-T[i][j] + origin[i] + dest[j])` and the
//! primal matrix is its softmax, `d = B / sum(B)`. The dual objective to
//! minimize is `phi = ln(sum(B)) - <origin, l> - <dest, w>`. Every quantity
//! is computed from the log-kernel with max-shifted log-sum-exp, so cost
//! magnitudes in the thousands neither overflow nor flush the kernel to
//! zero.

use ndarray::{Array1, Array2, Axis};

use crate::types::{CorrespondenceMatrix, CostMatrix, DualPotentials, Marginals};
use crate::{Error, Result};

/// Max-shifted log of `sum(exp(values))`.
///
/// Empty input yields negative infinity.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = values
        .clone()
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.into_iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Log-domain kernel for one `(costs, potentials)` pair.
///
/// Holds `log_weights[i][j] = -T[i][j] + origin[i] + dest[j]` together with
/// its total log-sum-exp; row/column log-sums and the primal matrix all
/// derive from it without leaving log domain.
#[derive(Debug, Clone)]
pub struct LogKernel {
    log_weights: Array2<f64>,
    log_total: f64,
}

impl LogKernel {
    pub fn new(costs: &CostMatrix, potentials: &DualPotentials) -> Result<Self> {
        let n = costs.n();
        if potentials.n() != n {
            return Err(Error::DimensionMismatch(n, potentials.n()));
        }
        let mut log_weights = Array2::zeros((n, n));
        for i in 0..n {
            let oi = potentials.origin[i];
            for j in 0..n {
                log_weights[[i, j]] = -costs.values()[[i, j]] + oi + potentials.dest[j];
            }
        }
        let log_total = log_sum_exp(log_weights.iter().copied());
        Ok(Self {
            log_weights,
            log_total,
        })
    }

    pub fn n(&self) -> usize {
        self.log_weights.nrows()
    }

    /// `ln(sum(B))`.
    pub fn log_total(&self) -> f64 {
        self.log_total
    }

    /// `ln(B 1)` per row.
    pub fn row_log_sums(&self) -> Array1<f64> {
        self.log_weights
            .axis_iter(Axis(0))
            .map(|row| log_sum_exp(row.iter().copied()))
            .collect()
    }

    /// `ln(B^T 1)` per column.
    pub fn col_log_sums(&self) -> Array1<f64> {
        self.log_weights
            .axis_iter(Axis(1))
            .map(|col| log_sum_exp(col.iter().copied()))
            .collect()
    }

    /// The softmax matrix `d = B / sum(B)`; strictly positive, sums to one.
    pub fn primal(&self) -> Array2<f64> {
        self.log_weights.mapv(|m| (m - self.log_total).exp())
    }

    /// Row sums of the primal matrix, computed as `exp(row_lse - total_lse)`.
    pub fn primal_row_sums(&self) -> Array1<f64> {
        self.row_log_sums().mapv(|r| (r - self.log_total).exp())
    }

    /// Column sums of the primal matrix.
    pub fn primal_col_sums(&self) -> Array1<f64> {
        self.col_log_sums().mapv(|c| (c - self.log_total).exp())
    }

    /// Dual objective at the kernel's potentials.
    pub fn objective(&self, potentials: &DualPotentials, marginals: &Marginals) -> f64 {
        self.log_total
            - potentials.origin.dot(&marginals.origin())
            - potentials.dest.dot(&marginals.dest())
    }

    /// Dual gradient blocks: `(row_sums(d) - l, col_sums(d) - w)`.
    pub fn gradient(&self, marginals: &Marginals) -> (Array1<f64>, Array1<f64>) {
        (
            self.primal_row_sums() - marginals.origin(),
            self.primal_col_sums() - marginals.dest(),
        )
    }
}

/// Softmax primal matrix for the given costs and potentials.
///
/// The result is normalized, strictly positive, and invariant under adding
/// a constant to either potential block.
pub fn primal_from_duals(
    costs: &CostMatrix,
    potentials: &DualPotentials,
) -> Result<CorrespondenceMatrix> {
    let kernel = LogKernel::new(costs, potentials)?;
    CorrespondenceMatrix::normalized(kernel.primal(), 1.0)
}

/// Dual objective `phi = ln(sum(B)) - <origin, l> - <dest, w>`.
pub fn dual_objective(
    costs: &CostMatrix,
    potentials: &DualPotentials,
    marginals: &Marginals,
) -> Result<f64> {
    check_marginal_dims(costs, marginals)?;
    let kernel = LogKernel::new(costs, potentials)?;
    Ok(kernel.objective(potentials, marginals))
}

/// Dual gradient `(-l + row_sums(d), -w + col_sums(d))`.
pub fn dual_gradient(
    costs: &CostMatrix,
    potentials: &DualPotentials,
    marginals: &Marginals,
) -> Result<(Array1<f64>, Array1<f64>)> {
    check_marginal_dims(costs, marginals)?;
    let kernel = LogKernel::new(costs, potentials)?;
    Ok(kernel.gradient(marginals))
}

/// Primal objective `f(d) = sum(d * T) + sum(d * ln d)` with `0 ln 0 = 0`.
///
/// `d` must be at normalized scale.
pub fn primal_objective(matrix: &CorrespondenceMatrix, costs: &CostMatrix) -> Result<f64> {
    if matrix.scale() != crate::types::Scale::Normalized {
        return Err(Error::ScaleMismatch {
            expected: crate::types::Scale::Normalized,
            got: matrix.scale(),
        });
    }
    if matrix.n() != costs.n() {
        return Err(Error::DimensionMismatch(matrix.n(), costs.n()));
    }
    Ok(entropy_cost_objective(
        matrix.values().iter().copied(),
        costs.values().iter().copied(),
    ))
}

/// Raw-array form of the primal objective, used internally on matrices that
/// are only approximately normalized (running averages, rounded iterates).
pub(crate) fn entropy_cost_objective(
    entries: impl Iterator<Item = f64>,
    costs: impl Iterator<Item = f64>,
) -> f64 {
    entries
        .zip(costs)
        .map(|(d, t)| if d > 0.0 { d * t + d * d.ln() } else { 0.0 })
        .sum()
}

fn check_marginal_dims(costs: &CostMatrix, marginals: &Marginals) -> Result<()> {
    if costs.n() != marginals.n() {
        return Err(Error::DimensionMismatch(costs.n(), marginals.n()));
    }
    Ok(())
}
