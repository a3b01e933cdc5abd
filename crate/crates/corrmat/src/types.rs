//! Domain types shared by all modules.
//!
//! All types are plain immutable values; constructors enforce the invariants
//! and every cross-type operation checks zone-count compatibility. Matrices
//! are dense — the target problems have a few dozen zones, where dense is
//! both simplest and fastest.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance on `sum(l) = sum(w) = 1` for normalized marginals.
pub const MARGINAL_SUM_TOL: f64 = 1e-12;
/// Tolerance on `sum(d) = 1` for a normalized correspondence matrix.
pub const NORMALIZED_SUM_TOL: f64 = 1e-9;
/// Relative tolerance on `sum(d) = N` for a count-scale correspondence matrix.
pub const COUNTS_SUM_RELTOL: f64 = 1e-6;

fn check_finite(name: &'static str, values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(name));
    }
    Ok(())
}

fn check_nonnegative(name: &'static str, values: &[f64]) -> Result<()> {
    check_finite(name, values)?;
    if values.iter().any(|&v| v < 0.0) {
        return Err(Error::Negative(name));
    }
    Ok(())
}

/// Normalized departure and arrival shares over `n` zones.
///
/// `origin[i]` is the fraction of all commuters departing from zone `i`,
/// `dest[j]` the fraction arriving in zone `j`; both vectors sum to one.
/// The count-scale population behind the shares is kept so matrices can be
/// converted back to commuter counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    origin: Array1<f64>,
    dest: Array1<f64>,
    total: f64,
}

impl Marginals {
    /// Build marginals from raw departure and arrival counts.
    ///
    /// The totals must match exactly: the survey describes one closed
    /// population, so a mismatch is a data bug and is reported instead of
    /// being silently rescaled.
    pub fn from_counts(departures: &[f64], arrivals: &[f64]) -> Result<Self> {
        if departures.len() != arrivals.len() {
            return Err(Error::LengthMismatch(departures.len(), arrivals.len()));
        }
        if departures.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 zones, got {}",
                departures.len()
            )));
        }
        check_nonnegative("departure counts", departures)?;
        check_nonnegative("arrival counts", arrivals)?;
        let dep_total: f64 = departures.iter().sum();
        let arr_total: f64 = arrivals.iter().sum();
        if dep_total != arr_total {
            return Err(Error::TotalsMismatch {
                departures: dep_total,
                arrivals: arr_total,
            });
        }
        if dep_total == 0.0 {
            return Err(Error::AllZero);
        }
        let origin = Array1::from_iter(departures.iter().map(|&v| v / dep_total));
        let dest = Array1::from_iter(arrivals.iter().map(|&v| v / arr_total));
        Ok(Self {
            origin,
            dest,
            total: dep_total,
        })
    }

    /// Build marginals from already-normalized shares.
    ///
    /// Both vectors must sum to one within [`MARGINAL_SUM_TOL`]; `total` is
    /// the population the shares refer to.
    pub fn from_shares(origin: Array1<f64>, dest: Array1<f64>, total: f64) -> Result<Self> {
        if origin.len() != dest.len() {
            return Err(Error::LengthMismatch(origin.len(), dest.len()));
        }
        if origin.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 zones, got {}",
                origin.len()
            )));
        }
        check_nonnegative("origin shares", origin.as_slice().unwrap())?;
        check_nonnegative("dest shares", dest.as_slice().unwrap())?;
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "total population must be positive, got {total}"
            )));
        }
        for (name, v) in [("origin", &origin), ("dest", &dest)] {
            let sum: f64 = v.sum();
            if (sum - 1.0).abs() > MARGINAL_SUM_TOL {
                return Err(Error::InvalidParameter(format!(
                    "{name} shares sum to {sum}, expected 1"
                )));
            }
        }
        Ok(Self {
            origin,
            dest,
            total,
        })
    }

    pub fn n(&self) -> usize {
        self.origin.len()
    }

    /// Departure share per origin zone.
    pub fn origin(&self) -> ArrayView1<'_, f64> {
        self.origin.view()
    }

    /// Arrival share per destination zone.
    pub fn dest(&self) -> ArrayView1<'_, f64> {
        self.dest.view()
    }

    /// Count-scale population behind the shares.
    pub fn total(&self) -> f64 {
        self.total
    }

    /// True when some zone has no departures or no arrivals.
    pub fn has_zero_entry(&self) -> bool {
        self.origin.iter().chain(self.dest.iter()).any(|&v| v == 0.0)
    }
}

/// Generalized n-by-n travel cost produced by a cost family.
///
/// Entries must be finite. Power-log families can legitimately produce
/// negative entries for large `beta`; the entropy model is invariant under
/// adding a constant to every entry, so negative costs are handled exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    values: Array2<f64>,
}

impl CostMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (rows, cols) = values.dim();
        if rows != cols {
            return Err(Error::DimensionMismatch(rows, cols));
        }
        if rows < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 zones, got {rows}"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("cost matrix"));
        }
        Ok(Self { values })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    /// The same costs with `shift` added to every entry.
    pub fn shifted(&self, shift: f64) -> Result<Self> {
        Self::new(&self.values + shift)
    }
}

/// Whether a correspondence matrix holds population fractions or commuter
/// counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Normalized,
    Counts,
}

/// Nonnegative n-by-n correspondence matrix.
///
/// Entry `(i, j)` is the share (normalized scale) or the number (count
/// scale) of commuters living in zone `i` and working in zone `j`. `total`
/// is the population used to convert between the two scales.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceMatrix {
    values: Array2<f64>,
    scale: Scale,
    total: f64,
}

impl CorrespondenceMatrix {
    /// Wrap a normalized matrix (entries sum to one within
    /// [`NORMALIZED_SUM_TOL`]). `total` records the population it refers to.
    pub fn normalized(values: Array2<f64>, total: f64) -> Result<Self> {
        Self::build(values, Scale::Normalized, total)
    }

    /// Wrap a count-scale matrix (entries sum to `total` within
    /// [`COUNTS_SUM_RELTOL`] relative).
    pub fn counts(values: Array2<f64>, total: f64) -> Result<Self> {
        Self::build(values, Scale::Counts, total)
    }

    fn build(values: Array2<f64>, scale: Scale, total: f64) -> Result<Self> {
        let (rows, cols) = values.dim();
        if rows != cols {
            return Err(Error::DimensionMismatch(rows, cols));
        }
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "total population must be positive, got {total}"
            )));
        }
        check_nonnegative("correspondence matrix", values.as_slice().unwrap())?;
        let sum = values.sum();
        let (expected, tol) = match scale {
            Scale::Normalized => (1.0, NORMALIZED_SUM_TOL),
            Scale::Counts => (total, COUNTS_SUM_RELTOL * total),
        };
        if (sum - expected).abs() > tol {
            return Err(Error::BadTotal {
                sum,
                expected,
                scale,
            });
        }
        Ok(Self {
            values,
            scale,
            total,
        })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn row_sums(&self) -> Array1<f64> {
        self.values.sum_axis(Axis(1))
    }

    pub fn col_sums(&self) -> Array1<f64> {
        self.values.sum_axis(Axis(0))
    }

    /// Convert a normalized matrix to commuter counts for a population of
    /// `total` persons.
    pub fn to_counts(&self, total: f64) -> Result<Self> {
        if self.scale != Scale::Normalized {
            return Err(Error::ScaleMismatch {
                expected: Scale::Normalized,
                got: self.scale,
            });
        }
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "total population must be positive, got {total}"
            )));
        }
        Self::build(&self.values * total, Scale::Counts, total)
    }

    /// Convert a count-scale matrix back to fractions of its population.
    pub fn to_normalized(&self) -> Result<Self> {
        if self.scale != Scale::Counts {
            return Err(Error::ScaleMismatch {
                expected: Scale::Counts,
                got: self.scale,
            });
        }
        Self::build(&self.values / self.total, Scale::Normalized, self.total)
    }
}

/// The two blocks of dual variables: one multiplier per origin-zone
/// constraint and one per destination-zone constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPotentials {
    pub origin: Array1<f64>,
    pub dest: Array1<f64>,
}

impl DualPotentials {
    pub fn new(origin: Array1<f64>, dest: Array1<f64>) -> Result<Self> {
        if origin.len() != dest.len() {
            return Err(Error::LengthMismatch(origin.len(), dest.len()));
        }
        check_finite("origin potentials", origin.as_slice().unwrap())?;
        check_finite("dest potentials", dest.as_slice().unwrap())?;
        Ok(Self { origin, dest })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            origin: Array1::zeros(n),
            dest: Array1::zeros(n),
        }
    }

    pub fn n(&self) -> usize {
        self.origin.len()
    }
}

/// Solver tolerances and iteration limits.
///
/// `gap_tol` bounds the absolute duality gap `|f(d) + phi(lambda)|`,
/// `marginal_tol` the Euclidean norm of each marginal violation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub gap_tol: f64,
    pub marginal_tol: f64,
    pub max_iters: usize,
    /// Initial Lipschitz estimate for the accelerated solver.
    pub initial_lipschitz: f64,
}

impl SolverConfig {
    /// Defaults for the plain alternating solver.
    pub fn sinkhorn() -> Self {
        Self {
            gap_tol: 1e-8,
            marginal_tol: 1e-8,
            max_iters: 100_000,
            initial_lipschitz: 1.0,
        }
    }

    /// Defaults for the accelerated solver.
    pub fn accelerated() -> Self {
        Self {
            max_iters: 10_000,
            ..Self::sinkhorn()
        }
    }

    pub fn with_tolerances(mut self, gap_tol: f64, marginal_tol: f64) -> Self {
        self.gap_tol = gap_tol;
        self.marginal_tol = marginal_tol;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gap_tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "gap_tol must be positive, got {}",
                self.gap_tol
            )));
        }
        if !(self.marginal_tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "marginal_tol must be positive, got {}",
                self.marginal_tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.initial_lipschitz > 0.0) || !self.initial_lipschitz.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "initial_lipschitz must be positive and finite, got {}",
                self.initial_lipschitz
            )));
        }
        Ok(())
    }
}

/// Convergence summary returned by both solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// Dual objective per iteration, starting with the value at zero
    /// potentials.
    pub objective_trace: Vec<f64>,
    pub final_gap: f64,
    /// Euclidean norm of `row_sums(d) - origin shares`.
    pub row_violation: f64,
    /// Euclidean norm of `col_sums(d) - dest shares`.
    pub col_violation: f64,
    pub converged: bool,
}
