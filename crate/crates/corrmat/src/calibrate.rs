//! Residual metric and parameter-search drivers.
//!
//! Calibration minimizes the squared deviation between the observed
//! correspondence matrix and the matrix restored by the entropy model at a
//! candidate parameter vector. The residual landscape is nonconvex, so the
//! drivers are gradient-free: exhaustive grid search (the workhorse),
//! simulated annealing, the Piyavskii broken-line method for one-parameter
//! sweeps, and random multistart with lattice coordinate descent.
//!
//! Grid points are independent, so [`evaluate_grid`] fans them out across a
//! rayon pool when the `parallel` feature (default) is on;
//! [`evaluate_grid_serial`] is the fallback and is always available. Both
//! return evaluations in grid order, so results are identical.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::costs::{AxisSpec, CostFamily, Eta, FamilyKind, GridSpec};
use crate::data::Problem;
use crate::solvers::sinkhorn_solve;
use crate::types::{CorrespondenceMatrix, Scale, SolverConfig};
use crate::{Error, Result};

/// Evaluation cap for [`piyavskii_minimize`].
pub const PIYAVSKII_MAX_EVALS: usize = 10_000;

/// Squared deviation between two count-scale correspondence matrices,
/// divided by `n^2` when `normalized` is set.
pub fn residual(
    observed: &CorrespondenceMatrix,
    restored: &CorrespondenceMatrix,
    normalized: bool,
) -> Result<f64> {
    for m in [observed, restored] {
        if m.scale() != Scale::Counts {
            return Err(Error::ScaleMismatch {
                expected: Scale::Counts,
                got: m.scale(),
            });
        }
    }
    if observed.n() != restored.n() {
        return Err(Error::DimensionMismatch(observed.n(), restored.n()));
    }
    let sum: f64 = observed
        .values()
        .iter()
        .zip(restored.values().iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let n = observed.n() as f64;
    Ok(if normalized { sum / (n * n) } else { sum })
}

/// One calibration evaluation: a parameter vector and the residual it
/// achieved, or `None` when the solver did not converge there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub eta: Eta,
    pub residual: Option<f64>,
    pub converged: bool,
}

/// Outcome of a calibration run.
///
/// `best_eta` is the first point (in evaluation order) attaining the
/// minimum residual among converged evaluations; for grid search the
/// evaluation order is the lexicographic grid order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub family: FamilyKind,
    pub best_eta: Eta,
    pub best_residual: f64,
    pub evaluations: Vec<Evaluation>,
    pub gap_tol: f64,
    pub marginal_tol: f64,
    /// Whether residuals are divided by `n^2`.
    pub normalized: bool,
    /// Zone count of the calibrated problem.
    pub zones: usize,
}

impl CalibrationResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("calibration result serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::BadBundle(e.to_string()))
    }

    /// Plot-ready sweep curve: one `(eta, residual)` row per evaluation.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("alpha,beta,gamma,residual,converged\n");
        for ev in &self.evaluations {
            let residual = ev
                .residual
                .map(|r| r.to_string())
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                ev.eta.alpha, ev.eta.beta, ev.eta.gamma, residual, ev.converged
            ));
        }
        out
    }
}

fn evaluate_point(
    kind: FamilyKind,
    eta: Eta,
    problem: &Problem,
    cfg: &SolverConfig,
    normalized: bool,
) -> Result<Evaluation> {
    let family = CostFamily::new(kind, eta)?;
    let costs = family.evaluate(&problem.time, &problem.dist)?;
    let (matrix, _, report) = sinkhorn_solve(&costs, &problem.marginals, cfg)?;
    if !report.converged {
        return Ok(Evaluation {
            eta,
            residual: None,
            converged: false,
        });
    }
    let counts = matrix.to_counts(problem.marginals.total())?;
    let value = residual(&problem.observed, &counts, normalized)?;
    Ok(Evaluation {
        eta,
        residual: Some(value),
        converged: true,
    })
}

/// Evaluate every grid point sequentially, in grid order.
pub fn evaluate_grid_serial(
    kind: FamilyKind,
    points: &[Eta],
    problem: &Problem,
    cfg: &SolverConfig,
    normalized: bool,
) -> Result<Vec<Evaluation>> {
    points
        .iter()
        .map(|&eta| evaluate_point(kind, eta, problem, cfg, normalized))
        .collect()
}

/// Evaluate every grid point, in parallel when the `parallel` feature is
/// enabled. Results are ordered by grid index regardless of completion
/// order, so the outcome is identical to the serial path.
#[cfg(feature = "parallel")]
pub fn evaluate_grid(
    kind: FamilyKind,
    points: &[Eta],
    problem: &Problem,
    cfg: &SolverConfig,
    normalized: bool,
) -> Result<Vec<Evaluation>> {
    use rayon::prelude::*;
    points
        .par_iter()
        .map(|&eta| evaluate_point(kind, eta, problem, cfg, normalized))
        .collect()
}

#[cfg(not(feature = "parallel"))]
pub fn evaluate_grid(
    kind: FamilyKind,
    points: &[Eta],
    problem: &Problem,
    cfg: &SolverConfig,
    normalized: bool,
) -> Result<Vec<Evaluation>> {
    evaluate_grid_serial(kind, points, problem, cfg, normalized)
}

/// Exhaustive sweep: evaluate the family at every grid point and keep the
/// best converged residual.
///
/// Non-converged solves poison a single grid point, not the sweep; they are
/// recorded with `converged = false` and excluded from the argmin. Ties go
/// to the lexicographically first parameter vector.
pub fn grid_search(
    kind: FamilyKind,
    spec: &GridSpec,
    problem: &Problem,
    cfg: &SolverConfig,
    normalized: bool,
) -> Result<CalibrationResult> {
    cfg.validate()?;
    spec.validate_for(kind)?;
    let points = spec.points()?;
    if points.is_empty() {
        return Err(Error::InvalidGrid("empty grid".into()));
    }
    let evaluations = evaluate_grid(kind, &points, problem, cfg, normalized)?;
    let mut best: Option<(Eta, f64)> = None;
    for ev in &evaluations {
        if let Some(r) = ev.residual {
            if best.map_or(true, |(_, b)| r < b) {
                best = Some((ev.eta, r));
            }
        }
    }
    let (best_eta, best_residual) = best.ok_or(Error::NoConvergedPoint)?;
    Ok(CalibrationResult {
        family: kind,
        best_eta,
        best_residual,
        evaluations,
        gap_tol: cfg.gap_tol,
        marginal_tol: cfg.marginal_tol,
        normalized,
        zones: problem.marginals.n(),
    })
}

/// Cooling schedule and proposal parameters for simulated annealing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealingSchedule {
    pub initial_temp: f64,
    /// Multiplicative cooling factor in (0, 1) applied between levels.
    pub cooling: f64,
    pub temp_levels: usize,
    pub steps_per_temp: usize,
    /// Half-width of the uniform proposal box.
    pub step_size: f64,
    pub seed: u64,
}

impl AnnealingSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_temp > 0.0) || !self.initial_temp.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "initial temperature must be positive, got {}",
                self.initial_temp
            )));
        }
        if !(self.cooling > 0.0 && self.cooling < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "cooling factor must lie in (0, 1), got {}",
                self.cooling
            )));
        }
        if self.temp_levels == 0 || self.steps_per_temp == 0 {
            return Err(Error::InvalidConfig(
                "temp_levels and steps_per_temp must be at least 1".into(),
            ));
        }
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "step size must be positive, got {}",
                self.step_size
            )));
        }
        Ok(())
    }
}

/// Metropolis acceptance rule: downhill moves always pass, uphill moves
/// pass when `unit_draw < exp(-delta / temp)`.
pub fn metropolis_accept(delta: f64, temp: f64, unit_draw: f64) -> bool {
    if delta <= 0.0 {
        return true;
    }
    if temp <= 0.0 {
        return false;
    }
    unit_draw < (-delta / temp).exp()
}

fn reflect_into(mut value: f64, lo: f64, hi: f64) -> f64 {
    loop {
        if value < lo {
            value = 2.0 * lo - value;
        } else if value > hi {
            value = 2.0 * hi - value;
        } else {
            return value;
        }
    }
}

/// Simulated annealing over a box.
///
/// Proposals are uniform steps in a box of half-width `step_size`,
/// reflected at the bounds. Returns the best point seen over the whole
/// trajectory, not merely the final state; deterministic for a fixed seed.
pub fn simulated_annealing(
    objective: impl Fn(&[f64]) -> f64,
    start: &[f64],
    schedule: &AnnealingSchedule,
    bounds: &[(f64, f64)],
) -> Result<(Vec<f64>, f64)> {
    schedule.validate()?;
    if start.len() != bounds.len() {
        return Err(Error::LengthMismatch(start.len(), bounds.len()));
    }
    if bounds.is_empty() {
        return Err(Error::InvalidParameter("empty bounds".into()));
    }
    for &(lo, hi) in bounds {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "degenerate bound [{lo}, {hi}]"
            )));
        }
    }
    for (v, &(lo, hi)) in start.iter().zip(bounds) {
        if !(lo..=hi).contains(v) {
            return Err(Error::InvalidParameter(format!(
                "start {v} outside [{lo}, {hi}]"
            )));
        }
    }
    let eval = |point: &[f64]| -> Result<f64> {
        let value = objective(point);
        if !value.is_finite() {
            return Err(Error::NonFiniteObjective {
                point: point.to_vec(),
            });
        }
        Ok(value)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut current = start.to_vec();
    let mut current_value = eval(&current)?;
    let mut best = current.clone();
    let mut best_value = current_value;
    let mut temp = schedule.initial_temp;

    for _ in 0..schedule.temp_levels {
        for _ in 0..schedule.steps_per_temp {
            let proposal: Vec<f64> = current
                .iter()
                .zip(bounds)
                .map(|(&v, &(lo, hi))| {
                    let step = schedule.step_size * (2.0 * rng.gen::<f64>() - 1.0);
                    reflect_into(v + step, lo, hi)
                })
                .collect();
            let value = eval(&proposal)?;
            if value < best_value {
                best = proposal.clone();
                best_value = value;
            }
            let draw: f64 = rng.gen();
            if metropolis_accept(value - current_value, temp, draw) {
                current = proposal;
                current_value = value;
            }
        }
        temp *= schedule.cooling;
    }
    Ok((best, best_value))
}

/// Piyavskii broken-line minimization of an L-Lipschitz scalar function on
/// `[a, b]`.
///
/// Maintains the piecewise-linear lower envelope `max_i f(x_i) - L|x - x_i|`
/// and repeatedly evaluates at the envelope minimizer (ties broken toward
/// the smallest abscissa), starting from the interval midpoint. Terminates
/// when the best value is within `tol` of the envelope minimum, which
/// bounds the true optimality gap when `L` is a valid Lipschitz constant.
pub fn piyavskii_minimize(
    objective: impl Fn(f64) -> f64,
    interval: (f64, f64),
    lipschitz: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    let (a, b) = interval;
    if !a.is_finite() || !b.is_finite() || !(a < b) {
        return Err(Error::InvalidParameter(format!(
            "invalid interval [{a}, {b}]"
        )));
    }
    if !(lipschitz > 0.0) || !lipschitz.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "Lipschitz constant must be positive, got {lipschitz}"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let eval = |x: f64| -> Result<f64> {
        let value = objective(x);
        if !value.is_finite() {
            return Err(Error::NonFiniteObjective { point: vec![x] });
        }
        Ok(value)
    };

    // evaluated points sorted by abscissa
    let mid = (a + b) / 2.0;
    let mut points: Vec<(f64, f64)> = vec![(mid, eval(mid)?)];
    let mut best = points[0];
    let mut evals = 1usize;

    loop {
        // envelope minimum candidates: both endpoints (nearest cone
        // dominates there) and one intersection per adjacent pair; scanned
        // in ascending abscissa so ties resolve to the smallest
        let first = points.first().unwrap();
        let last = points.last().unwrap();
        let mut candidate = (a, first.1 - lipschitz * (first.0 - a));
        let mut consider = |x: f64, env: f64| {
            if env < candidate.1 {
                candidate = (x, env);
            }
        };
        for pair in points.windows(2) {
            let (xi, fi) = pair[0];
            let (xj, fj) = pair[1];
            let x = ((xi + xj) / 2.0 + (fi - fj) / (2.0 * lipschitz)).clamp(xi, xj);
            let env = (fi + fj) / 2.0 - lipschitz * (xj - xi) / 2.0;
            consider(x, env);
        }
        consider(b, last.1 - lipschitz * (b - last.0));

        if best.1 - candidate.1 <= tol {
            return Ok(best);
        }
        if evals >= PIYAVSKII_MAX_EVALS {
            return Err(Error::BudgetExceeded(evals));
        }
        let x = candidate.0;
        let value = eval(x)?;
        evals += 1;
        if value < best.1 {
            best = (x, value);
        }
        let pos = points.partition_point(|&(px, _)| px < x);
        points.insert(pos, (x, value));
    }
}

/// Random multistart: uniform-random lattice starts, each refined by
/// coordinate descent on the grid lattice, best local result wins.
pub fn multistart(
    objective: impl Fn(&[f64]) -> f64,
    axes: &[AxisSpec],
    starts: usize,
    seed: u64,
) -> Result<(Vec<f64>, f64)> {
    if starts == 0 {
        return Err(Error::InvalidParameter(
            "multistart needs at least one start".into(),
        ));
    }
    if axes.is_empty() {
        return Err(Error::InvalidParameter("empty axis list".into()));
    }
    let lattices: Vec<Vec<f64>> = axes
        .iter()
        .map(|axis| axis.values())
        .collect::<Result<_>>()?;
    let point_of = |idx: &[usize]| -> Vec<f64> {
        idx.iter()
            .zip(&lattices)
            .map(|(&i, lat)| lat[i])
            .collect()
    };
    let eval = |idx: &[usize]| -> Result<f64> {
        let point = point_of(idx);
        let value = objective(&point);
        if !value.is_finite() {
            return Err(Error::NonFiniteObjective { point });
        }
        Ok(value)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for _ in 0..starts {
        let mut idx: Vec<usize> = lattices
            .iter()
            .map(|lat| rng.gen_range(0..lat.len()))
            .collect();
        let mut value = eval(&idx)?;
        // greedy descent over lattice neighbors, one axis at a time
        loop {
            let mut improved = false;
            for dim in 0..lattices.len() {
                let mut step_best: Option<(usize, f64)> = None;
                let mut try_neighbor = |i: usize| -> Result<()> {
                    let mut neighbor = idx.clone();
                    neighbor[dim] = i;
                    let v = eval(&neighbor)?;
                    if v < step_best.map_or(value, |(_, b)| b) {
                        step_best = Some((i, v));
                    }
                    Ok(())
                };
                if idx[dim] > 0 {
                    try_neighbor(idx[dim] - 1)?;
                }
                if idx[dim] + 1 < lattices[dim].len() {
                    try_neighbor(idx[dim] + 1)?;
                }
                if let Some((i, v)) = step_best {
                    idx[dim] = i;
                    value = v;
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
        if best.as_ref().map_or(true, |(_, b)| value < *b) {
            best = Some((point_of(&idx), value));
        }
    }
    Ok(best.unwrap())
}
