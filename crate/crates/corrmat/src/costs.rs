//! Parametric travel-cost families and parameter-grid construction.
//!
//! A family maps observed mean travel time (minutes) and mean straight-line
//! distance to the generalized cost consumed by the solvers. Five families
//! are supported; the parameter vector is always `eta = (alpha, beta,
//! gamma)`, with components a family does not use pinned at their neutral
//! values (`beta = 0`, `gamma = 1`).
//!
//! Inputs are clamped below by [`DEFAULT_INPUT_FLOOR`] before powers and
//! logarithms: diagonal and unobserved pairs may carry zeros, which would
//! otherwise poison `ln` and fractional powers. The floor is a calibration
//! convention and can be overridden per evaluation.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::types::CostMatrix;
use crate::{Error, Result};

/// Lower clamp applied to time/distance entries before powers and logs
/// (one minute / one kilometre).
pub const DEFAULT_INPUT_FLOOR: f64 = 1.0;

/// Hard cap on enumerated grid sizes.
const MAX_GRID_POINTS: usize = 10_000_000;

/// The five cost families. The serialized names double as the CLI strings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    /// `alpha * time`
    LinearTime,
    /// `alpha * time^gamma`
    PowerTime,
    /// `alpha * time^gamma * dist^beta`
    PowerTimeDist,
    /// `alpha * time^gamma - beta * ln(time)`
    PowerlogTime,
    /// `alpha * dist^gamma - beta * ln(dist)`
    PowerlogDist,
}

impl FamilyKind {
    pub const ALL: [FamilyKind; 5] = [
        FamilyKind::LinearTime,
        FamilyKind::PowerTime,
        FamilyKind::PowerTimeDist,
        FamilyKind::PowerlogTime,
        FamilyKind::PowerlogDist,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::LinearTime => "linear_time",
            FamilyKind::PowerTime => "power_time",
            FamilyKind::PowerTimeDist => "power_time_dist",
            FamilyKind::PowerlogTime => "powerlog_time",
            FamilyKind::PowerlogDist => "powerlog_dist",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "unknown cost family {name:?}; expected one of linear_time, power_time, \
                     power_time_dist, powerlog_time, powerlog_dist"
                ))
            })
    }

    pub fn uses_beta(self) -> bool {
        matches!(
            self,
            FamilyKind::PowerTimeDist | FamilyKind::PowerlogTime | FamilyKind::PowerlogDist
        )
    }

    pub fn uses_gamma(self) -> bool {
        !matches!(self, FamilyKind::LinearTime)
    }
}

impl std::fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Cost-family parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eta {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Eta {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { alpha, beta, gamma }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }
}

/// A cost family instantiated with validated parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostFamily {
    kind: FamilyKind,
    eta: Eta,
}

impl CostFamily {
    /// Validate `alpha > 0`, `beta >= 0`, `gamma >= 0`, and that parameters
    /// the family does not use sit at their neutral values.
    pub fn new(kind: FamilyKind, eta: Eta) -> Result<Self> {
        if !(eta.alpha > 0.0) || !eta.alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "alpha must be positive and finite, got {}",
                eta.alpha
            )));
        }
        if !(eta.beta >= 0.0) || !eta.beta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "beta must be nonnegative and finite, got {}",
                eta.beta
            )));
        }
        if !(eta.gamma >= 0.0) || !eta.gamma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gamma must be nonnegative and finite, got {}",
                eta.gamma
            )));
        }
        if !kind.uses_beta() && eta.beta != 0.0 {
            return Err(Error::InvalidParameter(format!(
                "{kind} does not use beta; it must stay at 0, got {}",
                eta.beta
            )));
        }
        if !kind.uses_gamma() && eta.gamma != 1.0 {
            return Err(Error::InvalidParameter(format!(
                "{kind} does not use gamma; it must stay at 1, got {}",
                eta.gamma
            )));
        }
        Ok(Self { kind, eta })
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn eta(&self) -> Eta {
        self.eta
    }

    /// Evaluate with the default input floor.
    pub fn evaluate(&self, time: &Array2<f64>, dist: &Array2<f64>) -> Result<CostMatrix> {
        self.evaluate_with_floor(time, dist, DEFAULT_INPUT_FLOOR)
    }

    /// Entrywise application of the family formula after clamping inputs
    /// below by `floor`.
    pub fn evaluate_with_floor(
        &self,
        time: &Array2<f64>,
        dist: &Array2<f64>,
        floor: f64,
    ) -> Result<CostMatrix> {
        if time.dim() != dist.dim() {
            return Err(Error::DimensionMismatch(time.nrows(), dist.nrows()));
        }
        if !(floor > 0.0) || !floor.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "input floor must be positive and finite, got {floor}"
            )));
        }
        for (name, m) in [("time matrix", time), ("dist matrix", dist)] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(name));
            }
            if m.iter().any(|&v| v < 0.0) {
                return Err(Error::Negative(name));
            }
        }
        let Eta { alpha, beta, gamma } = self.eta;
        let values = match self.kind {
            FamilyKind::LinearTime => time.mapv(|t| alpha * t.max(floor)),
            FamilyKind::PowerTime => time.mapv(|t| alpha * t.max(floor).powf(gamma)),
            FamilyKind::PowerTimeDist => Array2::from_shape_fn(time.dim(), |idx| {
                alpha * time[idx].max(floor).powf(gamma) * dist[idx].max(floor).powf(beta)
            }),
            FamilyKind::PowerlogTime => time.mapv(|t| {
                let c = t.max(floor);
                alpha * c.powf(gamma) - beta * c.ln()
            }),
            FamilyKind::PowerlogDist => dist.mapv(|d| {
                let c = d.max(floor);
                alpha * c.powf(gamma) - beta * c.ln()
            }),
        };
        // cannot produce non-finite output from clamped finite inputs and
        // finite parameters unless alpha/beta overflow; surface it anyway
        CostMatrix::new(values)
    }
}

/// One parameter axis: either fixed (`lo == hi`) or swept from `lo` to `hi`
/// in increments of `step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl AxisSpec {
    pub fn fixed(value: f64) -> Self {
        Self {
            lo: value,
            hi: value,
            step: 1.0,
        }
    }

    pub fn swept(lo: f64, hi: f64, step: f64) -> Self {
        Self { lo, hi, step }
    }

    pub fn is_fixed(&self) -> bool {
        self.lo == self.hi
    }

    /// Enumerated axis values `lo, lo + step, ...`.
    ///
    /// The upper endpoint is included when `hi - lo` is an integer multiple
    /// of `step` within 1e-9, and is then emitted exactly as `hi`.
    pub fn values(&self) -> Result<Vec<f64>> {
        if !self.lo.is_finite() || !self.hi.is_finite() || !self.step.is_finite() {
            return Err(Error::InvalidGrid("axis bounds must be finite".into()));
        }
        if self.lo > self.hi {
            return Err(Error::InvalidGrid(format!(
                "axis lower bound {} exceeds upper bound {}",
                self.lo, self.hi
            )));
        }
        if !(self.step > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "axis step must be positive, got {}",
                self.step
            )));
        }
        let span = self.hi - self.lo;
        let multiple = (span / self.step).round();
        let exact = (span - multiple * self.step).abs() <= 1e-9;
        let count = if exact {
            multiple as usize + 1
        } else {
            (span / self.step).floor() as usize + 1
        };
        if count > MAX_GRID_POINTS {
            return Err(Error::InvalidGrid(format!(
                "axis would enumerate {count} points (cap {MAX_GRID_POINTS})"
            )));
        }
        let mut values: Vec<f64> = (0..count).map(|k| self.lo + k as f64 * self.step).collect();
        if exact {
            *values.last_mut().unwrap() = self.hi;
        }
        Ok(values)
    }
}

/// Sweep ranges for the three parameters; axes not swept are fixed scalars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub alpha: AxisSpec,
    pub beta: AxisSpec,
    pub gamma: AxisSpec,
}

impl GridSpec {
    pub fn new(alpha: AxisSpec, beta: AxisSpec, gamma: AxisSpec) -> Self {
        Self { alpha, beta, gamma }
    }

    /// Lexicographic enumeration of the grid: alpha outermost, then beta,
    /// then gamma. The fixed order keeps downstream tie-breaking
    /// deterministic.
    pub fn points(&self) -> Result<Vec<Eta>> {
        let alphas = self.alpha.values()?;
        let betas = self.beta.values()?;
        let gammas = self.gamma.values()?;
        let total = alphas
            .len()
            .checked_mul(betas.len())
            .and_then(|p| p.checked_mul(gammas.len()))
            .filter(|&p| p <= MAX_GRID_POINTS)
            .ok_or_else(|| {
                Error::InvalidGrid(format!(
                    "grid of {}x{}x{} points exceeds cap {MAX_GRID_POINTS}",
                    alphas.len(),
                    betas.len(),
                    gammas.len()
                ))
            })?;
        let mut points = Vec::with_capacity(total);
        for &alpha in &alphas {
            for &beta in &betas {
                for &gamma in &gammas {
                    points.push(Eta::new(alpha, beta, gamma));
                }
            }
        }
        Ok(points)
    }

    /// Number of swept (non-fixed) axes.
    pub fn swept_axes(&self) -> usize {
        [self.alpha, self.beta, self.gamma]
            .iter()
            .filter(|a| !a.is_fixed())
            .count()
    }

    /// Check the grid against a family: axes the family does not use must
    /// be fixed at their neutral values.
    pub fn validate_for(&self, kind: FamilyKind) -> Result<()> {
        if !kind.uses_beta() && !(self.beta.is_fixed() && self.beta.lo == 0.0) {
            return Err(Error::InvalidParameter(format!(
                "{kind} does not use beta; fix the beta axis at 0"
            )));
        }
        if !kind.uses_gamma() && !(self.gamma.is_fixed() && self.gamma.lo == 1.0) {
            return Err(Error::InvalidParameter(format!(
                "{kind} does not use gamma; fix the gamma axis at 1"
            )));
        }
        Ok(())
    }
}
