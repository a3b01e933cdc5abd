//! Entropy-model solvers: alternating block minimization (Sinkhorn) and its
//! adaptive accelerated variant.
//!
//! Both minimize the dual `phi` over the two potential blocks and return a
//! primal matrix, the final potentials, and a [`SolveReport`]. A block
//! update is exact minimization over that block: afterwards the
//! corresponding marginal of the primal matrix matches exactly. Updates are
//! written against the normalized kernel (`ln` of the primal row/column
//! sums rather than of the raw kernel sums); the two forms differ by a
//! constant per block, which the softmax cancels, and the normalized form
//! keeps potentials centered.
//!
//! Zero marginal entries are rejected at entry: `ln(l)` in the update is
//! undefined at zero, so callers must drop empty zones during ingestion.
//!
//! Both solvers are deterministic: identical inputs give bit-identical
//! reports on a fixed platform. Hitting the iteration limit returns a
//! usable report with `converged = false` instead of an error, so
//! calibration sweeps survive hard corners of parameter grids.

use ndarray::{Array1, Array2, Axis};

use crate::dual::{entropy_cost_objective, LogKernel};
use crate::types::{CorrespondenceMatrix, CostMatrix, DualPotentials, Marginals, SolveReport, SolverConfig};
use crate::{Error, Result};

/// Cap on Lipschitz-estimate doublings within one accelerated iteration.
const MAX_BACKTRACK_DOUBLINGS: u32 = 64;

fn check_inputs(costs: &CostMatrix, marginals: &Marginals) -> Result<()> {
    if costs.n() != marginals.n() {
        return Err(Error::DimensionMismatch(costs.n(), marginals.n()));
    }
    for (block, values) in [("origin", marginals.origin()), ("dest", marginals.dest())] {
        if let Some(index) = values.iter().position(|&v| v == 0.0) {
            return Err(Error::ZeroMarginal { block, index });
        }
    }
    Ok(())
}

fn origin_update_from_kernel(
    potentials: &DualPotentials,
    kernel: &LogKernel,
    marginals: &Marginals,
) -> DualPotentials {
    let row_lse = kernel.row_log_sums();
    let origin = Array1::from_shape_fn(potentials.n(), |i| {
        potentials.origin[i] + marginals.origin()[i].ln() - (row_lse[i] - kernel.log_total())
    });
    DualPotentials {
        origin,
        dest: potentials.dest.clone(),
    }
}

fn dest_update_from_kernel(
    potentials: &DualPotentials,
    kernel: &LogKernel,
    marginals: &Marginals,
) -> DualPotentials {
    let col_lse = kernel.col_log_sums();
    let dest = Array1::from_shape_fn(potentials.n(), |j| {
        potentials.dest[j] + marginals.dest()[j].ln() - (col_lse[j] - kernel.log_total())
    });
    DualPotentials {
        origin: potentials.origin.clone(),
        dest,
    }
}

/// Exact minimization of the dual over the origin block.
///
/// After the update the primal row sums equal the origin shares and the
/// origin gradient block vanishes.
pub fn sinkhorn_origin_update(
    potentials: &DualPotentials,
    costs: &CostMatrix,
    marginals: &Marginals,
) -> Result<DualPotentials> {
    check_inputs(costs, marginals)?;
    let kernel = LogKernel::new(costs, potentials)?;
    Ok(origin_update_from_kernel(potentials, &kernel, marginals))
}

/// Exact minimization of the dual over the destination block; mirror of
/// [`sinkhorn_origin_update`] with columns.
pub fn sinkhorn_dest_update(
    potentials: &DualPotentials,
    costs: &CostMatrix,
    marginals: &Marginals,
) -> Result<DualPotentials> {
    check_inputs(costs, marginals)?;
    let kernel = LogKernel::new(costs, potentials)?;
    Ok(dest_update_from_kernel(potentials, &kernel, marginals))
}

/// Project a positive matrix to the exact marginals with one pair of
/// row/column rescalings (rows to `l`, then columns to `w`).
pub(crate) fn rescale_to_marginals(values: &Array2<f64>, marginals: &Marginals) -> Array2<f64> {
    let mut out = values.clone();
    let row_sums = out.sum_axis(Axis(1));
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        if row_sums[i] > 0.0 {
            let scale = marginals.origin()[i] / row_sums[i];
            row.mapv_inplace(|v| v * scale);
        }
    }
    let col_sums = out.sum_axis(Axis(0));
    for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
        if col_sums[j] > 0.0 {
            let scale = marginals.dest()[j] / col_sums[j];
            col.mapv_inplace(|v| v * scale);
        }
    }
    out
}

/// Euclidean norms of the marginal violations of `values`.
fn violations(values: &Array2<f64>, marginals: &Marginals) -> (f64, f64) {
    let row = values.sum_axis(Axis(1)) - marginals.origin();
    let col = values.sum_axis(Axis(0)) - marginals.dest();
    (
        row.iter().map(|v| v * v).sum::<f64>().sqrt(),
        col.iter().map(|v| v * v).sum::<f64>().sqrt(),
    )
}

/// The three-inequality stopping rule shared by both solvers.
///
/// True iff `|f(d) + phi(potentials)| <= gap_tol` and both marginal
/// violations of `d` are within `marginal_tol` in Euclidean norm.
pub fn stopping_check(
    matrix: &CorrespondenceMatrix,
    potentials: &DualPotentials,
    costs: &CostMatrix,
    marginals: &Marginals,
    cfg: &SolverConfig,
) -> Result<bool> {
    if matrix.n() != costs.n() {
        return Err(Error::DimensionMismatch(matrix.n(), costs.n()));
    }
    check_inputs(costs, marginals)?;
    let kernel = LogKernel::new(costs, potentials)?;
    let phi = kernel.objective(potentials, marginals);
    let f = entropy_cost_objective(matrix.values().iter().copied(), costs.values().iter().copied());
    let (row_violation, col_violation) = violations(&matrix.values().to_owned(), marginals);
    Ok((f + phi).abs() <= cfg.gap_tol
        && row_violation <= cfg.marginal_tol
        && col_violation <= cfg.marginal_tol)
}

/// Alternating Sinkhorn solver: start at zero potentials and minimize the
/// dual over one block per iteration, origin block on even iterations.
///
/// Convergence is declared by the same three-inequality rule as the
/// accelerated solver, with the duality gap evaluated on the current primal
/// projected to exact marginals by one pair of row/column rescalings.
pub fn sinkhorn_solve(
    costs: &CostMatrix,
    marginals: &Marginals,
    cfg: &SolverConfig,
) -> Result<(CorrespondenceMatrix, DualPotentials, SolveReport)> {
    cfg.validate()?;
    check_inputs(costs, marginals)?;

    let mut potentials = DualPotentials::zeros(costs.n());
    let mut kernel = LogKernel::new(costs, &potentials)?;
    let mut trace = Vec::with_capacity(cfg.max_iters.min(4096) + 1);
    trace.push(kernel.objective(&potentials, marginals));

    let mut iterations = 0;
    let mut converged = false;
    let mut final_gap = f64::INFINITY;
    let (mut row_violation, mut col_violation) = (f64::INFINITY, f64::INFINITY);

    for k in 0..cfg.max_iters {
        potentials = if k % 2 == 0 {
            origin_update_from_kernel(&potentials, &kernel, marginals)
        } else {
            dest_update_from_kernel(&potentials, &kernel, marginals)
        };
        kernel = LogKernel::new(costs, &potentials)?;
        let phi = kernel.objective(&potentials, marginals);
        trace.push(phi);
        iterations = k + 1;

        let row_sums = kernel.primal_row_sums();
        let col_sums = kernel.primal_col_sums();
        row_violation = (&row_sums - &marginals.origin())
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        col_violation = (&col_sums - &marginals.dest())
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        if row_violation <= cfg.marginal_tol && col_violation <= cfg.marginal_tol {
            let rounded = rescale_to_marginals(&kernel.primal(), marginals);
            let f = entropy_cost_objective(rounded.iter().copied(), costs.values().iter().copied());
            final_gap = (f + phi).abs();
            if final_gap <= cfg.gap_tol {
                converged = true;
                break;
            }
        }
    }

    if !converged {
        let rounded = rescale_to_marginals(&kernel.primal(), marginals);
        let f = entropy_cost_objective(rounded.iter().copied(), costs.values().iter().copied());
        final_gap = (f + trace.last().copied().unwrap_or(f64::INFINITY)).abs();
    }

    let matrix = CorrespondenceMatrix::normalized(kernel.primal(), marginals.total())?;
    let report = SolveReport {
        iterations,
        objective_trace: trace,
        final_gap,
        row_violation,
        col_violation,
        converged,
    };
    Ok((matrix, potentials, report))
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Block {
    Origin,
    Dest,
}

/// Accelerated solver: adaptive Lipschitz backtracking, greedy choice of the
/// block with the larger gradient norm (origin block on ties), momentum
/// through an auxiliary point, and an averaged primal reconstruction.
///
/// Stops when the averaged primal satisfies the three-inequality rule.
/// Returns the averaged primal, the potentials of the last exact block step,
/// and the report.
pub fn accelerated_solve(
    costs: &CostMatrix,
    marginals: &Marginals,
    cfg: &SolverConfig,
) -> Result<(CorrespondenceMatrix, DualPotentials, SolveReport)> {
    cfg.validate()?;
    check_inputs(costs, marginals)?;
    let n = costs.n();

    let mut x = DualPotentials::zeros(n);
    let mut v = x.clone();
    let mut lipschitz = cfg.initial_lipschitz;
    let mut coeff = 0.0; // a_k
    let mut avg_weight = 0.0; // L_k * a_k^2, total weight behind the average
    let mut averaged = LogKernel::new(costs, &x)?.primal(); // vanishes from the average at the first accept

    let mut trace = Vec::with_capacity(cfg.max_iters.min(4096) + 1);
    trace.push(crate::dual::dual_objective(costs, &x, marginals)?);

    let mut iterations = 0;
    let mut converged = false;
    let mut phi_x = trace[0];
    let mut final_gap = f64::INFINITY;
    let (mut row_violation, mut col_violation) = (f64::INFINITY, f64::INFINITY);

    for k in 0..cfg.max_iters {
        let mut trial_l = lipschitz / 2.0;
        let mut accepted = false;
        for _ in 0..=MAX_BACKTRACK_DOUBLINGS {
            let coeff_next =
                1.0 / (2.0 * trial_l) + (1.0 / (4.0 * trial_l * trial_l)
                    + coeff * coeff * lipschitz / trial_l)
                    .sqrt();
            let tau = 1.0 / (coeff_next * trial_l);
            let y = DualPotentials {
                origin: tau * &v.origin + (1.0 - tau) * &x.origin,
                dest: tau * &v.dest + (1.0 - tau) * &x.dest,
            };
            let kernel_y = LogKernel::new(costs, &y)?;
            let (grad_origin, grad_dest) = kernel_y.gradient(marginals);
            let sq_origin: f64 = grad_origin.iter().map(|g| g * g).sum();
            let sq_dest: f64 = grad_dest.iter().map(|g| g * g).sum();
            let block = if sq_origin >= sq_dest {
                Block::Origin
            } else {
                Block::Dest
            };
            let x_next = match block {
                Block::Origin => origin_update_from_kernel(&y, &kernel_y, marginals),
                Block::Dest => dest_update_from_kernel(&y, &kernel_y, marginals),
            };
            let phi_y = kernel_y.objective(&y, marginals);
            let phi_next =
                LogKernel::new(costs, &x_next)?.objective(&x_next, marginals);
            let grad_sq = sq_origin + sq_dest;
            if phi_next <= phi_y - grad_sq / (2.0 * trial_l) {
                v = DualPotentials {
                    origin: &v.origin - &(coeff_next * &grad_origin),
                    dest: &v.dest - &(coeff_next * &grad_dest),
                };
                let weight_next = trial_l * coeff_next * coeff_next;
                averaged = (coeff_next * kernel_y.primal() + avg_weight * averaged) / weight_next;
                x = x_next;
                phi_x = phi_next;
                coeff = coeff_next;
                lipschitz = trial_l;
                avg_weight = weight_next;
                accepted = true;
                break;
            }
            trial_l *= 2.0;
        }
        if !accepted {
            return Err(Error::LipschitzSearchDiverged);
        }
        trace.push(phi_x);
        iterations = k + 1;

        let (rv, cv) = violations(&averaged, marginals);
        row_violation = rv;
        col_violation = cv;
        let f = entropy_cost_objective(averaged.iter().copied(), costs.values().iter().copied());
        final_gap = (f + phi_x).abs();
        if final_gap <= cfg.gap_tol
            && row_violation <= cfg.marginal_tol
            && col_violation <= cfg.marginal_tol
        {
            converged = true;
            break;
        }
    }

    let matrix = CorrespondenceMatrix::normalized(averaged, marginals.total())?;
    let report = SolveReport {
        iterations,
        objective_trace: trace,
        final_gap,
        row_violation,
        col_violation,
        converged,
    };
    Ok((matrix, x, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::{dual_gradient, dual_objective, primal_from_duals};
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn uniform_marginals(n: usize) -> Marginals {
        let share = 1.0 / n as f64;
        Marginals::from_shares(
            Array1::from_elem(n, share),
            Array1::from_elem(n, share),
            n as f64,
        )
        .unwrap()
    }

    fn random_problem(rng: &mut ChaCha8Rng, n: usize, cost_scale: f64) -> (CostMatrix, Marginals) {
        let costs = CostMatrix::new(Array2::from_shape_fn((n, n), |_| {
            rng.gen_range(0.0..5.0) * cost_scale
        }))
        .unwrap();
        let raw_origin = Array1::from_shape_fn(n, |_| rng.gen_range(0.5..1.5));
        let raw_dest = Array1::from_shape_fn(n, |_| rng.gen_range(0.5..1.5));
        let marginals = Marginals::from_shares(
            &raw_origin / raw_origin.sum(),
            &raw_dest / raw_dest.sum(),
            1000.0,
        )
        .unwrap();
        (costs, marginals)
    }

    /// Independent scaling-iteration oracle in plain (non-log) arithmetic.
    ///
    /// Fixed point of `u = l / (K v)`, `v = w / (K^T u)` with
    /// `K = exp(-T)`; only safe for moderate costs, which is all the tests
    /// feed it.
    pub(crate) fn scaling_oracle(
        costs: &CostMatrix,
        marginals: &Marginals,
        max_iters: usize,
    ) -> Array2<f64> {
        let n = costs.n();
        let kernel = costs.values().mapv(|t| (-t).exp());
        let mut u = Array1::<f64>::ones(n);
        let mut v = Array1::<f64>::ones(n);
        for _ in 0..max_iters {
            let kv = kernel.dot(&v);
            let u_new = &marginals.origin() / &kv;
            let ktu = kernel.t().dot(&u_new);
            let v_new = &marginals.dest() / &ktu;
            let drift = (&u_new - &u)
                .iter()
                .chain((&v_new - &v).iter())
                .fold(0.0f64, |acc, d| acc.max(d.abs()));
            u = u_new;
            v = v_new;
            if drift < 1e-15 {
                break;
            }
        }
        let mut d = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                d[[i, j]] = u[i] * kernel[[i, j]] * v[j];
            }
        }
        &d / d.sum()
    }

    #[test]
    fn origin_update_is_fixed_point_at_uniform() {
        let costs = CostMatrix::new(Array2::zeros((2, 2))).unwrap();
        let updated =
            sinkhorn_origin_update(&DualPotentials::zeros(2), &costs, &uniform_marginals(2))
                .unwrap();
        for &v in updated.origin.iter().chain(updated.dest.iter()) {
            assert!(v.abs() < 1e-15);
        }
    }

    #[test]
    fn origin_update_matches_hand_evaluation() {
        // zero costs, primal row sums are 0.5 each
        let costs = CostMatrix::new(Array2::zeros((2, 2))).unwrap();
        let m = Marginals::from_counts(&[3.0, 1.0], &[2.0, 2.0]).unwrap();
        let updated = sinkhorn_origin_update(&DualPotentials::zeros(2), &costs, &m).unwrap();
        assert_relative_eq!(updated.origin[0], (0.75f64 / 0.5).ln(), epsilon = 1e-12);
        assert_relative_eq!(updated.origin[0], 0.405465, epsilon = 1e-6);
        assert_relative_eq!(updated.origin[1], (0.25f64 / 0.5).ln(), epsilon = 1e-12);
        assert_relative_eq!(updated.origin[1], -0.693147, epsilon = 1e-6);
        assert!(updated.dest.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn block_updates_zero_their_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let (costs, marginals) = random_problem(&mut rng, 5, 1.0);
            let potentials = DualPotentials::new(
                Array1::from_shape_fn(5, |_| rng.gen_range(-1.0..1.0)),
                Array1::from_shape_fn(5, |_| rng.gen_range(-1.0..1.0)),
            )
            .unwrap();
            let after_origin = sinkhorn_origin_update(&potentials, &costs, &marginals).unwrap();
            let (g_o, _) = dual_gradient(&costs, &after_origin, &marginals).unwrap();
            assert!(g_o.iter().all(|g| g.abs() <= 1e-12), "origin grad {g_o}");

            let after_dest = sinkhorn_dest_update(&potentials, &costs, &marginals).unwrap();
            let (_, g_d) = dual_gradient(&costs, &after_dest, &marginals).unwrap();
            assert!(g_d.iter().all(|g| g.abs() <= 1e-12), "dest grad {g_d}");
        }
    }

    #[test]
    fn dest_update_is_transpose_of_origin_update() {
        let costs = CostMatrix::new(array![[0.0, 2.0], [1.0, 0.5]]).unwrap();
        let transposed = CostMatrix::new(costs.values().t().to_owned()).unwrap();
        let m = Marginals::from_counts(&[3.0, 1.0], &[2.0, 2.0]).unwrap();
        let m_t = Marginals::from_counts(&[2.0, 2.0], &[3.0, 1.0]).unwrap();
        let origin_side = sinkhorn_origin_update(&DualPotentials::zeros(2), &costs, &m).unwrap();
        let dest_side = sinkhorn_dest_update(&DualPotentials::zeros(2), &transposed, &m_t).unwrap();
        for i in 0..2 {
            assert_relative_eq!(origin_side.origin[i], dest_side.dest[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn updates_reject_zero_marginals() {
        let costs = CostMatrix::new(Array2::zeros((2, 2))).unwrap();
        let m = Marginals::from_counts(&[10.0, 0.0], &[5.0, 5.0]).unwrap();
        assert!(matches!(
            sinkhorn_origin_update(&DualPotentials::zeros(2), &costs, &m),
            Err(Error::ZeroMarginal { .. })
        ));
        assert!(matches!(
            sinkhorn_solve(&costs, &m, &SolverConfig::sinkhorn()),
            Err(Error::ZeroMarginal { .. })
        ));
        assert!(matches!(
            accelerated_solve(&costs, &m, &SolverConfig::accelerated()),
            Err(Error::ZeroMarginal { .. })
        ));
    }

    #[test]
    fn zero_costs_give_outer_product_in_two_iterations() {
        let costs = CostMatrix::new(Array2::zeros((3, 3))).unwrap();
        let m = Marginals::from_counts(&[5.0, 3.0, 2.0], &[4.0, 4.0, 2.0]).unwrap();
        let (d, _, report) = sinkhorn_solve(&costs, &m, &SolverConfig::sinkhorn()).unwrap();
        assert!(report.converged);
        assert!(report.iterations <= 2, "took {}", report.iterations);
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(
                    d.values()[[i, j]],
                    m.origin()[i] * m.dest()[j],
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn matches_scaling_oracle_on_three_zones() {
        let costs =
            CostMatrix::new(array![[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]]).unwrap();
        let m = uniform_marginals(3);
        let cfg = SolverConfig::sinkhorn().with_tolerances(1e-10, 1e-10);
        let (d, _, report) = sinkhorn_solve(&costs, &m, &cfg).unwrap();
        assert!(report.converged);
        let oracle = scaling_oracle(&costs, &m, 1_000_000);
        for (a, b) in d.values().iter().zip(oracle.iter()) {
            assert!((a - b).abs() <= 1e-6, "solver {a} vs oracle {b}");
        }
    }

    #[test]
    fn symmetric_instance_gives_symmetric_solution() {
        let costs =
            CostMatrix::new(array![[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]]).unwrap();
        let m = Marginals::from_counts(&[5.0, 2.0, 3.0], &[5.0, 2.0, 3.0]).unwrap();
        let cfg = SolverConfig::sinkhorn().with_tolerances(1e-12, 1e-12);
        let (d, _, report) = sinkhorn_solve(&costs, &m, &cfg).unwrap();
        assert!(report.converged);
        for i in 0..3 {
            for j in 0..3 {
                assert!((d.values()[[i, j]] - d.values()[[j, i]]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn dual_trace_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let (costs, marginals) = random_problem(&mut rng, 6, 1.0);
            let (_, _, report) = sinkhorn_solve(&costs, &marginals, &SolverConfig::sinkhorn()).unwrap();
            for pair in report.objective_trace.windows(2) {
                assert!(pair[1] <= pair[0] + 1e-12, "{} -> {}", pair[0], pair[1]);
            }
        }
    }

    #[test]
    fn report_respects_convergence_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (costs, marginals) = random_problem(&mut rng, 4, 1.0);
        let cfg = SolverConfig::sinkhorn();
        let (d, potentials, report) = sinkhorn_solve(&costs, &marginals, &cfg).unwrap();
        assert!(report.converged);
        assert!(report.final_gap <= cfg.gap_tol);
        assert!(report.row_violation <= cfg.marginal_tol);
        assert!(report.col_violation <= cfg.marginal_tol);
        // returned matrix is the primal at the returned potentials
        let expected = primal_from_duals(&costs, &potentials).unwrap();
        for (a, b) in d.values().iter().zip(expected.values().iter()) {
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn iteration_limit_returns_unconverged_report() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (costs, marginals) = random_problem(&mut rng, 4, 1.0);
        let cfg = SolverConfig::sinkhorn()
            .with_tolerances(1e-300, 1e-300)
            .with_max_iters(10);
        let (_, _, report) = sinkhorn_solve(&costs, &marginals, &cfg).unwrap();
        assert!(!report.converged);
        assert_eq!(report.iterations, 10);
        assert_eq!(report.objective_trace.len(), 11);
    }

    #[test]
    fn solution_invariant_under_cost_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (costs, marginals) = random_problem(&mut rng, 4, 1.0);
        let shifted = costs.shifted(3.5).unwrap();
        let cfg = SolverConfig::sinkhorn().with_tolerances(1e-10, 1e-10);
        let (d1, _, r1) = sinkhorn_solve(&costs, &marginals, &cfg).unwrap();
        let (d2, _, r2) = sinkhorn_solve(&shifted, &marginals, &cfg).unwrap();
        assert!(r1.converged && r2.converged);
        for (a, b) in d1.values().iter().zip(d2.values().iter()) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn deterministic_reports() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let (costs, marginals) = random_problem(&mut rng, 5, 1.0);
        let cfg = SolverConfig::sinkhorn();
        let (d1, p1, r1) = sinkhorn_solve(&costs, &marginals, &cfg).unwrap();
        let (d2, p2, r2) = sinkhorn_solve(&costs, &marginals, &cfg).unwrap();
        assert_eq!(d1.values(), d2.values());
        assert_eq!(p1, p2);
        assert_eq!(r1, r2);

        let cfg = SolverConfig::accelerated();
        let (d1, p1, r1) = accelerated_solve(&costs, &marginals, &cfg).unwrap();
        let (d2, p2, r2) = accelerated_solve(&costs, &marginals, &cfg).unwrap();
        assert_eq!(d1.values(), d2.values());
        assert_eq!(p1, p2);
        assert_eq!(r1, r2);
    }

    #[test]
    fn accelerated_zero_costs_uniform_marginals_converges_immediately() {
        // gradient vanishes at the start, so the first averaged primal is
        // already the outer product
        let costs = CostMatrix::new(Array2::zeros((4, 4))).unwrap();
        let m = uniform_marginals(4);
        let (d, _, report) = accelerated_solve(&costs, &m, &SolverConfig::accelerated()).unwrap();
        assert!(report.converged);
        assert!(report.iterations <= 2, "took {}", report.iterations);
        for &v in d.values().iter() {
            assert_relative_eq!(v, 1.0 / 16.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn accelerated_matches_sinkhorn_on_three_zones() {
        let costs =
            CostMatrix::new(array![[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]]).unwrap();
        let m = uniform_marginals(3);
        let tight = SolverConfig::sinkhorn().with_tolerances(1e-8, 1e-8);
        let (d_plain, _, r_plain) = sinkhorn_solve(&costs, &m, &tight).unwrap();
        let accel_cfg = SolverConfig::accelerated()
            .with_tolerances(1e-8, 1e-8)
            .with_max_iters(100_000);
        let (d_accel, x, r_accel) = accelerated_solve(&costs, &m, &accel_cfg).unwrap();
        assert!(r_plain.converged && r_accel.converged);
        for (a, b) in d_plain.values().iter().zip(d_accel.values().iter()) {
            assert!((a - b).abs() <= 1e-5, "plain {a} vs accelerated {b}");
        }
        // the stopping rule holds for the returned pair
        assert!(stopping_check(&d_accel, &x, &costs, &m, &accel_cfg).unwrap());
    }

    #[test]
    fn accelerated_tie_break_picks_origin_block() {
        // symmetric costs with equal marginals: both gradient blocks have
        // identical norms at the start, so the first update must touch the
        // origin block and leave the destination block at zero
        let costs = CostMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let m = Marginals::from_counts(&[3.0, 1.0], &[3.0, 1.0]).unwrap();
        let cfg = SolverConfig::accelerated()
            .with_tolerances(1e-300, 1e-300)
            .with_max_iters(1);
        let (_, x, report) = accelerated_solve(&costs, &m, &cfg).unwrap();
        assert!(!report.converged);
        assert!(x.dest.iter().all(|&v| v == 0.0), "dest block was updated");
        assert!(x.origin.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn stopping_check_examples() {
        let costs =
            CostMatrix::new(array![[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]]).unwrap();
        let m = uniform_marginals(3);
        let cfg = SolverConfig::sinkhorn().with_tolerances(1e-6, 1e-6);
        let (d, potentials, _) =
            sinkhorn_solve(&costs, &m, &SolverConfig::sinkhorn().with_tolerances(1e-10, 1e-10))
                .unwrap();
        assert!(stopping_check(&d, &potentials, &costs, &m, &cfg).unwrap());

        // zero potentials with nonzero costs and mismatched marginals fail
        let skewed = Marginals::from_counts(&[8.0, 1.0, 1.0], &[2.0, 6.0, 2.0]).unwrap();
        let d0 = primal_from_duals(&costs, &DualPotentials::zeros(3)).unwrap();
        assert!(!stopping_check(&d0, &DualPotentials::zeros(3), &costs, &skewed, &cfg).unwrap());

        // infinite tolerances are vacuously true
        let vacuous = SolverConfig::sinkhorn().with_tolerances(f64::INFINITY, f64::INFINITY);
        assert!(stopping_check(&d0, &DualPotentials::zeros(3), &costs, &skewed, &vacuous).unwrap());
    }

    #[test]
    fn accelerated_average_stays_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let (costs, marginals) = random_problem(&mut rng, 5, 1.0);
        let cfg = SolverConfig::accelerated().with_tolerances(1e-6, 1e-6);
        let (d, _, report) = accelerated_solve(&costs, &marginals, &cfg).unwrap();
        assert!(report.converged);
        assert!((d.values().sum() - 1.0).abs() <= 1e-9);
        assert!(d.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn phi_after_origin_update_drops_by_kl_term() {
        // phi(lambda') = phi(lambda) - KL(l || rowsums(d)) for the exact
        // block step; sanity-check the normalized-update algebra
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let (costs, marginals) = random_problem(&mut rng, 4, 1.0);
        let potentials = DualPotentials::zeros(4);
        let before = dual_objective(&costs, &potentials, &marginals).unwrap();
        let kernel = LogKernel::new(&costs, &potentials).unwrap();
        let row_sums = kernel.primal_row_sums();
        let kl: f64 = marginals
            .origin()
            .iter()
            .zip(row_sums.iter())
            .map(|(l, r)| l * (l / r).ln())
            .sum();
        let after = dual_objective(
            &costs,
            &sinkhorn_origin_update(&potentials, &costs, &marginals).unwrap(),
            &marginals,
        )
        .unwrap();
        assert_relative_eq!(before - after, kl, epsilon = 1e-12);
    }
}
