// Scratch diagnostics used during development; not part of the deliverable.
use corrmat::costs::{CostFamily, Eta, FamilyKind};
use corrmat::data::{build_problem, generate_synthetic};
use corrmat::solvers::{accelerated_solve, sinkhorn_solve};
use corrmat::types::{CostMatrix, Marginals, SolverConfig};
use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn random_problem(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> (CostMatrix, Marginals) {
    let costs =
        CostMatrix::new(Array2::from_shape_fn((n, n), |_| rng.gen_range(0.0..5.0) * scale))
            .unwrap();
    let raw_o = Array1::from_shape_fn(n, |_| rng.gen_range(0.5..1.5));
    let raw_d = Array1::from_shape_fn(n, |_| rng.gen_range(0.5..1.5));
    let m = Marginals::from_shares(&raw_o / raw_o.sum(), &raw_d / raw_d.sum(), 1000.0).unwrap();
    (costs, m)
}

fn main() {
    // accelerated solver: iterations to tolerance + cross-solver agreement
    for eps in [1e-5, 1e-6, 1e-7] {
        let mut worst_iters = 0usize;
        let mut worst_diff = 0.0f64;
        let mut fails = 0;
        let mut total_iters = 0usize;
        for seed in 0..50u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 3 + (seed as usize % 8);
            let (costs, m) = random_problem(&mut rng, n, 1.0);
            let plain_cfg = SolverConfig::sinkhorn().with_tolerances(1e-10, 1e-10);
            let (d1, _, r1) = sinkhorn_solve(&costs, &m, &plain_cfg).unwrap();
            let accel_cfg = SolverConfig::accelerated()
                .with_tolerances(eps, eps)
                .with_max_iters(200_000);
            let (d2, r2) = match accelerated_solve(&costs, &m, &accel_cfg) {
                Ok((d2, _, r2)) => (d2, r2),
                Err(e) => {
                    println!("  seed {seed}: {e}");
                    fails += 1;
                    continue;
                }
            };
            if !(r1.converged && r2.converged) {
                fails += 1;
                continue;
            }
            let diff = d1
                .values()
                .iter()
                .zip(d2.values().iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            worst_iters = worst_iters.max(r2.iterations);
            total_iters += r2.iterations;
            worst_diff = worst_diff.max(diff);
        }
        println!(
            "eps {eps:>8.0e}: worst accel iters {worst_iters:>8}, avg {:>8}, worst entrywise diff {worst_diff:.3e}, fails {fails}",
            total_iters / 50
        );
    }

    // huge costs: plain solver iterations
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let (costs, m) = random_problem(&mut rng, 3, 1000.0);
        let cfg = SolverConfig::sinkhorn()
            .with_tolerances(1e-6, 1e-6)
            .with_max_iters(2_000_000);
        let (_, _, r) = sinkhorn_solve(&costs, &m, &cfg).unwrap();
        println!(
            "scale 1e3 seed {seed}: plain iters {} converged {} finite {}",
            r.iterations,
            r.converged,
            r.objective_trace.iter().all(|v| v.is_finite())
        );
        let acfg = SolverConfig::accelerated()
            .with_tolerances(1e-6, 1e-6)
            .with_max_iters(2_000_000);
        match accelerated_solve(&costs, &m, &acfg) {
            Ok((_, _, ra)) => println!(
                "          accel iters {} converged {}",
                ra.iterations, ra.converged
            ),
            Err(e) => println!("          accel error {e}"),
        }
    }

    // bundle round trip diff hunt
    let family = CostFamily::new(FamilyKind::PowerTime, Eta::new(2.0, 0.0, 0.3)).unwrap();
    let table = generate_synthetic(5, 11, &family, 400.0).unwrap();
    let p = build_problem(&table).unwrap();
    let q = corrmat::data::Problem::from_json(&p.to_json()).unwrap();
    println!("marginals eq: {}", p.marginals == q.marginals);
    println!(
        "observed eq: {} time eq: {} dist eq: {}",
        p.observed == q.observed,
        p.time == q.time,
        p.dist == q.dist
    );
    if p.time != q.time {
        for (a, b) in p.time.iter().zip(q.time.iter()) {
            if a != b {
                println!("time diff {a:?} vs {b:?}");
                break;
            }
        }
    }
    if p.dist != q.dist {
        for (idx, (a, b)) in p.dist.iter().zip(q.dist.iter()).enumerate() {
            if a != b {
                println!("dist diff at {idx}: {a:?} vs {b:?} bits {:x} {:x}", a.to_bits(), b.to_bits());
            }
        }
    }
    if p.marginals != q.marginals {
        for (a, b) in p.marginals.origin().iter().zip(q.marginals.origin().iter()) {
            if a != b {
                println!("origin diff {a:?} vs {b:?}");
            }
        }
        println!("total {:?} vs {:?}", p.marginals.total(), q.marginals.total());
    }
}
