//! `cellfree oracle`: simulator routines against brute-force references.

use cellfree::deployment::{wrap_distance, Point};
use cellfree::harness::noise_power;
use cellfree::linalg::right_pseudo_inverse;
use cellfree::power_control::{solve_maxmin, MaxMinProblem};
use cellfree::rng::{complex_normal, stream_rng};
use cellfree::training::greedy_fingerprint_assignment;
use cellfree_oracles as oracles;
use nalgebra::DMatrix;
use rand::Rng;

fn report(name: &str, pass: bool, detail: String) -> bool {
    println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn torus_distance(seed: u64) -> bool {
    let mut rng = stream_rng(seed, &[1]);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let p = (rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0));
        let q = (rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0));
        let d = wrap_distance(Point::new(p.0, p.1), Point::new(q.0, q.1), 1000.0);
        worst = worst.max((d - oracles::geometry::torus_distance_by_images(p, q, 1000.0)).abs());
    }
    report("torus distance vs periodic images", worst < 1e-9, format!("max error {worst:.2e} m over 10000 pairs"))
}

fn single_column_zf(seed: u64) -> bool {
    let mut rng = stream_rng(seed, &[2]);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let m = rng.random_range(1..=16);
        let g = DMatrix::from_fn(m, 1, |_, _| complex_normal(&mut rng, 1.0));
        let w = right_pseudo_inverse(&g).expect("non-zero column");
        let reference = oracles::precoding::vector_pseudo_inverse(&g.iter().map(|z| (z.re, z.im)).collect::<Vec<_>>());
        for (a, b) in w.iter().zip(&reference) {
            worst = worst.max(((a.re - b.0).powi(2) + (a.im - b.1).powi(2)).sqrt() / (b.0.hypot(b.1)));
        }
    }
    report("single-user ZF vs vector pseudo-inverse", worst < 1e-10, format!("max relative error {worst:.2e}"))
}

fn pilot_assignment(seed: u64) -> bool {
    let mut rng = stream_rng(seed, &[3]);
    let (mut optimal, total) = (0, 100);
    let mut ratio_sum = 0.0;
    for i in 0..total {
        let beta = DMatrix::from_fn(3, 6, |_, _| 10f64.powf(rng.random_range(-14.0..-10.0)));
        let fps: Vec<Vec<f64>> = (0..6).map(|k| (0..3).map(|m| 10.0 * beta[(m, k)].log10()).collect()).collect();
        let (best, _) = oracles::pilots::optimal_assignments(&fps, 3);
        let greedy = greedy_fingerprint_assignment(&beta, 3, seed ^ i as u64);
        let v = oracles::pilots::min_copilot_distance(&fps, &greedy);
        if (v - best).abs() <= 1e-9 {
            optimal += 1;
        }
        ratio_sum += v / best;
    }
    // The greedy heuristic is not expected to be optimal; this reports how close it gets.
    let mean_ratio = ratio_sum / total as f64;
    report(
        "greedy pilot assignment vs exhaustive search",
        mean_ratio > 0.5,
        format!("optimal in {optimal}/{total} instances, mean min-distance ratio {mean_ratio:.3}"),
    )
}

fn power_control(seed: u64) -> bool {
    let mut rng = stream_rng(seed, &[4]);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let gamma = [[rng.random_range(0.0..0.05), rng.random_range(0.0..0.05)], [rng.random_range(0.0..0.05), rng.random_range(0.0..0.05)]];
        let omega: Vec<[f64; 2]> = (0..3).map(|_| [rng.random_range(1.0..2.0), rng.random_range(1.0..2.0)]).collect();
        let flat: Vec<f64> = omega.iter().flatten().cloned().collect();
        let problem = MaxMinProblem::new(DMatrix::from_row_slice(2, 2, &gamma.concat()), DMatrix::from_row_slice(3, 2, &flat), 1.0, 1.0)
            .expect("valid instance");
        let t = solve_maxmin(&problem, 1e-4, None).expect("solvable").t_star;
        worst = worst.max((t - oracles::power::grid_maxmin_two_users(gamma, &omega, 1.0, 1.0, 1000)).abs());
    }
    report("max-min bisection vs grid search", worst < 2e-3, format!("max |t* - grid| = {worst:.2e} over 20 instances"))
}

fn link_budget() -> bool {
    let n = noise_power(-174.0, 20e6, 9.0);
    let reference = oracles::link::noise_power_w(-174.0, 20e6, 9.0);
    report("noise power", (n / reference - 1.0).abs() < 1e-12, format!("{n:.4e} W vs {reference:.4e} W"))
}

pub fn run_all(seed: u64) -> bool {
    let results = [torus_distance(seed), single_column_zf(seed), pilot_assignment(seed), power_control(seed), link_budget()];
    results.iter().all(|&r| r)
}
