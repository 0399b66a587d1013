//! Max-min SINR power allocation.
//!
//! With power coefficients `eta` the SINR of user `k` is
//! `P eta_k / (P sum_j A_kj eta_j + sigma2)`, where the coupling `A` is the
//! own-block `gamma` plus, for decentralized precoding, the cross-block
//! `gamma_bar`. Each AP `m` must satisfy `sum_k omega_mk eta_k <= 1`, i.e. its
//! expected transmit power stays below `P`.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Relative slack allowed on the per-AP constraint.
pub const POWER_SLACK: f64 = 1e-9;
/// Default bisection tolerance, relative to the upper end of the bracket.
pub const DEFAULT_TOL: f64 = 1e-4;
pub const MAX_BISECTION_ITERS: usize = 64;
const FIXED_POINT_ITERS: usize = 50;

/// `P eta_k / (P sum_j gamma_kj eta_j + sigma2)` for every user.
pub fn evaluate_sinr_centralized(eta: &[f64], gamma: &DMatrix<f64>, p_ap: f64, sigma2: f64) -> Vec<f64> {
    (0..eta.len())
        .map(|k| {
            let interference: f64 = (0..eta.len()).map(|j| gamma[(k, j)] * eta[j]).sum();
            let signal = p_ap * eta[k];
            if signal == 0.0 {
                0.0
            } else {
                signal / (p_ap * interference + sigma2)
            }
        })
        .collect()
}

/// SINR with own-cluster `gamma` and cross-cluster `gamma_bar`, both `K x K`
/// over global user indices (zero where the term does not apply).
pub fn evaluate_sinr_wc(eta: &[f64], gamma: &DMatrix<f64>, gamma_bar: &DMatrix<f64>, p_ap: f64, sigma2: f64) -> Vec<f64> {
    evaluate_sinr_centralized(eta, &(gamma + gamma_bar), p_ap, sigma2)
}

/// One max-min instance.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxMinProblem {
    /// `K x K` interference coupling.
    pub coupling: DMatrix<f64>,
    /// `M x K` expected precoder powers.
    pub omega: DMatrix<f64>,
    pub p_ap: f64,
    pub sigma2: f64,
}

impl MaxMinProblem {
    pub fn new(coupling: DMatrix<f64>, omega: DMatrix<f64>, p_ap: f64, sigma2: f64) -> Result<Self> {
        let k = coupling.nrows();
        if coupling.ncols() != k || omega.ncols() != k {
            return Err(Error::invalid("coupling must be K x K and omega M x K"));
        }
        if coupling.iter().chain(omega.iter()).any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::invalid("coupling and omega must be finite and non-negative"));
        }
        if !(p_ap > 0.0) || !p_ap.is_finite() {
            return Err(Error::invalid("AP power must be positive"));
        }
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::invalid("noise power must be positive"));
        }
        Ok(Self { coupling, omega, p_ap, sigma2 })
    }

    pub fn num_users(&self) -> usize {
        self.coupling.nrows()
    }

    /// Largest `eta_k` any single AP allows: `min_m 1 / omega_mk`.
    pub fn eta_sup(&self, k: usize) -> f64 {
        self.omega.column(k).iter().filter(|&&w| w > 0.0).map(|w| 1.0 / w).fold(f64::INFINITY, f64::min)
    }

    /// Interference-free upper bound `max_k P eta_sup_k / sigma2`.
    pub fn t_upper(&self) -> f64 {
        (0..self.num_users()).map(|k| self.p_ap * self.eta_sup(k) / self.sigma2).fold(0.0, f64::max)
    }

    pub fn sinr(&self, eta: &[f64]) -> Vec<f64> {
        evaluate_sinr_centralized(eta, &self.coupling, self.p_ap, self.sigma2)
    }

    /// Largest per-AP load `sum_k omega_mk eta_k`.
    pub fn max_load(&self, eta: &[f64]) -> f64 {
        (&self.omega * DVector::from_column_slice(eta)).iter().cloned().fold(0.0, f64::max)
    }

    fn within_budget(&self, eta: &[f64]) -> bool {
        self.max_load(eta) <= 1.0 + POWER_SLACK
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    /// Componentwise-minimal powers meeting the target.
    Feasible(Vec<f64>),
    Infeasible,
}

/// Decides whether every user can reach SINR `t`.
///
/// The smallest powers meeting the target solve `eta = t (A eta + sigma2/P)`.
/// They are approached by the monotone fixed-point iteration from zero, which
/// stops early once an AP budget is exceeded, and then computed exactly from
/// `(I - t A) eta = t sigma2 / P`. For non-negative `A` this system has a
/// non-negative solution iff the target is reachable without power limits.
pub fn feasibility_check(problem: &MaxMinProblem, t: f64) -> Result<Feasibility> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!("SINR target must be finite and non-negative, got {t}")));
    }
    let k = problem.num_users();
    if t == 0.0 || k == 0 {
        return Ok(Feasibility::Feasible(vec![0.0; k]));
    }
    let noise = t * problem.sigma2 / problem.p_ap;
    let ta = &problem.coupling * t;
    let mut eta = DVector::from_element(k, noise);
    for _ in 0..FIXED_POINT_ITERS {
        if !problem.within_budget(eta.as_slice()) {
            return Ok(Feasibility::Infeasible);
        }
        let next = ta.clone() * &eta + DVector::from_element(k, noise);
        let done = (&next - &eta).amax() <= 1e-15 * next.amax();
        eta = next;
        if done {
            break;
        }
    }
    let system = DMatrix::<f64>::identity(k, k) - ta;
    let exact = match system.lu().solve(&DVector::from_element(k, noise)) {
        Some(x) => x,
        None => return Ok(Feasibility::Infeasible),
    };
    if exact.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Ok(Feasibility::Infeasible);
    }
    // The exact minimal solution dominates every fixed-point iterate.
    if exact.iter().zip(eta.iter()).any(|(x, e)| *x < e * (1.0 - 1e-9)) {
        return Err(Error::Solver("linear solve disagrees with the fixed-point iterate".into()));
    }
    let eta: Vec<f64> = exact.iter().cloned().collect();
    if problem.within_budget(&eta) {
        Ok(Feasibility::Feasible(eta))
    } else {
        Ok(Feasibility::Infeasible)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSolution {
    pub eta: Vec<f64>,
    pub t_star: f64,
    pub sinr: Vec<f64>,
    /// `log2(1 + SINR)`.
    pub rates: Vec<f64>,
    pub iterations: usize,
    /// No positive target was found feasible; `eta` is zero.
    pub infeasible: bool,
}

/// Bisection on the common SINR target over `[0, t_hi]`.
///
/// Stops once the bracket is narrower than `tol * hi` and returns the last
/// feasible witness, so every user's SINR equals `t_star`.
pub fn solve_maxmin(problem: &MaxMinProblem, tol: f64, t_hi: Option<f64>) -> Result<PowerSolution> {
    if !(tol > 0.0) {
        return Err(Error::invalid("bisection tolerance must be positive"));
    }
    let k = problem.num_users();
    let mut hi = t_hi.unwrap_or_else(|| problem.t_upper());
    if !(hi >= 0.0) || !hi.is_finite() {
        return Err(Error::invalid("bisection upper bound must be finite and non-negative"));
    }
    let mut lo = 0.0;
    let mut witness = vec![0.0; k];
    let mut iterations = 0;
    if let Feasibility::Feasible(eta) = feasibility_check(problem, hi)? {
        lo = hi;
        witness = eta;
    } else {
        while hi - lo >= tol * hi && iterations < MAX_BISECTION_ITERS {
            let mid = 0.5 * (lo + hi);
            iterations += 1;
            match feasibility_check(problem, mid)? {
                Feasibility::Feasible(eta) => {
                    lo = mid;
                    witness = eta;
                }
                Feasibility::Infeasible => hi = mid,
            }
        }
    }
    let infeasible = k > 0 && lo == 0.0;
    let sinr = problem.sinr(&witness);
    let rates = sinr.iter().map(|s| (1.0 + s).log2()).collect();
    Ok(PowerSolution { eta: witness, t_star: lo, sinr, rates, iterations, infeasible })
}

#[cfg(test)]
mod tests {
    use super::*;
    use cellfree_oracles::power as oracle;
    use proptest::prelude::*;

    fn problem(coupling: &[f64], omega: &[f64], m: usize, k: usize) -> MaxMinProblem {
        MaxMinProblem::new(
            DMatrix::from_row_slice(k, k, coupling),
            DMatrix::from_row_slice(m, k, omega),
            1.0,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn sinr_examples() {
        let g = DMatrix::zeros(1, 1);
        assert_eq!(evaluate_sinr_centralized(&[1.0], &g, 1.0, 1.0), vec![1.0]);
        let g = DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.0, 0.0]);
        assert_eq!(evaluate_sinr_centralized(&[0.0, 0.0], &g, 1.0, 1.0), vec![0.0, 0.0]);
        let s = evaluate_sinr_centralized(&[0.5, 0.5], &g, 1.0, 1.0);
        assert!((s[0] - 0.5 / 1.15).abs() < 1e-15);
        assert!((s[0] - 0.434_782_608_695_652_2).abs() < 1e-15);
    }

    #[test]
    fn wc_examples() {
        let gamma = DMatrix::from_row_slice(2, 2, &[0.1, 0.3, 0.2, 0.05]);
        let eta = [0.4, 0.7];
        assert_eq!(
            evaluate_sinr_wc(&eta, &gamma, &DMatrix::zeros(2, 2), 1.0, 1.0),
            evaluate_sinr_centralized(&eta, &gamma, 1.0, 1.0)
        );
        let bar = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]);
        let s = evaluate_sinr_wc(&[1.0, 1.0], &DMatrix::zeros(2, 2), &bar, 1.0, 1.0);
        assert!((s[0] - 1.0 / 1.5).abs() < 1e-15);
        // Isolated clusters: user 0 does not see user 1's power.
        let own = DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.1]);
        let a = evaluate_sinr_wc(&[1.0, 0.2], &own, &DMatrix::zeros(2, 2), 1.0, 1.0);
        let b = evaluate_sinr_wc(&[1.0, 9.0], &own, &DMatrix::zeros(2, 2), 1.0, 1.0);
        assert_eq!(a[0], b[0]);
    }

    #[test]
    fn feasibility_examples() {
        let p = problem(&[0.0, 0.0, 0.0, 0.0], &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0], 3, 2);
        assert_eq!(feasibility_check(&p, 0.0).unwrap(), Feasibility::Feasible(vec![0.0, 0.0]));
        assert_eq!(feasibility_check(&p, p.t_upper() * 1.01).unwrap(), Feasibility::Infeasible);
        // Uniform omega, no interference: sum_k eta_k = 2 t <= 1.
        assert!(matches!(feasibility_check(&p, 0.4999).unwrap(), Feasibility::Feasible(_)));
        assert_eq!(feasibility_check(&p, 0.5001).unwrap(), Feasibility::Infeasible);
        let s = solve_maxmin(&p, 1e-6, None).unwrap();
        assert!((s.t_star - 0.5).abs() < 1e-6);
    }

    #[test]
    fn unbounded_interference_is_infeasible() {
        // t A has spectral radius above one at t = 2.
        let p = problem(&[0.5, 0.5, 0.5, 0.5], &[1e-6, 1e-6], 1, 2);
        assert_eq!(feasibility_check(&p, 2.0).unwrap(), Feasibility::Infeasible);
        let s = solve_maxmin(&p, 1e-6, None).unwrap();
        assert!(s.t_star < 1.0 && s.t_star > 0.99);
    }

    #[test]
    fn single_user_closed_form() {
        let p = MaxMinProblem::new(DMatrix::from_element(1, 1, 0.3), DMatrix::from_column_slice(3, 1, &[0.5, 2.0, 1.0]), 0.2, 0.01).unwrap();
        let s = solve_maxmin(&p, 1e-8, None).unwrap();
        let exact = oracle::single_user_maxmin(0.3, &[0.5, 2.0, 1.0], 0.2, 0.01);
        assert!((s.t_star - exact).abs() <= 1e-7 * exact);
        let p = MaxMinProblem::new(DMatrix::zeros(1, 1), DMatrix::from_column_slice(2, 1, &[0.5, 2.0]), 0.2, 0.01).unwrap();
        let s = solve_maxmin(&p, 1e-8, None).unwrap();
        assert!((s.t_star - 0.2 / 0.01 * 0.5).abs() < 1e-12);
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn interference_free_closed_form() {
        let omega = vec![vec![1.0, 0.5, 0.2], vec![0.3, 0.3, 0.9]];
        let flat: Vec<f64> = omega.iter().flatten().cloned().collect();
        let p = MaxMinProblem::new(DMatrix::zeros(3, 3), DMatrix::from_row_slice(2, 3, &flat), 0.2, 1e-3).unwrap();
        let s = solve_maxmin(&p, 1e-7, None).unwrap();
        let exact = oracle::interference_free_threshold(&omega, 0.2, 1e-3);
        assert!((s.t_star - exact).abs() <= 1e-6 * exact);
    }

    #[test]
    fn symmetric_instance_equal_powers() {
        let p = problem(&[0.05, 0.02, 0.02, 0.05], &[1.0, 1.5, 1.5, 1.0, 1.2, 1.2], 3, 2);
        let s = solve_maxmin(&p, 1e-6, None).unwrap();
        assert!((s.eta[0] - s.eta[1]).abs() <= 1e-6 * s.eta[0]);
    }

    #[test]
    fn matches_grid_oracle() {
        let gamma = [[0.02, 0.01], [0.03, 0.015]];
        let omega = [[1.0, 1.6], [1.9, 1.1], [1.4, 1.4]];
        let flat: Vec<f64> = omega.iter().flatten().cloned().collect();
        let p = problem(&gamma.concat(), &flat, 3, 2);
        let s = solve_maxmin(&p, 1e-6, None).unwrap();
        let grid = oracle::grid_maxmin_two_users(gamma, &omega, 1.0, 1.0, 1000);
        assert!((s.t_star - grid).abs() < 2e-3, "{} vs {grid}", s.t_star);
        assert!(s.t_star >= grid - 1e-9);
    }

    #[test]
    fn zero_omega_user_is_unconstrained() {
        let p = MaxMinProblem::new(DMatrix::zeros(2, 2), DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), 1.0, 1.0).unwrap();
        assert_eq!(p.eta_sup(1), f64::INFINITY);
        assert!(solve_maxmin(&p, 1e-4, Some(10.0)).is_ok());
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(MaxMinProblem::new(DMatrix::zeros(2, 2), DMatrix::zeros(1, 2), 1.0, 0.0).is_err());
        assert!(MaxMinProblem::new(DMatrix::from_element(2, 2, -1.0), DMatrix::zeros(1, 2), 1.0, 1.0).is_err());
        let p = problem(&[0.0], &[1.0], 1, 1);
        assert!(feasibility_check(&p, -1.0).is_err());
        assert!(solve_maxmin(&p, 0.0, None).is_err());
    }

    fn instance() -> impl Strategy<Value = MaxMinProblem> {
        (1usize..5, 1usize..4).prop_flat_map(|(m, k)| {
            (
                proptest::collection::vec(0.0f64..0.3, k * k),
                proptest::collection::vec(0.1f64..3.0, m * k),
                0.05f64..2.0,
            )
                .prop_map(move |(g, w, s2)| {
                    MaxMinProblem::new(DMatrix::from_row_slice(k, k, &g), DMatrix::from_row_slice(m, k, &w), 1.0, s2).unwrap()
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn feasibility_is_monotone(p in instance(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let hi = p.t_upper();
            let (t1, t2) = (hi * a.min(b), hi * a.max(b));
            if let Feasibility::Feasible(_) = feasibility_check(&p, t2).unwrap() {
                prop_assert!(matches!(feasibility_check(&p, t1).unwrap(), Feasibility::Feasible(_)));
            }
        }

        #[test]
        fn solution_equalizes_and_respects_budget(p in instance()) {
            let s = solve_maxmin(&p, 1e-4, None).unwrap();
            prop_assert!(!s.infeasible);
            prop_assert!(s.eta.iter().all(|&e| e >= 0.0));
            prop_assert!(p.max_load(&s.eta) <= 1.0 + POWER_SLACK);
            for &x in &s.sinr {
                prop_assert!((x - s.t_star).abs() <= 1e-8 * s.t_star);
            }
        }

        #[test]
        fn cross_interference_lowers_sinr(p in instance(), scale in 0.0f64..0.5) {
            let k = p.num_users();
            let eta: Vec<f64> = (0..k).map(|i| 0.1 + 0.2 * i as f64).collect();
            let bar = DMatrix::from_fn(k, k, |i, j| scale * (1 + i + j) as f64);
            let c = evaluate_sinr_centralized(&eta, &p.coupling, 1.0, p.sigma2);
            let w = evaluate_sinr_wc(&eta, &p.coupling, &bar, 1.0, p.sigma2);
            for (a, b) in c.iter().zip(&w) {
                prop_assert!(b <= a);
            }
        }
    }
}
