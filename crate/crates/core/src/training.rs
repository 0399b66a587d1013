//! Uplink training: DFT pilot book, fingerprint pilot assignment, pilot
//! reception and MMSE channel estimation.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::channel::ChannelRealization;
use crate::deployment::ClusterPartition;
use crate::rng::{complex_normal, derive_seed, stream_rng};
use crate::{Error, Result, C64};

/// `tau_p` orthonormal pilot sequences, the columns of a normalized DFT matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotBook {
    pub tau_p: usize,
    pub sequences: DMatrix<C64>,
    /// `|phi_i^H phi_j|^2`.
    cross_sq: DMatrix<f64>,
}

impl PilotBook {
    pub fn sequence(&self, p: usize) -> nalgebra::DVectorView<'_, C64> {
        self.sequences.column(p)
    }

    pub fn cross_correlation_sq(&self, i: usize, j: usize) -> f64 {
        self.cross_sq[(i, j)]
    }

    pub fn gram(&self) -> DMatrix<C64> {
        self.sequences.adjoint() * &self.sequences
    }
}

pub fn build_pilot_book(tau_p: usize) -> Result<PilotBook> {
    if tau_p == 0 {
        return Err(Error::invalid("pilot length must be at least 1"));
    }
    let norm = 1.0 / (tau_p as f64).sqrt();
    let sequences = DMatrix::from_fn(tau_p, tau_p, |n, k| {
        C64::from_polar(norm, -2.0 * PI * ((n * k) % tau_p) as f64 / tau_p as f64)
    });
    let gram = sequences.adjoint() * &sequences;
    let cross_sq = gram.map(|z| z.norm_sqr());
    Ok(PilotBook { tau_p, sequences, cross_sq })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignmentScope {
    Global,
    PerCpu,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PilotAssignment {
    pub user_to_pilot: Vec<usize>,
    pub tau_p: usize,
    pub scope: AssignmentScope,
}

impl PilotAssignment {
    pub fn new(user_to_pilot: Vec<usize>, tau_p: usize, scope: AssignmentScope) -> Result<Self> {
        if let Some(&p) = user_to_pilot.iter().find(|&&p| p >= tau_p) {
            return Err(Error::invalid(format!("pilot index {p} outside book of {tau_p}")));
        }
        Ok(Self { user_to_pilot, tau_p, scope })
    }

    pub fn num_users(&self) -> usize {
        self.user_to_pilot.len()
    }

    /// Users sharing a pilot with `k` (excluding `k`).
    pub fn copilot_users(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        let p = self.user_to_pilot[k];
        self.user_to_pilot
            .iter()
            .enumerate()
            .filter(move |&(j, &q)| j != k && q == p)
            .map(|(j, _)| j)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum PilotScope<'a> {
    Global,
    PerCpu(&'a ClusterPartition),
}

/// Assigns pilots with a greedy large-scale fingerprint heuristic.
///
/// A user's fingerprint is its column of `10 log10 beta` (restricted to the
/// CPU's APs for per-CPU scope). Users are visited in a seeded random order
/// and each takes the pilot whose current holders are farthest away, i.e. the
/// one maximizing the minimum fingerprint distance; unused pilots count as
/// infinitely far, so the first `tau_p` users get distinct pilots.
pub fn assign_pilots(beta: &DMatrix<f64>, tau_p: usize, scope: PilotScope<'_>, seed: u64) -> Result<PilotAssignment> {
    if tau_p == 0 {
        return Err(Error::invalid("pilot length must be at least 1"));
    }
    if beta.iter().any(|&b| !(b >= 0.0) || !b.is_finite()) {
        return Err(Error::invalid("large-scale gains must be non-negative"));
    }
    match scope {
        PilotScope::Global => {
            let user_to_pilot = greedy_fingerprint_assignment(beta, tau_p, scoped_pilot_seed(seed, 0));
            PilotAssignment::new(user_to_pilot, tau_p, AssignmentScope::Global)
        }
        PilotScope::PerCpu(partition) => {
            if partition.num_aps() != beta.nrows() || partition.num_users() != beta.ncols() {
                return Err(Error::invalid("partition does not match the gain matrix"));
            }
            let mut user_to_pilot = vec![0; beta.ncols()];
            for d in 0..partition.num_cpus {
                let local = beta.select_rows(&partition.cluster_aps[d]).select_columns(&partition.cluster_users[d]);
                let pilots = greedy_fingerprint_assignment(&local, tau_p, scoped_pilot_seed(seed, d));
                for (&k, p) in partition.cluster_users[d].iter().zip(pilots) {
                    user_to_pilot[k] = p;
                }
            }
            PilotAssignment::new(user_to_pilot, tau_p, AssignmentScope::PerCpu)
        }
    }
}

/// Seed used for the assignment of scope `index` (CPU index, 0 for global).
pub fn scoped_pilot_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, &[index as u64])
}

/// Greedy assignment over all columns of `beta`.
pub fn greedy_fingerprint_assignment(beta: &DMatrix<f64>, tau_p: usize, seed: u64) -> Vec<usize> {
    let k = beta.ncols();
    // Zero gains are floored so fingerprints stay finite.
    let fingerprints = beta.map(|b| 10.0 * b.max(f64::MIN_POSITIVE).log10());
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(&mut stream_rng(seed, &[]));

    let mut holders: Vec<Vec<usize>> = vec![Vec::new(); tau_p];
    let mut user_to_pilot = vec![0; k];
    for &u in &order {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (p, users) in holders.iter().enumerate() {
            let score = users
                .iter()
                .map(|&v| (fingerprints.column(u) - fingerprints.column(v)).norm())
                .fold(f64::INFINITY, f64::min);
            if score > best_score {
                best_score = score;
                best = p;
            }
        }
        holders[best].push(u);
        user_to_pilot[u] = best;
    }
    user_to_pilot
}

/// Received pilot blocks, one row per AP:
/// `y_m = sqrt(tau_p P_ms) sum_k g_mk phi_k + w_m` with CN(0, sigma2) noise.
pub fn receive_pilots<R: Rng + ?Sized>(
    g: &DMatrix<C64>,
    assignment: &PilotAssignment,
    book: &PilotBook,
    p_ms: f64,
    sigma2: f64,
    rng: &mut R,
) -> DMatrix<C64> {
    let (m_aps, k_users) = g.shape();
    assert_eq!(assignment.num_users(), k_users, "assignment/channel size mismatch");
    let amp = (book.tau_p as f64 * p_ms).sqrt();
    let mut y = DMatrix::from_fn(m_aps, book.tau_p, |_, _| complex_normal(rng, sigma2));
    for k in 0..k_users {
        let phi = book.sequence(assignment.user_to_pilot[k]);
        for m in 0..m_aps {
            let c = g[(m, k)] * amp;
            for n in 0..book.tau_p {
                y[(m, n)] += c * phi[n];
            }
        }
    }
    y
}

/// Large-scale estimation statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationStats {
    /// `xi_mk = tau_p P_ms sum_k' beta_mk' |phi_k'^H phi_k|^2 + sigma2`.
    pub xi: DMatrix<f64>,
    /// Variance of the estimate, `tau_p P_ms beta^2 / xi`.
    pub alpha: DMatrix<f64>,
    /// Variance of the estimation error, `beta - alpha`.
    pub error_var: DMatrix<f64>,
    /// Estimator weight `sqrt(tau_p P_ms) beta / xi` applied to `phi_k^H y_m`.
    pub weight: DMatrix<f64>,
}

impl EstimationStats {
    pub fn compute(
        beta: &DMatrix<f64>,
        assignment: &PilotAssignment,
        book: &PilotBook,
        p_ms: f64,
        sigma2: f64,
    ) -> Result<Self> {
        let (m_aps, k_users) = beta.shape();
        if assignment.num_users() != k_users || assignment.tau_p != book.tau_p {
            return Err(Error::invalid("assignment does not match the gain matrix or pilot book"));
        }
        if !(p_ms >= 0.0) || !(sigma2 >= 0.0) {
            return Err(Error::invalid("pilot power and noise power must be non-negative"));
        }
        let tp = book.tau_p as f64 * p_ms;
        let pilots = &assignment.user_to_pilot;
        let xi = DMatrix::from_fn(m_aps, k_users, |m, k| {
            let contamination: f64 = (0..k_users)
                .map(|j| beta[(m, j)] * book.cross_correlation_sq(pilots[j], pilots[k]))
                .sum();
            tp * contamination + sigma2
        });
        let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
        let alpha = DMatrix::from_fn(m_aps, k_users, |m, k| ratio(tp * beta[(m, k)].powi(2), xi[(m, k)]));
        let error_var = beta - &alpha;
        let weight = DMatrix::from_fn(m_aps, k_users, |m, k| ratio(tp.sqrt() * beta[(m, k)], xi[(m, k)]));
        Ok(Self { xi, alpha, error_var, weight })
    }
}

/// MMSE estimate `g_hat_mk = weight_mk phi_k^H y_m` for every AP and user.
pub fn apply_mmse(y: &DMatrix<C64>, assignment: &PilotAssignment, book: &PilotBook, stats: &EstimationStats) -> DMatrix<C64> {
    // Project once per pilot; co-pilot users reuse the same projection.
    let projections = y * book.sequences.map(|z| z.conj());
    DMatrix::from_fn(y.nrows(), assignment.num_users(), |m, k| {
        projections[(m, assignment.user_to_pilot[k])] * stats.weight[(m, k)]
    })
}

/// Estimates from received pilots together with their statistics.
pub fn mmse_estimate(
    y: &DMatrix<C64>,
    beta: &DMatrix<f64>,
    assignment: &PilotAssignment,
    book: &PilotBook,
    p_ms: f64,
    sigma2: f64,
) -> Result<(DMatrix<C64>, EstimationStats)> {
    if y.nrows() != beta.nrows() || y.ncols() != book.tau_p {
        return Err(Error::invalid("received pilot block has the wrong shape"));
    }
    let stats = EstimationStats::compute(beta, assignment, book, p_ms, sigma2)?;
    Ok((apply_mmse(y, assignment, book, &stats), stats))
}

/// Everything needed to push one coherence block through training.
#[derive(Debug, Clone)]
pub struct TrainingModel {
    pub beta: DMatrix<f64>,
    pub assignment: PilotAssignment,
    pub book: PilotBook,
    pub p_ms: f64,
    pub sigma2: f64,
    pub stats: EstimationStats,
}

/// One simulated coherence block: the true channel and its estimate.
#[derive(Debug, Clone)]
pub struct TrainedBlock {
    pub channel: ChannelRealization,
    pub g_hat: DMatrix<C64>,
}

impl TrainingModel {
    pub fn new(beta: DMatrix<f64>, assignment: PilotAssignment, p_ms: f64, sigma2: f64) -> Result<Self> {
        if beta.iter().any(|&b| !(b >= 0.0) || !b.is_finite()) {
            return Err(Error::invalid("large-scale gains must be non-negative"));
        }
        let book = build_pilot_book(assignment.tau_p)?;
        let stats = EstimationStats::compute(&beta, &assignment, &book, p_ms, sigma2)?;
        Ok(Self { beta, assignment, book, p_ms, sigma2, stats })
    }

    pub fn num_aps(&self) -> usize {
        self.beta.nrows()
    }

    pub fn num_users(&self) -> usize {
        self.beta.ncols()
    }

    /// Draws fading and pilot noise, then estimates.
    pub fn simulate<R: Rng + ?Sized>(&self, rng: &mut R) -> TrainedBlock {
        let channel = ChannelRealization::draw(&self.beta, rng);
        let y = receive_pilots(&channel.g, &self.assignment, &self.book, self.p_ms, self.sigma2, rng);
        let g_hat = apply_mmse(&y, &self.assignment, &self.book, &self.stats);
        TrainedBlock { channel, g_hat }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn global(pilots: Vec<usize>, tau: usize) -> PilotAssignment {
        PilotAssignment::new(pilots, tau, AssignmentScope::Global).unwrap()
    }

    #[test]
    fn book_single() {
        let b = build_pilot_book(1).unwrap();
        assert!((b.sequences[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn book_is_orthonormal() {
        for tau in [2, 3, 15] {
            let b = build_pilot_book(tau).unwrap();
            let err = (b.gram() - DMatrix::<C64>::identity(tau, tau)).norm();
            assert!(err < 1e-12, "tau {tau}: {err}");
        }
        let b = build_pilot_book(2).unwrap();
        assert!((b.sequence(0).adjoint() * b.sequence(1))[(0, 0)].norm() < 1e-12);
        assert!(build_pilot_book(0).is_err());
    }

    #[test]
    fn enough_pilots_gives_permutation() {
        let beta = DMatrix::from_fn(6, 5, |m, k| 1e-12 * (1.0 + (m * 7 + k * 3) as f64));
        let a = assign_pilots(&beta, 5, PilotScope::Global, 1).unwrap();
        let mut p = a.user_to_pilot.clone();
        p.sort_unstable();
        assert_eq!(p, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn copilot_pairs_match_brute_force() {
        // Users 0,1 have nearly the same fingerprint, as do 2,3.
        let beta = DMatrix::<f64>::from_row_slice(3, 4, &[
            1e-10, 1.1e-10, 1e-14, 1.2e-14,
            1e-13, 0.9e-13, 1e-11, 1.1e-11,
            1e-12, 1e-12, 1e-12, 1e-12,
        ]);
        let fps: Vec<Vec<f64>> = (0..4).map(|k| (0..3).map(|m| 10.0 * beta[(m, k)].log10()).collect()).collect();
        let (best, _) = cellfree_oracles::pilots::optimal_assignments(&fps, 2);
        // Any assignment pairing a near-duplicate couple is poor.
        let poor = [vec![0, 0, 1, 1], vec![0, 0, 0, 1], vec![0, 1, 1, 1]]
            .iter()
            .map(|a| cellfree_oracles::pilots::min_copilot_distance(&fps, a))
            .fold(0.0, f64::max);
        for seed in 0..32 {
            let a = assign_pilots(&beta, 2, PilotScope::Global, seed).unwrap().user_to_pilot;
            let v = cellfree_oracles::pilots::min_copilot_distance(&fps, &a);
            assert!(v > poor && v <= best, "seed {seed}: {a:?}");
            assert_ne!(a[0], a[1]);
            assert_ne!(a[2], a[3]);
        }
    }

    #[test]
    fn per_cpu_scope_reuses_across_cpus() {
        let beta = DMatrix::from_fn(4, 6, |m, k| 1e-12 * (1.0 + (m + 2 * k) as f64));
        let part = ClusterPartition::new(2, vec![0, 0, 1, 1], vec![0, 0, 0, 1, 1, 1]).unwrap();
        let a = assign_pilots(&beta, 3, PilotScope::PerCpu(&part), 5).unwrap();
        assert_eq!(a.scope, AssignmentScope::PerCpu);
        for users in &part.cluster_users {
            let mut p: Vec<usize> = users.iter().map(|&k| a.user_to_pilot[k]).collect();
            p.sort_unstable();
            assert_eq!(p, vec![0, 1, 2]);
        }
    }

    #[test]
    fn per_cpu_scope_reads_only_own_block() {
        let mut beta = DMatrix::from_fn(4, 8, |m, k| 1e-12 * (1.0 + ((m * 5 + k * 11) % 7) as f64));
        let part = ClusterPartition::new(2, vec![0, 1, 0, 1], vec![0, 1, 0, 1, 0, 1, 0, 1]).unwrap();
        let before = assign_pilots(&beta, 2, PilotScope::PerCpu(&part), 9).unwrap();
        // Perturb every entry outside the (own APs x own users) blocks.
        for m in 0..4 {
            for k in 0..8 {
                if part.ap_to_cpu[m] != part.user_to_cpu[k] {
                    beta[(m, k)] *= 37.0;
                }
            }
        }
        assert_eq!(before, assign_pilots(&beta, 2, PilotScope::PerCpu(&part), 9).unwrap());
    }

    #[test]
    fn noiseless_single_user_reception() {
        let book = build_pilot_book(3).unwrap();
        let a = global(vec![1], 3);
        let g = DMatrix::from_element(2, 1, C64::new(0.3, -0.4));
        let y = receive_pilots(&g, &a, &book, 0.1, 0.0, &mut stream_rng(1, &[]));
        let amp = (3.0f64 * 0.1).sqrt();
        for m in 0..2 {
            for n in 0..3 {
                assert!((y[(m, n)] - g[(m, 0)] * amp * book.sequences[(n, 1)]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_power_is_noise_only() {
        let book = build_pilot_book(2).unwrap();
        let a = global(vec![0, 1], 2);
        let g = DMatrix::from_element(3, 2, C64::new(5.0, 5.0));
        let y = receive_pilots(&g, &a, &book, 0.0, 1.0, &mut stream_rng(2, &[]));
        let noise = receive_pilots(&DMatrix::zeros(3, 2), &a, &book, 0.0, 1.0, &mut stream_rng(2, &[]));
        assert_eq!(y, noise);
    }

    #[test]
    fn copilot_projection_sums_channels() {
        let book = build_pilot_book(2).unwrap();
        let a = global(vec![1, 1], 2);
        let g = DMatrix::from_row_slice(1, 2, &[C64::new(1.0, 2.0), C64::new(-0.5, 0.25)]);
        let y = receive_pilots(&g, &a, &book, 0.2, 0.0, &mut stream_rng(3, &[]));
        let proj = (book.sequence(1).adjoint() * y.row(0).transpose())[(0, 0)];
        let expected = (g[(0, 0)] + g[(0, 1)]) * (2.0f64 * 0.2).sqrt();
        assert!((proj - expected).norm() < 1e-14);
    }

    #[test]
    fn noiseless_orthogonal_estimate_is_exact() {
        let book = build_pilot_book(3).unwrap();
        let a = global(vec![0, 2, 1], 3);
        let beta = DMatrix::from_fn(2, 3, |m, k| 1e-12 * (1 + m + k) as f64);
        let g = ChannelRealization::draw(&beta, &mut stream_rng(4, &[])).g;
        let y = receive_pilots(&g, &a, &book, 0.1, 0.0, &mut stream_rng(5, &[]));
        let (g_hat, stats) = mmse_estimate(&y, &beta, &a, &book, 0.1, 0.0).unwrap();
        assert!((g_hat - &g).norm() <= 1e-10 * g.norm());
        assert!((stats.alpha - &beta).norm() <= 1e-12 * beta.norm());
    }

    #[test]
    fn zero_pilot_power_collapses_estimate() {
        let book = build_pilot_book(2).unwrap();
        let a = global(vec![0, 1], 2);
        let beta = DMatrix::from_element(2, 2, 1e-12);
        let g = ChannelRealization::draw(&beta, &mut stream_rng(6, &[])).g;
        let y = receive_pilots(&g, &a, &book, 0.0, 1e-13, &mut stream_rng(7, &[]));
        let (g_hat, stats) = mmse_estimate(&y, &beta, &a, &book, 0.0, 1e-13).unwrap();
        assert!(g_hat.iter().all(|z| z.norm() == 0.0));
        assert!(stats.alpha.iter().all(|&x| x == 0.0));
        // Degenerate limit: no pilot power and no noise.
        let (_, stats) = mmse_estimate(&y, &beta, &a, &book, 0.0, 0.0).unwrap();
        assert!(stats.alpha.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn stats_bounds() {
        let book = build_pilot_book(2).unwrap();
        let a = global(vec![0, 1, 0, 1], 2);
        let beta = DMatrix::from_fn(3, 4, |m, k| 1e-13 * (1 + 2 * m + k) as f64);
        let s = EstimationStats::compute(&beta, &a, &book, 0.1, 6e-13).unwrap();
        for i in 0..beta.len() {
            assert!(s.alpha[i] > 0.0 && s.alpha[i] < beta[i]);
            assert!(s.xi[i] >= 6e-13);
            assert!((s.error_var[i] - (beta[i] - s.alpha[i])).abs() == 0.0);
        }
    }

    #[test]
    fn contamination_is_monotone() {
        let book = build_pilot_book(2).unwrap();
        let beta2 = DMatrix::from_row_slice(1, 2, &[1e-12, 1e-12]);
        let beta3 = DMatrix::from_row_slice(1, 3, &[1e-12, 1e-12, 3e-13]);
        let before = EstimationStats::compute(&beta2, &global(vec![0, 1], 2), &book, 0.1, 1e-13).unwrap();
        let after = EstimationStats::compute(&beta3, &global(vec![0, 1, 0], 2), &book, 0.1, 1e-13).unwrap();
        assert!(after.xi[(0, 0)] > before.xi[(0, 0)]);
        assert!(after.alpha[(0, 0)] < before.alpha[(0, 0)]);
        assert_eq!(after.xi[(0, 1)], before.xi[(0, 1)]);
    }

    #[test]
    fn estimate_variance_and_orthogonality() {
        let a = global(vec![0, 1, 0, 1], 2);
        let beta = DMatrix::from_fn(3, 4, |m, k| 1e-13 * (1 + 2 * m + k) as f64);
        let model = TrainingModel::new(beta.clone(), a, 0.1, 5e-13).unwrap();
        let n = 10_000;
        let mut rng = stream_rng(8, &[]);
        let mut var = DMatrix::<f64>::zeros(3, 4);
        let mut err_var = DMatrix::<f64>::zeros(3, 4);
        let mut cross = DMatrix::<C64>::zeros(3, 4);
        let mut cross_pow = DMatrix::<f64>::zeros(3, 4);
        for _ in 0..n {
            let b = model.simulate(&mut rng);
            for i in 0..beta.len() {
                let e = b.channel.g[i] - b.g_hat[i];
                var[i] += b.g_hat[i].norm_sqr();
                err_var[i] += e.norm_sqr();
                cross[i] += b.g_hat[i] * e.conj();
                cross_pow[i] += (b.g_hat[i] * e.conj()).norm_sqr();
            }
        }
        let n = n as f64;
        for i in 0..beta.len() {
            let alpha = model.stats.alpha[i];
            assert!((var[i] / n / alpha - 1.0).abs() < 0.05);
            assert!((err_var[i] / n / (beta[i] - alpha) - 1.0).abs() < 0.05);
            let se = (cross_pow[i] / n / n).sqrt();
            assert!((cross[i] / n).norm() < 3.0 * se);
        }
    }

    #[test]
    fn copilot_estimates_share_projection() {
        let a = global(vec![0, 0], 1);
        let beta = DMatrix::from_row_slice(2, 2, &[1e-12, 4e-13, 2e-13, 1e-12]);
        let model = TrainingModel::new(beta, a, 0.1, 1e-13).unwrap();
        let b = model.simulate(&mut stream_rng(9, &[]));
        for m in 0..2 {
            let r0 = b.g_hat[(m, 0)] / model.stats.weight[(m, 0)];
            let r1 = b.g_hat[(m, 1)] / model.stats.weight[(m, 1)];
            assert!((r0 - r1).norm() <= 1e-12 * r0.norm());
        }
    }
}
