//! Zero-forcing precoders and Monte-Carlo interference statistics.
//!
//! A [`PrecodingLayout`] lists the (APs, users) blocks that are zero-forced
//! independently: a single block for centralized precoding, one block per CPU
//! otherwise. The engine in [`estimate_interference`] pushes independent
//! coherence blocks through the training chain, forms the per-block
//! precoders on the estimates and averages
//!
//! - `gamma[k, l]`: `sum_m (beta - alpha)_mk |w_ml|^2` over the APs of the block
//!   serving both `k` and `l` (estimation-error leakage),
//! - `gamma_bar[k, l]`: `|g_k^T w_l|^2` for `l` served by a block not serving `k`,
//! - `omega[m, k]`: `|w_mk|^2`,
//! - `gain[k]`: `g_k^T w_k` and `cross_power[k, l]`: `|g_k^T w_l|^2` for all pairs.

use nalgebra::{DMatrix, DVector};

use crate::deployment::ClusterPartition;
use crate::exec::{chunks, map_indexed};
use crate::linalg::right_pseudo_inverse;
use crate::rng::{stream, stream_rng, SimRng};
use crate::training::{TrainedBlock, TrainingModel};
use crate::{Error, Exec, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecoderScope {
    Global,
    Cluster(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZfPrecoder {
    /// `M x K` (or `M_d x K_d`) with `G_hat^T w = I`.
    pub w: DMatrix<C64>,
    pub scope: PrecoderScope,
}

/// Minimum-norm zero-forcing precoder `W = G_hat* (G_hat^T G_hat*)^-1`.
pub fn zf_precoder(g_hat: &DMatrix<C64>, scope: PrecoderScope) -> Result<ZfPrecoder> {
    Ok(ZfPrecoder { w: right_pseudo_inverse(g_hat)?, scope })
}

/// Blocks of (AP indices, user indices) precoded independently.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecodingLayout {
    pub num_aps: usize,
    pub num_users: usize,
    pub blocks: Vec<(Vec<usize>, Vec<usize>)>,
}

impl PrecodingLayout {
    pub fn global(num_aps: usize, num_users: usize) -> Self {
        Self { num_aps, num_users, blocks: vec![((0..num_aps).collect(), (0..num_users).collect())] }
    }

    pub fn from_partition(partition: &ClusterPartition) -> Self {
        Self {
            num_aps: partition.num_aps(),
            num_users: partition.num_users(),
            blocks: partition.cluster_aps.iter().cloned().zip(partition.cluster_users.iter().cloned()).collect(),
        }
    }

    /// Block index serving each user.
    pub fn user_block(&self) -> Vec<usize> {
        let mut owner = vec![usize::MAX; self.num_users];
        for (b, (_, users)) in self.blocks.iter().enumerate() {
            for &k in users {
                owner[k] = b;
            }
        }
        owner
    }

    fn validate(&self) -> Result<()> {
        let owner = self.user_block();
        if owner.contains(&usize::MAX) {
            return Err(Error::invalid("precoding layout leaves a user unserved"));
        }
        let mut seen = vec![false; self.num_aps];
        for (aps, _) in &self.blocks {
            for &m in aps {
                if m >= self.num_aps || std::mem::replace(&mut seen[m], true) {
                    return Err(Error::invalid("precoding layout APs must be disjoint and in range"));
                }
            }
        }
        Ok(())
    }

    /// Effective network precoder: block precoders placed into an `M x K`
    /// matrix, zero where an AP does not serve a user.
    pub fn assemble(&self, g_hat: &DMatrix<C64>) -> Result<DMatrix<C64>> {
        let mut w = DMatrix::zeros(self.num_aps, self.num_users);
        for (b, (aps, users)) in self.blocks.iter().enumerate() {
            if users.is_empty() {
                continue;
            }
            let local = g_hat.select_rows(aps).select_columns(users);
            let p = zf_precoder(&local, PrecoderScope::Cluster(b))?;
            for (j, &l) in users.iter().enumerate() {
                for (i, &m) in aps.iter().enumerate() {
                    w[(m, l)] = p.w[(i, j)];
                }
            }
        }
        Ok(w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloOptions {
    pub n_mc: usize,
    pub seed: u64,
    pub exec: Exec,
}

impl MonteCarloOptions {
    pub fn new(n_mc: usize, seed: u64) -> Self {
        Self { n_mc, seed, exec: Exec::default() }
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }
}

/// RNG for draw `index` of the Monte-Carlo run keyed by `seed`.
pub fn draw_rng(seed: u64, index: usize) -> SimRng {
    stream_rng(seed, &[stream::DRAW, index as u64])
}

/// Monte-Carlo averages with standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceStats {
    pub gamma: DMatrix<f64>,
    pub gamma_se: DMatrix<f64>,
    pub gamma_bar: DMatrix<f64>,
    pub gamma_bar_se: DMatrix<f64>,
    pub omega: DMatrix<f64>,
    pub omega_se: DMatrix<f64>,
    pub gain: DVector<C64>,
    pub cross_power: DMatrix<f64>,
    /// Accepted draws.
    pub n_mc: usize,
    /// Draws skipped because a block precoder was singular.
    pub singular_draws: usize,
}

impl InterferenceStats {
    /// Coupling matrix `gamma + gamma_bar` of the SINR denominator.
    pub fn coupling(&self) -> DMatrix<f64> {
        &self.gamma + &self.gamma_bar
    }
}

#[derive(Debug, Clone)]
struct Sample {
    gamma: DMatrix<f64>,
    gamma_bar: DMatrix<f64>,
    omega: DMatrix<f64>,
    b: DMatrix<C64>,
}

/// Per-draw quantities for one trained block, or `None` if singular.
fn sample_block(model: &TrainingModel, layout: &PrecodingLayout, owner: &[usize], block: &TrainedBlock) -> Option<Sample> {
    let (m_aps, k_users) = (layout.num_aps, layout.num_users);
    let mut gamma = DMatrix::zeros(k_users, k_users);
    let mut omega = DMatrix::zeros(m_aps, k_users);
    let mut b = DMatrix::zeros(k_users, k_users);
    for (aps, users) in &layout.blocks {
        if users.is_empty() {
            continue;
        }
        let local = block.g_hat.select_rows(aps).select_columns(users);
        let w = right_pseudo_inverse(&local).ok()?;
        let w_sq = w.map(|z| z.norm_sqr());
        for (j, &l) in users.iter().enumerate() {
            for (i, &m) in aps.iter().enumerate() {
                omega[(m, l)] = w_sq[(i, j)];
            }
            for &k in users {
                gamma[(k, l)] = aps.iter().enumerate().map(|(i, &m)| model.stats.error_var[(m, k)] * w_sq[(i, j)]).sum();
            }
            for k in 0..k_users {
                b[(k, l)] = aps.iter().enumerate().map(|(i, &m)| block.channel.g[(m, k)] * w[(i, j)]).sum::<C64>();
            }
        }
    }
    let gamma_bar = DMatrix::from_fn(k_users, k_users, |k, l| if owner[k] == owner[l] { 0.0 } else { b[(k, l)].norm_sqr() });
    Some(Sample { gamma, gamma_bar, omega, b })
}

#[derive(Debug, Clone)]
struct Accumulator {
    gamma: [DMatrix<f64>; 2],
    gamma_bar: [DMatrix<f64>; 2],
    omega: [DMatrix<f64>; 2],
    gain: DVector<C64>,
    cross_power: DMatrix<f64>,
    accepted: usize,
    singular: usize,
}

impl Accumulator {
    fn new(m_aps: usize, k_users: usize) -> Self {
        let kk = || [DMatrix::zeros(k_users, k_users), DMatrix::zeros(k_users, k_users)];
        Self {
            gamma: kk(),
            gamma_bar: kk(),
            omega: [DMatrix::zeros(m_aps, k_users), DMatrix::zeros(m_aps, k_users)],
            gain: DVector::zeros(k_users),
            cross_power: DMatrix::zeros(k_users, k_users),
            accepted: 0,
            singular: 0,
        }
    }

    fn add(&mut self, s: Option<Sample>) {
        let Some(s) = s else {
            self.singular += 1;
            return;
        };
        let push = |acc: &mut [DMatrix<f64>; 2], x: &DMatrix<f64>| {
            acc[0] += x;
            acc[1] += x.component_mul(x);
        };
        push(&mut self.gamma, &s.gamma);
        push(&mut self.gamma_bar, &s.gamma_bar);
        push(&mut self.omega, &s.omega);
        self.gain += s.b.diagonal();
        self.cross_power += s.b.map(|z| z.norm_sqr());
        self.accepted += 1;
    }

    fn merge(&mut self, other: Accumulator) {
        for (a, b) in [(&mut self.gamma, other.gamma), (&mut self.gamma_bar, other.gamma_bar), (&mut self.omega, other.omega)] {
            a[0] += b[0].clone();
            a[1] += b[1].clone();
        }
        self.gain += other.gain;
        self.cross_power += other.cross_power;
        self.accepted += other.accepted;
        self.singular += other.singular;
    }

    fn finish(self) -> InterferenceStats {
        let n = self.accepted as f64;
        let mean = |a: &[DMatrix<f64>; 2]| a[0].map(|s| s / n);
        let se = |a: &[DMatrix<f64>; 2]| {
            a[0].zip_map(&a[1], |s, sq| {
                if self.accepted < 2 {
                    return 0.0;
                }
                let var = ((sq - s * s / n) / (n - 1.0)).max(0.0);
                (var / n).sqrt()
            })
        };
        InterferenceStats {
            gamma: mean(&self.gamma),
            gamma_se: se(&self.gamma),
            gamma_bar: mean(&self.gamma_bar),
            gamma_bar_se: se(&self.gamma_bar),
            omega: mean(&self.omega),
            omega_se: se(&self.omega),
            gain: self.gain.map(|z| z / n),
            cross_power: self.cross_power.map(|s| s / n),
            n_mc: self.accepted,
            singular_draws: self.singular,
        }
    }
}

/// Draws per reduction chunk. Fixed so results do not depend on scheduling.
const CHUNK: usize = 32;

/// Monte-Carlo interference statistics for `layout` under `model`.
///
/// Draw `i` uses [`draw_rng`]`(seed, i)`. Singular draws are skipped and
/// replaced by further draw indices; more than 10% singular draws abort with
/// [`Error::TooManySingular`].
pub fn estimate_interference(model: &TrainingModel, layout: &PrecodingLayout, opts: &MonteCarloOptions) -> Result<InterferenceStats> {
    if opts.n_mc == 0 {
        return Err(Error::invalid("Monte-Carlo draw count must be at least 1"));
    }
    if layout.num_aps != model.num_aps() || layout.num_users != model.num_users() {
        return Err(Error::invalid("precoding layout does not match the training model"));
    }
    layout.validate()?;
    let owner = layout.user_block();
    let mut total = Accumulator::new(layout.num_aps, layout.num_users);
    let mut next = 0;
    while total.accepted < opts.n_mc {
        let batch = next..next + (opts.n_mc - total.accepted);
        let ranges = chunks(batch.len(), CHUNK);
        let partials = map_indexed(opts.exec, ranges.len(), |c| {
            let mut acc = Accumulator::new(layout.num_aps, layout.num_users);
            for i in ranges[c].clone() {
                let block = model.simulate(&mut draw_rng(opts.seed, batch.start + i));
                acc.add(sample_block(model, layout, &owner, &block));
            }
            acc
        });
        for p in partials {
            total.merge(p);
        }
        next = batch.end;
        if total.singular * 10 > next {
            return Err(Error::TooManySingular { singular: total.singular, attempted: next });
        }
    }
    Ok(total.finish())
}

/// Own-scope `gamma` and `omega` for centralized precoding over all APs.
pub fn estimate_gamma(model: &TrainingModel, opts: &MonteCarloOptions) -> Result<InterferenceStats> {
    estimate_interference(model, &PrecodingLayout::global(model.num_aps(), model.num_users()), opts)
}

/// Per-cluster precoding statistics, including the cross-cluster `gamma_bar`.
pub fn estimate_gamma_bar(model: &TrainingModel, partition: &ClusterPartition, opts: &MonteCarloOptions) -> Result<InterferenceStats> {
    estimate_interference(model, &PrecodingLayout::from_partition(partition), opts)
}
