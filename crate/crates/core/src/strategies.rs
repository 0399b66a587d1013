//! One simulation trial per CPU connectivity model.
//!
//! - SC (strong): CPUs share all CSI, so the network acts as one centralized
//!   precoder with a single max-min program.
//! - WC (weak): each CPU zero-forces on its own estimates, while large-scale
//!   statistics (including the cross-cluster `gamma_bar`) are shared and power
//!   is allocated jointly.
//! - NC (none): each CPU assigns pilots, estimates statistics and allocates
//!   power from its own [`CpuView`] alone. The reported SINRs are the ones
//!   actually achieved once all clusters transmit together.
//!
//! All random streams are keyed by the trial seed and do not depend on the
//! number of CPUs, so SC results are identical for every partition and WC/NC
//! with a single CPU reproduce SC exactly.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::deployment::ClusterPartition;
use crate::exec::map_indexed;
use crate::power_control::{evaluate_sinr_wc, solve_maxmin, MaxMinProblem, PowerSolution};
use crate::precoding::{estimate_interference, InterferenceStats, MonteCarloOptions, PrecodingLayout};
use crate::rng::{derive_seed, stream};
use crate::training::{
    assign_pilots, greedy_fingerprint_assignment, scoped_pilot_seed, AssignmentScope, PilotAssignment, PilotScope,
    TrainingModel,
};
use crate::{Error, Exec, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "SC")]
    Sc,
    #[serde(rename = "WC")]
    Wc,
    #[serde(rename = "NC")]
    Nc,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Sc, Strategy::Wc, Strategy::Nc];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Sc => "SC",
            Strategy::Wc => "WC",
            Strategy::Nc => "NC",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SC" => Ok(Strategy::Sc),
            "WC" => Ok(Strategy::Wc),
            "NC" => Ok(Strategy::Nc),
            other => Err(Error::Config(format!("unknown strategy '{other}' (expected SC, WC or NC)"))),
        }
    }
}

/// Everything a trial needs for one large-scale throw.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub beta: DMatrix<f64>,
    pub partition: ClusterPartition,
    pub tau_p: usize,
    pub p_ap: f64,
    pub p_ms: f64,
    pub sigma2: f64,
    pub n_mc: usize,
    pub tol: f64,
    /// Trial seed; pilot and Monte-Carlo streams are derived from it.
    pub seed: u64,
    pub exec: Exec,
}

impl Scenario {
    pub fn num_aps(&self) -> usize {
        self.beta.nrows()
    }

    pub fn num_users(&self) -> usize {
        self.beta.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.partition.num_aps() != self.num_aps() || self.partition.num_users() != self.num_users() {
            return Err(Error::invalid("partition does not match the gain matrix"));
        }
        if self.beta.iter().any(|&b| !(b >= 0.0) || !b.is_finite()) {
            return Err(Error::invalid("large-scale gains must be non-negative"));
        }
        if self.tau_p == 0 || self.n_mc == 0 || !(self.tol > 0.0) {
            return Err(Error::invalid("pilot length, draw count and tolerance must be positive"));
        }
        Ok(())
    }

    pub fn pilot_seed(&self) -> u64 {
        derive_seed(self.seed, &[stream::PILOTS])
    }

    /// Monte-Carlo seed for scope `index`: 0 for network-wide statistics,
    /// the CPU index for an NC local estimate.
    pub fn mc_seed(&self, index: usize) -> u64 {
        derive_seed(self.seed, &[stream::MONTE_CARLO, index as u64])
    }

    /// Seed of the fading realizations used for empirical cross-checks.
    pub fn fading_seed(&self) -> u64 {
        derive_seed(self.seed, &[stream::FADING])
    }

    fn mc(&self, index: usize) -> MonteCarloOptions {
        MonteCarloOptions::new(self.n_mc, self.mc_seed(index)).with_exec(self.exec)
    }
}

/// The information available to an NC CPU: its own APs, its own users and
/// the large-scale gains between them, nothing else.
#[derive(Debug, Clone, PartialEq)]
pub struct CpuView {
    pub cpu: usize,
    /// Global indices of the CPU's APs and users, used only to map results back.
    pub aps: Vec<usize>,
    pub users: Vec<usize>,
    /// `M_d x K_d`.
    pub beta: DMatrix<f64>,
}

impl CpuView {
    pub fn extract(beta: &DMatrix<f64>, partition: &ClusterPartition, cpu: usize) -> Self {
        let aps = partition.cluster_aps[cpu].clone();
        let users = partition.cluster_users[cpu].clone();
        let local = beta.select_rows(&aps).select_columns(&users);
        Self { cpu, aps, users, beta: local }
    }
}

/// Power plan computed by one NC CPU from its [`CpuView`].
#[derive(Debug, Clone, PartialEq)]
pub struct LocalPlan {
    pub cpu: usize,
    /// Local pilot index per local user.
    pub pilots: Vec<usize>,
    pub stats: InterferenceStats,
    pub solution: PowerSolution,
}

/// Plans one NC CPU. Reads nothing outside `view`.
pub fn plan_local(view: &CpuView, scenario: &Scenario) -> Result<LocalPlan> {
    let pilots = greedy_fingerprint_assignment(&view.beta, scenario.tau_p, scoped_pilot_seed(scenario.pilot_seed(), view.cpu));
    let assignment = PilotAssignment::new(pilots.clone(), scenario.tau_p, AssignmentScope::PerCpu)?;
    let model = TrainingModel::new(view.beta.clone(), assignment, scenario.p_ms, scenario.sigma2)?;
    let layout = PrecodingLayout::global(view.aps.len(), view.users.len());
    let stats = estimate_interference(&model, &layout, &scenario.mc(view.cpu))?;
    let problem = MaxMinProblem::new(stats.gamma.clone(), stats.omega.clone(), scenario.p_ap, scenario.sigma2)?;
    let solution = solve_maxmin(&problem, scenario.tol, None)?;
    Ok(LocalPlan { cpu: view.cpu, pilots, stats, solution })
}

/// Outcome of one trial.
#[derive(Debug, Clone)]
pub struct RateReport {
    pub strategy: Strategy,
    pub num_cpus: usize,
    pub num_users: usize,
    pub seed: u64,
    /// Power coefficients over global user indices.
    pub eta: Vec<f64>,
    pub sinr: Vec<f64>,
    /// `log2(1 + SINR)` per user.
    pub rates: Vec<f64>,
    /// Max-min SINR of the power program (for NC the smallest local value).
    pub t_star: f64,
    pub min_rate: f64,
    pub max_rate: f64,
    pub mean_rate: f64,
    /// `max_rate / min_rate`; infinite when some user gets no rate.
    pub quotient: f64,
    /// Statistics the reported SINRs were evaluated with.
    pub stats: InterferenceStats,
    /// Training chain and precoding layout actually used on air.
    pub model: TrainingModel,
    pub layout: PrecodingLayout,
    /// NC only: the per-CPU plans.
    pub local_plans: Vec<LocalPlan>,
}

impl RateReport {
    #[allow(clippy::too_many_arguments)]
    fn new(
        strategy: Strategy,
        scenario: &Scenario,
        eta: Vec<f64>,
        sinr: Vec<f64>,
        t_star: f64,
        stats: InterferenceStats,
        model: TrainingModel,
        layout: PrecodingLayout,
        local_plans: Vec<LocalPlan>,
    ) -> Self {
        let rates: Vec<f64> = sinr.iter().map(|s| (1.0 + s).log2()).collect();
        let (min_rate, max_rate, mean_rate) = summarize(&rates);
        let quotient = if min_rate > 0.0 { max_rate / min_rate } else { f64::INFINITY };
        Self {
            strategy,
            num_cpus: scenario.partition.num_cpus,
            num_users: scenario.num_users(),
            seed: scenario.seed,
            eta,
            sinr,
            rates,
            t_star,
            min_rate,
            max_rate,
            mean_rate,
            quotient,
            stats,
            model,
            layout,
            local_plans,
        }
    }

    /// SINRs measured over `n_fading` fresh coherence blocks with the
    /// allocated powers, using the use-and-forget bound
    /// `P eta_k |E g_k^T w_k|^2 / (P sum_j eta_j E|g_k^T w_j|^2 - P eta_k |E g_k^T w_k|^2 + sigma2)`.
    pub fn empirical_sinr(&self, n_fading: usize, seed: u64, exec: Exec, p_ap: f64) -> Result<Vec<f64>> {
        let stats = estimate_interference(&self.model, &self.layout, &MonteCarloOptions::new(n_fading, seed).with_exec(exec))?;
        Ok(use_and_forget_sinr(&self.eta, &stats.gain, &stats.cross_power, p_ap, self.model.sigma2))
    }
}

fn summarize(rates: &[f64]) -> (f64, f64, f64) {
    if rates.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let min = rates.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (min, max, rates.iter().sum::<f64>() / rates.len() as f64)
}

/// Use-and-forget SINR from averaged effective gains.
pub fn use_and_forget_sinr(eta: &[f64], gain: &DVector<C64>, cross_power: &DMatrix<f64>, p_ap: f64, sigma2: f64) -> Vec<f64> {
    (0..eta.len())
        .map(|k| {
            let signal = p_ap * eta[k] * gain[k].norm_sqr();
            let total: f64 = (0..eta.len()).map(|j| p_ap * eta[j] * cross_power[(k, j)]).sum();
            if signal == 0.0 {
                0.0
            } else {
                signal / ((total - signal).max(0.0) + sigma2)
            }
        })
        .collect()
}

fn global_model(scenario: &Scenario) -> Result<TrainingModel> {
    let assignment = assign_pilots(&scenario.beta, scenario.tau_p, PilotScope::Global, scenario.pilot_seed())?;
    TrainingModel::new(scenario.beta.clone(), assignment, scenario.p_ms, scenario.sigma2)
}

/// Strong connectivity: global precoder and a single max-min program.
pub fn run_sc(scenario: &Scenario) -> Result<RateReport> {
    scenario.validate()?;
    let model = global_model(scenario)?;
    let layout = PrecodingLayout::global(scenario.num_aps(), scenario.num_users());
    let stats = estimate_interference(&model, &layout, &scenario.mc(0))?;
    let problem = MaxMinProblem::new(stats.gamma.clone(), stats.omega.clone(), scenario.p_ap, scenario.sigma2)?;
    let sol = solve_maxmin(&problem, scenario.tol, None)?;
    Ok(RateReport::new(Strategy::Sc, scenario, sol.eta, sol.sinr, sol.t_star, stats, model, layout, Vec::new()))
}

/// Weak connectivity: per-CPU precoders, joint power allocation with the
/// shared cross-cluster statistics.
pub fn run_wc(scenario: &Scenario) -> Result<RateReport> {
    scenario.validate()?;
    let model = global_model(scenario)?;
    let layout = PrecodingLayout::from_partition(&scenario.partition);
    let stats = estimate_interference(&model, &layout, &scenario.mc(0))?;
    let problem = MaxMinProblem::new(stats.coupling(), stats.omega.clone(), scenario.p_ap, scenario.sigma2)?;
    let sol = solve_maxmin(&problem, scenario.tol, None)?;
    Ok(RateReport::new(Strategy::Wc, scenario, sol.eta, sol.sinr, sol.t_star, stats, model, layout, Vec::new()))
}

/// No connectivity: independent local plans, evaluated on the network that
/// actually results when every CPU transmits with its own plan.
pub fn run_nc(scenario: &Scenario) -> Result<RateReport> {
    scenario.validate()?;
    let partition = &scenario.partition;
    let views: Vec<CpuView> = (0..partition.num_cpus).map(|d| CpuView::extract(&scenario.beta, partition, d)).collect();
    let plans = map_indexed(scenario.exec, views.len(), |d| {
        if views[d].users.is_empty() {
            Ok(None)
        } else {
            plan_local(&views[d], scenario).map(Some)
        }
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let plans: Vec<LocalPlan> = plans.into_iter().flatten().collect();

    let mut user_to_pilot = vec![0; scenario.num_users()];
    let mut eta = vec![0.0; scenario.num_users()];
    for plan in &plans {
        for (i, &k) in views[plan.cpu].users.iter().enumerate() {
            user_to_pilot[k] = plan.pilots[i];
            eta[k] = plan.solution.eta[i];
        }
    }
    let assignment = PilotAssignment::new(user_to_pilot, scenario.tau_p, AssignmentScope::PerCpu)?;
    let model = TrainingModel::new(scenario.beta.clone(), assignment, scenario.p_ms, scenario.sigma2)?;
    let layout = PrecodingLayout::from_partition(partition);
    let stats = estimate_interference(&model, &layout, &scenario.mc(0))?;
    let sinr = evaluate_sinr_wc(&eta, &stats.gamma, &stats.gamma_bar, scenario.p_ap, scenario.sigma2);
    let t_star = plans.iter().map(|p| p.solution.t_star).fold(f64::INFINITY, f64::min);
    let t_star = if t_star.is_finite() { t_star } else { 0.0 };
    Ok(RateReport::new(Strategy::Nc, scenario, eta, sinr, t_star, stats, model, layout, plans))
}

pub fn run_strategy(strategy: Strategy, scenario: &Scenario) -> Result<RateReport> {
    match strategy {
        Strategy::Sc => run_sc(scenario),
        Strategy::Wc => run_wc(scenario),
        Strategy::Nc => run_nc(scenario),
    }
}

/// Per-CPU transmit signals obtained by selecting each CPU's user columns of
/// the network-wide power-controlled precoder; they add up to `W P^(1/2) s`.
pub fn column_selection_transmit(w: &DMatrix<C64>, eta: &[f64], partition: &ClusterPartition, symbols: &[C64]) -> Vec<DVector<C64>> {
    partition
        .cluster_users
        .iter()
        .map(|users| {
            let mut x = DVector::zeros(w.nrows());
            for &k in users {
                x += w.column(k) * (symbols[k] * eta[k].sqrt());
            }
            x
        })
        .collect()
}
