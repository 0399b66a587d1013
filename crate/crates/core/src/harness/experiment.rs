use crate::channel::LargeScaleState;
use crate::deployment::{associate_users, cluster_aps, generate_deployment, ApClusters, ClusterPartition, NetworkGeometry};
use crate::exec::map_indexed;
use crate::rng::{derive_seed, stream};
use crate::strategies::{run_strategy, Scenario};
use crate::{Exec, Result};

use super::results::{aggregate, ResultRow, ResultTable, RowKind};
use super::{compute_rate, ScenarioConfig};

/// Seed of throw `index`. Independent of D, K and the strategy list.
pub fn throw_seed(master_seed: u64, index: usize) -> u64 {
    derive_seed(master_seed, &[stream::THROW, index as u64])
}

/// Large-scale state of one throw.
#[derive(Debug, Clone)]
pub struct ThrowSetup {
    pub index: usize,
    pub seed: u64,
    pub geometry: NetworkGeometry,
    pub large_scale: LargeScaleState,
    pub clusters: ApClusters,
    pub partition: ClusterPartition,
}

impl ThrowSetup {
    pub fn scenario(&self, config: &ScenarioConfig, exec: Exec) -> Scenario {
        Scenario {
            beta: self.large_scale.beta.clone(),
            partition: self.partition.clone(),
            tau_p: config.tau_p,
            p_ap: config.p_ap_w,
            p_ms: config.p_ms_w,
            sigma2: config.sigma2(),
            n_mc: config.n_mc,
            tol: config.bisection_tol,
            seed: self.seed,
            exec,
        }
    }
}

/// Deployment, shadowing, AP clustering and user association for a throw.
pub fn prepare_throw(config: &ScenarioConfig, index: usize) -> Result<ThrowSetup> {
    let seed = throw_seed(config.master_seed, index);
    let geometry = generate_deployment(
        derive_seed(seed, &[stream::DEPLOYMENT]),
        config.num_aps,
        config.num_users,
        config.side_length_m,
    )?;
    let large_scale = LargeScaleState::generate(&geometry, &config.large_scale(), seed)?;
    let clusters = cluster_aps(&geometry, config.num_cpus, derive_seed(seed, &[stream::KMEANS]))?;
    let partition = associate_users(&large_scale.beta, &clusters)?;
    Ok(ThrowSetup { index, seed, geometry, large_scale, clusters, partition })
}

fn opt(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Raw rows of one throw, one per configured strategy.
///
/// Power is allocated once from large-scale statistics; the fading loop then
/// measures the achieved minimum rate over `n_fading` fresh blocks. Trials
/// failing on a degenerate draw are reported with `dropped_trials = 1`.
pub fn run_throw(config: &ScenarioConfig, index: usize, exec: Exec) -> Result<Vec<ResultRow>> {
    let setup = prepare_throw(config, index)?;
    let scenario = setup.scenario(config, exec);
    let mut rows = Vec::with_capacity(config.strategies.len());
    for &strategy in &config.strategies {
        let mut row = ResultRow::raw(strategy, config.num_cpus, config.num_users, index, setup.seed);
        let outcome = run_strategy(strategy, &scenario).and_then(|report| {
            let emp = report.empirical_sinr(config.n_fading, scenario.fading_seed(), exec, config.p_ap_w)?;
            Ok((report, emp))
        });
        match outcome {
            Ok((report, emp)) => {
                let rates: Vec<f64> = report.sinr.iter().map(|&s| compute_rate(s, config)).collect();
                let min = rates.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let emp_min = emp.iter().cloned().fold(f64::INFINITY, f64::min);
                row.n = 1;
                row.min_rate = opt(min);
                row.max_rate = opt(max);
                row.quotient = if min > 0.0 { opt(max / min) } else { None };
                row.mean_rate = opt(rates.iter().sum::<f64>() / rates.len() as f64);
                row.t_star = opt(report.t_star);
                row.emp_min_rate = opt(compute_rate(emp_min, config));
            }
            Err(e) if e.is_degenerate_draw() => row.dropped_trials = 1,
            Err(e) => return Err(e),
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Runs every throw of `config` and appends one aggregate row per strategy.
pub fn run_experiment(config: &ScenarioConfig, exec: Exec) -> Result<ResultTable> {
    config.validate()?;
    let mut table = ResultTable::new(config.clone());
    table.rows = experiment_rows(config, exec)?;
    Ok(table)
}

fn experiment_rows(config: &ScenarioConfig, exec: Exec) -> Result<Vec<ResultRow>> {
    let per_throw = map_indexed(exec, config.n_throws, |t| run_throw(config, t, exec));
    let mut raw = Vec::new();
    for rows in per_throw {
        raw.extend(rows?);
    }
    let aggregates: Vec<ResultRow> = config
        .strategies
        .iter()
        .map(|&s| aggregate(s, config.num_cpus, config.num_users, raw.iter().filter(|r| r.strategy == s && r.kind == RowKind::Raw)))
        .collect();
    raw.extend(aggregates);
    Ok(raw)
}

/// Grid over `ks` x `ds` (empty lists keep the configured value). All grid
/// points share the master seed, so throws differing only in D have
/// identical geometry.
pub fn sweep(config: &ScenarioConfig, ks: &[usize], ds: &[usize], exec: Exec) -> Result<ResultTable> {
    let ks = if ks.is_empty() { vec![config.num_users] } else { ks.to_vec() };
    let ds = if ds.is_empty() { vec![config.num_cpus] } else { ds.to_vec() };
    let mut points = Vec::new();
    for &k in &ks {
        for &d in &ds {
            let c = ScenarioConfig { num_users: k, num_cpus: d, ..config.clone() };
            c.validate()?;
            points.push(c);
        }
    }
    let mut table = ResultTable::new(config.clone());
    for c in &points {
        table.rows.extend(experiment_rows(c, exec)?);
    }
    Ok(table)
}
