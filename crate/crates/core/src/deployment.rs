//! Network layout on a wrap-around square, AP clustering and user association.

use nalgebra::DMatrix;
use rand::Rng;

use crate::rng::{derive_seed, stream_rng, SimRng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// AP and MS positions on an `L x L` torus.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGeometry {
    pub side_length_m: f64,
    pub ap_positions: Vec<Point>,
    pub ms_positions: Vec<Point>,
}

impl NetworkGeometry {
    /// Builds a geometry from explicit positions, checking that every point
    /// lies in `[0, L)` on both axes.
    pub fn new(side_length_m: f64, ap_positions: Vec<Point>, ms_positions: Vec<Point>) -> Result<Self> {
        if !(side_length_m > 0.0) || !side_length_m.is_finite() {
            return Err(Error::invalid(format!("side length must be positive, got {side_length_m}")));
        }
        if ap_positions.is_empty() || ms_positions.is_empty() {
            return Err(Error::invalid("at least one AP and one MS are required"));
        }
        let inside = |p: &Point| (0.0..side_length_m).contains(&p.x) && (0.0..side_length_m).contains(&p.y);
        if let Some(p) = ap_positions.iter().chain(&ms_positions).find(|p| !inside(p)) {
            return Err(Error::invalid(format!("point ({}, {}) outside [0, {side_length_m})^2", p.x, p.y)));
        }
        Ok(Self { side_length_m, ap_positions, ms_positions })
    }

    pub fn num_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn num_users(&self) -> usize {
        self.ms_positions.len()
    }

    /// Torus distance between AP `m` and MS `k`.
    pub fn ap_ms_distance(&self, m: usize, k: usize) -> f64 {
        wrap_distance(self.ap_positions[m], self.ms_positions[k], self.side_length_m)
    }
}

/// Draws `num_aps` APs and `num_users` MSs uniformly on `[0, L)^2`.
pub fn generate_deployment(seed: u64, num_aps: usize, num_users: usize, side_length_m: f64) -> Result<NetworkGeometry> {
    if num_aps == 0 || num_users == 0 {
        return Err(Error::invalid(format!("need M >= 1 and K >= 1, got M={num_aps}, K={num_users}")));
    }
    if !(side_length_m > 0.0) || !side_length_m.is_finite() {
        return Err(Error::invalid(format!("side length must be positive, got {side_length_m}")));
    }
    let mut rng = stream_rng(seed, &[]);
    let draw = |rng: &mut SimRng| Point::new(uniform_coord(rng, side_length_m), uniform_coord(rng, side_length_m));
    let ap_positions = (0..num_aps).map(|_| draw(&mut rng)).collect();
    let ms_positions = (0..num_users).map(|_| draw(&mut rng)).collect();
    Ok(NetworkGeometry { side_length_m, ap_positions, ms_positions })
}

fn uniform_coord(rng: &mut SimRng, side: f64) -> f64 {
    let v = rng.random::<f64>() * side;
    // random() is in [0, 1) but the product can round up to `side`.
    if v >= side {
        0.0
    } else {
        v
    }
}

/// Signed-free per-axis displacement on a circle of circumference `side`.
fn wrap_delta(a: f64, b: f64, side: f64) -> f64 {
    let d = (a - b).abs() % side;
    d.min(side - d)
}

/// Euclidean norm of the per-axis wrapped displacement.
pub fn wrap_distance(p: Point, q: Point, side: f64) -> f64 {
    wrap_delta(p.x, q.x, side).hypot(wrap_delta(p.y, q.y, side))
}

fn wrap_distance_sq(p: Point, q: Point, side: f64) -> f64 {
    let dx = wrap_delta(p.x, q.x, side);
    let dy = wrap_delta(p.y, q.y, side);
    dx * dx + dy * dy
}

/// AP side of a CPU partition.
#[derive(Debug, Clone, PartialEq)]
pub struct ApClusters {
    pub num_cpus: usize,
    pub ap_to_cpu: Vec<usize>,
    pub centroids: Vec<Point>,
    /// Within-cluster sum of squared torus distances of the kept run.
    pub wcss: f64,
}

impl ApClusters {
    /// Validates an explicit AP-to-CPU map (every CPU must own at least one AP).
    pub fn from_assignment(num_cpus: usize, ap_to_cpu: Vec<usize>) -> Result<Self> {
        if num_cpus == 0 || ap_to_cpu.is_empty() {
            return Err(Error::invalid("empty AP partition"));
        }
        let mut sizes = vec![0usize; num_cpus];
        for &d in &ap_to_cpu {
            if d >= num_cpus {
                return Err(Error::invalid(format!("CPU index {d} out of range 0..{num_cpus}")));
            }
            sizes[d] += 1;
        }
        if let Some(d) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::invalid(format!("CPU {d} has no APs")));
        }
        Ok(Self { num_cpus, ap_to_cpu, centroids: Vec::new(), wcss: f64::NAN })
    }
}

/// Number of k-means restarts kept by [`cluster_aps`].
pub const KMEANS_RESTARTS: usize = 10;
const KMEANS_MAX_ITERS: usize = 200;

/// Result of a single torus k-means run.
#[derive(Debug, Clone)]
pub struct KMeansRun {
    pub assignment: Vec<usize>,
    pub centroids: Vec<Point>,
    pub wcss: f64,
    /// Objective after every assignment step, for monotonicity checks.
    pub history: Vec<f64>,
    pub iterations: usize,
}

/// Partitions the APs into `num_cpus` disjoint, non-empty clusters with
/// k-means on the torus metric, keeping the best of [`KMEANS_RESTARTS`] runs.
pub fn cluster_aps(geometry: &NetworkGeometry, num_cpus: usize, seed: u64) -> Result<ApClusters> {
    let points = &geometry.ap_positions;
    if num_cpus == 0 || num_cpus > points.len() {
        return Err(Error::invalid(format!("need 1 <= D <= M, got D={num_cpus}, M={}", points.len())));
    }
    let best = (0..KMEANS_RESTARTS)
        .map(|r| torus_kmeans(points, num_cpus, geometry.side_length_m, derive_seed(seed, &[r as u64])))
        .min_by(|a, b| a.wcss.total_cmp(&b.wcss))
        .expect("at least one restart");
    Ok(ApClusters { num_cpus, ap_to_cpu: best.assignment, centroids: best.centroids, wcss: best.wcss })
}

/// One Lloyd run with k-means++ seeding. Centroids are exact per-axis
/// circular Fréchet means, so the objective never increases.
pub fn torus_kmeans(points: &[Point], k: usize, side: f64, seed: u64) -> KMeansRun {
    assert!(k >= 1 && k <= points.len(), "k-means needs 1 <= k <= n");
    let mut rng = stream_rng(seed, &[]);
    let mut centroids = kmeans_pp_seed(points, k, side, &mut rng);
    let mut assignment = vec![usize::MAX; points.len()];
    let mut history = Vec::new();
    let mut iterations = 0;

    loop {
        iterations += 1;
        let mut changed = assign_nearest(points, &centroids, side, &mut assignment);
        changed |= repair_empty(points, &mut centroids, side, &mut assignment);
        history.push(objective(points, &centroids, &assignment, side));
        if !changed || iterations >= KMEANS_MAX_ITERS {
            break;
        }
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<Point> = points
                .iter()
                .zip(&assignment)
                .filter(|(_, &a)| a == c)
                .map(|(p, _)| *p)
                .collect();
            let xs: Vec<f64> = members.iter().map(|p| p.x).collect();
            let ys: Vec<f64> = members.iter().map(|p| p.y).collect();
            centroid.x = circular_mean(&xs, side, centroid.x);
            centroid.y = circular_mean(&ys, side, centroid.y);
        }
    }
    let wcss = *history.last().expect("at least one iteration");
    KMeansRun { assignment, centroids, wcss, history, iterations }
}

fn kmeans_pp_seed(points: &[Point], k: usize, side: f64, rng: &mut SimRng) -> Vec<Point> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)]];
    let mut d2: Vec<f64> = points.iter().map(|p| wrap_distance_sq(*p, centroids[0], side)).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            // Guard against landing on a zero-weight tail through rounding.
            if d2[idx] == 0.0 {
                idx = d2.iter().rposition(|&w| w > 0.0).expect("positive total");
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let c = points[next];
        centroids.push(c);
        for (p, w) in points.iter().zip(d2.iter_mut()) {
            *w = w.min(wrap_distance_sq(*p, c, side));
        }
    }
    centroids
}

/// Assigns each point to its nearest centroid (lowest index on ties).
fn assign_nearest(points: &[Point], centroids: &[Point], side: f64, assignment: &mut [usize]) -> bool {
    let mut changed = false;
    for (p, a) in points.iter().zip(assignment.iter_mut()) {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, centroid) in centroids.iter().enumerate() {
            let d = wrap_distance_sq(*p, *centroid, side);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        if *a != best {
            *a = best;
            changed = true;
        }
    }
    changed
}

/// Moves every empty centroid onto the point farthest from its own centroid
/// and reassigns. Returns whether anything moved.
fn repair_empty(points: &[Point], centroids: &mut [Point], side: f64, assignment: &mut [usize]) -> bool {
    let mut repaired = false;
    for _ in 0..centroids.len() {
        let mut counts = vec![0usize; centroids.len()];
        for &a in assignment.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            break;
        };
        let far = (0..points.len())
            .filter(|&i| counts[assignment[i]] > 1)
            .max_by(|&i, &j| {
                let di = wrap_distance_sq(points[i], centroids[assignment[i]], side);
                let dj = wrap_distance_sq(points[j], centroids[assignment[j]], side);
                di.total_cmp(&dj).then(j.cmp(&i))
            })
            .expect("k <= n leaves a cluster with two or more points");
        centroids[empty] = points[far];
        assignment[far] = empty;
        assign_nearest(points, centroids, side, assignment);
        repaired = true;
    }
    repaired
}

fn objective(points: &[Point], centroids: &[Point], assignment: &[usize], side: f64) -> f64 {
    points
        .iter()
        .zip(assignment)
        .map(|(p, &a)| wrap_distance_sq(*p, centroids[a], side))
        .sum()
}

/// Minimizer of the sum of squared arc distances on a circle of
/// circumference `side`. The minimizer is one of the `n` unwrapped means
/// obtained by lifting the `j` smallest samples by `side`. `current` is kept
/// unless a candidate is strictly better.
fn circular_mean(xs: &[f64], side: f64, current: f64) -> f64 {
    if xs.is_empty() {
        return current;
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let sum: f64 = sorted.iter().sum();
    let cost = |c: f64| sorted.iter().map(|&x| wrap_delta(x, c, side).powi(2)).sum::<f64>();

    let mut best = current;
    let mut best_cost = cost(current);
    for j in 0..sorted.len() {
        let c = ((sum + j as f64 * side) / n).rem_euclid(side);
        let c = if c >= side { 0.0 } else { c };
        let v = cost(c);
        if v < best_cost {
            best = c;
            best_cost = v;
        }
    }
    best
}

/// Full CPU partition: disjoint AP clusters plus exclusive user association.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterPartition {
    pub num_cpus: usize,
    pub ap_to_cpu: Vec<usize>,
    pub user_to_cpu: Vec<usize>,
    pub cluster_aps: Vec<Vec<usize>>,
    pub cluster_users: Vec<Vec<usize>>,
}

impl ClusterPartition {
    pub fn new(num_cpus: usize, ap_to_cpu: Vec<usize>, user_to_cpu: Vec<usize>) -> Result<Self> {
        ApClusters::from_assignment(num_cpus, ap_to_cpu.clone())?;
        if user_to_cpu.iter().any(|&d| d >= num_cpus) {
            return Err(Error::invalid("user associated to a non-existent CPU"));
        }
        let group = |map: &[usize]| {
            let mut sets = vec![Vec::new(); num_cpus];
            for (i, &d) in map.iter().enumerate() {
                sets[d].push(i);
            }
            sets
        };
        Ok(Self {
            num_cpus,
            cluster_aps: group(&ap_to_cpu),
            cluster_users: group(&user_to_cpu),
            ap_to_cpu,
            user_to_cpu,
        })
    }

    /// The trivial single-CPU partition.
    pub fn single(num_aps: usize, num_users: usize) -> Self {
        Self::new(1, vec![0; num_aps], vec![0; num_users]).expect("valid single partition")
    }

    pub fn num_aps(&self) -> usize {
        self.ap_to_cpu.len()
    }

    pub fn num_users(&self) -> usize {
        self.user_to_cpu.len()
    }

    /// `(M_d, K_d)` for every CPU.
    pub fn sizes(&self) -> Vec<(usize, usize)> {
        self.cluster_aps
            .iter()
            .zip(&self.cluster_users)
            .map(|(a, u)| (a.len(), u.len()))
            .collect()
    }
}

/// Average linear gain from the APs of each cluster to user `k`.
pub fn cluster_average_gains(beta: &DMatrix<f64>, ap_to_cpu: &[usize], num_cpus: usize, k: usize) -> Vec<f64> {
    let mut sums = vec![0.0; num_cpus];
    let mut counts = vec![0usize; num_cpus];
    for (m, &d) in ap_to_cpu.iter().enumerate() {
        sums[d] += beta[(m, k)];
        counts[d] += 1;
    }
    sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect()
}

/// Associates every user with the CPU whose APs have the largest average
/// linear gain towards it; ties go to the lowest CPU index.
pub fn associate_users(beta: &DMatrix<f64>, ap_clusters: &ApClusters) -> Result<ClusterPartition> {
    if beta.nrows() != ap_clusters.ap_to_cpu.len() {
        return Err(Error::invalid(format!(
            "beta has {} rows but the partition covers {} APs",
            beta.nrows(),
            ap_clusters.ap_to_cpu.len()
        )));
    }
    if beta.iter().any(|&b| !(b > 0.0) || !b.is_finite()) {
        return Err(Error::invalid("large-scale gains must be strictly positive"));
    }
    let user_to_cpu = (0..beta.ncols())
        .map(|k| {
            let avg = cluster_average_gains(beta, &ap_clusters.ap_to_cpu, ap_clusters.num_cpus, k);
            let mut best = 0;
            for d in 1..avg.len() {
                if avg[d] > avg[best] {
                    best = d;
                }
            }
            best
        })
        .collect();
    ClusterPartition::new(ap_clusters.num_cpus, ap_clusters.ap_to_cpu.clone(), user_to_cpu)
}
