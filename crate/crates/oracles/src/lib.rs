//! Brute-force reference computations.
//!
//! Everything here is written independently of the `cellfree` crate, with
//! plain slices and `(re, im)` tuples, and favours exhaustive enumeration over
//! efficiency. The simulator's tests and the `oracle` CLI subcommand compare
//! against these routines.

pub mod geometry {
    /// Torus distance computed as the smallest Euclidean distance between `p`
    /// and the nine periodic images of `q`.
    pub fn torus_distance_by_images(p: (f64, f64), q: (f64, f64), side: f64) -> f64 {
        let mut best = f64::INFINITY;
        for sx in [-1.0, 0.0, 1.0] {
            for sy in [-1.0, 0.0, 1.0] {
                let dx = p.0 - (q.0 + sx * side);
                let dy = p.1 - (q.1 + sy * side);
                best = best.min((dx * dx + dy * dy).sqrt());
            }
        }
        best
    }
}

pub mod clustering {
    use super::geometry::torus_distance_by_images;

    /// Smallest sum of squared torus distances from `points` to a single
    /// centre, found by a coarse grid scan followed by local grid refinement.
    pub fn torus_cluster_cost(points: &[(f64, f64)], side: f64) -> f64 {
        if points.is_empty() {
            return 0.0;
        }
        let cost = |c: (f64, f64)| -> f64 {
            points.iter().map(|&p| torus_distance_by_images(p, c, side).powi(2)).sum()
        };
        let steps = 200;
        let mut best = (f64::INFINITY, (0.0, 0.0));
        for i in 0..steps {
            for j in 0..steps {
                let c = (side * i as f64 / steps as f64, side * j as f64 / steps as f64);
                let v = cost(c);
                if v < best.0 {
                    best = (v, c);
                }
            }
        }
        let mut h = side / steps as f64;
        while h > 1e-6 {
            let (v0, c0) = best;
            let mut improved = (v0, c0);
            for dx in -4..=4 {
                for dy in -4..=4 {
                    let c = (
                        (c0.0 + dx as f64 * h / 4.0).rem_euclid(side),
                        (c0.1 + dy as f64 * h / 4.0).rem_euclid(side),
                    );
                    let v = cost(c);
                    if v < improved.0 {
                        improved = (v, c);
                    }
                }
            }
            best = improved;
            h /= 2.0;
        }
        best.0
    }

    /// Enumerates every split of `points` into two non-empty groups and
    /// returns the labels of the split with the smallest total cost.
    pub fn best_two_partition(points: &[(f64, f64)], side: f64) -> (Vec<usize>, f64) {
        let n = points.len();
        assert!((2..=16).contains(&n));
        let mut best = (Vec::new(), f64::INFINITY);
        // Point 0 is pinned to group 0 to skip mirrored labelings.
        for mask in 0u32..(1 << (n - 1)) {
            let labels: Vec<usize> = (0..n).map(|i| if i == 0 { 0 } else { ((mask >> (i - 1)) & 1) as usize }).collect();
            if labels.iter().all(|&l| l == 0) {
                continue;
            }
            let group = |g: usize| -> Vec<(f64, f64)> {
                points.iter().zip(&labels).filter(|(_, &l)| l == g).map(|(p, _)| *p).collect()
            };
            let cost = torus_cluster_cost(&group(0), side) + torus_cluster_cost(&group(1), side);
            if cost < best.1 {
                best = (labels, cost);
            }
        }
        best
    }
}

pub mod pilots {
    /// Euclidean distance between two fingerprints.
    pub fn fingerprint_distance(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    /// Smallest fingerprint distance between any two users sharing a pilot;
    /// infinite when no pilot is shared.
    pub fn min_copilot_distance(fingerprints: &[Vec<f64>], assignment: &[usize]) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..assignment.len() {
            for j in i + 1..assignment.len() {
                if assignment[i] == assignment[j] {
                    best = best.min(fingerprint_distance(&fingerprints[i], &fingerprints[j]));
                }
            }
        }
        best
    }

    /// All `tau^K` assignments, keeping those that maximize the minimum
    /// co-pilot fingerprint distance.
    pub fn optimal_assignments(fingerprints: &[Vec<f64>], tau: usize) -> (f64, Vec<Vec<usize>>) {
        let k = fingerprints.len();
        let total = tau.pow(k as u32);
        let mut best = f64::NEG_INFINITY;
        let mut argmax = Vec::new();
        for code in 0..total {
            let mut c = code;
            let assignment: Vec<usize> = (0..k)
                .map(|_| {
                    let p = c % tau;
                    c /= tau;
                    p
                })
                .collect();
            let v = min_copilot_distance(fingerprints, &assignment);
            if v == best || (v - best).abs() <= 1e-12 {
                argmax.push(assignment);
            } else if v > best {
                best = v;
                argmax = vec![assignment];
            }
        }
        (best, argmax)
    }
}

pub mod power {
    /// Max-min SINR over a uniform grid on `[0, eta_max_k]` for two users.
    ///
    /// `coupling[k][j]` multiplies `eta_j` in user `k`'s interference,
    /// `omega[m][k]` is AP `m`'s power weight for user `k` and each AP must
    /// satisfy `sum_k omega[m][k] * eta_k <= 1`.
    pub fn grid_maxmin_two_users(
        coupling: [[f64; 2]; 2],
        omega: &[[f64; 2]],
        p_ap: f64,
        sigma2: f64,
        steps: usize,
    ) -> f64 {
        let eta_max = |k: usize| omega.iter().map(|row| 1.0 / row[k]).fold(f64::INFINITY, f64::min);
        let (e0, e1) = (eta_max(0), eta_max(1));
        let mut best = 0.0f64;
        for i in 0..=steps {
            let a = e0 * i as f64 / steps as f64;
            for j in 0..=steps {
                let b = e1 * j as f64 / steps as f64;
                if omega.iter().any(|row| row[0] * a + row[1] * b > 1.0) {
                    continue;
                }
                let s0 = p_ap * a / (p_ap * (coupling[0][0] * a + coupling[0][1] * b) + sigma2);
                let s1 = p_ap * b / (p_ap * (coupling[1][0] * a + coupling[1][1] * b) + sigma2);
                best = best.max(s0.min(s1));
            }
        }
        best
    }

    /// Closed-form max-min SINR for a single user: the power constraint of
    /// the AP with the largest weight binds.
    pub fn single_user_maxmin(gamma: f64, omega: &[f64], p_ap: f64, sigma2: f64) -> f64 {
        let w_max = omega.iter().cloned().fold(0.0, f64::max);
        p_ap / (sigma2 * w_max + p_ap * gamma)
    }

    /// Closed-form threshold with no interference: `eta_k = t sigma2 / P` for
    /// every user, so the most loaded AP decides.
    pub fn interference_free_threshold(omega: &[Vec<f64>], p_ap: f64, sigma2: f64) -> f64 {
        let load = omega.iter().map(|row| row.iter().sum::<f64>()).fold(0.0, f64::max);
        p_ap / (sigma2 * load)
    }
}

pub mod precoding {
    pub type Cpx = (f64, f64);

    fn mul(a: Cpx, b: Cpx) -> Cpx {
        (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
    }

    /// Right inverse of a single channel column `g`: `w = conj(g) / |g|^2`,
    /// so that `g^T w = 1`.
    pub fn vector_pseudo_inverse(g: &[Cpx]) -> Vec<Cpx> {
        let norm2: f64 = g.iter().map(|z| z.0 * z.0 + z.1 * z.1).sum();
        g.iter().map(|z| (z.0 / norm2, -z.1 / norm2)).collect()
    }

    /// `|g^T w|^2` for plain complex vectors.
    pub fn received_power(g: &[Cpx], w: &[Cpx]) -> f64 {
        let s = g.iter().zip(w).fold((0.0, 0.0), |acc, (a, b)| {
            let p = mul(*a, *b);
            (acc.0 + p.0, acc.1 + p.1)
        });
        s.0 * s.0 + s.1 * s.1
    }

    /// Sample mean and standard error.
    pub fn mean_and_se(samples: &[f64]) -> (f64, f64) {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        (mean, (var / n).sqrt())
    }
}

pub mod link {
    /// Hata-COST231 constant term in dB (frequency in MHz, heights in m).
    pub fn hata_cost231_db(f_mhz: f64, h_ap: f64, h_ms: f64) -> f64 {
        let lf = f_mhz.log10();
        46.3 + 33.9 * lf - 13.82 * h_ap.log10() - ((1.1 * lf - 0.7) * h_ms - (1.56 * lf - 0.8))
    }

    /// Thermal noise power in watts: PSD integrated over the band, times the
    /// noise figure, all in linear units.
    pub fn noise_power_w(psd_dbm_hz: f64, bandwidth_hz: f64, nf_db: f64) -> f64 {
        let psd_w_hz = 1e-3 * 10f64.powf(psd_dbm_hz / 10.0);
        psd_w_hz * bandwidth_hz * 10f64.powf(nf_db / 10.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn images_wrap() {
        assert!((geometry::torus_distance_by_images((0.0, 0.0), (999.0, 0.0), 1000.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_recovers_closed_form() {
        let omega = [[1.0, 1.0], [0.5, 1.5]];
        let t = power::grid_maxmin_two_users([[0.0, 0.0], [0.0, 0.0]], &omega, 1.0, 1.0, 1000);
        let exact = power::interference_free_threshold(&[vec![1.0, 1.0], vec![0.5, 1.5]], 1.0, 1.0);
        assert!((t - exact).abs() < 2e-3, "{t} vs {exact}");
    }

    #[test]
    fn pilot_enumeration_counts() {
        let fp = vec![vec![0.0], vec![1.0], vec![10.0]];
        let (best, all) = pilots::optimal_assignments(&fp, 3);
        assert!(best.is_infinite());
        assert_eq!(all.len(), 6);
    }
}
