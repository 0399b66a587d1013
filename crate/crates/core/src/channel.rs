//! Large-scale gains (three-slope path loss with spatially correlated
//! log-normal shadowing) and block Rayleigh fading.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::deployment::{wrap_distance, NetworkGeometry, Point};
use crate::rng::{complex_normal, stream_rng, stream};
use crate::{Error, Result, C64};

/// Parameters of the large-scale propagation model.
///
/// The defaults are the usual cell-free conventions: 1.9 GHz carrier,
/// 15 m / 1.65 m antenna heights, breakpoints at 10 m and 50 m, 8 dB shadowing
/// with equal AP/MS mixing and 100 m decorrelation distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LargeScaleParams {
    pub carrier_freq_mhz: f64,
    pub ap_height_m: f64,
    pub ms_height_m: f64,
    pub d0_m: f64,
    pub d1_m: f64,
    pub shadow_sigma_db: f64,
    pub shadow_delta: f64,
    pub decorr_dist_m: f64,
}

impl Default for LargeScaleParams {
    fn default() -> Self {
        Self {
            carrier_freq_mhz: 1900.0,
            ap_height_m: 15.0,
            ms_height_m: 1.65,
            d0_m: 10.0,
            d1_m: 50.0,
            shadow_sigma_db: 8.0,
            shadow_delta: 0.5,
            decorr_dist_m: 100.0,
        }
    }
}

impl LargeScaleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.carrier_freq_mhz, self.ap_height_m, self.ms_height_m, self.d0_m, self.d1_m, self.decorr_dist_m];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("frequency, heights, breakpoints and decorrelation distance must be positive"));
        }
        if self.d0_m >= self.d1_m {
            return Err(Error::invalid(format!("need d0 < d1, got d0={} d1={}", self.d0_m, self.d1_m)));
        }
        if !(self.shadow_sigma_db >= 0.0) {
            return Err(Error::invalid("shadowing deviation must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.shadow_delta) {
            return Err(Error::invalid("shadowing mixing weight must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Hata-COST231 constant `L` in dB.
    pub fn hata_constant_db(&self) -> f64 {
        let lf = self.carrier_freq_mhz.log10();
        46.3 + 33.9 * lf - 13.82 * self.ap_height_m.log10() - (1.1 * lf - 0.7) * self.ms_height_m + (1.56 * lf - 0.8)
    }

    /// Path gain in dB at distance `d_m` metres.
    ///
    /// `-L - 35 log10(d)` beyond `d1`, `-L - 15 log10(d1) - 20 log10(d)`
    /// between the breakpoints and flat below `d0` (distances in km).
    pub fn path_gain_db(&self, d_m: f64) -> f64 {
        let l = self.hata_constant_db();
        let d_km = d_m / 1000.0;
        let d0 = self.d0_m / 1000.0;
        let d1 = self.d1_m / 1000.0;
        if d_m > self.d1_m {
            -l - 35.0 * d_km.log10()
        } else if d_m > self.d0_m {
            -l - 15.0 * d1.log10() - 20.0 * d_km.log10()
        } else {
            -l - 15.0 * d1.log10() - 20.0 * d0.log10()
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// `zeta` (M x K), linear scale.
pub fn compute_path_loss(geometry: &NetworkGeometry, params: &LargeScaleParams) -> Result<DMatrix<f64>> {
    params.validate()?;
    Ok(DMatrix::from_fn(geometry.num_aps(), geometry.num_users(), |m, k| {
        db_to_linear(params.path_gain_db(geometry.ap_ms_distance(m, k)))
    }))
}

/// Zero-mean, unit-variance Gaussian field over a set of points with
/// covariance `2^(-d / decorr)` in the torus metric.
#[derive(Debug, Clone)]
pub struct CorrelatedField {
    factor: DMatrix<f64>,
    /// Diagonal jitter that was needed to factor the covariance.
    pub jitter: f64,
}

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

impl CorrelatedField {
    pub fn new(points: &[Point], side: f64, decorr_dist_m: f64) -> Result<Self> {
        let n = points.len();
        let cov = DMatrix::from_fn(n, n, |i, j| 2f64.powf(-wrap_distance(points[i], points[j], side) / decorr_dist_m));
        if let Some(chol) = cov.clone().cholesky() {
            return Ok(Self { factor: chol.l(), jitter: 0.0 });
        }
        // The exponential kernel on a torus can be borderline non-PSD.
        let mut jitter = JITTER_START;
        while jitter <= JITTER_MAX {
            let regularized = &cov + DMatrix::identity(n, n) * jitter;
            if let Some(chol) = regularized.cholesky() {
                return Ok(Self { factor: chol.l(), jitter });
            }
            jitter *= 10.0;
        }
        Err(Error::Solver(format!("shadowing covariance of {n} points is not positive definite")))
    }

    pub fn len(&self) -> usize {
        self.factor.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.factor * z
    }
}

/// Two-component shadowing model: an AP field and an MS field mixed with
/// weight `delta`.
#[derive(Debug, Clone)]
pub struct ShadowingModel {
    ap_field: CorrelatedField,
    ms_field: CorrelatedField,
    sigma_db: f64,
    delta: f64,
}

impl ShadowingModel {
    pub fn new(geometry: &NetworkGeometry, params: &LargeScaleParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            ap_field: CorrelatedField::new(&geometry.ap_positions, geometry.side_length_m, params.decorr_dist_m)?,
            ms_field: CorrelatedField::new(&geometry.ms_positions, geometry.side_length_m, params.decorr_dist_m)?,
            sigma_db: params.shadow_sigma_db,
            delta: params.shadow_delta,
        })
    }

    /// Shadowing in dB, `sigma (sqrt(delta) a_m + sqrt(1 - delta) b_k)`.
    pub fn sample_db<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        let a = self.ap_field.sample(rng);
        let b = self.ms_field.sample(rng);
        let (wa, wb) = (self.delta.sqrt(), (1.0 - self.delta).sqrt());
        DMatrix::from_fn(a.len(), b.len(), |m, k| self.sigma_db * (wa * a[m] + wb * b[k]))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        self.sample_db(rng).map(db_to_linear)
    }
}

/// `chi` (M x K), linear scale.
pub fn generate_shadowing(geometry: &NetworkGeometry, params: &LargeScaleParams, seed: u64) -> Result<DMatrix<f64>> {
    let model = ShadowingModel::new(geometry, params)?;
    Ok(model.sample(&mut stream_rng(seed, &[stream::SHADOWING])))
}

/// Path loss, shadowing and their product `beta = zeta * chi`.
#[derive(Debug, Clone, PartialEq)]
pub struct LargeScaleState {
    pub zeta: DMatrix<f64>,
    pub chi: DMatrix<f64>,
    pub beta: DMatrix<f64>,
}

impl LargeScaleState {
    pub fn new(zeta: DMatrix<f64>, chi: DMatrix<f64>) -> Result<Self> {
        if zeta.shape() != chi.shape() {
            return Err(Error::invalid("zeta and chi shapes differ"));
        }
        if zeta.iter().chain(chi.iter()).any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("large-scale gains must be strictly positive"));
        }
        let beta = zeta.component_mul(&chi);
        Ok(Self { zeta, chi, beta })
    }

    /// State with no shadowing, for hand-built gain tables.
    pub fn from_beta(beta: DMatrix<f64>) -> Result<Self> {
        let chi = DMatrix::from_element(beta.nrows(), beta.ncols(), 1.0);
        Self::new(beta, chi)
    }

    /// Path loss and shadowing for `geometry`.
    pub fn generate(geometry: &NetworkGeometry, params: &LargeScaleParams, seed: u64) -> Result<Self> {
        Self::new(compute_path_loss(geometry, params)?, generate_shadowing(geometry, params, seed)?)
    }

    pub fn num_aps(&self) -> usize {
        self.beta.nrows()
    }

    pub fn num_users(&self) -> usize {
        self.beta.ncols()
    }
}

/// One coherence block: small-scale coefficients `h` and channel `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: DMatrix<C64>,
    pub g: DMatrix<C64>,
}

impl ChannelRealization {
    /// Combines given small-scale coefficients with `sqrt(beta)`.
    pub fn from_small_scale(beta: &DMatrix<f64>, h: DMatrix<C64>) -> Self {
        assert_eq!(beta.shape(), h.shape());
        let g = DMatrix::from_fn(h.nrows(), h.ncols(), |m, k| h[(m, k)] * beta[(m, k)].sqrt());
        Self { h, g }
    }

    /// i.i.d. CN(0, 1) small-scale fading.
    pub fn draw<R: Rng + ?Sized>(beta: &DMatrix<f64>, rng: &mut R) -> Self {
        let h = DMatrix::from_fn(beta.nrows(), beta.ncols(), |_, _| complex_normal(rng, 1.0));
        Self::from_small_scale(beta, h)
    }
}

/// Fading for the coherence block keyed by `seed`.
pub fn realize_channel(beta: &DMatrix<f64>, seed: u64) -> Result<ChannelRealization> {
    if beta.iter().any(|&b| !(b >= 0.0) || !b.is_finite()) {
        return Err(Error::invalid("large-scale gains must be non-negative"));
    }
    Ok(ChannelRealization::draw(beta, &mut stream_rng(seed, &[stream::FADING])))
}
