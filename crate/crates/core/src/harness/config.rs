use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::LargeScaleParams;
use crate::strategies::Strategy;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateMode {
    /// bit/s/Hz.
    Spectral,
    /// bit/s after the downlink share of the frame.
    Net,
}

impl fmt::Display for RateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RateMode::Spectral => "spectral",
            RateMode::Net => "net",
        })
    }
}

impl FromStr for RateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectral" => Ok(RateMode::Spectral),
            "net" => Ok(RateMode::Net),
            other => Err(Error::Config(format!("unknown rate mode '{other}' (expected spectral or net)"))),
        }
    }
}

/// Scenario configuration. Serialized as a flat TOML table whose keys are
/// the names in the `rename` attributes; missing keys take the defaults.
///
/// The defaults are the full-size network (100 APs on a 1 km torus,
/// 200 throws of 1000 fading blocks); [`ScenarioConfig::desk`] is a reduced
/// preset that runs in minutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(rename = "M")]
    pub num_aps: usize,
    #[serde(rename = "K")]
    pub num_users: usize,
    #[serde(rename = "D")]
    pub num_cpus: usize,
    #[serde(rename = "L_m")]
    pub side_length_m: f64,
    #[serde(rename = "P_ap_W")]
    pub p_ap_w: f64,
    #[serde(rename = "P_ms_W")]
    pub p_ms_w: f64,
    pub tau_c: f64,
    pub tau_p: usize,
    pub tau_dl: f64,
    pub tau_ul: f64,
    #[serde(rename = "noise_psd_dBm_per_Hz")]
    pub noise_psd_dbm_per_hz: f64,
    #[serde(rename = "noise_figure_dB")]
    pub noise_figure_db: f64,
    #[serde(rename = "bandwidth_Hz")]
    pub bandwidth_hz: f64,
    #[serde(rename = "carrier_freq_MHz")]
    pub carrier_freq_mhz: f64,
    pub ap_height_m: f64,
    pub ms_height_m: f64,
    pub d0_m: f64,
    pub d1_m: f64,
    #[serde(rename = "shadow_sigma_dB")]
    pub shadow_sigma_db: f64,
    pub shadow_delta: f64,
    pub decorr_dist_m: f64,
    pub n_throws: usize,
    pub n_fading: usize,
    pub n_mc: usize,
    pub bisection_tol: f64,
    pub master_seed: u64,
    pub strategies: Vec<Strategy>,
    pub rate_mode: RateMode,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let ls = LargeScaleParams::default();
        Self {
            num_aps: 100,
            num_users: 20,
            num_cpus: 4,
            side_length_m: 1000.0,
            p_ap_w: 0.2,
            p_ms_w: 0.1,
            tau_c: 200.0,
            tau_p: 15,
            tau_dl: 92.5,
            tau_ul: 92.5,
            noise_psd_dbm_per_hz: -174.0,
            noise_figure_db: 9.0,
            bandwidth_hz: 20e6,
            carrier_freq_mhz: ls.carrier_freq_mhz,
            ap_height_m: ls.ap_height_m,
            ms_height_m: ls.ms_height_m,
            d0_m: ls.d0_m,
            d1_m: ls.d1_m,
            shadow_sigma_db: ls.shadow_sigma_db,
            shadow_delta: ls.shadow_delta,
            decorr_dist_m: ls.decorr_dist_m,
            n_throws: 200,
            n_fading: 1000,
            n_mc: 1000,
            bisection_tol: 1e-4,
            master_seed: 1,
            strategies: Strategy::ALL.to_vec(),
            rate_mode: RateMode::Spectral,
        }
    }
}

impl ScenarioConfig {
    /// Full-size preset (same as the default).
    pub fn full_scale() -> Self {
        Self::default()
    }

    /// Reduced preset: 30 APs, 12 users, 3 CPUs, 20 throws of 50 fading blocks.
    pub fn desk() -> Self {
        Self { num_aps: 30, num_users: 12, num_cpus: 3, n_throws: 20, n_fading: 50, ..Self::default() }
    }

    /// Applies the desk-scale sizes while keeping every other field.
    pub fn apply_desk_scale(&mut self) {
        let d = Self::desk();
        self.num_aps = d.num_aps;
        self.num_users = d.num_users;
        self.num_cpus = d.num_cpus;
        self.n_throws = d.n_throws;
        self.n_fading = d.n_fading;
    }

    pub fn large_scale(&self) -> LargeScaleParams {
        LargeScaleParams {
            carrier_freq_mhz: self.carrier_freq_mhz,
            ap_height_m: self.ap_height_m,
            ms_height_m: self.ms_height_m,
            d0_m: self.d0_m,
            d1_m: self.d1_m,
            shadow_sigma_db: self.shadow_sigma_db,
            shadow_delta: self.shadow_delta,
            decorr_dist_m: self.decorr_dist_m,
        }
    }

    /// Receiver noise power in watts.
    pub fn sigma2(&self) -> f64 {
        super::noise_power(self.noise_psd_dbm_per_hz, self.bandwidth_hz, self.noise_figure_db)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        for (name, v) in [("M", self.num_aps), ("K", self.num_users), ("D", self.num_cpus), ("tau_p", self.tau_p)] {
            if v == 0 {
                return fail(format!("{name} must be at least 1"));
            }
        }
        for (name, v) in [("n_throws", self.n_throws), ("n_fading", self.n_fading), ("n_mc", self.n_mc)] {
            if v == 0 {
                return fail(format!("{name} must be at least 1"));
            }
        }
        if self.num_cpus > self.num_aps {
            return fail(format!("D = {} exceeds M = {}", self.num_cpus, self.num_aps));
        }
        if self.num_users > self.num_aps {
            return fail(format!("K = {} exceeds M = {}; zero-forcing needs K <= M", self.num_users, self.num_aps));
        }
        let positive = [
            ("L_m", self.side_length_m),
            ("P_ap_W", self.p_ap_w),
            ("P_ms_W", self.p_ms_w),
            ("tau_c", self.tau_c),
            ("bandwidth_Hz", self.bandwidth_hz),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("tau_dl", self.tau_dl), ("tau_ul", self.tau_ul)] {
            if !(v >= 0.0) || !v.is_finite() {
                return fail(format!("{name} must be non-negative, got {v}"));
            }
        }
        let used = self.tau_p as f64 + self.tau_dl + self.tau_ul;
        if used > self.tau_c {
            return fail(format!(
                "frame budget violated: tau_p + tau_dl + tau_ul <= tau_c is required, got {} + {} + {} = {} > {}",
                self.tau_p, self.tau_dl, self.tau_ul, used, self.tau_c
            ));
        }
        if !(self.bisection_tol > 0.0 && self.bisection_tol < 1.0) {
            return fail(format!("bisection_tol must lie in (0, 1), got {}", self.bisection_tol));
        }
        if !self.noise_psd_dbm_per_hz.is_finite() || !self.noise_figure_db.is_finite() {
            return fail("noise parameters must be finite".into());
        }
        if self.strategies.is_empty() {
            return fail("at least one strategy is required".into());
        }
        self.large_scale().validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }
}
