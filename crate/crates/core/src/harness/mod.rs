//! Experiment harness: configuration, throw loop, sweeps and result files.

mod config;
mod experiment;
mod results;

pub use config::{ScenarioConfig, RateMode};
pub use experiment::{prepare_throw, run_experiment, run_throw, sweep, throw_seed, ThrowSetup};
pub use results::{emit_results, read_csv_rows, read_json, OutputFormat, ResultTable, ResultRow, RowKind, CSV_COLUMNS};

/// Thermal noise power in watts:
/// `10^((psd + 10 log10(bandwidth) + noise_figure - 30) / 10)`.
pub fn noise_power(psd_dbm_per_hz: f64, bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    10f64.powf((psd_dbm_per_hz + 10.0 * bandwidth_hz.log10() + noise_figure_db - 30.0) / 10.0)
}

/// Rate for a given SINR: `log2(1 + SINR)` bit/s/Hz in spectral mode, or
/// `(tau_dl / tau_c) W log2(1 + SINR)` bit/s in net mode.
pub fn compute_rate(sinr: f64, config: &ScenarioConfig) -> f64 {
    let se = (1.0 + sinr.max(0.0)).log2();
    match config.rate_mode {
        RateMode::Spectral => se,
        RateMode::Net => config.tau_dl / config.tau_c * config.bandwidth_hz * se,
    }
}
