//! Power studies on Gaussian scenarios.

mod config;
mod power;
mod scenario;

pub use config::{
    default_figure2_deltas, default_figure2a_deltas, run_figure2, run_figure2a, write_power_csv, ExperimentConfig,
    Figure2Config, Figure2aConfig, PowerRow,
};
pub use power::{estimate_power, estimate_powers, monte_carlo_rate, Method, PowerEstimate};
pub use scenario::{
    build_martingale, build_modified_martingale, fill_correlated_pvalues, gen_correlated_pvalues, gen_observations,
    GaussianScenario,
};
