//! Experiment orchestration: configuration parsing, Monte-Carlo drivers,
//! AWGN/SNR handling, metric accumulation and CSV emission.

pub mod config;
pub mod csvout;
pub mod experiment;

pub use config::{apply_overrides, parse_config, Config};
pub use csvout::{csv_string, read_csv, write_csv, write_magnitude_grid, CurveRow};
pub use experiment::{
    awgn, noise_variance, run_ber, run_channel_dump, run_mse, run_optimize, Arm,
};
