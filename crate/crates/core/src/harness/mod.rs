//! Experiment configuration, Monte Carlo runner and CSV emission.

mod config;
mod estimate;
mod rates;
mod runner;
mod selftest;
mod stats;

pub use config::{
    CdidConfig, ChannelConfig, ChannelModel, DetectorConfig, DetectorKind, EstimateConfig, EstimationConfig,
    ExperimentConfig, FrameConfig, ProfileName, RateConfig, SchemeName, SweepConfig, WaveformKind, SCHEMA_VERSION,
};
pub use estimate::{emit_nmse_curve, nmse_csv, nmse_sweep, NmseRow};
pub use rates::{compute_rate_curves, emit_rate_curves, rate_csv, RateCurves, RateRow};
pub use runner::{
    metrics_csv, noise_variance, run_experiment, waveform_for, ExperimentOutput, MetricRecord, RunOptions,
};
pub use selftest::{awgn_bpsk_check, q_function, run_selftest, CheckOutcome};
pub use stats::{intervals_overlap, wilson_half_width, wilson_interval, ErrorCounter, WILSON_Z};
