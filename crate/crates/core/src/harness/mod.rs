//! Scenario runs, experiment sweeps and their CSV/JSON outputs.

mod config;
mod output;
mod scenario;
mod stats;
mod sweep;

pub use config::{read_json, write_json, CommunitySource, FrameworkConfig, RunConfig, SweepSpec, SweepVariable};
pub use output::{sha256_file, write_rows, write_text, OutputDigest, RunManifest, MODULES};
pub use scenario::{
    learn_similarity, make_offers, offer_terms, participation_cap, resolve_emergency_days, run_scenario,
    score_households, select_with_fallback, truth_labels, write_training_csv, FrameworkScores, ScenarioRun,
};
pub use stats::{mean_std, spearman};
pub use sweep::{
    companion_path, noise_experiment, noise_levels, noise_setup, run_sweep, sweep_incentive, sweep_rate_hike, sweep_reduction, IncentiveDetail,
    IncentiveRow, IncentiveSweep, NoiseDetail, NoiseRow, NoiseSetup, NoiseStudy, RateHikeDetail, RateHikeRow, RateHikeSweep,
    ReductionDetail, ReductionRow, ReductionSweep, SweepTables,
};
