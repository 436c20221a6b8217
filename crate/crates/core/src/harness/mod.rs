//! Experiment orchestration: declarative configs, a run pipeline that
//! ties kernels, spectra, waves, simulation, and entropy verification
//! into one reproducible artifact directory, and parallel sweeps.

mod config;
mod experiment;

pub use config::{
    canonical_toml, parse_config, validate, ConfigError, ConvChoice, ExperimentConfig,
    GridSection, KernelSection, ModelSection, PerturbationKind, PerturbationSection, RunSection,
    SpeedReference, SpeedSection, StepSection, WaveSection, DEFAULT_SPEED_MULTIPLIER,
};
pub use experiment::{
    output_dir, run_experiment, sweep, write_summary, ArtifactInfo, Derived, HarnessError,
    RunManifest, RunOutcome, RunStatus, SweepJob, SweepRow, MANIFEST_FILE, PROFILE_FILE,
    STATE_FILE, SUMMARY_FILE, TRACE_FILE,
};
