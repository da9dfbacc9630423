//! Can a small classifier still read token position after the first
//! normalization, once the token embedding is scaled up?

mod dataset;
mod model;
mod sweep;

pub use dataset::{
    build_probe_dataset, sinusoidal_positions, split_dataset, ProbeDataset, TRAIN_FRACTION,
};
pub use model::{evaluate_probe, train_probe, ProbeHyperparams, ProbeModel, TrainedProbe};
pub use sweep::{
    default_probe_table, magnitude_sweep, magnitude_sweep_seeds, sweep_csv, MultiSeedSweep,
    ProbeSweepConfig, SweepPoint, DEFAULT_PROBE_MAGNITUDES,
};
