//! Learning a token embedding as a fixed-norm direction.

mod config;
mod oracle;
mod run;
mod step;

pub use config::{
    InversionConfig, Magnitude, OptimizerKind, DEFAULT_ETA, DEFAULT_KAPPA, DEFAULT_SEED,
    DEFAULT_STEPS,
};
pub use oracle::{
    audit_oracle, direction_at_angle, inflation_task, toy_task, CosineOracle, FnOracle,
    InflationTask, LossEval, LossOracle, QuadraticOracle, ToyEncoderOracle, ToyTask, ToyTaskSpec,
    INFLATION_DIM, INFLATION_STEPS, INFLATION_TARGET_NORM,
};
pub use run::{
    rescale_embedding, run_euclidean_baseline, run_inversion, InversionResult, TrajectoryRecord,
    ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON,
};
pub use step::{dti_step, dti_step_traced, StepOutcome, StepRule, StepTrace};
