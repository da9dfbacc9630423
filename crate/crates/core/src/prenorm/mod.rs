//! Pre-norm Transformer normalization dynamics at desk scale.

pub mod attenuation;
pub mod drift;
pub mod norm;
pub mod stack;

pub use attenuation::{
    attenuation_csv, attenuation_curve, dyadic_magnitudes, first_order_delta, log_log_slope,
    AttenuationPoint,
};
pub use drift::{
    accumulated_drift_bounds, drift_report, freeze_csv, mean_block_angle_sweep,
    residual_angle_bounds, run_drift_trials, scaling_freeze_curve, DriftReport, DriftTrialConfig,
    DriftTrialSummary, FreezePoint,
};
pub use norm::{layer_norm, norm_backward, rms_norm, NormKind};
pub use stack::{
    estimate_sup_update_norms, forward_stack, make_stack, stack_backward, PreNormBlock,
    PreNormStack,
};
