//! Angular drift of the residual stream through a pre-norm stack, with the
//! per-block arcsin bound and the accumulated drift bounds evaluated on the
//! realized update norms `b_ℓ = ‖F_ℓ(Norm(x⁽ℓ⁾))‖`.
//!
//! The accumulated bound only ever uses per-step displacements, so replacing
//! the suprema `B_ℓ` by the realized `b_ℓ` keeps it valid and makes it
//! computable.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::norm::NormKind;
use super::stack::{forward_stack, make_stack, PreNormStack};
use crate::linalg::{distance, norm, scale};
use crate::seeding::{derive_seed, gaussian_vec, rng_from_seed};
use crate::sphere::angle_between;
use crate::{DtiError, Result, Scalar};

/// Floating-point slack when comparing a measured angle against a bound.
pub const BOUND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DriftReport<T> {
    pub total_angle: T,
    pub per_block_angles: Vec<T>,
    pub realized_update_norms: Vec<T>,
    /// `None` when `‖x⁽⁰⁾‖ ≤ Σ b_ℓ`.
    pub bound_sum: Option<T>,
    pub bound_closed_form: Option<T>,
    pub x0_norm: T,
}

impl<T: Scalar> DriftReport<T> {
    pub fn is_applicable(&self) -> bool {
        self.bound_sum.is_some()
    }

    pub fn mean_block_angle(&self) -> T {
        crate::linalg::mean(&self.per_block_angles)
    }
}

/// `(π/2) Σ b_ℓ/(‖x0‖ − Σ_{j<ℓ} b_j)` and `(π/2) S/(‖x0‖ − S)`, or `None`
/// when `‖x0‖ ≤ S`.
pub fn accumulated_drift_bounds<T: Scalar>(x0_norm: T, update_norms: &[T]) -> Option<(T, T)> {
    let total: T = update_norms.iter().copied().sum();
    if !(x0_norm > total) {
        return None;
    }
    let half_pi = T::FRAC_PI_2();
    let mut prefix = T::zero();
    let mut sum = T::zero();
    for &b in update_norms {
        sum = sum + b / (x0_norm - prefix);
        prefix = prefix + b;
    }
    Some((half_pi * sum, half_pi * total / (x0_norm - total)))
}

/// Per-block bound `arcsin(min(1, ‖x⁽ℓ⁺¹⁾ − x⁽ℓ⁾‖/‖x⁽ℓ⁾‖))`.
pub fn residual_angle_bounds<T: Scalar>(states: &[Vec<T>]) -> Vec<T> {
    states
        .windows(2)
        .map(|w| (distance(&w[1], &w[0]) / norm(&w[0])).min(T::one()).asin())
        .collect()
}

fn block_angles<T: Scalar>(states: &[Vec<T>]) -> Result<Vec<T>> {
    states
        .windows(2)
        .enumerate()
        .map(|(layer, w)| {
            angle_between(&w[0], &w[1]).map_err(|e| DtiError::DegenerateHiddenState {
                layer: layer + 1,
                source: Box::new(e),
            })
        })
        .collect()
}

pub fn drift_report<T: Scalar>(stack: &PreNormStack<T>, x0: &[T]) -> Result<DriftReport<T>> {
    let states = forward_stack(stack, x0)?;
    report_from_states(&states)
}

pub fn report_from_states<T: Scalar>(states: &[Vec<T>]) -> Result<DriftReport<T>> {
    let x0 = &states[0];
    let last = states.last().expect("at least one state");
    let realized_update_norms: Vec<T> = states.windows(2).map(|w| distance(&w[1], &w[0])).collect();
    let x0_norm = norm(x0);
    let bounds = accumulated_drift_bounds(x0_norm, &realized_update_norms);
    Ok(DriftReport {
        total_angle: angle_between(x0, last)?,
        per_block_angles: block_angles(states)?,
        realized_update_norms,
        bound_sum: bounds.map(|b| b.0),
        bound_closed_form: bounds.map(|b| b.1),
        x0_norm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FreezePoint<T> {
    pub alpha: T,
    pub angle: T,
    /// `None` when `α‖x0‖ ≤ S`.
    pub bound: Option<T>,
}

/// Angle between `α·x0` and the depth-L output for each α > 1, against
/// `(π/2) S/(α‖x0‖ − S)`.
///
/// `S` is the largest realized `Σ b_ℓ` over all swept α, so one constant
/// serves every point and the bound is strictly decreasing in α.
pub fn scaling_freeze_curve<T: Scalar>(
    stack: &PreNormStack<T>,
    x0: &[T],
    alphas: &[T],
) -> Result<Vec<FreezePoint<T>>> {
    if let Some(bad) = alphas.iter().find(|&&a| !(a > T::one())) {
        return Err(DtiError::InvalidArgument(format!(
            "freeze sweep needs every alpha > 1, got {bad}"
        )));
    }
    let reports = alphas
        .iter()
        .map(|&a| drift_report(stack, &scale(x0, a)))
        .collect::<Result<Vec<_>>>()?;
    let budget = reports
        .iter()
        .map(|r| r.realized_update_norms.iter().copied().sum::<T>())
        .fold(T::zero(), T::max);
    let base = norm(x0);
    Ok(alphas
        .iter()
        .zip(&reports)
        .map(|(&alpha, r)| {
            let denom = alpha * base - budget;
            FreezePoint {
                alpha,
                angle: r.total_angle,
                bound: (denom > T::zero()).then(|| T::FRAC_PI_2() * budget / denom),
            }
        })
        .collect())
}

/// `alpha,angle,bound` rows; a bound that does not apply is written `NA`.
pub fn freeze_csv<T: Scalar>(points: &[FreezePoint<T>]) -> String {
    let mut out = String::from("alpha,angle,bound\n");
    for p in points {
        match p.bound {
            Some(b) => out.push_str(&format!("{},{},{}\n", p.alpha, p.angle, b)),
            None => out.push_str(&format!("{},{},NA\n", p.alpha, p.angle)),
        }
    }
    out
}

/// Mean per-block angle when the same input direction enters at each scale.
pub fn mean_block_angle_sweep<T: Scalar>(
    stack: &PreNormStack<T>,
    direction: &[T],
    scales: &[T],
) -> Result<Vec<(T, T)>> {
    let unit = crate::sphere::normalize(direction)?;
    scales
        .iter()
        .map(|&s| Ok((s, drift_report(stack, &unit.scaled(s))?.mean_block_angle())))
        .collect()
}

/// Settings for randomized verification of the drift bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftTrialConfig {
    pub trials: usize,
    pub dims: Vec<usize>,
    pub max_depth: usize,
    pub master_seed: u64,
}

impl Default for DriftTrialConfig {
    fn default() -> Self {
        Self {
            trials: 1000,
            dims: vec![8, 16, 32],
            max_depth: 6,
            master_seed: 42,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DriftTrialSummary {
    pub trials: usize,
    pub blocks_checked: usize,
    pub per_block_violations: usize,
    pub sum_bound_violations: usize,
    pub closed_form_violations: usize,
    /// Trials where the sum form exceeded the closed form.
    pub ordering_violations: usize,
    /// Largest `total_angle / bound_sum` seen.
    pub tightest_ratio: f64,
}

struct TrialOutcome {
    blocks: usize,
    per_block: usize,
    sum: bool,
    closed: bool,
    ordering: bool,
    ratio: f64,
}

/// Draws a stack and an input whose norm exceeds the realized `Σ b_ℓ` by a
/// random factor in `[1.02, 3]`, rescaling until the condition holds.
fn applicable_trial<T: Scalar>(
    cfg: &DriftTrialConfig,
    index: usize,
) -> Result<(PreNormStack<T>, Vec<Vec<T>>)> {
    let mut rng = rng_from_seed(derive_seed(cfg.master_seed, index as u64));
    let dim = cfg.dims[rng.random_range(0..cfg.dims.len())];
    let depth = rng.random_range(1..=cfg.max_depth.max(1));
    let kind = if rng.random_bool(0.5) {
        NormKind::LayerNorm
    } else {
        NormKind::RmsNorm
    };
    let stack = make_stack::<T>(dim, depth, kind, rng.random())?;
    let direction = crate::sphere::normalize(&gaussian_vec::<T, _>(&mut rng, dim, 1.0))?;
    let mut scale_now = T::from_usize_lossy(dim).sqrt();
    for _ in 0..64 {
        let states = forward_stack(&stack, &direction.scaled(scale_now))?;
        let spent: T = states.windows(2).map(|w| distance(&w[1], &w[0])).sum();
        if scale_now > spent {
            return Ok((stack, states));
        }
        scale_now = spent * T::lit(rng.random_range(1.02..3.0));
    }
    Err(DtiError::InvalidArgument(format!(
        "trial {index}: could not reach the applicable regime"
    )))
}

/// Randomized check of the per-block and accumulated drift bounds. Trials are
/// independent and seeded from `(master_seed, index)`.
pub fn run_drift_trials<T: Scalar>(cfg: &DriftTrialConfig) -> Result<DriftTrialSummary> {
    if cfg.dims.is_empty() || cfg.dims.iter().any(|&d| d < 2) {
        return Err(DtiError::InvalidDims(
            "trial dims must be nonempty and >= 2".into(),
        ));
    }
    let slack = T::lit(BOUND_SLACK);
    let outcomes = (0..cfg.trials)
        .into_par_iter()
        .map(|i| -> Result<TrialOutcome> {
            let (_, states) = applicable_trial::<T>(cfg, i)?;
            let report = report_from_states(&states)?;
            let per_block = report
                .per_block_angles
                .iter()
                .zip(residual_angle_bounds(&states))
                .filter(|(&a, b)| a > *b + slack)
                .count();
            let (sum, closed) = (
                report.bound_sum.expect("applicable"),
                report.bound_closed_form.expect("applicable"),
            );
            Ok(TrialOutcome {
                blocks: report.per_block_angles.len(),
                per_block,
                sum: report.total_angle > sum + slack,
                closed: report.total_angle > closed + slack,
                ordering: sum > closed + slack,
                ratio: if sum > T::zero() {
                    (report.total_angle / sum).to_f64_lossy()
                } else {
                    0.0
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut summary = DriftTrialSummary {
        trials: outcomes.len(),
        ..Default::default()
    };
    for o in outcomes {
        summary.blocks_checked += o.blocks;
        summary.per_block_violations += o.per_block;
        summary.sum_bound_violations += o.sum as usize;
        summary.closed_form_violations += o.closed as usize;
        summary.ordering_violations += o.ordering as usize;
        summary.tightest_ratio = summary.tightest_ratio.max(o.ratio);
    }
    Ok(summary)
}
