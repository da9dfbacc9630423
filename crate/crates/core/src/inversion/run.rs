//! Full optimization runs: the hyperspherical RSGD loop and the unconstrained
//! Adam baseline used by classic textual inversion.

use serde::{Deserialize, Serialize};

use crate::linalg::norm;
use crate::sphere::{angle, normalize, UnitDirection, DEGENERACY_EPS};
use crate::{DtiError, Result, Scalar};

use super::config::{InversionConfig, Magnitude, OptimizerKind};
use super::oracle::{LossEval, LossOracle};
use super::step::{dti_step, StepRule};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TrajectoryRecord<T> {
    pub step: usize,
    /// Loss at the iterate entering this step.
    pub loss: T,
    pub embedding_norm: T,
    /// `None` only if the Euclidean iterate collapsed to zero.
    pub angle_to_prior_radians: Option<T>,
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct InversionResult<T> {
    pub final_embedding: Vec<T>,
    pub trajectory: Vec<TrajectoryRecord<T>>,
    /// The configuration as run: `m_star` resolved and `prior_mu` filled in.
    pub config_echo: InversionConfig<T>,
}

impl<T: Scalar> InversionResult<T> {
    pub fn final_norm(&self) -> T {
        norm(&self.final_embedding)
    }

    pub fn final_direction(&self) -> Result<UnitDirection<T>> {
        normalize(&self.final_embedding)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn prepare<T: Scalar, O: LossOracle<T> + ?Sized>(
    oracle: &O,
    cfg: &InversionConfig<T>,
    init: &[T],
) -> Result<(UnitDirection<T>, InversionConfig<T>)> {
    cfg.validate()?;
    for actual in [init.len(), oracle.dim()] {
        if actual != cfg.dim {
            return Err(DtiError::DimMismatch {
                expected: cfg.dim,
                actual,
            });
        }
    }
    let v0 = normalize(init)?;
    let mut echo = cfg.clone();
    echo.prior_mu.get_or_insert_with(|| v0.clone());
    Ok((v0, echo))
}

fn eval_at<T: Scalar, O: LossOracle<T> + ?Sized>(
    oracle: &mut O,
    e: &[T],
    step: usize,
) -> Result<LossEval<T>> {
    let out = oracle.evaluate(e).map_err(|source| DtiError::Oracle {
        step,
        source: Box::new(source),
    })?;
    if out.grad.len() != e.len() {
        return Err(DtiError::Oracle {
            step,
            source: Box::new(DtiError::DimMismatch {
                expected: e.len(),
                actual: out.grad.len(),
            }),
        });
    }
    Ok(out)
}

/// Runs the optimizer selected by `cfg.optimizer` for `cfg.steps` steps.
///
/// `m_star` must already be a literal (see
/// [`InversionConfig::resolve_m_star`]) for RSGD runs.
pub fn run_inversion<T: Scalar, O: LossOracle<T> + ?Sized>(
    oracle: &mut O,
    cfg: &InversionConfig<T>,
    init: &[T],
) -> Result<InversionResult<T>> {
    match cfg.optimizer {
        OptimizerKind::Rsgd => run_rsgd(oracle, cfg, init),
        OptimizerKind::EuclideanAdam => run_euclidean_baseline(oracle, cfg, init),
    }
}

fn run_rsgd<T: Scalar, O: LossOracle<T> + ?Sized>(
    oracle: &mut O,
    cfg: &InversionConfig<T>,
    init: &[T],
) -> Result<InversionResult<T>> {
    let (mut v, echo) = prepare(oracle, cfg, init)?;
    let rule = StepRule::from_config(&echo, &v)?;
    let mut trajectory = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let e = v.scaled(rule.m_star);
        let eval = eval_at(oracle, &e, step)?;
        let out = dti_step(&v, &eval.grad, &rule)?;
        trajectory.push(TrajectoryRecord {
            step,
            loss: eval.loss,
            embedding_norm: norm(&e),
            angle_to_prior_radians: Some(angle(&v, &rule.mu)),
            skipped: out.skipped,
        });
        v = out.direction;
    }
    Ok(InversionResult {
        final_embedding: v.scaled(rule.m_star),
        trajectory,
        config_echo: echo,
    })
}

/// Adam on the raw embedding with no sphere constraint and no prior, the
/// optimizer classic textual inversion uses. Weight decay is zero.
///
/// `m_star` is ignored; the run starts from `init` as given.
pub fn run_euclidean_baseline<T: Scalar, O: LossOracle<T> + ?Sized>(
    oracle: &mut O,
    cfg: &InversionConfig<T>,
    init: &[T],
) -> Result<InversionResult<T>> {
    let (_, mut echo) = prepare(oracle, cfg, init)?;
    echo.optimizer = OptimizerKind::EuclideanAdam;
    if echo.m_star == Magnitude::MeanVocabNorm {
        echo.m_star = Magnitude::Literal(norm(init));
    }
    let mu = echo.prior_mu.clone().expect("filled by prepare");
    let (b1, b2, eps) = (T::lit(ADAM_BETA1), T::lit(ADAM_BETA2), T::lit(ADAM_EPSILON));
    let mut e = init.to_vec();
    let mut m1 = vec![T::zero(); e.len()];
    let mut m2 = vec![T::zero(); e.len()];
    let (mut b1_pow, mut b2_pow) = (T::one(), T::one());
    let mut trajectory = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let eval = eval_at(oracle, &e, step)?;
        let n = norm(&e);
        let skipped = eval.grad.iter().all(|g| g.is_zero());
        trajectory.push(TrajectoryRecord {
            step,
            loss: eval.loss,
            embedding_norm: n,
            angle_to_prior_radians: (n > T::lit(DEGENERACY_EPS))
                .then(|| normalize(&e).map(|d| angle(&d, &mu)).ok())
                .flatten(),
            skipped,
        });
        b1_pow = b1_pow * b1;
        b2_pow = b2_pow * b2;
        for i in 0..e.len() {
            let g = eval.grad[i];
            m1[i] = b1 * m1[i] + (T::one() - b1) * g;
            m2[i] = b2 * m2[i] + (T::one() - b2) * g * g;
            let m_hat = m1[i] / (T::one() - b1_pow);
            let v_hat = m2[i] / (T::one() - b2_pow);
            e[i] = e[i] - cfg.eta * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(InversionResult {
        final_embedding: e,
        trajectory,
        config_echo: echo,
    })
}

/// `m*·e/‖e‖`, the post-hoc rescaling applied to Euclidean-trained embeddings.
pub fn rescale_embedding<T: Scalar>(e: &[T], m_star: T) -> Result<Vec<T>> {
    if !(m_star > T::zero()) {
        return Err(DtiError::InvalidArgument(format!(
            "rescale target must be positive, got {m_star}"
        )));
    }
    Ok(normalize(e)?.scaled(m_star))
}
