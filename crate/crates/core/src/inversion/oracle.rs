//! Loss oracles: anything that maps an embedding `e` to `(loss, ∇_e loss)`.
//!
//! The optimizer never sees the model behind an oracle. The built-ins cover a
//! scale-sensitive loss (quadratic), a scale-invariant one (cosine) and a
//! compositional one (inverting a frozen pre-norm stack).

use serde::{Deserialize, Serialize};

use crate::gradcheck::{central_difference_gradient, max_relative_error};
use crate::linalg::{add, dot, norm, sub};
use crate::prenorm::{forward_stack, make_stack, stack_backward, NormKind, PreNormStack};
use crate::seeding::{gaussian_vec, rng_from_seed};
use crate::sphere::{normalize, UnitDirection, DEGENERACY_EPS};
use crate::{DtiError, Result, Scalar};

use super::config::InversionConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct LossEval<T> {
    pub loss: T,
    pub grad: Vec<T>,
}

pub trait LossOracle<T: Scalar> {
    fn dim(&self) -> usize;

    /// Loss and Euclidean gradient with respect to the embedding.
    fn evaluate(&mut self, e: &[T]) -> Result<LossEval<T>>;
}

impl<T: Scalar, O: LossOracle<T> + ?Sized> LossOracle<T> for Box<O> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn evaluate(&mut self, e: &[T]) -> Result<LossEval<T>> {
        (**self).evaluate(e)
    }
}

impl<T: Scalar, O: LossOracle<T> + ?Sized> LossOracle<T> for &mut O {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn evaluate(&mut self, e: &[T]) -> Result<LossEval<T>> {
        (**self).evaluate(e)
    }
}

fn check_dim(expected: usize, e: &[impl Sized]) -> Result<()> {
    if e.len() != expected {
        return Err(DtiError::DimMismatch {
            expected,
            actual: e.len(),
        });
    }
    Ok(())
}

/// `‖e − t‖²`
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticOracle<T> {
    pub target: Vec<T>,
}

impl<T: Scalar> LossOracle<T> for QuadraticOracle<T> {
    fn dim(&self) -> usize {
        self.target.len()
    }

    fn evaluate(&mut self, e: &[T]) -> Result<LossEval<T>> {
        check_dim(self.dim(), e)?;
        let r = sub(e, &self.target);
        Ok(LossEval {
            loss: dot(&r, &r),
            grad: r.iter().map(|&x| x + x).collect(),
        })
    }
}

/// `1 − ⟨e, t⟩/(‖e‖‖t‖)`
#[derive(Debug, Clone, PartialEq)]
pub struct CosineOracle<T> {
    pub target: Vec<T>,
}

impl<T: Scalar> LossOracle<T> for CosineOracle<T> {
    fn dim(&self) -> usize {
        self.target.len()
    }

    fn evaluate(&mut self, e: &[T]) -> Result<LossEval<T>> {
        check_dim(self.dim(), e)?;
        let (ne, nt) = (norm(e), norm(&self.target));
        if !(ne > T::lit(DEGENERACY_EPS)) || !(nt > T::lit(DEGENERACY_EPS)) {
            return Err(DtiError::ZeroVector {
                norm: ne.min(nt).to_f64_lossy(),
            });
        }
        let c = dot(e, &self.target) / (ne * nt);
        // ∇(1 − c) = −t/(‖e‖‖t‖) + c·e/‖e‖²
        let grad = e
            .iter()
            .zip(&self.target)
            .map(|(&ei, &ti)| c * ei / (ne * ne) - ti / (ne * nt))
            .collect();
        Ok(LossEval {
            loss: T::one() - c,
            grad,
        })
    }
}

/// `‖E(e + p) − E(e* + p)‖²` where `E` is the depth-L output of a frozen
/// pre-norm stack and `p` a fixed context offset (the token's slot in a
/// prompt). The hidden `e*` itself is not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoderOracle<T: Scalar> {
    stack: PreNormStack<T>,
    context: Vec<T>,
    target_output: Vec<T>,
}

impl<T: Scalar> ToyEncoderOracle<T> {
    pub fn new(stack: PreNormStack<T>, context: Vec<T>, hidden_target: &[T]) -> Result<Self> {
        check_dim(stack.dim(), &context)?;
        check_dim(stack.dim(), hidden_target)?;
        let target_output = encode(&stack, &context, hidden_target)?;
        Ok(Self {
            stack,
            context,
            target_output,
        })
    }

    pub fn stack(&self) -> &PreNormStack<T> {
        &self.stack
    }

    pub fn encode(&self, e: &[T]) -> Result<Vec<T>> {
        encode(&self.stack, &self.context, e)
    }
}

fn encode<T: Scalar>(stack: &PreNormStack<T>, context: &[T], e: &[T]) -> Result<Vec<T>> {
    let mut states = forward_stack(stack, &add(e, context))?;
    Ok(states.pop().expect("stack output"))
}

impl<T: Scalar> LossOracle<T> for ToyEncoderOracle<T> {
    fn dim(&self) -> usize {
        self.stack.dim()
    }

    fn evaluate(&mut self, e: &[T]) -> Result<LossEval<T>> {
        check_dim(self.dim(), e)?;
        let x0 = add(e, &self.context);
        let mut states = forward_stack(&self.stack, &x0)?;
        let residual = sub(&states.pop().expect("stack output"), &self.target_output);
        let upstream: Vec<T> = residual.iter().map(|&r| r + r).collect();
        Ok(LossEval {
            loss: dot(&residual, &residual),
            grad: stack_backward(&self.stack, &x0, &upstream)?,
        })
    }
}

/// Wraps a closure as an oracle.
pub struct FnOracle<F> {
    dim: usize,
    f: F,
}

impl<F> FnOracle<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<T: Scalar, F: FnMut(&[T]) -> Result<LossEval<T>>> LossOracle<T> for FnOracle<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&mut self, e: &[T]) -> Result<LossEval<T>> {
        check_dim(self.dim, e)?;
        (self.f)(e)
    }
}

/// Max relative error between the oracle's gradient at `e` and central
/// differences of its loss with `h = 1e-5·(1 + |e_i|)`.
pub fn audit_oracle<T: Scalar, O: LossOracle<T> + ?Sized>(oracle: &mut O, e: &[T]) -> Result<T> {
    let first = oracle.evaluate(e)?;
    let second = oracle.evaluate(e)?;
    if first != second {
        return Err(DtiError::NonDeterministicOracle);
    }
    let mut failure = None;
    let numeric = central_difference_gradient(
        |z| match oracle.evaluate(z) {
            Ok(r) => r.loss,
            Err(err) => {
                failure.get_or_insert(err);
                T::nan()
            }
        },
        e,
    );
    if let Some(err) = failure {
        return Err(err);
    }
    Ok(max_relative_error(&first.grad, &numeric))
}

/// A reproducible toy inversion problem: a frozen stack, a hidden concept
/// direction at norm `m*`, and an initialization at a fixed angle from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyTaskSpec {
    pub dim: usize,
    pub depth: usize,
    pub norm_kind: NormKind,
    pub m_star: f64,
    /// Norm of the context offset added to the concept token.
    pub context_norm: f64,
    /// Angle between the initialization and the hidden target, radians.
    pub init_angle: f64,
    pub seed: u64,
}

impl Default for ToyTaskSpec {
    fn default() -> Self {
        Self {
            dim: 32,
            depth: 2,
            norm_kind: NormKind::LayerNorm,
            // unit RMS per coordinate, the scale the stack's norm emits
            m_star: 32f64.sqrt(),
            context_norm: 2.0,
            init_angle: 0.75,
            seed: 42,
        }
    }
}

pub struct ToyTask<T: Scalar> {
    pub oracle: ToyEncoderOracle<T>,
    pub target: UnitDirection<T>,
    pub init: Vec<T>,
}

/// Direction at exactly `angle` from `base`, rotated toward a random tangent.
pub fn direction_at_angle<T: Scalar, R: rand::Rng + ?Sized>(
    rng: &mut R,
    base: &UnitDirection<T>,
    angle: T,
) -> Result<UnitDirection<T>> {
    let tangent =
        crate::sphere::project_to_tangent(base, &gaussian_vec::<T, _>(rng, base.dim(), 1.0));
    let t = normalize(&tangent.g)?;
    let mixed: Vec<T> = base
        .as_slice()
        .iter()
        .zip(t.as_slice())
        .map(|(&b, &w)| angle.cos() * b + angle.sin() * w)
        .collect();
    normalize(&mixed)
}

pub fn toy_task<T: Scalar>(spec: &ToyTaskSpec) -> Result<ToyTask<T>> {
    let mut rng = rng_from_seed(spec.seed);
    let stack = make_stack::<T>(
        spec.dim,
        spec.depth,
        spec.norm_kind,
        crate::seeding::derive_seed(spec.seed, 1),
    )?;
    let context = crate::geometry::random_embedding::<T, _>(&mut rng, spec.dim, spec.context_norm);
    let target = normalize(&gaussian_vec::<T, _>(&mut rng, spec.dim, 1.0))?;
    let init =
        direction_at_angle(&mut rng, &target, T::lit(spec.init_angle))?.scaled(T::lit(spec.m_star));
    let oracle = ToyEncoderOracle::new(stack, context, &target.scaled(T::lit(spec.m_star)))?;
    Ok(ToyTask {
        oracle,
        target,
        init,
    })
}

/// The norm-inflation demonstration: a quadratic pulling toward a norm-20
/// target from an in-distribution init of norm 0.4, at width 768.
pub struct InflationTask<T: Scalar> {
    pub oracle: QuadraticOracle<T>,
    pub init: Vec<T>,
    /// Rsgd with `m* = 0.4`; set `optimizer` for the Adam run.
    pub config: InversionConfig<T>,
}

pub const INFLATION_DIM: usize = 768;
pub const INFLATION_TARGET_NORM: f64 = 20.0;
pub const INFLATION_STEPS: usize = 1000;

pub fn inflation_task<T: Scalar>(seed: u64) -> Result<InflationTask<T>> {
    let mut rng = rng_from_seed(seed);
    let target = normalize(&gaussian_vec::<T, _>(&mut rng, INFLATION_DIM, 1.0))?;
    let init = normalize(&gaussian_vec::<T, _>(&mut rng, INFLATION_DIM, 1.0))?.scaled(T::lit(0.4));
    let mut config = InversionConfig::new(INFLATION_DIM).with_m_star(T::lit(0.4));
    config.steps = INFLATION_STEPS;
    config.seed = seed;
    Ok(InflationTask {
        oracle: QuadraticOracle {
            target: target.scaled(T::lit(INFLATION_TARGET_NORM)),
        },
        init,
        config,
    })
}
