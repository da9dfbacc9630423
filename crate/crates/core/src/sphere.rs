//! Primitives on the unit hypersphere S^{d-1}.
//!
//! The optimizer only ever touches the sphere through these functions:
//! normalization, geodesic angle, tangent projection, the projective
//! retraction `(v - ηs)/‖v - ηs‖`, great-circle interpolation, and the
//! unnormalized von Mises-Fisher log density `κ⟨μ, v⟩` with its constant
//! Euclidean gradient.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::linalg::{dot, norm};
use crate::{DtiError, Result, Scalar};

/// Inputs at or below this norm are treated as zero.
pub const DEGENERACY_EPS: f64 = 1e-12;
/// Angle below which two directions are considered identical for slerp.
pub const SLERP_EPS: f64 = 1e-7;

/// A point on S^{d-1}, d ≥ 2.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitDirection<T>(Vec<T>);

impl<T: Scalar> UnitDirection<T> {
    /// Wraps `x` after dividing by its Euclidean norm.
    pub fn normalize(x: &[T]) -> Result<Self> {
        if x.len() < 2 {
            return Err(DtiError::InvalidDims(format!(
                "unit direction needs d >= 2, got {}",
                x.len()
            )));
        }
        let n = norm(x);
        if !(n > T::lit(DEGENERACY_EPS)) {
            return Err(DtiError::ZeroVector {
                norm: n.to_f64_lossy(),
            });
        }
        Ok(Self(x.iter().map(|&xi| xi / n).collect()))
    }

    /// The i-th standard basis vector of R^d.
    pub fn basis(dim: usize, i: usize) -> Result<Self> {
        if i >= dim {
            return Err(DtiError::InvalidArgument(format!(
                "basis index {i} out of range for d = {dim}"
            )));
        }
        let mut e = vec![T::zero(); dim];
        e[i] = T::one();
        Self::normalize(&e)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.0.clone()
    }

    pub fn negate(&self) -> Self {
        Self(self.0.iter().map(|&x| -x).collect())
    }

    /// `m · v`
    pub fn scaled(&self, m: T) -> Vec<T> {
        self.0.iter().map(|&x| x * m).collect()
    }
}

impl<T: Scalar> AsRef<[T]> for UnitDirection<T> {
    fn as_ref(&self) -> &[T] {
        &self.0
    }
}

impl<T: Scalar> Serialize for UnitDirection<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.serialize(serializer)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for UnitDirection<T> {
    /// Accepts any nonzero vector and normalizes it.
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = Vec::<T>::deserialize(deserializer)?;
        UnitDirection::normalize(&raw).map_err(serde::de::Error::custom)
    }
}

/// A vector in the tangent space at `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector<T> {
    pub base: UnitDirection<T>,
    pub g: Vec<T>,
}

impl<T: Scalar> TangentVector<T> {
    pub fn norm(&self) -> T {
        norm(&self.g)
    }
}

/// Free-function spelling of [`UnitDirection::normalize`].
pub fn normalize<T: Scalar>(x: &[T]) -> Result<UnitDirection<T>> {
    UnitDirection::normalize(x)
}

/// Geodesic distance in `[0, π]`, equal to `arccos⟨a, b⟩`.
///
/// Evaluated as `2·atan2(‖a − b‖, ‖a + b‖)`: arccos of a dot product near ±1
/// only resolves angles to about 1e-8.
pub fn angle<T: Scalar>(a: &UnitDirection<T>, b: &UnitDirection<T>) -> T {
    let (mut diff, mut sum) = (T::zero(), T::zero());
    for (&x, &y) in a.as_slice().iter().zip(b.as_slice()) {
        diff = diff + (x - y) * (x - y);
        sum = sum + (x + y) * (x + y);
    }
    T::lit(2.0) * diff.sqrt().atan2(sum.sqrt())
}

/// `arccos` of the clamped dot product; reference form of [`angle`].
pub fn angle_acos<T: Scalar>(a: &UnitDirection<T>, b: &UnitDirection<T>) -> T {
    dot(a.as_slice(), b.as_slice())
        .max(-T::one())
        .min(T::one())
        .acos()
}

/// Angle between two arbitrary nonzero vectors.
pub fn angle_between<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    Ok(angle(&normalize(a)?, &normalize(b)?))
}

/// `g - ⟨g, v⟩ v`
pub fn project_to_tangent<T: Scalar>(v: &UnitDirection<T>, g_euc: &[T]) -> TangentVector<T> {
    let radial = dot(g_euc, v.as_slice());
    let g = g_euc
        .iter()
        .zip(v.as_slice())
        .map(|(&gi, &vi)| gi - radial * vi)
        .collect();
    TangentVector { base: v.clone(), g }
}

/// Projective retraction `(v - η·step) / ‖v - η·step‖`.
pub fn retract<T: Scalar>(v: &UnitDirection<T>, step: &[T], eta: T) -> Result<UnitDirection<T>> {
    if step.len() != v.dim() {
        return Err(DtiError::DimMismatch {
            expected: v.dim(),
            actual: step.len(),
        });
    }
    let moved: Vec<T> = v
        .as_slice()
        .iter()
        .zip(step)
        .map(|(&vi, &si)| vi - eta * si)
        .collect();
    let n = norm(&moved);
    if !(n > T::lit(DEGENERACY_EPS)) {
        return Err(DtiError::DegenerateRetraction {
            norm: n.to_f64_lossy(),
        });
    }
    Ok(UnitDirection(moved.into_iter().map(|x| x / n).collect()))
}

/// Great-circle interpolation from `a` (t = 0) to `b` (t = 1).
pub fn slerp<T: Scalar>(
    a: &UnitDirection<T>,
    b: &UnitDirection<T>,
    t: T,
) -> Result<UnitDirection<T>> {
    if a.dim() != b.dim() {
        return Err(DtiError::DimMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    if !(t >= T::zero() && t <= T::one()) {
        return Err(DtiError::InvalidArgument(format!(
            "slerp ratio must lie in [0, 1], got {t}"
        )));
    }
    if t == T::zero() {
        return Ok(a.clone());
    }
    if t == T::one() {
        return Ok(b.clone());
    }
    let theta = angle(a, b);
    if theta <= T::lit(SLERP_EPS) {
        return Ok(a.clone());
    }
    if theta > T::PI() - T::lit(SLERP_EPS) {
        return Err(DtiError::AntipodalInputs {
            angle: theta.to_f64_lossy(),
        });
    }
    let sin_theta = theta.sin();
    let wa = ((T::one() - t) * theta).sin() / sin_theta;
    let wb = (t * theta).sin() / sin_theta;
    let mixed: Vec<T> = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&ai, &bi)| wa * ai + wb * bi)
        .collect();
    // Analytically unit; renormalize to absorb rounding.
    UnitDirection::normalize(&mixed)
}

/// Mean direction and concentration of a von Mises-Fisher prior.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VmfPrior<T: Scalar> {
    pub mu: UnitDirection<T>,
    kappa: T,
}

impl<T: Scalar> VmfPrior<T> {
    pub fn new(mu: UnitDirection<T>, kappa: T) -> Result<Self> {
        if !(kappa >= T::zero()) || !kappa.is_finite() {
            return Err(DtiError::InvalidArgument(format!(
                "vMF concentration must be finite and nonnegative, got {kappa}"
            )));
        }
        Ok(Self { mu, kappa })
    }

    pub fn kappa(&self) -> T {
        self.kappa
    }
}

/// `κ⟨μ, v⟩`, the log density up to the Bessel normalizer.
pub fn vmf_unnormalized_log_density<T: Scalar>(v: &UnitDirection<T>, prior: &VmfPrior<T>) -> T {
    prior.kappa * dot(prior.mu.as_slice(), v.as_slice())
}

/// Euclidean gradient of the prior loss `-κ⟨μ, v⟩`, i.e. `-κμ` for every v.
pub fn vmf_prior_gradient<T: Scalar>(prior: &VmfPrior<T>) -> Vec<T> {
    prior
        .mu
        .as_slice()
        .iter()
        .map(|&m| -prior.kappa * m)
        .collect()
}
