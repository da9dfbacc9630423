//! Scale-invariant LayerNorm and RMSNorm without affine parameters.
//!
//! `RMSN(x) = √d · x/‖x‖` and `LN(x) = √d · Cx/‖Cx‖` with `C = I − 11ᵀ/d`.
//! Both are invariant to positive rescaling of `x`, which is the property the
//! attenuation and stagnation experiments hinge on.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::linalg::{center, dot, norm};
use crate::sphere::DEGENERACY_EPS;
use crate::{DtiError, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum NormKind {
    #[default]
    #[serde(rename = "ln", alias = "LayerNorm")]
    LayerNorm,
    #[serde(rename = "rms", alias = "RMSNorm", alias = "RmsNorm")]
    RmsNorm,
}

impl NormKind {
    pub fn apply<T: Scalar>(self, x: &[T]) -> Result<Vec<T>> {
        match self {
            NormKind::LayerNorm => layer_norm(x),
            NormKind::RmsNorm => rms_norm(x),
        }
    }

    pub fn backward<T: Scalar>(self, x: &[T], upstream: &[T]) -> Result<Vec<T>> {
        norm_backward(self, x, upstream)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NormKind::LayerNorm => "ln",
            NormKind::RmsNorm => "rms",
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormKind {
    type Err = DtiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ln" | "layernorm" | "layer_norm" => Ok(NormKind::LayerNorm),
            "rms" | "rmsnorm" | "rms_norm" => Ok(NormKind::RmsNorm),
            other => Err(DtiError::InvalidArgument(format!(
                "unknown norm kind {other:?} (expected ln or rms)"
            ))),
        }
    }
}

fn sqrt_dim<T: Scalar>(x: &[T]) -> T {
    T::from_usize_lossy(x.len()).sqrt()
}

pub fn rms_norm<T: Scalar>(x: &[T]) -> Result<Vec<T>> {
    let n = norm(x);
    if !(n > T::lit(DEGENERACY_EPS)) {
        return Err(DtiError::ZeroVector {
            norm: n.to_f64_lossy(),
        });
    }
    let s = sqrt_dim(x) / n;
    Ok(x.iter().map(|&xi| xi * s).collect())
}

pub fn layer_norm<T: Scalar>(x: &[T]) -> Result<Vec<T>> {
    let c = center(x);
    let n = norm(&c);
    if !(n > T::lit(DEGENERACY_EPS)) {
        return Err(DtiError::ConstantVector {
            norm: n.to_f64_lossy(),
        });
    }
    let s = sqrt_dim(x) / n;
    Ok(c.into_iter().map(|ci| ci * s).collect())
}

/// `Jᵀ · upstream`, J the Jacobian of the normalization at `x`.
///
/// RMSNorm: `J = (√d/‖x‖)(I − x̂x̂ᵀ)`.
/// LayerNorm: `J = (√d/‖Cx‖)(I − uuᵀ)C` with `u = Cx/‖Cx‖`, so
/// `Jᵀ = (√d/‖Cx‖) C (I − uuᵀ)`.
pub fn norm_backward<T: Scalar>(kind: NormKind, x: &[T], upstream: &[T]) -> Result<Vec<T>> {
    if x.len() != upstream.len() {
        return Err(DtiError::DimMismatch {
            expected: x.len(),
            actual: upstream.len(),
        });
    }
    let basis = match kind {
        NormKind::RmsNorm => x.to_vec(),
        NormKind::LayerNorm => center(x),
    };
    let n = norm(&basis);
    if !(n > T::lit(DEGENERACY_EPS)) {
        let norm = n.to_f64_lossy();
        return Err(match kind {
            NormKind::RmsNorm => DtiError::ZeroVector { norm },
            NormKind::LayerNorm => DtiError::ConstantVector { norm },
        });
    }
    let unit: Vec<T> = basis.iter().map(|&b| b / n).collect();
    let radial = dot(&unit, upstream);
    let s = sqrt_dim(x) / n;
    let projected: Vec<T> = upstream
        .iter()
        .zip(&unit)
        .map(|(&g, &u)| (g - radial * u) * s)
        .collect();
    Ok(match kind {
        NormKind::RmsNorm => projected,
        NormKind::LayerNorm => center(&projected),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::central_difference_vjp;
    use crate::seeding::{gaussian_vec, rng_from_seed};

    const KINDS: [NormKind; 2] = [NormKind::LayerNorm, NormKind::RmsNorm];

    #[test]
    fn rms_hand_values() {
        let y = rms_norm(&[3.0_f64, 4.0]).unwrap();
        assert!((y[0] - 0.848_528_137_423_857).abs() < 1e-12);
        assert!((y[1] - 1.131_370_849_898_476).abs() < 1e-12);
        assert!(matches!(
            rms_norm(&[0.0_f64, 0.0]),
            Err(DtiError::ZeroVector { .. })
        ));
    }

    #[test]
    fn layer_norm_hand_values() {
        let y = layer_norm(&[1.0_f64, 3.0]).unwrap();
        assert!((y[0] + 1.0).abs() < 1e-15 && (y[1] - 1.0).abs() < 1e-15);
        assert!(matches!(
            layer_norm(&[5.0_f64, 5.0, 5.0]),
            Err(DtiError::ConstantVector { .. })
        ));
    }

    #[test]
    fn outputs_have_fixed_scale_and_zero_mean() {
        let x = gaussian_vec::<f64, _>(&mut rng_from_seed(2), 33, 4.0);
        let d = 33.0_f64;
        let r = rms_norm(&x).unwrap();
        assert!((norm(&r) - d.sqrt()).abs() < 1e-12);
        let l = layer_norm(&x).unwrap();
        assert!((norm(&l) - d.sqrt()).abs() < 1e-12);
        assert!(crate::linalg::mean(&l).abs() < 1e-12);
    }

    #[test]
    fn scale_invariance() {
        let x = gaussian_vec::<f64, _>(&mut rng_from_seed(3), 40, 1.0);
        for kind in KINDS {
            let base = kind.apply(&x).unwrap();
            for s in [1e-3, 1e-1, 1.0, 1e1, 1e3, 7.0] {
                let xs: Vec<f64> = x.iter().map(|v| v * s).collect();
                let y = kind.apply(&xs).unwrap();
                let diff = crate::linalg::distance(&y, &base);
                assert!(diff <= 1e-9 * 40.0_f64.sqrt(), "{kind} s={s} diff={diff}");
            }
        }
    }

    #[test]
    fn backward_annihilates_radial_upstream() {
        let x = gaussian_vec::<f64, _>(&mut rng_from_seed(4), 16, 1.0);
        for kind in KINDS {
            let y = kind.apply(&x).unwrap();
            let g = norm_backward(kind, &x, &y).unwrap();
            assert!(norm(&g) < 1e-12, "{kind}: {}", norm(&g));
        }
    }

    #[test]
    fn rms_backward_hand_value() {
        let g = norm_backward(NormKind::RmsNorm, &[2.0_f64, 0.0], &[0.0, 1.0]).unwrap();
        assert!(g[0].abs() < 1e-15);
        assert!((g[1] - 2.0_f64.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn backward_matches_central_differences() {
        for seed in 0..20 {
            let mut rng = rng_from_seed(seed);
            let x = gaussian_vec::<f64, _>(&mut rng, 16, 1.5);
            let up = gaussian_vec::<f64, _>(&mut rng, 16, 1.0);
            for kind in KINDS {
                let analytic = norm_backward(kind, &x, &up).unwrap();
                let numeric = central_difference_vjp(|z| kind.apply(z).unwrap(), &x, &up);
                let err = crate::gradcheck::max_relative_error(&analytic, &numeric);
                assert!(err < 1e-6, "{kind} seed {seed}: {err}");
            }
        }
    }
}
