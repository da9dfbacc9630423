//! Positional attenuation: how much an additive term `p` still moves
//! `Norm(m·v + p)` as the token magnitude `m` grows.

use serde::{Deserialize, Serialize};

use super::norm::NormKind;
use crate::linalg::{center, distance, dot, norm};
use crate::sphere::UnitDirection;
use crate::{DtiError, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AttenuationPoint<T> {
    pub m: T,
    pub delta: T,
}

/// `δ(m) = ‖Norm(m·v + p) − Norm(m·v)‖` for each magnitude.
pub fn attenuation_curve<T: Scalar>(
    v: &UnitDirection<T>,
    p: &[T],
    kind: NormKind,
    magnitudes: &[T],
) -> Result<Vec<AttenuationPoint<T>>> {
    if p.len() != v.dim() {
        return Err(DtiError::DimMismatch {
            expected: v.dim(),
            actual: p.len(),
        });
    }
    magnitudes
        .iter()
        .map(|&m| {
            if !(m > T::zero()) {
                return Err(DtiError::InvalidArgument(format!(
                    "magnitudes must be positive, got {m}"
                )));
            }
            let token = v.scaled(m);
            let shifted: Vec<T> = token.iter().zip(p).map(|(&a, &b)| a + b).collect();
            let delta = distance(&kind.apply(&shifted)?, &kind.apply(&token)?);
            Ok(AttenuationPoint { m, delta })
        })
        .collect()
}

/// Leading-order prediction of `δ(m)` from the first-order expansion of the
/// normalization around `v`:
///
/// * RMSNorm: `√d · ‖(I − vvᵀ)p‖ / m`
/// * LayerNorm: `√d · ‖(I − uuᵀ)Cp‖ / (m‖Cv‖)`, `u = Cv/‖Cv‖`
pub fn first_order_delta<T: Scalar>(
    v: &UnitDirection<T>,
    p: &[T],
    kind: NormKind,
    m: T,
) -> Result<T> {
    let sqrt_d = T::from_usize_lossy(v.dim()).sqrt();
    let (axis, p_eff, scale) = match kind {
        NormKind::RmsNorm => (v.to_vec(), p.to_vec(), T::one()),
        NormKind::LayerNorm => {
            let cv = center(v.as_slice());
            let n = norm(&cv);
            if !(n > T::lit(crate::sphere::DEGENERACY_EPS)) {
                return Err(DtiError::ConstantVector {
                    norm: n.to_f64_lossy(),
                });
            }
            (cv.iter().map(|&x| x / n).collect(), center(p), n)
        }
    };
    let radial = dot(&axis, &p_eff);
    let perp: Vec<T> = p_eff
        .iter()
        .zip(&axis)
        .map(|(&pi, &ai)| pi - radial * ai)
        .collect();
    Ok(sqrt_d * norm(&perp) / (m * scale))
}

/// Least-squares slope of `log δ` against `log m` over points with
/// `m ∈ [lo, hi]` and `δ > 0`. `None` with fewer than two usable points.
pub fn log_log_slope<T: Scalar>(points: &[AttenuationPoint<T>], lo: T, hi: T) -> Option<T> {
    let xy: Vec<(T, T)> = points
        .iter()
        .filter(|p| p.m >= lo && p.m <= hi && p.delta > T::zero())
        .map(|p| (p.m.ln(), p.delta.ln()))
        .collect();
    if xy.len() < 2 {
        return None;
    }
    let n = T::from_usize_lossy(xy.len());
    let mx = xy.iter().map(|p| p.0).sum::<T>() / n;
    let my = xy.iter().map(|p| p.1).sum::<T>() / n;
    let sxy: T = xy.iter().map(|&(x, y)| (x - mx) * (y - my)).sum();
    let sxx: T = xy.iter().map(|&(x, _)| (x - mx) * (x - mx)).sum();
    (sxx > T::zero()).then(|| sxy / sxx)
}

/// Powers of two from `lo` to `hi` inclusive.
pub fn dyadic_magnitudes<T: Scalar>(lo: u32, hi: u32) -> Vec<T> {
    (lo..=hi).map(|k| T::lit(2f64.powi(k as i32))).collect()
}

/// `m,delta` rows, one per point.
pub fn attenuation_csv<T: Scalar>(points: &[AttenuationPoint<T>]) -> String {
    let mut out = String::from("m,delta\n");
    for p in points {
        out.push_str(&format!("{},{}\n", p.m, p.delta));
    }
    out
}
