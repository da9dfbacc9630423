//! Central finite differences and the relative-error metric used by every
//! gradient audit in the crate.

use crate::Scalar;

/// Per-coordinate step `h = 1e-5 · (1 + |x_i|)`.
pub fn step_size<T: Scalar>(xi: T) -> T {
    T::lit(1e-5) * (T::one() + xi.abs())
}

/// Central-difference gradient of a scalar function.
pub fn central_difference_gradient<T: Scalar>(mut f: impl FnMut(&[T]) -> T, x: &[T]) -> Vec<T> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = step_size(x[i]);
            probe[i] = x[i] + h;
            let plus = f(&probe);
            probe[i] = x[i] - h;
            let minus = f(&probe);
            probe[i] = x[i];
            (plus - minus) / (h + h)
        })
        .collect()
}

/// Central-difference estimate of `Jᵀ·upstream` for a vector function,
/// i.e. the gradient of `⟨upstream, f(x)⟩`.
pub fn central_difference_vjp<T: Scalar>(
    mut f: impl FnMut(&[T]) -> Vec<T>,
    x: &[T],
    upstream: &[T],
) -> Vec<T> {
    central_difference_gradient(|z| crate::linalg::dot(upstream, &f(z)), x)
}

/// Largest per-coordinate relative error of `analytic` against `numeric`.
///
/// Each coordinate is divided by `max(|numeric_i|, 1e-3·‖numeric‖∞, 1e-10)`
/// so that coordinates that are numerically zero do not dominate.
pub fn max_relative_error<T: Scalar>(analytic: &[T], numeric: &[T]) -> T {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths");
    let scale = numeric.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    let floor = (T::lit(1e-3) * scale).max(T::lit(1e-10));
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / n.abs().max(floor))
        .fold(
            T::zero(),
            |m, e| if e.is_nan() { T::infinity() } else { m.max(e) },
        )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_gradient_is_accurate() {
        let x = [0.3_f64, -1.2, 2.0];
        let g = central_difference_gradient(|z| z.iter().map(|v| v * v * v).sum(), &x);
        let exact: Vec<f64> = x.iter().map(|v| 3.0 * v * v).collect();
        assert!(max_relative_error(&exact, &g) < 1e-8);
    }

    #[test]
    fn planted_fault_is_reported() {
        let numeric = [1.0_f64, -2.0, 0.5];
        let analytic = [1.0, -2.2, 0.5];
        assert!((max_relative_error(&analytic, &numeric) - 0.1).abs() < 1e-12);
    }
}
