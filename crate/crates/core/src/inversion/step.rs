//! One Riemannian SGD update of the direction `v` with the vMF prior pull.

use crate::linalg::norm;
use crate::sphere::{project_to_tangent, retract, UnitDirection, DEGENERACY_EPS};
use crate::{DtiError, Result, Scalar};

use super::config::InversionConfig;

/// Resolved per-step constants.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRule<T> {
    pub m_star: T,
    pub kappa: T,
    pub eta: T,
    pub mu: UnitDirection<T>,
    pub normalize_gradient: bool,
}

impl<T: Scalar> StepRule<T> {
    /// Constants from `cfg`, with `mu` used when `cfg.prior_mu` is unset.
    pub fn from_config(cfg: &InversionConfig<T>, fallback_mu: &UnitDirection<T>) -> Result<Self> {
        Ok(Self {
            m_star: cfg.m_star_value()?,
            kappa: cfg.kappa,
            eta: cfg.eta,
            mu: cfg.prior_mu.clone().unwrap_or_else(|| fallback_mu.clone()),
            normalize_gradient: cfg.normalize_gradient,
        })
    }
}

/// Every intermediate of a step, for inspection in tests and traces.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace<T> {
    /// `m*·∇_e L`, the data gradient with respect to `v`.
    pub g_data: Vec<T>,
    /// `g_data − κμ`
    pub g_euc: Vec<T>,
    pub g_tangent: Vec<T>,
    /// The step actually retracted: unit-norm when normalizing.
    pub g_step: Vec<T>,
    pub next: UnitDirection<T>,
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome<T> {
    pub direction: UnitDirection<T>,
    pub skipped: bool,
}

pub fn dti_step_traced<T: Scalar>(
    v: &UnitDirection<T>,
    grad_e: &[T],
    rule: &StepRule<T>,
) -> Result<StepTrace<T>> {
    if grad_e.len() != v.dim() || rule.mu.dim() != v.dim() {
        return Err(DtiError::DimMismatch {
            expected: v.dim(),
            actual: if grad_e.len() != v.dim() {
                grad_e.len()
            } else {
                rule.mu.dim()
            },
        });
    }
    // chain rule through e = m*·v
    let g_data: Vec<T> = grad_e.iter().map(|&g| rule.m_star * g).collect();
    let g_euc: Vec<T> = g_data
        .iter()
        .zip(rule.mu.as_slice())
        .map(|(&g, &m)| g - rule.kappa * m)
        .collect();
    let g_tangent = project_to_tangent(v, &g_euc).g;
    let g_norm = norm(&g_tangent);
    if !(g_norm > T::lit(DEGENERACY_EPS)) {
        return Ok(StepTrace {
            g_data,
            g_euc,
            g_step: vec![T::zero(); v.dim()],
            g_tangent,
            next: v.clone(),
            skipped: true,
        });
    }
    let g_step: Vec<T> = if rule.normalize_gradient {
        g_tangent.iter().map(|&g| g / g_norm).collect()
    } else {
        g_tangent.clone()
    };
    let next = retract(v, &g_step, rule.eta)?;
    Ok(StepTrace {
        g_data,
        g_euc,
        g_tangent,
        g_step,
        next,
        skipped: false,
    })
}

/// `v ← Retr_v(−η·g′)` where `g′` is the tangent projection of
/// `m*·∇_e L − κμ`, scaled to unit norm when `normalize_gradient` is set.
/// Steps whose tangent gradient vanishes leave `v` in place and are flagged.
pub fn dti_step<T: Scalar>(
    v: &UnitDirection<T>,
    grad_e: &[T],
    rule: &StepRule<T>,
) -> Result<StepOutcome<T>> {
    let trace = dti_step_traced(v, grad_e, rule)?;
    Ok(StepOutcome {
        direction: trace.next,
        skipped: trace.skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::{gaussian_vec, rng_from_seed};
    use crate::sphere::{angle, normalize};
    use proptest::prelude::*;

    fn rule(mu: UnitDirection<f64>, kappa: f64, eta: f64) -> StepRule<f64> {
        StepRule {
            m_star: 1.0,
            kappa,
            eta,
            mu,
            normalize_gradient: true,
        }
    }

    #[test]
    fn zero_gradient_without_prior_is_skipped() {
        let v = normalize(&[1.0, 2.0, 3.0]).unwrap();
        let out = dti_step(&v, &[0.0; 3], &rule(v.clone(), 0.0, 0.1)).unwrap();
        assert!(out.skipped);
        assert_eq!(out.direction, v);
    }

    #[test]
    fn prior_alone_pulls_toward_mu() {
        let v = normalize(&[1.0, 0.0, 0.0]).unwrap();
        let mu = normalize(&[0.0, 1.0, 0.0]).unwrap();
        let out = dti_step(&v, &[0.0; 3], &rule(mu, 1e-4, 0.1)).unwrap();
        assert!(!out.skipped);
        let s = 1.01_f64.sqrt();
        let expected = [1.0 / s, 0.1 / s, 0.0];
        for (a, b) in out.direction.as_slice().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn mu_is_a_fixed_point() {
        let mu = normalize(&gaussian_vec::<f64, _>(&mut rng_from_seed(3), 10, 1.0)).unwrap();
        let out = dti_step(&mu, &[0.0; 10], &rule(mu.clone(), 1e-4, 0.1)).unwrap();
        assert!(out.skipped);
        assert_eq!(out.direction, mu);
    }

    #[test]
    fn chain_rule_doubles_data_gradient() {
        let v = normalize(&[0.3, -0.2, 0.9]).unwrap();
        let w = [0.5, 1.5, -2.0]; // gradient of the linear loss ⟨w, e⟩
        let mut r = rule(v.clone(), 1e-4, 0.1);
        let t1 = dti_step_traced(&v, &w, &r).unwrap();
        r.m_star = 2.0;
        let t2 = dti_step_traced(&v, &w, &r).unwrap();
        for (a, b) in t1.g_data.iter().zip(&t2.g_data) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn unnormalized_step_uses_raw_tangent() {
        let v = normalize(&[1.0, 0.0]).unwrap();
        let mut r = rule(v.clone(), 0.0, 0.1);
        r.normalize_gradient = false;
        let t = dti_step_traced(&v, &[0.0, 10.0], &r).unwrap();
        assert_eq!(t.g_step, vec![0.0, 10.0]);
        let expected = normalize(&[1.0, -1.0]).unwrap();
        assert!(angle(&t.next, &expected) < 1e-15);
    }

    proptest! {
        #[test]
        fn normalized_step_moves_by_arctan_eta(
            seed in 0u64..10_000,
            eta in 1e-4..2.0_f64,
            kappa in 0.0..1.0_f64,
        ) {
            let mut rng = rng_from_seed(seed);
            let v = normalize(&gaussian_vec::<f64, _>(&mut rng, 16, 1.0)).unwrap();
            let mu = normalize(&gaussian_vec::<f64, _>(&mut rng, 16, 1.0)).unwrap();
            let g = gaussian_vec::<f64, _>(&mut rng, 16, 1.0);
            let out = dti_step(&v, &g, &rule(mu, kappa, eta)).unwrap();
            prop_assert!(!out.skipped);
            prop_assert!((norm(out.direction.as_slice()) - 1.0).abs() <= 1e-9);
            prop_assert!((angle(&v, &out.direction) - eta.atan()).abs() <= 1e-9);
        }

        #[test]
        fn prior_step_increases_alignment(seed in 0u64..10_000, eta in 1e-3..0.5_f64) {
            let mut rng = rng_from_seed(seed);
            let v = normalize(&gaussian_vec::<f64, _>(&mut rng, 8, 1.0)).unwrap();
            let mu = normalize(&gaussian_vec::<f64, _>(&mut rng, 8, 1.0)).unwrap();
            prop_assume!(angle(&v, &mu) > 2.0 * (eta / 2.0).asin());
            let out = dti_step(&v, &[0.0; 8], &rule(mu.clone(), 1e-4, eta)).unwrap();
            let before: f64 = crate::linalg::dot(v.as_slice(), mu.as_slice());
            let after: f64 = crate::linalg::dot(out.direction.as_slice(), mu.as_slice());
            prop_assert!(after > before);
        }
    }
}
