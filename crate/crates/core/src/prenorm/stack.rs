//! Frozen toy pre-norm stacks: `x⁽ℓ⁺¹⁾ = x⁽ℓ⁾ + F_ℓ(Norm(x⁽ℓ⁾))` with the
//! sublayer `F(u) = W₂·tanh(W₁u + b₁) + b₂`.

use rand::Rng;
use rayon::prelude::*;

use super::norm::NormKind;
use crate::linalg::{add, norm, Matrix};
use crate::seeding::{derive_seed, gaussian_vec, rng_from_seed};
use crate::{DtiError, Result, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct PreNormBlock<T: Scalar> {
    w1: Matrix<T>,
    b1: Vec<T>,
    w2: Matrix<T>,
    b2: Vec<T>,
    norm_kind: NormKind,
}

/// Intermediates of one block kept for the backward pass.
struct BlockCache<T> {
    activation: Vec<T>,
    output: Vec<T>,
}

impl<T: Scalar> PreNormBlock<T> {
    pub fn new(
        w1: Matrix<T>,
        b1: Vec<T>,
        w2: Matrix<T>,
        b2: Vec<T>,
        norm_kind: NormKind,
    ) -> Result<Self> {
        let d = w1.cols();
        let shapes_ok = d >= 2
            && w1.rows() == d
            && b1.len() == d
            && w2.rows() == d
            && w2.cols() == d
            && b2.len() == d;
        if !shapes_ok {
            return Err(DtiError::InvalidDims(format!(
                "block needs d×d weights and length-d biases (d >= 2); got w1 {}×{}, b1 {}, w2 {}×{}, b2 {}",
                w1.rows(),
                w1.cols(),
                b1.len(),
                w2.rows(),
                w2.cols(),
                b2.len()
            )));
        }
        if !(w1.is_finite() && w2.is_finite()) || !b1.iter().chain(&b2).all(|x| x.is_finite()) {
            return Err(DtiError::InvalidArgument("non-finite block weights".into()));
        }
        Ok(Self {
            w1,
            b1,
            w2,
            b2,
            norm_kind,
        })
    }

    /// Block whose sublayer is identically zero.
    pub fn zeros(dim: usize, norm_kind: NormKind) -> Result<Self> {
        Self::new(
            Matrix::zeros(dim, dim),
            vec![T::zero(); dim],
            Matrix::zeros(dim, dim),
            vec![T::zero(); dim],
            norm_kind,
        )
    }

    fn random<R: Rng + ?Sized>(dim: usize, norm_kind: NormKind, rng: &mut R) -> Self {
        let std = 1.0 / (dim as f64).sqrt();
        let w1 = Matrix::from_row_major(dim, dim, gaussian_vec(rng, dim * dim, std));
        let b1 = gaussian_vec(rng, dim, std);
        let w2 = Matrix::from_row_major(dim, dim, gaussian_vec(rng, dim * dim, std));
        let b2 = gaussian_vec(rng, dim, std);
        Self {
            w1,
            b1,
            w2,
            b2,
            norm_kind,
        }
    }

    pub fn dim(&self) -> usize {
        self.b1.len()
    }

    pub fn norm_kind(&self) -> NormKind {
        self.norm_kind
    }

    pub fn w1(&self) -> &Matrix<T> {
        &self.w1
    }

    pub fn b1(&self) -> &[T] {
        &self.b1
    }

    pub fn w2(&self) -> &Matrix<T> {
        &self.w2
    }

    pub fn b2(&self) -> &[T] {
        &self.b2
    }

    /// `F(u) = W₂ tanh(W₁u + b₁) + b₂`
    pub fn sublayer(&self, u: &[T]) -> Vec<T> {
        let activation = self.hidden(u);
        add(&self.w2.matvec(&activation), &self.b2)
    }

    fn hidden(&self, u: &[T]) -> Vec<T> {
        self.w1
            .matvec(u)
            .into_iter()
            .zip(&self.b1)
            .map(|(z, &b)| (z + b).tanh())
            .collect()
    }

    /// Residual update `F(Norm(x))`.
    pub fn update(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(self.sublayer(&self.norm_kind.apply(x)?))
    }

    fn forward_cached(&self, x: &[T]) -> Result<BlockCache<T>> {
        let normalized = self.norm_kind.apply(x)?;
        let activation = self.hidden(&normalized);
        let output = add(&self.w2.matvec(&activation), &self.b2);
        Ok(BlockCache { activation, output })
    }

    /// `J_Fᵀ · g` at the cached point.
    fn sublayer_backward(&self, cache: &BlockCache<T>, upstream: &[T]) -> Vec<T> {
        let through_w2 = self.w2.matvec_t(upstream);
        let pre_act: Vec<T> = through_w2
            .iter()
            .zip(&cache.activation)
            .map(|(&g, &a)| g * (T::one() - a * a))
            .collect();
        self.w1.matvec_t(&pre_act)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreNormStack<T: Scalar> {
    blocks: Vec<PreNormBlock<T>>,
    dim: usize,
    seed: u64,
}

impl<T: Scalar> PreNormStack<T> {
    /// Assembles hand-built blocks; `seed` is recorded only.
    pub fn from_blocks(blocks: Vec<PreNormBlock<T>>, seed: u64) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| DtiError::InvalidDims("stack needs at least one block".into()))?;
        let (dim, kind) = (first.dim(), first.norm_kind());
        if blocks
            .iter()
            .any(|b| b.dim() != dim || b.norm_kind() != kind)
        {
            return Err(DtiError::InvalidDims(
                "all blocks must share dimension and norm kind".into(),
            ));
        }
        Ok(Self { blocks, dim, seed })
    }

    pub fn zeros(dim: usize, depth: usize, norm_kind: NormKind) -> Result<Self> {
        let blocks = (0..depth)
            .map(|_| PreNormBlock::zeros(dim, norm_kind))
            .collect::<Result<Vec<_>>>()?;
        Self::from_blocks(blocks, 0)
    }

    pub fn blocks(&self) -> &[PreNormBlock<T>] {
        &self.blocks
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn norm_kind(&self) -> NormKind {
        self.blocks[0].norm_kind()
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim {
            return Err(DtiError::DimMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok(())
    }
}

/// Deterministic stack with N(0, 1/d) entries in every weight and bias.
pub fn make_stack<T: Scalar>(
    dim: usize,
    depth: usize,
    norm_kind: NormKind,
    seed: u64,
) -> Result<PreNormStack<T>> {
    if dim < 2 || depth < 1 {
        return Err(DtiError::InvalidDims(format!(
            "stack needs dim >= 2 and depth >= 1, got dim {dim}, depth {depth}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let blocks = (0..depth)
        .map(|_| PreNormBlock::random(dim, norm_kind, &mut rng))
        .collect();
    Ok(PreNormStack { blocks, dim, seed })
}

fn at_layer(layer: usize) -> impl FnOnce(DtiError) -> DtiError {
    move |e| DtiError::DegenerateHiddenState {
        layer,
        source: Box::new(e),
    }
}

/// Hidden states `x⁽⁰⁾ … x⁽ᴸ⁾`.
pub fn forward_stack<T: Scalar>(stack: &PreNormStack<T>, x0: &[T]) -> Result<Vec<Vec<T>>> {
    stack.check_input(x0)?;
    let mut states = Vec::with_capacity(stack.depth() + 1);
    states.push(x0.to_vec());
    for (layer, block) in stack.blocks.iter().enumerate() {
        let x = &states[layer];
        let delta = block.update(x).map_err(at_layer(layer))?;
        let next = add(x, &delta);
        states.push(next);
    }
    Ok(states)
}

/// Gradient of `⟨upstream, x⁽ᴸ⁾⟩` with respect to `x⁽⁰⁾`.
pub fn stack_backward<T: Scalar>(
    stack: &PreNormStack<T>,
    x0: &[T],
    upstream_on_xl: &[T],
) -> Result<Vec<T>> {
    stack.check_input(x0)?;
    stack.check_input(upstream_on_xl)?;
    let mut inputs = Vec::with_capacity(stack.depth());
    let mut caches = Vec::with_capacity(stack.depth());
    let mut x = x0.to_vec();
    for (layer, block) in stack.blocks.iter().enumerate() {
        let cache = block.forward_cached(&x).map_err(at_layer(layer))?;
        let next = add(&x, &cache.output);
        inputs.push(std::mem::replace(&mut x, next));
        caches.push(cache);
    }
    let mut grad = upstream_on_xl.to_vec();
    for (layer, block) in stack.blocks.iter().enumerate().rev() {
        let through_f = block.sublayer_backward(&caches[layer], &grad);
        let through_norm = block
            .norm_kind
            .backward(&inputs[layer], &through_f)
            .map_err(at_layer(layer))?;
        grad = add(&grad, &through_norm);
    }
    Ok(grad)
}

/// Monte-Carlo lower estimate of `B_ℓ = sup ‖F_ℓ(u)‖` over normalized inputs.
///
/// Samples Gaussian `z`, evaluates `‖F_ℓ(Norm(z))‖` and keeps the maximum.
/// This is an estimate, never a certified bound.
pub fn estimate_sup_update_norms<T: Scalar>(
    stack: &PreNormStack<T>,
    samples: usize,
    seed: u64,
) -> Vec<T> {
    stack
        .blocks
        .par_iter()
        .enumerate()
        .map(|(layer, block)| {
            let mut rng = rng_from_seed(derive_seed(seed, layer as u64));
            let mut best = T::zero();
            for _ in 0..samples {
                let z: Vec<T> = gaussian_vec(&mut rng, stack.dim, 1.0);
                if let Ok(u) = block.norm_kind.apply(&z) {
                    best = best.max(norm(&block.sublayer(&u)));
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_difference_vjp, max_relative_error};
    use crate::linalg::distance;

    const KINDS: [NormKind; 2] = [NormKind::LayerNorm, NormKind::RmsNorm];

    fn scaled_gaussian(seed: u64, d: usize, target_norm: f64) -> Vec<f64> {
        let x: Vec<f64> = gaussian_vec(&mut rng_from_seed(seed), d, 1.0);
        let n = norm(&x);
        x.iter().map(|v| v * target_norm / n).collect()
    }

    #[test]
    fn make_stack_is_deterministic_and_seed_sensitive() {
        let a = make_stack::<f64>(64, 12, NormKind::LayerNorm, 42).unwrap();
        let b = make_stack::<f64>(64, 12, NormKind::LayerNorm, 42).unwrap();
        let c = make_stack::<f64>(64, 12, NormKind::LayerNorm, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(matches!(
            make_stack::<f64>(1, 1, NormKind::RmsNorm, 0),
            Err(DtiError::InvalidDims(_))
        ));
        assert!(make_stack::<f64>(4, 0, NormKind::RmsNorm, 0).is_err());
    }

    #[test]
    fn zero_stack_is_identity() {
        for kind in KINDS {
            let stack = PreNormStack::<f64>::zeros(8, 5, kind).unwrap();
            let x0 = scaled_gaussian(1, 8, 3.0);
            let states = forward_stack(&stack, &x0).unwrap();
            assert_eq!(states.len(), 6);
            assert!(states.iter().all(|s| s == &x0));
            let up = scaled_gaussian(2, 8, 1.0);
            assert_eq!(stack_backward(&stack, &x0, &up).unwrap(), up);
        }
    }

    #[test]
    fn displacement_equals_update_norm() {
        let stack = make_stack::<f64>(16, 4, NormKind::RmsNorm, 7).unwrap();
        let states = forward_stack(&stack, &scaled_gaussian(3, 16, 5.0)).unwrap();
        for (l, block) in stack.blocks().iter().enumerate() {
            let step = distance(&states[l + 1], &states[l]);
            let update = norm(&block.update(&states[l]).unwrap());
            assert!((step - update).abs() < 1e-12);
        }
    }

    /// Straight-line reimplementation of the recurrence, written against the
    /// raw weights so it shares no code with `forward_stack`.
    fn reference_forward(stack: &PreNormStack<f64>, x0: &[f64]) -> Vec<Vec<f64>> {
        let d = stack.dim();
        let mut out = vec![x0.to_vec()];
        for block in stack.blocks() {
            let x = out.last().unwrap().clone();
            let mut u = x.clone();
            if block.norm_kind() == NormKind::LayerNorm {
                let m = u.iter().sum::<f64>() / d as f64;
                u.iter_mut().for_each(|v| *v -= m);
            }
            let n = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            u.iter_mut().for_each(|v| *v *= (d as f64).sqrt() / n);
            let mut h = vec![0.0; d];
            for (i, hi) in h.iter_mut().enumerate() {
                let mut acc = block.b1()[i];
                for (j, uj) in u.iter().enumerate() {
                    acc += block.w1().get(i, j) * uj;
                }
                *hi = acc.tanh();
            }
            let mut next = x.clone();
            for (i, ni) in next.iter_mut().enumerate() {
                let mut acc = block.b2()[i];
                for (j, hj) in h.iter().enumerate() {
                    acc += block.w2().get(i, j) * hj;
                }
                *ni += acc;
            }
            out.push(next);
        }
        out
    }

    #[test]
    fn forward_matches_reference_implementation() {
        for kind in KINDS {
            let stack = make_stack::<f64>(64, 12, kind, 11).unwrap();
            let x0 = scaled_gaussian(12, 64, 10.0);
            let ours = forward_stack(&stack, &x0).unwrap();
            let theirs = reference_forward(&stack, &x0);
            for (a, b) in ours.iter().zip(&theirs) {
                assert!(distance(a, b) <= 1e-12 * norm(b).max(1.0));
            }
        }
    }

    #[test]
    fn degenerate_state_reports_layer() {
        let stack = make_stack::<f64>(4, 2, NormKind::LayerNorm, 0).unwrap();
        let err = forward_stack(&stack, &[1.0, 1.0, 1.0, 1.0]).unwrap_err();
        assert!(matches!(
            err,
            DtiError::DegenerateHiddenState { layer: 0, .. }
        ));
    }

    #[test]
    fn single_linearized_block_composes_analytically() {
        // d = 2, RMSNorm, W1 = 0 so tanh(b1) is constant: F has zero Jacobian
        // and the gradient is exactly upstream. Then switch on W1 and compare
        // (I + J_F J_N)ᵀ g built by hand.
        let kind = NormKind::RmsNorm;
        let w1 = Matrix::from_row_major(2, 2, vec![0.3, -0.2, 0.1, 0.4]);
        let b1 = vec![0.05, -0.1];
        let w2 = Matrix::from_row_major(2, 2, vec![0.5, 0.2, -0.3, 0.7]);
        let b2 = vec![0.0, 0.0];
        let block = PreNormBlock::new(w1.clone(), b1.clone(), w2.clone(), b2, kind).unwrap();
        let stack = PreNormStack::from_blocks(vec![block], 0).unwrap();
        let x0 = [1.5, -0.5];
        let g = [0.7, 1.1];

        let n = (1.5_f64 * 1.5 + 0.25).sqrt();
        let xh = [1.5 / n, -0.5 / n];
        let s = 2.0_f64.sqrt();
        let u = [s * xh[0], s * xh[1]];
        // J_N = (√d/‖x‖)(I − x̂x̂ᵀ)
        let jn = |i: usize, j: usize| (s / n) * ((i == j) as u8 as f64 - xh[i] * xh[j]);
        let a: Vec<f64> = (0..2)
            .map(|i| (w1.get(i, 0) * u[0] + w1.get(i, 1) * u[1] + b1[i]).tanh())
            .collect();
        // J_F = W2 diag(1 − a²) W1
        let jf = |i: usize, j: usize| {
            (0..2)
                .map(|k| w2.get(i, k) * (1.0 - a[k] * a[k]) * w1.get(k, j))
                .sum::<f64>()
        };
        let total = |i: usize, j: usize| {
            (i == j) as u8 as f64 + (0..2).map(|k| jf(i, k) * jn(k, j)).sum::<f64>()
        };
        let expected: Vec<f64> = (0..2)
            .map(|j| (0..2).map(|i| total(i, j) * g[i]).sum())
            .collect();
        let got = stack_backward(&stack, &x0, &g).unwrap();
        assert!(max_relative_error(&got, &expected) < 1e-12);
    }

    #[test]
    fn backward_matches_central_differences() {
        for seed in 0..12 {
            for kind in KINDS {
                let stack = make_stack::<f64>(24, 4, kind, seed).unwrap();
                let x0 = scaled_gaussian(seed + 100, 24, 6.0);
                let up = scaled_gaussian(seed + 200, 24, 1.0);
                let analytic = stack_backward(&stack, &x0, &up).unwrap();
                let numeric = central_difference_vjp(
                    |z| forward_stack(&stack, z).unwrap().pop().unwrap(),
                    &x0,
                    &up,
                );
                let err = max_relative_error(&analytic, &numeric);
                assert!(err < 1e-5, "{kind} seed {seed}: {err}");
            }
        }
    }

    #[test]
    fn sup_estimate_is_positive_and_deterministic() {
        let stack = make_stack::<f64>(16, 3, NormKind::LayerNorm, 5).unwrap();
        let a = estimate_sup_update_norms(&stack, 500, 9);
        let b = estimate_sup_update_norms(&stack, 500, 9);
        assert_eq!(a, b);
        assert!(a.iter().all(|&v| v > 0.0));
    }
}
