use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::ProbeDataset;
use crate::linalg::Matrix;
use crate::seeding::{gaussian_vec, rng_from_seed};
use crate::{DtiError, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeHyperparams {
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
}

impl Default for ProbeHyperparams {
    fn default() -> Self {
        Self {
            hidden: 128,
            lr: 0.1,
            epochs: 200,
            batch: 64,
        }
    }
}

/// `softmax(W2·relu(W1·x + b1) + b2)` over positions.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel<T> {
    pub w1: Matrix<T>,
    pub b1: Vec<T>,
    pub w2: Matrix<T>,
    pub b2: Vec<T>,
}

struct Activations<T> {
    z1: Vec<T>,
    a1: Vec<T>,
    logits: Vec<T>,
}

impl<T: Scalar> ProbeModel<T> {
    /// He-normal first layer, `N(0, 1/h)` second layer, zero biases.
    pub fn init(dim: usize, hidden: usize, classes: usize, seed: u64) -> Result<Self> {
        if dim == 0 || hidden == 0 || classes < 2 {
            return Err(DtiError::InvalidDims(format!(
                "probe shape {dim} -> {hidden} -> {classes} is degenerate"
            )));
        }
        let mut rng = rng_from_seed(seed);
        let w1 = gaussian_vec(&mut rng, hidden * dim, (2.0 / dim as f64).sqrt());
        let w2 = gaussian_vec(&mut rng, classes * hidden, (1.0 / hidden as f64).sqrt());
        Ok(Self {
            w1: Matrix::from_row_major(hidden, dim, w1),
            b1: vec![T::zero(); hidden],
            w2: Matrix::from_row_major(classes, hidden, w2),
            b2: vec![T::zero(); classes],
        })
    }

    pub fn dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.rows()
    }

    pub fn classes(&self) -> usize {
        self.w2.rows()
    }

    fn activations(&self, x: &[T]) -> Activations<T> {
        let z1: Vec<T> = self
            .w1
            .matvec(x)
            .iter()
            .zip(&self.b1)
            .map(|(&z, &b)| z + b)
            .collect();
        let a1: Vec<T> = z1.iter().map(|&z| z.max(T::zero())).collect();
        let logits = self
            .w2
            .matvec(&a1)
            .iter()
            .zip(&self.b2)
            .map(|(&z, &b)| z + b)
            .collect();
        Activations { z1, a1, logits }
    }

    pub fn logits(&self, x: &[T]) -> Vec<T> {
        self.activations(x).logits
    }

    /// Argmax class; ties go to the lowest index.
    pub fn predict(&self, x: &[T]) -> usize {
        let logits = self.logits(x);
        let mut best = 0;
        for (i, &l) in logits.iter().enumerate() {
            if l > logits[best] {
                best = i;
            }
        }
        best
    }

    /// Mean cross-entropy over `idx` and its gradient, shaped like the model.
    pub fn loss_and_grad(&self, ds: &ProbeDataset<T>, idx: &[usize]) -> (T, ProbeModel<T>) {
        let (h, d, c) = (self.hidden(), self.dim(), self.classes());
        let mut grad = ProbeModel {
            w1: Matrix::zeros(h, d),
            b1: vec![T::zero(); h],
            w2: Matrix::zeros(c, h),
            b2: vec![T::zero(); c],
        };
        let inv_n = T::one() / T::from_usize_lossy(idx.len());
        let mut loss = T::zero();
        for &i in idx {
            let x = &ds.inputs[i];
            let act = self.activations(x);
            let probs = softmax(&act.logits);
            loss = loss - probs[ds.labels[i]].ln();
            let mut dz2 = probs;
            dz2[ds.labels[i]] = dz2[ds.labels[i]] - T::one();
            dz2.iter_mut().for_each(|g| *g = *g * inv_n);
            let mut dz1 = self.w2.matvec_t(&dz2);
            for (g, &z) in dz1.iter_mut().zip(&act.z1) {
                if z <= T::zero() {
                    *g = T::zero();
                }
            }
            outer_acc(&mut grad.w2, &dz2, &act.a1);
            outer_acc(&mut grad.w1, &dz1, x);
            for (g, &v) in grad.b2.iter_mut().zip(&dz2) {
                *g = *g + v;
            }
            for (g, &v) in grad.b1.iter_mut().zip(&dz1) {
                *g = *g + v;
            }
        }
        (loss * inv_n, grad)
    }

    pub fn params(&self) -> Vec<T> {
        [self.w1.as_slice(), &self.b1, self.w2.as_slice(), &self.b2].concat()
    }

    pub fn with_params(&self, flat: &[T]) -> Self {
        let mut out = self.clone();
        let mut rest = flat;
        for part in [
            out.w1.as_mut_slice(),
            &mut out.b1[..],
            out.w2.as_mut_slice(),
            &mut out.b2[..],
        ] {
            let (head, tail) = rest.split_at(part.len());
            part.copy_from_slice(head);
            rest = tail;
        }
        out
    }

    fn sgd_update(&mut self, grad: &ProbeModel<T>, lr: T) {
        let pairs = [
            (self.w1.as_mut_slice(), grad.w1.as_slice()),
            (&mut self.b1[..], &grad.b1[..]),
            (self.w2.as_mut_slice(), grad.w2.as_slice()),
            (&mut self.b2[..], &grad.b2[..]),
        ];
        for (p, g) in pairs {
            for (w, &dw) in p.iter_mut().zip(g) {
                *w = *w - lr * dw;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|x| x.is_finite())
    }
}

fn outer_acc<T: Scalar>(m: &mut Matrix<T>, u: &[T], v: &[T]) {
    let cols = m.cols();
    for (row, &ui) in m.as_mut_slice().chunks_mut(cols).zip(u) {
        if ui.is_zero() {
            continue;
        }
        for (w, &vj) in row.iter_mut().zip(v) {
            *w = *w + ui * vj;
        }
    }
}

fn softmax<T: Scalar>(z: &[T]) -> Vec<T> {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let exp: Vec<T> = z.iter().map(|&v| (v - max).exp()).collect();
    let total: T = exp.iter().copied().sum();
    exp.into_iter().map(|v| v / total).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedProbe<T> {
    pub model: ProbeModel<T>,
    /// Mean minibatch loss per epoch.
    pub epoch_losses: Vec<T>,
}

/// Plain minibatch SGD on softmax cross-entropy, reshuffled every epoch.
pub fn train_probe<T: Scalar>(
    ds: &ProbeDataset<T>,
    hp: &ProbeHyperparams,
    seed: u64,
) -> Result<TrainedProbe<T>> {
    if ds.is_empty() {
        return Err(DtiError::EmptyDataset);
    }
    if hp.batch == 0 || !(hp.lr > 0.0) {
        return Err(DtiError::InvalidArgument(format!(
            "probe needs batch >= 1 and lr > 0, got batch {} and lr {}",
            hp.batch, hp.lr
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut model = ProbeModel::init(
        ds.dim,
        hp.hidden,
        ds.seq_len,
        crate::seeding::derive_seed(seed, 0),
    )?;
    let lr = T::lit(hp.lr);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut epoch_losses = Vec::with_capacity(hp.epochs);
    for _ in 0..hp.epochs {
        order.shuffle(&mut rng);
        let mut total = T::zero();
        let mut batches = 0;
        for batch in order.chunks(hp.batch) {
            let (loss, grad) = model.loss_and_grad(ds, batch);
            model.sgd_update(&grad, lr);
            total = total + loss;
            batches += 1;
        }
        epoch_losses.push(total / T::from_usize_lossy(batches));
    }
    if !model.is_finite() {
        return Err(DtiError::InvalidArgument(
            "probe training diverged; lower lr".into(),
        ));
    }
    Ok(TrainedProbe {
        model,
        epoch_losses,
    })
}

/// Fraction of samples whose argmax logit is the true position.
pub fn evaluate_probe<T: Scalar>(model: &ProbeModel<T>, ds: &ProbeDataset<T>) -> Result<T> {
    if ds.dim != model.dim() {
        return Err(DtiError::DimMismatch {
            expected: model.dim(),
            actual: ds.dim,
        });
    }
    if ds.seq_len != model.classes() {
        return Err(DtiError::DimMismatch {
            expected: model.classes(),
            actual: ds.seq_len,
        });
    }
    if ds.is_empty() {
        return Err(DtiError::EmptyDataset);
    }
    let hits = ds
        .inputs
        .iter()
        .zip(&ds.labels)
        .filter(|(x, &y)| model.predict(x) == y)
        .count();
    Ok(T::from_usize_lossy(hits) / T::from_usize_lossy(ds.len()))
}
