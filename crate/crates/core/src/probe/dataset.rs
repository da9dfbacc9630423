use rand::seq::SliceRandom;

use crate::geometry::{norm_stats, EmbeddingTable};
use crate::prenorm::NormKind;
use crate::seeding::rng_from_seed;
use crate::{DtiError, Result, Scalar};

/// Fraction of a dataset kept for training by [`split_dataset`].
pub const TRAIN_FRACTION: f64 = 0.8;

/// `p_j[2i] = sin(j/10000^{2i/d})`, `p_j[2i+1] = cos(j/10000^{2i/d})`.
pub fn sinusoidal_positions<T: Scalar>(seq_len: usize, dim: usize) -> Vec<Vec<T>> {
    (0..seq_len)
        .map(|j| {
            (0..dim)
                .map(|k| {
                    let freq = 10000f64.powf(-((k - k % 2) as f64) / dim as f64);
                    let phase = j as f64 * freq;
                    T::lit(if k % 2 == 0 { phase.sin() } else { phase.cos() })
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeDataset<T> {
    pub inputs: Vec<Vec<T>>,
    pub labels: Vec<usize>,
    pub dim: usize,
    pub seq_len: usize,
    pub scale_m: T,
}

impl<T: Scalar> ProbeDataset<T> {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    fn subset(&self, idx: &[usize]) -> Self {
        Self {
            inputs: idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            dim: self.dim,
            seq_len: self.seq_len,
            scale_m: self.scale_m,
        }
    }
}

/// One input per (sampled token, position): `Norm(scale_m·r̄·e/‖e‖ + p_j)`,
/// where `r̄` is the table's mean row norm.
///
/// `n_tokens` distinct tokens are drawn without replacement (all of them if
/// the table is smaller). Samples are ordered token-major.
pub fn build_probe_dataset<T: Scalar>(
    table: &EmbeddingTable<T>,
    seq_len: usize,
    norm_kind: NormKind,
    scale_m: T,
    n_tokens: usize,
    seed: u64,
) -> Result<ProbeDataset<T>> {
    if table.dim() < 2 || seq_len < 2 {
        return Err(DtiError::InvalidDims(format!(
            "probe needs dim >= 2 and seq_len >= 2, got dim {} and seq_len {seq_len}",
            table.dim()
        )));
    }
    if !(scale_m > T::zero() && scale_m.is_finite()) {
        return Err(DtiError::InvalidArgument(format!(
            "scale_m must be positive, got {scale_m}"
        )));
    }
    if n_tokens == 0 {
        return Err(DtiError::EmptyDataset);
    }
    let r_bar = norm_stats(table, 1)?.mean;
    let positions = sinusoidal_positions::<T>(seq_len, table.dim());
    let p_scale = r_bar / crate::linalg::norm(&positions[0]);
    let positions: Vec<Vec<T>> = positions
        .iter()
        .map(|p| crate::linalg::scale(p, p_scale))
        .collect();
    let mut order: Vec<usize> = (0..table.len()).collect();
    order.shuffle(&mut rng_from_seed(seed));
    order.truncate(n_tokens);
    let mut inputs = Vec::with_capacity(order.len() * seq_len);
    let mut labels = Vec::with_capacity(order.len() * seq_len);
    for &ti in &order {
        let dir = crate::sphere::normalize(table.row(ti).1)?;
        let token = dir.scaled(scale_m * r_bar);
        for (j, p) in positions.iter().enumerate() {
            let x: Vec<T> = token.iter().zip(p).map(|(&a, &b)| a + b).collect();
            inputs.push(norm_kind.apply(&x)?);
            labels.push(j);
        }
    }
    Ok(ProbeDataset {
        inputs,
        labels,
        dim: table.dim(),
        seq_len,
        scale_m,
    })
}

/// Seeded 80/20 split; the same seed and length always pick the same indices.
pub fn split_dataset<T: Scalar>(
    ds: &ProbeDataset<T>,
    seed: u64,
) -> (ProbeDataset<T>, ProbeDataset<T>) {
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut rng_from_seed(seed));
    let cut = (ds.len() as f64 * TRAIN_FRACTION).round() as usize;
    (ds.subset(&idx[..cut]), ds.subset(&idx[cut..]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::synthetic_vocabulary;
    use crate::linalg::distance;

    fn vocab() -> EmbeddingTable<f64> {
        synthetic_vocabulary(50, 32, 0.4, 0.05, 1).unwrap()
    }

    #[test]
    fn sinusoid_hand_values() {
        let p = sinusoidal_positions::<f64>(3, 4);
        assert_eq!(p[0], vec![0.0, 1.0, 0.0, 1.0]);
        assert!((p[1][0] - 1f64.sin()).abs() < 1e-15);
        assert!((p[2][3] - (2.0 * 0.01f64).cos()).abs() < 1e-15);
    }

    #[test]
    fn positions_are_visible_at_natural_scale() {
        let ds = build_probe_dataset(&vocab(), 4, NormKind::LayerNorm, 1.0, 10, 3).unwrap();
        assert_eq!(ds.len(), 40);
        assert!(ds.labels.iter().all(|&l| l < 4));
        assert!(distance(&ds.inputs[0], &ds.inputs[1]) > 0.1);
    }

    #[test]
    fn huge_magnitude_crushes_position_signal() {
        for kind in [NormKind::LayerNorm, NormKind::RmsNorm] {
            let ds = build_probe_dataset(&vocab(), 2, kind, 1024.0, 10, 3).unwrap();
            for pair in ds.inputs.chunks(2) {
                let d = distance(&pair[0], &pair[1]) / (ds.dim as f64).sqrt();
                assert!(d < 1e-2, "{kind}: {d}");
            }
        }
    }

    #[test]
    fn seeded_construction_and_split_repeat() {
        let a = build_probe_dataset(&vocab(), 3, NormKind::RmsNorm, 2.0, 20, 9).unwrap();
        let b = build_probe_dataset(&vocab(), 3, NormKind::RmsNorm, 2.0, 20, 9).unwrap();
        assert_eq!(a, b);
        let (tr, te) = split_dataset(&a, 4);
        assert_eq!((tr.len(), te.len()), (48, 12));
        assert_eq!(split_dataset(&b, 4), (tr, te));
    }

    #[test]
    fn rejects_bad_arguments() {
        let t = vocab();
        assert!(build_probe_dataset(&t, 1, NormKind::LayerNorm, 1.0, 5, 0).is_err());
        assert!(build_probe_dataset(&t, 4, NormKind::LayerNorm, 0.0, 5, 0).is_err());
        assert!(matches!(
            build_probe_dataset(&t, 4, NormKind::LayerNorm, 1.0, 0, 0),
            Err(DtiError::EmptyDataset)
        ));
    }
}
