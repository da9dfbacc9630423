//! Synthetic vocabularies standing in for exported encoder tables.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::table::EmbeddingTable;
use crate::linalg::{convert, norm};
use crate::seeding::{gaussian_vec, rng_from_seed};
use crate::{DtiError, Result, Scalar};

/// `vocab` tokens named `tok0…` with isotropic random directions and row norms
/// drawn from `N(norm_center, norm_spread²)`, floored at `0.1·norm_center`.
pub fn synthetic_vocabulary<T: Scalar>(
    vocab: usize,
    dim: usize,
    norm_center: f64,
    norm_spread: f64,
    seed: u64,
) -> Result<EmbeddingTable<T>> {
    if vocab == 0 || dim < 2 {
        return Err(DtiError::InvalidDims(format!(
            "synthetic vocabulary needs vocab >= 1 and dim >= 2, got {vocab} x {dim}"
        )));
    }
    let spread = Normal::new(norm_center, norm_spread.max(0.0))
        .map_err(|e| DtiError::InvalidArgument(e.to_string()))?;
    let mut rng = rng_from_seed(seed);
    let mut rows = Vec::with_capacity(vocab);
    for _ in 0..vocab {
        let dir: Vec<f64> = gaussian_vec(&mut rng, dim, 1.0);
        let n = norm(&dir);
        let target = spread.sample(&mut rng).max(0.1 * norm_center);
        rows.push(dir.iter().map(|x| T::lit(x * target / n)).collect());
    }
    EmbeddingTable::new((0..vocab).map(|i| format!("tok{i}")).collect(), rows)
}

/// Random unit-norm direction scaled to `magnitude`.
pub fn random_embedding<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    dim: usize,
    magnitude: f64,
) -> Vec<T> {
    let dir: Vec<f64> = gaussian_vec(rng, dim, 1.0);
    let n = norm(&dir);
    dir.iter().map(|x| T::lit(x * magnitude / n)).collect()
}

fn scaled_dir(magnitude: f64, raw: [f64; 4]) -> Vec<f64> {
    let n = norm(&raw);
    raw.iter().map(|x| x * magnitude / n).collect()
}

/// Six tokens where metric choice changes the nearest neighbor of `apple`.
///
/// `apples` points almost the same way but with four times the norm;
/// `decoy` has `apple`'s norm and an unrelated direction, so it wins under
/// Euclidean distance while `apples` wins under cosine similarity.
pub fn nearest_token_fixture<T: Scalar>() -> EmbeddingTable<T> {
    let rows = [
        ("apple", scaled_dir(0.4, [1.0, 0.0, 0.0, 0.0])),
        ("apples", scaled_dir(1.6, [1.0, 0.05, 0.0, 0.0])),
        ("fruit", scaled_dir(1.2, [1.0, 0.4, 0.0, 0.0])),
        ("peach", scaled_dir(1.0, [1.0, 0.0, 0.5, 0.0])),
        ("decoy", scaled_dir(0.4, [0.2, 0.0, 0.0, 1.0])),
        ("car", scaled_dir(0.45, [0.0, 1.0, 0.0, 0.0])),
    ];
    EmbeddingTable::new(
        rows.iter().map(|r| r.0.to_string()).collect(),
        rows.iter().map(|r| convert(&r.1)).collect(),
    )
    .expect("fixture is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_norms_center_on_request() {
        let t = synthetic_vocabulary::<f64>(2000, 32, 0.4, 0.05, 1).unwrap();
        let mean = crate::linalg::mean(&t.row_norms());
        assert!((mean - 0.4).abs() < 0.01, "{mean}");
        assert_eq!(
            t,
            synthetic_vocabulary::<f64>(2000, 32, 0.4, 0.05, 1).unwrap()
        );
    }
}
