//! Vocabulary diagnostics: norm statistics and nearest neighbors under the
//! cosine and Euclidean metrics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::table::EmbeddingTable;
use crate::linalg::{distance, dot, norm};
use crate::sphere::angle_between;
use crate::{DtiError, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct HistogramBin<T> {
    pub bin_lower: T,
    pub bin_upper: T,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct NormStats<T> {
    pub mean: T,
    pub min: T,
    pub max: T,
    pub histogram: Vec<HistogramBin<T>>,
}

/// Row-norm statistics. `mean` is the in-distribution magnitude used as `m*`.
///
/// Bins split `[min, max]` evenly; the last bin is closed on the right.
pub fn norm_stats<T: Scalar>(table: &EmbeddingTable<T>, bins: usize) -> Result<NormStats<T>> {
    if bins == 0 {
        return Err(DtiError::InvalidArgument(
            "histogram needs at least one bin".into(),
        ));
    }
    let norms = table.row_norms();
    let min = norms.iter().copied().fold(T::infinity(), T::min);
    let max = norms.iter().copied().fold(T::neg_infinity(), T::max);
    let mean = crate::linalg::mean(&norms).max(min).min(max);
    let width = (max - min) / T::from_usize_lossy(bins);
    let mut histogram: Vec<HistogramBin<T>> = (0..bins)
        .map(|i| HistogramBin {
            bin_lower: min + width * T::from_usize_lossy(i),
            bin_upper: if i + 1 == bins {
                max
            } else {
                min + width * T::from_usize_lossy(i + 1)
            },
            count: 0,
        })
        .collect();
    for &n in &norms {
        let slot = if width > T::zero() {
            ((n - min) / width)
                .floor()
                .to_usize()
                .unwrap_or(0)
                .min(bins - 1)
        } else {
            bins - 1
        };
        histogram[slot].count += 1;
    }
    Ok(NormStats {
        mean,
        min,
        max,
        histogram,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Cosine,
    Euclidean,
}

impl FromStr for Metric {
    type Err = DtiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cosine" | "cos" => Ok(Metric::Cosine),
            "euclidean" | "l2" => Ok(Metric::Euclidean),
            other => Err(DtiError::InvalidArgument(format!(
                "unknown metric {other:?} (expected cosine or euclidean)"
            ))),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Cosine => "cosine",
            Metric::Euclidean => "euclidean",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Neighbor<T> {
    pub token: String,
    pub score: T,
}

/// Cosine similarity, zero when either side is the zero vector.
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> T {
    let denom = norm(a) * norm(b);
    if denom > T::zero() {
        dot(a, b) / denom
    } else {
        T::zero()
    }
}

/// The `k` nearest tokens to `query_token`, excluding itself.
///
/// Cosine ranks by descending similarity, Euclidean by ascending distance;
/// ties go to the lower vocabulary index.
pub fn knn<T: Scalar>(
    table: &EmbeddingTable<T>,
    query_token: &str,
    k: usize,
    metric: Metric,
) -> Result<Vec<Neighbor<T>>> {
    let qi = table
        .index_of(query_token)
        .ok_or_else(|| DtiError::UnknownToken(query_token.to_string()))?;
    if k >= table.len() {
        return Err(DtiError::InvalidArgument(format!(
            "k = {k} must be below the vocabulary size {}",
            table.len()
        )));
    }
    let q = &table.vectors()[qi];
    let mut scored: Vec<(usize, T)> = table
        .vectors()
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != qi)
        .map(|(i, row)| {
            let s = match metric {
                Metric::Cosine => cosine(q, row),
                Metric::Euclidean => distance(q, row),
            };
            (i, s)
        })
        .collect();
    scored.sort_by(|a, b| {
        let by_score = match metric {
            Metric::Cosine => b.1.partial_cmp(&a.1),
            Metric::Euclidean => a.1.partial_cmp(&b.1),
        };
        by_score
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    Ok(scored
        .into_iter()
        .take(k)
        .map(|(i, score)| Neighbor {
            token: table.tokens()[i].clone(),
            score,
        })
        .collect())
}

/// Angle from `vector` to each anchor token, in anchor order.
pub fn angles_to_anchors<T: Scalar>(
    table: &EmbeddingTable<T>,
    vector: &[T],
    anchors: &[&str],
) -> Result<Vec<(String, T)>> {
    anchors
        .iter()
        .map(|&a| Ok((a.to_string(), angle_between(vector, table.get(a)?)?)))
        .collect()
}
