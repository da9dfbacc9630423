use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{build_probe_dataset, split_dataset};
use super::model::{evaluate_probe, train_probe, ProbeHyperparams};
use crate::geometry::{synthetic_vocabulary, EmbeddingTable};
use crate::prenorm::NormKind;
use crate::seeding::derive_seed;
use crate::{DtiError, Result, Scalar};

/// Magnitudes of the frozen-probe sweep.
pub const DEFAULT_PROBE_MAGNITUDES: [f64; 6] = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSweepConfig {
    pub seq_len: usize,
    pub norm_kind: NormKind,
    /// Tokens sampled per dataset; each contributes one sample per position.
    pub n_tokens: usize,
    pub hyper: ProbeHyperparams,
}

impl Default for ProbeSweepConfig {
    fn default() -> Self {
        Self {
            seq_len: 8,
            norm_kind: NormKind::LayerNorm,
            n_tokens: 100,
            hyper: ProbeHyperparams::default(),
        }
    }
}

/// Vocabulary the probe experiments run on when no table is supplied.
pub fn default_probe_table<T: Scalar>(seed: u64) -> Result<EmbeddingTable<T>> {
    synthetic_vocabulary(1000, 768, 0.4, 0.05, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SweepPoint<T> {
    pub m: T,
    pub accuracy: T,
}

/// Trains one probe at `m = 1` and scores it, frozen, on the held-out
/// samples rebuilt at each magnitude.
///
/// Datasets at every `m` share a token draw and split, so the held-out
/// (token, position) pairs are the same across the sweep.
pub fn magnitude_sweep<T: Scalar>(
    table: &EmbeddingTable<T>,
    cfg: &ProbeSweepConfig,
    magnitudes: &[T],
    seed: u64,
) -> Result<Vec<SweepPoint<T>>> {
    if magnitudes.is_empty() {
        return Err(DtiError::InvalidArgument("magnitude list is empty".into()));
    }
    let (data_seed, split_seed, train_seed) = (
        derive_seed(seed, 0),
        derive_seed(seed, 1),
        derive_seed(seed, 2),
    );
    let build = |m: T| {
        build_probe_dataset(
            table,
            cfg.seq_len,
            cfg.norm_kind,
            m,
            cfg.n_tokens,
            data_seed,
        )
    };
    let (train, _) = split_dataset(&build(T::one())?, split_seed);
    let probe = train_probe(&train, &cfg.hyper, train_seed)?.model;
    magnitudes
        .par_iter()
        .map(|&m| {
            let (_, held_out) = split_dataset(&build(m)?, split_seed);
            Ok(SweepPoint {
                m,
                accuracy: evaluate_probe(&probe, &held_out)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MultiSeedSweep<T> {
    pub seeds: Vec<u64>,
    /// Accuracy averaged over seeds, one point per magnitude.
    pub mean: Vec<SweepPoint<T>>,
    /// `per_seed[s][i]` is seed `s` at magnitude `i`.
    pub per_seed: Vec<Vec<T>>,
}

impl<T: Scalar> MultiSeedSweep<T> {
    pub fn accuracy_at(&self, m: T) -> Option<T> {
        self.mean.iter().find(|p| p.m == m).map(|p| p.accuracy)
    }
}

pub fn magnitude_sweep_seeds<T: Scalar>(
    table: &EmbeddingTable<T>,
    cfg: &ProbeSweepConfig,
    magnitudes: &[T],
    seeds: &[u64],
) -> Result<MultiSeedSweep<T>> {
    if seeds.is_empty() {
        return Err(DtiError::InvalidArgument("seed list is empty".into()));
    }
    let runs: Vec<Vec<SweepPoint<T>>> = seeds
        .par_iter()
        .map(|&s| magnitude_sweep(table, cfg, magnitudes, s))
        .collect::<Result<_>>()?;
    let n = T::from_usize_lossy(seeds.len());
    let mean = magnitudes
        .iter()
        .enumerate()
        .map(|(i, &m)| SweepPoint {
            m,
            accuracy: runs.iter().map(|r| r[i].accuracy).sum::<T>() / n,
        })
        .collect();
    Ok(MultiSeedSweep {
        seeds: seeds.to_vec(),
        mean,
        per_seed: runs
            .into_iter()
            .map(|r| r.into_iter().map(|p| p.accuracy).collect())
            .collect(),
    })
}

pub fn sweep_csv<T: Scalar>(points: &[SweepPoint<T>]) -> String {
    let mut out = String::from("m,accuracy\n");
    for p in points {
        out.push_str(&format!("{},{}\n", p.m, p.accuracy));
    }
    out
}
