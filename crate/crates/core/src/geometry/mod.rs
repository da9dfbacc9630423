//! Embedding tables and the vocabulary-geometry diagnostics.

pub mod analysis;
pub mod synthetic;
pub mod table;

pub use analysis::{
    angles_to_anchors, cosine, knn, norm_stats, HistogramBin, Metric, Neighbor, NormStats,
};
pub use synthetic::{nearest_token_fixture, random_embedding, synthetic_vocabulary};
pub use table::{load_table, save_table, EmbeddingTable};
