use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::geometry::{norm_stats, EmbeddingTable};
use crate::sphere::UnitDirection;
use crate::{DtiError, Result, Scalar};

pub const DEFAULT_KAPPA: f64 = 1e-4;
pub const DEFAULT_ETA: f64 = 5e-3;
pub const DEFAULT_STEPS: usize = 500;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum OptimizerKind {
    #[default]
    #[serde(alias = "rsgd")]
    Rsgd,
    #[serde(alias = "adam", alias = "euclidean_adam")]
    EuclideanAdam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = DtiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rsgd" => Ok(OptimizerKind::Rsgd),
            "adam" | "euclideanadam" | "euclidean_adam" => Ok(OptimizerKind::EuclideanAdam),
            other => Err(DtiError::InvalidArgument(format!(
                "unknown optimizer {other:?} (expected rsgd or adam)"
            ))),
        }
    }
}

/// The fixed embedding norm `m*`: a literal, or the mean row norm of the
/// vocabulary, resolved once against a table.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Magnitude<T> {
    Literal(T),
    #[default]
    MeanVocabNorm,
}

const MEAN_VOCAB_NORM: &str = "MeanVocabNorm";

impl<T: Scalar> Serialize for Magnitude<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Magnitude::Literal(m) => m.serialize(s),
            Magnitude::MeanVocabNorm => s.serialize_str(MEAN_VOCAB_NORM),
        }
    }
}

impl<'de, T: Scalar> Deserialize<'de> for Magnitude<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw<T> {
            Number(T),
            Tag(String),
        }
        match Raw::<T>::deserialize(d)? {
            Raw::Number(m) => Ok(Magnitude::Literal(m)),
            Raw::Tag(t) if t == MEAN_VOCAB_NORM => Ok(Magnitude::MeanVocabNorm),
            Raw::Tag(t) => Err(serde::de::Error::custom(format!(
                "m_star must be a positive number or {MEAN_VOCAB_NORM:?}, got {t:?}"
            ))),
        }
    }
}

/// Run configuration; reads from and writes to JSON with these field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
pub struct InversionConfig<T> {
    pub dim: usize,
    #[serde(default)]
    pub m_star: Magnitude<T>,
    #[serde(default = "default_kappa")]
    pub kappa: T,
    #[serde(default = "default_eta")]
    pub eta: T,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Falls back to the normalized initial embedding when absent.
    #[serde(default)]
    pub prior_mu: Option<UnitDirection<T>>,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_normalize")]
    pub normalize_gradient: bool,
}

fn default_kappa<T: Scalar>() -> T {
    T::lit(DEFAULT_KAPPA)
}
fn default_eta<T: Scalar>() -> T {
    T::lit(DEFAULT_ETA)
}
fn default_steps() -> usize {
    DEFAULT_STEPS
}
fn default_seed() -> u64 {
    DEFAULT_SEED
}
fn default_normalize() -> bool {
    true
}

impl<T: Scalar> InversionConfig<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            m_star: Magnitude::MeanVocabNorm,
            kappa: default_kappa(),
            eta: default_eta(),
            steps: DEFAULT_STEPS,
            seed: DEFAULT_SEED,
            prior_mu: None,
            optimizer: OptimizerKind::Rsgd,
            normalize_gradient: true,
        }
    }

    pub fn with_m_star(mut self, m: T) -> Self {
        self.m_star = Magnitude::Literal(m);
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Replaces `MeanVocabNorm` by the table's mean row norm.
    pub fn resolve_m_star(&mut self, table: &EmbeddingTable<T>) -> Result<T> {
        if let Magnitude::Literal(m) = self.m_star {
            return Ok(m);
        }
        if table.dim() != self.dim {
            return Err(DtiError::DimMismatch {
                expected: self.dim,
                actual: table.dim(),
            });
        }
        let mean = norm_stats(table, 1)?.mean;
        self.m_star = Magnitude::Literal(mean);
        Ok(mean)
    }

    /// The literal `m*`; errors while still `MeanVocabNorm`.
    pub fn m_star_value(&self) -> Result<T> {
        match self.m_star {
            Magnitude::Literal(m) => Ok(m),
            Magnitude::MeanVocabNorm => Err(DtiError::UnresolvedMagnitude),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(DtiError::InvalidArgument(msg));
        if self.dim < 2 {
            return Err(DtiError::InvalidDims(format!(
                "dim must be >= 2, got {}",
                self.dim
            )));
        }
        if let Magnitude::Literal(m) = self.m_star {
            if !(m > T::zero() && m.is_finite()) {
                return bad(format!("m_star must be positive, got {m}"));
            }
        }
        if !(self.kappa >= T::zero() && self.kappa.is_finite()) {
            return bad(format!("kappa must be nonnegative, got {}", self.kappa));
        }
        if !(self.eta > T::zero() && self.eta.is_finite()) {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if let Some(mu) = &self.prior_mu {
            if mu.dim() != self.dim {
                return Err(DtiError::DimMismatch {
                    expected: self.dim,
                    actual: mu.dim(),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_missing_fields() {
        let cfg = InversionConfig::<f64>::from_json(r#"{"dim": 8}"#).unwrap();
        assert_eq!(cfg.kappa, 1e-4);
        assert_eq!(cfg.eta, 5e-3);
        assert_eq!(cfg.steps, 500);
        assert_eq!(cfg.seed, 42);
        assert!(cfg.normalize_gradient);
        assert_eq!(cfg.optimizer, OptimizerKind::Rsgd);
        assert_eq!(cfg.m_star, Magnitude::MeanVocabNorm);
        assert!(matches!(
            cfg.m_star_value(),
            Err(DtiError::UnresolvedMagnitude)
        ));
    }

    #[test]
    fn full_document_round_trips() {
        let text = r#"{"dim":3,"m_star":0.4,"kappa":0.0005,"eta":0.01,"steps":10,"seed":7,
            "prior_mu":[0.0,3.0,4.0],"optimizer":"EuclideanAdam","normalize_gradient":false}"#;
        let cfg = InversionConfig::<f64>::from_json(text).unwrap();
        assert_eq!(cfg.m_star, Magnitude::Literal(0.4));
        assert_eq!(cfg.prior_mu.as_ref().unwrap().as_slice(), &[0.0, 0.6, 0.8]);
        assert_eq!(cfg.optimizer, OptimizerKind::EuclideanAdam);
        let back =
            InversionConfig::<f64>::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        let tagged =
            InversionConfig::<f64>::from_json(r#"{"dim":3,"m_star":"MeanVocabNorm"}"#).unwrap();
        assert_eq!(tagged.m_star, Magnitude::MeanVocabNorm);
    }

    #[test]
    fn rejects_bad_documents() {
        for text in [
            r#"{"dim":1}"#,
            r#"{"dim":4,"m_star":-1}"#,
            r#"{"dim":4,"m_star":"median"}"#,
            r#"{"dim":4,"kappa":-0.1}"#,
            r#"{"dim":4,"eta":0}"#,
            r#"{"dim":4,"prior_mu":[1,0]}"#,
            r#"{"dim":4,"prior_mu":[0,0,0,0]}"#,
            r#"{"dim":4,"learning_rate":0.1}"#,
        ] {
            assert!(InversionConfig::<f64>::from_json(text).is_err(), "{text}");
        }
    }

    #[test]
    fn mean_vocab_norm_resolves_once() {
        let table = EmbeddingTable::new(
            vec!["a".into(), "b".into()],
            vec![vec![3.0, 4.0], vec![0.0, 1.0]],
        )
        .unwrap();
        let mut cfg = InversionConfig::<f64>::new(2);
        assert_eq!(cfg.resolve_m_star(&table).unwrap(), 3.0);
        assert_eq!(cfg.m_star, Magnitude::Literal(3.0));
    }
}
