//! Token embedding tables and the `DTIEMB1` text format.
//!
//! ```text
//! DTIEMB1 <vocab_size> <dim>
//! <token>\t<x1> <x2> ... <xdim>
//! ...
//! ```
//!
//! Values are written with 17 significant digits so an `f64` table survives a
//! save/load cycle bit-for-bit. The file must end with a newline.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::linalg::norm;
use crate::{DtiError, Result, Scalar};

pub const MAGIC: &str = "DTIEMB1";

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<T> {
    tokens: Vec<String>,
    vectors: Vec<Vec<T>>,
    dim: usize,
    index: HashMap<String, usize>,
}

fn check_token(token: &str, line: usize) -> Result<()> {
    if token.is_empty() || token.contains(['\t', '\n', '\r']) {
        return Err(DtiError::Format {
            line,
            message: format!("token {token:?} is empty or contains TAB/newline"),
        });
    }
    Ok(())
}

impl<T: Scalar> EmbeddingTable<T> {
    pub fn new(tokens: Vec<String>, vectors: Vec<Vec<T>>) -> Result<Self> {
        if tokens.len() != vectors.len() {
            return Err(DtiError::DimMismatch {
                expected: tokens.len(),
                actual: vectors.len(),
            });
        }
        let dim = vectors.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(DtiError::InvalidDims(
                "table needs at least one row with dim >= 1".into(),
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, (token, row)) in tokens.iter().zip(&vectors).enumerate() {
            // line numbers as they would appear in a file
            let line = i + 2;
            check_token(token, line)?;
            if row.len() != dim {
                return Err(DtiError::DimMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            if !row.iter().all(|x| x.is_finite()) {
                return Err(DtiError::Format {
                    line,
                    message: format!("non-finite value in row for {token:?}"),
                });
            }
            if index.insert(token.clone(), i).is_some() {
                return Err(DtiError::DuplicateToken {
                    line,
                    token: token.clone(),
                });
            }
        }
        Ok(Self {
            tokens,
            vectors,
            dim,
            index,
        })
    }

    /// Single-row table, the on-disk form of a learned concept.
    pub fn single(token: impl Into<String>, vector: Vec<T>) -> Result<Self> {
        Self::new(vec![token.into()], vec![vector])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn vectors(&self) -> &[Vec<T>] {
        &self.vectors
    }

    pub fn row(&self, i: usize) -> (&str, &[T]) {
        (&self.tokens[i], &self.vectors[i])
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn get(&self, token: &str) -> Result<&[T]> {
        self.index_of(token)
            .map(|i| self.vectors[i].as_slice())
            .ok_or_else(|| DtiError::UnknownToken(token.to_string()))
    }

    pub fn row_norms(&self) -> Vec<T> {
        self.vectors.iter().map(|r| norm(r)).collect()
    }

    /// Same tokens, each row multiplied by its own factor.
    pub fn rescale_rows(&self, factors: &[T]) -> Result<Self> {
        if factors.len() != self.len() {
            return Err(DtiError::DimMismatch {
                expected: self.len(),
                actual: factors.len(),
            });
        }
        let vectors = self
            .vectors
            .iter()
            .zip(factors)
            .map(|(r, &f)| r.iter().map(|&x| x * f).collect())
            .collect();
        Self::new(self.tokens.clone(), vectors)
    }

    pub fn to_dtiemb(&self) -> String {
        let mut out = format!("{MAGIC} {} {}\n", self.len(), self.dim);
        for (token, row) in self.tokens.iter().zip(&self.vectors) {
            out.push_str(token);
            out.push('\t');
            for (j, x) in row.iter().enumerate() {
                if j > 0 {
                    out.push(' ');
                }
                out.push_str(&format!("{x:.16e}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn parse_dtiemb(text: &str) -> Result<Self> {
        let fail = |line: usize, message: String| DtiError::Format { line, message };
        if !text.ends_with('\n') {
            let last = text.lines().count().max(1);
            return Err(fail(last, "missing trailing newline".into()));
        }
        let mut lines = text[..text.len() - 1].split('\n');
        let header = lines.next().unwrap_or_default();
        let fields: Vec<&str> = header.split(' ').collect();
        let (vocab, dim) = match fields.as_slice() {
            [magic, v, d] if *magic == MAGIC => (
                v.parse::<usize>()
                    .map_err(|_| fail(1, format!("bad vocab size {v:?}")))?,
                d.parse::<usize>()
                    .map_err(|_| fail(1, format!("bad dimension {d:?}")))?,
            ),
            _ => {
                return Err(fail(
                    1,
                    format!("expected header `{MAGIC} <vocab_size> <dim>`, got {header:?}"),
                ))
            }
        };
        if vocab == 0 || dim == 0 {
            return Err(fail(1, "vocab size and dimension must be positive".into()));
        }
        let mut tokens = Vec::with_capacity(vocab);
        let mut vectors = Vec::with_capacity(vocab);
        let mut seen = HashMap::with_capacity(vocab);
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            if i >= vocab {
                return Err(fail(
                    lineno,
                    format!("header declares {vocab} rows but more follow"),
                ));
            }
            let (token, values) = line
                .split_once('\t')
                .ok_or_else(|| fail(lineno, "expected `<token>\\t<values>`".into()))?;
            check_token(token, lineno)?;
            let row = values
                .split(' ')
                .map(|s| {
                    s.parse::<T>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| fail(lineno, format!("bad value {s:?}")))
                })
                .collect::<Result<Vec<T>>>()?;
            if row.len() != dim {
                return Err(fail(
                    lineno,
                    format!("row has {} values, header declares {dim}", row.len()),
                ));
            }
            if seen.insert(token.to_string(), lineno).is_some() {
                return Err(DtiError::DuplicateToken {
                    line: lineno,
                    token: token.to_string(),
                });
            }
            tokens.push(token.to_string());
            vectors.push(row);
        }
        if tokens.len() != vocab {
            return Err(fail(
                tokens.len() + 2,
                format!("header declares {vocab} rows, found {}", tokens.len()),
            ));
        }
        Self::new(tokens, vectors)
    }
}

pub fn load_table<T: Scalar>(path: impl AsRef<Path>) -> Result<EmbeddingTable<T>> {
    EmbeddingTable::parse_dtiemb(&fs::read_to_string(path)?)
}

pub fn save_table<T: Scalar>(table: &EmbeddingTable<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, table.to_dtiemb())?;
    Ok(())
}
