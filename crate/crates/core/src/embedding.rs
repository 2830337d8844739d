//! Text embeddings behind a pluggable provider: a file-backed lookup table
//! and a deterministic hash embedder that needs no model files.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::label;
use crate::num::Real;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("text is empty after normalization")]
    EmptyText,
    #[error("label {0:?} is not in the embedding table")]
    OutOfVocabulary(String),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("embedding file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("bad provider spec {0:?}; expected a path or hash:<seed>:<dim>")]
    BadSpec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Dense vector with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding<T = f64>(pub Vec<T>);

impl<T: Real> Embedding<T> {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn norm(&self) -> T {
        self.0.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn cast<U: Real>(&self) -> Embedding<U> {
        Embedding(self.0.iter().map(|&x| U::lit(x.to_f64_lossy())).collect())
    }
}

/// `a ⊕ b`: the first `d` entries are `a`, the last `d` are `b`.
pub fn concat<T: Real>(a: &Embedding<T>, b: &Embedding<T>) -> Result<Embedding<T>, EmbeddingError> {
    if a.dim() != b.dim() {
        return Err(EmbeddingError::DimensionMismatch(a.dim(), b.dim()));
    }
    let mut v = Vec::with_capacity(a.dim() * 2);
    v.extend_from_slice(&a.0);
    v.extend_from_slice(&b.0);
    Ok(Embedding(v))
}

/// Cosine similarity clamped to [-1, 1].
pub fn cosine<T: Real>(a: &Embedding<T>, b: &Embedding<T>) -> Result<T, EmbeddingError> {
    if a.dim() != b.dim() {
        return Err(EmbeddingError::DimensionMismatch(a.dim(), b.dim()));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == T::zero() || nb == T::zero() {
        return Err(EmbeddingError::ZeroVector);
    }
    let dot: T = a.0.iter().zip(&b.0).map(|(&x, &y)| x * y).sum();
    Ok((dot / (na * nb)).max(-T::one()).min(T::one()))
}

pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;

    /// Pure function of the normalized text.
    fn embed(&self, text: &str) -> Result<Embedding, EmbeddingError>;

    /// Identifies the vector space; stored in weight files so models are not
    /// paired with the wrong embedder.
    fn fingerprint(&self) -> String;
}

/// Unit vectors drawn from a Gaussian seeded by `sha256(seed, label)`.
#[derive(Clone, Debug)]
pub struct HashProvider {
    seed: u64,
    dim: usize,
}

impl HashProvider {
    pub const DEFAULT_DIM: usize = 16;

    pub fn new(seed: u64, dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { seed, dim }
    }
}

impl EmbeddingProvider for HashProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbeddingError> {
        let norm = label::normalize(text);
        if norm.is_empty() {
            return Err(EmbeddingError::EmptyText);
        }
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(norm.as_bytes());
        let digest: [u8; 32] = h.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(digest);
        loop {
            let v: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-12 {
                return Ok(Embedding(v.into_iter().map(|x| x / n).collect()));
            }
        }
    }

    fn fingerprint(&self) -> String {
        format!("hash:{}:{}", self.seed, self.dim)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OovPolicy {
    #[default]
    Error,
    /// Fall back to the entry with the smallest Levenshtein distance
    /// (ties → lexicographically first label).
    NearestByEditDistance,
}

/// Label → vector table loaded from an `EMB1` file or built in memory.
#[derive(Clone, Debug)]
pub struct TableProvider {
    dim: usize,
    table: BTreeMap<String, Vec<f64>>,
    oov: OovPolicy,
    fingerprint: String,
}

impl TableProvider {
    pub fn from_entries(
        dim: usize,
        entries: impl IntoIterator<Item = (String, Vec<f64>)>,
    ) -> Result<Self, EmbeddingError> {
        let mut table = BTreeMap::new();
        for (i, (label, v)) in entries.into_iter().enumerate() {
            if v.len() != dim {
                return Err(EmbeddingError::DimensionMismatch(v.len(), dim));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(EmbeddingError::Parse { line: i + 2, msg: "non-finite value".into() });
            }
            table.insert(label::normalize(&label), v);
        }
        let mut provider = Self { dim, table, oov: OovPolicy::Error, fingerprint: String::new() };
        let mut h = Sha256::new();
        h.update(provider.to_text().as_bytes());
        let digest = h.finalize();
        provider.fingerprint = format!("table:{}", digest.iter().take(8).map(|b| format!("{b:02x}")).collect::<String>());
        Ok(provider)
    }

    pub fn with_oov_policy(mut self, oov: OovPolicy) -> Self {
        self.oov = oov;
        self
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn parse(text: &str) -> Result<Self, EmbeddingError> {
        let mut lines = text.lines();
        let bad = |line: usize, msg: String| EmbeddingError::Parse { line, msg };
        let header = lines.next().ok_or_else(|| bad(1, "empty file".into()))?;
        let tok: Vec<&str> = header.split_whitespace().collect();
        if tok.len() != 5 || tok[0] != "EMB1" || tok[1] != "dim" || tok[3] != "n" {
            return Err(bad(1, "expected `EMB1 dim <d> n <count>`".into()));
        }
        let dim: usize = tok[2].parse().map_err(|e| bad(1, format!("dim: {e}")))?;
        let count: usize = tok[4].parse().map_err(|e| bad(1, format!("n: {e}")))?;
        let mut entries = Vec::with_capacity(count);
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            if line.trim().is_empty() {
                continue;
            }
            let (label, rest) = line.split_once('\t').ok_or_else(|| bad(line_no, "missing tab".into()))?;
            let v: Vec<f64> = rest
                .split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|e| bad(line_no, format!("{s:?}: {e}"))))
                .collect::<Result<_, _>>()?;
            if v.len() != dim {
                return Err(bad(line_no, format!("expected {dim} values, found {}", v.len())));
            }
            entries.push((label.to_string(), v));
        }
        if entries.len() != count {
            return Err(bad(1, format!("header says {count} entries, found {}", entries.len())));
        }
        Self::from_entries(dim, entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EmbeddingError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("EMB1 dim {} n {}\n", self.dim, self.table.len());
        for (label, v) in &self.table {
            s.push_str(label);
            s.push('\t');
            s.push_str(&v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" "));
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EmbeddingError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

impl EmbeddingProvider for TableProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbeddingError> {
        let norm = label::normalize(text);
        if norm.is_empty() {
            return Err(EmbeddingError::EmptyText);
        }
        if let Some(v) = self.table.get(&norm) {
            return Ok(Embedding(v.clone()));
        }
        match self.oov {
            OovPolicy::Error => Err(EmbeddingError::OutOfVocabulary(norm)),
            OovPolicy::NearestByEditDistance => self
                .table
                .iter()
                .min_by_key(|(k, _)| strsim::levenshtein(k, &norm))
                .map(|(_, v)| Embedding(v.clone()))
                .ok_or(EmbeddingError::OutOfVocabulary(norm)),
        }
    }

    fn fingerprint(&self) -> String {
        self.fingerprint.clone()
    }
}

/// Provider selected by a CLI-style spec: `hash:<seed>:<dim>` or a table path.
#[derive(Clone, Debug)]
pub enum ProviderSpec {
    Hash { seed: u64, dim: usize },
    Table(std::path::PathBuf),
}

impl FromStr for ProviderSpec {
    type Err = EmbeddingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(rest) = s.strip_prefix("hash:") {
            let bad = || EmbeddingError::BadSpec(s.to_string());
            let (seed, dim) = rest.split_once(':').ok_or_else(bad)?;
            let seed = seed.parse().map_err(|_| bad())?;
            let dim: usize = dim.parse().map_err(|_| bad())?;
            if dim == 0 {
                return Err(bad());
            }
            return Ok(ProviderSpec::Hash { seed, dim });
        }
        if s.is_empty() {
            return Err(EmbeddingError::BadSpec(s.to_string()));
        }
        Ok(ProviderSpec::Table(s.into()))
    }
}

impl ProviderSpec {
    pub fn build(&self) -> Result<std::sync::Arc<dyn EmbeddingProvider>, EmbeddingError> {
        Ok(match self {
            ProviderSpec::Hash { seed, dim } => std::sync::Arc::new(HashProvider::new(*seed, *dim)),
            ProviderSpec::Table(p) => std::sync::Arc::new(TableProvider::load(p)?),
        })
    }
}
