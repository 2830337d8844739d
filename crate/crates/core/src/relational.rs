//! Small fully-connected scorers for co-occurrence and containment priors,
//! trained from scratch with hand-written backprop.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{concat, EmbeddingError, EmbeddingProvider};
use crate::num::{sigmoid, softplus, Real};

const MAGIC: &[u8; 4] = b"MLP1";

#[derive(Debug, Error)]
pub enum MlpError {
    #[error("input has dimension {got}, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite model output")]
    NonFinite,
    #[error("loss became NaN in epoch {epoch}, batch {batch}")]
    NanLoss { epoch: usize, batch: usize },
    #[error("training set is empty")]
    EmptyDataset,
    #[error("weights are for relation {found}, expected {expected}")]
    TagMismatch { expected: Relation, found: Relation },
    #[error("weights were trained with embedder {found:?}, active embedder is {expected:?}")]
    ProviderMismatch { expected: String, found: String },
    #[error("malformed weight file: {0}")]
    Format(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    CoOccur,
    Contain,
}

impl Relation {
    pub fn loss(self) -> Loss {
        match self {
            Relation::CoOccur => Loss::Bce,
            Relation::Contain => Loss::Mse,
        }
    }

    fn tag(self) -> u8 {
        match self {
            Relation::CoOccur => 1,
            Relation::Contain => 2,
        }
    }

    fn from_tag(t: u8) -> Option<Self> {
        match t {
            1 => Some(Relation::CoOccur),
            2 => Some(Relation::Contain),
            _ => None,
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::CoOccur => "cooccur",
            Relation::Contain => "contain",
        })
    }
}

impl FromStr for Relation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cooccur" | "co-occur" => Ok(Relation::CoOccur),
            "contain" => Ok(Relation::Contain),
            _ => Err(format!("unknown relation {s:?}; expected cooccur or contain")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Loss {
    Bce,
    Mse,
}

impl Loss {
    /// Loss and dL/dz for logit `z` and target `y`.
    fn eval<T: Real>(self, z: T, y: T) -> (T, T) {
        let p = sigmoid(z);
        match self {
            // softplus(z) − y·z is BCE written on the logit; stable for large |z|
            Loss::Bce => (softplus(z) - y * z, p - y),
            Loss::Mse => {
                let r = p - y;
                (r * r, T::lit(2.0) * r * p * (T::one() - p))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample<T> {
    pub x: Vec<T>,
    pub y: T,
}

/// `[2d, h1, …, 1]` ReLU network with a sigmoid head. All parameters live in
/// one flat vector: per layer, the row-major `out × in` weights, then biases.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    relation: Relation,
    sizes: Vec<usize>,
    params: Vec<T>,
    fingerprint: String,
}

impl<T: Real> Mlp<T> {
    pub const DEFAULT_HIDDEN: [usize; 2] = [64, 32];

    /// He-initialized network for embeddings of dimension `embed_dim`.
    /// Hidden biases start slightly positive so that a fully inactive layer
    /// does not leave the next one sitting exactly on the ReLU kink.
    pub fn new(relation: Relation, embed_dim: usize, hidden: &[usize], seed: u64) -> Self {
        let sizes = layer_sizes(embed_dim, hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(param_count(&sizes));
        let n_layers = sizes.len() - 1;
        for (l, win) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (win[0], win[1]);
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            params.extend((0..fan_in * fan_out).map(|_| T::lit(normal.sample(&mut rng))));
            let bias = if l + 1 < n_layers { T::lit(0.01) } else { T::zero() };
            params.extend(std::iter::repeat_n(bias, fan_out));
        }
        Self { relation, sizes, params, fingerprint: String::new() }
    }

    pub fn zeros(relation: Relation, embed_dim: usize, hidden: &[usize]) -> Self {
        let sizes = layer_sizes(embed_dim, hidden);
        let params = vec![T::zero(); param_count(&sizes)];
        Self { relation, sizes, params, fingerprint: String::new() }
    }

    /// Network with explicit layer sizes and flat parameters.
    pub fn from_params(relation: Relation, sizes: Vec<usize>, params: Vec<T>) -> Result<Self, MlpError> {
        if sizes.len() < 2 || sizes.contains(&0) || *sizes.last().unwrap() != 1 {
            return Err(MlpError::Format(format!("invalid layer sizes {sizes:?}")));
        }
        if params.len() != param_count(&sizes) {
            return Err(MlpError::Format(format!(
                "expected {} parameters for {sizes:?}, got {}",
                param_count(&sizes),
                params.len()
            )));
        }
        Ok(Self { relation, sizes, params, fingerprint: String::new() })
    }

    pub fn with_fingerprint(mut self, fingerprint: impl Into<String>) -> Self {
        self.fingerprint = fingerprint.into();
        self
    }

    pub fn relation(&self) -> Relation {
        self.relation
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    /// Index of the output bias in the flat parameter vector.
    pub fn output_bias_index(&self) -> usize {
        self.params.len() - 1
    }

    fn check_input(&self, x: &[T]) -> Result<(), MlpError> {
        if x.len() != self.input_dim() {
            return Err(MlpError::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        Ok(())
    }

    /// Post-activation values of every layer (input first) and the output logit.
    fn activations(&self, x: &[T]) -> (Vec<Vec<T>>, T) {
        let n_layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(n_layers);
        acts.push(x.to_vec());
        let mut off = 0;
        let mut logit = T::zero();
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + fan_in * fan_out];
            let b = &self.params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
            off += fan_in * fan_out + fan_out;
            let input = acts.last().unwrap();
            let mut out = Vec::with_capacity(fan_out);
            for j in 0..fan_out {
                let row = &w[j * fan_in..(j + 1) * fan_in];
                let z = row.iter().zip(input).fold(b[j], |acc, (&wi, &xi)| acc + wi * xi);
                out.push(z);
            }
            if l + 1 == n_layers {
                logit = out[0];
            } else {
                for v in &mut out {
                    *v = v.max(T::zero());
                }
                acts.push(out);
            }
        }
        (acts, logit)
    }

    pub fn logit(&self, x: &[T]) -> Result<T, MlpError> {
        self.check_input(x)?;
        let (_, z) = self.activations(x);
        if !z.is_finite() {
            return Err(MlpError::NonFinite);
        }
        Ok(z)
    }

    /// Score in the open interval (0, 1).
    pub fn forward(&self, x: &[T]) -> Result<T, MlpError> {
        let eps = T::epsilon();
        Ok(sigmoid(self.logit(x)?).max(eps).min(T::one() - eps))
    }

    /// `f(E(a) ⊕ E(b))`.
    pub fn score_pair(&self, provider: &dyn EmbeddingProvider, a: &str, b: &str) -> Result<T, MlpError> {
        let x = concat(&provider.embed(a)?, &provider.embed(b)?)?.cast::<T>();
        self.forward(&x.0)
    }

    /// Accumulates dL/dθ for one sample into `grad`; returns the sample loss.
    fn backprop(&self, s: &Sample<T>, loss: Loss, grad: &mut [T]) -> T {
        let (acts, z) = self.activations(&s.x);
        let (l, dz) = loss.eval(z, s.y);
        let n_layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let mut delta = vec![dz];
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let input = &acts[l];
            for j in 0..fan_out {
                let d = delta[j];
                if d == T::zero() {
                    continue;
                }
                let g = &mut grad[off + j * fan_in..off + (j + 1) * fan_in];
                for (gi, &xi) in g.iter_mut().zip(input) {
                    *gi += d * xi;
                }
                grad[off + fan_in * fan_out + j] += d;
            }
            if l > 0 {
                let w = &self.params[off..off + fan_in * fan_out];
                let mut prev = vec![T::zero(); fan_in];
                for j in 0..fan_out {
                    let d = delta[j];
                    if d == T::zero() {
                        continue;
                    }
                    for (p, &wi) in prev.iter_mut().zip(&w[j * fan_in..(j + 1) * fan_in]) {
                        *p += d * wi;
                    }
                }
                // ReLU derivative: gate on the post-activation value
                for (p, &a) in prev.iter_mut().zip(input) {
                    if a <= T::zero() {
                        *p = T::zero();
                    }
                }
                delta = prev;
            }
        }
        l
    }

    pub fn loss(&self, s: &Sample<T>, loss: Loss) -> T {
        let (_, z) = self.activations(&s.x);
        loss.eval(z, s.y).0
    }

    pub fn mean_loss(&self, samples: &[Sample<T>], loss: Loss) -> T {
        if samples.is_empty() {
            return T::zero();
        }
        samples.iter().map(|s| self.loss(s, loss)).sum::<T>() / T::lit(samples.len() as f64)
    }

    /// Gradient of the single-sample loss.
    pub fn gradient(&self, s: &Sample<T>, loss: Loss) -> Vec<T> {
        let mut g = vec![T::zero(); self.params.len()];
        self.backprop(s, loss, &mut g);
        g
    }

    /// Max over parameters of `|analytic − numeric| / max(1, |numeric|)` with
    /// central differences of step 1e-5.
    pub fn grad_check(&self, s: &Sample<T>, loss: Loss) -> f64 {
        let eps = T::lit(1e-5);
        let analytic = self.gradient(s, loss);
        let mut probe = self.clone();
        let mut worst = 0.0f64;
        for (i, &a) in analytic.iter().enumerate() {
            let orig = probe.params[i];
            probe.params[i] = orig + eps;
            let up = probe.loss(s, loss);
            probe.params[i] = orig - eps;
            let down = probe.loss(s, loss);
            probe.params[i] = orig;
            let numeric = ((up - down) / (T::lit(2.0) * eps)).to_f64_lossy();
            let err = (a.to_f64_lossy() - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
        worst
    }

    /// Mini-batch SGD with momentum and early stopping on validation loss.
    /// Parameters end at the best-validation epoch (or the last epoch when
    /// there is no validation data).
    pub fn train(&mut self, train: &[Sample<T>], val: &[Sample<T>], cfg: &TrainConfig) -> Result<TrainReport, MlpError> {
        if train.is_empty() {
            return Err(MlpError::EmptyDataset);
        }
        for s in train.iter().chain(val) {
            self.check_input(&s.x)?;
        }
        let loss = self.relation.loss();
        let lr = T::lit(cfg.learning_rate);
        let mu = T::lit(cfg.momentum);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut velocity = vec![T::zero(); self.params.len()];
        let mut grad = vec![T::zero(); self.params.len()];
        let mut report = TrainReport::default();
        let mut best: Option<(f64, Vec<T>, usize)> = None;
        let batch = cfg.batch_size.max(1);

        for epoch in 0..cfg.max_epochs {
            order.shuffle(&mut rng);
            for (b, chunk) in order.chunks(batch).enumerate() {
                grad.iter_mut().for_each(|g| *g = T::zero());
                let mut batch_loss = T::zero();
                for &i in chunk {
                    batch_loss += self.backprop(&train[i], loss, &mut grad);
                }
                if !batch_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(MlpError::NanLoss { epoch, batch: b });
                }
                let scale = T::one() / T::lit(chunk.len() as f64);
                for ((p, v), &g) in self.params.iter_mut().zip(&mut velocity).zip(&grad) {
                    *v = mu * *v - lr * g * scale;
                    *p += *v;
                }
            }
            let train_loss = self.mean_loss(train, loss).to_f64_lossy();
            if !train_loss.is_finite() {
                return Err(MlpError::NanLoss { epoch, batch: order.len().div_ceil(batch) });
            }
            report.train_loss.push(train_loss);
            let monitored = if val.is_empty() {
                train_loss
            } else {
                let v = self.mean_loss(val, loss).to_f64_lossy();
                report.val_loss.push(v);
                v
            };
            match &best {
                Some((b, _, _)) if monitored >= *b => {}
                _ => best = Some((monitored, self.params.clone(), epoch)),
            }
            let best_epoch = best.as_ref().map_or(epoch, |b| b.2);
            if !val.is_empty() && epoch - best_epoch >= cfg.patience {
                break;
            }
        }
        if !val.is_empty() {
            if let Some((_, params, epoch)) = best {
                self.params = params;
                report.best_epoch = epoch;
            }
            report.final_val_loss = Some(self.mean_loss(val, loss).to_f64_lossy());
        } else {
            report.best_epoch = report.train_loss.len().saturating_sub(1);
        }
        Ok(report)
    }

    /// Fails when these weights cannot score pairs from `provider` under `relation`.
    pub fn check_compatible(&self, relation: Relation, provider: &dyn EmbeddingProvider) -> Result<(), MlpError> {
        if self.relation != relation {
            return Err(MlpError::TagMismatch { expected: relation, found: self.relation });
        }
        if self.input_dim() != 2 * provider.dim() {
            return Err(MlpError::DimensionMismatch { expected: 2 * provider.dim(), got: self.input_dim() });
        }
        if !self.fingerprint.is_empty() && self.fingerprint != provider.fingerprint() {
            return Err(MlpError::ProviderMismatch { expected: provider.fingerprint(), found: self.fingerprint.clone() });
        }
        Ok(())
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), MlpError> {
        w.write_all(MAGIC)?;
        w.write_all(&[self.relation.tag()])?;
        w.write_all(&((self.sizes[0] / 2) as u32).to_le_bytes())?;
        w.write_all(&(self.sizes.len() as u32).to_le_bytes())?;
        for &s in &self.sizes {
            w.write_all(&(s as u32).to_le_bytes())?;
        }
        w.write_all(&(self.fingerprint.len() as u32).to_le_bytes())?;
        w.write_all(self.fingerprint.as_bytes())?;
        w.write_all(&(self.params.len() as u64).to_le_bytes())?;
        for &p in &self.params {
            w.write_all(&p.to_f64_lossy().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, MlpError> {
        fn bytes<const N: usize>(r: &mut impl Read) -> Result<[u8; N], MlpError> {
            let mut b = [0u8; N];
            r.read_exact(&mut b).map_err(|e| MlpError::Format(format!("truncated: {e}")))?;
            Ok(b)
        }
        let u32_ = |r: &mut dyn Read| -> Result<usize, MlpError> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b).map_err(|e| MlpError::Format(format!("truncated: {e}")))?;
            Ok(u32::from_le_bytes(b) as usize)
        };
        if &bytes::<4>(&mut r)? != MAGIC {
            return Err(MlpError::Format("bad magic".into()));
        }
        let tag = bytes::<1>(&mut r)?[0];
        let relation = Relation::from_tag(tag).ok_or_else(|| MlpError::Format(format!("unknown relation tag {tag}")))?;
        let embed_dim = u32_(&mut r)?;
        let n_sizes = u32_(&mut r)?;
        if n_sizes > 64 {
            return Err(MlpError::Format(format!("{n_sizes} layers")));
        }
        let sizes = (0..n_sizes).map(|_| u32_(&mut r)).collect::<Result<Vec<_>, _>>()?;
        if sizes.first() != Some(&(2 * embed_dim)) {
            return Err(MlpError::Format(format!("input size {:?} disagrees with embedding dim {embed_dim}", sizes.first())));
        }
        let fp_len = u32_(&mut r)?;
        let mut fp = vec![0u8; fp_len];
        r.read_exact(&mut fp).map_err(|e| MlpError::Format(format!("truncated: {e}")))?;
        let fingerprint = String::from_utf8(fp).map_err(|_| MlpError::Format("fingerprint is not UTF-8".into()))?;
        let count = u64::from_le_bytes(bytes::<8>(&mut r)?) as usize;
        if count != param_count(&sizes) {
            return Err(MlpError::Format(format!("parameter count {count} does not match sizes {sizes:?}")));
        }
        let params = (0..count)
            .map(|_| bytes::<8>(&mut r).map(|b| T::lit(f64::from_le_bytes(b))))
            .collect::<Result<Vec<_>, _>>()?;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(MlpError::Format("non-finite parameter".into()));
        }
        Ok(Self::from_params(relation, sizes, params)?.with_fingerprint(fingerprint))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MlpError> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MlpError> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn layer_sizes(embed_dim: usize, hidden: &[usize]) -> Vec<usize> {
    let mut sizes = vec![2 * embed_dim];
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    sizes
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-2, momentum: 0.9, batch_size: 32, max_epochs: 500, patience: 20, seed: 0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    /// Mean training loss after each epoch.
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
    pub final_val_loss: Option<f64>,
}

/// Embedded (train, val) samples.
pub type Splits<T> = (Vec<Sample<T>>, Vec<Sample<T>>);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub text_a: String,
    pub text_b: String,
    pub label: f64,
    pub split: Split,
}

/// Labeled `(text_a, text_b)` pairs; `text_b` is the query, `text_a` the
/// object (co-occurrence) or room (containment).
#[derive(Clone, Debug, PartialEq)]
pub struct RelationalDataset {
    pub relation: Relation,
    pub rows: Vec<Row>,
}

impl RelationalDataset {
    pub fn train_rows(&self) -> impl Iterator<Item = &Row> {
        self.rows.iter().filter(|r| r.split == Split::Train)
    }

    pub fn val_rows(&self) -> impl Iterator<Item = &Row> {
        self.rows.iter().filter(|r| r.split == Split::Val)
    }

    /// Checks label ranges and pair uniqueness.
    pub fn validate(&self) -> Result<(), MlpError> {
        let mut seen = std::collections::BTreeSet::new();
        for r in &self.rows {
            let ok = match self.relation {
                Relation::CoOccur => r.label == 0.0 || r.label == 1.0,
                Relation::Contain => (0.0..=1.0).contains(&r.label),
            };
            if !ok {
                return Err(MlpError::Dataset(format!("label {} out of range for ({}, {})", r.label, r.text_a, r.text_b)));
            }
            if !seen.insert((r.text_a.as_str(), r.text_b.as_str())) {
                return Err(MlpError::Dataset(format!("duplicate pair ({}, {})", r.text_a, r.text_b)));
            }
        }
        Ok(())
    }

    pub fn write_tsv(&self, w: impl Write) -> Result<(), MlpError> {
        let mut out = csv::WriterBuilder::new().delimiter(b'\t').from_writer(w);
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_tsv(relation: Relation, r: impl Read) -> Result<Self, MlpError> {
        let mut rdr = csv::ReaderBuilder::new().delimiter(b'\t').from_reader(r);
        let rows = rdr.deserialize().collect::<Result<Vec<Row>, _>>()?;
        let ds = Self { relation, rows };
        ds.validate()?;
        Ok(ds)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MlpError> {
        self.write_tsv(std::fs::File::create(path)?)
    }

    pub fn load(relation: Relation, path: impl AsRef<Path>) -> Result<Self, MlpError> {
        Self::read_tsv(relation, std::fs::File::open(path)?)
    }

    /// Embeds every row as `E(a) ⊕ E(b)`; returns (train, val).
    pub fn embed<T: Real>(&self, provider: &dyn EmbeddingProvider) -> Result<Splits<T>, MlpError> {
        let mut train = Vec::new();
        let mut val = Vec::new();
        for r in &self.rows {
            let x = concat(&provider.embed(&r.text_a)?, &provider.embed(&r.text_b)?)?.cast::<T>();
            let s = Sample { x: x.0, y: T::lit(r.label) };
            match r.split {
                Split::Train => train.push(s),
                Split::Val => val.push(s),
            }
        }
        Ok((train, val))
    }
}
