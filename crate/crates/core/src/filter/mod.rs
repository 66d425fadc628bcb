//! Label-free filtering of edited images.
//!
//! The threshold is `tau = mu - 2 * sigma`, where `mu` and `sigma` are the
//! mean and population standard deviation of the cosine similarities over
//! all unordered pairs of original images. An edit is kept when its
//! similarity to its own original is at least `tau`.

mod embed;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use embed::{EmbedBackend, EmbedSpec, HttpEmbedBackend, MockEmbedBackend, MOCK_EMBED_DIM};

use crate::error::{GenMixError, Result};
use crate::scalar::Scalar;

/// A finite, nonzero embedding with its Euclidean norm cached.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<T> {
    values: Vec<T>,
    norm: T,
}

impl<T: Scalar> Embedding<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(GenMixError::DegenerateEmbedding);
        }
        let norm = values.iter().map(|&v| v * v).sum::<T>().sqrt();
        if !norm.is_finite() || norm <= T::zero() {
            return Err(GenMixError::DegenerateEmbedding);
        }
        Ok(Self { values, norm })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn norm(&self) -> T {
        self.norm
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn scaled(&self, factor: T) -> Result<Self> {
        Self::new(self.values.iter().map(|&v| v * factor).collect())
    }
}

/// `a . b / (|a| |b|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity<T: Scalar>(a: &Embedding<T>, b: &Embedding<T>) -> Result<T> {
    if a.dim() != b.dim() {
        return Err(GenMixError::EmbeddingDimension(a.dim(), b.dim()));
    }
    let dot: T = a.values.iter().zip(&b.values).map(|(&x, &y)| x * y).sum();
    Ok((dot / (a.norm * b.norm)).max(-T::one()).min(T::one()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterStats<T> {
    pub mu: T,
    pub sigma: T,
    pub tau: T,
    pub n_pairs: u64,
}

/// Pairwise similarity statistics over the originals.
///
/// Single-threaded Welford accumulation over the upper triangle, so the
/// result does not depend on any thread count.
pub fn compute_stats<T: Scalar>(originals: &[Embedding<T>]) -> Result<FilterStats<T>> {
    let n = originals.len();
    if n < 2 {
        return Err(GenMixError::TooFewOriginals(n));
    }
    let dim = originals[0].dim();
    if let Some(bad) = originals.iter().find(|e| e.dim() != dim) {
        return Err(GenMixError::EmbeddingDimension(dim, bad.dim()));
    }
    let units: Vec<Vec<T>> = originals
        .iter()
        .map(|e| e.values.iter().map(|&v| v / e.norm).collect())
        .collect();

    let mut count = 0u64;
    let mut mean = T::zero();
    let mut m2 = T::zero();
    for i in 0..n {
        for j in i + 1..n {
            let s: T = units[i].iter().zip(&units[j]).map(|(&x, &y)| x * y).sum();
            let s = s.max(-T::one()).min(T::one());
            count += 1;
            let delta = s - mean;
            mean = mean + delta / T::from_u64(count).expect("pair count fits");
            m2 = m2 + delta * (s - mean);
        }
    }
    let variance = (m2 / T::from_u64(count).expect("pair count fits")).max(T::zero());
    let sigma = variance.sqrt();
    let two = T::one() + T::one();
    Ok(FilterStats {
        mu: mean,
        sigma,
        tau: mean - two * sigma,
        n_pairs: count,
    })
}

pub fn is_faithful<T: Scalar>(
    original: &Embedding<T>,
    edited: &Embedding<T>,
    stats: &FilterStats<T>,
) -> Result<bool> {
    Ok(cosine_similarity(original, edited)? >= stats.tau)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterScope {
    #[default]
    Global,
    PerClass,
}

impl fmt::Display for FilterScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterScope::Global => "global",
            FilterScope::PerClass => "per-class",
        })
    }
}

impl FromStr for FilterScope {
    type Err = GenMixError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(FilterScope::Global),
            "per-class" | "per_class" => Ok(FilterScope::PerClass),
            other => Err(GenMixError::Config(format!(
                "unknown filter scope {other:?}"
            ))),
        }
    }
}

/// Thresholds for a run: one global set, plus one per label when scoped
/// per class.
///
/// Unlabeled entries form their own group. A group with fewer than two
/// members falls back to the global statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ScopedStats<T> {
    pub global: FilterStats<T>,
    pub per_class: BTreeMap<Option<String>, FilterStats<T>>,
}

impl<T: Scalar> ScopedStats<T> {
    pub fn compute(items: &[(Option<String>, Embedding<T>)], scope: FilterScope) -> Result<Self> {
        let all: Vec<Embedding<T>> = items.iter().map(|(_, e)| e.clone()).collect();
        let global = compute_stats(&all)?;
        let mut per_class = BTreeMap::new();
        if scope == FilterScope::PerClass {
            let mut groups: BTreeMap<Option<String>, Vec<Embedding<T>>> = BTreeMap::new();
            for (label, e) in items {
                groups.entry(label.clone()).or_default().push(e.clone());
            }
            for (label, members) in groups {
                if members.len() >= 2 {
                    per_class.insert(label, compute_stats(&members)?);
                }
            }
        }
        Ok(Self { global, per_class })
    }

    pub fn for_label(&self, label: Option<&str>) -> &FilterStats<T> {
        self.per_class
            .get(&label.map(str::to_string))
            .unwrap_or(&self.global)
    }
}

/// Stats summary emitted by `filter` and `run`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub mu: f64,
    pub sigma: f64,
    pub tau: f64,
    pub n_pairs: u64,
    pub n_accepted: u64,
    pub n_rejected: u64,
}

impl FilterReport {
    pub fn new<T: Scalar>(stats: &FilterStats<T>, n_accepted: u64, n_rejected: u64) -> Self {
        Self {
            mu: stats.mu.to_f64().unwrap_or(f64::NAN),
            sigma: stats.sigma.to_f64().unwrap_or(f64::NAN),
            tau: stats.tau.to_f64().unwrap_or(f64::NAN),
            n_pairs: stats.n_pairs,
            n_accepted,
            n_rejected,
        }
    }
}
