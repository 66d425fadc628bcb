//! Feature extractors used by the filter.
//!
//! The mock extractor is a fixed random projection:
//! 1. Average the image over an 8x8 grid of cells; pixel `(x, y)` belongs to
//!    cell `(x * 8 / w, y * 8 / h)` (integer division). Empty cells read 0.5.
//! 2. Feature `k = (cell_y * 8 + cell_x) * 3 + c` is `mean - 0.5`; a final
//!    bias feature (index 192) is 1.0.
//! 3. `v[i] = sum_k R[i][k] * f[k]` in increasing `k`, where `R` is 384 rows
//!    of 193 values filled row-major from `SplitMix64(0x6a09e667f3bcc908)`
//!    as `2 * unit - 1`.
//! 4. `v / |v|`.

use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::Embedding;
use crate::backend::http::{encode_image_b64, HttpClient, RetryPolicy};
use crate::error::{GenMixError, Result};
use crate::hash::SplitMix64;
use crate::Image;

pub const MOCK_EMBED_DIM: usize = 384;
const GRID: usize = 8;
const FEATURES: usize = GRID * GRID * 3 + 1;
const PROJECTION_SEED: u64 = 0x6a09_e667_f3bc_c908;

pub trait EmbedBackend: Send + Sync {
    fn id(&self) -> &str;

    fn health(&self) -> Result<()>;

    fn embed(&self, image: &Image) -> Result<Embedding<f64>>;
}

impl<B: EmbedBackend + ?Sized> EmbedBackend for Arc<B> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn health(&self) -> Result<()> {
        (**self).health()
    }

    fn embed(&self, image: &Image) -> Result<Embedding<f64>> {
        (**self).embed(image)
    }
}

#[derive(Debug, Clone)]
pub struct MockEmbedBackend {
    projection: Vec<f64>,
}

impl Default for MockEmbedBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl MockEmbedBackend {
    pub fn new() -> Self {
        let mut g = SplitMix64::new(PROJECTION_SEED);
        let projection = (0..MOCK_EMBED_DIM * FEATURES)
            .map(|_| 2.0 * g.next_unit() - 1.0)
            .collect();
        Self { projection }
    }

    fn features(image: &Image) -> Vec<f64> {
        let (w, h) = image.dims();
        let mut sums = vec![0.0f64; GRID * GRID * 3];
        let mut counts = vec![0usize; GRID * GRID];
        for y in 0..h {
            let cy = y * GRID / h;
            for x in 0..w {
                let cell = cy * GRID + x * GRID / w;
                counts[cell] += 1;
                for c in 0..3 {
                    sums[cell * 3 + c] += image.get(x, y, c);
                }
            }
        }
        let mut f: Vec<f64> = sums
            .iter()
            .enumerate()
            .map(|(k, &s)| match counts[k / 3] {
                0 => 0.0,
                n => s / n as f64 - 0.5,
            })
            .collect();
        f.push(1.0);
        f
    }
}

impl EmbedBackend for MockEmbedBackend {
    fn id(&self) -> &str {
        "mock-embed-v1"
    }

    fn health(&self) -> Result<()> {
        Ok(())
    }

    fn embed(&self, image: &Image) -> Result<Embedding<f64>> {
        let f = Self::features(image);
        let v: Vec<f64> = self
            .projection
            .chunks_exact(FEATURES)
            .map(|row| row.iter().zip(&f).fold(0.0, |acc, (&r, &x)| acc + r * x))
            .collect();
        let norm = v.iter().fold(0.0, |acc, &x| acc + x * x).sqrt();
        Embedding::new(v.into_iter().map(|x| x / norm).collect())
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedRequestBody {
    pub image: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedResponseBody {
    pub vector: Vec<f64>,
    pub model: String,
}

#[derive(Debug)]
pub struct HttpEmbedBackend {
    client: HttpClient,
    id: String,
}

impl HttpEmbedBackend {
    pub fn new(endpoint: &str, policy: RetryPolicy) -> Result<Self> {
        let client = HttpClient::new(endpoint, policy)?;
        let id = format!("http:{}", client.endpoint());
        Ok(Self { client, id })
    }
}

impl EmbedBackend for HttpEmbedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn health(&self) -> Result<()> {
        self.client.health()
    }

    fn embed(&self, image: &Image) -> Result<Embedding<f64>> {
        let body = EmbedRequestBody {
            image: encode_image_b64(image),
        };
        let resp: EmbedResponseBody = self.client.post_json("/v1/embed", &body)?;
        Embedding::new(resp.vector)
            .map_err(|_| GenMixError::Protocol("embedding is empty, zero or non-finite".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbedSpec {
    Mock,
    Http(String),
}

impl FromStr for EmbedSpec {
    type Err = GenMixError;

    fn from_str(s: &str) -> Result<Self> {
        match s.parse::<crate::backend::BackendSpec>()? {
            crate::backend::BackendSpec::Mock => Ok(EmbedSpec::Mock),
            crate::backend::BackendSpec::Http(u) => Ok(EmbedSpec::Http(u)),
            crate::backend::BackendSpec::Dir(_) => Err(GenMixError::Config(
                "embedding backend must be mock or http:URL".into(),
            )),
        }
    }
}

impl EmbedSpec {
    pub fn build(&self, policy: RetryPolicy) -> Result<Arc<dyn EmbedBackend>> {
        Ok(match self {
            EmbedSpec::Mock => Arc::new(MockEmbedBackend::new()),
            EmbedSpec::Http(url) => Arc::new(HttpEmbedBackend::new(url, policy)?),
        })
    }
}
