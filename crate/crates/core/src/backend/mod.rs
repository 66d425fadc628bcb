//! Generative editing backends.
//!
//! All backends share one contract: given a source image, an instruction and
//! a seed, return an edited image with the source's dimensions and values in
//! `[0, 1]`. Outputs of a different size are bilinearly resized back.

mod dir;
pub mod http;
mod mock;

use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

pub use dir::DirEditBackend;
pub use http::{HttpClient, HttpEditBackend, RetryPolicy};
pub use mock::{mock_edit, mock_edit_params, MockEditBackend, MockEditParams};

use crate::error::{GenMixError, Result};
use crate::Image;

#[derive(Debug, Clone, Copy)]
pub struct EditRequest<'a> {
    pub image: &'a Image,
    pub instruction: &'a str,
    pub seed: u64,
    pub source_id: &'a str,
    pub prompt_id: &'a str,
}

impl<'a> EditRequest<'a> {
    pub fn new(
        image: &'a Image,
        instruction: &'a str,
        seed: u64,
        source_id: &'a str,
        prompt_id: &'a str,
    ) -> Result<Self> {
        if instruction.trim().is_empty() {
            return Err(GenMixError::InvalidPrompt("empty instruction".into()));
        }
        Ok(Self {
            image,
            instruction,
            seed,
            source_id,
            prompt_id,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditedImage {
    pub image: Image,
    pub backend_id: String,
    pub prompt_id: String,
    pub source_id: String,
}

pub trait EditBackend: Send + Sync {
    fn id(&self) -> &str;

    fn health(&self) -> Result<()>;

    fn edit(&self, req: &EditRequest<'_>) -> Result<EditedImage>;
}

impl<B: EditBackend + ?Sized> EditBackend for Arc<B> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn health(&self) -> Result<()> {
        (**self).health()
    }

    fn edit(&self, req: &EditRequest<'_>) -> Result<EditedImage> {
        (**self).edit(req)
    }
}

/// Resize to `(width, height)` if needed and clamp into `[0, 1]`.
pub fn conform_to(image: Image, dims: (usize, usize), backend: &str) -> Result<Image> {
    let image = if image.dims() != dims {
        log::warn!(
            "{backend}: edited image is {}x{}, resizing to {}x{}",
            image.width(),
            image.height(),
            dims.0,
            dims.1
        );
        image.resize_bilinear(dims.0, dims.1)?
    } else {
        image
    };
    Ok(image.map(|v| v.clamp(0.0, 1.0)))
}

/// Backend selector as written on the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Mock,
    Dir(PathBuf),
    Http(String),
}

impl FromStr for BackendSpec {
    type Err = GenMixError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "mock" {
            Ok(BackendSpec::Mock)
        } else if let Some(p) = s.strip_prefix("dir:") {
            Ok(BackendSpec::Dir(PathBuf::from(p)))
        } else if let Some(u) = s.strip_prefix("http:") {
            // Accept both `http:host:port` and `http:http://host:port`.
            let url = if u.starts_with("http://") || u.starts_with("https://") {
                u.to_string()
            } else {
                format!("http://{}", u.trim_start_matches("//"))
            };
            Ok(BackendSpec::Http(url))
        } else {
            Err(GenMixError::Config(format!(
                "unknown backend {s:?} (expected mock, dir:PATH or http:URL)"
            )))
        }
    }
}

impl BackendSpec {
    pub fn build_edit(&self, policy: RetryPolicy) -> Result<Arc<dyn EditBackend>> {
        Ok(match self {
            BackendSpec::Mock => Arc::new(MockEditBackend),
            BackendSpec::Dir(root) => Arc::new(DirEditBackend::new(root)),
            BackendSpec::Http(url) => Arc::new(HttpEditBackend::new(url, policy)?),
        })
    }
}
