//! Deterministic stand-in for the diffusion editor.
//!
//! The edit is a global per-channel affine map `v' = clamp(a_c * v + t_c)`.
//! Parameters come from `StableHasher` over `(instruction, seed)` (string
//! then u64), used as the seed of a `SplitMix64` stream. For each channel in
//! RGB order two draws are taken: `a_c = (6 + (x % 9)) / 10` and
//! `t_c = ((y % 9) - 4) / 20`, so `a_c` is one of `0.6, 0.7, ..., 1.4` and
//! `t_c` one of `-0.2, -0.15, ..., 0.2`. The arithmetic is done in f64.

use super::{EditBackend, EditRequest, EditedImage};
use crate::error::Result;
use crate::hash::{SplitMix64, StableHasher};
use crate::Image;

pub const MOCK_EDIT_ID: &str = "mock-edit-v1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MockEditParams {
    pub scale: [f64; 3],
    pub offset: [f64; 3],
}

impl MockEditParams {
    pub const IDENTITY: MockEditParams = MockEditParams {
        scale: [1.0; 3],
        offset: [0.0; 3],
    };

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    pub fn apply(&self, image: &Image) -> Image {
        let mut out = image.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let c = i % 3;
            *v = (self.scale[c] * *v + self.offset[c]).clamp(0.0, 1.0);
        }
        out
    }
}

pub fn mock_edit_params(instruction: &str, seed: u64) -> MockEditParams {
    let key = StableHasher::new()
        .write_str(instruction)
        .write_u64(seed)
        .finish();
    let mut stream = SplitMix64::new(key);
    let mut params = MockEditParams::IDENTITY;
    for c in 0..3 {
        params.scale[c] = (6 + stream.next_u64() % 9) as f64 / 10.0;
        params.offset[c] = ((stream.next_u64() % 9) as f64 - 4.0) / 20.0;
    }
    params
}

pub fn mock_edit(image: &Image, instruction: &str, seed: u64) -> Image {
    mock_edit_params(instruction, seed).apply(image)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MockEditBackend;

impl EditBackend for MockEditBackend {
    fn id(&self) -> &str {
        MOCK_EDIT_ID
    }

    fn health(&self) -> Result<()> {
        Ok(())
    }

    fn edit(&self, req: &EditRequest<'_>) -> Result<EditedImage> {
        Ok(EditedImage {
            image: mock_edit(req.image, req.instruction, req.seed),
            backend_id: MOCK_EDIT_ID.to_string(),
            prompt_id: req.prompt_id.to_string(),
            source_id: req.source_id.to_string(),
        })
    }
}
