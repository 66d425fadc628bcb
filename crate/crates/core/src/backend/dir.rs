use std::path::{Path, PathBuf};

use super::{conform_to, EditBackend, EditRequest, EditedImage};
use crate::error::{GenMixError, Result};
use crate::image::image_load_normalize;

/// Precomputed edits laid out as `{root}/{source_id}/{prompt_id}.png`.
#[derive(Debug, Clone)]
pub struct DirEditBackend {
    root: PathBuf,
    id: String,
}

impl DirEditBackend {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        let root = root.into();
        let id = format!("dir:{}", root.display());
        Self { root, id }
    }

    pub fn path_for(&self, source_id: &str, prompt_id: &str) -> PathBuf {
        edit_path(&self.root, source_id, prompt_id)
    }
}

pub(crate) fn edit_path(root: &Path, source_id: &str, prompt_id: &str) -> PathBuf {
    root.join(source_id).join(format!("{prompt_id}.png"))
}

impl EditBackend for DirEditBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn health(&self) -> Result<()> {
        if self.root.is_dir() {
            Ok(())
        } else {
            Err(GenMixError::Unhealthy {
                backend: self.id.clone(),
                message: "edit directory does not exist".into(),
            })
        }
    }

    fn edit(&self, req: &EditRequest<'_>) -> Result<EditedImage> {
        let path = self.path_for(req.source_id, req.prompt_id);
        if !path.is_file() {
            return Err(GenMixError::MissingEdit {
                source_id: req.source_id.to_string(),
                prompt_id: req.prompt_id.to_string(),
            });
        }
        let image = conform_to(image_load_normalize(&path)?, req.image.dims(), &self.id)?;
        Ok(EditedImage {
            image,
            backend_id: self.id.clone(),
            prompt_id: req.prompt_id.to_string(),
            source_id: req.source_id.to_string(),
        })
    }
}
