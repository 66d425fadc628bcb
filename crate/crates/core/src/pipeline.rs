//! End-to-end augmentation over a manifest.
//!
//! For every entry and every augmentation index `a in 1..=m` a seed is derived
//! from `(run seed, entry id, a)`. That seed alone drives, in this order:
//! the prompt draw, the mask-kind draw, the fractal draw and (for PatchSwap)
//! the rectangle draws; it is also the seed passed to the editor. Outputs
//! therefore do not depend on the number of workers or on scheduling, and
//! any record can be replayed from its seed.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use crate::backend::{BackendSpec, EditBackend, EditRequest, RetryPolicy};
use crate::compose::{check_lambda, genmix_single};
use crate::error::{GenMixError, Result};
use crate::filter::{
    cosine_similarity, EmbedBackend, EmbedSpec, Embedding, FilterReport, FilterScope, FilterStats,
    ScopedStats,
};
use crate::fractal::{load_fractal_dir, FractalSet};
use crate::hash::{item_seed, RngStream, StableHasher};
use crate::image::image_load_normalize;
use crate::manifest::{
    load_output_manifest, write_output_manifest, AugmentedRecord, Manifest, ManifestEntry,
};
use crate::mask::{build_sampled_mask, sample_mask_kind, MaskKind};
use crate::prompts::{sample_prompt, PromptLibrary, PromptSet, PromptTask};
use crate::{Image, Mask};

pub const DEFAULT_LAMBDA: f64 = 0.20;
pub const DEFAULT_BLEND_WIDTH: usize = 20;
pub const DEFAULT_PER_IMAGE: u32 = 3;
/// Side length and point count used when rendering the built-in fractals.
pub const BUILTIN_FRACTAL_SIZE: usize = 256;
pub const BUILTIN_FRACTAL_POINTS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FractalSource {
    Builtin,
    Dir(PathBuf),
}

impl std::str::FromStr for FractalSource {
    type Err = GenMixError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(if s == "builtin" {
            FractalSource::Builtin
        } else {
            FractalSource::Dir(PathBuf::from(s))
        })
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub lambda: f64,
    pub blend_width: usize,
    pub per_image_count: u32,
    pub enabled_masks: Vec<MaskKind>,
    pub prompt_task: PromptTask,
    pub seed: u64,
    pub filter_enabled: bool,
    pub filter_scope: FilterScope,
    pub workers: usize,
    pub out_dir: PathBuf,
    pub edit_backend: BackendSpec,
    pub embed_backend: EmbedSpec,
    pub fractals: FractalSource,
    pub retry: RetryPolicy,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            blend_width: DEFAULT_BLEND_WIDTH,
            per_image_count: DEFAULT_PER_IMAGE,
            enabled_masks: MaskKind::ALL.to_vec(),
            prompt_task: PromptTask::InDomain,
            seed: 0,
            filter_enabled: true,
            filter_scope: FilterScope::Global,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            out_dir: PathBuf::from("augmented"),
            edit_backend: BackendSpec::Mock,
            embed_backend: EmbedSpec::Mock,
            fractals: FractalSource::Builtin,
            retry: RetryPolicy::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        if self.per_image_count < 1 {
            return Err(GenMixError::Config(
                "per-image count must be at least 1".into(),
            ));
        }
        if self.enabled_masks.is_empty() {
            return Err(GenMixError::Config("no mask kinds enabled".into()));
        }
        if self.workers < 1 {
            return Err(GenMixError::Config("need at least one worker".into()));
        }
        Ok(())
    }
}

/// Everything a run needs besides its configuration.
pub struct Resources {
    pub prompts: PromptSet,
    pub edit: Arc<dyn EditBackend>,
    pub embed: Arc<dyn EmbedBackend>,
    pub fractals: FractalSet<f64>,
}

impl Resources {
    pub fn from_config(config: &PipelineConfig, library: &PromptLibrary) -> Result<Self> {
        let fractals = match &config.fractals {
            FractalSource::Builtin => {
                FractalSet::builtin(BUILTIN_FRACTAL_SIZE, BUILTIN_FRACTAL_POINTS, config.seed)?
            }
            FractalSource::Dir(dir) => load_fractal_dir(dir)?,
        };
        Ok(Self {
            prompts: library.list_prompts(config.prompt_task),
            edit: config.edit_backend.build_edit(config.retry)?,
            embed: config.embed_backend.build(config.retry)?,
            fractals,
        })
    }
}

/// Result of one run: all records in `(entry order, index)` order, including
/// those carried over from an earlier partial run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<AugmentedRecord>,
    pub new_records: usize,
    pub reused_records: usize,
    pub filter: Option<FilterReport>,
}

/// Serialized append-only writer for records as they complete.
pub struct RecordJournal {
    out: Mutex<BufWriter<File>>,
}

impl RecordJournal {
    pub fn open(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            out: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn append(&self, record: &AugmentedRecord) -> Result<()> {
        let mut w = self.out.lock().unwrap_or_else(|p| p.into_inner());
        serde_json::to_writer(&mut *w, record)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }
}

/// Per-entry embeddings of the originals (`None` where embedding failed)
/// and the thresholds computed from them.
type OriginalEmbeddings = (Vec<Option<Embedding<f64>>>, ScopedStats<f64>);

/// Outcome of one precomputed edit; failures carry `(source_id, prompt_id)`.
type EditOutcome = std::result::Result<(), (String, String)>;

/// A fully composed augmentation before it is written out.
struct Composed {
    record: AugmentedRecord,
    image: Option<Image>,
}

pub struct Pipeline {
    config: PipelineConfig,
    res: Resources,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, res: Resources) -> Result<Self> {
        config.validate()?;
        if res.prompts.is_empty() {
            return Err(GenMixError::Config("prompt set is empty".into()));
        }
        Ok(Self { config, res })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.workers)
            .build()
            .map_err(|e| GenMixError::Config(format!("thread pool: {e}")))
    }

    /// Run over `manifest`, skipping `(source, index)` pairs already present
    /// without error in `existing`.
    pub fn run(
        &self,
        manifest: &Manifest,
        existing: &[AugmentedRecord],
        journal: Option<&RecordJournal>,
    ) -> Result<RunOutput> {
        if manifest.is_empty() {
            return Err(GenMixError::Config("manifest is empty".into()));
        }
        self.res.edit.health()?;
        if self.config.filter_enabled {
            self.res.embed.health()?;
        }
        let pool = self.pool()?;

        let mut kept: Vec<AugmentedRecord> = existing
            .iter()
            .filter(|r| r.error.is_none() && manifest.contains(&r.source_id))
            .cloned()
            .collect();
        let done: HashSet<(String, u32)> = kept
            .iter()
            .map(|r| (r.source_id.clone(), r.index))
            .collect();

        let thresholds = if self.config.filter_enabled {
            Some(pool.install(|| self.original_embeddings(manifest))?)
        } else {
            None
        };
        std::fs::create_dir_all(&self.config.out_dir)?;

        let m = self.config.per_image_count;
        let fresh: Vec<Vec<AugmentedRecord>> = pool.install(|| {
            manifest
                .entries()
                .par_iter()
                .enumerate()
                .map(|(i, entry)| {
                    let pending: Vec<u32> = (1..=m)
                        .filter(|a| !done.contains(&(entry.id.clone(), *a)))
                        .collect();
                    if pending.is_empty() {
                        return Ok(Vec::new());
                    }
                    let filter = thresholds.as_ref().map(|(embs, stats)| (&embs[i], stats));
                    self.process_entry(entry, &pending, filter, journal)
                })
                .collect::<Result<Vec<_>>>()
        })?;

        let new_records = fresh.iter().map(Vec::len).sum();
        let reused_records = kept.len();
        kept.extend(fresh.into_iter().flatten());
        let order: std::collections::HashMap<&str, usize> = manifest
            .entries()
            .iter()
            .enumerate()
            .map(|(i, e)| (e.id.as_str(), i))
            .collect();
        kept.sort_by_key(|r| (order[r.source_id.as_str()], r.index));

        let filter = thresholds.map(|(_, stats)| {
            let judged = kept.iter().filter(|r| r.similarity.is_some());
            let (acc, rej) =
                judged.fold(
                    (0, 0),
                    |(a, r), rec| {
                        if rec.accepted {
                            (a + 1, r)
                        } else {
                            (a, r + 1)
                        }
                    },
                );
            FilterReport::new(&stats.global, acc, rej)
        });

        Ok(RunOutput {
            records: kept,
            new_records,
            reused_records,
            filter,
        })
    }

    /// Run and persist: resumes from `out_manifest` and its `.partial`
    /// journal if present, then writes the ordered manifest and removes the
    /// journal.
    pub fn run_to_files(&self, manifest: &Manifest, out_manifest: &Path) -> Result<RunOutput> {
        let journal_path = journal_path(out_manifest);
        if let Some(dir) = out_manifest.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut existing = Vec::new();
        if out_manifest.exists() {
            existing.extend(load_output_manifest(out_manifest)?);
        }
        if journal_path.exists() {
            existing.extend(load_output_manifest(&journal_path)?);
        }
        let mut seen = HashSet::new();
        existing.retain(|r| r.error.is_none() && seen.insert((r.source_id.clone(), r.index)));

        let journal = RecordJournal::open(&journal_path)?;
        let out = self.run(manifest, &existing, Some(&journal))?;
        drop(journal);
        write_output_manifest(&out.records, out_manifest)?;
        std::fs::remove_file(&journal_path)?;
        Ok(out)
    }

    fn original_embeddings(&self, manifest: &Manifest) -> Result<OriginalEmbeddings> {
        let embs: Vec<Option<Embedding<f64>>> = manifest
            .entries()
            .par_iter()
            .map(|e| {
                let img = image_load_normalize::<f64>(&e.path).ok()?;
                match self.res.embed.embed(&img) {
                    Ok(v) => Some(v),
                    Err(err) => {
                        log::error!("embedding {} failed: {err}", e.id);
                        None
                    }
                }
            })
            .collect();
        let items: Vec<(Option<String>, Embedding<f64>)> = manifest
            .entries()
            .iter()
            .zip(&embs)
            .filter_map(|(e, v)| v.as_ref().map(|v| (e.label.clone(), v.clone())))
            .collect();
        let stats = ScopedStats::compute(&items, self.config.filter_scope)?;
        Ok((embs, stats))
    }

    fn process_entry(
        &self,
        entry: &ManifestEntry,
        indices: &[u32],
        filter: Option<(&Option<Embedding<f64>>, &ScopedStats<f64>)>,
        journal: Option<&RecordJournal>,
    ) -> Result<Vec<AugmentedRecord>> {
        let original = image_load_normalize::<f64>(&entry.path);
        indices
            .par_iter()
            .map(|&a| {
                let seed = item_seed(self.config.seed, &entry.id, a);
                let composed = match (&original, filter) {
                    (Err(e), _) => self.error_record(entry, a, seed, e.to_string()),
                    (Ok(_), Some((None, _))) => {
                        self.error_record(entry, a, seed, "original could not be embedded".into())
                    }
                    (Ok(img), Some((Some(orig), stats))) => {
                        let gate = (orig, stats.for_label(entry.label.as_deref()));
                        self.compose_item(entry, img, a, seed, Some(gate))?
                    }
                    (Ok(img), None) => self.compose_item(entry, img, a, seed, None)?,
                };
                if let Some(img) = &composed.image {
                    let path = composed
                        .record
                        .out_path
                        .as_ref()
                        .expect("composed record has a path");
                    img.save_png(Path::new(path))?;
                }
                if let Some(j) = journal {
                    j.append(&composed.record)?;
                }
                Ok(composed.record)
            })
            .collect()
    }

    /// Recompute the image for `record`. Returns `None` for records that
    /// carry no output.
    pub fn replay(&self, entry: &ManifestEntry, record: &AugmentedRecord) -> Result<Option<Image>> {
        if !record.accepted {
            return Ok(None);
        }
        let original = image_load_normalize::<f64>(&entry.path)?;
        let out = self.compose_item(entry, &original, record.index, record.seed, None)?;
        Ok(out.image)
    }

    fn output_path(&self, id: &str, index: u32) -> PathBuf {
        let safe: String = id
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        let name = if safe == id {
            format!("{safe}_{index}.png")
        } else {
            let tag = StableHasher::new().write_str(id).finish() as u32;
            format!("{safe}-{tag:08x}_{index}.png")
        };
        self.config.out_dir.join(name)
    }

    fn base_record(&self, entry: &ManifestEntry, index: u32, seed: u64) -> AugmentedRecord {
        AugmentedRecord {
            out_path: None,
            source_id: entry.id.clone(),
            index,
            label: entry.label.clone(),
            prompt_id: String::new(),
            mask_kind: MaskKind::Ver,
            fractal_id: String::new(),
            lambda: self.config.lambda,
            blend_width: self.config.blend_width,
            seed,
            accepted: false,
            similarity: None,
            error: None,
        }
    }

    fn error_record(
        &self,
        entry: &ManifestEntry,
        index: u32,
        seed: u64,
        error: String,
    ) -> Composed {
        let mut rng = RngStream::from_seed(seed);
        let prompt = sample_prompt(&mut rng, &self.res.prompts);
        let kind = sample_mask_kind(&mut rng, &self.config.enabled_masks)
            .expect("config validated non-empty masks");
        let fractal = &self.res.fractals.items()[rng.index(self.res.fractals.len())];
        let mut record = self.base_record(entry, index, seed);
        record.prompt_id = prompt.id.clone();
        record.mask_kind = kind;
        record.fractal_id = fractal.fractal_id.clone();
        record.error = Some(error);
        Composed {
            record,
            image: None,
        }
    }

    fn compose_item(
        &self,
        entry: &ManifestEntry,
        original: &Image,
        index: u32,
        seed: u64,
        filter: Option<(&Embedding<f64>, &FilterStats<f64>)>,
    ) -> Result<Composed> {
        let (w, h) = original.dims();
        let mut rng = RngStream::from_seed(seed);
        let prompt = sample_prompt(&mut rng, &self.res.prompts);
        let kind = sample_mask_kind(&mut rng, &self.config.enabled_masks)?;
        let fractal = &self.res.fractals.items()[rng.index(self.res.fractals.len())];
        let mask: Mask = build_sampled_mask(&mut rng, kind, h, w, self.config.blend_width)?;

        let mut record = self.base_record(entry, index, seed);
        record.prompt_id = prompt.id.clone();
        record.mask_kind = kind;
        record.fractal_id = fractal.fractal_id.clone();

        let instruction = prompt.instruction();
        let req = EditRequest::new(original, &instruction, seed, &entry.id, &prompt.id)?;
        let edited = match self.res.edit.edit(&req) {
            Ok(e) => e.image,
            Err(e) => {
                log::error!("edit {}#{index} failed: {e}", entry.id);
                record.error = Some(e.to_string());
                return Ok(Composed {
                    record,
                    image: None,
                });
            }
        };
        if edited.dims() != original.dims() {
            return Err(GenMixError::Protocol(format!(
                "backend {} returned {:?} for a {:?} source",
                self.res.edit.id(),
                edited.dims(),
                original.dims()
            )));
        }

        if let Some((orig, stats)) = filter {
            let sim = self
                .res
                .embed
                .embed(&edited)
                .and_then(|e| cosine_similarity(orig, &e));
            match sim {
                Ok(sim) => {
                    record.similarity = Some(sim);
                    if sim < stats.tau {
                        return Ok(Composed {
                            record,
                            image: None,
                        });
                    }
                }
                Err(e) => {
                    record.error = Some(format!("embedding failed: {e}"));
                    return Ok(Composed {
                        record,
                        image: None,
                    });
                }
            }
        }

        let fractal_img = fractal.image.resize_bilinear(w, h)?;
        let image = genmix_single(original, &edited, &mask, &fractal_img, self.config.lambda)?;
        record.accepted = true;
        record.out_path = Some(
            self.output_path(&entry.id, index)
                .to_string_lossy()
                .into_owned(),
        );
        Ok(Composed {
            record,
            image: Some(image),
        })
    }
}

pub fn journal_path(out_manifest: &Path) -> PathBuf {
    let mut s = out_manifest.as_os_str().to_owned();
    s.push(".partial");
    PathBuf::from(s)
}

/// Run the editor for every (entry, prompt) pair and store the results in
/// the directory-backend layout `{root}/{source_id}/{prompt_id}.png`.
///
/// The edit seed is derived from `(seed, entry id, prompt id)`.
/// Returns the number of images written and the entries that failed.
pub fn precompute_edits(
    manifest: &Manifest,
    prompts: &PromptSet,
    backend: &dyn EditBackend,
    seed: u64,
    root: &Path,
    workers: usize,
) -> Result<(usize, Vec<(String, String)>)> {
    backend.health()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| GenMixError::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<Vec<EditOutcome>>> = pool.install(|| {
        manifest
            .entries()
            .par_iter()
            .map(|entry| {
                let original = image_load_normalize::<f64>(&entry.path)?;
                Ok(prompts
                    .prompts()
                    .par_iter()
                    .map(|p| {
                        let edit_seed = StableHasher::new()
                            .write_u64(seed)
                            .write_str(&entry.id)
                            .write_str(&p.id)
                            .finish();
                        let instruction = p.instruction();
                        let outcome =
                            EditRequest::new(&original, &instruction, edit_seed, &entry.id, &p.id)
                                .and_then(|req| backend.edit(&req))
                                .and_then(|e| {
                                    e.image.save_png(
                                        &crate::backend::DirEditBackend::new(root)
                                            .path_for(&entry.id, &p.id),
                                    )
                                });
                        outcome.map_err(|e| {
                            log::error!("edit ({}, {}) failed: {e}", entry.id, p.id);
                            (entry.id.clone(), p.id.clone())
                        })
                    })
                    .collect())
            })
            .collect()
    });
    let mut written = 0;
    let mut failed = Vec::new();
    for entry in results {
        for r in entry? {
            match r {
                Ok(()) => written += 1,
                Err(pair) => failed.push(pair),
            }
        }
    }
    Ok((written, failed))
}

/// Verdict for one precomputed edit.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EditVerdict {
    pub source_id: String,
    pub prompt_id: String,
    pub similarity: f64,
    pub accepted: bool,
}

/// Filter a directory of precomputed edits against thresholds computed over
/// the manifest's originals.
pub fn filter_edit_dir(
    manifest: &Manifest,
    edits_root: Option<&Path>,
    embed: &dyn EmbedBackend,
    scope: FilterScope,
) -> Result<(FilterReport, Vec<EditVerdict>)> {
    embed.health()?;
    let originals: Vec<(Option<String>, Embedding<f64>, &ManifestEntry)> = manifest
        .entries()
        .par_iter()
        .map(|e| {
            let img = image_load_normalize::<f64>(&e.path)?;
            Ok((e.label.clone(), embed.embed(&img)?, e))
        })
        .collect::<Result<_>>()?;
    let items: Vec<_> = originals
        .iter()
        .map(|(l, v, _)| (l.clone(), v.clone()))
        .collect();
    let stats = ScopedStats::compute(&items, scope)?;

    let mut verdicts = Vec::new();
    if let Some(root) = edits_root {
        for (label, orig, entry) in &originals {
            let dir = root.join(&entry.id);
            if !dir.is_dir() {
                continue;
            }
            let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "png"))
                .collect();
            files.sort();
            for f in files {
                let prompt_id = f
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                let edited = image_load_normalize::<f64>(&f)?;
                let sim = cosine_similarity(orig, &embed.embed(&edited)?)?;
                verdicts.push(EditVerdict {
                    source_id: entry.id.clone(),
                    prompt_id,
                    similarity: sim,
                    accepted: sim >= stats.for_label(label.as_deref()).tau,
                });
            }
        }
    }
    let acc = verdicts.iter().filter(|v| v.accepted).count() as u64;
    let report = FilterReport::new(&stats.global, acc, verdicts.len() as u64 - acc);
    Ok((report, verdicts))
}
