mod config;

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use genmix::backend::{BackendSpec, RetryPolicy};
use genmix::compose::genmix_single;
use genmix::filter::{EmbedSpec, FilterScope};
use genmix::fractal::{builtin_spec, generate_ifs, sample_fractal, IfsSpec};
use genmix::hash::RngStream;
use genmix::image::image_load_normalize;
use genmix::manifest::{load_manifest, load_output_manifest, Manifest};
use genmix::mask::{build_sampled_mask, parse_mask_list, MaskKind};
use genmix::metrics::{run_stats, OverheadReport, TimingReport};
use genmix::pipeline::{
    filter_edit_dir, precompute_edits, FractalSource, Pipeline, PipelineConfig, Resources,
    BUILTIN_FRACTAL_POINTS, BUILTIN_FRACTAL_SIZE, DEFAULT_BLEND_WIDTH, DEFAULT_LAMBDA,
    DEFAULT_PER_IMAGE,
};
use genmix::prompts::{PromptLibrary, PromptTask};
use genmix::{Image, Mask};
use serde::Serialize;

use config::{pick, FileConfig};

#[derive(Parser)]
#[command(name = "genmix", version, about = "Generative mixing augmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Edit every manifest image under every prompt into a directory layout
    Edit(Common),
    /// Compute filter thresholds over the originals and judge precomputed edits
    Filter {
        #[command(flatten)]
        common: Common,
        /// Root of precomputed edits ({root}/{source_id}/{prompt_id}.png)
        #[arg(long)]
        edits: Option<PathBuf>,
        /// Write per-edit verdicts here as JSON lines
        #[arg(long)]
        verdicts: Option<PathBuf>,
    },
    /// Compose a single augmented image from explicit inputs
    Compose(ComposeArgs),
    /// Edit, filter, mix and blend a whole manifest
    Run(Common),
    /// Fractal utilities
    #[command(subcommand)]
    Fractal(FractalCommand),
    /// Relative augmentation cost in percent
    Overhead(OverheadArgs),
    /// Summarize an output manifest
    Stats {
        #[arg(long)]
        manifest: PathBuf,
        /// Timing report from `run`, echoed into the summary
        #[arg(long)]
        timing: Option<PathBuf>,
    },
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML file whose keys mirror these flags
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    out_manifest: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fractal weight in [0, 1)
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    blend_width: Option<usize>,
    /// Augmentations per source image
    #[arg(long)]
    per_image: Option<u32>,
    /// Comma list from hor, ver, hor_flip, ver_flip, patchswap
    #[arg(long)]
    masks: Option<String>,
    /// in-domain or domain-adaptation
    #[arg(long)]
    prompts: Option<String>,
    /// mock, dir:PATH or http:URL
    #[arg(long)]
    edit_backend: Option<String>,
    /// mock or http:URL
    #[arg(long)]
    embed_backend: Option<String>,
    /// on or off
    #[arg(long)]
    filter: Option<String>,
    /// global or per-class
    #[arg(long)]
    filter_scope: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    /// Directory of fractal images, or "builtin"
    #[arg(long)]
    fractals: Option<String>,
    /// Where `run` writes its wall-clock report
    #[arg(long)]
    timing_report: Option<PathBuf>,
}

/// Flags and config file merged.
struct Resolved {
    manifest: Option<PathBuf>,
    out_manifest: Option<PathBuf>,
    timing_report: Option<PathBuf>,
    pipeline: PipelineConfig,
    library: PromptLibrary,
}

impl Common {
    fn resolve(self) -> anyhow::Result<Resolved> {
        let file = match &self.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let d = PipelineConfig::default();
        let masks = match self.masks.or(file.masks) {
            Some(s) => parse_mask_list(&s)?,
            None => d.enabled_masks.clone(),
        };
        let prompt_task = match self.prompts.or(file.prompts) {
            Some(s) => s.parse::<PromptTask>()?,
            None => d.prompt_task,
        };
        let filter_enabled = match self.filter.or(file.filter).as_deref() {
            None | Some("on") => true,
            Some("off") => false,
            Some(other) => bail!("--filter must be on or off, got {other:?}"),
        };
        let filter_scope = match self.filter_scope.or(file.filter_scope) {
            Some(s) => s.parse::<FilterScope>()?,
            None => d.filter_scope,
        };
        let edit_backend = match self.edit_backend.or(file.edit_backend) {
            Some(s) => s.parse::<BackendSpec>()?,
            None => d.edit_backend.clone(),
        };
        let embed_backend = match self.embed_backend.or(file.embed_backend) {
            Some(s) => s.parse::<EmbedSpec>()?,
            None => d.embed_backend.clone(),
        };
        let fractals = match self.fractals.or(file.fractals) {
            Some(s) => s.parse::<FractalSource>()?,
            None => d.fractals.clone(),
        };
        let pipeline = PipelineConfig {
            lambda: pick(self.lambda, file.lambda, DEFAULT_LAMBDA),
            blend_width: pick(self.blend_width, file.blend_width, DEFAULT_BLEND_WIDTH),
            per_image_count: pick(self.per_image, file.per_image, DEFAULT_PER_IMAGE),
            enabled_masks: masks,
            prompt_task,
            seed: pick(self.seed, file.seed, 0),
            filter_enabled,
            filter_scope,
            workers: pick(self.workers, file.workers, d.workers),
            out_dir: pick(self.out_dir, file.out_dir, d.out_dir.clone()),
            edit_backend,
            embed_backend,
            fractals,
            retry: RetryPolicy::default(),
        };
        pipeline.validate()?;
        Ok(Resolved {
            manifest: self.manifest.or(file.manifest),
            out_manifest: self.out_manifest.or(file.out_manifest),
            timing_report: self.timing_report.or(file.timing_report),
            pipeline,
            library: PromptLibrary::with_extensions(file.custom_prompts)?,
        })
    }
}

impl Resolved {
    fn load_manifest(&self) -> anyhow::Result<Manifest> {
        let path = self.manifest.as_deref().context("--manifest is required")?;
        let (manifest, report) = load_manifest(path)?;
        for rej in &report.rejected {
            log::warn!("line {}: {}: {}", rej.line, rej.id, rej.message);
        }
        Ok(manifest)
    }
}

#[derive(Args)]
struct ComposeArgs {
    #[arg(long)]
    original: PathBuf,
    #[arg(long)]
    edited: PathBuf,
    /// Fractal image; a built-in fractal is drawn from --seed when omitted
    #[arg(long)]
    fractal: Option<PathBuf>,
    #[arg(long, default_value = "ver")]
    mask: MaskKind,
    #[arg(long, default_value_t = DEFAULT_BLEND_WIDTH)]
    blend_width: usize,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
    /// Seeds the PatchSwap rectangle and the built-in fractal draw
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum FractalCommand {
    /// Render an iterated function system
    Gen {
        /// Built-in name or path to a JSON spec
        #[arg(long)]
        spec: String,
        #[arg(long, default_value_t = BUILTIN_FRACTAL_SIZE)]
        size: usize,
        #[arg(long, default_value_t = BUILTIN_FRACTAL_POINTS)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct OverheadArgs {
    /// Seconds with augmentation
    #[arg(long, requires = "t_van", conflicts_with_all = ["aug_report", "van_report"])]
    t_aug: Option<f64>,
    /// Baseline seconds
    #[arg(long, requires = "t_aug")]
    t_van: Option<f64>,
    /// Timing report of the augmented run
    #[arg(long, requires = "van_report")]
    aug_report: Option<PathBuf>,
    /// Timing report of the baseline run
    #[arg(long, requires = "aug_report")]
    van_report: Option<PathBuf>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = dispatch(Cli::parse().command) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{}", serde_json::to_string_pretty(value)?) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Edit(common) => cmd_edit(common.resolve()?),
        Command::Filter {
            common,
            edits,
            verdicts,
        } => cmd_filter(common.resolve()?, edits.as_deref(), verdicts.as_deref()),
        Command::Compose(args) => cmd_compose(args),
        Command::Run(common) => cmd_run(common.resolve()?),
        Command::Fractal(FractalCommand::Gen {
            spec,
            size,
            points,
            seed,
            out,
        }) => cmd_fractal_gen(&spec, size, points, seed, &out),
        Command::Overhead(args) => cmd_overhead(args),
        Command::Stats { manifest, timing } => {
            let records = load_output_manifest(&manifest)?;
            let mut stats = run_stats(&records);
            if let Some(t) = timing {
                stats.wall_seconds = Some(read_timing(&t)?.wall_seconds);
            }
            print_json(&stats)
        }
    }
}

fn cmd_edit(cfg: Resolved) -> anyhow::Result<()> {
    let manifest = cfg.load_manifest()?;
    let prompts = cfg.library.list_prompts(cfg.pipeline.prompt_task);
    let backend = cfg.pipeline.edit_backend.build_edit(cfg.pipeline.retry)?;
    let (written, failed) = precompute_edits(
        &manifest,
        &prompts,
        backend.as_ref(),
        cfg.pipeline.seed,
        &cfg.pipeline.out_dir,
        cfg.pipeline.workers,
    )?;
    print_json(&serde_json::json!({ "written": written, "failed": failed }))?;
    if !failed.is_empty() {
        bail!("{} edits failed", failed.len());
    }
    Ok(())
}

fn cmd_filter(cfg: Resolved, edits: Option<&Path>, verdicts: Option<&Path>) -> anyhow::Result<()> {
    let manifest = cfg.load_manifest()?;
    let embed = cfg.pipeline.embed_backend.build(cfg.pipeline.retry)?;
    let (report, list) =
        filter_edit_dir(&manifest, edits, embed.as_ref(), cfg.pipeline.filter_scope)?;
    if let Some(path) = verdicts {
        let mut text = String::new();
        for v in &list {
            text.push_str(&serde_json::to_string(v)?);
            text.push('\n');
        }
        std::fs::write(path, text)?;
    }
    print_json(&report)
}

fn cmd_compose(args: ComposeArgs) -> anyhow::Result<()> {
    let original = image_load_normalize::<f64>(&args.original)?;
    let edited = image_load_normalize::<f64>(&args.edited)?;
    let (w, h) = original.dims();
    let mut rng = RngStream::from_seed(args.seed);
    let fractal: Image = match &args.fractal {
        Some(p) => image_load_normalize::<f64>(p)?.resize_bilinear(w, h)?,
        None => {
            let set = genmix::FractalSet::builtin(
                BUILTIN_FRACTAL_SIZE,
                BUILTIN_FRACTAL_POINTS,
                args.seed,
            )?;
            sample_fractal(&mut rng, &set, h, w)?.image
        }
    };
    let mask: Mask = build_sampled_mask(&mut rng, args.mask, h, w, args.blend_width)?;
    let out = genmix_single(&original, &edited, &mask, &fractal, args.lambda)?;
    out.save_png(&args.out)?;
    Ok(())
}

fn cmd_run(cfg: Resolved) -> anyhow::Result<()> {
    let manifest = cfg.load_manifest()?;
    let out_manifest = cfg
        .out_manifest
        .clone()
        .unwrap_or_else(|| cfg.pipeline.out_dir.join("augmented.jsonl"));
    let res = Resources::from_config(&cfg.pipeline, &cfg.library)?;
    for w in res.fractals.warnings() {
        log::warn!("{w}");
    }
    let workers = cfg.pipeline.workers;
    let pipeline = Pipeline::new(cfg.pipeline, res)?;

    let start = Instant::now();
    let out = pipeline.run_to_files(&manifest, &out_manifest)?;
    let wall_seconds = start.elapsed().as_secs_f64();

    let mut stats = run_stats(&out.records);
    stats.wall_seconds = Some(wall_seconds);
    stats.filter = out.filter;
    let timing = TimingReport {
        wall_seconds,
        records: stats.total,
        accepted: stats.accepted,
        workers,
    };
    if let Some(path) = &cfg.timing_report {
        std::fs::write(path, serde_json::to_string_pretty(&timing)?)?;
    }
    if stats.errors > 0 {
        log::warn!("{} items failed; rerun to retry them", stats.errors);
    }
    print_json(&stats)
}

fn cmd_fractal_gen(
    spec: &str,
    size: usize,
    points: usize,
    seed: u64,
    out: &Path,
) -> anyhow::Result<()> {
    let spec: IfsSpec = match builtin_spec(spec) {
        Some(s) => s,
        None => {
            let text = std::fs::read_to_string(spec).with_context(|| {
                format!("{spec:?} is neither a built-in fractal nor a readable file")
            })?;
            serde_json::from_str(&text)?
        }
    };
    let f = generate_ifs::<f64>(&spec, size, points, seed)?;
    f.image.save_png(out)?;
    print_json(&serde_json::json!({ "fractal_id": f.fractal_id, "out": out }))
}

fn read_timing(path: &Path) -> anyhow::Result<TimingReport> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

fn cmd_overhead(args: OverheadArgs) -> anyhow::Result<()> {
    let (t_aug, t_van) = match (args.t_aug, args.t_van, &args.aug_report, &args.van_report) {
        (Some(a), Some(v), _, _) => (a, v),
        (_, _, Some(a), Some(v)) => (read_timing(a)?.wall_seconds, read_timing(v)?.wall_seconds),
        _ => bail!("give --t-aug and --t-van, or --aug-report and --van-report"),
    };
    print_json(&OverheadReport::new(t_aug, t_van)?)
}
