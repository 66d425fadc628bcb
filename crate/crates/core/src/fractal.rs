//! Self-similar fractal images, rendered from iterated function systems or
//! loaded from disk.

use std::fmt;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GenMixError, Result};
use crate::hash::RngStream;
use crate::image::{image_load_normalize, ImageBuf};
use crate::scalar::Scalar;

pub const MIN_POINTS: usize = 10_000;
/// Transient iterations dropped before plotting.
pub const DISCARD: usize = 100;

/// `(x, y) -> (a x + b y + e, c x + d y + f)`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

impl AffineMap {
    pub const fn new(a: f64, b: f64, c: f64, d: f64, e: f64, f: f64) -> Self {
        Self { a, b, c, d, e, f }
    }

    #[inline]
    pub fn apply(&self, (x, y): (f64, f64)) -> (f64, f64) {
        (
            self.a * x + self.b * y + self.e,
            self.c * x + self.d * y + self.f,
        )
    }

    /// Largest singular value of the linear part.
    pub fn operator_norm(&self) -> f64 {
        let (a, b, c, d) = (self.a, self.b, self.c, self.d);
        let s = a * a + b * b + c * c + d * d;
        let det = a * d - b * c;
        let disc = (s * s - 4.0 * det * det).max(0.0).sqrt();
        ((s + disc) / 2.0).sqrt()
    }

    /// The unique fixed point of a contraction.
    pub fn fixed_point(&self) -> (f64, f64) {
        // (I - L) p = t
        let (m11, m12, m21, m22) = (1.0 - self.a, -self.b, -self.c, 1.0 - self.d);
        let det = m11 * m22 - m12 * m21;
        (
            (self.e * m22 - m12 * self.f) / det,
            (m11 * self.f - m21 * self.e) / det,
        )
    }
}

/// Three-stop color ramp: background, mid density, peak density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    pub stops: [[f64; 3]; 3],
}

impl Palette {
    fn color(&self, t: f64) -> [f64; 3] {
        let (lo, hi, u) = if t <= 0.5 {
            (self.stops[0], self.stops[1], t * 2.0)
        } else {
            (self.stops[1], self.stops[2], (t - 0.5) * 2.0)
        };
        [0, 1, 2].map(|c| (lo[c] + (hi[c] - lo[c]) * u).clamp(0.0, 1.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IfsSpec {
    pub name: String,
    pub maps: Vec<AffineMap>,
    pub weights: Vec<f64>,
    pub palette: Palette,
}

impl IfsSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |message: String| {
            Err(GenMixError::InvalidIfs {
                name: self.name.clone(),
                message,
            })
        };
        if self.maps.is_empty() {
            return bad("no maps".into());
        }
        if self.maps.len() != self.weights.len() {
            return bad(format!(
                "{} maps but {} weights",
                self.maps.len(),
                self.weights.len()
            ));
        }
        for (i, m) in self.maps.iter().enumerate() {
            let norm = m.operator_norm();
            if norm.is_nan() || norm >= 1.0 {
                return bad(format!("map {i} is not contractive (norm {norm:.4})"));
            }
        }
        if self.weights.iter().any(|&w| !w.is_finite() || w <= 0.0) {
            return bad("weights must be positive".into());
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("weights sum to {total}, not 1"));
        }
        Ok(())
    }

    /// A disc `(center, radius)` that every map sends into itself.
    ///
    /// With fixed points `p_i`, Lipschitz constants `s_i` and `c` the mean of
    /// the `p_i`, any `R >= (1 + s_i) |p_i - c| / (1 - s_i)` for all `i` works.
    pub fn invariant_disc(&self) -> ((f64, f64), f64) {
        let fixed: Vec<(f64, f64)> = self.maps.iter().map(AffineMap::fixed_point).collect();
        let n = fixed.len() as f64;
        let cx = fixed.iter().map(|p| p.0).sum::<f64>() / n;
        let cy = fixed.iter().map(|p| p.1).sum::<f64>() / n;
        let radius = self
            .maps
            .iter()
            .zip(&fixed)
            .map(|(m, p)| {
                let s = m.operator_norm();
                (1.0 + s) * (p.0 - cx).hypot(p.1 - cy) / (1.0 - s)
            })
            .fold(0.0, f64::max);
        ((cx, cy), radius)
    }
}

impl fmt::Display for IfsSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} maps)", self.name, self.maps.len())
    }
}

/// Chaos-game orbit: `points` plotted positions after [`DISCARD`] warm-up
/// steps, starting from the center of the invariant disc.
pub fn chaos_game(spec: &IfsSpec, points: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    spec.validate()?;
    let mut cumulative = Vec::with_capacity(spec.weights.len());
    let mut acc = 0.0;
    for w in &spec.weights {
        acc += w;
        cumulative.push(acc);
    }
    let last = spec.maps.len() - 1;
    let mut rng = RngStream::from_seed(seed);
    let (mut p, _) = spec.invariant_disc();
    let mut out = Vec::with_capacity(points);
    for i in 0..points + DISCARD {
        let u: f64 = rng.rng().random();
        let k = cumulative.iter().position(|&c| u < c).unwrap_or(last);
        p = spec.maps[k].apply(p);
        if i >= DISCARD {
            out.push(p);
        }
    }
    Ok(out)
}

/// Hit counts on a `size x size` grid, row 0 at the top.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Density {
    pub size: usize,
    pub counts: Vec<u32>,
}

impl Density {
    /// Rasterize points into a square grid fitted to their bounding box,
    /// aspect ratio preserved and centered.
    pub fn accumulate(points: &[(f64, f64)], size: usize) -> Self {
        let mut counts = vec![0u32; size * size];
        if points.is_empty() || size == 0 {
            return Self { size, counts };
        }
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for &(x, y) in points {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        let span = (x1 - x0).max(y1 - y0).max(f64::MIN_POSITIVE);
        let scale = (size as f64 - 1e-9) / span;
        let ox = (size as f64 - (x1 - x0) * scale) / 2.0;
        let oy = (size as f64 - (y1 - y0) * scale) / 2.0;
        for &(x, y) in points {
            let px = (((x - x0) * scale + ox) as usize).min(size - 1);
            let py = (((y1 - y) * scale + oy) as usize).min(size - 1);
            counts[py * size + px] = counts[py * size + px].saturating_add(1);
        }
        Self { size, counts }
    }

    pub fn occupied(&self) -> impl Iterator<Item = bool> + '_ {
        self.counts.iter().map(|&c| c > 0)
    }

    /// `ln(1 + d) / ln(1 + max)` mapped through the palette.
    pub fn tone_map<T: Scalar>(&self, palette: &Palette) -> Result<ImageBuf<T>> {
        let max = self.counts.iter().copied().max().unwrap_or(0);
        let denom = (1.0 + max as f64).ln();
        ImageBuf::from_fn(self.size, self.size, |x, y, c| {
            let d = self.counts[y * self.size + x];
            let t = if d == 0 || denom == 0.0 {
                0.0
            } else {
                (1.0 + d as f64).ln() / denom
            };
            T::lit(palette.color(t)[c])
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FractalImage<T> {
    pub image: ImageBuf<T>,
    pub fractal_id: String,
}

/// Render `spec` as a `size x size` image. Deterministic in all arguments.
pub fn generate_ifs<T: Scalar>(
    spec: &IfsSpec,
    size: usize,
    points: usize,
    seed: u64,
) -> Result<FractalImage<T>> {
    if points < MIN_POINTS {
        return Err(GenMixError::Config(format!(
            "need at least {MIN_POINTS} points, got {points}"
        )));
    }
    let pts = chaos_game(spec, points, seed)?;
    let image = Density::accumulate(&pts, size).tone_map(&spec.palette)?;
    Ok(FractalImage {
        image,
        fractal_id: format!("{}@{seed}", spec.name),
    })
}

const WARM: Palette = Palette {
    stops: [[0.02, 0.02, 0.06], [0.85, 0.25, 0.10], [1.0, 0.95, 0.55]],
};
const FOREST: Palette = Palette {
    stops: [[0.0, 0.03, 0.0], [0.10, 0.55, 0.15], [0.80, 1.0, 0.60]],
};
const OCEAN: Palette = Palette {
    stops: [[0.0, 0.0, 0.05], [0.10, 0.35, 0.85], [0.75, 0.95, 1.0]],
};
const VIOLET: Palette = Palette {
    stops: [[0.03, 0.0, 0.04], [0.55, 0.15, 0.70], [1.0, 0.80, 0.95]],
};

pub fn sierpinski() -> IfsSpec {
    IfsSpec {
        name: "sierpinski".into(),
        maps: vec![
            AffineMap::new(0.5, 0.0, 0.0, 0.5, 0.0, 0.0),
            AffineMap::new(0.5, 0.0, 0.0, 0.5, 0.5, 0.0),
            AffineMap::new(0.5, 0.0, 0.0, 0.5, 0.25, 0.5 * 3f64.sqrt() / 2.0),
        ],
        weights: vec![1.0 / 3.0; 3],
        palette: WARM,
    }
}

pub fn barnsley_fern() -> IfsSpec {
    IfsSpec {
        name: "barnsley-fern".into(),
        maps: vec![
            AffineMap::new(0.0, 0.0, 0.0, 0.16, 0.0, 0.0),
            AffineMap::new(0.85, 0.04, -0.04, 0.85, 0.0, 1.6),
            AffineMap::new(0.2, -0.26, 0.23, 0.22, 0.0, 1.6),
            AffineMap::new(-0.15, 0.28, 0.26, 0.24, 0.0, 0.44),
        ],
        weights: vec![0.01, 0.85, 0.07, 0.07],
        palette: FOREST,
    }
}

/// Heighway dragon.
pub fn dragon() -> IfsSpec {
    IfsSpec {
        name: "dragon".into(),
        maps: vec![
            AffineMap::new(0.5, -0.5, 0.5, 0.5, 0.0, 0.0),
            AffineMap::new(-0.5, -0.5, 0.5, -0.5, 1.0, 0.0),
        ],
        weights: vec![0.5, 0.5],
        palette: OCEAN,
    }
}

pub fn vicsek() -> IfsSpec {
    let t = 2.0 / 3.0;
    let s = 1.0 / 3.0;
    IfsSpec {
        name: "vicsek".into(),
        maps: vec![
            AffineMap::new(s, 0.0, 0.0, s, 0.0, 0.0),
            AffineMap::new(s, 0.0, 0.0, s, t, 0.0),
            AffineMap::new(s, 0.0, 0.0, s, s, s),
            AffineMap::new(s, 0.0, 0.0, s, 0.0, t),
            AffineMap::new(s, 0.0, 0.0, s, t, t),
        ],
        weights: vec![0.2; 5],
        palette: VIOLET,
    }
}

/// Random contractive system: each map is a rotation, an anisotropic scale
/// in `[0.25, 0.65]` and a translation in `[-1, 1]^2`; weights follow
/// `|det|`.
pub fn random_affine(name: &str, n_maps: usize, seed: u64, palette: Palette) -> IfsSpec {
    let mut rng = RngStream::from_seed(seed);
    let mut maps = Vec::with_capacity(n_maps);
    for _ in 0..n_maps {
        let theta = rng.uniform(0.0, std::f64::consts::TAU);
        let (sx, sy) = (rng.uniform(0.25, 0.65), rng.uniform(0.25, 0.65));
        let (sin, cos) = theta.sin_cos();
        maps.push(AffineMap::new(
            cos * sx,
            -sin * sy,
            sin * sx,
            cos * sy,
            rng.uniform(-1.0, 1.0),
            rng.uniform(-1.0, 1.0),
        ));
    }
    let dets: Vec<f64> = maps.iter().map(|m| (m.a * m.d - m.b * m.c).abs()).collect();
    let total: f64 = dets.iter().sum();
    let mut weights: Vec<f64> = dets.iter().map(|d| d / total).collect();
    // Absorb rounding so the weights sum to exactly 1.
    let head: f64 = weights[..n_maps - 1].iter().sum();
    weights[n_maps - 1] = 1.0 - head;
    IfsSpec {
        name: name.into(),
        maps,
        weights,
        palette,
    }
}

/// The six systems shipped with the crate.
pub fn builtin_specs() -> Vec<IfsSpec> {
    vec![
        sierpinski(),
        barnsley_fern(),
        dragon(),
        random_affine("random-affine-a", 3, 0x5eed_0001, OCEAN),
        random_affine("random-affine-b", 4, 0x5eed_0002, WARM),
        vicsek(),
    ]
}

pub fn builtin_spec(name: &str) -> Option<IfsSpec> {
    builtin_specs().into_iter().find(|s| s.name == name)
}

/// Ordered, immutable collection of fractal images.
#[derive(Debug, Clone, PartialEq)]
pub struct FractalSet<T> {
    items: Vec<FractalImage<T>>,
    warnings: Vec<String>,
}

impl<T: Scalar> FractalSet<T> {
    pub fn new(items: Vec<FractalImage<T>>) -> Result<Self> {
        if items.is_empty() {
            return Err(GenMixError::Config("fractal set is empty".into()));
        }
        Ok(Self {
            items,
            warnings: Vec::new(),
        })
    }

    /// Render every built-in system once.
    pub fn builtin(size: usize, points: usize, seed: u64) -> Result<Self> {
        let items = builtin_specs()
            .iter()
            .map(|s| generate_ifs(s, size, points, seed))
            .collect::<Result<Vec<_>>>()?;
        Self::new(items)
    }

    pub fn items(&self) -> &[FractalImage<T>] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Files that were skipped while loading.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
}

/// Load every decodable image in `dir`, sorted by file name. Undecodable
/// files are skipped with a warning.
pub fn load_fractal_dir<T: Scalar>(dir: &Path) -> Result<FractalSet<T>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    let mut items = Vec::new();
    let mut warnings = Vec::new();
    for path in paths {
        match image_load_normalize::<T>(&path) {
            Ok(image) => items.push(FractalImage {
                image,
                fractal_id: path
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default(),
            }),
            Err(e) => {
                log::warn!("skipping fractal {}: {e}", path.display());
                warnings.push(format!("{}: {e}", path.display()));
            }
        }
    }
    if items.is_empty() {
        return Err(GenMixError::NoFractals(dir.to_path_buf()));
    }
    Ok(FractalSet { items, warnings })
}

/// Uniform choice, bilinearly resized to `target_w x target_h`.
pub fn sample_fractal<T: Scalar>(
    rng: &mut RngStream,
    set: &FractalSet<T>,
    target_h: usize,
    target_w: usize,
) -> Result<FractalImage<T>> {
    let chosen = &set.items[rng.index(set.items.len())];
    Ok(FractalImage {
        image: chosen.image.resize_bilinear(target_w, target_h)?,
        fractal_id: chosen.fractal_id.clone(),
    })
}
