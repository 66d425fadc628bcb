//! Smooth concatenation masks and PatchSwap masks.
//!
//! A smooth mask is `[zeros | ramp | ones]` along its seam axis and constant
//! across the other axis. `ver` masks vary along x (a vertical seam), `hor`
//! masks vary along y. The `_flip` kinds are the same profile reversed.
//! For an odd `L - b` the zero block gets the floor of the split and the one
//! block the ceiling.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GenMixError, Result};
use crate::hash::RngStream;
use crate::scalar::Scalar;

/// Seam-axis extent from which the configured blend width is used as-is.
pub const FULL_BLEND_MIN_EXTENT: usize = 64;

/// Range of the PatchSwap rectangle side, as a fraction of the image side.
pub const PATCH_SIDE_RATIO: (f64, f64) = (0.4, 0.8);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    Hor,
    Ver,
    HorFlip,
    VerFlip,
    PatchswapIn,
    PatchswapOut,
}

impl MaskKind {
    pub const ALL: [MaskKind; 6] = [
        MaskKind::Hor,
        MaskKind::Ver,
        MaskKind::HorFlip,
        MaskKind::VerFlip,
        MaskKind::PatchswapIn,
        MaskKind::PatchswapOut,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MaskKind::Hor => "hor",
            MaskKind::Ver => "ver",
            MaskKind::HorFlip => "hor_flip",
            MaskKind::VerFlip => "ver_flip",
            MaskKind::PatchswapIn => "patchswap_in",
            MaskKind::PatchswapOut => "patchswap_out",
        }
    }

    pub fn is_patchswap(self) -> bool {
        matches!(self, MaskKind::PatchswapIn | MaskKind::PatchswapOut)
    }

    fn is_flipped(self) -> bool {
        matches!(self, MaskKind::HorFlip | MaskKind::VerFlip)
    }

    /// Seam axis varies along x.
    fn along_x(self) -> bool {
        matches!(self, MaskKind::Ver | MaskKind::VerFlip)
    }
}

impl fmt::Display for MaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MaskKind {
    type Err = GenMixError;

    fn from_str(s: &str) -> Result<Self> {
        MaskKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| GenMixError::Config(format!("unknown mask kind {s:?}")))
    }
}

/// Parse a comma list such as `hor,ver,patchswap`. `patchswap` enables both
/// PatchSwap variants.
pub fn parse_mask_list(s: &str) -> Result<Vec<MaskKind>> {
    let mut set = BTreeSet::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if part == "patchswap" {
            set.insert(MaskKind::PatchswapIn);
            set.insert(MaskKind::PatchswapOut);
        } else {
            set.insert(part.parse::<MaskKind>()?);
        }
    }
    if set.is_empty() {
        return Err(GenMixError::Config("mask list is empty".into()));
    }
    Ok(set.into_iter().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl PatchRect {
    fn check(&self, h: usize, w: usize) -> Result<()> {
        let fits = self.width > 0
            && self.height > 0
            && self.x + self.width <= w
            && self.y + self.height <= h
            && self.width * self.height < w * h;
        if fits {
            Ok(())
        } else {
            Err(GenMixError::PatchOutOfBounds(*self))
        }
    }
}

/// Per-pixel weight grid in `[0, 1]`, broadcast over the three channels.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskBuf<T> {
    width: usize,
    height: usize,
    weights: Vec<T>,
    kind: MaskKind,
    blend_width: usize,
    rect: Option<PatchRect>,
}

impl<T: Scalar> MaskBuf<T> {
    /// A mask with every weight equal to `value` (used for identity paths).
    pub fn constant(width: usize, height: usize, value: T, kind: MaskKind) -> Self {
        Self {
            width,
            height,
            weights: vec![value.clamp_unit(); width * height],
            kind,
            blend_width: 0,
            rect: None,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn blend_width(&self) -> usize {
        self.blend_width
    }

    pub fn rect(&self) -> Option<PatchRect> {
        self.rect
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.weights[y * self.width + x]
    }

    /// `1 - w` per pixel.
    pub fn complement_weights(&self) -> Vec<T> {
        self.weights.iter().map(|&w| T::one() - w).collect()
    }
}

/// `b` interior ramp values `(k + 1) / (b + 1)`; endpoints 0 and 1 belong to
/// the plateaus.
pub fn blend_ramp<T: Scalar>(b: usize) -> Vec<T> {
    let denom = T::from_usize_exact(b + 1);
    (0..b).map(|k| T::from_usize_exact(k + 1) / denom).collect()
}

fn seam_profile<T: Scalar>(extent: usize, b: usize, flipped: bool) -> Result<Vec<T>> {
    if b + 1 >= extent {
        return Err(GenMixError::BlendWidthTooLarge {
            blend_width: b,
            extent,
        });
    }
    let zeros = (extent - b) / 2;
    let ones = extent - b - zeros;
    let mut profile = Vec::with_capacity(extent);
    profile.extend(std::iter::repeat_n(T::zero(), zeros));
    profile.extend(blend_ramp::<T>(b));
    profile.extend(std::iter::repeat_n(T::one(), ones));
    if flipped {
        profile.reverse();
    }
    Ok(profile)
}

pub fn build_smooth_mask<T: Scalar>(
    h: usize,
    w: usize,
    b: usize,
    kind: MaskKind,
) -> Result<MaskBuf<T>> {
    if kind.is_patchswap() {
        return Err(GenMixError::Config(format!(
            "{kind} is not a smooth mask kind"
        )));
    }
    if h == 0 || w == 0 {
        return Err(GenMixError::EmptyImage {
            width: w,
            height: h,
        });
    }
    let along_x = kind.along_x();
    let profile = seam_profile::<T>(if along_x { w } else { h }, b, kind.is_flipped())?;
    let mut weights = Vec::with_capacity(h * w);
    for y in 0..h {
        if along_x {
            weights.extend_from_slice(&profile);
        } else {
            weights.extend(std::iter::repeat_n(profile[y], w));
        }
    }
    Ok(MaskBuf {
        width: w,
        height: h,
        weights,
        kind,
        blend_width: b,
        rect: None,
    })
}

/// `(patchswap_in, patchswap_out)` for `rect`.
///
/// Inside the rectangle each axis contributes a ramp over its distance to
/// the nearest rectangle edge; the weight is the smaller of the two. Pixels
/// at least `b` in from every edge weigh 1, pixels outside weigh 0.
pub fn build_patchswap_masks<T: Scalar>(
    h: usize,
    w: usize,
    rect: PatchRect,
    b: usize,
) -> Result<(MaskBuf<T>, MaskBuf<T>)> {
    rect.check(h, w)?;
    let limit = rect.width.min(rect.height) / 2;
    if b > limit {
        return Err(GenMixError::BlendWidthTooLarge {
            blend_width: b,
            extent: rect.width.min(rect.height),
        });
    }
    let ramp = blend_ramp::<T>(b);
    let axis_weight = |pos: usize, start: usize, len: usize| -> T {
        let d = (pos - start).min(start + len - 1 - pos);
        if d >= b {
            T::one()
        } else {
            ramp[d]
        }
    };
    let mut weights = vec![T::zero(); h * w];
    for y in rect.y..rect.y + rect.height {
        let wy = axis_weight(y, rect.y, rect.height);
        for x in rect.x..rect.x + rect.width {
            let wx = axis_weight(x, rect.x, rect.width);
            weights[y * w + x] = wx.min(wy);
        }
    }
    let inner = MaskBuf {
        width: w,
        height: h,
        weights,
        kind: MaskKind::PatchswapIn,
        blend_width: b,
        rect: Some(rect),
    };
    let outer = MaskBuf {
        weights: inner.complement_weights(),
        kind: MaskKind::PatchswapOut,
        ..inner.clone()
    };
    Ok((inner, outer))
}

/// Blend width actually used on a seam axis of length `extent`.
///
/// The configured width applies from [`FULL_BLEND_MIN_EXTENT`] pixels up;
/// smaller images use `max(2, round(extent / 10))`. The result is always
/// buildable, i.e. at most `extent - 2`.
pub fn effective_blend_width(requested: usize, extent: usize) -> usize {
    let b = if extent >= FULL_BLEND_MIN_EXTENT {
        requested
    } else {
        requested.min((((extent as f64) / 10.0).round() as usize).max(2))
    };
    b.min(extent.saturating_sub(2))
}

/// Draw a kind uniformly from `enabled`, then build it for an `h x w` image.
pub fn sample_mask<T: Scalar>(
    rng: &mut RngStream,
    h: usize,
    w: usize,
    b: usize,
    enabled: &[MaskKind],
) -> Result<MaskBuf<T>> {
    let kind = sample_mask_kind(rng, enabled)?;
    build_sampled_mask(rng, kind, h, w, b)
}

pub fn sample_mask_kind(rng: &mut RngStream, enabled: &[MaskKind]) -> Result<MaskKind> {
    if enabled.is_empty() {
        return Err(GenMixError::Config("no mask kinds enabled".into()));
    }
    Ok(enabled[rng.index(enabled.len())])
}

/// Build a mask of a known kind. PatchSwap kinds draw their rectangle from
/// `rng`; smooth kinds draw nothing.
///
/// Smooth masks use [`effective_blend_width`] on their seam axis. PatchSwap
/// borders use the same policy on the shorter image side, capped at half the
/// shorter rectangle side.
pub fn build_sampled_mask<T: Scalar>(
    rng: &mut RngStream,
    kind: MaskKind,
    h: usize,
    w: usize,
    b: usize,
) -> Result<MaskBuf<T>> {
    if !kind.is_patchswap() {
        let extent = if kind.along_x() { w } else { h };
        return build_smooth_mask(h, w, effective_blend_width(b, extent), kind);
    }
    let rect = sample_patch_rect(rng, h, w)?;
    let b = effective_blend_width(b, h.min(w)).min(rect.width.min(rect.height) / 2);
    let (inner, outer) = build_patchswap_masks(h, w, rect, b)?;
    Ok(if kind == MaskKind::PatchswapIn {
        inner
    } else {
        outer
    })
}

fn sample_patch_rect(rng: &mut RngStream, h: usize, w: usize) -> Result<PatchRect> {
    if h < 2 && w < 2 {
        return Err(GenMixError::Config(
            "image too small for a PatchSwap rectangle".into(),
        ));
    }
    let side = |rng: &mut RngStream, extent: usize| -> usize {
        let ratio = rng.uniform(PATCH_SIDE_RATIO.0, PATCH_SIDE_RATIO.1);
        ((ratio * extent as f64).round() as usize).clamp(1, extent)
    };
    let mut width = side(rng, w);
    let mut height = side(rng, h);
    if width == w && height == h {
        if w >= h {
            width -= 1;
        } else {
            height -= 1;
        }
    }
    let x = rng.range_inclusive(0, w - width);
    let y = rng.range_inclusive(0, h - height);
    Ok(PatchRect {
        x,
        y,
        width,
        height,
    })
}
