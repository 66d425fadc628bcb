//! Seamless concatenation and fractal interpolation.
//!
//! The mask weights the edited image: `H = edited * M + original * (1 - M)`,
//! then `A = lambda * F + (1 - lambda) * H`. Every blend is a convex
//! combination kept inside its operands' range, so output pixels never leave
//! `[min, max]` of the source pixels.

use crate::error::{GenMixError, Result};
use crate::image::{ImageBuf, CHANNELS};
use crate::mask::{MaskBuf, MaskKind};
use crate::scalar::{blend, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct HybridImage<T> {
    pub image: ImageBuf<T>,
    pub mask_kind: MaskKind,
    pub source_id: String,
    pub prompt_id: String,
}

pub fn check_lambda<T: Scalar>(lambda: T) -> Result<()> {
    if lambda.is_finite() && lambda >= T::zero() && lambda < T::one() {
        Ok(())
    } else {
        Err(GenMixError::LambdaOutOfRange(
            lambda.to_f64().unwrap_or(f64::NAN),
        ))
    }
}

fn check_mask<T: Scalar>(image: &ImageBuf<T>, mask: &MaskBuf<T>) -> Result<()> {
    if image.dims() != mask.dims() {
        return Err(GenMixError::DimensionMismatch {
            expected: image.dims(),
            actual: mask.dims(),
        });
    }
    Ok(())
}

/// Per-pixel `edited * M + original * (1 - M)` over all three channels.
pub fn concat_images<T: Scalar>(
    original: &ImageBuf<T>,
    edited: &ImageBuf<T>,
    mask: &MaskBuf<T>,
) -> Result<ImageBuf<T>> {
    original.ensure_same_dims(edited)?;
    check_mask(original, mask)?;
    let data = original
        .data()
        .chunks_exact(CHANNELS)
        .zip(edited.data().chunks_exact(CHANNELS))
        .zip(mask.weights())
        .flat_map(|((o, e), &m)| (0..CHANNELS).map(move |c| blend(e[c], o[c], m)))
        .collect();
    ImageBuf::new(original.width(), original.height(), data)
}

pub fn concat_hybrid<T: Scalar>(
    original: &ImageBuf<T>,
    edited: &ImageBuf<T>,
    mask: &MaskBuf<T>,
    source_id: &str,
    prompt_id: &str,
) -> Result<HybridImage<T>> {
    Ok(HybridImage {
        image: concat_images(original, edited, mask)?,
        mask_kind: mask.kind(),
        source_id: source_id.to_string(),
        prompt_id: prompt_id.to_string(),
    })
}

/// `lambda * fractal + (1 - lambda) * hybrid`
pub fn interpolate_fractal<T: Scalar>(
    hybrid: &ImageBuf<T>,
    fractal: &ImageBuf<T>,
    lambda: T,
) -> Result<ImageBuf<T>> {
    hybrid.ensure_same_dims(fractal)?;
    check_lambda(lambda)?;
    let data = hybrid
        .data()
        .iter()
        .zip(fractal.data())
        .map(|(&h, &f)| blend(f, h, lambda))
        .collect();
    ImageBuf::new(hybrid.width(), hybrid.height(), data)
}

/// Concatenation and fractal interpolation in a single pass, without
/// materializing the hybrid image. Bit-identical to
/// `interpolate_fractal(concat_images(..), fractal, lambda)`.
pub fn genmix_single<T: Scalar>(
    original: &ImageBuf<T>,
    edited: &ImageBuf<T>,
    mask: &MaskBuf<T>,
    fractal: &ImageBuf<T>,
    lambda: T,
) -> Result<ImageBuf<T>> {
    original.ensure_same_dims(edited)?;
    original.ensure_same_dims(fractal)?;
    check_mask(original, mask)?;
    check_lambda(lambda)?;
    let mut data = Vec::with_capacity(original.data().len());
    for (p, &m) in mask.weights().iter().enumerate() {
        let base = p * CHANNELS;
        for c in base..base + CHANNELS {
            let hybrid = blend(edited.data()[c], original.data()[c], m);
            data.push(blend(fractal.data()[c], hybrid, lambda));
        }
    }
    ImageBuf::new(original.width(), original.height(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn px(v: f64) -> ImageBuf<f64> {
        ImageBuf::filled(1, 1, v).unwrap()
    }

    fn mask(v: f64) -> MaskBuf<f64> {
        MaskBuf::constant(1, 1, v, MaskKind::Ver)
    }

    #[test]
    fn all_ones_mask_gives_edited() {
        let o = ImageBuf::from_fn(3, 2, |x, y, c| (x + y + c) as f64 / 10.0).unwrap();
        let e = o.map(|v| 1.0 - v);
        let h = concat_images(&o, &e, &MaskBuf::constant(3, 2, 1.0, MaskKind::Ver)).unwrap();
        assert_eq!(h, e);
        let h = concat_images(&o, &e, &MaskBuf::constant(3, 2, 0.0, MaskKind::Ver)).unwrap();
        assert_eq!(h, o);
    }

    #[test]
    fn half_mask_single_pixel() {
        let h = concat_images(&px(0.8), &px(0.2), &mask(0.5)).unwrap();
        assert!((h.get(0, 0, 0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn interpolation_values() {
        let a = interpolate_fractal(&px(0.5), &px(1.0), 0.2).unwrap();
        assert!((a.get(0, 0, 1) - 0.6).abs() < 1e-12);
        let h = px(0.37);
        assert_eq!(interpolate_fractal(&h, &px(0.9), 0.0).unwrap(), h);
        let a = interpolate_fractal(&px(0.0), &px(1.0), 0.999).unwrap();
        assert!((a.get(0, 0, 0) - 1.0).abs() <= 0.001 + 1e-12);
    }

    #[test]
    fn lambda_range_enforced() {
        assert!(interpolate_fractal(&px(0.5), &px(0.5), 1.0).is_err());
        assert!(interpolate_fractal(&px(0.5), &px(0.5), -0.1).is_err());
        assert!(genmix_single(&px(0.5), &px(0.5), &mask(0.5), &px(0.5), f64::NAN).is_err());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let big = ImageBuf::filled(2, 2, 0.5).unwrap();
        assert!(concat_images(&px(0.1), &big, &mask(0.5)).is_err());
        assert!(concat_images(&big, &big, &mask(0.5)).is_err());
        assert!(interpolate_fractal(&px(0.1), &big, 0.2).is_err());
    }

    #[test]
    fn fused_worked_example() {
        let a = genmix_single(&px(0.8), &px(0.2), &mask(0.5), &px(1.0), 0.2).unwrap();
        assert!((a.get(0, 0, 2) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn equal_operands_cancel_mask() {
        let o = ImageBuf::from_fn(4, 1, |x, _, c| (x * 3 + c) as f64 / 12.0).unwrap();
        let f = ImageBuf::filled(4, 1, 0.25).unwrap();
        let m = crate::mask::build_smooth_mask::<f64>(1, 4, 1, MaskKind::Ver).unwrap();
        let a = genmix_single(&o, &o, &m, &f, 0.2).unwrap();
        let expect = interpolate_fractal(&o, &f, 0.2).unwrap();
        assert_eq!(a, expect);
    }

    #[test]
    fn hybrid_carries_provenance() {
        let h = concat_hybrid(&px(0.1), &px(0.9), &mask(1.0), "img7", "sunset").unwrap();
        assert_eq!(h.mask_kind, MaskKind::Ver);
        assert_eq!(
            (h.source_id.as_str(), h.prompt_id.as_str()),
            ("img7", "sunset")
        );
    }
}
