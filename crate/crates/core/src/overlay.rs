//! Diagnostic rendering: the segmentation mask alpha-blended in purple with
//! the bounding box stroked in red, plus side-by-side composition against
//! the original.

use image::{Rgb, RgbImage};
use thiserror::Error;

use crate::segment::SegmentationResult;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OverlayError {
    #[error("result dimensions {rw}x{rh} do not match image {iw}x{ih}")]
    DimensionMismatch { iw: u32, ih: u32, rw: u32, rh: u32 },
}

/// Rendering parameters; the defaults reproduce the standard diagnostic
/// look (half-transparent purple mask, 2 px red box).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlayOptions {
    pub mask_color: [u8; 3],
    pub box_color: [u8; 3],
    pub mask_opacity: f64,
    pub stroke_px: u32,
}

impl Default for OverlayOptions {
    fn default() -> Self {
        Self {
            mask_color: [128, 0, 128],
            box_color: [255, 0, 0],
            mask_opacity: 0.5,
            stroke_px: 2,
        }
    }
}

#[inline]
fn blend(src: u8, overlay: u8, opacity: f64) -> u8 {
    ((1.0 - opacity) * f64::from(src) + opacity * f64::from(overlay)).round() as u8
}

/// Blends the mask over the image and strokes the bounding box. Pixels
/// outside the mask and the box ring are untouched; opacity 0 reproduces
/// the input exactly.
pub fn render_overlay(
    image: &RgbImage,
    result: &SegmentationResult,
    opts: &OverlayOptions,
) -> Result<RgbImage, OverlayError> {
    let (iw, ih) = image.dimensions();
    if result.mask.width != iw || result.mask.height != ih {
        return Err(OverlayError::DimensionMismatch {
            iw,
            ih,
            rw: result.mask.width,
            rh: result.mask.height,
        });
    }

    let mut out = image.clone();
    let opacity = opts.mask_opacity.clamp(0.0, 1.0);
    for y in 0..ih {
        for x in 0..iw {
            if result.mask.get(i64::from(x), i64::from(y)) {
                let Rgb(src) = *out.get_pixel(x, y);
                out.put_pixel(
                    x,
                    y,
                    Rgb([
                        blend(src[0], opts.mask_color[0], opacity),
                        blend(src[1], opts.mask_color[1], opacity),
                        blend(src[2], opts.mask_color[2], opacity),
                    ]),
                );
            }
        }
    }

    // Box ring: a stroke of `stroke_px` width just inside the box.
    let bb = result.bbox;
    let s = opts.stroke_px;
    for y in bb.y..bb.y + bb.h {
        for x in bb.x..bb.x + bb.w {
            let on_ring = x < bb.x + s
                || x >= (bb.x + bb.w).saturating_sub(s)
                || y < bb.y + s
                || y >= (bb.y + bb.h).saturating_sub(s);
            if on_ring {
                out.put_pixel(x, y, Rgb(opts.box_color));
            }
        }
    }
    Ok(out)
}

/// Horizontal concatenation, original left. The shorter image is padded at
/// the bottom with the background color.
pub fn render_side_by_side(
    original: &RgbImage,
    overlay: &RgbImage,
    background: [u8; 3],
) -> RgbImage {
    let height = original.height().max(overlay.height());
    let width = original.width() + overlay.width();
    let mut out = RgbImage::from_pixel(width, height, Rgb(background));
    for (x, y, px) in original.enumerate_pixels() {
        out.put_pixel(x, y, *px);
    }
    for (x, y, px) in overlay.enumerate_pixels() {
        out.put_pixel(x + original.width(), y, *px);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segment::{tight_bbox, trace_contour, BinaryMask, SegmentationResult};

    fn result_with_mask(mask: BinaryMask) -> SegmentationResult {
        SegmentationResult {
            contour: trace_contour(&mask),
            bbox: tight_bbox(&mask).unwrap(),
            area_px: mask.count_set(),
            mask,
            flags: Default::default(),
        }
    }

    fn gradient_image(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| {
            Rgb([(x * 37 % 256) as u8, (y * 53 % 256) as u8, ((x + y) % 256) as u8])
        })
    }

    #[test]
    fn opacity_zero_only_paints_the_box_ring() {
        let img = gradient_image(10, 10);
        let mut mask = BinaryMask::new(10, 10);
        for y in 2..8 {
            for x in 2..8 {
                mask.set(x, y, true);
            }
        }
        let result = result_with_mask(mask);
        let opts = OverlayOptions {
            mask_opacity: 0.0,
            ..Default::default()
        };
        let out = render_overlay(&img, &result, &opts).unwrap();
        // Changed pixels are exactly the 2px ring inside the 6x6 box.
        let mut changed = 0;
        for (x, y, px) in out.enumerate_pixels() {
            if px != img.get_pixel(x, y) {
                changed += 1;
                assert_eq!(px.0, [255, 0, 0]);
            }
        }
        let ring = 6 * 6 - 2 * 2;
        assert_eq!(changed, ring);
    }

    #[test]
    fn closed_form_blend_on_a_three_by_three_mask() {
        let img = gradient_image(5, 5);
        let mut mask = BinaryMask::new(5, 5);
        for y in 1..4 {
            for x in 1..4 {
                mask.set(x, y, true);
            }
        }
        let result = result_with_mask(mask);
        let opts = OverlayOptions::default(); // opacity 0.5, stroke 2
        let out = render_overlay(&img, &result, &opts).unwrap();

        // The 3x3 box with stroke 2 is fully covered by the red ring.
        for y in 1..4u32 {
            for x in 1..4u32 {
                assert_eq!(out.get_pixel(x, y).0, [255, 0, 0]);
            }
        }

        // With a thin stroke the interior blend is the closed-form value.
        let thin = OverlayOptions {
            stroke_px: 1,
            ..Default::default()
        };
        let out = render_overlay(&img, &result, &thin).unwrap();
        let src = img.get_pixel(2, 2).0;
        let expected = [
            ((0.5 * f64::from(src[0]) + 0.5 * 128.0).round()) as u8,
            ((0.5 * f64::from(src[1]) + 0.5 * 0.0).round()) as u8,
            ((0.5 * f64::from(src[2]) + 0.5 * 128.0).round()) as u8,
        ];
        assert_eq!(out.get_pixel(2, 2).0, expected);
    }

    #[test]
    fn full_mask_full_opacity_saturates_the_box_region() {
        let img = gradient_image(6, 6);
        let mut mask = BinaryMask::new(6, 6);
        for y in 0..6 {
            for x in 0..6 {
                mask.set(x, y, true);
            }
        }
        let result = result_with_mask(mask);
        let opts = OverlayOptions {
            mask_opacity: 1.0,
            ..Default::default()
        };
        let out = render_overlay(&img, &result, &opts).unwrap();
        for (_, _, px) in out.enumerate_pixels() {
            assert!(
                px.0 == [128, 0, 128] || px.0 == [255, 0, 0],
                "unexpected pixel {:?}",
                px.0
            );
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let img = gradient_image(4, 4);
        let mut mask = BinaryMask::new(5, 5);
        mask.set(1, 1, true);
        let result = result_with_mask(mask);
        assert!(matches!(
            render_overlay(&img, &result, &OverlayOptions::default()),
            Err(OverlayError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn side_by_side_concatenates_and_pads() {
        let a = gradient_image(4, 4);
        let b = gradient_image(4, 4);
        let out = render_side_by_side(&a, &b, [0, 0, 0]);
        assert_eq!(out.dimensions(), (8, 4));
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(out.get_pixel(x, y), a.get_pixel(x, y));
                assert_eq!(out.get_pixel(x + 4, y), b.get_pixel(x, y));
            }
        }

        let short = gradient_image(3, 3);
        let out = render_side_by_side(&a, &short, [9, 9, 9]);
        assert_eq!(out.dimensions(), (7, 4));
        assert_eq!(out.get_pixel(5, 3).0, [9, 9, 9], "padded area uses background");
    }
}
