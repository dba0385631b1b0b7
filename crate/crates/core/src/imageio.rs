//! Image loading, saving and sampling helpers on top of [`image::RgbImage`].

use std::path::Path;

use image::{GrayImage, Rgb, RgbImage};

use crate::error::{Error, Result};

/// 8-bit RGB image, row-major.
pub type ImageBuffer = RgbImage;

pub fn load_rgb(path: &Path) -> Result<ImageBuffer> {
    image::open(path)
        .map(|img| img.to_rgb8())
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

pub fn save_png(img: &ImageBuffer, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

pub fn save_gray_png(img: &GrayImage, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

pub(crate) fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    Ok(())
}

/// Bilinear sample at continuous pixel coordinates (pixel centers on integers).
///
/// Returns `None` when the point falls outside the image support; the four
/// taps are clamped to the border once the point itself is inside
/// `[0, w-1] x [0, h-1]`.
#[inline]
pub fn sample_bilinear(img: &ImageBuffer, x: f64, y: f64) -> Option<[f64; 3]> {
    let (w, h) = img.dimensions();
    let (wf, hf) = ((w - 1) as f64, (h - 1) as f64);
    // half-pixel slack so border pixels map onto themselves
    if !(x >= -0.5 && y >= -0.5 && x <= wf + 0.5 && y <= hf + 0.5) {
        return None;
    }
    let x = x.clamp(0.0, wf);
    let y = y.clamp(0.0, hf);
    let x0 = x.floor() as u32;
    let y0 = y.floor() as u32;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let p00 = img.get_pixel(x0, y0).0;
    let p10 = img.get_pixel(x1, y0).0;
    let p01 = img.get_pixel(x0, y1).0;
    let p11 = img.get_pixel(x1, y1).0;
    let mut out = [0.0; 3];
    for c in 0..3 {
        let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
        let bot = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
        out[c] = top * (1.0 - fy) + bot * fy;
    }
    Some(out)
}

#[inline]
pub fn to_rgb8(v: [f64; 3]) -> Rgb<u8> {
    Rgb([quantize(v[0]), quantize(v[1]), quantize(v[2])])
}

#[inline]
pub fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_hits_pixel_centers() {
        let mut img = ImageBuffer::new(3, 2);
        img.put_pixel(1, 1, Rgb([200, 100, 50]));
        assert_eq!(sample_bilinear(&img, 1.0, 1.0), Some([200.0, 100.0, 50.0]));
        let mid = sample_bilinear(&img, 0.5, 1.0).unwrap();
        assert_eq!(mid, [100.0, 50.0, 25.0]);
        assert!(sample_bilinear(&img, -0.6, 0.0).is_none());
        assert!(sample_bilinear(&img, 2.4, 1.4).is_some());
    }
}
