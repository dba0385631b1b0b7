//! Grad-CAM heatmaps of the detection logit, face/background masks and the
//! foreground-to-background average gradient intensity ratio (AGIR).

use std::path::Path;

use image::{GrayImage, Luma};
use serde::{Deserialize, Serialize};

use crate::dataprep::Authenticity;
use crate::error::{Error, Result};
use crate::geometry::{convex_hull, Landmarks68, Point};
use crate::model::{DetectionModel, Variant};
use crate::nn::{SpatialStage, Tensor3};

/// Heatmap values at or below this count as inactive in AGIR.
pub const ACTIVE_EPS: f64 = 1e-6;

/// Row-major `h x w` map with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub h: usize,
    pub w: usize,
    pub values: Vec<f64>,
    /// Range of the raw (pre-normalization, low-resolution) map.
    pub raw_min: f64,
    pub raw_max: f64,
}

impl Heatmap {
    pub fn zeros(h: usize, w: usize) -> Self {
        Heatmap {
            h,
            w,
            values: vec![0.0; h * w],
            raw_min: 0.0,
            raw_max: 0.0,
        }
    }

    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.w + x]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.w as u32, self.h as u32, |x, y| {
            Luma([crate::imageio::quantize(self.at(y as usize, x as usize) * 255.0)])
        })
    }

    /// Write `<path>` as 8-bit grayscale and `<path>.json` with `meta`.
    pub fn save(&self, path: &Path, meta: &HeatmapMeta) -> Result<()> {
        crate::imageio::save_gray_png(&self.to_gray(), path)?;
        let side = sidecar_path(path);
        let text = serde_json::to_string_pretty(meta)? + "\n";
        std::fs::write(&side, text).map_err(|e| Error::io(&side, e))
    }
}

pub fn sidecar_path(png: &Path) -> std::path::PathBuf {
    let mut s = png.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapMeta {
    pub raw_min: f64,
    pub raw_max: f64,
    pub target: Authenticity,
    pub alignment: Option<char>,
    pub variant: Variant,
    /// Number of maps averaged (1 for a single image).
    pub count: usize,
}

/// Grad-CAM from last-stage activations and gradients, summed over stages
/// and resized to `size = (h, w)`.
///
/// Channel weights are the spatial means of the gradients; the weighted sum
/// is rectified, bilinearly resized and divided by its maximum (the map is
/// non-negative, so this is min-max scaling with the floor pinned at zero).
pub fn cam_from_stages(stages: &[SpatialStage], size: (usize, usize)) -> Result<Heatmap> {
    let first = stages
        .first()
        .ok_or_else(|| Error::Capability("no spatial stage to attribute".into()))?;
    let (sh, sw) = (first.activations.h, first.activations.w);
    let mut raw = vec![0.0; sh * sw];
    for st in stages {
        let (a, g) = (&st.activations, &st.gradients);
        if a.shape() != g.shape() || (a.h, a.w) != (sh, sw) {
            return Err(Error::Contract("spatial stages disagree on shape".into()));
        }
        let hw = a.h * a.w;
        for k in 0..a.c {
            let wk = g.channel(k).iter().sum::<f64>() / hw as f64;
            if wk == 0.0 {
                continue;
            }
            for (r, v) in raw.iter_mut().zip(a.channel(k)) {
                *r += wk * v;
            }
        }
    }
    let raw_min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let raw_max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for r in &mut raw {
        *r = r.max(0.0);
    }
    let (h, w) = size;
    let mut values = resize_bilinear(&raw, (sh, sw), (h, w));
    let m = values.iter().copied().fold(0.0, f64::max);
    if m > 0.0 {
        for v in &mut values {
            *v = (*v / m).clamp(0.0, 1.0);
        }
    } else {
        values.fill(0.0);
    }
    Ok(Heatmap {
        h,
        w,
        values,
        raw_min,
        raw_max,
    })
}

/// Half-pixel-centered bilinear resize of a single-channel map.
fn resize_bilinear(src: &[f64], (sh, sw): (usize, usize), (h, w): (usize, usize)) -> Vec<f64> {
    let coord = |dst: usize, n_dst: usize, n_src: usize| -> (usize, usize, f64) {
        let s = ((dst as f64 + 0.5) * n_src as f64 / n_dst as f64 - 0.5).clamp(0.0, (n_src - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(n_src - 1);
        (i0, i1, s - i0 as f64)
    };
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        let (y0, y1, fy) = coord(y, h, sh);
        for x in 0..w {
            let (x0, x1, fx) = coord(x, w, sw);
            let top = src[y0 * sw + x0] * (1.0 - fx) + src[y0 * sw + x1] * fx;
            let bot = src[y1 * sw + x0] * (1.0 - fx) + src[y1 * sw + x1] * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

/// Grad-CAM of the detection logit toward `target`: the logit itself for a
/// bona fide target, its negation for a morph target.
pub fn grad_cam<M: DetectionModel + ?Sized>(model: &M, input: &Tensor3, target: Authenticity) -> Result<Heatmap> {
    let sign = if target.target() == crate::dataprep::BONA_FIDE_TARGET {
        1.0
    } else {
        -1.0
    };
    let stages = model.cam_stages(input, sign)?;
    cam_from_stages(&stages, (input.h, input.w))
}

/// Pixel-wise mean of equally sized heatmaps.
pub fn mean_heatmap(maps: &[Heatmap]) -> Result<Heatmap> {
    let first = maps.first().ok_or_else(|| Error::Domain("no heatmaps to average".into()))?;
    let mut out = Heatmap::zeros(first.h, first.w);
    out.raw_min = f64::INFINITY;
    out.raw_max = f64::NEG_INFINITY;
    for m in maps {
        if (m.h, m.w) != (first.h, first.w) {
            return Err(Error::Contract("heatmap sizes differ".into()));
        }
        for (o, v) in out.values.iter_mut().zip(&m.values) {
            *o += v;
        }
        out.raw_min = out.raw_min.min(m.raw_min);
        out.raw_max = out.raw_max.max(m.raw_max);
    }
    let n = maps.len() as f64;
    for o in &mut out.values {
        *o /= n;
    }
    Ok(out)
}

/// Face foreground and its complement over an `h x w` frame.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskPair {
    pub h: usize,
    pub w: usize,
    foreground: Vec<bool>,
}

impl MaskPair {
    pub fn from_foreground(h: usize, w: usize, foreground: Vec<bool>) -> Result<Self> {
        if foreground.len() != h * w {
            return Err(Error::Contract("mask size mismatch".into()));
        }
        Ok(MaskPair { h, w, foreground })
    }

    pub fn is_foreground(&self, y: usize, x: usize) -> bool {
        self.foreground[y * self.w + x]
    }

    pub fn is_background(&self, y: usize, x: usize) -> bool {
        !self.is_foreground(y, x)
    }

    pub fn foreground_count(&self) -> usize {
        self.foreground.iter().filter(|&&f| f).count()
    }

    pub fn background_count(&self) -> usize {
        self.foreground.len() - self.foreground_count()
    }
}

/// Rasterize the convex hull of the 68 landmarks; a pixel is foreground when
/// its center lies inside (boundary included).
pub fn face_masks(lm68: &Landmarks68, size: (u32, u32)) -> MaskPair {
    let (h, w) = (size.0 as usize, size.1 as usize);
    let hull = convex_hull(lm68.points());
    let mut fg = vec![false; h * w];
    if hull.len() >= 3 {
        for y in 0..h {
            for x in 0..w {
                let p = Point::new(x as f64 + 0.5, y as f64 + 0.5);
                fg[y * w + x] = crate::geometry::convex_contains(&hull, p);
            }
        }
    }
    MaskPair { h, w, foreground: fg }
}

/// Foreground-to-background ratio of mean active intensity of the averaged
/// map; `+inf` when only the background is inactive, NaN when the whole map is.
pub fn agir(maps: &[Heatmap], masks: &MaskPair) -> Result<f64> {
    let mean = mean_heatmap(maps)?;
    if (mean.h, mean.w) != (masks.h, masks.w) {
        return Err(Error::Contract(format!(
            "heatmap {}x{} vs masks {}x{}",
            mean.h, mean.w, masks.h, masks.w
        )));
    }
    let (mut fs, mut fc, mut bs, mut bc) = (0.0, 0usize, 0.0, 0usize);
    for (i, &v) in mean.values.iter().enumerate() {
        if v <= ACTIVE_EPS {
            continue;
        }
        if masks.foreground[i] {
            fs += v;
            fc += 1;
        } else {
            bs += v;
            bc += 1;
        }
    }
    let fg = if fc > 0 { fs / fc as f64 } else { 0.0 };
    let bg = if bc > 0 { bs / bc as f64 } else { 0.0 };
    Ok(match (fg == 0.0, bg == 0.0) {
        (true, true) => f64::NAN,
        (false, true) => f64::INFINITY,
        _ => fg / bg,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgirRow {
    pub variant: Variant,
    pub alignment: char,
    pub sample_class: Authenticity,
    pub agir: f64,
}

pub fn agir_csv(rows: &[AgirRow]) -> String {
    let mut s = String::from("variant,alignment,sample_class,agir\n");
    for r in rows {
        let v = if r.agir.is_nan() {
            "nan".to_string()
        } else if r.agir.is_infinite() {
            "inf".to_string()
        } else {
            format!("{:.6}", r.agir)
        };
        s.push_str(&format!("{},{},{},{v}\n", r.variant, r.alignment, r.sample_class.as_str()));
    }
    s
}
