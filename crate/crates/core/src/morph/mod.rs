//! Landmark-based morphing: both sources are piecewise-affinely warped onto
//! the blended landmark set and cross-dissolved.
//!
//! The triangulation is computed once on the intermediate landmarks plus
//! eight frame points, so triangles correspond across both sources and the
//! background is morphed along with the face.

pub mod delaunay;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataprep::{Authenticity, Manifest, PairingPlan, Provenance, Sample};
use crate::error::{Error, Result};
use crate::geometry::{landmark_csv, Landmarks68, Point};
use crate::imageio::{load_rgb, quantize, sample_bilinear, save_png, ImageBuffer};

pub use delaunay::{in_circumcircle, triangulate, triangulate_with_frame};

pub const DEFAULT_ALPHA: f64 = 0.5;

/// Affine map from three point correspondences, `dst -> src`.
#[derive(Clone, Copy, Debug)]
struct Affine([f64; 6]);

impl Affine {
    fn from_triangles(dst: [Point; 3], src: [Point; 3]) -> Option<Affine> {
        let (d0, d1, d2) = (dst[0], dst[1], dst[2]);
        let det = (d1.x - d0.x) * (d2.y - d0.y) - (d2.x - d0.x) * (d1.y - d0.y);
        if det.abs() < 1e-12 {
            return None;
        }
        // barycentric-style solve: src = s0 + (s1 - s0) * u + (s2 - s0) * v
        let inv = 1.0 / det;
        let ux = (d2.y - d0.y) * inv;
        let uy = -(d2.x - d0.x) * inv;
        let vx = -(d1.y - d0.y) * inv;
        let vy = (d1.x - d0.x) * inv;
        let (s0, s1, s2) = (src[0], src[1], src[2]);
        let (e1x, e1y, e2x, e2y) = (s1.x - s0.x, s1.y - s0.y, s2.x - s0.x, s2.y - s0.y);
        let a = e1x * ux + e2x * vx;
        let b = e1x * uy + e2x * vy;
        let c = e1y * ux + e2y * vx;
        let d = e1y * uy + e2y * vy;
        let tx = s0.x - a * d0.x - b * d0.y;
        let ty = s0.y - c * d0.x - d * d0.y;
        Some(Affine([a, b, tx, c, d, ty]))
    }

    #[inline]
    fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.0;
        (m[0] * x + m[1] * y + m[2], m[3] * x + m[4] * y + m[5])
    }
}

/// Morph two images. Returns the morph and the blended landmarks
/// `(1 - alpha) * lm_a + alpha * lm_b`.
pub fn morph(
    img_a: &ImageBuffer,
    lm_a: &Landmarks68,
    img_b: &ImageBuffer,
    lm_b: &Landmarks68,
    alpha: f64,
) -> Result<(ImageBuffer, Landmarks68)> {
    if img_a.dimensions() != img_b.dimensions() {
        return Err(Error::Domain(format!(
            "morph sources differ in size: {:?} vs {:?}",
            img_a.dimensions(),
            img_b.dimensions()
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain(format!("blend alpha {alpha} outside [0, 1]")));
    }
    let (w, h) = img_a.dimensions();
    let lm_m = lm_a.lerp(lm_b, alpha);
    let size = (h, w);
    let (dst, tris) = triangulate_with_frame(lm_m.points(), size)?;
    let src_a = delaunay::with_frame(lm_a.points(), size);
    let src_b = delaunay::with_frame(lm_b.points(), size);

    let mut acc = vec![[0.0f64; 3]; (w * h) as usize];
    let mut filled = vec![false; (w * h) as usize];
    let pick = |pts: &[Point], t: [usize; 3]| [pts[t[0]], pts[t[1]], pts[t[2]]];
    for &t in &tris {
        let d = pick(&dst, t);
        let (Some(to_a), Some(to_b)) = (
            Affine::from_triangles(d, pick(&src_a, t)),
            Affine::from_triangles(d, pick(&src_b, t)),
        ) else {
            continue;
        };
        let min_x = d.iter().map(|p| p.x).fold(f64::INFINITY, f64::min).floor().max(0.0) as u32;
        let max_x = d.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max).ceil().min((w - 1) as f64);
        let min_y = d.iter().map(|p| p.y).fold(f64::INFINITY, f64::min).floor().max(0.0) as u32;
        let max_y = d.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max).ceil().min((h - 1) as f64);
        if max_x < 0.0 || max_y < 0.0 {
            continue;
        }
        let area = delaunay::orient(d[0], d[1], d[2]);
        let eps = -1e-9 * area.abs();
        for y in min_y..=max_y as u32 {
            for x in min_x..=max_x as u32 {
                let idx = (y * w + x) as usize;
                if filled[idx] {
                    continue;
                }
                let p = Point::new(x as f64, y as f64);
                let inside = [(0, 1), (1, 2), (2, 0)]
                    .iter()
                    .all(|&(i, j)| delaunay::orient(d[i], d[j], p) * area.signum() >= eps);
                if !inside {
                    continue;
                }
                let (ax, ay) = to_a.apply(p.x, p.y);
                let (bx, by) = to_b.apply(p.x, p.y);
                let va = sample_bilinear(img_a, ax, ay).unwrap_or_else(|| clamp_sample(img_a, ax, ay));
                let vb = sample_bilinear(img_b, bx, by).unwrap_or_else(|| clamp_sample(img_b, bx, by));
                for c in 0..3 {
                    acc[idx][c] = (1.0 - alpha) * va[c] + alpha * vb[c];
                }
                filled[idx] = true;
            }
        }
    }
    let out = ImageBuffer::from_fn(w, h, |x, y| {
        let idx = (y * w + x) as usize;
        let v = if filled[idx] {
            acc[idx]
        } else {
            // outside every triangle only through rounding at the frame border
            let a = img_a.get_pixel(x, y).0;
            let b = img_b.get_pixel(x, y).0;
            [0, 1, 2].map(|c| (1.0 - alpha) * a[c] as f64 + alpha * b[c] as f64)
        };
        image::Rgb(v.map(quantize))
    });
    Ok((out, lm_m))
}

fn clamp_sample(img: &ImageBuffer, x: f64, y: f64) -> [f64; 3] {
    let (w, h) = img.dimensions();
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    sample_bilinear(img, x, y).expect("clamped point is inside")
}

#[derive(Clone, Debug)]
pub struct MorphOptions {
    pub alpha: f64,
    pub selfmorph_fraction: f64,
    pub seed: u64,
    /// Output files go to `<root>/<prefix>/...`; also used in file names.
    pub prefix: String,
}

impl Default for MorphOptions {
    fn default() -> Self {
        MorphOptions {
            alpha: DEFAULT_ALPHA,
            selfmorph_fraction: 0.0,
            seed: 0,
            prefix: "morphs".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MorphSetReport {
    pub morphs: usize,
    pub selfmorphs: usize,
    /// Self-morphs that could not be built (identity with fewer than 2 images).
    pub skipped_selfmorphs: usize,
}

struct Source {
    image: ImageBuffer,
    lm68: Landmarks68,
}

fn load_source(root: &Path, s: &Sample) -> Result<Source> {
    Ok(Source {
        image: load_rgb(&root.join(&s.path))?,
        lm68: landmark_csv::read_lm68(&root.join(&s.lm68_path), None)?,
    })
}

/// Morph every planned pair plus `ceil(fraction * pairs)` self-morphs.
///
/// Paths in `manifest` are relative to `root`; the new images and landmark
/// files are written under `root/<prefix>/`. The returned manifest lists the
/// originals followed by the morphs and then the self-morphs.
pub fn generate_morph_set(
    root: &Path,
    manifest: &Manifest,
    plan: &PairingPlan,
    opts: &MorphOptions,
) -> Result<(Manifest, MorphSetReport)> {
    plan.validate()?;
    if !(0.0..=1.0).contains(&opts.selfmorph_fraction) {
        return Err(Error::Domain("selfmorph fraction must lie in [0, 1]".into()));
    }
    let mut entries = manifest.entries.clone();
    let mut report = MorphSetReport {
        morphs: 0,
        selfmorphs: 0,
        skipped_selfmorphs: 0,
    };

    for (i, pair) in plan.pairs.iter().enumerate() {
        let a_pool = manifest.bona_fides_of(&pair.first);
        let b_pool = manifest.bona_fides_of(&pair.second);
        if a_pool.is_empty() || b_pool.is_empty() {
            return Err(Error::Integrity(format!(
                "pair ({}, {}) references an identity without images",
                pair.first, pair.second
            )));
        }
        let sa = a_pool[(pair.image_seed_first % a_pool.len() as u64) as usize];
        let sb = b_pool[(pair.image_seed_second % b_pool.len() as u64) as usize];
        let name = format!("{}/{}_{i:05}", opts.prefix, opts.prefix.replace('/', "_"));
        entries.push(write_morph(root, sa, sb, opts.alpha, &name, Authenticity::Morph)?);
        report.morphs += 1;
    }

    let wanted = (opts.selfmorph_fraction * plan.pairs.len() as f64).ceil() as usize;
    if wanted > 0 {
        let mut ids: Vec<&String> = plan.subset_first.iter().chain(&plan.subset_second).collect();
        ids.sort();
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5e1f);
        let mut made = 0;
        let mut cursor = 0;
        let mut consecutive_skips = 0;
        while made < wanted {
            let id = ids[cursor % ids.len()];
            cursor += 1;
            let pool = manifest.bona_fides_of(id);
            if pool.len() < 2 {
                report.skipped_selfmorphs += 1;
                consecutive_skips += 1;
                if consecutive_skips >= ids.len() {
                    log::warn!("no identity has two images; {} self-morphs skipped", wanted - made);
                    report.skipped_selfmorphs = wanted - made;
                    break;
                }
                continue;
            }
            consecutive_skips = 0;
            let ia = rng.gen_range(0..pool.len());
            let mut ib = rng.gen_range(0..pool.len() - 1);
            if ib >= ia {
                ib += 1;
            }
            let name = format!("{}/self_{made:05}", opts.prefix);
            entries.push(write_morph(root, pool[ia], pool[ib], opts.alpha, &name, Authenticity::SelfMorph)?);
            made += 1;
        }
        report.selfmorphs = made;
    }
    if report.skipped_selfmorphs > 0 {
        log::warn!("{} self-morph(s) skipped", report.skipped_selfmorphs);
    }
    Ok((Manifest::new(entries)?, report))
}

fn write_morph(
    root: &Path,
    a: &Sample,
    b: &Sample,
    alpha: f64,
    stem: &str,
    class: Authenticity,
) -> Result<Sample> {
    let (sa, sb) = (load_source(root, a)?, load_source(root, b)?);
    let (img, lm) = morph(&sa.image, &sa.lm68, &sb.image, &sb.lm68, alpha)?;
    let path = format!("{stem}.png");
    let lm5_path = format!("{stem}.lm5.csv");
    let lm68_path = format!("{stem}.lm68.csv");
    save_png(&img, &root.join(&path))?;
    landmark_csv::write_lm5(&root.join(&lm5_path), &path, &lm.to_five())?;
    landmark_csv::write_lm68(&root.join(&lm68_path), &path, &lm)?;
    Ok(Sample {
        path,
        lm5_path,
        lm68_path,
        first_label: a.first_label.clone(),
        second_label: b.first_label.clone(),
        authenticity: class,
        provenance: Provenance::Morph {
            source_a: a.path.clone(),
            source_b: b.path.clone(),
            alpha,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{make_identity, render};

    #[test]
    fn identity_morph() {
        let f = render(&make_identity(1), 1);
        let (m, lm) = morph(&f.image, &f.lm68, &f.image, &f.lm68, 0.5).unwrap();
        assert_eq!(lm, f.lm68);
        for (a, b) in m.pixels().zip(f.image.pixels()) {
            for c in 0..3 {
                assert!((a.0[c] as i32 - b.0[c] as i32).abs() <= 1);
            }
        }
    }

    #[test]
    fn endpoint_alpha_zero() {
        let a = render(&make_identity(1), 1);
        let b = render(&make_identity(2), 5);
        let (m, lm) = morph(&a.image, &a.lm68, &b.image, &b.lm68, 0.0).unwrap();
        assert_eq!(lm, a.lm68);
        for (p, q) in m.pixels().zip(a.image.pixels()) {
            for c in 0..3 {
                assert!((p.0[c] as i32 - q.0[c] as i32).abs() <= 1);
            }
        }
    }

    #[test]
    fn midpoint_landmarks_are_exact_means() {
        let a = render(&make_identity(3), 1);
        let b = render(&make_identity(4), 2);
        let (_, lm) = morph(&a.image, &a.lm68, &b.image, &b.lm68, 0.5).unwrap();
        for ((m, p), q) in lm.points().iter().zip(a.lm68.points()).zip(b.lm68.points()) {
            assert_eq!(m.x, 0.5 * p.x + 0.5 * q.x);
            assert_eq!(m.y, 0.5 * p.y + 0.5 * q.y);
        }
    }

    #[test]
    fn size_mismatch() {
        let a = render(&make_identity(3), 1);
        let small = ImageBuffer::new(10, 10);
        assert!(matches!(
            morph(&a.image, &a.lm68, &small, &a.lm68, 0.5),
            Err(Error::Domain(_))
        ));
    }
}
