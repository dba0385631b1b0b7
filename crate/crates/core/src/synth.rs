//! Procedural toy faces with analytically known 5- and 68-point landmarks.
//!
//! Faces are flat geometric drawings (ellipse face, brows, eyes with irises,
//! nose wedge, mouth curve) plus an identity-specific freckle pattern. The
//! freckles follow the face geometry, so a landmark morph of two different
//! identities superimposes two half-contrast patterns while a self-morph
//! keeps a single full-contrast one.
//!
//! Six geometric parameters are placed on a 5-level lattice indexed by a
//! bijective scramble of the identity seed; two seeds that differ modulo
//! [`LATTICE_PERIOD`] therefore differ by at least [`SEPARABILITY_FLOOR`]
//! pixels in one of them.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataprep::{Authenticity, Manifest, Provenance, Sample};
use crate::error::{Error, Result};
use crate::geometry::{landmark_csv, Landmarks5, Landmarks68, Point};
use crate::imageio::{save_png, to_rgb8, ImageBuffer};

pub const CANVAS: u32 = 256;
pub const SEPARABILITY_FLOOR: f64 = 2.0;
pub const LATTICE_PERIOD: u64 = 15_625;
pub const MAX_JITTER: f64 = 1.5;
/// Mean backdrop color and its per-image, per-channel spread.
pub const BACKDROP: [f64; 3] = [150.0, 160.0, 170.0];
pub const BACKDROP_SPREAD: f64 = 40.0;
const MARGIN: f64 = 8.0;
const LEVELS: u64 = 5;

/// Per-identity drawing parameters, in canvas pixels unless noted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityParams {
    pub face_axes: (f64, f64),
    pub face_center: (f64, f64),
    pub skin: [f64; 3],
    pub eye_spacing: f64,
    pub eye_height: f64,
    pub eye_radius: f64,
    pub iris: [f64; 3],
    pub nose_length: f64,
    pub nose_width: f64,
    pub mouth_gap: f64,
    pub mouth_width: f64,
    /// Dimensionless smile depth, positive = corners up.
    pub mouth_curvature: f64,
    pub brow_thickness: f64,
    pub brow_raise: f64,
    /// Freckle centers in unit face coordinates (relative to center, over axes).
    pub freckles: Vec<(f64, f64)>,
    pub freckle_radius: f64,
}

fn lattice(level: u64, lo: f64, step: f64) -> f64 {
    lo + step * level as f64
}

fn scramble(seed: u64) -> u64 {
    // multiplier is coprime with 5, so this is a bijection on 0..LATTICE_PERIOD
    (seed % LATTICE_PERIOD * 7_919 + 4_321) % LATTICE_PERIOD
}

/// Deterministic parameters for one identity.
pub fn make_identity(identity_seed: u64) -> IdentityParams {
    let mut code = scramble(identity_seed);
    let mut digit = || {
        let d = code % LEVELS;
        code /= LEVELS;
        d
    };
    let eye_spacing = lattice(digit(), 41.0, 2.25);
    let ax = lattice(digit(), 45.0, 2.25);
    let ay = lattice(digit(), 60.0, 2.5);
    let nose_length = lattice(digit(), 22.0, 2.0);
    let mouth_width = lattice(digit(), 32.0, 2.5);
    let eye_height = lattice(digit(), 105.0, 2.0);

    let mut rng = ChaCha8Rng::seed_from_u64(identity_seed ^ 0x1d3f_5a7c_9e0b_2468);
    let tone = |rng: &mut ChaCha8Rng, base: [f64; 3], spread: f64| {
        base.map(|b| (b + rng.gen_range(-spread..spread)).clamp(0.0, 255.0))
    };
    let skin_base = rng.gen_range(0.0..1.0);
    let skin = [
        120.0 + 110.0 * skin_base,
        85.0 + 95.0 * skin_base,
        65.0 + 85.0 * skin_base,
    ];
    let skin = tone(&mut rng, skin, 8.0);
    let iris = tone(&mut rng, [70.0, 90.0, 90.0], 50.0);
    let n_freckles = rng.gen_range(14..=22);
    let mut freckles = Vec::with_capacity(n_freckles);
    while freckles.len() < n_freckles {
        let u: f64 = rng.gen_range(-0.85..0.85);
        let v: f64 = rng.gen_range(-0.75..0.85);
        if u * u + v * v < 0.72 {
            freckles.push((u, v));
        }
    }
    IdentityParams {
        face_axes: (ax, ay),
        face_center: (128.0, 131.0),
        skin,
        eye_spacing,
        eye_height,
        eye_radius: rng.gen_range(6.0..8.0),
        iris,
        nose_length,
        nose_width: rng.gen_range(12.0..18.0),
        mouth_gap: rng.gen_range(24.0..30.0),
        mouth_width,
        mouth_curvature: rng.gen_range(-0.25..0.45),
        brow_thickness: rng.gen_range(2.5..5.0),
        brow_raise: rng.gen_range(13.0..17.0),
        freckles,
        freckle_radius: rng.gen_range(2.2..3.2),
    }
}

impl IdentityParams {
    /// Mid-lattice face with neutral tones, used as the reference toy face.
    pub fn canonical() -> Self {
        IdentityParams {
            face_axes: (49.5, 65.0),
            face_center: (128.0, 131.0),
            skin: [180.0, 140.0, 110.0],
            eye_spacing: 45.5,
            eye_height: 109.0,
            eye_radius: 7.0,
            iris: [70.0, 90.0, 90.0],
            nose_length: 26.0,
            nose_width: 15.0,
            mouth_gap: 27.0,
            mouth_width: 37.0,
            mouth_curvature: 0.1,
            brow_thickness: 3.5,
            brow_raise: 15.0,
            freckles: vec![(-0.5, 0.2), (0.45, 0.25), (-0.2, -0.5), (0.3, -0.45), (0.0, 0.6)],
            freckle_radius: 2.7,
        }
    }

    /// Geometric parameters compared by the separability floor.
    pub fn geometric(&self) -> [f64; 13] {
        [
            self.face_axes.0,
            self.face_axes.1,
            self.eye_spacing,
            self.eye_height,
            self.eye_radius,
            self.nose_length,
            self.nose_width,
            self.mouth_gap,
            self.mouth_width,
            self.brow_thickness,
            self.brow_raise,
            self.freckle_radius,
            self.mouth_curvature,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.geometric();
        if g[..12].iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Domain("identity geometry must be positive".into()));
        }
        let (cx, cy) = self.face_center;
        let (ax, ay) = self.face_axes;
        let c = CANVAS as f64;
        if cx - ax < MARGIN + MAX_JITTER
            || cx + ax > c - MARGIN - MAX_JITTER
            || cy - ay < MARGIN + MAX_JITTER
            || cy + ay > c - MARGIN - MAX_JITTER
        {
            return Err(Error::Domain("face ellipse does not fit the canvas margin".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct RenderedFace {
    pub image: ImageBuffer,
    pub lm5: Landmarks5,
    pub lm68: Landmarks68,
    pub variation_seed: u64,
}

/// Face layout after applying a variation's jitter; all in canvas pixels.
struct Layout {
    cx: f64,
    cy: f64,
    ax: f64,
    ay: f64,
    eyes: [(f64, f64); 2],
    eye_rx: f64,
    eye_ry: f64,
    brow_y: f64,
    nose_top: (f64, f64),
    nose_tip: (f64, f64),
    mouth_y: f64,
    mouth_half: f64,
    smile: f64,
}

impl Layout {
    fn new(p: &IdentityParams, dx: f64, dy: f64) -> Self {
        let (cx, cy) = (p.face_center.0 + dx, p.face_center.1 + dy);
        let eye_y = p.eye_height + dy;
        let half = p.eye_spacing / 2.0;
        let tip_y = eye_y + p.nose_length;
        Layout {
            cx,
            cy,
            ax: p.face_axes.0,
            ay: p.face_axes.1,
            eyes: [(cx - half, eye_y), (cx + half, eye_y)],
            eye_rx: p.eye_radius,
            eye_ry: p.eye_radius * 0.6,
            brow_y: eye_y - p.brow_raise,
            nose_top: (cx, eye_y + 2.0),
            nose_tip: (cx, tip_y),
            mouth_y: tip_y + p.mouth_gap,
            mouth_half: p.mouth_width / 2.0,
            smile: p.mouth_curvature * p.mouth_width * 0.18,
        }
    }

    /// Mouth centerline height at horizontal offset `u` in `[-1, 1]`.
    fn mouth_curve(&self, u: f64) -> f64 {
        self.mouth_y + self.smile * (1.0 - u * u) - self.smile * 0.5
    }

    fn brow_curve(&self, eye: usize, u: f64) -> (f64, f64) {
        let (ex, _) = self.eyes[eye];
        let x = ex + u * self.eye_rx * 1.5;
        (x, self.brow_y - 3.5 * (1.0 - u * u))
    }

    fn landmarks68(&self) -> Vec<Point> {
        let mut pts = Vec::with_capacity(68);
        // jaw, image-left to image-right through the chin
        for j in 0..17 {
            let t = -0.15 + (std::f64::consts::PI + 0.3) * j as f64 / 16.0;
            pts.push(Point::new(self.cx - self.ax * t.cos(), self.cy + self.ay * t.sin()));
        }
        // brows: left outer->inner, right inner->outer
        for k in 0..5 {
            let u = -1.0 + 0.5 * k as f64;
            let (x, y) = self.brow_curve(0, u);
            pts.push(Point::new(x, y));
        }
        for k in 0..5 {
            let u = -1.0 + 0.5 * k as f64;
            let (x, y) = self.brow_curve(1, u);
            pts.push(Point::new(x, y));
        }
        // nose bridge down to the tip (index 30), then the nostril base
        for k in 0..4 {
            let t = k as f64 / 3.0;
            pts.push(Point::new(
                self.nose_top.0,
                self.nose_top.1 + t * (self.nose_tip.1 - self.nose_top.1),
            ));
        }
        let base_y = self.nose_tip.1 + 3.0;
        let nw = (self.eye_rx * 2.1).min(self.mouth_half);
        for k in 0..5 {
            let t = -1.0 + 0.5 * k as f64;
            pts.push(Point::new(self.cx + t * nw / 2.0, base_y - 1.5 * (1.0 - t * t)));
        }
        // eye rings at 60-degree steps; the six points average to the center
        let ring = |c: (f64, f64), angles: [f64; 6]| {
            angles.map(|a: f64| {
                let r = a.to_radians();
                Point::new(c.0 + self.eye_rx * r.cos(), c.1 - self.eye_ry * r.sin())
            })
        };
        pts.extend(ring(self.eyes[0], [180.0, 120.0, 60.0, 0.0, -60.0, -120.0]));
        pts.extend(ring(self.eyes[1], [180.0, 120.0, 60.0, 0.0, -60.0, -120.0]));
        // outer lip: 48 left corner, 49-53 top, 54 right corner, 55-59 bottom
        let lip = |u: f64, off: f64| Point::new(self.cx + u * self.mouth_half, self.mouth_curve(u) + off);
        pts.push(lip(-1.0, 0.0));
        for k in 1..=5 {
            let u = -1.0 + k as f64 / 3.0;
            pts.push(lip(u, -3.5 * (1.0 - u * u).sqrt()));
        }
        pts.push(lip(1.0, 0.0));
        for k in 1..=5 {
            let u = 1.0 - k as f64 / 3.0;
            pts.push(lip(u, 4.0 * (1.0 - u * u).sqrt()));
        }
        // inner lip: 60 left, 61-63 top, 64 right, 65-67 bottom
        pts.push(lip(-0.8, 0.0));
        for k in 1..=3 {
            let u = -0.8 + 0.4 * k as f64;
            pts.push(lip(u, -1.0));
        }
        pts.push(lip(0.8, 0.0));
        for k in 1..=3 {
            let u = 0.8 - 0.4 * k as f64;
            pts.push(lip(u, 1.0));
        }
        pts
    }
}

#[inline]
fn coverage(signed_dist: f64) -> f64 {
    (0.5 - signed_dist).clamp(0.0, 1.0)
}

#[inline]
fn blend(dst: &mut [f64; 3], src: [f64; 3], a: f64) {
    if a > 0.0 {
        for c in 0..3 {
            dst[c] += a * (src[c] - dst[c]);
        }
    }
}

fn ellipse_sd(x: f64, y: f64, cx: f64, cy: f64, rx: f64, ry: f64) -> f64 {
    let (u, v) = ((x - cx) / rx, (y - cy) / ry);
    ((u * u + v * v).sqrt() - 1.0) * rx.min(ry)
}

fn in_triangle(p: (f64, f64), a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> bool {
    let s = |p: (f64, f64), q: (f64, f64), r: (f64, f64)| (q.0 - p.0) * (r.1 - p.1) - (q.1 - p.1) * (r.0 - p.0);
    let (d1, d2, d3) = (s(a, b, p), s(b, c, p), s(c, a, p));
    !((d1 < 0.0 || d2 < 0.0 || d3 < 0.0) && (d1 > 0.0 || d2 > 0.0 || d3 > 0.0))
}

/// Rasterize one variation of an identity.
pub fn render(params: &IdentityParams, variation_seed: u64) -> RenderedFace {
    let mut rng = ChaCha8Rng::seed_from_u64(variation_seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0xabcd);
    let dx = rng.gen_range(-MAX_JITTER..=MAX_JITTER);
    let dy = rng.gen_range(-MAX_JITTER..=MAX_JITTER);
    let gain = rng.gen_range(0.9..=1.1);
    // the backdrop belongs to the capture, not the person
    let bg = BACKDROP.map(|b| b + rng.gen_range(-BACKDROP_SPREAD..=BACKDROP_SPREAD));
    let lay = Layout::new(params, dx, dy);

    let skin = params.skin;
    let freckle = skin.map(|v| v * 0.5);
    let nose_shade = skin.map(|v| v * 0.82);
    let brow = [55.0, 40.0, 30.0];
    let lips = [150.0, 60.0, 65.0];
    let sclera = [235.0, 235.0, 230.0];
    let pupil = [20.0, 20.0, 20.0];
    let freckle_centers: Vec<(f64, f64)> = params
        .freckles
        .iter()
        .map(|&(u, v)| (lay.cx + u * lay.ax, lay.cy + v * lay.ay))
        .collect();
    let nose_l = (lay.nose_tip.0 - params.nose_width / 2.0, lay.nose_tip.1);
    let nose_r = (lay.nose_tip.0 + params.nose_width / 2.0, lay.nose_tip.1);

    let mut noise = ChaCha8Rng::seed_from_u64(variation_seed ^ 0x005e_ed0f_5eed);
    let image = ImageBuffer::from_fn(CANVAS, CANVAS, |px, py| {
        let (x, y) = (px as f64, py as f64);
        let mut c = bg;
        let face_sd = ellipse_sd(x, y, lay.cx, lay.cy, lay.ax, lay.ay);
        let face_a = coverage(face_sd);
        if face_a > 0.0 {
            let (u, v) = ((x - lay.cx) / lay.ax, (y - lay.cy) / lay.ay);
            let shade = 1.0 - 0.12 * (u * u + v * v);
            let mut f = skin.map(|s| s * shade);
            for &(fx, fy) in &freckle_centers {
                let d = (x - fx).hypot(y - fy);
                if d < params.freckle_radius + 1.0 {
                    blend(&mut f, freckle, coverage(d - params.freckle_radius));
                }
            }
            if in_triangle((x, y), lay.nose_top, nose_l, nose_r) {
                blend(&mut f, nose_shade, 1.0);
            }
            for eye in 0..2 {
                let (ex, _) = lay.eyes[eye];
                let u = (x - ex) / (lay.eye_rx * 1.5);
                if u.abs() <= 1.0 {
                    let (_, by) = lay.brow_curve(eye, u);
                    let d = (y - by).abs() - params.brow_thickness / 2.0;
                    blend(&mut f, brow, coverage(d));
                }
                let (ex, ey) = lay.eyes[eye];
                let sd = ellipse_sd(x, y, ex, ey, lay.eye_rx, lay.eye_ry);
                if sd < 1.0 {
                    blend(&mut f, sclera, coverage(sd));
                    let r = (x - ex).hypot(y - ey);
                    blend(&mut f, params.iris, coverage(r - lay.eye_ry * 0.9) * coverage(sd));
                    blend(&mut f, pupil, coverage(r - lay.eye_ry * 0.4));
                }
            }
            let u = (x - lay.cx) / lay.mouth_half;
            if u.abs() <= 1.0 {
                let d = (y - lay.mouth_curve(u)).abs() - 2.5 * (1.0 - u * u).sqrt() - 0.5;
                blend(&mut f, lips, coverage(d));
            }
            blend(&mut c, f, face_a);
        }
        let n: f64 = noise.gen_range(-3.0..3.0) + noise.gen_range(-3.0..3.0);
        to_rgb8(c.map(|v| v * gain + n))
    });

    let lm68 = Landmarks68::new(lay.landmarks68()).expect("analytic landmarks are finite");
    let lm5 = lm68.to_five();
    RenderedFace {
        image,
        lm5,
        lm68,
        variation_seed,
    }
}

/// Label used for identity `i` in generated datasets.
pub fn identity_label(i: usize) -> String {
    format!("id_{i:04}")
}

fn identity_seed(root_seed: u64, i: usize) -> u64 {
    root_seed.wrapping_mul(LATTICE_PERIOD * 7 + 1).wrapping_add(i as u64 * 37)
}

fn variation_seed(identity_seed: u64, k: usize) -> u64 {
    identity_seed.wrapping_mul(1_000_003).wrapping_add(k as u64 + 1)
}

/// Render `n_identities x images_per_identity` faces into `dir` and write
/// `dir/manifest.json`.
pub fn make_dataset(
    dir: &Path,
    n_identities: usize,
    images_per_identity: usize,
    root_seed: u64,
) -> Result<Manifest> {
    if n_identities < 2 {
        return Err(Error::Domain(format!(
            "a dataset needs at least 2 identities, got {n_identities}"
        )));
    }
    if images_per_identity < 1 {
        return Err(Error::Domain("images_per_identity must be >= 1".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(n_identities * images_per_identity);
    for i in 0..n_identities {
        let label = identity_label(i);
        let id_seed = identity_seed(root_seed, i);
        let params = make_identity(id_seed);
        for k in 0..images_per_identity {
            let vseed = variation_seed(id_seed, k);
            let face = render(&params, vseed);
            let rel = format!("{label}/img_{k:03}.png");
            let lm5_rel = format!("{label}/img_{k:03}.lm5.csv");
            let lm68_rel = format!("{label}/img_{k:03}.lm68.csv");
            save_png(&face.image, &dir.join(&rel))?;
            landmark_csv::write_lm5(&dir.join(&lm5_rel), &rel, &face.lm5)?;
            landmark_csv::write_lm68(&dir.join(&lm68_rel), &rel, &face.lm68)?;
            entries.push(Sample {
                path: rel,
                lm5_path: lm5_rel,
                lm68_path: lm68_rel,
                first_label: label.clone(),
                second_label: label.clone(),
                authenticity: Authenticity::BonaFide,
                provenance: Provenance::Synthetic {
                    identity_seed: id_seed,
                    variation_seed: vseed,
                },
            });
        }
    }
    let manifest = Manifest::new(entries)?;
    manifest.save(&dir.join("manifest.json"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::occupancy_ratio;

    #[test]
    fn identity_is_deterministic_and_valid() {
        assert_eq!(make_identity(0), make_identity(0));
        make_identity(7).validate().unwrap();
        IdentityParams::canonical().validate().unwrap();
    }

    #[test]
    fn separability_over_first_hundred_seeds() {
        let params: Vec<_> = (0..100).map(make_identity).collect();
        for i in 0..params.len() {
            params[i].validate().unwrap();
            for j in i + 1..params.len() {
                let gap = params[i]
                    .geometric()
                    .iter()
                    .zip(params[j].geometric())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                assert!(gap >= SEPARABILITY_FLOOR, "seeds {i} and {j} too close");
            }
        }
    }

    #[test]
    fn render_is_deterministic() {
        let p = make_identity(3);
        let a = render(&p, 11);
        let b = render(&p, 11);
        assert_eq!(a.image.as_raw(), b.image.as_raw());
        assert_eq!(a.lm68, b.lm68);
    }

    #[test]
    fn jitter_bound() {
        let p = make_identity(5);
        let base = render(&p, 0).lm5;
        for seed in 1..50 {
            let lm = render(&p, seed).lm5;
            for (a, b) in base.to_array().iter().zip(lm.to_array()) {
                assert!((a.x - b.x).abs() <= 3.0 && (a.y - b.y).abs() <= 3.0);
            }
        }
    }

    #[test]
    fn landmarks_consistent_and_in_canvas() {
        for seed in 0..20 {
            let f = render(&make_identity(seed), seed * 3);
            let pts = f.lm68.points();
            let mean = |r: std::ops::Range<usize>| {
                let n = r.len() as f64;
                pts[r].iter().fold((0.0, 0.0), |a, p| (a.0 + p.x / n, a.1 + p.y / n))
            };
            let le = mean(36..42);
            assert!((le.0 - f.lm5.left_eye.x).abs() < 0.5 && (le.1 - f.lm5.left_eye.y).abs() < 0.5);
            for p in pts {
                assert!(p.x >= 0.0 && p.x < CANVAS as f64 && p.y >= 0.0 && p.y < CANVAS as f64);
            }
            f.lm5.validate().unwrap();
        }
    }

    #[test]
    fn occupancy_sanity_sweep() {
        for seed in 0..100 {
            let f = render(&make_identity(seed), 0);
            let r = occupancy_ratio(&f.lm68, (CANVAS, CANVAS));
            assert!(r > 0.05 && r < 0.9, "seed {seed}: {r}");
        }
    }

    #[test]
    fn dataset_counts() {
        let dir = tempfile::tempdir().unwrap();
        let m = make_dataset(dir.path(), 2, 1, 0).unwrap();
        assert_eq!(m.entries.len(), 2);
        assert_eq!(m.num_classes(), 2);
        assert!(make_dataset(dir.path(), 1, 1, 0).is_err());
    }
}
