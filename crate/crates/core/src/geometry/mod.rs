//! Landmark containers, 5-point similarity alignment to scaled templates and
//! face-occupancy estimation.
//!
//! The eleven alignment settings `a`..`k` are obtained by contracting the
//! standard 112×112 five-point template about the image center by the
//! inverse of the setting's scale factor: a scale factor above one shrinks
//! the landmark spread, so the aligned face covers less of the frame and
//! more surrounding context survives the crop.

mod hull;
pub mod landmark_csv;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageio::{sample_bilinear, to_rgb8, ImageBuffer};

pub use hull::{clip_to_rect, convex_hull, polygon_area};
pub(crate) use hull::convex_contains;

/// Five-point template for a 112×112 crop: eyes, nose tip, mouth corners.
pub const BASE_TEMPLATE_112: [(f64, f64); 5] = [
    (38.2, 41.7),
    (73.5, 41.5),
    (56.0, 61.7),
    (41.5, 82.4),
    (70.7, 82.2),
];

/// Default aligned output size, `(height, width)`.
pub const DEFAULT_OUTPUT_SIZE: (u32, u32) = (112, 112);

/// Mid-gray fill for pixels that map outside the source image.
pub const DEFAULT_FILL: [u8; 3] = [128, 128, 128];

/// `(id, scale factor, nominal occupancy ratio)` for the eleven settings.
pub const CANONICAL_TABLE: [(char, f64, f64); 11] = [
    ('a', 1.65, 0.15),
    ('b', 1.40, 0.21),
    ('c', 1.10, 0.34),
    ('d', 1.00, 0.42),
    ('e', 0.90, 0.51),
    ('f', 0.85, 0.56),
    ('g', 0.80, 0.62),
    ('h', 0.75, 0.70),
    ('i', 0.70, 0.77),
    ('j', 0.65, 0.86),
    ('k', 0.60, 0.94),
];

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dist(&self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(
            (1.0 - t) * self.x + t * other.x,
            (1.0 - t) * self.y + t * other.y,
        )
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point { x, y }
    }
}

/// Five facial landmarks in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Landmarks5 {
    pub left_eye: Point,
    pub right_eye: Point,
    pub nose: Point,
    pub mouth_left: Point,
    pub mouth_right: Point,
}

impl Landmarks5 {
    /// Validating constructor: finite coordinates, upright left/right order.
    pub fn new(points: [Point; 5]) -> Result<Self> {
        let lm = Self::from_array_unchecked(points);
        lm.validate()?;
        Ok(lm)
    }

    pub(crate) fn from_array_unchecked(p: [Point; 5]) -> Self {
        Landmarks5 {
            left_eye: p[0],
            right_eye: p[1],
            nose: p[2],
            mouth_left: p[3],
            mouth_right: p[4],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pts = self.to_array();
        if pts.iter().any(|p| !p.is_finite()) {
            return Err(Error::Domain("non-finite 5-point landmark".into()));
        }
        if self.left_eye.x >= self.right_eye.x || self.mouth_left.x >= self.mouth_right.x {
            return Err(Error::Domain(
                "5-point landmarks are not in upright left/right order".into(),
            ));
        }
        Ok(())
    }

    pub fn to_array(&self) -> [Point; 5] {
        [
            self.left_eye,
            self.right_eye,
            self.nose,
            self.mouth_left,
            self.mouth_right,
        ]
    }

    pub fn map(&self, t: &SimilarityTransform) -> Landmarks5 {
        Self::from_array_unchecked(self.to_array().map(|p| t.apply(p)))
    }
}

/// Indices into the 68-point annotation used when reducing to five points.
pub mod idx68 {
    pub const JAW: std::ops::Range<usize> = 0..17;
    pub const BROWS: std::ops::Range<usize> = 17..27;
    pub const NOSE: std::ops::Range<usize> = 27..36;
    pub const NOSE_TIP: usize = 30;
    pub const LEFT_EYE: std::ops::Range<usize> = 36..42;
    pub const RIGHT_EYE: std::ops::Range<usize> = 42..48;
    pub const MOUTH: std::ops::Range<usize> = 48..68;
    pub const MOUTH_LEFT: usize = 48;
    pub const MOUTH_RIGHT: usize = 54;
}

/// The standard 68-point face annotation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Landmarks68 {
    points: Vec<Point>,
}

impl Landmarks68 {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.len() != 68 {
            return Err(Error::Domain(format!(
                "68-point landmarks need exactly 68 points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::Domain("non-finite 68-point landmark".into()));
        }
        Ok(Landmarks68 { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn map(&self, t: &SimilarityTransform) -> Landmarks68 {
        Landmarks68 {
            points: self.points.iter().map(|&p| t.apply(p)).collect(),
        }
    }

    /// Convex combination `(1 - t) * self + t * other`, point by point.
    pub fn lerp(&self, other: &Landmarks68, t: f64) -> Landmarks68 {
        Landmarks68 {
            points: self
                .points
                .iter()
                .zip(&other.points)
                .map(|(&a, &b)| a.lerp(b, t))
                .collect(),
        }
    }

    /// Eye centers as ring means, nose tip, mouth corners.
    pub fn to_five(&self) -> Landmarks5 {
        let mean = |r: std::ops::Range<usize>| {
            let n = r.len() as f64;
            let (sx, sy) = self.points[r]
                .iter()
                .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
            Point::new(sx / n, sy / n)
        };
        Landmarks5 {
            left_eye: mean(idx68::LEFT_EYE),
            right_eye: mean(idx68::RIGHT_EYE),
            nose: self.points[idx68::NOSE_TIP],
            mouth_left: self.points[idx68::MOUTH_LEFT],
            mouth_right: self.points[idx68::MOUTH_RIGHT],
        }
    }
}

/// `p' = scale * R(rotation) * p + translation`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: f64,
    pub tx: f64,
    pub ty: f64,
}

impl SimilarityTransform {
    pub const IDENTITY: SimilarityTransform = SimilarityTransform {
        scale: 1.0,
        rotation: 0.0,
        tx: 0.0,
        ty: 0.0,
    };

    pub fn new(scale: f64, rotation: f64, tx: f64, ty: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Domain(format!("similarity scale must be > 0, got {scale}")));
        }
        Ok(SimilarityTransform {
            scale,
            rotation,
            tx,
            ty,
        })
    }

    /// Linear part as `(a, b)` with matrix `[[a, -b], [b, a]]`.
    #[inline]
    fn ab(&self) -> (f64, f64) {
        let (s, c) = self.rotation.sin_cos();
        (self.scale * c, self.scale * s)
    }

    #[inline]
    pub fn apply(&self, p: Point) -> Point {
        let (a, b) = self.ab();
        Point::new(a * p.x - b * p.y + self.tx, b * p.x + a * p.y + self.ty)
    }

    pub fn inverse(&self) -> SimilarityTransform {
        let inv_scale = 1.0 / self.scale;
        let rot = -self.rotation;
        let (s, c) = rot.sin_cos();
        let (a, b) = (inv_scale * c, inv_scale * s);
        SimilarityTransform {
            scale: inv_scale,
            rotation: rot,
            tx: -(a * self.tx - b * self.ty),
            ty: -(b * self.tx + a * self.ty),
        }
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn compose(&self, first: &SimilarityTransform) -> SimilarityTransform {
        let t = self.apply(Point::new(first.tx, first.ty));
        SimilarityTransform {
            scale: self.scale * first.scale,
            rotation: self.rotation + first.rotation,
            tx: t.x,
            ty: t.y,
        }
    }

    /// Rotation wrapped into `(-pi, pi]`.
    pub fn wrapped_rotation(&self) -> f64 {
        let r = self.rotation.rem_euclid(std::f64::consts::TAU);
        if r > std::f64::consts::PI {
            r - std::f64::consts::TAU
        } else {
            r
        }
    }

    /// Sum of squared distances between mapped `src` and `dst`.
    pub fn residual(&self, src: &[Point], dst: &[Point]) -> f64 {
        src.iter()
            .zip(dst)
            .map(|(&s, &d)| {
                let m = self.apply(s);
                (m.x - d.x).powi(2) + (m.y - d.y).powi(2)
            })
            .sum()
    }
}

/// Least-squares similarity mapping `src` onto `dst`.
///
/// Closed-form Procrustes with scale: centroids removed, the 2×2
/// cross-covariance reduced to its rotation part (determinant +1, so no
/// reflections), scale from the ratio of the rotated cross term to the
/// source variance.
pub fn fit_similarity(src: &Landmarks5, dst: &Landmarks5) -> Result<SimilarityTransform> {
    fit_similarity_points(&src.to_array(), &dst.to_array())
}

pub fn fit_similarity_points(src: &[Point], dst: &[Point]) -> Result<SimilarityTransform> {
    if src.len() != dst.len() || src.is_empty() {
        return Err(Error::Contract(format!(
            "point sets differ in length ({} vs {})",
            src.len(),
            dst.len()
        )));
    }
    let n = src.len() as f64;
    let centroid = |pts: &[Point]| {
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        Point::new(sx / n, sy / n)
    };
    let ms = centroid(src);
    let md = centroid(dst);

    let mut var_s = 0.0;
    // dot and cross terms of the cross-covariance: tr(S^T D) and the antisymmetric part
    let mut dot = 0.0;
    let mut cross = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let (sx, sy) = (s.x - ms.x, s.y - ms.y);
        let (dx, dy) = (d.x - md.x, d.y - md.y);
        var_s += sx * sx + sy * sy;
        dot += sx * dx + sy * dy;
        cross += sx * dy - sy * dx;
    }
    let spread = src
        .iter()
        .map(|p| p.x.abs().max(p.y.abs()))
        .fold(1.0, f64::max);
    if var_s <= 1e-12 * spread * spread {
        return Err(Error::Degenerate(
            "source landmarks have zero variance".into(),
        ));
    }
    let rotation = cross.atan2(dot);
    let scale = dot.hypot(cross) / var_s;
    if scale <= 0.0 {
        return Err(Error::Degenerate(
            "destination landmarks have zero variance".into(),
        ));
    }
    let (sn, cs) = rotation.sin_cos();
    let (a, b) = (scale * cs, scale * sn);
    Ok(SimilarityTransform {
        scale,
        rotation,
        tx: md.x - (a * ms.x - b * ms.y),
        ty: md.y - (b * ms.x + a * ms.y),
    })
}

/// One alignment setting: a scaled template plus its nominal face ratio.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentSetting {
    pub id: char,
    pub scale_factor: f64,
    pub target5: Landmarks5,
    /// `(height, width)`.
    pub output_size: (u32, u32),
    pub nominal_ratio: f64,
}

/// Template for output size `(h, w)`, contracted about the center by `1/s`.
pub fn scale_template(s: f64, output_size: (u32, u32)) -> Result<Landmarks5> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Domain(format!("template scale must be > 0, got {s}")));
    }
    let (h, w) = (output_size.0 as f64, output_size.1 as f64);
    let (cx, cy) = (w / 2.0, h / 2.0);
    let pts = BASE_TEMPLATE_112.map(|(x, y)| {
        let (x, y) = (x * w / 112.0, y * h / 112.0);
        Point::new(cx + (x - cx) / s, cy + (y - cy) / s)
    });
    Ok(Landmarks5::from_array_unchecked(pts))
}

pub fn canonical_settings() -> Vec<AlignmentSetting> {
    canonical_settings_with_size(DEFAULT_OUTPUT_SIZE)
}

pub fn canonical_settings_with_size(output_size: (u32, u32)) -> Vec<AlignmentSetting> {
    CANONICAL_TABLE
        .iter()
        .map(|&(id, s, ratio)| AlignmentSetting {
            id,
            scale_factor: s,
            target5: scale_template(s, output_size).expect("canonical scales are positive"),
            output_size,
            nominal_ratio: ratio,
        })
        .collect()
}

/// Look up one canonical setting by letter.
pub fn setting(id: char) -> Result<AlignmentSetting> {
    canonical_settings()
        .into_iter()
        .find(|s| s.id == id.to_ascii_lowercase())
        .ok_or_else(|| Error::Domain(format!("unknown alignment setting '{id}' (expected a..k)")))
}

/// Parse a comma-separated list like `d,e,g` (or `all`).
pub fn parse_setting_list(list: &str) -> Result<Vec<AlignmentSetting>> {
    if list.trim().eq_ignore_ascii_case("all") {
        return Ok(canonical_settings());
    }
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let mut chars = s.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => setting(c),
                _ => Err(Error::Domain(format!("bad alignment setting '{s}'"))),
            }
        })
        .collect()
}

pub fn settings_to_json(settings: &[AlignmentSetting]) -> Result<String> {
    Ok(serde_json::to_string_pretty(settings)?)
}

pub fn settings_from_json(text: &str) -> Result<Vec<AlignmentSetting>> {
    Ok(serde_json::from_str(text)?)
}

/// Resample `image` so that `lm5` lands on the setting's template.
///
/// Returns the aligned image and the source-to-output transform.
pub fn warp_to_setting(
    image: &ImageBuffer,
    lm5: &Landmarks5,
    setting: &AlignmentSetting,
) -> Result<(ImageBuffer, SimilarityTransform)> {
    warp_to_setting_with_fill(image, lm5, setting, DEFAULT_FILL)
}

pub fn warp_to_setting_with_fill(
    image: &ImageBuffer,
    lm5: &Landmarks5,
    setting: &AlignmentSetting,
    fill: [u8; 3],
) -> Result<(ImageBuffer, SimilarityTransform)> {
    if image.width() == 0 || image.height() == 0 {
        return Err(Error::Domain("cannot align an empty image".into()));
    }
    lm5.validate()?;
    let t = fit_similarity(lm5, &setting.target5)?;
    let out = warp_similarity(image, &t, setting.output_size, fill);
    Ok((out, t))
}

/// Inverse-map every output pixel through `t` and sample bilinearly.
pub fn warp_similarity(
    image: &ImageBuffer,
    t: &SimilarityTransform,
    output_size: (u32, u32),
    fill: [u8; 3],
) -> ImageBuffer {
    let inv = t.inverse();
    let (h, w) = output_size;
    ImageBuffer::from_fn(w, h, |x, y| {
        let p = inv.apply(Point::new(x as f64, y as f64));
        match sample_bilinear(image, p.x, p.y) {
            Some(v) => to_rgb8(v),
            None => image::Rgb(fill),
        }
    })
}

/// Area of the 68-point convex hull, clipped to the frame, over the frame area.
pub fn occupancy_ratio(lm68: &Landmarks68, image_size: (u32, u32)) -> f64 {
    let (h, w) = (image_size.0 as f64, image_size.1 as f64);
    if h <= 0.0 || w <= 0.0 {
        return 0.0;
    }
    let hull = convex_hull(lm68.points());
    if hull.len() < 3 {
        return 0.0;
    }
    let clipped = clip_to_rect(&hull, 0.0, 0.0, w, h);
    (polygon_area(&clipped) / (h * w)).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn base() -> Landmarks5 {
        scale_template(1.0, (112, 112)).unwrap()
    }

    #[test]
    fn table_values() {
        let s = canonical_settings();
        assert_eq!(s.len(), 11);
        let d = s.iter().find(|s| s.id == 'd').unwrap();
        assert_eq!((d.scale_factor, d.nominal_ratio), (1.00, 0.42));
        assert_eq!((s[0].id, s[0].scale_factor, s[0].nominal_ratio), ('a', 1.65, 0.15));
        assert_eq!((s[10].id, s[10].scale_factor, s[10].nominal_ratio), ('k', 0.60, 0.94));
        for st in &s {
            for p in st.target5.to_array() {
                assert!(p.x >= 0.0 && p.x < 112.0 && p.y >= 0.0 && p.y < 112.0);
            }
        }
    }

    #[test]
    fn template_scaling() {
        let b = base();
        for (p, q) in b.to_array().iter().zip(BASE_TEMPLATE_112) {
            assert_eq!((p.x, p.y), q);
        }
        let k = scale_template(0.60, (112, 112)).unwrap();
        assert!((k.left_eye.x - 26.333).abs() < 1e-2);
        assert!((k.left_eye.y - 32.167).abs() < 1e-2);
        let far = scale_template(1e12, (112, 112)).unwrap();
        for p in far.to_array() {
            assert!((p.x - 56.0).abs() < 1e-9 && (p.y - 56.0).abs() < 1e-9);
        }
        assert!(matches!(scale_template(0.0, (112, 112)), Err(Error::Domain(_))));
        assert!(matches!(scale_template(-1.0, (112, 112)), Err(Error::Domain(_))));
    }

    #[test]
    fn template_inverse_pair() {
        // contract by s, then expand by the same factor about the center
        let s = 1.37;
        let c = Point::new(56.0, 56.0);
        let k = scale_template(s, (112, 112)).unwrap();
        for (p, q) in k.to_array().iter().zip(BASE_TEMPLATE_112) {
            let back = Point::new(c.x + (p.x - c.x) * s, c.y + (p.y - c.y) * s);
            assert!((back.x - q.0).abs() < 1e-9 && (back.y - q.1).abs() < 1e-9);
        }
    }

    #[test]
    fn non_square_template() {
        let t = scale_template(1.0, (224, 112)).unwrap();
        assert!((t.left_eye.y - 83.4).abs() < 1e-9);
        assert!((t.left_eye.x - 38.2).abs() < 1e-9);
    }

    #[test]
    fn fit_identity_and_rotation() {
        let b = base();
        let t = fit_similarity(&b, &b).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-9);
        assert!(t.rotation.abs() < 1e-9);
        assert!(t.tx.abs() < 1e-9 && t.ty.abs() < 1e-9);

        let c = Point::new(56.0, 56.0);
        let rot = SimilarityTransform::new(1.0, 0.3, 0.0, 0.0).unwrap();
        let about_c = SimilarityTransform::new(1.0, 0.0, c.x, c.y)
            .unwrap()
            .compose(&rot)
            .compose(&SimilarityTransform::new(1.0, 0.0, -c.x, -c.y).unwrap());
        let src = b.map(&about_c);
        let t = fit_similarity(&src, &b).unwrap();
        assert!((t.wrapped_rotation() + 0.3).abs() < 1e-9);
        assert!((t.scale - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fit_degenerate() {
        let p = Point::new(3.0, 4.0);
        let same = Landmarks5::from_array_unchecked([p; 5]);
        assert!(matches!(fit_similarity(&same, &base()), Err(Error::Degenerate(_))));
    }

    #[test]
    fn inverse_composes_to_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let t = SimilarityTransform::new(
                rng.gen_range(0.2..5.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-100.0..100.0),
                rng.gen_range(-100.0..100.0),
            )
            .unwrap();
            let p = Point::new(rng.gen_range(-200.0..200.0), rng.gen_range(-200.0..200.0));
            let q = t.inverse().apply(t.apply(p));
            assert!((q.x - p.x).abs() < 1e-9 && (q.y - p.y).abs() < 1e-9);
        }
    }

    #[test]
    fn fit_beats_random_probes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dst = base();
        let src = Landmarks5::from_array_unchecked(
            dst.to_array()
                .map(|p| Point::new(p.x * 1.7 + rng.gen_range(-3.0..3.0) + 20.0, p.y * 1.7 + rng.gen_range(-3.0..3.0))),
        );
        let (s, d) = (src.to_array(), dst.to_array());
        let best = fit_similarity(&src, &dst).unwrap();
        let r0 = best.residual(&s, &d);
        for _ in 0..1000 {
            let probe = SimilarityTransform {
                scale: best.scale * (1.0 + rng.gen_range(-0.01..0.01)),
                rotation: best.rotation + rng.gen_range(-0.01..0.01),
                tx: best.tx + rng.gen_range(-0.5..0.5),
                ty: best.ty + rng.gen_range(-0.5..0.5),
            };
            assert!(r0 <= probe.residual(&s, &d) + 1e-12);
        }
    }

    #[test]
    fn residual_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dst = base();
        let src = Landmarks5::from_array_unchecked(
            dst.to_array().map(|p| Point::new(p.x + rng.gen_range(-4.0..4.0), p.y + rng.gen_range(-4.0..4.0))),
        );
        let t = fit_similarity(&src, &dst).unwrap();
        let r = t.residual(&src.to_array(), &dst.to_array());
        let rigid = SimilarityTransform::new(1.0, 0.7, 13.0, -8.0).unwrap();
        let (src2, dst2) = (src.map(&rigid), dst.map(&rigid));
        let t2 = fit_similarity(&src2, &dst2).unwrap();
        let r2 = t2.residual(&src2.to_array(), &dst2.to_array());
        assert!((r - r2).abs() < 1e-9 * r.max(1.0));
        assert!((t.scale - t2.scale).abs() < 1e-9);
    }

    #[test]
    fn occupancy_simple_shapes() {
        let square = |x0: f64, y0: f64, x1: f64, y1: f64| {
            let mut pts = Vec::with_capacity(68);
            for i in 0..68 {
                let p = match i % 4 {
                    0 => Point::new(x0, y0),
                    1 => Point::new(x1, y0),
                    2 => Point::new(x1, y1),
                    _ => Point::new(x0, y1),
                };
                pts.push(p);
            }
            Landmarks68::new(pts).unwrap()
        };
        assert!((occupancy_ratio(&square(0.0, 0.0, 100.0, 80.0), (80, 100)) - 1.0).abs() < 1e-12);
        assert!((occupancy_ratio(&square(0.0, 0.0, 50.0, 40.0), (80, 100)) - 0.25).abs() < 1e-12);
        // larger than the frame clips to 1
        assert!((occupancy_ratio(&square(-10.0, -10.0, 200.0, 200.0), (80, 100)) - 1.0).abs() < 1e-12);
        let line = Landmarks68::new((0..68).map(|i| Point::new(i as f64, i as f64)).collect()).unwrap();
        assert_eq!(occupancy_ratio(&line, (80, 100)), 0.0);
    }

    #[test]
    fn landmark_validation() {
        let mut a = base().to_array();
        a.swap(0, 1);
        assert!(Landmarks5::new(a).is_err());
        assert!(Landmarks68::new(vec![Point::default(); 67]).is_err());
        let mut pts = vec![Point::default(); 68];
        pts[3].x = f64::NAN;
        assert!(Landmarks68::new(pts).is_err());
    }

    #[test]
    fn identity_warp_is_lossless() {
        let img = ImageBuffer::from_fn(112, 112, |x, y| image::Rgb([(x * 2) as u8, (y * 2) as u8, ((x + y) % 256) as u8]));
        let d = setting('d').unwrap();
        let (out, t) = warp_to_setting(&img, &d.target5, &d).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-9);
        for (a, b) in out.pixels().zip(img.pixels()) {
            for c in 0..3 {
                assert!((a.0[c] as i32 - b.0[c] as i32).abs() <= 1);
            }
        }
    }

    #[test]
    fn settings_json_roundtrip() {
        let s = canonical_settings();
        let json = settings_to_json(&s).unwrap();
        assert_eq!(settings_from_json(&json).unwrap(), s);
        assert_eq!(parse_setting_list("d, e").unwrap().len(), 2);
        assert_eq!(parse_setting_list("all").unwrap().len(), 11);
        assert!(parse_setting_list("z").is_err());
    }
}
