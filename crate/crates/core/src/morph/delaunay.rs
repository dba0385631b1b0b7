//! Delaunay triangulation: x-sorted sweep to get any triangulation of the
//! hull, then Lawson edge flips until every edge is locally Delaunay.
//!
//! Triangles are returned with positive signed area in the `(x, y)` plane
//! (counterclockwise for y-up, clockwise on screen for y-down images).

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::Point;

/// Relative tolerance of the in-circumcircle predicate.
pub const INCIRCLE_TOL: f64 = 1e-9;

#[inline]
pub(crate) fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// True when `p` lies strictly inside the circumcircle of the
/// positively-oriented triangle `(a, b, c)`, beyond the relative tolerance.
pub fn in_circumcircle(a: Point, b: Point, c: Point, p: Point) -> bool {
    let (adx, ady) = (a.x - p.x, a.y - p.y);
    let (bdx, bdy) = (b.x - p.x, b.y - p.y);
    let (cdx, cdy) = (c.x - p.x, c.y - p.y);
    let (al, bl, cl) = (
        adx * adx + ady * ady,
        bdx * bdx + bdy * bdy,
        cdx * cdx + cdy * cdy,
    );
    let det = adx * (bdy * cl - bl * cdy) - ady * (bdx * cl - bl * cdx) + al * (bdx * cdy - bdy * cdx);
    let scale = al.max(bl).max(cl);
    det > INCIRCLE_TOL * scale * scale
}

/// Delaunay triangulation of `points` as index triples.
pub fn triangulate(points: &[Point]) -> Result<Vec<[usize; 3]>> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!(
            "triangulation needs at least 3 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::Domain("non-finite point in triangulation".into()));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        points[i]
            .x
            .total_cmp(&points[j].x)
            .then(points[i].y.total_cmp(&points[j].y))
    });
    order.dedup_by(|a, b| points[*a] == points[*b]);

    let mut tris = sweep(points, &order)?;
    lawson_flips(points, &mut tris);
    Ok(tris)
}

fn sweep(points: &[Point], order: &[usize]) -> Result<Vec<[usize; 3]>> {
    let p = |i: usize| points[i];
    // first point off the line through the first two
    let k = (2..order.len())
        .find(|&k| orient(p(order[0]), p(order[1]), p(order[k])) != 0.0)
        .ok_or_else(|| Error::Degenerate("all points are collinear".into()))?;

    let apex = order[k];
    let mut tris = Vec::with_capacity(2 * points.len());
    // fan from the apex over the collinear prefix
    for w in order[..k].windows(2) {
        tris.push(ccw(points, [w[0], w[1], apex]));
    }
    // hull as a counterclockwise cycle
    let mut hull: Vec<usize> = if orient(p(order[0]), p(order[k - 1]), p(apex)) > 0.0 {
        let mut h: Vec<usize> = order[..k].to_vec();
        h.push(apex);
        h
    } else {
        let mut h = vec![apex];
        h.extend(order[..k].iter().rev());
        h
    };

    for &v in &order[k + 1..] {
        let n = hull.len();
        let visible: Vec<bool> = (0..n)
            .map(|e| orient(p(hull[e]), p(hull[(e + 1) % n]), p(v)) < 0.0)
            .collect();
        if !visible.iter().any(|&b| b) {
            // duplicate or interior point; cannot happen for distinct x-sorted input
            continue;
        }
        for e in 0..n {
            if visible[e] {
                tris.push([hull[(e + 1) % n], hull[e], v]);
            }
        }
        // visible edges form one contiguous run (cyclically); find its start
        let start = (0..n)
            .find(|&e| visible[e] && !visible[(e + n - 1) % n])
            .unwrap_or(0);
        let mut end = start;
        while visible[(end + 1) % n] && (end + 1) % n != start {
            end = (end + 1) % n;
        }
        // hull keeps vertices from end+1 around to start, then v
        let mut next = Vec::with_capacity(n + 1);
        let mut i = (end + 1) % n;
        loop {
            next.push(hull[i]);
            if i == start {
                break;
            }
            i = (i + 1) % n;
        }
        next.push(v);
        hull = next;
    }
    Ok(tris)
}

fn ccw(points: &[Point], t: [usize; 3]) -> [usize; 3] {
    if orient(points[t[0]], points[t[1]], points[t[2]]) < 0.0 {
        [t[0], t[2], t[1]]
    } else {
        t
    }
}

fn lawson_flips(points: &[Point], tris: &mut [[usize; 3]]) {
    let key = |a: usize, b: usize| if a < b { (a, b) } else { (b, a) };
    for _pass in 0..10_000 {
        let mut edges: HashMap<(usize, usize), Vec<usize>> = HashMap::with_capacity(tris.len() * 3);
        for (ti, t) in tris.iter().enumerate() {
            for e in 0..3 {
                edges.entry(key(t[e], t[(e + 1) % 3])).or_default().push(ti);
            }
        }
        let mut touched = vec![false; tris.len()];
        let mut keys: Vec<_> = edges.keys().copied().collect();
        keys.sort_unstable();
        let mut flipped = false;
        for k in keys {
            let owners = &edges[&k];
            if owners.len() != 2 || touched[owners[0]] || touched[owners[1]] {
                continue;
            }
            let (t1, t2) = (owners[0], owners[1]);
            let (a, b, c) = rotate_to_edge(tris[t1], k);
            let d = opposite(tris[t2], k);
            if in_circumcircle(points[a], points[b], points[c], points[d]) {
                // quad a, d, b, c is convex and counterclockwise
                tris[t1] = [c, a, d];
                tris[t2] = [d, b, c];
                touched[t1] = true;
                touched[t2] = true;
                flipped = true;
            }
        }
        if !flipped {
            return;
        }
    }
    log::warn!("delaunay: flip limit reached");
}

/// Rotate the triangle so that its first two vertices are the edge `k`
/// (in the triangle's own winding).
fn rotate_to_edge(t: [usize; 3], k: (usize, usize)) -> (usize, usize, usize) {
    for r in 0..3 {
        let (a, b, c) = (t[r], t[(r + 1) % 3], t[(r + 2) % 3]);
        if (a == k.0 && b == k.1) || (a == k.1 && b == k.0) {
            return (a, b, c);
        }
    }
    unreachable!("edge not in triangle")
}

fn opposite(t: [usize; 3], k: (usize, usize)) -> usize {
    *t.iter().find(|&&v| v != k.0 && v != k.1).expect("edge not in triangle")
}

/// Triangulate `points` together with the four frame corners and four edge
/// midpoints of a `(h, w)` image. Frame points get indices `points.len()..+8`.
pub fn triangulate_with_frame(points: &[Point], size: (u32, u32)) -> Result<(Vec<Point>, Vec<[usize; 3]>)> {
    let all = with_frame(points, size);
    let tris = triangulate(&all)?;
    Ok((all, tris))
}

pub(crate) fn with_frame(points: &[Point], size: (u32, u32)) -> Vec<Point> {
    let (w, h) = ((size.1 - 1) as f64, (size.0 - 1) as f64);
    let mut all = points.to_vec();
    all.extend([
        Point::new(0.0, 0.0),
        Point::new(w, 0.0),
        Point::new(w, h),
        Point::new(0.0, h),
        Point::new(w / 2.0, 0.0),
        Point::new(w, h / 2.0),
        Point::new(w / 2.0, h),
        Point::new(0.0, h / 2.0),
    ]);
    all
}
