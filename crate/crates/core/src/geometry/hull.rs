use super::Point;

#[inline]
fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Convex hull by Andrew's monotone chain. Collinear points are dropped;
/// the result has positive signed area (counterclockwise in x-right/y-up).
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Point> = Vec::with_capacity(pts.len());
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point> = Vec::with_capacity(pts.len());
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Unsigned shoelace area.
pub fn polygon_area(poly: &[Point]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        acc += a.x * b.y - b.x * a.y;
    }
    acc.abs() / 2.0
}

/// Sutherland-Hodgman clip of a polygon against `[x0, x1] x [y0, y1]`.
pub fn clip_to_rect(poly: &[Point], x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Point> {
    // (axis, bound, keep_greater)
    let edges = [(0, x0, true), (0, x1, false), (1, y0, true), (1, y1, false)];
    let mut out = poly.to_vec();
    for (axis, bound, keep_greater) in edges {
        if out.is_empty() {
            break;
        }
        let coord = |p: &Point| if axis == 0 { p.x } else { p.y };
        let inside = |p: &Point| {
            if keep_greater {
                coord(p) >= bound
            } else {
                coord(p) <= bound
            }
        };
        let input = std::mem::take(&mut out);
        for i in 0..input.len() {
            let cur = input[i];
            let prev = input[(i + input.len() - 1) % input.len()];
            let (ci, pi) = (inside(&cur), inside(&prev));
            if ci != pi {
                let t = (bound - coord(&prev)) / (coord(&cur) - coord(&prev));
                out.push(prev.lerp(cur, t));
            }
            if ci {
                out.push(cur);
            }
        }
    }
    out
}

/// Point-in-convex-polygon test (boundary counts as inside).
pub(crate) fn convex_contains(hull: &[Point], p: Point) -> bool {
    if hull.len() < 3 {
        return false;
    }
    let mut sign = 0.0f64;
    for i in 0..hull.len() {
        let c = cross(hull[i], hull[(i + 1) % hull.len()], p);
        if c != 0.0 {
            if sign == 0.0 {
                sign = c.signum();
            } else if c.signum() != sign {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn square_hull() {
        let pts = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
            Point::new(0.5, 0.5),
            Point::new(0.5, 0.0),
        ];
        let h = convex_hull(&pts);
        assert_eq!(h.len(), 4);
        assert_eq!(polygon_area(&h), 1.0);
        assert!(convex_contains(&h, Point::new(0.5, 0.5)));
        assert!(convex_contains(&h, Point::new(1.0, 0.5)));
        assert!(!convex_contains(&h, Point::new(1.01, 0.5)));
    }

    #[test]
    fn clipping() {
        let sq = [
            Point::new(-1.0, -1.0),
            Point::new(3.0, -1.0),
            Point::new(3.0, 3.0),
            Point::new(-1.0, 3.0),
        ];
        let c = clip_to_rect(&sq, 0.0, 0.0, 2.0, 2.0);
        assert!((polygon_area(&c) - 4.0).abs() < 1e-12);
        let tri = [Point::new(0.0, 0.0), Point::new(4.0, 0.0), Point::new(0.0, 4.0)];
        let c = clip_to_rect(&tri, 0.0, 0.0, 2.0, 2.0);
        assert!((polygon_area(&c) - 4.0).abs() < 1e-12);
        let outside = [Point::new(5.0, 5.0), Point::new(6.0, 5.0), Point::new(5.0, 6.0)];
        assert_eq!(polygon_area(&clip_to_rect(&outside, 0.0, 0.0, 2.0, 2.0)), 0.0);
    }

    proptest! {
        #[test]
        fn hull_contains_all_points_and_matches_shoelace(
            raw in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 3..60)
        ) {
            let pts: Vec<Point> = raw.into_iter().map(Point::from).collect();
            let h = convex_hull(&pts);
            if h.len() >= 3 {
                for &p in &pts {
                    // hull encloses every input point (tolerate rounding on edges)
                    let mut ok = true;
                    for i in 0..h.len() {
                        if cross(h[i], h[(i + 1) % h.len()], p) < -1e-9 {
                            ok = false;
                        }
                    }
                    prop_assert!(ok);
                }
                // independent area: fan triangulation from the first vertex
                let mut fan = 0.0;
                for i in 1..h.len() - 1 {
                    fan += cross(h[0], h[i], h[i + 1]) / 2.0;
                }
                let a = polygon_area(&h);
                prop_assert!((fan.abs() - a).abs() <= 1e-9 * a.max(1.0));
            }
        }
    }
}
