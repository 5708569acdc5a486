//! Planar convex-polygon helpers used by the IoU and box-fitting code.

use super::Vec2;

/// Signed-area tolerance (m²) below which vertices count as collinear and
/// intersections count as empty.
pub const AREA_EPS: f64 = 1e-12;

fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Shoelace area; positive for counter-clockwise vertex order.
pub fn polygon_area(poly: &[Vec2]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        acc += a.x * b.y - b.x * a.y;
    }
    0.5 * acc
}

/// Sutherland–Hodgman clipping of `subject` against the convex polygon
/// `clip`. Both inputs must be counter-clockwise. The result is the convex
/// intersection, possibly empty.
pub fn clip_convex(subject: &[Vec2], clip: &[Vec2]) -> Vec<Vec2> {
    let mut output: Vec<Vec2> = subject.to_vec();
    if clip.len() < 3 {
        return Vec::new();
    }
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let edge = b - a;
        let side = |p: Vec2| cross(edge, p - a);

        let input = std::mem::take(&mut output);
        let mut prev = *input.last().unwrap();
        let mut prev_side = side(prev);
        for &cur in &input {
            let cur_side = side(cur);
            let cur_in = cur_side >= -AREA_EPS;
            let prev_in = prev_side >= -AREA_EPS;
            if cur_in {
                if !prev_in {
                    output.push(intersect(prev, cur, prev_side, cur_side));
                }
                output.push(cur);
            } else if prev_in {
                output.push(intersect(prev, cur, prev_side, cur_side));
            }
            prev = cur;
            prev_side = cur_side;
        }
    }
    output
}

fn intersect(p: Vec2, q: Vec2, sp: f64, sq: f64) -> Vec2 {
    let t = sp / (sp - sq);
    p + (q - p) * t
}

/// Andrew's monotone chain. Returns the hull counter-clockwise with collinear
/// points removed; fewer than three vertices means the input is degenerate.
pub fn convex_hull(points: &[Vec2]) -> Vec<Vec2> {
    let mut pts: Vec<Vec2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Vec2> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Vec2>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 {
                let a = hull[hull.len() - 2];
                let b = hull[hull.len() - 1];
                if cross(b - a, p - b) <= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// An oriented rectangle in the plane. `length` runs along `angle`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect2 {
    pub center: Vec2,
    pub length: f64,
    pub width: f64,
    pub angle: f64,
}

impl Rect2 {
    pub fn area(&self) -> f64 {
        self.length * self.width
    }
}

/// Minimum-area enclosing rectangle by rotating calipers over the convex
/// hull. One side of the optimum is always collinear with a hull edge, so
/// each edge is tried once while three support pointers advance
/// monotonically. Returns `None` when the hull has fewer than three vertices.
pub fn min_area_rect(points: &[Vec2]) -> Option<Rect2> {
    rect_from_hull(&convex_hull(points))
}

/// [`min_area_rect`] for an already computed counter-clockwise hull.
pub fn rect_from_hull(hull: &[Vec2]) -> Option<Rect2> {
    let n = hull.len();
    if n < 3 {
        return None;
    }
    let at = |i: usize| hull[i % n];

    let mut best: Option<Rect2> = None;
    let (mut far_e, mut far_n, mut near_e) = (1usize, 0usize, 0usize);
    for i in 0..n {
        let origin = at(i);
        let d = at(i + 1) - origin;
        let len = d.norm();
        if len == 0.0 {
            continue;
        }
        let e = d / len;
        let nrm = Vec2::new(-e.y, e.x);

        if i == 0 {
            far_e = 1;
        }
        let mut guard = 0;
        while e.dot(&(at(far_e + 1) - at(far_e))) > 0.0 && guard < n {
            far_e += 1;
            guard += 1;
        }
        if i == 0 {
            far_n = far_e;
        }
        guard = 0;
        while nrm.dot(&(at(far_n + 1) - at(far_n))) > 0.0 && guard < n {
            far_n += 1;
            guard += 1;
        }
        if i == 0 {
            near_e = far_n;
        }
        guard = 0;
        while e.dot(&(at(near_e + 1) - at(near_e))) < 0.0 && guard < n {
            near_e += 1;
            guard += 1;
        }

        let hi = e.dot(&(at(far_e) - origin));
        let lo = e.dot(&(at(near_e) - origin));
        let height = nrm.dot(&(at(far_n) - origin));
        let rect = Rect2 {
            center: origin + e * (0.5 * (hi + lo)) + nrm * (0.5 * height),
            length: hi - lo,
            width: height,
            angle: e.y.atan2(e.x),
        };
        if best.is_none_or(|b| rect.area() < b.area()) {
            best = Some(rect);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square(cx: f64, cy: f64, half: f64) -> Vec<Vec2> {
        vec![
            Vec2::new(cx - half, cy - half),
            Vec2::new(cx + half, cy - half),
            Vec2::new(cx + half, cy + half),
            Vec2::new(cx - half, cy + half),
        ]
    }

    #[test]
    fn shoelace_orientation() {
        let sq = square(0.0, 0.0, 0.5);
        assert!((polygon_area(&sq) - 1.0).abs() < 1e-15);
        let rev: Vec<_> = sq.iter().rev().copied().collect();
        assert!((polygon_area(&rev) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn clip_offset_squares() {
        let a = square(0.0, 0.0, 0.5);
        let b = square(0.5, 0.0, 0.5);
        let inter = clip_convex(&a, &b);
        assert!((polygon_area(&inter) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn clip_disjoint_and_touching() {
        let a = square(0.0, 0.0, 0.5);
        assert!(polygon_area(&clip_convex(&a, &square(3.0, 0.0, 0.5))).abs() < AREA_EPS);
        // shared edge only
        assert!(polygon_area(&clip_convex(&a, &square(1.0, 0.0, 0.5))).abs() < AREA_EPS);
    }

    #[test]
    fn clip_rotated_square_octagon() {
        let a = square(0.0, 0.0, 0.5);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let diamond = vec![Vec2::new(r, 0.0), Vec2::new(0.0, r), Vec2::new(-r, 0.0), Vec2::new(0.0, -r)];
        let inter = clip_convex(&a, &diamond);
        // regular octagon inscribed between the two squares
        assert!((polygon_area(&inter) - 2.0 * (2f64.sqrt() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn hull_removes_interior_and_collinear() {
        let pts = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(2.0, 2.0),
            Vec2::new(0.0, 2.0),
            Vec2::new(1.0, 1.0),
        ];
        let hull = convex_hull(&pts);
        assert_eq!(hull.len(), 4);
        assert!(polygon_area(&hull) > 0.0);
        let line = vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(2.0, 2.0)];
        assert!(convex_hull(&line).len() < 3);
        assert!(min_area_rect(&line).is_none());
    }

    /// Independent O(h²) search: for every hull edge, project every hull vertex.
    fn brute_min_rect_area(points: &[Vec2]) -> f64 {
        let hull = convex_hull(points);
        let mut best = f64::INFINITY;
        for i in 0..hull.len() {
            let d = hull[(i + 1) % hull.len()] - hull[i];
            let e = d / d.norm();
            let n = Vec2::new(-e.y, e.x);
            let (mut lo, mut hi, mut top) = (f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
            let mut bottom = f64::INFINITY;
            for p in &hull {
                let x = e.dot(p);
                let y = n.dot(p);
                lo = lo.min(x);
                hi = hi.max(x);
                top = top.max(y);
                bottom = bottom.min(y);
            }
            best = best.min((hi - lo) * (top - bottom));
        }
        best
    }

    #[test]
    fn calipers_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let n = rng.random_range(3..60);
            let pts: Vec<Vec2> =
                (0..n).map(|_| Vec2::new(rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0))).collect();
            let rect = min_area_rect(&pts).unwrap();
            let brute = brute_min_rect_area(&pts);
            assert!((rect.area() - brute).abs() <= 1e-9 * brute.max(1.0), "{} vs {}", rect.area(), brute);
            // every input point is inside the rectangle
            let (s, c) = rect.angle.sin_cos();
            for p in &pts {
                let d = p - rect.center;
                let x = c * d.x + s * d.y;
                let y = -s * d.x + c * d.y;
                assert!(x.abs() <= 0.5 * rect.length + 1e-9 && y.abs() <= 0.5 * rect.width + 1e-9);
            }
        }
    }

    #[test]
    fn rotated_rectangle_recovered() {
        // 2×1 rectangle rotated 30°, sampled on its boundary and interior
        let angle = 30f64.to_radians();
        let (s, c) = angle.sin_cos();
        let mut pts = Vec::new();
        for i in 0..=20 {
            for j in 0..=10 {
                let x = -1.0 + 2.0 * i as f64 / 20.0;
                let y = -0.5 + j as f64 / 10.0;
                pts.push(Vec2::new(c * x - s * y + 3.0, s * x + c * y - 1.0));
            }
        }
        let rect = min_area_rect(&pts).unwrap();
        let (long, short) =
            if rect.length >= rect.width { (rect.length, rect.width) } else { (rect.width, rect.length) };
        assert!((long - 2.0).abs() < 1e-9 && (short - 1.0).abs() < 1e-9);
        let quarter = std::f64::consts::FRAC_PI_2;
        let diff = (rect.angle - angle).rem_euclid(quarter);
        assert!(diff.min(quarter - diff) < 1e-9);
        assert!((rect.center - Vec2::new(3.0, -1.0)).norm() < 1e-9);
    }
}
