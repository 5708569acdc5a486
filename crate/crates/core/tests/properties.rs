use std::f64::consts::PI;

use edge3d::depthlift::{estimate_box3d, BoxFitMethod};
use edge3d::fusion::{ObjectRegistry, RegistryConfig};
use edge3d::geometry::{
    clip_convex, iou3d, polygon_area, project, Box2D, Box3D, CameraIntrinsics, Detection3D, ObjectClass, Pose, Vec2,
    Vec3,
};
use edge3d::metrics::{match_and_score, MetricsConfig};
use edge3d::motion::reproject_box2d;
use proptest::prelude::*;

fn boxes() -> impl Strategy<Value = Box3D> {
    (-1.0..1.0f64, -1.0..1.0f64, -0.5..0.5f64, 0.1..1.5f64, 0.1..1.5f64, 0.1..1.5f64, -PI..PI)
        .prop_map(|(x, y, z, l, w, h, yaw)| Box3D::new(Vec3::new(x, y, z), Vec3::new(l, w, h), yaw).unwrap())
}

/// Common translation plus common yaw about world-up.
fn rigid() -> impl Strategy<Value = (Vec3, f64)> {
    (-5.0..5.0f64, -5.0..5.0f64, -1.0..1.0f64, -PI..PI).prop_map(|(x, y, z, yaw)| (Vec3::new(x, y, z), yaw))
}

fn moved(b: &Box3D, (t, yaw): (Vec3, f64)) -> Box3D {
    let (s, c) = yaw.sin_cos();
    let p = b.center;
    let center = Vec3::new(c * p.x - s * p.y, s * p.x + c * p.y, p.z) + t;
    Box3D::new(center, b.dims, b.yaw + yaw).unwrap()
}

fn is_convex(poly: &[Vec2]) -> bool {
    let n = poly.len();
    if n < 3 {
        return true;
    }
    let mut sign = 0.0;
    for i in 0..n {
        let (a, b, c) = (poly[i], poly[(i + 1) % n], poly[(i + 2) % n]);
        let cross = (b - a).perp(&(c - b));
        if cross.abs() > 1e-12 {
            if sign != 0.0 && cross.signum() != sign {
                return false;
            }
            sign = cross.signum();
        }
    }
    true
}

proptest! {
    #[test]
    fn iou_is_symmetric_bounded_and_reflexive(a in boxes(), b in boxes()) {
        let ab = iou3d(&a, &b);
        prop_assert_eq!(ab.to_bits(), iou3d(&b, &a).to_bits());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((iou3d(&a, &a) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn iou_ignores_common_up_preserving_motion(a in boxes(), b in boxes(), m in rigid()) {
        prop_assert!((iou3d(&a, &b) - iou3d(&moved(&a, m), &moved(&b, m))).abs() <= 1e-9);
    }

    #[test]
    fn clipped_footprint_is_convex_and_no_larger(a in boxes(), b in boxes()) {
        let (fa, fb) = (a.footprint(), b.footprint());
        let clipped = clip_convex(&fa, &fb);
        prop_assert!(is_convex(&clipped));
        let area = polygon_area(&clipped).abs();
        prop_assert!(area <= polygon_area(&fa).abs().min(polygon_area(&fb).abs()) + 1e-12);
    }

    #[test]
    fn min_area_rect_never_exceeds_aabb(
        pts in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, 0.0..1.0f64), 3..60),
    ) {
        let mut points: Vec<Vec3> = pts.into_iter().map(|(x, y, z)| Vec3::new(x, y, z)).collect();
        // guarantee non-degenerate height and footprint
        points.extend([Vec3::new(-1.0, -1.0, 0.0), Vec3::new(1.0, -0.9, 1.0), Vec3::new(0.0, 1.0, 0.5)]);
        let pose = Pose::identity();
        let rect = estimate_box3d(&points, &pose, BoxFitMethod::MinAreaRect).unwrap();
        let aabb = estimate_box3d(&points, &pose, BoxFitMethod::Aabb).unwrap();
        prop_assert!(rect.dims.x * rect.dims.y <= aabb.dims.x * aabb.dims.y + 1e-9);
        // inclusive up to rounding
        let grow = |b: Box3D| Box3D { dims: b.dims.add_scalar(1e-9), ..b };
        for p in &points {
            prop_assert!(grow(rect).contains(p) && grow(aabb).contains(p));
        }
    }

    #[test]
    fn fused_box_stays_within_its_inputs(
        views in prop::collection::vec(
            (-0.2..0.2f64, -0.2..0.2f64, 0.2..0.4f64, 0.3..0.7f64, 0.3..0.7f64, 0.2..0.6f64, -0.3..0.3f64, 0.2..1.0f64),
            2..6,
        ),
    ) {
        let dets: Vec<Detection3D> = views
            .iter()
            .enumerate()
            .map(|(i, &(x, y, z, l, w, h, yaw, conf))| {
                Detection3D::new(Box3D::new(Vec3::new(x, y, z), Vec3::new(l, w, h), yaw).unwrap(), ObjectClass::Chair, conf, i as f64)
            })
            .collect();
        let mut reg = ObjectRegistry::new(RegistryConfig { stale_after: f64::INFINITY, ..Default::default() });
        let id = reg.insert(dets[0]);
        for d in &dets[1..] {
            reg.fuse(id, d).unwrap();
        }
        let fused = reg.get(id).unwrap();
        prop_assert_eq!(fused.view_count as usize, dets.len());
        for k in 0..3 {
            let lo = dets.iter().map(|d| d.box3d.dims[k]).fold(f64::INFINITY, f64::min);
            let hi = dets.iter().map(|d| d.box3d.dims[k]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(fused.box3d.dims[k] >= lo - 1e-12 && fused.box3d.dims[k] <= hi + 1e-12);
        }
        // inside the hull: no direction separates the fused center from all inputs
        for i in 0..64 {
            let (th, ph) = (i as f64 * 0.7, (i as f64 * 0.37).sin() * 1.4);
            let dir = Vec3::new(th.cos() * ph.cos(), th.sin() * ph.cos(), ph.sin());
            let proj: Vec<f64> = dets.iter().map(|d| d.box3d.center.dot(&dir)).collect();
            let c = fused.box3d.center.dot(&dir);
            prop_assert!(c >= proj.iter().cloned().fold(f64::INFINITY, f64::min) - 1e-12);
            prop_assert!(c <= proj.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1e-12);
        }
    }

    #[test]
    fn scores_ignore_common_up_preserving_motion(
        gts in prop::collection::vec(boxes(), 1..4),
        preds in prop::collection::vec((boxes(), 0.1..1.0f64), 0..4),
        m in rigid(),
    ) {
        let cfg = MetricsConfig::default();
        let g: Vec<(ObjectClass, Box3D)> = gts.iter().map(|b| (ObjectClass::Box, *b)).collect();
        let p: Vec<Detection3D> = preds.iter().map(|(b, c)| Detection3D::new(*b, ObjectClass::Box, *c, 0.0)).collect();
        let gm: Vec<(ObjectClass, Box3D)> = g.iter().map(|(c, b)| (*c, moved(b, m))).collect();
        let pm: Vec<Detection3D> = p.iter().map(|d| Detection3D { box3d: moved(&d.box3d, m), ..*d }).collect();
        let (a, b) = (match_and_score(&p, &g, &cfg).average(), match_and_score(&pm, &gm, &cfg).average());
        prop_assert!((a.mspa - b.mspa).abs() <= 1e-9);
        for (x, y) in a.recall.iter().zip(&b.recall) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }
}

/// Image box of a fronto-parallel square of half-size `r` centred on the
/// optical axis at depth `z` in `from`'s frame, seen from `to`.
fn square_box(from: &Pose, to: &Pose, z: f64, r: f64, intr: &CameraIntrinsics) -> Box2D {
    let (mut lo, mut hi) = ((f64::INFINITY, f64::INFINITY), (f64::NEG_INFINITY, f64::NEG_INFINITY));
    for (x, y) in [(-r, -r), (r, -r), (r, r), (-r, r)] {
        let p = to.inverse_transform_point(&from.transform_point(&Vec3::new(x, y, z)));
        let (u, v) = project(intr, &p).unwrap();
        lo = (lo.0.min(u), lo.1.min(v));
        hi = (hi.0.max(u), hi.1.max(v));
    }
    Box2D::new(lo.0, lo.1, hi.0, hi.1, ObjectClass::Box, 1.0).unwrap()
}

fn corner_error(a: &Box2D, b: &Box2D) -> f64 {
    [a.u_min - b.u_min, a.v_min - b.v_min, a.u_max - b.u_max, a.v_max - b.v_max]
        .iter()
        .map(|d| d.abs())
        .fold(0.0, f64::max)
}

proptest! {
    #[test]
    fn reprojection_error_grows_with_hint_error(dx in -0.3..0.3f64, dy in -0.3..0.3f64, dz in -0.3..0.3f64, z in 1.5..3.0f64) {
        let intr = CameraIntrinsics::headset_depth();
        let p0 = Pose::gravity_aligned(Vec3::new(0.0, 0.0, 1.0), 0.0, 0.0);
        let p1 = Pose { translation: Vec3::new(dx, dy, 1.0 + dz), ..p0 };
        let b0 = square_box(&p0, &p0, z, 0.2, &intr);
        let truth = square_box(&p0, &p1, z, 0.2, &intr);
        for side in [-1.0, 1.0] {
            let mut last = -1.0;
            for k in 0..10 {
                let hint = z * (1.0 + side * 0.04 * k as f64);
                let err = corner_error(&reproject_box2d(&b0, &p0, &p1, hint, &intr).unwrap(), &truth);
                prop_assert!(err >= last - 1e-9, "side {side}, step {k}: {err} < {last}");
                last = err;
            }
        }
    }

    #[test]
    fn reprojection_composes_for_translations(
        a in (-0.2..0.2f64, -0.2..0.2f64, -0.2..0.2f64),
        b in (-0.2..0.2f64, -0.2..0.2f64, -0.2..0.2f64),
        z in 1.5..3.0f64,
        heading in -PI..PI,
    ) {
        let intr = CameraIntrinsics::headset_depth();
        let p0 = Pose::gravity_aligned(Vec3::new(0.0, 0.0, 1.0), heading, 0.0);
        let p1 = Pose { translation: p0.translation + Vec3::new(a.0, a.1, a.2), ..p0 };
        let p2 = Pose { translation: p1.translation + Vec3::new(b.0, b.1, b.2), ..p0 };
        let b0 = square_box(&p0, &p0, z, 0.2, &intr);
        // the patch's depth in the intermediate camera
        let z1 = p1.inverse_transform_point(&p0.transform_point(&Vec3::new(0.0, 0.0, z))).z;
        let step = reproject_box2d(&reproject_box2d(&b0, &p0, &p1, z, &intr).unwrap(), &p1, &p2, z1, &intr).unwrap();
        let direct = reproject_box2d(&b0, &p0, &p2, z, &intr).unwrap();
        prop_assert!(corner_error(&step, &direct) <= 1.0);
    }

    #[test]
    fn identity_reprojection_is_identity(u in 40.0..280.0f64, v in 40.0..280.0f64, w in 5.0..40.0f64, h in 5.0..40.0f64, z in 0.5..4.0f64) {
        let intr = CameraIntrinsics::headset_depth();
        let pose = Pose::gravity_aligned(Vec3::new(1.0, 2.0, 1.5), 0.4, 0.3);
        let b = Box2D::new(u, v, u + w, v + h, ObjectClass::Bag, 0.8).unwrap();
        prop_assert!(corner_error(&reproject_box2d(&b, &pose, &pose, z, &intr).unwrap(), &b) <= 0.5);
    }
}
