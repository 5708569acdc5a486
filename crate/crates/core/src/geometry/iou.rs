use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::polygon::{clip_convex, polygon_area, AREA_EPS};
use super::{Box3D, Vec3};

fn order_key(b: &Box3D) -> [u64; 7] {
    [
        b.center.x.to_bits(),
        b.center.y.to_bits(),
        b.center.z.to_bits(),
        b.dims.x.to_bits(),
        b.dims.y.to_bits(),
        b.dims.z.to_bits(),
        b.yaw.to_bits(),
    ]
}

/// Volumetric IoU of two yaw-oriented boxes.
///
/// The footprint intersection is the convex clip of the two rotated
/// rectangles; it is multiplied by the vertical overlap. Arguments are put in
/// a canonical order first so that `iou3d(a, b)` and `iou3d(b, a)` run the same
/// floating-point operations.
pub fn iou3d(a: &Box3D, b: &Box3D) -> f64 {
    if a == b {
        return 1.0;
    }
    let (a, b) = if order_key(a) <= order_key(b) { (a, b) } else { (b, a) };

    let dz = a.z_max().min(b.z_max()) - a.z_min().max(b.z_min());
    if dz <= 0.0 {
        return 0.0;
    }
    let inter_poly = clip_convex(&a.footprint(), &b.footprint());
    let area = polygon_area(&inter_poly).abs();
    if area <= AREA_EPS {
        return 0.0;
    }
    let inter = area * dz;
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Monte-Carlo IoU estimate by uniform sampling of the axis-aligned volume
/// enclosing both boxes. Deterministic for a fixed seed.
pub fn iou3d_mc(a: &Box3D, b: &Box3D, n_samples: usize, seed: u64) -> f64 {
    let n_samples = n_samples.max(1);
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for c in a.corners().iter().chain(b.corners().iter()) {
        lo = lo.inf(c);
        hi = hi.sup(c);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut both, mut either) = (0u64, 0u64);
    for _ in 0..n_samples {
        let p = Vec3::new(
            lo.x + (hi.x - lo.x) * rng.random::<f64>(),
            lo.y + (hi.y - lo.y) * rng.random::<f64>(),
            lo.z + (hi.z - lo.z) * rng.random::<f64>(),
        );
        let in_a = a.contains(&p);
        let in_b = b.contains(&p);
        both += (in_a && in_b) as u64;
        either += (in_a || in_b) as u64;
    }
    if either == 0 {
        0.0
    } else {
        both as f64 / either as f64
    }
}
