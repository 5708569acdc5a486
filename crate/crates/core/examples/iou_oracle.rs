//! Exact rotated-box IoU against a Monte-Carlo estimate on a few box pairs.
//!
//! cargo run --example iou_oracle

use edge3d::geometry::{iou3d, iou3d_mc, Box3D, Vec3};

fn main() {
    let cube = |x: f64, yaw: f64| Box3D::new(Vec3::new(x, 0.0, 0.5), Vec3::repeat(1.0), yaw).unwrap();
    let pairs = [
        ("identical", cube(0.0, 0.0), cube(0.0, 0.0)),
        ("half-offset cubes", cube(0.0, 0.0), cube(0.5, 0.0)),
        ("concentric, 45° turn", cube(0.0, 0.0), cube(0.0, std::f64::consts::FRAC_PI_4)),
        (
            "chair vs shifted, turned chair",
            Box3D::new(Vec3::new(0.0, 0.0, 0.45), Vec3::new(0.5, 0.5, 0.9), 0.2).unwrap(),
            Box3D::new(Vec3::new(0.1, -0.05, 0.4), Vec3::new(0.45, 0.55, 0.8), -0.3).unwrap(),
        ),
        ("disjoint", cube(0.0, 0.0), cube(3.0, 0.0)),
    ];
    println!("{:<32} {:>10} {:>10}", "pair", "exact", "mc(200k)");
    for (name, a, b) in pairs {
        println!("{name:<32} {:>10.6} {:>10.6}", iou3d(&a, &b), iou3d_mc(&a, &b, 200_000, 1));
    }
}
