//! A 2D box detected 250 ms ago, while the wearer walks sideways at 1 m/s:
//! lift it as-is, or move it through the pose change first.
//!
//! cargo run --example motion_compensation

use edge3d::depthlift::{lift, BoxFitMethod, FilterConfig};
use edge3d::geometry::{iou3d, CameraIntrinsics, Pose, Vec3};
use edge3d::motion::{depth_hint, reproject_box2d};
use edge3d::simkit::{oracle_detect2d_indexed, render_depth, NoiseSpec, Scene};

fn main() {
    let scene = Scene::acceptance();
    let intr = CameraIntrinsics::headset_depth();
    let noise = NoiseSpec::zero();
    let pitch = 1.2f64.atan2(2.0);
    let p0 = Pose::gravity_aligned(Vec3::new(-2.0, 0.0, 1.5), 0.0, pitch);
    let p1 = Pose::gravity_aligned(Vec3::new(-2.0, 0.25, 1.5), 0.0, pitch);
    let then = render_depth(&scene, &p0, &intr, &noise, 0, 0.0);
    let now = render_depth(&scene, &p1, &intr, &noise, 1, 0.25);

    println!("{:<7} {:>10} {:>12}", "object", "stale IoU", "moved IoU");
    for (i, b) in oracle_detect2d_indexed(&scene, &p0, &intr, &noise, 0) {
        let gt = &scene.objects[i].box3d;
        let score =
            |b| lift(&now, b, &FilterConfig::default(), BoxFitMethod::MinAreaRect).map_or(0.0, |d| iou3d(&d.box3d, gt));
        let z = depth_hint(&then, &b, None).expect("object visible at capture");
        let moved = reproject_box2d(&b, &p0, &p1, z, &intr).expect("object still in view");
        println!("{:<7} {:>10.3} {:>12.3}", b.class.name(), score(&b), score(&moved));
    }
}
