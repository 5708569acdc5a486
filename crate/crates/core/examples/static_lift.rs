//! Lift every oracle 2D detection of the acceptance scene from one static
//! viewpoint and compare the fitted boxes with ground truth.
//!
//! cargo run --example static_lift

use edge3d::depthlift::{lift, BoxFitMethod, FilterConfig};
use edge3d::geometry::{iou3d, CameraIntrinsics, Pose, Vec3};
use edge3d::metrics::spa;
use edge3d::simkit::{oracle_detect2d_indexed, render_depth, NoiseSpec, Scene};

fn main() {
    let scene = Scene::acceptance();
    let intr = CameraIntrinsics::headset_depth();
    let viewpoints = [
        ("front", Pose::gravity_aligned(Vec3::new(-2.0, 0.0, 1.5), 0.0, 1.2f64.atan2(2.0))),
        ("side", Pose::gravity_aligned(Vec3::new(0.0, -1.5, 1.5), std::f64::consts::FRAC_PI_2, 1.2f64.atan2(1.5))),
    ];
    for (name, pose) in viewpoints {
        for noise in [NoiseSpec::zero(), NoiseSpec::default()] {
            let frame = render_depth(&scene, &pose, &intr, &noise, 7, 0.0);
            let label = if noise == NoiseSpec::zero() { "zero noise" } else { "default noise" };
            println!("{name} view, {label}: {} valid depth pixels", frame.valid_count());
            for (i, b) in oracle_detect2d_indexed(&scene, &pose, &intr, &noise, 7) {
                let gt = &scene.objects[i].box3d;
                for method in [BoxFitMethod::Aabb, BoxFitMethod::MinAreaRect] {
                    match lift(&frame, &b, &FilterConfig::default(), method) {
                        Ok(d) => println!(
                            "  {:<7} {:?}: IoU {:.3}  SPA {:.3}  dims {:.3} {:.3} {:.3}  (gt {:.3} {:.3} {:.3})",
                            b.class.name(),
                            method,
                            iou3d(&d.box3d, gt),
                            spa(&d.box3d, gt),
                            d.box3d.dims.x,
                            d.box3d.dims.y,
                            d.box3d.dims.z,
                            gt.dims.x,
                            gt.dims.y,
                            gt.dims.z
                        ),
                        Err(e) => println!("  {:<7} {:?}: {e}", b.class.name(), method),
                    }
                }
            }
        }
    }
}
