//! A low, grazing view of an object mostly sees its near face, so a single
//! lifted box underestimates the extent along the viewing ray. Fusing two
//! views taken along the object's two horizontal axes combines the extent
//! each one observed well.
//!
//! cargo run --example fusion

use edge3d::depthlift::{lift, BoxFitMethod, FilterConfig};
use edge3d::fusion::{ObjectRegistry, RegistryConfig};
use edge3d::geometry::{iou3d, CameraIntrinsics, Pose, Vec3};
use edge3d::simkit::{oracle_detect2d, render_depth, NoiseSpec, Scene};

fn main() {
    let intr = CameraIntrinsics::headset_depth();
    let noise = NoiseSpec::default();
    for (n, object) in Scene::acceptance().objects.into_iter().enumerate() {
        let scene = Scene::new(vec![object], 0.0).expect("valid object");
        let c = object.box3d.center;
        // Eye 10 cm above the top, 1.5 m out, facing each side face.
        let eye = object.box3d.z_max() + 0.1;
        let views = [0.0, std::f64::consts::FRAC_PI_2].map(|turn| {
            let heading = object.box3d.yaw + turn;
            let back = Vec3::new(heading.cos(), heading.sin(), 0.0) * 1.5;
            Pose::gravity_aligned(Vec3::new(c.x - back.x, c.y - back.y, eye), heading, (eye - c.z).atan2(1.5))
        });
        let mut registry = ObjectRegistry::new(RegistryConfig { stale_after: f64::INFINITY, ..Default::default() });
        let mut singles = Vec::new();
        for (k, pose) in views.iter().enumerate() {
            let seed = (10 * n + k) as u64;
            let frame = render_depth(&scene, pose, &intr, &noise, seed, k as f64);
            for b in oracle_detect2d(&scene, pose, &intr, &noise, seed) {
                let Ok(mut det) = lift(&frame, &b, &FilterConfig::default(), BoxFitMethod::MinAreaRect) else {
                    continue;
                };
                det.last_update = k as f64;
                singles.push(iou3d(&det.box3d, &object.box3d));
                registry.insert_or_fuse(det);
            }
        }
        let fused: Vec<f64> = registry.iter().map(|(_, d)| iou3d(&d.box3d, &object.box3d)).collect();
        println!("{:<7} single views {:.3?} -> fused {:.3?}", object.class.name(), singles, fused);
    }
}
