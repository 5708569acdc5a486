//! Write a rendered depth frame as a DPF1 file and read it back.
//!
//! cargo run --example dpf1_fixture [path]

use std::fs::File;
use std::io::{BufReader, BufWriter};

use edge3d::depthlift::DepthFrame;
use edge3d::geometry::{CameraIntrinsics, Pose, Vec3};
use edge3d::simkit::{render_depth, NoiseSpec, Scene};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| std::env::temp_dir().join("acceptance_front.dpf1").display().to_string());
    let pose = Pose::gravity_aligned(Vec3::new(-2.0, 0.0, 1.5), 0.0, 1.2f64.atan2(2.0));
    let frame =
        render_depth(&Scene::acceptance(), &pose, &CameraIntrinsics::headset_depth(), &NoiseSpec::default(), 42, 0.5);
    frame.write_dpf1(BufWriter::new(File::create(&path)?))?;
    let back = DepthFrame::read_dpf1(BufReader::new(File::open(&path)?))?;
    let size = std::fs::metadata(&path)?.len();
    println!("{path}: {size} bytes, {} valid pixels, round trip exact: {}", back.valid_count(), back == frame);
    Ok(())
}
