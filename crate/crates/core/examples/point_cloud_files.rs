//! Writes one cloud as ASCII PLY, binary PLY and XYZ, then reads each back.
//!
//! ```bash
//! cargo run --example point_cloud_files -- /tmp/clouds
//! ```

use std::path::PathBuf;

use inspection_path::acquisition::{generate_point_cloud, FrameSource};
use inspection_path::cloud::{estimate_normals, voxel_downsample};
use inspection_path::io::{read_cloud, write_cloud, CloudFormat};
use inspection_path::synth::{scenes, SyntheticSource};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("clouds"));
    std::fs::create_dir_all(&dir)?;
    let mut source = SyntheticSource::from_file(&scenes::cylinder(), 0);
    let frame = source.next_frame()?.expect("synthetic sources never run dry");
    let down = voxel_downsample(&generate_point_cloud(&frame)?, 0.02)?;
    let cloud = estimate_normals(&down, 10, frame.camera_pose.translation)?;
    for (name, format) in [
        ("cloud_ascii.ply", CloudFormat::PlyAscii),
        ("cloud.ply", CloudFormat::PlyBinary),
        ("cloud.xyz", CloudFormat::Xyz),
    ] {
        let path = dir.join(name);
        write_cloud(&cloud, &path, format)?;
        let back = read_cloud(&path)?;
        let bytes = std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
        let position_error = cloud
            .points
            .iter()
            .zip(&back.points)
            .map(|(a, b)| a.distance(*b))
            .fold(0.0, f64::max);
        // colors are stored as 8-bit channels
        let color_error = match (&cloud.colors, &back.colors) {
            (Some(a), Some(b)) => a
                .iter()
                .zip(b)
                .flat_map(|(x, y)| (0..3).map(move |k| (x[k] - y[k]).abs()))
                .fold(0.0, f64::max),
            _ => f64::NAN,
        };
        println!(
            "{}: {bytes} bytes, {} points, normals {}, max position error {position_error:.1e} m, \
             max color error {color_error:.4}",
            path.display(),
            back.len(),
            back.has_normals(),
        );
    }
    Ok(())
}
