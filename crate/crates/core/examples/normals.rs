//! Covariance normals on a downsampled sphere scan, compared with the
//! renderer's ground truth.
//!
//! ```bash
//! cargo run --example normals
//! ```

use inspection_path::acquisition::{generate_point_cloud, FrameSource};
use inspection_path::cloud::{estimate_normals, voxel_downsample};
use inspection_path::synth::{scenes, SyntheticSource};
use inspection_path::Result;

fn main() -> Result<()> {
    let file = scenes::sphere();
    let mut source = SyntheticSource::from_file(&file, 0);
    let frame = source.next_frame()?.expect("synthetic sources never run dry");
    let eye = frame.camera_pose.translation;
    let cloud = voxel_downsample(&generate_point_cloud(&frame)?, 0.02)?;
    for k in [5, 10, 30] {
        let with_normals = estimate_normals(&cloud, k, eye)?;
        let normals = with_normals.normals.as_ref().expect("normals were estimated");
        let mut errors: Vec<f64> = with_normals
            .points
            .iter()
            .zip(normals)
            .filter_map(|(&p, &n)| {
                let truth = file.scene.closest_surface(p)?.normal;
                Some(n.angle_to(truth).to_degrees())
            })
            .collect();
        errors.sort_by(f64::total_cmp);
        println!(
            "k={k:>2}: median error {:.2}°, 95th percentile {:.2}° over {} points",
            errors[errors.len() / 2],
            errors[errors.len() * 95 / 100],
            errors.len()
        );
    }
    Ok(())
}
