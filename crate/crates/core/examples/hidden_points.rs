//! Hidden point removal on a sampled sphere: compares the points kept from
//! a viewpoint with the analytic visible cap.
//!
//! ```bash
//! cargo run --example hidden_points
//! ```

use inspection_path::cloud::PointCloud;
use inspection_path::geom::Vec3;
use inspection_path::visibility::{hidden_point_removal, DEFAULT_RADIUS_SCALE};
use inspection_path::Result;

fn main() -> Result<()> {
    let n = 3000;
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let points: Vec<Vec3> = (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect();
    let cloud = PointCloud::from_points(points);
    for distance in [1.5, 2.0, 5.0] {
        let camera = Vec3::new(0.0, -distance, 0.0);
        let kept = hidden_point_removal(&cloud, camera, DEFAULT_RADIUS_SCALE)?;
        // a unit-sphere point is visible when p · camera > 1
        let visible = cloud.points.iter().filter(|p| p.dot(camera) > 1.0).count();
        println!(
            "camera at {distance:.1} radii: kept {} points, {visible} analytically visible",
            kept.len()
        );
    }
    Ok(())
}
