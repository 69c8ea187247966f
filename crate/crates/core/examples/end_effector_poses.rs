//! Orthogonal target rotations and the mapping from camera poses to
//! end-effector poses through a hand-eye calibration and a base pose.
//!
//! ```bash
//! cargo run --example end_effector_poses
//! ```

use inspection_path::geom::{align_z_to_normal, rotation_from_axis_angle, RigidTransform, Vec3};
use inspection_path::target::finalize_plan;
use inspection_path::Result;

fn main() -> Result<()> {
    for n in [Vec3::Z, -Vec3::Z, Vec3::new(1.0, -1.0, 0.5).normalize()] {
        let r = align_z_to_normal(n);
        let [w, x, y, z] = r.quaternion();
        let zc = r.z_axis();
        println!(
            "n = ({:.3}, {:.3}, {:.3}) -> q = [{w:.4}, {x:.4}, {y:.4}, {z:.4}], R·z = ({:.3}, {:.3}, {:.3})",
            n.x, n.y, n.z, zc.x, zc.y, zc.z
        );
    }

    // camera 0.3 m in front of a wall point, looking at it
    let surface = Vec3::new(0.5, 0.0, 0.4);
    let normal = Vec3::new(0.0, -1.0, 0.0);
    let targets = vec![inspection_path::target::TargetPose {
        id: 0,
        row: 0,
        source_index: 0,
        surface_point: surface,
        surface_normal: normal,
        pose: RigidTransform::new(align_z_to_normal(-normal), surface + normal * 0.3),
    }];
    // camera mounted 0.1 m along the flange z axis; robot base 0.2 m up
    let hand_eye = RigidTransform::from_translation(Vec3::new(0.0, 0.0, 0.1));
    let base = RigidTransform::new(
        rotation_from_axis_angle(Vec3::Z, std::f64::consts::FRAC_PI_2)?,
        Vec3::new(0.0, 0.0, 0.2),
    );
    let out = finalize_plan(&targets, false, &hand_eye, &base);
    let (c, f) = (targets[0].pose.translation, out[0].pose.translation);
    println!(
        "camera at ({:.3}, {:.3}, {:.3}) in the world -> flange at ({:.3}, {:.3}, {:.3}) in the base frame",
        c.x, c.y, c.z, f.x, f.y, f.z
    );
    Ok(())
}
