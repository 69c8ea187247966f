//! The target filter chain on a hand-made row: a ghost that jumps against
//! the row trend, a target under the clearance height, and near duplicates.
//!
//! ```bash
//! cargo run --example target_filters
//! ```

use inspection_path::geom::Vec3;
use inspection_path::profile::{Profile, ProfileSet};
use inspection_path::target::{plan_from_profiles, PlanParams};
use inspection_path::Result;

fn main() -> Result<()> {
    let mut points: Vec<Vec3> = (0..12).map(|i| Vec3::new(0.05 * i as f64, 0.0, 0.3)).collect();
    points[3] = Vec3::new(0.15, 0.4, 0.9); // ghost: off trend in y and z
    points[8] = Vec3::new(0.40, 0.0, -0.3); // its target falls below the clearance
    points.insert(5, Vec3::new(0.21, 0.0, 0.3)); // 1 cm from its neighbor
    let profile = Profile {
        row: 0,
        normals: vec![Vec3::new(0.0, -1.0, 0.0); points.len()],
        source: (0..points.len()).collect(),
        points,
        axis: Vec3::X,
    };
    let profiles = ProfileSet {
        rows: vec![profile],
        ..ProfileSet::default()
    };
    let params = PlanParams {
        decimation_n: 1,
        ..PlanParams::default()
    };
    let plan = plan_from_profiles(&profiles, &params)?;
    let d = &plan.dropped;
    println!("generated {}", plan.generated);
    println!("anomaly    dropped {:?}", d.anomaly);
    println!("threshold  dropped {:?}", d.threshold);
    println!("proximity  dropped {:?}", d.proximity);
    println!("decimation dropped {:?}", d.decimation);
    let kept: Vec<usize> = plan.targets.iter().map(|t| t.id).collect();
    println!("kept {kept:?} (row reversed for the final plan)");
    Ok(())
}
