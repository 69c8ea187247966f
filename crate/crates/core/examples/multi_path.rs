//! Slicing modes: three rows across a cylinder, and two perpendicular arcs
//! over a sphere from two direction specs.
//!
//! ```bash
//! cargo run --example multi_path
//! ```

use inspection_path::config::{PipelineConfig, Slices};
use inspection_path::geom::Vec3;
use inspection_path::pipeline::process;
use inspection_path::profile::SliceSpec;
use inspection_path::synth::{scenes, SceneFile, SyntheticSource};
use inspection_path::Result;

fn show(name: &str, file: &SceneFile, slices: Vec<SliceSpec>) -> Result<()> {
    let config = PipelineConfig {
        s: 3,
        slice: Slices(slices),
        ..PipelineConfig::default()
    };
    let (_, planned) = process(&mut SyntheticSource::from_file(file, 0), &config)?;
    println!("{name}:");
    for row in &planned.profiles.rows {
        let targets = planned.plan.targets.iter().filter(|t| t.row == row.row).count();
        let a = row.axis;
        println!(
            "  row {}: {} profile points along ({:.2}, {:.2}, {:.2}), {targets} targets",
            row.row,
            row.len(),
            a.x,
            a.y,
            a.z
        );
    }
    Ok(())
}

fn main() -> Result<()> {
    show(
        "cylinder, auto axis, three rows",
        &scenes::cylinder(),
        vec![SliceSpec {
            row_count: 3,
            ..SliceSpec::default()
        }],
    )?;
    show(
        "sphere, two perpendicular directions",
        &scenes::sphere(),
        vec![SliceSpec::along(Vec3::X), SliceSpec::along(Vec3::Z)],
    )
}
