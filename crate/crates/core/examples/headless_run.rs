//! End-to-end run into a run directory with the default configuration,
//! then a replay of the archived record into a second directory.
//!
//! ```bash
//! cargo run --example headless_run -- inclined_plane /tmp/runs
//! ```

use std::path::PathBuf;

use inspection_path::cli::{load_scene, summary_table};
use inspection_path::config::PipelineConfig;
use inspection_path::pipeline::{create_run_dir, replay, run, RunDir, SourceSpec};
use inspection_path::Result;

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "inclined_plane".into());
    let root = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("runs"));
    let scene = load_scene(&name)?;

    let spec = SourceSpec::Scene { scene, seed: 0 };
    let (_, dir) = create_run_dir(&root)?;
    let record = run(spec.open()?.as_mut(), &PipelineConfig::default(), Some(spec), &dir)?;
    print!("{}", summary_table(&record, false));
    println!("run directory {}", dir.display());

    let (_, again) = create_run_dir(&root)?;
    replay(&record, &again)?;
    let same = std::fs::read(RunDir(dir).plan()).ok() == std::fs::read(RunDir(again.clone()).plan()).ok();
    println!("replayed into {}: plan identical {same}", again.display());
    Ok(())
}
