//! Renders frames of a bundled scene into a replay directory that `inspect
//! run --frames` (or `ReplaySource`) reads back.
//!
//! ```bash
//! cargo run --example render_frames -- strobe_plane /tmp/capture 5
//! ```

use std::path::PathBuf;

use inspection_path::io::{write_replay, ReplaySource};
use inspection_path::cli::load_scene;
use inspection_path::synth::render_frame;
use inspection_path::Result;

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "strobe_plane".into());
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("capture"));
    let count: usize = args.next().and_then(|n| n.parse().ok()).unwrap_or(5);

    let scene = load_scene(&name)?;
    let frames = (0..count)
        .map(|i| render_frame(&scene.scene, &scene.camera, &scene.noise, 0, i))
        .collect::<Result<Vec<_>>>()?;
    for (i, f) in frames.iter().enumerate() {
        let total = f.depth.width * f.depth.height;
        println!("frame {i}: {} of {total} pixels have depth", f.depth.valid_count());
    }
    write_replay(&out, &frames)?;
    let replay = ReplaySource::open(&out)?;
    println!("wrote {} frames to {}", replay.len(), out.display());
    Ok(())
}
