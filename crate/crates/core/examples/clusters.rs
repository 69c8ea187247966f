//! Clusters the two-object scene and prints one summary per cluster; these
//! are the ids an operator (or `--select`) chooses from.
//!
//! ```bash
//! cargo run --example clusters
//! ```

use inspection_path::config::PipelineConfig;
use inspection_path::pipeline::acquire;
use inspection_path::synth::{scenes, SyntheticSource};
use inspection_path::Result;

fn main() -> Result<()> {
    let config = PipelineConfig {
        s: 3,
        ..PipelineConfig::default()
    };
    let mut source = SyntheticSource::from_file(&scenes::two_objects(), 0);
    let acquired = acquire(&mut source, &config)?;
    let clusters = &acquired.clusters;
    println!(
        "{} points, {} clusters, {} noise (eps {:.3} m, min_pts {})",
        acquired.processed.len(),
        clusters.cluster_count(),
        clusters.noise_count(),
        config.dbscan_eps(),
        config.dbscan.min_pts
    );
    for s in &clusters.summaries {
        let c = s.centroid;
        println!("cluster {}: {} points around ({:.2}, {:.2}, {:.2})", s.id, s.count, c.x, c.y, c.z);
    }
    println!("largest: {:?}", clusters.largest());
    Ok(())
}
