//! Samples a strobing sensor and shows which frames the point-count vote
//! keeps: lit and dark frames form two groups and the larger group wins.
//!
//! ```bash
//! cargo run --example majority_vote
//! ```

use inspection_path::acquisition::{majority_vote_merge, sample_clouds, DEFAULT_VOTE_TOLERANCE};
use inspection_path::cloud::CropBox;
use inspection_path::synth::{scenes, SyntheticSource};
use inspection_path::Result;

fn main() -> Result<()> {
    for s in [1, 4, 5] {
        let mut source = SyntheticSource::from_file(&scenes::strobe_plane(), 3);
        let clouds = sample_clouds(&mut source, s, &CropBox::unbounded(), 0.0)?;
        let counts: Vec<usize> = clouds.iter().map(|c| c.len()).collect();
        let vote = majority_vote_merge(&clouds, DEFAULT_VOTE_TOLERANCE)?;
        println!(
            "s={s}: counts {counts:?} -> frames {:?} kept, {} merged points",
            vote.selected,
            vote.cloud.len()
        );
    }
    Ok(())
}
