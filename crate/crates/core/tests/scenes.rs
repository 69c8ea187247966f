//! Bundled scene files stay in sync with the scene builders.

use std::path::PathBuf;

use inspection_path::synth::{scenes, SceneFile};

fn scene_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenes")
}

#[test]
fn scene_files_match_builders() {
    let update = std::env::var_os("UPDATE_SCENES").is_some();
    for (name, scene) in scenes::all() {
        let path = scene_dir().join(format!("{name}.json"));
        if update {
            let mut text = serde_json::to_vec_pretty(&scene).unwrap();
            text.push(b'\n');
            std::fs::write(&path, text).unwrap();
        }
        let text = std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let parsed: SceneFile = serde_json::from_slice(&text).unwrap();
        assert_eq!(parsed, scene, "{name}");
    }
}
