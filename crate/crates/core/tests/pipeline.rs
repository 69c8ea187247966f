use std::collections::HashSet;

use inspection_path::config::{parse_config, PipelineConfig};
use inspection_path::error::Error;
use inspection_path::geom::Vec3;
use inspection_path::io::read_cloud;
use inspection_path::pipeline::{
    process, read_json, resume, run, sha256_hex, Manifest, RunDir, RunRecord, Selection, SourceSpec, STAGE_DOWNSAMPLED,
    STAGE_MERGED, STAGE_VISIBLE,
};
use inspection_path::synth::{scenes, SceneFile, SyntheticSource};
use proptest::prelude::*;

fn bits(v: Vec3) -> [u64; 3] {
    [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()]
}

/// Checks the plan of one in-memory run against its own intermediate clouds.
fn check_run(file: &SceneFile, seed: u64, config: &PipelineConfig) {
    let mut src = SyntheticSource::from_file(file, seed);
    let (acq, planned) = process(&mut src, config).unwrap();
    let c = &acq.counts;
    assert!(c.visible <= c.merged && c.downsampled <= c.visible);
    assert!(planned.object.len() <= c.downsampled);
    assert!(planned.profiles.point_count() <= planned.object.len());
    assert_eq!(planned.plan.generated, planned.profiles.point_count());
    assert_eq!(planned.plan.targets.len() + planned.plan.dropped.total(), planned.plan.generated);

    // rows are disjoint subsets of the object cloud
    let object: HashSet<[u64; 3]> = planned.object.points.iter().map(|&p| bits(p)).collect();
    let mut seen = HashSet::new();
    for row in &planned.profiles.rows {
        for &p in &row.points {
            assert!(object.contains(&bits(p)));
            assert!(seen.insert(bits(p)), "point in two rows");
        }
        let along: Vec<f64> = row.points.iter().map(|p| p.dot(row.axis)).collect();
        assert!(along.windows(2).all(|w| w[1] > w[0]));
    }

    // orthogonality, clearance and spacing of every surviving target
    let p = &planned.plan.params;
    for t in &planned.plan.targets {
        let n = t.surface_normal;
        assert!((n.norm() - 1.0).abs() < 1e-9);
        assert!(t.position().distance(t.surface_point + n * p.standoff) < 1e-9);
        assert!(t.pose.rotation.z_axis().distance(-n) < 1e-9);
        assert!(t.position().z >= p.ground_z + p.min_clearance);
    }
    for w in planned.plan.targets.windows(2) {
        if w[0].row == w[1].row {
            assert!(w[0].position().distance(w[1].position()) >= 2.0 * p.voxel - 1e-12);
        }
    }
}

#[test]
fn noise_free_inclined_plane_satisfies_the_target_invariants() {
    check_run(&scenes::inclined_plane(), 0, &PipelineConfig::default());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_scene_satisfies_the_target_invariants(
        scene in 0usize..6,
        seed in 0u64..1000,
        s in 1usize..4,
        voxel in 0.015f64..0.03,
        standoff in 0.1f64..0.5,
    ) {
        let (_, file) = scenes::all().swap_remove(scene);
        let config = PipelineConfig { s, voxel, standoff, ..PipelineConfig::default() };
        check_run(&file, seed, &config);
    }
}

#[test]
fn more_samples_give_at_least_as_many_profile_points() {
    let file = scenes::strobe_plane();
    let profile_points = |s: usize, seed: u64| {
        let config = PipelineConfig {
            s,
            ..PipelineConfig::default()
        };
        let mut src = SyntheticSource::from_file(&file, seed);
        process(&mut src, &config).unwrap().1.profiles.point_count()
    };
    let wins = (0..100).filter(|&seed| profile_points(5, seed) >= profile_points(1, seed)).count();
    assert!(wins >= 95, "s=5 matched or beat s=1 in {wins}/100 seeds");
}

#[test]
fn unknown_config_keys_are_named() {
    let e = parse_config(br#"{"voxel": 0.02, "voxle": 0.03}"#).unwrap_err();
    assert!(matches!(e, Error::Config { .. }), "{e}");
    assert!(e.to_string().contains("voxle"), "{e}");
}

fn persisted_run(dir: &std::path::Path, scene: SceneFile, seed: u64, config: &PipelineConfig) -> RunRecord {
    let spec = SourceSpec::Scene { scene, seed };
    let mut src = spec.open().unwrap();
    run(src.as_mut(), config, Some(spec), dir).unwrap()
}

#[test]
fn manifest_hashes_match_the_stage_files() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run-0001");
    let record = persisted_run(&dir, scenes::sphere(), 2, &PipelineConfig::default());
    let run = RunDir(dir);
    let manifest: Manifest = read_json(&run.manifest()).unwrap();
    for (name, entry) in &manifest.stages {
        let bytes = std::fs::read(run.0.join(&entry.file)).unwrap();
        assert_eq!(sha256_hex(&bytes), entry.sha256, "{name}");
        assert_eq!(read_cloud(&run.0.join(&entry.file)).unwrap().len(), entry.points, "{name}");
    }
    let points = |stage: &str| manifest.stages[stage].points;
    assert_eq!(points(STAGE_MERGED), record.counts.merged);
    assert_eq!(points(STAGE_VISIBLE), record.counts.visible);
    assert_eq!(points(STAGE_DOWNSAMPLED), record.counts.downsampled);
    let plan = record.plan.unwrap();
    assert_eq!(sha256_hex(&std::fs::read(run.plan()).unwrap()), plan.sha256);
    assert!(record.timings_ms.values().all(|&t| t >= 0.0));
}

#[test]
fn resuming_twice_keeps_the_upstream_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run-0001");
    let config = PipelineConfig {
        s: 2,
        cluster_selection: inspection_path::clustering::ClusterSelection::Policy(
            inspection_path::clustering::SelectionPolicy::Interactive,
        ),
        ..PipelineConfig::default()
    };
    persisted_run(&dir, scenes::two_objects(), 5, &config);
    let run = RunDir(dir.clone());
    let upstream = || {
        [STAGE_MERGED, STAGE_VISIBLE, STAGE_DOWNSAMPLED]
            .map(|s| sha256_hex(&std::fs::read(run.stage(s)).unwrap()))
    };
    let before = upstream();
    let a = resume(&dir, &Selection::ids(vec![0])).unwrap();
    let b = resume(&dir, &Selection::ids(vec![1])).unwrap();
    assert_eq!(upstream(), before);
    let (pa, pb) = (a.plan.unwrap(), b.plan.unwrap());
    assert_eq!((pa.version, pb.version), (1, 2));
    assert_ne!(pa.sha256, pb.sha256);
    assert_eq!(sha256_hex(&std::fs::read(run.plan_version(1)).unwrap()), pa.sha256);

    let e = resume(&dir, &Selection::ids(vec![])).unwrap_err();
    assert!(matches!(e.root(), Error::EmptyProfile(_)), "{e}");
    let e = resume(&dir, &Selection::ids(vec![2])).unwrap_err();
    assert!(matches!(e.root(), Error::InvalidArgument(_)), "{e}");
}

#[test]
fn timings_do_not_reach_the_plan() {
    let tmp = tempfile::tempdir().unwrap();
    let a = persisted_run(&tmp.path().join("a"), scenes::cylinder(), 8, &PipelineConfig::default());
    let b = persisted_run(&tmp.path().join("b"), scenes::cylinder(), 8, &PipelineConfig::default());
    assert_eq!(a.plan.unwrap().sha256, b.plan.unwrap().sha256);
    assert_eq!(a.counts, b.counts);
}
