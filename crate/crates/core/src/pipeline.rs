//! End-to-end orchestration: frames to plan, with every intermediate
//! artifact persisted in a run directory.
//!
//! Run directory layout:
//!
//! ```text
//! run-<id>/
//!   session.json            operator session state
//!   record.json             latest RunRecord
//!   manifest.json           stage files with content hashes
//!   clusters.json           DBSCAN labels and summaries
//!   stage-<name>.ply        intermediate clouds
//!   plan.json               latest plan
//!   plans/plan-NNNN.json    every plan version
//!   plans/record-NNNN.json  the record that produced each version
//! ```
//!
//! A run stops after clustering. Headless runs then apply the configured
//! selection through [`resume`], the same path an operator selection takes,
//! so both produce identical plans.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::acquisition::{majority_vote_merge, sample_clouds, Frame, FrameSource};
use crate::cloud::{estimate_normals, voxel_downsample, PointCloud};
use crate::clustering::{dbscan, select_clusters, ClusterSelection, ClusterSet, SelectionPolicy};
use crate::config::{PipelineConfig, Slices};
use crate::error::{Error, Result};
use crate::geom::{RigidTransform, Vec3};
use crate::io::{read_cloud, write_cloud, CloudFormat, ReplaySource};
use crate::profile::{extract_all, ProfileSet};
use crate::synth::{SceneFile, SyntheticSource};
use crate::target::{plan_from_profiles, PathPlan};
use crate::visibility::hidden_point_removal;

pub const STAGE_MERGED: &str = "merged";
pub const STAGE_VISIBLE: &str = "visible";
pub const STAGE_DOWNSAMPLED: &str = "downsampled";
pub const STAGE_OBJECT: &str = "object";
pub const STAGE_PROFILE: &str = "profile";

/// Where frames came from, recorded so a run can be replayed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SourceSpec {
    Scene { scene: SceneFile, seed: u64 },
    Replay { dir: PathBuf },
}

impl SourceSpec {
    pub fn open(&self) -> Result<Box<dyn FrameSource>> {
        Ok(match self {
            SourceSpec::Scene { scene, seed } => Box::new(SyntheticSource::from_file(scene, *seed)),
            SourceSpec::Replay { dir } => Box::new(ReplaySource::open(dir)?),
        })
    }
}

/// Point counts per stage. Planning counts are absent until a plan exists.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageCounts {
    /// Per sampled frame, after cropping.
    pub sampled: Vec<usize>,
    /// Indices of the frames kept by the majority vote.
    pub selected_frames: Vec<usize>,
    pub merged: usize,
    pub visible: usize,
    pub downsampled: usize,
    pub clusters: usize,
    pub noise: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub object: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub targets: Option<usize>,
}

/// An applied operator choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Selection {
    pub ids: ClusterSelection,
    /// Replaces the configured slicing when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slice: Option<Slices>,
}

impl Selection {
    pub fn ids(ids: Vec<usize>) -> Self {
        Self {
            ids: ClusterSelection::Ids(ids),
            slice: None,
        }
    }

    pub fn largest() -> Self {
        Self {
            ids: ClusterSelection::Policy(SelectionPolicy::Largest),
            slice: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanRef {
    pub version: usize,
    /// Relative to the run directory.
    pub file: String,
    pub sha256: String,
}

/// Everything needed to understand and reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub run_id: String,
    pub config: PipelineConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceSpec>,
    /// Camera position of the first frame, the default viewpoint.
    pub camera: Vec3,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_ids: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slice: Option<Slices>,
    pub counts: StageCounts,
    /// Wall-clock milliseconds per stage; not part of any determinism check.
    pub timings_ms: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanRef>,
}

impl RunRecord {
    /// Sampling plus merging time.
    pub fn sampling_ms(&self) -> f64 {
        ["sample", "merge"].iter().filter_map(|k| self.timings_ms.get(*k)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Rendering,
    AwaitingSelection,
    Planned,
    Error,
}

/// Operator session, persisted as `session.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Session {
    pub run_id: String,
    pub state: SessionState,
    #[serde(default)]
    pub selected_ids: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slice: Option<Slices>,
    /// Plan versions in creation order; the last is `plan.json`.
    #[serde(default)]
    pub plan_versions: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Results of the stages up to clustering.
#[derive(Debug, Clone)]
pub struct Acquired {
    pub camera: Vec3,
    pub merged: PointCloud,
    pub visible: PointCloud,
    /// Downsampled cloud with normals; the cloud that was clustered.
    pub processed: PointCloud,
    pub clusters: ClusterSet,
    pub counts: StageCounts,
    pub timings_ms: BTreeMap<String, f64>,
}

/// Results of the stages after cluster selection.
#[derive(Debug, Clone)]
pub struct Planned {
    pub object: PointCloud,
    pub profiles: ProfileSet,
    pub plan: PathPlan,
    pub timings_ms: BTreeMap<String, f64>,
}

fn timed<T>(timings: &mut BTreeMap<String, f64>, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| e.at_stage(stage));
    timings.insert(stage.to_string(), start.elapsed().as_secs_f64() * 1e3);
    out
}

/// Remembers the pose of the first frame it passes through.
struct FirstPose<'a> {
    inner: &'a mut dyn FrameSource,
    pose: Option<RigidTransform>,
}

impl FrameSource for FirstPose<'_> {
    fn next_frame(&mut self) -> Result<Option<Frame>> {
        let f = self.inner.next_frame()?;
        if let (None, Some(frame)) = (self.pose, &f) {
            self.pose = Some(frame.camera_pose);
        }
        Ok(f)
    }
}

/// Sampling, majority vote, hidden point removal, downsampling, normals and
/// clustering.
pub fn acquire(source: &mut dyn FrameSource, config: &PipelineConfig) -> Result<Acquired> {
    config.validate()?;
    let mut t = BTreeMap::new();
    let mut counts = StageCounts::default();
    let mut src = FirstPose { inner: source, pose: None };
    let clouds = timed(&mut t, "sample", || sample_clouds(&mut src, config.s, &config.crop, config.ground_z))?;
    let camera = src.pose.map(|p| p.translation).unwrap_or(Vec3::ZERO);
    counts.sampled = clouds.iter().map(PointCloud::len).collect();

    let vote = timed(&mut t, "merge", || majority_vote_merge(&clouds, config.vote_tolerance))?;
    counts.selected_frames = vote.selected;
    let merged = vote.cloud;
    counts.merged = merged.len();

    let visible = timed(&mut t, "hpr", || {
        if !config.hpr.enabled {
            return Ok(merged.clone());
        }
        let eye = config.hpr.camera.unwrap_or(camera);
        Ok(merged.select(&hidden_point_removal(&merged, eye, config.hpr.radius_scale)?))
    })?;
    counts.visible = visible.len();

    let down = timed(&mut t, "downsample", || voxel_downsample(&visible, config.voxel))?;
    counts.downsampled = down.len();
    let processed = timed(&mut t, "normals", || {
        estimate_normals(&down, config.normals.k, config.normals.viewpoint.unwrap_or(camera))
    })?;
    let clusters = timed(&mut t, "cluster", || dbscan(&processed, config.dbscan_eps(), config.dbscan.min_pts))?;
    counts.clusters = clusters.cluster_count();
    counts.noise = clusters.noise_count();
    Ok(Acquired {
        camera,
        merged,
        visible,
        processed,
        clusters,
        counts,
        timings_ms: t,
    })
}

/// Cluster ids for a selection, checked against the cluster set.
pub fn resolve_selection(selection: &ClusterSelection, clusters: &ClusterSet) -> Result<Vec<usize>> {
    let ids = match selection {
        ClusterSelection::Policy(SelectionPolicy::Interactive) => {
            return Err(Error::invalid("a selection must name cluster ids or `largest`"));
        }
        other => other.resolve(clusters)?,
    };
    if let Some(bad) = ids.iter().find(|&&id| id >= clusters.cluster_count()) {
        return Err(Error::invalid(format!(
            "no cluster {bad}; the run has {} clusters",
            clusters.cluster_count()
        )));
    }
    Ok(ids)
}

/// Cluster selection, slicing and target generation.
pub fn plan_selection(
    processed: &PointCloud,
    clusters: &ClusterSet,
    ids: &[usize],
    slices: &Slices,
    config: &PipelineConfig,
) -> Result<Planned> {
    let mut t = BTreeMap::new();
    let object = timed(&mut t, "select", || {
        let object = select_clusters(clusters, processed, ids)?;
        if object.is_empty() {
            return Err(Error::EmptyProfile("the selection contains no points".into()));
        }
        Ok(object)
    })?;
    let profiles = timed(&mut t, "profile", || extract_all(&object, &slices.0, config.voxel))?;
    let plan = timed(&mut t, "targets", || plan_from_profiles(&profiles, &config.plan_params()))?;
    Ok(Planned {
        object,
        profiles,
        plan,
        timings_ms: t,
    })
}

/// In-memory run of every stage with the configured selection.
pub fn process(source: &mut dyn FrameSource, config: &PipelineConfig) -> Result<(Acquired, Planned)> {
    let acquired = acquire(source, config)?;
    let ids = resolve_selection(&config.cluster_selection, &acquired.clusters).map_err(|e| e.at_stage("select"))?;
    let planned = plan_selection(&acquired.processed, &acquired.clusters, &ids, &config.slice, config)?;
    Ok((acquired, planned))
}

/// Paths inside a run directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunDir(pub PathBuf);

impl RunDir {
    pub fn stage(&self, name: &str) -> PathBuf {
        self.0.join(format!("stage-{name}.ply"))
    }
    pub fn session(&self) -> PathBuf {
        self.0.join("session.json")
    }
    pub fn record(&self) -> PathBuf {
        self.0.join("record.json")
    }
    pub fn manifest(&self) -> PathBuf {
        self.0.join("manifest.json")
    }
    pub fn clusters(&self) -> PathBuf {
        self.0.join("clusters.json")
    }
    pub fn plan(&self) -> PathBuf {
        self.0.join("plan.json")
    }
    pub fn plan_version(&self, v: usize) -> PathBuf {
        self.0.join(Self::plan_version_file(v))
    }
    pub fn plan_version_file(v: usize) -> String {
        format!("plans/plan-{v:04}.json")
    }
    pub fn record_version(&self, v: usize) -> PathBuf {
        self.0.join(format!("plans/record-{v:04}.json"))
    }
}

/// Creates the next free `run-NNNN` directory under `root`.
pub fn create_run_dir(root: &Path) -> Result<(String, PathBuf)> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    for n in 1.. {
        let id = format!("{n:04}");
        let dir = root.join(format!("run-{id}"));
        match fs::create_dir(&dir) {
            Ok(()) => return Ok((id, dir)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Error::io(&dir, e)),
        }
    }
    unreachable!("run numbers are unbounded")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn json_bytes(value: &impl Serialize) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("value serializes");
    out.push(b'\n');
    out
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    // write then rename so readers never see a partial file
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_slice(&bytes);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: format!("at `{}`: {}", e.path(), e.inner()),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
    pub points: usize,
}

/// Stage files with their content hashes.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub run_id: String,
    pub stages: BTreeMap<String, ManifestEntry>,
}

fn persist_stage(run: &RunDir, manifest: &mut Manifest, name: &str, cloud: &PointCloud) -> Result<()> {
    let path = run.stage(name);
    write_cloud(cloud, &path, CloudFormat::PlyBinary)?;
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    manifest.stages.insert(
        name.to_string(),
        ManifestEntry {
            file: format!("stage-{name}.ply"),
            sha256: sha256_hex(&bytes),
            points: cloud.len(),
        },
    );
    write_file(&run.manifest(), &json_bytes(manifest))
}

pub fn load_session(run_dir: &Path) -> Result<Session> {
    read_json(&RunDir(run_dir.to_path_buf()).session())
}

fn save_session(run: &RunDir, session: &Session) -> Result<()> {
    write_file(&run.session(), &json_bytes(session))
}

/// Runs acquisition into `run_dir` (created if missing), then plans unless
/// the configured selection is interactive.
pub fn run(
    source: &mut dyn FrameSource,
    config: &PipelineConfig,
    source_spec: Option<SourceSpec>,
    run_dir: &Path,
) -> Result<RunRecord> {
    config.validate()?;
    let run = RunDir(run_dir.to_path_buf());
    fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    let run_id = run_dir
        .file_name()
        .map(|n| n.to_string_lossy().trim_start_matches("run-").to_string())
        .unwrap_or_else(|| "run".into());
    let mut session = Session {
        run_id: run_id.clone(),
        state: SessionState::Rendering,
        selected_ids: Vec::new(),
        slice: None,
        plan_versions: Vec::new(),
        error: None,
    };
    save_session(&run, &session)?;

    let acquired = match acquire(source, config) {
        Ok(a) => a,
        Err(e) => {
            session.state = SessionState::Error;
            session.error = Some(e.to_string());
            save_session(&run, &session)?;
            return Err(e);
        }
    };
    let mut manifest = Manifest {
        run_id: run_id.clone(),
        stages: BTreeMap::new(),
    };
    persist_stage(&run, &mut manifest, STAGE_MERGED, &acquired.merged)?;
    persist_stage(&run, &mut manifest, STAGE_VISIBLE, &acquired.visible)?;
    persist_stage(&run, &mut manifest, STAGE_DOWNSAMPLED, &acquired.processed)?;
    write_file(&run.clusters(), &json_bytes(&acquired.clusters))?;
    let record = RunRecord {
        run_id,
        config: config.clone(),
        source: source_spec,
        camera: acquired.camera,
        selected_ids: None,
        slice: None,
        counts: acquired.counts,
        timings_ms: acquired.timings_ms,
        plan: None,
    };
    write_file(&run.record(), &json_bytes(&record))?;
    session.state = SessionState::AwaitingSelection;
    save_session(&run, &session)?;

    match &config.cluster_selection {
        ClusterSelection::Policy(SelectionPolicy::Interactive) => Ok(record),
        ids => resume(
            run_dir,
            &Selection {
                ids: ids.clone(),
                slice: None,
            },
        ),
    }
}

/// Applies a selection to a run suspended after clustering, writing a new
/// plan version. May be applied again to the same run. A failed selection
/// leaves the session as it was.
pub fn resume(run_dir: &Path, selection: &Selection) -> Result<RunRecord> {
    let run = RunDir(run_dir.to_path_buf());
    let mut session = load_session(run_dir)?;
    if !matches!(session.state, SessionState::AwaitingSelection | SessionState::Planned) {
        return Err(Error::InvalidState(format!(
            "run {} is {:?}, not waiting for a selection",
            session.run_id, session.state
        )));
    }
    let checkpoint: RunRecord = read_json(&run.record())?;
    let clusters: ClusterSet = read_json(&run.clusters())?;
    let processed = read_cloud(&run.stage(STAGE_DOWNSAMPLED))?;
    let config = &checkpoint.config;
    let ids = resolve_selection(&selection.ids, &clusters).map_err(|e| e.at_stage("select"))?;
    let slices = selection.slice.clone().unwrap_or_else(|| config.slice.clone());
    slices.0.iter().try_for_each(|s| s.validate())?;
    let planned = plan_selection(&processed, &clusters, &ids, &slices, config)?;

    let mut manifest: Manifest = read_json(&run.manifest())?;
    persist_stage(&run, &mut manifest, STAGE_OBJECT, &planned.object)?;
    let mut rows = PointCloud::default();
    for r in &planned.profiles.rows {
        rows.extend(&PointCloud::new(r.points.clone(), None, Some(r.normals.clone()))?);
    }
    persist_stage(&run, &mut manifest, STAGE_PROFILE, &rows)?;

    let version = session.plan_versions.last().map_or(1, |v| v + 1);
    let bytes = planned.plan.to_json();
    write_file(&run.plan_version(version), &bytes)?;
    write_file(&run.plan(), &bytes)?;

    let mut record = checkpoint.clone();
    record.selected_ids = Some(ids.clone());
    record.slice = Some(slices.clone());
    record.counts.object = Some(planned.object.len());
    record.counts.profile = Some(planned.profiles.point_count());
    record.counts.rows = Some(planned.profiles.rows.len());
    record.counts.generated = Some(planned.plan.generated);
    record.counts.targets = Some(planned.plan.targets.len());
    record.timings_ms.extend(planned.timings_ms);
    record.plan = Some(PlanRef {
        version,
        file: RunDir::plan_version_file(version),
        sha256: sha256_hex(&bytes),
    });
    write_file(&run.record_version(version), &json_bytes(&record))?;
    write_file(&run.record(), &json_bytes(&record))?;

    session.state = SessionState::Planned;
    session.selected_ids = ids;
    session.slice = Some(slices);
    session.plan_versions.push(version);
    save_session(&run, &session)?;
    Ok(record)
}

/// Re-executes an archived run from its config snapshot, source and
/// selection into a new run directory.
pub fn replay(record: &RunRecord, run_dir: &Path) -> Result<RunRecord> {
    let spec = record
        .source
        .clone()
        .ok_or_else(|| Error::invalid("the record has no frame source to replay"))?;
    let mut config = record.config.clone();
    if let Some(ids) = &record.selected_ids {
        config.cluster_selection = ClusterSelection::Ids(ids.clone());
    }
    if let Some(slice) = &record.slice {
        config.slice = slice.clone();
    }
    let mut source = spec.open()?;
    run(source.as_mut(), &config, Some(spec), run_dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::scenes;

    fn small_config() -> PipelineConfig {
        PipelineConfig {
            s: 2,
            ..Default::default()
        }
    }

    fn run_scene(scene: SceneFile, config: &PipelineConfig, dir: &Path) -> Result<RunRecord> {
        let spec = SourceSpec::Scene { scene, seed: 3 };
        let mut src = spec.open()?;
        run(src.as_mut(), config, Some(spec), dir)
    }

    #[test]
    fn headless_run_writes_the_layout() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("run-a");
        let rec = run_scene(scenes::inclined_plane(), &small_config(), &dir).unwrap();
        let run = RunDir(dir.clone());
        for p in [run.session(), run.record(), run.manifest(), run.clusters(), run.plan(), run.plan_version(1)] {
            assert!(p.exists(), "{}", p.display());
        }
        let c = &rec.counts;
        assert!(c.visible <= c.merged && c.downsampled <= c.visible);
        assert!(c.profile.unwrap() <= c.downsampled);
        assert!(c.targets.unwrap() > 5);
        let session = load_session(&dir).unwrap();
        assert_eq!(session.state, SessionState::Planned);
        assert_eq!(session.plan_versions, vec![1]);
        let manifest: Manifest = read_json(&run.manifest()).unwrap();
        for (name, entry) in &manifest.stages {
            let bytes = fs::read(dir.join(&entry.file)).unwrap();
            assert_eq!(sha256_hex(&bytes), entry.sha256, "{name}");
        }
        assert_eq!(rec.plan.unwrap().sha256, sha256_hex(&fs::read(run.plan()).unwrap()));
    }

    #[test]
    fn interactive_run_suspends_and_resumes_like_headless() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = small_config();
        cfg.cluster_selection = ClusterSelection::Policy(SelectionPolicy::Interactive);
        let a = tmp.path().join("a");
        let rec = run_scene(scenes::two_objects(), &cfg, &a).unwrap();
        assert!(rec.plan.is_none());
        assert_eq!(load_session(&a).unwrap().state, SessionState::AwaitingSelection);
        assert!(!RunDir(a.clone()).plan().exists());

        let resumed = resume(&a, &Selection::largest()).unwrap();
        let b = tmp.path().join("b");
        run_scene(scenes::two_objects(), &small_config(), &b).unwrap();
        assert_eq!(fs::read(RunDir(a.clone()).plan()).unwrap(), fs::read(RunDir(b).plan()).unwrap());
        assert_eq!(resumed.plan.unwrap().version, 1);

        // a second selection yields a new version and keeps the first
        let other = 1 - resumed.selected_ids.unwrap()[0];
        let second = resume(&a, &Selection::ids(vec![other])).unwrap();
        assert_eq!(second.plan.as_ref().unwrap().version, 2);
        let run = RunDir(a.clone());
        assert_ne!(fs::read(run.plan_version(1)).unwrap(), fs::read(run.plan_version(2)).unwrap());
        assert_eq!(fs::read(run.plan_version(2)).unwrap(), fs::read(run.plan()).unwrap());
        assert_eq!(load_session(&a).unwrap().plan_versions, vec![1, 2]);
    }

    #[test]
    fn bad_selections_leave_the_session_alone() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = small_config();
        cfg.cluster_selection = ClusterSelection::Policy(SelectionPolicy::Interactive);
        let a = tmp.path().join("a");
        run_scene(scenes::two_objects(), &cfg, &a).unwrap();
        let before = fs::read(RunDir(a.clone()).session()).unwrap();
        let e = resume(&a, &Selection::ids(vec![])).unwrap_err();
        assert!(matches!(e.root(), Error::EmptyProfile(_)), "{e}");
        let e = resume(&a, &Selection::ids(vec![7])).unwrap_err();
        assert!(matches!(e.root(), Error::InvalidArgument(_)), "{e}");
        assert_eq!(fs::read(RunDir(a).session()).unwrap(), before);
    }

    #[test]
    fn replay_reproduces_the_plan() {
        let tmp = tempfile::tempdir().unwrap();
        let a = tmp.path().join("a");
        let rec = run_scene(scenes::strobe_plane(), &small_config(), &a).unwrap();
        let archived: RunRecord = read_json(&RunDir(a.clone()).record()).unwrap();
        assert_eq!(archived, rec);
        let b = tmp.path().join("b");
        replay(&archived, &b).unwrap();
        assert_eq!(fs::read(RunDir(a).plan()).unwrap(), fs::read(RunDir(b).plan()).unwrap());
    }

    #[test]
    fn stage_errors_are_tagged_and_recorded() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = small_config();
        cfg.crop = crate::cloud::CropBox::new(Vec3::splat(10.0), Vec3::splat(11.0)).unwrap();
        let dir = tmp.path().join("a");
        let e = run_scene(scenes::sphere(), &cfg, &dir).unwrap_err();
        assert!(matches!(e, Error::Stage { .. }), "{e}");
        let s = load_session(&dir).unwrap();
        assert_eq!(s.state, SessionState::Error);
        assert!(s.error.is_some());
    }

    #[test]
    fn run_dirs_are_numbered() {
        let tmp = tempfile::tempdir().unwrap();
        let (a, _) = create_run_dir(tmp.path()).unwrap();
        let (b, pb) = create_run_dir(tmp.path()).unwrap();
        assert_eq!((a.as_str(), b.as_str()), ("0001", "0002"));
        assert!(pb.ends_with("run-0002"));
    }
}
