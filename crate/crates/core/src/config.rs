//! Pipeline configuration: every tunable of acquisition, clustering,
//! slicing and target generation, loaded from JSON with defaults.

use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::acquisition::DEFAULT_VOTE_TOLERANCE;
use crate::cloud::CropBox;
use crate::clustering::ClusterSelection;
use crate::error::{Error, Result};
use crate::geom::{RigidTransform, Vec3};
use crate::profile::SliceSpec;
use crate::target::PlanParams;
use crate::visibility::DEFAULT_RADIUS_SCALE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HprConfig {
    pub enabled: bool,
    /// Viewpoint for visibility; defaults to the first frame's camera.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub camera: Option<Vec3>,
    pub radius_scale: f64,
}

impl Default for HprConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            camera: None,
            radius_scale: DEFAULT_RADIUS_SCALE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormalsConfig {
    pub k: usize,
    /// Normals are flipped toward this point; defaults to the first frame's
    /// camera.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub viewpoint: Option<Vec3>,
}

impl Default for NormalsConfig {
    fn default() -> Self {
        Self { k: 10, viewpoint: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DbscanConfig {
    /// Neighborhood radius; defaults to twice the voxel size.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    pub min_pts: usize,
}

impl Default for DbscanConfig {
    fn default() -> Self {
        Self { eps: None, min_pts: 10 }
    }
}

/// One slice spec or a list of them; each list entry yields its own rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Slices(pub Vec<SliceSpec>);

impl Default for Slices {
    fn default() -> Self {
        Slices(vec![SliceSpec::default()])
    }
}

impl Serialize for Slices {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0.as_slice() {
            [one] => one.serialize(s),
            many => many.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Slices {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        // a map is one spec, a sequence is several; errors keep their inner path
        let v = serde_json::Value::deserialize(d)?;
        let parsed = if v.is_array() {
            serde_path_to_error::deserialize::<_, Vec<SliceSpec>>(v)
        } else {
            serde_path_to_error::deserialize::<_, SliceSpec>(v).map(|s| vec![s])
        };
        parsed.map(Slices).map_err(|e| {
            let path = e.path().to_string();
            if path == "." {
                serde::de::Error::custom(e.into_inner())
            } else {
                serde::de::Error::custom(format!("at `{path}`: {}", e.into_inner()))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Number of frames sampled.
    pub s: usize,
    pub crop: CropBox,
    pub ground_z: f64,
    pub vote_tolerance: f64,
    pub hpr: HprConfig,
    pub voxel: f64,
    pub normals: NormalsConfig,
    pub dbscan: DbscanConfig,
    pub cluster_selection: ClusterSelection,
    pub slice: Slices,
    pub standoff: f64,
    pub min_clearance: f64,
    pub decimation_n: usize,
    pub reverse: bool,
    /// Dead band of the trend filter; defaults to the voxel size.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anomaly_tolerance: Option<f64>,
    pub hand_eye: RigidTransform,
    pub base_in_world: RigidTransform,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let p = PlanParams::default();
        Self {
            s: 5,
            crop: CropBox::unbounded(),
            ground_z: p.ground_z,
            vote_tolerance: DEFAULT_VOTE_TOLERANCE,
            hpr: HprConfig::default(),
            voxel: p.voxel,
            normals: NormalsConfig::default(),
            dbscan: DbscanConfig::default(),
            cluster_selection: ClusterSelection::default(),
            slice: Slices::default(),
            standoff: p.standoff,
            min_clearance: p.min_clearance,
            decimation_n: p.decimation_n,
            reverse: p.reverse,
            anomaly_tolerance: p.anomaly_tolerance,
            hand_eye: p.hand_eye,
            base_in_world: p.base_in_world,
        }
    }
}

fn check(ok: bool, path: &str, message: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(path, message))
    }
}

fn finite_point(v: Option<Vec3>, path: &str) -> Result<()> {
    check(v.is_none_or(|v| v.is_finite()), path, "must be finite")
}

impl PipelineConfig {
    pub fn dbscan_eps(&self) -> f64 {
        self.dbscan.eps.unwrap_or(2.0 * self.voxel)
    }

    pub fn plan_params(&self) -> PlanParams {
        PlanParams {
            standoff: self.standoff,
            voxel: self.voxel,
            min_clearance: self.min_clearance,
            ground_z: self.ground_z,
            decimation_n: self.decimation_n,
            reverse: self.reverse,
            anomaly_tolerance: self.anomaly_tolerance,
            hand_eye: self.hand_eye,
            base_in_world: self.base_in_world,
        }
    }

    /// Checks every numeric constraint; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        check(self.s >= 1, "s", format!("must be at least 1, got {}", self.s))?;
        self.crop.validate().map_err(|e| Error::config("crop", e.to_string()))?;
        check(self.ground_z.is_finite(), "ground_z", "must be finite")?;
        check(
            (0.0..1.0).contains(&self.vote_tolerance),
            "vote_tolerance",
            format!("must lie in [0, 1), got {}", self.vote_tolerance),
        )?;
        check(
            self.hpr.radius_scale > 1.0 && self.hpr.radius_scale.is_finite(),
            "hpr.radius_scale",
            format!("must be finite and > 1, got {}", self.hpr.radius_scale),
        )?;
        finite_point(self.hpr.camera, "hpr.camera")?;
        check(
            self.voxel > 0.0 && self.voxel.is_finite(),
            "voxel",
            format!("must be positive, got {}", self.voxel),
        )?;
        check(self.normals.k >= 3, "normals.k", format!("must be at least 3, got {}", self.normals.k))?;
        finite_point(self.normals.viewpoint, "normals.viewpoint")?;
        if let Some(eps) = self.dbscan.eps {
            check(eps > 0.0 && eps.is_finite(), "dbscan.eps", format!("must be positive, got {eps}"))?;
        }
        check(self.dbscan.min_pts >= 1, "dbscan.min_pts", "must be at least 1")?;
        check(!self.slice.0.is_empty(), "slice", "needs at least one spec")?;
        for (i, spec) in self.slice.0.iter().enumerate() {
            let path = if self.slice.0.len() == 1 { "slice".to_string() } else { format!("slice[{i}]") };
            spec.validate().map_err(|e| Error::config(path, e.to_string()))?;
        }
        check(
            self.standoff >= 0.0 && self.standoff.is_finite(),
            "standoff",
            format!("must be non-negative, got {}", self.standoff),
        )?;
        check(
            self.min_clearance >= 0.0 && self.min_clearance.is_finite(),
            "min_clearance",
            format!("must be non-negative, got {}", self.min_clearance),
        )?;
        if let Some(t) = self.anomaly_tolerance {
            check(t >= 0.0 && t.is_finite(), "anomaly_tolerance", format!("must be non-negative, got {t}"))?;
        }
        for (t, path) in [(&self.hand_eye, "hand_eye"), (&self.base_in_world, "base_in_world")] {
            check(t.translation.is_finite(), path, "translation must be finite")?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("config serializes");
        out.push(b'\n');
        out
    }
}

/// Parses and validates a config document. Parse errors name the JSON path.
pub fn parse_config(bytes: &[u8]) -> Result<PipelineConfig> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    let config: PipelineConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(if path == "." { "(root)".to_string() } else { path }, e.into_inner().to_string())
    })?;
    config.validate()?;
    Ok(config)
}

/// Reads, parses and validates a config file.
pub fn load_config(path: &Path) -> Result<PipelineConfig> {
    let bytes = std::fs::read(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
    parse_config(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::SelectionPolicy;
    use crate::profile::SliceMode;

    fn err_path(text: &str) -> String {
        match parse_config(text.as_bytes()).unwrap_err() {
            Error::Config { path, .. } => path,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn empty_document_is_all_defaults() {
        assert_eq!(parse_config(b"{}").unwrap(), PipelineConfig::default());
        let c = PipelineConfig::default();
        assert_eq!(c.dbscan_eps(), 0.04);
        assert_eq!(c.cluster_selection, ClusterSelection::Policy(SelectionPolicy::Largest));
    }

    #[test]
    fn constraint_errors_name_the_key() {
        assert_eq!(err_path(r#"{"voxel": -1}"#), "voxel");
        assert_eq!(err_path(r#"{"s": 0}"#), "s");
        assert_eq!(err_path(r#"{"normals": {"k": 2}}"#), "normals.k");
        assert_eq!(err_path(r#"{"hpr": {"radius_scale": 0.5}}"#), "hpr.radius_scale");
        assert_eq!(err_path(r#"{"slice": [{}, {"row_count": 0}]}"#), "slice[1]");
    }

    #[test]
    fn type_errors_and_unknown_keys_name_the_path() {
        assert_eq!(err_path(r#"{"voxel": "big"}"#), "voxel");
        assert_eq!(err_path(r#"{"dbscan": {"eps": 0.1, "minpts": 3}}"#), "dbscan.minpts");
        let e = parse_config(br#"{"voxle": 0.01}"#).unwrap_err().to_string();
        assert!(e.contains("voxle"), "{e}");
        let e = parse_config(br#"{"slice": {"mode": "direction", "directoin": [1, 0, 0]}}"#)
            .unwrap_err()
            .to_string();
        assert!(e.contains("directoin"), "{e}");
    }

    #[test]
    fn full_config_round_trips() {
        let mut c = PipelineConfig {
            s: 10,
            cluster_selection: ClusterSelection::Ids(vec![0, 2]),
            anomaly_tolerance: Some(0.01),
            ..Default::default()
        };
        c.hpr.camera = Some(Vec3::new(0.0, -1.0, 0.5));
        c.slice = Slices(vec![
            SliceSpec::along(Vec3::X),
            SliceSpec {
                mode: SliceMode::Auto,
                row_count: 3,
                band_width: Some(0.05),
                ..Default::default()
            },
        ]);
        let back = parse_config(&c.to_json()).unwrap();
        assert_eq!(back, c);
        let one = PipelineConfig::default();
        assert_eq!(parse_config(&one.to_json()).unwrap(), one);
    }

    #[test]
    fn selection_accepts_ids_and_policies() {
        let c = parse_config(br#"{"cluster_selection": "interactive"}"#).unwrap();
        assert_eq!(c.cluster_selection, ClusterSelection::Policy(SelectionPolicy::Interactive));
        let c = parse_config(br#"{"cluster_selection": [1]}"#).unwrap();
        assert_eq!(c.cluster_selection, ClusterSelection::Ids(vec![1]));
        assert_eq!(err_path(r#"{"cluster_selection": "smallest"}"#), "cluster_selection");
    }

    #[test]
    fn missing_file_is_a_config_error() {
        let e = load_config(Path::new("/nonexistent/config.json")).unwrap_err();
        assert!(matches!(e, Error::Config { .. }), "{e}");
    }
}
