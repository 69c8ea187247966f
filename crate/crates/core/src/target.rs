//! Target poses from profiles, the target filters and the path plan.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{align_z_to_normal, compose, RigidTransform, Vec3};
use crate::profile::{Profile, ProfileSet};

/// One inspection target.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetPose {
    /// Generation order across the whole plan; stable through filtering.
    pub id: usize,
    pub row: usize,
    /// Index of the generating point within its profile.
    pub source_index: usize,
    pub surface_point: Vec3,
    pub surface_normal: Vec3,
    /// Camera pose in the world; +z looks at the surface.
    pub pose: RigidTransform,
}

impl TargetPose {
    pub fn position(&self) -> Vec3 {
        self.pose.translation
    }
}

/// Places one target per profile point at `standoff` along its normal,
/// looking back along the normal. Ids start at `first_id`.
pub fn poses_from_profile(profile: &Profile, standoff: f64, first_id: usize) -> Result<Vec<TargetPose>> {
    if !(standoff >= 0.0 && standoff.is_finite()) {
        return Err(Error::invalid(format!("standoff must be non-negative, got {standoff}")));
    }
    if profile.normals.len() != profile.points.len() {
        return Err(Error::invalid("every profile point needs a normal"));
    }
    profile
        .points
        .iter()
        .zip(&profile.normals)
        .enumerate()
        .map(|(i, (&p, &n))| {
            let n = n
                .try_normalize()
                .ok_or_else(|| Error::invalid(format!("zero normal at profile point {i}")))?;
            Ok(TargetPose {
                id: first_id + i,
                row: profile.row,
                source_index: i,
                surface_point: p,
                surface_normal: n,
                pose: RigidTransform::new(align_z_to_normal(-n), p + n * standoff),
            })
        })
        .collect()
}

/// Axes (0..3) on which target `i` breaks the row's trend relative to the
/// middle target. A trend is flat when the first and last targets differ by
/// at most `tolerance`; violations must exceed `tolerance`.
pub fn trend_violations(targets: &[TargetPose], i: usize, tolerance: f64) -> [bool; 3] {
    let mut out = [false; 3];
    let len = targets.len();
    if len < 3 {
        return out;
    }
    let m = len / 2;
    if i == m {
        return out;
    }
    let (first, last, mid, c) = (
        targets[0].position(),
        targets[len - 1].position(),
        targets[m].position(),
        targets[i].position(),
    );
    for (axis, v) in out.iter_mut().enumerate() {
        let d = last.get(axis) - first.get(axis);
        let (ci, cm) = (c.get(axis), mid.get(axis));
        *v = if d.abs() <= tolerance {
            (ci - cm).abs() > tolerance
        } else {
            // before the middle a rising axis must not exceed it, after the
            // middle it must not fall below it
            let rising = d > 0.0;
            match (i < m, rising) {
                (true, true) | (false, false) => ci > cm + tolerance,
                (true, false) | (false, true) => ci < cm - tolerance,
            }
        };
    }
    out
}

/// Drops targets that break the row trend on two or more axes. Lists shorter
/// than three are returned unchanged.
pub fn filter_anomalies(targets: &[TargetPose], tolerance: f64) -> Vec<TargetPose> {
    (0..targets.len())
        .filter(|&i| trend_violations(targets, i, tolerance).iter().filter(|v| **v).count() < 2)
        .map(|i| targets[i].clone())
        .collect()
}

/// Drops targets below `ground_z + min_clearance`.
pub fn filter_threshold(targets: &[TargetPose], min_clearance: f64, ground_z: f64) -> Vec<TargetPose> {
    targets
        .iter()
        .filter(|t| t.position().z >= ground_z + min_clearance)
        .cloned()
        .collect()
}

/// Greedy scan from the first target: drops any target closer than
/// `2 * voxel` to the last kept one.
pub fn filter_close(targets: &[TargetPose], voxel: f64) -> Vec<TargetPose> {
    let min = 2.0 * voxel;
    let mut kept: Vec<TargetPose> = Vec::with_capacity(targets.len());
    for t in targets {
        match kept.last() {
            Some(last) if last.position().distance(t.position()) < min => {}
            _ => kept.push(t.clone()),
        }
    }
    kept
}

/// Keeps every `(n + 1)`-th target starting with the first, plus the last.
pub fn decimate(targets: &[TargetPose], n: usize) -> Vec<TargetPose> {
    let len = targets.len();
    (0..len)
        .filter(|&i| i % (n + 1) == 0 || i + 1 == len)
        .map(|i| targets[i].clone())
        .collect()
}

/// Filter and output parameters of a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanParams {
    pub standoff: f64,
    pub voxel: f64,
    pub min_clearance: f64,
    pub ground_z: f64,
    pub decimation_n: usize,
    pub reverse: bool,
    /// Dead band of the trend filter; `None` means one voxel.
    pub anomaly_tolerance: Option<f64>,
    pub hand_eye: RigidTransform,
    pub base_in_world: RigidTransform,
}

impl Default for PlanParams {
    fn default() -> Self {
        Self {
            standoff: 0.3,
            voxel: 0.02,
            min_clearance: 0.05,
            ground_z: 0.0,
            decimation_n: 0,
            reverse: true,
            anomaly_tolerance: None,
            hand_eye: RigidTransform::IDENTITY,
            base_in_world: RigidTransform::IDENTITY,
        }
    }
}

impl PlanParams {
    pub fn anomaly_tolerance(&self) -> f64 {
        self.anomaly_tolerance.unwrap_or(self.voxel)
    }
}

/// Ids of generated targets removed by each filter, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dropped {
    pub anomaly: Vec<usize>,
    pub threshold: Vec<usize>,
    pub proximity: Vec<usize>,
    pub decimation: Vec<usize>,
}

impl Dropped {
    pub fn total(&self) -> usize {
        self.anomaly.len() + self.threshold.len() + self.proximity.len() + self.decimation.len()
    }
}

/// Final ordered targets with provenance. Poses are end-effector poses in
/// the robot base frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPlan {
    pub targets: Vec<TargetPose>,
    pub generated: usize,
    pub dropped: Dropped,
    pub params: PlanParams,
}

fn removed(before: &[TargetPose], after: &[TargetPose]) -> Vec<usize> {
    let kept: std::collections::HashSet<usize> = after.iter().map(|t| t.id).collect();
    before.iter().map(|t| t.id).filter(|id| !kept.contains(id)).collect()
}

/// Reverses each row in place, keeping the order of rows.
pub fn reverse_rows(targets: &[TargetPose]) -> Vec<TargetPose> {
    let mut out = Vec::with_capacity(targets.len());
    let mut start = 0;
    while start < targets.len() {
        let row = targets[start].row;
        let end = start + targets[start..].iter().take_while(|t| t.row == row).count();
        out.extend(targets[start..end].iter().rev().cloned());
        start = end;
    }
    out
}

/// Optionally reverses each row, then maps world camera poses `T_p` to
/// end-effector poses `base_in_world⁻¹ ∘ T_p ∘ hand_eye⁻¹`.
pub fn finalize_plan(
    targets: &[TargetPose],
    reverse: bool,
    hand_eye: &RigidTransform,
    base_in_world: &RigidTransform,
) -> Vec<TargetPose> {
    let ordered = if reverse {
        reverse_rows(targets)
    } else {
        targets.to_vec()
    };
    let base_inv = base_in_world.inverse();
    let eye_inv = hand_eye.inverse();
    ordered
        .into_iter()
        .map(|mut t| {
            t.pose = compose(&compose(&base_inv, &t.pose), &eye_inv);
            t
        })
        .collect()
}

/// Runs target generation over every row: poses, serpentine ordering (every
/// second row reversed), the filter chain anomalies → threshold → close →
/// decimate per row, then finalization.
pub fn plan_from_profiles(profiles: &ProfileSet, params: &PlanParams) -> Result<PathPlan> {
    if !(params.voxel > 0.0) {
        return Err(Error::invalid(format!("voxel must be positive, got {}", params.voxel)));
    }
    if !(params.min_clearance >= 0.0) {
        return Err(Error::invalid("min_clearance must be non-negative"));
    }
    let tol = params.anomaly_tolerance();
    if !(tol >= 0.0 && tol.is_finite()) {
        return Err(Error::invalid("anomaly_tolerance must be non-negative"));
    }
    let mut dropped = Dropped::default();
    let mut survivors = Vec::new();
    let mut next_id = 0;
    for (k, profile) in profiles.rows.iter().enumerate() {
        let mut row = poses_from_profile(profile, params.standoff, next_id)?;
        next_id += row.len();
        if k % 2 == 1 {
            row.reverse();
        }
        let a = filter_anomalies(&row, tol);
        dropped.anomaly.extend(removed(&row, &a));
        let b = filter_threshold(&a, params.min_clearance, params.ground_z);
        dropped.threshold.extend(removed(&a, &b));
        let c = filter_close(&b, params.voxel);
        dropped.proximity.extend(removed(&b, &c));
        let d = decimate(&c, params.decimation_n);
        dropped.decimation.extend(removed(&c, &d));
        survivors.extend(d);
    }
    for list in [
        &mut dropped.anomaly,
        &mut dropped.threshold,
        &mut dropped.proximity,
        &mut dropped.decimation,
    ] {
        list.sort_unstable();
    }
    Ok(PathPlan {
        targets: finalize_plan(&survivors, params.reverse, &params.hand_eye, &params.base_in_world),
        generated: next_id,
        dropped,
        params: params.clone(),
    })
}

/// Rounds to nine significant digits; negative zero becomes zero.
pub fn round9(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    let r: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// One target as serialized in `plan.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanTarget {
    pub row: usize,
    pub seq: usize,
    pub position: [f64; 3],
    pub quaternion: [f64; 4],
    pub id: usize,
}

/// The `plan.json` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanDocument {
    pub targets: Vec<PlanTarget>,
    pub dropped: Dropped,
    pub params: PlanParams,
}

impl PathPlan {
    /// Serializable form with reals rounded to nine significant digits.
    pub fn document(&self) -> PlanDocument {
        let r3 = |v: Vec3| [round9(v.x), round9(v.y), round9(v.z)];
        let round_pose = |t: &RigidTransform| {
            let q = t.rotation.quaternion();
            RigidTransform::new(
                crate::geom::Rotation::from_quaternion(round9(q[0]), round9(q[1]), round9(q[2]), round9(q[3]))
                    .expect("unit quaternion"),
                Vec3::from(r3(t.translation)),
            )
        };
        let p = &self.params;
        PlanDocument {
            targets: self
                .targets
                .iter()
                .enumerate()
                .map(|(seq, t)| {
                    let q = t.pose.rotation.quaternion();
                    PlanTarget {
                        row: t.row,
                        seq,
                        position: r3(t.pose.translation),
                        quaternion: [round9(q[0]), round9(q[1]), round9(q[2]), round9(q[3])],
                        id: t.id,
                    }
                })
                .collect(),
            dropped: self.dropped.clone(),
            params: PlanParams {
                standoff: round9(p.standoff),
                voxel: round9(p.voxel),
                min_clearance: round9(p.min_clearance),
                ground_z: round9(p.ground_z),
                decimation_n: p.decimation_n,
                reverse: p.reverse,
                anomaly_tolerance: p.anomaly_tolerance.map(round9),
                hand_eye: round_pose(&p.hand_eye),
                base_in_world: round_pose(&p.base_in_world),
            },
        }
    }

    /// Pretty-printed `plan.json` bytes with a trailing newline.
    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(&self.document()).expect("plan serializes");
        out.push(b'\n');
        out
    }
}
