//! Reduction of an object cloud to ordered rows of surface points.

use serde::{Deserialize, Serialize};

use crate::cloud::{CropBox, PointCloud};
use crate::eigen::{covariance, symmetric_eigen};
use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Points within this fraction of a voxel along the slicing axis count as
/// one position, so a band spanning two voxel layers still yields a single
/// file row.
const ALONG_TIE_VOXELS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SliceMode {
    /// Slice along the cloud's principal axis.
    #[default]
    Auto,
    /// Slice along a given direction.
    Direction,
    /// Crop to a box, then slice along its principal axis.
    Segment,
}

/// How a cloud is cut into rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceSpec {
    #[serde(default)]
    pub mode: SliceMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Vec3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment: Option<CropBox>,
    /// Width of each row's band across the slicing axis; defaults to
    /// 1.5 voxels when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band_width: Option<f64>,
    #[serde(default = "one")]
    pub row_count: usize,
}

fn one() -> usize {
    1
}

impl Default for SliceSpec {
    fn default() -> Self {
        Self {
            mode: SliceMode::Auto,
            direction: None,
            segment: None,
            band_width: None,
            row_count: 1,
        }
    }
}

impl SliceSpec {
    pub fn along(direction: Vec3) -> Self {
        Self {
            mode: SliceMode::Direction,
            direction: Some(direction),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.mode, &self.direction, &self.segment) {
            (SliceMode::Direction, Some(d), None) => {
                if !d.is_finite() || d.norm() < 1e-9 {
                    return Err(Error::invalid("slice direction must be a non-zero vector"));
                }
            }
            (SliceMode::Direction, None, _) => {
                return Err(Error::invalid("direction mode needs `direction`"))
            }
            (SliceMode::Segment, None, Some(b)) => b.validate()?,
            (SliceMode::Segment, _, None) => {
                return Err(Error::invalid("segment mode needs `segment`"))
            }
            (SliceMode::Auto, None, None) => {}
            (mode, _, _) => {
                return Err(Error::invalid(format!(
                    "`direction` and `segment` are only allowed in their own modes (mode is {mode:?})"
                )))
            }
        }
        if let Some(w) = self.band_width {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::invalid(format!("band_width must be positive, got {w}")));
            }
        }
        if self.row_count == 0 {
            return Err(Error::invalid("row_count must be at least 1"));
        }
        Ok(())
    }
}

/// One ordered row of surface points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub row: usize,
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    /// Index of each point in the sliced cloud.
    pub source: Vec<usize>,
    /// Unit slicing axis; points are strictly increasing along it.
    pub axis: Vec3,
}

impl Profile {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Sum of segment lengths along the row.
    pub fn polyline_length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].distance(w[1])).sum()
    }
}

/// A band that held fewer than two points and produced no row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedRow {
    pub row: usize,
    pub points: usize,
}

/// Rows extracted from one or more slice specs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProfileSet {
    pub rows: Vec<Profile>,
    pub skipped: Vec<SkippedRow>,
}

impl ProfileSet {
    pub fn point_count(&self) -> usize {
        self.rows.iter().map(Profile::len).sum()
    }
}

/// Flips `v` so its first component that is not numerically zero is
/// positive.
fn canonical_sign(v: Vec3) -> Vec3 {
    let first = v.to_array().into_iter().find(|c| c.abs() > 1e-9).unwrap_or(0.0);
    if first < 0.0 {
        -v
    } else {
        v
    }
}

/// Unit principal axis of the point positions, with a non-negative first
/// non-zero component.
pub fn auto_direction(cloud: &PointCloud) -> Result<Vec3> {
    if cloud.len() < 3 {
        return Err(Error::DegenerateGeometry(format!(
            "principal axis needs at least 3 points, got {}",
            cloud.len()
        )));
    }
    let (_, cov) = covariance(cloud.points.iter().copied()).expect("non-empty");
    let eig = symmetric_eigen(&cov);
    if !(eig.values[2] > 0.0) {
        return Err(Error::DegenerateGeometry("all points coincide".into()));
    }
    Ok(canonical_sign(eig.vectors[2]))
}

/// Unit axis across the slicing axis: world z made orthogonal to `axis`,
/// or world x when `axis` is nearly vertical.
pub fn transverse_axis(axis: Vec3) -> Vec3 {
    let base = if axis.dot(Vec3::Z).abs() > 0.99 {
        Vec3::X
    } else {
        Vec3::Z
    };
    (base - axis * base.dot(axis)).normalize()
}

/// Cuts `cloud` into rows along one slice spec. Row numbers start at
/// `first_row`.
///
/// Each point is assigned to the band whose center line is nearest in the
/// transverse direction and kept when within half a band width of it. With
/// one row the band is centered on the centroid; otherwise the transverse
/// extent is split into equal bands. Points within half a voxel of a
/// group's first point along the axis share one position; only the one
/// nearest the center line is kept.
pub fn extract_profiles(
    cloud: &PointCloud,
    spec: &SliceSpec,
    voxel: f64,
    first_row: usize,
) -> Result<ProfileSet> {
    spec.validate()?;
    let normals = cloud
        .normals
        .as_ref()
        .ok_or_else(|| Error::invalid("profile extraction needs normals"))?;
    if cloud.is_empty() {
        return Err(Error::EmptyProfile("object cloud is empty".into()));
    }
    let band_width = spec.band_width.unwrap_or(1.5 * voxel);
    if !(band_width > 0.0 && band_width.is_finite()) {
        return Err(Error::invalid(format!("band width must be positive, got {band_width}")));
    }

    let candidates: Vec<usize> = match (&spec.mode, &spec.segment) {
        (SliceMode::Segment, Some(b)) => (0..cloud.len()).filter(|&i| b.contains(cloud.points[i])).collect(),
        _ => (0..cloud.len()).collect(),
    };
    if candidates.is_empty() {
        return Err(Error::EmptyProfile("segment box contains no object points".into()));
    }
    let axis = match spec.mode {
        SliceMode::Direction => spec.direction.expect("validated").normalize(),
        _ => auto_direction(&cloud.select(&candidates))?,
    };
    let t = transverse_axis(axis);

    let across: Vec<f64> = candidates.iter().map(|&i| cloud.points[i].dot(t)).collect();
    let centers: Vec<f64> = if spec.row_count == 1 {
        let mean = candidates.iter().fold(Vec3::ZERO, |s, &i| s + cloud.points[i]) / candidates.len() as f64;
        vec![mean.dot(t)]
    } else {
        let lo = across.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = across.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let step = (hi - lo) / spec.row_count as f64;
        (0..spec.row_count).map(|k| lo + (k as f64 + 0.5) * step).collect()
    };

    // (along, distance to center line, cloud index) per band
    let mut bands: Vec<Vec<(f64, f64, usize)>> = vec![Vec::new(); centers.len()];
    for (k, &i) in candidates.iter().enumerate() {
        let (band, off) = centers
            .iter()
            .enumerate()
            .map(|(b, c)| (b, (across[k] - c).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("at least one band");
        if off <= 0.5 * band_width {
            bands[band].push((cloud.points[i].dot(axis), off, i));
        }
    }

    let mut out = ProfileSet::default();
    for (b, mut members) in bands.into_iter().enumerate() {
        let row = first_row + b;
        members.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)).then(x.2.cmp(&y.2)));
        let tie = ALONG_TIE_VOXELS * voxel;
        // (group start along, kept member)
        let mut kept: Vec<(f64, (f64, f64, usize))> = Vec::with_capacity(members.len());
        for m in members {
            match kept.last_mut() {
                Some((start, best)) if m.0 - *start <= tie => {
                    if m.1 < best.1 {
                        *best = m;
                    }
                }
                _ => kept.push((m.0, m)),
            }
        }
        // groups start more than `tie` apart, so the kept along values
        // stay strictly increasing
        let kept: Vec<(f64, f64, usize)> = kept.into_iter().map(|k| k.1).collect();
        if kept.len() < 2 {
            log::warn!("row {row}: {} point(s) in band, skipped", kept.len());
            out.skipped.push(SkippedRow {
                row,
                points: kept.len(),
            });
            continue;
        }
        out.rows.push(Profile {
            row,
            points: kept.iter().map(|k| cloud.points[k.2]).collect(),
            normals: kept.iter().map(|k| normals[k.2]).collect(),
            source: kept.iter().map(|k| k.2).collect(),
            axis,
        });
    }
    if out.rows.is_empty() {
        return Err(Error::EmptyProfile(format!(
            "no band held two or more points ({} candidate points, band width {band_width})",
            candidates.len()
        )));
    }
    Ok(out)
}

/// Applies several slice specs in turn; rows are numbered consecutively
/// across specs. Fails only when every spec yields nothing.
pub fn extract_all(cloud: &PointCloud, specs: &[SliceSpec], voxel: f64) -> Result<ProfileSet> {
    if specs.is_empty() {
        return Err(Error::invalid("no slice specs given"));
    }
    let mut out = ProfileSet::default();
    let mut next_row = 0;
    let mut last_err = None;
    for spec in specs {
        match extract_profiles(cloud, spec, voxel, next_row) {
            Ok(set) => {
                out.rows.extend(set.rows);
                out.skipped.extend(set.skipped);
            }
            Err(e @ Error::EmptyProfile(_)) => {
                for r in 0..spec.row_count {
                    out.skipped.push(SkippedRow {
                        row: next_row + r,
                        points: 0,
                    });
                }
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
        next_row += spec.row_count;
    }
    match (out.rows.is_empty(), last_err) {
        (true, Some(e)) => Err(e),
        _ => Ok(out),
    }
}
