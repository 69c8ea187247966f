//! Point clouds and the per-cloud kernels: crop filtering, voxel
//! downsampling and covariance normal estimation.
//!
//! Hidden point removal lives in [`crate::visibility`].

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::{abs_lex_greater, covariance, symmetric_eigen};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::spatial::GridIndex;

/// RGB color with components in `[0, 1]`.
pub type Rgb = [f64; 3];

/// Coordinate frame a cloud's positions are expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoordFrame {
    #[default]
    World,
    Camera,
}

/// Positions with optional per-point colors and unit normals.
///
/// When present, `colors` and `normals` have one entry per point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub colors: Option<Vec<Rgb>>,
    pub normals: Option<Vec<Vec3>>,
    pub frame: CoordFrame,
}

impl PointCloud {
    pub fn from_points(points: Vec<Vec3>) -> Self {
        Self {
            points,
            ..Default::default()
        }
    }

    /// Builds a cloud, checking attribute lengths and finiteness.
    pub fn new(
        points: Vec<Vec3>,
        colors: Option<Vec<Rgb>>,
        normals: Option<Vec<Vec3>>,
    ) -> Result<Self> {
        let cloud = Self {
            points,
            colors,
            normals,
            frame: CoordFrame::World,
        };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn with_normals(mut self, normals: Vec<Vec3>) -> Result<Self> {
        self.normals = Some(normals);
        self.validate()?;
        Ok(self)
    }

    pub fn with_colors(mut self, colors: Vec<Rgb>) -> Result<Self> {
        self.colors = Some(colors);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.points.len();
        if let Some(c) = &self.colors {
            if c.len() != n {
                return Err(Error::invalid(format!(
                    "{} colors for {n} points",
                    c.len()
                )));
            }
        }
        if let Some(nn) = &self.normals {
            if nn.len() != n {
                return Err(Error::invalid(format!(
                    "{} normals for {n} points",
                    nn.len()
                )));
            }
            if let Some(i) = nn.iter().position(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("normal {i} is not finite")));
            }
        }
        if let Some(i) = self.points.iter().position(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("point {i} is not finite")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn has_normals(&self) -> bool {
        self.normals.is_some()
    }

    /// Sub-cloud with the given indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            colors: self
                .colors
                .as_ref()
                .map(|c| indices.iter().map(|&i| c[i]).collect()),
            normals: self
                .normals
                .as_ref()
                .map(|n| indices.iter().map(|&i| n[i]).collect()),
            frame: self.frame,
        }
    }

    /// Appends another cloud. Attributes survive only if both sides carry them.
    pub fn extend(&mut self, other: &PointCloud) {
        let was_empty = self.points.is_empty();
        self.points.extend_from_slice(&other.points);
        self.colors = match (self.colors.take(), &other.colors) {
            (Some(mut a), Some(b)) => {
                a.extend_from_slice(b);
                Some(a)
            }
            (None, Some(b)) if was_empty => Some(b.clone()),
            _ => None,
        };
        self.normals = match (self.normals.take(), &other.normals) {
            (Some(mut a), Some(b)) => {
                a.extend_from_slice(b);
                Some(a)
            }
            (None, Some(b)) if was_empty => Some(b.clone()),
            _ => None,
        };
    }

    /// Axis-aligned bounds, or `None` for an empty cloud.
    pub fn bounds(&self) -> Option<CropBox> {
        if self.points.is_empty() {
            return None;
        }
        let (min, max) = self.points.iter().fold(
            (Vec3::splat(f64::INFINITY), Vec3::splat(f64::NEG_INFINITY)),
            |(lo, hi), p| (lo.min(*p), hi.max(*p)),
        );
        Some(CropBox { min, max })
    }

    pub fn centroid(&self) -> Option<Vec3> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self.points.iter().fold(Vec3::ZERO, |s, p| s + *p);
        Some(sum / self.points.len() as f64)
    }
}

/// Axis-aligned box, bounds inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CropBox {
    pub min: Vec3,
    pub max: Vec3,
}

impl CropBox {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self> {
        let b = CropBox { min, max };
        b.validate()?;
        Ok(b)
    }

    /// A box large enough to keep any lab-scale scene.
    pub fn unbounded() -> Self {
        CropBox {
            min: Vec3::splat(-1e6),
            max: Vec3::splat(1e6),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite()) {
            return Err(Error::invalid("crop box bounds must be finite"));
        }
        if self.min.x > self.max.x || self.min.y > self.max.y || self.min.z > self.max.z {
            return Err(Error::invalid(format!(
                "crop box min {:?} exceeds max {:?}",
                self.min.to_array(),
                self.max.to_array()
            )));
        }
        Ok(())
    }

    pub fn contains(&self, p: Vec3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }
}

/// Keeps the points inside `keep` that lie strictly above `ground_z`.
pub fn filter_passthrough(cloud: &PointCloud, keep: &CropBox, ground_z: f64) -> PointCloud {
    let idx: Vec<usize> = cloud
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| keep.contains(**p) && p.z > ground_z)
        .map(|(i, _)| i)
        .collect();
    cloud.select(&idx)
}

/// Replaces the points of every occupied voxel with their centroid.
///
/// The grid is anchored at the cloud's minimum corner. Output points come in
/// order of each voxel's first member. Colors are averaged; normals are
/// averaged and renormalized, falling back to the first member's normal when
/// the average vanishes.
pub fn voxel_downsample(cloud: &PointCloud, voxel: f64) -> Result<PointCloud> {
    if !(voxel > 0.0 && voxel.is_finite()) {
        return Err(Error::invalid(format!(
            "voxel size must be positive, got {voxel}"
        )));
    }
    let Some(bounds) = cloud.bounds() else {
        return Ok(PointCloud {
            frame: cloud.frame,
            ..Default::default()
        });
    };
    let origin = bounds.min;
    let mut slot: HashMap<(i64, i64, i64), usize> = HashMap::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (i, p) in cloud.points.iter().enumerate() {
        let k = voxel_key(*p, origin, voxel);
        let s = *slot.entry(k).or_insert_with(|| {
            members.push(Vec::new());
            members.len() - 1
        });
        members[s].push(i);
    }

    let mean = |idx: &[usize], get: &dyn Fn(usize) -> Vec3| -> Vec3 {
        let sum = idx.iter().fold(Vec3::ZERO, |s, &i| s + get(i));
        sum / idx.len() as f64
    };
    let points = members
        .iter()
        .map(|m| mean(m, &|i| cloud.points[i]))
        .collect();
    let colors = cloud.colors.as_ref().map(|c| {
        members
            .iter()
            .map(|m| mean(m, &|i| Vec3::from(c[i])).to_array())
            .collect()
    });
    let normals = cloud.normals.as_ref().map(|n| {
        members
            .iter()
            .map(|m| {
                let sum = m.iter().fold(Vec3::ZERO, |s, &i| s + n[i]);
                sum.try_normalize()
                    .filter(|_| sum.norm() > 1e-12)
                    .unwrap_or(n[m[0]])
            })
            .collect()
    });
    Ok(PointCloud {
        points,
        colors,
        normals,
        frame: cloud.frame,
    })
}

pub(crate) fn voxel_key(p: Vec3, origin: Vec3, voxel: f64) -> (i64, i64, i64) {
    let d = (p - origin) / voxel;
    (d.x.floor() as i64, d.y.floor() as i64, d.z.floor() as i64)
}

/// Normal of a neighborhood: eigenvector of the smallest covariance
/// eigenvalue. Ties are broken toward the lexicographically largest
/// absolute components.
pub fn neighborhood_normal(neighbors: &[Vec3]) -> Option<Vec3> {
    let (_, cov) = covariance(neighbors.iter().copied())?;
    let eig = symmetric_eigen(&cov);
    let tie = 1e-12 * eig.values[2].abs().max(f64::MIN_POSITIVE);
    let mut best = eig.vectors[0];
    for j in 1..3 {
        if eig.values[j] - eig.values[0] <= tie && abs_lex_greater(eig.vectors[j], best) {
            best = eig.vectors[j];
        }
    }
    best.try_normalize()
}

/// Estimates a unit normal per point from its `k` nearest neighbors (self
/// included), oriented so that `n · (viewpoint - p) >= 0`.
pub fn estimate_normals(cloud: &PointCloud, k: usize, viewpoint: Vec3) -> Result<PointCloud> {
    if k < 3 {
        return Err(Error::invalid(format!(
            "normal estimation needs k >= 3, got {k}"
        )));
    }
    if k > cloud.len() {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the {} points in the cloud",
            cloud.len()
        )));
    }
    let index = GridIndex::new(&cloud.points);
    let normals: Vec<Vec3> = cloud
        .points
        .par_iter()
        .map(|&p| {
            let nbrs: Vec<Vec3> = index
                .knn(p, k)
                .into_iter()
                .map(|(i, _)| cloud.points[i])
                .collect();
            let n = neighborhood_normal(&nbrs).unwrap_or(Vec3::Z);
            if n.dot(viewpoint - p) < 0.0 {
                -n
            } else {
                n
            }
        })
        .collect();
    let mut out = cloud.clone();
    out.normals = Some(normals);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn uniform_cube(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::from_points(
            (0..n)
                .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
                .collect(),
        )
    }

    #[test]
    fn mismatched_attributes_rejected() {
        let err = PointCloud::new(vec![Vec3::ZERO], Some(vec![]), None).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
        assert!(PointCloud::new(vec![Vec3::splat(f64::NAN)], None, None).is_err());
    }

    #[test]
    fn passthrough_keeps_inside_point() {
        let c = PointCloud::from_points(vec![Vec3::new(0.5, 0.5, 0.5), Vec3::new(2.0, 0.5, 0.5)]);
        let b = CropBox::new(Vec3::ZERO, Vec3::splat(1.0)).unwrap();
        let out = filter_passthrough(&c, &b, 0.0);
        assert_eq!(out.points, vec![Vec3::new(0.5, 0.5, 0.5)]);
    }

    #[test]
    fn passthrough_below_ground_is_empty() {
        let c = PointCloud::from_points(vec![Vec3::new(0.0, 0.0, -1.0), Vec3::new(0.0, 0.0, 0.0)]);
        assert!(filter_passthrough(&c, &CropBox::unbounded(), 0.0).is_empty());
    }

    #[test]
    fn passthrough_lower_half_matches_scalar_predicate() {
        let c = uniform_cube(1000, 7);
        let b = CropBox::new(Vec3::ZERO, Vec3::new(1.0, 1.0, 0.5)).unwrap();
        let out = filter_passthrough(&c, &b, 0.0);
        let expected: Vec<Vec3> = c
            .points
            .iter()
            .copied()
            .filter(|p| p.z <= 0.5 && p.z > 0.0)
            .collect();
        assert_eq!(out.points, expected);
        // binomial(1000, 0.5): 4 sigma ≈ 63
        assert!((out.len() as i64 - 500).abs() < 64, "{}", out.len());
    }

    #[test]
    fn passthrough_subsets_attributes() {
        let c = PointCloud::new(
            vec![Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 0.0, -1.0)],
            Some(vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
            Some(vec![Vec3::X, Vec3::Y]),
        )
        .unwrap();
        let out = filter_passthrough(&c, &CropBox::unbounded(), 0.0);
        assert_eq!(out.colors, Some(vec![[1.0, 0.0, 0.0]]));
        assert_eq!(out.normals, Some(vec![Vec3::X]));
    }

    #[test]
    fn voxel_merges_cluster_to_centroid() {
        let base = Vec3::new(0.1, 0.2, 0.3);
        let pts: Vec<Vec3> = (0..8)
            .map(|i| {
                base + Vec3::new(
                    (i & 1) as f64 * 0.01,
                    ((i >> 1) & 1) as f64 * 0.01,
                    ((i >> 2) & 1) as f64 * 0.01,
                )
            })
            .collect();
        let out = voxel_downsample(&PointCloud::from_points(pts), 0.02).unwrap();
        assert_eq!(out.len(), 1);
        assert!((out.points[0] - (base + Vec3::splat(0.005))).norm() < 1e-12);
    }

    #[test]
    fn voxel_keeps_distant_points() {
        let pts = vec![Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0)];
        let out = voxel_downsample(&PointCloud::from_points(pts.clone()), 0.02).unwrap();
        assert_eq!(out.points, pts);
    }

    #[test]
    fn voxel_rejects_non_positive_size() {
        let c = PointCloud::from_points(vec![Vec3::ZERO]);
        assert!(voxel_downsample(&c, 0.0).is_err());
        assert!(voxel_downsample(&c, -0.1).is_err());
    }

    #[test]
    fn voxel_count_matches_brute_force_keys() {
        let c = uniform_cube(10_000, 3);
        let voxel = 0.07;
        let out = voxel_downsample(&c, voxel).unwrap();
        let min = c.points.iter().fold(Vec3::splat(f64::INFINITY), |m, p| m.min(*p));
        let keys: HashSet<[i64; 3]> = c
            .points
            .iter()
            .map(|p| {
                [
                    ((p.x - min.x) / voxel).floor() as i64,
                    ((p.y - min.y) / voxel).floor() as i64,
                    ((p.z - min.z) / voxel).floor() as i64,
                ]
            })
            .collect();
        assert_eq!(out.len(), keys.len());
    }

    #[test]
    fn voxel_antipodal_normals_fall_back_to_first() {
        let c = PointCloud::new(
            vec![Vec3::ZERO, Vec3::splat(0.001)],
            None,
            Some(vec![Vec3::Z, -Vec3::Z]),
        )
        .unwrap();
        let out = voxel_downsample(&c, 0.02).unwrap();
        assert_eq!(out.normals, Some(vec![Vec3::Z]));
    }

    #[test]
    fn plane_normals_are_exact() {
        let pts: Vec<Vec3> = (0..100)
            .map(|i| Vec3::new((i % 10) as f64 * 0.01, (i / 10) as f64 * 0.01, 0.0))
            .collect();
        let out =
            estimate_normals(&PointCloud::from_points(pts), 10, Vec3::new(0.0, 0.0, 1.0)).unwrap();
        for n in out.normals.unwrap() {
            assert!((n - Vec3::Z).norm() < 1e-6, "{n:?}");
        }
    }

    #[test]
    fn inclined_plane_normals_at_45_degrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let truth = Vec3::new(0.0, -1.0, 1.0).normalize();
        let u = Vec3::X;
        let v = truth.cross(u);
        let pts: Vec<Vec3> = (0..500)
            .map(|_| u * rng.random_range(-0.2..0.2) + v * rng.random_range(-0.2..0.2))
            .collect();
        let out = estimate_normals(&PointCloud::from_points(pts), 10, truth * 2.0).unwrap();
        for n in out.normals.unwrap() {
            assert!(n.angle_to(truth).to_degrees() < 1.0);
            assert!((n.angle_to(Vec3::Z).to_degrees() - 45.0).abs() < 1.0);
        }
    }

    #[test]
    fn sphere_normals_are_radial() {
        // Fibonacci sphere, 2000 points
        let n = 2000;
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let pts: Vec<Vec3> = (0..n)
            .map(|i| {
                let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let r = (1.0 - y * y).sqrt();
                let th = golden * i as f64;
                Vec3::new(r * th.cos(), y, r * th.sin())
            })
            .collect();
        let cam = Vec3::new(0.0, 0.0, 5.0);
        let out = estimate_normals(&PointCloud::from_points(pts.clone()), 10, cam).unwrap();
        for (p, nrm) in pts.iter().zip(out.normals.unwrap()) {
            // orientation is toward the camera, so compare up to sign
            let ang = nrm.angle_to(*p).min(nrm.angle_to(-*p)).to_degrees();
            assert!(ang < 5.0, "{ang}");
            assert!(nrm.dot(cam - *p) >= 0.0);
        }
    }

    #[test]
    fn normals_require_enough_points() {
        let c = PointCloud::from_points(vec![Vec3::ZERO, Vec3::X, Vec3::Y]);
        assert!(estimate_normals(&c, 4, Vec3::Z).is_err());
        assert!(estimate_normals(&c, 2, Vec3::Z).is_err());
    }

    proptest! {
        #[test]
        fn passthrough_is_idempotent(seed in 0u64..1000, zmax in 0.1..1.0f64, g in -0.5..0.5f64) {
            let c = uniform_cube(200, seed);
            let b = CropBox::new(Vec3::new(0.1, 0.0, 0.0), Vec3::new(0.9, 1.0, zmax)).unwrap();
            let once = filter_passthrough(&c, &b, g);
            prop_assert_eq!(filter_passthrough(&once, &b, g), once);
        }

        #[test]
        fn voxel_output_is_bounded_and_near_input(seed in 0u64..1000, voxel in 0.01..0.5f64) {
            let c = uniform_cube(300, seed);
            let out = voxel_downsample(&c, voxel).unwrap();
            prop_assert!(out.len() <= c.len());
            let half_diag = voxel * 3f64.sqrt() / 2.0;
            for q in &out.points {
                let d = c.points.iter().map(|p| p.distance(*q)).fold(f64::INFINITY, f64::min);
                prop_assert!(d <= half_diag + 1e-12);
            }
        }

        #[test]
        fn normals_are_unit_and_face_viewpoint(seed in 0u64..1000) {
            let c = uniform_cube(60, seed);
            let vp = Vec3::new(0.5, 0.5, 3.0);
            let out = estimate_normals(&c, 8, vp).unwrap();
            for (p, n) in c.points.iter().zip(out.normals.unwrap()) {
                prop_assert!((n.norm() - 1.0).abs() < 1e-6);
                prop_assert!(n.dot(vp - *p) >= 0.0);
            }
        }
    }
}
